//! Closed points of the torus, exact exponential sums in `Z[ζ_p]`, fiber
//! L-series and their reconstruction as rational functions.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::cyclo::{CyclotomicInt, CyclotomicRat};
use crate::error::{Error, Result};
use crate::family::LaurentFamily;
use crate::ffield::FiniteField;
use crate::padic::{EisensteinElement, FieldContext};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ClosedPoint {
    pub degree: usize,
    /// Discrete logs of the coordinates in `F_{q^d}`, lexicographically least
    /// in the Frobenius orbit.
    pub logs: Vec<u64>,
    pub orbit_id: String,
}

impl ClosedPoint {
    pub fn new(degree: usize, logs: Vec<u64>) -> Self {
        let body: Vec<String> = logs.iter().map(|l| l.to_string()).collect();
        let orbit_id = format!("d{}:{}", degree, body.join(","));
        ClosedPoint { degree, logs, orbit_id }
    }

    /// Field `F_{q^d}` containing the coordinates.
    pub fn field(&self, fam: &LaurentFamily) -> Result<Arc<FiniteField>> {
        FiniteField::get(fam.p, fam.a * self.degree)
    }

    /// Base-`p` digits of coordinate `i`.
    pub fn coord_digits(&self, fam: &LaurentFamily, i: usize) -> Result<Vec<u64>> {
        let f = self.field(fam)?;
        Ok(f.digits(f.exp(self.logs[i])))
    }

    /// The conjugate obtained by applying the `q`-power Frobenius `j` times.
    pub fn conjugate_logs(&self, fam: &LaurentFamily, j: usize) -> Result<Vec<u64>> {
        let f = self.field(fam)?;
        let qj = (fam.q() as u128).pow(j as u32) % f.order() as u128;
        Ok(self.logs.iter().map(|&l| (l as u128 * qj % f.order() as u128) as u64).collect())
    }
}

/// Log in `big` of the generator of `small`, with the identity when equal.
fn link_log(big: &FiniteField, small: &FiniteField) -> Result<u64> {
    if big.k == small.k {
        Ok(1)
    } else {
        big.embedding_log(small)
    }
}

/// Logs in `F_{q^(dm)}` of the generators of `F_q` and `F_{q^d}`, composed
/// along the tower `F_q ⊂ F_{q^d} ⊂ F_{q^(dm)}`.
pub fn tower_logs(fam: &LaurentFamily, d: usize, m: usize) -> Result<(Arc<FiniteField>, u64, u64)> {
    let fq = FiniteField::get(fam.p, fam.a)?;
    let fd = FiniteField::get(fam.p, fam.a * d)?;
    let fdm = FiniteField::get(fam.p, fam.a * d * m)?;
    let l1 = link_log(&fd, &fq)?;
    let l2 = link_log(&fdm, &fd)?;
    let lq = (l1 as u128 * l2 as u128 % fdm.order() as u128) as u64;
    Ok((fdm, lq, l2))
}

fn divisors(d: usize) -> Vec<usize> {
    (1..=d).filter(|e| d % e == 0).collect()
}

pub fn enumerate_closed_points_of_degree(fam: &LaurentFamily, d: usize) -> Result<Vec<ClosedPoint>> {
    let f = FiniteField::get(fam.p, fam.a * d)?;
    let order = f.order();
    let q = fam.q() as u128;
    let s = fam.s;
    let total = (order as u128).pow(s as u32);
    let proper: Vec<usize> = divisors(d).into_iter().filter(|&e| e < d).collect();
    let mut out = Vec::new();
    let mut logs = vec![0u64; s];
    for idx in 0..total {
        let mut rem = idx;
        for l in logs.iter_mut() {
            *l = (rem % order as u128) as u64;
            rem /= order as u128;
        }
        logs.reverse();
        let frob = |v: &[u64], k: usize| -> Vec<u64> {
            let qk = q.pow(k as u32) % order as u128;
            v.iter().map(|&l| (l as u128 * qk % order as u128) as u64).collect()
        };
        if proper.iter().any(|&e| frob(&logs, e) == logs) {
            continue;
        }
        let minimal = (1..d).all(|k| frob(&logs, k) > logs);
        if minimal {
            out.push(ClosedPoint::new(d, logs.clone()));
        }
    }
    Ok(out)
}

/// One representative per Frobenius orbit, for every degree up to `d_max`.
pub fn enumerate_closed_points(fam: &LaurentFamily, d_max: usize) -> Result<Vec<ClosedPoint>> {
    if d_max == 0 {
        return Err(Error::InvalidParameter("d_max must be at least 1".into()));
    }
    let mut out = Vec::new();
    for d in 1..=d_max {
        out.extend(enumerate_closed_points_of_degree(fam, d)?);
    }
    Ok(out)
}

/// Counts of `Tr(f(λ, X))` values over `X ∈ (F_{q^(md)}^*)^n`, given the
/// coordinates of λ as logs in `F_{q^d}`.
fn trace_counts(fam: &LaurentFamily, d: usize, lambda_logs: &[u64], m: usize) -> Result<Vec<u64>> {
    let (big, lq, ld) = tower_logs(fam, d, m)?;
    let order = big.order() as u128;
    let coeff_logs = fam.coeff_logs();
    // log of the coefficient of X^u in f(λ, X), inside F_{q^(md)}
    let base: Vec<u64> = fam
        .terms
        .iter()
        .zip(&coeff_logs)
        .map(|(t, &cl)| {
            let mut l = cl as i128 * lq as i128;
            for (ri, li) in t.r.iter().zip(lambda_logs) {
                l += *ri as i128 * (*li as i128) % order as i128 * ld as i128;
            }
            l.rem_euclid(order as i128) as u64
        })
        .collect();
    let us: Vec<Vec<i64>> = fam.terms.iter().map(|t| t.u.clone()).collect();
    let n = fam.n;
    let p = fam.p as usize;
    let total = order.pow(n as u32) as u64;
    let counts = (0..total)
        .into_par_iter()
        .fold(
            || vec![0u64; p],
            |mut acc, idx| {
                let mut rem = idx as u128;
                let mut xs = [0u128; 8];
                for x in xs.iter_mut().take(n) {
                    *x = rem % order;
                    rem /= order;
                }
                let mut t = 0u64;
                for (b, u) in base.iter().zip(&us) {
                    let mut l = *b as i128;
                    for (ui, xi) in u.iter().zip(xs.iter()) {
                        l += *ui as i128 * *xi as i128;
                    }
                    t += big.trace_of_log(l.rem_euclid(order as i128) as u64);
                }
                acc[(t % fam.p) as usize] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; p],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(counts)
}

/// `S_m(f(λ, X))` as an exact cyclotomic integer.
pub fn exp_sum(fam: &LaurentFamily, lambda: &ClosedPoint, m: usize) -> Result<CyclotomicInt> {
    exp_sum_at(fam, lambda.degree, &lambda.logs, m)
}

/// Same as [`exp_sum`] for any (not necessarily canonical) point of
/// `(F_{q^d}^*)^s` given by logs.
pub fn exp_sum_at(fam: &LaurentFamily, d: usize, lambda_logs: &[u64], m: usize) -> Result<CyclotomicInt> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let counts = trace_counts(fam, d, lambda_logs, m)?;
    Ok(CyclotomicInt::from_full(fam.p, counts.into_iter().map(BigInt::from).collect()))
}

/// Coefficients `c_0 = 1, c_1, .., c_M` of `L(f(λ, X), T)`.
pub fn l_series(fam: &LaurentFamily, lambda: &ClosedPoint, m_max: usize) -> Result<Vec<CyclotomicInt>> {
    let sums = (1..=m_max).map(|m| exp_sum(fam, lambda, m)).collect::<Result<Vec<_>>>()?;
    exp_of_log_series(fam.p, &sums)
}

/// `exp(Σ S_m T^m / m)` with exact division, `sums[m-1] = S_m`.
pub fn exp_of_log_series(p: u64, sums: &[CyclotomicInt]) -> Result<Vec<CyclotomicInt>> {
    let mut c = vec![CyclotomicInt::from_int(p, 1)];
    for k in 1..=sums.len() {
        let mut acc = CyclotomicInt::zero(p);
        for j in 1..=k {
            acc = acc.add(&sums[j - 1].mul(&c[k - j]));
        }
        let kk = BigInt::from(k);
        let mut coords = Vec::with_capacity(acc.coords.len());
        for x in &acc.coords {
            let (q, r) = x.div_rem(&kk);
            if !r.is_zero() {
                return Err(Error::Integrality(format!("coefficient of T^{k} is not integral")));
            }
            coords.push(q);
        }
        c.push(CyclotomicInt { p, coords });
    }
    Ok(c)
}

/// A rational function `numerator / denominator` with constant terms 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RationalL {
    pub numerator: Vec<CyclotomicInt>,
    pub denominator: Vec<CyclotomicInt>,
    /// True when the stored function is `L^(-1)` rather than `L`.
    pub inverted: bool,
    /// Number of coefficients the reconstruction was verified against.
    pub verified_len: usize,
}

impl RationalL {
    pub fn display_poly(poly: &[CyclotomicInt]) -> String {
        let mut parts = Vec::new();
        for (i, c) in poly.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mon = match i {
                0 => String::new(),
                1 => "T".into(),
                _ => format!("T^{i}"),
            };
            parts.push(if mon.is_empty() { format!("({})", c.display()) } else { format!("({}){mon}", c.display()) });
        }
        parts.join(" + ")
    }

    /// Power-series coefficients `0..len` of the stored function.
    pub fn expand(&self, len: usize) -> Vec<CyclotomicRat> {
        let p = self.numerator[0].p;
        let num: Vec<CyclotomicRat> = self.numerator.iter().map(|c| c.to_rat()).collect();
        let den: Vec<CyclotomicRat> = self.denominator.iter().map(|c| c.to_rat()).collect();
        let mut out: Vec<CyclotomicRat> = Vec::with_capacity(len);
        for k in 0..len {
            let mut v = num.get(k).cloned().unwrap_or_else(|| CyclotomicRat::zero(p));
            for j in 1..den.len().min(k + 1) {
                v = v.sub(&den[j].mul(&out[k - j]));
            }
            out.push(v);
        }
        out
    }
}

/// Minimal connection polynomial of a sequence over `Q(ζ_p)`.
pub fn berlekamp_massey(seq: &[CyclotomicRat]) -> (Vec<CyclotomicRat>, usize) {
    let p = seq[0].p;
    let one = CyclotomicRat::one(p);
    let mut c = vec![one.clone()];
    let mut b = vec![one.clone()];
    let mut l = 0usize;
    let mut m = 1usize;
    let mut bd = one;
    for n in 0..seq.len() {
        let mut d = seq[n].clone();
        for i in 1..=l.min(c.len() - 1) {
            d = d.add(&c[i].mul(&seq[n - i]));
        }
        if d.is_zero() {
            m += 1;
            continue;
        }
        let coef = d.mul(&bd.inv().expect("nonzero discrepancy"));
        let mut next = c.clone();
        if next.len() < b.len() + m {
            next.resize(b.len() + m, CyclotomicRat::zero(p));
        }
        for (i, bi) in b.iter().enumerate() {
            next[i + m] = next[i + m].sub(&coef.mul(bi));
        }
        if 2 * l <= n {
            b = c;
            l = n + 1 - l;
            bd = d;
            m = 1;
        } else {
            m += 1;
        }
        c = next;
    }
    while c.len() > 1 && c.last().map(|x| x.is_zero()).unwrap_or(false) {
        c.pop();
    }
    (c, l)
}

/// Rational function matching `series[0..=M]` (with `series[0] = 1`).
/// `n` is the number of X variables; `L^((-1)^(n+1))` is what gets stored.
pub fn rational_reconstruct(series: &[CyclotomicInt], n: usize) -> Result<RationalL> {
    let m = series.len().saturating_sub(1);
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one coefficient".into()));
    }
    let seq: Vec<CyclotomicRat> = series.iter().map(|c| c.to_rat()).collect();
    let (conn, l) = berlekamp_massey(&seq);
    if m < 2 * l {
        return Err(Error::Unstable { order: l, required: 2 * l });
    }
    let p = series[0].p;
    // numerator = series · connection mod T^l
    let mut num = Vec::with_capacity(l);
    for k in 0..l {
        let mut v = CyclotomicRat::zero(p);
        for j in 0..=k.min(conn.len() - 1) {
            v = v.add(&conn[j].mul(&seq[k - j]));
        }
        num.push(v);
    }
    while num.len() > 1 && num.last().map(|x| x.is_zero()).unwrap_or(false) {
        num.pop();
    }
    let to_int = |v: Vec<CyclotomicRat>| -> Result<Vec<CyclotomicInt>> {
        v.into_iter()
            .map(|x| x.to_int().ok_or_else(|| Error::Integrality("reconstructed coefficient not integral".into())))
            .collect()
    };
    let mut rl = RationalL { numerator: to_int(num)?, denominator: to_int(conn)?, inverted: false, verified_len: m + 1 };
    let back = rl.expand(m + 1);
    if back != seq {
        return Err(Error::Mismatch("reconstruction does not reproduce the series".into()));
    }
    if n % 2 == 0 {
        std::mem::swap(&mut rl.numerator, &mut rl.denominator);
        rl.inverted = true;
    }
    Ok(rl)
}

#[derive(Clone, Debug)]
pub struct ExactUnitRoot {
    pub value: EisensteinElement,
    /// True when the unit root is a reciprocal zero of the stored function.
    pub is_zero: bool,
}

fn unit_count(ctx: &FieldContext, poly: &[EisensteinElement]) -> usize {
    poly.iter().rposition(|c| ctx.is_unit(c)).unwrap_or(0)
}

/// Hensel lift of the unique unit reciprocal root of `poly` (constant term 1).
pub fn unit_reciprocal_root(ctx: &FieldContext, poly: &[EisensteinElement]) -> Result<EisensteinElement> {
    let k = unit_count(ctx, poly);
    match k {
        0 => return Err(Error::NoUnitRoot),
        1 => {}
        _ => return Err(Error::MultipleUnitRoots(k)),
    }
    let deg = poly.len() - 1;
    // reversed polynomial R(x) = Σ c_i x^(deg - i)
    let eval = |x: &EisensteinElement| -> (EisensteinElement, EisensteinElement) {
        let mut v = ctx.zero();
        let mut dv = ctx.zero();
        for (i, c) in poly.iter().enumerate() {
            let e = (deg - i) as u64;
            v = ctx.add(&v, &ctx.mul(c, &ctx.pow(x, e)));
            if e > 0 {
                let t = ctx.mul(&ctx.from_int(e as i64), &ctx.mul(c, &ctx.pow(x, e - 1)));
                dv = ctx.add(&dv, &t);
            }
        }
        (v, dv)
    };
    let mut x = ctx.neg(&poly[1]);
    for _ in 0..(2 * ctx.prec_pi() + 4) {
        let (v, dv) = eval(&x);
        let next = ctx.sub(&x, &ctx.div(&v, &dv)?);
        if next == x {
            break;
        }
        x = next;
    }
    let prec = poly.iter().map(|c| c.prec_pi).min().unwrap_or(0);
    Ok(ctx.with_prec(x, prec))
}

/// π_0(λ) from the exact L-function.
pub fn fiber_unit_root_exact(l: &RationalL, ctx: &FieldContext) -> Result<ExactUnitRoot> {
    let embed = |poly: &[CyclotomicInt]| -> Result<Vec<EisensteinElement>> {
        poly.iter().map(|c| ctx.zeta_p_embed(c)).collect()
    };
    let num = embed(&l.numerator)?;
    let den = embed(&l.denominator)?;
    let (kn, kd) = (unit_count(ctx, &num), unit_count(ctx, &den));
    match kn + kd {
        0 => Err(Error::NoUnitRoot),
        1 if kn == 1 => Ok(ExactUnitRoot { value: unit_reciprocal_root(ctx, &num)?, is_zero: true }),
        1 => Ok(ExactUnitRoot { value: unit_reciprocal_root(ctx, &den)?, is_zero: false }),
        k => Err(Error::MultipleUnitRoots(k)),
    }
}

/// Per-degree counts of closed points, keyed by degree.
pub fn degree_histogram(points: &[ClosedPoint]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for pt in points {
        *h.entry(pt.degree).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::make_field_context;

    fn kloosterman() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap()
    }

    fn linear() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1")]).unwrap()
    }

    fn ints(p: u64, v: &[i64]) -> Vec<CyclotomicInt> {
        v.iter().map(|&x| CyclotomicInt::from_int(p, x)).collect()
    }

    #[test]
    fn closed_point_counts() {
        let fam = linear();
        let pts = enumerate_closed_points(&fam, 4).unwrap();
        let h = degree_histogram(&pts);
        assert_eq!(h.values().copied().collect::<Vec<_>>(), vec![2, 3, 8, 18]);
        for d in 1..=4usize {
            let total: usize = divisors(d).iter().map(|e| e * h[e]).sum();
            assert_eq!(total as u64, 3u64.pow(d as u32) - 1);
        }
    }

    #[test]
    fn exp_sum_examples() {
        let fam = linear();
        for pt in enumerate_closed_points(&fam, 2).unwrap() {
            for m in 1..=2 {
                assert_eq!(exp_sum(&fam, &pt, m).unwrap(), CyclotomicInt::from_int(3, -1));
            }
        }
        let kl = kloosterman();
        let one = ClosedPoint::new(1, vec![0]);
        assert_eq!(exp_sum(&kl, &one, 1).unwrap(), CyclotomicInt::from_int(3, -1));
        assert_eq!(exp_sum(&kl, &one, 2).unwrap(), CyclotomicInt::from_int(3, 5));
    }

    #[test]
    fn l_series_examples() {
        let kl = kloosterman();
        let one = ClosedPoint::new(1, vec![0]);
        let s = l_series(&kl, &one, 6).unwrap();
        assert_eq!(s, ints(3, &[1, -1, 3, 0, 0, 0, 0]));
        let rl = rational_reconstruct(&s, 1).unwrap();
        assert_eq!(rl.numerator, ints(3, &[1, -1, 3]));
        assert_eq!(rl.denominator, ints(3, &[1]));
        let lin = l_series(&linear(), &one, 4).unwrap();
        assert_eq!(rational_reconstruct(&lin, 1).unwrap().numerator, ints(3, &[1, -1]));
    }

    #[test]
    fn reconstruct_true_rational_function() {
        // (1 - T)/(1 - 3T)
        let mut coeffs = vec![1i64];
        for k in 1..8u32 {
            coeffs.push(3i64.pow(k) - 3i64.pow(k - 1));
        }
        let rl = rational_reconstruct(&ints(3, &coeffs), 1).unwrap();
        assert_eq!(rl.numerator, ints(3, &[1, -1]));
        assert_eq!(rl.denominator, ints(3, &[1, -3]));
        let short = rational_reconstruct(&ints(3, &coeffs[..3]), 1);
        assert!(matches!(short, Err(Error::Unstable { .. })));
    }

    #[test]
    fn exact_unit_roots() {
        let ctx = make_field_context(3, 1, 2).unwrap();
        let kl = kloosterman();
        let one = ClosedPoint::new(1, vec![0]);
        let rl = rational_reconstruct(&l_series(&kl, &one, 6).unwrap(), 1).unwrap();
        let root = fiber_unit_root_exact(&rl, &ctx).unwrap();
        assert!(root.is_zero);
        assert_eq!(root.value, ctx.from_int(7));
        let bad = RationalL { numerator: ints(3, &[1, 3, 9]), denominator: ints(3, &[1]), inverted: false, verified_len: 0 };
        assert!(matches!(fiber_unit_root_exact(&bad, &ctx), Err(Error::NoUnitRoot)));
    }
}
