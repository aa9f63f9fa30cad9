//! Cones, lattice monoids and truncated Laurent series supported in them.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::family::weight;
use crate::padic::{EisensteinElement, FieldContext};

type Q = Ratio<i64>;

/// Rational polyhedral cone given by generators; `M = cone ∩ Z^dim`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cone {
    pub dim: usize,
    pub generators: Vec<Vec<i64>>,
}

fn solve_nonneg(cols: &[&Vec<i64>], v: &[i64]) -> bool {
    // Gaussian elimination on [cols | v]; true iff a unique solution exists and is ≥ 0
    let rows = v.len();
    let k = cols.len();
    let mut m: Vec<Vec<Q>> = (0..rows)
        .map(|i| {
            let mut row: Vec<Q> = cols.iter().map(|c| Q::from_integer(c[i])).collect();
            row.push(Q::from_integer(v[i]));
            row
        })
        .collect();
    let mut piv_row = 0;
    let mut pivots = Vec::new();
    for c in 0..k {
        let Some(r) = (piv_row..rows).find(|&r| !m[r][c].is_zero()) else {
            return false;
        };
        m.swap(piv_row, r);
        let inv = Q::from_integer(1) / m[piv_row][c];
        for x in m[piv_row].iter_mut() {
            *x *= inv;
        }
        for r2 in 0..rows {
            if r2 != piv_row && !m[r2][c].is_zero() {
                let f = m[r2][c];
                for j in 0..=k {
                    let t = f * m[piv_row][j];
                    m[r2][j] -= t;
                }
            }
        }
        pivots.push(c);
        piv_row += 1;
    }
    if (piv_row..rows).any(|r| !m[r][k].is_zero()) {
        return false;
    }
    (0..k).all(|i| !m[i][k].is_negative())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

impl Cone {
    pub fn new(dim: usize, generators: Vec<Vec<i64>>) -> Self {
        let mut gens: Vec<Vec<i64>> = generators.into_iter().filter(|g| g.iter().any(|&x| x != 0)).collect();
        gens.sort();
        gens.dedup();
        Cone { dim, generators: gens }
    }

    /// Exact membership via Carathéodory: `v` lies in the cone of some
    /// linearly independent subset of at most `dim` generators.
    pub fn contains(&self, v: &[i64]) -> bool {
        if v.iter().all(|&x| x == 0) {
            return true;
        }
        if self.dim == 1 {
            return self.generators.iter().any(|g| g[0].signum() == v[0].signum());
        }
        let g = &self.generators;
        for k in 1..=self.dim.min(g.len()) {
            for sub in subsets(g.len(), k) {
                let cols: Vec<&Vec<i64>> = sub.iter().map(|&i| &g[i]).collect();
                if solve_nonneg(&cols, v) {
                    return true;
                }
            }
        }
        false
    }

    /// Membership in `M ∩ -M`.
    pub fn in_lineality(&self, v: &[i64]) -> bool {
        let neg: Vec<i64> = v.iter().map(|x| -x).collect();
        self.contains(v) && self.contains(&neg)
    }

    /// Lattice points of weight at most `w`, ordered by weight then lexicographically.
    pub fn lattice_points(&self, w: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        if self.dim == 0 {
            return vec![vec![]];
        }
        let mut v = vec![-w; self.dim];
        loop {
            if weight(&v) <= w && self.contains(&v) {
                out.push(v.clone());
            }
            let mut i = self.dim;
            loop {
                if i == 0 {
                    out.sort_by(|a, b| weight(a).cmp(&weight(b)).then(a.cmp(b)));
                    return out;
                }
                i -= 1;
                if v[i] < w {
                    v[i] += 1;
                    break;
                }
                v[i] = -w;
            }
        }
    }
}

/// Lower bound `slope_l·|r| + slope_x·|u| + offset` on `ord_p`, in p-units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValuationProfile {
    pub slope_lambda: Ratio<i64>,
    pub slope_x: Ratio<i64>,
    pub offset: Ratio<i64>,
}

impl ValuationProfile {
    pub fn zero() -> Self {
        ValuationProfile { slope_lambda: Q::zero(), slope_x: Q::zero(), offset: Q::zero() }
    }

    pub fn uniform(slope: Ratio<i64>) -> Self {
        ValuationProfile { slope_lambda: slope, slope_x: slope, offset: Q::zero() }
    }

    pub fn at(&self, s: usize, v: &[i64]) -> Ratio<i64> {
        self.slope_lambda * Q::from_integer(weight(&v[..s])) + self.slope_x * Q::from_integer(weight(&v[s..])) + self.offset
    }

    /// Bound in π-units, rounded up.
    pub fn at_pi(&self, s: usize, v: &[i64], p: u64) -> i64 {
        (self.at(s, v) * Q::from_integer(p as i64 - 1)).ceil().to_integer()
    }

    fn combine(&self, o: &Self) -> Self {
        ValuationProfile {
            slope_lambda: self.slope_lambda.min(o.slope_lambda),
            slope_x: self.slope_x.min(o.slope_x),
            offset: self.offset + o.offset,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Lambda,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projector {
    /// Λ-exponents in `-M₁`.
    Pr1,
    /// X-exponents in `-M₂`.
    Pr2,
    /// Both exponents in the lineality lattices.
    Pr0,
    /// X-exponents in the lineality lattice of the X-cone.
    Pr20,
}

/// A term `coeff · Λ^r X^u` with a lifted coefficient.
#[derive(Clone, Debug)]
pub struct LiftedTerm {
    pub coeff: EisensteinElement,
    pub r: Vec<i64>,
    pub u: Vec<i64>,
}

/// Truncated Laurent series in `Λ` (first `s` exponents) and `X` (next `n`).
#[derive(Clone, Debug)]
pub struct ConeSeries {
    pub s: usize,
    pub n: usize,
    pub coeffs: BTreeMap<Vec<i64>, EisensteinElement>,
    /// Weight bounds per block; coefficients beyond are omitted.
    pub deg_lambda: i64,
    pub deg_x: i64,
    /// Certified lower bound for every coefficient, stored or omitted.
    pub profile: ValuationProfile,
}

impl ConeSeries {
    pub fn zero(s: usize, n: usize, deg_lambda: i64, deg_x: i64) -> Self {
        ConeSeries { s, n, coeffs: BTreeMap::new(), deg_lambda, deg_x, profile: ValuationProfile::zero() }
    }

    pub fn one(ctx: &FieldContext, s: usize, n: usize, deg_lambda: i64, deg_x: i64) -> Self {
        let mut z = Self::zero(s, n, deg_lambda, deg_x);
        z.coeffs.insert(vec![0; s + n], ctx.one());
        z
    }

    pub fn within(&self, v: &[i64]) -> bool {
        weight(&v[..self.s]) <= self.deg_lambda && weight(&v[self.s..]) <= self.deg_x
    }

    pub fn coeff(&self, ctx: &FieldContext, v: &[i64]) -> EisensteinElement {
        self.coeffs.get(v).copied().unwrap_or_else(|| ctx.zero())
    }

    fn insert_nonzero(&mut self, ctx: &FieldContext, v: Vec<i64>, c: EisensteinElement) {
        if !ctx.is_zero(&c) && self.within(&v) {
            self.coeffs.insert(v, c);
        }
    }

    pub fn add(&self, ctx: &FieldContext, o: &Self) -> Self {
        let mut out = self.clone();
        out.deg_lambda = self.deg_lambda.min(o.deg_lambda);
        out.deg_x = self.deg_x.min(o.deg_x);
        out.coeffs.retain(|v, _| weight(&v[..self.s]) <= out.deg_lambda && weight(&v[self.s..]) <= out.deg_x);
        for (v, c) in &o.coeffs {
            if !out.within(v) {
                continue;
            }
            let sum = ctx.add(&out.coeff(ctx, v), c);
            out.coeffs.remove(v);
            out.insert_nonzero(ctx, v.clone(), sum);
        }
        out.profile = ValuationProfile {
            slope_lambda: self.profile.slope_lambda.min(o.profile.slope_lambda),
            slope_x: self.profile.slope_x.min(o.profile.slope_x),
            offset: self.profile.offset.min(o.profile.offset),
        };
        out
    }

    /// Product truncated to the smaller degree bounds.
    pub fn mul(&self, ctx: &FieldContext, o: &Self) -> Self {
        let dl = self.deg_lambda.min(o.deg_lambda);
        let dx = self.deg_x.min(o.deg_x);
        let prod = raw_product(ctx, &self.coeffs, &o.coeffs, None);
        let mut out = Self::zero(self.s, self.n, dl, dx);
        for (v, c) in prod {
            out.insert_nonzero(ctx, v, c);
        }
        out.profile = self.profile.combine(&o.profile);
        out
    }

    /// Smallest profile value among omitted exponents, in p-units.
    pub fn tail_bound(&self) -> Ratio<i64> {
        let mut cands = Vec::new();
        if self.s > 0 {
            cands.push(self.profile.slope_lambda * Q::from_integer(self.deg_lambda + 1));
        }
        if self.n > 0 {
            cands.push(self.profile.slope_x * Q::from_integer(self.deg_x + 1));
        }
        cands.into_iter().min().unwrap_or_else(Q::zero) + self.profile.offset
    }

    /// Deterministic dump: one `exponents TAB π-digits@prec` line per stored
    /// coefficient, exponents in lexicographic order.
    pub fn dump(&self, ctx: &FieldContext) -> String {
        let mut out = String::new();
        for (v, c) in &self.coeffs {
            let exps: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            let j = ctx.serialize(c);
            let digs: Vec<String> = j
                .pi_digits
                .iter()
                .map(|d| d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                .collect();
            out.push_str(&format!("{}\t{}@{}\n", exps.join(" "), digs.join(";"), j.prec_pi));
        }
        out
    }
}

fn raw_product(
    ctx: &FieldContext,
    a: &BTreeMap<Vec<i64>, EisensteinElement>,
    b: &BTreeMap<Vec<i64>, EisensteinElement>,
    keep: Option<&dyn Fn(&[i64]) -> bool>,
) -> BTreeMap<Vec<i64>, EisensteinElement> {
    let mut acc: HashMap<Vec<i64>, EisensteinElement> = HashMap::new();
    for (va, ca) in a {
        for (vb, cb) in b {
            let v: Vec<i64> = va.iter().zip(vb).map(|(x, y)| x + y).collect();
            if let Some(k) = keep {
                if !k(&v) {
                    continue;
                }
            }
            let t = ctx.mul(ca, cb);
            acc.entry(v).and_modify(|e| *e = ctx.add(e, &t)).or_insert(t);
        }
    }
    acc.into_iter().filter(|(_, c)| !ctx.is_zero(c)).collect()
}

/// Number of `θ_i` needed so that every omitted one vanishes at the working
/// precision.
pub fn theta_cutoff(ctx: &FieldContext) -> usize {
    let p = ctx.p as i64;
    let e = p - 1;
    let prec = ctx.prec_pi() as i64;
    // ⌈(p-1)² i / p²⌉ ≥ prec
    ((prec * p * p + e * e - 1) / (e * e)) as usize
}

/// `Π_b Θ(c_b^(p^i) Λ^(p^i r_b) X^(p^i u_b))` over `i < m`: exact modulo the
/// working precision at every exponent, then truncated to the degree box.
pub fn splitting_h(
    ctx: &FieldContext,
    terms: &[LiftedTerm],
    s: usize,
    n: usize,
    m: u32,
    deg_lambda: i64,
    deg_x: i64,
) -> ConeSeries {
    let cut = theta_cutoff(ctx);
    let theta = ctx.theta_unchecked(cut);
    let mut cur: BTreeMap<Vec<i64>, EisensteinElement> = BTreeMap::new();
    cur.insert(vec![0; s + n], ctx.one());
    for level in 0..m {
        let scale = ctx.p.pow(level) as i64;
        for t in terms {
            let c = ctx.pow(&t.coeff, ctx.p.pow(level));
            let mut factor = BTreeMap::new();
            let mut cp = ctx.one();
            for (i, th) in theta.iter().enumerate() {
                let coef = ctx.mul(th, &cp);
                if !ctx.is_zero(&coef) {
                    let v: Vec<i64> = t.r.iter().chain(&t.u).map(|x| x * scale * i as i64).collect();
                    let e = factor.entry(v).or_insert_with(|| ctx.zero());
                    *e = ctx.add(e, &coef);
                }
                cp = ctx.mul(&cp, &c);
            }
            cur = raw_product(ctx, &cur, &factor, None);
        }
    }
    let p = ctx.p as i64;
    let omega = (terms.iter().map(|t| weight(&t.r)).max().unwrap_or(0)
        + terms.iter().map(|t| weight(&t.u)).max().unwrap_or(0))
    .max(1);
    let slope = Q::new(p - 1, p.pow(m + 1) * omega);
    let mut out = ConeSeries::zero(s, n, deg_lambda, deg_x);
    out.profile = ValuationProfile::uniform(slope);
    for (v, c) in cur {
        out.insert_nonzero(ctx, v, c);
    }
    out
}

/// `Π_b exp(π c_b Λ^(r_b) X^(u_b))` using all multi-indices of total
/// degree at most `total_deg`.
pub fn exp_pi_poly(
    ctx: &FieldContext,
    terms: &[LiftedTerm],
    s: usize,
    n: usize,
    total_deg: usize,
    deg_lambda: i64,
    deg_x: i64,
) -> ConeSeries {
    let fact: Vec<EisensteinElement> = (0..=total_deg).map(|i| ctx.pi_pow_over_factorial(i as u64)).collect();
    let mut cur: BTreeMap<Vec<i64>, (usize, EisensteinElement)> = BTreeMap::new();
    cur.insert(vec![0; s + n], (0, ctx.one()));
    // track total degree per partial product to honour the degree cap
    let mut states: Vec<(Vec<i64>, usize, EisensteinElement)> = vec![(vec![0; s + n], 0, ctx.one())];
    for t in terms {
        let mut next: HashMap<(Vec<i64>, usize), EisensteinElement> = HashMap::new();
        for (v, d, c) in &states {
            let mut cp = ctx.one();
            for i in 0..=(total_deg - d) {
                let coef = ctx.mul(&ctx.mul(c, &fact[i]), &cp);
                let w: Vec<i64> = v.iter().zip(t.r.iter().chain(&t.u)).map(|(a, b)| a + b * i as i64).collect();
                let key = (w, d + i);
                next.entry(key).and_modify(|e| *e = ctx.add(e, &coef)).or_insert(coef);
                cp = ctx.mul(&cp, &t.coeff);
            }
        }
        states = next.into_iter().map(|((v, d), c)| (v, d, c)).collect();
        states.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    }
    cur.clear();
    let mut out = ConeSeries::zero(s, n, deg_lambda, deg_x);
    let mut sums: BTreeMap<Vec<i64>, EisensteinElement> = BTreeMap::new();
    for (v, _, c) in states {
        let e = sums.entry(v).or_insert_with(|| ctx.zero());
        *e = ctx.add(e, &c);
    }
    for (v, c) in sums {
        out.insert_nonzero(ctx, v, c);
    }
    out
}

/// ψ^m on one block: coefficient at `v` becomes the one at `p^m v`.
pub fn dilation_extract(ctx: &FieldContext, series: &ConeSeries, block: Block, m: u32) -> ConeSeries {
    let pm = ctx.p.pow(m) as i64;
    let (lo, hi) = match block {
        Block::Lambda => (0, series.s),
        Block::X => (series.s, series.s + series.n),
    };
    let mut out = series.clone();
    out.coeffs.clear();
    match block {
        Block::Lambda => {
            out.deg_lambda = series.deg_lambda / pm;
            out.profile.slope_lambda = series.profile.slope_lambda * Q::from_integer(pm);
        }
        Block::X => {
            out.deg_x = series.deg_x / pm;
            out.profile.slope_x = series.profile.slope_x * Q::from_integer(pm);
        }
    }
    for (v, c) in &series.coeffs {
        if v[lo..hi].iter().all(|x| x % pm == 0) {
            let mut w = v.clone();
            for x in w[lo..hi].iter_mut() {
                *x /= pm;
            }
            out.insert_nonzero(ctx, w, *c);
        }
    }
    out
}

/// Φ^m on one block: exponents multiplied by `p^m`.
pub fn power_substitute(ctx: &FieldContext, series: &ConeSeries, block: Block, m: u32) -> ConeSeries {
    let pm = ctx.p.pow(m) as i64;
    let (lo, hi) = match block {
        Block::Lambda => (0, series.s),
        Block::X => (series.s, series.s + series.n),
    };
    let mut out = series.clone();
    out.coeffs.clear();
    match block {
        Block::Lambda => {
            out.deg_lambda = series.deg_lambda * pm;
            out.profile.slope_lambda = series.profile.slope_lambda / Q::from_integer(pm);
        }
        Block::X => {
            out.deg_x = series.deg_x * pm;
            out.profile.slope_x = series.profile.slope_x / Q::from_integer(pm);
        }
    }
    for (v, c) in &series.coeffs {
        let mut w = v.clone();
        for x in w[lo..hi].iter_mut() {
            *x *= pm;
        }
        out.insert_nonzero(ctx, w, *c);
    }
    out
}

pub fn project_support(series: &ConeSeries, proj: Projector, lambda_cone: &Cone, x_cone: &Cone) -> ConeSeries {
    let s = series.s;
    let neg = |v: &[i64]| -> Vec<i64> { v.iter().map(|x| -x).collect() };
    let keep = |v: &[i64]| -> bool {
        match proj {
            Projector::Pr1 => lambda_cone.contains(&neg(&v[..s])),
            Projector::Pr2 => x_cone.contains(&neg(&v[s..])),
            Projector::Pr0 => lambda_cone.in_lineality(&v[..s]) && x_cone.in_lineality(&v[s..]),
            Projector::Pr20 => x_cone.in_lineality(&v[s..]),
        }
    };
    let mut out = series.clone();
    out.coeffs.retain(|v, _| keep(v));
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValuationReport {
    pub checked: usize,
    /// First exponent whose coefficient falls below the profile.
    pub violation: Option<Vec<i64>>,
}

impl ValuationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks `ord_π(c_v) ≥ profile(v)` for every stored coefficient; bounds
/// beyond the known precision only require the coefficient to vanish.
pub fn valuation_check(ctx: &FieldContext, series: &ConeSeries, profile: &ValuationProfile) -> ValuationReport {
    let mut checked = 0;
    for (v, c) in &series.coeffs {
        checked += 1;
        let bound = profile.at_pi(series.s, v, ctx.p).max(0);
        let ord = ctx.ord_pi(c) as i64;
        if ord < bound.min(c.prec_pi as i64) {
            return ValuationReport { checked, violation: Some(v.clone()) };
        }
    }
    ValuationReport { checked, violation: None }
}

/// Checks that the family's supports lie in the declared cones.
pub fn check_support(terms: &[LiftedTerm], lambda_cone: &Cone, x_cone: &Cone) -> Result<()> {
    for t in terms {
        if !lambda_cone.contains(&t.r) || !x_cone.contains(&t.u) {
            return Err(Error::InvalidParameter(format!("term {:?} {:?} outside its cone", t.r, t.u)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::make_field_context;

    #[test]
    fn cone_membership() {
        let c = Cone::new(1, vec![vec![1], vec![-1]]);
        assert!(c.contains(&[-5]) && c.in_lineality(&[3]));
        let h = Cone::new(1, vec![vec![1]]);
        assert!(h.contains(&[2]) && !h.contains(&[-1]) && !h.in_lineality(&[1]));
        let quad = Cone::new(2, vec![vec![1, 0], vec![1, 1]]);
        assert!(quad.contains(&[3, 1]) && !quad.contains(&[1, 2]) && !quad.contains(&[-1, 0]));
        assert_eq!(h.lattice_points(2), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn single_term_theta() {
        let ctx = make_field_context(3, 1, 4).unwrap();
        let terms = vec![LiftedTerm { coeff: ctx.one(), r: vec![], u: vec![1] }];
        let h = splitting_h(&ctx, &terms, 0, 1, 1, 0, 10);
        let th = ctx.theta_coeffs(10).unwrap();
        for i in 0..=10 {
            assert_eq!(h.coeff(&ctx, &[i]), th[i as usize]);
        }
    }

    #[test]
    fn exp_of_single_term() {
        let ctx = make_field_context(3, 1, 4).unwrap();
        let c = ctx.from_int(2);
        let terms = vec![LiftedTerm { coeff: c, r: vec![], u: vec![1] }];
        let e = exp_pi_poly(&ctx, &terms, 0, 1, 8, 0, 8);
        for i in 0..=8u64 {
            let want = ctx.mul(&ctx.pi_pow_over_factorial(i), &ctx.pow(&c, i));
            assert_eq!(e.coeff(&ctx, &[i as i64]), want);
        }
        let zero = exp_pi_poly(&ctx, &[], 0, 1, 8, 0, 8);
        assert_eq!(zero.coeffs.len(), 1);
    }

    #[test]
    fn psi_and_phi() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let mut s = ConeSeries::zero(0, 1, 0, 9);
        s.coeffs.insert(vec![3], ctx.one());
        s.coeffs.insert(vec![2], ctx.one());
        let d = dilation_extract(&ctx, &s, Block::X, 1);
        assert_eq!(d.coeffs.keys().cloned().collect::<Vec<_>>(), vec![vec![1]]);
        let back = dilation_extract(&ctx, &power_substitute(&ctx, &d, Block::X, 1), Block::X, 1);
        assert_eq!(back.coeffs, d.coeffs);
    }

    #[test]
    fn valuation_violation_is_reported() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let mut s = ConeSeries::zero(0, 1, 0, 10);
        s.coeffs.insert(vec![9], ctx.one());
        let r = valuation_check(&ctx, &s, &ValuationProfile::uniform(Q::new(2, 9)));
        assert_eq!(r.violation, Some(vec![9]));
    }
}
