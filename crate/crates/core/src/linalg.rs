//! Dense matrices over `O`, characteristic series and truncated power series in `T`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ffield::FiniteField;
use crate::padic::{EisensteinElement, FieldContext};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<EisensteinElement>,
}

impl Mat {
    pub fn zeros(ctx: &FieldContext, rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![ctx.zero(); rows * cols] }
    }

    pub fn identity(ctx: &FieldContext, n: usize) -> Self {
        let mut m = Self::zeros(ctx, n, n);
        for i in 0..n {
            m.data[i * n + i] = ctx.one();
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &EisensteinElement {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: EisensteinElement) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, ctx: &FieldContext, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows);
        let (n, k, m) = (self.rows, self.cols, o.cols);
        // transpose once for contiguous inner loops
        let mut ot = Vec::with_capacity(k * m);
        for j in 0..m {
            for l in 0..k {
                ot.push(o.data[l * m + j]);
            }
        }
        let zero = ctx.zero();
        let data: Vec<EisensteinElement> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let row = &self.data[i * k..(i + 1) * k];
                let nz: Vec<usize> = (0..k).filter(|&l| !is_exact_zero(&row[l])).collect();
                let ot = &ot;
                (0..m)
                    .map(move |j| {
                        if nz.is_empty() {
                            return zero;
                        }
                        let col = &ot[j * k..(j + 1) * k];
                        let mut acc = ctx.new_acc();
                        for &l in &nz {
                            ctx.mul_acc(&mut acc, &row[l], &col[l]);
                        }
                        ctx.acc_finish(&mut acc)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Mat { rows: n, cols: m, data }
    }

    pub fn mul_vec(&self, ctx: &FieldContext, v: &[EisensteinElement]) -> Vec<EisensteinElement> {
        (0..self.rows)
            .map(|i| {
                let mut acc = ctx.new_acc();
                for j in 0..self.cols {
                    ctx.mul_acc(&mut acc, self.get(i, j), &v[j]);
                }
                ctx.acc_finish(&mut acc)
            })
            .collect()
    }

    pub fn trace(&self, ctx: &FieldContext) -> EisensteinElement {
        (0..self.rows.min(self.cols)).fold(ctx.zero(), |acc, i| ctx.add(&acc, self.get(i, i)))
    }

    /// `tr(self · o)` without forming the product.
    pub fn trace_of_product(&self, ctx: &FieldContext, o: &Mat) -> EisensteinElement {
        let mut acc = ctx.new_acc();
        for i in 0..self.rows {
            for l in 0..self.cols {
                ctx.mul_acc(&mut acc, self.get(i, l), o.get(l, i));
            }
        }
        ctx.acc_finish(&mut acc)
    }

    pub fn transpose(&self) -> Mat {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(*self.get(i, j));
            }
        }
        Mat { rows: self.cols, cols: self.rows, data }
    }

    pub fn map(&self, f: impl Fn(&EisensteinElement) -> EisensteinElement + Sync + Send) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.par_iter().map(f).collect() }
    }

    pub fn sub(&self, ctx: &FieldContext, o: &Mat) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| ctx.sub(a, b)).collect(),
        }
    }

    /// Minimum π-adic valuation over all entries.
    pub fn min_ord(&self, ctx: &FieldContext) -> u32 {
        self.data.iter().map(|x| ctx.ord_pi(x)).min().unwrap_or(u32::MAX)
    }
}

#[inline]
fn is_exact_zero(x: &EisensteinElement) -> bool {
    x.comps.iter().all(|c| c.iter().all(|&d| d == 0))
}

/// Coefficients `c_0 = 1, .., c_n` of `det(1 - M T)`, division-free.
pub fn berkowitz(ctx: &FieldContext, m: &Mat) -> Vec<EisensteinElement> {
    let n = m.rows;
    // characteristic polynomial det(xI - M) = Σ a_k x^(n-k); det(1 - MT) = Σ a_k T^k
    let mut poly = vec![ctx.one()];
    for k in 0..n {
        // leading principal block of size k+1
        let a_kk = *m.get(k, k);
        let r: Vec<EisensteinElement> = (0..k).map(|j| *m.get(k, j)).collect();
        let c: Vec<EisensteinElement> = (0..k).map(|i| *m.get(i, k)).collect();
        // Toeplitz column: 1, -a_kk, -R c, -R A c, ...
        let mut col = Vec::with_capacity(k + 2);
        col.push(ctx.one());
        col.push(ctx.neg(&a_kk));
        let mut v = c.clone();
        for _ in 0..k {
            let mut acc = ctx.new_acc();
            for j in 0..k {
                ctx.mul_acc(&mut acc, &r[j], &v[j]);
            }
            col.push(ctx.neg(&ctx.acc_finish(&mut acc)));
            v = (0..k)
                .map(|i| {
                    let mut acc = ctx.new_acc();
                    for j in 0..k {
                        ctx.mul_acc(&mut acc, m.get(i, j), &v[j]);
                    }
                    ctx.acc_finish(&mut acc)
                })
                .collect();
        }
        let mut next = vec![ctx.zero(); k + 2];
        for (i, ci) in col.iter().enumerate() {
            for (j, pj) in poly.iter().enumerate() {
                if i + j <= k + 1 {
                    next[i + j] = ctx.add(&next[i + j], &ctx.mul(ci, pj));
                }
            }
        }
        poly = next;
    }
    poly
}

/// `det(1 - M T) mod T^(K+1)` from traces of powers (Newton's identities).
/// Division by `k` loses `v_p(k)` p-digits, reflected in the returned
/// precisions.
pub fn newton_fredholm(ctx: &FieldContext, m: &Mat, k_max: usize) -> Result<Vec<EisensteinElement>> {
    let mut traces = Vec::with_capacity(k_max);
    let mut pw = m.clone();
    for k in 1..=k_max {
        if k > 1 {
            pw = pw.mul(ctx, m);
        }
        traces.push(pw.trace(ctx));
    }
    let mut c = vec![ctx.one()];
    for k in 1..=k_max {
        // k c_k = -Σ_{j=1..k} tr(M^j) c_{k-j}
        let mut acc = ctx.zero();
        for j in 1..=k {
            acc = ctx.add(&acc, &ctx.mul(&traces[j - 1], &c[k - j]));
        }
        c.push(ctx.div_int(&ctx.neg(&acc), k as i64)?);
    }
    Ok(c)
}

/// Fredholm coefficients up to `T^K`, exact for small matrices.
pub fn fredholm_coeffs(ctx: &FieldContext, m: &Mat, k_max: usize) -> Result<Vec<EisensteinElement>> {
    if m.rows <= 40 {
        let mut c = berkowitz(ctx, m);
        c.resize(k_max + 1, ctx.zero());
        c.truncate(k_max + 1);
        Ok(c)
    } else {
        newton_fredholm(ctx, m, k_max)
    }
}

/// Truncated power-series product mod `T^len`.
pub fn series_mul(ctx: &FieldContext, a: &[EisensteinElement], b: &[EisensteinElement], len: usize) -> Vec<EisensteinElement> {
    let mut out = vec![ctx.zero(); len];
    for (i, x) in a.iter().enumerate().take(len) {
        for (j, y) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            out[i + j] = ctx.add(&out[i + j], &ctx.mul(x, y));
        }
    }
    out
}

/// Inverse of a series with unit constant term, mod `T^len`.
pub fn series_inv(ctx: &FieldContext, a: &[EisensteinElement], len: usize) -> Result<Vec<EisensteinElement>> {
    let inv0 = ctx.inv(&a[0])?;
    let mut out = vec![ctx.zero(); len];
    if len == 0 {
        return Ok(out);
    }
    out[0] = inv0;
    for k in 1..len {
        let mut acc = ctx.zero();
        for j in 1..=k.min(a.len() - 1) {
            acc = ctx.add(&acc, &ctx.mul(&a[j], &out[k - j]));
        }
        out[k] = ctx.neg(&ctx.mul(&acc, &inv0));
    }
    Ok(out)
}

/// `g(T) ↦ g(T)/g(QT)` applied `n` times, mod `T^len`.
pub fn delta_op(ctx: &FieldContext, g: &[EisensteinElement], q_power: u64, n: usize, len: usize) -> Result<Vec<EisensteinElement>> {
    let mut cur: Vec<EisensteinElement> = g.iter().take(len).copied().collect();
    cur.resize(len, ctx.zero());
    for _ in 0..n {
        let mut scaled = cur.clone();
        let mut qp = ctx.one();
        let qe = ctx.from_int((q_power % ctx.modulus) as i64);
        for c in scaled.iter_mut() {
            *c = ctx.mul(c, &qp);
            qp = ctx.mul(&qp, &qe);
        }
        cur = series_mul(ctx, &cur, &series_inv(ctx, &scaled, len)?, len);
    }
    Ok(cur)
}

/// Outcome of the trace power method.
#[derive(Clone, Debug)]
pub struct PowerResult {
    pub value: EisensteinElement,
    /// Number of leading π-digits on which the last three ratios agree.
    pub certified_prec: u32,
    /// `(squarings, agreement with previous ratio)` per step.
    pub trail: Vec<(usize, u32)>,
}

/// Unit eigenvalue of `m` as the limit of `tr(M^(2^k+1)) / tr(M^(2^k))`.
pub fn power_method(ctx: &FieldContext, m: &Mat, max_squarings: usize) -> Result<PowerResult> {
    let mut p = m.clone();
    let mut ratios: Vec<EisensteinElement> = Vec::new();
    let mut trail = Vec::new();
    for k in 1..=max_squarings {
        p = p.mul(ctx, &p);
        let t = p.trace(ctx);
        if !ctx.is_unit(&t) {
            return Err(Error::NoUnitRoot);
        }
        let r = ctx.div(&p.trace_of_product(ctx, m), &t)?;
        let agree = ratios.last().map(|x| ctx.agreement(x, &r)).unwrap_or(0);
        trail.push((k, agree));
        ratios.push(r);
        let n = ratios.len();
        if n >= 3 {
            let a1 = ctx.agreement(&ratios[n - 1], &ratios[n - 2]);
            let a2 = ctx.agreement(&ratios[n - 2], &ratios[n - 3]);
            if a1 >= r.prec_pi && a2 >= r.prec_pi {
                return Ok(PowerResult { value: r, certified_prec: r.prec_pi, trail });
            }
        }
    }
    let n = ratios.len();
    if n < 3 {
        return Err(Error::NoStabilization("too few power-method steps".into()));
    }
    let cert = ctx
        .agreement(&ratios[n - 1], &ratios[n - 2])
        .min(ctx.agreement(&ratios[n - 2], &ratios[n - 3]));
    if cert == 0 {
        return Err(Error::NoStabilization("power-method ratios disagree".into()));
    }
    Ok(PowerResult { value: ratios[n - 1], certified_prec: cert, trail })
}

/// Unit eigenvalue by iterating on the basis vector `start`: the ratio of
/// the `start` coordinates of `M^(k+1) e` and `M^k e`.
pub fn unit_eigen_iter(ctx: &FieldContext, m: &Mat, start: usize, max_iter: usize) -> Result<PowerResult> {
    let mut v = vec![ctx.zero(); m.cols];
    v[start] = ctx.one();
    let mut ratios: Vec<EisensteinElement> = Vec::new();
    let mut trail = Vec::new();
    for k in 1..=max_iter {
        let w = m.mul_vec(ctx, &v);
        if !ctx.is_unit(&v[start]) {
            return Err(Error::NoUnitRoot);
        }
        let r = ctx.div(&w[start], &v[start])?;
        let agree = ratios.last().map(|x| ctx.agreement(x, &r)).unwrap_or(0);
        trail.push((k, agree));
        ratios.push(r);
        v = w;
        let n = ratios.len();
        if n >= 3 {
            let a1 = ctx.agreement(&ratios[n - 1], &ratios[n - 2]);
            let a2 = ctx.agreement(&ratios[n - 2], &ratios[n - 3]);
            if a1 >= r.prec_pi && a2 >= r.prec_pi {
                return Ok(PowerResult { value: r, certified_prec: r.prec_pi, trail });
            }
        }
    }
    let n = ratios.len();
    if n < 3 {
        return Err(Error::NoStabilization("too few iterations".into()));
    }
    let cert = ctx
        .agreement(&ratios[n - 1], &ratios[n - 2])
        .min(ctx.agreement(&ratios[n - 2], &ratios[n - 3]));
    if cert == 0 {
        return Err(Error::NoStabilization("iteration ratios disagree".into()));
    }
    Ok(PowerResult { value: ratios[n - 1], certified_prec: cert, trail })
}

struct ResidueMat {
    n: usize,
    data: Vec<u32>,
}

impl ResidueMat {
    fn mul(&self, f: &FiniteField, o: &ResidueMat) -> ResidueMat {
        let n = self.n;
        let mut data = vec![0u32; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.data[i * n + l];
                if a == 0 {
                    continue;
                }
                for j in 0..n {
                    let b = o.data[l * n + j];
                    if b != 0 {
                        data[i * n + j] = f.add(data[i * n + j], f.mul(a, b));
                    }
                }
            }
        }
        ResidueMat { n, data }
    }

    fn rank(&self, f: &FiniteField) -> usize {
        let n = self.n;
        let mut a = self.data.clone();
        let minus_one = f.encode(&[f.p - 1]);
        let mut rank = 0;
        for col in 0..n {
            let Some(piv) = (rank..n).find(|&r| a[r * n + col] != 0) else { continue };
            for j in 0..n {
                a.swap(piv * n + j, rank * n + j);
            }
            let inv = f.exp(f.order() - f.log(a[rank * n + col]).unwrap());
            for r in 0..n {
                if r == rank || a[r * n + col] == 0 {
                    continue;
                }
                let factor = f.mul(minus_one, f.mul(a[r * n + col], inv));
                for j in col..n {
                    let t = f.mul(factor, a[rank * n + j]);
                    a[r * n + j] = f.add(a[r * n + j], t);
                }
            }
            rank += 1;
        }
        rank
    }
}

/// Number of unit eigenvalues of `m` with multiplicity: the stable rank of
/// its reduction mod π.
pub fn residue_unit_count(ctx: &FieldContext, m: &Mat) -> Result<usize> {
    let f = FiniteField::get(ctx.p, ctx.a)?;
    let n = m.rows;
    let base = ResidueMat { n, data: m.data.iter().map(|x| f.encode(&ctx.residue(x))).collect() };
    let mut cur = ResidueMat { n, data: base.data.clone() };
    let mut rank = cur.rank(&f);
    for _ in 0..n {
        let next = cur.mul(&f, &base);
        let r = next.rank(&f);
        if r == rank {
            return Ok(rank);
        }
        rank = r;
        cur = next;
    }
    Ok(rank)
}
