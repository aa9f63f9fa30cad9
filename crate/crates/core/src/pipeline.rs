//! The hypergeometric side: `g_{0,0}`, the ratio `G(Y) = g_{0,0}(Y)/g_{0,0}(Y^p)`,
//! `J_{s,v}/J_{0,0}`, evaluation at Teichmüller points, assembly of `L_unit`
//! from fiber unit roots, and the comparisons between the routes.

use std::collections::BTreeMap;

use serde::Serialize;

use rayon::prelude::*;

use crate::cone::Cone;
use crate::counting::{enumerate_closed_points, ClosedPoint};
use crate::error::{Error, Result};
use crate::family::LaurentFamily;
use crate::fiber::{default_dx, fiber_context, fiber_unit_root_padic, lambda_cone, x_cone};
use crate::linalg::{series_inv, series_mul};
use crate::padic::{EisensteinElement, FieldContext, KappaExponent, PadicJson};
use crate::sympow::{SymMonomial, SymPoly, SymPower, SymTrunc};

/// Truncated power series in one variable `Y_b` per support term.
#[derive(Clone, Debug)]
pub struct YSeries {
    pub nvars: usize,
    /// Total-degree bound.
    pub degree: u32,
    pub coeffs: BTreeMap<Vec<u32>, EisensteinElement>,
}

impl YSeries {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, ctx: &FieldContext, i: &[u32]) -> EisensteinElement {
        self.coeffs.get(i).copied().unwrap_or_else(|| ctx.zero())
    }

    /// `Y ↦ Y^m`, dropping terms beyond the degree bound.
    pub fn dilate(&self, m: u32) -> YSeries {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| k.iter().sum::<u32>() * m <= self.degree)
            .map(|(k, c)| (k.iter().map(|x| x * m).collect(), *c))
            .collect();
        YSeries { nvars: self.nvars, degree: self.degree, coeffs }
    }

    /// `self / den` for `den(0) = 1`; the quotient is supported on `self`'s
    /// support plus the monoid of `den`.
    pub fn div(&self, ctx: &FieldContext, den: &YSeries, support: &[Vec<u32>]) -> Result<YSeries> {
        if !ctx.is_one_unit(&den.coeff(ctx, &vec![0; den.nvars])) || !ctx.is_zero(&ctx.sub(&den.coeff(ctx, &vec![0; den.nvars]), &ctx.one())) {
            return Err(Error::InvalidParameter("denominator must have constant term 1".into()));
        }
        let mut order: Vec<&Vec<u32>> = support.iter().collect();
        order.sort_by_key(|k| (k.iter().sum::<u32>(), (*k).clone()));
        let dens: Vec<(&Vec<u32>, &EisensteinElement)> =
            den.coeffs.iter().filter(|(k, c)| k.iter().any(|&x| x > 0) && !ctx.is_zero(c)).collect();
        let mut out: BTreeMap<Vec<u32>, EisensteinElement> = BTreeMap::new();
        for m in order {
            let mut acc = self.coeff(ctx, m);
            for (j, c) in &dens {
                if j.iter().zip(m).all(|(a, b)| a <= b) {
                    let rest: Vec<u32> = m.iter().zip(j.iter()).map(|(a, b)| a - b).collect();
                    if let Some(qr) = out.get(&rest) {
                        acc = ctx.sub(&acc, &ctx.mul(c, qr));
                    }
                }
            }
            if !ctx.is_zero(&acc) {
                out.insert(m.clone(), acc);
            }
        }
        Ok(YSeries { nvars: self.nvars, degree: self.degree, coeffs: out })
    }

    /// Value at `y`; the caller certifies convergence by raising the degree.
    pub fn evaluate(&self, ctx: &FieldContext, y: &[EisensteinElement]) -> EisensteinElement {
        let mut pows: Vec<Vec<EisensteinElement>> = Vec::with_capacity(self.nvars);
        for b in 0..self.nvars {
            let top = self.coeffs.keys().map(|k| k[b]).max().unwrap_or(0) as usize;
            let mut v = vec![ctx.one()];
            for _ in 0..top {
                let last = *v.last().unwrap();
                v.push(ctx.mul(&last, &y[b]));
            }
            pows.push(v);
        }
        let mut acc = ctx.zero();
        for (k, c) in &self.coeffs {
            let mut t = *c;
            for (b, &e) in k.iter().enumerate() {
                t = ctx.mul(&t, &pows[b][e as usize]);
            }
            acc = ctx.add(&acc, &t);
        }
        acc
    }

    /// Smallest π-adic valuation among the coefficients of total degree `> d`.
    pub fn tail_ord(&self, ctx: &FieldContext, d: u32) -> u32 {
        self.coeffs
            .iter()
            .filter(|(k, _)| k.iter().sum::<u32>() > d)
            .map(|(_, c)| ctx.ord_pi(c))
            .min()
            .unwrap_or(ctx.prec_pi())
    }
}

/// Exponent vectors `(r_b, u_b)` of the support terms.
fn support_vectors(fam: &LaurentFamily) -> Vec<Vec<i64>> {
    fam.terms.iter().map(|t| t.r.iter().chain(&t.u).copied().collect()).collect()
}

/// All `i ∈ N^B` with `Σ i_b w_b = target` and `|i| ≤ degree`.
pub fn relations(fam: &LaurentFamily, target: &[i64], degree: u32) -> Vec<Vec<u32>> {
    let w = support_vectors(fam);
    let nb = w.len();
    let dim = target.len();
    let mut out = Vec::new();
    if nb == 0 {
        if target.iter().all(|&x| x == 0) {
            out.push(Vec::new());
        }
        return out;
    }
    let pivot = w[nb - 1].iter().position(|&x| x != 0);
    let mut cur = vec![0u32; nb];
    let mut sum = vec![0i64; dim];
    fn rec(
        b: usize,
        left: u32,
        w: &[Vec<i64>],
        target: &[i64],
        pivot: Option<usize>,
        cur: &mut Vec<u32>,
        sum: &mut Vec<i64>,
        out: &mut Vec<Vec<u32>>,
    ) {
        let nb = w.len();
        if b == nb - 1 {
            let last = &w[nb - 1];
            let rest: Vec<i64> = target.iter().zip(sum.iter()).map(|(t, s)| t - s).collect();
            let k = match pivot {
                None => {
                    if rest.iter().all(|&x| x == 0) {
                        for k in 0..=left {
                            cur[b] = k;
                            out.push(cur.clone());
                        }
                    }
                    cur[b] = 0;
                    return;
                }
                Some(j) => {
                    if rest[j] % last[j] != 0 {
                        return;
                    }
                    rest[j] / last[j]
                }
            };
            if k < 0 || k > left as i64 {
                return;
            }
            if rest.iter().zip(last).all(|(r, l)| *r == k * l) {
                cur[b] = k as u32;
                out.push(cur.clone());
                cur[b] = 0;
            }
            return;
        }
        for k in 0..=left {
            cur[b] = k;
            for (s, x) in sum.iter_mut().zip(&w[b]) {
                *s += k as i64 * x;
            }
            rec(b + 1, left - k, w, target, pivot, cur, sum, out);
            for (s, x) in sum.iter_mut().zip(&w[b]) {
                *s -= k as i64 * x;
            }
        }
        cur[b] = 0;
    }
    rec(0, degree, &w, target, pivot, &mut cur, &mut sum, &mut out);
    out
}

/// `π^i / i!` for `i ≤ max`.
fn pi_factorial_table(ctx: &FieldContext, max: u32) -> Vec<EisensteinElement> {
    let mut out = Vec::with_capacity(max as usize + 1);
    out.push(ctx.one());
    let mut unit = ctx.one();
    let mut v = 0u64;
    for j in 1..=max as u64 {
        let mut t = j;
        while t % ctx.p == 0 {
            t /= ctx.p;
            v += 1;
        }
        unit = ctx.mul(&unit, &ctx.from_int(t as i64));
        let z = ctx.mul(&ctx.pi_pow(j - (ctx.p - 1) * v), &ctx.inv(&unit).expect("unit"));
        out.push(if v % 2 == 1 { ctx.neg(&z) } else { z });
    }
    out
}

/// `J_{s,v}(Y)`: the coefficient of `Λ^s X^v` in `exp πF(Y, Λ, X)`, to total
/// degree `degree`. `J_{0,0} = g_{0,0}`.
pub fn j_series(fam: &LaurentFamily, target: &[i64], degree: u32, ctx: &FieldContext) -> YSeries {
    let table = pi_factorial_table(ctx, degree);
    let coeffs = relations(fam, target, degree)
        .into_iter()
        .map(|i| {
            let c = i.iter().fold(ctx.one(), |acc, &k| ctx.mul(&acc, &table[k as usize]));
            (i, c)
        })
        .filter(|(_, c)| !ctx.is_zero(c))
        .collect();
    YSeries { nvars: fam.terms.len(), degree, coeffs }
}

pub fn g00_series(fam: &LaurentFamily, degree: u32, ctx: &FieldContext) -> YSeries {
    j_series(fam, &vec![0; fam.s + fam.n], degree, ctx)
}

/// `G(Y) = g_{0,0}(Y) / g_{0,0}(Y^p)` to total degree `degree`.
pub fn g_ratio(fam: &LaurentFamily, degree: u32, ctx: &FieldContext) -> Result<YSeries> {
    let g = g00_series(fam, degree, ctx);
    let support = relations(fam, &vec![0; fam.s + fam.n], degree);
    let out = g.div(ctx, &g.dilate(ctx.p as u32), &support)?;
    check_integral(ctx, &out)?;
    Ok(out)
}

/// `J_{s,v}(Y) / J_{0,0}(Y)` to total degree `degree`.
pub fn j_ratio(fam: &LaurentFamily, target: &[i64], degree: u32, ctx: &FieldContext) -> Result<YSeries> {
    let num = j_series(fam, target, degree, ctx);
    let den = g00_series(fam, degree, ctx);
    let support = relations(fam, target, degree);
    let out = num.div(ctx, &den, &support)?;
    check_integral(ctx, &out)?;
    Ok(out)
}

fn check_integral(ctx: &FieldContext, s: &YSeries) -> Result<()> {
    // coefficients live in O by construction; a violation would show as an
    // element whose stored precision dropped below the working precision
    if let Some((k, _)) = s.coeffs.iter().find(|(_, c)| c.prec_pi < ctx.prec_pi()) {
        return Err(Error::Integrality(format!("coefficient at {k:?} lost precision")));
    }
    Ok(())
}

/// Teichmüller lifts `â_b` of the coefficients in `ctx` (degree `fam.a`).
pub fn teichmuller_point(fam: &LaurentFamily, ctx: &FieldContext) -> Vec<EisensteinElement> {
    fam.coeff_digits().iter().map(|d| ctx.from_unram(&ctx.teichmuller(d))).collect()
}

/// A value together with the evidence that raising the Y-degree leaves it
/// unchanged.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesEvaluation {
    pub value: PadicJson,
    pub certified_prec: u32,
    /// `(degree, agreement with the previous degree)`.
    pub trail: Vec<(u32, u32)>,
    #[serde(skip)]
    pub element: EisensteinElement,
}

/// Evaluates `make(degree)` at `y` for `degree = d0, 2d0, 4d0, …` until
/// three consecutive values agree to the working precision (or `rounds` runs
/// out); the certificate is the agreement of the last three.
pub fn evaluate_stable(
    ctx: &FieldContext,
    y: &[EisensteinElement],
    d0: u32,
    rounds: usize,
    make: impl Fn(u32) -> Result<YSeries>,
) -> Result<SeriesEvaluation> {
    let mut vals: Vec<EisensteinElement> = Vec::new();
    let mut trail = Vec::new();
    let mut d = d0.max(1);
    for _ in 0..rounds.max(3) {
        let v = make(d)?.evaluate(ctx, y);
        let agree = vals.last().map_or(0, |w| ctx.agreement(w, &v).min(v.prec_pi));
        trail.push((d, agree));
        vals.push(v);
        let n = vals.len();
        if n >= 3 && trail[n - 1].1 >= ctx.prec_pi() && trail[n - 2].1 >= ctx.prec_pi() {
            break;
        }
        d *= 2;
    }
    let n = vals.len();
    let cert = trail[n - 1].1.min(trail[n - 2].1);
    let element = vals[n - 1];
    Ok(SeriesEvaluation { value: ctx.serialize(&element), certified_prec: cert, trail, element })
}

/// Lineality lattice `M ∩ -M` of a cone, within weight `w`.
pub fn lineality_points(cone: &Cone, w: i64) -> Vec<Vec<i64>> {
    cone.lattice_points(w).into_iter().filter(|v| cone.in_lineality(v)).collect()
}

/// Which computation produced a unit root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    PointCount,
    Operator,
    Formula,
    Eigenvector,
}

#[derive(Clone, Debug, Serialize)]
pub struct UnitRootResult {
    pub route: Route,
    pub value: PadicJson,
    /// π-adic digits backed by the recorded stabilization run.
    pub certified_prec: u32,
    /// `(step, agreement with the previous step)`.
    pub trail: Vec<(u32, u32)>,
    #[serde(skip)]
    pub element: EisensteinElement,
}

impl UnitRootResult {
    fn new(ctx: &FieldContext, route: Route, element: EisensteinElement, certified_prec: u32, trail: Vec<(u32, u32)>) -> Self {
        UnitRootResult { route, value: ctx.serialize(&element), certified_prec, trail, element }
    }
}

/// `Π_{i<a} G(σ^i â)` raised to κ; certified by doubling the Y-degree.
pub fn formula_eval(fam: &LaurentFamily, kappa: &KappaExponent, ctx: &FieldContext) -> Result<FormulaResult> {
    if ctx.a != fam.a {
        return Err(Error::InvalidParameter("context degree differs from the family's".into()));
    }
    let y = teichmuller_point(fam, ctx);
    let d0 = 8 * (fam.terms.len() as u32).max(1);
    let mut factors = Vec::with_capacity(fam.a);
    let mut product = ctx.one();
    let mut cert = ctx.prec_pi();
    let mut yi = y.clone();
    for _ in 0..fam.a {
        let ev = evaluate_stable(ctx, &yi, d0, 6, |d| g_ratio(fam, d, ctx))?;
        cert = cert.min(ev.certified_prec);
        product = ctx.mul(&product, &ev.element);
        factors.push(ev);
        yi = yi.iter().map(|x| ctx.sigma(x)).collect();
    }
    let sigma_invariant = ctx.agreement(&ctx.sigma(&product), &product) >= cert;
    let powered = ctx.unit_pow_kappa(&product, kappa)?;
    cert = cert.min(powered.prec_pi);
    let trail = factors[0].trail.clone();
    Ok(FormulaResult {
        result: UnitRootResult::new(ctx, Route::Formula, powered, cert, trail),
        factors,
        sigma_invariant,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaResult {
    pub result: UnitRootResult,
    /// `G(σ^i â)` for `i < a`.
    pub factors: Vec<SeriesEvaluation>,
    pub sigma_invariant: bool,
}

/// `π_0(λ)` for every closed point of degree `≤ d_max`, in `ctx`.
#[derive(Clone, Debug)]
pub struct FiberRoots {
    pub points: Vec<ClosedPoint>,
    pub roots: Vec<EisensteinElement>,
    /// Smallest certified precision over the fibers.
    pub certified_prec: u32,
}

pub fn fiber_roots(fam: &LaurentFamily, d_max: usize, ctx: &FieldContext) -> Result<FiberRoots> {
    let points = enumerate_closed_points(fam, d_max)?;
    let found: Vec<Result<(EisensteinElement, u32)>> = points
        .par_iter()
        .map(|pt| {
            let fctx = fiber_context(fam, pt, ctx.n)?;
            let r = fiber_unit_root_padic(fam, pt, default_dx(fam, &fctx), &fctx)?;
            if !fctx.in_base_subring(&r.value) {
                return Err(Error::Mismatch(format!("unit root at {} is not in Z_p[π]", pt.orbit_id)));
            }
            let cert = r.certified_prec.min(r.hensel_agreement).min(r.doubling_agreement);
            Ok((fctx.transfer(&r.value, ctx), cert))
        })
        .collect();
    let mut roots = Vec::with_capacity(points.len());
    let mut cert = ctx.prec_pi();
    for f in found {
        let (v, c) = f?;
        cert = cert.min(c);
        roots.push(ctx.with_prec(v, c.min(v.prec_pi)));
    }
    Ok(FiberRoots { points, roots, certified_prec: cert })
}

/// `L_unit(f, κ, T)` mod `T^(d_max+1)` by both assembly routes.
#[derive(Clone, Debug)]
pub struct LUnitSeries {
    pub d_max: usize,
    /// Coefficients of the Euler product.
    pub series: Vec<EisensteinElement>,
    /// `M_m`, `m = 1..=d_max`, from the point sums.
    pub moments: Vec<EisensteinElement>,
    /// π-adic agreement of the moments with `T L'/L` of the product.
    pub route_agreement: u32,
    pub fiber_prec: u32,
}

pub fn assemble_l_unit(ctx: &FieldContext, roots: &FiberRoots, kappa: &KappaExponent, d_max: usize) -> Result<LUnitSeries> {
    let len = d_max + 1;
    let mut series = vec![ctx.zero(); len];
    series[0] = ctx.one();
    let mut moments = vec![ctx.zero(); d_max];
    for (pt, r) in roots.points.iter().zip(&roots.roots) {
        let d = pt.degree;
        if d > d_max {
            continue;
        }
        let rk = ctx.unit_pow_kappa(r, kappa)?;
        let mut factor = vec![ctx.zero(); len];
        let mut pw = ctx.one();
        for j in 0..=d_max / d {
            factor[j * d] = pw;
            pw = ctx.mul(&pw, &rk);
        }
        series = series_mul(ctx, &series, &factor, len);
        for m in (d..=d_max).step_by(d) {
            let v = ctx.unit_pow_kappa(&ctx.pow(r, (m / d) as u64), kappa)?;
            moments[m - 1] = ctx.add(&moments[m - 1], &ctx.mul(&ctx.from_int(d as i64), &v));
        }
    }
    let deriv: Vec<EisensteinElement> =
        (0..len).map(|i| if i == 0 { ctx.zero() } else { ctx.mul(&ctx.from_int(i as i64), &series[i]) }).collect();
    let log_deriv = series_mul(ctx, &deriv, &series_inv(ctx, &series, len)?, len);
    let route_agreement = (1..len)
        .map(|m| ctx.agreement(&log_deriv[m], &moments[m - 1]).min(moments[m - 1].prec_pi))
        .min()
        .unwrap_or(ctx.prec_pi());
    Ok(LUnitSeries { d_max, series, moments, route_agreement, fiber_prec: roots.certified_prec })
}

/// The slope-0 reciprocal root `ρ` of `L_unit` from `M_(m+1)/M_m`, with the
/// sign `e₀ = +1` for a pole of `L_unit` and `-1` for a zero.
#[derive(Clone, Debug, Serialize)]
pub struct LUnitRoot {
    pub result: UnitRootResult,
    pub e0: i32,
}

pub fn extract_unit_root_of_lunit(ctx: &FieldContext, l: &LUnitSeries) -> Result<LUnitRoot> {
    let m = &l.moments;
    if m.len() < 4 {
        return Err(Error::NoStabilization("need at least four moments".into()));
    }
    if m.iter().any(|x| !ctx.is_unit(x)) {
        return Err(Error::NoUnitRoot);
    }
    let ratios: Vec<EisensteinElement> = m.windows(2).map(|w| ctx.div(&w[1], &w[0])).collect::<Result<_>>()?;
    let mut trail = vec![(1u32, 0u32)];
    for i in 1..ratios.len() {
        trail.push((i as u32 + 1, ctx.agreement(&ratios[i], &ratios[i - 1])));
    }
    let n = ratios.len();
    let rho = ratios[n - 1];
    let cert = trail[n - 1].1.min(trail[n - 2].1).min(l.fiber_prec).min(rho.prec_pi);
    let scaled = ctx.div(&m[n], &ctx.pow(&rho, n as u64 + 1))?;
    let e0 = if ctx.ord_pi(&ctx.sub(&scaled, &ctx.one())) >= 1 {
        1
    } else if ctx.ord_pi(&ctx.add(&scaled, &ctx.one())) >= 1 {
        -1
    } else {
        return Err(Error::NoStabilization("leading multiplicity is not ±1".into()));
    };
    Ok(LUnitRoot { result: UnitRootResult::new(ctx, Route::PointCount, rho, cert, trail), e0 })
}

/// `η(â, Λ, X) = Σ (J_{s,v}/J_{0,0})(â) Λ^s X^v` over the lineality lattices.
#[derive(Clone, Debug)]
pub struct EtaSeries {
    /// `(s, v, coefficient)`, constant term first.
    pub terms: Vec<(Vec<i64>, Vec<i64>, EisensteinElement)>,
    pub certified_prec: u32,
    pub d_lambda: i64,
    pub d_x: i64,
}

pub fn eta_series(fam: &LaurentFamily, d_lambda: i64, d_x: i64, ctx: &FieldContext) -> Result<EtaSeries> {
    let y = teichmuller_point(fam, ctx);
    let ls = lineality_points(&lambda_cone(fam), d_lambda);
    let xs = lineality_points(&x_cone(fam), d_x);
    let targets: Vec<(Vec<i64>, Vec<i64>)> =
        ls.iter().flat_map(|s| xs.iter().map(move |v| (s.clone(), v.clone()))).collect();
    let d0 = 8 * (fam.terms.len() as u32).max(1);
    let evals: Vec<Result<Option<SeriesEvaluation>>> = targets
        .par_iter()
        .map(|(s, v)| {
            let t: Vec<i64> = s.iter().chain(v).copied().collect();
            if t.iter().all(|&x| x == 0) {
                return Ok(None);
            }
            evaluate_stable(ctx, &y, d0, 6, |d| j_ratio(fam, &t, d, ctx)).map(Some)
        })
        .collect();
    let mut terms = vec![(vec![0; fam.s], vec![0; fam.n], ctx.one())];
    let mut cert = ctx.prec_pi();
    for ((s, v), ev) in targets.into_iter().zip(evals) {
        if let Some(ev) = ev? {
            cert = cert.min(ev.certified_prec);
            if !ctx.is_zero(&ev.element) {
                terms.push((s, v, ev.element));
            }
        }
    }
    Ok(EtaSeries { terms, certified_prec: cert, d_lambda, d_x })
}

/// `Υ(η)`: `Λ^s X^v ↦ Λ^s e*_{-v}`, stored on the dual basis index `r = -s`.
pub fn upsilon_eta(sp: &SymPower, eta: &EtaSeries) -> SymPoly {
    let terms: Vec<(Vec<i64>, SymMonomial, EisensteinElement)> = eta
        .terms
        .iter()
        .map(|(s, v, c)| {
            let r: Vec<i64> = s.iter().map(|x| -x).collect();
            let u = if v.iter().all(|&x| x == 0) {
                SymMonomial::new(vec![])
            } else {
                SymMonomial::new(vec![v.iter().map(|x| -x).collect()])
            };
            (r, u, *c)
        })
        .collect();
    sp.element(&terms)
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenvectorReport {
    pub dim: usize,
    pub eigenvalue: PadicJson,
    /// Smallest agreement of `[β*]v` with `λ v` over the components.
    pub min_agreement: u32,
    /// Basis element `(r, u)` attaining it.
    pub limiting: Option<(Vec<i64>, SymMonomial)>,
    /// Smallest agreement over components of degree `≤ t` for each `t`.
    pub by_degree: Vec<u32>,
    pub eta_prec: u32,
    pub required: u32,
    pub passed: bool,
}

/// `[β*]_κ (Υη^κ) = F_a(â)^κ · Υη^κ` componentwise.
pub fn eigenvector_check(
    sp: &SymPower,
    eta: &EtaSeries,
    kappa: &KappaExponent,
    eigenvalue: &EisensteinElement,
    required: u32,
) -> Result<EigenvectorReport> {
    let ctx = &sp.ctx;
    let v = sp.coordinates(&sp.kappa_power(&upsilon_eta(sp, eta), kappa)?);
    let op = sp.dual_beta_matrix(kappa)?;
    let w = op.mat.mul_vec(ctx, &v);
    let mut min_agreement = ctx.prec_pi();
    let mut limiting = None;
    let mut by_degree = vec![ctx.prec_pi(); sp.trunc.t_max + 1];
    for (i, (wi, vi)) in w.iter().zip(&v).enumerate() {
        let rhs = ctx.mul(eigenvalue, vi);
        let a = ctx.agreement(wi, &rhs).min(wi.prec_pi).min(rhs.prec_pi);
        let deg = op.basis[i].1.degree();
        for b in by_degree.iter_mut().skip(deg) {
            *b = (*b).min(a);
        }
        if a < min_agreement {
            min_agreement = a;
            limiting = Some(op.basis[i].clone());
        }
    }
    let min_agreement = min_agreement.min(eta.certified_prec);
    Ok(EigenvectorReport {
        dim: v.len(),
        eigenvalue: ctx.serialize(eigenvalue),
        min_agreement,
        limiting,
        by_degree,
        eta_prec: eta.certified_prec,
        required,
        passed: min_agreement >= required,
    })
}

/// `[β_a]_κ` unit root with the doubling certificate: each knob of `trunc`
/// is doubled in turn and the value must persist.
pub fn operator_unit_root(fam: &LaurentFamily, kappa: &KappaExponent, trunc: SymTrunc, ctx: &FieldContext) -> Result<UnitRootResult> {
    let base = SymPower::new(fam, trunc, ctx)?;
    let ur = base.unit_root(&base.beta_matrix(kappa)?)?;
    let mut cert = ur.certified_prec.min(ur.value.prec_pi);
    let mut trail = vec![(0u32, cert)];
    let variants = [
        SymTrunc { t_max: 2 * trunc.t_max, ..trunc },
        SymTrunc { d_x: 2 * trunc.d_x, ..trunc },
        SymTrunc { d_lambda: 2 * trunc.d_lambda, ..trunc },
    ];
    for (i, t) in variants.into_iter().enumerate() {
        let sp = SymPower::new(fam, t, ctx)?;
        let other = sp.unit_root(&sp.beta_matrix(kappa)?)?;
        let a = ctx.agreement(&ur.value, &other.value).min(other.certified_prec);
        trail.push((i as u32 + 1, a));
        cert = cert.min(a);
    }
    Ok(UnitRootResult::new(ctx, Route::Operator, ur.value, cert, trail))
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreeWayReport {
    pub point_count: LUnitRoot,
    pub operator: UnitRootResult,
    pub formula: FormulaResult,
    /// Agreement of (point count, operator), (point count, formula), (operator, formula).
    pub pairwise: [u32; 3],
    /// Minimum certified precision over the routes.
    pub compared_at: u32,
    pub passed: bool,
}

/// The three routes to the unit root, compared at their minimum certified
/// precision.
pub fn three_way_compare(
    fam: &LaurentFamily,
    kappa: &KappaExponent,
    trunc: SymTrunc,
    d_max: usize,
    ctx: &FieldContext,
) -> Result<ThreeWayReport> {
    let roots = fiber_roots(fam, d_max, ctx)?;
    let l = assemble_l_unit(ctx, &roots, kappa, d_max)?;
    let pc = extract_unit_root_of_lunit(ctx, &l)?;
    let op = operator_unit_root(fam, kappa, trunc, ctx)?;
    let fm = formula_eval(fam, kappa, ctx)?;
    let (a, b, c) = (&pc.result.element, &op.element, &fm.result.element);
    let pairwise = [ctx.agreement(a, b), ctx.agreement(a, c), ctx.agreement(b, c)];
    let compared_at = pc.result.certified_prec.min(op.certified_prec).min(fm.result.certified_prec);
    let passed = pairwise.iter().all(|&x| x >= compared_at);
    Ok(ThreeWayReport { point_count: pc, operator: op, formula: fm, pairwise, compared_at, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::make_field_context;

    fn three_term() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1"), (vec![1], vec![-1], "1"), (vec![-1], vec![0], "1")])
            .unwrap()
    }

    #[test]
    fn g00_trivial_families() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let lin = LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1")]).unwrap();
        let kl = LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap();
        for fam in [lin, kl] {
            let g = g00_series(&fam, 20, &ctx);
            assert_eq!(g.len(), 1);
            assert!(ctx.is_zero(&ctx.sub(&g.coeff(&ctx, &vec![0; fam.terms.len()]), &ctx.one())));
        }
    }

    #[test]
    fn g00_three_term_first_relation() {
        let ctx = make_field_context(3, 1, 6).unwrap();
        let g = g00_series(&three_term(), 8, &ctx);
        assert_eq!(g.coeffs.keys().cloned().collect::<Vec<_>>(), vec![vec![0, 0, 0], vec![1, 1, 2], vec![2, 2, 4]]);
        let want = ctx.div_int(&ctx.pi_pow(4), 2).unwrap();
        assert_eq!(ctx.agreement(&g.coeff(&ctx, &[1, 1, 2]), &want), ctx.prec_pi());
    }

    #[test]
    fn ratio_times_denominator_is_numerator() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let fam = three_term();
        let g = g00_series(&fam, 48, &ctx);
        let gr = g_ratio(&fam, 48, &ctx).unwrap();
        let den = g.dilate(3);
        for (k, c) in &g.coeffs {
            let mut acc = ctx.zero();
            for (j, d) in &den.coeffs {
                if j.iter().zip(k).all(|(a, b)| a <= b) {
                    let rest: Vec<u32> = k.iter().zip(j).map(|(a, b)| a - b).collect();
                    acc = ctx.add(&acc, &ctx.mul(d, &gr.coeff(&ctx, &rest)));
                }
            }
            assert_eq!(ctx.agreement(&acc, c), ctx.prec_pi(), "{k:?}");
        }
    }

    #[test]
    fn pi_factorials_match() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let t = pi_factorial_table(&ctx, 30);
        for (i, x) in t.iter().enumerate() {
            assert_eq!(ctx.agreement(x, &ctx.pi_pow_over_factorial(i as u64)), ctx.prec_pi());
        }
    }

    fn kloosterman() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap()
    }

    fn linear() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1")]).unwrap()
    }

    #[test]
    fn formula_trivial_and_kloosterman() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        for fam in [linear(), kloosterman()] {
            for k in [KappaExponent::plain(3, 2), KappaExponent::from_digits(3, &[1, 1, 1]).unwrap()] {
                let f = formula_eval(&fam, &k, &ctx).unwrap();
                assert_eq!(ctx.agreement(&f.result.element, &ctx.one()), ctx.prec_pi());
                assert_eq!(f.result.certified_prec, ctx.prec_pi());
            }
        }
    }

    #[test]
    fn l_unit_of_linear_family() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let fam = linear();
        let roots = fiber_roots(&fam, 4, &ctx).unwrap();
        let l = assemble_l_unit(&ctx, &roots, &KappaExponent::plain(3, 1), 4).unwrap();
        // (1 - T)/(1 - 3T) = 1 + 2T + 6T^2 + 18T^3 + 54T^4
        for (c, want) in l.series.iter().zip([1, 2, 6, 18, 54]) {
            assert_eq!(ctx.agreement(c, &ctx.from_int(want)), ctx.prec_pi());
        }
        for (m, x) in l.moments.iter().enumerate() {
            assert_eq!(ctx.agreement(x, &ctx.from_int(3i64.pow(m as u32 + 1) - 1)), ctx.prec_pi());
        }
        let r = extract_unit_root_of_lunit(&ctx, &l).unwrap();
        assert_eq!(r.e0, -1);
        assert!(ctx.agreement(&r.result.element, &ctx.one()) >= r.result.certified_prec);
    }

    #[test]
    fn constant_fiber_roots_give_their_power() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let fam = linear();
        let points = enumerate_closed_points(&fam, 6).unwrap();
        let c = ctx.add(&ctx.one(), &ctx.pi_pow(2));
        let roots = FiberRoots { roots: vec![c; points.len()], points, certified_prec: ctx.prec_pi() };
        let k = KappaExponent::plain(3, 2);
        let l = assemble_l_unit(&ctx, &roots, &k, 6).unwrap();
        assert_eq!(l.route_agreement, ctx.prec_pi());
        let r = extract_unit_root_of_lunit(&ctx, &l).unwrap();
        assert!(r.result.certified_prec >= 4);
        assert!(ctx.agreement(&r.result.element, &ctx.pow(&c, 2)) >= r.result.certified_prec);
    }

    #[test]
    fn eta_of_linear_family_is_one() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let eta = eta_series(&linear(), 3, 3, &ctx).unwrap();
        assert_eq!(eta.terms.len(), 1);
    }

    #[test]
    fn three_term_eigenvector_kappa_one() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let fam = three_term();
        let k = KappaExponent::plain(3, 1);
        let f = formula_eval(&fam, &k, &ctx).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 2, 2), &ctx).unwrap();
        let eta = eta_series(&fam, 2, 2, &ctx).unwrap();
        assert!(eta.terms.iter().any(|(s, v, _)| s == &vec![-1] && v == &vec![0]));
        let r = eigenvector_check(&sp, &eta, &k, &f.result.element, 2).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn operator_matches_formula_three_term() {
        let ctx = make_field_context(3, 1, 3).unwrap();
        let fam = three_term();
        let k = KappaExponent::plain(3, 2);
        let op = operator_unit_root(&fam, &k, SymTrunc::new(2, 2, 2), &ctx).unwrap();
        let f = formula_eval(&fam, &k, &ctx).unwrap();
        assert!(op.certified_prec >= 4);
        assert!(ctx.agreement(&op.element, &f.result.element) >= op.certified_prec.min(f.result.certified_prec));
    }
}
