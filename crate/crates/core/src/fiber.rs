//! Fiber Frobenius operators, Fredholm determinants and the fiber unit root.

use num_rational::Ratio;
use serde::Serialize;

use crate::cone::{splitting_h, valuation_check, Cone, ConeSeries, LiftedTerm, ValuationProfile};
use crate::counting::{fiber_unit_root_exact, l_series, rational_reconstruct, tower_logs, ClosedPoint};
use crate::cyclo::CyclotomicInt;
use crate::error::{Error, Result};
use crate::family::{weight, LaurentFamily};
use crate::ffield::FiniteField;
use crate::linalg::{berkowitz, delta_op, fredholm_coeffs, power_method, series_inv, Mat};
use crate::padic::{make_field_context, EisensteinElement, FieldContext};

#[derive(Clone, Debug, Serialize)]
pub struct OperatorMeta {
    pub p: u64,
    pub q: u64,
    pub level: usize,
    pub fiber_id: String,
}

/// Finite truncation of a Frobenius operator on monomials `X^u`.
#[derive(Clone, Debug)]
pub struct TruncOperator {
    pub basis: Vec<Vec<i64>>,
    /// Entry `(v, u)` is the coefficient of `X^v` in the image of `X^u`.
    pub mat: Mat,
    /// Lower bound (p-units) for the scaled size of every omitted entry.
    pub tail_bound: Ratio<i64>,
    pub meta: OperatorMeta,
}

/// Lifted coefficients `â λ̂^r` of the fiber `f(λ, X)`, in the degree-`ad`
/// context.
pub fn fiber_terms(fam: &LaurentFamily, lambda: &ClosedPoint, ctx: &FieldContext) -> Result<Vec<LiftedTerm>> {
    fiber_terms_at(fam, lambda.degree, &lambda.logs, ctx)
}

pub fn fiber_terms_at(fam: &LaurentFamily, d: usize, logs: &[u64], ctx: &FieldContext) -> Result<Vec<LiftedTerm>> {
    if ctx.a != fam.a * d {
        return Err(Error::InvalidParameter("fiber context has the wrong degree".into()));
    }
    let (fd, lq, _) = tower_logs(fam, d, 1)?;
    let order = fd.order() as i128;
    let coeff_logs = fam.coeff_logs();
    fam.terms
        .iter()
        .zip(coeff_logs)
        .map(|(t, cl)| {
            let mut l = cl as i128 * lq as i128;
            for (r, ll) in t.r.iter().zip(logs) {
                l += *r as i128 * *ll as i128;
            }
            let e = fd.exp(l.rem_euclid(order) as u64);
            let w = ctx.teichmuller(&fd.digits(e));
            Ok(LiftedTerm { coeff: ctx.from_unram(&w), r: vec![], u: t.u.clone() })
        })
        .collect()
}

pub fn x_cone(fam: &LaurentFamily) -> Cone {
    Cone::new(fam.n, fam.x_supports())
}

pub fn lambda_cone(fam: &LaurentFamily) -> Cone {
    Cone::new(fam.s, fam.lambda_supports())
}

/// Slope `(p-1)/(p^2 ω)` of the level-one kernel, in p-units.
pub fn kernel_slope(fam: &LaurentFamily) -> Ratio<i64> {
    let p = fam.p as i64;
    let omega = (fam.omega1() + fam.omega2()).max(1);
    Ratio::new(p - 1, p * p * omega)
}

/// Matrix of `g ↦ ψ(G g)` on `basis`, entry `(v, u)` = coefficient of `X^(pv-u)`.
pub fn psi_matrix(ctx: &FieldContext, g: &ConeSeries, basis: &[Vec<i64>], p_power: i64) -> Mat {
    let n = basis.len();
    let mut m = Mat::zeros(ctx, n, n);
    for (i, v) in basis.iter().enumerate() {
        for (j, u) in basis.iter().enumerate() {
            let w: Vec<i64> = v.iter().zip(u).map(|(a, b)| p_power * a - b).collect();
            if let Some(c) = g.coeffs.get(&w) {
                m.set(i, j, *c);
            }
        }
    }
    m
}

/// `α_{ad,λ}` as the product `A_{ad-1} ··· A_0` of level-one operators,
/// `A_i = σ^i(A_0)`.
pub fn fiber_frobenius(fam: &LaurentFamily, lambda: &ClosedPoint, d_x: i64, ctx: &FieldContext) -> Result<TruncOperator> {
    let terms = fiber_terms(fam, lambda, ctx)?;
    let basis = x_cone(fam).lattice_points(d_x);
    let p = fam.p as i64;
    let g = splitting_h(ctx, &terms, 0, fam.n, 1, 0, (p + 1) * d_x);
    let a0 = psi_matrix(ctx, &g, &basis, p);
    let levels = ctx.a;
    let mut mat = a0.clone();
    let mut ai = a0;
    for _ in 1..levels {
        ai = ai.map(|x| ctx.sigma(x));
        mat = ai.mul(ctx, &mat);
    }
    let slope = kernel_slope(fam);
    Ok(TruncOperator {
        basis,
        mat,
        tail_bound: slope * Ratio::from_integer((p - 1) * (d_x + 1)),
        meta: OperatorMeta { p: fam.p, q: fam.q(), level: levels, fiber_id: lambda.orbit_id.clone() },
    })
}

/// `ψ^(ad) ∘ H_(ad)` built from the single level-`ad` kernel; used to test
/// the product construction.
pub fn fiber_frobenius_direct(fam: &LaurentFamily, lambda: &ClosedPoint, d_x: i64, ctx: &FieldContext) -> Result<Mat> {
    let terms = fiber_terms(fam, lambda, ctx)?;
    let basis = x_cone(fam).lattice_points(d_x);
    let levels = ctx.a as u32;
    let pa = fam.p.pow(levels) as i64;
    let h = splitting_h(ctx, &terms, 0, fam.n, levels, 0, (pa + 1) * d_x);
    Ok(psi_matrix(ctx, &h, &basis, pa))
}

/// Entry valuations of the level-one matrix against the kernel slope:
/// `ord_p A_0[v,u] ≥ ε |pv - u|`.
pub fn entry_valuation_check(fam: &LaurentFamily, lambda: &ClosedPoint, d_x: i64, ctx: &FieldContext) -> Result<bool> {
    let terms = fiber_terms(fam, lambda, ctx)?;
    let p = fam.p as i64;
    let g = splitting_h(ctx, &terms, 0, fam.n, 1, 0, (p + 1) * d_x);
    let profile = ValuationProfile::uniform(kernel_slope(fam));
    Ok(valuation_check(ctx, &g, &profile).passed())
}

/// Characteristic series `det(1 - M T)` with per-coefficient precision.
#[derive(Clone, Debug)]
pub struct FredholmPoly {
    pub coeffs: Vec<EisensteinElement>,
}

pub fn fredholm_det(ctx: &FieldContext, op: &TruncOperator, k_max: usize) -> Result<FredholmPoly> {
    Ok(FredholmPoly { coeffs: fredholm_coeffs(ctx, &op.mat, k_max)? })
}

/// Fredholm coefficients certified by doubling the truncation: returns the
/// polynomial at `d_x` and the number of π-digits unchanged at `2 d_x`.
pub fn fredholm_stable(
    fam: &LaurentFamily,
    lambda: &ClosedPoint,
    d_x: i64,
    k_max: usize,
    ctx: &FieldContext,
) -> Result<(FredholmPoly, u32)> {
    let a = fredholm_det(ctx, &fiber_frobenius(fam, lambda, d_x, ctx)?, k_max)?;
    let b = fredholm_det(ctx, &fiber_frobenius(fam, lambda, 2 * d_x, ctx)?, k_max)?;
    let agree = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| ctx.agreement(x, y)).min().unwrap_or(0);
    Ok((a, agree))
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceFormulaReport {
    pub fiber: String,
    /// ord_π of (exact − Fredholm route) per coefficient, capped at precision.
    pub agreement: Vec<u32>,
    pub required: u32,
    pub passed: bool,
}

/// Exact `L^((-1)^(n+1))` coefficients `0..=K` embedded in `ctx`.
pub fn exact_oriented_series(
    fam: &LaurentFamily,
    lambda: &ClosedPoint,
    k_max: usize,
    ctx: &FieldContext,
) -> Result<Vec<EisensteinElement>> {
    let series = l_series(fam, lambda, k_max)?;
    let emb: Vec<EisensteinElement> = series.iter().map(|c| ctx.zeta_p_embed(c)).collect::<Result<_>>()?;
    if fam.n % 2 == 1 {
        Ok(emb)
    } else {
        series_inv(ctx, &emb, k_max + 1)
    }
}

/// Compares the point-count L-function with `det(1 - αT)^(δ^n)` mod
/// `(π^required, T^(K+1))`.
pub fn verify_trace_formula(
    fam: &LaurentFamily,
    lambda: &ClosedPoint,
    k_max: usize,
    d_x: i64,
    required: u32,
    ctx: &FieldContext,
) -> Result<TraceFormulaReport> {
    let exact = exact_oriented_series(fam, lambda, k_max, ctx)?;
    let op = fiber_frobenius(fam, lambda, d_x, ctx)?;
    let det = berkowitz(ctx, &op.mat);
    let qd = ctx.q();
    let padic = delta_op(ctx, &det, qd, fam.n, k_max + 1)?;
    let agreement: Vec<u32> = exact.iter().zip(&padic).map(|(x, y)| ctx.agreement(x, y)).collect();
    let passed = agreement.iter().all(|&a| a >= required);
    Ok(TraceFormulaReport { fiber: lambda.orbit_id.clone(), agreement, required, passed })
}

#[derive(Clone, Debug)]
pub struct FiberUnitRoot {
    /// π_0(λ) in the fiber context.
    pub value: EisensteinElement,
    pub certified_prec: u32,
    /// Agreement with the Hensel root of the truncated Fredholm polynomial.
    pub hensel_agreement: u32,
    /// Number of leading π-digits stable under doubling the truncation.
    pub doubling_agreement: u32,
    pub trail: Vec<(usize, u32)>,
}

/// Default X-truncation: enough decay for the working precision.
pub fn default_dx(fam: &LaurentFamily, ctx: &FieldContext) -> i64 {
    let p = fam.p as i64;
    let omega = (fam.omega1() + fam.omega2()).max(1);
    let n = ctx.n as i64;
    // N p^2 ω / (p-1)^2, kept modest
    ((n * p * p * omega + (p - 1) * (p - 1) - 1) / ((p - 1) * (p - 1))).clamp(2, 24)
}

/// π_0(λ) by the trace power method, cross-checked by Hensel lifting and by
/// doubling the truncation.
pub fn fiber_unit_root_padic(fam: &LaurentFamily, lambda: &ClosedPoint, d_x: i64, ctx: &FieldContext) -> Result<FiberUnitRoot> {
    let op = fiber_frobenius(fam, lambda, d_x, ctx)?;
    let pm = power_method(ctx, &op.mat, 12)?;
    let charpoly = if op.mat.rows <= 40 { berkowitz(ctx, &op.mat) } else { fredholm_coeffs(ctx, &op.mat, 4)? };
    let hensel = crate::counting::unit_reciprocal_root(ctx, &charpoly)?;
    let op2 = fiber_frobenius(fam, lambda, 2 * d_x, ctx)?;
    let pm2 = power_method(ctx, &op2.mat, 12)?;
    Ok(FiberUnitRoot {
        value: pm.value,
        certified_prec: pm.certified_prec,
        hensel_agreement: ctx.agreement(&pm.value, &hensel),
        doubling_agreement: ctx.agreement(&pm.value, &pm2.value),
        trail: pm.trail,
    })
}

/// Fiber context for a closed point.
pub fn fiber_context(fam: &LaurentFamily, lambda: &ClosedPoint, n: u32) -> Result<FieldContext> {
    make_field_context(fam.p, fam.a * lambda.degree, n)
}

/// π_0(λ) from exact point counts; `None` when the needed fields are too large.
pub fn fiber_unit_root_from_counts(
    fam: &LaurentFamily,
    lambda: &ClosedPoint,
    m_max: usize,
    ctx: &FieldContext,
) -> Result<Option<EisensteinElement>> {
    let biggest = fam.a * lambda.degree * m_max;
    if FiniteField::get(fam.p, biggest).is_err() {
        return Ok(None);
    }
    let series = l_series(fam, lambda, m_max)?;
    let rl = rational_reconstruct(&series, fam.n)?;
    Ok(Some(fiber_unit_root_exact(&rl, ctx)?.value))
}

/// Sum of the weights `|u|` of the basis, handy for reporting.
pub fn basis_weight(op: &TruncOperator) -> i64 {
    op.basis.iter().map(|u| weight(u)).sum()
}

/// Embeds an exact cyclotomic polynomial.
pub fn embed_poly(ctx: &FieldContext, poly: &[CyclotomicInt]) -> Result<Vec<EisensteinElement>> {
    poly.iter().map(|c| ctx.zeta_p_embed(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kloosterman() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap()
    }

    #[test]
    fn linear_family_operator_shape() {
        let fam = LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1")]).unwrap();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let pt = ClosedPoint::new(1, vec![0]);
        let op = fiber_frobenius(&fam, &pt, 2, &ctx).unwrap();
        assert_eq!(op.basis, vec![vec![0], vec![1], vec![2]]);
        assert!(ctx.is_one_unit(op.mat.get(0, 0)));
        for j in 1..3 {
            for i in 0..3 {
                assert!(ctx.ord_pi(op.mat.get(i, j)) >= 1);
            }
        }
    }

    #[test]
    fn kloosterman_trace_formula() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        for l in [0u64, 1] {
            let pt = ClosedPoint::new(1, vec![l]);
            let r = verify_trace_formula(&fam, &pt, 2, 8, ctx.prec_pi(), &ctx).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn kloosterman_unit_root() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let pt = ClosedPoint::new(1, vec![0]);
        let r = fiber_unit_root_padic(&fam, &pt, 8, &ctx).unwrap();
        assert!(ctx.agreement(&r.value, &ctx.from_int(7)) >= 4);
        assert!(r.hensel_agreement >= 4);
    }

    #[test]
    fn product_form_matches_direct_kernel() {
        let fam = LaurentFamily::from_spec(3, 2, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "g")]).unwrap();
        let ctx = make_field_context(3, 2, 3).unwrap();
        let pt = ClosedPoint::new(1, vec![3]);
        let prod = fiber_frobenius(&fam, &pt, 6, &ctx).unwrap();
        let direct = fiber_frobenius_direct(&fam, &pt, 6, &ctx).unwrap();
        let a = berkowitz(&ctx, &prod.mat);
        let b = berkowitz(&ctx, &direct);
        for k in 0..4 {
            assert!(ctx.agreement(&a[k], &b[k]) >= 4, "coefficient {k}");
        }
    }
}
