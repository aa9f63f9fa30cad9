//! Subcommand bodies. Each returns a JSON report and whether every
//! certificate in it passed.

use anyhow::Result;
use serde::Serialize;
use serde_json::{json, Value};

use unitroot::counting::{enumerate_closed_points, exp_sum, l_series, rational_reconstruct, ClosedPoint, RationalL};
use unitroot::error::Error as CoreError;
use unitroot::family::LaurentFamily;
use unitroot::ffield::FiniteField;
use unitroot::fiber::{default_dx, fiber_context, fiber_unit_root_from_counts, fiber_unit_root_padic, fredholm_stable, verify_trace_formula};
use unitroot::padic::{make_field_context, EisensteinElement, FieldContext, KappaExponent};
use unitroot::pipeline::{
    assemble_l_unit, eigenvector_check, eta_series, extract_unit_root_of_lunit, fiber_roots, formula_eval, three_way_compare,
};
use unitroot::sympow::{SymPower, SymTrunc};

use crate::config::{FamilyConfig, Params};

pub struct Outcome {
    pub body: Value,
    pub passed: bool,
    /// Name of the first failing certificate.
    pub first_failure: Option<String>,
}

/// Collects named pass/fail certificates in order.
#[derive(Default)]
struct Checks {
    list: Vec<(String, bool)>,
}

impl Checks {
    fn add(&mut self, name: impl Into<String>, ok: bool) {
        self.list.push((name.into(), ok));
    }

    fn finish(self, body: Value) -> Outcome {
        let first_failure = self.list.iter().find(|(_, ok)| !ok).map(|(n, _)| n.clone());
        let summary: Vec<Value> = self.list.iter().map(|(n, ok)| json!({"check": n, "passed": ok})).collect();
        let mut body = body;
        if let Value::Object(m) = &mut body {
            m.insert("certificates".into(), Value::Array(summary));
        }
        Outcome { body, passed: first_failure.is_none(), first_failure }
    }
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn padic(ctx: &FieldContext, x: &EisensteinElement) -> Value {
    to_json(&ctx.serialize(x))
}

fn base_context(fam: &LaurentFamily, params: &Params) -> Result<FieldContext> {
    Ok(make_field_context(fam.p, fam.a, params.precision)?)
}

fn trunc(params: &Params) -> SymTrunc {
    SymTrunc::new(params.t_max, params.d_x, params.d_lambda)
}

fn field_available(fam: &LaurentFamily, degree: usize) -> bool {
    FiniteField::get(fam.p, fam.a * degree).is_ok()
}

fn selected_points(cfg: &FamilyConfig, fam: &LaurentFamily, params: &Params) -> Result<Vec<ClosedPoint>> {
    Ok(match &cfg.lambda {
        Some(logs) => vec![ClosedPoint::new(cfg.lambda_degree.unwrap_or(1), logs.clone())],
        None => enumerate_closed_points(fam, params.d_max)?,
    })
}

pub fn count(cfg: &FamilyConfig, params: &Params) -> Result<Outcome> {
    let fam = cfg.family()?;
    let mut checks = Checks::default();
    let mut fibers = Vec::new();
    for pt in selected_points(cfg, &fam, params)? {
        let d = pt.degree;
        let mut sums = Vec::new();
        for m in 1..=params.k {
            if !field_available(&fam, d * m) {
                break;
            }
            sums.push(to_json(&exp_sum(&fam, &pt, m)?));
        }
        let mut l_function = json!({"skipped": "extension field too large to enumerate"});
        for m_max in [4usize, 6, 8, 10] {
            if !field_available(&fam, d * m_max) {
                break;
            }
            match rational_reconstruct(&l_series(&fam, &pt, m_max)?, fam.n) {
                Ok(rl) => {
                    l_function = json!({
                        "numerator": rl.numerator,
                        "denominator": rl.denominator,
                        "inverted": rl.inverted,
                        "verified_terms": rl.verified_len,
                        "display": format!("({}) / ({})", RationalL::display_poly(&rl.numerator), RationalL::display_poly(&rl.denominator)),
                    });
                    break;
                }
                Err(CoreError::Unstable { order, required }) => {
                    l_function = json!({"skipped": "too few terms", "order": order, "terms_needed": required, "terms": m_max});
                }
                Err(e) => {
                    checks.add(format!("l-function {}", pt.orbit_id), false);
                    l_function = json!({"error": e.to_string()});
                    break;
                }
            }
        }
        fibers.push(json!({
            "orbit_id": pt.orbit_id,
            "degree": d,
            "logs": pt.logs,
            "exp_sums": sums,
            "l_function": l_function,
        }));
    }
    Ok(checks.finish(json!({"fibers": fibers})))
}

pub fn fiber(cfg: &FamilyConfig, params: &Params) -> Result<Outcome> {
    let fam = cfg.family()?;
    let mut checks = Checks::default();
    let mut fibers = Vec::new();
    for pt in selected_points(cfg, &fam, params)? {
        let ctx = fiber_context(&fam, &pt, params.precision)?;
        let dx = default_dx(&fam, &ctx);
        let root = fiber_unit_root_padic(&fam, &pt, dx, &ctx)?;
        let (fred, fred_stable) = fredholm_stable(&fam, &pt, dx, params.k, &ctx)?;
        let trace = if field_available(&fam, pt.degree * params.k) {
            let rep = verify_trace_formula(&fam, &pt, params.k, dx, ctx.prec_pi(), &ctx)?;
            checks.add(format!("trace formula {}", pt.orbit_id), rep.passed);
            to_json(&rep)
        } else {
            Value::Null
        };
        let from_counts = fiber_unit_root_from_counts(&fam, &pt, 6, &ctx).ok().flatten();
        let counts_agreement = from_counts.as_ref().map(|x| ctx.agreement(x, &root.value));
        let cert = root.certified_prec.min(root.hensel_agreement).min(root.doubling_agreement);
        if let Some(a) = counts_agreement {
            checks.add(format!("unit root routes {}", pt.orbit_id), a >= cert);
        }
        checks.add(format!("unit root certified {}", pt.orbit_id), cert >= 1);
        fibers.push(json!({
            "orbit_id": pt.orbit_id,
            "degree": pt.degree,
            "d_x": dx,
            "unit_root": padic(&ctx, &root.value),
            "certified_prec": cert,
            "hensel_agreement": root.hensel_agreement,
            "doubling_agreement": root.doubling_agreement,
            "unit_root_from_counts": from_counts.map(|x| padic(&ctx, &x)),
            "counts_agreement": counts_agreement,
            "fredholm": fred.coeffs.iter().map(|c| padic(&ctx, c)).collect::<Vec<_>>(),
            "fredholm_doubling_agreement": fred_stable,
            "trace_formula": trace,
        }));
    }
    Ok(checks.finish(json!({"fibers": fibers})))
}

pub fn lunit(cfg: &FamilyConfig, params: &Params) -> Result<Outcome> {
    let fam = cfg.family()?;
    let kappa = cfg.kappa()?;
    let ctx = base_context(&fam, params)?;
    let roots = fiber_roots(&fam, params.d_max, &ctx)?;
    let l = assemble_l_unit(&ctx, &roots, &kappa, params.d_max)?;
    let mut checks = Checks::default();
    checks.add("assembly routes agree", l.route_agreement >= l.fiber_prec.min(ctx.prec_pi()));
    let unit_root = match extract_unit_root_of_lunit(&ctx, &l) {
        Ok(r) => {
            checks.add("unit root stabilized", r.result.certified_prec >= 1);
            to_json(&r)
        }
        Err(e) => {
            checks.add("unit root stabilized", false);
            json!({"error": "insufficient stabilization", "detail": e.to_string()})
        }
    };
    Ok(checks.finish(json!({
        "fibers": roots.points.len(),
        "fiber_certified_prec": roots.certified_prec,
        "series": l.series.iter().map(|c| padic(&ctx, c)).collect::<Vec<_>>(),
        "moments": l.moments.iter().map(|c| padic(&ctx, c)).collect::<Vec<_>>(),
        "route_agreement": l.route_agreement,
        "unit_root": unit_root,
    })))
}

pub fn formula(cfg: &FamilyConfig, params: &Params) -> Result<Outcome> {
    let fam = cfg.family()?;
    let ctx = base_context(&fam, params)?;
    let f = formula_eval(&fam, &cfg.kappa()?, &ctx)?;
    let mut checks = Checks::default();
    checks.add("sigma invariance", f.sigma_invariant);
    checks.add("degree doubling", f.result.certified_prec >= 1);
    Ok(checks.finish(to_json(&f)))
}

pub fn sympower(cfg: &FamilyConfig, params: &Params) -> Result<Outcome> {
    let fam = cfg.family()?;
    let kappa = cfg.kappa()?;
    let ctx = base_context(&fam, params)?;
    let sp = SymPower::new(&fam, trunc(params), &ctx)?;
    let mut checks = Checks::default();
    let body = sympower_reports(&sp, &kappa, params, &mut checks)?;
    Ok(checks.finish(body))
}

fn sympower_reports(sp: &SymPower, kappa: &KappaExponent, params: &Params, checks: &mut Checks) -> Result<Value> {
    let ctx = &sp.ctx;
    let two_p = 2 * ctx.e as u32;
    let beta = sp.beta_matrix(kappa)?;
    let dual = sp.dual_beta_matrix(kappa)?;
    let fred = unitroot::linalg::fredholm_coeffs(ctx, &beta.mat, params.k)?;
    let unit = sp.unit_root(&beta);
    checks.add("unique unit eigenvalue", unit.is_ok());
    let profile = sp.entry_profile(&beta);
    let dual_profile = sp.entry_profile(&dual);
    checks.add("entry bounds", profile.passed);
    checks.add("dual entry bounds", dual_profile.passed);
    let duality = sp.det_duality(kappa, None, params.k, two_p)?;
    checks.add("determinant duality", duality.passed);
    let mut finite = Vec::new();
    for k in 1..=(params.t_max.min(2) as u64).min(ctx.p - 1) {
        let pairing = sp.pairing_check(k)?;
        let d = sp.det_duality(kappa, Some(k), params.k, two_p)?;
        checks.add(format!("pairing k={k}"), pairing.passed);
        checks.add(format!("determinant duality k={k}"), d.passed);
        finite.push(json!({"k": k, "pairing": pairing, "duality": d}));
    }
    let convergence = sp.convergence_check(kappa, 3, params.k, two_p)?;
    checks.add("finite-k convergence", convergence.passed);
    let trace = sp.trace_identity(kappa, ctx.prec_pi())?;
    checks.add("trace identity", trace.passed);
    Ok(json!({
        "dimension": beta.basis.len(),
        "truncation": sp.trunc,
        "valuation_histogram": beta.valuation_histogram(ctx),
        "fredholm": fred.iter().map(|c| padic(ctx, c)).collect::<Vec<_>>(),
        "unit_root": match &unit {
            Ok(u) => json!({"value": padic(ctx, &u.value), "certified_prec": u.certified_prec, "unit_count": u.unit_count}),
            Err(e) => json!({"error": e.to_string()}),
        },
        "entry_profile": profile,
        "dual_entry_profile": dual_profile,
        "duality": duality,
        "finite_k": finite,
        "convergence": convergence,
        "trace_identity": trace,
    }))
}

/// Smallest precision the three routes must share: one π-digit beyond the
/// 1-unit congruence.
const MIN_SHARED_PREC: u32 = 2;

pub fn verify(cfg: &FamilyConfig, params: &Params) -> Result<Outcome> {
    let fam = cfg.family()?;
    let kappa = cfg.kappa()?;
    let ctx = base_context(&fam, params)?;
    let mut checks = Checks::default();

    let three = match three_way_compare(&fam, &kappa, trunc(params), params.d_max, &ctx) {
        Ok(r) => {
            checks.add("three-way agreement", r.passed && r.compared_at >= MIN_SHARED_PREC);
            to_json(&r)
        }
        Err(e) => {
            checks.add("three-way agreement", false);
            json!({"error": "insufficient stabilization", "detail": e.to_string()})
        }
    };

    let mut traces = Vec::new();
    for pt in enumerate_closed_points(&fam, 1)? {
        if !field_available(&fam, params.k) {
            break;
        }
        let fctx = fiber_context(&fam, &pt, params.precision)?;
        let rep = verify_trace_formula(&fam, &pt, params.k, default_dx(&fam, &fctx), fctx.prec_pi(), &fctx)?;
        checks.add(format!("trace formula {}", pt.orbit_id), rep.passed);
        traces.push(to_json(&rep));
    }

    let small = SymTrunc::new(params.t_max.min(2), params.d_x, params.d_lambda);
    let sp = SymPower::new(&fam, small, &ctx)?;
    let sym = sympower_reports(&sp, &kappa, params, &mut checks)?;

    let f = formula_eval(&fam, &kappa, &ctx)?;
    let eta = eta_series(&fam, params.d_lambda, params.d_x, &ctx)?;
    let eig = eigenvector_check(&sp, &eta, &kappa, &f.result.element, ctx.e as u32)?;
    checks.add("eigenvector identity", eig.passed);

    Ok(checks.finish(json!({
        "three_way": three,
        "fiber_trace_formula": traces,
        "sympower": sym,
        "eigenvector": eig,
    })))
}
