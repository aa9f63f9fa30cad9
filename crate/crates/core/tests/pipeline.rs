use unitroot::family::LaurentFamily;
use unitroot::fiber::{lambda_cone, x_cone};
use unitroot::padic::{make_field_context, KappaExponent};
use unitroot::pipeline::{
    assemble_l_unit, fiber_roots, formula_eval, g00_series, g_ratio, j_ratio, lineality_points, teichmuller_point,
};
use unitroot::sympow::{SymPower, SymTrunc};

fn kloosterman() -> LaurentFamily {
    LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap()
}

fn three_term(a: usize, c: &str) -> LaurentFamily {
    LaurentFamily::from_spec(3, a, &[(vec![1], vec![1], "1"), (vec![1], vec![-1], c), (vec![-1], vec![0], "1")]).unwrap()
}

#[test]
fn kloosterman_g00_is_one() {
    let ctx = make_field_context(3, 1, 3).unwrap();
    let g = g00_series(&kloosterman(), 40, &ctx);
    assert_eq!(g.len(), 1);
    let y = teichmuller_point(&kloosterman(), &ctx);
    assert_eq!(g.evaluate(&ctx, &y), ctx.one());
}

#[test]
fn ratio_series_are_integral() {
    let ctx = make_field_context(3, 1, 3).unwrap();
    let fam = three_term(1, "1");
    g_ratio(&fam, 24, &ctx).unwrap();
    let ls = lineality_points(&lambda_cone(&fam), 2);
    let xs = lineality_points(&x_cone(&fam), 2);
    for s in &ls {
        for v in &xs {
            let t: Vec<i64> = s.iter().chain(v).copied().collect();
            j_ratio(&fam, &t, 16, &ctx).unwrap();
        }
    }
}

#[test]
fn prime_field_coefficients_telescope() {
    let ctx = make_field_context(3, 2, 3).unwrap();
    let fam = three_term(2, "1");
    let f = formula_eval(&fam, &KappaExponent::plain(3, 1), &ctx).unwrap();
    let g = &f.factors[0].element;
    assert_eq!(ctx.agreement(&f.factors[1].element, g), ctx.prec_pi());
    let value = ctx.deserialize(&f.result.value).unwrap();
    assert!(ctx.agreement(&value, &ctx.mul(g, g)) >= f.result.certified_prec);
}

#[test]
fn formula_is_sigma_invariant() {
    let ctx = make_field_context(3, 2, 3).unwrap();
    let f = formula_eval(&three_term(2, "g"), &KappaExponent::plain(3, 2), &ctx).unwrap();
    assert!(f.sigma_invariant);
    assert!(f.result.certified_prec >= 4);
}

#[test]
fn assembly_routes_agree() {
    let ctx = make_field_context(3, 1, 3).unwrap();
    let fam = three_term(1, "1");
    let roots = fiber_roots(&fam, 4, &ctx).unwrap();
    for k in [1u64, 2, 5] {
        let l = assemble_l_unit(&ctx, &roots, &KappaExponent::plain(3, k), 4).unwrap();
        assert!(l.route_agreement >= l.fiber_prec.min(ctx.prec_pi()), "kappa {k}");
    }
}

#[test]
fn operator_entries_respect_bounds() {
    let ctx = make_field_context(3, 1, 3).unwrap();
    let sp = SymPower::new(&kloosterman(), SymTrunc::new(2, 2, 2), &ctx).unwrap();
    let kappa = KappaExponent::plain(3, 1);
    assert!(sp.entry_profile(&sp.beta_matrix(&kappa).unwrap()).passed);
    assert!(sp.entry_profile(&sp.dual_beta_matrix(&kappa).unwrap()).passed);
}
