//! Acceptance run: one PASS/FAIL line per criterion.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use unitroot::counting::{enumerate_closed_points, exp_sum_at, l_series, rational_reconstruct, ClosedPoint};
use unitroot::cyclo::CyclotomicInt;
use unitroot::family::LaurentFamily;
use unitroot::ffield::FiniteField;
use unitroot::fiber::{default_dx, fiber_context, fiber_unit_root_from_counts, fiber_unit_root_padic, verify_trace_formula};
use unitroot::padic::{make_field_context, FieldContext, KappaExponent};
use unitroot::pipeline::{
    assemble_l_unit, eigenvector_check, eta_series, extract_unit_root_of_lunit, fiber_roots, formula_eval, g00_series,
    operator_unit_root, three_way_compare,
};
use unitroot::sympow::{SymPower, SymTrunc};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn kloosterman() -> LaurentFamily {
    LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap()
}

fn linear() -> LaurentFamily {
    LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1")]).unwrap()
}

fn three_term() -> LaurentFamily {
    LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1"), (vec![1], vec![-1], "1"), (vec![-1], vec![0], "1")]).unwrap()
}

fn f9_family() -> LaurentFamily {
    LaurentFamily::from_spec(3, 2, &[(vec![1], vec![1], "1"), (vec![1], vec![-1], "g"), (vec![-1], vec![0], "1")]).unwrap()
}

fn base(fam: &LaurentFamily) -> FieldContext {
    make_field_context(fam.p, fam.a, 3).unwrap()
}

/// Digits of precision that `mod p^k` amounts to.
fn mod_p_pow(ctx: &FieldContext, k: u32) -> u32 {
    k * ctx.e as u32
}

fn c1_theta() -> Check {
    let mut worst = Vec::new();
    for (p, n) in [(2u64, 14u32), (3, 12), (5, 9)] {
        let ctx = make_field_context(p, 1, n).map_err(err)?;
        let theta = ctx.theta_coeffs(50).map_err(err)?;
        let mut slack = u64::MAX;
        for (i, t) in theta.iter().enumerate() {
            let ord = ctx.ord_pi(t) as u64;
            // ord_p θ_i = ord / (p-1) ≥ (p-1) i / p^2
            let lhs = ord * p * p;
            let rhs = (p - 1) * (p - 1) * i as u64;
            ensure(lhs >= rhs, format!("p={p} i={i}: ord_pi {ord}"))?;
            if ord < ctx.prec_pi() as u64 {
                slack = slack.min(lhs - rhs);
            }
        }
        worst.push(format!("p={p} min slack {slack}/{}", p * p));
    }
    Ok(worst.join(", "))
}

fn c2_trace_formula() -> Check {
    let mut notes = Vec::new();
    let kl = kloosterman();
    for (fam, name) in [(&kl, "kloosterman"), (&linear(), "linear")] {
        for logs in [vec![0u64], vec![1]] {
            let pt = ClosedPoint::new(1, logs);
            let ctx = fiber_context(fam, &pt, 3).map_err(err)?;
            let rep = verify_trace_formula(fam, &pt, 2, default_dx(fam, &ctx), ctx.prec_pi(), &ctx).map_err(err)?;
            ensure(rep.passed, format!("{name} {}: agreement {:?}", pt.orbit_id, rep.agreement))?;
            notes.push(format!("{name} {} {:?}", pt.orbit_id, rep.agreement));
        }
    }
    let one = ClosedPoint::new(1, vec![0]);
    let rl = rational_reconstruct(&l_series(&kl, &one, 6).map_err(err)?, 1).map_err(err)?;
    let want: Vec<CyclotomicInt> = [1, -1, 3].iter().map(|&v| CyclotomicInt::from_int(3, v)).collect();
    ensure(rl.numerator == want && rl.denominator == vec![CyclotomicInt::from_int(3, 1)], "L(1) is not 1 - T + 3T^2")?;
    let ctx = fiber_context(&kl, &one, 3).map_err(err)?;
    let seven = ctx.from_int(7);
    let padic = fiber_unit_root_padic(&kl, &one, default_dx(&kl, &ctx), &ctx).map_err(err)?;
    let exact = fiber_unit_root_from_counts(&kl, &one, 6, &ctx).map_err(err)?.ok_or("counts unavailable")?;
    let (a, b) = (ctx.agreement(&padic.value, &seven), ctx.agreement(&exact, &seven));
    ensure(a >= mod_p_pow(&ctx, 2) && b >= mod_p_pow(&ctx, 2), format!("pi_0(1) vs 7: {a}, {b} digits"))?;
    notes.push(format!("pi_0(1) = 7 mod 9 ({a}/{b} digits)"));
    Ok(notes.join("; "))
}

fn c3_kloosterman() -> Check {
    let fam = kloosterman();
    let ctx = base(&fam);
    let need = mod_p_pow(&ctx, 2);
    let g = g00_series(&fam, 60, &ctx);
    ensure(g.len() == 1, "g_00 has nonconstant terms")?;
    let roots = fiber_roots(&fam, 6, &ctx).map_err(err)?;
    let kappas = [
        ("1", KappaExponent::plain(3, 1)),
        ("2", KappaExponent::plain(3, 2)),
        ("4", KappaExponent::plain(3, 4)),
        ("1+3+9", KappaExponent::from_digits(3, &[1, 1, 1]).map_err(err)?),
    ];
    let mut notes = Vec::new();
    for (name, kappa) in &kappas {
        let l = assemble_l_unit(&ctx, &roots, kappa, 6).map_err(err)?;
        let rho = extract_unit_root_of_lunit(&ctx, &l).map_err(err)?;
        let rv = rho.result.element;
        let ra = ctx.agreement(&rv, &ctx.one());
        ensure(
            rho.result.certified_prec >= need && ra >= need,
            format!("kappa {name}: rho certified {} agreement {ra}", rho.result.certified_prec),
        )?;
        let f = formula_eval(&fam, kappa, &ctx).map_err(err)?;
        ensure(f.result.element == ctx.one(), format!("kappa {name}: formula is not exactly 1"))?;
        let op = operator_unit_root(&fam, kappa, SymTrunc::new(3, 2, 2), &ctx).map_err(err)?;
        let oa = ctx.agreement(&op.element, &ctx.one());
        ensure(op.certified_prec >= need && oa >= need, format!("kappa {name}: operator certified {} agreement {oa}", op.certified_prec))?;
        notes.push(format!("kappa {name}: rho {}/{} e0 {} op {}/{}", ra, rho.result.certified_prec, rho.e0, oa, op.certified_prec));
    }
    Ok(notes.join("; "))
}

fn c4_three_way() -> Check {
    let mut notes = Vec::new();
    for (fam, d_max, kappa, name) in [
        (three_term(), 6usize, 1u64, "three-term kappa 1"),
        (three_term(), 6, 2, "three-term kappa 2"),
        (f9_family(), 4, 1, "F_9 kappa 1"),
    ] {
        let ctx = base(&fam);
        let r = three_way_compare(&fam, &KappaExponent::plain(3, kappa), SymTrunc::new(3, 2, 2), d_max, &ctx).map_err(err)?;
        ensure(
            r.passed && r.compared_at >= mod_p_pow(&ctx, 2),
            format!("{name}: pairwise {:?} compared at {}", r.pairwise, r.compared_at),
        )?;
        notes.push(format!("{name}: pairwise {:?} at {}", r.pairwise, r.compared_at));
    }
    Ok(notes.join("; "))
}

fn c5_convergence() -> Check {
    let mut notes = Vec::new();
    for (fam, name) in [(kloosterman(), "kloosterman"), (three_term(), "three-term")] {
        let ctx = base(&fam);
        let sp = SymPower::new(&fam, SymTrunc::new(2, 2, 2), &ctx).map_err(err)?;
        let kappa = KappaExponent::from_rational(3, -1, 2, 8).map_err(err)?;
        let r = sp.convergence_check(&kappa, 3, 2, mod_p_pow(&ctx, 2)).map_err(err)?;
        let steps: Vec<String> = r
            .steps
            .iter()
            .map(|s| format!("k={} diff {} rate {} det {}", s.k, s.min_difference.as_deref().unwrap_or("none"), s.rate, s.det_agreement))
            .collect();
        ensure(
            r.passed && r.nondecreasing && r.det_stable && r.steps.iter().all(|s| s.meets_rate),
            format!("{name}: {}", steps.join(", ")),
        )?;
        notes.push(format!("{name} kappa -1/2: {}", steps.join(", ")));
    }
    Ok(notes.join("; "))
}

fn c6_duality() -> Check {
    let mut notes = Vec::new();
    for (fam, name) in [(kloosterman(), "kloosterman"), (three_term(), "three-term")] {
        let ctx = base(&fam);
        let sp = SymPower::new(&fam, SymTrunc::new(2, 2, 2), &ctx).map_err(err)?;
        for k in 1..=2u64 {
            let pairing = sp.pairing_check(k).map_err(err)?;
            ensure(pairing.passed, format!("{name} k={k}: pairing agreement {}", pairing.min_agreement))?;
            let d = sp.det_duality(&KappaExponent::plain(3, 1), Some(k), 2, ctx.prec_pi()).map_err(err)?;
            ensure(d.passed, format!("{name} k={k}: determinant agreement {:?}", d.agreement))?;
            notes.push(format!("{name} k={k}: {} pairs, det {:?}", pairing.pairs, d.agreement));
        }
        for kappa in [KappaExponent::plain(3, 1), KappaExponent::from_rational(3, -1, 2, 8).map_err(err)?] {
            let d = sp.det_duality(&kappa, None, 2, mod_p_pow(&ctx, 2)).map_err(err)?;
            ensure(d.passed, format!("{name} kappa {}: determinant agreement {:?}", kappa.value(), d.agreement))?;
            notes.push(format!("{name} kappa {}: det {:?}", kappa.value(), d.agreement));
        }
    }
    Ok(notes.join("; "))
}

fn c7_trace_identity() -> Check {
    let mut notes = Vec::new();
    for (fam, name) in [(kloosterman(), "kloosterman"), (three_term(), "three-term")] {
        let ctx = base(&fam);
        let sp = SymPower::new(&fam, SymTrunc::new(3, 2, 2), &ctx).map_err(err)?;
        let r = sp.trace_identity(&KappaExponent::plain(3, 1), ctx.prec_pi()).map_err(err)?;
        ensure(r.passed, format!("{name}: agreement {}", r.agreement))?;
        notes.push(format!("{name}: {} digits", r.agreement));
    }
    Ok(notes.join("; "))
}

fn c8_eigenvector() -> Check {
    let mut notes = Vec::new();
    for (fam, kappa, name) in [
        (linear(), KappaExponent::plain(3, 1), "linear"),
        (kloosterman(), KappaExponent::plain(3, 1), "kloosterman"),
        (three_term(), KappaExponent::plain(3, 2), "three-term"),
        (f9_family(), KappaExponent::plain(3, 1), "F_9"),
    ] {
        let ctx = base(&fam);
        let sp = SymPower::new(&fam, SymTrunc::new(2, 2, 2), &ctx).map_err(err)?;
        let f = formula_eval(&fam, &kappa, &ctx).map_err(err)?;
        let eta = eta_series(&fam, 2, 2, &ctx).map_err(err)?;
        let r = eigenvector_check(&sp, &eta, &kappa, &f.result.element, mod_p_pow(&ctx, 1)).map_err(err)?;
        ensure(r.passed, format!("{name}: min agreement {} at {:?}", r.min_agreement, r.limiting))?;
        notes.push(format!("{name}: dim {} agreement {}", r.dim, r.min_agreement));
    }
    Ok(notes.join("; "))
}

fn c9_oracles() -> Check {
    // Teichmüller lifts over F_81
    let f = FiniteField::get(3, 4).map_err(err)?;
    let ctx = make_field_context(3, 4, 3).map_err(err)?;
    let lifts: Vec<_> = (0..f.order()).map(|l| ctx.teichmuller(&f.digits(f.exp(l)))).collect();
    for (l, w) in lifts.iter().enumerate() {
        ensure(ctx.unram_pow(w, ctx.q()) == *w, format!("omega(g^{l})^q differs"))?;
        ensure(ctx.frobenius_sigma(w) == lifts[(3 * l) % lifts.len()], format!("sigma(omega(g^{l}))"))?;
        let mut s = w.clone();
        for _ in 0..4 {
            s = ctx.frobenius_sigma(&s);
        }
        ensure(s == *w, format!("sigma^4(omega(g^{l}))"))?;
        for (m, v) in lifts.iter().enumerate().step_by(7) {
            ensure(ctx.unram_mul(w, v) == lifts[(l + m) % lifts.len()], format!("omega multiplicativity at {l},{m}"))?;
        }
    }
    // divisor sums of closed-point degrees
    for (p, a, d_max) in [(3u64, 1usize, 4usize), (3, 2, 3), (5, 1, 3), (2, 1, 8)] {
        let fam = LaurentFamily::from_spec(p, a, &[(vec![1], vec![1], "1")]).map_err(err)?;
        let pts = enumerate_closed_points(&fam, d_max).map_err(err)?;
        for m in 1..=d_max {
            let total: usize = pts.iter().filter(|pt| m % pt.degree == 0).map(|pt| pt.degree).sum();
            ensure(total as u64 == fam.q().pow(m as u32) - 1, format!("divisor sum p={p} a={a} m={m}"))?;
        }
    }
    // Galois invariance of S_m
    let mut conj_checked = 0;
    for fam in [three_term(), f9_family()] {
        for pt in enumerate_closed_points(&fam, 2).map_err(err)? {
            for m in 1..=2 {
                let s = exp_sum_at(&fam, pt.degree, &pt.logs, m).map_err(err)?;
                for j in 1..pt.degree {
                    let conj = pt.conjugate_logs(&fam, j).map_err(err)?;
                    ensure(exp_sum_at(&fam, pt.degree, &conj, m).map_err(err)? == s, format!("S_{m} at {}", pt.orbit_id))?;
                    conj_checked += 1;
                }
            }
        }
    }
    // CLI determinism
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    for (cmd, file) in [("formula", "f9_three_term.json"), ("count", "kloosterman.json"), ("sympower", "three_term.json")] {
        let path = corpus.join(file);
        let run = || {
            Command::new(env!("CARGO_BIN_EXE_unitroot"))
                .args([cmd, "--config", path.to_str().unwrap(), "--dmax", "3"])
                .output()
        };
        let (a, b) = (run().map_err(err)?, run().map_err(err)?);
        ensure(a.status.success() && a.stdout == b.stdout, format!("{cmd} {file} not deterministic"))?;
    }
    Ok(format!("{} Teichmuller lifts, {conj_checked} conjugate sums, CLI output byte-identical", lifts.len()))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 9] = [
        ("splitting-function valuations", 1, c1_theta),
        ("fiber trace formula", 60, c2_trace_formula),
        ("kloosterman unit root", 300, c3_kloosterman),
        ("three-way agreement", 600, c4_three_way),
        ("symmetric-power convergence", 300, c5_convergence),
        ("duality and adjointness", 300, c6_duality),
        ("trace identity", 120, c7_trace_identity),
        ("eigenvector identity", 300, c8_eigenvector),
        ("oracle invariants", 60, c9_oracles),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = run();
        let took = start.elapsed();
        let over = took > Duration::from_secs(*budget);
        let (tag, detail) = match (&res, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("over the {budget} s budget; {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        writeln!(out, "criterion {} {tag} {name} [{:.1} s] {detail}", i + 1, took.as_secs_f64()).unwrap();
        out.flush().unwrap();
    }
    if failed > 0 {
        writeln!(out, "{failed} criteria failed").unwrap();
        std::process::exit(1);
    }
}
