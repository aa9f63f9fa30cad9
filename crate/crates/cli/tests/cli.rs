use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use unitroot::padic::{make_field_context, PadicJson};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unitroot"))
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("family.json");
    std::fs::write(&path, text).unwrap();
    path
}

const KLOOSTERMAN_AT_ONE: &str = r#"{"p":3,"s":1,"n":1,
  "terms":[{"r":[0],"u":[1],"coeff":"1"},{"r":[1],"u":[-1],"coeff":"1"}],
  "kappa":1,"lambda":[0]}"#;

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus("three_term.json");
    let mut texts = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.json"));
        let o = run(&["formula", "--config", cfg.to_str().unwrap(), "--json-out", out.to_str().unwrap()]);
        assert!(o.status.success());
        texts.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn manifest_records_digest_and_params() {
    let o = run(&["formula", "--config", corpus("linear.json").to_str().unwrap(), "--precision", "2"]);
    let r = report(&o);
    let m = &r["manifest"];
    assert_eq!(m["tool"], "unitroot");
    assert_eq!(m["params"]["precision"], 2);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn linear_family_formula_is_one() {
    let o = run(&["formula", "--config", corpus("linear.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    let v: PadicJson = serde_json::from_value(r["report"]["result"]["value"].clone()).unwrap();
    let ctx = make_field_context(3, 1, 3).unwrap();
    let x = ctx.deserialize(&v).unwrap();
    assert!(ctx.agreement(&x, &ctx.one()) >= ctx.prec_pi());
}

#[test]
fn linear_family_lunit_passes() {
    let o = run(&["lunit", "--config", corpus("linear.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&o);
    assert_eq!(r["passed"], true);
    assert!(r["first_failure"].is_null());
    // (1 - T)/(1 - 3T)
    let ctx = make_field_context(3, 1, 3).unwrap();
    let series = r["report"]["series"].as_array().unwrap();
    assert_eq!(series.len(), 5);
    for (c, want) in series.iter().zip([1, 2, 6, 18, 54]) {
        let v: PadicJson = serde_json::from_value(c.clone()).unwrap();
        assert_eq!(ctx.deserialize(&v).unwrap(), ctx.from_int(want));
    }
}

#[test]
fn kloosterman_fiber_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), KLOOSTERMAN_AT_ONE);
    let o = run(&["fiber", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    let fib = &r["report"]["fibers"][0];
    let v: PadicJson = serde_json::from_value(fib["unit_root"].clone()).unwrap();
    let ctx = make_field_context(3, 1, 3).unwrap();
    let x = ctx.deserialize(&v).unwrap();
    // mod 9 is four π-digits
    assert!(ctx.agreement(&x, &ctx.from_int(7)) >= 4);
    assert!(fib["trace_formula"]["passed"].as_bool().unwrap());
}

#[test]
fn malformed_coefficient_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p":3,"s":1,"n":1,"terms":[{"r":[1],"u":[1],"coeff":"7x"}],"kappa":1}"#,
    );
    let o = run(&["formula", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).expect("structured error");
    assert_eq!(err["error"], "config");
    assert!(err["detail"].as_str().unwrap().contains("coeff"));
}

#[test]
fn syntax_error_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\"p\": 3,\n \"s\": }");
    let o = run(&["count", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["detail"].as_str().unwrap().contains("line 2"));
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"p":3,"s":1,"n":1,"terms":[{"r":[1],"u":[1],"coeff":"1"}],"kappa":1,"precison":4}"#,
    );
    assert_eq!(run(&["formula", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn seed_corpus_writes_every_example() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("corpus");
    let o = run(&["seed-corpus", "--seed-corpus", target.to_str().unwrap(), "--no-run"]);
    assert!(o.status.success());
    for name in ["linear.json", "kloosterman.json", "three_term.json", "f9_three_term.json"] {
        let text = std::fs::read_to_string(target.join(name)).unwrap();
        assert_eq!(text, std::fs::read_to_string(corpus(name)).unwrap());
    }
}

#[test]
fn kloosterman_verify_passes() {
    let o = run(&["verify", "--config", corpus("kloosterman.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&o);
    assert!(r["report"]["three_way"]["compared_at"].as_u64().unwrap() >= 2);
}

#[test]
fn count_reports_l_polynomials() {
    let o = run(&["count", "--config", corpus("kloosterman.json").to_str().unwrap(), "--dmax", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    let fibers = r["report"]["fibers"].as_array().unwrap();
    assert_eq!(fibers.len(), 5);
    for f in fibers {
        // degree-2 polynomial with constant term 1
        assert_eq!(f["l_function"]["numerator"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn too_few_fibers_is_a_stabilization_failure() {
    let cfg = corpus("kloosterman.json");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--precision", "8", "--dmax", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&o);
    assert_eq!(r["first_failure"], "three-way agreement");
    assert_eq!(r["report"]["three_way"]["error"], "insufficient stabilization");
}

#[test]
fn linear_family_l_is_one_minus_t() {
    let o = run(&["count", "--config", corpus("linear.json").to_str().unwrap(), "--dmax", "2"]);
    assert_eq!(o.status.code(), Some(0));
    for f in report(&o)["report"]["fibers"].as_array().unwrap() {
        assert_eq!(f["l_function"]["display"], "((1) + (-1)T) / ((1))");
    }
}
