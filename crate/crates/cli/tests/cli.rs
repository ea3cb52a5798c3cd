use std::path::PathBuf;

use momentbound_cli::run_with;
use momentbound_core::model::{BoundCertificate, CertificateStatus, InequalityResult, MomentProblem};
use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("momentbound").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn hoeffding_mean_matches_golden() {
    let (code, out, err) = cli(&["--output", "json", "bound", "hoeffding-mean", "--mu", "0.5", "--theta", "0.6", "--m", "10"]);
    assert_eq!(code, 0, "{err}");
    let golden = std::fs::read_to_string(data("golden/hoeffding_mean.json")).unwrap();
    assert_eq!(out, golden);
    let r: InequalityResult = serde_json::from_str(&out).unwrap();
    assert!((r.bound - 0.817_622_013_4).abs() < 1e-9);
}

#[test]
fn solve_matches_golden_and_round_trips() {
    let (code, out, err) = cli(&["--output", "json", "solve", &data("data/markov.json")]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, std::fs::read_to_string(data("golden/markov_certificate.json")).unwrap());
    let cert = BoundCertificate::from_json(&out).unwrap();
    assert_eq!(cert.schema, "v1");
    assert_eq!(cert.status, CertificateStatus::Certified);
    assert!((cert.upper - 5.0 / 9.0).abs() < 1e-3);
    let p = MomentProblem::from_json(&std::fs::read_to_string(data("data/markov.json")).unwrap()).unwrap();
    cert.witness.check_feasible(&p, 1e-8, Some(2)).unwrap();
}

#[test]
fn solve_is_thread_independent() {
    let path = data("data/square.json");
    let (_, one, _) = cli(&["--output", "json", "--threads", "1", "solve", &path]);
    let (_, four, _) = cli(&["--output", "json", "--threads", "4", "solve", &path]);
    assert_eq!(one, four);
}

#[test]
fn infeasible_problem_exits_one_with_json_error() {
    let (code, out, err) = cli(&["--output", "json", "solve", &data("data/infeasible.json")]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "INFEASIBLE");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn parse_errors_exit_two() {
    let (code, _, err) = cli(&["--output", "json", "parse-check", "min(x1,"]);
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "SYNTAX_ERROR");
    let (code, _, _) = cli(&["bound", "hoeffding-mean", "--mu", "0.5"]);
    assert_eq!(code, 2);
    let (code, _, err) = cli(&["verify", "no-such-suite"]);
    assert_eq!(code, 2);
    assert!(err.contains("UNKNOWN_SUITE"));
    let (code, _, err) = cli(&["solve", "/nonexistent/problem.json"]);
    assert_eq!(code, 2);
    assert!(err.contains("IO_ERROR"));
}

#[test]
fn parse_check_prints_canonical_form() {
    let (code, out, _) = cli(&["parse-check", "min(x1,2*x2^2)-1"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "min(x1, 2.0 * x2^2) - 1.0");
    let (code, out, _) = cli(&["parse-check", "--vars", "s", "ln(0.5*exp(s)+0.5)"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "ln(0.5 * exp(s) + 0.5)");
}

#[test]
fn out_of_range_parameters_exit_one() {
    let (code, _, err) = cli(&["bound", "hoeffding-mean", "--mu", "0.5", "--theta", "1.5", "--m", "10"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error[PARAM_OUT_OF_RANGE]"));
    let (code, _, err) = cli(&["--output", "json", "bound", "small-deviation", "--cn", "1", "--x", "5"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn every_bound_family_runs() {
    let cases: &[&[&str]] = &[
        &["bounded-variance", "--b", "1", "--nu", "1", "--eps", "0.5", "--m", "1"],
        &["normal-mean", "--mu", "0", "--nu", "1", "--theta", "0.5", "--m", "10"],
        &["poisson-mean", "--lambda", "1", "--theta", "1.5", "--m", "10"],
        &["chernoff", "--phi", "ln(0.5*exp(s)+0.5)", "--lo", "-10", "--hi", "10", "--eps", "0.7", "--m", "5"],
        &["iid-bounded", "--v", "1", "--n", "100", "--eps", "0.1"],
        &["martingale", "--increments", "1,1,1,1", "--eps", "2"],
        &["mgf-vector", "--g", "exp(s^2/2)", "--tau", "5", "--eps", "0.5", "--n", "20"],
        &["variance-range", "--sigma", "0.5", "--r", "1", "--n", "50", "--eps", "0.2"],
        &["small-deviation", "--cn", "0.1", "--x", "2"],
        &["componentwise", "--radii", "1,1", "--sigma2", "0.5", "--eps", "1.5"],
        &["componentwise", "--ranges=-1:1,-2:2", "--eps", "2.5"],
        &["moment-envelope", "--diameter", "2"],
        &["moment-envelope", "--a", "2,0;0,1", "--b", "0,0", "--c", "1", "--mu", "0,0"],
    ];
    for args in cases {
        let mut full = vec!["--output", "json", "bound"];
        full.extend_from_slice(args);
        let (code, out, err) = cli(&full);
        assert_eq!(code, 0, "{args:?}: {err}");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!(v.is_object(), "{args:?}");
    }
}

#[test]
fn variance_range_reports_all_tiers() {
    let (code, out, _) = cli(&["--output", "json", "bound", "variance-range", "--sigma", "0.5", "--r", "1", "--n", "50", "--eps", "0.2"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let tiers: Vec<f64> = ["tier1", "tier2", "tier2_relaxed", "tier3"]
        .iter()
        .map(|t| v[t]["bound"].as_f64().unwrap())
        .collect();
    assert!(tiers.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)), "{tiers:?}");
}

#[test]
fn stability_reports_comparison() {
    let dir = std::env::temp_dir().join(format!("momentbound-stability-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let problem = dir.join("problem.json");
    let (code, out, err) = cli(&["stability", "--write-problem", problem.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("reference 0.00031"));
    let p = MomentProblem::from_json(&std::fs::read_to_string(&problem).unwrap()).unwrap();
    assert_eq!(p.dim(), 3);
    let (code, out, _) = cli(&["--output", "json", "stability"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["reference"], 0.00031);
    let cert: BoundCertificate = serde_json::from_value(v["certificate"].clone()).unwrap();
    assert!(cert.lower <= cert.upper + cert.tolerance_used);
    cert.witness.check_feasible(&p, 1e-8, Some(4)).unwrap();
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn verify_emits_suite_report() {
    let (code, out, err) = cli(&["--output", "json", "verify", "golden"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["suite"], "golden");
    assert_eq!(v["violations"], 0);
    assert!(v["cells"].as_array().unwrap().len() >= 5);
    let (code, out, _) = cli(&["--output", "json", "--seed", "7", "verify", "chernoff-bernoulli", "--reps", "2000"]);
    assert_eq!(code, 0);
    let (_, again, _) = cli(&["--output", "json", "--seed", "7", "--threads", "3", "verify", "chernoff-bernoulli", "--reps", "2000"]);
    assert_eq!(out, again);
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("stability"));
}
