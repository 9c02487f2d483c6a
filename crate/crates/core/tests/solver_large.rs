use std::process::Command;

use blowup_core::config::{ExperimentConfig, Setup};
use blowup_core::harness::{self, Sink};
use blowup_core::solver::solve_large;

fn setup(src: &str) -> Setup {
    ExperimentConfig::from_toml_str(src).unwrap().build().unwrap()
}

const FLAT: &str = r#"
[problem]
p = 2.0
nonlinearity = { family = "power", sigma = 2.0 }
geometry = { kind = "interval", half_length = 1.0 }
"#;

const P3_BALL: &str = r#"
[problem]
p = 3.0
nonlinearity = { family = "power", sigma = 3.0 }
geometry = { kind = "ball", radius = 1.0, dimension = 3 }
"#;

#[test]
fn flat_interval_matches_inverse_distance() {
    let s = setup(FLAT);
    let be = s.expansion().unwrap();
    let ls = solve_large(&s.problem_spec().unwrap(), &s.large_options(&be).unwrap(), &be).unwrap();
    let sol = &ls.solution;
    // truncated at M, u ~ sqrt(2)/(d + sqrt(2)/M) near the boundary
    let d_lo = 1e4 * 2f64.sqrt() / sol.truncation_level;
    assert!(d_lo < 1e-3);
    for i in sol.mesh.window(d_lo, 1e-3) {
        assert!((sol.u[i] * sol.mesh.d[i] / 2f64.sqrt() - 1.0).abs() < 1e-3, "d = {}", sol.mesh.d[i]);
    }
    assert_eq!(ls.comparison_violations, 0);
}

#[test]
fn halving_tolerance_moves_window_values_less_than_tolerance() {
    let s = setup(FLAT);
    let be = s.expansion().unwrap();
    let spec = s.problem_spec().unwrap();
    let opts = s.large_options(&be).unwrap();
    let a = solve_large(&spec, &opts, &be).unwrap();
    let mut tight = opts;
    tight.tol /= 2.0;
    let b = solve_large(&spec, &tight, &be).unwrap();
    for i in a.solution.mesh.window(opts.window.0, opts.window.1) {
        let (ua, ub) = (a.solution.u[i], b.solution.u[i]);
        assert!((ua - ub).abs() / ub <= opts.tol, "d = {}", a.solution.mesh.d[i]);
    }
}

#[test]
fn p3_ball_slope_matches_power_balance_after_normalization() {
    let s = setup(P3_BALL);
    let c = harness::cmd_constants(&s, &Sink::discard()).unwrap();
    let balance = c.balance_reference.expect("pure power");
    let r = harness::cmd_validate(&s, &Sink::discard()).unwrap();
    // the fitted intercept is the leading-factor mismatch, 1/sqrt(2) - 1
    assert!((r.fit.intercept - (0.5f64.sqrt() - 1.0)).abs() < 0.01, "intercept {}", r.fit.intercept);
    let rel = (r.fit.normalized_slope - balance.slope).abs() / balance.slope.abs();
    assert!(rel < 0.2, "normalized {} vs balance {}", r.fit.normalized_slope, balance.slope);
    assert_eq!(r.solver.comparison_violations, 0);
}

fn blowup() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blowup"))
}

#[test]
fn cli_constants_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, FLAT).unwrap();
    let out = dir.path().join("out");
    let st = blowup().args(["constants", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("constants.json")).unwrap()).unwrap();
    assert!((v["xi0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn cli_inadmissible_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[problem]\np = 2.0\nnonlinearity = { family = \"power\", sigma = 0.0 }\ngeometry = { kind = \"interval\", half_length = 1.0 }\n",
    )
    .unwrap();
    let out = blowup().args(["validate", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn cli_unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("{FLAT}\nbogus = 1\n")).unwrap();
    let st = blowup().args(["constants", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
}
