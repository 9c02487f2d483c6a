//! Acceptance criteria, one verdict line each.
//!
//! Runs without the libtest harness so that every line reaches the output.
//! Criteria listed in `KNOWN_RED` are computed and reported like the rest;
//! their FAIL verdict does not fail the process, but each of them carries an
//! independent-oracle check that must hold.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use blowup_core::config::{ExperimentConfig, Format, Setup};
use blowup_core::expansion::{self, Sign};
use blowup_core::geometry::Geometry;
use blowup_core::harness::{self, Sink};
use blowup_core::karamata::{Nonlinearity, PotentialModel, WeightKernel};
use blowup_core::solver::{self, LargeOptions, ProblemSpec};
use blowup_core::transform::{
    keller_osserman, verify_lemma2, verify_lemma3, Classification, HTransform, Lemma2Part, Lemma3Part, Primitive,
};
use blowup_core::Result;

const KNOWN_RED: &[u32] = &[6, 8];

struct Outcome {
    pass: bool,
    detail: String,
    /// Oracle checks that must hold whatever the verdict.
    sound: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail, sound: true }
    }
}

fn cube() -> Nonlinearity {
    Nonlinearity::power(1.0, 2.0).unwrap()
}

fn quartic() -> Nonlinearity {
    Nonlinearity::power(1.0, 3.0).unwrap()
}

/// φ(t) = 0.5 t^-2 on u³, admissible for p = 2 and p = 3.
fn perturbed_cube() -> Nonlinearity {
    Nonlinearity::perturbed_power(1.0, 2.0, 0.5, 2.0).unwrap()
}

fn config(src: &str) -> Setup {
    ExperimentConfig::from_toml_str(src).unwrap().build().unwrap()
}

const INTERVAL_AFFINE: &str = r#"
[problem]
p = 2.0
nonlinearity = { family = "power", sigma = 2.0 }
potential = { A = 1.0 }
geometry = { kind = "interval", half_length = 1.0 }
"#;

const CANONICAL: &str = r#"
[problem]
p = 2.0
nonlinearity = { family = "power", sigma = 2.0 }
potential = { A = 0.0 }
geometry = { kind = "ball", radius = 1.0, dimension = 3 }
"#;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn c1_closed_form_h() -> Result<Outcome> {
    let ht = HTransform::from_nonlinearity(cube(), 2.0)?;
    let r2 = 2f64.sqrt();
    let (mut eh, mut ed) = (0.0f64, 0.0f64);
    for t in log_grid(1e-4, 1.0, 200) {
        eh = eh.max(rel(ht.eval_h(t)?, r2 / t));
        let d = ht.eval_h_derivs(t)?;
        ed = ed.max(rel(d.h1, -r2 / (t * t))).max(rel(d.h2, 2.0 * r2 / (t * t * t)));
    }
    Ok(Outcome::new(eh < 1e-8 && ed < 1e-7, format!("max rel err h {eh:.2e} (< 1e-8), h' h'' {ed:.2e} (< 1e-7)")))
}

fn c2_round_trip() -> Result<Outcome> {
    let families = [
        ("u^3 p=2", cube(), 2.0),
        ("perturbed u^3 p=2", perturbed_cube(), 2.0),
        ("u^3 p=3", cube(), 3.0),
        ("perturbed u^3 p=3", perturbed_cube(), 3.0),
    ];
    let mut worst = 0.0f64;
    for (_, n, p) in families {
        let ht = HTransform::from_nonlinearity(n, p)?;
        let hi = ht.t_max().min(1.0);
        for t in log_grid(hi * 1e-8, hi, 100) {
            let back = ht.tail().eval_cal_f(ht.eval_h(t)?)?;
            worst = worst.max(rel(back, t));
        }
    }
    Ok(Outcome::new(worst < 1e-9, format!("max rel |F(h(t)) - t| over 4 families x 100 points = {worst:.2e} (< 1e-9)")))
}

fn c3_keller_osserman() -> Result<Outcome> {
    let cases = [
        ("(p=2, u^3)", cube(), 2.0, Classification::Converges),
        ("(p=2, u)", Nonlinearity::power(1.0, 0.0)?, 2.0, Classification::Diverges),
        ("(p=3, u^3)", cube(), 3.0, Classification::Converges),
        ("(p=2, perturbed u^3)", perturbed_cube(), 2.0, Classification::Converges),
        ("(p=3, u^4)", quartic(), 3.0, Classification::Converges),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, n, p, expected) in cases {
        let r = keller_osserman(&Primitive::new(n, p)?)?;
        let ok = r.agree && r.analytic == expected;
        pass &= ok;
        parts.push(format!("{name} {:?}/{:?}", r.analytic, r.numeric));
    }
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn c4_lemma3() -> Result<Outcome> {
    let k = WeightKernel::constant();
    let closed = HTransform::from_nonlinearity(cube(), 2.0)?;
    let mut pass = true;
    let mut notes = Vec::new();
    for (part, claim) in [(Lemma3Part::I, -1.0), (Lemma3Part::II, -0.5), (Lemma3Part::III, 0.5)] {
        let r = verify_lemma3(&closed, &k, 1.0, part)?;
        let s = &r.series[0];
        let ok = r.pass && s.claimed == claim && s.error() < 1e-6;
        pass &= ok;
        notes.push(format!("{part:?} {:.1e}", s.error()));
    }
    for (p, n) in [(2.0, perturbed_cube()), (3.0, perturbed_cube())] {
        let ht = HTransform::from_nonlinearity(n, p)?;
        let s = 4.0 - p;
        let xi0 = ((p - 1.0) * (p + s) / 4.0).powf(1.0 / s);
        for part in [Lemma3Part::IV, Lemma3Part::V] {
            let r = verify_lemma3(&ht, &k, xi0, part)?;
            let err = r.series.iter().map(|x| x.error()).fold(0.0, f64::max);
            pass &= r.pass && err < 1e-4;
            notes.push(format!("p={p} {part:?} {err:.1e}"));
        }
    }
    Ok(Outcome::new(pass, format!("extrapolated errors: {}", notes.join(", "))))
}

fn c5_lemma2() -> Result<Outcome> {
    let families = [
        ("u^3 p=2", cube(), 2.0),
        ("u^3 p=3", cube(), 3.0),
        ("perturbed p=2", perturbed_cube(), 2.0),
        ("perturbed p=3", Nonlinearity::perturbed_power(1.0, 2.0, 0.5, 1.0)?, 3.0),
    ];
    let mut pass = true;
    let mut failed = Vec::new();
    for (name, n, p) in families {
        let ht = HTransform::from_nonlinearity(n, p)?;
        for part in [Lemma2Part::I, Lemma2Part::II, Lemma2Part::III] {
            let r = verify_lemma2(ht.tail(), part, &[0.5, 2.0, 3.0])?;
            if !r.pass {
                pass = false;
                failed.push(format!("{name} {part:?}"));
            }
        }
    }
    let detail = if failed.is_empty() {
        "parts (i)-(iii) pass for 2 pure and 2 perturbed families".to_string()
    } else {
        format!("failing: {}", failed.join(", "))
    };
    Ok(Outcome::new(pass, detail))
}

fn c6_functionals() -> Result<Outcome> {
    let setup = config(CANONICAL);
    let be = setup.expansion()?;
    let rep = expansion::verify_functionals(
        &be,
        &setup.geometry,
        0.05,
        setup.eta(),
        &[0.0, 0.5, 1.0],
        &expansion::functional_grid(),
        1e-3,
    )?;
    let plus = rep.series.iter().find(|s| s.sign == Sign::Plus).unwrap();
    let minus = rep.series.iter().find(|s| s.sign == Sign::Minus).unwrap();
    let s5 = rep.series.iter().map(|s| s.s5.extrapolated).fold(0.0, f64::max);
    // Oracle: every displayed functional has a termwise limit; their sum
    // must be reproduced regardless of the claimed value.
    let termwise_ok = rep.series.iter().all(|s| {
        let t = match s.sign {
            Sign::Plus => rep.termwise_limit_plus,
            Sign::Minus => rep.termwise_limit_minus,
        };
        rel(s.combined.extrapolated, t) < 1e-3
    });
    let mut out = Outcome::new(
        rep.pass,
        format!(
            "combined -> {:+.6} / {:+.6}, claimed {:+.6} / {:+.6} (rel 1e-3); lambda-independent verdicts {}; S5 -> {:.6}",
            plus.combined.extrapolated,
            minus.combined.extrapolated,
            rep.displayed_limit_plus,
            rep.displayed_limit_minus,
            rep.lambda_independent,
            s5
        ),
    );
    out.sound = rep.lambda_independent && termwise_ok;
    Ok(out)
}

struct Solves {
    violations: usize,
    count: usize,
}

fn c7_first_order(acc: &mut Solves) -> Result<Outcome> {
    let geom = Geometry::interval(1.0)?;
    let pot = PotentialModel::affine(WeightKernel::constant(), 0.0, 2.0);
    let be = expansion::BoundaryExpansion::new(HTransform::from_nonlinearity(cube(), 2.0)?, pot.clone(), 1)?;
    let spec = ProblemSpec::new(2.0, geom, pot, cube())?;
    let opts = LargeOptions::for_expansion(&be, &geom)?;
    let ls = solver::solve_large(&spec, &opts, &be)?;
    acc.violations += ls.comparison_violations;
    acc.count += 1;
    let sol = &ls.solution;
    let worst = sol
        .mesh
        .window(opts.window.0, opts.window.1)
        .into_iter()
        .map(|i| (sol.u[i] * sol.mesh.d[i] / 2f64.sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(Outcome::new(
        worst < 0.05,
        format!("max |u d/sqrt(2) - 1| on [{:e}, {:e}] = {worst:.4} (< 0.05)", opts.window.0, opts.window.1),
    ))
}

fn validate(src: &str, acc: &mut Solves) -> Result<harness::RunReport> {
    let r = harness::cmd_validate(&config(src), &Sink::discard())?;
    acc.violations += r.solver.comparison_violations;
    acc.count += 1;
    Ok(r)
}

fn c8_c1(acc: &mut Solves) -> Result<Outcome> {
    let r = validate(INTERVAL_AFFINE, acc)?;
    let f = &r.fit;
    let half = &r.window_sensitivity[1];
    let shrinks = half.discrepancy < r.window_sensitivity[0].discrepancy;
    let pass = rel(f.slope, -0.5) <= 0.2 && f.intercept.abs() < 0.02 && f.r2 > 0.95 && shrinks;
    let mut out = Outcome::new(
        pass,
        format!(
            "slope {:.4} vs -1/2 (rel {:.3}, <= 0.2), intercept {:.1e}, r2 {:.5}, discrepancy {:.4} -> {:.4} at d_max/2",
            f.slope,
            rel(f.slope, -0.5),
            f.intercept,
            f.r2,
            r.window_sensitivity[0].discrepancy,
            half.discrepancy
        ),
    );
    // Oracle: the power-profile balance slope -A/3.
    out.sound = rel(f.slope, -1.0 / 3.0) <= 0.2 && f.intercept.abs() < 0.02 && f.r2 > 0.95;
    out.detail.push_str(&format!("; balance -1/3: rel {:.3}", rel(f.slope, -1.0 / 3.0)));
    Ok(out)
}

fn c9_c2(acc: &mut Solves) -> Result<Outcome> {
    let r = validate(CANONICAL, acc)?;
    let f = &r.fit;
    let pass = rel(f.slope, 1.0 / 3.0) <= 0.2 && f.intercept.abs() < 0.02 && f.r2 > 0.95;
    Ok(Outcome::new(
        pass,
        format!(
            "slope {:.4} vs 1/3 (rel {:.3}, <= 0.2), intercept {:.1e}, r2 {:.5}",
            f.slope,
            rel(f.slope, 1.0 / 3.0),
            f.intercept,
            f.r2
        ),
    ))
}

fn c10_comparison(acc: &Solves) -> Result<Outcome> {
    Ok(Outcome::new(
        acc.violations == 0 && acc.count > 0,
        format!("{} violations above 1e-12 relative over {} continuation runs", acc.violations, acc.count),
    ))
}

fn c11_determinism(acc: &mut Solves) -> Result<Outcome> {
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir()?;
        let sink = Sink::new(dir.path().to_path_buf(), vec![Format::Json, Format::Csv])?;
        let r = harness::cmd_validate(&config(CANONICAL), &sink)?;
        acc.violations += r.solver.comparison_violations;
        acc.count += 1;
        bytes.push((std::fs::read(dir.path().join("report.json"))?, std::fs::read(dir.path().join("solution.csv"))?));
    }
    let same = bytes[0] == bytes[1];
    Ok(Outcome::new(same, format!("report.json {} bytes, solution.csv {} bytes, identical: {same}", bytes[0].0.len(), bytes[0].1.len())))
}

fn main() -> ExitCode {
    let mut acc = Solves { violations: 0, count: 0 };
    let mut results: Vec<(u32, &str, Duration, Duration, Result<Outcome>)> = Vec::new();
    macro_rules! run {
        ($n:expr, $name:expr, $budget:expr, $f:expr) => {{
            let t0 = Instant::now();
            let r = $f;
            let el = t0.elapsed();
            results.push(($n, $name, el, Duration::from_secs_f64($budget), r));
            let (n, name, el, budget, r) = results.last().unwrap();
            print_line(*n, name, *el, *budget, r);
        }};
    }
    run!(1, "closed-form h", 1.0, c1_closed_form_h());
    run!(2, "round trip", 10.0, c2_round_trip());
    run!(3, "Keller-Osserman", 5.0, c3_keller_osserman());
    run!(4, "h-limit suite", 30.0, c4_lemma3());
    run!(5, "F-limit suite", 30.0, c5_lemma2());
    run!(6, "proof functionals", 30.0, c6_functionals());
    run!(7, "first-order rate", 120.0, c7_first_order(&mut acc));
    run!(8, "C1 slope", 300.0, c8_c1(&mut acc));
    run!(9, "C2 slope", 300.0, c9_c2(&mut acc));
    run!(11, "determinism", 600.0, c11_determinism(&mut acc));
    run!(10, "discrete comparison", 1.0, c10_comparison(&acc));

    let mut hard_fail = false;
    let mut passed = 0;
    for (n, _, el, budget, r) in &results {
        let in_time = el <= budget;
        match r {
            Ok(o) => {
                if o.pass && in_time {
                    passed += 1;
                }
                let red = KNOWN_RED.contains(n);
                if (!o.pass && !red) || !o.sound || !in_time || (o.pass && red) {
                    hard_fail = true;
                }
            }
            Err(_) => hard_fail = true,
        }
    }
    println!("acceptance: {passed}/{} criteria pass; known discrepancies: {:?}", results.len(), KNOWN_RED);
    if hard_fail {
        println!("acceptance: unexpected outcome");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn print_line(n: u32, name: &str, el: Duration, budget: Duration, r: &Result<Outcome>) {
    let time = format!("{:.2}s/{:.0}s", el.as_secs_f64(), budget.as_secs_f64());
    match r {
        Ok(o) => {
            let verdict = if o.pass && el <= budget { "PASS" } else { "FAIL" };
            let oracle = if o.sound { "" } else { " [oracle check failed]" };
            println!("criterion {n:>2} {verdict} {name} ({time}): {}{oracle}", o.detail);
        }
        Err(e) => println!("criterion {n:>2} FAIL {name} ({time}): error: {e}"),
    }
}
