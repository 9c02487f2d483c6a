//! Experiment pipelines behind the `blowup` binary: pre-flight checks,
//! limit suites, solver runs, slope fits and report files.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::{Format, KernelConfig, NonlinearityConfig, Setup};
use crate::error::{Error, Result};
use crate::expansion::{
    self, power_profile_coefficients, BoundaryExpansion, ConstantInputs, FunctionalsReport, ResidualReport, Sign,
};
use crate::karamata::{check_f2, F2Report, F2Status};
use crate::limits::{self, LimitSeries};
use crate::solver::{self, fit_boundary_slope, ContinuationStep, LargeSolution, SlopeFit};
use crate::transform::{self, Classification, KellerOssermanReport, Lemma2Part, Lemma3Part};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DISCREPANCY: i32 = 1;
pub const EXIT_INADMISSIBLE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Configuration problems map to 2, everything raised while computing to 3.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Inadmissible(_) | Error::Degenerate(_) | Error::Config(_) | Error::Expr(_) | Error::DivergentTail(_) => {
            EXIT_INADMISSIBLE
        }
        _ => EXIT_SOLVER,
    }
}

/// Output directory plus the enabled formats.
#[derive(Debug, Clone)]
pub struct Sink {
    dir: Option<PathBuf>,
    formats: Vec<Format>,
}

impl Sink {
    pub fn new(dir: PathBuf, formats: Vec<Format>) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Sink { dir: Some(dir), formats })
    }

    /// Writes nothing.
    pub fn discard() -> Self {
        Sink { dir: None, formats: Vec::new() }
    }

    fn target(&self, name: &str, format: Format) -> Option<PathBuf> {
        match &self.dir {
            Some(d) if self.formats.contains(&format) => Some(d.join(name)),
            _ => None,
        }
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if let Some(path) = self.target(name, Format::Json) {
            let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
            text.push('\n');
            fs::write(path, text)?;
        }
        Ok(())
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        if let Some(path) = self.target(name, Format::Csv) {
            let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
            for r in rows {
                w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    fn solution(&self, sol: &solver::RadialSolution, header: &[String]) -> Result<()> {
        if let Some(path) = self.target("solution.csv", Format::Csv) {
            let file = std::io::BufWriter::new(fs::File::create(path)?);
            sol.write_csv(file, header)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub condition: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreflightReport {
    pub operation: &'static str,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub keller_osserman: Option<KellerOssermanReport>,
    pub f2: F2Report,
}

impl PreflightReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Admissibility checks; fails with the violated conditions named.
pub fn preflight(setup: &Setup) -> Result<PreflightReport> {
    let p = setup.p;
    let n = &setup.nonlinearity;
    let sigma = n.sigma();
    let mut checks = Vec::new();
    let mut check = |condition: &str, pass: bool, detail: String| {
        checks.push(Check { condition: condition.to_string(), pass, detail });
    };

    check("sigma > p - 2", sigma > p - 2.0, format!("σ = {sigma}, p - 2 = {}", p - 2.0));
    let ell1 = setup.kernel.ell1();
    check("ell1 in [0, 1]", (0.0..=1.0).contains(&ell1), format!("ℓ₁ = {ell1}"));

    let grid: Vec<f64> = limits::geometric_grid(1e-3 * n.anchor(), 10.0, 12);
    match n.check_f1(&grid) {
        Ok(()) => check("f1", true, "f(0) = 0, f positive and increasing on the sample grid".into()),
        Err(e) => check("f1", false, e.to_string()),
    }

    let f2 = check_f2(n, p);
    check(
        "f2",
        f2.status != F2Status::Fail,
        match f2.status {
            F2Status::Exempt => f2.note.clone(),
            _ => format!(
                "α ≈ {:?} in window ({}, {}){}",
                f2.alpha_estimate,
                f2.window.0,
                f2.window.1,
                if f2.note.is_empty() { String::new() } else { format!(": {}", f2.note) }
            ),
        },
    );

    let keller_osserman = match setup.primitive().and_then(|prim| transform::keller_osserman(&prim)) {
        Ok(ko) => {
            let ok = ko.agree && ko.analytic == Classification::Converges;
            check(
                "keller_osserman",
                ok,
                format!(
                    "analytic {:?}, numeric {:?}, tail decay exponent {:.6}",
                    ko.analytic, ko.numeric, ko.decay_exponent
                ),
            );
            Some(ko)
        }
        Err(e) => {
            check("keller_osserman", false, e.to_string());
            None
        }
    };

    let ext = setup.geometry.extent();
    check(
        "potential positive",
        setup.potential.is_positive_on(ext, 2000),
        format!("a = {} sampled on (0, {ext}]", setup.potential.description()),
    );

    let report = PreflightReport {
        operation: "preflight",
        checks,
        warnings: setup.potential.warnings(),
        keller_osserman,
        f2,
    };
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} ({})", c.condition, c.detail))
        .collect();
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(Error::Inadmissible(format!("violated: {}", failed.join("; "))))
    }
}

/// Reference slope from a pure-power balance with `k ≡ 1`: the profile
/// `c d^{-p/s}(1 + C d)` inserted into the radial equation.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReference {
    pub c_a: f64,
    pub c_h: f64,
    pub slope: f64,
    /// `[(p + ℓ₁s)/(σ+2)]^{1/s}`, the leading factor matching the normalization of `h`.
    pub leading_factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsRecord {
    pub operation: &'static str,
    pub spec_hash: String,
    pub xi0: f64,
    pub c1: f64,
    pub c2: f64,
    pub ell1: f64,
    pub l1: f64,
    pub c1_proof_display: f64,
    pub curvature: f64,
    /// `C₁ + C₂ℋ`.
    pub prediction: f64,
    pub inputs: ConstantInputs,
    pub balance_reference: Option<BalanceReference>,
    pub warnings: Vec<String>,
}

fn balance_reference(setup: &Setup) -> Option<BalanceReference> {
    let pure = matches!(setup.config.problem.nonlinearity, NonlinearityConfig::Power { .. });
    let flat = setup.config.problem.kernel == KernelConfig::Constant && setup.config.problem.potential.a.is_none();
    if !(pure && flat) {
        return None;
    }
    let (p, sigma) = (setup.p, setup.nonlinearity.sigma());
    let h = setup.geometry.mean_curvature();
    let (c_a, c_h) = power_profile_coefficients(p, sigma, setup.potential.a_coef(), setup.geometry.dimension(), h);
    let s = sigma + 2.0 - p;
    Some(BalanceReference { c_a, c_h, slope: c_a + c_h, leading_factor: ((p + s) / (sigma + 2.0)).powf(1.0 / s) })
}

fn constants_record(setup: &Setup) -> Result<ConstantsRecord> {
    let c = setup.constants()?;
    let h = setup.geometry.mean_curvature();
    Ok(ConstantsRecord {
        operation: "constants",
        spec_hash: setup.config.spec_hash(),
        xi0: c.xi0,
        c1: c.c1,
        c2: c.c2,
        ell1: c.inputs.ell1,
        l1: c.inputs.l1,
        c1_proof_display: c.c1_proof_display,
        curvature: h,
        prediction: c.c1 + c.c2 * h,
        inputs: c.inputs,
        balance_reference: balance_reference(setup),
        warnings: setup.potential.warnings(),
    })
}

/// `ξ₀, C₁, C₂` (and `ℓ₁, L₁`) to `constants.json`.
pub fn cmd_constants(setup: &Setup, sink: &Sink) -> Result<ConstantsRecord> {
    // Degenerate constants are reported before admissibility.
    let record = constants_record(setup)?;
    preflight(setup)?;
    sink.json("constants.json", &record)?;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma2,
    Lemma3,
    Functionals,
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartVerdict {
    pub operation: &'static str,
    pub part: String,
    pub pass: bool,
    pub error: Option<String>,
    pub series: Vec<LimitSeries>,
}

#[derive(Debug, Clone, Serialize)]
struct LimitRow<'a> {
    part: &'a str,
    label: &'a str,
    t: f64,
    value: f64,
    claimed: f64,
    extrapolated: f64,
    tol: f64,
    pass: bool,
}

fn limit_rows(verdicts: &[PartVerdict]) -> Vec<LimitRow<'_>> {
    let mut rows = Vec::new();
    for v in verdicts {
        for s in &v.series {
            for (t, value) in s.grid.iter().zip(&s.values) {
                rows.push(LimitRow {
                    part: &v.part,
                    label: &s.label,
                    t: *t,
                    value: *value,
                    claimed: s.claimed,
                    extrapolated: s.extrapolated,
                    tol: s.tol,
                    pass: s.pass,
                });
            }
        }
    }
    rows
}

fn verdict<P: std::fmt::Debug>(
    operation: &'static str,
    part: P,
    r: Result<transform::PartReport<P>>,
) -> PartVerdict {
    match r {
        Ok(rep) => PartVerdict { operation, part: format!("{part:?}"), pass: rep.pass, error: None, series: rep.series },
        Err(e) => PartVerdict { operation, part: format!("{part:?}"), pass: false, error: Some(e.to_string()), series: Vec::new() },
    }
}

fn lemma2_verdicts(be: &BoundaryExpansion) -> Vec<PartVerdict> {
    [Lemma2Part::Pre, Lemma2Part::I, Lemma2Part::II, Lemma2Part::III]
        .into_iter()
        .map(|part| verdict("verify_lemma2", part, transform::verify_lemma2(be.ht.tail(), part, &[0.5, 2.0, 3.0])))
        .collect()
}

fn lemma3_verdicts(be: &BoundaryExpansion) -> Vec<PartVerdict> {
    [Lemma3Part::I, Lemma3Part::II, Lemma3Part::III, Lemma3Part::IV, Lemma3Part::V]
        .into_iter()
        .map(|part| {
            verdict("verify_lemma3", part, transform::verify_lemma3(&be.ht, be.kernel(), be.constants.xi0, part))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct FunctionalRow {
    sign: &'static str,
    lambda: f64,
    r: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
    s5: f64,
    combined: f64,
    displayed_limit: f64,
    termwise_limit: f64,
}

fn functional_rows(rep: &FunctionalsReport) -> Vec<FunctionalRow> {
    let mut rows = Vec::new();
    for s in &rep.series {
        let (displayed, termwise) = match s.sign {
            Sign::Plus => (rep.displayed_limit_plus, rep.termwise_limit_plus),
            Sign::Minus => (rep.displayed_limit_minus, rep.termwise_limit_minus),
        };
        for f in &s.rows {
            rows.push(FunctionalRow {
                sign: s.sign.symbol(),
                lambda: s.lambda,
                r: f.r,
                s1: f.s1,
                s2: f.s2,
                s3: f.s3,
                s4: f.s4,
                s5: f.s5,
                combined: f.combined(),
                displayed_limit: displayed,
                termwise_limit: termwise,
            });
        }
    }
    rows
}

fn run_functionals(setup: &Setup, be: &BoundaryExpansion) -> Result<FunctionalsReport> {
    let run = setup.run();
    let grid: Vec<f64> = expansion::functional_grid().into_iter().map(|r| r * setup.geometry.extent()).collect();
    expansion::verify_functionals(be, &setup.geometry, run.eps, setup.eta(), &run.lambda, &grid, run.functional_rel_tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub operation: &'static str,
    pub spec_hash: String,
    pub preflight: PreflightReport,
    pub lemma2: Vec<PartVerdict>,
    pub lemma3: Vec<PartVerdict>,
    pub functionals: Option<FunctionalsReport>,
    pub functionals_error: Option<String>,
    pub pass: bool,
}

/// Limit suites with per-part evidence; evaluation failures are recorded
/// on the part and the suite continues.
pub fn cmd_verify(setup: &Setup, suite: Suite, sink: &Sink) -> Result<VerifyReport> {
    let pre = preflight(setup)?;
    let be = setup.expansion()?;
    let want = |s: Suite| suite == s || suite == Suite::All;
    let lemma2 = if want(Suite::Lemma2) { lemma2_verdicts(&be) } else { Vec::new() };
    let lemma3 = if want(Suite::Lemma3) { lemma3_verdicts(&be) } else { Vec::new() };
    let (functionals, functionals_error) = if want(Suite::Functionals) {
        match run_functionals(setup, &be) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    if want(Suite::Lemma2) {
        sink.csv("lemma2.csv", &limit_rows(&lemma2))?;
    }
    if want(Suite::Lemma3) {
        sink.csv("lemma3.csv", &limit_rows(&lemma3))?;
    }
    if let Some(f) = &functionals {
        sink.csv("functionals.csv", &functional_rows(f))?;
    }
    let pass = lemma2.iter().chain(&lemma3).all(|v| v.pass)
        && functionals_error.is_none()
        && functionals.as_ref().is_none_or(|f| f.pass);
    let report = VerifyReport {
        operation: "verify",
        spec_hash: setup.config.spec_hash(),
        preflight: pre,
        lemma2,
        lemma3,
        functionals,
        functionals_error,
        pass,
    };
    sink.json("report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalsRun {
    pub operation: &'static str,
    pub spec_hash: String,
    pub functionals: FunctionalsReport,
    /// `Δ_p z± - a f(z±)` sign scans.
    pub residual_plus: ResidualReport,
    pub residual_minus: ResidualReport,
    pub pass: bool,
}

/// Proof functionals plus the sign of the `z±` residuals.
pub fn cmd_functionals(setup: &Setup, sink: &Sink) -> Result<FunctionalsRun> {
    preflight(setup)?;
    let be = setup.expansion()?;
    let functionals = run_functionals(setup, &be)?;
    let ext = setup.geometry.extent();
    let d_grid: Vec<f64> = limits::geometric_grid(1e-2 * ext, 0.5, 12);
    let eps = setup.run().eps;
    let residual_plus = expansion::residual_z(&be, &setup.geometry, eps, 0.0, &d_grid, Sign::Plus)?;
    let residual_minus = expansion::residual_z(&be, &setup.geometry, eps, 0.0, &d_grid, Sign::Minus)?;
    sink.csv("functionals.csv", &functional_rows(&functionals))?;
    let pass = functionals.pass;
    let run = FunctionalsRun {
        operation: "proof_functionals",
        spec_hash: setup.config.spec_hash(),
        functionals,
        residual_plus,
        residual_minus,
        pass,
    };
    sink.json("report.json", &run)?;
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverMetadata {
    pub operation: &'static str,
    pub mesh_nodes: usize,
    pub finest: f64,
    pub growth: f64,
    pub window: (f64, f64),
    pub tol: f64,
    pub truncation_level: f64,
    pub achieved_change: f64,
    pub steps: Vec<ContinuationStep>,
    pub comparison_violations: usize,
    pub boundary_resolution: f64,
    pub residual: f64,
    pub eps_reg: f64,
    pub eps_reg_sensitivity: Option<f64>,
}

fn metadata(ls: &LargeSolution, window: (f64, f64), tol: f64) -> SolverMetadata {
    let s = &ls.solution;
    SolverMetadata {
        operation: "solve_large",
        mesh_nodes: s.mesh.len(),
        finest: s.mesh.params.finest,
        growth: s.mesh.params.growth,
        window,
        tol,
        truncation_level: s.truncation_level,
        achieved_change: ls.achieved_change,
        steps: ls.steps.clone(),
        comparison_violations: ls.comparison_violations,
        boundary_resolution: ls.boundary_resolution,
        residual: s.residual,
        eps_reg: s.eps_reg,
        eps_reg_sensitivity: ls.eps_reg_sensitivity,
    }
}

fn solve(setup: &Setup, be: &BoundaryExpansion, sink: &Sink) -> Result<(LargeSolution, SolverMetadata)> {
    let spec = setup.problem_spec()?;
    let opts = setup.large_options(be)?;
    let ls = solver::solve_large(&spec, &opts, be)?;
    let header = vec![
        format!("spec_hash = {}", setup.config.spec_hash()),
        format!("problem: p = {}, f = {}, a = {}, {}", setup.p, setup.nonlinearity.describe(), setup.potential.description(), setup.geometry.describe()),
    ];
    sink.solution(&ls.solution, &header)?;
    let meta = metadata(&ls, opts.window, opts.tol);
    Ok((ls, meta))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub operation: &'static str,
    pub spec_hash: String,
    pub solver: SolverMetadata,
    /// `max |u/(ξ₀h(K(d))) - 1|` on the window.
    pub max_first_order_error: f64,
}

/// Large solution to `solution.csv`.
pub fn cmd_solve(setup: &Setup, sink: &Sink) -> Result<SolveReport> {
    preflight(setup)?;
    let be = setup.expansion()?;
    let (ls, solver) = solve(setup, &be, sink)?;
    let fit = fit_boundary_slope(&ls.solution, &be, &setup.geometry, solver.window)?;
    Ok(SolveReport {
        operation: "solve",
        spec_hash: setup.config.spec_hash(),
        solver,
        max_first_order_error: fit.max_first_order_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowRow {
    pub d_min: f64,
    pub d_max: f64,
    pub nodes: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub discrepancy: f64,
    pub max_first_order_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub operation: &'static str,
    pub window: (f64, f64),
    pub nodes: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub reliable: bool,
    pub normalized_slope: f64,
    pub prediction: f64,
    pub max_first_order_error: f64,
    /// Evidence: `d` and `e(d) = u/(ξ₀h(K(d))) - 1` at the fitted nodes.
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl From<&SlopeFit> for FitRecord {
    fn from(f: &SlopeFit) -> Self {
        FitRecord {
            operation: "fit_boundary_slope",
            window: f.window,
            nodes: f.nodes,
            slope: f.slope,
            intercept: f.intercept,
            r2: f.r2,
            reliable: f.reliable,
            normalized_slope: f.normalized_slope,
            prediction: f.prediction,
            max_first_order_error: f.max_first_order_error,
            d: f.d.clone(),
            e: f.e.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub operation: &'static str,
    pub spec_hash: String,
    pub preflight: PreflightReport,
    pub constants: ConstantsRecord,
    pub lemma2: Vec<PartVerdict>,
    pub lemma3: Vec<PartVerdict>,
    pub solver: SolverMetadata,
    pub fit: FitRecord,
    /// `|slope - (C₁+C₂ℋ)| / max(|C₁+C₂ℋ|, 0.1)`.
    pub discrepancy: f64,
    pub threshold: f64,
    pub validated: bool,
    /// Fits with the upper end at `d_max`, `d_max/2`, `d_max/4`.
    pub window_sensitivity: Vec<WindowRow>,
}

pub fn discrepancy(slope: f64, prediction: f64) -> f64 {
    (slope - prediction).abs() / prediction.abs().max(0.1)
}

/// Constants, limit suites, large solution, slope fit and window table to
/// `report.json`.
pub fn cmd_validate(setup: &Setup, sink: &Sink) -> Result<RunReport> {
    let constants = constants_record(setup)?;
    let pre = preflight(setup)?;
    let be = setup.expansion()?;
    let lemma2 = lemma2_verdicts(&be);
    let lemma3 = lemma3_verdicts(&be);
    let (ls, solver) = solve(setup, &be, sink)?;
    let window = solver.window;
    let fit = fit_boundary_slope(&ls.solution, &be, &setup.geometry, window)?;
    let prediction = fit.prediction;
    let mut window_sensitivity = Vec::new();
    for k in [1.0, 2.0, 4.0] {
        let w = (window.0, window.1 / k);
        if w.1 <= w.0 {
            continue;
        }
        match fit_boundary_slope(&ls.solution, &be, &setup.geometry, w) {
            Ok(f) => window_sensitivity.push(WindowRow {
                d_min: w.0,
                d_max: w.1,
                nodes: f.nodes,
                slope: f.slope,
                intercept: f.intercept,
                r2: f.r2,
                discrepancy: discrepancy(f.slope, prediction),
                max_first_order_error: f.max_first_order_error,
            }),
            Err(Error::FitWindow(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let d = discrepancy(fit.slope, prediction);
    let threshold = setup.run().slope_threshold;
    sink.json("constants.json", &constants)?;
    sink.csv("lemma2.csv", &limit_rows(&lemma2))?;
    sink.csv("lemma3.csv", &limit_rows(&lemma3))?;
    let report = RunReport {
        operation: "validate",
        spec_hash: setup.config.spec_hash(),
        preflight: pre,
        constants,
        lemma2,
        lemma3,
        solver,
        fit: FitRecord::from(&fit),
        discrepancy: d,
        threshold,
        validated: d < threshold && fit.reliable,
        window_sensitivity,
    };
    sink.json("report.json", &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn setup(src: &str) -> Setup {
        ExperimentConfig::from_toml_str(src).unwrap().build().unwrap()
    }

    const CUBE_BALL: &str = r#"
[problem]
p = 2.0
nonlinearity = { family = "power", sigma = 2.0 }
geometry = { kind = "ball", radius = 1.0, dimension = 3 }
"#;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Inadmissible("x".into())), 2);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 2);
        assert_eq!(exit_code(&Error::NonConvergence("x".into())), 3);
        assert_eq!(exit_code(&Error::NewtonDivergence("x".into())), 3);
    }

    #[test]
    fn canonical_constants() {
        let r = cmd_constants(&setup(CUBE_BALL), &Sink::discard()).unwrap();
        assert_eq!((r.xi0, r.c1), (1.0, 0.0));
        assert!((r.c2 - 1.0 / 3.0).abs() < 1e-15);
        let b = r.balance_reference.unwrap();
        assert!((b.slope - 1.0 / 3.0).abs() < 1e-14 && b.leading_factor == 1.0);
    }

    #[test]
    fn p3_half_kernel_constants() {
        let s = setup(
            r#"
[problem]
p = 3.0
nonlinearity = { family = "power", sigma = 3.0 }
kernel = { family = "power", gamma = 1.0 }
potential = { A = 1.0 }
geometry = { kind = "interval", half_length = 1.0 }
"#,
        );
        let r = cmd_constants(&s, &Sink::discard()).unwrap();
        assert!((r.xi0 - 1.6f64.sqrt()).abs() < 1e-14);
        assert!(r.balance_reference.is_none());
    }

    #[test]
    fn degenerate_sigma_named() {
        let s = setup(&CUBE_BALL.replace("sigma = 2.0", "sigma = 0.0"));
        match cmd_constants(&s, &Sink::discard()) {
            Err(Error::Degenerate(m)) => assert!(m.contains('σ') || m.contains("sigma"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preflight_names_violations() {
        let s = setup(&CUBE_BALL.replace("sigma = 2.0", "sigma = -0.5"));
        match preflight(&s) {
            Err(Error::Inadmissible(m)) => assert!(m.contains("keller_osserman") && m.contains("sigma > p - 2"), "{m}"),
            other => panic!("{other:?}"),
        }
        let f2 = CUBE_BALL.replace(r#"{ family = "power", sigma = 2.0 }"#, r#"{ family = "perturbed_power", sigma = 2.0, c = 0.5, alpha = 0.5 }"#);
        match preflight(&setup(&f2)) {
            Err(Error::Inadmissible(m)) => assert!(m.contains("f2"), "{m}"),
            other => panic!("{other:?}"),
        }
        let linear = CUBE_BALL.replace("sigma = 2.0", "sigma = 0.0").replace("p = 2.0", "p = 1.5");
        assert!(preflight(&setup(&linear)).is_ok());
    }

    #[test]
    fn canonical_lemma3_passes() {
        let r = cmd_verify(&setup(CUBE_BALL), Suite::Lemma3, &Sink::discard()).unwrap();
        assert_eq!(r.lemma3.len(), 5);
        assert!(r.lemma3.iter().all(|v| v.pass && !v.series.is_empty()), "{:#?}", r.lemma3);
        assert!(r.lemma2.is_empty() && r.functionals.is_none());
    }

    #[test]
    fn discrepancy_floor() {
        assert_eq!(discrepancy(0.05, 0.0), 0.5);
        assert!((discrepancy(-0.4, -0.5) - 0.2).abs() < 1e-15);
    }
}
