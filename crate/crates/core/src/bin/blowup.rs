use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use blowup_core::config::{ExperimentConfig, Format};
use blowup_core::harness::{self, Sink, Suite, EXIT_DISCREPANCY, EXIT_OK};
use blowup_core::Result;

#[derive(Parser)]
#[command(name = "blowup", version, about = "Two-term boundary blow-up expansion for Δ_p u = a(x) f(u)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write only this format (overrides `output.formats`).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Evaluation window `d_min,d_max` in absolute distance.
    #[arg(long, value_parser = parse_window)]
    window: Option<[f64; 2]>,
    /// Continuation stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lemma2,
    Lemma3,
    Functionals,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// ξ₀, C₁, C₂ with ℓ₁, L₁.
    Constants(Common),
    /// Limit suites with per-part evidence.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
    /// Large solution by continuation in the boundary level.
    Solve(Common),
    /// Fitted boundary slope against C₁ + C₂ℋ.
    Validate(Common),
    /// Proof functionals and z± residual signs.
    Functionals(Common),
}

fn parse_window(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected d_min,d_max, got {s:?}"));
    }
    let a: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok([a, b])
}

fn load(c: &Common) -> Result<(blowup_core::config::Setup, Sink)> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(dir) = &c.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = c.format {
        cfg.output.formats = vec![match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }];
    }
    if let Some(w) = c.window {
        cfg.run.window = Some(w);
    }
    if let Some(t) = c.tol {
        cfg.run.tol = t;
    }
    let setup = cfg.build()?;
    let sink = Sink::new(cfg.output.dir.clone(), cfg.output.formats.clone())?;
    Ok((setup, sink))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Constants(c) => {
            let (setup, sink) = load(&c)?;
            let r = harness::cmd_constants(&setup, &sink)?;
            println!("xi0 = {}\nC1 = {}\nC2 = {}\nell1 = {}\nL1 = {}", r.xi0, r.c1, r.c2, r.ell1, r.l1);
            println!("C1 + C2*H = {} (H = {})", r.prediction, r.curvature);
            if let Some(b) = &r.balance_reference {
                println!("power balance reference slope = {} (leading factor {})", b.slope, b.leading_factor);
            }
            for w in &r.warnings {
                println!("warning: {w}");
            }
            Ok(EXIT_OK)
        }
        Command::Verify { common, suite } => {
            let (setup, sink) = load(&common)?;
            let suite = match suite {
                SuiteArg::Lemma2 => Suite::Lemma2,
                SuiteArg::Lemma3 => Suite::Lemma3,
                SuiteArg::Functionals => Suite::Functionals,
                SuiteArg::All => Suite::All,
            };
            let r = harness::cmd_verify(&setup, suite, &sink)?;
            for v in r.lemma2.iter().chain(&r.lemma3) {
                let err = v.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default();
                println!("{} {:<4} {}{err}", v.operation, v.part, verdict(v.pass));
            }
            if let Some(f) = &r.functionals {
                println!(
                    "proof_functionals {} (displayed limits {:+.6} / {:+.6}, termwise {:+.6} / {:+.6})",
                    verdict(f.pass),
                    f.displayed_limit_plus,
                    f.displayed_limit_minus,
                    f.termwise_limit_plus,
                    f.termwise_limit_minus
                );
            }
            if let Some(e) = &r.functionals_error {
                println!("proof_functionals FAIL error: {e}");
            }
            Ok(if r.pass { EXIT_OK } else { EXIT_DISCREPANCY })
        }
        Command::Solve(c) => {
            let (setup, sink) = load(&c)?;
            let r = harness::cmd_solve(&setup, &sink)?;
            let s = &r.solver;
            println!(
                "M = {:e} after {} levels, window change {:e}, nodes {}, comparison violations {}",
                s.truncation_level,
                s.steps.len(),
                s.achieved_change,
                s.mesh_nodes,
                s.comparison_violations
            );
            println!("max |u/(xi0 h(K(d))) - 1| on window = {:e}", r.max_first_order_error);
            Ok(EXIT_OK)
        }
        Command::Validate(c) => {
            let (setup, sink) = load(&c)?;
            let r = harness::cmd_validate(&setup, &sink)?;
            println!(
                "slope = {:.6}, intercept = {:.3e}, r2 = {:.6}, prediction C1 + C2*H = {:.6}",
                r.fit.slope, r.fit.intercept, r.fit.r2, r.fit.prediction
            );
            for w in &r.window_sensitivity {
                println!("  window [{:e}, {:e}]: slope {:.6}, discrepancy {:.4}", w.d_min, w.d_max, w.slope, w.discrepancy);
            }
            println!("discrepancy = {:.4} (threshold {}) {}", r.discrepancy, r.threshold, verdict(r.validated));
            Ok(if r.validated { EXIT_OK } else { EXIT_DISCREPANCY })
        }
        Command::Functionals(c) => {
            let (setup, sink) = load(&c)?;
            let r = harness::cmd_functionals(&setup, &sink)?;
            let f = &r.functionals;
            for s in &f.series {
                println!(
                    "{} lambda = {}: combined -> {:+.6} (claimed {:+.6}), S5 -> {:.6} {}",
                    s.sign.symbol(),
                    s.lambda,
                    s.combined.extrapolated,
                    s.combined.claimed,
                    s.s5.extrapolated,
                    verdict(s.pass)
                );
            }
            println!(
                "z+ residual sign fraction {:.3}, z- {:.3}",
                r.residual_plus.sign_fraction, r.residual_minus.sign_fraction
            );
            Ok(if r.pass { EXIT_OK } else { EXIT_DISCREPANCY })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
