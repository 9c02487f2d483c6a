//! TOML experiment configuration and its translation into model objects.
//!
//! ```toml
//! [problem]
//! p = 2.0
//! nonlinearity = { family = "power", sigma = 2.0 }
//! kernel = { family = "constant" }
//! potential = { A = 0.0 }
//! geometry = { kind = "ball", radius = 1.0, dimension = 3 }
//!
//! [run]
//! tol = 1e-7
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expansion::{self, BoundaryExpansion, ExpansionConstants};
use crate::expr::Expr;
use crate::geometry::Geometry;
use crate::karamata::{Nonlinearity, PotentialModel, RealFn, SlowPerturbation, WeightKernel};
use crate::solver::{LargeOptions, MeshParams, NewtonOptions, ProblemSpec};
use crate::transform::{HTransform, Primitive, ScaledTail};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    /// `a0 u^{σ+1}`
    Power {
        #[serde(default = "one")]
        a0: f64,
        sigma: f64,
    },
    /// `φ(t) = c t^{-α}` from `B = 1`.
    PerturbedPower {
        #[serde(default = "one")]
        a0: f64,
        sigma: f64,
        c: f64,
        alpha: f64,
    },
    /// `φ` and `φ'` as expressions in `t`.
    Custom {
        #[serde(default = "one")]
        a0: f64,
        sigma: f64,
        #[serde(default = "one")]
        anchor: f64,
        phi: String,
        phi_deriv: String,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        low_range_exponent: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    #[default]
    Constant,
    Power {
        gamma: f64,
    },
    Exponential {
        beta: f64,
    },
    /// `k`, `k'` and optionally `K` as expressions in `t`.
    Custom {
        k: String,
        k_deriv: String,
        #[serde(default)]
        big_k: Option<String>,
        #[serde(default = "one")]
        nu: f64,
        #[serde(default)]
        ell1: Option<f64>,
        #[serde(default)]
        l1: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// First-order coefficient in `a = k^p (1 + A d + o(d))`.
    #[serde(rename = "A", default)]
    pub a_coef: f64,
    /// Exact `a(d)` as an expression in `t`; defaults to `k^p (1 + A d)`.
    #[serde(default)]
    pub a: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: f64,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// First cell as a fraction of the extent.
    pub finest: f64,
    pub growth: f64,
    pub max_continuation: usize,
    pub continuation_factor: f64,
    /// Windowed relative change that ends the continuation.
    pub tol: f64,
    /// Absolute `[d_min, d_max]`; defaults to `[5e-4, 0.1]·extent`.
    pub window: Option<[f64; 2]>,
    pub newton_tol: f64,
    pub eps_reg: Option<f64>,
    /// Lower limit of `F = ∫ f`.
    pub primitive_lower_limit: Option<f64>,
    pub eps: f64,
    pub lambda: Vec<f64>,
    pub eta: Option<f64>,
    pub functional_rel_tol: f64,
    pub slope_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mesh = MeshParams::default();
        let newton = NewtonOptions::default();
        RunConfig {
            finest: mesh.finest,
            growth: mesh.growth,
            max_continuation: 40,
            continuation_factor: 4.0,
            tol: 1e-7,
            window: None,
            newton_tol: newton.tol,
            eps_reg: None,
            primitive_lower_limit: None,
            eps: 0.05,
            lambda: vec![0.0, 0.5, 1.0],
            eta: None,
            functional_rel_tol: 1e-3,
            slope_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the problem and run blocks in canonical JSON. The output
    /// block is excluded so that moving the output directory keeps the hash.
    pub fn spec_hash(&self) -> String {
        let canonical = serde_json::to_string(&(&self.problem, &self.run)).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build(&self) -> Result<Setup> {
        let pr = &self.problem;
        let p = pr.p;
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Inadmissible(format!("p = {p} must satisfy 1 < p < ∞")));
        }
        let nonlinearity = build_nonlinearity(&pr.nonlinearity)?;
        let kernel = build_kernel(&pr.kernel)?;
        let potential = match &pr.potential.a {
            None => PotentialModel::affine(kernel.clone(), pr.potential.a_coef, p),
            Some(src) => {
                let e = Expr::parse(src)?;
                let f: RealFn = Arc::new(move |d| e.eval(d));
                PotentialModel::custom(kernel.clone(), pr.potential.a_coef, f, format!("a(t) = {src}"))
            }
        };
        Ok(Setup { config: self.clone(), p, nonlinearity, kernel, potential, geometry: pr.geometry })
    }
}

fn expr_fn(src: &str) -> Result<RealFn> {
    let e = Expr::parse(src)?;
    Ok(Arc::new(move |t| e.eval(t)))
}

fn build_nonlinearity(c: &NonlinearityConfig) -> Result<Nonlinearity> {
    match c {
        NonlinearityConfig::Power { a0, sigma } => Nonlinearity::power(*a0, *sigma),
        NonlinearityConfig::PerturbedPower { a0, sigma, c, alpha } => {
            Nonlinearity::perturbed_power(*a0, *sigma, *c, *alpha)
        }
        NonlinearityConfig::Custom { a0, sigma, anchor, phi, phi_deriv, alpha, low_range_exponent } => {
            let pert = SlowPerturbation::custom(expr_fn(phi)?, expr_fn(phi_deriv)?, *alpha, phi.clone());
            Nonlinearity::new(*a0, *sigma, *anchor, pert, *low_range_exponent)
        }
    }
}

fn build_kernel(c: &KernelConfig) -> Result<WeightKernel> {
    match c {
        KernelConfig::Constant => Ok(WeightKernel::constant()),
        KernelConfig::Power { gamma } => WeightKernel::power(*gamma),
        KernelConfig::Exponential { beta } => WeightKernel::exponential(*beta),
        KernelConfig::Custom { k, k_deriv, big_k, nu, ell1, l1 } => {
            let big = big_k.as_deref().map(expr_fn).transpose()?;
            WeightKernel::custom(expr_fn(k)?, expr_fn(k_deriv)?, big, *nu, *ell1, *l1, format!("k(t) = {k}"))
        }
    }
}

/// Model objects built from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub p: f64,
    pub nonlinearity: Nonlinearity,
    pub kernel: WeightKernel,
    pub potential: PotentialModel,
    pub geometry: Geometry,
}

impl Setup {
    pub fn run(&self) -> &RunConfig {
        &self.config.run
    }

    pub fn constants(&self) -> Result<ExpansionConstants> {
        expansion::constants(
            self.p,
            self.nonlinearity.sigma(),
            self.kernel.ell1(),
            self.kernel.l1(),
            self.potential.a_coef(),
            self.geometry.dimension(),
        )
    }

    pub fn primitive(&self) -> Result<Primitive> {
        match self.run().primitive_lower_limit {
            Some(lower) => Primitive::with_lower_limit(self.nonlinearity.clone(), self.p, lower),
            None => Primitive::new(self.nonlinearity.clone(), self.p),
        }
    }

    pub fn h_transform(&self) -> Result<HTransform> {
        HTransform::new(ScaledTail::new(self.primitive()?)?)
    }

    pub fn expansion(&self) -> Result<BoundaryExpansion> {
        BoundaryExpansion::new(self.h_transform()?, self.potential.clone(), self.geometry.dimension())
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(self.p, self.geometry, self.potential.clone(), self.nonlinearity.clone())
    }

    pub fn window(&self) -> (f64, f64) {
        let ext = self.geometry.extent();
        match self.run().window {
            Some([a, b]) => (a, b),
            None => (5e-4 * ext, 0.1 * ext),
        }
    }

    pub fn eta(&self) -> f64 {
        self.run().eta.unwrap_or_else(|| expansion::default_eta(self.p))
    }

    pub fn large_options(&self, be: &BoundaryExpansion) -> Result<LargeOptions> {
        let run = self.run();
        let window = self.window();
        if !(window.0 > 0.0 && window.0 < window.1 && window.1 <= self.geometry.extent()) {
            return Err(Error::Config(format!("window {window:?} must satisfy 0 < d_min < d_max <= extent")));
        }
        Ok(LargeOptions {
            mesh: MeshParams { finest: run.finest, growth: run.growth },
            newton: NewtonOptions { tol: run.newton_tol, eps_reg: run.eps_reg, ..NewtonOptions::default() },
            window,
            tol: run.tol,
            max_steps: run.max_continuation,
            m0: be.leading(window.1)?,
            factor: run.continuation_factor,
        })
    }
}
