//! Regularly varying nonlinearities and weight kernels.
//!
//! A [`Nonlinearity`] is stored in normalised Karamata form
//! `f(u) = A0 u^(σ+1) exp(∫_B^u φ(t)/t dt)` for `u ≥ B`, extended below `B`
//! by `f(B) (u/B)^e`. A [`WeightKernel`] is a positive increasing function
//! `k` near `0⁺` with antiderivative `K` and the limits `ℓ₁`, `L₁` of
//! `(K/k)'` at the origin.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits::{self, LimitSeries};
use crate::quad;

/// Shared scalar function.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum PerturbationForm {
    Zero,
    /// φ(t) = c t^(-α)
    PowerDecay { c: f64, alpha: f64 },
    Custom { phi: RealFn, phi_deriv: RealFn, description: String },
}

/// The slowly varying part φ of a normalised regularly varying function.
#[derive(Clone)]
pub struct SlowPerturbation {
    form: PerturbationForm,
    alpha: Option<f64>,
}

impl fmt::Debug for SlowPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            PerturbationForm::Zero => write!(f, "SlowPerturbation(0)"),
            PerturbationForm::PowerDecay { c, alpha } => {
                write!(f, "SlowPerturbation({c} t^-{alpha})")
            }
            PerturbationForm::Custom { description, .. } => {
                write!(f, "SlowPerturbation({description})")
            }
        }
    }
}

impl SlowPerturbation {
    pub fn zero() -> Self {
        SlowPerturbation { form: PerturbationForm::Zero, alpha: None }
    }

    /// `φ(t) = c t^(-α)`, `α > 0`.
    pub fn power_decay(c: f64, alpha: f64) -> Result<Self> {
        if !(c.is_finite() && alpha.is_finite()) {
            return Err(Error::NonFinite("perturbation parameters".into()));
        }
        if alpha <= 0.0 {
            return Err(Error::Inadmissible(format!("decay index α = {alpha} must be positive")));
        }
        if c == 0.0 {
            return Ok(Self::zero());
        }
        Ok(SlowPerturbation { form: PerturbationForm::PowerDecay { c, alpha }, alpha: Some(alpha) })
    }

    /// User-supplied φ and φ'. `alpha` is the declared decay index, if known.
    pub fn custom(
        phi: RealFn,
        phi_deriv: RealFn,
        alpha: Option<f64>,
        description: impl Into<String>,
    ) -> Self {
        SlowPerturbation {
            form: PerturbationForm::Custom { phi, phi_deriv, description: description.into() },
            alpha,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, PerturbationForm::Zero)
    }

    /// Declared decay index; `None` for φ ≡ 0 ("not applicable") or when a
    /// custom φ did not declare one.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn phi(&self, t: f64) -> f64 {
        match &self.form {
            PerturbationForm::Zero => 0.0,
            PerturbationForm::PowerDecay { c, alpha } => c * t.powf(-alpha),
            PerturbationForm::Custom { phi, .. } => phi(t),
        }
    }

    pub fn phi_deriv(&self, t: f64) -> f64 {
        match &self.form {
            PerturbationForm::Zero => 0.0,
            PerturbationForm::PowerDecay { c, alpha } => -alpha * c * t.powf(-alpha - 1.0),
            PerturbationForm::Custom { phi_deriv, .. } => phi_deriv(t),
        }
    }

    /// `∫_a^b φ(t)/t dt` for `0 < a, b`.
    pub fn log_integral(&self, a: f64, b: f64) -> Result<f64> {
        match &self.form {
            PerturbationForm::Zero => Ok(0.0),
            PerturbationForm::PowerDecay { c, alpha } => {
                // c/α (a^-α - b^-α), written to avoid cancellation when a ≈ b.
                let la = -alpha * a.ln();
                let lb = -alpha * b.ln();
                Ok(c / alpha * la.exp() * (-(lb - la).exp_m1()))
            }
            PerturbationForm::Custom { phi, .. } => {
                if a == b {
                    return Ok(0.0);
                }
                let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
                let g = |v: f64| phi(v.exp());
                let q = quad::integrate(&g, lo.ln(), hi.ln(), 1e-15, 1e-12)?;
                Ok(sign * q.value)
            }
        }
    }

    pub fn description(&self) -> String {
        match &self.form {
            PerturbationForm::Zero => "0".into(),
            PerturbationForm::PowerDecay { c, alpha } => format!("{c}*t^(-{alpha})"),
            PerturbationForm::Custom { description, .. } => description.clone(),
        }
    }
}

/// Nonlinearity `f` in normalised regular-variation form.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    a0: f64,
    sigma: f64,
    b: f64,
    perturbation: SlowPerturbation,
    low_range_exponent: f64,
}

impl Nonlinearity {
    /// `low_range_exponent` defaults to `σ + 1`.
    pub fn new(
        a0: f64,
        sigma: f64,
        b: f64,
        perturbation: SlowPerturbation,
        low_range_exponent: Option<f64>,
    ) -> Result<Self> {
        let e = low_range_exponent.unwrap_or(sigma + 1.0);
        for (name, v) in [("A0", a0), ("sigma", sigma), ("B", b), ("low_range_exponent", e)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        if a0 <= 0.0 {
            return Err(Error::Inadmissible(format!("amplitude A0 = {a0} must be positive")));
        }
        if b <= 0.0 {
            return Err(Error::Inadmissible(format!("anchor B = {b} must be positive")));
        }
        if e <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "low-range exponent {e} must be positive so that f(0) = 0"
            )));
        }
        Ok(Nonlinearity { a0, sigma, b, perturbation, low_range_exponent: e })
    }

    /// `f(u) = A0 u^(σ+1)`.
    pub fn power(a0: f64, sigma: f64) -> Result<Self> {
        Self::new(a0, sigma, 1.0, SlowPerturbation::zero(), None)
    }

    /// `φ(t) = c t^(-α)` anchored at `B = 1`.
    pub fn perturbed_power(a0: f64, sigma: f64, c: f64, alpha: f64) -> Result<Self> {
        Self::new(a0, sigma, 1.0, SlowPerturbation::power_decay(c, alpha)?, None)
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn anchor(&self) -> f64 {
        self.b
    }
    pub fn perturbation(&self) -> &SlowPerturbation {
        &self.perturbation
    }
    pub fn low_range_exponent(&self) -> f64 {
        self.low_range_exponent
    }

    /// Regular-variation index `σ + 1`.
    pub fn index(&self) -> f64 {
        self.sigma + 1.0
    }

    /// `f(B) = A0 B^(σ+1)`.
    pub fn value_at_anchor(&self) -> f64 {
        self.a0 * self.b.powf(self.sigma + 1.0)
    }

    /// `f(u)`; errors on non-finite or negative input.
    pub fn eval_f(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("f argument {u}")));
        }
        if u < 0.0 {
            return Err(Error::Domain(format!("f argument {u} is negative")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        if u < self.b {
            return Ok(self.value_at_anchor() * (u / self.b).powf(self.low_range_exponent));
        }
        let integral = self.perturbation.log_integral(self.b, u)?;
        Ok(self.a0 * u.powf(self.sigma + 1.0) * integral.exp())
    }

    /// Infallible variant for inner loops; NaN signals a failed evaluation.
    pub fn value(&self, u: f64) -> f64 {
        self.eval_f(u).unwrap_or(f64::NAN)
    }

    /// `ln f(u)` for `u > 0`, finite where `f` itself would overflow.
    pub fn ln_value(&self, u: f64) -> f64 {
        if !(u > 0.0) || !u.is_finite() {
            return f64::NAN;
        }
        let ln_fb = self.a0.ln() + (self.sigma + 1.0) * self.b.ln();
        if u < self.b {
            return ln_fb + self.low_range_exponent * (u / self.b).ln();
        }
        let i = self.perturbation.log_integral(self.b, u).unwrap_or(f64::NAN);
        ln_fb + (self.sigma + 1.0) * (u / self.b).ln() + i
    }

    /// `f(u)^e` for `u > 0`, representable whenever the result is.
    pub fn pow_value(&self, u: f64, e: f64) -> f64 {
        if !(u > 0.0) || !u.is_finite() {
            return f64::NAN;
        }
        if u < self.b {
            return self.value_at_anchor().powf(e) * (u / self.b).powf(self.low_range_exponent * e);
        }
        let i = self.perturbation.log_integral(self.b, u).unwrap_or(f64::NAN);
        self.a0.powf(e) * u.powf((self.sigma + 1.0) * e) * (e * i).exp()
    }

    /// `f'(u)`.
    pub fn deriv(&self, u: f64) -> f64 {
        if u <= 0.0 {
            let e = self.low_range_exponent;
            let fb = self.value_at_anchor();
            return if e > 1.0 {
                0.0
            } else if e == 1.0 {
                fb / self.b
            } else {
                f64::INFINITY
            };
        }
        let f = self.value(u);
        if u < self.b {
            self.low_range_exponent * f / u
        } else {
            f * (self.sigma + 1.0 + self.perturbation.phi(u)) / u
        }
    }

    /// `u f'(u) / f(u)`, computed without forming `f`.
    pub fn elasticity(&self, u: f64) -> f64 {
        if u < self.b {
            self.low_range_exponent
        } else {
            self.sigma + 1.0 + self.perturbation.phi(u)
        }
    }

    /// `f(v) / f(u)` without forming the (possibly overflowing) values.
    pub fn ratio(&self, v: f64, u: f64) -> f64 {
        if v >= self.b && u >= self.b {
            let i = self.perturbation.log_integral(u, v).unwrap_or(f64::NAN);
            ((self.sigma + 1.0) * (v / u).ln() + i).exp()
        } else {
            self.value(v) / self.value(u)
        }
    }

    /// Samples `(f1)`: `f(0) = 0`, `f > 0` and strictly increasing on `grid`.
    pub fn check_f1(&self, grid: &[f64]) -> Result<()> {
        if self.value(0.0) != 0.0 {
            return Err(Error::Inadmissible("f(0) != 0".into()));
        }
        let mut prev = 0.0;
        for &u in grid.iter().filter(|&&u| u > 0.0) {
            let f = self.eval_f(u)?;
            if !(f > prev) {
                return Err(Error::Inadmissible(format!(
                    "(f1) fails: f not positive and increasing near u = {u:e}"
                )));
            }
            if u >= self.b && self.elasticity(u) <= 0.0 {
                return Err(Error::Inadmissible(format!(
                    "(f1) fails: σ + 1 + φ(u) <= 0 at u = {u:e}"
                )));
            }
            prev = f;
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "f(u) = {} u^{} exp(∫_{}^u φ/t), φ = {}",
            self.a0,
            self.sigma + 1.0,
            self.b,
            self.perturbation.description()
        )
    }
}

/// Per-ξ residual sequence `f(ξu)/f(u) - ξ^q`.
#[derive(Debug, Clone, Serialize)]
pub struct RvSeries {
    pub xi: f64,
    pub u_grid: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Grid points where an evaluation overflowed (excluded from the verdict).
    pub overflow: Vec<bool>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RvIndexReport {
    pub q: f64,
    pub tol: f64,
    pub series: Vec<RvSeries>,
    pub pass: bool,
}

/// Checks `f(ξu)/f(u) → ξ^q`: for each ξ the last residual must be below
/// `tol` and residual magnitudes non-increasing over the last three points.
pub fn check_rv_index<F: Fn(f64) -> f64>(
    f: F,
    q: f64,
    xi_grid: &[f64],
    u_grid: &[f64],
    tol: f64,
) -> Result<RvIndexReport> {
    if xi_grid.is_empty() || u_grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    if u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("u_grid must be increasing".into()));
    }
    let mut series = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let mut residuals = Vec::with_capacity(u_grid.len());
        let mut overflow = Vec::with_capacity(u_grid.len());
        for &u in u_grid {
            let (a, b) = (f(xi * u), f(u));
            let r = a / b - xi.powf(q);
            let bad = !(a.is_finite() && b.is_finite() && b != 0.0 && r.is_finite());
            overflow.push(bad);
            residuals.push(if bad { f64::NAN } else { r });
        }
        let finite: Vec<f64> = residuals.iter().copied().filter(|r| r.is_finite()).collect();
        let pass = match finite.last() {
            None => false,
            Some(last) => {
                let tail = &finite[finite.len().saturating_sub(3)..];
                last.abs() < tol
                    && tail.windows(2).all(|w| w[1].abs() <= w[0].abs() * (1.0 + 1e-12) + 1e-15)
            }
        };
        series.push(RvSeries { xi, u_grid: u_grid.to_vec(), residuals, overflow, pass });
    }
    let pass = series.iter().all(|s| s.pass);
    Ok(RvIndexReport { q, tol, series, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum F2Status {
    /// φ ≡ 0: the condition is vacuous.
    Exempt,
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct F2Report {
    pub status: F2Status,
    pub alpha_estimate: Option<f64>,
    pub alpha_declared: Option<f64>,
    /// Open window `((σ+2)/p - 1, σ+2)` for α.
    pub window: (f64, f64),
    /// `(α - lower, upper - α)`; both must be positive.
    pub margins: Option<(f64, f64)>,
    pub series: Option<LimitSeries>,
    pub note: String,
}

/// Condition on the decay of φ: `t φ'(t)/φ(t) → -α` with
/// `(σ+2)/p - 1 < α < σ + 2`.
pub fn check_f2(n: &Nonlinearity, p: f64) -> F2Report {
    let sigma = n.sigma();
    let window = ((sigma + 2.0) / p - 1.0, sigma + 2.0);
    let pert = n.perturbation();
    if pert.is_zero() {
        return F2Report {
            status: F2Status::Exempt,
            alpha_estimate: None,
            alpha_declared: None,
            window,
            margins: None,
            series: None,
            note: "exempt: pure power (φ ≡ 0)".into(),
        };
    }

    let grid: Vec<f64> = limits::decade_grid(1, 8).into_iter().map(|g| g * n.anchor()).collect();
    let values: Vec<f64> = grid.iter().map(|&t| t * pert.phi_deriv(t) / pert.phi(t)).collect();
    let noise: Vec<f64> = values.iter().map(|v| 1e-13 * (1.0 + v.abs())).collect();
    let (extrap, _) = limits::extrapolate(&values, &noise);
    let alpha_est = -extrap;
    let claimed = match pert.alpha() {
        Some(a) => -a,
        None => extrap,
    };
    let series = limits::assess("t φ'(t)/φ(t)", grid, values, noise, claimed, limits::LIMIT_TOL);

    let slack = 1e-9 * (1.0 + alpha_est.abs());
    let margins = (alpha_est - window.0, window.1 - alpha_est);
    let inside = margins.0 > slack && margins.1 > slack;
    let mut notes = Vec::new();
    if !series.pass {
        notes.push(format!("limit of tφ'/φ not established: {}", series.note));
    }
    if !inside {
        notes.push(format!(
            "α = {alpha_est} outside the open window ({}, {})",
            window.0, window.1
        ));
    }
    F2Report {
        status: if inside && series.pass { F2Status::Pass } else { F2Status::Fail },
        alpha_estimate: Some(alpha_est),
        alpha_declared: pert.alpha(),
        window,
        margins: Some(margins),
        series: Some(series),
        note: notes.join("; "),
    }
}

#[derive(Clone)]
enum KernelForm {
    Constant,
    Power { gamma: f64 },
    Exponential { beta: f64 },
    Custom { k: RealFn, k_deriv: RealFn, big_k: Option<RealFn>, description: String },
}

/// Weight kernel `k` of class 𝒦₀,₁ with antiderivative `K(t) = ∫₀ᵗ k`.
#[derive(Clone)]
pub struct WeightKernel {
    form: KernelForm,
    nu: f64,
    ell1: f64,
    l1: f64,
}

impl fmt::Debug for WeightKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightKernel({}, ℓ₁={}, L₁={})", self.description(), self.ell1, self.l1)
    }
}

impl WeightKernel {
    /// `k ≡ 1`: `ℓ₁ = 1`, `L₁ = 0`.
    pub fn constant() -> Self {
        WeightKernel { form: KernelForm::Constant, nu: f64::INFINITY, ell1: 1.0, l1: 0.0 }
    }

    /// `k(t) = t^γ`: `K/k = t/(γ+1)`, so `ℓ₁ = 1/(γ+1)` and `L₁ = 0`.
    pub fn power(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Inadmissible(format!("kernel exponent γ = {gamma} must be >= 0")));
        }
        if gamma == 0.0 {
            return Ok(Self::constant());
        }
        Ok(WeightKernel {
            form: KernelForm::Power { gamma },
            nu: f64::INFINITY,
            ell1: 1.0 / (gamma + 1.0),
            l1: 0.0,
        })
    }

    /// `k(t) = e^(βt)`: `(K/k)' = e^(-βt)`, so `ℓ₁ = 1`, `L₁ = -β`.
    pub fn exponential(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Inadmissible(format!(
                "exponential kernel rate β = {beta} must be >= 0 (k increasing)"
            )));
        }
        if beta == 0.0 {
            return Ok(Self::constant());
        }
        Ok(WeightKernel { form: KernelForm::Exponential { beta }, nu: f64::INFINITY, ell1: 1.0, l1: -beta })
    }

    /// User-supplied kernel. Missing `ell1`/`l1` are estimated with
    /// [`kernel_limits`] on the default grid.
    pub fn custom(
        k: RealFn,
        k_deriv: RealFn,
        big_k: Option<RealFn>,
        nu: f64,
        ell1: Option<f64>,
        l1: Option<f64>,
        description: impl Into<String>,
    ) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::Inadmissible(format!("kernel domain bound ν = {nu} must be positive")));
        }
        let mut kernel = WeightKernel {
            form: KernelForm::Custom { k, k_deriv, big_k, description: description.into() },
            nu,
            ell1: ell1.unwrap_or(f64::NAN),
            l1: l1.unwrap_or(f64::NAN),
        };
        if ell1.is_none() || l1.is_none() {
            let est = kernel_limits(&kernel, &default_kernel_grid(nu))?;
            if ell1.is_none() {
                kernel.ell1 = est.ell1_estimate;
            }
            if l1.is_none() {
                kernel.l1 = est.l1_estimate;
            }
        }
        Ok(kernel)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn ell1(&self) -> f64 {
        self.ell1
    }
    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn k(&self, t: f64) -> f64 {
        match &self.form {
            KernelForm::Constant => 1.0,
            KernelForm::Power { gamma } => t.powf(*gamma),
            KernelForm::Exponential { beta } => (beta * t).exp(),
            KernelForm::Custom { k, .. } => k(t),
        }
    }

    pub fn k_deriv(&self, t: f64) -> f64 {
        match &self.form {
            KernelForm::Constant => 0.0,
            KernelForm::Power { gamma } => gamma * t.powf(gamma - 1.0),
            KernelForm::Exponential { beta } => beta * (beta * t).exp(),
            KernelForm::Custom { k_deriv, .. } => k_deriv(t),
        }
    }

    pub fn has_closed_form_antiderivative(&self) -> bool {
        !matches!(&self.form, KernelForm::Custom { big_k: None, .. })
    }

    /// `K(t) = ∫₀ᵗ k(s) ds`.
    pub fn big_k(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("K argument {t}")));
        }
        if t < 0.0 || t > self.nu {
            return Err(Error::Domain(format!("K argument {t} outside (0, ν = {})", self.nu)));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(match &self.form {
            KernelForm::Constant => t,
            KernelForm::Power { gamma } => t.powf(gamma + 1.0) / (gamma + 1.0),
            KernelForm::Exponential { beta } => (beta * t).exp_m1() / beta,
            KernelForm::Custom { big_k: Some(kk), .. } => kk(t),
            KernelForm::Custom { k, big_k: None, .. } => graded_antiderivative(k.as_ref(), t)?,
        })
    }

    /// `K(t)` by quadrature, regardless of any closed form.
    pub fn big_k_quadrature(&self, t: f64) -> Result<f64> {
        let k = |s: f64| self.k(s);
        graded_antiderivative(&k, t)
    }

    /// `(K/k)'(t) = 1 - K k'/k²`.
    pub fn quotient_deriv(&self, t: f64) -> Result<f64> {
        let k = self.k(t);
        if !(k > 0.0) {
            return Err(Error::Domain(format!("kernel vanishes at t = {t}")));
        }
        Ok(1.0 - self.big_k(t)? * self.k_deriv(t) / (k * k))
    }

    pub fn description(&self) -> String {
        match &self.form {
            KernelForm::Constant => "k = 1".into(),
            KernelForm::Power { gamma } => format!("k = t^{gamma}"),
            KernelForm::Exponential { beta } => format!("k = exp({beta} t)"),
            KernelForm::Custom { description, .. } => description.clone(),
        }
    }
}

/// `∫₀ᵗ k` on dyadic pieces `[t/2^(j+1), t/2^j]`, graded toward the origin
/// where `k` may vanish or lose smoothness.
fn graded_antiderivative<F: Fn(f64) -> f64 + ?Sized>(k: &F, t: f64) -> Result<f64> {
    let g = |s: f64| k(s);
    let mut sum = 0.0;
    let mut hi = t;
    for _ in 0..400 {
        let lo = 0.5 * hi;
        let q = quad::integrate(&g, lo, hi, 0.0, 1e-13)?;
        sum += q.value;
        // k increasing: the remainder over (0, lo) is at most k(lo) lo.
        if k(lo).abs() * lo <= 1e-17 * sum.abs() || lo == 0.0 {
            break;
        }
        hi = lo;
    }
    if !sum.is_finite() {
        return Err(Error::Quadrature(format!("K({t}) is not finite")));
    }
    Ok(sum)
}

pub fn default_kernel_grid(nu: f64) -> Vec<f64> {
    let start = 0.1f64.min(0.5 * nu);
    limits::geometric_grid(start, 0.5, 24)
}

/// Estimates of `ℓ₁` and `L₁` with their evidence.
#[derive(Debug, Clone, Serialize)]
pub struct KernelLimits {
    pub ell1_estimate: f64,
    pub l1_estimate: f64,
    /// `(K/k)'` along the grid.
    pub ell1_series: LimitSeries,
    /// Difference quotients of `(K/k)'` along the grid.
    pub l1_series: LimitSeries,
    /// `ℓ₀ = lim K/k` along the grid (must be 0).
    pub ell0_series: LimitSeries,
    pub ell1_in_unit_interval: bool,
    pub pass: bool,
}

pub fn kernel_limits(kernel: &WeightKernel, t_grid: &[f64]) -> Result<KernelLimits> {
    if t_grid.len() < 3 {
        return Err(Error::Domain("kernel grid needs at least 3 points".into()));
    }
    if t_grid.windows(2).any(|w| w[1] >= w[0]) || t_grid[0] >= kernel.nu() || t_grid[t_grid.len() - 1] <= 0.0 {
        return Err(Error::Domain("t_grid must be strictly decreasing inside (0, ν)".into()));
    }
    let mut q = Vec::with_capacity(t_grid.len());
    let mut q_noise = Vec::with_capacity(t_grid.len());
    let mut ell0 = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let k = kernel.k(t);
        if !(k > 0.0) {
            return Err(Error::Domain(format!("kernel vanishes at t = {t}")));
        }
        let big_k = kernel.big_k(t)?;
        let prod = big_k * kernel.k_deriv(t) / (k * k);
        q.push(1.0 - prod);
        let rel = if kernel.has_closed_form_antiderivative() { 1e-15 } else { 1e-12 };
        q_noise.push(8.0 * rel * (1.0 + prod.abs()));
        ell0.push(big_k / k);
    }

    let (ell1_est, _) = limits::extrapolate(&q, &q_noise);
    let declared_ell1 = kernel.ell1();
    let claimed_ell1 = if declared_ell1.is_finite() { declared_ell1 } else { ell1_est };
    let ell1_series = limits::assess(
        "(K/k)'(t)",
        t_grid.to_vec(),
        q.clone(),
        q_noise.clone(),
        claimed_ell1,
        limits::LIMIT_TOL,
    );

    let mut slopes = Vec::with_capacity(t_grid.len() - 1);
    let mut slope_noise = Vec::with_capacity(t_grid.len() - 1);
    let mut mids = Vec::with_capacity(t_grid.len() - 1);
    for j in 1..t_grid.len() {
        let dt = t_grid[j - 1] - t_grid[j];
        slopes.push((q[j - 1] - q[j]) / dt);
        slope_noise.push((q_noise[j - 1] + q_noise[j]) / dt);
        mids.push(t_grid[j]);
    }
    let (l1_est, _) = limits::extrapolate(&slopes, &slope_noise);
    let declared_l1 = kernel.l1();
    let claimed_l1 = if declared_l1.is_finite() { declared_l1 } else { l1_est };
    let l1_series =
        limits::assess("t⁻¹[(K/k)' - ℓ₁]", mids, slopes, slope_noise, claimed_l1, limits::LIMIT_TOL);

    let ell0_noise = ell0.iter().map(|v| 1e-14 * v.abs()).collect();
    let ell0_series = limits::assess("K/k", t_grid.to_vec(), ell0, ell0_noise, 0.0, limits::LIMIT_TOL);

    let slack = limits::LIMIT_TOL;
    let in_unit = ell1_est >= -slack && ell1_est <= 1.0 + slack;
    let pass = in_unit && ell1_series.pass && l1_series.pass && ell0_series.pass;
    Ok(KernelLimits {
        ell1_estimate: ell1_est,
        l1_estimate: l1_est,
        ell1_series,
        l1_series,
        ell0_series,
        ell1_in_unit_interval: in_unit,
        pass,
    })
}

/// Potential `a(d)` with `a = k^p (1 + A d + o(d))` as `d → 0⁺`.
#[derive(Clone)]
pub struct PotentialModel {
    kernel: WeightKernel,
    a_coef: f64,
    exact: RealFn,
    description: String,
}

impl fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PotentialModel({}, A={})", self.description, self.a_coef)
    }
}

impl PotentialModel {
    /// `a(d) = k(d)^p (1 + A d)` exactly.
    pub fn affine(kernel: WeightKernel, a_coef: f64, p: f64) -> Self {
        let k = kernel.clone();
        let exact: RealFn = Arc::new(move |d: f64| k.k(d).powf(p) * (1.0 + a_coef * d));
        let description = format!("({})^{p} (1 + {a_coef} d)", kernel.description());
        PotentialModel { kernel, a_coef, exact, description }
    }

    pub fn custom(kernel: WeightKernel, a_coef: f64, exact: RealFn, description: impl Into<String>) -> Self {
        PotentialModel { kernel, a_coef, exact, description: description.into() }
    }

    pub fn kernel(&self) -> &WeightKernel {
        &self.kernel
    }
    /// First-order coefficient `A`.
    pub fn a_coef(&self) -> f64 {
        self.a_coef
    }
    pub fn a(&self, d: f64) -> f64 {
        (self.exact)(d)
    }
    pub fn description(&self) -> &str {
        &self.description
    }

    /// Non-fatal remarks; `A <= 0` is accepted but outside the classical
    /// hypothesis `A > 0`.
    pub fn warnings(&self) -> Vec<String> {
        if self.a_coef <= 0.0 {
            vec![format!("potential coefficient A = {} is not positive", self.a_coef)]
        } else {
            Vec::new()
        }
    }

    /// `(a(d)/k^p(d) - 1 - A d)/d → 0` along a decreasing grid.
    pub fn check_expansion(&self, p: f64, d_grid: &[f64]) -> LimitSeries {
        let values: Vec<f64> = d_grid
            .iter()
            .map(|&d| (self.a(d) / self.kernel.k(d).powf(p) - 1.0 - self.a_coef * d) / d)
            .collect();
        let noise = d_grid.iter().map(|d| 1e-14 / d).collect();
        limits::assess("(a/k^p - 1 - A d)/d", d_grid.to_vec(), values, noise, 0.0, 1e-6)
    }

    /// `a > 0` on the sampled open interval `(0, extent]`.
    pub fn is_positive_on(&self, extent: f64, samples: usize) -> bool {
        (1..=samples).all(|i| {
            let d = extent * i as f64 / samples as f64;
            self.a(d) > 0.0
        })
    }
}
