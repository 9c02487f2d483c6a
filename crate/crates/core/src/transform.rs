//! The primitive `F`, the scaled tail `ℱ`, and the implicit transform `h`.
//!
//! ```text
//! F(t) = ∫₀ᵗ f
//! ℱ(t) = ((p-1)/p)^(1/p) ∫_t^∞ F(x)^(-1/p) dx
//! ℱ(h(t)) = t
//! ```
//!
//! `h` is evaluated by safeguarded Newton on `ln ℱ(e^v) = ln t`; its first
//! two derivatives come from closed forms in `F(h)` and `f(h)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::karamata::{Nonlinearity, WeightKernel};
use crate::limits::{self, LimitSeries, LIMIT_TOL};
use crate::quad;

const NODES_PER_OCTAVE: f64 = 4.0;
const MAX_NODES: usize = 8000;
/// Relative rounding level assumed for quantities built from `F` and `ℱ`.
const EVAL_NOISE: f64 = 1e-13;

/// `F(t) = ∫_{lower}^t f`, with `lower = 0` by default.
///
/// `F(x_j)/f(x_j)` is tabulated at `x_j = B 2^(j/4)` up to `1e300` on
/// construction; an evaluation adds one short Gauss–Kronrod piece. Values
/// are kept relative to `f` so that nothing overflows.
#[derive(Debug, Clone)]
pub struct Primitive {
    n: Nonlinearity,
    p: f64,
    lower: f64,
    lower_offset: f64,
    nodes: Vec<f64>,
    rho: Vec<f64>,
}

impl Primitive {
    pub fn new(n: Nonlinearity, p: f64) -> Result<Self> {
        Self::with_lower_limit(n, p, 0.0)
    }

    /// Shifts the lower integration limit (sensitivity studies only; the
    /// default `0` keeps `F(0) = 0`).
    pub fn with_lower_limit(n: Nonlinearity, p: f64, lower: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Inadmissible(format!("exponent p = {p} must satisfy 1 < p < ∞")));
        }
        if !(lower.is_finite() && lower >= 0.0) {
            return Err(Error::Domain(format!("F lower limit {lower} must be finite and >= 0")));
        }
        let b = n.anchor();
        let mut nodes = vec![b];
        let mut rho = vec![b / (n.low_range_exponent() + 1.0)];
        while nodes.len() < MAX_NODES {
            let j = nodes.len() - 1;
            let x1 = b * 2f64.powf((j + 1) as f64 / NODES_PER_OCTAVE);
            if !(x1 < 1e300) {
                break;
            }
            let x0 = nodes[j];
            let next = (rho[j] + relative_piece(&n, x0, x1)?) / n.ratio(x1, x0);
            if !next.is_finite() {
                return Err(Error::NonFinite(format!("F table at x = {x1:e}")));
            }
            nodes.push(x1);
            rho.push(next);
        }
        let mut prim = Primitive { n, p, lower, lower_offset: 0.0, nodes, rho };
        if lower > 0.0 {
            let (u, q) = prim.parts(lower)?;
            prim.lower_offset = prim.n.value(u) * q;
        }
        Ok(prim)
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn lower_limit(&self) -> f64 {
        self.lower
    }

    /// `(u, q)` with `∫₀^x f = f(u) q`.
    fn parts(&self, x: f64) -> Result<(f64, f64)> {
        let b = self.n.anchor();
        if x <= b {
            return Ok((x, x / (self.n.low_range_exponent() + 1.0)));
        }
        let j = (((x / b).log2() * NODES_PER_OCTAVE).floor() as usize).min(self.nodes.len() - 1);
        let x0 = self.nodes[j].min(x);
        Ok((x0, self.rho[j] + relative_piece(&self.n, x0, x)?))
    }

    /// `(u, q)` with `F(x) = f(u) q`, lower limit included.
    fn shifted_parts(&self, t: f64) -> Result<(f64, f64)> {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("F argument {t}")));
        }
        if t <= self.lower {
            return Err(Error::Domain(format!("F argument {t} must exceed the lower limit {}", self.lower)));
        }
        let (u, q) = self.parts(t)?;
        if self.lower_offset == 0.0 {
            Ok((u, q))
        } else {
            Ok((u, q - self.lower_offset * self.n.pow_value(u, -1.0)))
        }
    }

    /// `F(t)`.
    pub fn eval_big_f(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(-self.lower_offset);
        }
        if t < 0.0 {
            return Err(Error::Domain(format!("F argument {t} is negative")));
        }
        if t <= self.lower {
            let (u, q) = self.parts(t)?;
            return Ok(self.n.value(u) * q - self.lower_offset);
        }
        let (u, q) = self.shifted_parts(t)?;
        Ok(self.n.value(u) * q)
    }

    /// `F(t)^e` for `t > lower`, representable whenever the result is.
    pub fn pow_big_f(&self, t: f64, e: f64) -> Result<f64> {
        let (u, q) = self.shifted_parts(t)?;
        Ok(self.n.pow_value(u, e) * q.powf(e))
    }

    fn value(&self, t: f64) -> f64 {
        self.eval_big_f(t).unwrap_or(f64::NAN)
    }

    /// `t f(t) / F(t)`, which tends to `σ + 2`.
    pub fn index_quotient(&self, t: f64) -> f64 {
        match self.shifted_parts(t) {
            Ok((u, q)) => t * self.n.ratio(t, u) / q,
            Err(_) => f64::NAN,
        }
    }

    /// Limit `t f(t)/F(t) → σ+2` on a geometric grid to `1e8 B`.
    pub fn rv_consistency(&self) -> LimitSeries {
        let grid: Vec<f64> = limits::decade_grid(1, 8).into_iter().map(|g| g * self.n.anchor()).collect();
        let values: Vec<f64> = grid.iter().map(|&t| self.index_quotient(t)).collect();
        let noise = values.iter().map(|v| EVAL_NOISE * v.abs()).collect();
        limits::assess("t f(t)/F(t)", grid, values, noise, self.n.sigma() + 2.0, LIMIT_TOL)
    }
}

/// `∫_{x0}^{x} f(u)/f(x0) du` over a short interval.
fn relative_piece(n: &Nonlinearity, x0: f64, x: f64) -> Result<f64> {
    let g = |u: f64| n.ratio(u, x0);
    short_integral(&g, x0, x)
}

/// Integral over a short interval: one Kronrod rule, adaptive if needed.
fn short_integral<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, err) = quad::gk21(f, a, b);
    if v.is_finite() && err <= 1e-15 * v.abs() {
        return Ok(v);
    }
    Ok(quad::integrate(f, a, b, 0.0, 1e-14)?.value)
}

/// Keller–Osserman verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Converges,
    Diverges,
}

#[derive(Debug, Clone, Serialize)]
pub struct KellerOssermanReport {
    /// Index test: converges iff `(σ+2)/p > 1`.
    pub analytic: Classification,
    pub numeric: Classification,
    /// `(T, ∫_T^{2T} F^(-1/p))` on a geometric grid.
    pub tail_integrals: Vec<(f64, f64)>,
    /// Observed decay exponent `-log₄ J(4T)/J(T)`; tends to `(σ+2)/p - 1`.
    pub decay_exponent: f64,
    pub agree: bool,
}

/// Tests `∫^∞ F^(-1/p) < ∞` analytically and from tail integrals.
pub fn keller_osserman(prim: &Primitive) -> Result<KellerOssermanReport> {
    let n = prim.nonlinearity();
    let p = prim.p();
    let analytic = if (n.sigma() + 2.0) / p > 1.0 {
        Classification::Converges
    } else {
        Classification::Diverges
    };
    let g = |x: f64| prim.value(x).powf(-1.0 / p);
    let start = n.anchor().max(prim.lower_limit() * 2.0);
    let mut tail_integrals = Vec::new();
    for j in 1..=12 {
        let t = start * 4f64.powi(j);
        let q = quad::integrate_log(&g, t, 2.0 * t, &[], 0.0, 1e-13)?;
        tail_integrals.push((t, q.value));
    }
    let exps: Vec<f64> = tail_integrals
        .windows(2)
        .map(|w| -(w[1].1 / w[0].1).ln() / 4f64.ln())
        .collect();
    let noise = vec![1e-12; exps.len()];
    let (decay_exponent, _) = limits::extrapolate(&exps, &noise);
    let numeric = if decay_exponent > 1e-6 {
        Classification::Converges
    } else {
        Classification::Diverges
    };
    Ok(KellerOssermanReport {
        analytic,
        numeric,
        tail_integrals,
        decay_exponent,
        agree: analytic == numeric,
    })
}

/// `ℱ(t) = ((p-1)/p)^(1/p) ∫_t^∞ F^(-1/p)`.
///
/// The integral splits at `S`: `[t, S]` by adaptive quadrature in `ln x`,
/// `(S, ∞)` by `x = S e^y` over unit-decay chunks with a geometric
/// remainder from the regular-variation decay.
#[derive(Debug, Clone)]
pub struct ScaledTail {
    prim: Primitive,
    c_p: f64,
    split: f64,
    tail_at_split: f64,
    /// Chunk width in `y`, about one e-fold of the integrand.
    chunk_width: f64,
}

impl ScaledTail {
    pub fn new(prim: Primitive) -> Result<Self> {
        let n = prim.nonlinearity();
        let p = prim.p();
        let decay = (n.sigma() + 2.0) / p - 1.0;
        if decay <= 0.0 {
            return Err(Error::DivergentTail(format!(
                "(σ+2)/p = {} <= 1 for σ = {}, p = {p}",
                (n.sigma() + 2.0) / p,
                n.sigma()
            )));
        }
        let c_p = ((p - 1.0) / p).powf(1.0 / p);
        let split = Self::choose_split(&prim);
        let chunk_width = (1.0 / decay).clamp(0.5, 50.0);
        let mut tail = ScaledTail { prim, c_p, split, tail_at_split: 0.0, chunk_width };
        tail.tail_at_split = tail.chunked_tail(split)?;
        Ok(tail)
    }

    /// First `B 2^j` where `t f/F` is within 1% of `σ+2`, capped at `1e8`.
    fn choose_split(prim: &Primitive) -> f64 {
        let n = prim.nonlinearity();
        let target = n.sigma() + 2.0;
        let floor = n.anchor().max(prim.lower_limit() * 2.0);
        let cap = 1e8f64.max(floor);
        let mut x = floor;
        while x < cap {
            let q = prim.index_quotient(x);
            if (q - target).abs() < 0.01 * target {
                return x;
            }
            x *= 2.0;
        }
        cap
    }

    pub fn primitive(&self) -> &Primitive {
        &self.prim
    }
    pub fn split_point(&self) -> f64 {
        self.split
    }
    pub fn p(&self) -> f64 {
        self.prim.p()
    }
    pub fn nonlinearity(&self) -> &Nonlinearity {
        self.prim.nonlinearity()
    }

    fn integrand(&self, x: f64) -> f64 {
        self.prim.pow_big_f(x, -1.0 / self.p()).unwrap_or(f64::NAN)
    }

    /// `∫_{x0}^∞ F^(-1/p)` for `x0` in the regular-variation regime.
    fn chunked_tail(&self, x0: f64) -> Result<f64> {
        let w = self.chunk_width;
        let g = |y: f64| {
            let x = x0 * y.exp();
            x * self.integrand(x)
        };
        let mut sum = 0.0;
        let mut prev: Option<f64> = None;
        for k in 0..5000 {
            let (a, b) = (k as f64 * w, (k + 1) as f64 * w);
            if !(x0 * b.exp() < 1e300) {
                return match prev {
                    Some(pc) if pc > 0.0 => Err(Error::Quadrature(format!(
                        "tail from {x0:e} reached the floating-point range with relative remainder {:e}",
                        pc / sum
                    ))),
                    _ => Err(Error::Quadrature(format!("tail from {x0:e} out of range"))),
                };
            }
            let (mut c, err) = quad::gk21(&g, a, b);
            if !(err <= 1e-15 * c.abs()) {
                c = quad::integrate(&g, a, b, 1e-16 * sum, 1e-14)?.value;
            }
            if !c.is_finite() {
                return Err(Error::Quadrature(format!("tail chunk {k} from x0 = {x0:e} not finite")));
            }
            sum += c;
            if let Some(pc) = prev {
                let r = c / pc;
                if r < 1.0 {
                    let remainder = c * r / (1.0 - r);
                    if remainder <= 1e-14 * sum {
                        return Ok(sum + remainder);
                    }
                } else if k > 200 {
                    return Err(Error::DivergentTail(format!(
                        "tail chunks stopped decaying (ratio {r:.6}) beyond x = {:e}",
                        x0 * b.exp()
                    )));
                }
            }
            prev = Some(c);
        }
        Err(Error::Quadrature(format!("tail from {x0:e} did not settle within 5000 chunks")))
    }

    /// `ℱ(t)`.
    pub fn eval_cal_f(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("ℱ argument {t}")));
        }
        if t <= 0.0 || t <= self.prim.lower_limit() {
            return Err(Error::Domain(format!("ℱ argument {t} must exceed the F lower limit")));
        }
        let integral = if t < self.split {
            let g = |x: f64| self.integrand(x);
            let breaks = [self.nonlinearity().anchor()];
            quad::integrate_log(&g, t, self.split, &breaks, 1e-16 * self.tail_at_split, 1e-14)?.value + self.tail_at_split
        } else {
            self.chunked_tail(t)?
        };
        Ok(self.c_p * integral)
    }

    /// `ℱ'(t) = -((p-1)/p)^(1/p) F(t)^(-1/p)`.
    pub fn deriv(&self, t: f64) -> f64 {
        -self.c_p * self.integrand(t)
    }
}

/// `(h, h', h'')` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HDerivs {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

/// The decreasing bijection `h` with `ℱ(h(t)) = t`.
#[derive(Debug, Clone)]
pub struct HTransform {
    tail: ScaledTail,
    /// `(x, ℱ(x))`, `x` increasing and `ℱ` decreasing.
    table: Vec<(f64, f64)>,
    x_min: f64,
}

impl HTransform {
    pub fn new(tail: ScaledTail) -> Result<Self> {
        let b = tail.nonlinearity().anchor();
        let lower = tail.primitive().lower_limit();
        let x_min = if lower < b { b } else { lower * (1.0 + 1e-3) };
        let mut table = Vec::with_capacity(64);
        for i in 0..64 {
            let x = x_min * 10f64.powf(40.0 * i as f64 / 63.0);
            table.push((x, tail.eval_cal_f(x)?));
        }
        Ok(HTransform { tail, table, x_min })
    }

    /// Builds `F`, `ℱ` and `h` for `(f, p)`.
    pub fn from_nonlinearity(n: Nonlinearity, p: f64) -> Result<Self> {
        Self::new(ScaledTail::new(Primitive::new(n, p)?)?)
    }

    pub fn tail(&self) -> &ScaledTail {
        &self.tail
    }
    pub fn p(&self) -> f64 {
        self.tail.p()
    }
    pub fn nonlinearity(&self) -> &Nonlinearity {
        self.tail.nonlinearity()
    }

    /// Largest admissible argument, `ℱ` at the lower representation bound.
    pub fn t_max(&self) -> f64 {
        self.table[0].1
    }

    /// `h(t)`.
    pub fn eval_h(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("h argument {t}")));
        }
        if t <= 0.0 || t > self.t_max() {
            return Err(Error::Domain(format!(
                "h argument {t} outside working range (0, {}]",
                self.t_max()
            )));
        }
        if t == self.t_max() {
            return Ok(self.x_min);
        }
        // Bracket: ℱ(xa) >= t >= ℱ(xb).
        let (mut xa, mut fa, mut xb, mut fb);
        match self.table.iter().position(|&(_, ft)| ft <= t) {
            Some(i) => {
                (xa, fa) = self.table[i - 1];
                (xb, fb) = self.table[i];
            }
            None => {
                (xa, fa) = *self.table.last().unwrap();
                xb = xa;
                fb = fa;
                while fb > t {
                    xa = xb;
                    fa = fb;
                    xb *= 1e4;
                    if !xb.is_finite() || xb > 1e300 {
                        return Err(Error::Bracket(format!("no bracket for h({t:e})")));
                    }
                    fb = self.tail.eval_cal_f(xb)?;
                }
            }
        }
        let ln_t = t.ln();
        let (mut va, mut vb) = (xa.ln(), xb.ln());
        // Log-log interpolation for the first iterate.
        let mut v = if fa == fb {
            va
        } else {
            va + (ln_t - fa.ln()) * (vb - va) / (fb.ln() - fa.ln())
        };
        let mut best = (f64::INFINITY, v);
        for _ in 0..100 {
            let x = v.exp();
            let big = self.tail.eval_cal_f(x)?;
            let g = big.ln() - ln_t;
            if g.abs() < best.0 {
                best = (g.abs(), v);
            }
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                va = v;
            } else {
                vb = v;
            }
            let dg = x * self.tail.deriv(x) / big;
            let mut next = v - g / dg;
            if !(next > va && next < vb) || !next.is_finite() {
                next = 0.5 * (va + vb);
            }
            if (next - v).abs() <= 4.0 * f64::EPSILON * v.abs().max(1.0) || vb - va <= 4.0 * f64::EPSILON * v.abs() {
                v = next;
                break;
            }
            v = next;
        }
        let x = v.exp();
        let resid = (self.tail.eval_cal_f(x)? - t).abs();
        if resid > 1e-9 * t {
            // Fall back to the best iterate seen before reporting failure.
            let xb = best.1.exp();
            let rb = (self.tail.eval_cal_f(xb)? - t).abs();
            if rb <= 1e-9 * t {
                return Ok(xb);
            }
            return Err(Error::Bracket(format!("h({t:e}) residual {resid:e} above tolerance")));
        }
        Ok(x)
    }

    /// `h'(t) = -(p/(p-1))^(1/p) F(h)^(1/p)` and
    /// `h''(t) = (p-1)^(-2/p) p^((2-p)/p) f(h) F(h)^((2-p)/p)`.
    pub fn eval_h_derivs(&self, t: f64) -> Result<HDerivs> {
        let h = self.eval_h(t)?;
        Ok(self.derivs_at(h))
    }

    /// Derivatives from a known value `h = h(t)`.
    pub fn derivs_at(&self, h: f64) -> HDerivs {
        let p = self.p();
        let big_f = self.tail.primitive().value(h);
        let f = self.nonlinearity().value(h);
        let h1 = -(p / (p - 1.0)).powf(1.0 / p) * big_f.powf(1.0 / p);
        let h2 = (p - 1.0).powf(-2.0 / p) * p.powf((2.0 - p) / p) * f * big_f.powf((2.0 - p) / p);
        HDerivs { h, h1, h2 }
    }

    /// `h'(t) / (t h''(t))` evaluated through `h` only.
    pub fn derivative_quotient(&self, t: f64) -> Result<f64> {
        let d = self.eval_h_derivs(t)?;
        Ok(d.h1 / (t * d.h2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lemma2Part {
    /// Limits used before the lemma: `ℱ` index and the `F^{(p-1)/p}/(fℱ)` quotient.
    Pre,
    I,
    II,
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lemma3Part {
    I,
    II,
    III,
    IV,
    V,
}

/// Verdict for one part of a limit suite with its evidence.
#[derive(Debug, Clone, Serialize)]
pub struct PartReport<P> {
    pub part: P,
    pub series: Vec<LimitSeries>,
    pub pass: bool,
}

impl<P> PartReport<P> {
    fn new(part: P, series: Vec<LimitSeries>) -> Self {
        let pass = !series.is_empty() && series.iter().all(|s| s.pass);
        PartReport { part, series, pass }
    }
}

/// `t → ∞` limits for `f`, `F`, `ℱ` on `t = B·10^j`, `j = 1..8`.
pub fn verify_lemma2(tail: &ScaledTail, part: Lemma2Part, a_values: &[f64]) -> Result<PartReport<Lemma2Part>> {
    let n = tail.nonlinearity();
    let p = tail.p();
    let sigma = n.sigma();
    let s = sigma + 2.0 - p;
    let prim = tail.primitive();
    let grid: Vec<f64> = limits::decade_grid(1, 8).into_iter().map(|g| g * n.anchor()).collect();
    let calf: Vec<f64> = grid.iter().map(|&t| tail.eval_cal_f(t).unwrap_or(f64::NAN)).collect();

    let over_calf = |label: &str, pairs: Vec<(f64, f64)>, claimed: f64| {
        let values: Vec<f64> = pairs.iter().zip(&calf).map(|((a, b), c)| (a - b) / c).collect();
        let noise: Vec<f64> = pairs
            .iter()
            .zip(&calf)
            .map(|((a, b), c)| EVAL_NOISE * (a.abs() + b.abs()) / c)
            .collect();
        limits::assess(label, grid.clone(), values, noise, claimed, LIMIT_TOL)
    };
    let plain = |label: &str, values: Vec<f64>, claimed: f64| {
        let noise = values.iter().map(|v| EVAL_NOISE * v.abs()).collect();
        limits::assess(label, grid.clone(), values, noise, claimed, LIMIT_TOL)
    };

    let series = match part {
        Lemma2Part::Pre => {
            let idx: Vec<f64> = grid.iter().zip(&calf).map(|(&t, c)| t * tail.deriv(t) / c).collect();
            let quot: Vec<f64> = grid
                .iter()
                .zip(&calf)
                .map(|(&t, c)| prim.value(t).powf((p - 1.0) / p) / (n.value(t) * c))
                .collect();
            let quot_claim = (p / (p - 1.0)).powf(1.0 / p) * (1.0 - p / (sigma + 2.0)) / p;
            vec![
                prim.rv_consistency(),
                plain("t ℱ'(t)/ℱ(t)", idx, 1.0 - (sigma + 2.0) / p),
                plain("F^((p-1)/p)/(f ℱ)", quot, quot_claim),
            ]
        }
        Lemma2Part::I => {
            let elast: Vec<(f64, f64)> = grid.iter().map(|&t| (n.elasticity(t), sigma + 1.0)).collect();
            let ratio: Vec<(f64, f64)> = grid
                .iter()
                .map(|&t| (prim.value(t) / (t * n.value(t)), 1.0 / (sigma + 2.0)))
                .collect();
            vec![
                over_calf("(t f'/f - σ - 1)/ℱ", elast, 0.0),
                over_calf("(F/(t f) - 1/(σ+2))/ℱ", ratio, 0.0),
            ]
        }
        Lemma2Part::II => {
            let target = s / ((p - 1.0) * (sigma + 2.0));
            let c = (p / (p - 1.0)).powf((p - 1.0) / p);
            let pairs: Vec<(f64, f64)> = grid
                .iter()
                .zip(&calf)
                .map(|(&t, cf)| (c * prim.value(t).powf((p - 1.0) / p) / (n.value(t) * cf), target))
                .collect();
            vec![over_calf("((p/(p-1))^((p-1)/p) F^((p-1)/p)/(fℱ) - (σ+2-p)/((p-1)(σ+2)))/ℱ", pairs, 0.0)]
        }
        Lemma2Part::III => {
            if a_values.is_empty() || a_values.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::Domain("part (iii) needs positive a values".into()));
            }
            a_values
                .iter()
                .map(|&a| {
                    let pairs: Vec<(f64, f64)> = grid
                        .iter()
                        .map(|&t| (n.ratio(a * t, t) / a.powf(p - 1.0), a.powf(s)))
                        .collect();
                    over_calf(&format!("(f(at)/(a^(p-1) f(t)) - a^(σ+2-p))/ℱ, a = {a}"), pairs, 0.0)
                })
                .collect()
        }
    };
    Ok(PartReport::new(part, series))
}

/// Default tolerance for a transform-limit part.
pub fn lemma3_tolerance(part: Lemma3Part) -> f64 {
    match part {
        Lemma3Part::I | Lemma3Part::II | Lemma3Part::III => LIMIT_TOL,
        Lemma3Part::IV | Lemma3Part::V => 1e-4,
    }
}

/// `t → 0⁺` limits of `h` on `t = 10^-1 .. 10^-7`.
pub fn verify_lemma3(
    ht: &HTransform,
    kernel: &WeightKernel,
    xi0: f64,
    part: Lemma3Part,
) -> Result<PartReport<Lemma3Part>> {
    verify_lemma3_with_tol(ht, kernel, xi0, part, lemma3_tolerance(part))
}

pub fn verify_lemma3_with_tol(
    ht: &HTransform,
    kernel: &WeightKernel,
    xi0: f64,
    part: Lemma3Part,
    tol: f64,
) -> Result<PartReport<Lemma3Part>> {
    let n = ht.nonlinearity();
    let p = ht.p();
    let sigma = n.sigma();
    let s = sigma + 2.0 - p;
    let grid: Vec<f64> = limits::decade_grid(-1, -7).into_iter().filter(|&t| t < ht.t_max()).collect();
    if grid.len() < 3 {
        return Err(Error::Domain("working range of h too small for the t-grid".into()));
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut noise = Vec::with_capacity(grid.len());
    let (label, claimed) = match part {
        Lemma3Part::I => ("t h'/h", -p / s),
        Lemma3Part::II => ("h'/(t h'')", -s / (sigma + 2.0)),
        Lemma3Part::III => ("h/(t² h'')", s * s / (p * (sigma + 2.0))),
        Lemma3Part::IV => ("(h'/(t h'') + (σ+2-p)/(σ+2))/t", 0.0),
        Lemma3Part::V => ("t⁻¹(1 + (k'K/k²)(h'(K)/(K h''(K))) - f(ξ₀h)/((p-1)ξ₀^(p-1) f(h)))", s * kernel.l1() / (sigma + 2.0)),
    };

    if part == Lemma3Part::V {
        let ell1 = kernel.ell1();
        let xi0_kernel = ((p - 1.0) * (p + ell1 * s) / (sigma + 2.0)).powf(1.0 / s);
        if (xi0 - xi0_kernel).abs() > 1e-12 * xi0_kernel {
            return Err(Error::Inadmissible(format!(
                "ξ₀ = {xi0} inconsistent with kernel ℓ₁ = {ell1} (expected {xi0_kernel})"
            )));
        }
    }

    for &t in &grid {
        let (v, nz) = match part {
            Lemma3Part::I => {
                let d = ht.eval_h_derivs(t)?;
                let v = t * d.h1 / d.h;
                (v, EVAL_NOISE * v.abs())
            }
            Lemma3Part::II => {
                let v = ht.derivative_quotient(t)?;
                (v, EVAL_NOISE * v.abs())
            }
            Lemma3Part::III => {
                let d = ht.eval_h_derivs(t)?;
                let v = d.h / (t * t * d.h2);
                (v, EVAL_NOISE * v.abs())
            }
            Lemma3Part::IV => {
                let q = ht.derivative_quotient(t)?;
                let c = s / (sigma + 2.0);
                ((q + c) / t, EVAL_NOISE * (q.abs() + c) / t)
            }
            Lemma3Part::V => {
                let big_k = kernel.big_k(t)?;
                let k = kernel.k(t);
                let kd = kernel.k_deriv(t);
                let x = kd * big_k / (k * k) * ht.derivative_quotient(big_k)?;
                let h = ht.eval_h(big_k)?;
                let y = n.ratio(xi0 * h, h) / ((p - 1.0) * xi0.powf(p - 1.0));
                ((1.0 + x - y) / t, EVAL_NOISE * (1.0 + x.abs() + y.abs()) / t)
            }
        };
        values.push(v);
        noise.push(nz);
    }
    let series = limits::assess(label, grid, values, noise, claimed, tol);
    Ok(PartReport::new(part, vec![series]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn cube_h(p: f64) -> HTransform {
        HTransform::from_nonlinearity(Nonlinearity::power(1.0, 2.0).unwrap(), p).unwrap()
    }

    #[test]
    fn primitive_of_cube() {
        let prim = Primitive::new(Nonlinearity::power(1.0, 2.0).unwrap(), 2.0).unwrap();
        assert_eq!(prim.eval_big_f(0.0).unwrap(), 0.0);
        assert!((prim.eval_big_f(2.0).unwrap() - 4.0).abs() < 1e-14);
        assert!((prim.eval_big_f(1e6).unwrap() - 0.25e24).abs() < 1e-13 * 0.25e24);
        assert!(prim.eval_big_f(f64::INFINITY).is_err());
        assert!(prim.eval_big_f(-1.0).is_err());
    }

    #[test]
    fn lower_limit_shifts_primitive() {
        let n = Nonlinearity::power(1.0, 2.0).unwrap();
        let prim = Primitive::with_lower_limit(n, 2.0, 1.0).unwrap();
        assert!((prim.eval_big_f(2.0).unwrap() - 3.75).abs() < 1e-14);
    }

    #[test]
    fn calf_closed_forms() {
        let t2 = ScaledTail::new(Primitive::new(Nonlinearity::power(1.0, 2.0).unwrap(), 2.0).unwrap()).unwrap();
        assert!((t2.eval_cal_f(2.0).unwrap() - SQRT_2 / 2.0).abs() < 1e-14);
        assert!((t2.eval_cal_f(SQRT_2).unwrap() - 1.0).abs() < 1e-14);
        // Below the anchor the integral runs through the extension.
        assert!((t2.eval_cal_f(0.3).unwrap() - SQRT_2 / 0.3).abs() < 1e-13);
        assert!(t2.eval_cal_f(0.0).is_err());

        // p = 3: ℱ(1) = (2/3)^(1/3) · 3 · 4^(1/3)
        let t3 = ScaledTail::new(Primitive::new(Nonlinearity::power(1.0, 2.0).unwrap(), 3.0).unwrap()).unwrap();
        let expect = (2.0f64 / 3.0).powf(1.0 / 3.0) * 3.0 * 4f64.powf(1.0 / 3.0);
        assert!((expect - 4.1602).abs() < 1e-4);
        assert!((t3.eval_cal_f(1.0).unwrap() - expect).abs() < 1e-13 * expect);
    }

    #[test]
    fn keller_osserman_examples() {
        let ko = |sigma: f64, p: f64| {
            keller_osserman(&Primitive::new(Nonlinearity::power(1.0, sigma).unwrap(), p).unwrap()).unwrap()
        };
        let r = ko(2.0, 2.0);
        assert_eq!(r.analytic, Classification::Converges);
        assert!(r.agree);
        assert!((r.decay_exponent - 1.0).abs() < 1e-8);
        // J(T) = √2 ln 2 for every T.
        let r = ko(0.0, 2.0);
        assert_eq!(r.analytic, Classification::Diverges);
        assert!(r.agree);
        for (_, j) in &r.tail_integrals {
            assert!((j - SQRT_2 * 2f64.ln()).abs() < 1e-12);
        }
        let r = ko(2.0, 3.0);
        assert_eq!(r.analytic, Classification::Converges);
        assert!(r.agree);
        assert!((r.decay_exponent - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn divergent_tail_is_rejected() {
        let prim = Primitive::new(Nonlinearity::power(1.0, 0.0).unwrap(), 2.0).unwrap();
        assert!(matches!(ScaledTail::new(prim), Err(Error::DivergentTail(_))));
    }

    #[test]
    fn h_closed_form_cube() {
        let ht = cube_h(2.0);
        assert!((ht.eval_h(0.1).unwrap() - 10.0 * SQRT_2).abs() < 1e-12);
        assert!((ht.eval_h(1.0).unwrap() - SQRT_2).abs() < 1e-14);
        let h = ht.eval_h(0.37).unwrap();
        assert!((ht.tail().eval_cal_f(h).unwrap() - 0.37).abs() < 1e-9 * 0.37);
        assert!(ht.eval_h(0.0).is_err());
        assert!(ht.eval_h(10.0).is_err());
    }

    #[test]
    fn h_derivatives_cube() {
        let ht = cube_h(2.0);
        let d = ht.eval_h_derivs(0.5).unwrap();
        assert!((d.h1 + 4.0 * SQRT_2).abs() < 1e-12);
        let d = ht.eval_h_derivs(1.0).unwrap();
        assert!((d.h2 - 2.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_match_h_prime() {
        let ht = HTransform::from_nonlinearity(Nonlinearity::perturbed_power(1.0, 2.0, 0.5, 2.0).unwrap(), 2.0)
            .unwrap();
        let t = 0.3;
        let exact = ht.eval_h_derivs(t).unwrap();
        let fd = |delta: f64| (ht.eval_h(t + delta).unwrap() - ht.eval_h(t - delta).unwrap()) / (2.0 * delta);
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&d| (fd(d) - exact.h1).abs()).collect();
        let slope1 = (errs[0] / errs[1]).log10();
        let slope2 = (errs[1] / errs[2]).log10();
        assert!((1.8..=2.2).contains(&slope1), "{errs:?}");
        assert!((1.8..=2.2).contains(&slope2), "{errs:?}");
    }

    #[test]
    fn lemma2_cube_identically_zero() {
        let ht = cube_h(2.0);
        for part in [Lemma2Part::Pre, Lemma2Part::I, Lemma2Part::II, Lemma2Part::III] {
            let r = verify_lemma2(ht.tail(), part, &[0.5, 2.0]).unwrap();
            assert!(r.pass, "{part:?}: {r:#?}");
        }
        let r = verify_lemma2(ht.tail(), Lemma2Part::III, &[2.0]).unwrap();
        assert!(r.series[0].values.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn lemma2_perturbed_part_i_matches_phi_over_calf() {
        let n = Nonlinearity::perturbed_power(1.0, 2.0, 1.0, 2.0).unwrap();
        let tail = ScaledTail::new(Primitive::new(n, 2.0).unwrap()).unwrap();
        let r = verify_lemma2(&tail, Lemma2Part::I, &[]).unwrap();
        assert!(r.pass, "{r:#?}");
        let s = &r.series[0];
        for ((t, v), nz) in s.grid.iter().zip(&s.values).zip(&s.noise) {
            let oracle = t.powi(-2) / tail.eval_cal_f(*t).unwrap();
            assert!((v - oracle).abs() < 1e-9 * oracle.abs() + 10.0 * nz, "{t}: {v} vs {oracle}");
        }
    }

    #[test]
    fn lemma3_cube_closed_form() {
        let ht = cube_h(2.0);
        let k = WeightKernel::constant();
        for part in [Lemma3Part::I, Lemma3Part::II, Lemma3Part::III, Lemma3Part::IV, Lemma3Part::V] {
            let r = verify_lemma3(&ht, &k, 1.0, part).unwrap();
            assert!(r.pass, "{part:?}: {r:#?}");
        }
        let r = verify_lemma3(&ht, &k, 1.0, Lemma3Part::I).unwrap();
        assert!(r.series[0].values.iter().all(|v| (v + 1.0).abs() < 1e-10));
        let r = verify_lemma3(&ht, &k, 1.0, Lemma3Part::III).unwrap();
        assert!(r.series[0].values.iter().all(|v| (v - 0.5).abs() < 1e-10));
    }

    #[test]
    fn lemma3_rejects_inconsistent_xi0() {
        let ht = cube_h(2.0);
        let r = verify_lemma3(&ht, &WeightKernel::constant(), 1.3, Lemma3Part::V);
        assert!(matches!(r, Err(Error::Inadmissible(_))));
    }

    #[test]
    fn types_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<HTransform>();
        assert_send_sync::<WeightKernel>();
    }
}
