//! Radial large solutions of `Δ_p u = a(d) f(u)` by continuation in the
//! Dirichlet level `M`.
//!
//! The truncated problem
//!
//! ```text
//! r^{1-N} (r^{N-1} Φ(u'))' = a f(u),   Φ(s) = |s|^{p-2} s,
//! u'(0) = 0,   u = M on the boundary
//! ```
//!
//! is discretized by finite volumes on a mesh graded geometrically toward
//! the boundary and solved by damped Newton. Distances to the boundary are
//! stored directly so that cells of size `1e-12` next to `d = 0` keep full
//! precision.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::BoundaryExpansion;
use crate::geometry::Geometry;
use crate::karamata::{Nonlinearity, PotentialModel};

/// `(p, geometry, a, f)`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub p: f64,
    pub geometry: Geometry,
    pub potential: PotentialModel,
    pub nonlinearity: Nonlinearity,
}

impl ProblemSpec {
    pub fn new(p: f64, geometry: Geometry, potential: PotentialModel, nonlinearity: Nonlinearity) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Inadmissible(format!("p = {p} must satisfy 1 < p < ∞")));
        }
        let sigma = nonlinearity.sigma();
        if sigma <= p - 2.0 {
            return Err(Error::Inadmissible(format!("σ = {sigma} must exceed p - 2 = {}", p - 2.0)));
        }
        if !potential.is_positive_on(geometry.extent(), 2000) {
            return Err(Error::Inadmissible(format!(
                "potential {} is not positive on the closed domain",
                potential.description()
            )));
        }
        Ok(ProblemSpec { p, geometry, potential, nonlinearity })
    }
}

/// Geometric grading: first cell `finest · extent`, ratio `growth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshParams {
    pub finest: f64,
    pub growth: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams { finest: 1e-12, growth: 1.01 }
    }
}

/// Nodes ordered from the centre (`i = 0`) to the boundary (`i = n`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mesh {
    pub params: MeshParams,
    pub extent: f64,
    /// Distance to the boundary, decreasing to `0`.
    pub d: Vec<f64>,
    /// Radial coordinate `extent - d`.
    pub r: Vec<f64>,
}

impl Mesh {
    pub fn graded(extent: f64, params: MeshParams) -> Result<Self> {
        let MeshParams { finest, growth } = params;
        if !(finest > 0.0 && finest < 0.5 && (1.0..2.0).contains(&growth)) {
            return Err(Error::MeshTooCoarse(format!("invalid mesh parameters finest = {finest}, growth = {growth}")));
        }
        let mut d = vec![0.0];
        let mut h = finest * extent;
        while *d.last().unwrap() + h < extent {
            d.push(d.last().unwrap() + h);
            h *= growth;
            if d.len() > 2_000_000 {
                return Err(Error::MeshTooCoarse("mesh exceeds two million nodes".into()));
            }
        }
        // Merge a short final cell into its neighbour.
        let n = d.len();
        if n >= 2 && extent - d[n - 1] < 0.5 * (d[n - 1] - d[n - 2]) {
            d.pop();
        }
        d.push(extent);
        if d.len() < 4 {
            return Err(Error::MeshTooCoarse(format!("only {} nodes", d.len())));
        }
        d.reverse();
        let r = d.iter().map(|&x| extent - x).collect();
        Ok(Mesh { params, extent, d, r })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Indices with `d` in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.d[i] >= lo && self.d[i] <= hi).collect()
    }
}

/// Newton controls for one truncated solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Flux regularization; `None` picks `1e-10 · max(u_centre, 1) / extent`.
    pub eps_reg: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 200, eps_reg: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialSolution {
    pub mesh: Mesh,
    /// Nodal values, the last one equal to the truncation level.
    pub u: Vec<f64>,
    /// `r^{N-1}`-free flux `Φ(u')` at the nodes.
    pub flux: Vec<f64>,
    pub truncation_level: f64,
    /// `max |G_i| / scale_i`, rounding-aware.
    pub residual: f64,
    pub newton_iterations: usize,
    pub eps_reg: f64,
}

impl RadialSolution {
    /// Writes `r,d,u,flux` with `#`-prefixed header lines.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# M = {:e}", self.truncation_level)?;
        writeln!(
            w,
            "# mesh: nodes = {}, finest = {:e}, growth = {}",
            self.mesh.len(),
            self.mesh.params.finest,
            self.mesh.params.growth
        )?;
        writeln!(w, "# residual = {:e}", self.residual)?;
        writeln!(w, "r,d,u,flux")?;
        for i in 0..self.mesh.len() {
            writeln!(w, "{:e},{:e},{:e},{:e}", self.mesh.r[i], self.mesh.d[i], self.u[i], self.flux[i])?;
        }
        Ok(())
    }
}

/// Regularized `Φ` and its derivative.
#[derive(Debug, Clone, Copy)]
struct Flux {
    p: f64,
    eps2: f64,
}

impl Flux {
    fn phi(&self, s: f64) -> f64 {
        if self.p == 2.0 {
            s
        } else {
            (s * s + self.eps2).powf(0.5 * (self.p - 2.0)) * s
        }
    }
    fn dphi(&self, s: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else {
            let q = s * s + self.eps2;
            q.powf(0.5 * (self.p - 4.0)) * ((self.p - 1.0) * s * s + self.eps2)
        }
    }
}

/// Precomputed cell geometry.
struct Cells {
    /// `Δ_i = d_i - d_{i+1}` for `i = 0..n-1`.
    spacing: Vec<f64>,
    /// `r^m` at face `i + 1/2`.
    face_weight: Vec<f64>,
    /// Control volume of node `i < n`.
    volume: Vec<f64>,
    /// `a(d_i)`.
    potential: Vec<f64>,
}

impl Cells {
    fn new(mesh: &Mesh, m: usize, potential: &PotentialModel) -> Self {
        let n = mesh.len() - 1;
        let ext = mesh.extent;
        let spacing: Vec<f64> = (0..n).map(|i| mesh.d[i] - mesh.d[i + 1]).collect();
        let face_d: Vec<f64> = (0..n).map(|i| 0.5 * (mesh.d[i] + mesh.d[i + 1])).collect();
        let face_weight = face_d.iter().map(|&d| (ext - d).powi(m as i32)).collect();
        let volume = (0..n)
            .map(|i| {
                let (hi_d, lo_d) = (if i == 0 { ext } else { face_d[i - 1] }, face_d[i]);
                // b^{m+1} - a^{m+1} = (b - a) Σ b^{m-j} a^j with b - a taken from distances.
                let (a, b) = (ext - hi_d, ext - lo_d);
                let sum: f64 = (0..=m).map(|j| b.powi((m - j) as i32) * a.powi(j as i32)).sum();
                (hi_d - lo_d) * sum / (m + 1) as f64
            })
            .collect();
        let potential = (0..n).map(|i| potential.a(mesh.d[i])).collect();
        Cells { spacing, face_weight, volume, potential }
    }
}

struct System<'a> {
    spec: &'a ProblemSpec,
    cells: Cells,
    flux: Flux,
    m_level: f64,
    tol: f64,
}

impl System<'_> {
    /// Residual `G`, per-node scale, and optionally the tridiagonal Jacobian.
    ///
    /// The scale is `|F₊| + |F₋| + |V a f| + noise/tol`, where `noise` is the
    /// rounding level of the flux differences. Cells of `1e-12` make
    /// `u_{i+1} - u_i` lose most digits, and those nodes cannot reach `tol`.
    fn eval(&self, u: &[f64], jac: Option<(&mut [f64], &mut [f64], &mut [f64])>) -> (Vec<f64>, Vec<f64>) {
        let n = u.len();
        let c = &self.cells;
        let f = &self.spec.nonlinearity;
        let value = |i: usize| if i == n { self.m_level } else { u[i] };
        let mut face = vec![0.0; n];
        let mut dface = vec![0.0; n];
        for i in 0..n {
            let s = (value(i + 1) - u[i]) / c.spacing[i];
            face[i] = c.face_weight[i] * self.flux.phi(s);
            dface[i] = c.face_weight[i] * self.flux.dphi(s) / c.spacing[i];
        }
        let mut g = vec![0.0; n];
        let mut scale = vec![0.0; n];
        for i in 0..n {
            let fin = if i == 0 { 0.0 } else { face[i - 1] };
            let src = c.volume[i] * c.potential[i] * f.value(u[i]);
            g[i] = face[i] - fin - src;
            let mut noise = dface[i] * (u[i].abs() + value(i + 1).abs());
            if i > 0 {
                noise += dface[i - 1] * (u[i - 1].abs() + u[i].abs());
            }
            let plain = face[i].abs() + fin.abs() + src.abs();
            scale[i] = plain + (8.0 * f64::EPSILON * noise + f64::EPSILON * plain) / self.tol;
            if scale[i] == 0.0 {
                scale[i] = 1.0;
            }
        }
        if let Some((lower, diag, upper)) = jac {
            for i in 0..n {
                let din = if i == 0 { 0.0 } else { dface[i - 1] };
                diag[i] = -dface[i] - din - c.volume[i] * c.potential[i] * f.deriv(u[i]);
                upper[i] = if i + 1 < n { dface[i] } else { 0.0 };
                lower[i] = if i > 0 { din } else { 0.0 };
            }
        }
        (g, scale)
    }
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

fn merit(g: &[f64], scale: &[f64]) -> f64 {
    g.iter().zip(scale).map(|(a, s)| (a / s) * (a / s)).sum()
}

fn max_rel(g: &[f64], scale: &[f64]) -> f64 {
    g.iter().zip(scale).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max)
}

/// Solves the truncated problem with boundary value `m_level`.
///
/// `init` (length `mesh.len()`, boundary entry ignored) is the Newton start;
/// without it the constant supersolution `u ≡ M` is used.
pub fn solve_truncated(
    spec: &ProblemSpec,
    m_level: f64,
    mesh: &Mesh,
    opts: &NewtonOptions,
    init: Option<&[f64]>,
) -> Result<RadialSolution> {
    if !(m_level > 0.0 && m_level.is_finite()) {
        return Err(Error::Domain(format!("truncation level {m_level} must be positive")));
    }
    if (mesh.extent - spec.geometry.extent()).abs() > 1e-14 * mesh.extent {
        return Err(Error::MeshMismatch("mesh extent differs from the geometry".into()));
    }
    let n = mesh.len() - 1;
    let mut u: Vec<f64> = match init {
        Some(v) if v.len() == mesh.len() => v[..n].iter().map(|&x| x.min(m_level).max(f64::MIN_POSITIVE)).collect(),
        Some(_) => return Err(Error::MeshMismatch("initial guess length differs from mesh".into())),
        None => vec![m_level; n],
    };
    let eps_reg = opts.eps_reg.unwrap_or(1e-10 * u[0].max(1.0) / mesh.extent);
    let m = spec.geometry.dimension() - 1;
    let sys = System {
        spec,
        cells: Cells::new(mesh, m, &spec.potential),
        flux: Flux { p: spec.p, eps2: eps_reg * eps_reg },
        m_level,
        tol: opts.tol,
    };
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let (g, scale) = sys.eval(&u, Some((&mut lower, &mut diag, &mut upper)));
        let res = max_rel(&g, &scale);
        if !res.is_finite() {
            return Err(Error::NewtonDivergence(format!("non-finite residual at M = {m_level:e}")));
        }
        if res < opts.tol {
            let flux = nodal_flux(&sys, &u);
            let mut full = u;
            full.push(m_level);
            return Ok(RadialSolution {
                mesh: mesh.clone(),
                u: full,
                flux,
                truncation_level: m_level,
                residual: res,
                newton_iterations: iterations,
                eps_reg,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NewtonDivergence(format!(
                "{iterations} iterations at M = {m_level:e}, residual {res:e}, u(centre) = {:e}",
                u[0]
            )));
        }
        iterations += 1;
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let step = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let m0 = merit(&g, &scale);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            if trial.iter().all(|&x| x > 0.0 && x.is_finite()) {
                let (gt, _) = sys.eval(&trial, None);
                let mt = merit(&gt, &scale);
                if mt.is_finite() && mt <= (1.0 - 1e-4 * alpha) * m0 {
                    u = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Positivity-preserving fallback: keep the largest admissible
            // fraction of the step even without merit decrease.
            let mut beta = 1.0;
            while beta > 1e-12 {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + beta * b).collect();
                if trial.iter().all(|&x| x > 0.0) {
                    u = trial;
                    break;
                }
                beta *= 0.5;
            }
            if beta <= 1e-12 {
                return Err(Error::NewtonDivergence(format!(
                    "line search stalled at M = {m_level:e}, residual {res:e}"
                )));
            }
        }
    }
}

fn nodal_flux(sys: &System, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let c = &sys.cells;
    let value = |i: usize| if i == n { sys.m_level } else { u[i] };
    let face: Vec<f64> = (0..n).map(|i| sys.flux.phi((value(i + 1) - u[i]) / c.spacing[i])).collect();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for i in 1..n {
        // Linear interpolation of face values to the node.
        let (hl, hr) = (c.spacing[i - 1], c.spacing[i]);
        out.push((face[i - 1] * hr + face[i] * hl) / (hl + hr));
    }
    out.push(face[n - 1]);
    out
}

/// Controls for the continuation in `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeOptions {
    pub mesh: MeshParams,
    pub newton: NewtonOptions,
    /// Evaluation window `[d_min, d_max]` in absolute distance.
    pub window: (f64, f64),
    /// Relative change on the window below which continuation stops.
    pub tol: f64,
    pub max_steps: usize,
    /// First truncation level.
    pub m0: f64,
    pub factor: f64,
}

impl LargeOptions {
    /// Default window `[5e-4, 0.1]·extent`, `M₀` from `ξ₀h(K(d_max))`.
    pub fn for_expansion(be: &BoundaryExpansion, geometry: &Geometry) -> Result<Self> {
        let ext = geometry.extent();
        let window = (5e-4 * ext, 0.1 * ext);
        Ok(LargeOptions {
            mesh: MeshParams::default(),
            newton: NewtonOptions::default(),
            window,
            tol: 1e-7,
            max_steps: 40,
            m0: be.leading(window.1)?,
            factor: 4.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationStep {
    pub m: f64,
    pub newton_iterations: usize,
    /// Max relative change on the window against the previous level.
    pub window_change: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LargeSolution {
    pub solution: RadialSolution,
    pub steps: Vec<ContinuationStep>,
    pub achieved_change: f64,
    /// Nodes where a higher level fell below a lower one by more than `1e-12` relative.
    pub comparison_violations: usize,
    /// `u_{n-1}/M`: near 1 means the last cell does not resolve the layer.
    pub boundary_resolution: f64,
    /// Relative windowed change when `ε_reg` is halved (`p ≠ 2`).
    pub eps_reg_sensitivity: Option<f64>,
}

fn window_change(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| ((b[i] - a[i]) / b[i]).abs()).fold(0.0, f64::max)
}

/// Distance `δ` with `ξ₀h(K(δ)) = M`, by bisection in `ln δ`.
fn profile_offset(be: &BoundaryExpansion, m_level: f64, extent: f64) -> f64 {
    // Failures come from t = K(d) beyond the range of h, i.e. small values.
    let value = |d: f64| be.leading(d).unwrap_or(0.0);
    let (mut lo, mut hi) = ((extent * 1e-40).ln(), (extent * 10.0).ln());
    if value(hi.exp()) >= m_level {
        return hi.exp();
    }
    if value(lo.exp()) <= m_level {
        return lo.exp();
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid.exp()) > m_level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Newton start for level `M`: the leading profile shifted to equal `M` at
/// `d = 0`, plus the interior correction carried by the previous level.
fn profile_guess(be: &BoundaryExpansion, mesh: &Mesh, m_level: f64, prev: Option<&RadialSolution>) -> Vec<f64> {
    // h is only defined below t_max; farther in, hold the last value.
    let profile = |shift: f64| {
        let mut out = vec![0.0; mesh.len()];
        let mut last = m_level;
        for i in (0..mesh.len()).rev() {
            if let Ok(v) = be.leading(mesh.d[i] + shift) {
                if v.is_finite() && v > 0.0 {
                    last = v;
                }
            }
            out[i] = last;
        }
        out
    };
    let base = profile(profile_offset(be, m_level, mesh.extent));
    let guess: Vec<f64> = match prev {
        Some(p) => {
            let old = profile(profile_offset(be, p.truncation_level, mesh.extent));
            base.iter().zip(&old).zip(&p.u).map(|((b, o), u)| b + (u - o)).collect()
        }
        None => base,
    };
    guess.into_iter().map(|v| if v.is_finite() && v > 0.0 { v.min(m_level) } else { m_level }).collect()
}

/// Continuation `M_j = M₀ · factor^j` until the windowed solution changes by
/// less than `tol`. Each level warm-starts from the previous one, falling
/// back to the shifted leading profile of `be` and then to `u ≡ M`.
pub fn solve_large(spec: &ProblemSpec, opts: &LargeOptions, be: &BoundaryExpansion) -> Result<LargeSolution> {
    let mesh = Mesh::graded(spec.geometry.extent(), opts.mesh)?;
    let idx = mesh.window(opts.window.0, opts.window.1);
    if idx.is_empty() {
        return Err(Error::FitWindow(format!("no mesh nodes in window {:?}", opts.window)));
    }
    if !(opts.m0 > 0.0 && opts.factor > 1.0) {
        return Err(Error::Domain(format!("continuation needs M₀ > 0 and factor > 1, got {} and {}", opts.m0, opts.factor)));
    }
    let mut steps = Vec::new();
    let mut violations = 0;
    let mut prev: Option<RadialSolution> = None;
    let mut m_level = opts.m0;
    let mut trend = Vec::new();
    for _ in 0..opts.max_steps {
        let mut sol = match prev.as_ref() {
            Some(p) => solve_truncated(spec, m_level, &mesh, &opts.newton, Some(&p.u)),
            None => Err(Error::NewtonDivergence(String::new())),
        };
        if sol.is_err() {
            let guess = profile_guess(be, &mesh, m_level, prev.as_ref());
            sol = solve_truncated(spec, m_level, &mesh, &opts.newton, Some(&guess));
        }
        let sol = match sol {
            Ok(s) => s,
            Err(_) => solve_truncated(spec, m_level, &mesh, &opts.newton, None)?,
        };
        let change = match prev.as_ref() {
            Some(p) => {
                violations += comparison_check(&sol, p, 1e-12)?.violations.len();
                window_change(&p.u, &sol.u, &idx)
            }
            None => f64::INFINITY,
        };
        steps.push(ContinuationStep { m: m_level, newton_iterations: sol.newton_iterations, window_change: change });
        trend.push(change);
        if change < opts.tol {
            let n = sol.u.len();
            let boundary_resolution = sol.u[n - 2] / sol.u[n - 1];
            let eps_reg_sensitivity = if spec.p != 2.0 {
                let half = NewtonOptions { eps_reg: Some(0.5 * sol.eps_reg), ..opts.newton };
                let alt = solve_truncated(spec, m_level, &mesh, &half, Some(&sol.u))?;
                Some(window_change(&sol.u, &alt.u, &idx))
            } else {
                None
            };
            return Ok(LargeSolution {
                solution: sol,
                steps,
                achieved_change: change,
                comparison_violations: violations,
                boundary_resolution,
                eps_reg_sensitivity,
            });
        }
        prev = Some(sol);
        m_level *= opts.factor;
        if !m_level.is_finite() {
            break;
        }
    }
    let tail: Vec<String> = trend.iter().rev().take(4).rev().map(|c| format!("{c:.3e}")).collect();
    Err(Error::NonConvergence(format!(
        "window change did not fall below {:e} within {} levels; last changes [{}]",
        opts.tol,
        steps.len(),
        tail.join(", ")
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonViolation {
    pub index: usize,
    pub d: f64,
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonVerdict {
    pub pass: bool,
    /// `min_i (a_i - b_i)/max(|a_i|, |b_i|)`.
    pub min_margin: f64,
    pub violations: Vec<ComparisonViolation>,
}

/// Checks `a ≥ b` nodewise up to `rel_tol` relative.
pub fn comparison_check(a: &RadialSolution, b: &RadialSolution, rel_tol: f64) -> Result<ComparisonVerdict> {
    if a.mesh.d != b.mesh.d {
        return Err(Error::MeshMismatch(format!("meshes of {} and {} nodes differ", a.mesh.len(), b.mesh.len())));
    }
    let mut min_margin = f64::INFINITY;
    let mut violations = Vec::new();
    for i in 0..a.u.len() {
        let s = a.u[i].abs().max(b.u[i].abs());
        let margin = if s == 0.0 { 0.0 } else { (a.u[i] - b.u[i]) / s };
        min_margin = min_margin.min(margin);
        if margin < -rel_tol {
            violations.push(ComparisonViolation { index: i, d: a.mesh.d[i], upper: a.u[i], lower: b.u[i] });
        }
    }
    Ok(ComparisonVerdict { pass: violations.is_empty(), min_margin, violations })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `C₁ + C₂ℋ`.
    pub prediction: f64,
    pub nodes: usize,
    pub window: (f64, f64),
    /// `r² ≥ 0.9`.
    pub reliable: bool,
    /// `slope / (1 + intercept)`: the slope after absorbing a leading-order
    /// mismatch into the prefactor.
    pub normalized_slope: f64,
    /// `max |u/(ξ₀h(K(d))) - 1|` over the window.
    pub max_first_order_error: f64,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

/// Least-squares fit of `e(d) = u/(ξ₀h(K(d))) - 1 ≈ slope·d + intercept`.
pub fn fit_boundary_slope(sol: &RadialSolution, be: &BoundaryExpansion, geometry: &Geometry, window: (f64, f64)) -> Result<SlopeFit> {
    let idx = sol.mesh.window(window.0, window.1);
    if idx.len() < 8 {
        return Err(Error::FitWindow(format!("{} nodes in window [{:e}, {:e}], need 8", idx.len(), window.0, window.1)));
    }
    let mut d = Vec::with_capacity(idx.len());
    let mut e = Vec::with_capacity(idx.len());
    for &i in &idx {
        let di = sol.mesh.d[i];
        d.push(di);
        e.push(sol.u[i] / be.leading(di)? - 1.0);
    }
    let n = d.len() as f64;
    let mx = d.iter().sum::<f64>() / n;
    let my = e.iter().sum::<f64>() / n;
    let sxx: f64 = d.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = d.iter().zip(&e).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = e.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let c = &be.constants;
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        prediction: c.c1 + c.c2 * geometry.mean_curvature(),
        nodes: idx.len(),
        window,
        reliable: r2 >= 0.9,
        normalized_slope: slope / (1.0 + intercept),
        max_first_order_error: e.iter().map(|x| x.abs()).fold(0.0, f64::max),
        d,
        e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::karamata::WeightKernel;

    fn cube_interval(p: f64) -> ProblemSpec {
        ProblemSpec::new(
            p,
            Geometry::interval(1.0).unwrap(),
            PotentialModel::affine(WeightKernel::constant(), 0.0, p),
            Nonlinearity::power(1.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    fn coarse() -> MeshParams {
        MeshParams { finest: 1e-6, growth: 1.05 }
    }

    #[test]
    fn mesh_is_graded_and_exact_at_ends() {
        let m = Mesh::graded(1.0, MeshParams::default()).unwrap();
        assert_eq!(m.d[0], 1.0);
        assert_eq!(*m.d.last().unwrap(), 0.0);
        assert_eq!(m.r[0], 0.0);
        assert!((m.d[m.len() - 2] - 1e-12).abs() < 1e-27);
        assert!(m.d.windows(2).all(|w| w[0] > w[1]));
        assert!(m.len() > 2000 && m.len() < 2600, "{}", m.len());
    }

    #[test]
    fn tridiagonal_solves() {
        let x = solve_tridiagonal(&[0.0, 1.0, 1.0], &[-4.0, -4.0, -4.0], &[1.0, 1.0, 0.0], &[-3.0, -2.0, -3.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn maximum_principle_small_level() {
        let spec = cube_interval(2.0);
        let mesh = Mesh::graded(1.0, coarse()).unwrap();
        let sol = solve_truncated(&spec, 1.0, &mesh, &NewtonOptions::default(), None).unwrap();
        assert!(sol.u.iter().all(|&v| v <= 1.0 + 1e-14 && v > 0.0));
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn monotone_in_level() {
        let spec = cube_interval(2.0);
        let mesh = Mesh::graded(1.0, coarse()).unwrap();
        let a = solve_truncated(&spec, 100.0, &mesh, &NewtonOptions::default(), None).unwrap();
        let b = solve_truncated(&spec, 10.0, &mesh, &NewtonOptions::default(), None).unwrap();
        assert!(comparison_check(&a, &b, 1e-12).unwrap().pass);
        let same = comparison_check(&a, &a, 0.0).unwrap();
        assert!(same.pass && same.min_margin == 0.0);
        let mut bumped = a.clone();
        bumped.u[5] += 1.0;
        let v = comparison_check(&a, &bumped, 1e-12).unwrap();
        assert!(!v.pass && v.violations.len() == 1 && v.violations[0].index == 5);
        let other = solve_truncated(&spec, 10.0, &Mesh::graded(1.0, MeshParams::default()).unwrap(), &NewtonOptions::default(), None).unwrap();
        assert!(matches!(comparison_check(&a, &other, 0.0), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn first_integral_is_conserved() {
        // (u')²/2 - F(u) is constant for u'' = u³.
        let spec = cube_interval(2.0);
        let mesh = Mesh::graded(1.0, MeshParams { finest: 1e-4, growth: 1.01 }).unwrap();
        let sol = solve_truncated(&spec, 50.0, &mesh, &NewtonOptions::default(), None).unwrap();
        let n = mesh.len();
        let e0 = -sol.u[0].powi(4) / 4.0;
        let mut worst: f64 = 0.0;
        for i in 0..n - 1 {
            let h = mesh.d[i] - mesh.d[i + 1];
            let s = (sol.u[i + 1] - sol.u[i]) / h;
            let um = 0.5 * (sol.u[i] + sol.u[i + 1]);
            let e = 0.5 * s * s - um.powi(4) / 4.0;
            worst = worst.max((e - e0).abs() / (0.5 * s * s + um.powi(4) / 4.0));
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn centre_value_second_order() {
        let spec = cube_interval(2.0);
        let centre = |finest: f64, growth: f64| {
            let mesh = Mesh::graded(1.0, MeshParams { finest, growth }).unwrap();
            solve_truncated(&spec, 30.0, &mesh, &NewtonOptions::default(), None).unwrap().u[0]
        };
        let u1 = centre(5e-3, 1.0);
        let u2 = centre(2.5e-3, 1.0);
        let u3 = centre(1.25e-3, 1.0);
        let order = ((u1 - u2) / (u2 - u3)).abs().log2();
        assert!(order >= 1.8, "order {order}: {u1} {u2} {u3}");
    }

    #[test]
    fn p3_ball_radially_increasing() {
        let spec = ProblemSpec::new(
            3.0,
            Geometry::ball(1.0, 3).unwrap(),
            PotentialModel::affine(WeightKernel::constant(), 0.0, 3.0),
            Nonlinearity::power(1.0, 2.0).unwrap(),
        )
        .unwrap();
        let mesh = Mesh::graded(1.0, coarse()).unwrap();
        let sol = solve_truncated(&spec, 1e3, &mesh, &NewtonOptions::default(), None).unwrap();
        assert!(sol.u.windows(2).all(|w| w[1] >= w[0]));
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let spec = cube_interval(2.0);
        let mesh = Mesh::graded(1.0, MeshParams { finest: 1e-2, growth: 1.3 }).unwrap();
        let sol = solve_truncated(&spec, 5.0, &mesh, &NewtonOptions::default(), None).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf, &["spec abc".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# spec abc\n"));
        assert!(text.contains("\nr,d,u,flux\n"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), mesh.len() + 1);
    }
}
