//! Falsifiable numerical limits.
//!
//! A claimed limit `L` of a sequence sampled on a geometric grid passes when
//! the extrapolated value is within `tol * (1 + |L|)` of `L` and the residual
//! magnitudes `|v_j - L|` do not grow over the final three grid points.
//! Growth smaller than the per-point evaluation noise is ignored.

use serde::Serialize;

/// Default relative tolerance for extrapolated limits.
pub const LIMIT_TOL: f64 = 1e-6;

/// Largest accepted Aitken correction, in units of the last difference.
const MAX_CORRECTION: f64 = 10.0;

/// Evidence for one claimed limit.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LimitSeries {
    pub label: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Absolute rounding-noise estimate of each value.
    pub noise: Vec<f64>,
    pub claimed: f64,
    pub extrapolated: f64,
    /// Observed convergence exponent in the grid variable, when measurable.
    pub observed_rate: Option<f64>,
    pub tol: f64,
    pub pass: bool,
    pub note: String,
}

impl LimitSeries {
    pub fn residuals(&self) -> Vec<f64> {
        self.values.iter().map(|v| v - self.claimed).collect()
    }

    pub fn error(&self) -> f64 {
        (self.extrapolated - self.claimed).abs()
    }
}

/// One level of Aitken/Richardson extrapolation from the last three finite
/// values. Returns `(extrapolant, observed ratio of successive differences)`.
pub fn extrapolate(values: &[f64], noise: &[f64]) -> (f64, Option<f64>) {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .zip(noise)
        .filter(|(v, _)| v.is_finite())
        .map(|(v, n)| (*v, *n))
        .collect();
    let n = pts.len();
    match n {
        0 => return (f64::NAN, None),
        1 | 2 => return (pts[n - 1].0, None),
        _ => {}
    }
    let (v0, v1, v2) = (pts[n - 3].0, pts[n - 2].0, pts[n - 1].0);
    let d1 = v1 - v0;
    let d2 = v2 - v1;
    let floor = pts[n - 1].1 + pts[n - 2].1;
    if d2.abs() <= floor || d2 == 0.0 {
        return (v2, None);
    }
    let ratio = d1 / d2;
    if ratio <= 1.0 + 1e-9 || !ratio.is_finite() {
        return (v2, Some(ratio));
    }
    let mut corr = d2 / (ratio - 1.0);
    let cap = MAX_CORRECTION * d2.abs();
    if corr.abs() > cap {
        corr = cap.copysign(corr);
    }
    (v2 + corr, Some(ratio))
}

/// Assess a claimed limit.
///
/// `grid` must be ordered in the direction of the limit (decreasing toward
/// 0⁺ or increasing toward ∞). Non-finite values (overflow) are kept in the
/// record but excluded from the verdict.
pub fn assess(
    label: impl Into<String>,
    grid: Vec<f64>,
    values: Vec<f64>,
    noise: Vec<f64>,
    claimed: f64,
    tol: f64,
) -> LimitSeries {
    assert_eq!(grid.len(), values.len());
    assert_eq!(noise.len(), values.len());
    let (extrapolated, ratio) = extrapolate(&values, &noise);

    let finite: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let grid_ratio = if grid.len() >= 2 {
        let r = (grid[grid.len() - 1] / grid[grid.len() - 2]).abs();
        if r > 0.0 && r != 1.0 {
            Some(r)
        } else {
            None
        }
    } else {
        None
    };
    let observed_rate = match (ratio, grid_ratio) {
        (Some(r), Some(g)) if r > 0.0 => Some(r.ln() / (1.0 / g).ln().abs()),
        _ => None,
    };

    let scale = 1.0 + claimed.abs();
    let mut notes = Vec::new();
    let skipped = values.len() - finite.len();
    if skipped > 0 {
        notes.push(format!("{skipped} non-finite point(s) excluded"));
    }

    let close = (extrapolated - claimed).abs() < tol * scale;
    if !close {
        notes.push(format!(
            "extrapolated {extrapolated:.6e} differs from claimed {claimed:.6e} by {:.3e}",
            (extrapolated - claimed).abs()
        ));
    }

    let mut monotone = true;
    if finite.len() >= 3 {
        let tail = &finite[finite.len() - 3..];
        for w in tail.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ma = (values[a] - claimed).abs();
            let mb = (values[b] - claimed).abs();
            if mb > ma * (1.0 + 1e-9) + noise[a] + noise[b] {
                monotone = false;
                notes.push(format!(
                    "residual grows between grid points {:.3e} and {:.3e}",
                    grid[a], grid[b]
                ));
            }
        }
    } else if finite.is_empty() {
        monotone = false;
        notes.push("no finite values".into());
    }

    let pass = close && monotone && !finite.is_empty();
    LimitSeries {
        label: label.into(),
        grid,
        values,
        noise,
        claimed,
        extrapolated,
        observed_rate,
        tol,
        pass,
        note: notes.join("; "),
    }
}

/// Geometric grid `start * ratio^j`, `j = 0..count`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| start * ratio.powi(j as i32)).collect()
}

/// Powers of ten from `10^lo` to `10^hi` inclusive, in that order.
pub fn decade_grid(lo: i32, hi: i32) -> Vec<f64> {
    if lo <= hi {
        (lo..=hi).map(|e| 10f64.powi(e)).collect()
    } else {
        (hi..=lo).rev().map(|e| 10f64.powi(e)).collect()
    }
}
