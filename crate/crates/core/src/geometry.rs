//! Radial domains: the interval `(0, 2L)` and the ball `|x| < R` in `R^N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    /// `(0, 2L)`; only the half `[0, L]` is discretized.
    Interval { half_length: f64 },
    Ball { radius: f64, dimension: usize },
}

impl Geometry {
    pub fn interval(half_length: f64) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Domain(format!("interval half-length {half_length} must be positive")));
        }
        Ok(Geometry::Interval { half_length })
    }

    pub fn ball(radius: f64, dimension: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain(format!("ball radius {radius} must be positive")));
        }
        if dimension < 2 {
            return Err(Error::Domain(format!("ball dimension {dimension} must be at least 2")));
        }
        Ok(Geometry::Ball { radius, dimension })
    }

    /// `L` or `R`: the largest distance to the boundary.
    pub fn extent(&self) -> f64 {
        match *self {
            Geometry::Interval { half_length } => half_length,
            Geometry::Ball { radius, .. } => radius,
        }
    }

    /// Space dimension `N` (1 on the interval).
    pub fn dimension(&self) -> usize {
        match *self {
            Geometry::Interval { .. } => 1,
            Geometry::Ball { dimension, .. } => dimension,
        }
    }

    /// Mean curvature `ℋ`: `1/R` on the ball, `0` on the interval.
    pub fn mean_curvature(&self) -> f64 {
        match *self {
            Geometry::Interval { .. } => 0.0,
            Geometry::Ball { radius, .. } => 1.0 / radius,
        }
    }

    /// Exponent `m` of the radial weight `r^m`.
    pub fn weight_exponent(&self) -> f64 {
        (self.dimension() - 1) as f64
    }

    /// Radial coordinate of the point at distance `d`.
    pub fn radius_at(&self, d: f64) -> f64 {
        self.extent() - d
    }

    /// `Δd` entering the proof functionals: `(N-1)/(R-d)` on the ball, `0`
    /// on the interval.
    pub fn distance_laplacian(&self, d: f64) -> f64 {
        match *self {
            Geometry::Interval { .. } => 0.0,
            Geometry::Ball { radius, dimension } => (dimension - 1) as f64 / (radius - d),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Geometry::Interval { half_length } => format!("interval (0, {})", 2.0 * half_length),
            Geometry::Ball { radius, dimension } => format!("ball of radius {radius} in R^{dimension}"),
        }
    }
}
