//! Adaptive Gauss–Kronrod (G10/K21) quadrature.
//!
//! Global subdivision: the interval with the largest error estimate is
//! bisected until the summed estimate meets `max(abs_tol, rel_tol * |I|)`.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_091_659_036,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_023,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Single 21-point Kronrod rule with the embedded 10-point Gauss rule.
/// Returns `(kronrod, |kronrod - gauss|)`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    integrate_with_breaks(f, &[a, b], abs_tol, rel_tol)
}

/// Adaptive integration over consecutive segments `points[0]..points[last]`.
/// Interior points are used as initial breakpoints (kinks, singular spots).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    points: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    const MAX_INTERVALS: usize = 4000;
    if points.len() < 2 {
        return Ok(Quadrature { value: 0.0, error: 0.0, intervals: 0 });
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("integration bound".into()));
    }

    // (a, b, value, error)
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    for w in points.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let (v, e) = gk21(f, w[0], w[1]);
        pieces.push((w[0], w[1], v, e));
    }

    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{}, {}]",
                points[0],
                points[points.len() - 1]
            )));
        }
        let target = abs_tol.max(rel_tol * total.abs());
        if err <= target {
            return Ok(Quadrature { value: total, error: err, intervals: pieces.len() });
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "subdivision limit reached (estimate {err:.3e}, target {target:.3e})"
            )));
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = pieces[idx];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // Interval collapsed to adjacent floats; accept what we have.
            return Ok(Quadrature { value: total, error: err, intervals: pieces.len() });
        }
        let (v1, e1) = gk21(f, a, mid);
        let (v2, e2) = gk21(f, mid, b);
        pieces[idx] = (a, mid, v1, e1);
        pieces.push((mid, b, v2, e2));
    }
}

/// Integral of `g` over `[x0, x1]` (both positive) after the substitution
/// `x = exp(v)`; suited to integrands spanning many decades.
pub fn integrate_log<F: Fn(f64) -> f64>(
    g: &F,
    x0: f64,
    x1: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    let (lo, hi) = (x0.ln(), x1.ln());
    let mut pts = vec![lo];
    for &b in breaks {
        if b > x0 && b < x1 {
            pts.push(b.ln());
        }
    }
    pts.push(hi);
    let h = |v: f64| {
        let x = v.exp();
        x * g(x)
    };
    integrate_with_breaks(&h, &pts, abs_tol, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        let (v, _) = gk21(&|_| 1.0, -1.0, 1.0);
        assert!((v - 2.0).abs() < 1e-15);
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn kronrod_exact_for_high_degree_polynomials() {
        // K21 integrates degree 31 exactly; G10 degree 19.
        let (v, e) = gk21(&|x: f64| x.powi(30), -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-15);
        assert!(e > 1e-6, "G10 is not exact at degree 30, estimate {e}");
        let (v, e) = gk21(&|x: f64| x.powi(18) + x.powi(3), 0.0, 1.0);
        assert!((v - (1.0 / 19.0 + 0.25)).abs() < 1e-15);
        assert!(e < 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let q = integrate(&|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-10, "{q:?}");
    }

    #[test]
    fn log_substitution_matches_closed_form() {
        // ∫_1^1e6 x^-2 dx = 1 - 1e-6
        let q = integrate_log(&|x: f64| x.powi(-2), 1.0, 1e6, &[], 0.0, 1e-14).unwrap();
        assert!((q.value - (1.0 - 1e-6)).abs() < 1e-14);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate(&|_| f64::NAN, 0.0, 1.0, 1e-10, 1e-10);
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
