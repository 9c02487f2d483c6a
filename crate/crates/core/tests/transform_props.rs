use blowup_core::karamata::{Nonlinearity, SlowPerturbation, WeightKernel};
use blowup_core::quad;
use blowup_core::transform::{
    verify_lemma2, verify_lemma3, HTransform, Lemma2Part, Lemma3Part, Primitive, ScaledTail,
};
use proptest::prelude::*;
use std::sync::Arc;

fn families() -> Vec<(&'static str, Nonlinearity, f64)> {
    let custom = SlowPerturbation::custom(
        Arc::new(|t: f64| 0.3 / (t * t * (t + 1.0))),
        Arc::new(|t: f64| -0.3 * (3.0 * t + 2.0) / (t * t * t * (t + 1.0) * (t + 1.0))),
        Some(2.0),
        "0.3/(t^2 (t+1))",
    );
    vec![
        ("u^3, p=2", Nonlinearity::power(1.0, 2.0).unwrap(), 2.0),
        ("u^3 e^{..}, p=2", Nonlinearity::perturbed_power(1.0, 2.0, 0.5, 2.0).unwrap(), 2.0),
        ("u^3, p=3", Nonlinearity::power(1.0, 2.0).unwrap(), 3.0),
        ("u^4 slow, p=2.5", Nonlinearity::new(2.0, 3.0, 1.0, custom, None).unwrap(), 2.5),
    ]
}

fn transforms() -> &'static Vec<(&'static str, HTransform)> {
    use std::sync::OnceLock;
    static CELL: OnceLock<Vec<(&'static str, HTransform)>> = OnceLock::new();
    CELL.get_or_init(|| {
        families()
            .into_iter()
            .map(|(name, n, p)| (name, HTransform::from_nonlinearity(n, p).unwrap()))
            .collect()
    })
}

#[test]
fn round_trip_on_log_grid() {
    for (name, ht) in transforms() {
        let t_hi = ht.t_max().min(1.0);
        for i in 0..100 {
            let t = t_hi * 10f64.powf(-8.0 * i as f64 / 99.0);
            let h = ht.eval_h(t).unwrap();
            let back = ht.tail().eval_cal_f(h).unwrap();
            assert!((back - t).abs() <= 1e-10 * t, "{name}: t={t:e} gives {back:e}");
        }
    }
}

#[test]
fn h_decreasing_and_unbounded() {
    for (name, ht) in transforms() {
        let grid: Vec<f64> = (0..40).map(|i| ht.t_max() * 0.7f64.powi(i + 1)).collect();
        let hs: Vec<f64> = grid.iter().map(|&t| ht.eval_h(t).unwrap()).collect();
        assert!(hs.windows(2).all(|w| w[1] > w[0]), "{name}");
        assert!(ht.eval_h(1e-9).unwrap() > 1e3, "{name}");
    }
}

#[test]
fn index_quotient_approaches_sigma_plus_two() {
    for (name, n, p) in families() {
        let prim = Primitive::new(n, p).unwrap();
        let s = prim.rv_consistency();
        assert!(s.pass, "{name}: {s:?}");
    }
}

#[test]
fn primitive_matches_independent_quadrature() {
    // Plain adaptive Simpson over [0, 10], independent of the node table.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() < 1e-13 * whole.abs().max(1e-300) {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, a, m, fa, flm, fm, left, depth - 1) + simpson(f, m, b, fm, frm, fb, right, depth - 1)
    }
    for (name, n, p) in families() {
        let prim = Primitive::new(n.clone(), p).unwrap();
        let f = |u: f64| n.value(u);
        let (a, b) = (0.0, 10.0);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(5.0) + f(b));
        let oracle = simpson(&f, a, b, f(a), f(5.0), f(b), whole, 40);
        let got = prim.eval_big_f(10.0).unwrap();
        assert!((got - oracle).abs() < 1e-10 * oracle, "{name}: {got} vs {oracle}");
        let gk = quad::integrate(&f, 0.0, 10.0, 0.0, 1e-13).unwrap().value;
        assert!((got - gk).abs() < 1e-12 * gk, "{name}");
    }
}

#[test]
fn lemma_suites_pass_for_all_families() {
    for (name, ht) in transforms() {
        for part in [Lemma2Part::Pre, Lemma2Part::I, Lemma2Part::II, Lemma2Part::III] {
            let r = verify_lemma2(ht.tail(), part, &[0.5, 2.0, 3.0]).unwrap();
            assert!(r.pass, "{name} {part:?}: {:#?}", r.series);
        }
        let p = ht.p();
        let sigma = ht.nonlinearity().sigma();
        for kernel in [WeightKernel::constant(), WeightKernel::power(1.0).unwrap(), WeightKernel::exponential(1.0).unwrap()] {
            let s = sigma + 2.0 - p;
            let xi0 = ((p - 1.0) * (p + kernel.ell1() * s) / (sigma + 2.0)).powf(1.0 / s);
            for part in [Lemma3Part::I, Lemma3Part::II, Lemma3Part::III, Lemma3Part::IV, Lemma3Part::V] {
                let r = verify_lemma3(ht, &kernel, xi0, part).unwrap();
                assert!(r.pass, "{name} {} {part:?}: {:#?}", kernel.description(), r.series);
            }
        }
    }
}

#[test]
fn scaled_tail_divergence_is_an_error() {
    let prim = Primitive::new(Nonlinearity::power(1.0, 0.5).unwrap(), 3.0).unwrap();
    assert!(ScaledTail::new(prim).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_random(fam in 0usize..4, e in -7.5f64..0.0) {
        let (_, ht) = &transforms()[fam];
        let t = ht.t_max().min(1.0) * 10f64.powf(e);
        let h = ht.eval_h(t).unwrap();
        let back = ht.tail().eval_cal_f(h).unwrap();
        prop_assert!((back - t).abs() <= 1e-10 * t);
    }

    #[test]
    fn calf_decreasing(fam in 0usize..4, x in 1.0f64..1e6, r in 1.001f64..10.0) {
        let (_, ht) = &transforms()[fam];
        let a = ht.tail().eval_cal_f(x).unwrap();
        let b = ht.tail().eval_cal_f(x * r).unwrap();
        prop_assert!(b < a);
    }
}
