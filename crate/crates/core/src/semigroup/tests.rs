use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::functions::{Bump, Shape};
use crate::sde::SimConfig;

fn bm(dt: f64, seed: u64) -> Engine {
    Engine::new(WeightSpec::lebesgue(3), SimConfig::new(dt, 1.0, seed)).unwrap()
}

fn power(alpha: f64, dt: f64, seed: u64) -> Engine {
    Engine::new(WeightSpec::radial_power(3, alpha).unwrap(), SimConfig::new(dt, 1.0, seed)).unwrap()
}

fn gauss(c: [f64; 3], r: f64) -> FnSpec {
    FnSpec::bump(c.to_vec(), r, Shape::Gaussian)
}

/// Heat flow of `exp(−‖y − c‖²/(2r²))` in `d = 3`.
fn gauss_heat(x: &[f64], c: &[f64], r: f64, t: f64) -> f64 {
    let a = r * r;
    let q = dist(x, c).powi(2);
    (a / (a + t)).powf(1.5) * (-q / (2.0 * (a + t))).exp()
}

#[test]
fn constant_is_preserved_by_a_conservative_flow() {
    let e = power(1.0, 1e-2, 1);
    let est = mc_semigroup(&FnSpec::Constant { c: 1.0 }, 0.5, &[1.0, 0.0, 0.0], &e, 2000).unwrap();
    assert_eq!(est.estimate.mean, 1.0);
    assert_eq!(est.killed + est.errored, 0);
}

#[test]
fn brownian_semigroup_matches_gaussian_convolution() {
    let e = bm(0.05, 2);
    let c = [0.5, 0.0, 0.0];
    for x in [[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [0.5, -0.5, 0.5]] {
        let est = mc_semigroup(&gauss(c, 0.6), 0.5, &x, &e, 20_000).unwrap();
        let exact = gauss_heat(&x, &c, 0.6, 0.5);
        assert!((est.estimate.mean - exact).abs() < 3.0 * est.estimate.std_err, "{est:?} vs {exact}");
    }
}

#[test]
fn semigroup_property_with_independent_restart() {
    let e = power(1.0, 2e-3, 3);
    let f = FnSpec::bump(vec![1.0, 0.0, 0.0], 1.0, Shape::Biweight);
    // Five points, Bonferroni-corrected two-sided 95% level.
    let z = 2.576;
    for x in [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [1.5, 0.0, 0.3], [0.8, -0.4, 0.2], [0.3, 0.3, 0.3]] {
        let one = mc_semigroup(&f, 0.5, &x, &e, 8000).unwrap().estimate;
        let two = mc_semigroup_two_stage(&f, 0.25, 0.25, &x, &e, 8000).unwrap().estimate;
        let se = (one.std_err.powi(2) + two.std_err.powi(2)).sqrt();
        assert!((one.mean - two.mean).abs() < z * se, "{x:?}: {one:?} {two:?}");
    }
}

#[test]
fn far_field_envelope_is_tiny() {
    let f = FnSpec::bump(vec![0.0; 3], 1.0, Shape::Biweight);
    let spec = WeightSpec::radial_power(3, 1.0).unwrap();
    let env = far_field_envelope(&spec, &Mode::Free, &f, &[10.0, 0.0, 0.0], 1.0).unwrap();
    assert!(env < 1e-6 && env > 0.0, "{env}");
    // Close to the support the envelope is vacuous.
    let near = far_field_envelope(&spec, &Mode::Free, &f, &[1.5, 0.0, 0.0], 1.0).unwrap();
    assert!(near > 0.1);
    assert!(far_field_envelope(&spec, &Mode::Killed { floor: None }, &f, &[10.0, 0.0, 0.0], 1.0).is_none());
}

#[test]
fn brownian_feller_check_passes() {
    let e = bm(1e-3, 4);
    let f = FnSpec::bump(vec![0.0; 3], 1.0, Shape::Biweight);
    let opts = FellerOptions {
        grid: vec![vec![0.0, 0.0, 0.0], vec![0.4, 0.0, 0.0], vec![0.0, 0.6, 0.2]],
        ts: vec![0.1, 0.01, 0.001],
        paths: 4000,
        far: Some(FarField {
            points: vec![vec![10.0, 0.0, 0.0]],
            t: 1.0,
            tol: 1e-6,
        }),
    };
    let r = feller_check(&e, &f, &opts).unwrap();
    assert!(r.pass, "{r:#?}");
}

#[test]
fn bilinear_estimator_is_identical_for_f_equal_g() {
    let e = power(1.0, 1e-2, 5);
    let f = FnSpec::bump(vec![0.5, 0.0, 0.0], 0.7, Shape::Biweight);
    let r = symmetry_check(&e, &f, &f, 0.2, 500, 0.03).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert!(r.pass);
}

#[test]
fn brownian_bilinear_form_matches_closed_form() {
    let e = bm(0.05, 6);
    let (cf, cg) = ([0.0, 0.0, 0.0], [1.2, 0.0, 0.0]);
    let (rf, rg) = (0.3f64, 0.4f64);
    let t = 0.3;
    let s = rf * rf + rg * rg + t;
    let exact = (2.0 * PI).powf(1.5) * (rf * rf * rg * rg / s).powf(1.5) * (-1.44 / (2.0 * s)).exp();
    let a = bilinear_form(&e, &gauss(cf, rf), &gauss(cg, rg), t, 40_000).unwrap();
    let b = bilinear_form(&e, &gauss(cg, rg), &gauss(cf, rf), t, 40_000).unwrap();
    for est in [a, b] {
        assert!((est.mean - exact).abs() < 3.0 * est.std_err, "{est:?} vs {exact}");
    }
}

#[test]
fn different_pairs_use_different_streams() {
    let f = gauss([0.0; 3], 1.0);
    let g = gauss([1.0, 0.0, 0.0], 1.0);
    assert_ne!(pair_stage(&f, &g), pair_stage(&g, &f));
    assert_eq!(pair_stage(&f, &g), pair_stage(&f.clone(), &g.clone()));
}

#[test]
fn silverman_rule_scales_with_spread() {
    let mut rng = StreamKey::new(7).stream(0);
    let pts: Vec<Vec<f64>> = (0..4000)
        .map(|_| (0..3).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let h = silverman_bandwidth(&pts);
    let expect = 2.0 * (4.0f64 / (5.0 * 4000.0)).powf(1.0 / 7.0);
    assert!((h / expect - 1.0).abs() < 0.05, "{h} vs {expect}");
}

#[test]
fn brownian_kernel_estimate_matches_gaussian_and_is_normalised() {
    let e = bm(0.05, 8);
    let x = [0.0, 0.0, 0.0];
    let t = 0.5f64;
    let (grid, cell) = lattice_around(&x, 3.5 * t.sqrt(), 15);
    let est = heat_kernel_estimate(&e, &x, t, &grid, 40_000, &KdeOptions::default()).unwrap();
    assert!((est.mass(cell) - 1.0).abs() < 0.05, "mass {}", est.mass(cell));
    // Smoothing by h adds h² to the variance.
    let v = t + est.bandwidth * est.bandwidth;
    for (y, p) in est.grid.iter().zip(&est.density) {
        let r2 = dist(&x, y).powi(2);
        if r2 < t {
            let exact = (2.0 * PI * v).powf(-1.5) * (-r2 / (2.0 * v)).exp();
            assert!((p / exact - 1.0).abs() < 0.1, "{y:?}: {p} vs {exact}");
        }
    }
    let b = kernel_bound(e.spec(), &est, 1.0, None).unwrap();
    assert!(b.c > 0.05 && b.c < 1.0, "{b:?}");
    assert_eq!(b.violations, 0);
}

#[test]
fn kernel_estimate_is_symmetric_in_x_and_y() {
    let e = power(1.0, 2e-3, 9);
    let x = vec![1.0, 0.0, 0.0];
    let y = vec![1.4, 0.3, 0.0];
    let opts = KdeOptions::default();
    let a = heat_kernel_estimate(&e, &x, 0.5, std::slice::from_ref(&y), 20_000, &opts).unwrap();
    let b = heat_kernel_estimate(&e, &y, 0.5, std::slice::from_ref(&x), 20_000, &opts).unwrap();
    let gap = (a.density[0] - b.density[0]).abs();
    let ci = (a.ci95[0].powi(2) + b.ci95[0].powi(2)).sqrt();
    assert!(gap < 2.0 * ci, "{} vs {} (ci {ci})", a.density[0], b.density[0]);
}

#[test]
fn kernel_bound_constant_is_stable_in_time() {
    let e = power(1.0, 2e-3, 10);
    let (r, _) = kernel_bound_check(&e, &[1.0, 0.0, 0.0], &[0.25, 0.5, 1.0], 7, 20_000, 1.0, 0.5).unwrap();
    assert!(r.pass, "{r:#?}");
}

#[test]
fn resolvent_kernel_of_brownian_motion() {
    // r_1(x, y) = exp(−√2 r) / (2π r) in d = 3.
    let e = Engine::new(WeightSpec::lebesgue(3), SimConfig::new(5e-3, 8.0, 11)).unwrap();
    let x = [0.0; 3];
    let ys = vec![vec![0.6, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
    let est = resolvent_kernel_estimate(&e, &x, &ys, 4000, 0.15, 1e-8).unwrap();
    for (y, m) in ys.iter().zip(&est) {
        let r = norm(y);
        let exact = (-(2f64.sqrt()) * r).exp() / (2.0 * PI * r);
        assert!((m.mean - exact).abs() < 3.0 * m.std_err + 0.03 * exact, "{y:?}: {m:?} vs {exact}");
    }
}

#[test]
fn nash_zero_function_is_trivial() {
    let spec = WeightSpec::lebesgue(3);
    let r = nash_probe(&DomainSpec::unit_ball(3), &spec, &[FnSpec::Zero], 0.0).unwrap();
    assert!(r.pass);
    assert_eq!(r.fitted_constants["c_k"], 0.0);
}

#[test]
fn nash_integrals_of_a_centred_gaussian() {
    let spec = WeightSpec::lebesgue(3);
    let r = 0.1;
    let f = gauss([0.0; 3], r);
    let (l1, l2, en) = nash_integrals(&spec, &[0.0; 3], 1.0, &f).unwrap();
    assert!((l1 / (2.0 * PI * r * r).powf(1.5) - 1.0).abs() < 1e-6, "{l1}");
    assert!((l2 / (PI * r * r).powf(1.5) - 1.0).abs() < 1e-6, "{l2}");
    // ½∫‖∇f‖² = ½ · (3/(2r²)) · ‖f‖₂².
    assert!((en / (0.75 / (r * r) * l2) - 1.0).abs() < 1e-6, "{en}");
}

#[test]
fn nash_constant_covers_three_scales() {
    let spec = WeightSpec::lebesgue(3);
    let fns: Vec<FnSpec> = [0.05, 0.1, 0.2].iter().map(|&r| gauss([0.1, 0.0, 0.0], r)).collect();
    let r = nash_probe(&DomainSpec::unit_ball(3), &spec, &fns, 0.0).unwrap();
    assert!(r.pass && r.fitted_constants["c_k"].is_finite(), "{r:#?}");
    let spec2 = WeightSpec::lebesgue(2);
    let fns2: Vec<FnSpec> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&s| FnSpec::bump(vec![0.0, 0.2], s, Shape::Gaussian))
        .collect();
    let r2 = nash_probe(&DomainSpec::unit_ball(2), &spec2, &fns2, 0.5).unwrap();
    assert!(r2.pass, "{r2:#?}");
}

#[test]
fn nash_rejects_weights_vanishing_on_the_ball() {
    let spec = WeightSpec::radial_power(3, 1.0).unwrap();
    let f = gauss([0.0; 3], 0.2);
    assert!(nash_probe(&DomainSpec::unit_ball(3), &spec, &[f], 0.0).is_err());
}

#[test]
fn brownian_second_moment() {
    let e = bm(1e-2, 12);
    let r = bessel_moment_check(&e, &[1.0, 0.0, 0.0], &[0.5, 1.0], 20_000, 0.02).unwrap();
    assert!(r.pass, "{r:#?}");
    assert!((r.values[1] - 4.0).abs() < 0.1);
}

#[test]
fn moment_check_rejects_other_weights() {
    let spec = WeightSpec::new(3, RhoSpec::Constant { c: 1.0 }, PhiSpec::single_slab(1.0, 3.0)).unwrap();
    let e = Engine::new(spec, SimConfig::new(1e-2, 1.0, 0)).unwrap();
    assert!(bessel_moment_check(&e, &[1.0, 0.0, 0.0], &[1.0], 10, 0.02).is_err());
}

#[test]
fn lattice_has_expected_size_and_cell() {
    let (pts, cell) = lattice_around(&[0.0, 0.0], 1.0, 5);
    assert_eq!(pts.len(), 25);
    assert!((cell - 0.25).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn killed_semigroup_is_sub_markov(seed in 0u64..1000, h in 0.1f64..1.0, cx in -0.5f64..0.5) {
        let spec = WeightSpec::radial_power(3, 1.5).unwrap();
        let cfg = SimConfig::new(5e-3, 1.0, seed).with_mode(Mode::Killed { floor: Some(0.05) });
        let e = Engine::new(spec, cfg).unwrap();
        let f = FnSpec::Bump(Bump::new(vec![cx, 0.0, 0.0], 1.0, h, Shape::Biweight));
        let est = mc_semigroup(&f, 0.5, &[0.3, 0.0, 0.0], &e, 300).unwrap().estimate;
        prop_assert!(est.mean >= 0.0);
        prop_assert!(est.mean <= 1.0 + est.ci95);
    }

    #[test]
    fn symmetric_estimator_for_equal_functions(seed in 0u64..1000, r in 0.3f64..1.0) {
        let e = power(0.5, 2e-2, seed);
        let f = FnSpec::bump(vec![0.5, 0.0, 0.0], r, Shape::Biweight);
        let a = bilinear_form(&e, &f, &f, 0.1, 100).unwrap();
        let b = bilinear_form(&e, &f, &f.clone(), 0.1, 100).unwrap();
        prop_assert_eq!(a, b);
    }
}
