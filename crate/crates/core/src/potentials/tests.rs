use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::functions::{Bump, Shape};
use crate::sde::SimConfig;
use crate::weights::WeightSpec;

fn unit_ball_indicator() -> FnSpec {
    FnSpec::indicator_ball(vec![0.0; 3], 1.0)
}

#[test]
fn riesz_of_zero_is_zero() {
    assert_eq!(riesz(&FnSpec::Zero, 2.0, &[0.0; 3]).unwrap().value, 0.0);
}

#[test]
fn riesz_newton_oracles() {
    let g = unit_ball_indicator();
    let at0 = riesz(&g, 2.0, &[0.0; 3]).unwrap();
    assert!((at0.value - 2.0 * PI).abs() < 1e-9, "{at0:?}");
    let out = riesz(&g, 2.0, &[2.0, 0.0, 0.0]).unwrap();
    assert!((out.value - 2.0 * PI / 3.0).abs() < 1e-9, "{out:?}");
    // Inside the ball: 2π(1 − ‖x‖²/3).
    let x = [0.3, -0.2, 0.4];
    let r2 = 0.09 + 0.04 + 0.16;
    let inside = riesz(&g, 2.0, &x).unwrap();
    assert!((inside.value - 2.0 * PI * (1.0 - r2 / 3.0)).abs() < 1e-8, "{inside:?}");
    // On the boundary sphere: 4π/3.
    let on = riesz(&g, 2.0, &[0.0, 1.0, 0.0]).unwrap();
    assert!((on.value - 4.0 * PI / 3.0).abs() < 1e-8, "{on:?}");
}

#[test]
fn riesz_of_gaussian_at_centre() {
    // 4π ∫ s e^{−s²/2} ds = 4π.
    let g = FnSpec::bump(vec![0.0; 3], 1.0, Shape::Gaussian);
    let v = riesz(&g, 2.0, &[0.0; 3]).unwrap();
    assert!((v.value - 4.0 * PI).abs() < 1e-8, "{v:?}");
}

#[test]
fn riesz_small_order_in_two_dimensions() {
    // d = 2, η = 1/2, x = 0: 2π ∫_0^1 s^{−1/2} ds = 4π.
    let g = FnSpec::indicator_ball(vec![0.0; 2], 1.0);
    let v = riesz(&g, 0.5, &[0.0; 2]).unwrap();
    assert!((v.value - 4.0 * PI).abs() < 1e-8, "{v:?}");
}

#[test]
fn riesz_rejects_bad_orders() {
    let g = unit_ball_indicator();
    assert!(matches!(riesz(&g, 0.0, &[0.0; 3]), Err(Error::NonIntegrable(_))));
    assert!(matches!(riesz(&g, -1.0, &[0.0; 3]), Err(Error::NonIntegrable(_))));
    assert!(riesz(&g, 3.0, &[0.0; 3]).is_err());
    assert!(riesz(&FnSpec::Constant { c: 1.0 }, 2.0, &[0.0; 3]).is_err());
}

#[test]
fn holder_probe_examples() {
    let grid = Lattice::cube(vec![-1.0, -1.0], vec![1.0, 1.0], 9);
    let c = holder_probe(&|_: &[f64]| 3.0, &grid, 0.5).unwrap();
    assert!(c.pass && c.exponent.is_infinite());
    let s = holder_probe(&|x: &[f64]| norm(x).sqrt(), &grid, 0.5).unwrap();
    assert!((s.exponent - 0.5).abs() < 0.02 && s.pass, "{s:?}");
    let rough = holder_probe(&|x: &[f64]| norm(x).powf(0.2), &grid, 0.5).unwrap();
    assert!(!rough.pass);
}

#[test]
fn newtonian_potential_is_lipschitz_away_from_support() {
    let g = unit_ball_indicator();
    let f = |x: &[f64]| riesz(&g, 2.0, &[x[0], x[1], 0.0]).unwrap().value;
    let region = Lattice {
        lo: vec![-3.0, -3.0],
        hi: vec![3.0, 3.0],
        n: 9,
        annulus: Some((2.0, 3.0)),
    };
    let fit = holder_probe(&f, &region, 1.0).unwrap();
    assert!(fit.pass, "{fit:?}");
}

#[test]
fn envelope_examples() {
    let e = resolvent_envelope(0.0, 3, &[0.0; 3], &[0.0, 2.0, 0.0]).unwrap();
    assert_eq!(e.phi, e.psi);
    assert!((e.phi - 0.5).abs() < 1e-15);
    assert_eq!(e.lower, 2.0 * e.upper);
    let e = resolvent_envelope(1.0, 3, &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!((e.phi, e.psi), (1.0, 1.0));
    let e = resolvent_envelope(1.0, 3, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
    assert!(e.phi.is_infinite());
    assert!(resolvent_envelope(1.0, 3, &[1.0, 0.0, 0.0], &[0.0; 3]).is_err());
    let e = resolvent_envelope(-1.0, 3, &[0.0; 3], &[2.0, 0.0, 0.0]).unwrap();
    assert_eq!(e.lower, e.phi);
    assert_eq!(e.upper, e.phi + e.psi);
}

#[test]
fn envelope_fit_holds_by_construction() {
    let pairs = vec![
        (vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]),
        (vec![0.5, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
    ];
    let fit = fit_envelope(1.0, 3, &pairs, &[0.3, 0.2]).unwrap();
    assert!(fit.sandwich_holds);
    assert!(fit.c1 <= fit.c1_ls && fit.c2 >= fit.c2_ls);
}

#[test]
fn resolvent_of_constants() {
    let e = Engine::new(WeightSpec::radial_power(3, 1.0).unwrap(), SimConfig::new(1e-2, 5.0, 1)).unwrap();
    let one = mc_resolvent(&ResolventSource::Density { f: FnSpec::Constant { c: 1.0 } }, &[1.0, 0.0, 0.0], &e, 200).unwrap();
    assert!((one.value - (1.0 - (-5.0f64).exp())).abs() < 1e-12);
    let c = mc_resolvent(&ResolventSource::Density { f: FnSpec::Constant { c: 2.5 } }, &[1.0, 0.0, 0.0], &e, 200).unwrap();
    assert!((c.value - 2.5 * (1.0 - (-5.0f64).exp())).abs() < 1e-12);
}

#[test]
fn s00_with_zero_measure_passes() {
    let e = Engine::new(WeightSpec::lebesgue(3), SimConfig::new(1e-2, 5.0, 1)).unwrap();
    let region = Lattice::cube(vec![-1.0; 3], vec![1.0; 3], 5);
    let r = s00_check(&MeasureSpec::Zero, &e, &[vec![0.0; 3], vec![0.5, 0.0, 0.0]], &|_: &[f64]| 0.0, 10, 0.05, &region, 0.5).unwrap();
    assert!(r.pass, "{r:?}");
}

fn bump_strategy() -> impl Strategy<Value = FnSpec> {
    (prop::collection::vec(-1.0f64..1.0, 3), 0.3f64..1.2, 0.1f64..2.0, 0usize..3).prop_map(|(c, r, h, s)| {
        let shape = [Shape::Indicator, Shape::Biweight, Shape::Gaussian][s];
        FnSpec::Bump(Bump::new(c, r, h, shape))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn riesz_is_linear_and_monotone(f in bump_strategy(), g in bump_strategy(), x in prop::collection::vec(-2.0f64..2.0, 3), a in 0.1f64..3.0) {
        let vf = riesz(&f, 2.0, &x).unwrap().value;
        let vg = riesz(&g, 2.0, &x).unwrap().value;
        let sum = FnSpec::Sum { terms: vec![f.clone(), g.clone()] };
        let vs = riesz(&sum, 2.0, &x).unwrap().value;
        prop_assert!((vs - vf - vg).abs() <= 1e-7 * vs.abs().max(1.0));
        prop_assert!(vf >= 0.0 && vs >= vf);
        let scaled = match &f { FnSpec::Bump(b) => FnSpec::Bump(Bump { height: a * b.height, ..b.clone() }), _ => unreachable!() };
        let va = riesz(&scaled, 2.0, &x).unwrap().value;
        prop_assert!((va - a * vf).abs() <= 1e-7 * va.abs().max(1.0));
    }

    #[test]
    fn riesz_is_translation_invariant(f in bump_strategy(), x in prop::collection::vec(-2.0f64..2.0, 3), z in prop::collection::vec(-1.0f64..1.0, 3), eta in 0.5f64..2.5) {
        let v = riesz(&f, eta, &x).unwrap().value;
        let shift = |p: &[f64]| p.iter().zip(&z).map(|(a, b)| a + b).collect::<Vec<f64>>();
        let fs = match &f { FnSpec::Bump(b) => FnSpec::Bump(Bump { center: shift(&b.center), ..b.clone() }), _ => unreachable!() };
        let vs = riesz(&fs, eta, &shift(&x)).unwrap().value;
        prop_assert!((v - vs).abs() <= 1e-6 * v.abs().max(1.0), "{} vs {}", v, vs);
    }
}
