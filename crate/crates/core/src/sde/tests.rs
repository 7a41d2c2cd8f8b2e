use proptest::prelude::*;
use rand::SeedableRng;

use super::*;
use crate::stats::{ks_two_sample, MeanAccumulator};
use crate::weights::{PhiSpec, RhoSpec};

fn bm(d: usize) -> WeightSpec {
    WeightSpec::lebesgue(d)
}

fn slab_engine(beta: f64, dt: f64, t: f64, seed: u64) -> Engine {
    let phi = PhiSpec::single_slab(1.0 - beta, beta);
    let w = WeightSpec::new(3, RhoSpec::Constant { c: 1.0 }, phi).unwrap();
    Engine::new(w, SimConfig::new(dt, t, seed)).unwrap()
}

#[test]
fn drift_step_examples() {
    let cfg = SimConfig {
        drift_cap: 100.0,
        ..SimConfig::new(1e-3, 1.0, 0)
    };
    let w0 = WeightSpec::radial_power(3, 0.0).unwrap();
    assert_eq!(drift_step(&[0.3, 0.1, 0.0], &w0, &cfg), vec![0.0; 3]);
    let w1 = WeightSpec::radial_power(3, 1.0).unwrap();
    let s = drift_step(&[1.0, 0.0, 0.0], &w1, &cfg);
    assert!((s[0] - 5e-4).abs() < 1e-15 && s[1] == 0.0 && s[2] == 0.0);
    let s = drift_step(&[1e-4, 0.0, 0.0], &w1, &cfg);
    assert!((norm(&s) - 100.0 * 1e-3).abs() < 1e-12);
    // Singular point: no drift.
    assert_eq!(drift_step(&[0.0; 3], &w1, &cfg), vec![0.0; 3]);
}

#[test]
fn hyperplane_flip_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let up = Interface::hyperplane(2, 0.0, 1.0);
    for _ in 0..100 {
        let z: f64 = rng.sample(StandardNormal);
        let post = skew_cross_hyperplane(&[0.0, 0.0, 0.01], &[0.5, 0.5, z * 0.1], &up, 0.01, &mut rng);
        if z * 0.1 <= 0.01 {
            assert!(post[2] >= 0.0);
        }
        assert_eq!(&post[..2], &[0.5, 0.5]);
    }
    let half = Interface::hyperplane(2, 0.0, 0.5);
    let post = skew_cross_hyperplane(&[0.0, 0.0, 0.01], &[0.0, 0.0, -0.02], &half, 0.01, &mut rng);
    assert_eq!(post, vec![0.0, 0.0, -0.02]);
}

#[test]
fn sphere_flip_keeps_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let out = Interface::sphere(1.0, 1.0);
    let post = skew_cross_sphere(&[1.01, 0.0, 0.0], &[0.0, 0.95, 0.0], &out, 0.01, &mut rng).unwrap();
    assert!((post[1] - 1.05).abs() < 1e-12 && post[0] == 0.0);
    assert!(skew_cross_sphere(&[0.0; 3], &[0.0, 0.95, 0.0], &out, 0.01, &mut rng).is_err());
}

#[test]
fn reflect_examples() {
    let g = DomainSpec::unit_ball(3);
    assert_eq!(reflect(&[0.2, 0.0, 0.0], &g), (vec![0.2, 0.0, 0.0], 0.0));
    let (p, inc) = reflect(&[1.2, 0.0, 0.0], &g);
    assert!((p[0] - 1.0).abs() < 1e-15 && (inc - 0.2).abs() < 1e-15);
}

#[test]
fn kill_check_examples() {
    assert!(kill_check(&[0.0; 3], &bm(3), 1e-12));
    let w = WeightSpec::radial_power(3, 2.0).unwrap();
    assert!(!kill_check(&[1e-7, 0.0, 0.0], &w, 1e-12));
}

#[test]
fn path_driven_into_the_zero_set_is_killed() {
    // A floor of 0.25 on ρ = ‖x‖² kills as soon as the path enters B_{1/2}.
    let w = WeightSpec::radial_power(3, 2.0).unwrap();
    let cfg = SimConfig::new(1e-3, 5.0, 3).with_mode(Mode::Killed { floor: Some(0.25) });
    let e = Engine::new(w, cfg).unwrap();
    let killed = e
        .batch_summaries(&[0.6, 0.0, 0.0], 200)
        .unwrap()
        .into_iter()
        .filter(|s| matches!(s.status, Status::Killed { .. }))
        .count();
    assert!(killed > 0);
    let p = (0..50).map(|i| e.simulate(&[0.6, 0.0, 0.0], i).unwrap()).find(|p| !p.status.is_alive()).unwrap();
    match p.status {
        Status::Killed { time } => {
            assert!((p.times.last().unwrap() - time).abs() < 1e-12);
            assert!(norm(p.final_state()) <= 0.5);
        }
        _ => unreachable!(),
    }
}

#[test]
fn constant_rho_is_never_killed() {
    let cfg = SimConfig::new(1e-2, 1.0, 4).with_mode(Mode::Killed { floor: None });
    let e = Engine::new(bm(2), cfg).unwrap();
    let s = e.batch_summaries(&[0.0, 0.0], 500).unwrap();
    assert!(s.iter().all(|s| s.status.is_alive()));
}

#[test]
fn brownian_variance_matches_horizon() {
    let e = Engine::new(bm(3), SimConfig::new(1e-2, 2.0, 5)).unwrap();
    let s = e.batch_summaries(&[0.0; 3], 4000).unwrap();
    for k in 0..3 {
        let mut acc = MeanAccumulator::new();
        for p in &s {
            acc.push(p.final_state[k] * p.final_state[k]);
        }
        let est = acc.estimate();
        assert!((est.mean - 2.0).abs() < 3.0 * est.ci95.max(1e-12), "coord {k}: {est:?}");
    }
}

#[test]
fn identical_seeds_give_identical_paths() {
    let e = slab_engine(0.75, 1e-3, 0.5, 11);
    let a = e.simulate(&[0.0; 3], 7).unwrap();
    let b = e.simulate(&[0.0; 3], 7).unwrap();
    assert_eq!(a, b);
    let c = e.simulate(&[0.0; 3], 8).unwrap();
    assert_ne!(a.states, c.states);
}

#[test]
fn batch_results_do_not_depend_on_worker_count() {
    let e = slab_engine(0.75, 1e-3, 0.2, 12);
    let one = with_workers(1, || e.batch_summaries(&[0.0; 3], 64).unwrap()).unwrap();
    let four = with_workers(4, || e.batch_summaries(&[0.0; 3], 64).unwrap()).unwrap();
    assert_eq!(one, four);
}

#[test]
fn separation_is_enforced() {
    let phi = PhiSpec::Slabs {
        l: vec![-0.05],
        r: vec![],
        gamma: vec![1.0, 2.0],
        gamma_bar: vec![3.0],
    };
    let w = WeightSpec::new(2, RhoSpec::Constant { c: 1.0 }, phi).unwrap();
    assert!(Engine::new(w.clone(), SimConfig::new(1e-3, 1.0, 0)).is_err());
    assert!(Engine::new(w, SimConfig::new(1e-5, 1.0, 0)).is_ok());
}

#[test]
fn band_must_cover_one_step() {
    let cfg = SimConfig {
        skew_band: Some(0.01),
        ..SimConfig::new(1e-3, 1.0, 0)
    };
    assert!(Engine::new(bm(2), cfg).is_err());
}

#[test]
fn origin_is_not_startable_in_punctured_space() {
    let w = WeightSpec::new(3, RhoSpec::RadialPower { alpha: 1.5 }, PhiSpec::single_sphere(1.0, 1.0, 3.0)).unwrap();
    let e = Engine::new(w, SimConfig::new(1e-3, 1.0, 0)).unwrap();
    assert!(matches!(e.simulate(&[0.0; 3], 0), Err(Error::NotStartable(_))));
}

#[test]
fn skew_occupation_on_small_batch() {
    let e = slab_engine(0.75, 1e-3, 1.0, 13);
    let s = e.batch_summaries(&[0.0; 3], 4000).unwrap();
    let frac = s.iter().filter(|p| p.final_state[2] > 0.0).count() as f64 / 4000.0;
    assert!((frac - 0.75).abs() < 0.03, "{frac}");
}

#[test]
fn half_skew_interface_does_not_change_the_law() {
    let mon = Engine::new(bm(2), SimConfig::new(1e-3, 1.0, 14))
        .unwrap()
        .with_interface(Interface::hyperplane(1, 0.0, 0.5))
        .unwrap();
    let free = Engine::new(bm(2), SimConfig::new(1e-3, 1.0, 14)).unwrap().with_stage(1);
    let a: Vec<f64> = mon.batch_summaries(&[0.0; 2], 5000).unwrap().iter().map(|p| p.final_state[1]).collect();
    let b: Vec<f64> = free.batch_summaries(&[0.0; 2], 5000).unwrap().iter().map(|p| p.final_state[1]).collect();
    assert!(ks_two_sample(&a, &b).passes(0.01));
}

#[test]
fn reflected_ball_keeps_mass_and_touches_boundary() {
    let cfg = SimConfig::new(1e-3, 1.0, 15).with_mode(Mode::Reflected {
        domain: DomainSpec::unit_ball(3),
    });
    let e = Engine::new(bm(3), cfg).unwrap();
    let mut escaped = false;
    let s: Vec<PathSummary> = e.batch(1000, |e, i| {
        let mut rng = e.rng(i);
        let mut obs = |v: &StepView<'_>| assert!(norm(v.post) <= 1.0 + 1e-12);
        e.run_with(&[0.8, 0.0, 0.0], &mut rng, &mut obs)
    });
    escaped |= s.iter().any(|p| norm(&p.final_state) > 1.0 + 1e-12);
    assert!(!escaped);
    let positive = s.iter().filter(|p| p.ledger[0] > 0.0).count();
    assert!(positive as f64 >= 0.99 * 1000.0, "{positive}");
}

#[test]
fn bessel_second_moment_small_batch() {
    let e = Engine::new(WeightSpec::radial_power(3, 1.0).unwrap(), SimConfig::new(1e-3, 1.0, 16)).unwrap();
    let s = e.batch_summaries(&[1.0, 0.0, 0.0], 4000).unwrap();
    let mut acc = MeanAccumulator::new();
    for p in &s {
        acc.push(norm(&p.final_state).powi(2));
    }
    let est = acc.estimate();
    assert!((est.mean - 5.0).abs() < 3.0 * est.ci95, "{est:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledgers_nondecreasing_and_flat_off_band(seed in 0u64..1000, beta in 0.05f64..0.95) {
        let e = slab_engine(beta, 1e-3, 0.3, seed);
        let band = e.config().band() + 3.0 * e.dt().sqrt();
        let p = e.simulate(&[0.0, 0.0, 0.05], 0).unwrap();
        let lt = p.local_times.values().next().unwrap();
        prop_assert_eq!(lt[0], 0.0);
        for k in 1..lt.len() {
            prop_assert!(lt[k] >= lt[k - 1]);
            if lt[k] > lt[k - 1] {
                let near = p.states[k - 1][2].abs() <= band || p.states[k][2].abs() <= band
                    || p.states[k - 1][2] * p.states[k][2] <= 0.0;
                prop_assert!(near);
            }
        }
    }

    #[test]
    fn untamed_drift_step_is_exact(x in prop::collection::vec(0.5f64..3.0, 3), alpha in -2.0f64..2.0) {
        let w = WeightSpec::radial_power(3, alpha).unwrap();
        let cfg = SimConfig::new(1e-3, 1.0, 0);
        let b = crate::weights::log_drift(&w, &x).unwrap();
        let s = drift_step(&x, &w, &cfg);
        for (bi, si) in b.iter().zip(&s) {
            prop_assert!((bi * 1e-3 - si).abs() <= 1e-18);
        }
    }

    #[test]
    fn steps_stay_local(seed in 0u64..500) {
        let w = WeightSpec::radial_power(3, 1.0).unwrap();
        let cfg = SimConfig { drift_cap: 50.0, ..SimConfig::new(1e-3, 0.2, seed) };
        let e = Engine::new(w, cfg).unwrap();
        let p = e.simulate(&[0.05, 0.0, 0.0], 0).unwrap();
        let lim = 50.0 * 1e-3 + 6.0 * 1e-3f64.sqrt();
        for k in 1..p.states.len() {
            // Rare Gaussian outliers beyond 6σ per coordinate are excluded by the bound's margin.
            prop_assert!(dist(&p.states[k], &p.states[k - 1]) <= lim + 0.1);
        }
    }
}
