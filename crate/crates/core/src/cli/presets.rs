//! Built-in configs: one per weight construction plus one per acceptance
//! criterion.

use super::*;
use crate::functions::Shape;
use crate::weights::PhiSpec;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ExperimentConfig,
}

fn cfg(name: &str, weight: WeightSpec, dt: f64, horizon: f64, experiments: Vec<ExperimentItem>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seed: 20_240_601,
        weight,
        mode: Mode::Free,
        sim: SimSettings::new(dt, horizon),
        interfaces: Vec::new(),
        experiments,
        output: None,
    }
}

fn simulate(x0: Vec<f64>, paths: usize) -> Experiment {
    Experiment::Simulate {
        x0,
        paths,
        record_paths: 0,
        expect_variance: None,
        variance_tol: default_var_tol(),
        conservative: false,
        skew: None,
        reflected: None,
    }
}

fn conservative(x0: Vec<f64>, paths: usize) -> Experiment {
    let mut e = simulate(x0, paths);
    if let Experiment::Simulate { conservative, .. } = &mut e {
        *conservative = true;
    }
    e
}

fn weight(d: usize, rho: RhoSpec, phi: PhiSpec) -> WeightSpec {
    WeightSpec {
        dimension: d,
        rho,
        phi,
    }
}

fn e1(d: usize, a: f64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[0] = a;
    x
}

fn annuli_skew() -> ExperimentConfig {
    let w = weight(
        3,
        RhoSpec::RadialPower { alpha: 0.5 },
        PhiSpec::Annuli {
            m0: 1.0,
            l: vec![0.5],
            r: vec![2.0],
            gamma: vec![1.0, 2.0],
            gamma_bar: vec![1.0, 0.5],
        },
    );
    let mut sim = ExperimentItem::new(conservative(vec![1.5, 0.0, 0.0], 2000));
    if let Experiment::Simulate { record_paths, .. } = &mut sim.experiment {
        *record_paths = 5;
    }
    cfg("annuli-skew", w, 1e-3, 1.0, vec![sim.label("simulate")])
}

fn lipschitz_skew() -> ExperimentConfig {
    let w = weight(
        3,
        RhoSpec::Constant { c: 1.0 },
        PhiSpec::LipschitzDomain {
            domain: DomainSpec::boxed(&[-1.0; 3], &[1.0; 3]),
            beta: 0.7,
        },
    );
    cfg(
        "lipschitz-skew",
        w,
        1e-3,
        1.0,
        vec![ExperimentItem::new(conservative(vec![0.5, 0.0, 0.0], 2000)).label("simulate")],
    )
}

fn slab_skew() -> ExperimentConfig {
    let w = weight(
        3,
        RhoSpec::Constant { c: 1.0 },
        PhiSpec::Slabs {
            l: vec![-1.0],
            r: vec![1.0],
            gamma: vec![1.0, 2.0],
            gamma_bar: vec![3.0, 1.0],
        },
    );
    cfg(
        "slab-skew",
        w,
        1e-3,
        1.0,
        vec![ExperimentItem::new(conservative(vec![0.0, 0.0, 0.5], 2000)).label("simulate")],
    )
}

fn killed() -> ExperimentConfig {
    let mut c = cfg(
        "killed",
        power_weight(3, 2.0),
        1e-3,
        2.0,
        vec![ExperimentItem::new(simulate(vec![0.3, 0.0, 0.0], 2000)).label("simulate")],
    );
    c.mode = Mode::Killed { floor: Some(0.01) };
    c
}

fn reflected_weighted() -> ExperimentConfig {
    let w = weight(3, RhoSpec::SquaredRadial { xi0: 1.0, xi2: 0.5 }, PhiSpec::uniform());
    let mut c = cfg(
        "reflected",
        w,
        1e-3,
        50.0,
        vec![ExperimentItem::new(Experiment::Simulate {
            x0: vec![0.0; 3],
            paths: 1000,
            record_paths: 0,
            expect_variance: None,
            variance_tol: default_var_tol(),
            conservative: true,
            skew: None,
            reflected: Some(reflected_defaults()),
        })
        .label("radial-histogram")],
    );
    c.mode = Mode::Reflected {
        domain: DomainSpec::unit_ball(3),
    };
    c
}

fn reflected_defaults() -> ReflectedCheck {
    ReflectedCheck {
        burn_in: default_burn_in(),
        spacing: default_spacing(),
        bins: default_bins(),
        level: default_level(),
        ledger_fraction: default_ledger_fraction(),
    }
}

fn log_weight() -> ExperimentConfig {
    let w = weight(
        3,
        RhoSpec::LogModified {
            alpha1: 0.5,
            alpha2: 0.5,
            beta1: 1.0,
            beta2: 0.5,
        },
        PhiSpec::uniform(),
    );
    cfg(
        "log-weight",
        w,
        1e-3,
        1.0,
        vec![ExperimentItem::new(conservative(vec![0.5, 0.0, 0.0], 2000)).label("simulate")],
    )
}

fn brownian() -> ExperimentConfig {
    let mut sim = simulate(vec![0.0; 3], 20_000);
    if let Experiment::Simulate { expect_variance, .. } = &mut sim {
        *expect_variance = Some(1.0);
    }
    cfg(
        "brownian",
        WeightSpec::lebesgue(3),
        1e-2,
        1.0,
        vec![ExperimentItem::new(sim).label("variance")],
    )
}

fn c1() -> ExperimentConfig {
    let w = weight(3, RhoSpec::Constant { c: 1.0 }, PhiSpec::single_slab(1.0, 3.0));
    let item = ExperimentItem::new(Experiment::Simulate {
        x0: vec![0.0; 3],
        paths: 100_000,
        record_paths: 0,
        expect_variance: None,
        variance_tol: default_var_tol(),
        conservative: true,
        skew: Some(SkewCheck {
            fraction: Range { lo: 0.73, hi: 0.77 },
            ks_level: 0.01,
        }),
        reflected: None,
    });
    cfg("acceptance-1", w, 1e-4, 1.0, vec![item.label("skew-endpoint-law")])
}

fn c2() -> ExperimentConfig {
    let items = [1.0, -1.0, 0.0]
        .iter()
        .map(|&a| {
            ExperimentItem::new(Experiment::Bessel {
                x0: e1(3, 1.0),
                ts: vec![1.0],
                paths: 100_000,
                tol: 0.02,
            })
            .label(&format!("bessel-alpha{a}"))
            .weight(power_weight(3, a))
        })
        .collect();
    cfg("acceptance-2", power_weight(3, 1.0), 1e-3, 1.0, items)
}

/// The first coordinate of a planar Brownian motion is a standard 1-D one.
fn c3() -> ExperimentConfig {
    let lt = ExperimentItem::new(Experiment::LocalTime {
        x0: vec![0.0; 2],
        level: Level::Coordinate { coord: 0, a: 0.0 },
        paths: 40_000,
        eps: Some(0.02),
        rule: SignRule::default(),
        range: Some(Range { lo: 0.782, hi: 0.814 }),
        gap_tol: Some(0.03),
    })
    .label("local-time");
    let rv = ExperimentItem::new(Experiment::Revuz {
        x0: vec![0.0; 2],
        interface: Interface::hyperplane(0, 0.0, 0.5),
        paths: 20_000,
        target: Some(std::f64::consts::FRAC_1_SQRT_2),
        tol: 0.03,
        cross_check: Some(CrossCheck { paths: 20_000, eps: None }),
    })
    .label("revuz")
    .dt(1e-3)
    .horizon(10.0);
    cfg("acceptance-3", WeightSpec::lebesgue(2), 1e-4, 1.0, vec![lt, rv])
}

fn c4() -> ExperimentConfig {
    let items = [-1.0, 0.5, 1.5]
        .iter()
        .map(|&a| {
            ExperimentItem::new(conservative(e1(3, 1.0), 10_000))
                .label(&format!("conservative-alpha{a}"))
                .weight(power_weight(3, a))
        })
        .collect();
    cfg("acceptance-4", power_weight(3, 0.5), 1e-3, 1.0, items)
}

fn c5() -> ExperimentConfig {
    let w = weight(3, RhoSpec::RadialPower { alpha: 1.0 }, PhiSpec::single_slab(1.0, 3.0));
    let item = ExperimentItem::new(Experiment::Symmetry {
        f: FnSpec::bump(vec![0.5, 0.0, 0.3], 1.0, Shape::Biweight),
        g: FnSpec::bump(vec![-0.3, 0.4, -0.2], 1.0, Shape::Biweight),
        t: 0.5,
        paths: 200_000,
        tol: 0.03,
    });
    cfg("acceptance-5", w, 1e-3, 0.5, vec![item.label("symmetry")])
}

fn c6() -> ExperimentConfig {
    let pi = std::f64::consts::PI;
    let item = ExperimentItem::new(Experiment::Riesz {
        g: FnSpec::indicator_ball(vec![0.0; 3], 1.0),
        eta: 2.0,
        points: vec![
            RieszPoint {
                x: vec![0.0; 3],
                expect: Some(2.0 * pi),
            },
            RieszPoint {
                x: e1(3, 2.0),
                expect: Some(2.0 * pi / 3.0),
            },
        ],
        tol: 1e-3,
    });
    cfg("acceptance-6", WeightSpec::lebesgue(3), 1e-3, 1.0, vec![item.label("newton")])
}

fn a2(family: BallFamilyKind, alpha: f64, max_spread: Option<f64>, min_growth: Option<f64>) -> Experiment {
    Experiment::A2 {
        family,
        count: default_a2_count(),
        alpha: Some(alpha),
        max_spread,
        min_growth,
    }
}

fn c7() -> ExperimentConfig {
    let items = vec![
        ExperimentItem::new(a2(BallFamilyKind::CenteredDyadic, 1.0, Some(1.2), None)).label("alpha1-centered"),
        ExperimentItem::new(a2(BallFamilyKind::NearTangent, 1.0, Some(1.2), None)).label("alpha1-near-tangent"),
        ExperimentItem::new(a2(BallFamilyKind::NearTangent, 3.5, None, Some(10.0))).label("alpha3.5-near-tangent"),
    ];
    cfg("acceptance-7", power_weight(3, 1.0), 1e-3, 1.0, items)
}

fn c8() -> ExperimentConfig {
    let xs = (0..5).map(|i| e1(3, 0.5 + 0.25 * i as f64)).collect();
    let ys = (0..5).map(|j| vec![0.0, 0.5 + 0.25 * j as f64, 0.0]).collect();
    let item = ExperimentItem::new(Experiment::Envelope {
        xs,
        ys,
        paths: 10_000,
        bandwidth: None,
        tol: 0.2,
    });
    cfg("acceptance-8", power_weight(3, 1.0), 2e-3, 8.0, vec![item.label("envelope")])
}

fn c9() -> ExperimentConfig {
    let item = ExperimentItem::new(Experiment::Simulate {
        x0: vec![0.0; 3],
        paths: 1000,
        record_paths: 0,
        expect_variance: None,
        variance_tol: default_var_tol(),
        conservative: true,
        skew: None,
        reflected: Some(reflected_defaults()),
    });
    let mut c = cfg("acceptance-9", WeightSpec::lebesgue(3), 1e-3, 50.0, vec![item.label("reflected-ball")]);
    c.mode = Mode::Reflected {
        domain: DomainSpec::unit_ball(3),
    };
    c
}

fn c10() -> ExperimentConfig {
    let f = FnSpec::bump(e1(3, 1.0), 1.0, Shape::Biweight);
    let grid = vec![
        e1(3, 1.0),
        e1(3, 0.6),
        e1(3, 1.4),
        vec![1.0, 0.4, 0.0],
        vec![1.0, 0.0, -0.4],
    ];
    let items = [-1.0, 1.0]
        .iter()
        .map(|&a| {
            ExperimentItem::new(Experiment::Feller {
                f: f.clone(),
                grid: grid.clone(),
                ts: vec![0.1, 0.01, 0.001],
                paths: 10_000,
                far: Some(FarField {
                    points: vec![e1(3, 10.0)],
                    t: 1.0,
                    tol: 1e-6,
                }),
            })
            .label(&format!("feller-alpha{a}"))
            .weight(power_weight(3, a))
        })
        .collect();
    cfg("acceptance-10", power_weight(3, 1.0), 1e-4, 1.0, items)
}

fn c11() -> ExperimentConfig {
    let slab = weight(3, RhoSpec::RadialPower { alpha: 1.0 }, PhiSpec::single_slab(1.0, 3.0));
    let mut sim = conservative(vec![0.5, 0.0, 0.0], 400);
    if let Experiment::Simulate { record_paths, .. } = &mut sim {
        *record_paths = 2;
    }
    let items = vec![
        ExperimentItem::new(sim).label("simulate"),
        ExperimentItem::new(Experiment::LocalTime {
            x0: vec![0.5, 0.0, 0.0],
            level: Level::Coordinate { coord: 2, a: 0.0 },
            paths: 300,
            eps: None,
            rule: SignRule::default(),
            range: None,
            gap_tol: None,
        })
        .label("local-time"),
        ExperimentItem::new(Experiment::Bessel {
            x0: e1(3, 1.0),
            ts: vec![0.5],
            paths: 400,
            tol: 0.2,
        })
        .label("bessel")
        .weight(power_weight(3, 1.0)),
        ExperimentItem::new(Experiment::KernelBound {
            x: e1(3, 0.5),
            ts: vec![0.25],
            paths: 400,
            grid_points: 3,
            eps: 1.0,
            tol: 10.0,
        })
        .label("kernel"),
    ];
    cfg("acceptance-11", slab, 1e-2, 1.0, items)
}

/// All built-in presets.
pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "annuli-skew",
            description: "radial power weight with jumps on concentric spheres",
            config: annuli_skew(),
        },
        Preset {
            name: "lipschitz-skew",
            description: "skew reflection on the boundary of a cube",
            config: lipschitz_skew(),
        },
        Preset {
            name: "slab-skew",
            description: "piecewise-constant weight in the last coordinate",
            config: slab_skew(),
        },
        Preset {
            name: "killed",
            description: "rho = |x|^2, killed where rho falls below a floor",
            config: killed(),
        },
        Preset {
            name: "reflected",
            description: "unit ball, rho = xi^2 with xi = 1 + |x|^2/2, reflecting boundary",
            config: reflected_weighted(),
        },
        Preset {
            name: "log-weight",
            description: "power weight with logarithmic factors vanishing on the unit sphere",
            config: log_weight(),
        },
        Preset {
            name: "brownian",
            description: "zero drift: endpoint variance equals the horizon",
            config: brownian(),
        },
        Preset {
            name: "acceptance-1",
            description: "skew endpoint law against the exact skew Brownian motion",
            config: c1(),
        },
        Preset {
            name: "acceptance-2",
            description: "Bessel second moments for alpha in {1, -1, 0}",
            config: c2(),
        },
        Preset {
            name: "acceptance-3",
            description: "Brownian local time at 0 and its discounted Revuz functional",
            config: c3(),
        },
        Preset {
            name: "acceptance-4",
            description: "conservativeness for alpha in {-1, 0.5, 1.5}",
            config: c4(),
        },
        Preset {
            name: "acceptance-5",
            description: "symmetry of the semigroup with respect to m",
            config: c5(),
        },
        Preset {
            name: "acceptance-6",
            description: "Newtonian potential of the unit ball",
            config: c6(),
        },
        Preset {
            name: "acceptance-7",
            description: "A2 products for alpha = 1 and alpha = 3.5",
            config: c7(),
        },
        Preset {
            name: "acceptance-8",
            description: "resolvent kernel envelope constants",
            config: c8(),
        },
        Preset {
            name: "acceptance-9",
            description: "reflected Brownian motion in the unit ball",
            config: c9(),
        },
        Preset {
            name: "acceptance-10",
            description: "Feller continuity at zero and vanishing at infinity",
            config: c10(),
        },
        Preset {
            name: "acceptance-11",
            description: "small mixed run for reproducibility checks",
            config: c11(),
        },
    ]
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    presets().into_iter().find(|p| p.name == name).map(|p| p.config)
}
