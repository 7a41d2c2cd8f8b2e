//! Monte-Carlo estimates of `P_t f(x) = E_x[f(X_t); t < ζ]`, kernel density
//! estimates of `p_t(x, ·)` and `r_1(x, ·)` with respect to `m`, and the
//! Feller / symmetry / heat-kernel / Nash / moment checks built on them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{check_dim, Error, Result};
use crate::functions::FnSpec;
use crate::geometry::ball_volume;
use crate::potentials::fit_envelope;
use crate::quadrature::gl24;
use crate::report::{CheckReport, Comparison};
use crate::rng::{splitmix64, StreamKey};
use crate::sde::{Engine, Mode, NoObserver, StepView};
use crate::stats::{MeanAccumulator, MeanEstimate};
use crate::weights::domain::{dist, norm};
use crate::weights::volume::ball_mass;
use crate::weights::{DomainSpec, PhiSpec, RhoSpec, WeightSpec};

/// `P_t f(x)` with the number of paths that did not survive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEstimate {
    pub t: f64,
    pub estimate: MeanEstimate,
    pub killed: usize,
    pub errored: usize,
}

/// `P_t f(x)` from `n` paths; a path that is killed or fails contributes 0.
pub fn mc_semigroup(f: &FnSpec, t: f64, x: &[f64], engine: &Engine, n: usize) -> Result<SemigroupEstimate> {
    f.validate(x.len())?;
    mc_semigroup_fn(&|y: &[f64]| f.eval(y), t, x, engine, n)
}

pub fn mc_semigroup_fn(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    t: f64,
    x: &[f64],
    engine: &Engine,
    n: usize,
) -> Result<SemigroupEstimate> {
    check_time(t)?;
    let e = engine.with_horizon(t)?;
    e.check_start(x)?;
    let rows = e.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let s = e.run_with(x, &mut rng, &mut NoObserver);
        (s.status.is_alive(), matches!(s.status, crate::sde::Status::Error { .. }), s.final_state)
    });
    Ok(collect(t, rows, f))
}

/// `P_s(P_t f)(x)` with the second leg restarted on an independent stream.
pub fn mc_semigroup_two_stage(
    f: &FnSpec,
    s: f64,
    t: f64,
    x: &[f64],
    engine: &Engine,
    n: usize,
) -> Result<SemigroupEstimate> {
    check_time(s)?;
    check_time(t)?;
    f.validate(x.len())?;
    let first = engine.with_horizon(s)?;
    let second = engine.with_horizon(t)?.with_stage(splitmix64(engine.stage().wrapping_add(1)));
    first.check_start(x)?;
    let rows = first.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let a = e.run_with(x, &mut rng, &mut NoObserver);
        if !a.status.is_alive() {
            return (false, matches!(a.status, crate::sde::Status::Error { .. }), a.final_state);
        }
        let mut rng2 = second.rng(i);
        let b = second.run_with(&a.final_state, &mut rng2, &mut NoObserver);
        (b.status.is_alive(), matches!(b.status, crate::sde::Status::Error { .. }), b.final_state)
    });
    Ok(collect(s + t, rows, &|y: &[f64]| f.eval(y)))
}

fn collect(t: f64, rows: Vec<(bool, bool, Vec<f64>)>, f: &dyn Fn(&[f64]) -> f64) -> SemigroupEstimate {
    let mut acc = MeanAccumulator::new();
    let (mut killed, mut errored) = (0, 0);
    for (alive, err, y) in &rows {
        if *alive {
            acc.push(f(y));
        } else {
            acc.push(0.0);
            if *err {
                errored += 1;
            } else {
                killed += 1;
            }
        }
    }
    SemigroupEstimate {
        t,
        estimate: acc.estimate(),
        killed,
        errored,
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("time must be positive, got {t}")))
    }
}

/// Far-field part of the Feller check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub points: Vec<Vec<f64>>,
    pub t: f64,
    pub tol: f64,
}

/// `‖f‖_∞ · 2 P(‖W_t‖ >= a)` with `a = dist(x, supp f) − t·sup|b|`, where
/// the drift bound holds outside the smallest origin-centred ball containing
/// the support (Lévy's maximal inequality). `None` when no such bound is
/// available: interfaces, reflection, killing or a non-power `ρ`.
pub fn far_field_envelope(spec: &WeightSpec, mode: &Mode, f: &FnSpec, x: &[f64], t: f64) -> Option<f64> {
    if !matches!(mode, Mode::Free) || !matches!(spec.phi, PhiSpec::Uniform { .. }) {
        return None;
    }
    let d = spec.dimension;
    let big_r = f.support_radius_about(&vec![0.0; d])?;
    let sup_f: f64 = f.bumps().iter().map(|b| b.height.abs()).sum::<f64>()
        + match f {
            FnSpec::Constant { c } => c.abs(),
            _ => 0.0,
        };
    let drift = match spec.rho {
        RhoSpec::Constant { .. } => 0.0,
        RhoSpec::RadialPower { alpha } => {
            if big_r == 0.0 {
                return None;
            }
            alpha.abs() / (2.0 * big_r)
        }
        _ => return None,
    };
    let a = norm(x) - big_r - drift * t;
    if a <= 0.0 {
        return Some(sup_f);
    }
    let chi = ChiSquared::new(d as f64).ok()?;
    Some((sup_f * 2.0 * chi.sf(a * a / t)).min(sup_f))
}

/// Inputs of [`feller_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FellerOptions {
    pub grid: Vec<Vec<f64>>,
    pub ts: Vec<f64>,
    pub paths: usize,
    #[serde(default)]
    pub far: Option<FarField>,
}

/// Strong continuity at `t = 0` on a grid and vanishing at infinity.
///
/// Convergence is a trend test: the grid-averaged error `|P_t f − f|` must
/// decrease along decreasing `t`, and at every grid point the error at the
/// smallest `t` must be below the error at the largest.
pub fn feller_check(engine: &Engine, f: &FnSpec, opts: &FellerOptions) -> Result<CheckReport> {
    let d = engine.spec().dimension;
    f.validate(d)?;
    if !f.is_compactly_supported() {
        return Err(Error::InvalidConfig("feller check needs a compactly supported f".into()));
    }
    if opts.grid.is_empty() || opts.ts.len() < 2 {
        return Err(Error::InvalidConfig("feller check needs grid points and at least two times".into()));
    }
    let mut ts = opts.ts.clone();
    ts.sort_by(|a, b| b.total_cmp(a));
    let mut table = Vec::new();
    let mut grid = Vec::new();
    let mut errs = vec![vec![0.0; ts.len()]; opts.grid.len()];
    for (k, x) in opts.grid.iter().enumerate() {
        check_dim(d, x.len())?;
        let fx = f.eval(x);
        for (j, &t) in ts.iter().enumerate() {
            let e = mc_semigroup(f, t, x, engine, opts.paths)?;
            errs[k][j] = (e.estimate.mean - fx).abs();
            let mut row = x.clone();
            row.push(t);
            grid.push(row);
            table.push(errs[k][j]);
        }
    }
    let mean_err: Vec<f64> = (0..ts.len())
        .map(|j| errs.iter().map(|r| r[j]).sum::<f64>() / errs.len() as f64)
        .collect();
    let increases = mean_err.windows(2).filter(|w| w[1] >= w[0]).count() as f64;
    let last = ts.len() - 1;
    let bad_points = errs.iter().filter(|r| r[last] >= r[0]).count() as f64;
    let mut parts = vec![
        CheckReport::new("feller.trend", increases, 0.0, Comparison::AtMost)
            .with_parameters(json!({"ts": ts, "mean_error": mean_err})),
        CheckReport::new("feller.pointwise", bad_points, 0.0, Comparison::AtMost),
    ];
    if let Some(far) = &opts.far {
        for (k, x) in far.points.iter().enumerate() {
            check_dim(d, x.len())?;
            let e = mc_semigroup(f, far.t, x, engine, opts.paths)?;
            parts.push(
                CheckReport::new(format!("feller.far{k}.mc"), e.estimate.mean.abs(), far.tol, Comparison::AtMost)
                    .with_parameters(json!({"x": x, "t": far.t, "ci95": e.estimate.ci95, "paths": opts.paths})),
            );
            match far_field_envelope(engine.spec(), &engine.config().mode, f, x, far.t) {
                Some(env) => parts.push(
                    CheckReport::new(format!("feller.far{k}.envelope"), env, far.tol, Comparison::AtMost)
                        .with_parameters(json!({"x": x, "t": far.t})),
                ),
                None => {
                    let last = parts.last_mut().unwrap();
                    last.notes.push("no analytic envelope for this setup; Monte Carlo only".into());
                }
            }
        }
    }
    Ok(CheckReport::composite("feller", parts).with_grid(grid, table))
}

/// First 8 bytes of SHA-256 of the two functions' JSON, in order.
fn pair_stage(f: &FnSpec, g: &FnSpec) -> u64 {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(f).unwrap_or_default());
    h.update(b"|");
    h.update(serde_json::to_vec(g).unwrap_or_default());
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

/// Ball about the mean bump centre containing the support of `f`.
fn support_ball(f: &FnSpec, d: usize) -> Result<(Vec<f64>, f64)> {
    let bumps = f.bumps();
    let mut c = vec![0.0; d];
    if !bumps.is_empty() {
        for b in &bumps {
            for (ci, bi) in c.iter_mut().zip(&b.center) {
                *ci += bi / bumps.len() as f64;
            }
        }
    }
    let r = f
        .support_radius_about(&c)
        .ok_or_else(|| Error::InvalidConfig("function must have compact support".into()))?;
    Ok((c, r))
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, c: &[f64], r: f64) -> Vec<f64> {
    let d = c.len();
    let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let nz = norm(&z).max(f64::MIN_POSITIVE);
    let u: f64 = rng.random::<f64>();
    let s = r * u.powf(1.0 / d as f64);
    c.iter().zip(&z).map(|(ci, zi)| ci + s * zi / nz).collect()
}

/// `∫ f P_t g dm` with start points uniform on a ball containing `supp f`,
/// weighted by `ψ`. The stream family is a hash of `(f, g)`, so `f = g`
/// reproduces the same estimator exactly.
pub fn bilinear_form(engine: &Engine, f: &FnSpec, g: &FnSpec, t: f64, n: usize) -> Result<MeanEstimate> {
    check_time(t)?;
    let d = engine.spec().dimension;
    f.validate(d)?;
    g.validate(d)?;
    let (c, r) = support_ball(f, d)?;
    let vol = ball_volume(d) * r.powi(d as i32);
    let e = engine.with_horizon(t)?.with_stage(pair_stage(f, g));
    let spec = e.spec();
    let rows = e.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let u = uniform_in_ball(&mut rng, &c, r);
        let fu = f.eval(&u);
        if fu == 0.0 || !e.state_space().contains(&u) {
            return 0.0;
        }
        let w = fu * spec.rho(&u) * spec.phi(&u) * vol;
        let s = e.run_with(&u, &mut rng, &mut NoObserver);
        if s.status.is_alive() {
            w * g.eval(&s.final_state)
        } else {
            0.0
        }
    });
    Ok(rows.into_iter().collect::<MeanAccumulator>().estimate())
}

/// Compares `∫ f P_t g dm` with `∫ g P_t f dm`; passes if the relative gap is
/// below `tol`.
pub fn symmetry_check(engine: &Engine, f: &FnSpec, g: &FnSpec, t: f64, n: usize, tol: f64) -> Result<CheckReport> {
    let a = bilinear_form(engine, f, g, t, n)?;
    let b = bilinear_form(engine, g, f, t, n)?;
    let scale = 0.5 * (a.mean.abs() + b.mean.abs());
    let gap = if scale == 0.0 { 0.0 } else { (a.mean - b.mean).abs() / scale };
    let joint = if scale == 0.0 {
        0.0
    } else {
        1.96 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt() / scale
    };
    Ok(CheckReport::new("symmetry", gap, tol, Comparison::AtMost).with_parameters(json!({
        "t": t,
        "paths": n,
        "f_pt_g": a.mean,
        "f_pt_g_ci95": a.ci95,
        "g_pt_f": b.mean,
        "g_pt_f_ci95": b.ci95,
        "relative_joint_ci95": joint,
    })))
}

/// Options for the kernel density estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeOptions {
    /// Gaussian kernel width; Silverman's rule on the sample if absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Floor applied to `ψ` before dividing.
    #[serde(default = "default_psi_floor")]
    pub psi_floor: f64,
}

fn default_psi_floor() -> f64 {
    1e-8
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            bandwidth: None,
            psi_floor: default_psi_floor(),
        }
    }
}

/// `p̂_t(x, y)` with respect to `m` on a grid of `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub t: f64,
    pub x: Vec<f64>,
    pub grid: Vec<Vec<f64>>,
    /// Density with respect to `m`.
    pub density: Vec<f64>,
    pub ci95: Vec<f64>,
    /// Density of the law of `X_t` with respect to Lebesgue measure.
    pub lebesgue: Vec<f64>,
    pub bandwidth: f64,
    pub paths: usize,
    pub killed: usize,
}

impl KernelEstimate {
    /// Riemann sum of the Lebesgue density over the grid.
    pub fn mass(&self, cell_volume: f64) -> f64 {
        self.lebesgue.iter().sum::<f64>() * cell_volume
    }
}

/// Silverman's rule `h = σ̄ (4/((d+2)n))^{1/(d+4)}`, `σ̄` the mean coordinate
/// standard deviation.
pub fn silverman_bandwidth(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 1.0;
    }
    let d = samples[0].len();
    let sigma = (0..d)
        .map(|k| samples.iter().map(|s| s[k]).collect::<MeanAccumulator>().variance().sqrt())
        .sum::<f64>()
        / d as f64;
    let df = d as f64;
    sigma * (4.0 / ((df + 2.0) * n as f64)).powf(1.0 / (df + 4.0))
}

#[inline]
fn gauss_kernel(y: &[f64], z: &[f64], h: f64, norm_c: f64) -> f64 {
    let mut q = 0.0;
    for (a, b) in y.iter().zip(z) {
        let u = a - b;
        q += u * u;
    }
    let q = q / (h * h);
    if q > 80.0 {
        0.0
    } else {
        norm_c * (-0.5 * q).exp()
    }
}

fn kernel_norm(d: usize, h: f64) -> f64 {
    (2.0 * std::f64::consts::PI * h * h).powf(-(d as f64) / 2.0)
}

/// KDE of the endpoint law at time `t`, divided by `ψ`.
pub fn heat_kernel_estimate(
    engine: &Engine,
    x: &[f64],
    t: f64,
    grid: &[Vec<f64>],
    n: usize,
    opts: &KdeOptions,
) -> Result<KernelEstimate> {
    check_time(t)?;
    let d = engine.spec().dimension;
    for y in grid {
        check_dim(d, y.len())?;
    }
    let e = engine.with_horizon(t)?;
    e.check_start(x)?;
    let rows = e.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let s = e.run_with(x, &mut rng, &mut NoObserver);
        s.status.is_alive().then_some(s.final_state)
    });
    let killed = rows.iter().filter(|r| r.is_none()).count();
    let alive: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    let h = opts.bandwidth.unwrap_or_else(|| silverman_bandwidth(&alive));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")));
    }
    let c = kernel_norm(d, h);
    let spec = e.spec();
    let per_point: Vec<(f64, f64, f64)> = {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|y| {
                let mut acc = MeanAccumulator::new();
                for z in &alive {
                    acc.push(gauss_kernel(y, z, h, c));
                }
                for _ in 0..killed {
                    acc.push(0.0);
                }
                let est = acc.estimate();
                let psi = (spec.rho(y) * spec.phi(y)).max(opts.psi_floor);
                (est.mean, est.mean / psi, est.ci95 / psi)
            })
            .collect()
    };
    Ok(KernelEstimate {
        t,
        x: x.to_vec(),
        grid: grid.to_vec(),
        lebesgue: per_point.iter().map(|p| p.0).collect(),
        density: per_point.iter().map(|p| p.1).collect(),
        ci95: per_point.iter().map(|p| p.2).collect(),
        bandwidth: h,
        paths: n,
        killed,
    })
}

/// Regular lattice of `k^d` points on `x ± half_width`.
pub fn lattice_around(x: &[f64], half_width: f64, k: usize) -> (Vec<Vec<f64>>, f64) {
    let d = x.len();
    let k = k.max(2);
    let step = 2.0 * half_width / (k - 1) as f64;
    let mut pts = Vec::with_capacity(k.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        pts.push(idx.iter().zip(x).map(|(&i, c)| c - half_width + step * i as f64).collect());
        let mut a = 0;
        while a < d {
            idx[a] += 1;
            if idx[a] < k {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == d {
            break;
        }
    }
    (pts, step.powi(d as i32))
}

/// Fitted constant of `p_t(x,y) <= c exp(−‖x−y‖²/((4+ε)t)) / m(B_√t(y))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBound {
    pub c: f64,
    pub eps: f64,
    /// `p̂ / shape` per grid point.
    pub ratios: Vec<f64>,
    /// Points where `p̂ − ci95` exceeds `c · shape`.
    pub violations: usize,
}

/// Fits the smallest `c` (or checks a given one) on the grid of `est`.
pub fn kernel_bound(spec: &WeightSpec, est: &KernelEstimate, eps: f64, c: Option<f64>) -> Result<KernelBound> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    let t = est.t;
    let mut shapes = Vec::with_capacity(est.grid.len());
    for y in &est.grid {
        let m = ball_mass(spec, y, t.sqrt())?;
        let r = dist(&est.x, y);
        shapes.push((-r * r / ((4.0 + eps) * t)).exp() / m.value);
    }
    let ratios: Vec<f64> = est.density.iter().zip(&shapes).map(|(p, s)| p / s).collect();
    let c = c.unwrap_or_else(|| ratios.iter().copied().fold(0.0, f64::max));
    let violations = est
        .density
        .iter()
        .zip(&est.ci95)
        .zip(&shapes)
        .filter(|((p, ci), s)| *p - *ci > c * *s)
        .count();
    Ok(KernelBound {
        c,
        eps,
        ratios,
        violations,
    })
}

/// Fits the kernel bound at each time and checks that the fitted constants
/// agree within `tol` (relative to their mean). Also returns the estimates.
pub fn kernel_bound_check(
    engine: &Engine,
    x: &[f64],
    ts: &[f64],
    grid_k: usize,
    n: usize,
    eps: f64,
    tol: f64,
) -> Result<(CheckReport, Vec<KernelEstimate>)> {
    let mut cs = Vec::new();
    let mut parts = Vec::new();
    let mut ests = Vec::new();
    for &t in ts {
        let (grid, cell) = lattice_around(x, 2.5 * t.sqrt(), grid_k);
        let est = heat_kernel_estimate(engine, x, t, &grid, n, &KdeOptions::default())?;
        let b = kernel_bound(engine.spec(), &est, eps, None)?;
        parts.push(
            CheckReport::new(format!("kernel_bound.t{t}.violations"), b.violations as f64, 0.0, Comparison::AtMost)
                .with_constant("c", b.c)
                .with_parameters(json!({"t": t, "bandwidth": est.bandwidth, "mass": est.mass(cell)})),
        );
        cs.push(b.c);
        ests.push(est);
    }
    let mean = cs.iter().sum::<f64>() / cs.len().max(1) as f64;
    let spread = cs.iter().map(|c| (c / mean - 1.0).abs()).fold(0.0, f64::max);
    parts.push(CheckReport::new("kernel_bound.stability", spread, tol, Comparison::AtMost));
    let mut r = CheckReport::composite("kernel_bound", parts).with_parameters(json!({"x": x, "ts": ts, "eps": eps}));
    for (t, c) in ts.iter().zip(&cs) {
        r = r.with_constant(&format!("c_t{t}"), *c);
    }
    Ok((r, ests))
}

/// `r̂_1(x, y) = E_x ∫_0^T e^{−s} K_h(y − X_s) ds / ψ(y)` for each `y`.
/// The neglected tail is at most `e^{−T} sup_y K_h/ψ`.
pub fn resolvent_kernel_estimate(
    engine: &Engine,
    x: &[f64],
    ys: &[Vec<f64>],
    n: usize,
    h: f64,
    psi_floor: f64,
) -> Result<Vec<MeanEstimate>> {
    engine.check_start(x)?;
    let d = engine.spec().dimension;
    for y in ys {
        check_dim(d, y.len())?;
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")));
    }
    let c = kernel_norm(d, h);
    let spec = engine.spec();
    let inv_psi: Vec<f64> = ys.iter().map(|y| 1.0 / (spec.rho(y) * spec.phi(y)).max(psi_floor)).collect();
    let rows: Vec<Vec<f64>> = engine.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let mut acc = vec![0.0; ys.len()];
        let mut obs = |v: &StepView<'_>| {
            let w = 0.5 * ((-v.t0).exp() - (-v.t1).exp());
            for (a, y) in acc.iter_mut().zip(ys) {
                *a += w * (gauss_kernel(y, v.pre, h, c) + gauss_kernel(y, v.post, h, c));
            }
        };
        e.run_with(x, &mut rng, &mut obs);
        acc
    });
    Ok((0..ys.len())
        .map(|j| {
            rows.iter()
                .map(|r| r[j] * inv_psi[j])
                .collect::<MeanAccumulator>()
                .estimate()
        })
        .collect())
}

/// Inputs of [`envelope_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub paths: usize,
    /// Defaults to a quarter of the smallest `‖x − y‖`.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Allowed relative drift of the fitted constants between replicates.
    #[serde(default = "default_stability")]
    pub tol: f64,
}

fn default_stability() -> f64 {
    0.2
}

/// Fits `c₁ lower <= r̂_1 <= c₂ upper` on the `xs × ys` grid from two
/// independent replicates. Passes if the sandwich holds on each replicate
/// with its own constants, if the constants of the replicates agree within
/// `tol`, and if each replicate's constants, widened by `tol`, bracket the
/// other replicate's estimates.
pub fn envelope_check(engine: &Engine, opts: &EnvelopeOptions) -> Result<CheckReport> {
    let alpha = match engine.spec().rho {
        RhoSpec::RadialPower { alpha } => alpha,
        RhoSpec::Constant { .. } => 0.0,
        _ => return Err(Error::Unsupported("the resolvent envelope needs rho = |x|^alpha".into())),
    };
    let d = engine.spec().dimension;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = opts
        .xs
        .iter()
        .flat_map(|x| opts.ys.iter().map(move |y| (x.clone(), y.clone())))
        .collect();
    let min_dist = pairs.iter().map(|(x, y)| dist(x, y)).fold(f64::INFINITY, f64::min);
    if !(min_dist > 0.0) {
        return Err(Error::InvalidConfig("envelope grid needs x != y".into()));
    }
    let h = opts.bandwidth.unwrap_or(min_dist / 4.0);
    let mut reps = Vec::new();
    for rep in 0..2u64 {
        let e = engine.clone().with_stage(splitmix64(engine.stage() ^ (0xE1 + rep)));
        let mut vals = Vec::with_capacity(pairs.len());
        for x in &opts.xs {
            let est = resolvent_kernel_estimate(&e, x, &opts.ys, opts.paths, h, 1e-8)?;
            vals.extend(est.iter().map(|m| m.mean));
        }
        let fit = fit_envelope(alpha, d, &pairs, &vals)?;
        reps.push((vals, fit));
    }
    let (va, fa) = &reps[0];
    let (vb, fb) = &reps[1];
    let rel = |a: f64, b: f64| (a / b - 1.0).abs().max((b / a - 1.0).abs());
    let cross = |fit: &crate::potentials::EnvelopeFit, v: &[f64]| {
        pairs
            .iter()
            .zip(v)
            .filter(|((x, y), r)| {
                let env = crate::potentials::resolvent_envelope(alpha, d, x, y).unwrap();
                !(fit.c1 * env.lower <= **r * (1.0 + opts.tol) && **r <= (1.0 + opts.tol) * fit.c2 * env.upper)
            })
            .count() as f64
    };
    let parts = vec![
        CheckReport::new("envelope.sandwich", f64::from(u8::from(!(fa.sandwich_holds && fb.sandwich_holds))), 0.0, Comparison::AtMost),
        CheckReport::new("envelope.c1_stability", rel(fa.c1, fb.c1), opts.tol, Comparison::AtMost),
        CheckReport::new("envelope.c2_stability", rel(fa.c2, fb.c2), opts.tol, Comparison::AtMost),
        CheckReport::new("envelope.cross_fit", cross(fa, vb) + cross(fb, va), 0.0, Comparison::AtMost),
    ];
    let grid: Vec<Vec<f64>> = pairs.iter().map(|(x, y)| x.iter().chain(y).copied().collect()).collect();
    Ok(CheckReport::composite("envelope", parts)
        .with_parameters(json!({
            "alpha": alpha,
            "d": d,
            "bandwidth": h,
            "paths": opts.paths,
            "horizon": engine.horizon(),
            "tail_bound": (-engine.horizon()).exp() * kernel_norm(d, h) / 1e-8f64.max(min_psi(engine.spec(), &opts.ys)),
            "replicate_b": vb,
        }))
        .with_grid(grid, va.clone())
        .with_constant("c1", fa.c1)
        .with_constant("c2", fa.c2)
        .with_constant("c1_replicate", fb.c1)
        .with_constant("c2_replicate", fb.c2)
        .with_constant("c1_ls", fa.c1_ls)
        .with_constant("c2_ls", fa.c2_ls))
}

fn min_psi(spec: &WeightSpec, ys: &[Vec<f64>]) -> f64 {
    ys.iter().map(|y| spec.rho(y) * spec.phi(y)).fold(f64::INFINITY, f64::min)
}

/// Norms and energy of one test function on a ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashSample {
    pub l1: f64,
    pub l2: f64,
    /// `½ ∫ ‖∇f‖² dm`.
    pub energy: f64,
    /// `‖f‖₂^{2+4/D} / ((ℰ + ‖f‖₂²) ‖f‖₁^{4/D})`; zero for `f = 0`.
    pub ratio: f64,
}

/// `(‖f‖₁, ‖f‖₂², ℰ(f,f))` on `B_R(c)` against `m` by polar quadrature.
pub fn nash_integrals(spec: &WeightSpec, c: &[f64], big_r: f64, f: &FnSpec) -> Result<(f64, f64, f64)> {
    let d = spec.dimension;
    check_dim(d, c.len())?;
    let rule = gl24();
    const PANELS: usize = 24;
    let mut radial = Vec::with_capacity(PANELS * rule.nodes.len());
    for p in 0..PANELS {
        let a = big_r * p as f64 / PANELS as f64;
        let b = big_r * (p + 1) as f64 / PANELS as f64;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            radial.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
        }
    }
    // Unit directions with weights summing to the sphere area.
    let dirs: Vec<(Vec<f64>, f64)> = match d {
        2 => {
            let k = 128;
            (0..k)
                .map(|i| {
                    let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / k as f64;
                    (vec![th.cos(), th.sin()], 2.0 * std::f64::consts::PI / k as f64)
                })
                .collect()
        }
        3 => {
            let k = 64;
            let mut v = Vec::new();
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                for half in [-1.0, 1.0] {
                    // cos θ on [−1, 0] and [0, 1].
                    let u = 0.5 * (x + half);
                    let s = (1.0 - u * u).max(0.0).sqrt();
                    for j in 0..k {
                        let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / k as f64;
                        v.push((vec![s * ph.cos(), s * ph.sin(), u], 0.5 * w * 2.0 * std::f64::consts::PI / k as f64));
                    }
                }
            }
            v
        }
        _ => return Err(Error::Unsupported(format!("Nash quadrature is implemented for d = 2, 3, got {d}"))),
    };
    let (mut l1, mut l2, mut en) = (0.0, 0.0, 0.0);
    let mut y = vec![0.0; d];
    for &(r, wr) in &radial {
        let jac = wr * r.powi(d as i32 - 1);
        for (u, wu) in &dirs {
            for k in 0..d {
                y[k] = c[k] + r * u[k];
            }
            let psi = spec.rho(&y) * spec.phi(&y);
            let w = jac * wu * psi;
            let v = f.eval(&y);
            let g = f.gradient(&y);
            l1 += w * v.abs();
            l2 += w * v * v;
            en += w * 0.5 * g.iter().map(|a| a * a).sum::<f64>();
        }
    }
    Ok((l1, l2, en))
}

/// Fits the smallest `c_k` in `‖f‖₂^{2+4/D} <= c_k (ℰ + ‖f‖₂²) ‖f‖₁^{4/D}`
/// over `fns` on a ball, `D = d + δ`.
pub fn nash_probe(domain: &DomainSpec, spec: &WeightSpec, fns: &[FnSpec], delta: f64) -> Result<CheckReport> {
    let (c, big_r) = domain
        .ball_params()
        .ok_or_else(|| Error::Unsupported("Nash probe needs a ball domain".into()))?;
    let c = c.to_vec();
    let d = spec.dimension;
    // ρ must be bounded above and below on the ball.
    let (lo, hi) = probe_bounds(spec, &c, big_r);
    let dc = norm(&c);
    if let Some(s) = spec.rho.singular_radii().into_iter().find(|s| (dc - s).abs() <= big_r) {
        return Err(Error::InvalidWeight(format!(
            "rho vanishes or blows up on the sphere of radius {s}, which meets the ball"
        )));
    }
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(Error::InvalidWeight(format!(
            "rho must be bounded above and below on the ball, observed range [{lo}, {hi}]"
        )));
    }
    let big_d = d as f64 + delta;
    let p = 4.0 / big_d;
    let mut samples = Vec::new();
    for f in fns {
        f.validate(d)?;
        let (l1, l2sq, en) = nash_integrals(spec, &c, big_r, f)?;
        let l2 = l2sq.sqrt();
        let ratio = if l2 == 0.0 {
            0.0
        } else {
            l2.powf(2.0 + p) / ((en + l2sq) * l1.powf(p))
        };
        samples.push(NashSample { l1, l2, energy: en, ratio });
    }
    let ck = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let fails = samples
        .iter()
        .filter(|s| s.l2.powf(2.0 + p) > ck * (s.energy + s.l2 * s.l2) * s.l1.powf(p) * (1.0 + 1e-12))
        .count();
    let statistic = if ck.is_finite() { fails as f64 } else { f64::INFINITY };
    Ok(CheckReport::new("nash", statistic, 0.0, Comparison::AtMost)
        .with_constant("c_k", ck)
        .with_parameters(json!({
            "exponent": p,
            "delta": delta,
            "samples": samples,
            "rho_range": [lo, hi],
        })))
}

fn probe_bounds(spec: &WeightSpec, c: &[f64], r: f64) -> (f64, f64) {
    let mut rng = StreamKey::new(0x4E41_5348).stream(0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..4096 {
        let y = uniform_in_ball(&mut rng, c, r);
        let v = spec.rho(&y);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// `E‖X_t‖² = ‖x0‖² + (d + α)t` for `ρ = ‖x‖^α`, `φ ≡ 1`.
pub fn bessel_moment_check(engine: &Engine, x0: &[f64], ts: &[f64], n: usize, tol: f64) -> Result<CheckReport> {
    let spec = engine.spec();
    let alpha = match spec.rho {
        RhoSpec::RadialPower { alpha } => alpha,
        RhoSpec::Constant { .. } => 0.0,
        _ => return Err(Error::Unsupported("moment check needs rho = |x|^alpha".into())),
    };
    if !matches!(spec.phi, PhiSpec::Uniform { .. }) || !matches!(engine.config().mode, Mode::Free) {
        return Err(Error::Unsupported("moment check needs phi = const in free mode".into()));
    }
    let d = spec.dimension as f64;
    if !(alpha > 1.0 - d && alpha < 2.0) {
        return Err(Error::InvalidConfig(format!("moment check needs alpha in ({}, 2), got {alpha}", 1.0 - d)));
    }
    if ts.is_empty() {
        return Err(Error::InvalidConfig("moment check needs at least one time".into()));
    }
    for &t in ts {
        check_time(t)?;
    }
    let t_max = ts.iter().copied().fold(0.0, f64::max);
    let e = engine.with_horizon(t_max)?;
    e.check_start(x0)?;
    let dt = e.dt();
    let marks: Vec<usize> = ts.iter().map(|t| ((t / dt).round() as usize).max(1)).collect();
    let rows = e.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let mut out = vec![f64::NAN; marks.len()];
        let mut obs = |v: &StepView<'_>| {
            for (o, &m) in out.iter_mut().zip(&marks) {
                if v.step + 1 == m {
                    *o = v.post.iter().map(|a| a * a).sum();
                }
            }
        };
        let s = e.run_with(x0, &mut rng, &mut obs);
        (s.status.is_alive(), out)
    });
    let lost = rows.iter().filter(|r| !r.0).count();
    let r0 = x0.iter().map(|a| a * a).sum::<f64>();
    let mut parts = Vec::new();
    let mut table = Vec::new();
    for (j, &t) in ts.iter().enumerate() {
        let est = rows.iter().map(|r| r.1[j]).filter(|v| v.is_finite()).collect::<MeanAccumulator>().estimate();
        let target = r0 + (d + alpha) * t;
        let rel = (est.mean / target - 1.0).abs();
        table.push(est.mean);
        parts.push(
            CheckReport::new(format!("bessel.t{t}"), rel, tol, Comparison::AtMost)
                .with_parameters(json!({"t": t, "mean": est.mean, "ci95": est.ci95, "target": target})),
        );
    }
    parts.push(CheckReport::new("bessel.lost_paths", lost as f64, 0.0, Comparison::AtMost));
    Ok(CheckReport::composite("bessel", parts)
        .with_parameters(json!({"alpha": alpha, "d": spec.dimension, "x0": x0, "paths": n}))
        .with_grid(ts.iter().map(|t| vec![*t]).collect(), table))
}

#[cfg(test)]
mod tests;
