//! Tamed Euler–Maruyama simulation of `dX = dW + ∇ρ/(2ρ)(X) dt` with skew
//! interfaces, normal reflection and killing.
//!
//! One step from `x`:
//! 1. `raw = x + b̃(x) dt + √dt Z` with the tamed drift `b̃ = b min(1, M/‖b‖)`;
//! 2. reflected mode: near the boundary, the maximum of the outward component
//!    over the step is drawn from the Brownian bridge law and `raw` is pushed
//!    inward by its excess `L` over the distance to `∂G` (the one-step
//!    Skorokhod map, exact for flat boundaries); anything still outside is
//!    projected onto the closure of `G`. `L` plus the projection distance
//!    feeds the boundary ledger;
//! 3. skew interfaces: if the step crosses an interface or lands within the
//!    band `|s| <= ε_skew` of it, the signed distance is replaced by `ξ |s|`
//!    with `P(ξ = +1) = β`;
//! 4. killed mode: the path dies once `ρ <= ρ_min`.
//!
//! The ledger of a skew interface accumulates the Tanaka increment of `|s|`,
//! `|s₁| − |s₀| − sgn(s₀)(s₁ − s₀)`, which is nonnegative and vanishes unless
//! the step changes side.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::StreamKey;
use crate::weights::domain::{dist, norm};
use crate::weights::{
    log_drift_into, skew_interfaces, state_space, Behavior, DomainSpec, Geometry, Interface, ModeKind, StateSpace,
    WeightSpec, DEFAULT_SKEW_THRESHOLD,
};

pub const DEFAULT_DRIFT_CAP: f64 = 1e3;
/// Kill floor relative to `ρ(x0)` when none is configured.
pub const DEFAULT_KILL_FLOOR_REL: f64 = 1e-12;

/// Bridge pushes are drawn only within this many `√dt` of the boundary; beyond
/// it their probability is below `e^{-100}`.
pub const BRIDGE_REACH: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerTamed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Free,
    Killed {
        /// Absolute floor on `ρ`; defaults to `1e-12 ρ(x0)`.
        #[serde(default)]
        floor: Option<f64>,
    },
    Reflected {
        domain: DomainSpec,
    },
}

impl Mode {
    pub fn kind(&self) -> ModeKind {
        match self {
            Mode::Free => ModeKind::Free,
            Mode::Killed { .. } => ModeKind::Killed,
            Mode::Reflected { .. } => ModeKind::Reflected,
        }
    }
}

fn default_cap() -> f64 {
    DEFAULT_DRIFT_CAP
}

fn default_stride() -> usize {
    1
}

fn default_threshold() -> f64 {
    DEFAULT_SKEW_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_cap")]
    pub drift_cap: f64,
    /// Defaults to `√dt`.
    #[serde(default)]
    pub skew_band: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub mode: Mode,
    /// Keep every `record_stride`-th state in [`Path`].
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Interfaces with `|2β − 1|` at or below this are dropped.
    #[serde(default = "default_threshold")]
    pub skew_threshold: f64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            drift_cap: DEFAULT_DRIFT_CAP,
            skew_band: None,
            seed,
            scheme: Scheme::EulerTamed,
            mode: Mode::Free,
            record_stride: 1,
            skew_threshold: DEFAULT_SKEW_THRESHOLD,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn band(&self) -> f64 {
        self.skew_band.unwrap_or(self.dt.sqrt())
    }

    /// Number of steps; the step is shrunk so that they tile the horizon.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("sim.dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("sim.horizon must be positive, got {}", self.horizon));
        }
        if self.dt > self.horizon {
            return bad(format!("sim.dt = {} exceeds sim.horizon = {}", self.dt, self.horizon));
        }
        if !(self.drift_cap > 0.0) {
            return bad(format!("sim.drift_cap must be positive, got {}", self.drift_cap));
        }
        if let Some(e) = self.skew_band {
            if !(e >= self.dt.sqrt() * (1.0 - 1e-12)) {
                return bad(format!("sim.skew_band = {e} must be at least sqrt(dt) = {}", self.dt.sqrt()));
            }
        }
        if self.record_stride == 0 {
            return bad("sim.record_stride must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    Alive,
    Killed { time: f64 },
    Error { step: usize, reason: String },
}

impl Status {
    pub fn is_alive(&self) -> bool {
        matches!(self, Status::Alive)
    }
}

/// A recorded trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Ledger per interface label, aligned with `times`.
    pub local_times: BTreeMap<String, Vec<f64>>,
    pub status: Status,
    /// Base seed and path index of the generating stream.
    pub rng_seed: u64,
    pub path_index: u64,
}

impl Path {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

/// Everything the engine knows about one step.
pub struct StepView<'a> {
    pub step: usize,
    pub t0: f64,
    pub t1: f64,
    pub pre: &'a [f64],
    pub post: &'a [f64],
    /// Ledger increments, aligned with [`Engine::interfaces`].
    pub increments: &'a [f64],
}

pub trait Observer {
    fn observe(&mut self, v: &StepView<'_>);
}

impl<F: FnMut(&StepView<'_>)> Observer for F {
    fn observe(&mut self, v: &StepView<'_>) {
        self(v)
    }
}

/// Observer that records nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &StepView<'_>) {}
}

/// End state of a path run without storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub final_state: Vec<f64>,
    pub status: Status,
    /// Ledger totals, aligned with [`Engine::interfaces`].
    pub ledger: Vec<f64>,
    pub steps: usize,
}

/// Result of a single step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub new_state: Vec<f64>,
    pub local_time_increments: Vec<f64>,
    pub killed: bool,
}

/// `b̃(x) dt` with `b̃ = b min(1, M/‖b‖)`; zero at singular points.
pub fn drift_step(x: &[f64], spec: &WeightSpec, cfg: &SimConfig) -> Vec<f64> {
    let mut b = vec![0.0; x.len()];
    log_drift_into(spec, x, &mut b);
    tame(&mut b, cfg.drift_cap);
    b.iter().map(|v| v * cfg.dt).collect()
}

fn tame(b: &mut [f64], cap: f64) {
    let n = norm(b);
    if n > cap {
        let k = cap / n;
        b.iter_mut().for_each(|v| *v *= k);
    }
}

/// Does the step `s_pre → s_post` touch the interface?
fn touches(s_pre: f64, s_post: f64, band: f64) -> bool {
    s_pre * s_post <= 0.0 || s_post.abs() <= band
}

/// Tanaka increment of `|s|` for the step `s0 → s1`.
pub fn tanaka_increment(s0: f64, s1: f64) -> f64 {
    let sg = if s0 > 0.0 {
        1.0
    } else if s0 < 0.0 {
        -1.0
    } else {
        0.0
    };
    (s1.abs() - s0.abs() - sg * (s1 - s0)).max(0.0)
}

fn flip(iface: &Interface, x: &mut [f64], s: f64, rng: &mut ChaCha8Rng) {
    if let Behavior::Skew { beta } = iface.behavior {
        if beta == 0.5 {
            return;
        }
        let u: f64 = rng.random();
        let target = if u < beta { s.abs() } else { -s.abs() };
        if target != s {
            iface.set_signed_distance(x, target);
        }
    }
}

/// Sign flip about a hyperplane interface when the step crosses it or lands
/// in the band.
pub fn skew_cross_hyperplane(pre: &[f64], post: &[f64], iface: &Interface, band: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = post.to_vec();
    let (s0, s1) = (iface.signed_distance(pre), iface.signed_distance(post));
    if touches(s0, s1, band) {
        flip(iface, &mut x, s1, rng);
    }
    x
}

/// Radial sign flip about a sphere interface, keeping the direction.
pub fn skew_cross_sphere(pre: &[f64], post: &[f64], iface: &Interface, band: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if norm(pre) == 0.0 {
        return Err(Error::NotStartable(pre.to_vec()));
    }
    Ok(skew_cross_hyperplane(pre, post, iface, band, rng))
}

/// Projection onto the closure of `G` and the distance moved.
pub fn reflect(post: &[f64], domain: &DomainSpec) -> (Vec<f64>, f64) {
    if domain.signed_distance(post) <= 0.0 {
        return (post.to_vec(), 0.0);
    }
    let p = domain.project(post);
    let d = dist(&p, post);
    (p, d)
}

/// Alive unless `ρ(x) <= floor`.
pub fn kill_check(x: &[f64], spec: &WeightSpec, floor: f64) -> bool {
    spec.rho(x) > floor
}

/// A validated simulation setup shared by all paths of a batch.
#[derive(Clone, Debug)]
pub struct Engine {
    spec: WeightSpec,
    cfg: SimConfig,
    interfaces: Vec<Interface>,
    state: StateSpace,
    dropped_skewness: f64,
    reflect_index: Option<usize>,
    stage: u64,
    dt: f64,
    steps: usize,
}

impl Engine {
    pub fn new(spec: WeightSpec, cfg: SimConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let set = skew_interfaces(&spec.phi, spec.dimension, cfg.skew_threshold);
        let mut interfaces = set.kept;
        let reflecting = match &cfg.mode {
            Mode::Reflected { domain } => {
                if !domain.is_bounded() {
                    return Err(Error::InvalidConfig(
                        "mode.domain must be a ball or a convex polytope".into(),
                    ));
                }
                interfaces.push(Interface::reflecting(domain.base().clone()));
                Some(domain.base().clone())
            }
            _ => None,
        };
        let state = state_space(&spec, cfg.mode.kind(), reflecting.as_ref())?;
        let n_skew = interfaces.len() - usize::from(reflecting.is_some());
        let steps = cfg.steps();
        let dt = cfg.horizon / steps as f64;
        check_separation(&interfaces, dt)?;
        Ok(Self {
            spec,
            cfg,
            interfaces,
            state,
            dropped_skewness: set.dropped_skewness,
            reflect_index: reflecting.as_ref().map(|_| n_skew),
            stage: 0,
            dt,
            steps,
        })
    }

    /// Adds an interface that only keeps a ledger (`β = ½`) or a further skew
    /// interface.
    pub fn with_interface(mut self, iface: Interface) -> Result<Self> {
        if matches!(iface.behavior, Behavior::Reflect) {
            return Err(Error::InvalidConfig("reflecting boundaries come from the mode".into()));
        }
        let at = self.reflect_index.unwrap_or(self.interfaces.len());
        self.interfaces.insert(at, iface);
        if let Some(r) = self.reflect_index.as_mut() {
            *r += 1;
        }
        check_separation(&self.interfaces, self.dt)?;
        Ok(self)
    }

    /// Selects an independent family of streams for the same seed.
    pub fn with_stage(mut self, stage: u64) -> Self {
        self.stage = stage;
        self
    }

    /// Same setup with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut cfg = self.cfg.clone();
        cfg.horizon = horizon;
        cfg.validate()?;
        let steps = cfg.steps();
        let dt = horizon / steps as f64;
        check_separation(&self.interfaces, dt)?;
        Ok(Self {
            cfg,
            steps,
            dt,
            ..self.clone()
        })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.state
    }

    pub fn dropped_skewness(&self) -> f64 {
        self.dropped_skewness
    }

    /// Effective step size (`horizon / steps`).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.cfg.horizon
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn rng(&self, path_index: u64) -> ChaCha8Rng {
        StreamKey::new(self.cfg.seed).split(self.stage).stream(path_index)
    }

    pub fn kill_floor(&self, x0: &[f64]) -> Option<f64> {
        match &self.cfg.mode {
            Mode::Killed { floor } => Some(floor.unwrap_or(DEFAULT_KILL_FLOOR_REL * self.spec.rho(x0))),
            _ => None,
        }
    }

    pub fn check_start(&self, x0: &[f64]) -> Result<()> {
        check_dim(self.spec.dimension, x0.len())?;
        if !self.state.contains(x0) || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotStartable(x0.to_vec()));
        }
        Ok(())
    }

    /// Runs one path, calling `obs` after every step.
    pub fn run<O: Observer>(&self, x0: &[f64], path_index: u64, obs: &mut O) -> Result<PathSummary> {
        self.check_start(x0)?;
        let mut rng = self.rng(path_index);
        Ok(self.run_with(x0, &mut rng, obs))
    }

    /// Runs one path from an explicit generator (used for restarts).
    pub fn run_with<O: Observer>(&self, x0: &[f64], rng: &mut ChaCha8Rng, obs: &mut O) -> PathSummary {
        let d = x0.len();
        let dt = self.dt;
        let sq = dt.sqrt();
        let band = self.cfg.band();
        let cap = self.cfg.drift_cap;
        let floor = self.kill_floor(x0);
        let reflect_domain = match &self.cfg.mode {
            Mode::Reflected { domain } => Some(domain.base()),
            _ => None,
        };
        let n_if = self.interfaces.len();
        let ri = self.reflect_index.unwrap_or(usize::MAX);
        let mut x = x0.to_vec();
        let mut raw = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut inc = vec![0.0; n_if];
        let mut ledger = vec![0.0; n_if];
        let mut s_pre = vec![0.0; n_if];
        let mut status = Status::Alive;
        let mut done = 0;
        for n in 0..self.steps {
            log_drift_into(&self.spec, &x, &mut b);
            tame(&mut b, cap);
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                raw[i] = x[i] + b[i] * dt + sq * z;
            }
            inc.iter_mut().for_each(|v| *v = 0.0);
            for (k, iface) in self.interfaces.iter().enumerate() {
                s_pre[k] = iface.signed_distance(&x);
            }
            if let Some(g) = reflect_domain {
                let u = -g.signed_distance(&x);
                if u < BRIDGE_REACH * sq {
                    // Skorokhod push from the bridge maximum of the outward
                    // component; exact for a flat boundary.
                    let nrm = g.outward_normal(&x);
                    let a: f64 = (0..d).map(|i| (raw[i] - x[i]) * nrm[i]).sum();
                    let v: f64 = rng.random();
                    let m = 0.5 * (a + (a * a - 2.0 * dt * (1.0 - v).ln()).sqrt());
                    let push = m - u;
                    if push > 0.0 {
                        for i in 0..d {
                            raw[i] -= push * nrm[i];
                        }
                        inc[ri] = push;
                    }
                }
                if g.signed_distance(&raw) > 0.0 {
                    let p = g.project(&raw);
                    inc[ri] += dist(&p, &raw);
                    raw.copy_from_slice(&p);
                }
            }
            // Skew: the touched interface closest to the new state handles
            // the step.
            let mut chosen: Option<(usize, f64)> = None;
            for (k, iface) in self.interfaces.iter().enumerate() {
                if matches!(iface.behavior, Behavior::Reflect) {
                    continue;
                }
                let s1 = iface.signed_distance(&raw);
                inc[k] = tanaka_increment(s_pre[k], s1);
                if touches(s_pre[k], s1, band) && chosen.is_none_or(|(_, s)| s1.abs() < s.abs()) {
                    chosen = Some((k, s1));
                }
            }
            if let Some((k, s1)) = chosen {
                flip(&self.interfaces[k], &mut raw, s1, rng);
            }
            for (l, v) in ledger.iter_mut().zip(&inc) {
                *l += v;
            }
            let t0 = n as f64 * dt;
            let t1 = (n + 1) as f64 * dt;
            obs.observe(&StepView {
                step: n,
                t0,
                t1,
                pre: &x,
                post: &raw,
                increments: &inc,
            });
            std::mem::swap(&mut x, &mut raw);
            done = n + 1;
            if x.iter().any(|v| !v.is_finite()) {
                status = Status::Error {
                    step: n,
                    reason: "non-finite state".into(),
                };
                break;
            }
            if let Some(f) = floor {
                if !kill_check(&x, &self.spec, f) {
                    status = Status::Killed { time: t1 };
                    break;
                }
            }
        }
        PathSummary {
            final_state: x,
            status,
            ledger,
            steps: done,
        }
    }

    /// Runs and records one path.
    pub fn simulate(&self, x0: &[f64], path_index: u64) -> Result<Path> {
        let stride = self.cfg.record_stride;
        let labels: Vec<String> = self.interfaces.iter().map(|i| i.label()).collect();
        let mut times = vec![0.0];
        let mut states = vec![x0.to_vec()];
        let mut lts: Vec<Vec<f64>> = vec![vec![0.0]; labels.len()];
        let mut acc = vec![0.0; labels.len()];
        let steps = self.steps;
        let mut rec = |v: &StepView<'_>| {
            for (a, i) in acc.iter_mut().zip(v.increments) {
                *a += i;
            }
            if (v.step + 1).is_multiple_of(stride) || v.step + 1 == steps {
                times.push(v.t1);
                states.push(v.post.to_vec());
                for (l, a) in lts.iter_mut().zip(&acc) {
                    l.push(*a);
                }
            }
        };
        let summary = self.run(x0, path_index, &mut rec)?;
        // A path stopped early keeps its last state even off the stride.
        if *times.last().unwrap() < summary.steps as f64 * self.dt - 1e-12 {
            times.push(summary.steps as f64 * self.dt);
            states.push(summary.final_state.clone());
            for (l, a) in lts.iter_mut().zip(&summary.ledger) {
                l.push(*a);
            }
        }
        Ok(Path {
            times,
            states,
            local_times: labels.into_iter().zip(lts).collect(),
            status: summary.status,
            rng_seed: self.cfg.seed,
            path_index,
        })
    }

    /// Applies `f` to path indices `0..n` in parallel; results are returned in
    /// index order, so they do not depend on the worker count.
    pub fn batch<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Engine, u64) -> T + Sync,
    {
        (0..n as u64).into_par_iter().map(|i| f(self, i)).collect()
    }

    /// Path summaries for `n` paths from `x0`.
    pub fn batch_summaries(&self, x0: &[f64], n: usize) -> Result<Vec<PathSummary>> {
        self.check_start(x0)?;
        Ok(self.batch(n, |e, i| {
            let mut rng = e.rng(i);
            e.run_with(x0, &mut rng, &mut NoObserver)
        }))
    }

    /// Single step with an explicit generator; exposed for tests.
    pub fn step(&self, x: &[f64], rng: &mut ChaCha8Rng) -> StepOutcome {
        let mut cfg = self.clone();
        cfg.steps = 1;
        let mut inc = vec![0.0; self.interfaces.len()];
        let mut cap = |v: &StepView<'_>| inc.copy_from_slice(v.increments);
        let s = cfg.run_with(x, rng, &mut cap);
        StepOutcome {
            new_state: s.final_state,
            local_time_increments: inc,
            killed: matches!(s.status, Status::Killed { .. }),
        }
    }
}

/// Runs `f` on a pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_separation(interfaces: &[Interface], dt: f64) -> Result<()> {
    let need = 6.0 * dt.sqrt();
    let mut planes: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut radii = Vec::new();
    for i in interfaces {
        match &i.geometry {
            Geometry::Hyperplane { coord, level } => planes.entry(*coord).or_default().push(*level),
            Geometry::Sphere { radius } => radii.push(*radius),
            Geometry::Boundary { domain } => {
                if let Some((c, r)) = domain.ball_params() {
                    if norm(c) == 0.0 {
                        radii.push(r);
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<f64>> = planes.into_values().collect();
    groups.push(radii);
    for mut g in groups {
        g.sort_by(f64::total_cmp);
        for w in g.windows(2) {
            if w[1] - w[0] <= need {
                return Err(Error::InvalidConfig(format!(
                    "interfaces at {} and {} are closer than 6 sqrt(dt) = {need}; reduce dt or raise the truncation threshold",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
