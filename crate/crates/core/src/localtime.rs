//! Local-time estimators: the engine's ledger, the symmetric Tanaka formula
//! and occupation densities, plus the discounted functional
//! `E_x ∫_0^∞ e^{-t} dℓ_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{Engine, Observer, Path, StepView};
use crate::stats::{MeanAccumulator, MeanEstimate};
use crate::weights::domain::norm;
use crate::weights::Geometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ledger,
    Tanaka,
    Occupation,
}

/// Where the sign in the Tanaka sum is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignRule {
    #[default]
    PreStep,
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub value: f64,
    /// Unclipped value (Tanaka can dip below zero by discretisation noise).
    pub raw: f64,
    pub method: Method,
    pub bandwidth: Option<f64>,
    pub ci95: Option<f64>,
}

impl LocalTimeEstimate {
    fn new(raw: f64, method: Method, bandwidth: Option<f64>) -> Self {
        Self {
            value: raw.max(0.0),
            raw,
            method,
            bandwidth,
            ci95: None,
        }
    }
}

/// A level set of a coordinate or of the radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Level {
    Coordinate { coord: usize, a: f64 },
    Radius { a: f64 },
}

impl Level {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Level::Coordinate { coord, a } => x[coord] - a,
            Level::Radius { a } => norm(x) - a,
        }
    }

    fn matches(&self, g: &Geometry) -> bool {
        match (*self, g) {
            (Level::Coordinate { coord, a }, Geometry::Hyperplane { coord: c, level }) => coord == *c && a == *level,
            (Level::Radius { a }, Geometry::Sphere { radius }) => a == *radius,
            _ => false,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Streaming Tanaka sum `|Y_t| − |Y_0| − Σ sgn(Y) ΔY` for `Y = level(X)`.
#[derive(Clone, Debug)]
pub struct TanakaObserver {
    pub level: Level,
    pub rule: SignRule,
    start: Option<f64>,
    last: f64,
    sum: f64,
}

impl TanakaObserver {
    pub fn new(level: Level, rule: SignRule) -> Self {
        Self {
            level,
            rule,
            start: None,
            last: 0.0,
            sum: 0.0,
        }
    }

    pub fn raw(&self) -> f64 {
        match self.start {
            Some(s) => self.last.abs() - s.abs() - self.sum,
            None => 0.0,
        }
    }

    pub fn estimate(&self) -> LocalTimeEstimate {
        LocalTimeEstimate::new(self.raw(), Method::Tanaka, None)
    }

    fn push(&mut self, y0: f64, y1: f64) {
        if self.start.is_none() {
            self.start = Some(y0);
        }
        let s = match self.rule {
            SignRule::PreStep => sign(y0),
            SignRule::Midpoint => sign(0.5 * (y0 + y1)),
        };
        self.sum += s * (y1 - y0);
        self.last = y1;
    }
}

impl Observer for TanakaObserver {
    fn observe(&mut self, v: &StepView<'_>) {
        self.push(self.level.value(v.pre), self.level.value(v.post));
    }
}

/// Streaming occupation density `(1/2ε) |{t : |Y_t| < ε}|`, left-point rule.
#[derive(Clone, Debug)]
pub struct OccupationObserver {
    pub level: Level,
    pub eps: f64,
    time: f64,
    discounted: bool,
    hit_origin: bool,
}

impl OccupationObserver {
    pub fn new(level: Level, eps: f64) -> Self {
        Self {
            level,
            eps,
            time: 0.0,
            discounted: false,
            hit_origin: false,
        }
    }

    /// Weights the occupation with `e^{-t}` (midpoint of each step).
    pub fn discounted(level: Level, eps: f64) -> Self {
        Self {
            discounted: true,
            ..Self::new(level, eps)
        }
    }

    pub fn value(&self) -> f64 {
        self.time / (2.0 * self.eps)
    }

    pub fn estimate(&self) -> LocalTimeEstimate {
        LocalTimeEstimate::new(self.value(), Method::Occupation, Some(self.eps))
    }
}

impl Observer for OccupationObserver {
    fn observe(&mut self, v: &StepView<'_>) {
        if matches!(self.level, Level::Radius { .. }) && norm(v.post) == 0.0 {
            self.hit_origin = true;
        }
        if self.level.value(v.pre).abs() < self.eps {
            let w = if self.discounted { (-0.5 * (v.t0 + v.t1)).exp() } else { 1.0 };
            self.time += w * (v.t1 - v.t0);
        }
    }
}

/// Ledger of one interface, optionally discounted by `e^{-t}`.
#[derive(Clone, Debug)]
pub struct LedgerObserver {
    pub index: usize,
    pub discounted: bool,
    total: f64,
    last_unit: f64,
    horizon: f64,
}

impl LedgerObserver {
    pub fn new(index: usize, discounted: bool, horizon: f64) -> Self {
        Self {
            index,
            discounted,
            total: 0.0,
            last_unit: 0.0,
            horizon,
        }
    }

    pub fn value(&self) -> f64 {
        self.total
    }
}

impl Observer for LedgerObserver {
    fn observe(&mut self, v: &StepView<'_>) {
        let inc = v.increments[self.index];
        if inc == 0.0 {
            return;
        }
        let w = if self.discounted { (-0.5 * (v.t0 + v.t1)).exp() } else { 1.0 };
        self.total += w * inc;
        if v.t1 > self.horizon - 1.0 {
            self.last_unit += inc;
        }
    }
}

fn path_steps(path: &Path) -> impl Iterator<Item = (f64, f64, &[f64], &[f64])> + '_ {
    path.times
        .windows(2)
        .zip(path.states.windows(2))
        .map(|(t, s)| (t[0], t[1], s[0].as_slice(), s[1].as_slice()))
}

fn check_fine(path: &Path) -> Result<()> {
    if path.times.len() < 2 {
        return Err(Error::InvalidConfig("path has no steps".into()));
    }
    Ok(())
}

/// Symmetric Tanaka estimate of `ℓ_t^a(X^coord)` over the whole path. The
/// path must be recorded at every step.
pub fn tanaka_local_time(path: &Path, a: f64, coord: usize, rule: SignRule) -> Result<LocalTimeEstimate> {
    check_fine(path)?;
    let mut obs = TanakaObserver::new(Level::Coordinate { coord, a }, rule);
    for (_, _, x0, x1) in path_steps(path) {
        obs.push(x0[coord] - a, x1[coord] - a);
    }
    Ok(obs.estimate())
}

/// `(1/2ε) |{t : |X^coord_t − a| < ε}|`; requires `ε >= 2√dt`.
pub fn occupation_local_time(path: &Path, a: f64, coord: usize, eps: f64) -> Result<LocalTimeEstimate> {
    check_fine(path)?;
    check_bandwidth(path, eps)?;
    let time: f64 = path_steps(path)
        .filter(|(_, _, x0, _)| (x0[coord] - a).abs() < eps)
        .map(|(t0, t1, _, _)| t1 - t0)
        .sum();
    Ok(LocalTimeEstimate::new(time / (2.0 * eps), Method::Occupation, Some(eps)))
}

/// Occupation estimate for the radial semimartingale `‖X‖` at level `a`.
pub fn sphere_local_time(path: &Path, a: f64, eps: f64) -> Result<LocalTimeEstimate> {
    check_fine(path)?;
    check_bandwidth(path, eps)?;
    if path.states.iter().any(|x| norm(x) == 0.0) {
        return Err(Error::Singularity {
            point: vec![0.0; path.states[0].len()],
            reason: "path hits the origin".into(),
        });
    }
    let time: f64 = path_steps(path)
        .filter(|(_, _, x0, _)| (norm(x0) - a).abs() < eps)
        .map(|(t0, t1, _, _)| t1 - t0)
        .sum();
    Ok(LocalTimeEstimate::new(time / (2.0 * eps), Method::Occupation, Some(eps)))
}

/// Final ledger value of the interface with the given label.
pub fn ledger_local_time(path: &Path, label: &str) -> Option<LocalTimeEstimate> {
    path.local_times
        .get(label)
        .map(|v| LocalTimeEstimate::new(*v.last().unwrap(), Method::Ledger, None))
}

fn check_bandwidth(path: &Path, eps: f64) -> Result<()> {
    let dt = path.times[1] - path.times[0];
    let min = 2.0 * dt.sqrt();
    if eps < min * (1.0 - 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "occupation bandwidth {eps} is below 2 sqrt(dt) = {min}"
        )));
    }
    Ok(())
}

/// Batch means of the three estimators at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLocalTimes {
    pub ledger: Option<MeanEstimate>,
    pub tanaka: MeanEstimate,
    pub occupation: MeanEstimate,
    /// Most negative raw Tanaka value before clipping.
    pub min_raw_tanaka: f64,
    pub bandwidth: f64,
}

/// Runs `n` paths from `x0` and estimates `E ℓ_T` at `level` three ways.
pub fn batch_local_times(engine: &Engine, x0: &[f64], n: usize, level: Level, eps: f64, rule: SignRule) -> Result<BatchLocalTimes> {
    engine.check_start(x0)?;
    let min = 2.0 * engine.dt().sqrt();
    if eps < min * (1.0 - 1e-12) {
        return Err(Error::InvalidConfig(format!("occupation bandwidth {eps} is below 2 sqrt(dt) = {min}")));
    }
    let idx = engine.interfaces().iter().position(|i| level.matches(&i.geometry));
    let rows = engine.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let mut tan = TanakaObserver::new(level, rule);
        let mut occ = OccupationObserver::new(level, eps);
        let mut both = |v: &StepView<'_>| {
            tan.observe(v);
            occ.observe(v);
        };
        let s = e.run_with(x0, &mut rng, &mut both);
        (idx.map(|k| s.ledger[k]), tan.raw(), occ.value())
    });
    let mut led = MeanAccumulator::new();
    let mut tan = MeanAccumulator::new();
    let mut occ = MeanAccumulator::new();
    let mut min_raw = f64::INFINITY;
    for (l, t, o) in rows {
        if let Some(l) = l {
            led.push(l);
        }
        tan.push(t.max(0.0));
        min_raw = min_raw.min(t);
        occ.push(o);
    }
    Ok(BatchLocalTimes {
        ledger: idx.map(|_| led.estimate()),
        tanaka: tan.estimate(),
        occupation: occ.estimate(),
        min_raw_tanaka: min_raw,
        bandwidth: eps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevuzEstimate {
    pub estimate: MeanEstimate,
    /// Heuristic bound on the neglected `∫_T^∞ e^{-t} dℓ`: `e^{-T}` times the
    /// mean ledger growth over the last unit of time, summed geometrically.
    pub truncation_bound: f64,
    pub horizon: f64,
}

/// `E_x ∫_0^T e^{-t} dℓ_t` for the ledger of interface `iface`.
pub fn revuz_discounted(engine: &Engine, x0: &[f64], n: usize, iface: usize) -> Result<RevuzEstimate> {
    engine.check_start(x0)?;
    if iface >= engine.interfaces().len() {
        return Err(Error::InvalidConfig(format!("no interface with index {iface}")));
    }
    let t = engine.horizon();
    let rows = engine.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let mut obs = LedgerObserver::new(iface, true, t);
        e.run_with(x0, &mut rng, &mut obs);
        (obs.total, obs.last_unit)
    });
    let mut acc = MeanAccumulator::new();
    let mut tail = MeanAccumulator::new();
    for (v, l) in rows {
        acc.push(v);
        tail.push(l);
    }
    let e1 = (-1.0f64).exp();
    Ok(RevuzEstimate {
        estimate: acc.estimate(),
        truncation_bound: (-t).exp() * tail.mean() / (1.0 - e1),
        horizon: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::SimConfig;
    use crate::weights::{Interface, PhiSpec, RhoSpec, WeightSpec};

    fn bm_path(dt: f64, t: f64, x0: &[f64], seed: u64) -> Path {
        let e = Engine::new(WeightSpec::lebesgue(x0.len()), SimConfig::new(dt, t, seed)).unwrap();
        e.simulate(x0, 0).unwrap()
    }

    #[test]
    fn far_path_has_no_local_time() {
        let p = bm_path(1e-3, 0.1, &[0.0, 5.0], 1);
        let t = tanaka_local_time(&p, 0.0, 1, SignRule::PreStep).unwrap();
        assert!(t.raw.abs() < 1e-12);
        assert_eq!(occupation_local_time(&p, 0.0, 1, 0.1).unwrap().value, 0.0);
        assert_eq!(sphere_local_time(&p, 1.0, 0.1).unwrap().value, 0.0);
    }

    #[test]
    fn bandwidth_must_exceed_two_steps() {
        let p = bm_path(1e-2, 0.1, &[0.0, 0.0], 1);
        assert!(occupation_local_time(&p, 0.0, 1, 0.1).is_err());
        assert!(occupation_local_time(&p, 0.0, 1, 0.2).is_ok());
    }

    #[test]
    fn tanaka_of_recorded_path_equals_streaming_sum() {
        let e = Engine::new(WeightSpec::lebesgue(2), SimConfig::new(1e-3, 1.0, 3)).unwrap();
        let p = e.simulate(&[0.0, 0.0], 5).unwrap();
        let from_path = tanaka_local_time(&p, 0.0, 1, SignRule::PreStep).unwrap();
        let mut obs = TanakaObserver::new(Level::Coordinate { coord: 1, a: 0.0 }, SignRule::PreStep);
        e.run(&[0.0, 0.0], 5, &mut obs).unwrap();
        assert_eq!(from_path.raw, obs.raw());
    }

    #[test]
    fn ledger_of_half_interface_is_the_tanaka_sum() {
        // With β = ½ nothing is flipped, so the ledger is exactly the
        // pre-step Tanaka sum of the level coordinate.
        let e = Engine::new(WeightSpec::lebesgue(2), SimConfig::new(1e-3, 1.0, 3))
            .unwrap()
            .with_interface(Interface::hyperplane(1, 0.0, 0.5))
            .unwrap();
        let p = e.simulate(&[0.0, 0.0], 2).unwrap();
        let t = tanaka_local_time(&p, 0.0, 1, SignRule::PreStep).unwrap();
        let l = ledger_local_time(&p, "hyperplane[x2=0]").unwrap();
        assert!((t.raw - l.value).abs() < 1e-10, "{t:?} {l:?}");
    }

    #[test]
    fn occupation_is_symmetric_in_beta() {
        let mut means = Vec::new();
        for beta in [0.25, 0.75] {
            let w = WeightSpec::new(2, RhoSpec::Constant { c: 1.0 }, PhiSpec::single_slab(1.0 - beta, beta)).unwrap();
            let e = Engine::new(w, SimConfig::new(1e-3, 1.0, 7)).unwrap().with_stage((beta * 4.0) as u64);
            let b = batch_local_times(&e, &[0.0, 0.0], 4000, Level::Coordinate { coord: 1, a: 0.0 }, 0.08, SignRule::PreStep).unwrap();
            means.push(b);
        }
        // The law of |X − a| does not depend on β under the flip scheme.
        for pick in [|b: &BatchLocalTimes| b.occupation, |b: &BatchLocalTimes| b.ledger.unwrap()] {
            let (a, b) = (pick(&means[0]), pick(&means[1]));
            let se = (a.std_err.powi(2) + b.std_err.powi(2)).sqrt();
            assert!((a.mean - b.mean).abs() < 3.0 * se, "{a:?} {b:?}");
        }
    }

    #[test]
    fn brownian_scaling_of_local_time() {
        // ℓ_{c²t} has the law of c ℓ_t; compare means at t and 4t.
        let e1 = Engine::new(WeightSpec::lebesgue(2), SimConfig::new(1e-3, 0.25, 8))
            .unwrap()
            .with_interface(Interface::hyperplane(1, 0.0, 0.5))
            .unwrap();
        let e4 = e1.with_horizon(1.0).unwrap().with_stage(1);
        let lv = Level::Coordinate { coord: 1, a: 0.0 };
        let a = batch_local_times(&e1, &[0.0, 0.0], 8000, lv, 0.07, SignRule::PreStep).unwrap();
        let b = batch_local_times(&e4, &[0.0, 0.0], 8000, lv, 0.07, SignRule::PreStep).unwrap();
        let (la, lb) = (a.ledger.unwrap(), b.ledger.unwrap());
        let gap = (lb.mean - 2.0 * la.mean).abs();
        assert!(gap < 1.96 * (lb.std_err.powi(2) + 4.0 * la.std_err.powi(2)).sqrt() * 1.5, "{la:?} {lb:?}");
    }

    #[test]
    fn revuz_of_far_interface_is_small() {
        let e = Engine::new(WeightSpec::lebesgue(2), SimConfig::new(1e-2, 1.0, 9))
            .unwrap()
            .with_interface(Interface::hyperplane(1, 10.0, 0.5))
            .unwrap();
        let r = revuz_discounted(&e, &[0.0, 0.0], 200, 0).unwrap();
        assert_eq!(r.estimate.mean, 0.0);
    }
}
