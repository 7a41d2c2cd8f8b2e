//! Config-driven experiment runner.
//!
//! A config names a weight, a mode, step settings and a list of experiments.
//! Running it produces one [`CheckReport`] per requested check, a summary
//! JSON that depends only on the config (and seed), and CSV artifacts.

mod presets;

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::functions::FnSpec;
use crate::localtime::{batch_local_times, revuz_discounted, Level, SignRule};
use crate::potentials::{
    fit_potential_bound, mc_resolvent, riesz, s00_check, Lattice, MeasureSpec, ResolventSource,
};
use crate::quadrature::{gl64, piecewise};
use crate::report::{CheckReport, Comparison};
use crate::sde::{Engine, Mode, Scheme, SimConfig, Status, StepView, DEFAULT_DRIFT_CAP};
use crate::semigroup::{
    bessel_moment_check, envelope_check, feller_check, kernel_bound_check, nash_probe, symmetry_check,
    EnvelopeOptions, FarField, FellerOptions,
};
use crate::stats::{chi_square_gof, ks_one_sample, normal_cdf, MeanAccumulator};
use crate::weights::domain::norm;
use crate::weights::volume::{a2_estimate, BallFamily};
use crate::weights::{Behavior, DomainSpec, Interface, RhoSpec, WeightSpec, DEFAULT_SKEW_THRESHOLD};

pub use presets::{preset, presets, Preset};

/// Step settings shared by the experiments of a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_cap")]
    pub drift_cap: f64,
    #[serde(default)]
    pub skew_band: Option<f64>,
    #[serde(default = "default_threshold")]
    pub skew_threshold: f64,
}

fn default_cap() -> f64 {
    DEFAULT_DRIFT_CAP
}

fn default_threshold() -> f64 {
    DEFAULT_SKEW_THRESHOLD
}

impl SimSettings {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            drift_cap: DEFAULT_DRIFT_CAP,
            skew_band: None,
            skew_threshold: DEFAULT_SKEW_THRESHOLD,
        }
    }
}

/// One self-describing experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Mandatory: nothing is ever seeded from the clock.
    pub seed: u64,
    pub weight: WeightSpec,
    #[serde(default)]
    pub mode: Mode,
    pub sim: SimSettings,
    /// Extra interfaces that keep a ledger (or add skewness).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interfaces: Vec<Interface>,
    pub experiments: Vec<ExperimentItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// An experiment with optional overrides of the config-level setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl ExperimentItem {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            label: None,
            weight: None,
            mode: None,
            dt: None,
            horizon: None,
            experiment,
        }
    }

    pub fn label(mut self, l: &str) -> Self {
        self.label = Some(l.into());
        self
    }

    pub fn weight(mut self, w: WeightSpec) -> Self {
        self.weight = Some(w);
        self
    }

    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn horizon(mut self, t: f64) -> Self {
        self.horizon = Some(t);
        self
    }
}

/// Closed range check `lo <= value <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewCheck {
    /// Fraction of endpoints on the positive side of the first skew interface.
    pub fraction: Range,
    /// KS level against the exact skew-BM endpoint law.
    #[serde(default = "default_level")]
    pub ks_level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectedCheck {
    /// Samples of `‖X_t‖` at `burn_in + k·spacing` are binned into
    /// equal-probability radial bins of the normalised `m` on the ball.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Required fraction of paths with a positive boundary ledger.
    #[serde(default = "default_ledger_fraction")]
    pub ledger_fraction: f64,
}

fn default_level() -> f64 {
    0.01
}

fn default_burn_in() -> f64 {
    1.0
}

fn default_spacing() -> f64 {
    2.0
}

fn default_bins() -> usize {
    10
}

fn default_ledger_fraction() -> f64 {
    0.99
}

fn default_var_tol() -> f64 {
    0.05
}

fn default_sym_tol() -> f64 {
    0.03
}

fn default_bessel_tol() -> f64 {
    0.02
}

fn default_revuz_tol() -> f64 {
    0.03
}

fn default_riesz_tol() -> f64 {
    1e-3
}

fn default_s00_tol() -> f64 {
    0.05
}

fn default_holder() -> f64 {
    1.0
}

fn default_grid_points() -> usize {
    7
}

fn default_eps() -> f64 {
    1.0
}

fn default_stability() -> f64 {
    0.2
}

fn default_a2_count() -> usize {
    8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallFamilyKind {
    CenteredDyadic,
    NearTangent,
}

/// Candidate bound for the smoothness check: `c · V_η g`, with `c` fitted on
/// `fit_points` when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateBound {
    Zero,
    Riesz {
        g: FnSpec,
        eta: f64,
        #[serde(default)]
        c: Option<f64>,
        #[serde(default)]
        fit_points: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszPoint {
    pub x: Vec<f64>,
    #[serde(default)]
    pub expect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub paths: usize,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Simulate {
        x0: Vec<f64>,
        paths: usize,
        /// Paths written to `paths.csv`.
        #[serde(default)]
        record_paths: usize,
        /// Expected per-coordinate endpoint variance.
        #[serde(default)]
        expect_variance: Option<f64>,
        #[serde(default = "default_var_tol")]
        variance_tol: f64,
        /// Require that no path is killed or fails.
        #[serde(default)]
        conservative: bool,
        #[serde(default)]
        skew: Option<SkewCheck>,
        #[serde(default)]
        reflected: Option<ReflectedCheck>,
    },
    Feller {
        f: FnSpec,
        grid: Vec<Vec<f64>>,
        ts: Vec<f64>,
        paths: usize,
        #[serde(default)]
        far: Option<FarField>,
    },
    Symmetry {
        f: FnSpec,
        g: FnSpec,
        t: f64,
        paths: usize,
        #[serde(default = "default_sym_tol")]
        tol: f64,
    },
    KernelBound {
        x: Vec<f64>,
        ts: Vec<f64>,
        paths: usize,
        #[serde(default = "default_grid_points")]
        grid_points: usize,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_stability")]
        tol: f64,
    },
    Nash {
        domain: DomainSpec,
        fns: Vec<FnSpec>,
        #[serde(default)]
        delta: f64,
    },
    Bessel {
        x0: Vec<f64>,
        ts: Vec<f64>,
        paths: usize,
        #[serde(default = "default_bessel_tol")]
        tol: f64,
    },
    LocalTime {
        x0: Vec<f64>,
        level: Level,
        paths: usize,
        /// Occupation half-width; defaults to `2√dt`.
        #[serde(default)]
        eps: Option<f64>,
        #[serde(default)]
        rule: SignRule,
        #[serde(default)]
        range: Option<Range>,
        /// Allowed relative gap between the Tanaka and occupation means.
        #[serde(default)]
        gap_tol: Option<f64>,
    },
    Revuz {
        x0: Vec<f64>,
        interface: Interface,
        paths: usize,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default = "default_revuz_tol")]
        tol: f64,
        /// Independent band estimate of `R_1` of the Revuz measure.
        #[serde(default)]
        cross_check: Option<CrossCheck>,
    },
    A2 {
        family: BallFamilyKind,
        #[serde(default = "default_a2_count")]
        count: usize,
        /// Exponent of `‖x‖^alpha`, overriding the weight; may leave `(−d, d)`.
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        max_spread: Option<f64>,
        #[serde(default)]
        min_growth: Option<f64>,
    },
    Riesz {
        g: FnSpec,
        eta: f64,
        points: Vec<RieszPoint>,
        #[serde(default = "default_riesz_tol")]
        tol: f64,
    },
    S00 {
        mu: MeasureSpec,
        points: Vec<Vec<f64>>,
        bound: CandidateBound,
        paths: usize,
        region: Lattice,
        #[serde(default = "default_s00_tol")]
        tol: f64,
        #[serde(default = "default_holder")]
        holder_target: f64,
    },
    Envelope {
        xs: Vec<Vec<f64>>,
        ys: Vec<Vec<f64>>,
        paths: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_stability")]
        tol: f64,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate { .. } => "simulate",
            Experiment::Feller { .. } => "feller",
            Experiment::Symmetry { .. } => "symmetry",
            Experiment::KernelBound { .. } => "kernel_bound",
            Experiment::Nash { .. } => "nash",
            Experiment::Bessel { .. } => "bessel",
            Experiment::LocalTime { .. } => "local_time",
            Experiment::Revuz { .. } => "revuz",
            Experiment::A2 { .. } => "a2",
            Experiment::Riesz { .. } => "riesz",
            Experiment::S00 { .. } => "s00",
            Experiment::Envelope { .. } => "envelope",
        }
    }

    fn needs_engine(&self) -> bool {
        !matches!(self, Experiment::Nash { .. } | Experiment::A2 { .. } | Experiment::Riesz { .. })
    }
}

/// A named CSV artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub contents: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemOutcome {
    pub label: String,
    pub kind: &'static str,
    pub results: Value,
    pub checks: Vec<CheckReport>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub summary: Value,
    /// Pretty-printed summary; identical for identical config and seed.
    pub summary_json: String,
    pub items: Vec<ItemOutcome>,
    pub pass: bool,
}

impl RunOutcome {
    pub fn checks(&self) -> impl Iterator<Item = &CheckReport> {
        self.items.iter().flat_map(|i| i.checks.iter())
    }
}

/// Parses a config file.
pub fn load_config(path: &FsPath) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)?;
    validate_config(&cfg)?;
    Ok(cfg)
}

/// SHA-256 of the canonical JSON of the config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn item_label(item: &ExperimentItem, k: usize) -> String {
    item.label.clone().unwrap_or_else(|| format!("{k:02}-{}", item.experiment.kind()))
}

fn item_weight(cfg: &ExperimentConfig, item: &ExperimentItem) -> WeightSpec {
    item.weight.clone().unwrap_or_else(|| cfg.weight.clone())
}

/// Engine for item `k`; items draw from distinct stream families.
pub fn item_engine(cfg: &ExperimentConfig, item: &ExperimentItem, k: usize) -> Result<Engine> {
    let s = &cfg.sim;
    let sim = SimConfig {
        dt: item.dt.unwrap_or(s.dt),
        horizon: item.horizon.unwrap_or(s.horizon),
        drift_cap: s.drift_cap,
        skew_band: s.skew_band,
        seed: cfg.seed,
        scheme: Scheme::EulerTamed,
        mode: item.mode.clone().unwrap_or_else(|| cfg.mode.clone()),
        record_stride: 1,
        skew_threshold: s.skew_threshold,
    };
    let mut e = Engine::new(item_weight(cfg, item), sim)?;
    for i in &cfg.interfaces {
        e = e.with_interface(i.clone())?;
    }
    Ok(e.with_stage(k as u64 + 1))
}

fn field_err(field: String, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {msg}"))
}

/// Checks everything that can be checked without simulating.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    cfg.weight
        .validate()
        .map_err(|e| field_err("weight".into(), e))?;
    if cfg.experiments.is_empty() {
        return Err(field_err("experiments".into(), "at least one experiment is required"));
    }
    for (k, item) in cfg.experiments.iter().enumerate() {
        let at = format!("experiments[{k}]");
        let w = item_weight(cfg, item);
        let d = w.dimension;
        if let Experiment::A2 { alpha: Some(_), .. } = item.experiment {
            // The exponent may deliberately leave the admissible range.
        } else if let Some(w) = &item.weight {
            w.validate().map_err(|e| field_err(format!("{at}.weight"), e))?;
        }
        let engine = if item.experiment.needs_engine() {
            Some(item_engine(cfg, item, k).map_err(|e| field_err(at.clone(), e))?)
        } else {
            None
        };
        let start = |x: &[f64], f: &str| -> Result<()> {
            check_dim(d, x.len()).map_err(|e| field_err(format!("{at}.{f}"), e))?;
            if let Some(e) = &engine {
                e.check_start(x).map_err(|e| field_err(format!("{at}.{f}"), e))?;
            }
            Ok(())
        };
        let func = |f: &FnSpec, name: &str| f.validate(d).map_err(|e| field_err(format!("{at}.{name}"), e));
        let positive = |v: usize, name: &str| {
            if v == 0 {
                Err(field_err(format!("{at}.{name}"), "must be positive"))
            } else {
                Ok(())
            }
        };
        match &item.experiment {
            Experiment::Simulate { x0, paths, .. } => {
                start(x0, "x0")?;
                positive(*paths, "paths")?;
            }
            Experiment::Feller { f, grid, ts, paths, far } => {
                func(f, "f")?;
                for x in grid {
                    start(x, "grid")?;
                }
                positive(*paths, "paths")?;
                if ts.len() < 2 || ts.iter().any(|t| !(*t > 0.0)) {
                    return Err(field_err(format!("{at}.ts"), "needs at least two positive times"));
                }
                if let Some(far) = far {
                    for x in &far.points {
                        start(x, "far.points")?;
                    }
                }
            }
            Experiment::Symmetry { f, g, paths, .. } => {
                func(f, "f")?;
                func(g, "g")?;
                positive(*paths, "paths")?;
            }
            Experiment::KernelBound { x, ts, paths, .. } | Experiment::Bessel { x0: x, ts, paths, .. } => {
                start(x, "x")?;
                positive(*paths, "paths")?;
                if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0)) {
                    return Err(field_err(format!("{at}.ts"), "needs positive times"));
                }
            }
            Experiment::Nash { fns, domain, .. } => {
                domain.validate(d).map_err(|e| field_err(format!("{at}.domain"), e))?;
                for f in fns {
                    func(f, "fns")?;
                }
            }
            Experiment::LocalTime { x0, paths, .. } | Experiment::Revuz { x0, paths, .. } => {
                start(x0, "x0")?;
                positive(*paths, "paths")?;
            }
            Experiment::A2 { count, .. } => positive(*count, "count")?,
            Experiment::Riesz { g, points, .. } => {
                func(g, "g")?;
                for p in points {
                    check_dim(d, p.x.len()).map_err(|e| field_err(format!("{at}.points"), e))?;
                }
            }
            Experiment::S00 { points, paths, .. } => {
                for x in points {
                    start(x, "points")?;
                }
                positive(*paths, "paths")?;
            }
            Experiment::Envelope { xs, ys, paths, .. } => {
                for x in xs {
                    start(x, "xs")?;
                }
                for y in ys {
                    check_dim(d, y.len()).map_err(|e| field_err(format!("{at}.ys"), e))?;
                }
                positive(*paths, "paths")?;
            }
        }
    }
    Ok(())
}

/// Runs every experiment of `cfg` in-process.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    validate_config(cfg)?;
    let mut items = Vec::with_capacity(cfg.experiments.len());
    for (k, item) in cfg.experiments.iter().enumerate() {
        items.push(run_item(cfg, item, k)?);
    }
    let pass = items.iter().all(|i| i.checks.iter().all(|c| c.pass));
    let summary = json!({
        "name": cfg.name,
        "version": crate::VERSION,
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "pass": pass,
        "experiments": items.iter().map(|i| json!({
            "label": i.label,
            "kind": i.kind,
            "results": i.results,
            "checks": i.checks.iter().map(|c| json!({
                "check": c.check,
                "pass": c.pass,
                "statistic": c.statistic,
                "threshold": c.threshold,
                "comparison": c.comparison,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    let summary_json = serde_json::to_string_pretty(&summary)?;
    Ok(RunOutcome {
        summary,
        summary_json,
        items,
        pass,
    })
}

/// Writes `summary.json`, `checks/*.json` and the CSV artifacts under `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &FsPath) -> Result<()> {
    fs::create_dir_all(dir.join("checks"))?;
    fs::write(dir.join("summary.json"), &outcome.summary_json)?;
    for (k, item) in outcome.items.iter().enumerate() {
        for (j, c) in item.checks.iter().enumerate() {
            let name = format!("{k:02}-{j:02}-{}.json", sanitize(&c.check));
            fs::write(dir.join("checks").join(name), serde_json::to_string_pretty(c)?)?;
        }
        for a in &item.artifacts {
            fs::write(dir.join(&a.file), &a.contents)?;
        }
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Exit code for an error: 2 for anything wrong with the input, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidWeight(_)
        | Error::Dimension { .. }
        | Error::Unsupported(_)
        | Error::NotStartable(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Resolves `preset:NAME`, a file path, or a bare preset name.
pub fn resolve_config(arg: &str) -> Result<ExperimentConfig> {
    if let Some(name) = arg.strip_prefix("preset:") {
        return preset(name).ok_or_else(|| Error::InvalidConfig(format!("unknown preset {name:?}")));
    }
    let p = FsPath::new(arg);
    if p.exists() {
        return load_config(p);
    }
    preset(arg).ok_or_else(|| Error::InvalidConfig(format!("{arg:?} is neither a config file nor a preset")))
}

fn range_check(name: &str, value: f64, r: Range) -> CheckReport {
    let outside = if value < r.lo {
        r.lo - value
    } else if value > r.hi {
        value - r.hi
    } else {
        0.0
    };
    CheckReport::new(name, outside, 0.0, Comparison::AtMost).with_parameters(json!({"value": value, "lo": r.lo, "hi": r.hi}))
}

fn run_item(cfg: &ExperimentConfig, item: &ExperimentItem, k: usize) -> Result<ItemOutcome> {
    let label = item_label(item, k);
    let engine = if item.experiment.needs_engine() {
        Some(item_engine(cfg, item, k)?)
    } else {
        None
    };
    let engine_info = engine.as_ref().map(|e| {
        json!({
            "dt": e.dt(),
            "steps": e.steps(),
            "horizon": e.horizon(),
            "interfaces": e.interfaces().iter().map(|i| json!({"label": i.label(), "beta": i.beta()})).collect::<Vec<_>>(),
            "dropped_skewness": e.dropped_skewness(),
            "state_space": e.state_space().description,
        })
    });
    let mut artifacts = Vec::new();
    let (results, checks) = match &item.experiment {
        Experiment::Simulate {
            x0,
            paths,
            record_paths,
            expect_variance,
            variance_tol,
            conservative,
            skew,
            reflected,
        } => {
            let e = engine.as_ref().unwrap();
            let out = run_simulate(e, x0, *paths, *expect_variance, *variance_tol, *conservative, skew.as_ref(), reflected.as_ref())?;
            if *record_paths > 0 {
                artifacts.push(Artifact {
                    file: format!("paths-{}.csv", sanitize(&label)),
                    contents: paths_csv(e, x0, *record_paths)?,
                });
            }
            out
        }
        Experiment::Feller { f, grid, ts, paths, far } => {
            let opts = FellerOptions {
                grid: grid.clone(),
                ts: ts.clone(),
                paths: *paths,
                far: far.clone(),
            };
            let r = feller_check(engine.as_ref().unwrap(), f, &opts)?;
            (json!({"error_table": r.values}), vec![r])
        }
        Experiment::Symmetry { f, g, t, paths, tol } => {
            let r = symmetry_check(engine.as_ref().unwrap(), f, g, *t, *paths, *tol)?;
            (r.parameters.clone(), vec![r])
        }
        Experiment::KernelBound {
            x,
            ts,
            paths,
            grid_points,
            eps,
            tol,
        } => {
            let (r, ests) = kernel_bound_check(engine.as_ref().unwrap(), x, ts, *grid_points, *paths, *eps, *tol)?;
            artifacts.push(Artifact {
                file: format!("kernel-{}.csv", sanitize(&label)),
                contents: kernel_csv(&ests)?,
            });
            (json!({"fitted": r.fitted_constants, "bandwidths": ests.iter().map(|e| e.bandwidth).collect::<Vec<_>>()}), vec![r])
        }
        Experiment::Nash { domain, fns, delta } => {
            let r = nash_probe(domain, &item_weight(cfg, item), fns, *delta)?;
            (json!({"fitted": r.fitted_constants}), vec![r])
        }
        Experiment::Bessel { x0, ts, paths, tol } => {
            let r = bessel_moment_check(engine.as_ref().unwrap(), x0, ts, *paths, *tol)?;
            let table: Vec<Value> = ts.iter().zip(&r.values).map(|(t, m)| json!({"t": t, "mean_sq_norm": m})).collect();
            (json!({"moments": table}), vec![r])
        }
        Experiment::LocalTime {
            x0,
            level,
            paths,
            eps,
            rule,
            range,
            gap_tol,
        } => {
            let e = engine.as_ref().unwrap();
            let eps = eps.unwrap_or(2.0 * e.dt().sqrt());
            let b = batch_local_times(e, x0, *paths, *level, eps, *rule)?;
            let mut checks = Vec::new();
            if let Some(r) = range {
                checks.push(range_check("local_time.tanaka", b.tanaka.mean, *r));
                checks.push(range_check("local_time.occupation", b.occupation.mean, *r));
            }
            if let Some(g) = gap_tol {
                let m = 0.5 * (b.tanaka.mean + b.occupation.mean);
                checks.push(CheckReport::new(
                    "local_time.gap",
                    (b.tanaka.mean - b.occupation.mean).abs() / m,
                    *g,
                    Comparison::AtMost,
                ));
            }
            (serde_json::to_value(&b)?, checks)
        }
        Experiment::Revuz {
            x0,
            interface,
            paths,
            target,
            tol,
            cross_check,
        } => run_revuz(engine.as_ref().unwrap(), x0, interface, *paths, *target, *tol, cross_check.as_ref())?,
        Experiment::A2 {
            family,
            count,
            alpha,
            max_spread,
            min_growth,
        } => {
            let mut w = item_weight(cfg, item);
            if let Some(a) = alpha {
                w = WeightSpec::radial_power_unchecked(w.dimension, *a);
            }
            let balls = match family {
                BallFamilyKind::CenteredDyadic => BallFamily::centered_dyadic(w.dimension, *count),
                BallFamilyKind::NearTangent => BallFamily::near_tangent(w.dimension, *count),
            };
            match a2_estimate(&w, &balls) {
                Ok(est) => {
                    let mut checks = Vec::new();
                    if let Some(s) = max_spread {
                        checks.push(CheckReport::new("a2.spread", est.spread(), *s, Comparison::AtMost));
                    }
                    if let Some(g) = min_growth {
                        checks.push(CheckReport::new("a2.growth", est.growth(), *g, Comparison::AtLeast));
                        checks.push(CheckReport::new(
                            "a2.monotone",
                            f64::from(u8::from(!est.is_monotone_increasing())),
                            0.0,
                            Comparison::AtMost,
                        ));
                    }
                    (serde_json::to_value(&est)?, checks)
                }
                Err(Error::QuadratureNonConvergence { residual, context }) => {
                    // A divergent average means the weight is not locally
                    // integrable on the family: no finite A2 constant.
                    let checks = match (max_spread, min_growth) {
                        (Some(s), _) => vec![CheckReport::new("a2.spread", f64::INFINITY, *s, Comparison::AtMost)
                            .with_note(format!("quadrature did not converge: {context}"))],
                        (None, Some(g)) => vec![CheckReport::new("a2.growth", f64::INFINITY, *g, Comparison::AtLeast)
                            .with_note(format!("averages diverge: {context}"))],
                        _ => vec![],
                    };
                    (json!({"diverged": true, "residual": residual, "context": context}), checks)
                }
                Err(e) => return Err(e),
            }
        }
        Experiment::Riesz { g, eta, points, tol } => {
            let mut checks = Vec::new();
            let mut vals = Vec::new();
            for (j, p) in points.iter().enumerate() {
                let v = riesz(g, *eta, &p.x)?;
                vals.push(json!({"x": p.x, "value": v.value, "error": v.error, "converged": v.converged}));
                if let Some(target) = p.expect {
                    checks.push(
                        CheckReport::new(format!("riesz.point{j}"), (v.value - target).abs(), *tol, Comparison::AtMost)
                            .with_parameters(json!({"x": p.x, "value": v.value, "expect": target})),
                    );
                }
            }
            (json!({"values": vals}), checks)
        }
        Experiment::S00 {
            mu,
            points,
            bound,
            paths,
            region,
            tol,
            holder_target,
        } => {
            let e = engine.as_ref().unwrap();
            let (r, c) = match bound {
                CandidateBound::Zero => (s00_check(mu, e, points, &|_: &[f64]| 0.0, *paths, *tol, region, *holder_target)?, 0.0),
                CandidateBound::Riesz { g, eta, c, fit_points } => {
                    let base = |x: &[f64]| riesz(g, *eta, x).map(|v| v.value).unwrap_or(f64::NAN);
                    let c = match c {
                        Some(c) => *c,
                        None => {
                            let fp = if fit_points.is_empty() { points } else { fit_points };
                            fit_potential_bound(mu, &e.clone().with_stage(e.stage() ^ 0x5F), fp, &base, *paths)?
                        }
                    };
                    let bound = move |x: &[f64]| c * base(x);
                    (s00_check(mu, e, points, &bound, *paths, *tol, region, *holder_target)?, c)
                }
            };
            (json!({"fitted_c": c, "estimates": r.values}), vec![r])
        }
        Experiment::Envelope {
            xs,
            ys,
            paths,
            bandwidth,
            tol,
        } => {
            let opts = EnvelopeOptions {
                xs: xs.clone(),
                ys: ys.clone(),
                paths: *paths,
                bandwidth: *bandwidth,
                tol: *tol,
            };
            let r = envelope_check(engine.as_ref().unwrap(), &opts)?;
            (json!({"fitted": r.fitted_constants}), vec![r])
        }
    };
    let mut results = results;
    if let (Some(info), Value::Object(m)) = (engine_info, &mut results) {
        m.insert("engine".into(), info);
    }
    Ok(ItemOutcome {
        label,
        kind: item.experiment.kind(),
        results,
        checks,
        artifacts,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    e: &Engine,
    x0: &[f64],
    n: usize,
    expect_variance: Option<f64>,
    variance_tol: f64,
    conservative: bool,
    skew: Option<&SkewCheck>,
    reflected: Option<&ReflectedCheck>,
) -> Result<(Value, Vec<CheckReport>)> {
    e.check_start(x0)?;
    let d = x0.len();
    let dt = e.dt();
    let marks: Vec<usize> = match reflected {
        Some(r) => {
            if !(r.spacing > 0.0 && r.burn_in >= 0.0) {
                return Err(Error::InvalidConfig("reflected.spacing must be positive".into()));
            }
            let mut v = Vec::new();
            let mut t = r.burn_in.max(r.spacing);
            while t <= e.horizon() + 1e-9 {
                v.push(((t / dt).round() as usize).clamp(1, e.steps()));
                t += r.spacing;
            }
            v.dedup();
            v
        }
        None => Vec::new(),
    };
    let rows = e.batch(n, |e, i| {
        let mut rng = e.rng(i);
        let mut min_r = norm(x0);
        let mut samples = Vec::new();
        let mut obs = |v: &StepView<'_>| {
            min_r = min_r.min(norm(v.post));
            if marks.binary_search(&(v.step + 1)).is_ok() {
                samples.push(norm(v.post));
            }
        };
        let s = e.run_with(x0, &mut rng, &mut obs);
        (s, samples, min_r)
    });
    let killed = rows.iter().filter(|r| matches!(r.0.status, Status::Killed { .. })).count();
    let errored = rows.iter().filter(|r| matches!(r.0.status, Status::Error { .. })).count();
    let alive: Vec<&Vec<f64>> = rows.iter().filter(|r| r.0.status.is_alive()).map(|r| &r.0.final_state).collect();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for k in 0..d {
        let acc: MeanAccumulator = alive.iter().map(|x| x[k]).collect();
        means.push(acc.mean());
        vars.push(acc.variance());
    }
    let labels: Vec<String> = e.interfaces().iter().map(|i| i.label()).collect();
    let ledger: serde_json::Map<String, Value> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let acc: MeanAccumulator = rows.iter().map(|r| r.0.ledger[j]).collect();
            (l.clone(), json!(acc.mean()))
        })
        .collect();
    let min_radius = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let mut results = json!({
        "paths": n,
        "killed": killed,
        "errored": errored,
        "endpoint_mean": means,
        "endpoint_variance": vars,
        "mean_ledger": ledger,
        "min_radius": min_radius,
    });
    let mut checks = Vec::new();
    if let Some(v) = expect_variance {
        let dev = vars.iter().map(|s| (s / v - 1.0).abs()).fold(0.0, f64::max);
        checks.push(CheckReport::new("simulate.variance", dev, variance_tol, Comparison::AtMost).with_parameters(json!({"expected": v, "observed": vars})));
    }
    if conservative {
        checks.push(CheckReport::new("simulate.conservative", (killed + errored) as f64, 0.0, Comparison::AtMost).with_parameters(json!({"paths": n, "min_radius": min_radius})));
    }
    if let Some(sc) = skew {
        let (k, iface) = e
            .interfaces()
            .iter()
            .enumerate()
            .find(|(_, i)| matches!(i.behavior, Behavior::Skew { .. }) && !i.is_invisible())
            .ok_or_else(|| Error::InvalidConfig("skew check needs a skew interface".into()))?;
        let beta = iface.beta().unwrap();
        if !e.spec().rho.is_constant() || iface.signed_distance(x0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("skew oracle needs constant rho and a start on the interface".into()));
        }
        let s: Vec<f64> = alive.iter().map(|x| iface.signed_distance(x)).collect();
        let frac = s.iter().filter(|v| **v > 0.0).count() as f64 / s.len().max(1) as f64;
        let t = e.horizon();
        let sq = t.sqrt();
        let cdf = |y: f64| {
            if y < 0.0 {
                2.0 * (1.0 - beta) * normal_cdf(y / sq)
            } else {
                (1.0 - beta) + beta * (2.0 * normal_cdf(y / sq) - 1.0)
            }
        };
        let ks = ks_one_sample(&s, cdf);
        checks.push(range_check("skew.fraction", frac, sc.fraction).with_parameters(json!({"value": frac, "lo": sc.fraction.lo, "hi": sc.fraction.hi, "beta": beta, "interface": k})));
        checks.push(CheckReport::new("skew.ks_p_value", ks.p_value, sc.ks_level, Comparison::AtLeast).with_parameters(json!({"ks_statistic": ks.statistic, "samples": s.len()})));
        results["skew"] = json!({"beta": beta, "fraction_positive": frac, "ks": ks.statistic, "p_value": ks.p_value});
    }
    if let Some(rc) = reflected {
        let (c, r) = match &e.config().mode {
            Mode::Reflected { domain } => domain
                .base()
                .ball_params()
                .map(|(c, r)| (c.to_vec(), r))
                .ok_or_else(|| Error::Unsupported("radial histogram needs a ball domain".into()))?,
            _ => return Err(Error::InvalidConfig("reflected check needs reflected mode".into())),
        };
        if norm(&c) != 0.0 || !e.spec().is_radial() {
            return Err(Error::Unsupported("radial histogram needs a centred ball and a radial weight".into()));
        }
        let edges = radial_quantiles(e.spec(), r, rc.bins)?;
        let mut counts = vec![0.0; rc.bins];
        for row in &rows {
            for s in &row.1 {
                let b = edges.partition_point(|q| q <= s).min(rc.bins) .saturating_sub(1);
                counts[b.min(rc.bins - 1)] += 1.0;
            }
        }
        let probs = vec![1.0 / rc.bins as f64; rc.bins];
        let gof = chi_square_gof(&counts, &probs);
        let ri = e.interfaces().iter().position(|i| matches!(i.behavior, Behavior::Reflect)).unwrap();
        let positive = rows.iter().filter(|r| r.0.ledger[ri] > 0.0).count() as f64 / n as f64;
        checks.push(CheckReport::new("reflected.radial_chi2_p_value", gof.p_value, rc.level, Comparison::AtLeast).with_parameters(json!({"chi2": gof.statistic, "counts": counts, "edges": edges})));
        checks.push(CheckReport::new("reflected.ledger_positive_fraction", positive, rc.ledger_fraction, Comparison::AtLeast));
        results["reflected"] = json!({"counts": counts, "edges": edges, "chi2": gof.statistic, "p_value": gof.p_value, "ledger_positive_fraction": positive});
    }
    Ok((results, checks))
}

/// Radii `0 = q_0 < … < q_bins = R` splitting the normalised `m` on `B_R(0)`
/// into equal masses.
fn radial_quantiles(spec: &WeightSpec, big_r: f64, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::InvalidConfig("reflected.bins must be at least 2".into()));
    }
    let d = spec.dimension as i32;
    let dens = |s: f64| spec.radial_psi(s) * s.powi(d - 1);
    let mut breaks = vec![0.0];
    breaks.extend(spec.radial_breaks().into_iter().filter(|b| *b > 0.0 && *b < big_r));
    breaks.push(big_r);
    let mass = |r: f64| {
        let mut b: Vec<f64> = breaks.iter().copied().filter(|x| *x < r).collect();
        b.push(r);
        piecewise(&dens, &b, 1e-12, gl64()).value
    };
    let total = mass(big_r);
    let mut edges = vec![0.0];
    for k in 1..bins {
        let target = total * k as f64 / bins as f64;
        let (mut lo, mut hi) = (0.0, big_r);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    edges.push(big_r);
    Ok(edges)
}

#[allow(clippy::too_many_arguments)]
fn run_revuz(
    e: &Engine,
    x0: &[f64],
    interface: &Interface,
    n: usize,
    target: Option<f64>,
    tol: f64,
    cross: Option<&CrossCheck>,
) -> Result<(Value, Vec<CheckReport>)> {
    let e = match e.interfaces().iter().position(|i| i.geometry == interface.geometry) {
        Some(_) => e.clone(),
        None => e.clone().with_interface(interface.clone())?,
    };
    let k = e.interfaces().iter().position(|i| i.geometry == interface.geometry).unwrap();
    let rev = revuz_discounted(&e, x0, n, k)?;
    let mut checks = Vec::new();
    let mut results = json!({
        "ledger": rev.estimate,
        "truncation_bound": rev.truncation_bound,
        "horizon": rev.horizon,
        "interface": e.interfaces()[k].label(),
    });
    if let Some(t) = target {
        checks.push(
            CheckReport::new("revuz.target", (rev.estimate.mean / t - 1.0).abs(), tol, Comparison::AtMost)
                .with_parameters(json!({"estimate": rev.estimate.mean, "target": t})),
        );
    }
    if let Some(c) = cross {
        let src = ResolventSource::Surface {
            interface: e.interfaces()[k].clone(),
            eps: c.eps,
            use_ledger: false,
        };
        let other = e.clone().with_stage(e.stage() ^ 0xB4D);
        let band = mc_resolvent(&src, x0, &other, c.paths)?;
        let joint = (rev.estimate.ci95.powi(2) + band.error.powi(2)).sqrt() + rev.truncation_bound;
        let z = (rev.estimate.mean - band.value).abs() / joint;
        checks.push(
            CheckReport::new("revuz.resolvent_agreement", z, 1.0, Comparison::AtMost)
                .with_parameters(json!({"ledger": rev.estimate.mean, "band": band.value, "band_ci95": band.error, "joint_ci95": joint})),
        );
        results["band_resolvent"] = serde_json::to_value(&band)?;
    }
    Ok((results, checks))
}

fn paths_csv(e: &Engine, x0: &[f64], k: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = x0.len();
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("status".into());
    w.write_record(&header)?;
    for i in 0..k as u64 {
        let p = e.simulate(x0, i)?;
        let status = match &p.status {
            Status::Alive => "alive",
            Status::Killed { .. } => "killed",
            Status::Error { .. } => "error",
        };
        for (t, x) in p.times.iter().zip(&p.states) {
            let mut rec = vec![i.to_string(), format!("{t}")];
            rec.extend(x.iter().map(|v| format!("{v}")));
            rec.push(status.into());
            w.write_record(&rec)?;
        }
    }
    csv_string(w)
}

fn kernel_csv(ests: &[crate::semigroup::KernelEstimate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = ests.first().map_or(0, |e| e.x.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("y{i}")));
    header.extend(["density".into(), "ci95".into(), "lebesgue".into()]);
    w.write_record(&header)?;
    for e in ests {
        for (j, y) in e.grid.iter().enumerate() {
            let mut rec = vec![format!("{}", e.t)];
            rec.extend(y.iter().map(|v| format!("{v}")));
            rec.push(format!("{}", e.density[j]));
            rec.push(format!("{}", e.ci95[j]));
            rec.push(format!("{}", e.lebesgue[j]));
            w.write_record(&rec)?;
        }
    }
    csv_string(w)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Command-line options of `run`.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Runs a config with overrides, writes the outputs and prints one verdict
/// per check. Returns the process exit code.
pub fn run_command(config: &str, opts: &RunOptions) -> i32 {
    let mut cfg = match resolve_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return exit_code(&e);
        }
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let workers = opts.workers.unwrap_or(1);
    let outcome = match crate::sde::with_workers(workers, || execute(&cfg)) {
        Ok(Ok(o)) => o,
        Ok(Err(e)) | Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}: {e}", if code == 2 { "invalid config" } else { "run failed" });
            return code;
        }
    };
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(sanitize(&cfg.name)));
    if let Err(e) = write_outputs(&outcome, &dir) {
        eprintln!("cannot write outputs to {}: {e}", dir.display());
        return 1;
    }
    for item in &outcome.items {
        for c in &item.checks {
            println!("[{}] {}", item.label, c.verdict());
        }
    }
    if outcome.pass {
        0
    } else {
        for c in outcome.checks().filter(|c| !c.pass) {
            eprintln!("{}", serde_json::to_string_pretty(c).unwrap_or_default());
        }
        1
    }
}

/// `name  description` lines for `skewflow presets`.
pub fn list_presets() -> Vec<String> {
    presets().iter().map(|p| format!("{:<28} {}", p.name, p.description)).collect()
}

/// Convenience for building radial-power weights in presets and tests.
pub fn power_weight(d: usize, alpha: f64) -> WeightSpec {
    WeightSpec {
        dimension: d,
        rho: RhoSpec::RadialPower { alpha },
        phi: crate::weights::PhiSpec::uniform(),
    }
}
