//! Weights `ψ = ρφ`, their logarithmic drift `∇ρ/(2ρ)`, skew interfaces
//! induced by jumps of `φ`, state spaces and volume / A2 diagnostics.
//!
//! Specs serialise as `{ "dimension": d, "rho": {"kind": ..}, "phi": {"kind": ..} }`.

pub mod domain;
pub mod interface;
pub mod volume;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use domain::{DomainSpec, HalfSpace};
pub use interface::{skew_interfaces, Behavior, Geometry, Interface, InterfaceSet, DEFAULT_SKEW_THRESHOLD};
pub use volume::{a2_estimate, ball_mass, A2Estimate, Ball, BallFamily, MassEstimate, MassMethod};

use domain::norm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoSpec {
    Constant {
        c: f64,
    },
    /// `‖x‖^α`.
    RadialPower {
        alpha: f64,
    },
    /// `‖x‖^{α1} |log ‖x‖|^{α2}` on the unit ball, `‖x‖^{β1} |log ‖x‖|^{β2}`
    /// outside.
    LogModified {
        alpha1: f64,
        alpha2: f64,
        beta1: f64,
        beta2: f64,
    },
    /// `ξ²` with `ξ = xi0 + xi2 ‖x‖²`.
    SquaredRadial {
        xi0: f64,
        xi2: f64,
    },
}

/// Piecewise-constant function of one real variable: `values[i]` on
/// `(breaks[i-1], breaks[i])`, with the upper value taken at a break.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn eval(&self, s: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= s);
        self.values[i]
    }

    pub fn bounds(&self) -> (f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiSpec {
    Uniform {
        c: f64,
    },
    /// Radial profile: inner radii `l` in `(0, m0)` carry `gamma` (one more
    /// value than radii, innermost first, the last sits just inside `m0`);
    /// outer radii `r` in `(m0, ∞)` carry `gamma_bar` (first value just
    /// outside `m0`).
    Annuli {
        m0: f64,
        l: Vec<f64>,
        r: Vec<f64>,
        gamma: Vec<f64>,
        gamma_bar: Vec<f64>,
    },
    /// `β` outside `G`, `1 − β` inside.
    LipschitzDomain {
        domain: DomainSpec,
        beta: f64,
    },
    /// Profile in the last coordinate: negative levels `l` carry `gamma`
    /// (lowest first, the last sits just below 0), positive levels `r` carry
    /// `gamma_bar` (first value just above 0).
    Slabs {
        l: Vec<f64>,
        r: Vec<f64>,
        gamma: Vec<f64>,
        gamma_bar: Vec<f64>,
    },
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn positive_finite(v: &[f64]) -> bool {
    v.iter().all(|g| g.is_finite() && *g > 0.0)
}

impl PhiSpec {
    pub fn uniform() -> Self {
        PhiSpec::Uniform { c: 1.0 }
    }

    /// One slab interface at level 0 with `gamma` below and `gamma_bar` above.
    pub fn single_slab(gamma: f64, gamma_bar: f64) -> Self {
        PhiSpec::Slabs {
            l: vec![],
            r: vec![],
            gamma: vec![gamma],
            gamma_bar: vec![gamma_bar],
        }
    }

    /// One sphere interface at `m0` with `gamma` inside and `gamma_bar` outside.
    pub fn single_sphere(m0: f64, gamma: f64, gamma_bar: f64) -> Self {
        PhiSpec::Annuli {
            m0,
            l: vec![],
            r: vec![],
            gamma: vec![gamma],
            gamma_bar: vec![gamma_bar],
        }
    }

    /// Values along the radius (annuli) or the last coordinate (slabs).
    pub fn profile(&self) -> Option<Profile> {
        match self {
            PhiSpec::Annuli {
                m0,
                l,
                r,
                gamma,
                gamma_bar,
            } => {
                let mut breaks = l.clone();
                breaks.push(*m0);
                breaks.extend(r);
                let mut values = gamma.clone();
                values.extend(gamma_bar);
                Some(Profile { breaks, values })
            }
            PhiSpec::Slabs { l, r, gamma, gamma_bar } => {
                let mut breaks = l.clone();
                breaks.push(0.0);
                breaks.extend(r);
                let mut values = gamma.clone();
                values.extend(gamma_bar);
                Some(Profile { breaks, values })
            }
            _ => None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWeight(m));
        match self {
            PhiSpec::Uniform { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return bad(format!("phi.c must be positive, got {c}"));
                }
            }
            PhiSpec::Annuli {
                m0,
                l,
                r,
                gamma,
                gamma_bar,
            } => {
                if !(m0.is_finite() && *m0 > 0.0) {
                    return bad(format!("phi.m0 must be positive, got {m0}"));
                }
                if !strictly_increasing(l) || l.iter().any(|&x| x <= 0.0 || x >= *m0) {
                    return bad("phi.l must be strictly increasing in (0, m0)".into());
                }
                if !strictly_increasing(r) || r.iter().any(|&x| x <= *m0 || !x.is_finite()) {
                    return bad("phi.r must be strictly increasing in (m0, ∞)".into());
                }
                Self::check_values(gamma, gamma_bar, l.len(), r.len())?;
            }
            PhiSpec::Slabs { l, r, gamma, gamma_bar } => {
                if !strictly_increasing(l) || l.iter().any(|&x| x >= 0.0 || !x.is_finite()) {
                    return bad("phi.l must be strictly increasing negatives".into());
                }
                if !strictly_increasing(r) || r.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                    return bad("phi.r must be strictly increasing positives".into());
                }
                Self::check_values(gamma, gamma_bar, l.len(), r.len())?;
            }
            PhiSpec::LipschitzDomain { domain, beta } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return bad(format!("phi.beta must lie in (0, 1), got {beta}"));
                }
                if !matches!(domain, DomainSpec::Ball { .. } | DomainSpec::ConvexPolytope { .. }) {
                    return bad("phi.domain must be a ball or a convex polytope".into());
                }
                domain.validate(dim)?;
            }
        }
        Ok(())
    }

    fn check_values(gamma: &[f64], gamma_bar: &[f64], nl: usize, nr: usize) -> Result<()> {
        if gamma.len() != nl + 1 || gamma_bar.len() != nr + 1 {
            return Err(Error::InvalidWeight(format!(
                "expected {} gamma and {} gamma_bar values (one more than levels), got {} and {}",
                nl + 1,
                nr + 1,
                gamma.len(),
                gamma_bar.len()
            )));
        }
        if !positive_finite(gamma) || !positive_finite(gamma_bar) {
            return Err(Error::InvalidWeight("phi values must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PhiSpec::Uniform { c } => *c,
            PhiSpec::Annuli { .. } => self.profile().unwrap().eval(norm(x)),
            PhiSpec::Slabs { .. } => self.profile().unwrap().eval(x[x.len() - 1]),
            PhiSpec::LipschitzDomain { domain, beta } => {
                if domain.contains(x) {
                    1.0 - beta
                } else {
                    *beta
                }
            }
        }
    }

    /// `(inf φ, sup φ)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            PhiSpec::Uniform { c } => (*c, *c),
            PhiSpec::LipschitzDomain { beta, .. } => (beta.min(1.0 - beta), beta.max(1.0 - beta)),
            _ => self.profile().unwrap().bounds(),
        }
    }

    /// Smallest `c̃ >= 1` with `c̃⁻¹ <= φ <= c̃`.
    pub fn c_tilde(&self) -> f64 {
        let (lo, hi) = self.bounds();
        hi.max(1.0 / lo).max(1.0)
    }

    /// Total variation of the stored jumps.
    pub fn total_variation(&self) -> f64 {
        match self {
            PhiSpec::Uniform { .. } => 0.0,
            PhiSpec::LipschitzDomain { beta, .. } => (2.0 * beta - 1.0).abs(),
            _ => self.profile().unwrap().total_variation(),
        }
    }

    pub fn is_radial(&self) -> bool {
        match self {
            PhiSpec::Uniform { .. } | PhiSpec::Annuli { .. } => true,
            PhiSpec::LipschitzDomain { domain, .. } => match domain {
                DomainSpec::Ball { center, .. } => center.iter().all(|&c| c == 0.0),
                _ => false,
            },
            PhiSpec::Slabs { .. } => false,
        }
    }
}

impl RhoSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        let df = d as f64;
        let bad = |m: String| Err(Error::InvalidWeight(m));
        match *self {
            RhoSpec::Constant { c } => {
                if !(c.is_finite() && c > 0.0) {
                    return bad(format!("rho.c must be positive, got {c}"));
                }
            }
            RhoSpec::RadialPower { alpha } => {
                if !(alpha > -df && alpha < df) {
                    return bad(format!(
                        "rho.alpha = {alpha} is outside the A2 range (-d, d) = ({}, {d})",
                        -df
                    ));
                }
            }
            RhoSpec::LogModified {
                alpha1,
                alpha2,
                beta1,
                beta2,
            } => {
                if !(alpha1 > 1.0 - df && alpha1 < df) {
                    return bad(format!(
                        "rho.alpha1 = {alpha1} is outside (-d+1, d) = ({}, {d})",
                        1.0 - df
                    ));
                }
                if !(beta1 > -df && beta1 < df) {
                    return bad(format!("rho.beta1 = {beta1} is outside (-d, d) = ({}, {d})", -df));
                }
                if !(alpha2 > 0.0 && beta2 > 0.0) {
                    return bad("rho.alpha2 and rho.beta2 must be positive".into());
                }
            }
            RhoSpec::SquaredRadial { xi0, xi2 } => {
                if !(xi0 > 0.0 && xi2 >= 0.0 && xi0.is_finite() && xi2.is_finite()) {
                    return bad("rho.xi0 must be positive and rho.xi2 nonnegative".into());
                }
            }
        }
        Ok(())
    }

    /// `ρ` as a function of `r = ‖x‖`.
    pub fn radial(&self, r: f64) -> f64 {
        match *self {
            RhoSpec::Constant { c } => c,
            RhoSpec::RadialPower { alpha } => {
                if alpha == 0.0 {
                    1.0
                } else {
                    r.powf(alpha)
                }
            }
            RhoSpec::LogModified {
                alpha1,
                alpha2,
                beta1,
                beta2,
            } => {
                if r == 0.0 {
                    return if alpha1 > 0.0 { 0.0 } else { f64::INFINITY };
                }
                let (a, b) = if r < 1.0 { (alpha1, alpha2) } else { (beta1, beta2) };
                r.powf(a) * r.ln().abs().powf(b)
            }
            RhoSpec::SquaredRadial { xi0, xi2 } => {
                let xi = xi0 + xi2 * r * r;
                xi * xi
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            RhoSpec::Constant { .. } => true,
            RhoSpec::RadialPower { alpha } => *alpha == 0.0,
            _ => false,
        }
    }

    /// Radii at which `ρ` is not smooth.
    pub fn singular_radii(&self) -> Vec<f64> {
        match self {
            RhoSpec::RadialPower { alpha } if *alpha != 0.0 => vec![0.0],
            RhoSpec::LogModified { .. } => vec![0.0, 1.0],
            _ => vec![],
        }
    }

    /// `∇ρ/(2ρ)` written as `g(r)·x`; `None` where `ρ` is not differentiable.
    pub fn drift_factor(&self, r: f64) -> Option<f64> {
        match *self {
            RhoSpec::Constant { .. } => Some(0.0),
            RhoSpec::RadialPower { alpha } => {
                if alpha == 0.0 {
                    Some(0.0)
                } else if r == 0.0 {
                    None
                } else {
                    Some(0.5 * alpha / (r * r))
                }
            }
            RhoSpec::LogModified {
                alpha1,
                alpha2,
                beta1,
                beta2,
            } => {
                if r == 0.0 || r == 1.0 {
                    return None;
                }
                let (a, b) = if r < 1.0 { (alpha1, alpha2) } else { (beta1, beta2) };
                // d/dr log(r^a |log r|^b) = a/r + b/(r log r).
                Some(0.5 * (a + b / r.ln()) / (r * r))
            }
            RhoSpec::SquaredRadial { xi0, xi2 } => Some(2.0 * xi2 / (xi0 + xi2 * r * r)),
        }
    }

    /// Zero set of `ρ` as radii (only the origin can occur).
    pub fn vanishes_at_origin(&self) -> bool {
        match *self {
            RhoSpec::RadialPower { alpha } => alpha > 0.0,
            RhoSpec::LogModified { alpha1, .. } => alpha1 > 0.0,
            _ => false,
        }
    }

    /// Vanishes on the unit sphere (the log factor).
    pub fn vanishes_on_unit_sphere(&self) -> bool {
        matches!(self, RhoSpec::LogModified { .. })
    }
}

/// Full weight `ψ = ρφ` on `ℝ^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub dimension: usize,
    pub rho: RhoSpec,
    pub phi: PhiSpec,
}

/// Where `α` sits relative to the ranges that decide the state space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRegime {
    /// `α ∈ (−d+1, 1)`.
    Low,
    /// `α ∈ [1, 2)`.
    Middle,
    /// `α ∈ [2, d)`.
    High,
    /// `α ∈ (−d, −d+1]`.
    VeryNegative,
    NotRadialPower,
}

impl WeightSpec {
    pub fn new(dimension: usize, rho: RhoSpec, phi: PhiSpec) -> Result<Self> {
        let w = Self { dimension, rho, phi };
        w.validate()?;
        Ok(w)
    }

    /// Lebesgue measure in dimension `d`.
    pub fn lebesgue(dimension: usize) -> Self {
        Self {
            dimension,
            rho: RhoSpec::Constant { c: 1.0 },
            phi: PhiSpec::uniform(),
        }
    }

    /// `‖x‖^α` with `φ ≡ 1`.
    pub fn radial_power(dimension: usize, alpha: f64) -> Result<Self> {
        Self::new(dimension, RhoSpec::RadialPower { alpha }, PhiSpec::uniform())
    }

    /// Like [`WeightSpec::radial_power`] without the A2 range check; only for
    /// diagnostics on weights outside the supported class.
    pub fn radial_power_unchecked(dimension: usize, alpha: f64) -> Self {
        Self {
            dimension,
            rho: RhoSpec::RadialPower { alpha },
            phi: PhiSpec::uniform(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::InvalidWeight(format!(
                "dimension must be at least 2, got {}",
                self.dimension
            )));
        }
        self.rho.validate(self.dimension)?;
        self.phi.validate(self.dimension)
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        self.rho.radial(norm(x))
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.phi.eval(x)
    }

    pub fn alpha_regime(&self) -> AlphaRegime {
        let d = self.dimension as f64;
        match self.rho {
            RhoSpec::RadialPower { alpha } => {
                if alpha <= 1.0 - d {
                    AlphaRegime::VeryNegative
                } else if alpha < 1.0 {
                    AlphaRegime::Low
                } else if alpha < 2.0 {
                    AlphaRegime::Middle
                } else {
                    AlphaRegime::High
                }
            }
            _ => AlphaRegime::NotRadialPower,
        }
    }

    /// True when `ψ` depends on `‖x‖` only.
    pub fn is_radial(&self) -> bool {
        self.phi.is_radial()
    }

    /// Radii at which the radial profile of `ψ` is singular or jumps.
    pub fn radial_breaks(&self) -> Vec<f64> {
        let mut v = self.rho.singular_radii();
        match &self.phi {
            PhiSpec::Annuli { .. } => v.extend(self.phi.profile().unwrap().breaks),
            PhiSpec::LipschitzDomain {
                domain: DomainSpec::Ball { radius, .. },
                ..
            } => v.push(*radius),
            _ => {}
        }
        v
    }

    /// `ψ` as a function of the radius, for radial weights.
    pub fn radial_psi(&self, r: f64) -> f64 {
        let rho = self.rho.radial(r);
        let phi = match &self.phi {
            PhiSpec::Uniform { c } => *c,
            PhiSpec::Annuli { .. } => self.phi.profile().unwrap().eval(r),
            PhiSpec::LipschitzDomain {
                domain: DomainSpec::Ball { radius, .. },
                beta,
            } => {
                if r < *radius {
                    1.0 - beta
                } else {
                    *beta
                }
            }
            _ => f64::NAN,
        };
        rho * phi
    }
}

/// `ψ(x) = ρ(x)φ(x)`; `+∞` at the origin when `ρ` blows up there.
pub fn eval_weight(spec: &WeightSpec, x: &[f64]) -> Result<f64> {
    check_dim(spec.dimension, x.len())?;
    Ok(spec.rho(x) * spec.phi(x))
}

/// `∇ρ/(2ρ)(x)`; `φ` contributes only through its interfaces.
pub fn log_drift(spec: &WeightSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(spec.dimension, x.len())?;
    match spec.rho.drift_factor(norm(x)) {
        Some(g) => Ok(x.iter().map(|v| g * v).collect()),
        None => Err(Error::Singularity {
            point: x.to_vec(),
            reason: "rho is not differentiable here".into(),
        }),
    }
}

/// Writes `∇ρ/(2ρ)(x)` into `out`; returns false at singular points, where
/// `out` is zeroed.
pub(crate) fn log_drift_into(spec: &WeightSpec, x: &[f64], out: &mut [f64]) -> bool {
    match spec.rho.drift_factor(norm(x)) {
        Some(g) => {
            for (o, v) in out.iter_mut().zip(x) {
                *o = g * v;
            }
            true
        }
        None => {
            out.iter_mut().for_each(|o| *o = 0.0);
            false
        }
    }
}

/// How the process lives on space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Free,
    Killed,
    Reflected,
}

/// State space: a domain minus a finite list of excluded sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub domain: DomainSpec,
    pub excludes_origin: bool,
    pub excludes_unit_sphere: bool,
    pub description: String,
    pub alpha_regime: AlphaRegime,
}

impl StateSpace {
    /// Membership of the startable set.
    pub fn contains(&self, x: &[f64]) -> bool {
        let r = norm(x);
        if self.excludes_origin && r == 0.0 {
            return false;
        }
        if self.excludes_unit_sphere && r == 1.0 {
            return false;
        }
        self.domain.contains(x)
    }
}

/// State space for the given mode. In free mode the origin is removed when
/// it is not polar-free for the radial power; in killed mode the zero set of
/// `ρ` is removed; in reflected mode it is the closure of `G` within `{ρ > 0}`.
pub fn state_space(spec: &WeightSpec, mode: ModeKind, reflecting: Option<&DomainSpec>) -> Result<StateSpace> {
    spec.validate()?;
    let d = spec.dimension as f64;
    let has_interfaces = !skew_interfaces(&spec.phi, spec.dimension, 0.0).kept.is_empty();
    let regime = spec.alpha_regime();
    let (base, mut excl0, mut excl1, mut desc) = match mode {
        ModeKind::Free => match spec.rho {
            RhoSpec::RadialPower { alpha } => {
                if alpha <= 1.0 - d {
                    return Err(Error::Unsupported(format!(
                        "alpha = {alpha} is not in (-d+1, d) = ({}, {}), no state space is available",
                        1.0 - d,
                        d
                    )));
                }
                let cut = if has_interfaces { 1.0 } else { 2.0 };
                if alpha < cut {
                    (DomainSpec::FullSpace, false, false, format!("full space, alpha in (-d+1, {cut})"))
                } else {
                    (
                        DomainSpec::PuncturedOrigin,
                        true,
                        false,
                        format!("punctured at the origin, alpha in [{cut}, d)"),
                    )
                }
            }
            RhoSpec::LogModified { alpha1, .. } => {
                let cut = if has_interfaces { 1.0 } else { 2.0 };
                let punct = alpha1 >= cut;
                let domain = if punct { DomainSpec::PuncturedOrigin } else { DomainSpec::FullSpace };
                (domain, punct, true, format!("zero set of rho removed, origin excluded for alpha1 >= {cut}"))
            }
            _ => (DomainSpec::FullSpace, false, false, "full space".into()),
        },
        ModeKind::Killed => {
            let z0 = spec.rho.vanishes_at_origin();
            let z1 = spec.rho.vanishes_on_unit_sphere();
            let domain = if z0 { DomainSpec::PuncturedOrigin } else { DomainSpec::FullSpace };
            (domain, z0, z1, "{rho > 0}".into())
        }
        ModeKind::Reflected => {
            let g = reflecting.ok_or_else(|| Error::InvalidConfig("reflected mode needs a domain".into()))?;
            g.validate(spec.dimension)?;
            let z0 = spec.rho.vanishes_at_origin();
            let z1 = spec.rho.vanishes_on_unit_sphere();
            (g.clone().closure(), z0, z1, "closure of G within {rho > 0}".into())
        }
    };
    if mode != ModeKind::Free {
        // ρ = 0 or ∞ sets are never startable.
        excl0 |= spec.rho.vanishes_at_origin();
        excl1 |= spec.rho.vanishes_on_unit_sphere();
    }
    if excl1 && !desc.contains("zero set") {
        desc.push_str(", minus the unit sphere");
    }
    Ok(StateSpace {
        domain: base,
        excludes_origin: excl0,
        excludes_unit_sphere: excl1,
        description: desc,
        alpha_regime: regime,
    })
}
