//! Skew and reflecting interfaces.

use serde::{Deserialize, Serialize};

use super::domain::{norm, DomainSpec};
use super::PhiSpec;

/// Interfaces with `|2β − 1|` below this are dropped.
pub const DEFAULT_SKEW_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// `{x : x[coord] = level}`, coordinates counted from 0.
    Hyperplane { coord: usize, level: f64 },
    /// `{‖x‖ = radius}`.
    Sphere { radius: f64 },
    /// Boundary of a ball or polytope.
    Boundary { domain: DomainSpec },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Positive side chosen with probability `beta`.
    Skew { beta: f64 },
    Reflect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub geometry: Geometry,
    pub behavior: Behavior,
    /// Density of the Revuz measure of the ledger against `ρσ`.
    pub revuz_factor: f64,
    pub revuz_weight: String,
}

impl Interface {
    pub fn hyperplane(coord: usize, level: f64, beta: f64) -> Self {
        Self {
            geometry: Geometry::Hyperplane { coord, level },
            behavior: Behavior::Skew { beta },
            revuz_factor: 1.0,
            revuz_weight: format!("rho dx' on {{x{} = {level}}}", coord + 1),
        }
    }

    pub fn sphere(radius: f64, beta: f64) -> Self {
        Self {
            geometry: Geometry::Sphere { radius },
            behavior: Behavior::Skew { beta },
            revuz_factor: 1.0,
            revuz_weight: format!("rho sigma on {{|x| = {radius}}}"),
        }
    }

    pub fn boundary(domain: DomainSpec, beta: f64) -> Self {
        Self {
            geometry: Geometry::Boundary { domain },
            behavior: Behavior::Skew { beta },
            revuz_factor: 0.5,
            revuz_weight: "1/2 rho sigma on the boundary of G".into(),
        }
    }

    pub fn reflecting(domain: DomainSpec) -> Self {
        Self {
            geometry: Geometry::Boundary { domain },
            behavior: Behavior::Reflect,
            revuz_factor: 0.5,
            revuz_weight: "1/2 rho sigma on the boundary of G".into(),
        }
    }

    /// Attaches the Revuz weight `(φ₊ + φ₋)/2 · ρσ` from the two side values.
    fn with_sides(mut self, inner: f64, outer: f64) -> Self {
        self.revuz_factor = 0.5 * (inner + outer);
        let shape = match &self.geometry {
            Geometry::Hyperplane { coord, level } => format!("rho dx' on {{x{} = {level}}}", coord + 1),
            Geometry::Sphere { radius } => format!("rho sigma on {{|x| = {radius}}}"),
            Geometry::Boundary { .. } => "rho sigma on the boundary of G".into(),
        };
        self.revuz_weight = format!("1/2 ({outer} + {inner}) {shape}");
        self
    }

    pub fn beta(&self) -> Option<f64> {
        match self.behavior {
            Behavior::Skew { beta } => Some(beta),
            Behavior::Reflect => None,
        }
    }

    /// `2β − 1`, zero for reflecting interfaces.
    pub fn skewness(&self) -> f64 {
        self.beta().map_or(0.0, |b| 2.0 * b - 1.0)
    }

    /// Dynamically invisible: `β = ½`.
    pub fn is_invisible(&self) -> bool {
        self.beta() == Some(0.5)
    }

    /// Signed distance, positive on the side chosen with probability `β`
    /// (upper half-space, outside of a sphere or of `G`).
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.geometry {
            Geometry::Hyperplane { coord, level } => x[*coord] - level,
            Geometry::Sphere { radius } => norm(x) - radius,
            Geometry::Boundary { domain } => domain.signed_distance(x),
        }
    }

    /// Moves `x` so that its signed distance becomes `target`, along the
    /// interface normal at `x`.
    pub fn set_signed_distance(&self, x: &mut [f64], target: f64) {
        match &self.geometry {
            Geometry::Hyperplane { coord, level } => x[*coord] = level + target,
            Geometry::Sphere { radius } => {
                let r = norm(x);
                if r > 0.0 {
                    let k = (radius + target) / r;
                    x.iter_mut().for_each(|v| *v *= k);
                }
            }
            Geometry::Boundary { domain } => match domain.ball_params() {
                Some((c, radius)) => {
                    let r = super::domain::dist(x, c);
                    if r > 0.0 {
                        let k = (radius + target) / r;
                        for (v, ci) in x.iter_mut().zip(c) {
                            *v = ci + (*v - ci) * k;
                        }
                    }
                }
                None => {
                    let s = domain.signed_distance(x);
                    let n = domain.outward_normal(x);
                    for (v, ni) in x.iter_mut().zip(n) {
                        *v += (target - s) * ni;
                    }
                }
            },
        }
    }

    /// Short stable identifier used as a ledger key.
    pub fn label(&self) -> String {
        match &self.geometry {
            Geometry::Hyperplane { coord, level } => format!("hyperplane[x{}={level}]", coord + 1),
            Geometry::Sphere { radius } => format!("sphere[r={radius}]"),
            Geometry::Boundary { domain } => match domain.ball_params() {
                Some((c, r)) => format!("boundary[ball c={c:?} r={r}]"),
                None => "boundary[polytope]".into(),
            },
        }
    }
}

/// An interface that was dropped because `|2β − 1|` fell below the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub geometry: Geometry,
    pub beta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSet {
    pub kept: Vec<Interface>,
    pub dropped: Vec<Dropped>,
    /// `Σ |2β − 1|` over the dropped interfaces.
    pub dropped_skewness: f64,
}

/// Interfaces induced by the jumps of `φ`: one per stored level of annuli and
/// slabs with `β = φ₊/(φ₊ + φ₋)` (the upper or outer value over the sum), and
/// the boundary of `G` for `φ = β 1_{G^c} + (1 − β) 1_G`.
pub fn skew_interfaces(phi: &PhiSpec, dim: usize, threshold: f64) -> InterfaceSet {
    let mut out = InterfaceSet::default();
    let mut push = |iface: Interface| {
        let b = iface.beta().unwrap();
        let k = (2.0 * b - 1.0).abs();
        if k <= threshold || b == 0.5 {
            out.dropped_skewness += k;
            out.dropped.push(Dropped {
                geometry: iface.geometry,
                beta: b,
            });
        } else {
            out.kept.push(iface);
        }
    };
    match phi {
        PhiSpec::Uniform { .. } => {}
        PhiSpec::Annuli { .. } | PhiSpec::Slabs { .. } => {
            let prof = phi.profile().unwrap();
            let radial = matches!(phi, PhiSpec::Annuli { .. });
            for (i, &level) in prof.breaks.iter().enumerate() {
                let (lo, hi) = (prof.values[i], prof.values[i + 1]);
                let beta = hi / (hi + lo);
                let iface = if radial {
                    Interface::sphere(level, beta)
                } else {
                    Interface::hyperplane(dim - 1, level, beta)
                };
                push(iface.with_sides(lo, hi));
            }
        }
        PhiSpec::LipschitzDomain { domain, beta } => {
            push(Interface::boundary(domain.clone(), *beta).with_sides(1.0 - beta, *beta));
        }
    }
    out
}
