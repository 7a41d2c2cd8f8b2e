//! Domains used as the skew set `G`, the reflecting region and state spaces.
//! Lipschitz domains are restricted to balls and bounded convex polytopes so
//! that normals and projections are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-space `{x : normal · x <= offset}`; the normal need not be unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    fn unit(&self) -> (Vec<f64>, f64) {
        let n = norm(&self.normal);
        (self.normal.iter().map(|v| v / n).collect(), self.offset / n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    FullSpace,
    PuncturedOrigin,
    Ball { center: Vec<f64>, radius: f64 },
    ConvexPolytope { halfspaces: Vec<HalfSpace> },
    ClosureOf { inner: Box<DomainSpec> },
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl DomainSpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Self::Ball { center, radius }
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::Ball {
            center: vec![0.0; dim],
            radius: 1.0,
        }
    }

    /// Axis-aligned box `[lo, hi]` as a polytope.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        let d = lo.len();
        let mut halfspaces = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut n = vec![0.0; d];
            n[i] = 1.0;
            halfspaces.push(HalfSpace {
                normal: n.clone(),
                offset: hi[i],
            });
            n[i] = -1.0;
            halfspaces.push(HalfSpace {
                normal: n,
                offset: -lo[i],
            });
        }
        Self::ConvexPolytope { halfspaces }
    }

    pub fn closure(self) -> Self {
        match self {
            Self::ClosureOf { .. } => self,
            other => Self::ClosureOf {
                inner: Box::new(other),
            },
        }
    }

    /// The underlying open set (strips `ClosureOf`).
    pub fn base(&self) -> &DomainSpec {
        match self {
            Self::ClosureOf { inner } => inner.base(),
            other => other,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, Self::ClosureOf { .. })
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.base(), Self::Ball { .. } | Self::ConvexPolytope { .. })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::FullSpace | Self::PuncturedOrigin => Ok(()),
            Self::ClosureOf { inner } => match inner.as_ref() {
                Self::Ball { .. } | Self::ConvexPolytope { .. } => inner.validate(dim),
                _ => Err(Error::InvalidWeight(
                    "closure_of must wrap a ball or a polytope".into(),
                )),
            },
            Self::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: center.len(),
                    });
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidWeight(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                Ok(())
            }
            Self::ConvexPolytope { halfspaces } => {
                if halfspaces.len() <= dim {
                    return Err(Error::InvalidWeight(format!(
                        "a bounded polytope in dimension {dim} needs more than {dim} half-spaces"
                    )));
                }
                for h in halfspaces {
                    if h.normal.len() != dim {
                        return Err(Error::Dimension {
                            expected: dim,
                            got: h.normal.len(),
                        });
                    }
                    if norm(&h.normal) == 0.0 || !h.offset.is_finite() {
                        return Err(Error::InvalidWeight("degenerate half-space".into()));
                    }
                }
                // Bounded: projections of far-away points stay close. Nonempty
                // interior: the centroid of those projections is strictly inside.
                let far = 1e6;
                let mut centroid = vec![0.0; dim];
                for i in 0..dim {
                    for s in [-1.0, 1.0] {
                        let mut p = vec![0.0; dim];
                        p[i] = s * far;
                        let q = self.project(&p);
                        if norm(&q) > 1e-2 * far {
                            return Err(Error::InvalidWeight("polytope is unbounded".into()));
                        }
                        for (c, v) in centroid.iter_mut().zip(&q) {
                            *c += v / (2 * dim) as f64;
                        }
                    }
                }
                if self.signed_distance(&centroid) >= -1e-9 {
                    return Err(Error::InvalidWeight("polytope has empty interior".into()));
                }
                Ok(())
            }
        }
    }

    /// Membership; open sets exclude their boundary, closures include it.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::FullSpace => true,
            Self::PuncturedOrigin => norm(x) > 0.0,
            Self::ClosureOf { inner } => inner.signed_distance(x) <= 0.0,
            _ => self.signed_distance(x) < 0.0,
        }
    }

    /// Signed distance to the boundary, negative inside. For polytopes the
    /// exterior value is the largest constraint violation, which is a lower
    /// bound of the Euclidean distance and exact away from corners.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self.base() {
            Self::FullSpace => f64::NEG_INFINITY,
            Self::PuncturedOrigin => -norm(x),
            Self::Ball { center, radius } => dist(x, center) - radius,
            Self::ConvexPolytope { halfspaces } => halfspaces
                .iter()
                .map(|h| {
                    let (n, b) = h.unit();
                    dot(&n, x) - b
                })
                .fold(f64::NEG_INFINITY, f64::max),
            Self::ClosureOf { .. } => unreachable!(),
        }
    }

    /// Unit outward normal of the nearest boundary piece.
    pub fn outward_normal(&self, x: &[f64]) -> Vec<f64> {
        match self.base() {
            Self::Ball { center, .. } => {
                let v: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let n = norm(&v);
                if n == 0.0 {
                    let mut e = vec![0.0; x.len()];
                    e[0] = 1.0;
                    e
                } else {
                    v.into_iter().map(|a| a / n).collect()
                }
            }
            Self::ConvexPolytope { halfspaces } => {
                let mut best = f64::NEG_INFINITY;
                let mut normal = vec![0.0; x.len()];
                for h in halfspaces {
                    let (n, b) = h.unit();
                    let v = dot(&n, x) - b;
                    if v > best {
                        best = v;
                        normal = n;
                    }
                }
                normal
            }
            _ => vec![0.0; x.len()],
        }
    }

    /// Nearest point of the closure. Polytopes use Dykstra's alternating
    /// projections, which converge to the exact Euclidean projection.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self.base() {
            Self::Ball { center, radius } => {
                let r = dist(x, center);
                if r <= *radius {
                    x.to_vec()
                } else {
                    center
                        .iter()
                        .zip(x)
                        .map(|(c, a)| c + (a - c) * radius / r)
                        .collect()
                }
            }
            Self::ConvexPolytope { halfspaces } => {
                let units: Vec<(Vec<f64>, f64)> = halfspaces.iter().map(|h| h.unit()).collect();
                if units.iter().all(|(n, b)| dot(n, x) <= *b) {
                    return x.to_vec();
                }
                let d = x.len();
                let mut y = x.to_vec();
                let mut corr = vec![vec![0.0; d]; units.len()];
                for _ in 0..10_000 {
                    let before = y.clone();
                    for (k, (n, b)) in units.iter().enumerate() {
                        let z: Vec<f64> = y.iter().zip(&corr[k]).map(|(a, c)| a + c).collect();
                        let v = dot(n, &z) - b;
                        let p: Vec<f64> = if v > 0.0 {
                            z.iter().zip(n).map(|(a, ni)| a - v * ni).collect()
                        } else {
                            z.clone()
                        };
                        for i in 0..d {
                            corr[k][i] = z[i] - p[i];
                        }
                        y = p;
                    }
                    if dist(&before, &y) < 1e-15 * (1.0 + norm(&y)) {
                        break;
                    }
                }
                y
            }
            _ => x.to_vec(),
        }
    }

    /// Volume of a bounded domain (balls exactly; polytopes by Monte Carlo is
    /// not offered).
    pub fn ball_params(&self) -> Option<(&[f64], f64)> {
        match self.base() {
            Self::Ball { center, radius } => Some((center.as_slice(), *radius)),
            _ => None,
        }
    }
}
