//! Test functions and densities: sums of radial bumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polar_angle_density, sphere_fraction_in_ball};
use crate::quadrature::gl64;
use crate::weights::domain::dist;

/// Profile of a radial bump as a function of `s = ‖x − c‖ / radius`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `1` on the open unit ball.
    Indicator,
    /// `(1 − s²)²` on the unit ball; C¹ with compact support.
    Biweight,
    /// `exp(−s²/2)`; treated as supported on `s <= GAUSS_CUTOFF`.
    Gaussian,
}

/// Truncation radius (in units of `radius`) for Gaussian bumps.
pub const GAUSS_CUTOFF: f64 = 9.0;

impl Shape {
    pub fn profile(self, s: f64) -> f64 {
        match self {
            Shape::Indicator => {
                if s < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Biweight => {
                if s < 1.0 {
                    let u = 1.0 - s * s;
                    u * u
                } else {
                    0.0
                }
            }
            Shape::Gaussian => (-0.5 * s * s).exp(),
        }
    }

    /// Derivative of the profile in `s`.
    pub fn profile_derivative(self, s: f64) -> f64 {
        match self {
            Shape::Indicator => 0.0,
            Shape::Biweight => {
                if s < 1.0 {
                    -4.0 * s * (1.0 - s * s)
                } else {
                    0.0
                }
            }
            Shape::Gaussian => -s * (-0.5 * s * s).exp(),
        }
    }

    pub fn support(self) -> f64 {
        match self {
            Shape::Gaussian => GAUSS_CUTOFF,
            _ => 1.0,
        }
    }
}

/// `height · profile(‖x − center‖ / radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub height: f64,
    pub shape: Shape,
}

fn one() -> f64 {
    1.0
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64, height: f64, shape: Shape) -> Self {
        Self {
            center,
            radius,
            height,
            shape,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.height * self.shape.profile(dist(x, &self.center) / self.radius)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = dist(x, &self.center);
        if r == 0.0 {
            return vec![0.0; x.len()];
        }
        let g = self.height * self.shape.profile_derivative(r / self.radius) / (self.radius * r);
        x.iter().zip(&self.center).map(|(a, c)| g * (a - c)).collect()
    }

    pub fn support_radius(&self) -> f64 {
        self.radius * self.shape.support()
    }

    /// Mean of the bump over the sphere `∂B_s(x)`.
    pub fn spherical_mean(&self, x: &[f64], s: f64) -> f64 {
        let d = x.len();
        let big_d = dist(x, &self.center);
        let big_r = self.support_radius();
        if s >= big_d + big_r || s <= big_d - big_r {
            return 0.0;
        }
        match self.shape {
            Shape::Indicator => self.height * sphere_fraction_in_ball(d, s, big_d, self.radius),
            _ => {
                if s == 0.0 || big_d == 0.0 {
                    return self.height * self.shape.profile(s.max(big_d) / self.radius);
                }
                // Distance from the centre at polar angle θ: D² + s² + 2Ds cos θ.
                // Split at the angle where the sphere leaves the support.
                let exit = if s + big_d <= big_r {
                    0.0
                } else {
                    ((big_r * big_r - s * s - big_d * big_d) / (2.0 * big_d * s)).clamp(-1.0, 1.0).acos()
                };
                let f = |t: f64| {
                    let q = (big_d * big_d + s * s + 2.0 * big_d * s * t.cos()).max(0.0).sqrt();
                    self.shape.profile(q / self.radius) * polar_angle_density(d, t)
                };
                self.height * gl64().integrate(f, exit, std::f64::consts::PI)
            }
        }
    }
}

/// A real function on `ℝ^d` given as a finite combination of bumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FnSpec {
    Zero,
    Constant { c: f64 },
    Bump(Bump),
    Sum { terms: Vec<FnSpec> },
}

impl FnSpec {
    pub fn bump(center: Vec<f64>, radius: f64, shape: Shape) -> Self {
        FnSpec::Bump(Bump::new(center, radius, 1.0, shape))
    }

    pub fn indicator_ball(center: Vec<f64>, radius: f64) -> Self {
        Self::bump(center, radius, Shape::Indicator)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FnSpec::Zero => 0.0,
            FnSpec::Constant { c } => *c,
            FnSpec::Bump(b) => b.eval(x),
            FnSpec::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FnSpec::Zero | FnSpec::Constant { .. } => vec![0.0; x.len()],
            FnSpec::Bump(b) => b.gradient(x),
            FnSpec::Sum { terms } => {
                let mut g = vec![0.0; x.len()];
                for t in terms {
                    for (a, v) in g.iter_mut().zip(t.gradient(x)) {
                        *a += v;
                    }
                }
                g
            }
        }
    }

    pub fn bumps(&self) -> Vec<&Bump> {
        match self {
            FnSpec::Bump(b) => vec![b],
            FnSpec::Sum { terms } => terms.iter().flat_map(|t| t.bumps()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_compactly_supported(&self) -> bool {
        match self {
            FnSpec::Zero | FnSpec::Bump(_) => true,
            FnSpec::Constant { c } => *c == 0.0,
            FnSpec::Sum { terms } => terms.iter().all(|t| t.is_compactly_supported()),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            FnSpec::Zero => true,
            FnSpec::Constant { c } => *c >= 0.0,
            FnSpec::Bump(b) => b.height >= 0.0,
            FnSpec::Sum { terms } => terms.iter().all(|t| t.is_nonnegative()),
        }
    }

    /// Smallest ball about `origin` containing the support, if compact.
    pub fn support_radius_about(&self, origin: &[f64]) -> Option<f64> {
        match self {
            FnSpec::Zero => Some(0.0),
            FnSpec::Constant { c } if *c == 0.0 => Some(0.0),
            FnSpec::Constant { .. } => None,
            FnSpec::Bump(b) => Some(dist(origin, &b.center) + b.support_radius()),
            FnSpec::Sum { terms } => terms
                .iter()
                .map(|t| t.support_radius_about(origin))
                .try_fold(0.0f64, |acc, r| r.map(|r| acc.max(r))),
        }
    }

    /// Spherical mean over `∂B_s(x)`; constants pass through.
    pub fn spherical_mean(&self, x: &[f64], s: f64) -> f64 {
        match self {
            FnSpec::Zero => 0.0,
            FnSpec::Constant { c } => *c,
            FnSpec::Bump(b) => b.spherical_mean(x, s),
            FnSpec::Sum { terms } => terms.iter().map(|t| t.spherical_mean(x, s)).sum(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for b in self.bumps() {
            crate::error::check_dim(dim, b.center.len())?;
            if !(b.radius > 0.0 && b.radius.is_finite() && b.height.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "bump radius must be positive and height finite, got radius {} height {}",
                    b.radius, b.height
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biweight_gradient_matches_finite_difference() {
        let f = FnSpec::bump(vec![0.1, -0.2, 0.3], 0.8, Shape::Biweight);
        let x = [0.3, 0.1, 0.0];
        let g = f.gradient(&x);
        for i in 0..3 {
            let mut p = x;
            let mut m = x;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f.eval(&p) - f.eval(&m)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn spherical_mean_of_smooth_bump_matches_direct_quadrature() {
        // Mean value property fails for bumps, so compare with a direct
        // angular quadrature in d = 3 where the angle density is sin θ / 2.
        let b = Bump::new(vec![0.0, 0.0, 0.0], 1.0, 1.0, Shape::Biweight);
        let x = [0.5, 0.0, 0.0];
        let s = 0.7;
        let direct = gl64().integrate(
            |t| {
                let q = (0.25 + s * s + 2.0 * 0.5 * s * t.cos()).sqrt();
                Shape::Biweight.profile(q) * t.sin() / 2.0
            },
            0.0,
            std::f64::consts::PI,
        );
        // The direct rule straddles the kink, so only agree loosely.
        assert!((b.spherical_mean(&x, s) - direct).abs() < 1e-4);
    }

    #[test]
    fn indicator_spherical_mean_is_exact() {
        let f = FnSpec::indicator_ball(vec![0.0; 3], 1.0);
        assert_eq!(f.spherical_mean(&[0.0; 3], 0.5), 1.0);
        assert_eq!(f.spherical_mean(&[2.0, 0.0, 0.0], 0.5), 0.0);
    }

    #[test]
    fn serde_round_trip() {
        let f = FnSpec::Sum {
            terms: vec![FnSpec::bump(vec![1.0, 0.0], 0.5, Shape::Gaussian), FnSpec::Constant { c: 2.0 }],
        };
        let s = serde_json::to_string(&f).unwrap();
        let back: FnSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
    }
}
