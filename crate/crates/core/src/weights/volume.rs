//! Weighted ball masses and A2 products.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::domain::norm;
use super::WeightSpec;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{ball_volume, sphere_area, sphere_fraction_in_ball};
use crate::quadrature::{breakpoints, gl64, piecewise};
use crate::rng::StreamKey;

/// Relative tolerance of the radial quadrature.
pub const MASS_REL_TOL: f64 = 1e-12;
/// Sample count of the Monte-Carlo fallback.
pub const MC_SAMPLES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMethod {
    RadialQuadrature,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub value: f64,
    pub abs_err: f64,
    /// False when the error budget was not met; `value` is then a partial sum.
    pub converged: bool,
    pub method: MassMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
}

impl BallFamily {
    /// Balls `B_{2^{-k}}(0)`, `k = 0..n`.
    pub fn centered_dyadic(dim: usize, n: usize) -> Self {
        Self {
            balls: (0..n)
                .map(|k| Ball {
                    center: vec![0.0; dim],
                    radius: 0.5f64.powi(k as i32),
                })
                .collect(),
        }
    }

    /// Balls of radius `r_k = 2^{-k}` whose centres sit at distance
    /// `r_k (1 + 2^{-k})` from the origin along the first axis, so the gap to
    /// the origin shrinks faster than the radius.
    pub fn near_tangent(dim: usize, n: usize) -> Self {
        Self {
            balls: (0..n)
                .map(|k| {
                    let r = 0.5f64.powi(k as i32);
                    let mut center = vec![0.0; dim];
                    center[0] = r * (1.0 + r);
                    Ball { center, radius: r }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Estimate {
    /// Largest product over the family.
    pub sup: f64,
    pub argmax: usize,
    pub ball: Ball,
    /// `(avg ψ)(avg ψ⁻¹)` for every ball, in family order.
    pub products: Vec<f64>,
}

impl A2Estimate {
    /// `max / min` of the products.
    pub fn spread(&self) -> f64 {
        let lo = self.products.iter().copied().fold(f64::INFINITY, f64::min);
        self.sup / lo
    }

    /// Last product over the first.
    pub fn growth(&self) -> f64 {
        self.products[self.products.len() - 1] / self.products[0]
    }

    pub fn is_monotone_increasing(&self) -> bool {
        self.products.windows(2).all(|w| w[1] >= w[0])
    }
}

/// `m(B_r(c)) = ∫_{B_r(c)} ψ dx`.
pub fn ball_mass(spec: &WeightSpec, center: &[f64], radius: f64) -> Result<MassEstimate> {
    ball_power_integral(spec, center, radius, 1.0)
}

/// `∫_{B_r(c)} ψ^p dx`. Radial weights integrate `ψ(s)^p` against the area of
/// `∂B_s(0) ∩ B_r(c)`; other weights fall back to Monte Carlo.
pub fn ball_power_integral(spec: &WeightSpec, center: &[f64], radius: f64, p: f64) -> Result<MassEstimate> {
    check_dim(spec.dimension, center.len())?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidConfig(format!("ball radius must be positive, got {radius}")));
    }
    let d = spec.dimension;
    if spec.is_radial() {
        let big_d = norm(center);
        let lo = (big_d - radius).max(0.0);
        let hi = big_d + radius;
        let omega = sphere_area(d);
        let f = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let frac = sphere_fraction_in_ball(d, s, big_d, radius);
            if frac == 0.0 {
                return 0.0;
            }
            spec.radial_psi(s).powf(p) * omega * s.powi(d as i32 - 1) * frac
        };
        let mut interior = spec.radial_breaks();
        interior.push((radius - big_d).abs());
        let breaks = breakpoints(lo, hi, interior);
        let out = piecewise(&f, &breaks, MASS_REL_TOL, gl64());
        return Ok(MassEstimate {
            value: out.value,
            abs_err: out.abs_err,
            converged: out.converged && out.value.is_finite(),
            method: MassMethod::RadialQuadrature,
        });
    }
    Ok(monte_carlo_power(spec, center, radius, p))
}

fn monte_carlo_power(spec: &WeightSpec, center: &[f64], radius: f64, p: f64) -> MassEstimate {
    let d = spec.dimension;
    let mut rng = StreamKey::new(0x6d61_7373).stream(0);
    let mut acc = crate::stats::MeanAccumulator::new();
    let mut x = vec![0.0; d];
    for _ in 0..MC_SAMPLES {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = norm(&x);
        let u: f64 = rng.random();
        let k = radius * u.powf(1.0 / d as f64) / n;
        for (v, c) in x.iter_mut().zip(center) {
            *v = c + *v * k;
        }
        acc.push((spec.rho(&x) * spec.phi(&x)).powf(p));
    }
    let vol = ball_volume(d) * radius.powi(d as i32);
    let est = acc.estimate();
    MassEstimate {
        value: vol * est.mean,
        abs_err: 3.0 * vol * est.std_err,
        converged: est.mean.is_finite() && est.std_err.is_finite(),
        method: MassMethod::MonteCarlo,
    }
}

/// `sup_B (avg_B ψ)(avg_B ψ⁻¹)` over a finite family.
pub fn a2_estimate(spec: &WeightSpec, balls: &BallFamily) -> Result<A2Estimate> {
    if balls.balls.is_empty() {
        return Err(Error::InvalidConfig("empty ball family".into()));
    }
    let mut products = Vec::with_capacity(balls.balls.len());
    for b in &balls.balls {
        let plus = ball_power_integral(spec, &b.center, b.radius, 1.0)?;
        let minus = ball_power_integral(spec, &b.center, b.radius, -1.0)?;
        for (m, which) in [(plus, "psi"), (minus, "1/psi")] {
            if !m.converged {
                return Err(Error::QuadratureNonConvergence {
                    residual: m.abs_err,
                    context: format!(
                        "integral of {which} over the ball of radius {} centred at {:?}",
                        b.radius, b.center
                    ),
                });
            }
        }
        let vol = ball_volume(spec.dimension) * b.radius.powi(spec.dimension as i32);
        products.push((plus.value / vol) * (minus.value / vol));
    }
    let (argmax, sup) = products
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    Ok(A2Estimate {
        sup,
        argmax,
        ball: balls.balls[argmax].clone(),
        products,
    })
}
