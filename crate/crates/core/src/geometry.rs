//! Sphere and ball measures in `ℝ^d`.

use std::f64::consts::PI;

use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

/// Surface area of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Lebesgue volume of the unit ball in `ℝ^d`.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Fraction of the unit sphere `S^{d-1}` with first coordinate `>= u`.
pub fn cap_fraction(d: usize, u: f64) -> f64 {
    if u <= -1.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    match d {
        2 => u.acos() / PI,
        3 => 0.5 * (1.0 - u),
        _ => {
            let a = (d as f64 - 1.0) / 2.0;
            let half = 0.5 * beta_reg(a, 0.5, 1.0 - u * u);
            if u >= 0.0 {
                half
            } else {
                1.0 - half
            }
        }
    }
}

/// Fraction of the sphere `∂B_s(p)` lying inside the ball `B_r(q)`, where
/// `D = ‖p − q‖`.
pub fn sphere_fraction_in_ball(d: usize, s: f64, big_d: f64, r: f64) -> f64 {
    if s <= 0.0 {
        return if big_d < r { 1.0 } else { 0.0 };
    }
    if big_d + s <= r {
        return 1.0;
    }
    if s >= big_d + r || s <= big_d - r {
        return 0.0;
    }
    // Points p + sθ with ‖p + sθ − q‖ < r have θ·e ≤ u*, e = (p − q)/D.
    let u = (r * r - s * s - big_d * big_d) / (2.0 * s * big_d);
    1.0 - cap_fraction(d, u)
}

/// Normalised density of the first coordinate of a uniform point on
/// `S^{d-1}` in the angle variable: `sin^{d-2}θ / B(½, (d−1)/2)` on `[0, π]`.
pub fn polar_angle_density(d: usize, theta: f64) -> f64 {
    let a = (d as f64 - 1.0) / 2.0;
    theta.sin().powi(d as i32 - 2) / beta(0.5, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_constants() {
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        for d in 2..7 {
            assert!((sphere_area(d) - d as f64 * ball_volume(d)).abs() < 1e-10);
        }
    }

    #[test]
    fn cap_fraction_matches_closed_forms_in_general_branch() {
        // d = 4: fraction{x1 >= u} = (acos u − u√(1−u²)) / π.
        for &u in &[-0.7, -0.2, 0.0, 0.3, 0.9] {
            let exact = (f64::acos(u) - u * (1.0 - u * u).sqrt()) / PI;
            assert!((cap_fraction(4, u) - exact).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn sphere_fraction_limits() {
        assert_eq!(sphere_fraction_in_ball(3, 0.5, 0.2, 1.0), 1.0);
        assert_eq!(sphere_fraction_in_ball(3, 3.0, 0.5, 1.0), 0.0);
        // Sphere of radius 1 about a point at distance 1 from the centre of
        // B_1: the cap cut by the plane x·e = −1/2.
        let f = sphere_fraction_in_ball(3, 1.0, 1.0, 1.0);
        assert!((f - 0.25).abs() < 1e-12);
    }

    #[test]
    fn angle_density_normalised() {
        for d in 2..6 {
            let v = crate::quadrature::gl64().integrate(|t| polar_angle_density(d, t), 0.0, PI);
            assert!((v - 1.0).abs() < 1e-10);
        }
    }
}
