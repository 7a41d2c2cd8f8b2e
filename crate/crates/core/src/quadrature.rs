//! Gauss–Legendre rules and a geometrically graded composite integrator for
//! integrands with integrable (or divergent) endpoint singularities.

use std::sync::OnceLock;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_n(z) and its derivative.
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { z } else { p1 };
                let pn1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
                let dz = pn / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            if n == 1 {
                z = 0.0;
                dp = 1.0;
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n == 1 {
            weights[0] = 2.0;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    #[inline]
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

/// Shared 64-point rule.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Shared 24-point rule used inside graded shells.
pub fn gl24() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

/// Result of a quadrature with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub converged: bool,
}

impl Integral {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            abs_err: 0.0,
            converged: true,
        }
    }

    fn add(self, other: Integral) -> Integral {
        Integral {
            value: self.value + other.value,
            abs_err: self.abs_err + other.abs_err,
            converged: self.converged && other.converged,
        }
    }
}

/// Maximum number of geometric shells towards one endpoint.
pub const MAX_SHELLS: usize = 90;

/// Integrates `f` over the interval between `near` and `far`, grading the mesh
/// geometrically towards `near` where `f` may be singular. Shell
/// contributions are extrapolated as a geometric series once they decay; a
/// non-decaying sequence is reported as not converged with the last shell's
/// magnitude as residual.
pub fn graded(f: &dyn Fn(f64) -> f64, near: f64, far: f64, rel_tol: f64, rule: &GaussLegendre) -> Integral {
    let width = far - near;
    if width == 0.0 {
        return Integral::zero();
    }
    let mut total = 0.0f64;
    let mut prev: Option<f64> = None;
    let mut last = 0.0f64;
    let mut ratio = 1.0f64;
    let mut outer = 1.0;
    for j in 0..MAX_SHELLS {
        let inner = outer * 0.5;
        let (a, b) = (near + width * inner, near + width * outer);
        if a == b || a == near {
            // Floating-point resolution reached; remaining interval is empty.
            return Integral {
                value: total,
                abs_err: last.abs(),
                converged: ratio < 1.0,
            };
        }
        let c = rule.integrate(f, a, b);
        total += c;
        if let Some(p) = prev {
            if p != 0.0 {
                ratio = (c / p).abs();
            } else if c == 0.0 {
                ratio = 0.0;
            }
        }
        last = c;
        prev = Some(c);
        outer = inner;
        if j >= 6 && ratio < 0.95 {
            let tail = c.abs() * ratio / (1.0 - ratio);
            if tail <= rel_tol * total.abs() || (total == 0.0 && c == 0.0) {
                let signed_tail = c * ratio / (1.0 - ratio);
                return Integral {
                    value: total + signed_tail,
                    abs_err: tail.max(f64::EPSILON * total.abs()),
                    converged: true,
                };
            }
        }
    }
    let residual = if ratio < 1.0 {
        last.abs() * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    Integral {
        value: total,
        abs_err: residual.max(last.abs()),
        converged: false,
    }
}

/// Integrates over `[a, b]`, grading towards both ends.
pub fn graded_both(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, rule: &GaussLegendre) -> Integral {
    if b <= a {
        return Integral::zero();
    }
    let mid = 0.5 * (a + b);
    graded(f, a, mid, rel_tol, rule).add(graded(f, b, mid, rel_tol, rule).negate())
}

impl Integral {
    fn negate(self) -> Integral {
        Integral {
            value: -self.value,
            ..self
        }
    }
}

/// Integrates over `[breaks[0], breaks[last]]`, treating every breakpoint as a
/// possible kink or singularity. Breakpoints must be sorted.
pub fn piecewise(f: &dyn Fn(f64) -> f64, breaks: &[f64], rel_tol: f64, rule: &GaussLegendre) -> Integral {
    let mut acc = Integral::zero();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            acc = acc.add(graded_both(f, w[0], w[1], rel_tol, rule));
        }
    }
    acc
}

/// Sorted, deduplicated breakpoints restricted to `[lo, hi]`, endpoints
/// included.
pub fn breakpoints(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = interior.into_iter().filter(|&x| x > lo && x < hi).collect();
    v.push(lo);
    v.push(hi);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        let v = rule.integrate(|x| x.powi(15) + 3.0 * x * x, 0.0, 2.0);
        let exact = 2f64.powi(16) / 16.0 + 8.0;
        assert!((v - exact).abs() < 1e-10 * exact);
        let w: f64 = gl64().weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-13);
    }

    #[test]
    fn graded_handles_power_singularity() {
        let f = |s: f64| s.powf(-0.5);
        let out = graded(&f, 0.0, 1.0, 1e-12, gl24());
        assert!(out.converged);
        assert!((out.value - 2.0).abs() < 1e-10, "{}", out.value);
    }

    #[test]
    fn graded_flags_divergence() {
        let f = |s: f64| s.powf(-1.5);
        let out = graded(&f, 0.0, 1.0, 1e-12, gl24());
        assert!(!out.converged);
    }

    #[test]
    fn piecewise_with_kink() {
        let f = |x: f64| (x - 0.3).abs();
        let out = piecewise(&f, &breakpoints(0.0, 1.0, [0.3]), 1e-13, gl24());
        let exact = 0.5 * 0.09 + 0.5 * 0.49;
        assert!((out.value - exact).abs() < 1e-12);
    }
}
