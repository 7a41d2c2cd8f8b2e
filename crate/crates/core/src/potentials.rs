//! Riesz potentials, Hölder probes, resolvent envelopes, Monte-Carlo
//! resolvents and the potential-smoothness check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{check_dim, Error, Result};
use crate::functions::FnSpec;
use crate::geometry::sphere_area;
use crate::quadrature::{breakpoints, gl64, piecewise};
use crate::report::{CheckReport, Comparison};
use crate::sde::{Engine, StepView};
use crate::stats::{linear_fit, MeanAccumulator};
use crate::weights::domain::{dist, norm};
use crate::weights::{DomainSpec, Interface};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Riesz,
    ResolventMc,
    Envelope,
    SemigroupMc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialEstimate {
    pub value: f64,
    /// Quadrature error bound or 95% half-width.
    pub error: f64,
    pub kind: PotentialKind,
    pub converged: bool,
    pub n: usize,
}

impl PotentialEstimate {
    pub fn lower(&self) -> f64 {
        self.value - self.error
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error
    }
}

/// Relative tolerance of the Riesz quadrature.
pub const RIESZ_REL_TOL: f64 = 1e-11;
/// The singular shell has radius `support diameter / RIESZ_SHELL_DIVISOR`.
pub const RIESZ_SHELL_DIVISOR: f64 = 64.0;

fn support_diameter(g: &FnSpec) -> f64 {
    let b = g.bumps();
    let mut diam = 0.0f64;
    for p in &b {
        for q in &b {
            diam = diam.max(dist(&p.center, &q.center) + p.support_radius() + q.support_radius());
        }
    }
    diam
}

/// `V_η g(x) = ∫ ‖x − y‖^{η−d} g(y) dy` in polar coordinates about `x`:
/// `ω_{d−1} ∫ s^{η−1} M(s) ds` with `M` the spherical mean of `g`. On the
/// shell `s < h` the substitution `s = h u^{1/η}` absorbs the kernel.
pub fn riesz(g: &FnSpec, eta: f64, x: &[f64]) -> Result<PotentialEstimate> {
    let d = x.len();
    if eta.is_nan() || eta <= 0.0 {
        return Err(Error::NonIntegrable(format!("Riesz order eta = {eta} must be positive")));
    }
    if eta >= d as f64 {
        return Err(Error::InvalidConfig(format!("Riesz order eta = {eta} must be below d = {d}")));
    }
    g.validate(d)?;
    let s_max = g
        .support_radius_about(x)
        .ok_or_else(|| Error::NonIntegrable("g must have compact support".into()))?;
    let zero = PotentialEstimate {
        value: 0.0,
        error: 0.0,
        kind: PotentialKind::Riesz,
        converged: true,
        n: 0,
    };
    if s_max == 0.0 || g.bumps().iter().all(|b| b.height == 0.0) {
        return Ok(zero);
    }
    let h = (support_diameter(g) / RIESZ_SHELL_DIVISOR).min(s_max);
    let mut kinks = Vec::new();
    for b in g.bumps() {
        let dd = dist(x, &b.center);
        let r = b.support_radius();
        kinks.push((dd - r).abs());
        kinks.push(dd + r);
        if b.shape != crate::functions::Shape::Indicator {
            kinks.push((dd - b.radius).abs());
        }
    }
    let m = |s: f64| g.spherical_mean(x, s);
    let inner_f = |u: f64| m(h * u.powf(1.0 / eta));
    let inner_breaks = breakpoints(0.0, 1.0, kinks.iter().filter(|&&k| k < h).map(|k| (k / h).powf(eta)));
    let inner = piecewise(&inner_f, &inner_breaks, RIESZ_REL_TOL, gl64());
    let outer_f = |s: f64| s.powf(eta - 1.0) * m(s);
    let outer = if s_max > h {
        piecewise(&outer_f, &breakpoints(h, s_max, kinks.iter().copied()), RIESZ_REL_TOL, gl64())
    } else {
        crate::quadrature::Integral::zero()
    };
    let omega = sphere_area(d);
    let k = h.powf(eta) / eta;
    Ok(PotentialEstimate {
        value: omega * (k * inner.value + outer.value),
        error: omega * (k * inner.abs_err + outer.abs_err),
        kind: PotentialKind::Riesz,
        converged: inner.converged && outer.converged,
        n: 0,
    })
}

/// Axis-aligned lattice with `n` points per side, optionally restricted to
/// an annulus `r_min <= ‖x‖ <= r_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: usize,
    #[serde(default)]
    pub annulus: Option<(f64, f64)>,
}

impl Lattice {
    pub fn cube(lo: Vec<f64>, hi: Vec<f64>, n: usize) -> Self {
        Self { lo, hi, n, annulus: None }
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) / (self.n - 1) as f64)
            .collect()
    }

    fn point(&self, idx: &[usize]) -> Vec<f64> {
        let h = self.spacing();
        idx.iter().enumerate().map(|(k, &i)| self.lo[k] + i as f64 * h[k]).collect()
    }

    fn inside(&self, x: &[f64]) -> bool {
        match self.annulus {
            Some((a, b)) => {
                let r = norm(x);
                r >= a && r <= b
            }
            None => true,
        }
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.lo.len()];
        for v in idx.iter_mut() {
            *v = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.lo.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points inside the region, in lattice order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.point(&self.multi_index(i)))
            .filter(|x| self.inside(x))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Fitted exponent; `+∞` for a constant function.
    pub exponent: f64,
    pub constant: f64,
    pub target: f64,
    pub pass: bool,
    pub lags: Vec<f64>,
    pub moduli: Vec<f64>,
}

/// Number of dyadic refinements probed by [`holder_probe`].
pub const HOLDER_LEVELS: usize = 4;

/// Fits `ω(δ) ≈ C δ^κ` for the modulus of continuity at lags
/// `δ_j = spacing / 2^j`, `j = 1..=HOLDER_LEVELS`, where `ω(δ_j)` is the
/// largest difference between a lattice point and its two axis neighbours at
/// distance `δ_j`, and passes if `κ >= target − 0.1`.
pub fn holder_probe(f: &(dyn Fn(&[f64]) -> f64 + Sync), region: &Lattice, target: f64) -> Result<HolderFit> {
    let d = region.lo.len();
    if region.n < 2 || region.hi.len() != d {
        return Err(Error::InvalidConfig("lattice needs at least 2 points per side".into()));
    }
    let h = region.spacing();
    let step = h.iter().copied().fold(0.0, f64::max);
    let pts = region.points();
    // For each point: f(x) and, per level and axis, f(x ± δ_j e_axis).
    let rows: Vec<(f64, Vec<Option<f64>>)> = pts
        .par_iter()
        .map(|x| {
            let fx = f(x);
            let mut nb = Vec::with_capacity(2 * HOLDER_LEVELS * d);
            for j in 0..HOLDER_LEVELS {
                for axis in 0..d {
                    for sgn in [1.0, -1.0] {
                        let mut y = x.clone();
                        y[axis] += sgn * h[axis] / 2f64.powi(j as i32 + 1);
                        nb.push(region.inside(&y).then(|| f(&y)));
                    }
                }
            }
            (fx, nb)
        })
        .collect();
    if rows.iter().any(|(fx, nb)| !fx.is_finite() || nb.iter().flatten().any(|v| !v.is_finite())) {
        return Err(Error::InvalidConfig("function is not finite on the lattice".into()));
    }
    let mut lags = Vec::with_capacity(HOLDER_LEVELS);
    let mut moduli = Vec::with_capacity(HOLDER_LEVELS);
    for j in 0..HOLDER_LEVELS {
        let mut w = 0.0f64;
        for (fx, nb) in &rows {
            for v in nb[2 * j * d..2 * (j + 1) * d].iter().flatten() {
                w = w.max((fx - v).abs());
            }
        }
        lags.push(step / 2f64.powi(j as i32 + 1));
        moduli.push(w);
    }
    if moduli.iter().all(|&w| w == 0.0) {
        return Ok(HolderFit {
            exponent: f64::INFINITY,
            constant: 0.0,
            target,
            pass: true,
            lags,
            moduli,
        });
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = lags
        .iter()
        .zip(&moduli)
        .filter(|(_, w)| **w > 0.0)
        .map(|(l, w)| (l.ln(), w.ln()))
        .unzip();
    if lx.len() < 2 {
        return Err(Error::InvalidConfig("too few lags for a fit".into()));
    }
    let (b0, b1) = linear_fit(&lx, &ly);
    Ok(HolderFit {
        exponent: b1,
        constant: b0.exp(),
        target,
        pass: b1 >= target - 0.1,
        lags,
        moduli,
    })
}

/// Kernel shapes bracketing the 1-resolvent density of `‖x‖^α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// `‖x − y‖^{−(α+d−2)}`.
    pub phi: f64,
    /// `‖x − y‖^{−(d−2)} ‖y‖^{−α}`.
    pub psi: f64,
    /// `Φ + Ψ 1{α ∈ [0, d)}`.
    pub lower: f64,
    /// `Φ + Ψ 1{α ∈ (−d, 0)}`.
    pub upper: f64,
}

pub fn resolvent_envelope(alpha: f64, d: usize, x: &[f64], y: &[f64]) -> Result<Envelope> {
    check_dim(d, x.len())?;
    check_dim(d, y.len())?;
    let df = d as f64;
    if !(alpha > -df && alpha < df) {
        return Err(Error::InvalidWeight(format!("alpha = {alpha} is outside (-d, d)")));
    }
    if norm(y) == 0.0 {
        return Err(Error::Singularity {
            point: y.to_vec(),
            reason: "envelope needs y away from the origin".into(),
        });
    }
    let r = dist(x, y);
    if r == 0.0 {
        let inf = f64::INFINITY;
        return Ok(Envelope {
            phi: inf,
            psi: inf,
            lower: inf,
            upper: inf,
        });
    }
    let phi = r.powf(-(alpha + df - 2.0));
    let psi = r.powf(-(df - 2.0)) * norm(y).powf(-alpha);
    let lower = phi + if alpha >= 0.0 { psi } else { 0.0 };
    let upper = phi + if alpha < 0.0 { psi } else { 0.0 };
    Ok(Envelope { phi, psi, lower, upper })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Largest `c₁` with `c₁·lower <= r̂` on the grid.
    pub c1: f64,
    /// Smallest `c₂` with `r̂ <= c₂·upper` on the grid.
    pub c2: f64,
    /// Least-squares centres `exp(mean log(r̂/lower))`, `exp(mean log(r̂/upper))`.
    pub c1_ls: f64,
    pub c2_ls: f64,
    pub lower_ratios: Vec<f64>,
    pub upper_ratios: Vec<f64>,
    pub sandwich_holds: bool,
}

/// Fits the sandwich constants for estimates `values` at the pairs.
pub fn fit_envelope(alpha: f64, d: usize, pairs: &[(Vec<f64>, Vec<f64>)], values: &[f64]) -> Result<EnvelopeFit> {
    let mut lo = Vec::with_capacity(pairs.len());
    let mut up = Vec::with_capacity(pairs.len());
    for ((x, y), v) in pairs.iter().zip(values) {
        let e = resolvent_envelope(alpha, d, x, y)?;
        lo.push(v / e.lower);
        up.push(v / e.upper);
    }
    let c1 = lo.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = up.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gm = |v: &[f64]| (v.iter().map(|r| r.ln()).sum::<f64>() / v.len() as f64).exp();
    let holds = c1 > 0.0
        && c2.is_finite()
        && pairs.iter().zip(values).all(|((x, y), v)| {
            let e = resolvent_envelope(alpha, d, x, y).unwrap();
            c1 * e.lower <= v * (1.0 + 1e-12) && *v <= c2 * e.upper * (1.0 + 1e-12)
        });
    Ok(EnvelopeFit {
        c1,
        c2,
        c1_ls: gm(&lo),
        c2_ls: gm(&up),
        lower_ratios: lo,
        upper_ratios: up,
        sandwich_holds: holds,
    })
}

/// What `R_1` is applied to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolventSource {
    /// A density with respect to `m`.
    Density { f: FnSpec },
    /// The Revuz measure of an interface's ledger. `band` estimates it by
    /// the occupation density of a band of half-width `eps` (default
    /// `2√dt`) with a two-width extrapolation; `ledger` integrates the
    /// engine's ledger instead.
    Surface {
        interface: Interface,
        #[serde(default)]
        eps: Option<f64>,
        #[serde(default)]
        use_ledger: bool,
    },
}

fn discount_weight(v: &StepView<'_>) -> f64 {
    (-v.t0).exp() - (-v.t1).exp()
}

/// `R_1 f(x) ≈ E_x ∫_0^T e^{−t} f(X_t) dt` (trapezoidal in the path, exact
/// in the discount), or the Revuz functional of a surface measure.
pub fn mc_resolvent(src: &ResolventSource, x: &[f64], engine: &Engine, n: usize) -> Result<PotentialEstimate> {
    engine.check_start(x)?;
    let rows: Vec<f64> = match src {
        ResolventSource::Density { f } => {
            f.validate(x.len())?;
            engine.batch(n, |e, i| {
                let mut rng = e.rng(i);
                let mut acc = 0.0;
                let mut obs = |v: &StepView<'_>| acc += discount_weight(v) * 0.5 * (f.eval(v.pre) + f.eval(v.post));
                e.run_with(x, &mut rng, &mut obs);
                acc
            })
        }
        ResolventSource::Surface {
            interface,
            eps,
            use_ledger,
        } => {
            if *use_ledger {
                let k = engine
                    .interfaces()
                    .iter()
                    .position(|i| i.geometry == interface.geometry)
                    .ok_or_else(|| Error::InvalidConfig(format!("engine has no interface {}", interface.label())))?;
                let r = crate::localtime::revuz_discounted(engine, x, n, k)?;
                return Ok(PotentialEstimate {
                    value: r.estimate.mean,
                    error: r.estimate.ci95 + r.truncation_bound,
                    kind: PotentialKind::ResolventMc,
                    converged: true,
                    n,
                });
            }
            let eps = eps.unwrap_or(2.0 * engine.dt().sqrt());
            let min = 2.0 * engine.dt().sqrt();
            if eps < min * (1.0 - 1e-12) {
                return Err(Error::InvalidConfig(format!("band half-width {eps} is below 2 sqrt(dt) = {min}")));
            }
            let spec = engine.spec();
            let factor = interface.revuz_factor;
            // f_w = factor / (2w φ) on the band |s| < w; density of the
            // measure factor·ρσ against m = ρφ dx.
            let dens = |y: &[f64], w: f64| {
                if interface.signed_distance(y).abs() < w {
                    factor / (2.0 * w * spec.phi(y))
                } else {
                    0.0
                }
            };
            engine.batch(n, |e, i| {
                let mut rng = e.rng(i);
                let (mut a1, mut a2) = (0.0, 0.0);
                let mut obs = |v: &StepView<'_>| {
                    let w = discount_weight(v) * 0.5;
                    a1 += w * (dens(v.pre, eps) + dens(v.post, eps));
                    a2 += w * (dens(v.pre, 2.0 * eps) + dens(v.post, 2.0 * eps));
                };
                e.run_with(x, &mut rng, &mut obs);
                // Both widths carry an O(w) bias with the same constant.
                2.0 * a1 - a2
            })
        }
    };
    let mut acc = MeanAccumulator::new();
    rows.iter().for_each(|&v| acc.push(v));
    let est = acc.estimate();
    Ok(PotentialEstimate {
        value: est.mean,
        error: est.ci95,
        kind: PotentialKind::ResolventMc,
        converged: true,
        n,
    })
}

/// Measures for the smoothness check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    Zero,
    /// Lebesgue measure restricted to a domain.
    Lebesgue { domain: DomainSpec },
    /// The Revuz measure of an interface's ledger.
    Surface { interface: Interface },
}

fn measure_resolvent(mu: &MeasureSpec, x: &[f64], engine: &Engine, n: usize) -> Result<PotentialEstimate> {
    match mu {
        MeasureSpec::Zero => Ok(PotentialEstimate {
            value: 0.0,
            error: 0.0,
            kind: PotentialKind::ResolventMc,
            converged: true,
            n: 0,
        }),
        MeasureSpec::Lebesgue { domain } => {
            // Density 1_G / ψ against m.
            let spec = engine.spec().clone();
            let g = domain.clone();
            engine.check_start(x)?;
            let rows: Vec<f64> = engine.batch(n, |e, i| {
                let mut rng = e.rng(i);
                let mut acc = 0.0;
                let val = |y: &[f64]| if g.contains(y) { 1.0 / (spec.rho(y) * spec.phi(y)) } else { 0.0 };
                let mut obs = |v: &StepView<'_>| acc += discount_weight(v) * 0.5 * (val(v.pre) + val(v.post));
                e.run_with(x, &mut rng, &mut obs);
                acc
            });
            let mut acc = MeanAccumulator::new();
            rows.iter().for_each(|&v| acc.push(v));
            let est = acc.estimate();
            Ok(PotentialEstimate {
                value: est.mean,
                error: est.ci95,
                kind: PotentialKind::ResolventMc,
                converged: est.mean.is_finite(),
                n,
            })
        }
        MeasureSpec::Surface { interface } => mc_resolvent(
            &ResolventSource::Surface {
                interface: interface.clone(),
                eps: None,
                use_ledger: false,
            },
            x,
            engine,
            n,
        ),
    }
}

/// `max_x R_1μ(x) / base(x)` over `points`: the constant making `c·base` a
/// candidate bound.
pub fn fit_potential_bound(
    mu: &MeasureSpec,
    engine: &Engine,
    points: &[Vec<f64>],
    base: &(dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
) -> Result<f64> {
    let mut c = 0.0f64;
    for x in points {
        let r = measure_resolvent(mu, x, engine, n)?;
        let b = base(x);
        if b > 0.0 {
            c = c.max(r.value / b);
        }
    }
    Ok(c)
}

/// Checks `R_1(1_G μ)(x) <= r1g(x)(1 + tol)` on `points` and that `r1g` is
/// finite and Hölder continuous on `region`.
#[allow(clippy::too_many_arguments)]
pub fn s00_check(
    mu: &MeasureSpec,
    engine: &Engine,
    points: &[Vec<f64>],
    r1g: &(dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
    tol: f64,
    region: &Lattice,
    holder_target: f64,
) -> Result<CheckReport> {
    let mut parts = Vec::new();
    let mut values = Vec::new();
    for (k, x) in points.iter().enumerate() {
        let r = measure_resolvent(mu, x, engine, n)?;
        if !r.value.is_finite() {
            return Ok(CheckReport::new("s00", f64::INFINITY, tol, Comparison::AtMost)
                .with_note(format!("resolvent estimate is not finite at {x:?}")));
        }
        let bound = r1g(x);
        values.push(r.value);
        // Relative excess of the estimate over the candidate bound.
        let excess = if bound > 0.0 {
            r.value / bound - 1.0
        } else if r.value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        parts.push(
            CheckReport::new(format!("s00.point{k}"), excess, tol, Comparison::AtMost)
                .with_parameters(json!({"x": x, "estimate": r.value, "ci95": r.error, "bound": bound})),
        );
    }
    let fit = holder_probe(r1g, region, holder_target);
    let cont = match fit {
        Ok(f) => CheckReport::new("s00.continuity", f.exponent, holder_target - 0.1, Comparison::AtLeast)
            .with_constant("holder_constant", f.constant),
        Err(e) => CheckReport::new("s00.continuity", f64::NEG_INFINITY, holder_target - 0.1, Comparison::AtLeast)
            .with_note(e.to_string()),
    };
    parts.push(cont);
    Ok(CheckReport::composite("s00", parts).with_grid(points.to_vec(), values))
}

#[cfg(test)]
mod tests;
