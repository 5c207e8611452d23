//! Independent references: lognormal CF by panel quadrature, the heat kernel,
//! brute-force moments and finite-difference residuals of the diffusion PDE.
//!
//! Nothing here calls into the Wild-series or convolution solvers.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::numerics::{expm1_neg_i, ComplexSum, CompensatedSum, GaussLegendre};

/// Largest `|ξ · m|` the panel quadrature is claimed valid for.
pub const CF_VALIDITY_LIMIT: f64 = 1e3;

/// Gaussian weight is truncated at this many standard deviations.
const GAUSS_CUTOFF: f64 = 8.5;

/// Oscillations resolved by panels; beyond them the tail is taken asymptotically.
const MAX_ZEROS: f64 = 200_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMethod {
    /// Panels split at oscillation zeros and on a uniform grid, Gauss–Legendre per panel.
    AdaptiveInterval,
    /// A single Gauss–Legendre rule on the truncated Gaussian; cheap for small `|ξ|`.
    TransformedGaussianNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_refinements: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: QuadratureMethod::AdaptiveInterval,
            abs_tol: 1e-15,
            rel_tol: 1e-12,
            max_refinements: 8,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Config("quadrature tolerances must be positive".into()));
        }
        if self.max_refinements < 1 {
            return Err(Error::Config("at least one quadrature refinement is required".into()));
        }
        Ok(())
    }
}

/// Doubles the Gauss–Legendre order on every panel until two successive sums agree.
fn refine_panels<F>(panels: &[(f64, f64)], spec: &QuadratureSpec, f: F) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let sum_at = |order: usize| {
        let rule = GaussLegendre::new(order);
        let mut acc = ComplexSum::new();
        for &(a, b) in panels {
            let mut panel = ComplexSum::new();
            for (y, w) in rule.mapped(a, b) {
                panel.add(w * f(y));
            }
            acc.add(panel.value());
        }
        acc.value()
    };
    let mut order = 8;
    let mut previous = sum_at(order);
    for _ in 0..spec.max_refinements {
        order *= 2;
        let last = sum_at(order);
        let diff = (last - previous).norm();
        if diff <= spec.abs_tol + spec.rel_tol * last.norm() {
            return Ok(last);
        }
        previous = last;
    }
    let last = sum_at(order * 2);
    Err(Error::Numerical {
        message: format!(
            "quadrature did not settle after {} refinements: {previous} then {last}",
            spec.max_refinements
        ),
        previous: previous.norm(),
        last: last.norm(),
    })
}

/// CF of `(1/m) L_t(x/m)`, the lognormal of mean `m` and log-variance `2t`.
///
/// Integrates `φ(y) (e^{-iξ m e^y} − 1)` over `y ~ N(−t, 2t)` and adds one, so the
/// result stays accurate as `ξ → 0`. Negative `ξ` returns the conjugate.
pub fn lognormal_cf_quadrature(t: f64, m: f64, xi: f64, spec: &QuadratureSpec) -> Result<Complex64> {
    Ok(1.0 + lognormal_cf_minus_one(t, m, xi, spec)?)
}

/// `f̂(ξ) − 1` for the lognormal of [`lognormal_cf_quadrature`].
pub fn lognormal_cf_minus_one(t: f64, m: f64, xi: f64, spec: &QuadratureSpec) -> Result<Complex64> {
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("lognormal time must be positive, got {t}"));
    }
    if !(m > 0.0 && m.is_finite()) {
        return domain(format!("lognormal mean must be positive, got {m}"));
    }
    spec.validate()?;
    if !xi.is_finite() {
        return domain("frequency must be finite");
    }
    if xi == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if xi < 0.0 {
        return Ok(lognormal_cf_minus_one(t, m, -xi, spec)?.conj());
    }
    let a = xi * m;
    let sd = (2.0 * t).sqrt();
    let mu = -t;
    let (lo, hi) = (mu - GAUSS_CUTOFF * sd, mu + GAUSS_CUTOFF * sd);
    let norm = 1.0 / (sd * (2.0 * PI).sqrt());
    let integrand = |y: f64| {
        let z = (y - mu) / sd;
        norm * (-0.5 * z * z).exp() * expm1_neg_i(a * y.exp())
    };
    let (panels, tail) = match spec.method {
        QuadratureMethod::TransformedGaussianNodes => (vec![(lo, hi)], None),
        QuadratureMethod::AdaptiveInterval => oscillation_panels(lo, hi, sd, a),
    };
    let body = refine_panels(&panels, spec, integrand)?;
    Ok(match tail {
        Some((y_c, k)) => body + oscillatory_tail(y_c, k, mu, sd, a),
        None => body,
    })
}

/// `∫_{y_c}^∞ φ(y) (e^{-ia e^y} − 1) dy` where `a e^{y_c} = kπ`.
///
/// The constant part is a Gaussian tail; the oscillatory part is
/// `∫_{u_c}^∞ h(u) e^{-iau} du` with `h(u) = φ(ln u)/u`, expanded by two
/// integrations by parts. The next term is smaller by `O(1/(kπ))`.
fn oscillatory_tail(y_c: f64, k: f64, mu: f64, sd: f64, a: f64) -> Complex64 {
    let z = (y_c - mu) / sd;
    let mass = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    let u = y_c.exp();
    let phi = (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt());
    let h = phi / u;
    let dh = phi / (u * u) * (-z / sd - 1.0);
    let sign = if k.rem_euclid(2.0) == 0.0 { 1.0 } else { -1.0 };
    let osc = sign * (h / Complex64::new(0.0, a) - dh / (a * a));
    osc - mass
}

/// Uniform panels of width `sd/4`, further split at every zero of `sin(a e^y)`.
/// When more than [`MAX_ZEROS`] zeros fall in range the panels stop at the last
/// kept zero, returned with its index for [`oscillatory_tail`].
fn oscillation_panels(lo: f64, hi: f64, sd: f64, a: f64) -> (Vec<(f64, f64)>, Option<(f64, f64)>) {
    let k_lo = (a * lo.exp() / PI).ceil().max(1.0);
    let mut k_hi = (a * hi.exp() / PI).floor();
    let mut end = hi;
    let mut tail = None;
    if k_hi - k_lo > MAX_ZEROS {
        k_hi = k_lo + MAX_ZEROS;
        end = (k_hi * PI / a).ln();
        tail = Some((end, k_hi));
    }
    let step = 0.25 * sd;
    let uniform = ((end - lo) / step).ceil() as usize;
    let mut breaks: Vec<f64> = (0..=uniform).map(|i| (lo + i as f64 * step).min(end)).collect();
    let mut k = k_lo;
    while k <= k_hi {
        breaks.push((k * PI / a).ln());
        k += 1.0;
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let panels = breaks
        .windows(2)
        .filter(|w| w[1] > w[0] && w[1] <= end)
        .map(|w| (w[0], w[1]))
        .collect();
    (panels, tail)
}

/// Heat kernel `M_t(y) = exp(−y²/(4t)) / √(4πt)`, variance `2t`.
pub fn heat_kernel(t: f64, y: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("heat kernel time must be positive, got {t}"));
    }
    Ok((-y * y / (4.0 * t)).exp() / (4.0 * PI * t).sqrt())
}

/// `∫₀^∞ xⁿ ρ(x) dx` by Gauss–Legendre panels in `s = ln x` over `x ∈ [e^-100, e^100]`.
pub fn brute_moment<F>(density: F, n: u32, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    brute_moment_window(density, n, (-100.0, 100.0), spec)
}

/// As [`brute_moment`] on an explicit window `s ∈ [lo, hi]`, panels of width 1/2.
pub fn brute_moment_window<F>(density: F, n: u32, window: (f64, f64), spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    let (lo, hi) = window;
    if !(hi > lo) {
        return domain("empty integration window");
    }
    let panels: Vec<(f64, f64)> = {
        let count = ((hi - lo) / 0.5).ceil() as usize;
        let w = (hi - lo) / count as f64;
        (0..count).map(|i| (lo + i as f64 * w, lo + (i + 1) as f64 * w)).collect()
    };
    let power = n as f64 + 1.0;
    let value = refine_panels(&panels, spec, |s| {
        let rho = density(s.exp());
        if rho > 0.0 {
            Complex64::new((power * s + rho.ln()).exp(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })?;
    Ok(value.re)
}

/// Finite-difference residual of `∂u/∂t = ∂²(x²u)/∂x²` on a set of points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeResidual {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_abs: f64,
    /// Set when the stencil had to be made one-sided in time or shrunk in space.
    pub one_sided: bool,
}

/// Residual with time step `delta` and relative space step `h = delta · x`.
///
/// Time is differenced centrally (one-sided second order when `t − Δ ≤ 0`);
/// `∂²(x²u)/∂x²` uses the fourth-order five-point stencil.
pub fn pde_residual<F>(u: F, x_grid: &[f64], t: f64, delta: f64) -> Result<PdeResidual>
where
    F: Fn(f64, f64) -> f64,
{
    if !(delta > 0.0) {
        return domain(format!("stencil step must be positive, got {delta}"));
    }
    if x_grid.iter().any(|&x| !(x > 0.0)) {
        return domain("residual points must be positive");
    }
    let mut one_sided = false;
    let time_one_sided = t - delta <= 0.0;
    one_sided |= time_one_sided;
    let mut residual = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let du_dt = if time_one_sided {
            (-3.0 * u(x, t) + 4.0 * u(x, t + delta) - u(x, t + 2.0 * delta)) / (2.0 * delta)
        } else {
            (u(x, t + delta) - u(x, t - delta)) / (2.0 * delta)
        };
        let mut h = delta * x;
        if x - 2.0 * h <= 0.0 {
            h = 0.25 * x;
            one_sided = true;
        }
        let q = |z: f64| z * z * u(z, t);
        let d2 = (-q(x + 2.0 * h) + 16.0 * q(x + h) - 30.0 * q(x) + 16.0 * q(x - h) - q(x - 2.0 * h))
            / (12.0 * h * h);
        residual.push(du_dt - d2);
    }
    let max_abs = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(PdeResidual {
        x: x_grid.to_vec(),
        residual,
        max_abs,
        one_sided,
    })
}

/// Sum of Gauss–Legendre evaluations of a real integrand over `[a, b]`, split into
/// `panels` equal pieces. Used for the Gaussian checks.
pub fn panel_integral<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, f: F) -> f64 {
    let rule = GaussLegendre::new(order);
    let w = (b - a) / panels as f64;
    let mut acc = CompensatedSum::new();
    for i in 0..panels {
        acc.add(rule.integrate(a + i as f64 * w, a + (i + 1) as f64 * w, &f));
    }
    acc.value()
}
