//! Diffusion limit `∂u/∂t = ∂²(x²u)/∂x²` (effect variance σ = 2).
//!
//! The source solution is the lognormal
//! `L_t(x) = exp(−(ln x + t)²/(4t)) / (x √(4πt))`, of mean 1 and variance
//! `e^{2t} − 1`. A general solution is the multiplicative convolution
//! `u(x, t) = ∫ u₀(w) L_t(x/w) dw/w`, computed in `s = ln w` where the kernel is
//! Gaussian.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::cf::logspace;
use crate::error::{domain, Error, Result};
use crate::grid::GridDensity;
use crate::numerics::{least_squares_line, CompensatedSum};

/// Lognormal source profile of mean `m` at diffusion time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalSource {
    pub t: f64,
    pub m: f64,
}

impl LognormalSource {
    pub fn new(t: f64, m: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return domain(format!("source time must be positive, got {t}"));
        }
        if !(m > 0.0 && m.is_finite()) {
            return domain(format!("source mean must be positive, got {m}"));
        }
        Ok(Self { t, m })
    }

    /// `ln((1/m) L_t(x/m))`.
    pub fn ln_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return domain(format!("source density needs x > 0, got {x}"));
        }
        let z = (x / self.m).ln() + self.t;
        Ok(-z * z / (4.0 * self.t) - x.ln() - 0.5 * (4.0 * PI * self.t).ln())
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(self.ln_density(x)?.exp())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let z = ((x / self.m).ln() + self.t) / (2.0 * self.t.sqrt());
        0.5 * erfc(-z)
    }

    /// `mⁿ e^{n(n−1)t}`.
    pub fn moment(&self, n: u32) -> f64 {
        let n = n as f64;
        self.m.powf(n) * (n * (n - 1.0) * self.t).exp()
    }

    pub fn mean(&self) -> f64 {
        self.m
    }

    pub fn variance(&self) -> f64 {
        self.m * self.m * (2.0 * self.t).exp_m1()
    }

    /// Samples the density on `x` (zero where it underflows).
    pub fn on_grid(&self, x: &[f64]) -> Result<GridDensity> {
        let values = x.iter().map(|&v| self.density(v)).collect::<Result<Vec<_>>>()?;
        GridDensity::new(x.to_vec(), values, 0.0)
    }
}

/// Options for [`solve_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Allowed gap between the full rule and the rule on every other node,
    /// relative to the largest output value.
    pub rel_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9 }
    }
}

/// `u(·, t)` on `x_grid` from the initial density `initial`.
pub fn solve(initial: &GridDensity, t: f64, x_grid: &[f64]) -> Result<GridDensity> {
    solve_with(initial, t, x_grid, &SolveOptions::default())
}

/// Trapezoid rule in `s = ln w` on the nodes of `initial`:
/// `u(x) = Σ_j c_j u₀(x_j) L_t(x / x_j)`. The same sum over every other node
/// serves as the convergence check.
pub fn solve_with(initial: &GridDensity, t: f64, x_grid: &[f64], opts: &SolveOptions) -> Result<GridDensity> {
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("diffusion time must be positive, got {t}"));
    }
    if initial.atom_at_zero() != 0.0 {
        return domain("initial density must not carry an atom at zero");
    }
    if x_grid.len() < 2 || x_grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Argument("output grid needs at least two positive points".into()));
    }
    let s: Vec<f64> = initial.x().iter().map(|x| x.ln()).collect();
    let fine = trapezoid_weights(&s, 1);
    let coarse = trapezoid_weights(&s, 2);
    // c_j x_j u₀(x_j) collapses the kernel to a Gaussian in ln x − s_j
    let scaled: Vec<(f64, f64, f64, f64)> = s
        .iter()
        .zip(initial.x().iter().zip(initial.values()))
        .zip(fine.iter().zip(&coarse))
        .filter(|((_, (_, &u)), _)| u > 0.0)
        .map(|((&sj, (&xj, &u)), (&wf, &wc))| (sj, xj * u, wf, wc))
        .collect();
    let four_t = 4.0 * t;
    let norm = 1.0 / (PI * four_t).sqrt();
    let pairs: Vec<(f64, f64)> = x_grid
        .par_iter()
        .map(|&x| {
            let lx = x.ln();
            let mut full = CompensatedSum::new();
            let mut half = CompensatedSum::new();
            for &(sj, mass, wf, wc) in &scaled {
                let z = lx - sj + t;
                let e = z * z / four_t;
                if e > 745.0 {
                    continue;
                }
                let k = mass * (-e).exp();
                full.add(wf * k);
                half.add(wc * k);
            }
            (norm * full.value() / x, norm * half.value() / x)
        })
        .collect();
    let peak = pairs.iter().fold(0.0f64, |a, p| a.max(p.0));
    let (gap, at) = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.0 - p.1).abs(), i))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    if gap > opts.rel_tol * peak {
        return Err(Error::Numerical {
            message: format!(
                "convolution not resolved at t = {t}: node refinement changes u({}) by {gap:e} (peak {peak:e})",
                x_grid[at]
            ),
            previous: pairs[at].1,
            last: pairs[at].0,
        });
    }
    GridDensity::new(x_grid.to_vec(), pairs.into_iter().map(|p| p.0).collect(), 0.0)
}

/// Trapezoid weights on `s`, using only every `stride`-th node (others get 0).
fn trapezoid_weights(s: &[f64], stride: usize) -> Vec<f64> {
    let mut w = vec![0.0; s.len()];
    let mut idx: Vec<usize> = (0..s.len()).step_by(stride).collect();
    if *idx.last().unwrap() != s.len() - 1 {
        idx.push(s.len() - 1);
    }
    for pair in idx.windows(2) {
        let h = s[pair[1]] - s[pair[0]];
        w[pair[0]] += 0.5 * h;
        w[pair[1]] += 0.5 * h;
    }
    w
}

/// Log-spaced output grid wide enough for the solution from data supported on
/// `[lo, hi]` at time `t`, including the weight `x³u` of its third moment.
pub fn adapted_grid(lo: f64, hi: f64, t: f64, n: usize) -> Vec<f64> {
    let spread = 10.0 * (2.0 * t).sqrt();
    logspace(lo * (-t - spread).exp(), hi * (5.0 * t + spread).exp(), n)
}

/// Heat-frame values `v(y) = x² u(x)` at `y = ln x − t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatFrame {
    pub t: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

impl HeatFrame {
    /// `∫ v dy` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for i in 1..self.y.len() {
            acc.add(0.5 * (self.y[i] - self.y[i - 1]) * (self.v[i] + self.v[i - 1]));
        }
        acc.value()
    }
}

pub fn to_heat_frame(u: &GridDensity, t: f64) -> HeatFrame {
    HeatFrame {
        t,
        y: u.x().iter().map(|x| x.ln() - t).collect(),
        v: u.x().iter().zip(u.values()).map(|(x, v)| x * x * v).collect(),
    }
}

/// Finiteness report for the admissibility integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionReport {
    /// `∫ x (ln x)² u₀ dx`.
    pub log_second_moment: f64,
    /// `∫ x u₀ ln u₀ dx`.
    pub weighted_entropy: f64,
    pub log_second_moment_divergent: bool,
    pub entropy_divergent: bool,
    pub admissible: bool,
}

/// Evaluates both integrals on the grid and flags likely divergence. An end of
/// the grid where the integrand (per unit `ln x`) is still above `1e-10` of its
/// peak is tested by the log-log slope over its last decade: slope `≥ −1` at
/// the upper end, or `≤ −1` at the lower end, is divergent.
pub fn check_initial_conditions(u: &GridDensity) -> InitialConditionReport {
    let log2 = |x: f64, v: f64| x * x.ln().powi(2) * v;
    let ent = |x: f64, v: f64| if v > 0.0 { x * v * v.ln() } else { 0.0 };
    let log_second_moment = u.integrate(log2);
    let weighted_entropy = u.integrate(ent);
    let log_second_moment_divergent = tail_divergent(u, log2);
    let entropy_divergent = tail_divergent(u, ent);
    InitialConditionReport {
        log_second_moment,
        weighted_entropy,
        log_second_moment_divergent,
        entropy_divergent,
        admissible: !(log_second_moment_divergent || entropy_divergent)
            && log_second_moment.is_finite()
            && weighted_entropy.is_finite(),
    }
}

fn tail_divergent<G: Fn(f64, f64) -> f64>(u: &GridDensity, g: G) -> bool {
    let x = u.x();
    let per_log: Vec<f64> = x.iter().zip(u.values()).map(|(&xv, &v)| (xv * g(xv, v)).abs()).collect();
    let peak = per_log.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let live = |i: usize| per_log[i] > 1e-10 * peak;
    let (lo, hi) = (x[0], x[x.len() - 1]);
    let slope_over = |keep: &dyn Fn(f64) -> bool| -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(u.values())
            .filter(|(&xv, _)| keep(xv))
            .map(|(&xv, &v)| (xv, g(xv, v).abs()))
            .filter(|&(_, y)| y > 0.0 && y.is_finite())
            .map(|(xv, y)| (xv.ln(), y.ln()))
            .unzip();
        (xs.len() >= 3).then(|| least_squares_line(&xs, &ys).0)
    };
    let upper = live(x.len() - 1) && slope_over(&|v| v >= hi / 10.0).is_some_and(|s| s >= -1.0);
    let lower = live(0) && slope_over(&|v| v <= lo * 10.0).is_some_and(|s| s <= -1.0);
    upper || lower
}

/// Lognormal source with the same mean as `u`.
pub fn matched_source(u: &GridDensity, t: f64) -> Result<LognormalSource> {
    let m = u.mean();
    if !(m > 0.0 && m.is_finite()) {
        return domain(format!("cannot match a source to mean {m}"));
    }
    LognormalSource::new(t, m)
}

/// `∫ x |u(x) − L(x)| dx` on the grid of `u`.
pub fn weighted_l1_distance(u: &GridDensity, source: &LognormalSource) -> f64 {
    u.integrate(|x, v| {
        let l = source.density(x).unwrap_or(0.0);
        x * (v - l).abs()
    })
}

/// `∫ x |a − b| dx` for two densities on the same grid.
pub fn weighted_l1_between(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    if a.x() != b.x() {
        return Err(Error::Argument("densities live on different grids".into()));
    }
    let w = a.dx_weights();
    Ok(a.x()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .zip(w)
        .map(|((x, (u, v)), w)| w * x * (u - v).abs())
        .collect::<CompensatedSum>()
        .value())
}

/// Least-squares fit of `ln d` against `ln(1 + 2t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn convergence_rate_fit(series: &[(f64, f64)]) -> Result<RateFit> {
    if series.len() < 3 {
        return domain("a rate fit needs at least three points");
    }
    if series.iter().any(|&(t, d)| !(d > 0.0) || !(t >= 0.0)) {
        return domain("rate fit needs nonnegative times and positive distances");
    }
    let xs: Vec<f64> = series.iter().map(|&(t, _)| (1.0 + 2.0 * t).ln()).collect();
    let ys: Vec<f64> = series.iter().map(|&(_, d)| d.ln()).collect();
    let (slope, intercept, residual) = least_squares_line(&xs, &ys);
    Ok(RateFit {
        slope,
        intercept,
        residual,
    })
}

/// Summary of one solution snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionRecord {
    pub t: f64,
    pub mass: f64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub admissible: bool,
}

impl DiffusionRecord {
    pub fn of(u: &GridDensity, t: f64, admissible: bool) -> Self {
        Self {
            t,
            mass: u.mass(),
            mean: u.mean(),
            m2: u.moment(2),
            m3: u.moment(3),
            admissible,
        }
    }
}

/// Writes `t,distance` rows.
pub fn write_convergence_csv<W: Write>(series: &[(f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "t,distance")?;
    for (t, d) in series {
        writeln!(w, "{t},{d}")?;
    }
    Ok(())
}
