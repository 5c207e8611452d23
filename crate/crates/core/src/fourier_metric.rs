//! Fourier distance `d_s(f, g) = sup_{ξ≠0} |f̂(ξ) − ĝ(ξ)| / |ξ|^s` and the
//! explicit kinetic-to-diffusion error bound.
//!
//! On a finite grid the sup is only a lower bound; [`refinement`] reports how
//! much it moves when the grid density doubles.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf::{logspace, symmetric_grid, CharacteristicFn, CharacteristicFunctionGrid};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricGridSpec {
    pub xi_min: f64,
    pub xi_max: f64,
    pub points_per_decade: usize,
    pub symmetric: bool,
}

impl Default for MetricGridSpec {
    fn default() -> Self {
        Self {
            xi_min: 1e-3,
            xi_max: 1e2,
            points_per_decade: 64,
            symmetric: true,
        }
    }
}

impl MetricGridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_min > 0.0 && self.xi_max > self.xi_min && self.xi_max.is_finite()) {
            return Err(Error::Config(format!(
                "metric grid needs 0 < xi_min < xi_max, got [{}, {}]",
                self.xi_min, self.xi_max
            )));
        }
        if self.points_per_decade == 0 {
            return Err(Error::Config("points_per_decade must be positive".into()));
        }
        Ok(())
    }

    /// Log-spaced frequencies, mirrored to negative values when `symmetric`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let decades = (self.xi_max / self.xi_min).log10();
        let intervals = ((decades * self.points_per_decade as f64).round() as usize).max(1);
        let positive = logspace(self.xi_min, self.xi_max, intervals + 1);
        Ok(if self.symmetric {
            symmetric_grid(&positive)
        } else {
            positive
        })
    }

    /// Same range at twice the density.
    pub fn refined(&self) -> Self {
        Self {
            points_per_decade: 2 * self.points_per_decade,
            ..*self
        }
    }
}

/// A grid-restricted `d_s` value and where it was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub argmax_xi: f64,
}

fn sup_ratio(xi: &[f64], diffs: impl Iterator<Item = f64>, s: f64) -> MetricValue {
    xi.iter()
        .zip(diffs)
        .filter(|(x, _)| **x != 0.0)
        .map(|(&x, d)| MetricValue {
            value: d / x.abs().powf(s),
            argmax_xi: x,
        })
        .fold(
            MetricValue {
                value: 0.0,
                argmax_xi: f64::NAN,
            },
            |best, c| if c.value > best.value || best.argmax_xi.is_nan() { c } else { best },
        )
}

/// `d_s` between two CFs sampled on the grid of `spec`.
pub fn d_s(
    f: &CharacteristicFunctionGrid,
    g: &CharacteristicFunctionGrid,
    s: f64,
    spec: &MetricGridSpec,
) -> Result<MetricValue> {
    if !f.same_grid(g) {
        return Err(Error::Argument("CF grids differ".into()));
    }
    let expected = spec.grid()?;
    if f.xi.len() != expected.len() || f.xi.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
        return Err(Error::Argument("CF grid does not match the metric grid spec".into()));
    }
    Ok(sup_ratio(
        &f.xi,
        f.values.iter().zip(&g.values).map(|(a, b)| (a - b).norm()),
        s,
    ))
}

/// `d_s` between two CFs evaluated directly on the grid of `spec`, forming
/// `(f̂ − 1) − (ĝ − 1)` to avoid cancellation near the origin.
pub fn d_s_of<F, G>(f: &F, g: &G, s: f64, spec: &MetricGridSpec) -> Result<MetricValue>
where
    F: CharacteristicFn + ?Sized,
    G: CharacteristicFn + ?Sized,
{
    let xi = spec.grid()?;
    let diffs: Vec<f64> = xi
        .par_iter()
        .map(|&x| (f.eval_minus_one(x) - g.eval_minus_one(x)).norm())
        .collect();
    Ok(sup_ratio(&xi, diffs.into_iter(), s))
}

/// `d_s` on the spec grid and on the doubled grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub coarse: MetricValue,
    pub fine: MetricValue,
    pub relative_change: f64,
}

pub fn refinement<F, G>(f: &F, g: &G, s: f64, spec: &MetricGridSpec) -> Result<Refinement>
where
    F: CharacteristicFn + ?Sized,
    G: CharacteristicFn + ?Sized,
{
    let coarse = d_s_of(f, g, s, spec)?;
    let fine = d_s_of(f, g, s, &spec.refined())?;
    let relative_change = if coarse.value > 0.0 {
        (fine.value - coarse.value) / coarse.value
    } else {
        fine.value
    };
    Ok(Refinement {
        coarse,
        fine,
        relative_change,
    })
}

/// Exponent used for the growth of the third moment inside the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThirdMomentRate {
    ThreeSigma,
    #[default]
    SixSigma,
}

impl ThirdMomentRate {
    pub fn value(self, sigma: f64) -> f64 {
        match self {
            Self::ThreeSigma => 3.0 * sigma,
            Self::SixSigma => 6.0 * sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub epsilon: f64,
    /// Second moment of the unscaled effect.
    pub sigma: f64,
    /// Third moment of the unscaled effect.
    pub x3: f64,
    /// Third moment of the initial datum.
    pub m3: f64,
    pub t: f64,
    #[serde(default)]
    pub third_moment_rate: ThirdMomentRate,
}

impl BoundParams {
    /// Parameters for the symmetric `±√(2ε)` effect (σ = 2, ⟨X³⟩ = 0).
    pub fn symmetric(epsilon: f64, m3: f64, t: f64) -> Self {
        Self {
            epsilon,
            sigma: 2.0,
            x3: 0.0,
            m3,
            t,
            third_moment_rate: ThirdMomentRate::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.sigma > 0.0 && self.t >= 0.0 && self.m3 >= 0.0) {
            return domain("bound needs ε > 0, σ > 0, t ≥ 0 and m3 ≥ 0");
        }
        if 3.0 * self.sigma - self.x3 * self.epsilon.sqrt() <= 0.0 {
            return domain(format!(
                "3σ − ⟨X³⟩√ε is not positive at ε = {}; use a smaller ε",
                self.epsilon
            ));
        }
        Ok(())
    }
}

/// `√ε · A_ε(t) · exp((3σ + ⟨X³⟩√ε) t)` with
/// `A_ε(t) = m₃ ∫₀ᵗ e^{(r − 3σ − ⟨X³⟩√ε) s} ds` for third-moment rate `r`.
/// For `r = 6σ` this is `m₃ (e^{(3σ − ⟨X³⟩√ε)t} − 1) / (3σ − ⟨X³⟩√ε)`.
pub fn error_bound(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    let root = p.epsilon.sqrt();
    let growth = 3.0 * p.sigma + p.x3 * root;
    let kappa = p.third_moment_rate.value(p.sigma) - growth;
    let a = if kappa == 0.0 {
        p.m3 * p.t
    } else {
        p.m3 * (kappa * p.t).exp_m1() / kappa
    };
    Ok(root * a * (growth * p.t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub measured: f64,
    pub argmax_xi: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// `measured / √ε`, for tracking the rate across an ε sweep.
    pub scaled: f64,
}

/// `d₃` between the kinetic and diffusion CFs against the explicit bound.
pub fn verify_bound(
    kinetic: &CharacteristicFunctionGrid,
    diffusion: &CharacteristicFunctionGrid,
    p: &BoundParams,
    spec: &MetricGridSpec,
) -> Result<BoundCheck> {
    let m = d_s(kinetic, diffusion, 3.0, spec)?;
    Ok(check_against_bound(m, p)?)
}

/// As [`verify_bound`] for directly evaluable CFs.
pub fn verify_bound_of<F, G>(kinetic: &F, diffusion: &G, p: &BoundParams, spec: &MetricGridSpec) -> Result<BoundCheck>
where
    F: CharacteristicFn + ?Sized,
    G: CharacteristicFn + ?Sized,
{
    check_against_bound(d_s_of(kinetic, diffusion, 3.0, spec)?, p)
}

fn check_against_bound(m: MetricValue, p: &BoundParams) -> Result<BoundCheck> {
    let bound = error_bound(p)?;
    Ok(BoundCheck {
        measured: m.value,
        argmax_xi: m.argmax_xi,
        bound,
        satisfied: m.value <= bound,
        scaled: m.value / p.epsilon.sqrt(),
    })
}

/// JSON report of one metric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub s: f64,
    pub grid: MetricGridSpec,
    pub measured: f64,
    pub argmax_xi: f64,
    pub bound: Option<f64>,
    pub params: Option<BoundParams>,
    pub satisfied: Option<bool>,
}

/// Difference of two CFs at a point, exposed for diagnostics.
pub fn cf_gap<F, G>(f: &F, g: &G, xi: f64) -> Complex64
where
    F: CharacteristicFn + ?Sized,
    G: CharacteristicFn + ?Sized,
{
    f.eval_minus_one(xi) - g.eval_minus_one(xi)
}
