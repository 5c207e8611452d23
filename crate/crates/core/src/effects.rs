//! The random multiplicative effect `η` of a single interaction `x → x(1 + η)`.
//!
//! Effects are finite discrete laws, so every moment is an exact weighted sum.
//! All public constructors produce centered laws supported in `(-1, ∞)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::{compensated_sum, CompensatedSum};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const CENTERING_TOL: f64 = 1e-12;

/// Which family an effect was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// `ε` with probability `1 − ε`, `ε − 1` with probability `ε` (rare collapse).
    TwoPointFirstOrder,
    /// `±√(2ε)` with probability `1/2` each.
    SymmetricTwoPoint,
    /// `√ε · X` for a centered discrete `X` supported in `(-1, γ)`.
    ScaledBounded {
        base_points: Vec<f64>,
        base_weights: Vec<f64>,
    },
    /// Arbitrary atoms; only reachable from inside the crate (tests).
    Raw,
}

/// Flat config record `{kind, epsilon, points, weights}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectConfig {
    pub kind: EffectConfigKind,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectConfigKind {
    TwoPointFirstOrder,
    SymmetricTwoPoint,
    ScaledBounded,
}

/// A centered discrete law for `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EffectConfig", try_from = "EffectConfig")]
pub struct EffectDistribution {
    kind: EffectKind,
    epsilon: f64,
    values: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    centered: bool,
}

fn check_scale(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return domain(format!("scale epsilon must lie in (0, 1), got {epsilon}"));
    }
    Ok(())
}

impl EffectDistribution {
    fn from_parts(kind: EffectKind, epsilon: f64, values: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut acc = CompensatedSum::new();
        let cumulative = weights
            .iter()
            .map(|&w| {
                acc.add(w);
                acc.value()
            })
            .collect();
        let centered = !matches!(kind, EffectKind::Raw);
        Self {
            kind,
            epsilon,
            values,
            weights,
            cumulative,
            centered,
        }
    }

    /// Rare-collapse effect used for the transport limit.
    pub fn two_point_first_order(epsilon: f64) -> Result<Self> {
        check_scale(epsilon)?;
        Ok(Self::from_parts(
            EffectKind::TwoPointFirstOrder,
            epsilon,
            vec![epsilon, epsilon - 1.0],
            vec![1.0 - epsilon, epsilon],
        ))
    }

    /// Symmetric effect `±√(2ε)`, requires `ε < 1/2` so that `1 + η > 0`.
    pub fn symmetric_two_point(epsilon: f64) -> Result<Self> {
        check_scale(epsilon)?;
        if epsilon >= 0.5 {
            return domain(format!(
                "symmetric effect needs epsilon < 1/2 so that -sqrt(2 epsilon) > -1, got {epsilon}"
            ));
        }
        let a = (2.0 * epsilon).sqrt();
        Ok(Self::from_parts(
            EffectKind::SymmetricTwoPoint,
            epsilon,
            vec![-a, a],
            vec![0.5, 0.5],
        ))
    }

    /// `η = √ε · X` where `X` has the given atoms. Non-centered bases are
    /// rejected rather than re-centered.
    pub fn scaled_bounded(base_points: &[f64], base_weights: &[f64], epsilon: f64) -> Result<Self> {
        check_scale(epsilon)?;
        if base_points.is_empty() || base_points.len() != base_weights.len() {
            return Err(Error::Config(format!(
                "base law needs matching non-empty points/weights, got {} points and {} weights",
                base_points.len(),
                base_weights.len()
            )));
        }
        if base_weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return domain("base weights must be finite and nonnegative");
        }
        if base_points.iter().any(|p| !p.is_finite()) {
            return domain("base points must be finite");
        }
        let total = compensated_sum(base_weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return domain(format!("base weights must sum to 1, got {total}"));
        }
        if let Some(&p) = base_points.iter().find(|&&p| p <= -1.0) {
            return domain(format!("base point {p} is not above -1"));
        }
        let mean = compensated_sum(base_points.iter().zip(base_weights).map(|(x, w)| x * w));
        if mean.abs() > CENTERING_TOL {
            return domain(format!("base law is not centered: first moment {mean:e}"));
        }
        let scale = epsilon.sqrt();
        let min = base_points.iter().copied().fold(f64::INFINITY, f64::min);
        if scale * min <= -1.0 {
            return domain(format!(
                "sqrt(epsilon) * min(X) = {} reaches -1; firm sizes would not stay positive",
                scale * min
            ));
        }
        Ok(Self::from_parts(
            EffectKind::ScaledBounded {
                base_points: base_points.to_vec(),
                base_weights: base_weights.to_vec(),
            },
            epsilon,
            base_points.iter().map(|x| scale * x).collect(),
            base_weights.to_vec(),
        ))
    }

    /// Arbitrary atoms with no centering check. Used to probe the simulator with
    /// non-centered or constant effects.
    #[allow(dead_code)]
    pub(crate) fn from_atoms_unchecked(values: Vec<f64>, weights: Vec<f64>) -> Self {
        Self::from_parts(EffectKind::Raw, 0.0, values, weights)
    }

    pub fn kind(&self) -> &EffectKind {
        &self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(value, weight)` pairs.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    /// `⟨η^n⟩`.
    pub fn moment(&self, n: u32) -> f64 {
        if n == 0 {
            return 1.0;
        }
        compensated_sum(self.atoms().map(|(v, w)| w * v.powi(n as i32)))
    }

    /// Moment growth rate `λ_n = λ⟨(1+η)^n − 1⟩`, evaluated through the binomial
    /// expansion `λ Σ_{k≥2} C(n,k)⟨η^k⟩` so that `λ_0 = λ_1 = 0` exactly.
    pub fn growth_rate(&self, frequency: f64, n: u32) -> f64 {
        let first = if self.centered { 2 } else { 1 };
        let mut acc = CompensatedSum::new();
        let mut binom = 1.0;
        for k in 1..=n {
            binom *= (n - k + 1) as f64 / k as f64;
            if k >= first {
                acc.add(binom * self.moment(k));
            }
        }
        frequency * acc.value()
    }

    /// One draw of `η`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.values[idx.min(self.values.len() - 1)]
    }

    /// Multipliers `1 + η` and their weights, in atom order.
    pub fn multipliers(&self) -> Vec<(f64, f64)> {
        self.atoms().map(|(v, w)| (1.0 + v, w)).collect()
    }

    pub fn to_config(&self) -> EffectConfig {
        let (kind, points, weights) = match &self.kind {
            EffectKind::TwoPointFirstOrder => (EffectConfigKind::TwoPointFirstOrder, vec![], vec![]),
            EffectKind::SymmetricTwoPoint => (EffectConfigKind::SymmetricTwoPoint, vec![], vec![]),
            EffectKind::ScaledBounded {
                base_points,
                base_weights,
            } => (
                EffectConfigKind::ScaledBounded,
                base_points.clone(),
                base_weights.clone(),
            ),
            EffectKind::Raw => (
                EffectConfigKind::ScaledBounded,
                self.values.clone(),
                self.weights.clone(),
            ),
        };
        EffectConfig {
            kind,
            epsilon: self.epsilon,
            points,
            weights,
        }
    }
}

impl TryFrom<EffectConfig> for EffectDistribution {
    type Error = Error;

    fn try_from(cfg: EffectConfig) -> Result<Self> {
        match cfg.kind {
            EffectConfigKind::TwoPointFirstOrder | EffectConfigKind::SymmetricTwoPoint
                if !cfg.points.is_empty() || !cfg.weights.is_empty() =>
            {
                Err(Error::Config(
                    "points/weights are only accepted for kind scaled_bounded".into(),
                ))
            }
            EffectConfigKind::TwoPointFirstOrder => Self::two_point_first_order(cfg.epsilon),
            EffectConfigKind::SymmetricTwoPoint => Self::symmetric_two_point(cfg.epsilon),
            EffectConfigKind::ScaledBounded => {
                Self::scaled_bounded(&cfg.points, &cfg.weights, cfg.epsilon)
            }
        }
    }
}

impl From<EffectDistribution> for EffectConfig {
    fn from(d: EffectDistribution) -> Self {
        d.to_config()
    }
}
