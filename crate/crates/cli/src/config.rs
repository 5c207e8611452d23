//! Versioned JSON experiment configuration.

use std::fs;
use std::path::Path;

use gibrat_core::cf::{linspace, logspace};
use gibrat_core::diffusion::LognormalSource;
use gibrat_core::fourier_metric::{MetricGridSpec, ThirdMomentRate};
use gibrat_core::{EffectConfig, EffectDistribution, GridDensity, InitialLaw};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::AppError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Relative tolerance override for the lognormal quadrature oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tol: Option<f64>,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Moments(MomentsConfig),
    Simulate(SimulateConfig),
    Wild(WildConfig),
    Diffuse(DiffuseConfig),
    Converge(ConvergeConfig),
    FirstOrder(FirstOrderConfig),
    Metric(MetricConfig),
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            Self::Moments(_) => "moments",
            Self::Simulate(_) => "simulate",
            Self::Wild(_) => "wild",
            Self::Diffuse(_) => "diffuse",
            Self::Converge(_) => "converge",
            Self::FirstOrder(_) => "first-order",
            Self::Metric(_) => "metric",
        }
    }
}

/// Frequencies `[min, max]` with `points` samples, log- or linearly spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl XiGrid {
    pub fn values(&self) -> Result<Vec<f64>, AppError> {
        if self.points < 2 || !(self.max > self.min) || (self.log && !(self.min > 0.0)) {
            return Err(AppError::Config(format!("invalid frequency grid {self:?}")));
        }
        Ok(if self.log {
            logspace(self.min, self.max, self.points)
        } else {
            linspace(self.min, self.max, self.points)
        })
    }
}

/// Log-spaced spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self) -> Result<Vec<f64>, AppError> {
        if self.points < 3 || !(self.x_min > 0.0 && self.x_max > self.x_min) {
            return Err(AppError::Config(format!("invalid spatial grid {self:?}")));
        }
        Ok(logspace(self.x_min, self.x_max, self.points))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalComponent {
    pub weight: f64,
    pub t0: f64,
    pub m: f64,
}

/// Initial density for the grid-based commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Weighted sum of lognormal source profiles.
    LognormalMixture { components: Vec<LognormalComponent>, grid: LogGrid },
    /// Density values on increasing positive nodes, normalized to unit mass.
    /// The solver needs the data to be smooth on the node spacing.
    Tabulated { x: Vec<f64>, density: Vec<f64> },
}

impl DensitySpec {
    /// Smallest and largest node.
    pub fn bounds(&self) -> Result<(f64, f64), AppError> {
        match self {
            Self::LognormalMixture { grid, .. } => Ok((grid.x_min, grid.x_max)),
            Self::Tabulated { x, .. } => match (x.first(), x.last()) {
                (Some(&a), Some(&b)) if x.len() >= 3 => Ok((a, b)),
                _ => Err(AppError::Config("tabulated density needs at least three nodes".into())),
            },
        }
    }

    pub fn build(&self) -> Result<GridDensity, AppError> {
        match self {
            Self::LognormalMixture { components, grid } => {
                let x = grid.values()?;
                if components.is_empty() {
                    return Err(AppError::Config("mixture needs at least one component".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return Err(AppError::Config("mixture weights must be positive and sum to 1".into()));
                }
                let sources = components
                    .iter()
                    .map(|c| LognormalSource::new(c.t0, c.m).map(|s| (c.weight, s)))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(GridDensity::sample_on(&x, |v| {
                    sources.iter().map(|(w, s)| w * s.density(v).unwrap_or(0.0)).sum()
                })?)
            }
            Self::Tabulated { x, density } => {
                self.bounds()?;
                let raw = GridDensity::new(x.clone(), density.clone(), 0.0)?;
                let mass = raw.continuous_mass();
                if !(mass > 0.0 && mass.is_finite()) {
                    return Err(AppError::Config(format!("tabulated density has mass {mass}")));
                }
                Ok(GridDensity::new(x.clone(), density.iter().map(|v| v / mass).collect(), 0.0)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    pub effect: EffectConfig,
    pub initial: InitialLaw,
    pub particles: usize,
    #[serde(default = "one")]
    pub frequency: f64,
    pub times: Vec<f64>,
    pub orders: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub effect: EffectConfig,
    pub initial: InitialLaw,
    pub particles: usize,
    #[serde(default = "one")]
    pub frequency: f64,
    pub tau: f64,
    pub xi: XiGrid,
    pub histogram: LogGrid,
    /// Also write the raw sizes.
    #[serde(default)]
    pub export_sizes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WildConfig {
    pub t: f64,
    pub epsilons: Vec<f64>,
    pub xi: XiGrid,
    pub tail_tol: f64,
    pub metric: MetricGridSpec,
    #[serde(default)]
    pub third_moment_rate: ThirdMomentRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffuseConfig {
    pub initial: DensitySpec,
    pub times: Vec<f64>,
    pub output_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub initial: DensitySpec,
    pub times: Vec<f64>,
    pub output_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderConfig {
    pub initial: DensitySpec,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub t: f64,
    pub epsilons: Vec<f64>,
    pub s: f64,
    pub tail_tol: f64,
    pub grid: MetricGridSpec,
    #[serde(default)]
    pub third_moment_rate: ThirdMomentRate,
    /// Also evaluate on the doubled grid.
    #[serde(default)]
    pub refine: bool,
}

fn one() -> f64 {
    1.0
}

fn bimodal(grid: LogGrid) -> DensitySpec {
    DensitySpec::LognormalMixture {
        components: vec![
            LognormalComponent {
                weight: 0.5,
                t0: 0.05,
                m: 0.25,
            },
            LognormalComponent {
                weight: 0.5,
                t0: 0.05,
                m: 4.0,
            },
        ],
        grid,
    }
}

const DESK_GRID: LogGrid = LogGrid {
    x_min: 1e-3,
    x_max: 1e3,
    points: 2048,
};

impl ExperimentConfig {
    /// Desk-scale defaults for a subcommand name.
    pub fn default_for(command: &str) -> Result<Self, AppError> {
        let symmetric = |eps| EffectDistribution::symmetric_two_point(eps).map(|d| d.to_config());
        let run = match command {
            "moments" => RunConfig::Moments(MomentsConfig {
                effect: EffectDistribution::two_point_first_order(0.1)?.to_config(),
                initial: InitialLaw::Dirac { x0: 1.0 },
                particles: 100_000,
                frequency: 1.0,
                times: linspace(0.0, 5.0, 11),
                orders: vec![0, 1, 2, 3],
            }),
            "simulate" => RunConfig::Simulate(SimulateConfig {
                effect: symmetric(0.01)?,
                initial: InitialLaw::Dirac { x0: 1.0 },
                particles: 100_000,
                frequency: 1.0,
                tau: 10.0,
                xi: XiGrid {
                    min: -10.0,
                    max: 10.0,
                    points: 41,
                    log: false,
                },
                histogram: LogGrid {
                    x_min: 1e-2,
                    x_max: 1e2,
                    points: 81,
                },
                export_sizes: false,
            }),
            "wild" => RunConfig::Wild(WildConfig {
                t: 0.5,
                epsilons: vec![1e-2, 1e-3, 1e-4],
                xi: XiGrid {
                    min: 0.1,
                    max: 10.0,
                    points: 41,
                    log: true,
                },
                tail_tol: 1e-14,
                metric: MetricGridSpec::default(),
                third_moment_rate: ThirdMomentRate::default(),
            }),
            "diffuse" => RunConfig::Diffuse(DiffuseConfig {
                initial: bimodal(DESK_GRID),
                times: vec![0.5, 1.0, 2.0],
                output_points: 2048,
            }),
            "converge" => RunConfig::Converge(ConvergeConfig {
                initial: bimodal(DESK_GRID),
                times: vec![1.0, 2.0, 4.0, 8.0, 16.0],
                output_points: 4096,
            }),
            "first-order" => RunConfig::FirstOrder(FirstOrderConfig {
                initial: DensitySpec::LognormalMixture {
                    components: vec![LognormalComponent {
                        weight: 1.0,
                        t0: 0.1,
                        m: 1.0,
                    }],
                    grid: LogGrid {
                        x_min: 1e-4,
                        x_max: 1e4,
                        points: 2048,
                    },
                },
                times: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            }),
            "metric" => RunConfig::Metric(MetricConfig {
                t: 0.5,
                epsilons: vec![1e-2, 1e-3],
                s: 3.0,
                tail_tol: 1e-14,
                grid: MetricGridSpec::default(),
                third_moment_rate: ThirdMomentRate::default(),
                refine: true,
            }),
            other => return Err(AppError::Config(format!("unknown command {other:?}"))),
        };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            oracle_tol: None,
            run,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            AppError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(AppError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical serialization; the hash and the replay file both use it.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMMANDS: [&str; 7] = ["moments", "simulate", "wild", "diffuse", "converge", "first-order", "metric"];

    #[test]
    fn defaults_round_trip() {
        for c in COMMANDS {
            let cfg = ExperimentConfig::default_for(c).unwrap();
            assert_eq!(cfg.run.command(), c);
            let back = ExperimentConfig::from_json(&cfg.canonical_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let cfg = ExperimentConfig::default_for("moments").unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.canonical_json()).unwrap();
        v["run"]["particels"] = 10.into();
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(AppError::Config(_))));
        let mut v: serde_json::Value = serde_json::from_str(&cfg.canonical_json()).unwrap();
        v["colour"] = "red".into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&cfg.canonical_json()).unwrap();
        v["schema_version"] = 2.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        assert!(ExperimentConfig::default_for("nope").is_err());
    }

    #[test]
    fn parse_errors_carry_positions() {
        match ExperimentConfig::from_json("{\n  \"schema_version\": 1,\n  oops\n}") {
            Err(AppError::Config(m)) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_changes_hash() {
        let a = ExperimentConfig::default_for("simulate").unwrap();
        let b = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn density_specs() {
        let x = logspace(0.1, 10.0, 200);
        let tab = DensitySpec::Tabulated {
            density: x.iter().map(|v| 3.0 * (-(v.ln()).powi(2)).exp()).collect(),
            x,
        };
        assert!((tab.build().unwrap().mass() - 1.0).abs() < 1e-12);
        assert!(DensitySpec::Tabulated {
            x: vec![1.0, 2.0],
            density: vec![1.0, 1.0]
        }
        .build()
        .is_err());
        let bad = DensitySpec::LognormalMixture {
            components: vec![LognormalComponent {
                weight: 0.7,
                t0: 0.1,
                m: 1.0,
            }],
            grid: DESK_GRID,
        };
        assert!(bad.build().is_err());
    }
}
