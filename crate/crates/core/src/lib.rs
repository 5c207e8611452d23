//! Kinetic and mean-field models of proportionate (Gibrat-type) growth.
//!
//! A firm of size `x` interacting with its background jumps to `x(1 + η)`,
//! with `η` a centered random effect. This crate provides
//!
//! * [`effects`]: the discrete laws for `η` and their moment growth rates,
//! * [`kinetic_mc`]: event-exact Monte Carlo of the linear kinetic equation,
//! * [`wild_series`]: the Wild-sum solution in Fourier space and the resulting
//!   approximation of the lognormal characteristic function,
//! * [`first_order`]: the closed-form transport limit (winner-takes-all mixture),
//! * [`diffusion`]: the lognormal source solution of `∂u/∂t = ∂²(x²u)/∂x²`,
//!   the general solution by multiplicative convolution and large-time diagnostics,
//! * [`fourier_metric`]: the Fourier distance `d_s` and the explicit
//!   kinetic-to-diffusion error bound,
//! * [`reference_oracles`]: independent quadrature and stencil references.

pub mod cf;
pub mod diffusion;
pub mod effects;
pub mod error;
pub mod first_order;
pub mod fourier_metric;
pub mod grid;
pub mod kinetic_mc;
pub mod numerics;
pub mod reference_oracles;
pub mod wild_series;

pub use cf::{CfSource, CharacteristicFn, CharacteristicFunctionGrid, DiracCf, FnCf};
pub use effects::{EffectConfig, EffectDistribution, EffectKind};
pub use error::{Error, Result};
pub use grid::GridDensity;
pub use kinetic_mc::{init_ensemble, InitialLaw, ParticleEnsemble};
