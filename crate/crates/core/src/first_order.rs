//! First-order (transport) limit: rare collapses to zero balanced by steady
//! growth. The law at time `t` is the mixture
//!
//! ```text
//! g(x, t) = (1 − e^{-t}) δ(x) + e^{-2t} g₀(x e^{-t}),
//! ĝ(ξ, t) = 1 − e^{-t} + e^{-t} ĝ₀(ξ e^{t}).
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cf::CharacteristicFn;
use crate::error::{domain, Result};
pub use crate::grid::GridDensity;

/// `ĝ(ξ, t)` for initial CF `initial`; exactly 1 at `ξ = 0`. `t` must be nonnegative.
pub fn cf_solution<C: CharacteristicFn + ?Sized>(initial: &C, t: f64, xi: f64) -> Complex64 {
    1.0 + cf_solution_minus_one(initial, t, xi)
}

fn cf_solution_minus_one<C: CharacteristicFn + ?Sized>(initial: &C, t: f64, xi: f64) -> Complex64 {
    if xi == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    (-t).exp() * initial.eval_minus_one(xi * t.exp())
}

/// The first-order solution at a fixed time, usable wherever a CF is expected.
pub struct FirstOrderCf<'a, C: ?Sized> {
    pub initial: &'a C,
    pub t: f64,
}

impl<C: CharacteristicFn + ?Sized> CharacteristicFn for FirstOrderCf<'_, C> {
    fn eval(&self, xi: f64) -> Complex64 {
        cf_solution(self.initial, self.t, xi)
    }

    fn eval_minus_one(&self, xi: f64) -> Complex64 {
        cf_solution_minus_one(self.initial, self.t, xi)
    }
}

/// Mixture density at time `t`.
///
/// The continuous part is carried on the dilated grid `x_i e^{t}` with values
/// `e^{-2t} g₀(x_i)`, which is exact; use [`GridDensity::resample`] to move it
/// onto a fixed grid.
pub fn density_solution(initial: &GridDensity, t: f64) -> Result<GridDensity> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("time must be finite and nonnegative, got {t}"));
    }
    if initial.atom_at_zero() != 0.0 {
        return domain("initial density must not carry an atom at zero");
    }
    let stretch = t.exp();
    let damp = (-2.0 * t).exp();
    GridDensity::new(
        initial.x().iter().map(|x| x * stretch).collect(),
        initial.values().iter().map(|v| v * damp).collect(),
        -(-t).exp_m1(),
    )
}

/// `m_n(t) = m_n(0) e^{(n−1)t}` for `n ≥ 1`; total mass (`n = 0`) is conserved.
pub fn moment_law(initial_moment: f64, n: u32, t: f64) -> f64 {
    if n == 0 {
        return initial_moment;
    }
    initial_moment * ((n as f64 - 1.0) * t).exp()
}

/// Centered residual of `∂ĝ/∂t = 1 − ĝ + ξ ∂ĝ/∂ξ` with steps `h` in both variables.
pub fn transport_residual<F>(g: F, xi: f64, t: f64, h: f64) -> Complex64
where
    F: Fn(f64, f64) -> Complex64,
{
    let dt = (g(xi, t + h) - g(xi, t - h)) / (2.0 * h);
    let dxi = (g(xi + h, t) - g(xi - h, t)) / (2.0 * h);
    dt - (1.0 - g(xi, t) + xi * dxi)
}

/// Summary of one first-order snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderRecord {
    pub t: f64,
    pub atom_at_zero: f64,
    pub mean: f64,
    pub m2: f64,
}

impl FirstOrderRecord {
    pub fn of(density: &GridDensity, t: f64) -> Self {
        Self {
            t,
            atom_at_zero: density.atom_at_zero(),
            mean: density.mean(),
            m2: density.moment(2),
        }
    }
}
