//! Densities tabulated on positive, log-spaced grids, with an optional point
//! mass at `x = 0`.
//!
//! Integrals are taken with the trapezoid rule in `s = ln x`, where smooth
//! densities that decay at both ends of the grid integrate spectrally.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cf::{logspace, CfSource, CharacteristicFn, CharacteristicFunctionGrid};
use crate::error::{Error, Result};
use crate::numerics::{CompensatedSum, ComplexSum};

/// Density values on a positive grid plus an atom at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    x: Vec<f64>,
    values: Vec<f64>,
    atom_at_zero: f64,
}

impl GridDensity {
    pub fn new(x: Vec<f64>, values: Vec<f64>, atom_at_zero: f64) -> Result<Self> {
        if x.len() != values.len() {
            return Err(Error::Argument(format!(
                "{} grid points but {} values",
                x.len(),
                values.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::Argument("a grid density needs at least two points".into()));
        }
        if !(x[0] > 0.0) || x.windows(2).any(|w| !(w[1] > w[0])) || !x[x.len() - 1].is_finite() {
            return Err(Error::Argument(
                "grid points must be positive, finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("density values must be finite and nonnegative".into()));
        }
        if !(atom_at_zero >= 0.0 && atom_at_zero <= 1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "atom at zero must lie in [0, 1], got {atom_at_zero}"
            )));
        }
        Ok(Self {
            x,
            values,
            atom_at_zero,
        })
    }

    /// Samples `f` on `n` log-spaced points between `x_min` and `x_max`.
    pub fn from_fn<F: Fn(f64) -> f64>(x_min: f64, x_max: f64, n: usize, f: F) -> Result<Self> {
        let x = logspace(x_min, x_max, n);
        let values = x.iter().map(|&v| f(v)).collect();
        Self::new(x, values, 0.0)
    }

    /// Samples `f` on the given grid.
    pub fn sample_on<F: Fn(f64) -> f64>(x: &[f64], f: F) -> Result<Self> {
        Self::new(x.to_vec(), x.iter().map(|&v| f(v)).collect(), 0.0)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn atom_at_zero(&self) -> f64 {
        self.atom_at_zero
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn with_atom(mut self, atom_at_zero: f64) -> Self {
        self.atom_at_zero = atom_at_zero;
        self
    }

    /// Trapezoid weights in `s = ln x`, multiplied by `x` (so `Σ w_i u_i ≈ ∫ u dx`).
    pub fn dx_weights(&self) -> Vec<f64> {
        let n = self.x.len();
        let s: Vec<f64> = self.x.iter().map(|v| v.ln()).collect();
        (0..n)
            .map(|i| {
                let left = if i > 0 { s[i] - s[i - 1] } else { 0.0 };
                let right = if i + 1 < n { s[i + 1] - s[i] } else { 0.0 };
                0.5 * (left + right) * self.x[i]
            })
            .collect()
    }

    /// `∫ g(x, u(x)) dx` over the grid (the atom is not included).
    pub fn integrate<G: Fn(f64, f64) -> f64>(&self, g: G) -> f64 {
        let mut acc = CompensatedSum::new();
        for ((&x, &u), w) in self.x.iter().zip(&self.values).zip(self.dx_weights()) {
            acc.add(w * g(x, u));
        }
        acc.value()
    }

    /// Mass of the absolutely continuous part.
    pub fn continuous_mass(&self) -> f64 {
        self.integrate(|_, u| u)
    }

    /// Total mass including the atom.
    pub fn mass(&self) -> f64 {
        self.atom_at_zero + self.continuous_mass()
    }

    /// `∫ x^n g(x) dx`; the atom contributes only to `n = 0`.
    pub fn moment(&self, n: u32) -> f64 {
        if n == 0 {
            return self.mass();
        }
        self.integrate(|x, u| x.powi(n as i32) * u)
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Positive, log-linear interpolation; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.x.len();
        if !(x >= self.x[0] && x <= self.x[n - 1]) {
            return 0.0;
        }
        let i = self.x.partition_point(|&g| g <= x);
        if i == 0 {
            return self.values[0];
        }
        if i >= n {
            return self.values[n - 1];
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let (u0, u1) = (self.values[i - 1], self.values[i]);
        let r = (x / x0).ln() / (x1 / x0).ln();
        if u0 > 0.0 && u1 > 0.0 {
            (u0.ln() + r * (u1 / u0).ln()).exp()
        } else {
            u0 + r * (u1 - u0)
        }
    }

    /// Re-grids onto `x` by monotone (log-linear) interpolation.
    pub fn resample(&self, x: &[f64]) -> Result<Self> {
        Self::new(
            x.to_vec(),
            x.iter().map(|&v| self.interpolate(v)).collect(),
            self.atom_at_zero,
        )
    }

    /// CF of the tabulated law: atom plus a Filon-type integral of the
    /// piecewise-quadratic (in `x`) interpolant over pairs of grid intervals,
    /// exact in the oscillation. A trailing odd interval is linear.
    pub fn cf(&self, xi: f64) -> Complex64 {
        self.atom_at_zero + self.continuous_cf(xi)
    }

    fn continuous_cf(&self, xi: f64) -> Complex64 {
        let (x, u) = (&self.x, &self.values);
        let n = x.len();
        let mut acc = ComplexSum::new();
        let mut i = 0;
        while i + 2 < n {
            let (a, m, b) = (x[i], x[i + 1], x[i + 2]);
            let (len, h1) = (b - a, m - a);
            let d1 = (u[i + 1] - u[i]) / h1;
            let d2 = ((u[i + 2] - u[i + 1]) / (b - m) - d1) / len;
            // p(v) = u_a + (d1 − d2 h1) v + d2 v², v = x − a
            let coef = [u[i], d1 - d2 * h1, d2];
            let mom = oscillatory_moments(-xi * len);
            let mut panel = Complex64::new(0.0, 0.0);
            let mut scale = len;
            for k in 0..3 {
                panel += coef[k] * scale * mom[k];
                scale *= len;
            }
            acc.add(Complex64::new(0.0, -xi * a).exp() * panel);
            i += 2;
        }
        if i + 1 < n {
            let (a, b) = (x[i], x[i + 1]);
            let h = b - a;
            let (p, q) = filon_linear_weights(xi * h);
            acc.add(Complex64::new(0.0, -xi * a).exp() * h * (p * u[i] + q * u[i + 1]));
        }
        acc.value()
    }

    pub fn cf_grid(&self, xi: &[f64]) -> CharacteristicFunctionGrid {
        CharacteristicFunctionGrid::from_fn(xi, self, CfSource::Analytic)
    }

    /// Cumulative mass at each grid point (trapezoid in `ln x`), starting from the atom.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len());
        let mut acc = CompensatedSum::new();
        acc.add(self.atom_at_zero);
        out.push(acc.value());
        for i in 1..self.x.len() {
            let ds = (self.x[i] / self.x[i - 1]).ln();
            acc.add(0.5 * ds * (self.x[i] * self.values[i] + self.x[i - 1] * self.values[i - 1]));
            out.push(acc.value());
        }
        out
    }

    /// Writes `x,density` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,density")?;
        for (x, u) in self.x.iter().zip(&self.values) {
            writeln!(w, "{x},{u}")?;
        }
        Ok(())
    }
}

impl CharacteristicFn for GridDensity {
    fn eval(&self, xi: f64) -> Complex64 {
        self.cf(xi)
    }
}

/// `N_k = ∫₀¹ wᵏ e^{iθw} dw` for `k = 0, 1, 2`.
fn oscillatory_moments(theta: f64) -> [Complex64; 3] {
    let c = Complex64::new(0.0, theta);
    let mut out = [Complex64::new(0.0, 0.0); 3];
    if theta.abs() < 1.0 {
        // Σ_j c^j / (j! (k + j + 1))
        let mut term = Complex64::new(1.0, 0.0);
        for j in 0..24 {
            let jf = j as f64;
            for (k, o) in out.iter_mut().enumerate() {
                *o += term / (k as f64 + jf + 1.0);
            }
            term = term * c / (jf + 1.0);
        }
    } else {
        let e = c.exp();
        out[0] = (e - 1.0) / c;
        out[1] = (e - out[0]) / c;
        out[2] = (e - 2.0 * out[1]) / c;
    }
    out
}

/// `(∫₀¹ (1−v) e^{-iθv} dv, ∫₀¹ v e^{-iθv} dv)`.
fn filon_linear_weights(theta: f64) -> (Complex64, Complex64) {
    let c = Complex64::new(0.0, -theta);
    if theta.abs() < 0.25 {
        // Σ c^k / k! · 1/((k+1)(k+2)) and Σ c^k / k! · 1/(k+2)
        let mut p = Complex64::new(0.0, 0.0);
        let mut q = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..16 {
            let kf = k as f64;
            p += term / ((kf + 1.0) * (kf + 2.0));
            q += term / (kf + 2.0);
            term = term * c / (kf + 1.0);
        }
        (p, q)
    } else {
        let e = c.exp();
        let q = e / c - (e - 1.0) / (c * c);
        let p = (e - 1.0) / c - q;
        (p, q)
    }
}
