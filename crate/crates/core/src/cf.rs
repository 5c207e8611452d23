//! Characteristic functions `f̂(ξ) = ∫ f(x) e^{-iξx} dx` sampled on frequency grids.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::expm1_neg_i;

/// Where a set of CF values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfSource {
    Empirical,
    Wild,
    Analytic,
    Oracle,
}

/// Something that can evaluate a characteristic function pointwise.
///
/// `eval_minus_one` exists so that `f̂ − 1` can be formed without cancellation
/// near `ξ = 0`; metrics that divide by `|ξ|^s` depend on it.
pub trait CharacteristicFn: Sync {
    fn eval(&self, xi: f64) -> Complex64;

    fn eval_minus_one(&self, xi: f64) -> Complex64 {
        self.eval(xi) - 1.0
    }
}

/// CF of a point mass at `location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracCf {
    pub location: f64,
}

impl DiracCf {
    pub fn new(location: f64) -> Self {
        Self { location }
    }
}

impl CharacteristicFn for DiracCf {
    fn eval(&self, xi: f64) -> Complex64 {
        Complex64::new(0.0, -xi * self.location).exp()
    }

    fn eval_minus_one(&self, xi: f64) -> Complex64 {
        expm1_neg_i(xi * self.location)
    }
}

/// Adapter turning a closure into a [`CharacteristicFn`].
pub struct FnCf<F>(pub F);

impl<F: Fn(f64) -> Complex64 + Sync> CharacteristicFn for FnCf<F> {
    fn eval(&self, xi: f64) -> Complex64 {
        (self.0)(xi)
    }
}

impl<T: CharacteristicFn + ?Sized> CharacteristicFn for &T {
    fn eval(&self, xi: f64) -> Complex64 {
        (**self).eval(xi)
    }

    fn eval_minus_one(&self, xi: f64) -> Complex64 {
        (**self).eval_minus_one(xi)
    }
}

/// Complex CF values on a signed frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFunctionGrid {
    pub xi: Vec<f64>,
    pub values: Vec<Complex64>,
    pub source: CfSource,
}

impl CharacteristicFunctionGrid {
    pub fn new(xi: Vec<f64>, values: Vec<Complex64>, source: CfSource) -> Result<Self> {
        if xi.len() != values.len() {
            return Err(Error::Argument(format!(
                "{} frequencies but {} values",
                xi.len(),
                values.len()
            )));
        }
        Ok(Self { xi, values, source })
    }

    /// Evaluates `cf` at every grid point (in parallel; order is preserved).
    pub fn from_fn<C: CharacteristicFn + ?Sized>(xi: &[f64], cf: &C, source: CfSource) -> Self {
        use rayon::prelude::*;
        let values = xi.par_iter().map(|&x| cf.eval(x)).collect();
        Self {
            xi: xi.to_vec(),
            values,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.xi.iter().copied().zip(self.values.iter().copied())
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.xi.len() == other.xi.len() && self.xi.iter().zip(&other.xi).all(|(a, b)| a == b)
    }

    /// `max |f̂ − ĝ|` over grid points with `|ξ| ≤ bound`.
    pub fn sup_distance(&self, other: &Self, bound: f64) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::Argument("CF grids differ".into()));
        }
        Ok(self
            .iter()
            .zip(other.values.iter())
            .filter(|((x, _), _)| x.abs() <= bound)
            .map(|((_, a), b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Checks `|f̂| ≤ 1 + tol`, `f̂(0) = 1` and Hermitian symmetry on mirrored points.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for (x, v) in self.iter() {
            if v.norm() > 1.0 + tol {
                return Err(Error::Numerical {
                    message: format!("|cf({x})| exceeds 1"),
                    previous: 1.0,
                    last: v.norm(),
                });
            }
            if x == 0.0 && (v - 1.0).norm() > tol {
                return Err(Error::Numerical {
                    message: "cf(0) differs from 1".into(),
                    previous: 1.0,
                    last: v.re,
                });
            }
        }
        for (i, (x, v)) in self.iter().enumerate() {
            if x > 0.0 {
                if let Some(j) = self.xi.iter().position(|&y| y == -x) {
                    let d = (self.values[j] - v.conj()).norm();
                    if d > tol {
                        return Err(Error::Numerical {
                            message: format!("Hermitian symmetry broken at xi = {x} (index {i})"),
                            previous: 0.0,
                            last: d,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes `xi,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "xi,re,im")?;
        for (x, v) in self.iter() {
            writeln!(w, "{x},{},{}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Mirror a set of positive frequencies into `[-ξ_n, …, -ξ_1, ξ_1, …, ξ_n]`.
pub fn symmetric_grid(positive: &[f64]) -> Vec<f64> {
    positive
        .iter()
        .rev()
        .map(|x| -x)
        .chain(positive.iter().copied())
        .collect()
}

/// `n` points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` log-spaced points from `a` to `b` inclusive (`0 < a < b`).
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_cf() {
        let d = DiracCf::new(1.0);
        assert_eq!(d.eval(0.0), Complex64::new(1.0, 0.0));
        let v = d.eval(0.7);
        assert!((v - Complex64::new(0.7f64.cos(), -0.7f64.sin())).norm() < 1e-16);
        assert!((d.eval_minus_one(0.7) - (v - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn invariants_detect_violations() {
        let xi = symmetric_grid(&[0.5, 1.0]);
        let d = DiracCf::new(2.0);
        let g = CharacteristicFunctionGrid::from_fn(&xi, &d, CfSource::Analytic);
        g.check_invariants(1e-12).unwrap();
        let mut bad = g.clone();
        bad.values[0] = bad.values[0].conj();
        assert!(bad.check_invariants(1e-12).is_err());
        let mut big = g.clone();
        big.values[1] *= 1.1;
        assert!(big.check_invariants(1e-12).is_err());
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = CharacteristicFunctionGrid::from_fn(&[1.0, 2.0], &DiracCf::new(1.0), CfSource::Analytic);
        let b = CharacteristicFunctionGrid::from_fn(&[1.0, 3.0], &DiracCf::new(1.0), CfSource::Analytic);
        assert!(matches!(a.sup_distance(&b, 10.0), Err(Error::Argument(_))));
        assert!(CharacteristicFunctionGrid::new(vec![1.0], vec![], CfSource::Wild).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(symmetric_grid(&[1.0, 2.0]), vec![-2.0, -1.0, 1.0, 2.0]);
        let l = logspace(1e-3, 1e2, 6);
        assert!((l[1] - 1e-2).abs() < 1e-15 && (l[5] - 1e2).abs() < 1e-12);
    }
}
