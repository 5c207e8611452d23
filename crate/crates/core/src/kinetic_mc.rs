//! Event-exact Monte Carlo for the linear kinetic equation.
//!
//! Each particle carries an independent Poisson clock of rate `λ`. Over a time
//! step `Δτ` it undergoes `K ~ Poisson(λΔτ)` interactions `x → x(1 + η)` with
//! i.i.d. `η`, so the ensemble law at time `τ` is exact; there is no time
//! discretization.
//!
//! Randomness for particle `i` in evolution epoch `e` comes from a ChaCha8
//! stream keyed by `(seed, e, i)`, which makes results independent of how the
//! work is scheduled across threads.

use std::io::{self, Write};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf::{CfSource, CharacteristicFunctionGrid};
use crate::effects::EffectDistribution;
use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::numerics::{expm1_neg_i, ComplexSum, CompensatedSum};

/// Initial law of the firm sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// All sizes equal to `x0`.
    Dirac { x0: f64 },
    /// Lognormal source profile at time `t0` with mean `m` (`m = 1` by default).
    Lognormal {
        t0: f64,
        #[serde(default = "one")]
        m: f64,
    },
    /// Tabulated density, sampled by inverse CDF.
    Grid { density: GridDensity },
}

fn one() -> f64 {
    1.0
}

/// Firm sizes at a simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    sizes: Vec<f64>,
    time: f64,
    seed: u64,
    frequency: f64,
    epoch: u64,
}

/// Sample mean of `x^n` with its plug-in standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub standard_error: f64,
}

/// Histogram on log-spaced edges with explicit out-of-range mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Fraction of particles per bin.
    pub bin_mass: Vec<f64>,
    /// Bin-average densities at the geometric bin centres; the atom field
    /// holds the fraction of particles at exactly zero.
    pub density: GridDensity,
    pub underflow: f64,
    pub overflow: f64,
}

/// JSON sidecar written next to an exported ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub time: f64,
    pub seed: u64,
    pub frequency: f64,
    pub n: usize,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn particle_rng(seed: u64, epoch: u64, index: usize) -> ChaCha8Rng {
    let mut state = seed ^ epoch.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index as u64);
    rng
}

/// Draws `n` i.i.d. sizes from `initial` at time zero.
pub fn init_ensemble(n: usize, initial: &InitialLaw, seed: u64, frequency: f64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::Config("ensemble needs at least one particle".into()));
    }
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::Domain(format!("interaction frequency must be positive, got {frequency}")));
    }
    let sizes: Vec<f64> = match initial {
        InitialLaw::Dirac { x0 } => {
            if !(*x0 >= 0.0 && x0.is_finite()) {
                return Err(Error::Config(format!("Dirac location must be a nonnegative size, got {x0}")));
            }
            vec![*x0; n]
        }
        InitialLaw::Lognormal { t0, m } => {
            if !(*t0 > 0.0 && *m > 0.0) {
                return Err(Error::Config(format!(
                    "lognormal initial law needs t0 > 0 and m > 0, got t0 = {t0}, m = {m}"
                )));
            }
            let sd = (2.0 * t0).sqrt();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = particle_rng(seed, 0, i);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m * (-t0 + sd * z).exp()
                })
                .collect()
        }
        InitialLaw::Grid { density } => {
            let sampler = GridSampler::new(density)?;
            (0..n)
                .into_par_iter()
                .map(|i| sampler.sample(&mut particle_rng(seed, 0, i)))
                .collect()
        }
    };
    Ok(ParticleEnsemble {
        sizes,
        time: 0.0,
        seed,
        frequency,
        epoch: 0,
    })
}

/// Inverse-CDF sampler for a [`GridDensity`]; the CDF is linear in `ln x`
/// between grid points.
#[derive(Debug, Clone)]
pub struct GridSampler {
    log_x: Vec<f64>,
    cumulative: Vec<f64>,
    atom: f64,
}

impl GridSampler {
    pub fn new(density: &GridDensity) -> Result<Self> {
        let raw = density.cumulative();
        let total = raw[raw.len() - 1];
        if !(total > 0.0) {
            return Err(Error::Config("grid density has no mass".into()));
        }
        Ok(Self {
            log_x: density.x().iter().map(|x| x.ln()).collect(),
            cumulative: raw.iter().map(|c| c / total).collect(),
            atom: density.atom_at_zero() / total,
        })
    }

    /// CDF at `x` of the law this sampler draws from.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return self.atom;
        }
        let s = x.ln();
        let n = self.log_x.len();
        if s <= self.log_x[0] {
            return self.atom;
        }
        if s >= self.log_x[n - 1] {
            return 1.0;
        }
        let i = self.log_x.partition_point(|&g| g <= s);
        let r = (s - self.log_x[i - 1]) / (self.log_x[i] - self.log_x[i - 1]);
        self.cumulative[i - 1] + r * (self.cumulative[i] - self.cumulative[i - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.atom {
            return 0.0;
        }
        let i = self.cumulative.partition_point(|&c| c <= u).clamp(1, self.cumulative.len() - 1);
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let r = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.log_x[i - 1] + r * (self.log_x[i] - self.log_x[i - 1])).exp()
    }
}

impl ParticleEnsemble {
    /// Builds an ensemble from explicit sizes (e.g. a re-imported export).
    pub fn from_sizes(sizes: Vec<f64>, time: f64, seed: u64, frequency: f64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Config("ensemble needs at least one particle".into()));
        }
        if sizes.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain("sizes must be finite and nonnegative".into()));
        }
        Ok(Self {
            sizes,
            time,
            seed,
            frequency,
            epoch: 0,
        })
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Advances every particle by `dtau` with `K ~ Poisson(λ dtau)` multiplicative
    /// updates. Returns a new ensemble; `self` is left untouched.
    pub fn evolve_exact(&self, effect: &EffectDistribution, dtau: f64) -> Result<ParticleEnsemble> {
        if !(dtau >= 0.0 && dtau.is_finite()) {
            return Err(Error::Domain(format!("time step must be nonnegative, got {dtau}")));
        }
        if dtau == 0.0 {
            return Ok(self.clone());
        }
        let epoch = self.epoch + 1;
        let clock = Poisson::new(self.frequency * dtau)
            .map_err(|e| Error::Domain(format!("Poisson clock: {e}")))?;
        let seed = self.seed;
        let sizes = self
            .sizes
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut rng = particle_rng(seed, epoch, i);
                let k = clock.sample(&mut rng) as u64;
                let mut factor = 1.0;
                for _ in 0..k {
                    factor *= 1.0 + effect.sample(&mut rng);
                }
                x * factor
            })
            .collect();
        Ok(ParticleEnsemble {
            sizes,
            time: self.time + dtau,
            seed,
            frequency: self.frequency,
            epoch,
        })
    }

    /// Number of Poisson events each particle would see in the next `evolve_exact`
    /// call of length `dtau`. Exposed for distributional checks of the clock.
    pub fn event_counts(&self, dtau: f64) -> Result<Vec<u64>> {
        let clock = Poisson::new(self.frequency * dtau)
            .map_err(|e| Error::Domain(format!("Poisson clock: {e}")))?;
        let epoch = self.epoch + 1;
        Ok((0..self.sizes.len())
            .into_par_iter()
            .map(|i| clock.sample(&mut particle_rng(self.seed, epoch, i)) as u64)
            .collect())
    }

    /// Sample mean of `x^n` and its standard error.
    pub fn empirical_moment(&self, n: u32) -> MomentEstimate {
        if n == 0 {
            return MomentEstimate {
                value: 1.0,
                standard_error: 0.0,
            };
        }
        let count = self.sizes.len() as f64;
        let powers: Vec<f64> = self.sizes.iter().map(|x| x.powi(n as i32)).collect();
        let mean = powers.iter().copied().collect::<CompensatedSum>().value() / count;
        let var = if self.sizes.len() > 1 {
            powers
                .iter()
                .map(|p| (p - mean) * (p - mean))
                .collect::<CompensatedSum>()
                .value()
                / (count - 1.0)
        } else {
            0.0
        };
        MomentEstimate {
            value: mean,
            standard_error: (var / count).sqrt(),
        }
    }

    /// `(1/N) Σ_j exp(−iξ x_j)` on each grid point.
    pub fn empirical_cf(&self, xi: &[f64]) -> CharacteristicFunctionGrid {
        let count = self.sizes.len() as f64;
        let values = xi
            .par_iter()
            .map(|&k| {
                if k == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                let mut acc = ComplexSum::new();
                for &x in &self.sizes {
                    acc.add(expm1_neg_i(k * x));
                }
                1.0 + acc.value() / count
            })
            .collect();
        CharacteristicFunctionGrid {
            xi: xi.to_vec(),
            values,
            source: CfSource::Empirical,
        }
    }

    /// Mass-normalized histogram on increasing positive `edges`.
    pub fn histogram(&self, edges: &[f64]) -> Result<Histogram> {
        if edges.len() < 2 {
            return Err(Error::Argument("histogram needs at least one bin (two edges)".into()));
        }
        if !(edges[0] > 0.0) || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("histogram edges must be positive and increasing".into()));
        }
        let bins = edges.len() - 1;
        let mut counts = vec![0usize; bins];
        let (mut zeros, mut under, mut over) = (0usize, 0usize, 0usize);
        let last = edges[bins];
        for &x in &self.sizes {
            if x == 0.0 {
                zeros += 1;
            } else if x < edges[0] {
                under += 1;
            } else if x > last {
                over += 1;
            } else {
                let i = edges.partition_point(|&e| e <= x).clamp(1, bins);
                counts[i - 1] += 1;
            }
        }
        let n = self.sizes.len() as f64;
        let bin_mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let centres: Vec<f64> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let dens: Vec<f64> = bin_mass
            .iter()
            .zip(edges.windows(2))
            .map(|(m, w)| m / (w[1] - w[0]))
            .collect();
        let density = if bins >= 2 {
            GridDensity::new(centres, dens, zeros as f64 / n)?
        } else {
            // a single bin is stored with both edges as grid points
            GridDensity::new(edges.to_vec(), vec![dens[0]; 2], zeros as f64 / n)?
        };
        Ok(Histogram {
            edges: edges.to_vec(),
            bin_mass,
            density,
            underflow: under as f64 / n,
            overflow: over as f64 / n,
        })
    }

    pub fn sidecar(&self) -> EnsembleSidecar {
        EnsembleSidecar {
            time: self.time,
            seed: self.seed,
            frequency: self.frequency,
            n: self.sizes.len(),
        }
    }

    /// One `size` column.
    pub fn write_sizes_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "size")?;
        for x in &self.sizes {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }

    /// Raw little-endian `f64` sizes.
    pub fn write_sizes_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        for x in &self.sizes {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn effect() -> EffectDistribution {
        EffectDistribution::two_point_first_order(0.1).unwrap()
    }

    #[test]
    fn dirac_initial_law() {
        let e = init_ensemble(100_000, &InitialLaw::Dirac { x0: 1.0 }, 1, 1.0).unwrap();
        assert!(e.sizes().iter().all(|&x| x == 1.0));
        assert_eq!(e.time(), 0.0);
        let cf = e.empirical_cf(&[0.0, 0.3, -2.0]);
        assert_eq!(cf.values[0], Complex64::new(1.0, 0.0));
        for (x, v) in cf.iter().skip(1) {
            assert!((v - Complex64::new(0.0, -x).exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn bad_initial_specs_are_config_errors() {
        assert!(matches!(init_ensemble(0, &InitialLaw::Dirac { x0: 1.0 }, 1, 1.0), Err(Error::Config(_))));
        assert!(matches!(
            init_ensemble(10, &InitialLaw::Lognormal { t0: 0.0, m: 1.0 }, 1, 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(init_ensemble(10, &InitialLaw::Dirac { x0: -1.0 }, 1, 1.0), Err(Error::Config(_))));
        let json = r#"{"kind":"gaussian","mu":1.0}"#;
        assert!(serde_json::from_str::<InitialLaw>(json).is_err());
    }

    #[test]
    fn lognormal_initial_mean_is_one() {
        let n = 1_000_000;
        let e = init_ensemble(n, &InitialLaw::Lognormal { t0: 0.5, m: 1.0 }, 9, 1.0).unwrap();
        let m = e.empirical_moment(1);
        assert!((m.value - 1.0).abs() < 4.0 * m.standard_error, "{m:?}");
        // SE matches the analytic variance e^{2t0} − 1
        let se = ((1f64).exp() - 1.0).sqrt() / (n as f64).sqrt();
        assert!((m.standard_error / se - 1.0).abs() < 0.05);
    }

    #[test]
    fn grid_initial_law_matches_its_cdf() {
        let g = GridDensity::from_fn(1e-3, 1e3, 400, |x: f64| {
            (-(x.ln() + 0.2).powi(2) / 0.8).exp() / (x * (0.8 * std::f64::consts::PI).sqrt())
        })
        .unwrap();
        let n = 200_000;
        let e = init_ensemble(n, &InitialLaw::Grid { density: g.clone() }, 5, 1.0).unwrap();
        let sampler = GridSampler::new(&g).unwrap();
        let mut xs = e.sizes().to_vec();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = sampler.cdf(x);
                (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 2.0 / (n as f64).sqrt(), "KS distance {ks}");
    }

    #[test]
    fn zero_step_and_null_effect_leave_sizes_unchanged() {
        let e = init_ensemble(1000, &InitialLaw::Lognormal { t0: 0.2, m: 1.0 }, 3, 1.0).unwrap();
        assert_eq!(e.evolve_exact(&effect(), 0.0).unwrap(), e);
        let null = EffectDistribution::scaled_bounded(&[0.0], &[1.0], 0.5).unwrap();
        let after = e.evolve_exact(&null, 3.0).unwrap();
        assert_eq!(after.sizes(), e.sizes());
        assert_eq!(after.time(), 3.0);
    }

    #[test]
    fn evolution_is_deterministic_and_time_advances() {
        let e = init_ensemble(5000, &InitialLaw::Dirac { x0: 2.0 }, 77, 1.5).unwrap();
        let a = e.evolve_exact(&effect(), 0.7).unwrap();
        let b = e.evolve_exact(&effect(), 0.7).unwrap();
        assert_eq!(a.sizes(), b.sizes());
        assert!((a.time() - 0.7).abs() < 1e-15);
        let c = a.evolve_exact(&effect(), 0.3).unwrap();
        assert!(c.time() > a.time());
        assert_eq!(c.len(), e.len());
        assert!(c.sizes().iter().all(|&x| x >= 0.0));
        let other = init_ensemble(5000, &InitialLaw::Dirac { x0: 2.0 }, 78, 1.5).unwrap();
        assert_ne!(other.evolve_exact(&effect(), 0.7).unwrap().sizes(), a.sizes());
    }

    #[test]
    fn zero_sizes_are_absorbing() {
        let e = ParticleEnsemble::from_sizes(vec![0.0, 1.0, 0.0], 0.0, 4, 1.0).unwrap();
        let a = e.evolve_exact(&effect(), 5.0).unwrap();
        assert_eq!(a.sizes()[0], 0.0);
        assert_eq!(a.sizes()[2], 0.0);
    }

    #[test]
    fn mean_conserved_and_second_moment_grows() {
        let n = 1_000_000;
        let e = init_ensemble(n, &InitialLaw::Dirac { x0: 1.0 }, 2024, 1.0).unwrap();
        let d = effect();
        let after = e.evolve_exact(&d, 2.0).unwrap();
        let m1 = after.empirical_moment(1);
        assert!((m1.value - 1.0).abs() < 4.0 * m1.standard_error, "{m1:?}");
        let m2 = after.empirical_moment(2);
        let expected = (d.growth_rate(1.0, 2) * 2.0).exp();
        assert!((m2.value - expected).abs() < 4.0 * m2.standard_error, "{m2:?} vs {expected}");
        assert_eq!(after.empirical_moment(0).value, 1.0);
    }

    #[test]
    fn constant_effect_counts_are_poisson() {
        // η ≡ c: x(τ) = (1+c)^K, so log_{1+c} x recovers K exactly
        let c = 1.0;
        let d = EffectDistribution::from_atoms_unchecked(vec![c], vec![1.0]);
        let n = 200_000;
        let mean = 1.5;
        let e = init_ensemble(n, &InitialLaw::Dirac { x0: 1.0 }, 31, 1.0).unwrap();
        let counts = e.event_counts(mean).unwrap();
        let after = e.evolve_exact(&d, mean).unwrap();
        let mut hist = [0usize; 8];
        for (x, k) in after.sizes().iter().zip(&counts) {
            let kk = x.log2().round() as u64;
            assert_eq!(kk, *k);
            hist[(kk as usize).min(7)] += 1;
        }
        let mut chi2 = 0.0;
        let mut p = (-mean).exp();
        let mut tail = 1.0;
        for (k, &observed) in hist.iter().enumerate() {
            let prob = if k < 7 { p } else { tail };
            let expected = prob * n as f64;
            chi2 += (observed as f64 - expected).powi(2) / expected;
            tail -= p;
            p *= mean / (k as f64 + 1.0);
        }
        // 7 degrees of freedom, 99.9% quantile ≈ 24.3
        assert!(chi2 < 24.3, "chi-square {chi2}");
    }

    #[test]
    fn histogram_behaviour() {
        let e = ParticleEnsemble::from_sizes(vec![2.0; 10], 0.0, 0, 1.0).unwrap();
        let h = e.histogram(&[1.0, 1.5, 3.0, 4.0]).unwrap();
        assert_eq!(h.bin_mass, vec![0.0, 1.0, 0.0]);
        assert!(e.histogram(&[1.0]).is_err());
        assert!(e.histogram(&[]).is_err());
        assert!(e.histogram(&[2.0, 1.0]).is_err());
        let e = ParticleEnsemble::from_sizes(vec![0.0, 0.01, 1.0, 100.0], 0.0, 0, 1.0).unwrap();
        let h = e.histogram(&[0.1, 1.0, 10.0]).unwrap();
        assert_eq!(h.density.atom_at_zero(), 0.25);
        assert_eq!(h.underflow, 0.25);
        assert_eq!(h.overflow, 0.25);
        assert_eq!(h.bin_mass, vec![0.0, 0.25]);
    }

    #[test]
    fn export_formats() {
        let e = ParticleEnsemble::from_sizes(vec![0.5, 1.25], 2.0, 9, 1.0).unwrap();
        let mut csv = Vec::new();
        e.write_sizes_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "size\n0.5\n1.25\n");
        let mut bin = Vec::new();
        e.write_sizes_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 16);
        let json = serde_json::to_string(&e.sidecar()).unwrap();
        assert_eq!(json, r#"{"time":2.0,"seed":9,"frequency":1.0,"n":2}"#);
    }
}
