//! Wild-sum solution of the linear kinetic equation in Fourier space.
//!
//! With `λ = 1`, the solution is the Poisson mixture
//!
//! ```text
//! f̂(ξ, τ) = e^{-τ} Σ_{k≥0} τ^k / k! · f̂^{(k+1)}(ξ),   f̂^{(k+1)}(ξ) = ⟨f̂^{(k)}((1+η)ξ)⟩,
//! ```
//!
//! starting from `f̂^{(1)} = F̂`. Unrolling the recursion, `f̂^{(k+1)}` averages
//! `F̂(ξ · Π(1+η_i))` over `k` i.i.d. effects. For a two-atom effect the average
//! collapses onto a binomial sum with `k + 1` terms; larger effects are handled
//! by a multinomial tree pruned at a weight floor.
//!
//! Both the Poisson weights and the per-level weights are built in log space,
//! anchored at their modes, because effective times `τ = t/ε` reach 10³–10⁵.
//! The `(weight, multiplier)` table depends only on the effect and `τ`, so it is
//! built once and shared by every frequency.
//!
//! Truncated series are evaluated in mass-completed form
//! `1 + Σ w (F̂(ξm) − 1)`: the discarded weight is assigned `F̂(0) = 1`. This keeps
//! `f̂(0) = 1` exactly and makes the truncation error vanish like `|ξ|` near the
//! origin, which the `d_s` metrics rely on.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf::{CfSource, CharacteristicFn, CharacteristicFunctionGrid, DiracCf};
use crate::effects::EffectDistribution;
use crate::error::{domain, Error, Result};
use crate::numerics::{ln_poisson_pmf, CompensatedSum, ComplexSum};

/// Default hard cap on the truncation index.
pub const DEFAULT_K_CAP: u64 = 1_000_000;

/// Weight floor for two-atom levels and for the Poisson window.
pub const TWO_ATOM_WEIGHT_FLOOR: f64 = 1e-22;

/// Weight floor for the multinomial tree of larger effects.
pub const TREE_WEIGHT_FLOOR: f64 = 1e-16;

/// Where the Poisson series was cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WildTruncation {
    /// Effective time (already scaled, `λ = 1`).
    #[serde(rename = "tau_effective")]
    pub tau: f64,
    pub k_max: u64,
    /// Poisson weight above `k_max`.
    pub tail_mass: f64,
}

/// Smallest `k_max ≥ ⌈τ⌉` whose Poisson(`τ`) upper tail is at most `tol`.
pub fn poisson_truncation(tau: f64, tol: f64) -> Result<WildTruncation> {
    poisson_truncation_capped(tau, tol, DEFAULT_K_CAP)
}

/// As [`poisson_truncation`] with an explicit cap on `k_max`.
pub fn poisson_truncation_capped(tau: f64, tol: f64, cap: u64) -> Result<WildTruncation> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("effective time must be finite and nonnegative, got {tau}"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("tail tolerance must lie in (0, 1), got {tol}"));
    }
    if tau == 0.0 {
        return Ok(WildTruncation {
            tau,
            k_max: 0,
            tail_mass: 0.0,
        });
    }
    let floor_k = tau.ceil() as u64;
    // walk up until the pmf is far below tol; everything beyond is < tol·e^{-40}
    let ln_stop = tol.ln() - 40.0;
    let mut k_hi = floor_k;
    loop {
        if k_hi > cap {
            return Err(Error::Resource(format!(
                "Poisson({tau}) tail tolerance {tol:e} needs k_max beyond the cap {cap}"
            )));
        }
        if ln_poisson_pmf(tau, k_hi) < ln_stop {
            break;
        }
        k_hi += 1;
    }
    // tail(k) = Σ_{j>k} p_j, accumulated from the top so small tails keep full precision
    let mut tail = CompensatedSum::new();
    let mut k = k_hi;
    while k > floor_k {
        let next = tail.value() + ln_poisson_pmf(tau, k).exp();
        if next > tol {
            break;
        }
        tail.add(ln_poisson_pmf(tau, k).exp());
        k -= 1;
    }
    Ok(WildTruncation {
        tau,
        k_max: k,
        tail_mass: tail.value(),
    })
}

/// One level (fixed number of interactions) of the unrolled recursion.
#[derive(Debug, Clone)]
struct Level {
    /// `(probability, multiplier)` over the distinct interaction products.
    terms: Vec<(f64, f64)>,
    /// Probability removed by the weight floor.
    dropped: f64,
}

/// Two-atom level with `k` interactions, weights normalized over all `k + 1` terms.
fn two_atom_level(m: [(f64, f64); 2], k: u64, floor: f64) -> Level {
    let [(r1, p1), (r2, p2)] = m;
    if k == 0 {
        return Level {
            terms: vec![(1.0, 1.0)],
            dropped: 0.0,
        };
    }
    if p2 == 0.0 || p1 == 0.0 {
        let r = if p2 == 0.0 { r1 } else { r2 };
        return Level {
            terms: vec![(1.0, r.powi(k as i32))],
            dropped: 0.0,
        };
    }
    let kf = k as f64;
    let (ln_p1, ln_p2) = (p1.ln(), p2.ln());
    let (ln_r1, ln_r2) = (r1.ln(), r2.ln());
    let ratio = ln_p2 - ln_p1;
    // mode of Binomial(k, p2)
    let mode = (((kf + 1.0) * p2).floor() as u64).min(k);
    // log C(k, j) p1^{k-j} p2^j relative to the mode, by the multiplicative recurrence
    let mut ln_rel = vec![0.0; (k + 1) as usize];
    for j in mode..k {
        let jf = j as f64;
        ln_rel[(j + 1) as usize] = ln_rel[j as usize] + ((kf - jf) / (jf + 1.0)).ln() + ratio;
    }
    for j in (1..=mode).rev() {
        let jf = j as f64;
        ln_rel[(j - 1) as usize] = ln_rel[j as usize] + (jf / (kf - jf + 1.0)).ln() - ratio;
    }
    let raw: Vec<f64> = ln_rel.iter().map(|l| l.exp()).collect();
    let total = raw.iter().copied().collect::<CompensatedSum>().value();
    let mut terms = Vec::new();
    let mut dropped = CompensatedSum::new();
    for (j, w) in raw.into_iter().enumerate() {
        let w = w / total;
        if w < floor {
            dropped.add(w);
            continue;
        }
        let jf = j as f64;
        terms.push((w, ((kf - jf) * ln_r1 + jf * ln_r2).exp()));
    }
    Level {
        terms,
        dropped: dropped.value(),
    }
}

/// Multinomial tree for effects with more than two atoms.
struct TreeLevels {
    multipliers: Vec<(f64, f64)>,
    ln_r: Vec<f64>,
    states: BTreeMap<Vec<u32>, f64>,
    level: u64,
    dropped: f64,
    floor: f64,
}

impl TreeLevels {
    fn new(multipliers: Vec<(f64, f64)>, floor: f64) -> Self {
        let atoms = multipliers.len();
        let ln_r = multipliers.iter().map(|(r, _)| r.ln()).collect();
        let mut states = BTreeMap::new();
        states.insert(vec![0u32; atoms], 1.0);
        Self {
            multipliers,
            ln_r,
            states,
            level: 0,
            dropped: 0.0,
            floor,
        }
    }

    fn advance(&mut self) {
        let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (counts, &w) in &self.states {
            for (i, &(_, p)) in self.multipliers.iter().enumerate() {
                let mut c = counts.clone();
                c[i] += 1;
                *next.entry(c).or_insert(0.0) += w * p;
            }
        }
        let mut kept = BTreeMap::new();
        let mut dropped = CompensatedSum::new();
        dropped.add(self.dropped);
        for (c, w) in next {
            if w < self.floor {
                dropped.add(w);
            } else {
                kept.insert(c, w);
            }
        }
        self.states = kept;
        self.dropped = dropped.value();
        self.level += 1;
    }

    fn level(&self) -> Level {
        let terms = self
            .states
            .iter()
            .map(|(c, &w)| {
                let ln_m: f64 = c.iter().zip(&self.ln_r).map(|(&n, l)| n as f64 * l).sum();
                (w, ln_m.exp())
            })
            .collect();
        Level {
            terms,
            dropped: self.dropped,
        }
    }
}

fn multipliers_of(effect: &EffectDistribution) -> Vec<(f64, f64)> {
    effect
        .multipliers()
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Precomputed `(weight, multiplier)` table of a truncated Wild sum.
#[derive(Debug, Clone)]
pub struct WildTable {
    entries: Vec<(f64, f64)>,
    truncation: WildTruncation,
    k_min: u64,
    level_mass: Vec<f64>,
    dropped_mass: f64,
}

impl WildTable {
    /// Builds the table for `effect` at effective time `tau`, cutting the Poisson
    /// series where its upper tail drops below `tol`.
    pub fn build(effect: &EffectDistribution, tau: f64, tol: f64) -> Result<Self> {
        let truncation = poisson_truncation(tau, tol)?;
        let m = multipliers_of(effect);
        let two_atoms = m.len() <= 2;
        let floor = if two_atoms {
            TWO_ATOM_WEIGHT_FLOOR
        } else {
            TREE_WEIGHT_FLOOR
        };

        // Poisson weights on [k_min, k_max], anchored at the mode
        let (k_min, poisson) = if tau == 0.0 {
            (0, vec![1.0])
        } else {
            let mode = (tau.floor() as u64).min(truncation.k_max);
            let ln_floor = TWO_ATOM_WEIGHT_FLOOR.ln();
            let anchor = ln_poisson_pmf(tau, mode);
            let mut ln_p = vec![anchor];
            let mut k = mode;
            while k > 0 {
                let next = ln_p[ln_p.len() - 1] + (k as f64 / tau).ln();
                if next < ln_floor {
                    break;
                }
                ln_p.push(next);
                k -= 1;
            }
            let k_min = k;
            ln_p.reverse();
            let mut up = anchor;
            for j in mode..truncation.k_max {
                up += (tau / (j as f64 + 1.0)).ln();
                ln_p.push(up);
            }
            let raw: Vec<f64> = ln_p.iter().map(|l| l.exp()).collect();
            let total = raw.iter().copied().collect::<CompensatedSum>().value();
            let scale = (1.0 - truncation.tail_mass) / total;
            (k_min, raw.into_iter().map(|p| p * scale).collect::<Vec<_>>())
        };

        let mut entries = Vec::new();
        let mut level_mass = Vec::with_capacity(poisson.len());
        let mut dropped = CompensatedSum::new();
        let mut tree = (!two_atoms).then(|| TreeLevels::new(m.clone(), floor));
        for (offset, &pk) in poisson.iter().enumerate() {
            let k = k_min + offset as u64;
            let level = if let Some(tree) = tree.as_mut() {
                while tree.level < k {
                    tree.advance();
                }
                tree.level()
            } else {
                let pair = match m.as_slice() {
                    [a] => [*a, (1.0, 0.0)],
                    [a, b] => [*a, *b],
                    _ => unreachable!("two-atom branch"),
                };
                two_atom_level(pair, k, floor)
            };
            dropped.add(pk * level.dropped);
            let mut mass = CompensatedSum::new();
            for (w, mult) in level.terms {
                let weight = pk * w;
                if weight < floor {
                    dropped.add(weight);
                    continue;
                }
                mass.add(weight);
                entries.push((weight, mult));
            }
            level_mass.push(mass.value());
        }
        Ok(Self {
            entries,
            truncation,
            k_min,
            level_mass,
            dropped_mass: dropped.value(),
        })
    }

    pub fn truncation(&self) -> WildTruncation {
        self.truncation
    }

    /// Lowest interaction count kept (lower Poisson levels fall below the floor).
    pub fn k_min(&self) -> u64 {
        self.k_min
    }

    /// Weight removed by the per-entry floor, on top of `tail_mass`.
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Partial sums of the series at `ξ = 0`, one per level `k_min..=k_max`.
    pub fn partial_masses(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::new();
        self.level_mass
            .iter()
            .map(|&m| {
                acc.add(m);
                acc.value()
            })
            .collect()
    }

    /// Truncated Wild sum at one frequency.
    pub fn eval<C: CharacteristicFn + ?Sized>(&self, initial: &C, xi: f64) -> Complex64 {
        if let [(w, m)] = self.entries.as_slice() {
            if *w == 1.0 {
                return initial.eval(xi * m);
            }
        }
        if xi == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let mut acc = ComplexSum::new();
        for &(w, m) in &self.entries {
            acc.add(w * initial.eval_minus_one(xi * m));
        }
        1.0 + acc.value()
    }

    pub fn eval_grid<C: CharacteristicFn + ?Sized>(&self, initial: &C, xi: &[f64]) -> CharacteristicFunctionGrid {
        let values = xi.par_iter().map(|&x| self.eval(initial, x)).collect();
        CharacteristicFunctionGrid {
            xi: xi.to_vec(),
            values,
            source: CfSource::Wild,
        }
    }
}

/// `f̂^{(k)}(ξ)`: the `k`-th Wild coefficient (`k − 1` interactions), `k ≥ 1`.
pub fn wild_coefficient_cf<C: CharacteristicFn + ?Sized>(
    initial: &C,
    effect: &EffectDistribution,
    k: u64,
    xi: f64,
) -> Result<Complex64> {
    if k == 0 {
        return domain("Wild coefficients are indexed from k = 1");
    }
    let m = multipliers_of(effect);
    let level = match m.as_slice() {
        [a] => two_atom_level([*a, (1.0, 0.0)], k - 1, TWO_ATOM_WEIGHT_FLOOR),
        [a, b] => two_atom_level([*a, *b], k - 1, TWO_ATOM_WEIGHT_FLOOR),
        _ => {
            let mut tree = TreeLevels::new(m, TREE_WEIGHT_FLOOR);
            for _ in 1..k {
                tree.advance();
            }
            tree.level()
        }
    };
    if k == 1 {
        return Ok(initial.eval(xi));
    }
    if xi == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut acc = ComplexSum::new();
    for (w, mult) in level.terms {
        acc.add(w * initial.eval_minus_one(xi * mult));
    }
    Ok(1.0 + acc.value())
}

/// Truncated Wild sum of the kinetic solution at effective time `tau` on a grid.
pub fn wild_cf<C: CharacteristicFn + ?Sized>(
    initial: &C,
    effect: &EffectDistribution,
    tau: f64,
    xi: &[f64],
    tol: f64,
) -> Result<(CharacteristicFunctionGrid, WildTruncation)> {
    let table = WildTable::build(effect, tau, tol)?;
    Ok((table.eval_grid(initial, xi), table.truncation()))
}

/// Wild-sum approximation of the CF of the unit-mean lognormal source profile at
/// time `t`: the kinetic solution with the symmetric effect `±√(2ε)` started from
/// a point mass at `x = 1`, evaluated at effective time `t/ε`.
pub fn lognormal_cf_approx(
    t: f64,
    epsilon: f64,
    xi: &[f64],
    tol: f64,
) -> Result<(CharacteristicFunctionGrid, WildTruncation)> {
    if !(t > 0.0) {
        return domain(format!("diffusion time must be positive, got {t}"));
    }
    let effect = EffectDistribution::symmetric_two_point(epsilon)?;
    wild_cf(&DiracCf::new(1.0), &effect, t / epsilon, xi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::symmetric_grid;
    use statrs::function::gamma::gamma_ur;

    /// Average of `F̂(ξ Π(1+η_i))` over all `atoms^(k-1)` ordered paths.
    fn brute_force_coefficient(initial: &DiracCf, effect: &EffectDistribution, k: u64, xi: f64) -> Complex64 {
        let m = effect.multipliers();
        let mut paths = vec![(1.0f64, 1.0f64)];
        for _ in 1..k {
            paths = paths
                .iter()
                .flat_map(|&(w, r)| m.iter().map(move |&(rr, ww)| (w * ww, r * rr)))
                .collect();
        }
        paths
            .iter()
            .map(|&(w, r)| w * initial.eval(xi * r))
            .sum()
    }

    #[test]
    fn truncation_edge_cases() {
        let t = poisson_truncation(0.0, 1e-10).unwrap();
        assert_eq!((t.k_max, t.tail_mass), (0, 0.0));
        let t = poisson_truncation(1.0, 0.5).unwrap();
        assert!(t.k_max <= 2 && t.k_max >= 1);
        assert!(poisson_truncation(1.0, 0.0).is_err());
        assert!(poisson_truncation(-1.0, 0.1).is_err());
        assert!(matches!(
            poisson_truncation_capped(1e4, 1e-10, 5000),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn truncation_tail_matches_incomplete_gamma() {
        for &(tau, tol) in &[(500.0, 1e-10), (3.7, 1e-6), (5000.0, 1e-14)] {
            let t = poisson_truncation(tau, tol).unwrap();
            assert!(t.k_max >= (tau as f64).ceil() as u64);
            // P(K > k) = P(k+1, τ), regularized lower gamma
            let reference = 1.0 - gamma_ur(t.k_max as f64 + 1.0, tau);
            let reference_tail = statrs::function::gamma::gamma_lr(t.k_max as f64 + 1.0, tau);
            assert!(t.tail_mass <= tol);
            assert!((t.tail_mass - reference_tail).abs() <= 1e-3 * tol, "{t:?} vs {reference_tail}");
            let _ = reference;
            // one fewer term would exceed tol (unless clamped at ⌈τ⌉)
            if t.k_max > (tau as f64).ceil() as u64 {
                let prev = statrs::function::gamma::gamma_lr(t.k_max as f64, tau);
                assert!(prev > tol);
            }
        }
    }

    #[test]
    fn coefficient_base_and_mass() {
        let d = EffectDistribution::symmetric_two_point(0.02).unwrap();
        let f = DiracCf::new(1.0);
        assert_eq!(wild_coefficient_cf(&f, &d, 1, 0.8).unwrap(), f.eval(0.8));
        for k in 1..6 {
            assert_eq!(wild_coefficient_cf(&f, &d, k, 0.0).unwrap(), Complex64::new(1.0, 0.0));
        }
        assert!(wild_coefficient_cf(&f, &d, 0, 1.0).is_err());
    }

    #[test]
    fn coefficient_k3_enumerates_four_paths() {
        let d = EffectDistribution::symmetric_two_point(0.02).unwrap();
        let f = DiracCf::new(1.0);
        let got = wild_coefficient_cf(&f, &d, 3, 1.0).unwrap();
        let expect = [0.8f64 * 0.8, 0.8 * 1.2, 1.2 * 0.8, 1.2 * 1.2]
            .iter()
            .map(|r| 0.25 * Complex64::new(0.0, -r).exp())
            .sum::<Complex64>();
        assert!((got - expect).norm() < 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn closed_form_matches_path_enumeration_up_to_k12() {
        let effects = [
            EffectDistribution::symmetric_two_point(0.05).unwrap(),
            EffectDistribution::two_point_first_order(0.2).unwrap(),
            EffectDistribution::scaled_bounded(&[-0.6, 0.2, 0.8], &[0.4, 0.4, 0.2], 0.3).unwrap(),
        ];
        let f = DiracCf::new(1.3);
        for d in &effects {
            for k in 1..=12 {
                for &xi in &[0.3, -2.0, 7.5] {
                    let a = wild_coefficient_cf(&f, d, k, xi).unwrap();
                    let b = brute_force_coefficient(&f, d, k, xi);
                    assert!((a - b).norm() < 1e-12, "k = {k}, xi = {xi}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_time_and_null_effect() {
        let d = EffectDistribution::symmetric_two_point(0.1).unwrap();
        let f = DiracCf::new(2.0);
        let xi = symmetric_grid(&[0.1, 1.0, 5.0]);
        let (g, t) = wild_cf(&f, &d, 0.0, &xi, 1e-12).unwrap();
        assert_eq!(t.k_max, 0);
        for (x, v) in g.iter() {
            assert_eq!(v, f.eval(x));
        }
        let null = EffectDistribution::scaled_bounded(&[0.0], &[1.0], 0.5).unwrap();
        let (g, _) = wild_cf(&f, &null, 7.0, &xi, 1e-14).unwrap();
        for (x, v) in g.iter() {
            assert!((v - f.eval(x)).norm() < 1e-13);
        }
    }

    #[test]
    fn partial_masses_are_monotone_and_bounded() {
        let d = EffectDistribution::symmetric_two_point(0.01).unwrap();
        let table = WildTable::build(&d, 50.0, 1e-12).unwrap();
        let p = table.partial_masses();
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        let last = *p.last().unwrap();
        let t = table.truncation();
        assert!(last <= 1.0);
        assert!((last - (1.0 - t.tail_mass - table.dropped_mass())).abs() < 1e-14);
    }

    #[test]
    fn derivatives_at_origin_track_moments() {
        // i·f̂'(0) = mean, −f̂''(0) = second moment = m2(0) e^{λ2 τ}
        let d = EffectDistribution::symmetric_two_point(0.05).unwrap();
        let f = DiracCf::new(1.0);
        let tau = 3.0;
        let table = WildTable::build(&d, tau, 1e-15).unwrap();
        let h = 1e-4;
        let plus = table.eval(&f, h);
        let minus = table.eval(&f, -h);
        let first = (plus - minus) / (2.0 * h);
        assert!((first.im + 1.0).abs() < 1e-7, "{first}");
        let second = (plus + minus - 2.0) / (h * h);
        let m2 = (d.growth_rate(1.0, 2) * tau).exp();
        assert!((-second.re - m2).abs() < 1e-5 * m2, "{second} vs {m2}");
    }

    #[test]
    fn wild_sum_is_hermitian_and_bounded() {
        let xi = symmetric_grid(&[0.1, 0.5, 1.0, 3.0, 10.0]);
        let (g, t) = lognormal_cf_approx(0.5, 1e-2, &xi, 1e-14).unwrap();
        assert!(t.k_max >= 50);
        g.check_invariants(1e-12).unwrap();
        assert!(lognormal_cf_approx(0.0, 0.01, &xi, 1e-12).is_err());
        assert!(lognormal_cf_approx(0.5, 0.6, &xi, 1e-12).is_err());
    }
}
