use gibrat_core::cf::{linspace, logspace, symmetric_grid, CfSource, CharacteristicFn, CharacteristicFunctionGrid, DiracCf};
use gibrat_core::diffusion::{adapted_grid, solve, LognormalSource};
use gibrat_core::first_order::{cf_solution, density_solution, FirstOrderCf};
use gibrat_core::fourier_metric::{error_bound, BoundParams};
use gibrat_core::reference_oracles::{lognormal_cf_quadrature, QuadratureSpec};
use gibrat_core::wild_series::{wild_cf, WildTable};
use gibrat_core::{init_ensemble, EffectDistribution, GridDensity, InitialLaw};

fn bimodal(x: &[f64]) -> GridDensity {
    let a = LognormalSource::new(0.05, 0.5).unwrap();
    let b = LognormalSource::new(0.05, 2.0).unwrap();
    GridDensity::sample_on(x, |v| 0.5 * a.density(v).unwrap() + 0.5 * b.density(v).unwrap()).unwrap()
}

#[test]
fn monte_carlo_matches_wild_sum() {
    let n = 200_000;
    let effect = EffectDistribution::symmetric_two_point(0.05).unwrap();
    let tau = 4.0;
    let ens = init_ensemble(n, &InitialLaw::Dirac { x0: 1.0 }, 11, 1.0)
        .unwrap()
        .evolve_exact(&effect, tau)
        .unwrap();
    let xi = linspace(-10.0, 10.0, 41);
    let mc = ens.empirical_cf(&xi);
    let (wild, _) = wild_cf(&DiracCf::new(1.0), &effect, tau, &xi, 1e-14).unwrap();
    let gap = mc.sup_distance(&wild, 10.0).unwrap();
    assert!(gap < 5.0 / (n as f64).sqrt(), "gap {gap}");
}

#[test]
fn rescaled_kinetic_solution_approaches_transport_limit() {
    let t = 1.0;
    let xi = symmetric_grid(&logspace(0.05, 5.0, 24));
    let initial = DiracCf::new(1.0);
    let limit = CharacteristicFunctionGrid::from_fn(&xi, &FirstOrderCf { initial: &initial, t }, CfSource::Analytic);
    let gaps: Vec<f64> = [0.1, 0.03, 0.01]
        .iter()
        .map(|&eps| {
            let effect = EffectDistribution::two_point_first_order(eps).unwrap();
            let (g, _) = wild_cf(&initial, &effect, t / eps, &xi, 1e-14).unwrap();
            g.sup_distance(&limit, f64::INFINITY).unwrap()
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn transport_limit_concentrates_on_zero_while_mean_is_kept() {
    let g0 = bimodal(&logspace(1e-4, 1e4, 2000));
    let m0 = g0.mean();
    let mut last_atom = 0.0;
    for &t in &[1.0, 4.0, 12.0] {
        let g = density_solution(&g0, t).unwrap();
        assert!(g.atom_at_zero() > last_atom);
        last_atom = g.atom_at_zero();
        assert!((g.mean() - m0).abs() < 1e-10 * m0);
    }
    assert!(1.0 - last_atom < 1e-5);
    assert!((cf_solution(&g0, 12.0, 0.5) - 1.0).norm() < 1e-4);
}

#[test]
fn convolution_semigroup() {
    let x0 = logspace(1e-3, 1e3, 2048);
    let u0 = bimodal(&x0);
    let mid = adapted_grid(1e-3, 1e3, 0.3, 2048);
    let end = adapted_grid(1e-3, 1e3, 0.8, 1024);
    let two_step = solve(&solve(&u0, 0.3, &mid).unwrap(), 0.5, &end).unwrap();
    let direct = solve(&u0, 0.8, &end).unwrap();
    let peak = direct.values().iter().copied().fold(0.0, f64::max);
    let worst = two_step
        .values()
        .iter()
        .zip(direct.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6 * peak, "{worst} vs peak {peak}");
}

#[test]
fn moment_ladder() {
    let x0 = logspace(1e-3, 1e3, 2048);
    let u0 = bimodal(&x0);
    let initial: Vec<f64> = (0..4).map(|n| u0.moment(n)).collect();
    for &t in &[0.5, 2.0] {
        let u = solve(&u0, t, &adapted_grid(1e-3, 1e3, t, 4096)).unwrap();
        for n in 0..4u32 {
            let expect = initial[n as usize] * ((n * n.saturating_sub(1)) as f64 * t).exp();
            let got = u.moment(n);
            assert!((got / expect - 1.0).abs() < 1e-5, "n = {n}, t = {t}: {got} vs {expect}");
        }
    }
}

#[test]
fn diffusion_cf_agrees_with_kinetic_cf_within_bound() {
    let t0 = 0.1;
    let x0 = logspace(1e-4, 1e4, 1024);
    let src = LognormalSource::new(t0, 1.0).unwrap();
    let u0 = src.on_grid(&x0).unwrap();
    let t = 0.3;
    let eps = 1e-2;
    let u = solve(&u0, t, &adapted_grid(1e-4, 1e4, t, 2048)).unwrap();
    let effect = EffectDistribution::symmetric_two_point(eps).unwrap();
    let table = WildTable::build(&effect, t / eps, 1e-14).unwrap();
    let bound = error_bound(&BoundParams::symmetric(eps, src.moment(3), t)).unwrap();
    let exact = |xi: f64| lognormal_cf_quadrature(t0 + t, 1.0, xi, &QuadratureSpec::default()).unwrap();
    for &xi in &[0.05, 0.3, 1.0, 4.0] {
        let kinetic = table.eval(&u0, xi);
        let diffusion = u.cf(xi);
        assert!((diffusion - exact(xi)).norm() < 1e-6, "grid CF at {xi}");
        assert!((kinetic - diffusion).norm() / xi.powi(3) <= bound, "xi = {xi}");
    }
}

#[test]
fn lognormal_oracle_is_a_characteristic_function() {
    let spec = QuadratureSpec::default();
    for &xi in &[0.0, 0.1, 2.0, 30.0, 300.0] {
        let v = lognormal_cf_quadrature(0.5, 1.0, xi, &spec).unwrap();
        assert!(v.norm() <= 1.0 + 1e-14);
    }
    let d = DiracCf::new(1.0);
    assert_eq!(d.eval_minus_one(0.0).norm(), 0.0);
}
