//! One runner per subcommand. Each writes its files and returns self-checks.

use gibrat_core::cf::{logspace, CfSource, CharacteristicFunctionGrid};
use gibrat_core::diffusion::{
    adapted_grid, check_initial_conditions, convergence_rate_fit, matched_source, solve, weighted_l1_distance,
    DiffusionRecord, LognormalSource,
};
use gibrat_core::first_order::{density_solution, moment_law, FirstOrderRecord};
use gibrat_core::fourier_metric::{d_s, error_bound, verify_bound, BoundParams, MetricGridSpec, MetricReport};
use gibrat_core::numerics::least_squares_line;
use gibrat_core::reference_oracles::{lognormal_cf_minus_one, QuadratureSpec};
use gibrat_core::wild_series::WildTable;
use gibrat_core::{init_ensemble, CharacteristicFn, DiracCf, EffectDistribution, GridDensity, InitialLaw};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    ConvergeConfig, DiffuseConfig, ExperimentConfig, FirstOrderConfig, MetricConfig, MomentsConfig, RunConfig,
    SimulateConfig, WildConfig,
};
use crate::output::{num, OutputDir, Table};
use crate::{AppError, Check};

pub fn run(config: &ExperimentConfig, force: bool, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let checks = match &config.run {
        RunConfig::Moments(c) => moments(c, config.seed, out)?,
        RunConfig::Simulate(c) => simulate(c, config.seed, out)?,
        RunConfig::Wild(c) => wild(c, &oracle_spec(config), out)?,
        RunConfig::Diffuse(c) => diffuse(c, out)?,
        RunConfig::Converge(c) => converge(c, force, out)?,
        RunConfig::FirstOrder(c) => first_order(c, out)?,
        RunConfig::Metric(c) => metric(c, &oracle_spec(config), out)?,
    };
    out.json("checks.json", &checks)?;
    Ok(checks)
}

fn oracle_spec(config: &ExperimentConfig) -> QuadratureSpec {
    let mut spec = QuadratureSpec::default();
    if let Some(tol) = config.oracle_tol {
        spec.rel_tol = tol;
    }
    spec
}

fn sorted_times(times: &[f64]) -> Result<(), AppError> {
    if times.is_empty() {
        return Err(AppError::Config("time list is empty".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(AppError::Config("times must be finite, nonnegative and ascending".into()));
    }
    Ok(())
}

fn relative(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a / b - 1.0).abs()
    }
}

/// `∫ x^n u₀(x) dx` of an initial law, in closed form where one exists.
pub fn initial_moment(law: &InitialLaw, n: u32) -> Result<f64, AppError> {
    Ok(match law {
        InitialLaw::Dirac { x0 } => x0.powi(n as i32),
        InitialLaw::Lognormal { t0, m } => LognormalSource::new(*t0, *m)?.moment(n),
        InitialLaw::Grid { density } => density.moment(n),
    })
}

#[derive(Debug, Serialize)]
struct MomentFit {
    n: u32,
    growth_rate: f64,
    fitted_slope: f64,
    relative_error: f64,
}

fn moments(c: &MomentsConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    sorted_times(&c.times)?;
    if c.orders.is_empty() {
        return Err(AppError::Config("no moment orders requested".into()));
    }
    let effect = EffectDistribution::try_from(c.effect.clone())?;
    let m0: Vec<f64> = c
        .orders
        .iter()
        .map(|&n| initial_moment(&c.initial, n))
        .collect::<Result<_, _>>()?;
    let mut ens = init_ensemble(c.particles, &c.initial, seed, c.frequency)?;
    let mut clock = 0.0;
    let mut table = Table::new(&["tau", "n", "empirical", "analytic", "stderr"]);
    let mut worst = (0.0f64, String::new());
    let mut series = vec![Vec::new(); c.orders.len()];
    for &tau in &c.times {
        ens = ens.evolve_exact(&effect, tau - clock)?;
        clock = tau;
        for (i, &n) in c.orders.iter().enumerate() {
            let est = ens.empirical_moment(n);
            let analytic = (effect.growth_rate(c.frequency, n) * tau).exp() * m0[i];
            let gap = (est.value - analytic).abs();
            let score = if est.standard_error > 0.0 {
                gap / (4.0 * est.standard_error)
            } else {
                relative(est.value, analytic) / 1e-12
            };
            if score > worst.0 {
                worst = (score, format!("tau = {tau}, n = {n}"));
            }
            if est.value > 0.0 {
                series[i].push((tau, est.value.ln()));
            }
            table.push(&[num(tau), n.to_string(), num(est.value), num(analytic), num(est.standard_error)]);
        }
    }
    out.csv(
        "moments.csv",
        "tau: time (dimensionless); empirical: ensemble mean of x^n; analytic: exp(lambda_n tau) m_n(0); stderr: plug-in standard error",
        &table,
    )?;
    let fits: Vec<MomentFit> = c
        .orders
        .iter()
        .zip(&series)
        .filter(|(_, s)| s.len() >= 2)
        .map(|(&n, s)| {
            let (ts, ys): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
            let (slope, _, _) = least_squares_line(&ts, &ys);
            let rate = effect.growth_rate(c.frequency, n);
            MomentFit {
                n,
                growth_rate: rate,
                fitted_slope: slope,
                relative_error: relative(slope, rate),
            }
        })
        .collect();
    out.json("moments_fit.json", &fits)?;
    Ok(vec![Check::new(
        "moments within 4 standard errors",
        worst.0 <= 1.0,
        format!("worst row {} at {:.3} of the allowance", worst.1, worst.0),
    )])
}

/// CF of the initial law for the Wild comparison. Lognormal data are tabulated.
fn initial_cf(law: &InitialLaw) -> Result<Box<dyn CharacteristicFn>, AppError> {
    Ok(match law {
        InitialLaw::Dirac { x0 } => Box::new(DiracCf::new(*x0)),
        InitialLaw::Lognormal { t0, m } => {
            let src = LognormalSource::new(*t0, *m)?;
            let centre = m.ln() - t0;
            let half = 14.0 * (2.0 * t0).sqrt();
            let x = logspace((centre - half).exp(), (centre + half).exp(), 4001);
            Box::new(src.on_grid(&x)?)
        }
        InitialLaw::Grid { density } => Box::new(density.clone()),
    })
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    time: f64,
    seed: u64,
    frequency: f64,
    n: usize,
    sup_cf_gap: f64,
    allowance: f64,
    histogram_underflow: f64,
    histogram_overflow: f64,
    wild_terms: usize,
}

fn simulate(c: &SimulateConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    if !(c.tau >= 0.0 && c.tau.is_finite()) {
        return Err(AppError::Config(format!("tau must be finite and nonnegative, got {}", c.tau)));
    }
    let effect = EffectDistribution::try_from(c.effect.clone())?;
    let ens = init_ensemble(c.particles, &c.initial, seed, c.frequency)?.evolve_exact(&effect, c.tau)?;
    let xi = c.xi.values()?;
    let mc = ens.empirical_cf(&xi);
    let initial = initial_cf(&c.initial)?;
    let wild = WildTable::build(&effect, c.frequency * c.tau, 1e-14)?;
    let reference = wild.eval_grid(initial.as_ref(), &xi);
    let mut table = Table::new(&["xi", "empirical_re", "empirical_im", "wild_re", "wild_im", "abs_diff"]);
    let mut sup = 0.0f64;
    for ((x, a), b) in xi.iter().zip(&mc.values).zip(&reference.values) {
        let d = (a - b).norm();
        sup = sup.max(d);
        table.push(&[num(*x), num(a.re), num(a.im), num(b.re), num(b.im), num(d)]);
    }
    out.csv(
        "cf.csv",
        "xi: frequency; empirical: ensemble CF; wild: truncated Wild sum at the same effective time",
        &table,
    )?;

    let edges = c.histogram.values()?;
    let hist = ens.histogram(&edges)?;
    let mut table = Table::new(&["x_low", "x_high", "x_centre", "mass", "density"]);
    for (i, m) in hist.bin_mass.iter().enumerate() {
        table.push(&[
            num(edges[i]),
            num(edges[i + 1]),
            num(hist.density.x()[i]),
            num(*m),
            num(hist.density.values()[i]),
        ]);
    }
    out.csv(
        "histogram.csv",
        "x: firm size; mass: fraction of particles in the bin; density: bin average of the empirical density",
        &table,
    )?;
    if c.export_sizes {
        let mut table = Table::new(&["size"]);
        for s in ens.sizes() {
            table.row(vec![num(*s)]);
        }
        out.csv("sizes.csv", "size: simulated firm size", &table)?;
    }
    let side = ens.sidecar();
    let allowance = 5.0 / (ens.len() as f64).sqrt();
    out.json(
        "ensemble.json",
        &SimulateSummary {
            time: side.time,
            seed: side.seed,
            frequency: side.frequency,
            n: side.n,
            sup_cf_gap: sup,
            allowance,
            histogram_underflow: hist.underflow,
            histogram_overflow: hist.overflow,
            wild_terms: wild.len(),
        },
    )?;
    Ok(vec![Check::new(
        "empirical CF within 5/sqrt(N) of the Wild sum",
        sup < allowance,
        format!("sup gap {sup:e}, allowance {allowance:e}"),
    )])
}

/// Unit-mean lognormal CF at time `t` on `xi`, evaluated in parallel.
pub fn oracle_grid(t: f64, xi: &[f64], spec: &QuadratureSpec) -> Result<CharacteristicFunctionGrid, AppError> {
    let values = xi
        .par_iter()
        .map(|&x| lognormal_cf_minus_one(t, 1.0, x, spec).map(|v| 1.0 + v))
        .collect::<Result<Vec<Complex64>, _>>()
        .map_err(|e| AppError::from(e).context("lognormal oracle"))?;
    Ok(CharacteristicFunctionGrid::new(xi.to_vec(), values, CfSource::Oracle)?)
}

#[derive(Debug, Serialize)]
pub struct WildLevel {
    pub epsilon: f64,
    pub tau_effective: f64,
    pub k_max: u64,
    pub terms: usize,
    pub sup_error: f64,
    pub d3: f64,
    pub d3_argmax_xi: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub d3_over_sqrt_eps: f64,
}

#[derive(Debug, Serialize)]
pub struct WildSummary {
    pub t: f64,
    pub levels: Vec<WildLevel>,
    /// Least-squares slope of ln(sup error) against ln ε.
    pub epsilon_exponent: Option<f64>,
    /// max/min of d3/√ε across the sweep.
    pub scaled_spread: Option<f64>,
}

fn wild(c: &WildConfig, spec: &QuadratureSpec, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    if !(c.t > 0.0) || c.epsilons.is_empty() {
        return Err(AppError::Config("wild needs t > 0 and at least one epsilon".into()));
    }
    if c.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(AppError::Config("epsilons must be listed in descending order".into()));
    }
    let xi = c.xi.values()?;
    let oracle = oracle_grid(c.t, &xi, spec)?;
    let metric_xi = c.metric.grid()?;
    let metric_oracle = oracle_grid(c.t, &metric_xi, spec)?;
    let initial = DiracCf::new(1.0);
    let mut table = Table::new(&["epsilon", "xi", "abs_error", "bound_times_xi3", "satisfied"]);
    let mut levels = Vec::new();
    let mut violations = 0usize;
    for &eps in &c.epsilons {
        let effect = EffectDistribution::symmetric_two_point(eps)?;
        let wild = WildTable::build(&effect, c.t / eps, c.tail_tol)?;
        let params = BoundParams {
            third_moment_rate: c.third_moment_rate,
            ..BoundParams::symmetric(eps, 1.0, c.t)
        };
        let bound = error_bound(&params)?;
        let kinetic = wild.eval_grid(&initial, &xi);
        let mut sup = 0.0f64;
        for ((x, a), b) in xi.iter().zip(&kinetic.values).zip(&oracle.values) {
            let err = (a - b).norm();
            sup = sup.max(err);
            let allowed = bound * x.abs().powi(3);
            violations += usize::from(err > allowed);
            table.push(&[num(eps), num(*x), num(err), num(allowed), (err <= allowed).to_string()]);
        }
        let check = verify_bound(&wild.eval_grid(&initial, &metric_xi), &metric_oracle, &params, &c.metric)?;
        let trunc = wild.truncation();
        levels.push(WildLevel {
            epsilon: eps,
            tau_effective: trunc.tau,
            k_max: trunc.k_max,
            terms: wild.len(),
            sup_error: sup,
            d3: check.measured,
            d3_argmax_xi: check.argmax_xi,
            bound,
            satisfied: check.satisfied,
            d3_over_sqrt_eps: check.scaled,
        });
    }
    out.csv(
        "wild.csv",
        "epsilon: effect scale; xi: frequency; abs_error: |Wild sum - quadrature oracle|; bound_times_xi3: d3 bound times |xi|^3",
        &table,
    )?;
    let summary = summarize_wild(c.t, levels);
    out.json("wild_fit.json", &summary)?;
    Ok(vec![
        Check::new(
            "d3 within the explicit bound at every epsilon",
            summary.levels.iter().all(|l| l.satisfied),
            summary
                .levels
                .iter()
                .map(|l| format!("eps {:e}: {:e} <= {:e}", l.epsilon, l.d3, l.bound))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Check::new(
            "pointwise errors within bound * |xi|^3",
            violations == 0,
            format!("{violations} of {} rows exceed", table.len()),
        ),
    ])
}

pub fn summarize_wild(t: f64, levels: Vec<WildLevel>) -> WildSummary {
    let usable: Vec<&WildLevel> = levels.iter().filter(|l| l.sup_error > 0.0).collect();
    let epsilon_exponent = (usable.len() >= 2).then(|| {
        let xs: Vec<f64> = usable.iter().map(|l| l.epsilon.ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|l| l.sup_error.ln()).collect();
        least_squares_line(&xs, &ys).0
    });
    let scaled: Vec<f64> = levels.iter().map(|l| l.d3_over_sqrt_eps).collect();
    let scaled_spread = (scaled.len() >= 2 && scaled.iter().all(|s| *s > 0.0)).then(|| {
        let hi = scaled.iter().copied().fold(f64::MIN, f64::max);
        let lo = scaled.iter().copied().fold(f64::MAX, f64::min);
        hi / lo
    });
    WildSummary {
        t,
        levels,
        epsilon_exponent,
        scaled_spread,
    }
}

#[derive(Debug, Serialize)]
struct DiffuseSummary {
    initial: DiffusionRecord,
    initial_conditions: gibrat_core::diffusion::InitialConditionReport,
    records: Vec<DiffusionRecord>,
}

fn diffuse(c: &DiffuseConfig, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    sorted_times(&c.times)?;
    let u0 = c.initial.build()?;
    let report = check_initial_conditions(&u0);
    let (lo, hi) = c.initial.bounds()?;
    let start = DiffusionRecord::of(&u0, 0.0, report.admissible);
    let mut table = Table::new(&["t", "x", "density"]);
    let mut records = Vec::new();
    let (mut mass_err, mut mean_err, mut m2_err) = (0.0f64, 0.0f64, 0.0f64);
    for &t in &c.times {
        let u = if t == 0.0 {
            u0.clone()
        } else {
            solve(&u0, t, &adapted_grid(lo, hi, t, c.output_points))?
        };
        let r = DiffusionRecord::of(&u, t, report.admissible);
        mass_err = mass_err.max(relative(r.mass, start.mass));
        mean_err = mean_err.max(relative(r.mean, start.mean));
        m2_err = m2_err.max(relative(r.m2, start.m2 * (2.0 * t).exp()));
        for (x, v) in u.x().iter().zip(u.values()) {
            table.push(&[num(t), num(*x), num(*v)]);
        }
        records.push(r);
    }
    out.csv(
        "diffuse.csv",
        "t: diffusion time; x: firm size; density: solution u(x, t) by multiplicative convolution with the source",
        &table,
    )?;
    out.json(
        "diffuse_records.json",
        &DiffuseSummary {
            initial: start,
            initial_conditions: report,
            records,
        },
    )?;
    Ok(vec![
        Check::new("mass preserved", mass_err <= 1e-8, format!("max relative change {mass_err:e}")),
        Check::new("mean preserved", mean_err <= 1e-8, format!("max relative change {mean_err:e}")),
        Check::new(
            "second moment grows like exp(2t)",
            m2_err <= 1e-5,
            format!("max relative error {m2_err:e}"),
        ),
    ])
}

#[derive(Debug, Serialize)]
struct ConvergeSummary {
    initial_conditions: gibrat_core::diffusion::InitialConditionReport,
    forced: bool,
    fit: Option<gibrat_core::diffusion::RateFit>,
}

fn converge(c: &ConvergeConfig, force: bool, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    sorted_times(&c.times)?;
    if c.times[0] <= 0.0 {
        return Err(AppError::Config("convergence times must be positive".into()));
    }
    let u0 = c.initial.build()?;
    let report = check_initial_conditions(&u0);
    if !report.admissible && !force {
        return Err(AppError::Config(format!(
            "initial datum is not admissible (log second moment {}, weighted entropy {}); \
             the large-time rate needs both finite; rerun with --force to proceed anyway",
            report.log_second_moment, report.weighted_entropy
        )));
    }
    let (lo, hi) = c.initial.bounds()?;
    let series = c
        .times
        .iter()
        .map(|&t| {
            let u = solve(&u0, t, &adapted_grid(lo, hi, t, c.output_points))?;
            let src = matched_source(&u, t)?;
            Ok((t, weighted_l1_distance(&u, &src)))
        })
        .collect::<Result<Vec<_>, AppError>>()?;
    let mut table = Table::new(&["t", "distance"]);
    for (t, d) in &series {
        table.push(&[num(*t), num(*d)]);
    }
    out.csv(
        "convergence.csv",
        "t: diffusion time; distance: integral of x |u - L| against the mean-matched source",
        &table,
    )?;
    let fit = if series.len() >= 3 && series.iter().all(|(_, d)| *d > 0.0) {
        Some(convergence_rate_fit(&series)?)
    } else {
        None
    };
    out.json(
        "convergence_fit.json",
        &ConvergeSummary {
            initial_conditions: report,
            forced: force,
            fit,
        },
    )?;
    let monotone = series.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-14);
    Ok(vec![Check::new(
        "distance to the source does not increase",
        monotone && series.iter().all(|(_, d)| d.is_finite()),
        series
            .iter()
            .map(|(t, d)| format!("{t}: {d:e}"))
            .collect::<Vec<_>>()
            .join(", "),
    )])
}

#[derive(Debug, Serialize)]
struct FirstOrderSummary {
    records: Vec<FirstOrderRecord>,
    log_m2_slope: Option<f64>,
}

fn first_order(c: &FirstOrderConfig, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    sorted_times(&c.times)?;
    let g0: GridDensity = c.initial.build()?;
    let (mean0, m20) = (g0.mean(), g0.moment(2));
    let mut table = Table::new(&["t", "atom_at_zero", "mean", "m2", "analytic_m2"]);
    let mut records = Vec::new();
    let (mut atom_err, mut mean_err, mut m2_err) = (0.0f64, 0.0f64, 0.0f64);
    for &t in &c.times {
        let r = FirstOrderRecord::of(&density_solution(&g0, t)?, t);
        let analytic = moment_law(m20, 2, t);
        atom_err = atom_err.max((r.atom_at_zero + (-t).exp_m1()).abs());
        mean_err = mean_err.max(relative(r.mean, mean0));
        m2_err = m2_err.max(relative(r.m2, analytic));
        table.push(&[num(t), num(r.atom_at_zero), num(r.mean), num(r.m2), num(analytic)]);
        records.push(r);
    }
    out.csv(
        "first_order.csv",
        "t: time; atom_at_zero: mass collapsed to zero; mean, m2: moments of the grid solution; analytic_m2: m2(0) exp(t)",
        &table,
    )?;
    let log_m2_slope = (records.len() >= 2).then(|| {
        let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.m2.ln()).collect();
        least_squares_line(&ts, &ys).0
    });
    out.json("first_order.json", &FirstOrderSummary { records, log_m2_slope })?;
    let mut checks = vec![
        Check::new("atom weight 1 - exp(-t)", atom_err <= 1e-12, format!("max error {atom_err:e}")),
        Check::new("mean conserved", mean_err <= 1e-10, format!("max relative change {mean_err:e}")),
        Check::new("m2 follows m2(0) exp(t)", m2_err <= 1e-8, format!("max relative error {m2_err:e}")),
    ];
    if let Some(s) = log_m2_slope {
        checks.push(Check::new("log m2 slope is 1", (s - 1.0).abs() <= 1e-8, format!("slope {s}")));
    }
    Ok(checks)
}

#[derive(Debug, Serialize)]
struct MetricEntry {
    epsilon: f64,
    report: MetricReport,
    refined: Option<MetricReport>,
    relative_change: Option<f64>,
}

fn metric(c: &MetricConfig, spec: &QuadratureSpec, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    if !(c.t > 0.0 && c.s > 0.0) || c.epsilons.is_empty() {
        return Err(AppError::Config("metric needs t > 0, s > 0 and at least one epsilon".into()));
    }
    let grids: Vec<MetricGridSpec> = if c.refine {
        vec![c.grid, c.grid.refined()]
    } else {
        vec![c.grid]
    };
    let oracles = grids
        .iter()
        .map(|g| oracle_grid(c.t, &g.grid()?, spec))
        .collect::<Result<Vec<_>, AppError>>()?;
    let initial = DiracCf::new(1.0);
    let mut table = Table::new(&["epsilon", "points_per_decade", "d_s", "argmax_xi", "bound", "satisfied"]);
    let mut entries = Vec::new();
    for &eps in &c.epsilons {
        let effect = EffectDistribution::symmetric_two_point(eps)?;
        let wild = WildTable::build(&effect, c.t / eps, c.tail_tol)?;
        let params = BoundParams {
            third_moment_rate: c.third_moment_rate,
            ..BoundParams::symmetric(eps, 1.0, c.t)
        };
        let bound = (c.s == 3.0).then(|| error_bound(&params)).transpose()?;
        let mut reports = Vec::new();
        for (g, oracle) in grids.iter().zip(&oracles) {
            let kinetic = wild.eval_grid(&initial, &oracle.xi);
            let m = d_s(&kinetic, oracle, c.s, g)?;
            let satisfied = bound.map(|b| m.value <= b);
            table.push(&[
                num(eps),
                g.points_per_decade.to_string(),
                num(m.value),
                num(m.argmax_xi),
                bound.map(num).unwrap_or_default(),
                satisfied.map(|s| s.to_string()).unwrap_or_default(),
            ]);
            reports.push(MetricReport {
                s: c.s,
                grid: *g,
                measured: m.value,
                argmax_xi: m.argmax_xi,
                bound,
                params: bound.map(|_| params),
                satisfied,
            });
        }
        let mut reports = reports.into_iter();
        let report = reports.next().expect("at least one grid");
        let refined = reports.next();
        let relative_change = refined.as_ref().map(|r| relative(r.measured, report.measured));
        entries.push(MetricEntry {
            epsilon: eps,
            report,
            refined,
            relative_change,
        });
    }
    out.csv(
        "metric.csv",
        "epsilon: effect scale; d_s: sup over the grid of |kinetic CF - lognormal CF| / |xi|^s; bound: explicit d3 bound (s = 3 only)",
        &table,
    )?;
    out.json("metric.json", &entries)?;
    let mut checks = Vec::new();
    if c.s == 3.0 {
        checks.push(Check::new(
            "d3 within the explicit bound",
            entries.iter().all(|e| e.report.satisfied == Some(true) && e.refined.as_ref().is_none_or(|r| r.satisfied == Some(true))),
            format!("{} epsilon levels", entries.len()),
        ));
    }
    if c.refine {
        let worst = entries.iter().filter_map(|e| e.relative_change).fold(0.0f64, f64::max);
        checks.push(Check::new(
            "doubling the grid density changes d_s by less than 1%",
            worst < 0.01,
            format!("max relative change {worst:e}"),
        ));
    }
    Ok(checks)
}

trait Context {
    fn context(self, what: &str) -> Self;
}

impl Context for AppError {
    fn context(self, what: &str) -> Self {
        match self {
            AppError::Config(m) => AppError::Config(format!("{what}: {m}")),
            AppError::Numerical(m) => AppError::Numerical(format!("{what}: {m}")),
            other => other,
        }
    }
}
