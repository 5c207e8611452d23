use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gibrat_cli::config::DensitySpec;
use gibrat_core::cf::logspace;
use gibrat_cli::{execute, ExperimentConfig, RunConfig, RunOptions};

const BIN: &str = env!("CARGO_BIN_EXE_gibrat");

fn gibrat(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, cfg.canonical_json()).unwrap();
    p.to_str().unwrap().to_string()
}

fn out_arg(dir: &Path) -> String {
    dir.join("out").to_str().unwrap().to_string()
}

#[test]
fn mismatched_subcommand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &ExperimentConfig::default_for("first-order").unwrap());
    let o = gibrat(&["moments", "--config", &cfg, "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("first-order"));
}

#[test]
fn unknown_key_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"schema_version\": 1,\n  \"sede\": 3,\n  \"run\": {\"command\": \"first-order\"}\n}\n").unwrap();
    let o = gibrat(&["first-order", "--config", p.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

fn heavy_tailed(force: bool, dir: &Path) -> Output {
    let mut cfg = ExperimentConfig::default_for("converge").unwrap();
    if let RunConfig::Converge(c) = &mut cfg.run {
        // finite mean, divergent ∫ x (ln x)² u
        let x = logspace(1e-2, 1e12, 2048);
        let density = x
            .iter()
            .map(|v| (-1.0 / v).exp() / (v * v * (std::f64::consts::E + v).ln().powf(1.5)))
            .collect();
        c.initial = DensitySpec::Tabulated { x, density };
        c.times = vec![1.0, 2.0, 4.0];
        c.output_points = 1024;
    }
    let path = write_config(dir, &cfg);
    let mut args = vec!["converge", "--config", &path];
    let out = out_arg(dir);
    args.extend(["--out", &out]);
    if force {
        args.push("--force");
    }
    gibrat(&args)
}

#[test]
fn inadmissible_initial_datum_is_refused_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let refused = heavy_tailed(false, dir.path());
    assert_eq!(refused.status.code(), Some(2), "{}", String::from_utf8_lossy(&refused.stderr));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    let forced = heavy_tailed(true, dir.path());
    assert_ne!(forced.status.code(), Some(2), "{}", String::from_utf8_lossy(&forced.stderr));
    assert!(dir.path().join("out/convergence.csv").exists());
}

#[test]
fn failed_self_check_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for("moments").unwrap();
    if let RunConfig::Moments(c) = &mut cfg.run {
        c.particles = 1;
        c.times = vec![0.0, 3.0];
    }
    let path = write_config(dir.path(), &cfg);
    let o = gibrat(&["moments", "--config", &path, "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/moments.csv").exists());
}

#[test]
fn resource_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for("wild").unwrap();
    if let RunConfig::Wild(c) = &mut cfg.run {
        c.epsilons = vec![1e-7];
    }
    let path = write_config(dir.path(), &cfg);
    let o = gibrat(&["wild", "--config", &path, "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn env_overrides_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for("simulate").unwrap();
    if let RunConfig::Simulate(c) = &mut cfg.run {
        c.particles = 2000;
    }
    let path = write_config(dir.path(), &cfg);
    let o = Command::new(BIN)
        .args(["simulate", "--config", &path, "--out", &out_arg(dir.path())])
        .env("GIBRAT_SEED", "4242")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let emitted = ExperimentConfig::load(&dir.path().join("out/config.json")).unwrap();
    assert_eq!(emitted.seed, 4242);
}

#[test]
fn outputs_embed_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default_for("first-order").unwrap();
    let rep = execute(
        cfg,
        &RunOptions {
            out: dir.path().to_path_buf(),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert!(rep.passed());
    for f in rep.files.iter().filter(|f| !f.ends_with("config.json")) {
        let text = fs::read_to_string(f).unwrap();
        assert!(text.contains(&rep.config_sha256), "{}", f.display());
    }
    let emitted = ExperimentConfig::load(&dir.path().join("config.json")).unwrap();
    assert_eq!(emitted.hash(), rep.config_sha256);
}

#[test]
fn moments_rows_match_a_recomputed_ensemble() {
    use gibrat_core::{init_ensemble, EffectDistribution};
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for("moments").unwrap();
    cfg.seed = 5;
    let RunConfig::Moments(c) = &mut cfg.run else { unreachable!() };
    c.particles = 5000;
    c.times = vec![0.0, 1.5, 3.0];
    let c = c.clone();
    execute(
        cfg,
        &RunOptions {
            out: dir.path().to_path_buf(),
            ..RunOptions::default()
        },
    )
    .unwrap();
    let effect = EffectDistribution::try_from(c.effect.clone()).unwrap();
    let mut ens = init_ensemble(c.particles, &c.initial, 5, c.frequency).unwrap();
    let mut clock = 0.0;
    let mut expected = Vec::new();
    for &tau in &c.times {
        ens = ens.evolve_exact(&effect, tau - clock).unwrap();
        clock = tau;
        let m3 = ens.sizes().iter().map(|x| x.powi(3)).sum::<f64>() / ens.len() as f64;
        expected.push(m3);
    }
    let text = fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    let got: Vec<f64> = gibrat_cli::output::csv_body(&text)
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| r[1] == "3")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert!((g / e - 1.0).abs() < 1e-12, "{g} vs {e}");
    }
}

#[test]
fn symmetric_effect_keeps_the_mean_column_constant() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for("moments").unwrap();
    let RunConfig::Moments(c) = &mut cfg.run else { unreachable!() };
    c.effect = gibrat_core::EffectDistribution::symmetric_two_point(0.05).unwrap().to_config();
    c.particles = 2000;
    execute(
        cfg,
        &RunOptions {
            out: dir.path().to_path_buf(),
            ..RunOptions::default()
        },
    )
    .unwrap();
    let text = fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    let analytic: Vec<String> = gibrat_cli::output::csv_body(&text)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
        .filter(|r| r[1] == "1")
        .map(|r| r[3].clone())
        .collect();
    assert!(analytic.len() > 1 && analytic.iter().all(|a| a == "1.0"), "{analytic:?}");
}
