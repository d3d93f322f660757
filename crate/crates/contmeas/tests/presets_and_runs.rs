use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs;
use std::path::Path;
use std::process::Command;

use contmeas::config::{ExperimentConfig, Mode};
use contmeas::core::sse::MeasurementRates;
use contmeas::core::DrivenHamiltonianParams;
use contmeas::presets::{self, PRESETS};
use contmeas::run;

fn integrable() -> DrivenHamiltonianParams {
    DrivenHamiltonianParams::new(5.0, 5.0, 1.0, 0.0, 0.0).unwrap()
}

fn chaotic() -> DrivenHamiltonianParams {
    DrivenHamiltonianParams::new(5.0, -8.0, 1.0, 15.0, 2.0 * PI).unwrap()
}

#[test]
fn every_preset_parses_and_round_trips() {
    for p in PRESETS {
        let cfg = p.config().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        assert_eq!(cfg.scenario, p.name);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}

#[test]
fn fig1c_encodes_the_integrable_joint_run() {
    let c = presets::find("fig1c").unwrap().config().unwrap();
    assert_eq!(c.mode, Mode::Sse);
    assert_eq!(c.gamma, Some(FRAC_1_SQRT_2));
    assert_eq!(c.rates().unwrap(), MeasurementRates::Joint { gamma: FRAC_1_SQRT_2 });
    assert_eq!(c.s, 1.0);
    assert_eq!(c.hbar, 0.05);
    assert_eq!(c.hamiltonian, integrable());
    assert_eq!((c.x0, c.p0), (-2.0, 1.0));
    assert_eq!(c.t_final, 4.0);
}

#[test]
fn fig2c_encodes_the_chaotic_joint_run() {
    let c = presets::find("fig2c").unwrap().config().unwrap();
    assert_eq!(c.rates().unwrap(), MeasurementRates::Joint { gamma: FRAC_1_SQRT_2 });
    assert_eq!(c.s, 1.0);
    assert_eq!(c.hbar, 0.05);
    assert_eq!(c.hamiltonian, chaotic());
    assert_eq!((c.x0, c.p0), (-2.0, 1.0));
    assert_eq!(c.t_final, 5.0);
}

#[test]
fn fig3_encodes_the_near_classical_run() {
    let c = presets::find("fig3").unwrap().config().unwrap();
    assert_eq!(c.rates().unwrap(), MeasurementRates::Joint { gamma: FRAC_1_SQRT_2 });
    assert_eq!(c.hbar, 1e-6);
    assert_eq!(c.hamiltonian, chaotic());
    assert_eq!((c.x0, c.p0), (-2.0, 1.0));
    assert!(c.classical);
}

#[test]
fn remaining_presets_use_the_published_channels() {
    let rates = |n: &str| presets::find(n).unwrap().config().unwrap().rates().unwrap();
    assert_eq!(rates("fig1b"), MeasurementRates::Unmeasured);
    assert_eq!(rates("fig1d"), MeasurementRates::PositionOnly { gamma1: 1.0 });
    assert_eq!(rates("fig2b"), MeasurementRates::Unmeasured);
    assert_eq!(rates("fig2d"), MeasurementRates::MomentumOnly { gamma2: 1.0 });
    let a = presets::find("fig2a").unwrap().config().unwrap();
    assert_eq!(a.mode, Mode::Poincare);
    assert_eq!(a.hamiltonian, chaotic());
    assert_eq!(a.poincare.period, 1.0);
}

fn small_sse(extra: &str) -> ExperimentConfig {
    let text = format!(
        "scenario = small\nmode = sse\nseed = 5\nhbar = 0.05\ngamma = 0.7\na = 5\nb = 5\nc = 1\nx0 = -1\np0 = 0.5\nn_max = 47\ndt = 0.001\nt_final = 0.1\nsnapshot_interval = 0.02\nrecord_stride = 5\n{extra}"
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("manifest.txt")).unwrap()
}

#[test]
fn sse_run_writes_every_listed_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_sse("ensemble = 3\nclassical = true\nhusimi_times = 0, 0.1\nhusimi_x_min = -2\nhusimi_x_max = 0\nhusimi_nx = 11\nhusimi_p_min = -1\nhusimi_p_max = 2\nhusimi_np = 7\n");
    let summary = run(&cfg, tmp.path()).unwrap();
    let names: Vec<&str> = summary.files.iter().map(|f| f.name.as_str()).collect();
    for want in [
        "config.txt",
        "trajectory_0.tsv",
        "trajectory_2.tsv",
        "record_1.tsv",
        "ensemble_moments.tsv",
        "classical.tsv",
        "husimi_t0.tsv",
        "husimi_t0.1.tsv",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    let m = manifest(tmp.path());
    assert!(m.contains("status = ok"));
    assert!(m.contains("seed = 5"));
    for f in &summary.files {
        let bytes = fs::read(tmp.path().join(&f.name)).unwrap();
        assert_eq!(bytes.len(), f.bytes);
        assert_eq!(contmeas::output::hex_digest(&bytes), f.sha256);
        assert!(m.contains(&f.sha256));
    }
    let traj = fs::read_to_string(tmp.path().join("trajectory_0.tsv")).unwrap();
    assert_eq!(traj.lines().count(), 2 + 6);
    let husimi = fs::read_to_string(tmp.path().join("husimi_t0.1.tsv")).unwrap();
    assert_eq!(husimi.lines().count(), 2 + 7);
    assert!(husimi.lines().nth(2).unwrap().split('\t').count() == 11);
    let record = fs::read_to_string(tmp.path().join("record_0.tsv")).unwrap();
    assert!(record.lines().nth(1).unwrap().starts_with("t\tdW1\tdX1\tX1\tdW2"));
    assert_eq!(record.lines().count(), 2 + 20);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_sse("ensemble = 4\n");
    run(&cfg, a.path()).unwrap();
    run(&cfg, b.path()).unwrap();
    assert_eq!(manifest(a.path()), manifest(b.path()));
    let c = tempfile::tempdir().unwrap();
    let mut other = cfg.clone();
    other.seed = 6;
    run(&other, c.path()).unwrap();
    assert_ne!(
        fs::read(a.path().join("trajectory_0.tsv")).unwrap(),
        fs::read(c.path().join("trajectory_0.tsv")).unwrap()
    );
}

#[test]
fn ensemble_order_does_not_depend_on_size() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&small_sse("ensemble = 2\n"), a.path()).unwrap();
    run(&small_sse("ensemble = 5\n"), b.path()).unwrap();
    assert_eq!(
        fs::read(a.path().join("trajectory_1.tsv")).unwrap(),
        fs::read(b.path().join("trajectory_1.tsv")).unwrap()
    );
}

#[test]
fn overflow_keeps_partial_outputs_and_marks_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(
        "mode = sse\nseed = 1\ngamma = 0\na = 5\nb = 5\nc = 1\nx0 = -2\np0 = 1\nn_max = 15\ndt = 0.001\nt_final = 1\nclassical = true\n",
    )
    .unwrap();
    let err = run(&cfg, tmp.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("trajectory 0"), "{err}");
    let m = manifest(tmp.path());
    assert!(m.contains("status = failed"));
    assert!(m.contains("truncation overflow"));
    assert!(m.contains("classical.tsv"));
    assert!(!tmp.path().join("ensemble_moments.tsv").exists());
}

#[test]
fn lindblad_mode_compares_with_the_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(
        "mode = lindblad\nseed = 2\ngamma = 0.7\na = 5\nb = 5\nc = 1\nx0 = -1\np0 = 0.5\nn_max = 31\ndt = 0.001\nt_final = 0.05\nsnapshot_interval = 0.025\nensemble = 200\n",
    )
    .unwrap();
    run(&cfg, tmp.path()).unwrap();
    let td = fs::read_to_string(tmp.path().join("trace_distance.tsv")).unwrap();
    let values: Vec<f64> = td.lines().skip(2).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 3);
    assert!(values[0] < 1e-12);
    assert!(values.iter().all(|v| *v < 0.5), "{values:?}");
    assert!(tmp.path().join("lindblad_moments.tsv").exists());
}

#[test]
fn auxiliary_modes_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("mode = poincare\nseed = 0\na = 5\nb = -8\nc = 1\nd = 15\nomega = 6.283185307179586\ndt = 0.01\npoincare_seeds = 3\nn_strobes = 20\n").unwrap();
    run(&cfg, tmp.path()).unwrap();
    let pts = fs::read_to_string(tmp.path().join("poincare.tsv")).unwrap();
    assert_eq!(pts.lines().count(), 1 + 3 * 21);
    assert_eq!(fs::read_to_string(tmp.path().join("poincare_orbits.tsv")).unwrap().lines().count(), 4);

    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("mode = povm-sample\nseed = 0\nsigma = 2\nsamples = 20000\nx0 = 0.3\np0 = -0.2\nn_max = 40\n").unwrap();
    run(&cfg, tmp.path()).unwrap();
    let summary = fs::read_to_string(tmp.path().join("povm_summary.tsv")).unwrap();
    for line in summary.lines().skip(2) {
        let f: Vec<&str> = line.split('\t').collect();
        let (mean, se, want): (f64, f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!((mean - want).abs() < 4.0 * se, "{line}");
    }

    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("mode = classical\nseed = 0\na = 5\nb = 5\nc = 1\nx0 = -2\np0 = 1\ndt = 0.001\nt_final = 1\nsnapshot_interval = 0.1\n").unwrap();
    run(&cfg, tmp.path()).unwrap();
    assert_eq!(fs::read_to_string(tmp.path().join("classical.tsv")).unwrap().lines().count(), 12);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contmeas"))
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "mode = sse\nseed = 1\ngama = 1\n").unwrap();
    let out = cli().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let good = tmp.path().join("good.cfg");
    let dir = tmp.path().join("run");
    fs::write(&good, format!("mode = classical\nseed = 1\na = 1\nb = 1\ndt = 0.01\nt_final = 0.1\noutput = {}\n", dir.display())).unwrap();
    assert_eq!(cli().arg("validate").arg(&good).status().unwrap().code(), Some(0));
    assert_eq!(cli().arg("run").arg(&good).status().unwrap().code(), Some(0));
    assert!(dir.join("manifest.txt").exists());

    assert_eq!(cli().arg("run").arg(tmp.path().join("missing.cfg")).status().unwrap().code(), Some(4));
    assert_eq!(cli().args(["preset", "fig9"]).status().unwrap().code(), Some(2));
    let list = cli().arg("list-presets").output().unwrap();
    let text = String::from_utf8_lossy(&list.stdout);
    for p in PRESETS {
        assert!(text.contains(p.name));
    }

    let numeric = tmp.path().join("overflow.cfg");
    fs::write(
        &numeric,
        format!("mode = sse\nseed = 1\ngamma = 0\na = 5\nb = 5\nc = 1\nx0 = -2\np0 = 1\nn_max = 15\ndt = 0.001\nt_final = 1\noutput = {}\n", tmp.path().join("o").display()),
    )
    .unwrap();
    assert_eq!(cli().arg("run").arg(&numeric).status().unwrap().code(), Some(3));
}

#[test]
fn preset_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fig2a");
    let status = cli().args(["preset", "fig2a", "--seed", "11", "--out"]).arg(&dir).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let m = manifest(&dir);
    assert!(m.contains("seed = 11"));
    assert!(m.contains("scenario = fig2a"));
    assert!(fs::read_to_string(dir.join("config.txt")).unwrap().contains(&format!("output = {}", dir.display())));
}
