//! Executes a configuration and persists its outputs.

use std::io;
use std::path::Path;

use contmeas_core::classical::{classify_orbit, integrate_classical, poincare_map, spread_exponent, OrbitKind, PhasePoint};
use contmeas_core::fock::{build_ladder, coherent_state, husimi_q, recenter, PhaseSpaceState};
use contmeas_core::lindblad::{propagate, LindbladGenerator, LindbladSeries, PropagationOptions};
use contmeas_core::povm::{MeasurementStrength, OutcomeSampler, DEFAULT_SAMPLER_CELLS};
use contmeas_core::sse::{run_trajectory, MeasurementRates, MeasurementRecord, RecenterPolicy, Trajectory, TrajectoryConfig};
use contmeas_core::{DensityMatrix, FrameCenter, HbarS, Ladder, PhaseMoments, StateVector, C64};

use crate::config::{ConfigError, ExperimentConfig, HusimiSpec, Mode};
use crate::ensemble::{fan_out, observables, trajectory_rng, MomentAccumulator, OBSERVABLES};
use crate::output::{hex_digest, num, FileEntry, OutputDir, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("rejected parameters in {context}: {source}")]
    Model { context: String, source: contmeas_core::Error },
    #[error("numerical failure in {context}: {source}")]
    Numeric { context: String, source: contmeas_core::Error },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Model { .. } => 2,
            RunError::Numeric { .. } => 3,
            RunError::Io { .. } => 4,
        }
    }

    fn core(context: impl Into<String>, source: contmeas_core::Error) -> Self {
        let context = context.into();
        if source.is_numeric_failure() {
            RunError::Numeric { context, source }
        } else {
            RunError::Model { context, source }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<FileEntry>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: OutputDir,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        self.out.write(name, contents).map_err(|source| RunError::Io {
            path: self.out.path().join(name).display().to_string(),
            source,
        })
    }
}

/// Runs `cfg`, writing into `out_dir`. The manifest is written last, also
/// when the run fails after the directory was created; it then carries
/// `status = failed` and lists the files that were completed.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let out = OutputDir::create(out_dir).map_err(|source| RunError::Io { path: out_dir.display().to_string(), source })?;
    let mut ctx = Ctx { cfg, out };
    let canonical = cfg.to_text();
    let mut result = ctx.write("config.txt", &canonical);
    if result.is_ok() {
        result = match cfg.mode {
            Mode::Sse | Mode::SsePositionOnly | Mode::SseMomentumOnly => run_sse(&mut ctx),
            Mode::Lindblad => run_lindblad(&mut ctx),
            Mode::Classical => write_classical(&mut ctx),
            Mode::Poincare => run_poincare(&mut ctx),
            Mode::PovmSample => run_povm(&mut ctx),
        };
    }
    let mut header = vec![
        ("contmeas_core_version", contmeas_core::VERSION.to_string()),
        ("contmeas_version", env!("CARGO_PKG_VERSION").to_string()),
        ("scenario", cfg.scenario.clone()),
        ("mode", cfg.mode.name().to_string()),
        ("seed", cfg.seed.to_string()),
        ("config_sha256", hex_digest(canonical.as_bytes())),
        ("status", if result.is_ok() { "ok" } else { "failed" }.to_string()),
    ];
    if let Err(e) = &result {
        header.push(("error", e.to_string()));
    }
    let files = ctx
        .out
        .finish(&header)
        .map_err(|source| RunError::Io { path: out_dir.join("manifest.txt").display().to_string(), source })?;
    result.map(|()| RunSummary { files })
}

fn setup(cfg: &ExperimentConfig) -> Result<(Ladder, StateVector), RunError> {
    let hs = HbarS::new(cfg.hbar, cfg.s).map_err(|e| RunError::core("basis", e))?;
    let ladder = build_ladder(cfg.n_max, hs).map_err(|e| RunError::core("basis", e))?;
    let frame = FrameCenter::new(cfg.x0, cfg.p0).map_err(|e| RunError::core("initial state", e))?;
    let psi = coherent_state(hs.alpha(cfg.x0, cfg.p0), cfg.n_max, frame, &hs).map_err(|e| RunError::core("initial state", e))?;
    Ok((ladder, psi))
}

fn trajectory_config(cfg: &ExperimentConfig, rates: MeasurementRates) -> TrajectoryConfig {
    let mut tc = TrajectoryConfig::new(cfg.hamiltonian, rates, cfg.dt, cfg.t_final);
    tc.snapshot_interval = Some(cfg.snapshot_interval);
    tc.recenter = match cfg.recenter_threshold {
        Some(th) => RecenterPolicy::Threshold(th),
        None => RecenterPolicy::Never,
    };
    tc
}

fn snapshot_steps(cfg: &ExperimentConfig) -> usize {
    ((cfg.snapshot_interval / cfg.dt).round() as usize).max(1)
}

fn moments_row(t: f64, m: &PhaseMoments) -> Vec<String> {
    let mut row = vec![num(t)];
    row.extend(observables(m).iter().map(|v| num(*v)));
    row
}

fn moments_header() -> Vec<&'static str> {
    let mut h = vec!["t"];
    h.extend(OBSERVABLES);
    h
}

fn trajectory_table(tr: &Trajectory) -> String {
    let mut table = Table::with_meta(
        &format!("recenterings = {}; max_norm_drift = {}", tr.recenterings, num(tr.max_norm_drift)),
        &moments_header(),
    );
    for s in &tr.snapshots {
        table.row(&moments_row(s.t, &s.moments));
    }
    table.into_string()
}

fn record_table(rec: &MeasurementRecord) -> String {
    let mut header = vec!["t"];
    let mut cols: Vec<&[f64]> = Vec::new();
    if let (Some(dx), Some(x)) = (&rec.dx1, &rec.x1) {
        header.extend(["dW1", "dX1", "X1"]);
        cols.extend([rec.dw1.as_slice(), dx.as_slice(), x.as_slice()]);
    }
    if let (Some(dx), Some(x)) = (&rec.dx2, &rec.x2) {
        header.extend(["dW2", "dX2", "X2"]);
        cols.extend([rec.dw2.as_slice(), dx.as_slice(), x.as_slice()]);
    }
    header.push("norm_drift");
    cols.push(&rec.norm_drift);
    let mut table = Table::with_meta(&format!("stride = {}", rec.stride), &header);
    for (i, &t) in rec.times.iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(cols.iter().map(|c| num(c[i])));
        table.row(&row);
    }
    table.into_string()
}

fn husimi_name(t: f64) -> String {
    format!("husimi_t{t}.tsv")
}

fn husimi_table<S: PhaseSpaceState>(state: &S, hs: &HbarS, spec: &HusimiSpec, t: f64) -> String {
    let field = husimi_q(state, hs, &spec.grid);
    let g = &spec.grid;
    let meta = format!(
        "t = {t}; x_min = {}; x_max = {}; nx = {}; p_min = {}; p_max = {}; np = {}; rows are p, columns are x",
        num(g.x_min),
        num(g.x_max),
        g.nx,
        num(g.p_min),
        num(g.p_max),
        g.np
    );
    let header: Vec<String> = (0..g.nx).map(|i| format!("x{i}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::with_meta(&meta, &header);
    for row in field.values.chunks(g.nx) {
        table.row(&row.iter().map(|v| num(*v)).collect::<Vec<_>>());
    }
    table.into_string()
}

/// Index of the snapshot at time `t`, if `t` lies on the snapshot grid.
fn snapshot_index(times: impl IntoIterator<Item = f64>, t: f64, dt: f64) -> Option<usize> {
    times.into_iter().position(|s| (s - t).abs() < 0.5 * dt)
}

fn run_sse(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let rates = cfg.rates()?;
    let (ladder, psi0) = setup(cfg)?;
    let files = cfg.trajectory_files.unwrap_or(8).min(cfg.ensemble);
    let base = trajectory_config(cfg, rates);
    let results = fan_out(cfg.seed, 0..cfg.ensemble, |k, rng| {
        let mut tc = base.clone();
        if k < files {
            tc.record_stride = cfg.record_stride;
        }
        tc.keep_states = k == 0 && cfg.husimi.is_some();
        run_trajectory(&psi0, &ladder, &tc, rng)
    });

    let mut acc = MomentAccumulator::new();
    let mut failure = None;
    for (k, res) in results.iter().enumerate() {
        match res {
            Ok(tr) => {
                if k < files {
                    ctx.write(&format!("trajectory_{k}.tsv"), &trajectory_table(tr))?;
                    if let Some(rec) = &tr.record {
                        ctx.write(&format!("record_{k}.tsv"), &record_table(rec))?;
                    }
                }
                acc.add(&tr.snapshots);
            }
            Err(e) if failure.is_none() => failure = Some(RunError::core(format!("trajectory {k}"), e.clone())),
            Err(_) => {}
        }
    }
    if let (Some(spec), Some(Ok(first))) = (&cfg.husimi, results.first()) {
        let hs = ladder.hs();
        for &t in &spec.times {
            let idx = snapshot_index(first.snapshots.iter().map(|s| s.t), t, cfg.dt);
            if let Some(state) = idx.and_then(|i| first.snapshots[i].state.as_ref()) {
                ctx.write(&husimi_name(t), &husimi_table(state, &hs, spec, t))?;
            }
        }
    }
    if cfg.classical {
        write_classical(ctx)?;
    }
    if let Some(err) = failure {
        return Err(err);
    }
    ctx.write("ensemble_moments.tsv", &acc.to_table())
}

fn write_classical(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let start = PhasePoint::new(cfg.x0, cfg.p0).map_err(|e| RunError::core("classical trajectory", e))?;
    let tr = integrate_classical(&start, &cfg.hamiltonian, cfg.dt, cfg.t_final, snapshot_steps(cfg))
        .map_err(|e| RunError::core("classical trajectory", e))?;
    let mut table = Table::new(&["t", "x", "p", "energy"]);
    for (t, q) in tr.times.iter().zip(&tr.points) {
        table.row(&[num(*t), num(q.x), num(q.p), num(cfg.hamiltonian.energy(q.x, q.p, *t))]);
    }
    ctx.write("classical.tsv", &table.into_string())
}

fn run_lindblad(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let rates = cfg.rates()?;
    let (ladder, psi0) = setup(cfg)?;
    let hs = ladder.hs();
    let gen = LindbladGenerator::new(&ladder, cfg.hamiltonian, rates);
    let opts = PropagationOptions {
        snapshot_stride: snapshot_steps(cfg),
        recenter_threshold: cfg.recenter_threshold,
        ..PropagationOptions::default()
    };
    let series = propagate(&DensityMatrix::from_pure(&psi0), &gen, cfg.dt, cfg.t_final, &opts)
        .map_err(|e| RunError::core("lindblad propagation", e))?;

    let mut header = moments_header();
    header.push("purity");
    let meta = format!(
        "max_trace_error = {}; min_eigenvalue = {}; max_hermiticity_defect = {}",
        num(series.max_trace_error),
        num(series.min_eigenvalue),
        num(series.max_hermiticity_defect)
    );
    let mut table = Table::with_meta(&meta, &header);
    for (t, rho) in series.times.iter().zip(&series.states) {
        let mut row = moments_row(*t, &rho.moments(&ladder));
        row.push(num(rho.purity()));
        table.row(&row);
    }
    ctx.write("lindblad_moments.tsv", &table.into_string())?;
    if let Some(spec) = &cfg.husimi {
        for &t in &spec.times {
            if let Some(i) = snapshot_index(series.times.iter().copied(), t, cfg.dt) {
                ctx.write(&husimi_name(t), &husimi_table(&series.states[i], &hs, spec, t))?;
            }
        }
    }
    if cfg.classical {
        write_classical(ctx)?;
    }
    if cfg.ensemble > 0 {
        let distances = compare_with_ensemble(cfg, &ladder, &psi0, rates, &series)?;
        let mut table = Table::with_meta(&format!("trajectories = {}", cfg.ensemble), &["t", "trace_distance"]);
        for (t, d) in series.times.iter().zip(&distances) {
            table.row(&[num(*t), num(*d)]);
        }
        ctx.write("trace_distance.tsv", &table.into_string())?;
    }
    Ok(())
}

const COMPARISON_CHUNK: usize = 64;

/// Trace distance between the averaged SSE projectors and the Lindblad state
/// at every snapshot of `series`. Each conditional state is re-expanded in
/// the Lindblad frame of its snapshot before averaging.
pub fn compare_with_ensemble(
    cfg: &ExperimentConfig,
    ladder: &Ladder,
    psi0: &StateVector,
    rates: MeasurementRates,
    series: &LindbladSeries,
) -> Result<Vec<f64>, RunError> {
    let hs = ladder.hs();
    let mut tc = trajectory_config(cfg, rates);
    tc.keep_states = true;
    let frames: Vec<FrameCenter> = series.states.iter().map(|r| r.frame()).collect();
    let dim = ladder.dim();
    let mut sums = vec![nalgebra::DMatrix::<C64>::zeros(dim, dim); frames.len()];
    let mut start = 0;
    while start < cfg.ensemble {
        let end = (start + COMPARISON_CHUNK).min(cfg.ensemble);
        let chunk = fan_out(cfg.seed, start..end, |k, rng| -> Result<Vec<StateVector>, RunError> {
            let tr = run_trajectory(psi0, ladder, &tc, rng).map_err(|e| RunError::core(format!("trajectory {k}"), e))?;
            if tr.snapshots.len() != frames.len() {
                return Err(RunError::core(
                    format!("trajectory {k}"),
                    contmeas_core::Error::DimensionMismatch { expected: frames.len(), found: tr.snapshots.len() },
                ));
            }
            tr.snapshots
                .iter()
                .zip(&frames)
                .map(|(s, f)| {
                    let psi = s.state.as_ref().expect("states were kept");
                    recenter(psi, *f, &hs).map_err(|e| RunError::core(format!("trajectory {k} at t = {}", s.t), e))
                })
                .collect()
        });
        for states in chunk {
            for (sum, psi) in sums.iter_mut().zip(states?) {
                let v = psi.amps();
                *sum += v * v.adjoint();
            }
        }
        start = end;
    }
    let n = C64::new(cfg.ensemble as f64, 0.0);
    sums.into_iter()
        .zip(&series.states)
        .map(|(sum, rho)| {
            let avg = DensityMatrix::from_matrix_unchecked(sum / n, rho.frame());
            avg.trace_distance(rho).map_err(|e| RunError::core("trace distance", e))
        })
        .collect()
}

fn run_poincare(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let pc = &cfg.poincare;
    let seeds: Vec<PhasePoint> = (0..pc.seeds)
        .map(|k| {
            let x = if pc.seeds == 1 { pc.x_min } else { pc.x_min + (pc.x_max - pc.x_min) * k as f64 / (pc.seeds - 1) as f64 };
            PhasePoint::new(x, pc.p)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::core("poincare seeds", e))?;
    let maps = poincare_map(&seeds, &cfg.hamiltonian, pc.period, pc.n_strobes, cfg.dt).map_err(|e| RunError::core("poincare map", e))?;
    let mut points = Table::new(&["orbit", "strobe", "t", "x", "p"]);
    let mut orbits = Table::new(&["orbit", "x0", "p0", "spread_exponent", "kind"]);
    for (k, (seed, pts)) in seeds.iter().zip(&maps).enumerate() {
        for (j, q) in pts.iter().enumerate() {
            points.row(&[k.to_string(), j.to_string(), num(j as f64 * pc.period), num(q.x), num(q.p)]);
        }
        let exponent = spread_exponent(pts).map(num).unwrap_or_else(|| "nan".into());
        let kind = match classify_orbit(pts) {
            Some(OrbitKind::Regular) => "regular",
            Some(OrbitKind::Chaotic) => "chaotic",
            None => "unknown",
        };
        orbits.row(&[k.to_string(), num(seed.x), num(seed.p), exponent, kind.into()]);
    }
    ctx.write("poincare.tsv", &points.into_string())?;
    ctx.write("poincare_orbits.tsv", &orbits.into_string())
}

fn run_povm(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let (ladder, psi) = setup(cfg)?;
    let hs = ladder.hs();
    let sigma = MeasurementStrength::new(cfg.sigma.unwrap_or(1.0)).map_err(|e| RunError::core("povm", e))?;
    let sampler = OutcomeSampler::new(&psi, sigma, &ladder, DEFAULT_SAMPLER_CELLS).map_err(|e| RunError::core("povm", e))?;
    let mut rng = trajectory_rng(cfg.seed, 0);
    let mut samples = Table::new(&["k", "chi_re", "chi_im", "x1", "x2"]);
    let mut stats = [(0.0f64, 0.0f64); 3];
    for k in 0..cfg.samples {
        let o = sampler.sample(&mut rng);
        let (x1, x2) = o.readouts(&hs);
        samples.row(&[k.to_string(), num(o.chi.re), num(o.chi.im), num(x1), num(x2)]);
        for (acc, v) in stats.iter_mut().zip([o.chi.re, o.chi.im, o.chi.norm_sqr()]) {
            acc.0 += v;
            acc.1 += v * v;
        }
    }
    ctx.write("povm_samples.tsv", &samples.into_string())?;

    // lab-frame <a> and <a a^dag> of the prepared state
    let amps = psi.as_slice();
    let local = ladder.expect_a(amps);
    let mut la = vec![C64::new(0.0, 0.0); amps.len()];
    ladder.apply_a(amps, &mut la);
    let local_aad: f64 = la.iter().map(|z| z.norm_sqr()).sum::<f64>() + 1.0;
    let a0 = psi.frame().alpha(&hs);
    let mean_a = local + a0;
    let aad = local_aad + 2.0 * (a0.conj() * local).re + a0.norm_sqr();
    let predicted = [mean_a.re, mean_a.im, aad + sigma.excess_variance()];

    let n = cfg.samples as f64;
    let mut summary = Table::with_meta(&format!("samples = {}; sigma = {}", cfg.samples, num(sigma.sigma())), &["quantity", "sample_mean", "stderr", "predicted"]);
    for ((name, (s, s2)), want) in ["chi_re", "chi_im", "chi_abs2"].iter().zip(stats).zip(predicted) {
        let mean = s / n;
        let var = if cfg.samples > 1 { (s2 - n * mean * mean) / (n - 1.0) } else { 0.0 };
        summary.row(&[name.to_string(), num(mean), num((var.max(0.0) / n).sqrt()), num(want)]);
    }
    ctx.write("povm_summary.tsv", &summary.into_string())
}
