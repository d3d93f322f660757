//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use contmeas_core::sse::MeasurementRates;
use contmeas_core::{DrivenHamiltonianParams, PhaseGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("`{key}`: {msg}")]
    Invalid { key: &'static str, msg: String },
}

fn invalid(key: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sse,
    SsePositionOnly,
    SseMomentumOnly,
    Lindblad,
    Classical,
    Poincare,
    PovmSample,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Sse,
        Mode::SsePositionOnly,
        Mode::SseMomentumOnly,
        Mode::Lindblad,
        Mode::Classical,
        Mode::Poincare,
        Mode::PovmSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Sse => "sse",
            Mode::SsePositionOnly => "sse-position-only",
            Mode::SseMomentumOnly => "sse-momentum-only",
            Mode::Lindblad => "lindblad",
            Mode::Classical => "classical",
            Mode::Poincare => "poincare",
            Mode::PovmSample => "povm-sample",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_sse(self) -> bool {
        matches!(self, Mode::Sse | Mode::SsePositionOnly | Mode::SseMomentumOnly)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HusimiSpec {
    pub grid: PhaseGrid,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareSpec {
    pub seeds: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub p: f64,
    pub n_strobes: usize,
    pub period: f64,
}

impl Default for PoincareSpec {
    fn default() -> Self {
        PoincareSpec { seeds: 20, x_min: -3.0, x_max: 3.0, p: 0.0, n_strobes: 500, period: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub output: String,
    pub hbar: f64,
    pub s: f64,
    pub gamma: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub hamiltonian: DrivenHamiltonianParams,
    pub x0: f64,
    pub p0: f64,
    /// Highest Fock level kept; the basis holds `n_max + 1` states.
    pub n_max: usize,
    pub dt: f64,
    pub t_final: f64,
    pub ensemble: usize,
    pub snapshot_interval: f64,
    pub record_stride: Option<usize>,
    pub recenter_threshold: Option<f64>,
    pub classical: bool,
    /// Per-trajectory files written for the first this many trajectories.
    pub trajectory_files: Option<usize>,
    pub husimi: Option<HusimiSpec>,
    pub sigma: Option<f64>,
    pub samples: usize,
    pub poincare: PoincareSpec,
}

const KEYS: &[&str] = &[
    "scenario",
    "mode",
    "seed",
    "output",
    "hbar",
    "s",
    "gamma",
    "gamma1",
    "gamma2",
    "a",
    "b",
    "c",
    "d",
    "omega",
    "x0",
    "p0",
    "n_max",
    "dt",
    "t_final",
    "ensemble",
    "snapshot_interval",
    "record_stride",
    "recenter_threshold",
    "classical",
    "trajectory_files",
    "husimi_x_min",
    "husimi_x_max",
    "husimi_nx",
    "husimi_p_min",
    "husimi_p_max",
    "husimi_np",
    "husimi_times",
    "sigma",
    "samples",
    "poincare_seeds",
    "poincare_x_min",
    "poincare_x_max",
    "poincare_p",
    "n_strobes",
    "strobe_period",
];

pub fn known_keys() -> &'static [&'static str] {
    KEYS
}

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &'static str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| ConfigError::BadValue {
                line: *line,
                key: key.to_string(),
                msg: format!("cannot parse `{v}`"),
            }),
        }
    }

    fn real(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        let v = self.parsed::<f64>(key)?;
        if let (Some(x), Some((line, _))) = (v, self.raw(key)) {
            if !x.is_finite() {
                return Err(ConfigError::BadValue { line: *line, key: key.into(), msg: "must be finite".into() });
            }
        }
        Ok(v)
    }

    fn real_or(&self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.real(key)?.unwrap_or(default))
    }

    fn count_or(&self, key: &'static str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parsed::<usize>(key)?.unwrap_or(default))
    }

    fn flag(&self, key: &'static str) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(false),
            Some((_, v)) if v == "true" => Ok(true),
            Some((_, v)) if v == "false" => Ok(false),
            Some((line, v)) => Err(ConfigError::BadValue {
                line: *line,
                key: key.into(),
                msg: format!("expected true or false, found `{v}`"),
            }),
        }
    }

    fn reals(&self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some((line, v)) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|t| {
                t.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| ConfigError::BadValue {
                    line: *line,
                    key: key.into(),
                    msg: format!("cannot parse `{}`", t.trim()),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax { line, msg: format!("expected `key = value`, found `{body}`") });
        };
        let (k, v) = (k.trim(), v.trim());
        if v.is_empty() {
            return Err(ConfigError::Syntax { line, msg: format!("key `{k}` has no value") });
        }
        let Some(key) = KEYS.iter().copied().find(|known| *known == k) else {
            return Err(ConfigError::UnknownKey { line, key: k.to_string() });
        };
        if map.insert(key, (line, v.to_string())).is_some() {
            return Err(ConfigError::DuplicateKey { line, key: k.to_string() });
        }
    }
    Ok(Entries { map })
}

fn positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, "must be positive"))
    }
}

fn nonnegative(key: &'static str, v: Option<f64>) -> Result<Option<f64>, ConfigError> {
    match v {
        Some(x) if x < 0.0 => Err(invalid(key, "must be nonnegative")),
        _ => Ok(v),
    }
}

fn is_multiple(span: f64, dt: f64) -> bool {
    let n = (span / dt).round();
    n >= 1.0 && (n * dt - span).abs() <= 1e-9 * span.max(dt)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let e = tokenize(text)?;
        let mode_raw = e.raw("mode").ok_or(ConfigError::Missing("mode"))?;
        let mode = Mode::parse(&mode_raw.1).ok_or_else(|| ConfigError::BadValue {
            line: mode_raw.0,
            key: "mode".into(),
            msg: format!(
                "unknown mode `{}` (expected one of {})",
                mode_raw.1,
                Mode::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
            ),
        })?;
        let seed = e.parsed::<u64>("seed")?.ok_or(ConfigError::Missing("seed"))?;
        let hamiltonian = DrivenHamiltonianParams::new(
            e.real_or("a", 0.0)?,
            e.real_or("b", 0.0)?,
            e.real_or("c", 0.0)?,
            e.real_or("d", 0.0)?,
            e.real_or("omega", 0.0)?,
        )
        .map_err(|_| invalid("a", "Hamiltonian coefficients must be finite"))?;

        let husimi = match e.reals("husimi_times")? {
            None => None,
            Some(times) => {
                let nx = e.count_or("husimi_nx", 101)?;
                let np = e.count_or("husimi_np", 101)?;
                let grid = PhaseGrid::new(
                    e.real("husimi_x_min")?.ok_or(ConfigError::Missing("husimi_x_min"))?,
                    e.real("husimi_x_max")?.ok_or(ConfigError::Missing("husimi_x_max"))?,
                    nx,
                    e.real("husimi_p_min")?.ok_or(ConfigError::Missing("husimi_p_min"))?,
                    e.real("husimi_p_max")?.ok_or(ConfigError::Missing("husimi_p_max"))?,
                    np,
                )
                .map_err(|err| invalid("husimi_x_min", err.to_string()))?;
                Some(HusimiSpec { grid, times })
            }
        };

        let defaults = PoincareSpec::default();
        let poincare = PoincareSpec {
            seeds: e.count_or("poincare_seeds", defaults.seeds)?,
            x_min: e.real_or("poincare_x_min", defaults.x_min)?,
            x_max: e.real_or("poincare_x_max", defaults.x_max)?,
            p: e.real_or("poincare_p", defaults.p)?,
            n_strobes: e.count_or("n_strobes", defaults.n_strobes)?,
            period: e.real_or("strobe_period", defaults.period)?,
        };

        let cfg = ExperimentConfig {
            scenario: e.raw("scenario").map(|r| r.1.clone()).unwrap_or_else(|| "custom".into()),
            mode,
            seed,
            output: e.raw("output").map(|r| r.1.clone()).unwrap_or_else(|| "out".into()),
            hbar: e.real_or("hbar", 0.05)?,
            s: e.real_or("s", 1.0)?,
            gamma: e.real("gamma")?,
            gamma1: e.real("gamma1")?,
            gamma2: e.real("gamma2")?,
            hamiltonian,
            x0: e.real_or("x0", 0.0)?,
            p0: e.real_or("p0", 0.0)?,
            n_max: e.count_or("n_max", 63)?,
            dt: e.real_or("dt", 1e-4)?,
            t_final: e.real_or("t_final", 0.0)?,
            ensemble: e.count_or("ensemble", if mode == Mode::Lindblad { 0 } else { 1 })?,
            snapshot_interval: e.real_or("snapshot_interval", 0.01)?,
            record_stride: e.parsed::<usize>("record_stride")?,
            recenter_threshold: match e.real("recenter_threshold")? {
                Some(v) if v == 0.0 => None,
                Some(v) => Some(v),
                None => Some(1.0),
            },
            classical: e.flag("classical")?,
            trajectory_files: e.parsed::<usize>("trajectory_files")?,
            husimi,
            sigma: e.real("sigma")?,
            samples: e.count_or("samples", 10_000)?,
            poincare,
        };
        if mode.is_sse() || mode == Mode::Lindblad || mode == Mode::Classical {
            if e.raw("t_final").is_none() {
                return Err(ConfigError::Missing("t_final"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("hbar", self.hbar)?;
        positive("s", self.s)?;
        positive("dt", self.dt)?;
        nonnegative("gamma", self.gamma)?;
        nonnegative("gamma1", self.gamma1)?;
        nonnegative("gamma2", self.gamma2)?;
        if self.t_final < 0.0 {
            return Err(invalid("t_final", "must be nonnegative"));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        if self.scenario.chars().any(char::is_whitespace) {
            return Err(invalid("scenario", "must not contain whitespace"));
        }
        if let Some(th) = self.recenter_threshold {
            positive("recenter_threshold", th)?;
        }
        if self.record_stride == Some(0) {
            return Err(invalid("record_stride", "must be at least 1"));
        }
        let timed = self.mode.is_sse() || matches!(self.mode, Mode::Lindblad | Mode::Classical);
        if timed {
            positive("t_final", self.t_final)?;
            positive("snapshot_interval", self.snapshot_interval)?;
            if !is_multiple(self.t_final, self.dt) {
                return Err(invalid("t_final", "must be a whole number of steps dt"));
            }
            if !is_multiple(self.snapshot_interval, self.dt) {
                return Err(invalid("snapshot_interval", "must be a whole number of steps dt"));
            }
        }
        if self.mode.is_sse() && self.ensemble == 0 {
            return Err(invalid("ensemble", "must be at least 1"));
        }
        if let Some(h) = &self.husimi {
            for &t in &h.times {
                let on_grid = t == 0.0 || is_multiple(t, self.snapshot_interval);
                if !(t >= 0.0 && t <= self.t_final * (1.0 + 1e-12) && on_grid) {
                    return Err(invalid("husimi_times", format!("{t} is not a snapshot time")));
                }
            }
        }
        match self.mode {
            Mode::Sse | Mode::Lindblad => {
                self.rates()?;
            }
            Mode::SsePositionOnly => {
                if self.gamma.is_some() || self.gamma2.is_some() {
                    return Err(invalid("gamma2", "position-only runs take only gamma1"));
                }
                self.gamma1.ok_or(ConfigError::Missing("gamma1"))?;
            }
            Mode::SseMomentumOnly => {
                if self.gamma.is_some() || self.gamma1.is_some() {
                    return Err(invalid("gamma1", "momentum-only runs take only gamma2"));
                }
                self.gamma2.ok_or(ConfigError::Missing("gamma2"))?;
            }
            Mode::Classical => {}
            Mode::Poincare => {
                positive("strobe_period", self.poincare.period)?;
                if !is_multiple(self.poincare.period, self.dt) {
                    return Err(invalid("strobe_period", "must be a whole number of steps dt"));
                }
                if self.poincare.seeds == 0 {
                    return Err(invalid("poincare_seeds", "must be at least 1"));
                }
                if self.poincare.seeds > 1 && self.poincare.x_max <= self.poincare.x_min {
                    return Err(invalid("poincare_x_max", "must exceed poincare_x_min"));
                }
            }
            Mode::PovmSample => {
                let sigma = self.sigma.ok_or(ConfigError::Missing("sigma"))?;
                if !(sigma >= 1.0) {
                    return Err(invalid("sigma", "must be at least 1"));
                }
                if self.samples == 0 {
                    return Err(invalid("samples", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// The measurement channel this configuration describes.
    pub fn rates(&self) -> Result<MeasurementRates, ConfigError> {
        let wrap = |key: &'static str| move |e: contmeas_core::Error| invalid(key, e.to_string());
        match self.mode {
            Mode::SsePositionOnly => MeasurementRates::position_only(self.gamma1.unwrap_or(0.0)).map_err(wrap("gamma1")),
            Mode::SseMomentumOnly => MeasurementRates::momentum_only(self.gamma2.unwrap_or(0.0)).map_err(wrap("gamma2")),
            _ => match (self.gamma, self.gamma1, self.gamma2) {
                (Some(g), None, None) => MeasurementRates::joint(g).map_err(wrap("gamma")),
                (None, g1, g2) if g1.is_some() || g2.is_some() => {
                    MeasurementRates::from_quadrature_rates(g1.unwrap_or(0.0), g2.unwrap_or(0.0), self.s)
                        .map_err(wrap("gamma1"))
                }
                (None, None, None) => Err(ConfigError::Missing("gamma")),
                _ => Err(invalid("gamma", "give either gamma or gamma1/gamma2, not both")),
            },
        }
    }

    /// Canonical text form: every set key in a fixed order. Parsing it back
    /// gives the same configuration; its digest identifies the run.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("scenario", self.scenario.clone());
        put("mode", self.mode.name().into());
        put("seed", self.seed.to_string());
        put("output", self.output.clone());
        put("hbar", self.hbar.to_string());
        put("s", self.s.to_string());
        for (k, v) in [("gamma", self.gamma), ("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if let Some(v) = v {
                put(k, v.to_string());
            }
        }
        let h = &self.hamiltonian;
        for (k, v) in [("a", h.a), ("b", h.b), ("c", h.c), ("d", h.d), ("omega", h.omega)] {
            put(k, v.to_string());
        }
        put("x0", self.x0.to_string());
        put("p0", self.p0.to_string());
        put("n_max", self.n_max.to_string());
        put("dt", self.dt.to_string());
        put("t_final", self.t_final.to_string());
        put("ensemble", self.ensemble.to_string());
        put("snapshot_interval", self.snapshot_interval.to_string());
        if let Some(r) = self.record_stride {
            put("record_stride", r.to_string());
        }
        put("recenter_threshold", self.recenter_threshold.unwrap_or(0.0).to_string());
        put("classical", self.classical.to_string());
        if let Some(n) = self.trajectory_files {
            put("trajectory_files", n.to_string());
        }
        if let Some(hs) = &self.husimi {
            let g = &hs.grid;
            put("husimi_x_min", g.x_min.to_string());
            put("husimi_x_max", g.x_max.to_string());
            put("husimi_nx", g.nx.to_string());
            put("husimi_p_min", g.p_min.to_string());
            put("husimi_p_max", g.p_max.to_string());
            put("husimi_np", g.np.to_string());
            put("husimi_times", hs.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "));
        }
        if let Some(sig) = self.sigma {
            put("sigma", sig.to_string());
        }
        put("samples", self.samples.to_string());
        let pc = &self.poincare;
        put("poincare_seeds", pc.seeds.to_string());
        put("poincare_x_min", pc.x_min.to_string());
        put("poincare_x_max", pc.x_max.to_string());
        put("poincare_p", pc.p.to_string());
        put("n_strobes", pc.n_strobes.to_string());
        put("strobe_period", pc.period.to_string());
        out
    }
}
