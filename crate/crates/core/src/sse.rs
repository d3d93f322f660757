//! Conditional evolution under continuous phase-space measurement.
//!
//! One step is a Strang split of the Hamiltonian part (half potential, full
//! kinetic, half potential, each diagonal in the eigenbasis of the truncated
//! quadrature) followed by a single Euler-Maruyama update with the measurement
//! drift and noise, and a renormalization.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fock::{self, FrameCenter, Ladder, PhaseMoments, StateVector, C64};
use crate::hamiltonian::{frame_kinetic, frame_potential, DrivenHamiltonianParams};
use crate::linalg::Banded;
use crate::linalg;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Which quadratures are monitored, and how strongly.
///
/// With squeezing `s`, the joint measurement has `Gamma1 = gamma s` and
/// `Gamma2 = gamma / s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementRates {
    Unmeasured,
    Joint { gamma: f64 },
    PositionOnly { gamma1: f64 },
    MomentumOnly { gamma2: f64 },
}

impl MeasurementRates {
    pub fn joint(gamma: f64) -> Result<Self> {
        check_rate("gamma", gamma)?;
        Ok(if gamma == 0.0 {
            MeasurementRates::Unmeasured
        } else {
            MeasurementRates::Joint { gamma }
        })
    }

    pub fn position_only(gamma1: f64) -> Result<Self> {
        check_rate("gamma1", gamma1)?;
        Ok(if gamma1 == 0.0 {
            MeasurementRates::Unmeasured
        } else {
            MeasurementRates::PositionOnly { gamma1 }
        })
    }

    pub fn momentum_only(gamma2: f64) -> Result<Self> {
        check_rate("gamma2", gamma2)?;
        Ok(if gamma2 == 0.0 {
            MeasurementRates::Unmeasured
        } else {
            MeasurementRates::MomentumOnly { gamma2 }
        })
    }

    /// From the quadrature rates. Both nonzero requires `Gamma1 / Gamma2 = s^2`.
    pub fn from_quadrature_rates(gamma1: f64, gamma2: f64, s: f64) -> Result<Self> {
        check_rate("gamma1", gamma1)?;
        check_rate("gamma2", gamma2)?;
        match (gamma1 > 0.0, gamma2 > 0.0) {
            (false, false) => Ok(MeasurementRates::Unmeasured),
            (true, false) => Ok(MeasurementRates::PositionOnly { gamma1 }),
            (false, true) => Ok(MeasurementRates::MomentumOnly { gamma2 }),
            (true, true) => {
                let gamma = (gamma1 * gamma2).sqrt();
                if ((gamma1 / gamma2).sqrt() - s).abs() > 1e-9 * s {
                    return Err(Error::invalid(
                        "gamma1/gamma2",
                        "joint measurement needs Gamma1/Gamma2 = s^2",
                    ));
                }
                Ok(MeasurementRates::Joint { gamma })
            }
        }
    }

    pub fn gamma1(&self, s: f64) -> f64 {
        match *self {
            MeasurementRates::Joint { gamma } => gamma * s,
            MeasurementRates::PositionOnly { gamma1 } => gamma1,
            _ => 0.0,
        }
    }

    pub fn gamma2(&self, s: f64) -> f64 {
        match *self {
            MeasurementRates::Joint { gamma } => gamma / s,
            MeasurementRates::MomentumOnly { gamma2 } => gamma2,
            _ => 0.0,
        }
    }

    pub fn is_measured(&self) -> bool {
        !matches!(self, MeasurementRates::Unmeasured)
    }
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "rate must be nonnegative and finite"))
    }
}

/// Real Wiener increments; `dxi = (dW1 + i dW2) / sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseIncrement {
    pub dw1: f64,
    pub dw2: f64,
}

impl NoiseIncrement {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> Self {
        let sd = dt.sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        NoiseIncrement { dw1: sd * z1, dw2: sd * z2 }
    }

    pub fn dxi(&self) -> C64 {
        C64::new(self.dw1, self.dw2) * core::f64::consts::FRAC_1_SQRT_2
    }
}

/// Strang-split propagator for `H` on a fixed frame.
#[derive(Debug, Clone)]
pub struct SplitPropagator<'a> {
    ladder: &'a Ladder,
    params: DrivenHamiltonianParams,
    dt: f64,
    frame: FrameCenter,
    static_potential: Banded,
    kinetic: Banded,
    potential: Banded,
    has_potential: bool,
    has_kinetic: bool,
}

impl<'a> SplitPropagator<'a> {
    pub fn new(ladder: &'a Ladder, params: DrivenHamiltonianParams, dt: f64, frame: FrameCenter) -> Self {
        let n = ladder.dim();
        let mut prop = SplitPropagator {
            ladder,
            params,
            dt,
            frame,
            static_potential: Banded::zeros(n, 4),
            kinetic: Banded::zeros(n, 2),
            potential: Banded::zeros(n, 4),
            has_potential: params.b != 0.0 || params.c != 0.0 || params.d != 0.0,
            has_kinetic: params.a != 0.0,
        };
        prop.set_frame(frame);
        prop
    }

    pub fn frame(&self) -> FrameCenter {
        self.frame
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Rebuilds the frame-local potential and kinetic operators. Scalar
    /// offsets only contribute a global phase and are left out.
    pub fn set_frame(&mut self, frame: FrameCenter) {
        self.frame = frame;
        let powers = self.ladder.powers();
        self.static_potential = frame_potential(&self.params, 0.0, powers, frame.x0, false);
        self.kinetic = frame_kinetic(&self.params, powers, frame.p0, false);
    }

    fn potential_half(&mut self, amps: &mut [C64], t_mid: f64) {
        let hbar = self.ladder.hs().hbar();
        let theta = C64::new(0.0, -self.dt / (2.0 * hbar));
        let drive = self.params.drive(t_mid);
        let moved = if drive == 0.0 {
            linalg::expm_banded_apply(&self.static_potential, theta, amps)
        } else {
            self.potential.clone_from(&self.static_potential);
            self.potential.add_scaled(&self.ladder.powers().x[0], C64::new(drive, 0.0));
            linalg::expm_banded_apply(&self.potential, theta, amps)
        };
        amps.copy_from_slice(&moved);
    }

    fn kinetic_full(&mut self, amps: &mut [C64]) {
        let theta = C64::new(0.0, -self.dt / self.ladder.hs().hbar());
        let moved = linalg::expm_banded_apply(&self.kinetic, theta, amps);
        amps.copy_from_slice(&moved);
    }

    /// Advances `amps` from `t` to `t + dt` under `H` alone, up to a global phase.
    pub fn apply(&mut self, amps: &mut [C64], t: f64) {
        let t_mid = t + 0.5 * self.dt;
        if self.has_potential {
            self.potential_half(amps, t_mid);
        }
        if self.has_kinetic {
            self.kinetic_full(amps);
        }
        if self.has_potential {
            self.potential_half(amps, t_mid);
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// `||psi'||^2 - 1` before renormalization.
    pub norm_drift: f64,
    /// Lab-frame `<x>` and `<p>` of the state the measurement update acted on.
    pub measured_x: f64,
    pub measured_p: f64,
}

/// Measurement update plus renormalization on raw amplitudes, reusing
/// scratch space across steps.
#[derive(Debug, Clone)]
pub struct MeasurementUpdate<'a> {
    ladder: &'a Ladder,
    rates: MeasurementRates,
    dt: f64,
    b1: Vec<C64>,
    b2: Vec<C64>,
    b3: Vec<C64>,
}

impl<'a> MeasurementUpdate<'a> {
    pub fn new(ladder: &'a Ladder, rates: MeasurementRates, dt: f64) -> Self {
        let n = ladder.dim();
        MeasurementUpdate {
            ladder,
            rates,
            dt,
            b1: vec![ZERO; n],
            b2: vec![ZERO; n],
            b3: vec![ZERO; n],
        }
    }

    /// Applies the Euler-Maruyama measurement terms to a normalized `amps`.
    /// Returns `(norm_drift, <x>_local, <p>_local)`; `amps` is renormalized.
    pub fn apply(&mut self, amps: &mut [C64], noise: &NoiseIncrement) -> (f64, f64, f64) {
        let hs = self.ladder.hs();
        let hbar = hs.hbar();
        let dt = self.dt;
        let alpha = self.ladder.expect_a(amps);
        let (mx, mp) = hs.point(alpha);
        match self.rates {
            MeasurementRates::Unmeasured => return (0.0, mx, mp),
            MeasurementRates::Joint { gamma } => {
                // b1 = A psi, b2 = A^dag psi, b3 = A^dag A psi, A = a - <a>
                self.ladder.apply_a(amps, &mut self.b1);
                for (b, z) in self.b1.iter_mut().zip(amps.iter()) {
                    *b -= alpha * z;
                }
                self.ladder.apply_adag(amps, &mut self.b2);
                for (b, z) in self.b2.iter_mut().zip(amps.iter()) {
                    *b -= alpha.conj() * z;
                }
                self.ladder.apply_adag(&self.b1, &mut self.b3);
                for (b, z) in self.b3.iter_mut().zip(self.b1.iter()) {
                    *b -= alpha.conj() * z;
                }
                let dxi = noise.dxi();
                let sg = gamma.sqrt();
                let up = dxi * sg;
                let down = dxi.conj() * sg;
                let g = gamma * dt;
                for k in 0..amps.len() {
                    let z = amps[k];
                    amps[k] = z - (self.b3[k] + z * 0.5) * g + self.b2[k] * up + self.b1[k] * down;
                }
            }
            MeasurementRates::PositionOnly { gamma1 } => {
                self.single_quadrature(amps, gamma1 / hbar, noise.dw1, mx, true);
            }
            MeasurementRates::MomentumOnly { gamma2 } => {
                self.single_quadrature(amps, gamma2 / hbar, noise.dw2, mp, false);
            }
        }
        let n2 = linalg::vec_norm_sqr(amps);
        let inv = 1.0 / n2.sqrt();
        for z in amps.iter_mut() {
            *z *= inv;
        }
        (n2 - 1.0, mx, mp)
    }

    /// `psi += -(k/2) (q - <q>)^2 psi dt + sqrt(k) (q - <q>) psi dW`
    fn single_quadrature(&mut self, amps: &mut [C64], k: f64, dw: f64, mean: f64, position: bool) {
        let apply = |l: &Ladder, v: &[C64], out: &mut [C64]| {
            if position {
                l.apply_x(v, out)
            } else {
                l.apply_p(v, out)
            }
        };
        apply(self.ladder, amps, &mut self.b1);
        for (b, z) in self.b1.iter_mut().zip(amps.iter()) {
            *b -= z * mean;
        }
        apply(self.ladder, &self.b1, &mut self.b2);
        for (b, z) in self.b2.iter_mut().zip(self.b1.iter()) {
            *b -= z * mean;
        }
        let drift = 0.5 * k * self.dt;
        let diff = k.sqrt() * dw;
        for kk in 0..amps.len() {
            amps[kk] = amps[kk] - self.b2[kk] * drift + self.b1[kk] * diff;
        }
    }
}

/// Full conditional stepper on a moving frame.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    ladder: &'a Ladder,
    pub propagator: SplitPropagator<'a>,
    pub measurement: MeasurementUpdate<'a>,
    rates: MeasurementRates,
}

impl<'a> Stepper<'a> {
    pub fn new(
        ladder: &'a Ladder,
        params: DrivenHamiltonianParams,
        rates: MeasurementRates,
        dt: f64,
        frame: FrameCenter,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        Ok(Stepper {
            ladder,
            propagator: SplitPropagator::new(ladder, params, dt, frame),
            measurement: MeasurementUpdate::new(ladder, rates, dt),
            rates,
        })
    }

    pub fn rates(&self) -> MeasurementRates {
        self.rates
    }

    /// One step `t -> t + dt` in place. `psi` must be on the propagator's frame.
    pub fn step(&mut self, psi: &mut StateVector, t: f64, noise: &NoiseIncrement) -> Result<StepInfo> {
        let frame = psi.frame();
        if frame != self.propagator.frame() {
            self.propagator.set_frame(frame);
        }
        let mut amps: Vec<C64> = psi.as_slice().to_vec();
        self.propagator.apply(&mut amps, t);
        let (norm_drift, mx, mp) = self.measurement.apply(&mut amps, noise);
        let tail = fock::tail_mass(&amps);
        if tail > fock::TRUNCATION_THRESHOLD || !tail.is_finite() {
            return Err(Error::TruncationOverflow {
                tail,
                threshold: fock::TRUNCATION_THRESHOLD,
            }
            .at(t + self.propagator.dt()));
        }
        *psi = StateVector::from_normalized(nalgebra::DVector::from_vec(amps), frame)
            .map_err(|e| e.at(t))?;
        Ok(StepInfo {
            norm_drift,
            measured_x: mx + frame.x0,
            measured_p: mp + frame.p0,
        })
    }

    /// Moves `psi` onto a frame centered at its own mean when the local
    /// displacement `|<a>|` exceeds `threshold`. Returns whether it moved.
    pub fn maybe_recenter(&mut self, psi: &mut StateVector, threshold: f64) -> Result<bool> {
        let alpha = psi.local_alpha(self.ladder);
        if alpha.norm() <= threshold {
            return Ok(false);
        }
        let hs = self.ladder.hs();
        let new_frame = FrameCenter::from_alpha(psi.frame().alpha(&hs) + alpha, &hs);
        *psi = fock::recenter(psi, new_frame, &hs)?;
        self.propagator.set_frame(new_frame);
        Ok(true)
    }
}

/// One joint-measurement step of the stochastic Schrödinger equation.
pub fn sse_step(
    psi: &StateVector,
    ladder: &Ladder,
    params: &DrivenHamiltonianParams,
    gamma: f64,
    dt: f64,
    t: f64,
    noise: &NoiseIncrement,
) -> Result<(StateVector, StepInfo)> {
    let rates = MeasurementRates::joint(gamma)?;
    single_step(psi, ladder, params, rates, dt, t, noise)
}

/// One step of the continuous position measurement equation (`Gamma2 = 0`).
pub fn position_only_step(
    psi: &StateVector,
    ladder: &Ladder,
    params: &DrivenHamiltonianParams,
    gamma1: f64,
    dt: f64,
    t: f64,
    dw1: f64,
) -> Result<(StateVector, StepInfo)> {
    let rates = MeasurementRates::position_only(gamma1)?;
    single_step(psi, ladder, params, rates, dt, t, &NoiseIncrement { dw1, dw2: 0.0 })
}

/// One step of the continuous momentum measurement equation (`Gamma1 = 0`).
pub fn momentum_only_step(
    psi: &StateVector,
    ladder: &Ladder,
    params: &DrivenHamiltonianParams,
    gamma2: f64,
    dt: f64,
    t: f64,
    dw2: f64,
) -> Result<(StateVector, StepInfo)> {
    let rates = MeasurementRates::momentum_only(gamma2)?;
    single_step(psi, ladder, params, rates, dt, t, &NoiseIncrement { dw1: 0.0, dw2 })
}

fn single_step(
    psi: &StateVector,
    ladder: &Ladder,
    params: &DrivenHamiltonianParams,
    rates: MeasurementRates,
    dt: f64,
    t: f64,
    noise: &NoiseIncrement,
) -> Result<(StateVector, StepInfo)> {
    let mut stepper = Stepper::new(ladder, *params, rates, dt, psi.frame())?;
    let mut out = psi.clone();
    let info = stepper.step(&mut out, t, noise)?;
    Ok((out, info))
}

/// When to move the basis onto the state's mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecenterPolicy {
    Never,
    /// Recenter once the frame-local `|<a>|` exceeds the threshold.
    Threshold(f64),
}

impl Default for RecenterPolicy {
    fn default() -> Self {
        RecenterPolicy::Threshold(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub params: DrivenHamiltonianParams,
    pub rates: MeasurementRates,
    pub dt: f64,
    pub t_final: f64,
    /// Snapshot spacing; must be a multiple of `dt`. `None` keeps only the
    /// initial and final snapshots.
    pub snapshot_interval: Option<f64>,
    pub keep_states: bool,
    /// Steps per measurement-record row; `None` disables the record.
    pub record_stride: Option<usize>,
    pub recenter: RecenterPolicy,
}

impl TrajectoryConfig {
    pub fn new(params: DrivenHamiltonianParams, rates: MeasurementRates, dt: f64, t_final: f64) -> Self {
        TrajectoryConfig {
            params,
            rates,
            dt,
            t_final,
            snapshot_interval: None,
            keep_states: false,
            record_stride: None,
            recenter: RecenterPolicy::default(),
        }
    }

    pub fn steps(&self) -> Result<usize> {
        whole_steps(self.t_final, self.dt, "t_final")
    }

    fn snapshot_stride(&self) -> Result<usize> {
        match self.snapshot_interval {
            None => Ok(self.steps()?.max(1)),
            Some(every) => Ok(whole_steps(every, self.dt, "snapshot_interval")?.max(1)),
        }
    }
}

fn whole_steps(span: f64, dt: f64, name: &'static str) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(span >= 0.0 && span.is_finite()) {
        return Err(Error::invalid(name, "must be nonnegative"));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(dt) {
        return Err(Error::invalid(name, "must be a whole number of steps"));
    }
    Ok(n as usize)
}

/// Conditional state at a snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub moments: PhaseMoments,
    pub state: Option<StateVector>,
}

/// Integrated readouts `dX1 = <x> dt + (1/2) sqrt(hbar/Gamma1) dW1` and the
/// momentum analogue, aggregated over `stride` steps per row.
///
/// Channels that are not measured are omitted (`None`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementRecord {
    pub stride: usize,
    pub times: Vec<f64>,
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
    pub dx1: Option<Vec<f64>>,
    pub dx2: Option<Vec<f64>>,
    pub x1: Option<Vec<f64>>,
    pub x2: Option<Vec<f64>>,
    pub moments: Vec<PhaseMoments>,
    /// Largest `|norm drift|` within each row.
    pub norm_drift: Vec<f64>,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub final_state: StateVector,
    pub snapshots: Vec<Snapshot>,
    pub record: Option<MeasurementRecord>,
    pub recenterings: usize,
    pub max_norm_drift: f64,
}

/// Integrates one conditional trajectory, drawing noise from `rng`.
///
/// The same Wiener increments drive the state update and the readouts.
pub fn run_trajectory<R: Rng + ?Sized>(
    initial: &StateVector,
    ladder: &Ladder,
    cfg: &TrajectoryConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    let dt = cfg.dt;
    run_trajectory_with_noise(initial, ladder, cfg, |_| NoiseIncrement::sample(rng, dt))
}

/// As [`run_trajectory`], with the increment for step `k` supplied by `noise(k)`.
/// It is not called when nothing is measured.
pub fn run_trajectory_with_noise<F: FnMut(usize) -> NoiseIncrement>(
    initial: &StateVector,
    ladder: &Ladder,
    cfg: &TrajectoryConfig,
    mut noise_for: F,
) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let snap_every = cfg.snapshot_stride()?;
    if initial.dim() != ladder.dim() {
        return Err(Error::DimensionMismatch {
            expected: ladder.dim(),
            found: initial.dim(),
        });
    }
    let hs = ladder.hs();
    let (g1, g2) = (cfg.rates.gamma1(hs.s()), cfg.rates.gamma2(hs.s()));
    let measured = cfg.rates.is_measured();
    let mut stepper = Stepper::new(ladder, cfg.params, cfg.rates, cfg.dt, initial.frame())?;
    let mut psi = initial.clone();

    let snap = |psi: &StateVector, t: f64| Snapshot {
        t,
        moments: psi.moments(ladder),
        state: cfg.keep_states.then(|| psi.clone()),
    };
    let mut snapshots = vec![snap(&psi, 0.0)];

    let stride = if measured { cfg.record_stride } else { None };
    let mut record = stride.map(|stride| MeasurementRecord {
        stride,
        dx1: (g1 > 0.0).then(Vec::new),
        dx2: (g2 > 0.0).then(Vec::new),
        x1: (g1 > 0.0).then(Vec::new),
        x2: (g2 > 0.0).then(Vec::new),
        ..Default::default()
    });
    let readout1 = if g1 > 0.0 { 0.5 * (hs.hbar() / g1).sqrt() } else { 0.0 };
    let readout2 = if g2 > 0.0 { 0.5 * (hs.hbar() / g2).sqrt() } else { 0.0 };
    let (mut acc_w1, mut acc_w2, mut acc_x1, mut acc_x2, mut acc_drift) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    let (mut cum_x1, mut cum_x2) = (0.0, 0.0);

    let mut recenterings = 0;
    let mut max_drift: f64 = 0.0;
    for step in 0..steps {
        let t = step as f64 * cfg.dt;
        let noise = if measured {
            noise_for(step)
        } else {
            NoiseIncrement::default()
        };
        let info = stepper.step(&mut psi, t, &noise)?;
        max_drift = max_drift.max(info.norm_drift.abs());
        if let RecenterPolicy::Threshold(th) = cfg.recenter {
            if stepper.maybe_recenter(&mut psi, th).map_err(|e| e.at(t + cfg.dt))? {
                recenterings += 1;
            }
        }
        let t_next = (step + 1) as f64 * cfg.dt;
        if let Some(rec) = record.as_mut() {
            acc_w1 += noise.dw1;
            acc_w2 += noise.dw2;
            acc_x1 += info.measured_x * cfg.dt + readout1 * noise.dw1;
            acc_x2 += info.measured_p * cfg.dt + readout2 * noise.dw2;
            acc_drift = acc_drift.max(info.norm_drift.abs());
            if (step + 1) % rec.stride == 0 || step + 1 == steps {
                cum_x1 += acc_x1;
                cum_x2 += acc_x2;
                rec.times.push(t_next);
                rec.dw1.push(acc_w1);
                rec.dw2.push(acc_w2);
                if let (Some(d), Some(c)) = (rec.dx1.as_mut(), rec.x1.as_mut()) {
                    d.push(acc_x1);
                    c.push(cum_x1);
                }
                if let (Some(d), Some(c)) = (rec.dx2.as_mut(), rec.x2.as_mut()) {
                    d.push(acc_x2);
                    c.push(cum_x2);
                }
                rec.moments.push(psi.moments(ladder));
                rec.norm_drift.push(acc_drift);
                acc_w1 = 0.0;
                acc_w2 = 0.0;
                acc_x1 = 0.0;
                acc_x2 = 0.0;
                acc_drift = 0.0;
            }
        }
        if (step + 1) % snap_every == 0 || step + 1 == steps {
            let due = (step + 1) % snap_every == 0;
            if due || snapshots.last().map(|s| s.t) != Some(t_next) {
                snapshots.push(snap(&psi, t_next));
            }
        }
    }

    Ok(Trajectory {
        final_state: psi,
        snapshots,
        record,
        recenterings,
        max_norm_drift: max_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_ladder, coherent_state, HbarS};

    fn setup(hbar: f64, n: usize) -> (Ladder, HbarS) {
        let hs = HbarS::new(hbar, 1.0).unwrap();
        (build_ladder(n, hs).unwrap(), hs)
    }

    #[test]
    fn unmeasured_free_step_is_identity() {
        let (l, hs) = setup(0.05, 20);
        let psi = coherent_state(C64::new(0.4, -0.3), 20, FrameCenter::origin(), &hs).unwrap();
        let (out, info) = sse_step(
            &psi,
            &l,
            &DrivenHamiltonianParams::default(),
            0.0,
            1e-3,
            0.0,
            &NoiseIncrement { dw1: 0.01, dw2: -0.02 },
        )
        .unwrap();
        assert_eq!(out, psi);
        assert_eq!(info.norm_drift, 0.0);
    }

    #[test]
    fn zero_rate_position_step_is_unitary() {
        let (l, hs) = setup(0.05, 30);
        let psi = coherent_state(hs.alpha(0.3, 0.1), 30, FrameCenter::origin(), &hs).unwrap();
        let params = DrivenHamiltonianParams::integrable();
        let (a, _) = position_only_step(&psi, &l, &params, 0.0, 1e-3, 0.0, 0.7).unwrap();
        let (b, _) = sse_step(&psi, &l, &params, 0.0, 1e-3, 0.0, &NoiseIncrement::default()).unwrap();
        assert_eq!(a, b);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rates_and_quadrature_rates() {
        let r = MeasurementRates::joint(0.5).unwrap();
        assert_eq!(r.gamma1(2.0), 1.0);
        assert_eq!(r.gamma2(2.0), 0.25);
        assert!((r.gamma1(2.0) * r.gamma2(2.0) - 0.25).abs() < 1e-15);
        assert_eq!(
            MeasurementRates::from_quadrature_rates(1.0, 0.0, 1.0).unwrap(),
            MeasurementRates::PositionOnly { gamma1: 1.0 }
        );
        assert_eq!(
            MeasurementRates::from_quadrature_rates(1.0, 0.25, 2.0).unwrap(),
            MeasurementRates::Joint { gamma: 0.5 }
        );
        assert!(MeasurementRates::from_quadrature_rates(1.0, 1.0, 2.0).is_err());
        assert!(MeasurementRates::joint(-1.0).is_err());
        assert_eq!(MeasurementRates::joint(0.0).unwrap(), MeasurementRates::Unmeasured);
    }

    #[test]
    fn step_counts_must_be_whole() {
        let cfg = TrajectoryConfig::new(
            DrivenHamiltonianParams::default(),
            MeasurementRates::Unmeasured,
            0.3,
            1.0,
        );
        assert!(cfg.steps().is_err());
        let cfg = TrajectoryConfig { dt: 0.25, ..cfg };
        assert_eq!(cfg.steps().unwrap(), 4);
    }

    #[test]
    fn recentering_keeps_moments() {
        let (l, hs) = setup(0.05, 40);
        let frame = FrameCenter::origin();
        let mut psi = coherent_state(hs.alpha(0.5, -0.3), 40, frame, &hs).unwrap();
        let before = psi.moments(&l);
        let mut stepper = Stepper::new(&l, DrivenHamiltonianParams::default(), MeasurementRates::Unmeasured, 1e-3, frame).unwrap();
        assert!(stepper.maybe_recenter(&mut psi, 1.0).unwrap());
        let after = psi.moments(&l);
        assert!((before.mean_x - after.mean_x).abs() < 1e-10);
        assert!((before.vp - after.vp).abs() < 1e-10);
        assert!(psi.local_alpha(&l).norm() < 1e-10);
        assert_eq!(stepper.propagator.frame(), psi.frame());
    }
}
