//! Unconditional master equation
//! `d rho/dt = -(i/hbar)[H, rho] - (Gamma1/2hbar)[x,[x,rho]] - (Gamma2/2hbar)[p,[p,rho]]`
//! on a displaced truncated basis.
//!
//! On the untruncated space the dissipator equals `-gamma [a,[a^dag, rho]]`.
//! The quadrature form keeps Hermiticity exactly on the truncated basis.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FrameCenter, Ladder, C64, TRUNCATION_THRESHOLD};
use crate::hamiltonian::{hamiltonian_banded, DrivenHamiltonianParams};
use crate::linalg::{self, Banded};
use crate::sse::MeasurementRates;

/// Trace and positivity monitor threshold.
pub const MONITOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LindbladGenerator<'a> {
    ladder: &'a Ladder,
    params: DrivenHamiltonianParams,
    gamma1: f64,
    gamma2: f64,
    x: Banded,
    p: Banded,
}

impl<'a> LindbladGenerator<'a> {
    pub fn new(ladder: &'a Ladder, params: DrivenHamiltonianParams, rates: MeasurementRates) -> Self {
        let s = ladder.hs().s();
        LindbladGenerator {
            ladder,
            params,
            gamma1: rates.gamma1(s),
            gamma2: rates.gamma2(s),
            x: ladder.powers().x[0].clone(),
            p: ladder.powers().p[0].clone(),
        }
    }

    pub fn ladder(&self) -> &'a Ladder {
        self.ladder
    }

    pub fn params(&self) -> &DrivenHamiltonianParams {
        &self.params
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    /// Undriven Hamiltonian on `frame`.
    fn frame_terms(&self, frame: &FrameCenter) -> FrameTerms {
        let undriven = DrivenHamiltonianParams { d: 0.0, ..self.params };
        FrameTerms {
            h0: hamiltonian_banded(&undriven, 0.0, self.ladder, frame),
        }
    }

    fn rhs_with(&self, rho: &DMatrix<C64>, terms: &FrameTerms, t: f64) -> DMatrix<C64> {
        let hbar = self.ladder.hs().hbar();
        let drive = self.params.drive(t);
        let mut out = if drive != 0.0 {
            // [x + x0, rho] = [x, rho]
            let mut h = terms.h0.clone();
            h.add_scaled(&self.x, C64::new(drive, 0.0));
            commutator_banded(&h, rho)
        } else {
            commutator_banded(&terms.h0, rho)
        };
        out *= C64::new(0.0, -1.0 / hbar);
        if self.gamma1 > 0.0 {
            let inner = commutator_banded(&self.x, rho);
            out -= commutator_banded(&self.x, &inner) * C64::new(self.gamma1 / (2.0 * hbar), 0.0);
        }
        if self.gamma2 > 0.0 {
            let inner = commutator_banded(&self.p, rho);
            out -= commutator_banded(&self.p, &inner) * C64::new(self.gamma2 / (2.0 * hbar), 0.0);
        }
        out
    }
}

struct FrameTerms {
    h0: Banded,
}

/// `[B, M]` for band matrix `B`.
fn commutator_banded(b: &Banded, m: &DMatrix<C64>) -> DMatrix<C64> {
    let n = m.nrows();
    let bw = b.bandwidth();
    let mut out = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        // (B M)[:, j] - sum_k M[:, k] B[k, j]
        b.apply(m.column(j).as_slice(), out.column_mut(j).as_mut_slice());
        for k in j.saturating_sub(bw)..(j + bw + 1).min(n) {
            let w = b.get(k, j);
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            let src = m.column(k);
            let mut dst = out.column_mut(j);
            for (d, z) in dst.iter_mut().zip(src.iter()) {
                *d -= z * w;
            }
        }
    }
    out
}

/// Right-hand side on `rho`'s own frame.
pub fn lindblad_rhs(rho: &DensityMatrix, gen: &LindbladGenerator, t: f64) -> Result<DMatrix<C64>> {
    if rho.dim() != gen.ladder.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.ladder.dim(),
            found: rho.dim(),
        });
    }
    let terms = gen.frame_terms(&rho.frame());
    Ok(gen.rhs_with(rho.matrix(), &terms, t))
}

/// `-gamma [a, [a^dag, rho]]`, the ladder form of the joint dissipator.
pub fn ladder_dissipator(rho: &DMatrix<C64>, ladder: &Ladder, gamma: f64) -> DMatrix<C64> {
    let a = ladder.a.matrix();
    let ad = ladder.adag.matrix();
    let inner = linalg::commutator(ad, rho);
    linalg::commutator(a, &inner) * C64::new(-gamma, 0.0)
}

/// The quadrature-form dissipator alone, for checks against [`ladder_dissipator`].
pub fn quadrature_dissipator(rho: &DMatrix<C64>, gen: &LindbladGenerator) -> DMatrix<C64> {
    let hbar = gen.ladder.hs().hbar();
    let mut out = DMatrix::zeros(rho.nrows(), rho.ncols());
    let ix = commutator_banded(&gen.x, rho);
    out -= commutator_banded(&gen.x, &ix) * C64::new(gen.gamma1 / (2.0 * hbar), 0.0);
    let ip = commutator_banded(&gen.p, rho);
    out -= commutator_banded(&gen.p, &ip) * C64::new(gen.gamma2 / (2.0 * hbar), 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    /// Steps between output snapshots.
    pub snapshot_stride: usize,
    /// Steps between positivity checks (the eigenvalue solve dominates a step).
    pub positivity_stride: usize,
    /// Recenter when the local `|<a>|` exceeds this; `None` keeps the frame.
    pub recenter_threshold: Option<f64>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            snapshot_stride: 1000,
            positivity_stride: 50,
            recenter_threshold: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub max_hermiticity_defect: f64,
}

impl LindbladSeries {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("series holds the initial state")
    }
}

/// Fixed-step RK4 from `t = 0` to `t_final`.
///
/// Fails with [`Error::StepTooLarge`] if the trace drifts by more than
/// [`MONITOR_TOL`] or an eigenvalue falls below `-MONITOR_TOL`.
pub fn propagate(
    rho0: &DensityMatrix,
    gen: &LindbladGenerator,
    dt: f64,
    t_final: f64,
    opts: &PropagationOptions,
) -> Result<LindbladSeries> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::invalid("t_final", "must be nonnegative"));
    }
    if rho0.dim() != gen.ladder.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.ladder.dim(),
            found: rho0.dim(),
        });
    }
    let steps = (t_final / dt).round() as usize;
    if (steps as f64 * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::invalid("t_final", "must be a whole number of steps"));
    }
    let hs = gen.ladder.hs();
    let snap = opts.snapshot_stride.max(1);
    let pos_every = opts.positivity_stride.max(1);

    let mut frame = rho0.frame();
    let mut terms = gen.frame_terms(&frame);
    let mut rho = rho0.matrix().clone();
    let mut series = LindbladSeries {
        times: alloc::vec![0.0],
        states: alloc::vec![rho0.clone()],
        max_trace_error: (rho0.trace().re - 1.0).abs(),
        min_eigenvalue: rho0.min_eigenvalue(),
        max_hermiticity_defect: rho0.hermiticity_defect(),
    };
    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = gen.rhs_with(&rho, &terms, t);
        let k2 = gen.rhs_with(&(&rho + &k1 * half), &terms, t + 0.5 * dt);
        let k3 = gen.rhs_with(&(&rho + &k2 * half), &terms, t + 0.5 * dt);
        let k4 = gen.rhs_with(&(&rho + &k3 * full), &terms, t + dt);
        rho += (k1 + k2 * two + k3 * two + k4) * sixth;
        let t_next = t + dt;

        let tr_err = (rho.trace().re - 1.0).abs();
        series.max_trace_error = series.max_trace_error.max(tr_err);
        if !(tr_err <= MONITOR_TOL) {
            return Err(Error::StepTooLarge { monitor: "trace", value: tr_err, time: t_next });
        }
        let herm = linalg::hermiticity_defect(&rho);
        series.max_hermiticity_defect = series.max_hermiticity_defect.max(herm);
        let last = k + 1 == steps;
        if (k + 1) % pos_every == 0 || last {
            let current = DensityMatrix::from_matrix_unchecked(rho.clone(), frame);
            let mn = current.min_eigenvalue();
            series.min_eigenvalue = series.min_eigenvalue.min(mn);
            if !(mn >= -MONITOR_TOL) {
                return Err(Error::StepTooLarge { monitor: "positivity", value: mn, time: t_next });
            }
            let tail = current.tail_mass();
            if tail > TRUNCATION_THRESHOLD {
                return Err(Error::TruncationOverflow { tail, threshold: TRUNCATION_THRESHOLD }.at(t_next));
            }
        }
        if let Some(th) = opts.recenter_threshold {
            let alpha: C64 = (0..rho.nrows().saturating_sub(1))
                .map(|n| rho[(n + 1, n)] * ((n + 1) as f64).sqrt())
                .sum();
            if alpha.norm() > th {
                let target = FrameCenter::from_alpha(frame.alpha(&hs) + alpha, &hs);
                let moved = DensityMatrix::from_matrix_unchecked(rho, frame)
                    .recenter(target, &hs)
                    .map_err(|e| e.at(t_next))?;
                frame = target;
                rho = moved.into_matrix();
                terms = gen.frame_terms(&frame);
            }
        }
        if (k + 1) % snap == 0 || last {
            series.times.push(t_next);
            series.states.push(DensityMatrix::from_matrix_unchecked(rho.clone(), frame));
        }
    }
    Ok(series)
}
