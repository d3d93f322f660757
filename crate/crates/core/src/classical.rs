//! Classical Hamiltonian flow of the driven quartic oscillator and its
//! stroboscopic sections.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hamiltonian::DrivenHamiltonianParams;

/// Trajectories with `|x|` or `|p|` beyond this are reported as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Result<Self> {
        if !(x.is_finite() && p.is_finite()) {
            return Err(Error::invalid("phase point", "coordinates must be finite"));
        }
        Ok(PhasePoint { x, p })
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (self.x - other.x).hypot(self.p - other.p)
    }
}

/// `(dx/dt, dp/dt) = (dH/dp, -dH/dx)`
pub fn hamilton_rhs(pt: &PhasePoint, params: &DrivenHamiltonianParams, t: f64) -> (f64, f64) {
    let x = pt.x;
    (
        2.0 * params.a * pt.p,
        -(2.0 * params.b * x + 4.0 * params.c * x * x * x + params.drive(t)),
    )
}

/// One RK4 step.
pub fn rk4_step(pt: &PhasePoint, params: &DrivenHamiltonianParams, t: f64, dt: f64) -> PhasePoint {
    let shift = |k: (f64, f64), f: f64| PhasePoint { x: pt.x + f * k.0, p: pt.p + f * k.1 };
    let k1 = hamilton_rhs(pt, params, t);
    let k2 = hamilton_rhs(&shift(k1, 0.5 * dt), params, t + 0.5 * dt);
    let k3 = hamilton_rhs(&shift(k2, 0.5 * dt), params, t + 0.5 * dt);
    let k4 = hamilton_rhs(&shift(k3, dt), params, t + dt);
    PhasePoint {
        x: pt.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        p: pt.p + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
}

impl ClassicalTrajectory {
    pub fn last(&self) -> Option<&PhasePoint> {
        self.points.last()
    }
}

/// Fixed-step RK4 from `t = 0`. The initial point and every `stride`-th step
/// are kept. A negative `dt` integrates backwards.
pub fn integrate_classical(
    pt0: &PhasePoint,
    params: &DrivenHamiltonianParams,
    dt: f64,
    t_final: f64,
    stride: usize,
) -> Result<ClassicalTrajectory> {
    integrate_from(pt0, params, 0.0, dt, t_final, stride)
}

/// As [`integrate_classical`] but starting at time `t0` and running for `span`.
pub fn integrate_from(
    pt0: &PhasePoint,
    params: &DrivenHamiltonianParams,
    t0: f64,
    dt: f64,
    span: f64,
    stride: usize,
) -> Result<ClassicalTrajectory> {
    if !(dt != 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be nonzero and finite"));
    }
    if !(span >= 0.0 && span.is_finite()) {
        return Err(Error::invalid("t_final", "must be nonnegative"));
    }
    let stride = stride.max(1);
    let steps = (span / dt.abs()).round() as usize;
    let mut out = ClassicalTrajectory::default();
    out.times.push(t0);
    out.points.push(*pt0);
    let mut pt = *pt0;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        pt = rk4_step(&pt, params, t, dt);
        if !(pt.x.abs() <= DIVERGENCE_BOUND && pt.p.abs() <= DIVERGENCE_BOUND) {
            return Err(Error::Divergence { time: t + dt });
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            out.times.push(t0 + (k + 1) as f64 * dt);
            out.points.push(pt);
        }
    }
    Ok(out)
}

/// Points at `t = k T`, `k = 0..n_strobes`, for each seed.
///
/// `T` must be a whole number of steps `dt`.
pub fn poincare_map(
    seeds: &[PhasePoint],
    params: &DrivenHamiltonianParams,
    period: f64,
    n_strobes: usize,
    dt: f64,
) -> Result<Vec<Vec<PhasePoint>>> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::invalid("period", "must be positive"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let per = (period / dt).round();
    if per < 1.0 || (per * dt - period).abs() > 1e-9 * period {
        return Err(Error::invalid("period", "must be a whole number of steps"));
    }
    let per = per as usize;
    seeds
        .iter()
        .map(|seed| {
            let mut pts = Vec::with_capacity(n_strobes + 1);
            pts.push(*seed);
            let mut pt = *seed;
            for k in 0..n_strobes * per {
                let t = k as f64 * dt;
                pt = rk4_step(&pt, params, t, dt);
                if !(pt.x.abs() <= DIVERGENCE_BOUND && pt.p.abs() <= DIVERGENCE_BOUND) {
                    return Err(Error::Divergence { time: t + dt });
                }
                if (k + 1) % per == 0 {
                    pts.push(pt);
                }
            }
            Ok(pts)
        })
        .collect()
}

/// How a strobed orbit fills the section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitKind {
    /// Points confined to curves (tori or island chains).
    Regular,
    /// Points spread over an area.
    Chaotic,
}

/// Scaling exponent of the mean nearest-neighbour distance between the
/// first quarter of the points and all of them. Points on a curve give about
/// 1, points filling an area about 1/2.
pub fn spread_exponent(points: &[PhasePoint]) -> Option<f64> {
    let n = points.len();
    if n < 16 {
        return None;
    }
    let full = mean_nearest_neighbour(points);
    let quarter = mean_nearest_neighbour(&points[..n / 4]);
    if !(full > 0.0 && quarter > 0.0) {
        return None;
    }
    Some((quarter / full).ln() / (n as f64 / (n / 4) as f64).ln())
}

/// Classifies an orbit by [`spread_exponent`], splitting at 3/4. Orbits
/// that revisit the same points are regular.
pub fn classify_orbit(points: &[PhasePoint]) -> Option<OrbitKind> {
    if points.len() < 16 {
        return None;
    }
    match spread_exponent(points) {
        Some(e) if e < 0.75 => Some(OrbitKind::Chaotic),
        _ => Some(OrbitKind::Regular),
    }
}

fn mean_nearest_neighbour(points: &[PhasePoint]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut best = f64::INFINITY;
        for j in 0..n {
            if i != j {
                best = best.min(points[i].distance(&points[j]));
            }
        }
        total += best;
    }
    total / n as f64
}
