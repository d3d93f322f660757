//! Second-moment dynamics of Gaussian states under continuous measurement
//! with `H = 0`, position-only measurement, and the measured free particle.

use alloc::vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{FrameCenter, HbarS, StateVector, C64};
use crate::linalg;

/// Uncertainty-floor slack allowed by [`GaussianMoments::new`].
pub const UNCERTAINTY_TOL: f64 = 1e-12;

/// `(V_x, V_p, C_xp)`, with `C_xp` the symmetrized covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub vx: f64,
    pub vp: f64,
    pub cxp: f64,
}

impl GaussianMoments {
    /// Rejects triples below the Robertson-Schrödinger floor
    /// `V_x V_p - C_xp^2 >= hbar^2 / 4`.
    pub fn new(vx: f64, vp: f64, cxp: f64, hbar: f64) -> Result<Self> {
        if ![vx, vp, cxp, hbar].iter().all(|v| v.is_finite()) || vx < 0.0 || vp < 0.0 {
            return Err(Error::invalid("moments", "variances must be finite and nonnegative"));
        }
        let m = GaussianMoments { vx, vp, cxp };
        let det = m.uncertainty_excess(hbar);
        if det < -UNCERTAINTY_TOL {
            return Err(Error::UncertaintyViolation { det });
        }
        Ok(m)
    }

    /// `V_x V_p - C_xp^2 - hbar^2 / 4`
    pub fn uncertainty_excess(&self, hbar: f64) -> f64 {
        self.vx * self.vp - self.cxp * self.cxp - 0.25 * hbar * hbar
    }

    /// The coherent state of the frame oscillator with squeezing `s`.
    pub fn coherent(s: f64, hbar: f64) -> Self {
        GaussianMoments { vx: hbar / (2.0 * s), vp: s * hbar / 2.0, cxp: 0.0 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vp, self.cxp]
    }

    fn from_array(v: [f64; 3]) -> Self {
        GaussianMoments { vx: v[0], vp: v[1], cxp: v[2] }
    }
}

/// The pure Gaussian state with second moments `m` centered at `(x, p)`.
///
/// Built as a squeezed vacuum `exp((xi^* a^2 - xi a^dag^2)/2)|0>` on a frame
/// at `(x, p)`. Requires `V_x V_p - C_xp^2 = hbar^2 / 4` to within 1e-9
/// relative.
pub fn gaussian_pure_state(
    m: &GaussianMoments,
    x: f64,
    p: f64,
    n_max: usize,
    hs: &HbarS,
) -> Result<StateVector> {
    let hbar = hs.hbar();
    let s = hs.s();
    let excess = m.uncertainty_excess(hbar);
    if excess.abs() > 1e-9 * hbar * hbar {
        return Err(Error::invalid("moments", "pure Gaussian states saturate the uncertainty floor"));
    }
    // variances of a + a^dag and i(a^dag - a)
    let v1 = 2.0 * s * m.vx / hbar;
    let v2 = 2.0 * m.vp / (s * hbar);
    let cov = 2.0 * m.cxp / hbar;
    let ch = 0.5 * (v1 + v2);
    let r = 0.5 * ch.max(1.0).acosh();
    let theta = (-cov).atan2(0.5 * (v2 - v1));
    let xi = C64::from_polar(r, theta);
    let dim = n_max + 1;
    let mut g = DMatrix::<C64>::zeros(dim, dim);
    for n in 0..dim.saturating_sub(2) {
        // <n| a^2 |n+2> and <n+2| a^dag^2 |n>
        let w = (((n + 1) * (n + 2)) as f64).sqrt();
        g[(n, n + 2)] = xi.conj() * (0.5 * w);
        g[(n + 2, n)] = -xi * (0.5 * w);
    }
    let u = linalg::expm(&g);
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    for (k, z) in amps.iter_mut().enumerate() {
        *z = u[(k, 0)];
    }
    let tail = crate::fock::tail_mass(&amps);
    if tail > crate::fock::TRUNCATION_THRESHOLD {
        return Err(Error::TruncationOverflow { tail, threshold: crate::fock::TRUNCATION_THRESHOLD });
    }
    StateVector::from_amplitudes(amps, FrameCenter::new(x, p)?)
}

/// Ensemble-averaged moment equations for joint measurement at `H = 0`.
pub fn moments_ode_rhs(m: &GaussianMoments, gamma: f64, s: f64, hbar: f64) -> [f64; 3] {
    let GaussianMoments { vx, vp, cxp: c } = *m;
    [
        gamma * hbar / s - 4.0 * s * gamma * vx * vx / hbar - 4.0 * gamma * c * c / (s * hbar),
        s * gamma * hbar - 4.0 * gamma * vp * vp / (s * hbar) - 4.0 * s * gamma * c * c / hbar,
        -4.0 * gamma * c * (s * vx + vp / s) / hbar,
    ]
}

/// Exact solution of [`moments_ode_rhs`].
pub fn moments_closed_form(m0: &GaussianMoments, gamma: f64, s: f64, hbar: f64, t: f64) -> GaussianMoments {
    if t == 0.0 {
        return *m0;
    }
    let arg = 2.0 * gamma * t;
    if arg > 350.0 {
        return GaussianMoments::coherent(s, hbar);
    }
    let th = arg.tanh();
    let sech2 = 1.0 - th * th;
    let GaussianMoments { vx, vp, cxp: c } = *m0;
    let c2 = 4.0 * s * c * c;
    let den = (hbar + 2.0 * s * vx * th) * (s * hbar + 2.0 * vp * th) - c2 * th * th;
    let nx = (2.0 * s * vx + hbar * th) * (s * hbar + 2.0 * vp * th) - c2 * th;
    let np = (2.0 * vp + s * hbar * th) * (hbar + 2.0 * s * vx * th) - c2 * th;
    GaussianMoments {
        vx: hbar / (2.0 * s) * nx / den,
        vp: s * hbar / 2.0 * np / den,
        cxp: s * hbar * hbar * c * sech2 / den,
    }
}

/// Moment equations for position-only measurement (`Gamma2 = 0`) at `H = 0`.
pub fn position_only_ode_rhs(m: &GaussianMoments, gamma1: f64, hbar: f64) -> [f64; 3] {
    let GaussianMoments { vx, cxp: c, .. } = *m;
    [
        -4.0 * gamma1 * vx * vx / hbar,
        gamma1 * hbar - 4.0 * gamma1 * c * c / hbar,
        -4.0 * gamma1 * c * vx / hbar,
    ]
}

/// Exact solution of [`position_only_ode_rhs`].
pub fn position_only_closed_form(m0: &GaussianMoments, gamma1: f64, hbar: f64, t: f64) -> GaussianMoments {
    if t == 0.0 {
        return *m0;
    }
    let den = hbar + 4.0 * m0.vx * gamma1 * t;
    GaussianMoments {
        vx: hbar * m0.vx / den,
        vp: m0.vp + hbar * gamma1 * t - 4.0 * m0.cxp * m0.cxp * gamma1 * t / den,
        cxp: hbar * m0.cxp / den,
    }
}

/// Moment equations for `H = a p^2` under position-only measurement.
pub fn free_particle_ode_rhs(m: &GaussianMoments, a: f64, gamma1: f64, hbar: f64) -> [f64; 3] {
    let GaussianMoments { vx, vp, cxp: c } = *m;
    [
        -4.0 * gamma1 * vx * vx / hbar + 4.0 * a * c,
        gamma1 * hbar - 4.0 * gamma1 * c * c / hbar,
        -4.0 * gamma1 * c * vx / hbar + 2.0 * a * vp,
    ]
}

/// Stable fixed point of [`free_particle_ode_rhs`].
pub fn free_particle_fixed_point(a: f64, gamma1: f64, hbar: f64) -> Result<GaussianMoments> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid("a", "kinetic coefficient must be positive"));
    }
    if !(gamma1 > 0.0 && gamma1.is_finite()) {
        return Err(Error::invalid("gamma1", "must be positive"));
    }
    Ok(GaussianMoments {
        vx: (a / (2.0 * gamma1)).sqrt() * hbar,
        vp: (gamma1 / (2.0 * a)).sqrt() * hbar,
        cxp: hbar / 2.0,
    })
}

/// Classical fourth-order Runge-Kutta on a moment ODE.
pub fn integrate_moments<F>(m0: &GaussianMoments, dt: f64, t_final: f64, mut rhs: F) -> GaussianMoments
where
    F: FnMut(&GaussianMoments) -> [f64; 3],
{
    let steps = (t_final / dt).round().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let mut y = m0.as_array();
    let add = |y: [f64; 3], k: [f64; 3], f: f64| [y[0] + f * k[0], y[1] + f * k[1], y[2] + f * k[2]];
    for _ in 0..steps {
        let k1 = rhs(&GaussianMoments::from_array(y));
        let k2 = rhs(&GaussianMoments::from_array(add(y, k1, 0.5 * h)));
        let k3 = rhs(&GaussianMoments::from_array(add(y, k2, 0.5 * h)));
        let k4 = rhs(&GaussianMoments::from_array(add(y, k3, h)));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    GaussianMoments::from_array(y)
}
