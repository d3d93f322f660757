//! Finite-strength joint position-momentum measurement.
//!
//! Outcomes are labelled by the complex phase-space point
//! `chi = (sqrt(s) x1 + i x2 / sqrt(s)) / sqrt(2 hbar)`. The Kraus operator is
//! `D(chi) c r^(a^dag a) D(chi)^dag` with `c = 2 sigma / (sqrt(pi) (sigma^2 + 1))`
//! and `r = (sigma^2 - 1) / (sigma^2 + 1)`; equivalently
//! `c :exp(-(1 - r)(a^dag - chi^*)(a - chi)):`, which is the form evaluated.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fock::{self, FrameCenter, HbarS, Ladder, Operator, StateVector, C64, TRUNCATION_THRESHOLD};
use crate::linalg::{self, Banded};

const PI: f64 = core::f64::consts::PI;

/// Detector width `sigma >= 1`; 1 is the strong limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementStrength(f64);

impl MeasurementStrength {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 1.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "measurement strength must be finite and at least 1"));
        }
        Ok(MeasurementStrength(sigma))
    }

    pub fn sigma(&self) -> f64 {
        self.0
    }

    /// Ratio between successive number-state weights of the Kraus operator.
    pub fn kraus_ratio(&self) -> f64 {
        let s2 = self.0 * self.0;
        (s2 - 1.0) / (s2 + 1.0)
    }

    pub fn kraus_prefactor(&self) -> f64 {
        2.0 * self.0 / ((self.0 * self.0 + 1.0) * PI.sqrt())
    }

    /// `((sigma^2 - 1) / (2 sigma))^2`, the outcome variance added on top of
    /// the Husimi distribution.
    pub fn excess_variance(&self) -> f64 {
        let w = (self.0 * self.0 - 1.0) / (2.0 * self.0);
        w * w
    }
}

/// A measurement readout, in lab-frame phase-space coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub chi: C64,
}

impl Outcome {
    pub fn new(chi: C64) -> Result<Self> {
        if !(chi.re.is_finite() && chi.im.is_finite()) {
            return Err(Error::invalid("chi", "outcome must be finite"));
        }
        Ok(Outcome { chi })
    }

    /// Meter readouts `(x1, x2)`.
    pub fn readouts(&self, hs: &HbarS) -> (f64, f64) {
        hs.point(self.chi)
    }
}

/// `pref * exp(-k |z|^2) exp(k z a^dag) (1 - k)^(a^dag a) exp(k z^* a) v`, the
/// normal-ordered Gaussian `pref * :exp(-k (a^dag - z^*)(a - z)):` acting on `v`.
///
/// On the truncated space `exp(t a)` is exact and `exp(t a^dag)` is the exact
/// operator followed by projection, so the result is the projection of the
/// untruncated action.
fn normal_ordered_gaussian(v: &[C64], z: C64, k: f64, pref: f64, ladder: &Ladder) -> Vec<C64> {
    let dim = ladder.dim();
    let mut lower = Banded::zeros(dim, 1);
    let mut raise = Banded::zeros(dim, 1);
    for n in 1..dim {
        let w = C64::new((n as f64).sqrt(), 0.0);
        lower.set(n - 1, n, w);
        raise.set(n, n - 1, w);
    }
    let mut out = linalg::expm_banded_apply(&lower, z.conj() * k, v);
    let q = 1.0 - k;
    let mut w = pref * (-k * z.norm_sqr()).exp();
    for amp in out.iter_mut() {
        *amp *= w;
        w *= q;
    }
    linalg::expm_banded_apply(&raise, z * k, &out)
}

/// `k` and prefactor of the Kraus operator.
fn kraus_form(sigma: MeasurementStrength) -> (f64, f64) {
    (1.0 - sigma.kraus_ratio(), sigma.kraus_prefactor())
}

/// `k` and prefactor of the effect density.
fn effect_form(sigma: MeasurementStrength) -> (f64, f64) {
    let r = sigma.kraus_ratio();
    let c = sigma.kraus_prefactor();
    (1.0 - r * r, c * c)
}

fn dense_from_action(ladder: &Ladder, z: C64, form: (f64, f64)) -> Result<Operator> {
    let n = ladder.dim();
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = normal_ordered_gaussian(&e, z, form.0, form.1, ladder);
        m.column_mut(j).as_mut_slice().copy_from_slice(&col);
        e[j] = C64::new(0.0, 0.0);
    }
    Operator::from_matrix(m)
}

/// Kraus operator for outcome `chi`, on the basis centered at `frame`.
///
/// Equal to `D(chi) c r^(a^dag a) D(chi)^dag`, evaluated in normal-ordered
/// form so that no displacement has to be represented on the basis.
pub fn resolution_operator(
    chi: C64,
    sigma: MeasurementStrength,
    ladder: &Ladder,
    frame: &FrameCenter,
) -> Result<Operator> {
    dense_from_action(ladder, chi - frame.alpha(&ladder.hs()), kraus_form(sigma))
}

/// `F(chi) = pi^-1 k :exp(-k (a^dag - chi^*)(a - chi)):` with
/// `k = (2 sigma / (sigma^2 + 1))^2`; integrates to the identity over `d^2 chi`.
pub fn effect_density(
    chi: C64,
    sigma: MeasurementStrength,
    ladder: &Ladder,
    frame: &FrameCenter,
) -> Result<Operator> {
    dense_from_action(ladder, chi - frame.alpha(&ladder.hs()), effect_form(sigma))
}

fn check_state(psi: &StateVector, ladder: &Ladder) -> Result<()> {
    if psi.dim() != ladder.dim() {
        return Err(Error::DimensionMismatch { expected: ladder.dim(), found: psi.dim() });
    }
    if (psi.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(psi.norm_sqr()));
    }
    Ok(())
}

fn kraus_action(psi: &StateVector, outcome: &Outcome, sigma: MeasurementStrength, ladder: &Ladder) -> Vec<C64> {
    let z = outcome.chi - psi.frame().alpha(&ladder.hs());
    let (k, c) = kraus_form(sigma);
    normal_ordered_gaussian(psi.as_slice(), z, k, c, ladder)
}

/// `tr(F(chi) rho) = ||Y(chi) psi||^2` for a pure state.
pub fn outcome_probability(psi: &StateVector, outcome: &Outcome, sigma: MeasurementStrength, ladder: &Ladder) -> Result<f64> {
    check_state(psi, ladder)?;
    Ok(linalg::vec_norm_sqr(&kraus_action(psi, outcome, sigma, ladder)))
}

/// Conditional state `Y(chi)|psi> / ||Y(chi)|psi>||`, re-expressed on the basis
/// centered at its own mean.
pub fn apply_measurement(
    psi: &StateVector,
    outcome: &Outcome,
    sigma: MeasurementStrength,
    ladder: &Ladder,
) -> Result<StateVector> {
    check_state(psi, ladder)?;
    let amps = kraus_action(psi, outcome, sigma, ladder);
    let prob = linalg::vec_norm_sqr(&amps);
    if !(prob > 1e-300) {
        return Err(Error::DegenerateOutcome(prob));
    }
    let tail = fock::tail_mass(&amps) / prob;
    if tail > TRUNCATION_THRESHOLD {
        return Err(Error::TruncationOverflow { tail, threshold: TRUNCATION_THRESHOLD });
    }
    let collapsed = StateVector::from_amplitudes(amps, psi.frame())?;
    let hs = ladder.hs();
    let center = FrameCenter::from_alpha(psi.frame().alpha(&hs) + collapsed.local_alpha(ladder), &hs);
    fock::recenter(&collapsed, center, &hs)
}

/// Draws outcomes for a fixed state.
///
/// The outcome density is the Husimi density convolved with an isotropic
/// complex Gaussian of variance [`MeasurementStrength::excess_variance`].
/// The Husimi part is tabulated on a square grid of `cells x cells` cells
/// spanning six widths either side of the mean and inverted with bilinear
/// refinement inside the chosen cell.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    origin: C64,
    h: f64,
    cells: usize,
    corners: Vec<f64>,
    cdf: Vec<f64>,
    jitter_sd: f64,
}

pub const DEFAULT_SAMPLER_CELLS: usize = 256;

impl OutcomeSampler {
    pub fn new(psi: &StateVector, sigma: MeasurementStrength, ladder: &Ladder, cells: usize) -> Result<Self> {
        check_state(psi, ladder)?;
        if cells < 2 {
            return Err(Error::invalid("cells", "need at least two cells per axis"));
        }
        let amps = psi.as_slice();
        let mean = ladder.expect_a(amps);
        let mut la = vec![C64::new(0.0, 0.0); amps.len()];
        ladder.apply_a(amps, &mut la);
        // E|beta - <a>|^2 under Q is <a a^dag> - |<a>|^2
        let spread = (linalg::vec_norm_sqr(&la) - mean.norm_sqr() + 1.0).max(1.0).sqrt();
        let half = 6.0 * spread;
        let h = 2.0 * half / cells as f64;
        let origin = mean - C64::new(half, half);
        let nodes = cells + 1;
        let dim = amps.len();
        let mut corners = vec![0.0; nodes * nodes];
        let mut coh = vec![C64::new(0.0, 0.0); dim];
        let sqrt_n: Vec<f64> = (0..dim).map(|n| (n as f64).sqrt()).collect();
        for j in 0..nodes {
            for i in 0..nodes {
                let beta = origin + C64::new(i as f64 * h, j as f64 * h);
                coh[0] = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
                for n in 1..dim {
                    coh[n] = coh[n - 1] * beta / sqrt_n[n];
                }
                let ov: C64 = coh.iter().zip(amps).map(|(c, z)| c.conj() * z).sum();
                corners[j * nodes + i] = ov.norm_sqr();
            }
        }
        let mut cdf = Vec::with_capacity(cells * cells);
        let mut acc = 0.0;
        for j in 0..cells {
            for i in 0..cells {
                let q = corners[j * nodes + i]
                    + corners[j * nodes + i + 1]
                    + corners[(j + 1) * nodes + i]
                    + corners[(j + 1) * nodes + i + 1];
                acc += q;
                cdf.push(acc);
            }
        }
        if !(acc > 0.0) {
            return Err(Error::DegenerateOutcome(acc));
        }
        for v in cdf.iter_mut() {
            *v /= acc;
        }
        let frame_alpha = psi.frame().alpha(&ladder.hs());
        Ok(OutcomeSampler {
            origin: origin + frame_alpha,
            h,
            cells,
            corners,
            cdf,
            jitter_sd: (0.5 * sigma.excess_variance()).sqrt(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        let u: f64 = rng.random();
        let cell = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let (i, j) = (cell % self.cells, cell / self.cells);
        let nodes = self.cells + 1;
        let q00 = self.corners[j * nodes + i];
        let q10 = self.corners[j * nodes + i + 1];
        let q01 = self.corners[(j + 1) * nodes + i];
        let q11 = self.corners[(j + 1) * nodes + i + 1];
        let fu = sample_linear(q00 + q01, q10 + q11, rng.random());
        let fv = sample_linear(q00 + fu * (q10 - q00), q01 + fu * (q11 - q01), rng.random());
        let mut chi = self.origin + C64::new((i as f64 + fu) * self.h, (j as f64 + fv) * self.h);
        if self.jitter_sd > 0.0 {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            chi += C64::new(z1, z2) * self.jitter_sd;
        }
        Outcome { chi }
    }
}

/// Inverse CDF on `[0, 1]` of the density proportional to `a (1 - t) + b t`.
fn sample_linear(a: f64, b: f64, u: f64) -> f64 {
    let d = b - a;
    if d.abs() <= 1e-12 * (a + b).abs() || a + b <= 0.0 {
        return u;
    }
    let disc = (a * a + d * (a + b) * u).max(0.0);
    ((disc.sqrt() - a) / d).clamp(0.0, 1.0)
}

/// One outcome draw; build an [`OutcomeSampler`] to draw many for one state.
pub fn sample_outcome<R: Rng + ?Sized>(
    psi: &StateVector,
    sigma: MeasurementStrength,
    ladder: &Ladder,
    rng: &mut R,
) -> Result<Outcome> {
    Ok(OutcomeSampler::new(psi, sigma, ladder, DEFAULT_SAMPLER_CELLS)?.sample(rng))
}

/// `|psi><psi|` as a dense matrix, for comparing conditional states.
pub fn projector(psi: &StateVector) -> DMatrix<C64> {
    let v: &DVector<C64> = psi.amps();
    v * v.adjoint()
}
