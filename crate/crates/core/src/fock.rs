//! Truncated Fock-space algebra on a displaced ("moving") number basis.
//!
//! A [`StateVector`] stores amplitudes over `|n> = D(alpha0) (n!)^-1/2 a^dag^n |0>`
//! for `n = 0..=N`, where `alpha0` is the complex center of its
//! [`FrameCenter`]. Operators are always frame-local; lab-frame position and
//! momentum are recovered by adding the frame offsets in the expectation
//! accessors.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, Banded};

pub type C64 = Complex<f64>;

/// Tail mass above which a state is considered to have overflowed the basis.
pub const TRUNCATION_THRESHOLD: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Planck constant and squeezing parameter. Together they fix the ladder
/// operator `a = (sqrt(s) x + i p / sqrt(s)) / sqrt(2 hbar)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbarS {
    hbar: f64,
    s: f64,
}

impl HbarS {
    pub fn new(hbar: f64, s: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::invalid("hbar", "must be positive and finite"));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("s", "must be positive and finite"));
        }
        Ok(HbarS { hbar, s })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Complex amplitude of the phase-space point `(x, p)`.
    pub fn alpha(&self, x: f64, p: f64) -> C64 {
        let k = (2.0 * self.hbar).sqrt();
        C64::new(self.s.sqrt() * x / k, p / (self.s.sqrt() * k))
    }

    /// Inverse of [`HbarS::alpha`].
    pub fn point(&self, alpha: C64) -> (f64, f64) {
        let k = (2.0 * self.hbar).sqrt();
        (alpha.re * k / self.s.sqrt(), alpha.im * k * self.s.sqrt())
    }

    /// Phase-space area element `dx dp` corresponding to `d^2 chi = 1`.
    pub fn area_per_unit_chi(&self) -> f64 {
        2.0 * self.hbar
    }
}

/// Lab-frame center of a displaced number basis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameCenter {
    pub x0: f64,
    pub p0: f64,
}

impl FrameCenter {
    pub fn new(x0: f64, p0: f64) -> Result<Self> {
        if !(x0.is_finite() && p0.is_finite()) {
            return Err(Error::invalid("frame", "center must be finite"));
        }
        Ok(FrameCenter { x0, p0 })
    }

    pub fn origin() -> Self {
        FrameCenter { x0: 0.0, p0: 0.0 }
    }

    pub fn alpha(&self, hs: &HbarS) -> C64 {
        hs.alpha(self.x0, self.p0)
    }

    pub fn from_alpha(alpha: C64, hs: &HbarS) -> Self {
        let (x0, p0) = hs.point(alpha);
        FrameCenter { x0, p0 }
    }
}

/// Dense square matrix on the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        Ok(Operator(mat))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        check_dim(self.dim(), psi.dim())?;
        Ok(&self.0 * &psi.amps)
    }
}

impl core::ops::Index<(usize, usize)> for Operator {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Eigen-decomposition of the frame-local position operator.
///
/// `x = O diag(eigvals) O^T` with `O` real orthogonal (row-major, column `k`
/// is eigenvector `k`). The momentum operator shares it through
/// `p = s R x R^dagger` with `R = diag(i^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureBasis {
    pub eigvals: Vec<f64>,
    pub vecs: Vec<f64>,
}

/// Ladder, position and momentum operators on `N + 1` levels.
#[derive(Debug, Clone)]
pub struct Ladder {
    n_max: usize,
    hs: HbarS,
    sqrt_n: Vec<f64>,
    pub a: Operator,
    pub adag: Operator,
    pub x: Operator,
    pub p: Operator,
    quad: QuadratureBasis,
    powers: QuadraturePowers,
}

/// Powers of the truncated frame-local quadratures as band matrices:
/// `x^1..x^4` and `p^1..p^2`. Products are taken of the truncated matrices,
/// so `x^4` here equals `O diag(lambda^4) O^T`.
#[derive(Debug, Clone)]
pub struct QuadraturePowers {
    pub x: [Banded; 4],
    pub p: [Banded; 2],
}

/// Builds `a`, `a^dagger`, `x` and `p` on levels `0..=n_max`.
pub fn build_ladder(n_max: usize, hs: HbarS) -> Result<Ladder> {
    if n_max < 1 {
        return Err(Error::BasisTooSmall(n_max));
    }
    let dim = n_max + 1;
    let sqrt_n: Vec<f64> = (0..dim).map(|n| (n as f64).sqrt()).collect();
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new(sqrt_n[n], 0.0);
    }
    let adag = a.adjoint();
    let xs = (hs.hbar / (2.0 * hs.s)).sqrt();
    let ps = (hs.hbar * hs.s / 2.0).sqrt();
    let x = (&a + &adag) * C64::new(xs, 0.0);
    let p = (&adag - &a) * C64::new(0.0, ps);

    let x1 = Banded::from_dense(&x, 1);
    let x2 = x1.mul(&x1);
    let p1 = Banded::from_dense(&p, 1);
    let p2 = p1.mul(&p1);
    let powers = QuadraturePowers {
        x: [x1.clone(), x2.clone(), x2.mul(&x1), x2.mul(&x2)],
        p: [p1, p2],
    };

    let mut q = DMatrix::<f64>::zeros(dim, dim);
    for n in 1..dim {
        q[(n - 1, n)] = sqrt_n[n] * xs;
        q[(n, n - 1)] = sqrt_n[n] * xs;
    }
    let eig = SymmetricEigen::new(q);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let eigvals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = vec![0.0; dim * dim];
    for (col, &k) in order.iter().enumerate() {
        for row in 0..dim {
            vecs[row * dim + col] = eig.eigenvectors[(row, k)];
        }
    }

    Ok(Ladder {
        n_max,
        hs,
        sqrt_n,
        a: Operator(a),
        adag: Operator(adag),
        x: Operator(x),
        p: Operator(p),
        quad: QuadratureBasis { eigvals, vecs },
        powers,
    })
}

impl Ladder {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn hs(&self) -> HbarS {
        self.hs
    }

    pub fn quadrature(&self) -> &QuadratureBasis {
        &self.quad
    }

    pub fn powers(&self) -> &QuadraturePowers {
        &self.powers
    }

    /// Eigenvalues of the frame-local momentum operator, paired index-wise
    /// with the position eigenvalues.
    pub fn momentum_eigvals(&self) -> impl Iterator<Item = f64> + '_ {
        let s = self.hs.s;
        self.quad.eigvals.iter().map(move |l| s * l)
    }

    /// `out = a v`
    pub fn apply_a(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim();
        for k in 0..n - 1 {
            out[k] = v[k + 1] * self.sqrt_n[k + 1];
        }
        out[n - 1] = ZERO;
    }

    /// `out = a^dagger v`
    pub fn apply_adag(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim();
        out[0] = ZERO;
        for k in 1..n {
            out[k] = v[k - 1] * self.sqrt_n[k];
        }
    }

    /// `out = x v` (frame-local)
    pub fn apply_x(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim();
        let xs = (self.hs.hbar / (2.0 * self.hs.s)).sqrt();
        for k in 0..n {
            let mut acc = ZERO;
            if k > 0 {
                acc += v[k - 1] * self.sqrt_n[k];
            }
            if k + 1 < n {
                acc += v[k + 1] * self.sqrt_n[k + 1];
            }
            out[k] = acc * xs;
        }
    }

    /// `out = p v` (frame-local)
    pub fn apply_p(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim();
        let ps = (self.hs.hbar * self.hs.s / 2.0).sqrt();
        for k in 0..n {
            let mut acc = ZERO;
            if k > 0 {
                acc += v[k - 1] * self.sqrt_n[k];
            }
            if k + 1 < n {
                acc -= v[k + 1] * self.sqrt_n[k + 1];
            }
            out[k] = C64::new(-acc.im, acc.re) * ps;
        }
    }

    /// `<v| a |v>`
    pub fn expect_a(&self, v: &[C64]) -> C64 {
        (1..self.dim())
            .map(|k| v[k - 1].conj() * v[k] * self.sqrt_n[k])
            .sum()
    }

    /// Generator `zeta a^dagger - zeta^* a` of the displacement `D(zeta)`.
    pub fn displacement_generator(&self, zeta: C64) -> Banded {
        displacement_generator(zeta, self.dim())
    }

    /// Lab-frame moments of `amps` in `frame`.
    pub fn moments_of(&self, amps: &[C64], frame: &FrameCenter) -> PhaseMoments {
        let n = self.dim();
        let mut xv = vec![ZERO; n];
        let mut pv = vec![ZERO; n];
        self.apply_x(amps, &mut xv);
        self.apply_p(amps, &mut pv);
        let norm = linalg::vec_norm_sqr(amps);
        let mx = linalg::inner(amps, &xv).re / norm;
        let mp = linalg::inner(amps, &pv).re / norm;
        let x2 = linalg::vec_norm_sqr(&xv) / norm;
        let p2 = linalg::vec_norm_sqr(&pv) / norm;
        let sym = linalg::inner(&xv, &pv).re / norm;
        PhaseMoments {
            mean_x: mx + frame.x0,
            mean_p: mp + frame.p0,
            vx: x2 - mx * mx,
            vp: p2 - mp * mp,
            cxp: sym - mx * mp,
        }
    }
}

/// Lab-frame first and second moments of a state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub vx: f64,
    pub vp: f64,
    /// Symmetrized covariance `<(xp + px)/2> - <x><p>`.
    pub cxp: f64,
}

impl PhaseMoments {
    pub fn total_variance(&self) -> f64 {
        self.vx + self.vp
    }
}

/// `D(beta) D(alpha) = phase * D(alpha + beta)`; returns the phase.
pub fn displacement_composition_phase(beta: C64, alpha: C64) -> C64 {
    let e = (beta * alpha.conj() - beta.conj() * alpha) * 0.5;
    e.exp()
}

/// Analytic Fock amplitudes `<n|alpha>` for `n = 0..dim`, unnormalized by truncation.
pub fn coherent_amplitudes(alpha: C64, dim: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(dim);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    out.push(c);
    for n in 1..dim {
        c = c * alpha / (n as f64).sqrt();
        out.push(c);
    }
    out
}

/// Mass in levels `n > 0.9 N`.
pub fn tail_mass(amps: &[C64]) -> f64 {
    let n_max = amps.len() - 1;
    let cut = (0.9 * n_max as f64).floor() as usize;
    amps[cut + 1..].iter().map(|z| z.norm_sqr()).sum()
}

fn check_tail(tail: f64) -> Result<()> {
    if tail > TRUNCATION_THRESHOLD || tail.is_nan() {
        Err(Error::TruncationOverflow {
            tail,
            threshold: TRUNCATION_THRESHOLD,
        })
    } else {
        Ok(())
    }
}

/// Normalized pure state on a displaced number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
    frame: FrameCenter,
}

impl StateVector {
    /// Normalizes `amps` and attaches `frame`.
    pub fn from_amplitudes(amps: Vec<C64>, frame: FrameCenter) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::BasisTooSmall(amps.len().saturating_sub(1)));
        }
        let norm = linalg::vec_norm(&amps);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NotNormalized(norm * norm));
        }
        let amps = DVector::from_iterator(amps.len(), amps.into_iter().map(|z| z / norm));
        Ok(StateVector { amps, frame })
    }

    /// Wraps amplitudes that are already normalized (checked to 1e-10).
    pub fn from_normalized(amps: DVector<C64>, frame: FrameCenter) -> Result<Self> {
        let n2 = linalg::vec_norm_sqr(amps.as_slice());
        if (n2 - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(n2));
        }
        Ok(StateVector { amps, frame })
    }

    pub fn vacuum(n_max: usize, frame: FrameCenter) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::BasisTooSmall(n_max));
        }
        let mut amps = DVector::zeros(n_max + 1);
        amps[0] = ONE;
        Ok(StateVector { amps, frame })
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn frame(&self) -> FrameCenter {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_max(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::vec_norm_sqr(self.as_slice())
    }

    pub fn tail_mass(&self) -> f64 {
        tail_mass(self.as_slice())
    }

    /// `<a>` in the frame-local basis.
    pub fn local_alpha(&self, ladder: &Ladder) -> C64 {
        ladder.expect_a(self.as_slice())
    }

    pub fn moments(&self, ladder: &Ladder) -> PhaseMoments {
        ladder.moments_of(self.as_slice(), &self.frame)
    }

    /// Lab-frame `<x>`.
    pub fn expect_x(&self, ladder: &Ladder) -> f64 {
        self.moments(ladder).mean_x
    }

    /// Lab-frame `<p>`.
    pub fn expect_p(&self, ladder: &Ladder) -> f64 {
        self.moments(ladder).mean_p
    }

    /// `<self|other>`, moving `other` into this frame first when needed.
    pub fn overlap(&self, other: &StateVector, hs: &HbarS) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        if self.frame == other.frame {
            Ok(linalg::inner(self.as_slice(), other.as_slice()))
        } else {
            let moved = recenter(other, self.frame, hs)?;
            Ok(linalg::inner(self.as_slice(), moved.as_slice()))
        }
    }

    pub fn fidelity(&self, other: &StateVector, hs: &HbarS) -> Result<f64> {
        Ok(self.overlap(other, hs)?.norm_sqr())
    }
}

/// Coherent state `|alpha>` (lab amplitude) expressed on the basis centered at `frame`.
pub fn coherent_state(alpha: C64, n_max: usize, frame: FrameCenter, hs: &HbarS) -> Result<StateVector> {
    if n_max < 1 {
        return Err(Error::BasisTooSmall(n_max));
    }
    let a0 = frame.alpha(hs);
    let local = alpha - a0;
    let mut amps = coherent_amplitudes(local, n_max + 1);
    let kept: f64 = linalg::vec_norm_sqr(&amps);
    check_tail(tail_mass(&amps) + (1.0 - kept).max(0.0))?;
    // |alpha> = D(a0) D(-a0) D(alpha)|0> and D(-a0) D(alpha) = phase * D(alpha - a0).
    let phase = displacement_composition_phase(-a0, alpha);
    for z in amps.iter_mut() {
        *z *= phase;
    }
    StateVector::from_amplitudes(amps, frame)
}

/// `D(zeta) = exp(zeta a^dagger - zeta^* a)` on the truncated space.
pub fn displacement_operator(zeta: C64, n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(Error::BasisTooSmall(n_max));
    }
    let dim = n_max + 1;
    let mut g = DMatrix::<C64>::zeros(dim, dim);
    for n in 1..dim {
        let w = (n as f64).sqrt();
        g[(n, n - 1)] = zeta * w;
        g[(n - 1, n)] = -zeta.conj() * w;
    }
    let d = linalg::expm(&g);
    let column: Vec<C64> = d.column(0).iter().copied().collect();
    check_tail(tail_mass(&column))?;
    Ok(Operator(d))
}

/// `<psi| op |psi>`
pub fn expect(op: &Operator, psi: &StateVector) -> Result<C64> {
    let v = op.apply(psi)?;
    Ok(linalg::inner(psi.as_slice(), v.as_slice()))
}

fn displacement_generator(zeta: C64, dim: usize) -> Banded {
    let mut g = Banded::zeros(dim, 1);
    for k in 0..dim - 1 {
        let w = ((k + 1) as f64).sqrt();
        g.set(k + 1, k, zeta * w);
        g.set(k, k + 1, -zeta.conj() * w);
    }
    g
}

/// Re-expresses `psi` on the basis centered at `new_frame`.
///
/// Uses the action of the truncated displacement `exp(zeta a^dag - zeta^* a)`
/// on the amplitude vector, which is the same operator
/// [`displacement_operator`] exponentiates densely.
pub fn recenter(psi: &StateVector, new_frame: FrameCenter, hs: &HbarS) -> Result<StateVector> {
    if new_frame == psi.frame {
        return Ok(psi.clone());
    }
    let a_old = psi.frame.alpha(hs);
    let a_new = new_frame.alpha(hs);
    let zeta = a_old - a_new;
    let g = displacement_generator(zeta, psi.dim());
    let mut moved = linalg::expm_banded_apply(&g, ONE, psi.as_slice());
    check_tail(tail_mass(&moved) / linalg::vec_norm_sqr(&moved))?;
    let phase = displacement_composition_phase(-a_new, a_old);
    for z in moved.iter_mut() {
        *z *= phase;
    }
    StateVector::from_amplitudes(moved, new_frame)
}

/// Density operator on a displaced number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
    frame: FrameCenter,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity to 1e-10.
    pub fn new(mat: DMatrix<C64>, frame: FrameCenter) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        if linalg::hermiticity_defect(&mat) > 1e-10 {
            return Err(Error::invalid("rho", "not Hermitian"));
        }
        if (mat.trace().re - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("rho", "trace differs from one"));
        }
        let rho = DensityMatrix { mat, frame };
        if rho.min_eigenvalue() < -1e-10 {
            return Err(Error::invalid("rho", "not positive semidefinite"));
        }
        Ok(rho)
    }

    /// No validation; for integrator internals and ensemble averages.
    pub fn from_matrix_unchecked(mat: DMatrix<C64>, frame: FrameCenter) -> Self {
        DensityMatrix { mat, frame }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let v = psi.amps();
        DensityMatrix {
            mat: v * v.adjoint(),
            frame: psi.frame,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn frame(&self) -> FrameCenter {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        linalg::hermitian_eigenvalues(&h)[0]
    }

    /// Mass of the diagonal in levels `n > 0.9 N`.
    pub fn tail_mass(&self) -> f64 {
        let n_max = self.dim() - 1;
        let cut = (0.9 * n_max as f64).floor() as usize;
        (cut + 1..=n_max).map(|k| self.mat[(k, k)].re).sum()
    }

    pub fn moments(&self, ladder: &Ladder) -> PhaseMoments {
        let x = ladder.x.matrix();
        let p = ladder.p.matrix();
        let tr = self.mat.trace().re;
        let ex = |m: &DMatrix<C64>| (m * &self.mat).trace().re / tr;
        let mx = ex(x);
        let mp = ex(p);
        let x2 = ex(&(x * x));
        let p2 = ex(&(p * p));
        let sym = ex(&((x * p + p * x) * C64::new(0.5, 0.0)));
        PhaseMoments {
            mean_x: mx + self.frame.x0,
            mean_p: mp + self.frame.p0,
            vx: x2 - mx * mx,
            vp: p2 - mp * mp,
            cxp: sym - mx * mp,
        }
    }

    /// `<a>` in the local basis.
    pub fn local_alpha(&self, ladder: &Ladder) -> C64 {
        (ladder.a.matrix() * &self.mat).trace()
    }

    /// Moves `rho` to the basis centered at `new_frame` (`D rho D^dagger`).
    pub fn recenter(&self, new_frame: FrameCenter, hs: &HbarS) -> Result<DensityMatrix> {
        if new_frame == self.frame {
            return Ok(self.clone());
        }
        let zeta = self.frame.alpha(hs) - new_frame.alpha(hs);
        let g = displacement_generator(zeta, self.dim());
        let displace_columns = |m: &DMatrix<C64>| {
            let mut out = m.clone();
            for j in 0..m.ncols() {
                let moved = linalg::expm_banded_apply(&g, ONE, m.column(j).as_slice());
                out.column_mut(j).as_mut_slice().copy_from_slice(&moved);
            }
            out
        };
        // D rho D^dag = (D (D rho)^dag)^dag
        let half = displace_columns(&self.mat);
        let mat = displace_columns(&half.adjoint()).adjoint();
        let moved = DensityMatrix { mat, frame: new_frame };
        check_tail(moved.tail_mass())?;
        Ok(moved)
    }

    /// `(1/2) ||rho - sigma||_1`, both expressed on the same frame.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        if self.frame != other.frame {
            return Err(Error::invalid("frame", "trace distance needs a common frame"));
        }
        let diff = &self.mat - &other.mat;
        let h = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
        Ok(0.5 * linalg::hermitian_eigenvalues(&h).iter().map(|l| l.abs()).sum::<f64>())
    }
}

/// Rectangular grid over lab-frame phase space; node `(i, j)` sits at
/// `(x_min + i dx, p_min + j dp)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl PhaseGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, p_min: f64, p_max: f64, np: usize) -> Result<Self> {
        let ok = [x_min, x_max, p_min, p_max].iter().all(|v| v.is_finite());
        if !ok || x_max <= x_min || p_max <= p_min {
            return Err(Error::invalid("grid", "extents must be finite and increasing"));
        }
        if nx < 2 || np < 2 {
            return Err(Error::invalid("grid", "needs at least 2 nodes per axis"));
        }
        Ok(PhaseGrid { x_min, x_max, nx, p_min, p_max, np })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }
}

/// Husimi density sampled on a [`PhaseGrid`], row-major with `p` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl HusimiField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    /// Riemann-sum estimate of `pi^-1 * integral Q d^2 chi`.
    pub fn normalization(&self, hs: &HbarS) -> f64 {
        let cell = self.grid.dx() * self.grid.dp() / hs.area_per_unit_chi();
        self.values.iter().sum::<f64>() * cell / PI
    }
}

/// Anything whose Husimi density `<chi|rho|chi>` can be evaluated.
pub trait PhaseSpaceState {
    fn frame(&self) -> FrameCenter;
    fn dim(&self) -> usize;
    /// `<beta|rho|beta>` for the local coherent amplitudes `c_n = <n|beta>`.
    fn coherent_expectation(&self, c: &[C64]) -> f64;
}

impl PhaseSpaceState for StateVector {
    fn frame(&self) -> FrameCenter {
        self.frame
    }
    fn dim(&self) -> usize {
        self.amps.len()
    }
    fn coherent_expectation(&self, c: &[C64]) -> f64 {
        linalg::inner(c, self.as_slice()).norm_sqr()
    }
}

impl PhaseSpaceState for DensityMatrix {
    fn frame(&self) -> FrameCenter {
        self.frame
    }
    fn dim(&self) -> usize {
        self.mat.nrows()
    }
    fn coherent_expectation(&self, c: &[C64]) -> f64 {
        let n = c.len();
        let mut acc = ZERO;
        for j in 0..n {
            let mut col = ZERO;
            for i in 0..n {
                col += c[i].conj() * self.mat[(i, j)];
            }
            acc += col * c[j];
        }
        acc.re
    }
}

/// `Q(chi) = <chi|rho|chi>` at every node of `grid`.
///
/// The coherent overlaps use the analytic Fock amplitudes, which are exact
/// for any state confined to the truncated space.
pub fn husimi_q<S: PhaseSpaceState>(state: &S, hs: &HbarS, grid: &PhaseGrid) -> HusimiField {
    let a0 = state.frame().alpha(hs);
    let dim = state.dim();
    let mut values = Vec::with_capacity(grid.nx * grid.np);
    for j in 0..grid.np {
        for i in 0..grid.nx {
            let chi = hs.alpha(grid.x(i), grid.p(j));
            let c = coherent_amplitudes(chi - a0, dim);
            values.push(state.coherent_expectation(&c));
        }
    }
    HusimiField { grid: *grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(hbar: f64) -> HbarS {
        HbarS::new(hbar, 1.0).unwrap()
    }

    #[test]
    fn lowering_operator_entries() {
        let l = build_ladder(2, hs(1.0)).unwrap();
        let a = l.a.matrix();
        assert_eq!(a[(0, 1)], ONE);
        assert!((a[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let nonzero = a.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn rejects_empty_basis() {
        assert_eq!(build_ladder(0, hs(1.0)).unwrap_err(), Error::BasisTooSmall(0));
        assert!(matches!(HbarS::new(0.0, 1.0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(HbarS::new(1.0, -1.0), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn position_matrix_scale() {
        let l = build_ladder(4, hs(0.05)).unwrap();
        assert!((l.x[(0, 1)].re - (0.05f64 / 2.0).sqrt()).abs() < 1e-15);
        assert!((0.15811 - l.x[(0, 1)].re).abs() < 1e-5);
    }

    #[test]
    fn commutator_is_identity_below_edge() {
        let l = build_ladder(10, hs(1.0)).unwrap();
        let c = linalg::commutator(l.a.matrix(), l.adag.matrix());
        for m in 0..10 {
            for n in 0..10 {
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((c[(m, n)] - C64::new(want, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn sparse_actions_match_dense() {
        let l = build_ladder(9, HbarS::new(0.3, 1.7).unwrap()).unwrap();
        let v: Vec<C64> = (0..10).map(|k| C64::new((k as f64).sin(), 0.3 * k as f64)).collect();
        let dv = DVector::from_vec(v.clone());
        let mut out = vec![ZERO; 10];
        for (op, f) in [
            (&l.a, Ladder::apply_a as fn(&Ladder, &[C64], &mut [C64])),
            (&l.adag, Ladder::apply_adag),
            (&l.x, Ladder::apply_x),
            (&l.p, Ladder::apply_p),
        ] {
            f(&l, &v, &mut out);
            let want = op.matrix() * &dv;
            for k in 0..10 {
                assert!((want[k] - out[k]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_basis_diagonalizes_x_and_p() {
        let l = build_ladder(12, HbarS::new(0.5, 2.0).unwrap()).unwrap();
        let q = l.quadrature();
        let n = l.dim();
        let o = DMatrix::from_row_slice(n, n, &q.vecs).map(|w| C64::new(w, 0.0));
        let dx = o.adjoint() * l.x.matrix() * &o;
        let r = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (0..n).map(|k| C64::new(0.0, 1.0).powu(k as u32)),
        ));
        let po = &r * &o;
        let dp = po.adjoint() * l.p.matrix() * &po;
        for (i, lp) in l.momentum_eigvals().enumerate() {
            assert!((dx[(i, i)].re - q.eigvals[i]).abs() < 1e-12);
            assert!((dp[(i, i)].re - lp).abs() < 1e-12);
            for j in 0..n {
                if i != j {
                    assert!(dx[(i, j)].norm() < 1e-12);
                    assert!(dp[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn vacuum_coherent_state() {
        let h = hs(0.05);
        let psi = coherent_state(ZERO, 7, FrameCenter::origin(), &h).unwrap();
        assert_eq!(psi.amps()[0], ONE);
        assert!(psi.as_slice()[1..].iter().all(|z| *z == ZERO));
    }

    #[test]
    fn coherent_state_overflow_is_reported() {
        let h = hs(1.0);
        let err = coherent_state(C64::new(3.0, 0.0), 10, FrameCenter::origin(), &h).unwrap_err();
        assert!(matches!(err, Error::TruncationOverflow { .. }));
    }

    #[test]
    fn coherent_state_eigenvalue() {
        let h = hs(1.0);
        let l = build_ladder(30, h).unwrap();
        let psi = coherent_state(ONE, 30, FrameCenter::origin(), &h).unwrap();
        let a = expect(&l.a, &psi).unwrap();
        assert!((a - ONE).norm() < 1e-10);
    }

    #[test]
    fn expectation_of_number_operator_on_vacuum() {
        let l = build_ladder(5, hs(1.0)).unwrap();
        let n_op = Operator::from_matrix(l.adag.matrix() * l.a.matrix()).unwrap();
        let vac = StateVector::vacuum(5, FrameCenter::origin()).unwrap();
        assert_eq!(expect(&n_op, &vac).unwrap(), ZERO);
        let wrong = StateVector::vacuum(6, FrameCenter::origin()).unwrap();
        assert!(matches!(expect(&n_op, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn frame_offsets_enter_expectations() {
        let h = hs(0.05);
        let l = build_ladder(20, h).unwrap();
        let frame = FrameCenter::new(-2.0, 1.0).unwrap();
        let psi = coherent_state(h.alpha(-2.0, 1.0), 20, frame, &h).unwrap();
        assert_eq!(psi.as_slice()[0].norm(), 1.0);
        assert_eq!(psi.expect_x(&l), -2.0);
        assert_eq!(psi.expect_p(&l), 1.0);
    }

    #[test]
    fn vacuum_husimi_at_origin() {
        let h = hs(1.0);
        let vac = StateVector::vacuum(10, FrameCenter::origin()).unwrap();
        let grid = PhaseGrid::new(-1.0, 1.0, 3, -1.0, 1.0, 3).unwrap();
        let q = husimi_q(&vac, &h, &grid);
        assert!((q.at(1, 1) - 1.0).abs() < 1e-15);
        let chi = h.alpha(1.0, 1.0);
        assert!((q.at(2, 2) - (-chi.norm_sqr()).exp()).abs() < 1e-14);
    }

    #[test]
    fn recenter_to_same_frame_is_identity() {
        let h = hs(0.05);
        let psi = coherent_state(C64::new(0.3, 0.1), 20, FrameCenter::origin(), &h).unwrap();
        assert_eq!(recenter(&psi, psi.frame(), &h).unwrap(), psi);
    }

    #[test]
    fn density_matrix_validation() {
        let h = hs(1.0);
        let psi = coherent_state(C64::new(0.5, -0.2), 20, FrameCenter::origin(), &h).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let checked = DensityMatrix::new(rho.matrix().clone(), rho.frame()).unwrap();
        assert!((checked.purity() - 1.0).abs() < 1e-12);
        let mut bad = rho.matrix().clone();
        bad[(0, 1)] += C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(bad, FrameCenter::origin()).is_err());
        let twice = rho.matrix() * C64::new(2.0, 0.0);
        assert!(DensityMatrix::new(twice, FrameCenter::origin()).is_err());
    }

    #[test]
    fn trace_distance_of_orthogonal_states_is_one() {
        let mut a = vec![ZERO; 4];
        a[0] = ONE;
        let mut b = vec![ZERO; 4];
        b[2] = ONE;
        let f = FrameCenter::origin();
        let ra = DensityMatrix::from_pure(&StateVector::from_amplitudes(a, f).unwrap());
        let rb = DensityMatrix::from_pure(&StateVector::from_amplitudes(b, f).unwrap());
        assert!((ra.trace_distance(&rb).unwrap() - 1.0).abs() < 1e-12);
        assert!(ra.trace_distance(&ra).unwrap() < 1e-12);
    }
}
