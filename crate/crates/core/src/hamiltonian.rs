//! The driven quartic Hamiltonian `H = a p^2 + b x^2 + c x^4 + d x cos(omega t)`.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{FrameCenter, Ladder, Operator, QuadraturePowers, C64};
use crate::linalg::Banded;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DrivenHamiltonianParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub omega: f64,
}

impl DrivenHamiltonianParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64, omega: f64) -> Result<Self> {
        if ![a, b, c, d, omega].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("hamiltonian", "coefficients must be finite"));
        }
        Ok(DrivenHamiltonianParams { a, b, c, d, omega })
    }

    /// `5p^2 + 5x^2 + x^4`
    pub fn integrable() -> Self {
        DrivenHamiltonianParams { a: 5.0, b: 5.0, c: 1.0, d: 0.0, omega: 0.0 }
    }

    /// `5p^2 - 8x^2 + x^4 + 15 x cos(2 pi t)`
    pub fn chaotic() -> Self {
        DrivenHamiltonianParams {
            a: 5.0,
            b: -8.0,
            c: 1.0,
            d: 15.0,
            omega: 2.0 * core::f64::consts::PI,
        }
    }

    pub fn free_particle(a: f64) -> Self {
        DrivenHamiltonianParams { a, ..Default::default() }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0 && self.d == 0.0
    }

    pub fn is_autonomous(&self) -> bool {
        self.d == 0.0
    }

    pub fn drive(&self, t: f64) -> f64 {
        if self.d == 0.0 {
            0.0
        } else {
            self.d * (self.omega * t).cos()
        }
    }

    /// Static part of the potential, `b x^2 + c x^4`.
    pub fn static_potential(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.b * x2 + self.c * x2 * x2
    }

    pub fn potential(&self, x: f64, t: f64) -> f64 {
        self.static_potential(x) + self.drive(t) * x
    }

    pub fn kinetic(&self, p: f64) -> f64 {
        self.a * p * p
    }

    pub fn energy(&self, x: f64, p: f64, t: f64) -> f64 {
        self.kinetic(p) + self.potential(x, t)
    }
}

/// `b x^2 + c x^4 + f x` with `x -> x + x0`, as a band matrix of width 4.
///
/// The constant `V(x0)` is included only when `with_constant` is set.
pub fn frame_potential(
    params: &DrivenHamiltonianParams,
    f: f64,
    powers: &QuadraturePowers,
    x0: f64,
    with_constant: bool,
) -> Banded {
    let [x1, x2, x3, x4] = &powers.x;
    let (b, c) = (params.b, params.c);
    let mut v = Banded::zeros(x1.dim(), 4);
    let re = |z: f64| C64::new(z, 0.0);
    v.add_scaled(x4, re(c));
    v.add_scaled(x3, re(4.0 * c * x0));
    v.add_scaled(x2, re(b + 6.0 * c * x0 * x0));
    v.add_scaled(x1, re(2.0 * b * x0 + 4.0 * c * x0 * x0 * x0 + f));
    if with_constant {
        v.add_diagonal(re(params.static_potential(x0) + f * x0));
    }
    v
}

/// `a p^2` with `p -> p + p0`, as a band matrix of width 2.
pub fn frame_kinetic(params: &DrivenHamiltonianParams, powers: &QuadraturePowers, p0: f64, with_constant: bool) -> Banded {
    let [p1, p2] = &powers.p;
    let a = params.a;
    let mut k = Banded::zeros(p1.dim(), 2);
    k.add_scaled(p2, C64::new(a, 0.0));
    k.add_scaled(p1, C64::new(2.0 * a * p0, 0.0));
    if with_constant {
        k.add_diagonal(C64::new(a * p0 * p0, 0.0));
    }
    k
}

/// `H(t)` on the basis centered at `frame` as a band matrix of width 4.
pub fn hamiltonian_banded(params: &DrivenHamiltonianParams, t: f64, ladder: &Ladder, frame: &FrameCenter) -> Banded {
    let powers = ladder.powers();
    let mut h = frame_potential(params, params.drive(t), powers, frame.x0, true);
    h.add_scaled(&frame_kinetic(params, powers, frame.p0, true), C64::new(1.0, 0.0));
    h
}

/// `H(t)` on the basis centered at `frame`, with `x -> x + x0`, `p -> p + p0`.
///
/// Powers of the quadratures are products of the truncated matrices, which
/// equals evaluating each term on the truncated quadrature's eigenbasis.
pub fn build_hamiltonian(
    params: &DrivenHamiltonianParams,
    t: f64,
    ladder: &Ladder,
    frame: &FrameCenter,
) -> Operator {
    Operator::from_matrix(hamiltonian_banded(params, t, ladder, frame).to_dense()).expect("square by construction")
}
