//! Small dense and band-matrix kernels used on the hot paths.
//!
//! Matrices handed around the public API are `nalgebra::DMatrix<C64>`; the
//! routines here work on raw slices where the generic kernels would allocate
//! or walk column-major storage in the wrong order.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::fock::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Maximum absolute column sum.
pub fn norm1(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
///
/// The argument is scaled by `2^-k` until its 1-norm is at most 1/2 and the
/// series is summed until the next term is below machine precision relative
/// to the partial sum.
pub fn expm(m: &DMatrix<C64>) -> DMatrix<C64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    let nrm = norm1(m);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while nrm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * C64::new(scale, 0.0);
    let mut sum = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..40 {
        term = &term * &a * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if norm1(&term) <= f64::EPSILON * 1e-2 * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Complex band matrix with `bw` diagonals on each side of the main one.
///
/// Row `i` stores entries `(i, i - bw) ..= (i, i + bw)`; slots outside the
/// matrix are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    dim: usize,
    bw: usize,
    data: Vec<C64>,
}

impl Banded {
    pub fn zeros(dim: usize, bw: usize) -> Self {
        Banded { dim, bw, data: vec![ZERO; dim * (2 * bw + 1)] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Banded::zeros(dim, 0);
        m.add_diagonal(C64::new(1.0, 0.0));
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.dim || j >= self.dim || i.abs_diff(j) > self.bw {
            None
        } else {
            Some(i * (2 * self.bw + 1) + j + self.bw - i)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.slot(i, j).map_or(ZERO, |k| self.data[k])
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let k = self.slot(i, j).expect("entry outside the band");
        self.data[k] = v;
    }

    /// Keeps the entries of `m` within `bw` of the diagonal.
    pub fn from_dense(m: &DMatrix<C64>, bw: usize) -> Self {
        let n = m.nrows();
        let mut b = Banded::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                b.set(i, j, m[(i, j)]);
            }
        }
        b
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(self.bw)..(i + self.bw + 1).min(n) {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    pub fn add_diagonal(&mut self, c: C64) {
        for i in 0..self.dim {
            let k = i * (2 * self.bw + 1) + self.bw;
            self.data[k] += c;
        }
    }

    /// `self += c * other`; `other` may have a narrower band.
    pub fn add_scaled(&mut self, other: &Banded, c: C64) {
        assert_eq!(self.dim, other.dim, "band matrices of different size");
        assert!(other.bw <= self.bw, "band too wide to accumulate");
        for i in 0..self.dim {
            for j in i.saturating_sub(other.bw)..(i + other.bw + 1).min(self.dim) {
                let k = self.slot(i, j).expect("inside the wider band");
                self.data[k] += other.get(i, j) * c;
            }
        }
    }

    /// `self * other`, with bandwidth the sum of both.
    pub fn mul(&self, other: &Banded) -> Banded {
        assert_eq!(self.dim, other.dim, "band matrices of different size");
        let n = self.dim;
        let mut out = Banded::zeros(n, self.bw + other.bw);
        for i in 0..n {
            for k in i.saturating_sub(self.bw)..(i + self.bw + 1).min(n) {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                for j in k.saturating_sub(other.bw)..(k + other.bw + 1).min(n) {
                    let slot = out.slot(i, j).expect("inside the product band");
                    out.data[slot] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Banded {
        let mut out = Banded::zeros(self.dim, self.bw);
        for i in 0..self.dim {
            for j in i.saturating_sub(self.bw)..(i + self.bw + 1).min(self.dim) {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// `out[i] = (M v)[i]` for `i < rows`; entries of `out` past `rows` are untouched.
    pub fn apply_rows(&self, v: &[C64], out: &mut [C64], rows: usize) {
        let n = self.dim;
        let w = 2 * self.bw + 1;
        for i in 0..rows.min(n) {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(n);
            let row = &self.data[i * w + lo + self.bw - i..i * w + hi + self.bw - i];
            let mut acc = ZERO;
            for (m, z) in row.iter().zip(v[lo..hi].iter()) {
                acc += m * z;
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        self.apply_rows(v, out, self.dim);
    }

    /// Upper bound on the largest absolute row sum over the first `rows`
    /// rows, within a factor `sqrt(2)`.
    pub fn row_norm(&self, rows: usize) -> f64 {
        let w = 2 * self.bw + 1;
        self.data
            .chunks_exact(w)
            .take(rows)
            .map(|r| r.iter().map(|z| z.re.abs() + z.im.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        self.row_norm(self.dim)
    }
}

/// Amplitudes below this fraction of the vector norm are treated as outside
/// the support when restricting band products to the occupied levels.
pub const SUPPORT_CUTOFF: f64 = 1e-14;

/// One past the last entry of `v` whose modulus exceeds `cutoff`.
pub fn support_end(v: &[C64], cutoff: f64) -> usize {
    let c2 = cutoff * cutoff;
    v.iter().rposition(|z| z.norm_sqr() > c2).map_or(0, |k| k + 1)
}

/// Computes `exp(theta G) v` for band matrix `G` without forming the exponential.
///
/// The interval is split into chunks with `|theta| ||G|| / chunks <= 1`,
/// measuring the norm on the occupied levels only, and a Taylor series is
/// summed to convergence on each chunk. Each product only touches rows that
/// can be reached from the occupied levels.
pub fn expm_banded_apply(g: &Banded, theta: C64, v: &[C64]) -> Vec<C64> {
    let n = g.dim();
    let bw = g.bandwidth();
    let mut state = v.to_vec();
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    let scale = vec_norm(v);
    if scale == 0.0 {
        return state;
    }
    let cutoff = SUPPORT_CUTOFF * scale;
    let estimate_rows = |end: usize| (end + 8 * bw).min(n);
    let mut remaining = 1.0;
    while remaining > 0.0 {
        let end = support_end(&state, cutoff).max(1);
        let nrm = theta.norm() * g.row_norm(estimate_rows(end));
        let frac = if nrm * remaining > 1.0 { 1.0 / nrm } else { remaining };
        let th = theta * frac;
        let mut reach = end;
        term.iter_mut().for_each(|t| *t = ZERO);
        term[..reach].copy_from_slice(&state[..reach]);
        for k in 1..80 {
            let rows = (reach + bw).min(n);
            g.apply_rows(&term, &mut next, rows);
            let f = th / k as f64;
            let mut tn = 0.0;
            for i in 0..rows {
                let t = next[i] * f;
                term[i] = t;
                state[i] += t;
                tn += t.norm_sqr();
            }
            reach = rows;
            if tn.sqrt() <= 1e-17 * scale {
                break;
            }
        }
        remaining = if frac == remaining { 0.0 } else { remaining - frac };
    }
    state
}

pub fn vec_norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    vec_norm_sqr(v).sqrt()
}

/// `<u|v>`, conjugating the left argument.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    vals
}

/// Largest absolute entry of `m - m^dagger`.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Entry-wise maximum modulus.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `[A, B]`
pub fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal_matches_scalar_exponentials() {
        let mut m = DMatrix::<C64>::zeros(3, 3);
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.25, 2.0);
        m[(2, 2)] = C64::new(0.0, -7.0);
        let e = expm(&m);
        for i in 0..3 {
            assert!((e[(i, i)] - m[(i, i)].exp()).norm() < 1e-13);
        }
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn expm_nilpotent() {
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(0, 1)] = C64::new(3.0, 0.0);
        let e = expm(&m);
        assert!((e[(0, 1)] - C64::new(3.0, 0.0)).norm() < 1e-13);
        assert!((e[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn banded_action_matches_dense_exponential() {
        let n = 14;
        let mut g = Banded::zeros(n, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                let z = C64::new(0.3 * (i as f64 - j as f64), 0.05 * (i + j) as f64);
                g.set(i, j, z);
            }
        }
        let theta = C64::new(0.4, -1.3);
        let dense = expm(&(g.to_dense() * theta));
        let v: Vec<C64> = (0..n).map(|i| C64::new(1.0 / (1.0 + i as f64), 0.1 * i as f64)).collect();
        let fast = expm_banded_apply(&g, theta, &v);
        for i in 0..n {
            let slow: C64 = (0..n).map(|j| dense[(i, j)] * v[j]).sum();
            assert!((slow - fast[i]).norm() < 1e-11 * (1.0 + slow.norm()), "row {i}");
        }
    }

    #[test]
    fn banded_product_matches_dense() {
        let n = 9;
        let mut a = Banded::zeros(n, 1);
        let mut b = Banded::zeros(n, 2);
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                a.set(i, j, C64::new(i as f64 + 1.0, j as f64));
            }
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                b.set(i, j, C64::new(-(j as f64), 0.5));
            }
        }
        let prod = a.mul(&b).to_dense();
        let want = a.to_dense() * b.to_dense();
        assert!(max_abs(&(prod - want)) < 1e-12);
        assert_eq!(a.mul(&b).bandwidth(), 3);
    }
}
