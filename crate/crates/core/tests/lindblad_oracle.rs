use contmeas_core::fock::{build_ladder, coherent_state, DensityMatrix, Ladder};
use contmeas_core::gaussian::{gaussian_pure_state, GaussianMoments};
use contmeas_core::hamiltonian::build_hamiltonian;
use contmeas_core::lindblad::*;
use contmeas_core::linalg;
use contmeas_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HBAR: f64 = 0.05;

fn ladder(n_max: usize, s: f64) -> Ladder {
    build_ladder(n_max, HbarS::new(HBAR, s).unwrap()).unwrap()
}

/// Mixture of three random pure states with no weight on the top level.
fn random_rho(rng: &mut ChaCha8Rng, dim: usize, frame: FrameCenter) -> DensityMatrix {
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for _ in 0..3 {
        let v: Vec<C64> = (0..dim)
            .map(|n| {
                if n + 1 == dim {
                    return C64::new(0.0, 0.0);
                }
                let w = 0.55f64.powi(n as i32);
                C64::new(rng.random_range(-1.0..1.0) * w, rng.random_range(-1.0..1.0) * w)
            })
            .collect();
        let norm = linalg::vec_norm_sqr(&v);
        let weight = rng.random_range(0.1..1.0);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] += v[i] * v[j].conj() * (weight / norm);
            }
        }
    }
    let tr = m.trace();
    DensityMatrix::new(m / tr, frame).unwrap()
}

fn joint(gamma: f64) -> sse::MeasurementRates {
    sse::MeasurementRates::joint(gamma).unwrap()
}

#[test]
fn vacuum_dissipator_by_hand() {
    let l = ladder(8, 1.0);
    let gamma = 0.6;
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), joint(gamma));
    let vac = StateVector::vacuum(8, FrameCenter::origin()).unwrap();
    let rhs = lindblad_rhs(&DensityMatrix::from_pure(&vac), &gen, 0.0).unwrap();
    for i in 0..9 {
        for j in 0..9 {
            let want = match (i, j) {
                (0, 0) => -gamma,
                (1, 1) => gamma,
                _ => 0.0,
            };
            assert!((rhs[(i, j)] - C64::new(want, 0.0)).norm() < 1e-14, "({i},{j})");
        }
    }
}

#[test]
fn quadrature_and_ladder_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for s in [1.0, 1.7, 0.6] {
        let l = ladder(30, s);
        let gamma = 0.8;
        let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), joint(gamma));
        for _ in 0..5 {
            let rho = random_rho(&mut rng, 31, FrameCenter::origin());
            let q = quadrature_dissipator(rho.matrix(), &gen);
            let a = ladder_dissipator(rho.matrix(), &l, gamma);
            let scale = linalg::max_abs(&a);
            assert!(linalg::max_abs(&(q - a)) <= 1e-12 * scale);
        }
    }
}

#[test]
fn unitary_part_conserves_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = ladder(40, 1.0);
    let params = DrivenHamiltonianParams::integrable();
    let frame = FrameCenter::new(-0.3, 0.2).unwrap();
    let gen = LindbladGenerator::new(&l, params, sse::MeasurementRates::Unmeasured);
    let rho = random_rho(&mut rng, 41, frame);
    let h = build_hamiltonian(&params, 0.0, &l, &frame);
    let rhs = lindblad_rhs(&rho, &gen, 0.0).unwrap();
    let de = (h.matrix() * &rhs).trace();
    let scale = linalg::max_abs(h.matrix()) * linalg::max_abs(&rhs);
    assert!(de.norm() < 1e-12 * scale, "{de}");
}

#[test]
fn purity_never_increases_without_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = ladder(31, 1.0);
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), joint(0.7));
    let opts = PropagationOptions { snapshot_stride: 10, ..Default::default() };
    for _ in 0..20 {
        let rho = random_rho(&mut rng, 32, FrameCenter::origin());
        let series = propagate(&rho, &gen, 1e-3, 0.2, &opts).unwrap();
        let purities: Vec<f64> = series.states.iter().map(|r| r.purity()).collect();
        for w in purities.windows(2) {
            assert!(w[1] <= w[0] + 1e-14, "{} -> {}", w[0], w[1]);
        }
        assert!(purities.last().unwrap() < &purities[0]);
    }
}

#[test]
fn coherent_purity_decays_under_joint_measurement() {
    let l = ladder(31, 1.0);
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), joint(1.0));
    let psi = coherent_state(C64::new(0.5, -0.2), 31, FrameCenter::origin(), &l.hs()).unwrap();
    let opts = PropagationOptions { snapshot_stride: 20, ..Default::default() };
    let series = propagate(&DensityMatrix::from_pure(&psi), &gen, 1e-3, 0.4, &opts).unwrap();
    let purities: Vec<f64> = series.states.iter().map(|r| r.purity()).collect();
    assert!(purities.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn unconditional_variances_grow_linearly() {
    // position-only: V_p rises at hbar Gamma1
    let l = ladder(63, 1.0);
    let m0 = GaussianMoments::new(HBAR, HBAR / 4.0, 0.0, HBAR).unwrap();
    let psi = gaussian_pure_state(&m0, 0.0, 0.0, 63, &l.hs()).unwrap();
    let gamma1 = 1.0;
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), sse::MeasurementRates::position_only(gamma1).unwrap());
    let opts = PropagationOptions { snapshot_stride: 50, ..Default::default() };
    let series = propagate(&DensityMatrix::from_pure(&psi), &gen, 1e-3, 0.3, &opts).unwrap();
    for (t, rho) in series.times.iter().zip(&series.states) {
        let m = rho.moments(&l);
        assert!((m.vp - (m0.vp + HBAR * gamma1 * t)).abs() < 1e-10, "t = {t}");
        assert!((m.vx - m0.vx).abs() < 1e-10);
    }

    // joint: dV_x/dt = gamma hbar / s, checked by differencing the propagated moments
    let s = 1.5;
    let gamma = core::f64::consts::FRAC_1_SQRT_2;
    let l = ladder(63, s);
    let psi = gaussian_pure_state(&GaussianMoments::coherent(s, HBAR), 0.2, -0.1, 63, &l.hs()).unwrap();
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), joint(gamma));
    let opts = PropagationOptions { snapshot_stride: 10, ..Default::default() };
    let series = propagate(&DensityMatrix::from_pure(&psi), &gen, 1e-3, 0.3, &opts).unwrap();
    let vx: Vec<f64> = series.states.iter().map(|r| r.moments(&l).vx).collect();
    for (w, t) in vx.windows(2).zip(series.times.windows(2)) {
        let rate = (w[1] - w[0]) / (t[1] - t[0]);
        assert!((rate - gamma * HBAR / s).abs() < 1e-6, "{rate}");
    }
}

#[test]
fn chaotic_propagation_keeps_the_monitors_quiet() {
    let l = ladder(63, 1.0);
    let hs = l.hs();
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::chaotic(), joint(core::f64::consts::FRAC_1_SQRT_2));
    let psi = coherent_state(hs.alpha(-2.0, 1.0), 63, FrameCenter::new(-2.0, 1.0).unwrap(), &hs).unwrap();
    let opts = PropagationOptions { snapshot_stride: 100, ..Default::default() };
    let series = propagate(&DensityMatrix::from_pure(&psi), &gen, 1e-4, 0.2, &opts).unwrap();
    assert!(series.max_trace_error <= 1e-8);
    assert!(series.max_hermiticity_defect <= 1e-10);
    assert!(series.min_eigenvalue >= -1e-8);
    assert_eq!(series.times.len(), 21);
    // the basis follows the state
    assert_ne!(series.last().frame(), FrameCenter::new(-2.0, 1.0).unwrap());
    let m = series.last().moments(&l);
    assert!(m.total_variance() > HBAR);
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let l = ladder(10, 1.0);
    let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::default(), joint(1.0));
    let rho = DensityMatrix::from_pure(&StateVector::vacuum(5, FrameCenter::origin()).unwrap());
    assert!(lindblad_rhs(&rho, &gen, 0.0).is_err());
    assert!(propagate(&rho, &gen, 1e-3, 0.01, &PropagationOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rhs_is_traceless_and_hermitian(seed in 0u64..10_000, t in 0.0f64..1.0, x0 in -1.0f64..1.0, p0 in -1.0f64..1.0, gamma in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = ladder(24, 1.3);
        let gen = LindbladGenerator::new(&l, DrivenHamiltonianParams::chaotic(), joint(gamma));
        let rho = random_rho(&mut rng, 25, FrameCenter::new(x0, p0).unwrap());
        let rhs = lindblad_rhs(&rho, &gen, t).unwrap();
        let scale = linalg::max_abs(&rhs).max(1.0);
        prop_assert!(rhs.trace().norm() < 1e-12 * scale);
        prop_assert!(linalg::hermiticity_defect(&rhs) < 1e-12 * scale);
    }
}
