//! Randomized invariants: moment engine vs dense quadrature, Fock
//! round-trips, symplecticity, weak-value closure and parity.

use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;

use wmlab::gaussian;
use wmlab::protocols::BeamSplitterPair;
use wmlab::quad::QuadratureState;

fn even_state(coeffs: [f64; 5], width_sq: f64) -> QuadratureState {
    // Coefficient of p^(2k) at index 2k; odd entries zero.
    let mut poly = vec![Complex64::new(0.0, 0.0); 9];
    for (k, &c) in coeffs.iter().enumerate() {
        poly[2 * k] = Complex64::new(c, 0.0);
    }
    QuadratureState::new(poly, width_sq).unwrap()
}

/// Dense reference for norm and variance on a wide symmetric grid.
fn dense_moments(state: &QuadratureState) -> (f64, f64) {
    let s = state.width_sq().sqrt();
    let p_max = 14.0 * s.max(1.0);
    let n_pts = 40_001usize;
    let dp = 2.0 * p_max / (n_pts - 1) as f64;
    let mut norm = 0.0;
    let mut second = 0.0;
    for i in 0..n_pts {
        let p = -p_max + i as f64 * dp;
        let mut q = Complex64::new(0.0, 0.0);
        for &c in state.poly_coeffs().iter().rev() {
            q = q * p + c;
        }
        let w = q.norm_sqr() * (-p * p / state.width_sq()).exp();
        norm += w;
        second += w * p * p;
    }
    (norm * dp, second / norm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_match_dense_quadrature(
        coeffs in [0.05f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0],
        width_sq in 0.2f64..2.0,
    ) {
        let state = even_state(coeffs, width_sq);
        let m = state.moments().unwrap();
        let (norm_ref, var_ref) = dense_moments(&state);
        prop_assert!((m.norm_sq / norm_ref - 1.0).abs() < 1e-9);
        prop_assert!((m.var_p / var_ref - 1.0).abs() < 1e-9);
        // Parity: even states have an exactly vanishing first moment.
        prop_assert_eq!(m.mean_p, 0.0);
    }

    #[test]
    fn fock_roundtrip_preserves_variance(
        coeffs in [0.05f64..2.0, -1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5],
        width_sq in 0.5f64..1.8,
    ) {
        let state = even_state(coeffs, width_sq);
        let m = state.moments().unwrap();
        let fock = state.to_fock_even(80).unwrap();
        // Odd amplitudes are pinned to exact zero.
        for n in (1..fock.amps.len()).step_by(2) {
            prop_assert_eq!(fock.amps[n], Complex64::new(0.0, 0.0));
        }
        // <p^2> via the tridiagonal p^2 matrix in the number basis.
        let d = fock.amps.len();
        let mut second = 0.0;
        for n in 0..d {
            second += fock.amps[n].norm_sqr() * (n as f64 + 0.5);
            if n + 2 < d {
                let cross = (fock.amps[n].conj() * fock.amps[n + 2]).re;
                second += 2.0 * cross * ((n + 1) as f64 * (n + 2) as f64).sqrt() / 2.0;
            }
        }
        prop_assert!((second - m.var_p).abs() < 1e-8,
            "fock <p^2> = {}, exact = {}", second, m.var_p);
    }

    #[test]
    fn twisting_maps_are_symplectic(lam in -5.0f64..5.0, g in -1.5f64..1.5) {
        let j = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        for m in [
            gaussian::shear_matrix(lam),
            gaussian::shear_matrix_x(lam),
            gaussian::tat_matrix(g),
            gaussian::tat_product_matrix(g, 6).unwrap(),
        ] {
            let resid = m.transpose() * j * m - j;
            prop_assert!(resid.norm() < 1e-12);
        }
        // Determinant of the covariance (purity) is preserved.
        let state = gaussian::CovarianceState::vacuum();
        let sheared = gaussian::shear_oat(&state, lam);
        prop_assert!((sheared.det_cov() - state.det_cov()).abs() < 1e-12);
    }

    #[test]
    fn weak_value_closure_randomized(r in 0.15f64..0.9, rp in 0.15f64..0.9) {
        let t = (1.0 - r * r).sqrt();
        let tp = (1.0 - rp * rp).sqrt();
        prop_assume!((r * rp - t * tp).abs() > 0.05);
        let bs = BeamSplitterPair::new(r, t, rp, tp).unwrap();
        let closed = bs.weak_value().unwrap().re();
        let oracle = wmlab::protocols::noon_weak_value(1, &bs, 6).unwrap();
        prop_assert!((oracle.re - closed).abs() < 1e-10);
        prop_assert!(oracle.im.abs() < 1e-10);
    }
}
