//! Covariance-matrix engine for the imaginary-weak-value limits: shear
//! (one-axis twisting), hyperbolic two-axis flow, and the alternating-pulse
//! product formula. Everything is 2x2 real symplectic algebra over the
//! atomic quadratures (X, P).

use nalgebra::{Matrix2, Vector2};

/// Gaussian state summary: quadrature means and symmetric covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl CovarianceState {
    /// Vacuum / coherent-spin-state reference: cov = diag(1/2, 1/2).
    pub fn vacuum() -> Self {
        Self {
            mean: Vector2::zeros(),
            cov: Matrix2::from_diagonal_element(0.5),
        }
    }

    pub fn det_cov(&self) -> f64 {
        self.cov.determinant()
    }

    /// Conjugates the covariance by a symplectic matrix `m` and maps the mean.
    pub fn transform(&self, m: &Matrix2<f64>) -> Self {
        Self {
            mean: m * self.mean,
            cov: m * self.cov * m.transpose(),
        }
    }
}

/// Shear generated by `P^2`: X -> X + 2 lam P, P -> P.
pub fn shear_matrix(lam: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, 2.0 * lam, 0.0, 1.0)
}

/// Shear generated by `X^2`: P -> P + 2 lam X, X -> X.
pub fn shear_matrix_x(lam: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, 0.0, 2.0 * lam, 1.0)
}

/// One-axis-twisting shear with `lam = A_w kappa^2 / 2`.
pub fn shear_oat(state: &CovarianceState, lam: f64) -> CovarianceState {
    state.transform(&shear_matrix(lam))
}

/// Hyperbolic two-axis flow with `g = A_w kappa^2`:
/// the (X+-P)/sqrt(2) variances scale by e^(+-4g) on vacuum.
pub fn tat_matrix(g: f64) -> Matrix2<f64> {
    let (c, s) = ((2.0 * g).cosh(), (2.0 * g).sinh());
    Matrix2::new(c, s, s, c)
}

pub fn tat_exact(state: &CovarianceState, g: f64) -> CovarianceState {
    state.transform(&tat_matrix(g))
}

/// Alternating-pulse approximation to the two-axis flow: n/2 pairs of
/// opposing shears with per-step strength g/(n/2) per quadrature.
/// Converges to [`tat_exact`] at rate O(1/n).
pub fn tat_product_matrix(g: f64, n: usize) -> Result<Matrix2<f64>, crate::error::Error> {
    if n == 0 || n % 2 != 0 {
        return Err(crate::error::Error::Domain(format!(
            "product formula needs an even positive pulse count, got {n}"
        )));
    }
    let pairs = n / 2;
    let step = g / pairs as f64;
    let pair = shear_matrix_x(step) * shear_matrix(step);
    let mut m = Matrix2::identity();
    for _ in 0..pairs {
        m = pair * m;
    }
    Ok(m)
}

pub fn tat_product(
    state: &CovarianceState,
    g: f64,
    n: usize,
) -> Result<CovarianceState, crate::error::Error> {
    Ok(state.transform(&tat_product_matrix(g, n)?))
}

/// Smallest eigenvalue of the covariance and the quadrature angle that
/// achieves it (angle 0 by convention when the state is isotropic).
pub fn min_quadrature_variance(state: &CovarianceState) -> (f64, f64) {
    let c = &state.cov;
    let (a, b, d) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
    let tr = a + d;
    let gap = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    let lam_min = 0.5 * (tr - gap);
    let angle = if gap < 1e-14 {
        0.0
    } else {
        // Eigenvector angle of the minimal direction.
        0.5 * (2.0 * b).atan2(a - d) + std::f64::consts::FRAC_PI_2
    };
    (lam_min, angle)
}

/// `xi^2` of the minimal quadrature relative to the vacuum reference 1/2.
pub fn xi_sq_min(state: &CovarianceState) -> f64 {
    min_quadrature_variance(state).0 / 0.5
}

/// Frobenius distance between two symplectic maps (Trotter diagnostics).
pub fn matrix_distance(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vacuum_figures() {
        let v = CovarianceState::vacuum();
        assert_relative_eq!(v.det_cov(), 0.25, epsilon = 1e-15);
        let (var, angle) = min_quadrature_variance(&v);
        assert_relative_eq!(var, 0.5, epsilon = 1e-15);
        assert_eq!(angle, 0.0);
        assert_relative_eq!(xi_sq_min(&v), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn oat_closed_form() {
        let v = CovarianceState::vacuum();
        assert_eq!(shear_oat(&v, 0.0), v);
        // A_w kappa^2 = 10 -> lam = 5, T = 1 + 2 lam^2 = 51.
        let sheared = shear_oat(&v, 5.0);
        assert_relative_eq!(sheared.det_cov(), 0.25, epsilon = 1e-12);
        let t = 51.0f64;
        let expect = 0.5 * (t - (t * t - 1.0).sqrt());
        let (var, _) = min_quadrature_variance(&sheared);
        assert_relative_eq!(var, expect, epsilon = 1e-12);
        assert_relative_eq!(var, 0.0049024, epsilon = 1e-6);
        assert_relative_eq!(xi_sq_min(&sheared), 0.009805, epsilon = 1e-5);
    }

    #[test]
    fn oat_loglog_slope() {
        let v = CovarianceState::vacuum();
        let slope = {
            let xs: Vec<f64> = (0..20)
                .map(|i| 10.0f64 * 10f64.powf(i as f64 / 19.0))
                .collect();
            let pts: Vec<(f64, f64)> = xs
                .iter()
                .map(|&c| (c.ln(), xi_sq_min(&shear_oat(&v, c / 2.0)).ln()))
                .collect();
            fit_slope(&pts)
        };
        assert!((slope + 2.0).abs() < 0.05, "slope {slope}");
    }

    fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn tat_closed_form() {
        let v = CovarianceState::vacuum();
        assert_eq!(tat_exact(&v, 0.0), v);
        let out = tat_exact(&v, 0.5);
        let (var, _) = min_quadrature_variance(&out);
        assert_relative_eq!(var, 0.5 * (-2.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(out.det_cov(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn tat_log_linearity() {
        let v = CovarianceState::vacuum();
        let pts: Vec<(f64, f64)> = (0..19)
            .map(|i| {
                let g = 0.2 + 0.1 * i as f64;
                (g, xi_sq_min(&tat_exact(&v, g)).ln())
            })
            .collect();
        let slope = fit_slope(&pts);
        // R^2 of the linear fit.
        let n = pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let icept = my - slope * mx;
        let ss_res: f64 = pts
            .iter()
            .map(|p| (p.1 - slope * p.0 - icept).powi(2))
            .sum();
        let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        assert!(1.0 - ss_res / ss_tot > 0.9999);
        assert!(slope < 0.0);
    }

    #[test]
    fn trotter_convergence_rate() {
        let g = 1.0;
        let exact = tat_matrix(g);
        let d8 = matrix_distance(&tat_product_matrix(g, 8).unwrap(), &exact);
        let d32 = matrix_distance(&tat_product_matrix(g, 32).unwrap(), &exact);
        let d128 = matrix_distance(&tat_product_matrix(g, 128).unwrap(), &exact);
        assert!(d32 < d8 && d128 < d32);
        // O(1/n): quadrupling n cuts the error by roughly 4.
        assert!((d8 / d32) > 2.5 && (d8 / d32) < 6.0);
        assert!((d32 / d128) > 2.5 && (d32 / d128) < 6.0);
    }

    #[test]
    fn product_formula_preserves_det() {
        let v = CovarianceState::vacuum();
        for n in [2usize, 8, 64] {
            let out = tat_product(&v, 0.7, n).unwrap();
            assert_relative_eq!(out.det_cov(), 0.25, epsilon = 1e-12);
        }
        assert!(tat_product(&v, 0.7, 3).is_err());
        assert!(tat_product(&v, 0.7, 0).is_err());
    }

    #[test]
    fn rotation_invariance_of_min_variance() {
        let v = shear_oat(&CovarianceState::vacuum(), 1.3);
        let (var0, _) = min_quadrature_variance(&v);
        let th = 0.77f64;
        let rot = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
        let (var1, _) = min_quadrature_variance(&v.transform(&rot));
        assert_relative_eq!(var0, var1, epsilon = 1e-12);
    }
}
