//! Analytic engine for Holstein-Primakoff pure states of the form
//! `psi(p) = Q(p) * exp(-p^2 / (2 s^2))` with `Q` a complex polynomial.
//!
//! All observable queries divide by the squared norm, so states carry
//! unnormalized polynomials throughout. Moments are evaluated exactly from
//! closed-form Gaussian integrals; the only numeric path is the projection
//! onto harmonic-oscillator number states, which is audited against the
//! analytic moments in the test suite.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on the polynomial degree carried by a state. Protocol states
/// have degree `2n` for `n` detections; 128 admits the n = 64 product-limit
/// checks with headroom.
pub const MAX_POLY_DEGREE: usize = 128;

/// Largest half-order `k` accepted by [`gaussian_moment`].
pub const MAX_MOMENT_K: usize = 160;

/// Tail-weight tolerance for the Fock projection.
pub const FOCK_TAIL_TOL: f64 = 1e-10;

/// Pure atomic state in the momentum representation: a complex polynomial
/// times a Gaussian envelope of width parameter `s^2` (vacuum has `s^2 = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureState {
    poly: Vec<Complex64>,
    width_sq: f64,
}

/// Number-basis amplitudes of a projected state, normalized, with the
/// recorded weight dropped beyond the cutoff.
#[derive(Debug, Clone)]
pub struct FockAmplitudes {
    pub amps: Vec<Complex64>,
    pub cutoff: usize,
    pub truncation_error: f64,
}

/// Exact moments of `|psi(p)|^2` (unnormalized norm, normalized mean and
/// variance).
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub norm_sq: f64,
    pub mean_p: f64,
    pub var_p: f64,
}

/// Raw even moment of the unnormalized Gaussian weight:
/// `integral p^(2k) exp(-p^2/s^2) dp = s^(2k+1) Gamma(k + 1/2)`.
///
/// Uses the half-integer Gamma recurrence directly so the value is exact to
/// rounding without a general Gamma implementation.
pub fn gaussian_moment(k: usize, s_sq: f64) -> Result<f64> {
    if k > MAX_MOMENT_K {
        return Err(Error::DegreeTooLarge(k));
    }
    assert!(s_sq > 0.0, "Gaussian width must be positive");
    let mut value = std::f64::consts::PI.sqrt() * s_sq.sqrt();
    for i in 1..=k {
        value *= s_sq * (i as f64 - 0.5);
    }
    if !value.is_finite() {
        return Err(Error::DegreeTooLarge(k));
    }
    Ok(value)
}

impl QuadratureState {
    /// Builds a state from dense polynomial coefficients (`poly[k]` is the
    /// coefficient of `p^k`) and the envelope width parameter.
    pub fn new(poly: Vec<Complex64>, width_sq: f64) -> Result<Self> {
        if width_sq <= 0.0 || !width_sq.is_finite() {
            return Err(Error::Domain(format!(
                "envelope width_sq must be positive and finite, got {width_sq}"
            )));
        }
        if poly.is_empty() || poly.iter().all(|c| c.norm_sqr() == 0.0) {
            return Err(Error::Domain(
                "polynomial must not be identically zero".into(),
            ));
        }
        if poly.len() - 1 > MAX_POLY_DEGREE {
            return Err(Error::DegreeTooLarge(poly.len() - 1));
        }
        Ok(Self { poly, width_sq })
    }

    /// The coherent-spin-state reference: `Q = 1`, unit width, `Var(p) = 1/2`.
    pub fn vacuum() -> Self {
        Self {
            poly: vec![Complex64::new(1.0, 0.0)],
            width_sq: 1.0,
        }
    }

    /// Pure Gaussian of the given width parameter.
    pub fn gaussian(width_sq: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(1.0, 0.0)], width_sq)
    }

    pub fn poly_coeffs(&self) -> &[Complex64] {
        &self.poly
    }

    pub fn width_sq(&self) -> f64 {
        self.width_sq
    }

    pub fn degree(&self) -> usize {
        self.poly.len() - 1
    }

    /// True when every odd coefficient is exactly zero.
    pub fn is_even(&self) -> bool {
        self.poly
            .iter()
            .skip(1)
            .step_by(2)
            .all(|c| c.norm_sqr() == 0.0)
    }

    /// Multiplies the polynomial by the post-selection factor `1 - c p^2`,
    /// leaving the envelope untouched. Normalization is deferred to the
    /// moment queries.
    pub fn apply_quadratic_factor(&self, c: Complex64) -> Self {
        let factor = [Complex64::new(1.0, 0.0), Complex64::ZERO, -c];
        let poly = poly_mul(&self.poly, &factor);
        assert!(
            poly.len() - 1 <= MAX_POLY_DEGREE,
            "polynomial degree cap exceeded"
        );
        Self {
            poly,
            width_sq: self.width_sq,
        }
    }

    /// Exact norm, mean and variance of `p` under `|psi|^2 / norm_sq`,
    /// assembled as a finite sum of Gaussian moments over the `|Q|^2`
    /// coefficients.
    pub fn moments(&self) -> Result<Moments> {
        // |Q(p)|^2 = sum_j c_j p^j with c_j = sum_i q_i conj(q_{j-i}).
        let sq = poly_mod_squared(&self.poly);
        let mut norm_sq = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (j, &c) in sq.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if j % 2 == 0 {
                let k = j / 2;
                norm_sq += c * gaussian_moment(k, self.width_sq)?;
                m2 += c * gaussian_moment(k + 1, self.width_sq)?;
            } else {
                let k = j / 2;
                m1 += c * gaussian_moment(k + 1, self.width_sq)?;
            }
        }
        if !(norm_sq.is_finite() && norm_sq > 0.0) {
            return Err(Error::Domain(format!(
                "squared norm must be finite and positive, got {norm_sq}"
            )));
        }
        let mean_p = m1 / norm_sq;
        let var_p = m2 / norm_sq - mean_p * mean_p;
        Ok(Moments {
            norm_sq,
            mean_p,
            var_p,
        })
    }

    /// `Var(p) / Var(p)_CSS` with the coherent-spin-state reference 1/2.
    pub fn squeezing_parameter(&self) -> Result<f64> {
        Ok(self.moments()?.var_p / 0.5)
    }

    /// Projects the (even) state onto harmonic-oscillator number
    /// eigenfunctions up to `cutoff`, normalizing the retained amplitudes.
    ///
    /// Odd amplitudes vanish identically for even `Q`; they are pinned to
    /// exact zero after the quadrature confirms them negligible.
    pub fn to_fock_even(&self, cutoff: usize) -> Result<FockAmplitudes> {
        if !self.is_even() {
            return Err(Error::Domain(
                "Fock projection requires an even polynomial".into(),
            ));
        }
        if cutoff % 2 != 0 || cutoff < self.degree() + 4 {
            return Err(Error::Domain(format!(
                "cutoff must be even and >= degree + 4, got {cutoff} for degree {}",
                self.degree()
            )));
        }

        let s = self.width_sq.sqrt();
        let p_max = (12.0 * s.max(1.0)).max((2.0 * cutoff as f64 + 1.0).sqrt() + 5.0);
        let n_pts = 6001usize;
        let dp = 2.0 * p_max / (n_pts - 1) as f64;

        // Normalized wavefunction samples.
        let mut psi = Vec::with_capacity(n_pts);
        let mut norm = 0.0;
        for i in 0..n_pts {
            let p = -p_max + i as f64 * dp;
            let v = eval_poly(&self.poly, p) * (-p * p / (2.0 * self.width_sq)).exp();
            norm += v.norm_sqr();
            psi.push(v);
        }
        norm = (norm * dp).sqrt();
        for v in &mut psi {
            *v /= norm;
        }

        // Hermite-function recurrence evaluated on the same grid.
        let mut amps = vec![Complex64::ZERO; cutoff + 1];
        let mut h_prev = vec![0.0f64; n_pts];
        let mut h_curr = vec![0.0f64; n_pts];
        for n in 0..=cutoff {
            let mut h_next = vec![0.0f64; n_pts];
            let mut overlap = Complex64::ZERO;
            for i in 0..n_pts {
                let p = -p_max + i as f64 * dp;
                let h = match n {
                    0 => std::f64::consts::PI.powf(-0.25) * (-p * p / 2.0).exp(),
                    1 => std::f64::consts::SQRT_2 * p * h_curr[i],
                    _ => {
                        (2.0 / n as f64).sqrt() * p * h_curr[i]
                            - ((n - 1) as f64 / n as f64).sqrt() * h_prev[i]
                    }
                };
                h_next[i] = h;
                overlap += psi[i] * h;
            }
            amps[n] = overlap * dp;
            h_prev = std::mem::take(&mut h_curr);
            h_curr = h_next;
        }

        let captured: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let tail = (1.0 - captured).max(0.0);
        if tail > FOCK_TAIL_TOL {
            return Err(Error::Truncation {
                weight: tail,
                cutoff,
                tol: FOCK_TAIL_TOL,
            });
        }
        let scale = captured.sqrt();
        for (n, a) in amps.iter_mut().enumerate() {
            if n % 2 == 1 {
                debug_assert!(a.norm() < 1e-10, "odd amplitude should vanish");
                *a = Complex64::ZERO;
            } else {
                *a /= scale;
            }
        }
        Ok(FockAmplitudes {
            amps,
            cutoff,
            truncation_error: tail,
        })
    }
}

fn eval_poly(poly: &[Complex64], p: f64) -> Complex64 {
    let mut acc = Complex64::ZERO;
    for &c in poly.iter().rev() {
        acc = acc * p + c;
    }
    acc
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == Complex64::ZERO {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Real coefficients of `|Q(p)|^2` on the real axis.
fn poly_mod_squared(q: &[Complex64]) -> Vec<f64> {
    let mut out = vec![0.0f64; 2 * q.len() - 1];
    for (i, &qi) in q.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out[i + j] += (qi * qj.conj()).re;
        }
    }
    out
}
