//! Protocol builders: QND baseline, single- and multi-detection
//! weak-measurement squeezing, the NooN and coherent-input variants, and
//! the detector-inefficiency transform. Analytic paths go through the
//! quadrature engine; every oracle-backed path goes through the Fock
//! simulator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    self, beam_splitter_apply, bs_unitary, coherent_vector, css_amplitudes, expm, fock_pair,
    fr_unitary_apply, pair_index, post_select, spin_squeezing_report, FockOperator, HilbertState,
    SpaceLayout,
};
use crate::quad::QuadratureState;

const WEIGHT_TOL: f64 = 1e-12;

fn cplx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Post-selection amplification parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValue {
    pub value: Complex64,
}

impl WeakValue {
    pub fn real(aw: f64) -> Self {
        Self { value: cplx(aw) }
    }

    /// The reduced parameter appearing in the quadratic state factor:
    /// `A_w / 2 - 1/4`.
    pub fn a_tilde(&self) -> Complex64 {
        self.value / 2.0 - cplx(0.25)
    }

    pub fn re(&self) -> f64 {
        self.value.re
    }

    fn require_real(&self) -> Result<f64> {
        if self.value.im.abs() > 1e-14 {
            return Err(Error::NoRealSolution(self.value.im));
        }
        Ok(self.value.re)
    }
}

/// Pre/post-selection beam-splitter settings. Signed amplitudes are
/// allowed on the primed pair: a sign flip stands for a half-wave phase
/// plate on that arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterPair {
    pub r: f64,
    pub t: f64,
    pub r_prime: f64,
    pub t_prime: f64,
}

impl BeamSplitterPair {
    pub fn new(r: f64, t: f64, r_prime: f64, t_prime: f64) -> Result<Self> {
        for (label, a, b) in [("input", r, t), ("post", r_prime, t_prime)] {
            if (a * a + b * b - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "{label} splitter amplitudes not normalized: {a}, {b}"
                )));
            }
        }
        Ok(Self {
            r,
            t,
            r_prime,
            t_prime,
        })
    }

    /// `<phi'|phi> = r r' - t t'`.
    pub fn overlap(&self) -> f64 {
        self.r * self.r_prime - self.t * self.t_prime
    }

    /// Closed-form weak value `r r' / (r r' - t t') + 1/2`.
    pub fn weak_value(&self) -> Result<WeakValue> {
        let d = self.overlap();
        if d.abs() < 1e-14 {
            return Err(Error::SingularPostSelection(d.abs()));
        }
        Ok(WeakValue::real(self.r * self.r_prime / d + 0.5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Qnd,
    WmSingle,
    WmMulti,
    Oat,
    Tat,
    Noon,
    Coherent,
}

/// Full description of one protocol run. Fields irrelevant to `kind` must
/// stay at their defaults; `validate` enforces this.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub kappa: f64,
    /// Detection count; weights default to the equal split.
    #[serde(default = "default_one")]
    pub n_detections: usize,
    /// Subpulse weights; must satisfy sum(theta_j^2) = 1.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Real weak value A_w; None means the per-kappa optimum.
    #[serde(default)]
    pub weak_value: Option<f64>,
    #[serde(default)]
    pub detector_inefficiency: f64,
    #[serde(default = "default_one")]
    pub noon_m: usize,
    #[serde(default)]
    pub r0_prime: Option<f64>,
    /// Even pulse count for the two-axis product formula.
    #[serde(default)]
    pub tat_pulses: Option<usize>,
}

fn default_one() -> usize {
    1
}

impl ProtocolSpec {
    pub fn minimal(kind: ProtocolKind, kappa: f64) -> Self {
        Self {
            kind,
            kappa,
            n_detections: 1,
            weights: None,
            weak_value: None,
            detector_inefficiency: 0.0,
            noon_m: 1,
            r0_prime: None,
            tat_pulses: None,
        }
    }

    /// Resolved subpulse weights (equal split when unspecified).
    pub fn resolved_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => {
                let n = self.n_detections.max(1);
                vec![(1.0 / n as f64).sqrt(); n]
            }
        }
    }

    /// Resolved weak value (closed-form optimum when unspecified).
    pub fn resolved_weak_value(&self) -> WeakValue {
        match self.weak_value {
            Some(aw) => WeakValue::real(aw),
            None => optimal_weak_value(self.kappa),
        }
    }

    pub fn validate(&self) -> Result<()> {
        use ProtocolKind::*;
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::Validation(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if self.kappa == 0.0 && !matches!(self.kind, Qnd) {
            return Err(Error::Validation("kappa must be positive for this kind".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.n_detections {
                return Err(Error::Validation(format!(
                    "{} weights given for n_detections = {}",
                    w.len(),
                    self.n_detections
                )));
            }
            check_weights(w)?;
            if !matches!(self.kind, WmMulti) {
                return Err(Error::Validation(
                    "weights are only meaningful for kind = wm_multi".into(),
                ));
            }
        }
        if self.n_detections == 0 {
            return Err(Error::Validation("n_detections must be positive".into()));
        }
        if self.n_detections > 1 && !matches!(self.kind, WmMulti) {
            return Err(Error::Validation(
                "n_detections > 1 requires kind = wm_multi".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.detector_inefficiency) {
            return Err(Error::Validation(format!(
                "detector_inefficiency must lie in [0, 1), got {}",
                self.detector_inefficiency
            )));
        }
        if self.noon_m == 0 || (self.noon_m > 1 && !matches!(self.kind, Noon)) {
            return Err(Error::Validation("noon_m > 1 requires kind = noon".into()));
        }
        match self.kind {
            Coherent => {
                let r0 = self
                    .r0_prime
                    .ok_or_else(|| Error::Validation("coherent runs need r0_prime".into()))?;
                if r0 <= -1.0 {
                    return Err(Error::Validation(format!(
                        "r0_prime must exceed -1, got {r0}"
                    )));
                }
            }
            Oat | Tat => {
                if self.weak_value.is_none() {
                    return Err(Error::Validation(
                        "oat/tat runs need an explicit weak_value".into(),
                    ));
                }
            }
            _ => {
                if self.r0_prime.is_some() {
                    return Err(Error::Validation(
                        "r0_prime is only meaningful for kind = coherent".into(),
                    ));
                }
            }
        }
        if self.tat_pulses.is_some() && !matches!(self.kind, Tat) {
            return Err(Error::Validation(
                "tat_pulses is only meaningful for kind = tat".into(),
            ));
        }
        Ok(())
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() || weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::WeightConstraintViolated(
            weights.iter().map(|w| w * w).sum(),
        ));
    }
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    if (sum_sq - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::WeightConstraintViolated(sum_sq));
    }
    Ok(())
}

/// One protocol outcome.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SqueezingReport {
    pub xi_sq: f64,
    pub xi_db: f64,
    pub mean_pa: f64,
    pub success_prob: f64,
    pub enhancement_db_vs_qnd: f64,
}

impl SqueezingReport {
    pub fn from_xi(xi_sq: f64, mean_pa: f64, success_prob: f64, kappa: f64) -> Self {
        let qnd = 1.0 / (1.0 + kappa * kappa);
        Self {
            xi_sq,
            xi_db: -10.0 * xi_sq.log10(),
            mean_pa,
            success_prob,
            enhancement_db_vs_qnd: 10.0 * (qnd / xi_sq).log10(),
        }
    }
}

/// Gaussian width factor of the post-selected state: `1/(1 + kappa^2/2)`.
pub fn xi_s_sq(kappa: f64) -> f64 {
    1.0 / (1.0 + kappa * kappa / 2.0)
}

/// QND baseline: `xi^2 = 1/(1 + kappa^2)`, deterministic, reported in the
/// `x_L = 0` convention (zero conditional mean).
pub fn qnd_reference(kappa: f64) -> SqueezingReport {
    SqueezingReport::from_xi(1.0 / (1.0 + kappa * kappa), 0.0, 1.0, kappa)
}

/// Closed-form optimal weak value for a single detection:
/// `4(3 - sqrt(6))/(3 kappa^2) + (15 - 4 sqrt(6))/6`.
pub fn optimal_weak_value(kappa: f64) -> WeakValue {
    let k2 = kappa * kappa;
    WeakValue::real(4.0 * (3.0 - 6.0f64.sqrt()) / (3.0 * k2) + (15.0 - 4.0 * 6.0f64.sqrt()) / 6.0)
}

/// Post-selected single-detection state:
/// `(1 - A~_w kappa^2 p^2) exp(-p^2 / (2 xi_s^2))`.
pub fn wm_state(kappa: f64, aw: &WeakValue) -> Result<QuadratureState> {
    if kappa <= 0.0 {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    Ok(QuadratureState::gaussian(xi_s_sq(kappa))?
        .apply_quadratic_factor(aw.a_tilde() * kappa * kappa))
}

/// Multi-detection state: product of quadratic factors with per-pulse
/// couplings `theta_j kappa` on the width-`xi_s^2` envelope.
pub fn multi_detection_state(
    kappa: f64,
    aw: &WeakValue,
    weights: &[f64],
) -> Result<QuadratureState> {
    if kappa <= 0.0 {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    check_weights(weights)?;
    let mut state = QuadratureState::gaussian(xi_s_sq(kappa))?;
    for &theta in weights {
        state = state.apply_quadratic_factor(aw.a_tilde() * theta * theta * kappa * kappa);
    }
    Ok(state)
}

/// Squeezing of the infinite-detection Gaussian limit
/// `exp(-A_w kappa^2 p^2/2) exp(-p^2/2)`: `xi^2 = 1/(1 + A_w kappa^2)`.
/// At `A_w = 1` this equals the QND formula exactly.
pub fn infinite_detection_xi_sq(kappa: f64, aw: f64) -> f64 {
    1.0 / (1.0 + aw * kappa * kappa)
}

/// Inverts the weak-value formula with the default convention
/// `r = t = 1/sqrt(2)`; the primed signs follow the phase-plate convention.
pub fn solve_beam_splitters(aw: &WeakValue) -> Result<BeamSplitterPair> {
    solve_beam_splitters_with_r(aw, std::f64::consts::FRAC_1_SQRT_2)
}

/// Same inversion with the residual input reflectivity `r` chosen freely.
pub fn solve_beam_splitters_with_r(aw: &WeakValue, r: f64) -> Result<BeamSplitterPair> {
    let aw_re = aw.require_real()?;
    if !(0.0 < r && r < 1.0) {
        return Err(Error::Domain(format!("need 0 < r < 1, got {r}")));
    }
    let t = (1.0 - r * r).sqrt();
    let q = aw_re - 0.5;
    if q.abs() < 1e-12 {
        // A_w = 1/2 needs r r' = 0, unreachable with r > 0.
        return Err(Error::NoRealSolution(aw_re));
    }
    // t t' = r r' (1 - 1/q)  =>  t' = c r'.
    let c = (r / t) * (q - 1.0) / q;
    let r_prime = 1.0 / (1.0 + c * c).sqrt();
    BeamSplitterPair::new(r, t, r_prime, c * r_prime)
}

/// Success probability of one ideal detection in closed form:
/// `(r r' - t t')^2 * s * (1 - lam + 0.75 lam^2)` with `lam = A~ kappa^2 xi_s^2`.
pub fn success_probability_analytic(
    kappa: f64,
    aw: &WeakValue,
    splitters: &BeamSplitterPair,
) -> Result<f64> {
    let a_tilde = aw.require_real()? / 2.0 - 0.25;
    let s2 = xi_s_sq(kappa);
    let lam = a_tilde * kappa * kappa * s2;
    Ok(splitters.overlap().powi(2) * s2.sqrt() * (1.0 - lam + 0.75 * lam * lam))
}

/// Sequential multi-detection success probability in closed form: the
/// product of splitter overlaps times the norm of the final product state.
pub fn multi_success_probability_analytic(
    kappa: f64,
    aw: &WeakValue,
    weights: &[f64],
    splitters: &BeamSplitterPair,
) -> Result<f64> {
    aw.require_real()?;
    let state = multi_detection_state(kappa, aw, weights)?;
    let norm_sq = state.moments()?.norm_sq;
    let ov2 = splitters.overlap().powi(2);
    Ok(ov2.powi(weights.len() as i32) * norm_sq / std::f64::consts::PI.sqrt())
}

/// Success probability maximized over the residual input reflectivity `r`
/// at fixed weak value. Returns `(probability, argmax r)`.
pub fn success_probability_maximized(kappa: f64, aw: &WeakValue) -> Result<(f64, f64)> {
    let aw_re = aw.require_real()?;
    let q = aw_re - 0.5;
    if q.abs() < 1e-12 {
        return Err(Error::NoRealSolution(aw_re));
    }
    // overlap^2 = x(1-x) / (q^2 (1 - beta x)) with x = r^2,
    // beta = 1 - ((q-1)/q)^2; the maximizer solves 1 - 2x + beta x^2 = 0.
    let c0 = (q - 1.0) / q;
    let beta = 1.0 - c0 * c0;
    let x = if beta.abs() < 1e-12 {
        0.5
    } else {
        (1.0 - (1.0 - beta).sqrt()) / beta
    };
    let ov2 = x * (1.0 - x) / (q * q * (1.0 - beta * x));
    let s2 = xi_s_sq(kappa);
    let lam = (q / 2.0) * kappa * kappa * s2;
    Ok((ov2 * s2.sqrt() * (1.0 - lam + 0.75 * lam * lam), x.sqrt()))
}

/// Analytic report for a (multi-)detection run with the default splitters.
pub fn analytic_report(kappa: f64, aw: &WeakValue, weights: &[f64]) -> Result<SqueezingReport> {
    let xi_sq = multi_detection_state(kappa, aw, weights)?.squeezing_parameter()?;
    let success = match solve_beam_splitters(aw) {
        Ok(bs) => multi_success_probability_analytic(kappa, aw, weights, &bs)?,
        // Imaginary or A_w = 1/2 cases carry no splitter realization here.
        Err(_) => f64::NAN,
    };
    Ok(SqueezingReport::from_xi(xi_sq, 0.0, success, kappa))
}

/// Deterministic weak-value optimization for a (multi-)detection protocol:
/// coarse log-spaced scan over the reduced coupling
/// `lam = A~_w kappa^2 xi_s^2` followed by golden-section refinement.
/// The scan guards against the non-unimodal tail of the objective at
/// large weak values (the variance ratio overshoots its asymptote there).
pub fn optimize_weak_value(kappa: f64, weights: &[f64]) -> Result<crate::optimize::OptimizationResult> {
    check_weights(weights)?;
    let scale = kappa * kappa * xi_s_sq(kappa);
    let xi2 = |lam: f64| {
        let aw = 2.0 * lam / scale + 0.5;
        multi_detection_state(kappa, &WeakValue::real(aw), weights)
            .and_then(|s| s.squeezing_parameter())
            .unwrap_or(f64::INFINITY)
    };
    let n_grid = 240;
    let (lo, hi) = (1e-4f64, 8.0f64);
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..n_grid {
        let lam = lo * (hi / lo).powf(i as f64 / (n_grid - 1) as f64);
        let v = xi2(lam);
        if v < best.0 {
            best = (v, i);
        }
    }
    let at = |i: usize| lo * (hi / lo).powf(i as f64 / (n_grid - 1) as f64);
    let a = at(best.1.saturating_sub(1));
    let b = at((best.1 + 1).min(n_grid - 1));
    let refined = crate::optimize::minimize_scalar(xi2, (a, b), 1e-12)?;
    let lam = refined.best_params[0];
    Ok(crate::optimize::OptimizationResult {
        best_params: vec![2.0 * lam / scale + 0.5],
        ..refined
    })
}

/// Joint (A_w, weights) optimization for `n >= 2` detections.
pub fn optimize_multi_detection(
    kappa: f64,
    n: usize,
    restarts: usize,
) -> Result<(f64, f64, Vec<f64>)> {
    let obj = |w: &[f64]| match optimize_weak_value(kappa, w) {
        Ok(r) => r.best_value,
        Err(_) => f64::INFINITY,
    };
    let outer = crate::optimize::minimize_on_weight_sphere(obj, n, 1e-12, restarts)?;
    let inner = optimize_weak_value(kappa, &outer.best_params)?;
    Ok((inner.best_value, inner.best_params[0], outer.best_params))
}

/// Settings for the exact-oracle paths.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    pub n_atoms: usize,
    pub photon_cutoff: usize,
    pub leak_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            n_atoms: 200,
            photon_cutoff: 6,
            leak_tol: 1e-8,
        }
    }
}

fn kappa0(kappa: f64, n_atoms: usize) -> f64 {
    kappa * (2.0 / n_atoms as f64).sqrt()
}

/// Photon-factor bra `r' |0,1> - t' |1,0>` on a two-mode space.
fn wm_post_bra(d: usize, bs: &BeamSplitterPair) -> DVector<Complex64> {
    let mut bra = DVector::zeros(d * d);
    bra[pair_index(d, 0, 1)] = cplx(bs.r_prime);
    bra[pair_index(d, 1, 0)] = cplx(-bs.t_prime);
    bra
}

/// One exact single-photon detection applied to an atomic state: build the
/// joint state, interact on mode b, post-select. Returns the heralded
/// atomic state and the branch probability.
fn oracle_detection(
    atom: &[Complex64],
    kappa_pulse: f64,
    bs: &BeamSplitterPair,
    settings: &OracleSettings,
) -> Result<(HilbertState, f64)> {
    let cut = settings.photon_cutoff;
    let d = cut + 1;
    let layout = SpaceLayout::new(settings.n_atoms, vec![cut, cut])?;
    let mut phi = DVector::zeros(d * d);
    phi[pair_index(d, 0, 1)] = cplx(bs.r);
    phi[pair_index(d, 1, 0)] = cplx(bs.t);
    let joint = HilbertState::product(layout, atom, &phi)?;
    let joint = fr_unitary_apply(
        &joint,
        kappa0(kappa_pulse, settings.n_atoms),
        1,
        settings.leak_tol,
    )?;
    post_select(&joint, &wm_post_bra(d, bs))
}

/// Exact oracle run of the sequential (multi-)detection protocol with the
/// given splitters used for every pulse. Success probability is the product
/// of the per-pulse heralding probabilities.
pub fn wm_oracle_run(
    kappa: f64,
    aw: &WeakValue,
    weights: &[f64],
    settings: &OracleSettings,
) -> Result<SqueezingReport> {
    check_weights(weights)?;
    let bs = solve_beam_splitters(aw)?;
    let n = settings.n_atoms;
    let mut atom: Vec<Complex64> = css_amplitudes(n).into_iter().map(cplx).collect();
    let mut success = 1.0;
    for &theta in weights {
        let (heralded, p) = oracle_detection(&atom, theta * kappa, &bs, settings)?;
        success *= p;
        atom = heralded.amps.iter().cloned().collect();
    }
    let atom_state = HilbertState::from_spin_amplitudes(n, &atom)?;
    let rep = spin_squeezing_report(&atom_state)?;
    let mean_pa = rep.mean_jz / (n as f64 / 2.0).sqrt();
    Ok(SqueezingReport::from_xi(rep.xi_sq, mean_pa, success, kappa))
}

/// Exact `P_b^2` weak value for the NooN pre/post pair
/// `r|0,m> + t|m,0>` and `r'|0,m> - t'|m,0>`.
pub fn noon_weak_value(m: usize, bs: &BeamSplitterPair, cutoff: usize) -> Result<Complex64> {
    if m == 0 || cutoff < m + 2 {
        return Err(Error::Domain(format!(
            "need m >= 1 and cutoff >= m + 2, got m = {m}, cutoff = {cutoff}"
        )));
    }
    let d = cutoff + 1;
    let (_, p, _) = fock::build_mode_ops(cutoff);
    let p_b = FockOperator::new(
        DMatrix::<Complex64>::identity(d, d).kronecker(&p.matrix),
        "P_b",
    );
    let phi = fock_pair(d, 0, m) * cplx(bs.r) + fock_pair(d, m, 0) * cplx(bs.t);
    let phi_p = fock_pair(d, 0, m) * cplx(bs.r_prime) - fock_pair(d, m, 0) * cplx(bs.t_prime);
    fock::weak_value_oracle(&phi, &phi_p, &p_b, 2)
}

/// Exact oracle run of the single-detection NooN protocol.
pub fn noon_oracle_run(
    m: usize,
    kappa: f64,
    bs: &BeamSplitterPair,
    settings: &OracleSettings,
) -> Result<SqueezingReport> {
    let cut = settings.photon_cutoff.max(m + 4);
    let d = cut + 1;
    let n = settings.n_atoms;
    let layout = SpaceLayout::new(n, vec![cut, cut])?;
    let mut phi = DVector::zeros(d * d);
    phi[pair_index(d, 0, m)] = cplx(bs.r);
    phi[pair_index(d, m, 0)] = cplx(bs.t);
    let joint = HilbertState::css_with_photons(layout, &phi)?;
    let joint = fr_unitary_apply(&joint, kappa0(kappa, n), 1, settings.leak_tol)?;
    let mut bra = DVector::zeros(d * d);
    bra[pair_index(d, 0, m)] = cplx(bs.r_prime);
    bra[pair_index(d, m, 0)] = cplx(-bs.t_prime);
    let (atom, prob) = post_select(&joint, &bra)?;
    let rep = spin_squeezing_report(&atom)?;
    let mean_pa = rep.mean_jz / (n as f64 / 2.0).sqrt();
    Ok(SqueezingReport::from_xi(rep.xi_sq, mean_pa, prob, kappa))
}

/// Splitters realizing an effective weak value `A_w` through an m-photon
/// NooN input: the per-splitter weak value is scaled down so that
/// `2 m A~_w' + 1/2` matches the target.
pub fn noon_splitters_for_target(m: usize, target_aw: &WeakValue) -> Result<BeamSplitterPair> {
    let target = target_aw.require_real()?;
    let a_tilde_split = (target - 0.5) / (2.0 * m as f64);
    solve_beam_splitters(&WeakValue::real(2.0 * a_tilde_split + 0.5))
}

/// The coherent-input special point: `alpha = sqrt(2 (r0' + 1))` gives a
/// vanishing linear term `A_0` and `A_{w,alpha} = 1/(2 (r0' + 1))`.
pub fn coherent_params(r0_prime: f64) -> Result<(f64, Complex64, Complex64)> {
    if r0_prime <= -1.0 {
        return Err(Error::Domain(format!(
            "r0_prime must exceed -1, got {r0_prime}"
        )));
    }
    let alpha = (2.0 * (r0_prime + 1.0)).sqrt();
    let a0 = Complex64::new(0.0, (r0_prime - alpha * alpha / 2.0 + 1.0) / alpha);
    let aw_alpha = (cplx(1.0) - Complex64::new(0.0, alpha) * a0 - cplx(2.0 * r0_prime / (alpha * alpha)))
        / 2.0;
    Ok((alpha, a0, aw_alpha))
}

/// Post-selection splitter amplitudes realizing a requested
/// `r0' = 2 r' t' / (t'^2 - r'^2)`.
pub fn coherent_splitters(r0_prime: f64) -> (f64, f64) {
    let phi = 0.5 * (-r0_prime).atan();
    (phi.cos(), phi.sin())
}

/// Exact oracle run of the coherent-input protocol. `alpha_scale` detunes
/// the input amplitude away from the special point (1.0 is nominal).
pub fn coherent_state_run(
    kappa: f64,
    r0_prime: f64,
    alpha_scale: f64,
    settings: &OracleSettings,
) -> Result<SqueezingReport> {
    let (alpha_opt, _, _) = coherent_params(r0_prime)?;
    let alpha = alpha_opt * alpha_scale;
    let arm = alpha * std::f64::consts::FRAC_1_SQRT_2;
    let cut = 3 + (alpha * alpha + 5.0 * alpha).ceil() as usize;
    let d = cut + 1;
    let n = settings.n_atoms;
    let layout = SpaceLayout::new(n, vec![cut, cut])?;
    let phi_a = coherent_vector(cut, arm);
    let phi_b = coherent_vector(cut, arm);
    let mut phi = DVector::zeros(d * d);
    for na in 0..d {
        for nb in 0..d {
            phi[pair_index(d, na, nb)] = phi_a[na] * phi_b[nb];
        }
    }
    let joint = HilbertState::css_with_photons(layout, &phi)?;
    let joint = fr_unitary_apply(&joint, kappa0(kappa, n), 1, settings.leak_tol)?;
    let (rp, tp) = coherent_splitters(r0_prime);
    let mut bra = DVector::zeros(d * d);
    let two = std::f64::consts::SQRT_2 * rp * tp;
    bra[pair_index(d, 2, 0)] = cplx(two);
    bra[pair_index(d, 0, 2)] = cplx(-two);
    bra[pair_index(d, 1, 1)] = cplx(tp * tp - rp * rp);
    let (atom, prob) = post_select(&joint, &bra)?;
    let rep = spin_squeezing_report(&atom)?;
    let mean_pa = rep.mean_jz / (n as f64 / 2.0).sqrt();
    Ok(SqueezingReport::from_xi(rep.xi_sq, mean_pa, prob, kappa))
}

/// Exact oracle run of the heralded protocol with inefficient detectors.
///
/// Each detector is an ideal photon counter behind a virtual beam splitter
/// of reflectivity `eta_d`; heralding on (PD1 silent, PD2 one click) then
/// weights each photon-number outcome `(n_a, n_b)` after BS2 by
/// `eta^n_a * n_b (1-eta) eta^(n_b - 1)`. All photon-side maps are diagonal
/// in the `J_z` eigenvalue, so the heralded `J_z` distribution factorizes
/// over pulses: `p(m) = css_m^2 * prod_j G_j(m)`.
pub fn detector_inefficiency_run(
    kappa: f64,
    aw: &WeakValue,
    eta_d: f64,
    weights: &[f64],
    settings: &OracleSettings,
) -> Result<SqueezingReport> {
    if !(0.0..1.0).contains(&eta_d) {
        return Err(Error::Domain(format!("eta_d must lie in [0, 1), got {eta_d}")));
    }
    check_weights(weights)?;
    let bs = solve_beam_splitters(aw)?;
    let n = settings.n_atoms;
    // Guarded photon space shared by the displacement and BS2.
    let d = settings.photon_cutoff + 1;
    let dg = d + 2;
    let (_, p_op, _) = fock::build_mode_ops(dg - 1);
    // BS2 turns the physical detection <0_a, 1_b| into the post bra
    // r'<0,1| - t'<1,0|.
    let v2 = bs_unitary(dg, -bs.t_prime, bs.r_prime);
    let mut phi = DVector::<Complex64>::zeros(dg * dg);
    phi[0 * dg + 1] = cplx(bs.r);
    phi[1 * dg + 0] = cplx(bs.t);

    // Detection weights over (n_a, n_b).
    let eff = 1.0 - eta_d;
    let mut w = vec![0.0f64; dg * dg];
    for na in 0..dg {
        for nb in 1..dg {
            w[na * dg + nb] = eta_d.powi(na as i32) * nb as f64 * eff * eta_d.powi(nb as i32 - 1);
        }
    }

    let css = css_amplitudes(n);
    let k0 = kappa0(kappa, n);
    let mut p = vec![0.0f64; n + 1];
    let mut leak = 0.0f64;
    for (i, pm) in p.iter_mut().enumerate() {
        let m = i as f64 - n as f64 / 2.0;
        let mut g = 1.0f64;
        for &theta in weights {
            let u = expm(&(&p_op.matrix * Complex64::new(0.0, -k0 * theta * m)));
            // Displacement acts on mode b only.
            let mut after = DVector::<Complex64>::zeros(dg * dg);
            for na in 0..dg {
                for nb in 0..dg {
                    let mut acc = Complex64::ZERO;
                    for k in 0..dg {
                        acc += u[(nb, k)] * phi[na * dg + k];
                    }
                    after[na * dg + nb] = acc;
                }
            }
            let after = &v2 * after;
            let mut gj = 0.0;
            for idx in 0..dg * dg {
                let (na, nb) = (idx / dg, idx % dg);
                let pop = after[idx].norm_sqr();
                if na >= d || nb >= d {
                    leak += css[i] * css[i] * pop;
                }
                gj += w[idx] * pop;
            }
            g *= gj;
        }
        *pm = css[i] * css[i] * g;
    }
    if leak > settings.leak_tol * weights.len() as f64 {
        return Err(Error::CutoffLeakage {
            weight: leak,
            tol: settings.leak_tol,
            context: "inefficiency run",
        });
    }
    let total: f64 = p.iter().sum();
    if total < 1e-30 {
        return Err(Error::ZeroProbability(total));
    }
    let mut mean = 0.0;
    let mut second = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        let m = i as f64 - n as f64 / 2.0;
        mean += pi * m;
        second += pi * m * m;
    }
    mean /= total;
    let var = second / total - mean * mean;
    let xi_sq = var / (n as f64 / 4.0);
    let mean_pa = mean / (n as f64 / 2.0).sqrt();
    Ok(SqueezingReport::from_xi(xi_sq, mean_pa, total, kappa))
}

/// Exact success probability of a single ideal detection at the given
/// coupling, via the tensor oracle.
pub fn success_probability_oracle(
    kappa: f64,
    bs: &BeamSplitterPair,
    settings: &OracleSettings,
) -> Result<f64> {
    let n = settings.n_atoms;
    let atom: Vec<Complex64> = css_amplitudes(n).into_iter().map(cplx).collect();
    if kappa == 0.0 {
        // No interaction: exactly the squared splitter overlap.
        return Ok(bs.overlap().powi(2));
    }
    Ok(oracle_detection(&atom, kappa, bs, settings)?.1)
}

/// Beam-splitter application helper used by process-level checks: sends a
/// single photon through BS1 and verifies the prepared entangled pair.
pub fn prepare_entangled_pair(bs: &BeamSplitterPair, settings: &OracleSettings) -> Result<HilbertState> {
    let cut = settings.photon_cutoff;
    let d = cut + 1;
    let layout = SpaceLayout::new(1, vec![cut, cut])?;
    let spin = vec![cplx(1.0), Complex64::ZERO];
    let photon = fock_pair(d, 0, 1);
    let state = HilbertState::product(layout, &spin, &photon)?;
    // |0,1> -> r|0,1> + t|1,0> needs the b-input convention.
    beam_splitter_apply(&state, -bs.t, bs.r, (0, 1), settings.leak_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn qnd_formula() {
        assert_relative_eq!(qnd_reference(0.0).xi_sq, 1.0, epsilon = 1e-15);
        assert_relative_eq!(qnd_reference(1.0).xi_sq, 0.5, epsilon = 1e-15);
        assert_relative_eq!(qnd_reference(2.0).xi_sq, 0.2, epsilon = 1e-15);
        assert_eq!(qnd_reference(1.0).success_prob, 1.0);
    }

    #[test]
    fn optimal_weak_value_anchors() {
        assert_relative_eq!(optimal_weak_value(0.1).re(), 74.27, epsilon = 5e-2);
        assert_relative_eq!(optimal_weak_value(1.0).re(), 1.6010, epsilon = 1e-4);
        assert_relative_eq!(
            optimal_weak_value(100.0).re(),
            (15.0 - 4.0 * 6.0f64.sqrt()) / 6.0,
            epsilon = 1e-3
        );
    }

    #[test]
    fn wm_state_structure() {
        // A_w = 1/2 has a vanishing quadratic factor.
        let st = wm_state(0.3, &WeakValue::real(0.5)).unwrap();
        assert_relative_eq!(st.squeezing_parameter().unwrap(), xi_s_sq(0.3), epsilon = 1e-12);
        let st = wm_state(0.1, &optimal_weak_value(0.1)).unwrap();
        let xi = st.squeezing_parameter().unwrap();
        assert_relative_eq!(xi / xi_s_sq(0.1), 3.0 - 6.0f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(xi, 0.5478, epsilon = 1e-3);
        assert_eq!(st.moments().unwrap().mean_p, 0.0);
    }

    #[test]
    fn multi_detection_reduction_and_gain() {
        let aw = optimal_weak_value(0.2);
        let single = wm_state(0.2, &aw).unwrap();
        let multi = multi_detection_state(0.2, &aw, &[1.0]).unwrap();
        assert_relative_eq!(
            single.squeezing_parameter().unwrap(),
            multi.squeezing_parameter().unwrap(),
            epsilon = 1e-14
        );
        // Two equal pulses with a jointly optimized A_w beat the n = 1 optimum.
        let best1 = wm_state(0.2, &optimal_weak_value(0.2))
            .unwrap()
            .squeezing_parameter()
            .unwrap();
        let w2 = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let best2 = optimize_weak_value(0.2, &w2).unwrap().best_value;
        assert!(best2 < best1, "best2 {best2} vs best1 {best1}");
    }

    #[test]
    fn multi_detection_weight_validation() {
        let aw = WeakValue::real(2.0);
        assert!(matches!(
            multi_detection_state(0.2, &aw, &[0.9, 0.9]),
            Err(Error::WeightConstraintViolated(_))
        ));
    }

    #[test]
    fn infinite_detection_limit() {
        // n = 64 equal pulses approach the Gaussian limit within 1%.
        let kappa = 0.3;
        let aw = WeakValue::real(2.0);
        let n = 64usize;
        let w = vec![(1.0 / n as f64).sqrt(); n];
        let xi = multi_detection_state(kappa, &aw, &w)
            .unwrap()
            .squeezing_parameter()
            .unwrap();
        // In the limit the quarter terms cancel against the envelope and the
        // state is exactly exp(-A_w kappa^2 p^2/2) exp(-p^2/2).
        let limit = infinite_detection_xi_sq(kappa, 2.0);
        assert!((xi / limit - 1.0).abs() < 0.01, "{xi} vs {limit}");
    }

    #[test]
    fn qnd_anchor_of_the_limit() {
        for kappa in [0.2, 0.7, 1.3] {
            assert_relative_eq!(
                infinite_detection_xi_sq(kappa, 1.0),
                qnd_reference(kappa).xi_sq,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn splitter_solutions() {
        // A_w = 3/2: post-select everything in mode b.
        let bs = solve_beam_splitters(&WeakValue::real(1.5)).unwrap();
        assert_relative_eq!(bs.t_prime, 0.0, epsilon = 1e-14);
        assert_relative_eq!(bs.r_prime, 1.0, epsilon = 1e-14);
        // Round trip through the closed form.
        for aw in [74.27, 3.0, 0.9, -2.0] {
            let bs = solve_beam_splitters(&WeakValue::real(aw)).unwrap();
            assert_relative_eq!(bs.weak_value().unwrap().re(), aw, epsilon = 1e-10);
        }
        assert!(matches!(
            solve_beam_splitters(&WeakValue::real(0.5)),
            Err(Error::NoRealSolution(_))
        ));
    }

    #[test]
    fn splitter_round_trip_against_oracle() {
        // 20 deterministic settings: dense-matrix weak value matches the
        // closed form to 1e-10.
        for i in 0..20 {
            let aw = 0.8 + 0.35 * i as f64;
            if (aw - 0.5).abs() < 0.05 {
                continue;
            }
            let bs = solve_beam_splitters(&WeakValue::real(aw)).unwrap();
            let oracle = noon_weak_value(1, &bs, 4).unwrap();
            assert!((oracle.re - aw).abs() < 1e-10, "aw {aw} oracle {}", oracle.re);
            assert!(oracle.im.abs() < 1e-12);
        }
    }

    #[test]
    fn success_probability_closed_form_peak() {
        // Frozen peak of the maximized curve: P = 0.5840 at kappa = 1.077.
        let mut best = (0.0f64, 0.0f64);
        let mut k = 0.3;
        while k < 2.5 {
            let aw = optimal_weak_value(k);
            let (p, _) = success_probability_maximized(k, &aw).unwrap();
            if p > best.0 {
                best = (p, k);
            }
            k += 0.005;
        }
        assert!((best.0 - 0.5840).abs() < 1e-3, "peak {}", best.0);
        assert!((best.1 - 1.077).abs() < 0.01, "at {}", best.1);
    }

    #[test]
    fn success_probability_zero_coupling() {
        let bs = solve_beam_splitters(&WeakValue::real(4.0)).unwrap();
        let s = OracleSettings {
            n_atoms: 30,
            ..Default::default()
        };
        let p = success_probability_oracle(0.0, &bs, &s).unwrap();
        assert_relative_eq!(p, bs.overlap().powi(2), epsilon = 1e-15);
    }

    #[test]
    fn oracle_matches_analytic_success() {
        let kappa = 0.4;
        let aw = WeakValue::real(4.0);
        let bs = solve_beam_splitters(&aw).unwrap();
        let s = OracleSettings {
            n_atoms: 150,
            photon_cutoff: 12,
            ..Default::default()
        };
        let exact = success_probability_oracle(kappa, &bs, &s).unwrap();
        let analytic = success_probability_analytic(kappa, &aw, &bs).unwrap();
        assert!((exact / analytic - 1.0).abs() < 0.02, "{exact} vs {analytic}");
    }

    #[test]
    fn wm_oracle_convergence() {
        let kappa = 0.5;
        let aw = optimal_weak_value(kappa);
        let analytic = wm_state(kappa, &aw).unwrap().squeezing_parameter().unwrap();
        let mut prev_err = f64::INFINITY;
        for n in [50usize, 100, 200] {
            let s = OracleSettings {
                n_atoms: n,
                photon_cutoff: 12,
                ..Default::default()
            };
            let rep = wm_oracle_run(kappa, &aw, &[1.0], &s).unwrap();
            let err = (rep.xi_sq - analytic).abs();
            assert!(err < prev_err, "error not decreasing at N = {n}");
            assert!(rep.mean_pa.abs() < 1e-8);
            prev_err = err;
        }
    }

    #[test]
    fn multi_detection_success_scaling() {
        // n = 2 vs n = 1 at the same A_w: ratio close to the overlap^2
        // factor 1/(2 A~_w)^2 at leading order.
        let kappa = 1.5;
        let aw = WeakValue::real(6.0);
        let s = OracleSettings {
            n_atoms: 100,
            photon_cutoff: 32,
            ..Default::default()
        };
        let p1 = wm_oracle_run(kappa, &aw, &[1.0], &s).unwrap().success_prob;
        let w2 = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let p2 = wm_oracle_run(kappa, &aw, &w2, &s).unwrap().success_prob;
        let ratio = p2 / p1;
        // Adding one detection divides the odds by (2 A~_w)^2 at leading order.
        let leading = 1.0 / (2.0 * aw.a_tilde().re).powi(2);
        assert!(
            (ratio / leading - 1.0).abs() < 0.2,
            "ratio {ratio} vs leading {leading}"
        );
    }

    #[test]
    fn noon_reduction_and_asymptote() {
        let bs = solve_beam_splitters(&WeakValue::real(4.5)).unwrap();
        let m1 = noon_weak_value(1, &bs, 4).unwrap();
        assert_relative_eq!(m1.re, 4.5, epsilon = 1e-10);
        // A~_w = 2: at m = 20 the ratio to 2 m A~_w is within 5% of 1.
        let m20 = noon_weak_value(20, &bs, 22).unwrap();
        let ratio = m20.re / (2.0 * 20.0 * 2.0);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
        // Exact small-m relation A_{w,m} = m (A_w - 1/2) + 1/2 for m > 2.
        let m5 = noon_weak_value(5, &bs, 8).unwrap();
        assert_relative_eq!(m5.re, 5.0 * 4.0 + 0.5, epsilon = 1e-10);
    }

    #[test]
    fn noon_success_magnification() {
        // Fixed effective weak value, kappa weak: m-photon input magnifies
        // the success probability by about m^2.
        let kappa = 0.1;
        let target = WeakValue::real(21.0);
        let s = OracleSettings {
            n_atoms: 80,
            ..Default::default()
        };
        let p1 = {
            let bs = noon_splitters_for_target(1, &target).unwrap();
            noon_oracle_run(1, kappa, &bs, &s).unwrap().success_prob
        };
        for m in [2usize, 3] {
            let bs = noon_splitters_for_target(m, &target).unwrap();
            let pm = noon_oracle_run(m, kappa, &bs, &s).unwrap().success_prob;
            let ratio = pm / p1 / (m * m) as f64;
            assert!((ratio - 1.0).abs() < 0.2, "m {m} ratio {ratio}");
        }
    }

    #[test]
    fn coherent_special_point() {
        let (alpha, a0, awa) = coherent_params(0.0).unwrap();
        assert_relative_eq!(alpha, std::f64::consts::SQRT_2, epsilon = 1e-14);
        assert!(a0.norm() < 1e-12);
        assert_relative_eq!(awa.re, 0.5, epsilon = 1e-12);
        let (_, a0, awa) = coherent_params(-0.9).unwrap();
        assert!(a0.norm() < 1e-12);
        assert_relative_eq!(awa.re, 5.0, epsilon = 1e-12);
        assert!(coherent_params(-1.0).is_err());
        // Splitter inversion round trip.
        let (rp, tp) = coherent_splitters(-0.9);
        assert_relative_eq!(2.0 * rp * tp / (tp * tp - rp * rp), -0.9, epsilon = 1e-12);
    }

    #[test]
    fn coherent_oracle_matches_analytic() {
        let s = OracleSettings {
            n_atoms: 200,
            ..Default::default()
        };
        let rep = coherent_state_run(0.1, 0.0, 1.0, &s).unwrap();
        let analytic = wm_state(0.1, &WeakValue::real(0.5))
            .unwrap()
            .squeezing_parameter()
            .unwrap();
        assert!(
            (rep.xi_sq / analytic - 1.0).abs() < 0.05,
            "{} vs {analytic}",
            rep.xi_sq
        );
        // Detuning the amplitude revives the linear term.
        let detuned = coherent_state_run(0.1, 0.0, 1.1, &s).unwrap();
        assert!(detuned.mean_pa.abs() > 20.0 * rep.mean_pa.abs());
    }

    #[test]
    fn inefficiency_ideal_limit_and_monotonicity() {
        let kappa = 0.2;
        let s = OracleSettings {
            n_atoms: 100,
            ..Default::default()
        };
        let aw = optimal_weak_value(kappa);
        let ideal = wm_oracle_run(kappa, &aw, &[1.0], &s).unwrap();
        let eta0 = detector_inefficiency_run(kappa, &aw, 0.0, &[1.0], &s).unwrap();
        assert_relative_eq!(eta0.xi_sq, ideal.xi_sq, epsilon = 1e-9);
        let mut prev = eta0.xi_sq;
        for eta in [0.02, 0.05, 0.1, 0.2] {
            let rep = detector_inefficiency_run(kappa, &aw, eta, &[1.0], &s).unwrap();
            assert!(rep.xi_sq >= prev - 1e-12, "eta {eta}");
            prev = rep.xi_sq;
        }
    }

    #[test]
    fn inefficiency_stays_below_qnd() {
        // Frozen reference: optimized xi^2 at eta = 0.05 is about 0.860,
        // still below the QND value 1/1.04.
        let kappa = 0.2;
        let s = OracleSettings {
            n_atoms: 100,
            ..Default::default()
        };
        let obj = |aw: f64| {
            detector_inefficiency_run(kappa, &WeakValue::real(aw), 0.05, &[1.0], &s)
                .unwrap()
                .xi_sq
        };
        let best = crate::optimize::minimize_scalar(obj, (0.6, 60.0), 1e-4)
            .unwrap()
            .best_value;
        assert!((best - 0.860).abs() < 5e-3, "best {best}");
        assert!(best < qnd_reference(kappa).xi_sq);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ProtocolSpec::minimal(ProtocolKind::Qnd, 1.0);
        spec.validate().unwrap();
        spec.weights = Some(vec![0.9, 0.9]);
        spec.n_detections = 2;
        assert!(spec.validate().is_err());
        let mut spec = ProtocolSpec::minimal(ProtocolKind::WmMulti, 0.2);
        spec.n_detections = 2;
        spec.weights = Some(vec![0.9, 0.9]);
        assert!(matches!(spec.validate(), Err(Error::WeightConstraintViolated(_))));
        spec.weights = Some(vec![std::f64::consts::FRAC_1_SQRT_2; 2]);
        spec.validate().unwrap();
        let mut spec = ProtocolSpec::minimal(ProtocolKind::Coherent, 0.1);
        assert!(spec.validate().is_err());
        spec.r0_prime = Some(0.0);
        spec.validate().unwrap();
        let spec = ProtocolSpec::minimal(ProtocolKind::Oat, 0.5);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn entangled_pair_preparation() {
        let bs = solve_beam_splitters(&WeakValue::real(4.0)).unwrap();
        let s = OracleSettings {
            n_atoms: 1,
            ..Default::default()
        };
        let state = prepare_entangled_pair(&bs, &s).unwrap();
        let d = s.photon_cutoff + 1;
        assert_relative_eq!(state.amps[pair_index(d, 0, 1)].re, bs.r, epsilon = 1e-12);
        assert_relative_eq!(state.amps[pair_index(d, 1, 0)].re, bs.t, epsilon = 1e-12);
    }
}
