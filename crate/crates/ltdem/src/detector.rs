//! Detector characterisation.
//!
//! A click of detector `D_s` on the auxiliary mode system T is described by
//! the POVM element `F_s^dag F_s` (the "efficiency operator"). This module
//! covers the whole path from raw count-rate data to those operators:
//! dead-time model fitting, polarisation tomography, factorisation
//! `F_s = D_s^{1/2} U_s` and eigen-analysis.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat, CVec};

/// Grams with a smaller minimum eigenvalue are treated as non-invertible:
/// below this the downstream Gram conditioning is meaningless at double
/// precision.
pub const INVERTIBILITY_FLOOR: f64 = 1e-6;

/// Hermiticity tolerance for efficiency operators.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Most negative eigenvalue accepted from tomography data before the input
/// is declared inconsistent.
pub const TOMOGRAPHY_PSD_TOL: f64 = 1e-9;

/// Errors from detector characterisation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("efficiency operator is not Hermitian (defect {0})")]
    NotHermitian(f64),
    #[error("efficiency operator is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("efficiency operator has eigenvalue {0} > 1; click probabilities cannot exceed 1")]
    EigenvalueAboveUnity(f64),
    #[error("gram matrix is singular for this analysis (min eigenvalue {0} < {INVERTIBILITY_FLOOR})")]
    SingularGram(f64),
    #[error("least-squares fit diverged: {0} consecutive damping steps without improvement")]
    FitDiverged(usize),
    #[error("insufficient count-rate data: {0}")]
    InsufficientData(String),
    #[error("fit produced implausible parameters: {0}")]
    ImplausibleFit(String),
}

/// Input polarisation used during characterisation.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Polarization {
    H,
    V,
    D,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 4] =
        [Polarization::H, Polarization::V, Polarization::D, Polarization::L];

    /// The mode-space state this polarisation corresponds to.
    pub fn state(&self) -> CVec {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b) = match self {
            Polarization::H => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Polarization::V => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Polarization::D => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            Polarization::L => (Complex64::new(s, 0.0), Complex64::new(0.0, s)),
        };
        CVec::from_vec(vec![a, b])
    }
}

/// The efficiency operator `F_s^dag F_s` of one detector, optionally with a
/// factor `F_s` attached by [`EfficiencyOperator::factorized`].
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyOperator {
    gram: CMat,
    factor: Option<CMat>,
}

impl EfficiencyOperator {
    /// Validates and wraps a gram matrix: Hermitian, PSD and with click
    /// probabilities (eigenvalues) at most 1.
    pub fn from_gram(gram: CMat) -> Result<Self, DetectorError> {
        assert_eq!(gram.nrows(), gram.ncols(), "gram must be square");
        let defect = linalg::hermiticity_defect(&gram);
        if defect > HERMITICITY_TOL {
            return Err(DetectorError::NotHermitian(defect));
        }
        let eigs = linalg::hermitian_eigenvalues(&gram);
        let min = eigs[0];
        let max = *eigs.last().expect("non-empty");
        if min < -TOMOGRAPHY_PSD_TOL {
            return Err(DetectorError::NotPsd(min));
        }
        if max > 1.0 + TOMOGRAPHY_PSD_TOL {
            return Err(DetectorError::EigenvalueAboveUnity(max));
        }
        Ok(Self { gram, factor: None })
    }

    /// `eta * I` on a `dim`-dimensional mode space: a detector whose
    /// efficiency does not depend on the auxiliary mode at all.
    pub fn isotropic(eta: f64, dim: usize) -> Self {
        Self::from_gram(linalg::ceye(dim) * Complex64::new(eta, 0.0))
            .expect("isotropic gram is valid for eta in [0, 1]")
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    /// The factor `F_s`, if [`EfficiencyOperator::factorized`] has run.
    pub fn factor(&self) -> Option<&CMat> {
        self.factor.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.gram)
    }

    /// Populates the factor `F_s = D_s^{1/2} U_s` from the unitary
    /// diagonalisation `F_s^dag F_s = U_s^dag D_s U_s`.
    pub fn factorized(mut self) -> Result<Self, DetectorError> {
        let (vals, vecs) = linalg::hermitian_eigen(&self.gram);
        if vals[0] < INVERTIBILITY_FLOOR {
            return Err(DetectorError::SingularGram(vals[0]));
        }
        let sqrt_d = CMat::from_diagonal(&CVec::from_iterator(
            vals.len(),
            vals.iter().map(|&v| Complex64::new(v.sqrt(), 0.0)),
        ));
        // vecs columns are eigenvectors, so gram = vecs D vecs^dag and
        // U_s = vecs^dag.
        self.factor = Some(sqrt_d * vecs.adjoint());
        Ok(self)
    }

    /// Eigenvector of the smaller eigenvalue, with canonical phase.
    ///
    /// Exact ties are broken toward the lexicographically smaller canonical
    /// representation (compared component-wise on `(re, im)` pairs).
    pub fn min_eigen_state(&self) -> (CVec, f64) {
        let (vals, vecs) = linalg::hermitian_eigen(&self.gram);
        let mut idx = 0;
        for k in 1..vals.len() {
            if vals[k] < vals[idx] - 1e-14 {
                idx = k;
            } else if (vals[k] - vals[idx]).abs() <= 1e-14 {
                let a: CVec = vecs.column(idx).into();
                let b: CVec = vecs.column(k).into();
                if lex_less(&b, &a) {
                    idx = k;
                }
            }
        }
        (vecs.column(idx).into(), vals[idx])
    }

    /// Click probability `<sigma| F_s^dag F_s |sigma>` for a mode state.
    pub fn efficiency_for(&self, sigma: &CVec) -> f64 {
        (sigma.adjoint() * &self.gram * sigma)[(0, 0)].re
    }

    /// The four tomography read-outs `(eta_H, eta_V, eta_D, eta_L)` this
    /// gram would produce. Inverse of [`tomography`].
    pub fn tomography_efficiencies(&self) -> (f64, f64, f64, f64) {
        assert_eq!(self.dim(), 2, "polarisation tomography is 2-dimensional");
        let e = |p: Polarization| self.efficiency_for(&p.state());
        (
            e(Polarization::H),
            e(Polarization::V),
            e(Polarization::D),
            e(Polarization::L),
        )
    }
}

fn lex_less(a: &CVec, b: &CVec) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        for (u, v) in [(x.re, y.re), (x.im, y.im)] {
            if u < v {
                return true;
            }
            if u > v {
                return false;
            }
        }
    }
    false
}

/// Efficiency operator from the four polarisation read-outs:
/// diagonal `(eta_H, eta_V)`, off-diagonal real part `eta_D - (eta_H +
/// eta_V)/2` and imaginary part `(eta_H + eta_V)/2 - eta_L`.
pub fn tomography(
    eta_h: f64,
    eta_v: f64,
    eta_d: f64,
    eta_l: f64,
) -> Result<EfficiencyOperator, DetectorError> {
    let mean_hv = (eta_h + eta_v) / 2.0;
    let beta = Complex64::new(eta_d - mean_hv, mean_hv - eta_l);
    let gram = CMat::from_row_slice(
        2,
        2,
        &[
            Complex64::new(eta_h, 0.0),
            beta,
            beta.conj(),
            Complex64::new(eta_v, 0.0),
        ],
    );
    EfficiencyOperator::from_gram(gram)
}

/// Average detected rate of a dead-time-limited detector:
/// `R'/(1 + R' tau_d)` with `R' = eta * r_in + r_dark`.
pub fn detected_rate_model(r_in: f64, eta: f64, tau_d: f64, r_dark: f64) -> f64 {
    debug_assert!(r_in >= 0.0 && eta >= 0.0 && tau_d >= 0.0 && r_dark >= 0.0);
    let r_prime = eta * r_in + r_dark;
    r_prime / (1.0 + r_prime * tau_d)
}

/// One count-rate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRateSample {
    pub polarization: Polarization,
    pub r_in_hz: f64,
    pub r_det_hz: f64,
}

/// Result of fitting the dead-time model to count-rate data.
///
/// The dead time is fitted per polarisation; `tau_d_s` is the mean and
/// `tau_spread_s` the max-min spread across polarisations, reported so a
/// suspiciously polarisation-dependent dead time is visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorFit {
    pub eta_by_pol: BTreeMap<Polarization, f64>,
    pub tau_by_pol: BTreeMap<Polarization, f64>,
    pub tau_d_s: f64,
    pub tau_spread_s: f64,
    pub r_dark_hz: f64,
    /// Root of the summed squared residuals over all samples, in Hz.
    pub residual_norm_hz: f64,
}

/// Fits `(eta, tau_d)` per polarisation with a damped Gauss-Newton
/// iteration started from the nominal device settings (25%, 20 us).
///
/// The dark rate is a separately measured input, not a fit parameter.
pub fn fit_detector(
    samples: &[CountRateSample],
    r_dark: f64,
) -> Result<DetectorFit, DetectorError> {
    let mut by_pol: BTreeMap<Polarization, Vec<CountRateSample>> = BTreeMap::new();
    for s in samples {
        if !(s.r_in_hz.is_finite() && s.r_det_hz.is_finite()) || s.r_in_hz <= 0.0 {
            return Err(DetectorError::InsufficientData(format!(
                "non-finite or non-positive rates in sample {s:?}"
            )));
        }
        if s.r_det_hz > s.r_in_hz {
            return Err(DetectorError::InsufficientData(format!(
                "detected rate exceeds incident rate in sample {s:?}"
            )));
        }
        by_pol.entry(s.polarization).or_default().push(*s);
    }
    for pol in Polarization::ALL {
        let group = by_pol.get(&pol).map(Vec::as_slice).unwrap_or(&[]);
        if group.len() < 3 {
            return Err(DetectorError::InsufficientData(format!(
                "polarization {pol:?} has {} samples, need at least 3",
                group.len()
            )));
        }
        let (lo, hi) = group
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), s| {
                (lo.min(s.r_in_hz), hi.max(s.r_in_hz))
            });
        if hi / lo < 10.0 {
            return Err(DetectorError::InsufficientData(format!(
                "polarization {pol:?} spans {:.3} decades of incident rate, need at least one",
                (hi / lo).log10()
            )));
        }
    }

    let mut eta_by_pol = BTreeMap::new();
    let mut tau_by_pol = BTreeMap::new();
    let mut ssr = 0.0;
    for pol in Polarization::ALL {
        let group = &by_pol[&pol];
        let (eta, tau, res2) = fit_one_polarization(group, r_dark)?;
        if !(0.0..=1.0).contains(&eta) || eta == 0.0 {
            return Err(DetectorError::ImplausibleFit(format!(
                "eta = {eta} for polarization {pol:?} outside (0, 1]"
            )));
        }
        if tau <= 0.0 {
            return Err(DetectorError::ImplausibleFit(format!(
                "tau_d = {tau} s for polarization {pol:?} not positive"
            )));
        }
        // Saturation sanity: no detected rate may exceed 1/tau_d.
        for s in group {
            if s.r_det_hz >= 1.0 / tau {
                return Err(DetectorError::ImplausibleFit(format!(
                    "detected rate {} Hz at or above saturation 1/tau_d = {} Hz",
                    s.r_det_hz,
                    1.0 / tau
                )));
            }
        }
        eta_by_pol.insert(pol, eta);
        tau_by_pol.insert(pol, tau);
        ssr += res2;
    }
    let taus: Vec<f64> = tau_by_pol.values().copied().collect();
    let tau_d_s = taus.iter().sum::<f64>() / taus.len() as f64;
    let tau_spread_s = taus.iter().fold(0.0_f64, |m, &t| m.max(t))
        - taus.iter().fold(f64::INFINITY, |m, &t| m.min(t));
    Ok(DetectorFit {
        eta_by_pol,
        tau_by_pol,
        tau_d_s,
        tau_spread_s,
        r_dark_hz: r_dark,
        residual_norm_hz: ssr.sqrt(),
    })
}

const FIT_ETA_INIT: f64 = 0.25;
const FIT_TAU_INIT: f64 = 20e-6;
const FIT_TAU_SCALE: f64 = 20e-6;
const FIT_MAX_ITER: usize = 400;
const FIT_MAX_CONSECUTIVE_FAILS: usize = 50;

/// Damped Gauss-Newton on the two parameters of one polarisation's data.
/// Returns `(eta, tau_d, squared residual)`.
fn fit_one_polarization(
    samples: &[CountRateSample],
    r_dark: f64,
) -> Result<(f64, f64, f64), DetectorError> {
    // Internally tau is scaled to O(1) so the normal equations stay
    // well conditioned.
    let cost = |eta: f64, t: f64| -> f64 {
        samples
            .iter()
            .map(|s| {
                let r = s.r_det_hz - detected_rate_model(s.r_in_hz, eta, t * FIT_TAU_SCALE, r_dark);
                r * r
            })
            .sum()
    };

    let mut eta = FIT_ETA_INIT;
    let mut t = FIT_TAU_INIT / FIT_TAU_SCALE;
    let mut mu = 1e-6;
    let mut current = cost(eta, t);
    let mut fails = 0usize;
    'outer: for _ in 0..FIT_MAX_ITER {
        // Normal equations J^T J delta = J^T r for residuals r = data - model.
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for s in samples {
            let r_prime = eta * s.r_in_hz + r_dark;
            let denom = 1.0 + r_prime * t * FIT_TAU_SCALE;
            let model = r_prime / denom;
            let res = s.r_det_hz - model;
            // d model / d eta and d model / d t (scaled tau).
            let d_eta = s.r_in_hz / (denom * denom);
            let d_t = -r_prime * r_prime * FIT_TAU_SCALE / (denom * denom);
            let j = [d_eta, d_t];
            for a in 0..2 {
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
                jtr[a] += j[a] * res;
            }
        }
        // Damped step: (J^T J + mu diag(J^T J)) delta = J^T r.
        loop {
            let a00 = jtj[0][0] * (1.0 + mu);
            let a11 = jtj[1][1] * (1.0 + mu);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            let (d0, d1) = if det.abs() > 0.0 {
                (
                    (jtr[0] * a11 - a01 * jtr[1]) / det,
                    (a00 * jtr[1] - jtr[0] * a01) / det,
                )
            } else {
                (0.0, 0.0)
            };
            let step = (d0 * d0 + d1 * d1).sqrt();
            if step < 1e-13 * (1.0 + eta.abs() + t.abs()) {
                // No meaningful step left: converged (possibly at machine
                // precision), not diverged.
                break 'outer;
            }
            let (ne, nt) = (eta + d0, t + d1);
            let trial = cost(ne, nt);
            if trial.is_finite() && trial < current {
                let improvement = current - trial;
                eta = ne;
                t = nt;
                current = trial;
                mu = (mu * 0.25).max(1e-12);
                fails = 0;
                if improvement < 1e-14 * (1.0 + current) {
                    break 'outer;
                }
                break;
            }
            mu *= 8.0;
            fails += 1;
            if fails >= FIT_MAX_CONSECUTIVE_FAILS {
                return Err(DetectorError::FitDiverged(fails));
            }
        }
    }
    Ok((eta, t * FIT_TAU_SCALE, current))
}
