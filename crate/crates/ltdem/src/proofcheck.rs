//! Brute-force finite-dimensional verification of the operator identities
//! and inequalities behind the key-rate analysis: the measurement filters,
//! the virtual POVMs, the T-operator family and the lambda sandwich bounds
//! under random adversary states.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::detector::EfficiencyOperator;
use crate::linalg::{self, CMat, CVec};
use crate::qstate::{MeasBasis, ProtocolProbs};
use crate::security::{CMatrix, LambdaBounds, SecurityError};

/// Violations above this are treated as a broken bound computation.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Errors from the verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProofError {
    #[error("filter is invalid: largest singular value exceeds 1 by {0}")]
    InvalidFilter(f64),
    #[error("operator bound violated by {0} (tolerance {VIOLATION_TOL})")]
    BoundViolated(f64),
    #[error(transparent)]
    Security(#[from] SecurityError),
}

/// An operator on the joint space `B (x) T`, stored dense.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOperator {
    pub matrix: CMat,
    pub dim_t: usize,
}

impl JointOperator {
    pub fn dim(&self) -> usize {
        2 * self.dim_t
    }
}

/// `|s_beta>` as a complex vector on B.
pub fn basis_state_b(s: u8, basis: MeasBasis) -> CVec {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = match (basis, s) {
        (MeasBasis::Z, 0) => (1.0, 0.0),
        (MeasBasis::Z, _) => (0.0, 1.0),
        (MeasBasis::X, 0) => (r, r),
        (MeasBasis::X, _) => (r, -r),
    };
    CVec::from_vec(vec![Complex64::new(a, 0.0), Complex64::new(b, 0.0)])
}

fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}

fn factor_of(op: &EfficiencyOperator) -> Result<CMat, ProofError> {
    match op.factor() {
        Some(f) => Ok(f.clone()),
        None => {
            let f = op.clone().factorized().map_err(SecurityError::from)?;
            Ok(f.factor().expect("factor populated").clone())
        }
    }
}

/// The Z-basis measurement filter
/// `Q_Z = |0_Z><0_Z| (x) F_0 + |1_Z><1_Z| (x) F_1`.
pub fn build_qz(
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
) -> Result<JointOperator, ProofError> {
    assert_eq!(f0.dim(), f1.dim());
    let dim_t = f0.dim();
    let m = linalg::kron(&projector(&basis_state_b(0, MeasBasis::Z)), &factor_of(f0)?)
        + linalg::kron(&projector(&basis_state_b(1, MeasBasis::Z)), &factor_of(f1)?);
    Ok(JointOperator { matrix: m, dim_t })
}

/// The POVM element `M^{s_beta} = |s_beta><s_beta| (x) F_s^dag F_s`.
pub fn povm_element(s: u8, basis: MeasBasis, f_s: &EfficiencyOperator) -> CMat {
    linalg::kron(&projector(&basis_state_b(s, basis)), f_s.gram())
}

/// The virtual balancing filter
/// `G = |0_Z><0_Z| (x) C F_0^{-1} + |1_Z><1_Z| (x) C F_1^{-1}`.
///
/// Rejects the construction when it is not a valid filter, i.e. when its
/// largest singular value exceeds one beyond round-off.
pub fn build_g(
    c: &CMatrix,
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
) -> Result<JointOperator, ProofError> {
    assert_eq!(f0.dim(), f1.dim());
    let dim_t = f0.dim();
    let mut m = CMat::zeros(2 * dim_t, 2 * dim_t);
    for (s, op) in [f0, f1].into_iter().enumerate() {
        let inv = factor_of(op)?
            .try_inverse()
            .ok_or(SecurityError::SingularGram(op.min_eigenvalue()))?;
        m += linalg::kron(
            &projector(&basis_state_b(s as u8, MeasBasis::Z)),
            &(c.c() * inv),
        );
    }
    let gtg = m.adjoint() * &m;
    let top = linalg::max_eigenvalue(&gtg);
    if top > 1.0 + 1e-8 {
        return Err(ProofError::InvalidFilter(top - 1.0));
    }
    Ok(JointOperator { matrix: m, dim_t })
}

/// The twelve rank-one projectors of the coefficient-space family and the
/// six T operators assembled from them.
#[derive(Debug, Clone, PartialEq)]
pub struct TOperatorSet {
    /// X-type projectors in the order `++, -+, +-, --`.
    pub x_proj: [Matrix4<f64>; 4],
    /// Z-type projectors in the order `00, 01, 10, 11`.
    pub z_proj: [Matrix4<f64>; 4],
    /// Y-type projectors in the order `++, -+, +-, --`.
    pub y_proj: [Matrix4<f64>; 4],
    /// `t[s][w]` for outcome `s` and Pauli label `w in {1, X, Z}`.
    pub t: [[Matrix4<f64>; 3]; 2],
}

fn proj4(v: [f64; 4]) -> Matrix4<f64> {
    // Normalized rank-one projector onto the given (norm sqrt(2)) vector.
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = v[i] * v[j] / 2.0;
        }
    }
    m
}

/// Builds the projector family and the T operators.
pub fn build_t_operators() -> TOperatorSet {
    let x_pp = proj4([1.0, 1.0, 0.0, 0.0]);
    let x_mp = proj4([0.0, 0.0, -1.0, 1.0]);
    let x_pm = proj4([0.0, 0.0, 1.0, 1.0]);
    let x_mm = proj4([1.0, -1.0, 0.0, 0.0]);
    let z_00 = proj4([1.0, 0.0, 0.0, 1.0]);
    let z_01 = proj4([0.0, 1.0, -1.0, 0.0]);
    let z_10 = proj4([0.0, 1.0, 1.0, 0.0]);
    let z_11 = proj4([1.0, 0.0, 0.0, -1.0]);
    let y_pp = proj4([1.0, 0.0, 1.0, 0.0]);
    let y_mp = proj4([0.0, -1.0, 0.0, 1.0]);
    let y_pm = proj4([0.0, 1.0, 0.0, 1.0]);
    let y_mm = proj4([1.0, 0.0, -1.0, 0.0]);
    let t = [
        [x_pp + x_mp, x_pp - x_mp, z_00 + z_01 - y_mp - y_pp],
        [x_mm + x_pm, -x_mm + x_pm, -z_11 - z_10 + y_mp + y_pp],
    ];
    TOperatorSet {
        x_proj: [x_pp, x_mp, x_pm, x_mm],
        z_proj: [z_00, z_01, z_10, z_11],
        y_proj: [y_pp, y_mp, y_pm, y_mm],
        t,
    }
}

impl TOperatorSet {
    /// `t[s][w]` as a complex matrix, for tensor products.
    pub fn t_complex(&self, s: u8, w: usize) -> CMat {
        let m = &self.t[s as usize][w];
        CMat::from_fn(4, 4, |i, j| Complex64::new(m[(i, j)], 0.0))
    }
}

/// One named inequality with the worst violation observed over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub max_violation: f64,
}

/// Outcome of a batch of randomised operator-inequality trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub rows: Vec<CheckRow>,
    pub trials: usize,
}

impl SandwichReport {
    pub fn max_violation(&self) -> f64 {
        self.rows.iter().map(|r| r.max_violation).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_violation() <= VIOLATION_TOL
    }
}

/// Gaussian complex matrix entries for random-state generation.
fn random_complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Random full-support density matrix `W W^dag / tr` of dimension `n`.
pub fn random_psd_state(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let w = random_complex_gaussian(rng, n, n);
    let m = &w * w.adjoint();
    let t = linalg::trace(&m).re;
    m / Complex64::new(t, 0.0)
}

/// Random rank-one projector of dimension `n`.
pub fn random_rank1_projector(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let mut v: CVec = random_complex_gaussian(rng, n, 1).column(0).into();
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    projector(&v)
}

/// Random invertible efficiency-operator pair of mode dimension `dim`,
/// with eigenvalues kept away from both 0 and 1.
pub fn random_efficiency_pair(
    rng: &mut ChaCha8Rng,
    dim: usize,
) -> (EfficiencyOperator, EfficiencyOperator) {
    let make = |rng: &mut ChaCha8Rng| {
        let q = random_complex_gaussian(rng, dim, dim).qr().q();
        let eigs: Vec<f64> = (0..dim).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
        let d = CMat::from_diagonal(&CVec::from_iterator(
            dim,
            eigs.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let gram = &q * d * q.adjoint();
        // Symmetrise away round-off before validation.
        let gram = (&gram + gram.adjoint()) * Complex64::new(0.5, 0.0);
        EfficiencyOperator::from_gram(gram)
            .expect("constructed gram is valid")
            .factorized()
            .expect("eigenvalues bounded away from zero")
    };
    (make(rng), make(rng))
}

/// Half-trace pairing `(1/2) tr[rho (P (x) op)]` used by all the bound
/// checks below.
fn half_trace(rho: &CMat, p: &CMat, op: &CMat) -> f64 {
    0.5 * linalg::trace_product_re(rho, &linalg::kron(p, op))
}

/// Randomised check of the operator sandwich
/// `lambda_s^- F_s^dag F_s <= C^dag C <= lambda_s^+ F_s^dag F_s`
/// lifted to `Pi (x) .` for random projectors and states, plus the
/// T-operator level bounds the phase-error estimate relies on.
///
/// Returns the per-inequality worst violations; errs with
/// [`ProofError::BoundViolated`] when any exceeds [`VIOLATION_TOL`].
pub fn verify_lambda_sandwich(
    lam: &LambdaBounds,
    c: &CMatrix,
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
    trials: usize,
    seed: u64,
) -> Result<SandwichReport, ProofError> {
    let report = run_sandwich_trials(lam, c, f0, f1, trials, seed);
    if !report.passed() {
        return Err(ProofError::BoundViolated(report.max_violation()));
    }
    Ok(report)
}

/// Same trials as [`verify_lambda_sandwich`] but always returning the
/// report, so callers can render a table even for failing bounds.
pub fn run_sandwich_trials(
    lam: &LambdaBounds,
    c: &CMatrix,
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
    trials: usize,
    seed: u64,
) -> SandwichReport {
    assert!(trials >= 1);
    let dim_t = f0.dim();
    let n = 4 * dim_t;
    let cc = c.c_dag_c();
    let tset = build_t_operators();
    let mut rows: Vec<CheckRow> = Vec::new();
    let add = |name: String, v: f64, rows: &mut Vec<CheckRow>| {
        if let Some(r) = rows.iter_mut().find(|r| r.name == name) {
            r.max_violation = r.max_violation.max(v);
        } else {
            rows.push(CheckRow {
                name,
                max_violation: v,
            });
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let rho = random_psd_state(&mut rng, n);
        let pi = random_rank1_projector(&mut rng, 4);
        for (s, op) in [f0, f1].into_iter().enumerate() {
            let (lm, lp) = lam.for_detector(s as u8);
            let gram = op.gram();
            // Projector-lifted sandwich.
            let mid = half_trace(&rho, &pi, &cc);
            let lo = lm * half_trace(&rho, &pi, gram);
            let hi = lp * half_trace(&rho, &pi, gram);
            add(format!("pi_sandwich_lower_d{s}"), lo - mid, &mut rows);
            add(format!("pi_sandwich_upper_d{s}"), mid - hi, &mut rows);
            // T-operator identity component (a projector as well).
            let t1 = tset.t_complex(s as u8, 0);
            let v1 = half_trace(&rho, &t1, &cc);
            let a1 = half_trace(&rho, &t1, gram);
            add(format!("t_identity_lower_d{s}"), lm * a1 - v1, &mut rows);
            add(format!("t_identity_upper_d{s}"), v1 - lp * a1, &mut rows);
            // T-operator X component, bounded through the +- split.
            let tx = tset.t_complex(s as u8, 1);
            let vx = half_trace(&rho, &tx, &cc);
            let ax = half_trace(&rho, &tx, gram);
            let lower = (lp + lm) / 2.0 * ax - (lp - lm) / 2.0 * a1;
            let upper = (lp + lm) / 2.0 * ax + (lp - lm) / 2.0 * a1;
            add(format!("t_x_lower_d{s}"), lower - vx, &mut rows);
            add(format!("t_x_upper_d{s}"), vx - upper, &mut rows);
        }
    }
    SandwichReport { rows, trials }
}

/// Randomised check of the phase-error numerator/denominator bounds for a
/// given key-state overlap: the virtual-measurement combinations must stay
/// within their lambda-expressed estimates.
#[allow(clippy::too_many_arguments)]
pub fn run_ep_bound_trials(
    lam: &LambdaBounds,
    c: &CMatrix,
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
    c01: f64,
    probs: &ProtocolProbs,
    trials: usize,
    seed: u64,
) -> SandwichReport {
    assert!(trials >= 1);
    let dim_t = f0.dim();
    let n = 4 * dim_t;
    let cc = c.c_dag_c();
    let tset = build_t_operators();
    let pzz = probs.p_za * probs.p_zb;
    let p0x = (1.0 + c01) / 2.0;
    let p1x = (1.0 - c01) / 2.0;
    let mut num_viol = f64::NEG_INFINITY;
    let mut den_viol = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let rho = random_psd_state(&mut rng, n);
        let mut v = [[0.0; 2]; 2]; // virtual combos: [s][w: 1, X]
        let mut a = [[0.0; 2]; 2]; // actual combos
        for s in 0..2usize {
            for w in 0..2usize {
                let t = tset.t_complex(s as u8, w);
                v[s][w] = half_trace(&rho, &t, &cc);
                a[s][w] = half_trace(&rho, &t, [f0, f1][s].gram());
            }
        }
        let (lm0, lp0) = lam.for_detector(0);
        let (lm1, lp1) = lam.for_detector(1);
        // Numerator: error combinations, bounded from above.
        let num_virt = pzz * (p1x * (v[0][0] - v[0][1]) + p0x * (v[1][0] + v[1][1]));
        let num_bound = pzz
            * (p1x * ((3.0 * lp0 - lm0) / 2.0 * a[0][0] - (lp0 + lm0) / 2.0 * a[0][1])
                + p0x * ((3.0 * lp1 - lm1) / 2.0 * a[1][0] + (lp1 + lm1) / 2.0 * a[1][1]));
        num_viol = num_viol.max(num_virt - num_bound);
        // Denominator: total virtual yield, bounded from below.
        let den_virt = pzz
            * (p1x * (v[0][0] - v[0][1] + v[1][0] - v[1][1])
                + p0x * (v[0][0] + v[0][1] + v[1][0] + v[1][1]));
        let den_bound = pzz
            * (-(lp0 - 3.0 * lm0) / 2.0 * a[0][0] - (lp1 - 3.0 * lm1) / 2.0 * a[1][0]
                + c01 * ((lp0 + lm0) / 2.0 * a[0][1] + (lp1 + lm1) / 2.0 * a[1][1]));
        den_viol = den_viol.max(den_bound - den_virt);
    }
    SandwichReport {
        rows: vec![
            CheckRow {
                name: "ep_numerator_upper".into(),
                max_violation: num_viol,
            },
            CheckRow {
                name: "ep_denominator_lower".into(),
                max_violation: den_viol,
            },
        ],
        trials,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::tomography;
    use crate::linalg::max_abs_diff;
    use crate::security::{build_c, gram_diagonalize, lambda_analytical};

    const D0: (f64, f64, f64, f64) = (0.2233, 0.2399, 0.2378, 0.2369);
    const D1: (f64, f64, f64, f64) = (0.2250, 0.2420, 0.2401, 0.2386);

    fn reference_pair() -> (EfficiencyOperator, EfficiencyOperator) {
        (
            tomography(D0.0, D0.1, D0.2, D0.3).unwrap().factorized().unwrap(),
            tomography(D1.0, D1.1, D1.2, D1.3).unwrap().factorized().unwrap(),
        )
    }

    #[test]
    fn qz_isotropic_is_scaled_identity() {
        let f = EfficiencyOperator::isotropic(0.36, 2).factorized().unwrap();
        let qz = build_qz(&f, &f).unwrap();
        let want = linalg::ceye(4) * Complex64::new(0.6, 0.0);
        assert!(max_abs_diff(&qz.matrix, &want) < 1e-12);
    }

    #[test]
    fn qz_reproduces_povm_elements_and_completeness() {
        let (f0, f1) = reference_pair();
        let qz = build_qz(&f0, &f1).unwrap();
        let mut sum = CMat::zeros(4, 4);
        for (s, op) in [&f0, &f1].into_iter().enumerate() {
            let proj = linalg::kron(
                &(basis_state_b(s as u8, MeasBasis::Z)
                    * basis_state_b(s as u8, MeasBasis::Z).adjoint()),
                &linalg::ceye(2),
            );
            let m = qz.matrix.adjoint() * proj * &qz.matrix;
            let want = povm_element(s as u8, MeasBasis::Z, op);
            assert!(max_abs_diff(&m, &want) < 1e-12);
            sum += m;
        }
        // Q^dag Q together with the failure element completes to identity.
        let fail = linalg::ceye(4) - &sum;
        let qtq = qz.matrix.adjoint() * &qz.matrix;
        assert!(max_abs_diff(&(qtq + fail), &linalg::ceye(4)) < 1e-12);
    }

    #[test]
    fn g_filter_identities_reference_pair() {
        let (f0, f1) = reference_pair();
        let g = gram_diagonalize(&f0, &f1).unwrap();
        let c = build_c(&g, &f0).unwrap();
        let gf = build_g(&c, &f0, &f1).unwrap();
        let qz = build_qz(&f0, &f1).unwrap();
        // G Q_Z = 1_B (x) C.
        let want = linalg::kron(&linalg::ceye(2), c.c());
        assert!(max_abs_diff(&(&gf.matrix * &qz.matrix), &want) < 1e-12);
        // Virtual POVM elements |s_X><s_X| (x) C^dag C.
        for s in 0..2u8 {
            let proj = linalg::kron(
                &(basis_state_b(s, MeasBasis::X) * basis_state_b(s, MeasBasis::X).adjoint()),
                &linalg::ceye(2),
            );
            let got = qz.matrix.adjoint() * gf.matrix.adjoint() * proj * &gf.matrix * &qz.matrix;
            let want = linalg::kron(
                &(basis_state_b(s, MeasBasis::X) * basis_state_b(s, MeasBasis::X).adjoint()),
                &c.c_dag_c(),
            );
            assert!(max_abs_diff(&got, &want) < 1e-12);
        }
    }

    #[test]
    fn g_filter_never_amplifies() {
        let (f0, f1) = reference_pair();
        let g = gram_diagonalize(&f0, &f1).unwrap();
        let c = build_c(&g, &f0).unwrap();
        let gf = build_g(&c, &f0, &f1).unwrap();
        let gtg = gf.matrix.adjoint() * &gf.matrix;
        assert!(linalg::max_eigenvalue(&gtg) <= 1.0 + 1e-10);

        let f = EfficiencyOperator::isotropic(0.25, 2).factorized().unwrap();
        let g = gram_diagonalize(&f, &f).unwrap();
        let c = build_c(&g, &f).unwrap();
        let gf = build_g(&c, &f, &f).unwrap();
        let gtg = gf.matrix.adjoint() * &gf.matrix;
        assert!(linalg::max_eigenvalue(&gtg) <= 1.0 + 1e-12);
    }

    #[test]
    fn t_projectors_are_projectors() {
        let t = build_t_operators();
        for p in t.x_proj.iter().chain(t.z_proj.iter()).chain(t.y_proj.iter()) {
            assert!((p * p - p).abs().max() < 1e-14);
            assert!((p.trace() - 1.0).abs() < 1e-14);
        }
        // Completeness of the X family.
        let sum = t.t[0][0] + t.t[1][0];
        assert!((sum - Matrix4::identity()).abs().max() < 1e-14);
    }

    #[test]
    fn t_identity_fixes_its_own_eigenvector() {
        let t = build_t_operators();
        let v = nalgebra::Vector4::new(1.0, 1.0, 0.0, 0.0) / 2f64.sqrt();
        let w = t.t[0][0] * v;
        assert!((w - v).norm() < 1e-14);
    }

    #[test]
    fn t_operators_reproduce_projected_traces() {
        // For A = a0 1 + a1 X + i a2 Y + a3 Z and similarly A', collecting
        // coefficients in B vectors:
        //   tr[A'^dag |s_X><s_X| A sigma_w] = 2 B'^dag T_{s,w} B.
        // The factor 2 is the normalisation cost of keeping the family
        // idempotent.
        let t = build_t_operators();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let paulis = [
            CMat::identity(2, 2),
            CMat::from_row_slice(2, 2, &[
                Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
            ]),
            CMat::from_row_slice(2, 2, &[
                Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0),
            ]),
            CMat::from_row_slice(2, 2, &[
                Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0),
            ]),
        ];
        let assemble = |b: &[Complex64; 4]| -> CMat {
            &paulis[0] * b[0]
                + &paulis[1] * b[1]
                + &paulis[2] * (Complex64::i() * b[2])
                + &paulis[3] * b[3]
        };
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let mut draw = || {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            };
            let b: [Complex64; 4] = [draw(), draw(), draw(), draw()];
            let bp: [Complex64; 4] = [draw(), draw(), draw(), draw()];
            let a = assemble(&b);
            let ap = assemble(&bp);
            for s in 0..2u8 {
                let proj = basis_state_b(s, MeasBasis::X) * basis_state_b(s, MeasBasis::X).adjoint();
                for (w, sigma) in [(0, &paulis[0]), (1, &paulis[1]), (2, &paulis[3])] {
                    let lhs = linalg::trace(&(ap.adjoint() * &proj * &a * sigma));
                    let tm = t.t_complex(s, w);
                    let mut rhs = Complex64::new(0.0, 0.0);
                    for i in 0..4 {
                        for j in 0..4 {
                            rhs += bp[i].conj() * tm[(i, j)] * b[j];
                        }
                    }
                    worst = worst.max((lhs - rhs * Complex64::new(2.0, 0.0)).norm());
                }
            }
        }
        assert!(worst < 1e-11, "worst deviation {worst}");
    }

    #[test]
    fn sandwich_identical_detectors_is_tight() {
        let f = EfficiencyOperator::isotropic(0.25, 2).factorized().unwrap();
        let g = gram_diagonalize(&f, &f).unwrap();
        let c = build_c(&g, &f).unwrap();
        let lam = lambda_analytical(&g).unwrap();
        let report = verify_lambda_sandwich(&lam, &c, &f, &f, 200, 7).unwrap();
        // Both sides coincide: violations are pure round-off.
        assert!(report.max_violation() < 1e-12);
    }

    #[test]
    fn sandwich_reference_pair_analytical_bounds() {
        let (f0, f1) = reference_pair();
        let g = gram_diagonalize(&f0, &f1).unwrap();
        let c = build_c(&g, &f0).unwrap();
        let lam = lambda_analytical(&g).unwrap();
        let report = verify_lambda_sandwich(&lam, &c, &f0, &f1, 1000, 20260810).unwrap();
        assert!(report.max_violation() <= 1e-10, "max {}", report.max_violation());
    }

    #[test]
    fn sandwich_catches_inflated_lower_bound() {
        let (f0, f1) = reference_pair();
        let g = gram_diagonalize(&f0, &f1).unwrap();
        let c = build_c(&g, &f0).unwrap();
        let mut lam = lambda_analytical(&g).unwrap();
        lam.lm0 *= 1.5;
        let err = verify_lambda_sandwich(&lam, &c, &f0, &f1, 100, 99).unwrap_err();
        assert!(matches!(err, ProofError::BoundViolated(_)));
    }

    #[test]
    fn sandwich_holds_in_three_dimensional_mode_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let (f0, f1) = random_efficiency_pair(&mut rng, 3);
        let g = gram_diagonalize(&f0, &f1).unwrap();
        let c = build_c(&g, &f0).unwrap();
        let lam = lambda_analytical(&g).unwrap();
        let report = verify_lambda_sandwich(&lam, &c, &f0, &f1, 300, 17).unwrap();
        assert!(report.max_violation() <= 1e-10);
    }

    #[test]
    fn ep_bounds_hold_for_random_states() {
        let (f0, f1) = reference_pair();
        let g = gram_diagonalize(&f0, &f1).unwrap();
        let c = build_c(&g, &f0).unwrap();
        let lam = lambda_analytical(&g).unwrap();
        let probs = ProtocolProbs::symmetric_thirds();
        for c01 in [0.0, 0.1, 0.3] {
            let report = run_ep_bound_trials(&lam, &c, &f0, &f1, c01, &probs, 500, 23);
            assert!(
                report.max_violation() <= 1e-9,
                "c01 = {c01}: max violation {}",
                report.max_violation()
            );
        }
    }
}
