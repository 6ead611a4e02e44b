//! Small helpers for complex Hermitian matrix work on top of `nalgebra`.
//!
//! Operators act on the detector mode space T (usually 2-dimensional, but
//! everything here is dimension-generic) or on tensor products involving it,
//! so the common currency is `DMatrix<Complex64>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Complex dynamic matrix used for all operator algebra.
pub type CMat = DMatrix<Complex64>;
/// Complex dynamic vector used for mode-space states.
pub type CVec = DVector<Complex64>;

/// Largest entry-wise deviation of `m` from its own adjoint.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry-wise absolute difference between two matrices.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted ascending.
///
/// Returns `(values, vectors)` where column `k` of `vectors` is the unit
/// eigenvector for `values[k]`, with the phase fixed so the largest-magnitude
/// component is real and non-negative.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    debug_assert!(hermiticity_defect(m) < 1e-8 * (1.0 + m.norm()));
    let se = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col: CVec = se.eigenvectors.column(i).into();
        canonicalize_phase(&mut col);
        vectors.set_column(k, &col);
    }
    (values, vectors)
}

/// Eigenvalues only, sorted ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Minimum eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Maximum eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &CMat) -> f64 {
    *hermitian_eigenvalues(m).last().expect("non-empty matrix")
}

/// True when all eigenvalues of the Hermitian matrix `m` are >= `-tol`.
pub fn is_psd(m: &CMat, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol
}

/// Rotates the global phase so the largest-magnitude component of `v`
/// becomes real and non-negative.
pub fn canonicalize_phase(v: &mut CVec) {
    let mut imax = 0;
    let mut best = 0.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            imax = i;
        }
    }
    if best > 0.0 {
        let phase = v[imax] / Complex64::new(best, 0.0);
        for z in v.iter_mut() {
            *z /= phase;
        }
    }
}

/// Kronecker product of two complex matrices.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// n x n complex identity.
pub fn ceye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Embeds a real matrix into a complex one.
pub fn complexify(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Trace of a complex matrix.
pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().sum()
}

/// Real part of `tr(a * b)`, the Hilbert-Schmidt pairing used for
/// expectation values of Hermitian operators on Hermitian states.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    // tr(ab) = sum_ij a_ij b_ji
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc.re
}
