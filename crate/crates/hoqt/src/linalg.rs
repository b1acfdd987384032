//! Dense kernels for the hot paths: complex matrix products and Hermitian
//! eigendecompositions, delegated to faer on nalgebra-owned storage.

use faer::{MatRef, Side};

use nalgebra::DMatrix;

use crate::tensor::{CMatrix, C64};

fn view(m: &CMatrix) -> MatRef<'_, C64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn own(m: MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `a · b`.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    if a.nrows() * a.ncols() * b.ncols() < 32 * 32 * 32 {
        return a * b;
    }
    own((view(a) * view(b)).as_ref())
}

/// `a† · b`.
pub fn matmul_adj(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows(), "matmul_adj shape mismatch");
    if a.nrows() * a.ncols() * b.ncols() < 32 * 32 * 32 {
        return a.adjoint() * b;
    }
    own((view(a).adjoint() * view(b)).as_ref())
}

/// `a · b†`.
pub fn matmul_by_adj(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.ncols(), "matmul_by_adj shape mismatch");
    if a.nrows() * a.ncols() * b.nrows() < 32 * 32 * 32 {
        return a * b.adjoint();
    }
    own((view(a) * view(b).adjoint()).as_ref())
}

/// Eigendecomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn herm_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], CMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = view(&sym)
        .self_adjoint_eigen(Side::Lower)
        .expect("Hermitian eigensolver failed");
    let s = eig.S().column_vector();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let vecs = own(eig.U());
    (vals, vecs)
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn herm_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return vec![];
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut vals: Vec<f64> = view(&sym)
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigensolver failed");
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Projection of a Hermitian matrix onto the PSD cone.
pub fn psd_part(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = herm_eig(m);
    let n = vals.len();
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.0).collect();
    if keep.is_empty() {
        return CMatrix::zeros(n, n);
    }
    let scaled = CMatrix::from_fn(n, keep.len(), |r, c| vecs[(r, keep[c])] * vals[keep[c]].sqrt());
    matmul_by_adj(&scaled, &scaled)
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eig(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = MatRef::from_column_major_slice(sym.as_slice(), n, n)
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric eigensolver failed");
    let s = eig.S().column_vector();
    let u = eig.U();
    ((0..n).map(|i| s[i]).collect(), DMatrix::from_fn(n, n, |i, j| u[(i, j)]))
}
