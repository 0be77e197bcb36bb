//! Small helpers for Hermitian matrix work in level space (dimensions <= ~4)
//! and Fock space (dimensions up to a few hundred).

use crate::{C64, CMatrix};
use nalgebra::DVector;

/// Hermitian part `(a + a†)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    let mut h = a.clone();
    let ad = a.adjoint();
    h += &ad;
    h.scale_mut(0.5);
    h
}

/// Anti-Hermitian part divided by `i`: `(a - a†)/(2i)`. Hermitian by construction.
pub fn antihermitian_part_over_i(a: &CMatrix) -> CMatrix {
    let mut h = a.clone();
    let ad = a.adjoint();
    h -= &ad;
    h.scale_mut(0.5);
    h * C64::new(0.0, -1.0)
}

/// Max absolute deviation from Hermiticity, `max_ij |a_ij - conj(a_ji)|`.
pub fn hermiticity_residual(a: &CMatrix) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            r = r.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    r
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns `(eigenvalues, eigenvectors)` with real eigenvalues sorted
/// ascending; column `k` of the eigenvector matrix belongs to eigenvalue `k`.
/// The input is symmetrized first so roundoff-level asymmetry is harmless.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitian_part(a);
    let se = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let n = a.nrows();
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Largest singular value (spectral norm), via the eigenvalues of `a† a`.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.nrows() == 1 && a.ncols() == 1 {
        return a[(0, 0)].norm();
    }
    let ata = a.adjoint() * a;
    let (vals, _) = hermitian_eigen(&ata);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Smallest singular value, via the eigenvalues of `a† a`.
pub fn min_singular_value(a: &CMatrix) -> f64 {
    if a.nrows() == 1 && a.ncols() == 1 {
        return a[(0, 0)].norm();
    }
    let ata = a.adjoint() * a;
    let (vals, _) = hermitian_eigen(&ata);
    vals.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Real trace of a (nominally Hermitian) matrix.
pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// `tr(a b)` taken as a real number (exact for Hermitian `a`, `b`).
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s.re
}

/// Identity matrix of dimension `n`.
pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Builds a complex matrix from a row-major slice of rows.
pub fn from_rows(rows: &[Vec<C64>]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Connected components of the sparsity graph of a Hermitian matrix:
/// indices `i`, `j` are connected when `|a_ij| > tol`. Each component is
/// returned sorted; components are ordered by their smallest index.
pub fn coupling_blocks(a: &CMatrix, tol: f64) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && (a[(i, j)].norm() > tol || a[(j, i)].norm() > tol) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        blocks.push(comp);
    }
    blocks
}

/// Extracts the principal submatrix on the given index set.
pub fn submatrix(a: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Scatters a block back into an `n x n` matrix at the given index set.
pub fn scatter_block(block: &CMatrix, idx: &[usize], n: usize, out: &mut CMatrix) {
    debug_assert_eq!(out.nrows(), n);
    for i in 0..idx.len() {
        for j in 0..idx.len() {
            out[(idx[i], idx[j])] = block[(i, j)];
        }
    }
}

/// Complex vector from a slice.
pub fn cvector(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}

// ---------------------------------------------------------------------------
// Flat row-major micro-kernels.
//
// Time-stepping loops touch O(N^2) small matrices (dimension 1-4); going
// through heap-allocated `DMatrix` products there would dominate the runtime
// with allocator traffic. These helpers work on `&[C64]` slices of length
// `dim * dim` in row-major order and never allocate.
// ---------------------------------------------------------------------------

/// `dst += c * src`, elementwise over flat row-major matrices.
#[inline]
pub fn flat_scaled_add(dst: &mut [C64], src: &[C64], c: C64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

/// `dst += c * a * b` for flat row-major `dim x dim` matrices.
#[inline]
pub fn flat_mul_add(dst: &mut [C64], a: &[C64], b: &[C64], dim: usize, c: C64) {
    debug_assert_eq!(dst.len(), dim * dim);
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim * dim);
    for i in 0..dim {
        for k in 0..dim {
            let aik = c * a[i * dim + k];
            if aik.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..dim {
                dst[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
}

/// Writes the conjugate transpose of `src` into `dst` (flat row-major).
#[inline]
pub fn flat_adjoint_into(dst: &mut [C64], src: &[C64], dim: usize) {
    debug_assert_eq!(dst.len(), dim * dim);
    debug_assert_eq!(src.len(), dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            dst[i * dim + j] = src[j * dim + i].conj();
        }
    }
}

/// Flat row-major identity of dimension `dim`.
pub fn flat_identity(dim: usize) -> Vec<C64> {
    let mut m = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        m[i * dim + i] = C64::new(1.0, 0.0);
    }
    m
}

/// Owned `DMatrix` from a flat row-major slice.
pub fn matrix_from_flat(flat: &[C64], dim: usize) -> CMatrix {
    debug_assert_eq!(flat.len(), dim * dim);
    CMatrix::from_fn(dim, dim, |i, j| flat[i * dim + j])
}

/// Copies a matrix into a flat row-major buffer.
pub fn flat_from_matrix(a: &CMatrix) -> Vec<C64> {
    let dim = a.nrows();
    debug_assert_eq!(a.ncols(), dim);
    let mut flat = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            flat[i * dim + j] = a[(i, j)];
        }
    }
    flat
}
