//! Complex dense linear algebra used by the MIMO pipeline.
//!
//! The per-user SVD works on short, wide matrices (a handful of receive
//! antennas against dozens of transmit antennas). It diagonalizes the small
//! Gram matrix `H Hᴴ` first, then polishes the rotated rows with one-sided
//! Jacobi sweeps until they are orthogonal to 1e-12 relative. The polish
//! restores the accuracy the Gram step loses on ill-conditioned inputs, and
//! is skipped entirely when the rows already come out orthogonal.

use nalgebra::{DMatrix, SymmetricEigen};
pub use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const MAX_SWEEPS: usize = 40;
/// Rows count as orthogonal once `|b_p · b_qᴴ| <= POLISH_TOL · ‖b_p‖‖b_q‖`.
const POLISH_TOL: f64 = 1e-12;

/// Thin SVD `H = Uᴴ · diag(s) · V` of an `R × T` matrix with `R ≤ T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdDecomposition {
    /// Unitary `R × R`.
    pub u: CMatrix,
    /// Singular values, descending.
    pub s: Vec<f64>,
    /// Semi-unitary `R × T`; row `i` is the right-singular vector for `s[i]`.
    pub v: CMatrix,
}

impl SvdDecomposition {
    /// `Uᴴ · diag(s) · V`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut sv = self.v.clone();
        for (i, &s) in self.s.iter().enumerate() {
            sv.row_mut(i).scale_mut(s);
        }
        self.u.adjoint() * sv
    }
}

pub fn ensure_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Hermitian inner product of two rows, `a · bᴴ`.
#[inline]
pub(crate) fn row_dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // Four independent accumulators keep the adds from serializing.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(2), b.chunks_exact(2));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0].re * y[0].re + x[0].im * y[0].im;
        acc[1] += x[0].im * y[0].re - x[0].re * y[0].im;
        acc[2] += x[1].re * y[1].re + x[1].im * y[1].im;
        acc[3] += x[1].im * y[1].re - x[1].re * y[1].im;
    }
    for (x, y) in ra.iter().zip(rb) {
        acc[0] += x.re * y.re + x.im * y.im;
        acc[1] += x.im * y.re - x.re * y.im;
    }
    Complex64::new(acc[0] + acc[2], acc[1] + acc[3])
}

#[inline]
fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Row-major copy of `m`: row `i` is `out[i * ncols..(i + 1) * ncols]`.
fn row_major(m: &CMatrix) -> Vec<Complex64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(data: &[Complex64], nrows: usize, ncols: usize) -> CMatrix {
    CMatrix::from_row_slice(nrows, ncols, data)
}

/// Mutable views of rows `p < q` of a row-major buffer with rows of length `n`.
#[inline]
fn row_pair(data: &mut [Complex64], n: usize, p: usize, q: usize) -> (&mut [Complex64], &mut [Complex64]) {
    let (lo, hi) = data.split_at_mut(q * n);
    (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
}

/// Applies the 2×2 unitary that zeroes `b_p · b_qᴴ` to rows `p`, `q` of both
/// `b` (rows of length `t`) and `u` (rows of length `r`). Returns false if
/// the pair was already orthogonal.
fn jacobi_rotate(
    b: &mut [Complex64],
    u: &mut [Complex64],
    norms: &mut [f64],
    (r, t): (usize, usize),
    p: usize,
    q: usize,
) -> bool {
    let (alpha, beta) = (norms[p], norms[q]);
    let gamma = row_dot(&b[p * t..(p + 1) * t], &b[q * t..(q + 1) * t]);
    let g = gamma.norm();
    if g <= POLISH_TOL * (alpha * beta).sqrt() || g == 0.0 {
        return false;
    }
    // Rotate row q by the phase of gamma so the coupling becomes real, then
    // apply a real Jacobi rotation.
    let phase = gamma / g;
    let zeta = (beta - alpha) / (2.0 * g);
    let tan = if zeta == 0.0 {
        1.0
    } else {
        zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + tan * tan).sqrt();
    let s = c * tan;
    for (rows, n) in [(&mut *b, t), (&mut *u, r)] {
        let (rp, rq) = row_pair(rows, n, p, q);
        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
            let yq = *y * phase;
            let xp = *x;
            *x = xp * c - yq * s;
            *y = xp * s + yq * c;
        }
    }
    norms[p] = norm_sq(&b[p * t..(p + 1) * t]);
    norms[q] = norm_sq(&b[q * t..(q + 1) * t]);
    true
}

/// [`svd`] output in row-major buffers, for callers that only walk rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSvd {
    pub rows: usize,
    pub cols: usize,
    /// `rows × rows`.
    pub u: Vec<Complex64>,
    pub s: Vec<f64>,
    /// `rows × cols`.
    pub v: Vec<Complex64>,
}

impl RowSvd {
    pub fn v_row(&self, i: usize) -> &[Complex64] {
        &self.v[i * self.cols..(i + 1) * self.cols]
    }

    pub fn into_matrices(self) -> SvdDecomposition {
        SvdDecomposition {
            u: from_row_major(&self.u, self.rows, self.rows),
            s: self.s,
            v: from_row_major(&self.v, self.rows, self.cols),
        }
    }
}

/// Thin SVD of an `R × T` matrix, `R ≤ T`.
///
/// Phase convention: the first entry of each row of `V` whose magnitude
/// exceeds `1e-12` is real and positive. Right-singular vectors belonging to
/// numerically zero singular values are completed to an orthonormal set.
pub fn svd(h: &CMatrix) -> Result<SvdDecomposition> {
    svd_rows(h).map(RowSvd::into_matrices)
}

/// [`svd`] without the conversion back to column-major matrices.
pub fn svd_rows(h: &CMatrix) -> Result<RowSvd> {
    ensure_finite(h, "channel matrix")?;
    let (r, t) = h.shape();
    if r == 0 || r > t {
        return Err(Error::Shape(format!("svd expects 0 < rows <= cols, got {r}x{t}")));
    }

    let a = row_major(h);
    let row = |i: usize| &a[i * t..(i + 1) * t];
    let mut gram = CMatrix::zeros(r, r);
    for i in 0..r {
        gram[(i, i)] = Complex64::new(norm_sq(row(i)), 0.0);
        for j in i + 1..r {
            let g = row_dot(row(i), row(j));
            gram[(i, j)] = g;
            gram[(j, i)] = g.conj();
        }
    }
    let q = SymmetricEigen::new(gram).eigenvectors;
    // H Hᴴ = Q Λ Qᴴ, so U = Qᴴ and U·H has (nearly) orthogonal rows.
    let mut u = vec![Complex64::new(0.0, 0.0); r * r];
    for (i, ui) in u.chunks_exact_mut(r).enumerate() {
        for (c, z) in ui.iter_mut().enumerate() {
            *z = q[(c, i)].conj();
        }
    }
    let mut b = vec![Complex64::new(0.0, 0.0); r * t];
    for (bi, ui) in b.chunks_exact_mut(t).zip(u.chunks_exact(r)) {
        for (c, coef) in ui.iter().enumerate() {
            for (o, x) in bi.iter_mut().zip(row(c)) {
                *o += coef * x;
            }
        }
    }

    let mut norms: Vec<f64> = b.chunks_exact(t).map(norm_sq).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..r {
            for q in p + 1..r {
                rotated |= jacobi_rotate(&mut b, &mut u, &mut norms, (r, t), p, q);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = norms.iter().map(|n| n.sqrt()).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let zero_tol = norms[order[0]] * t as f64 * f64::EPSILON;
    let mut s = Vec::with_capacity(r);
    let mut v = Vec::with_capacity(r * t);
    let mut u_sorted = Vec::with_capacity(r * r);
    let mut null_rows = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        let si = norms[i];
        if si > zero_tol && si > 0.0 {
            let inv = 1.0 / si;
            v.extend(b[i * t..(i + 1) * t].iter().map(|z| z * inv));
        } else {
            v.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), t));
            null_rows.push(slot);
        }
        s.push(si);
        u_sorted.extend_from_slice(&u[i * r..(i + 1) * r]);
    }
    complete_orthonormal(&mut v, &null_rows, t);

    for (vi, ui) in v.chunks_exact_mut(t).zip(u_sorted.chunks_exact_mut(r)) {
        if let Some(first) = vi.iter().find(|z| z.norm() > 1e-12).copied() {
            let rot = (first / first.norm()).conj();
            for z in vi.iter_mut().chain(ui.iter_mut()) {
                *z *= rot;
            }
        }
    }

    Ok(RowSvd {
        rows: r,
        cols: t,
        u: u_sorted,
        s,
        v,
    })
}

/// Fills the listed (zeroed) rows of a row-major buffer with unit vectors
/// orthogonal to every other row, by Gram-Schmidt over the standard basis.
fn complete_orthonormal(rows: &mut [Complex64], empty: &[usize], t: usize) {
    let mut filled: Vec<bool> = (0..rows.len() / t).map(|i| !empty.contains(&i)).collect();
    let mut next_basis = 0;
    for &slot in empty {
        while next_basis < t {
            let mut cand = vec![Complex64::new(0.0, 0.0); t];
            cand[next_basis] = Complex64::new(1.0, 0.0);
            next_basis += 1;
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for (k, row) in rows.chunks_exact(t).enumerate() {
                    if !filled[k] {
                        continue;
                    }
                    let proj = row_dot(&cand, row);
                    for (c, x) in cand.iter_mut().zip(row) {
                        *c -= proj * x;
                    }
                }
            }
            let n = norm_sq(&cand).sqrt();
            if n > 0.5 {
                for (dst, z) in rows[slot * t..(slot + 1) * t].iter_mut().zip(cand) {
                    *dst = z / n;
                }
                filled[slot] = true;
                break;
            }
        }
    }
}

/// Frobenius norm.
pub fn fro_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Condition number of a Hermitian positive-definite matrix, from its
/// eigenvalues. Returns infinity when the smallest eigenvalue is not positive.
pub fn hermitian_condition(m: &CMatrix) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `M X = B` for Hermitian positive-definite `M`.
pub fn hpd_solve(m: CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let chol = m.cholesky().ok_or(Error::Conditioning(f64::INFINITY))?;
    Ok(chol.solve(b))
}
