//! Small dense linear-algebra building blocks.
//!
//! Everything here works on matrices with at most `l` columns (or `l × l`
//! squares); the large dimensions only ever appear as the row count of a
//! tall-skinny input.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};
use crate::partition::run_workers;

/// Thin QR factors: `Q` is `m × l` with orthonormal columns and `R` is
/// `l × l` upper triangular with a nonnegative diagonal.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: Mat<f64>,
    pub r: Mat<f64>,
}

fn householder_qr(y: MatRef<'_, f64>) -> (Mat<f64>, Mat<f64>) {
    let qr = y.qr();
    (qr.compute_thin_Q(), qr.thin_R().to_owned())
}

fn product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// Combines panel factors `[0, n)` pairwise; returns the per-panel `Q`
/// factors already multiplied through the tree, and the root `R`.
fn combine(mut leaves: Vec<(Mat<f64>, Mat<f64>)>) -> (Vec<Mat<f64>>, Mat<f64>) {
    if leaves.len() == 1 {
        let (q, r) = leaves.pop().expect("one leaf");
        return (vec![q], r);
    }
    let right = leaves.split_off(leaves.len().div_ceil(2));
    let (mut qs_left, r_left) = combine(leaves);
    let (qs_right, r_right) = combine(right);
    let l = r_left.ncols();
    let mut stacked = Mat::<f64>::zeros(2 * l, l);
    stacked
        .as_mut()
        .subrows_mut(0, l)
        .copy_from(r_left.as_ref());
    stacked
        .as_mut()
        .subrows_mut(l, l)
        .copy_from(r_right.as_ref());
    let (q_node, r) = householder_qr(stacked.as_ref());
    for q in qs_left.iter_mut() {
        *q = product(q.as_ref(), q_node.as_ref().subrows(0, l));
    }
    qs_left.extend(
        qs_right
            .iter()
            .map(|q| product(q.as_ref(), q_node.as_ref().subrows(l, l))),
    );
    (qs_left, r)
}

/// Tall-skinny QR over row panels.
///
/// The rows of `y` are cut into `min(panels, m / l)` contiguous panels (at
/// least one), each factored locally on its own worker. The `R` factors are
/// merged pairwise in a binary tree and `Q` is rebuilt from the tree. Signs
/// are normalized so that `R` has a nonnegative diagonal.
pub fn tsqr(y: MatRef<'_, f64>, panels: usize) -> Result<QrFactors> {
    let (m, l) = (y.nrows(), y.ncols());
    if m < l {
        return Err(Error::Dimension(format!(
            "tsqr needs a tall matrix, got {m}×{l}"
        )));
    }
    if l == 0 {
        return Ok(QrFactors {
            q: Mat::zeros(m, 0),
            r: Mat::zeros(0, 0),
        });
    }
    let count = panels.min(m / l).max(1);
    let base = m / count;
    let extra = m % count;
    let starts: Vec<usize> = (0..=count).map(|i| i * base + i.min(extra)).collect();
    let leaves = run_workers(count, count, |i| {
        Ok(householder_qr(
            y.subrows(starts[i], starts[i + 1] - starts[i]),
        ))
    })?;
    let (qs, mut r) = combine(leaves);
    let mut q = Mat::<f64>::zeros(m, l);
    for (i, qi) in qs.iter().enumerate() {
        q.as_mut()
            .subrows_mut(starts[i], qi.nrows())
            .copy_from(qi.as_ref());
    }
    for j in 0..l {
        if r[(j, j)] < 0.0 {
            q.col_mut(j).iter_mut().for_each(|x| *x = -*x);
            r.row_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(QrFactors { q, r })
}

/// Rank-`k` SVD factors, singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl TruncatedSvd {
    /// `U diag(s) Vᵀ`.
    pub fn to_dense(&self) -> Mat<f64> {
        let scaled = Mat::from_fn(self.u.nrows(), self.s.len(), |i, j| {
            self.u[(i, j)] * self.s[j]
        });
        product(scaled.as_ref(), self.v.as_ref().transpose())
    }
}

/// Best rank-`k` approximation of a small matrix.
///
/// Columns are ordered by nonincreasing singular value, ties kept in index
/// order, and each left vector has its largest-magnitude entry positive.
pub fn truncated_svd(m: MatRef<'_, f64>, k: usize) -> Result<TruncatedSvd> {
    let full = m.nrows().min(m.ncols());
    if k > full {
        return Err(Error::Parameter(format!(
            "rank {k} exceeds min dimension {full} of a {}×{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if full == 0 || k == 0 {
        return Ok(TruncatedSvd {
            u: Mat::zeros(m.nrows(), k),
            s: vec![0.0; k],
            v: Mat::zeros(m.ncols(), k),
        });
    }
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Factorization(format!("SVD did not converge: {e:?}")))?;
    let sv = svd.S().column_vector();
    let mut order: Vec<usize> = (0..full).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut u = Mat::<f64>::zeros(m.nrows(), k);
    let mut v = Mat::<f64>::zeros(m.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (out, &src) in order.iter().take(k).enumerate() {
        let uc = svd.U().col(src);
        let mut pivot = 0;
        for i in 1..uc.nrows() {
            if uc[i].abs() > uc[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if uc[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m.nrows() {
            u[(i, out)] = sign * uc[i];
        }
        for i in 0..m.ncols() {
            v[(i, out)] = sign * svd.V()[(i, src)];
        }
        s.push(sv[src].max(0.0));
    }
    Ok(TruncatedSvd { u, s, v })
}

/// Result of [`cholesky_psd`].
#[derive(Debug, Clone)]
pub enum PsdFactor {
    /// Upper triangular `C` with `CᵀC = S`.
    Cholesky(Mat<f64>),
    /// `S = U diag(λ) Uᵀ` restricted to its numerically positive spectrum.
    SqrtPinv {
        basis: Mat<f64>,
        eigenvalues: Vec<f64>,
    },
}

impl PsdFactor {
    pub fn is_cholesky(&self) -> bool {
        matches!(self, PsdFactor::Cholesky(_))
    }

    /// A square root `F` with `FᵀF = S` (up to the dropped null space):
    /// `C` itself, or `diag(√λ) Uᵀ` on the fallback path.
    pub fn factor(&self) -> Mat<f64> {
        match self {
            PsdFactor::Cholesky(c) => c.clone(),
            PsdFactor::SqrtPinv { basis, eigenvalues } => {
                Mat::from_fn(eigenvalues.len(), basis.nrows(), |i, j| {
                    eigenvalues[i].sqrt() * basis[(j, i)]
                })
            }
        }
    }

    /// `X` with `X F = B`: `B C⁻¹`, or `B U diag(λ^{-1/2})` on the fallback
    /// path, in which case `X F` is `B` projected onto `range(S)`.
    pub fn right_solve(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match self {
            PsdFactor::Cholesky(c) => tri_solve(c.as_ref(), b),
            PsdFactor::SqrtPinv { basis, eigenvalues } => {
                let mut x = product(b, basis.as_ref());
                for (j, &lambda) in eigenvalues.iter().enumerate() {
                    let scale = lambda.sqrt().recip();
                    x.col_mut(j).iter_mut().for_each(|e| *e *= scale);
                }
                Ok(x)
            }
        }
    }

    /// `S⁺ x` (`S⁻¹ x` on the Cholesky path).
    pub fn pinv_apply(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match self {
            PsdFactor::Cholesky(c) => {
                let n = c.nrows();
                let c_inv = tri_solve(c.as_ref(), Mat::<f64>::identity(n, n).as_ref())?;
                let t = product(c_inv.as_ref().transpose(), x);
                Ok(product(c_inv.as_ref(), t.as_ref()))
            }
            PsdFactor::SqrtPinv { basis, eigenvalues } => {
                let mut t = product(basis.as_ref().transpose(), x);
                for (i, &lambda) in eigenvalues.iter().enumerate() {
                    t.row_mut(i).iter_mut().for_each(|e| *e /= lambda);
                }
                Ok(product(basis.as_ref(), t.as_ref()))
            }
        }
    }
}

/// Options for [`cholesky_psd`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CholeskyOptions {
    /// Add `ν I` with `ν = trace(S)·ε` before factoring.
    pub shift: bool,
}

fn symmetrized(s: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {n}×{}",
            s.ncols()
        )));
    }
    let scale = s.norm_l2();
    let asym = (s - s.transpose()).norm_l2();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(if scale > 0.0 {
            asym / scale
        } else {
            asym
        }));
    }
    Ok(Mat::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)])))
}

fn upper_cholesky(s: &Mat<f64>) -> Option<Mat<f64>> {
    let n = s.nrows();
    let max_diag = (0..n).map(|i| s[(i, i)].abs()).fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * max_diag;
    let mut c = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= c[(k, j)] * c[(k, j)];
        }
        if !(d > tol) {
            return None;
        }
        let cjj = d.sqrt();
        c[(j, j)] = cjj;
        for i in j + 1..n {
            let mut v = s[(j, i)];
            for k in 0..j {
                v -= c[(k, j)] * c[(k, i)];
            }
            c[(j, i)] = v / cjj;
        }
    }
    Some(c)
}

/// Cholesky factor of a symmetric PSD matrix, falling back to an
/// eigendecomposition square root when a pivot is not above
/// `n·ε·max|diag|`.
pub fn cholesky_psd(s: MatRef<'_, f64>, opts: CholeskyOptions) -> Result<PsdFactor> {
    let mut sym = symmetrized(s)?;
    let n = sym.nrows();
    if opts.shift {
        let nu = (0..n).map(|i| sym[(i, i)]).sum::<f64>() * f64::EPSILON;
        for i in 0..n {
            sym[(i, i)] += nu;
        }
    }
    if let Some(c) = upper_cholesky(&sym) {
        return Ok(PsdFactor::Cholesky(c));
    }
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("eigendecomposition did not converge: {e:?}")))?;
    let lambda = evd.S().column_vector();
    let max = (0..n).map(|i| lambda[i].abs()).fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * max;
    // Eigenvalues come nondecreasing; keep the positive ones, largest first.
    let keep: Vec<usize> = (0..n).rev().filter(|&i| lambda[i] > tol).collect();
    let mut basis = Mat::<f64>::zeros(n, keep.len());
    for (out, &src) in keep.iter().enumerate() {
        basis.col_mut(out).copy_from(evd.U().col(src));
    }
    let eigenvalues = keep.iter().map(|&i| lambda[i]).collect();
    Ok(PsdFactor::SqrtPinv { basis, eigenvalues })
}

/// `X` with `X C = B` for upper triangular `C`, by column-wise substitution.
pub fn tri_solve(c: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = c.nrows();
    if c.ncols() != n || b.ncols() != n {
        return Err(Error::Dimension(format!(
            "cannot solve X·C = B with C {}×{} and B {}×{}",
            c.nrows(),
            c.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let max_diag = (0..n).map(|i| c[(i, i)].abs()).fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * max_diag;
    let mut x = b.to_owned();
    for j in 0..n {
        let cjj = c[(j, j)];
        if !(cjj.abs() > tol) || max_diag == 0.0 {
            return Err(Error::Singular(j));
        }
        for k in 0..j {
            let ckj = c[(k, j)];
            if ckj != 0.0 {
                for i in 0..x.nrows() {
                    let v = x[(i, k)];
                    x[(i, j)] -= v * ckj;
                }
            }
        }
        x.col_mut(j).iter_mut().for_each(|e| *e /= cjj);
    }
    Ok(x)
}

/// Minimum-norm least-squares solution `M⁺ B`, from a thin SVD of `M` with
/// singular values below `max(rows, cols)·ε·σ₁` treated as zero.
pub fn pinv_apply(m: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if b.nrows() != m.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, matrix has {}",
            b.nrows(),
            m.nrows()
        )));
    }
    let full = m.nrows().min(m.ncols());
    let mut out = Mat::<f64>::zeros(m.ncols(), b.ncols());
    if full == 0 {
        return Ok(out);
    }
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Factorization(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let s_max = (0..full).map(|i| s[i]).fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * s_max;
    let keep: Vec<usize> = (0..full).filter(|&i| s[i] > tol && s[i] > 0.0).collect();
    if keep.is_empty() {
        return Ok(out);
    }
    let mut ut_b = Mat::<f64>::zeros(keep.len(), b.ncols());
    let mut v = Mat::<f64>::zeros(m.ncols(), keep.len());
    for (row, &i) in keep.iter().enumerate() {
        let mut t = product(svd.U().col(i).as_mat().transpose(), b);
        t.row_mut(0).iter_mut().for_each(|e| *e /= s[i]);
        ut_b.row_mut(row).copy_from(t.row(0));
        v.col_mut(row).copy_from(svd.V().col(i));
    }
    matmul(
        out.as_mut(),
        Accum::Replace,
        v.as_ref(),
        ut_b.as_ref(),
        1.0,
        Par::Seq,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{child_rng, Stream};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = child_rng(seed, Stream::Data, 2);
        Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn orthonormality_defect(q: &Mat<f64>) -> f64 {
        let l = q.ncols();
        (q.transpose() * q - Mat::<f64>::identity(l, l)).norm_l2()
    }

    #[test]
    fn tsqr_reconstructs() {
        let y = gaussian(512, 16, 1);
        for p in [1, 2, 3, 4, 7] {
            let f = tsqr(y.as_ref(), p).unwrap();
            assert!((&f.q * &f.r - &y).norm_l2() <= 1e-12 * y.norm_l2(), "p={p}");
            assert!(orthonormality_defect(&f.q) <= 1e-10 * 4.0);
            for j in 0..16 {
                assert!(f.r[(j, j)] >= 0.0);
                for i in j + 1..16 {
                    assert_eq!(f.r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn tsqr_of_orthonormal_is_identity() {
        let q0 = tsqr(gaussian(100, 5, 2).as_ref(), 1).unwrap().q;
        let f = tsqr(q0.as_ref(), 4).unwrap();
        assert!((&f.r - Mat::<f64>::identity(5, 5)).norm_l2() <= 1e-10);
    }

    #[test]
    fn tsqr_needs_tall_input() {
        assert!(matches!(
            tsqr(gaussian(3, 5, 0).as_ref(), 1),
            Err(Error::Dimension(_))
        ));
        let square = gaussian(6, 6, 3);
        let f = tsqr(square.as_ref(), 4).unwrap();
        assert!((&f.q * &f.r - &square).norm_l2() <= 1e-12 * square.norm_l2());
    }

    #[test]
    fn svd_diagonal() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { 3.0 - i as f64 } else { 0.0 });
        let t = truncated_svd(d.as_ref(), 2).unwrap();
        assert!((t.s[0] - 3.0).abs() < 1e-14 && (t.s[1] - 2.0).abs() < 1e-14);
        assert!(((&d - t.to_dense()).norm_l2() - 1.0).abs() < 1e-12);
        assert!(t.u[(0, 0)] > 0.0 && t.u[(1, 1)] > 0.0);
    }

    #[test]
    fn svd_full_rank_is_exact() {
        let m = gaussian(9, 6, 4);
        let t = truncated_svd(m.as_ref(), 6).unwrap();
        assert!((&m - t.to_dense()).norm_l2() <= 1e-12 * m.norm_l2());
        assert!(t.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(matches!(
            truncated_svd(m.as_ref(), 7),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn cholesky_identity_and_gram() {
        let c = cholesky_psd(
            Mat::<f64>::identity(4, 4).as_ref(),
            CholeskyOptions::default(),
        )
        .unwrap();
        assert!(c.is_cholesky());
        assert_eq!(c.factor(), Mat::<f64>::identity(4, 4));
        let g = gaussian(30, 8, 5);
        let s = g.transpose() * &g;
        let f = cholesky_psd(s.as_ref(), CholeskyOptions::default()).unwrap();
        let c = f.factor();
        assert!((c.transpose() * &c - &s).norm_l2() <= 1e-10 * s.norm_l2());
        let shifted = cholesky_psd(s.as_ref(), CholeskyOptions { shift: true }).unwrap();
        assert!(shifted.is_cholesky());
    }

    #[test]
    fn cholesky_falls_back_on_singular() {
        let s = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        let f = cholesky_psd(s.as_ref(), CholeskyOptions::default()).unwrap();
        assert!(!f.is_cholesky());
        let x = Mat::from_fn(2, 1, |i, _| [3.0, 5.0][i]);
        let y = f.pinv_apply(x.as_ref()).unwrap();
        assert!((y[(0, 0)] - 3.0).abs() < 1e-14 && y[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn fallback_solve_projects_onto_range() {
        let g = gaussian(10, 3, 6);
        let s = &g * g.transpose();
        let f = cholesky_psd(s.as_ref(), CholeskyOptions::default()).unwrap();
        assert!(!f.is_cholesky());
        let b = gaussian(7, 10, 7);
        let x = f.right_solve(b.as_ref()).unwrap();
        let q = tsqr(g.as_ref(), 1).unwrap().q;
        let projected = &b * &q * q.transpose();
        assert!((x * f.factor() - &projected).norm_l2() <= 1e-8 * projected.norm_l2());
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let s = Mat::from_fn(2, 2, |i, j| if i < j { 1.0 } else { 2.0 });
        assert!(matches!(
            cholesky_psd(s.as_ref(), CholeskyOptions::default()),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn tri_solve_cases() {
        let b = gaussian(50, 8, 8);
        assert_eq!(
            tri_solve(Mat::<f64>::identity(8, 8).as_ref(), b.as_ref()).unwrap(),
            b
        );
        let two = Mat::from_fn(8, 8, |i, j| if i == j { 2.0 } else { 0.0 });
        assert_eq!(
            tri_solve(two.as_ref(), b.as_ref()).unwrap(),
            Mat::from_fn(50, 8, |i, j| b[(i, j)] / 2.0)
        );
        let c = Mat::from_fn(8, 8, |i, j| {
            if i == j {
                4.0 + i as f64
            } else if i < j {
                ((i * 8 + j) % 5) as f64 * 0.3 - 0.6
            } else {
                0.0
            }
        });
        let x = tri_solve(c.as_ref(), b.as_ref()).unwrap();
        assert!((x * &c - &b).norm_l2() <= 1e-10 * b.norm_l2());
        let mut singular = c.clone();
        singular[(3, 3)] = 0.0;
        assert!(matches!(
            tri_solve(singular.as_ref(), b.as_ref()),
            Err(Error::Singular(3))
        ));
    }

    #[test]
    fn pinv_cases() {
        let q = tsqr(gaussian(40, 10, 9).as_ref(), 1).unwrap().q;
        let b = gaussian(40, 3, 10);
        let x = pinv_apply(q.as_ref(), b.as_ref()).unwrap();
        assert!((x - q.transpose() * &b).norm_l2() <= 1e-12 * b.norm_l2());
        let zero =
            pinv_apply(Mat::<f64>::zeros(4, 3).as_ref(), gaussian(4, 2, 1).as_ref()).unwrap();
        assert_eq!(zero, Mat::<f64>::zeros(3, 2));
        let m = gaussian(40, 10, 11);
        let x0 = gaussian(10, 3, 12);
        let x = pinv_apply(m.as_ref(), (&m * &x0).as_ref()).unwrap();
        assert!((x - &x0).norm_l2() <= 1e-10 * x0.norm_l2());
    }
}
