//! Randomized low-rank approximation: two-pass RSVD, one-pass Nyström for
//! PSD matrices, and single-view RSVD.
//!
//! All three take a grid-distributed input and sketching operators whose
//! block count matches the grid.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::error::{Error, Result};
use crate::kernels::{cholesky_psd, pinv_apply, truncated_svd, tsqr, CholeskyOptions};
use crate::partition::{
    distribute, sketch_grid_right, sketch_grid_three, sketch_rowwise, transpose_multiply_grid,
    DistMatrix, Layout,
};
use crate::sketch::SketchOperator;

/// Largest dimension [`error_norm`] will densify.
pub const DENSE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    Spectral,
    /// Nuclear norm, the sum of singular values.
    Trace,
    Frobenius,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::Spectral => "spectral",
            NormKind::Trace => "trace",
            NormKind::Frobenius => "frobenius",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" | "2" => Ok(NormKind::Spectral),
            "trace" | "nuclear" | "*" => Ok(NormKind::Trace),
            "frobenius" | "fro" | "F" => Ok(NormKind::Frobenius),
            other => Err(Error::Parameter(format!("unknown norm {other:?}"))),
        }
    }
}

fn product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

fn scale_cols(m: &Mat<f64>, s: impl Fn(usize) -> f64) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s(j))
}

/// A matrix stored in factored form.
pub trait Factorization {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn rank(&self) -> usize;
    fn to_dense(&self) -> Mat<f64>;
}

/// `U diag(s) Vᵀ` with orthonormal `U`, `V` and `s` nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl LowRankSvd {
    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.s.len());
        Self {
            u: self.u.as_ref().subcols(0, k).to_owned(),
            s: self.s[..k].to_vec(),
            v: self.v.as_ref().subcols(0, k).to_owned(),
        }
    }
}

impl Factorization for LowRankSvd {
    fn nrows(&self) -> usize {
        self.u.nrows()
    }

    fn ncols(&self) -> usize {
        self.v.nrows()
    }

    fn rank(&self) -> usize {
        self.s.len()
    }

    fn to_dense(&self) -> Mat<f64> {
        product(
            scale_cols(&self.u, |j| self.s[j]).as_ref(),
            self.v.as_ref().transpose(),
        )
    }
}

/// `U diag(σ²) Uᵀ`, symmetric positive semidefinite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPsd {
    pub u: Mat<f64>,
    pub sigma: Vec<f64>,
}

impl LowRankPsd {
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.sigma.len());
        Self {
            u: self.u.as_ref().subcols(0, k).to_owned(),
            sigma: self.sigma[..k].to_vec(),
        }
    }

    /// `Σ σᵢ² ‖uᵢ‖²`, the trace of the represented matrix.
    pub fn trace(&self) -> f64 {
        self.sigma
            .iter()
            .enumerate()
            .map(|(j, s)| s * s * self.u.col(j).squared_norm_l2())
            .sum()
    }
}

impl Factorization for LowRankPsd {
    fn nrows(&self) -> usize {
        self.u.nrows()
    }

    fn ncols(&self) -> usize {
        self.u.nrows()
    }

    fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn to_dense(&self) -> Mat<f64> {
        let scaled = scale_cols(&self.u, |j| self.sigma[j] * self.sigma[j]);
        let mut out = product(scaled.as_ref(), self.u.as_ref().transpose());
        // Mirror the upper triangle so the dense form is exactly symmetric.
        for j in 0..out.ncols() {
            for i in j + 1..out.nrows() {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }
}

fn grid_p(a: &DistMatrix) -> Result<usize> {
    match a.layout() {
        Layout::Grid(p) => Ok(p),
        layout => Err(Error::Layout(format!(
            "expected a grid layout, got {layout:?}"
        ))),
    }
}

/// Two-pass randomized SVD of rank `k`.
///
/// Pass one forms `Y = AΩᵀ` and its orthonormal basis `Q`; pass two forms
/// `Z = QᵀA`. A QR factorization `Zᵀ = PR` and a small SVD of `Rᵀ` give
/// `(QŨ) Σ̃ (PṼ)ᵀ`.
pub fn rsvd(a: &DistMatrix, op: &SketchOperator, k: usize) -> Result<LowRankSvd> {
    let p = grid_p(a)?;
    let l = op.rows();
    if k > l {
        return Err(Error::Parameter(format!(
            "rank {k} exceeds sketch size {l}"
        )));
    }
    if l > a.nrows() || l > a.ncols() {
        return Err(Error::Dimension(format!(
            "sketch size {l} exceeds a dimension of the {}×{} input",
            a.nrows(),
            a.ncols()
        )));
    }
    let y = sketch_grid_right(a, op)?.gather();
    let q = tsqr(y.as_ref(), p)?.q;
    let z = transpose_multiply_grid(&distribute(q.as_ref(), Layout::RowBlocks(p))?, a)?;
    let pr = tsqr(z.as_ref().transpose(), p)?;
    let small = truncated_svd(pr.r.as_ref().transpose(), k)?;
    Ok(LowRankSvd {
        u: product(q.as_ref(), small.u.as_ref()),
        s: small.s,
        v: product(pr.q.as_ref(), small.v.as_ref()),
    })
}

/// Options for [`nystrom`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NystromOptions {
    pub cholesky: CholeskyOptions,
    /// Take `Û = Q̃Ũ` from the QR of `Z` instead of `ZṼΣ̃⁻¹`.
    pub orthonormal_basis: bool,
}

/// Relative asymmetry `‖A − Aᵀ‖_F / ‖A‖_F` of a square grid matrix.
fn grid_asymmetry(a: &DistMatrix) -> Result<f64> {
    let p = grid_p(a)?;
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let (mut diff, mut norm) = (0.0, 0.0);
    for i in 0..p {
        for j in 0..p {
            let (b, t) = (a.block(i, j), a.block(j, i));
            for c in 0..b.ncols() {
                for r in 0..b.nrows() {
                    let d = b[(r, c)] - t[(c, r)];
                    diff += d * d;
                    norm += b[(r, c)] * b[(r, c)];
                }
            }
        }
    }
    Ok(if norm > 0.0 {
        (diff / norm).sqrt()
    } else {
        diff.sqrt()
    })
}

/// One-pass randomized Nyström approximation of a symmetric PSD matrix.
///
/// `Y = AΩᵀ` is the only product with `A`; `ΩY` is sketched from `Y`. With
/// `CᵀC = ΩY`, `Z = YC⁻¹ = Q̃R` and `R ≈ ŨΣ̃Ṽᵀ`, the output is `ÛΣ̃²Ûᵀ` where
/// `Û = ZṼΣ̃⁻¹`. Singular values below `ε·σ̃₁` are dropped with a warning,
/// which lowers the returned rank.
pub fn nystrom(
    a: &DistMatrix,
    op: &SketchOperator,
    k: usize,
    opts: NystromOptions,
) -> Result<LowRankPsd> {
    let p = grid_p(a)?;
    let l = op.rows();
    if k > l {
        return Err(Error::Parameter(format!(
            "rank {k} exceeds sketch size {l}"
        )));
    }
    if l > a.nrows() {
        return Err(Error::Dimension(format!(
            "sketch size {l} exceeds dimension {}",
            a.nrows()
        )));
    }
    let asym = grid_asymmetry(a)?;
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let y_dist = sketch_grid_right(a, op)?;
    let core = sketch_rowwise(op, &y_dist)?;
    let factor = cholesky_psd(core.as_ref(), opts.cholesky)?;
    if !factor.is_cholesky() {
        log::info!("ΩAΩᵀ is numerically singular; using its eigendecomposition square root");
    }
    let y = y_dist.gather();
    let z = factor.right_solve(y.as_ref())?;
    let qr = tsqr(z.as_ref(), p)?;
    let small = truncated_svd(qr.r.as_ref(), k.min(z.ncols()))?;
    let floor = f64::EPSILON * small.s.first().copied().unwrap_or(0.0);
    let kept = small.s.iter().take_while(|&&s| s > floor).count();
    if kept < k {
        log::warn!("Nyström core has numerical rank {kept}; truncating from {k}");
    }
    let v = small.v.as_ref().subcols(0, kept);
    let u = if opts.orthonormal_basis {
        product(qr.q.as_ref(), small.u.as_ref().subcols(0, kept))
    } else {
        scale_cols(&product(z.as_ref(), v), |j| small.s[j].recip())
    };
    Ok(LowRankPsd {
        u,
        sigma: small.s[..kept].to_vec(),
    })
}

/// The four operators of single-view RSVD: `Ω` (`l × n`), `Γ` (`l × m`),
/// `Φ` (`s × m`) and `Ψ` (`s × n`).
#[derive(Debug, Clone, Copy)]
pub struct SingleViewOps<'a> {
    pub omega: &'a SketchOperator,
    pub gamma: &'a SketchOperator,
    pub phi: &'a SketchOperator,
    pub psi: &'a SketchOperator,
}

/// Single-view RSVD.
///
/// One sweep over `A` yields `X = AᵀΓᵀ`, `Y = AΩᵀ` and `AΨᵀ`, whence
/// `Z = ΦAΨᵀ`. With orthonormal bases `Q` of `Y` and `P` of `X`, the core
/// `C = (ΦQ)⁺ Z ((ΨP)⁺)ᵀ` is truncated to rank `k`, giving
/// `(QŨ) Σ̃ (PṼ)ᵀ`.
pub fn single_view(a: &DistMatrix, ops: SingleViewOps<'_>, k: usize) -> Result<LowRankSvd> {
    let p = grid_p(a)?;
    let l = ops.omega.rows();
    let s = ops.phi.rows();
    if ops.gamma.rows() != l || ops.psi.rows() != s {
        return Err(Error::Dimension(format!(
            "Ω and Γ need equal rows ({l} vs {}), Φ and Ψ too ({s} vs {})",
            ops.gamma.rows(),
            ops.psi.rows()
        )));
    }
    if s < l {
        return Err(Error::Parameter(format!(
            "core sketch size {s} is below range sketch size {l}"
        )));
    }
    if k > l {
        return Err(Error::Parameter(format!(
            "rank {k} exceeds sketch size {l}"
        )));
    }
    if l > a.nrows() || l > a.ncols() {
        return Err(Error::Dimension(format!(
            "sketch size {l} exceeds a dimension of the {}×{} input",
            a.nrows(),
            a.ncols()
        )));
    }
    let (x, y, w) = sketch_grid_three(a, ops.omega, ops.gamma, ops.psi)?;
    let z = sketch_rowwise(ops.phi, &w)?;
    let q = tsqr(y.gather().as_ref(), p)?.q;
    let pb = tsqr(x.gather().as_ref(), p)?.q;
    let phi_q = sketch_rowwise(ops.phi, &distribute(q.as_ref(), Layout::RowBlocks(p))?)?;
    let psi_p = sketch_rowwise(ops.psi, &distribute(pb.as_ref(), Layout::RowBlocks(p))?)?;
    let left = pinv_apply(phi_q.as_ref(), z.as_ref())?;
    let core = pinv_apply(psi_p.as_ref(), left.as_ref().transpose())?;
    let small = truncated_svd(core.as_ref().transpose(), k)?;
    Ok(LowRankSvd {
        u: product(q.as_ref(), small.u.as_ref()),
        s: small.s,
        v: product(pb.as_ref(), small.v.as_ref()),
    })
}

/// Exact `‖A − B‖_ξ` computed densely.
pub fn error_norm<F: Factorization + ?Sized>(
    a: MatRef<'_, f64>,
    b: &F,
    kind: NormKind,
) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "approximation is {}×{}, matrix is {}×{}",
            b.nrows(),
            b.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows().max(a.ncols()) > DENSE_LIMIT {
        return Err(Error::Size(format!(
            "{}×{} is too large to densify (limit {DENSE_LIMIT})",
            a.nrows(),
            a.ncols()
        )));
    }
    let diff = a - b.to_dense();
    dense_norm(diff.as_ref(), kind)
}

/// `‖M‖_ξ` of a dense matrix.
pub fn dense_norm(m: MatRef<'_, f64>, kind: NormKind) -> Result<f64> {
    if kind == NormKind::Frobenius {
        return Ok(m.norm_l2());
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let s = m
        .singular_values()
        .map_err(|e| Error::Factorization(format!("SVD did not converge: {e:?}")))?;
    Ok(match kind {
        NormKind::Spectral => s.iter().copied().fold(0.0, f64::max),
        _ => s.iter().sum(),
    })
}

/// Trace-norm error of a Nyström approximation without densifying:
/// `A − ÛΣ̃²Ûᵀ` is PSD, so its trace norm is `tr(A) − Σσ̃ᵢ²‖ûᵢ‖²`.
pub fn nystrom_trace_error(trace_a: f64, approx: &LowRankPsd) -> f64 {
    (trace_a - approx.trace()).max(0.0)
}

/// Trace of a square grid matrix.
pub fn grid_trace(a: &DistMatrix) -> Result<f64> {
    let p = grid_p(a)?;
    Ok((0..p)
        .map(|i| {
            let b = a.block(i, i);
            (0..b.nrows().min(b.ncols()))
                .map(|t| b[(t, t)])
                .sum::<f64>()
        })
        .sum())
}

const MAGIC: &[u8; 8] = b"BSRHTLR1";

/// A factorization read back from the binary container.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredFactorization {
    Svd(LowRankSvd),
    Psd(LowRankPsd),
}

fn write_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn write_mat(w: &mut impl Write, m: &Mat<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for &x in m.col(j).iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_vec(w: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<usize> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    usize::try_from(u64::from_le_bytes(buf))
        .map_err(|_| Error::Data("header value overflows".into()))
}

fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn read_mat(r: &mut impl Read, rows: usize, cols: usize) -> Result<Mat<f64>> {
    let data = read_f64s(r, rows * cols)?;
    Ok(Mat::from_fn(rows, cols, |i, j| data[j * rows + i]))
}

impl StoredFactorization {
    /// Layout: magic, then `kind` (0 = SVD, 1 = PSD), rows, cols and rank
    /// as little-endian `u64`, then `U`, the values and (SVD only) `V`,
    /// column-major little-endian `f64`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        match self {
            StoredFactorization::Svd(f) => {
                for v in [0, f.nrows(), f.ncols(), f.rank()] {
                    write_u64(&mut w, v)?;
                }
                write_mat(&mut w, &f.u)?;
                write_vec(&mut w, &f.s)?;
                write_mat(&mut w, &f.v)?;
            }
            StoredFactorization::Psd(f) => {
                for v in [1, f.nrows(), f.ncols(), f.rank()] {
                    write_u64(&mut w, v)?;
                }
                write_mat(&mut w, &f.u)?;
                write_vec(&mut w, &f.sigma)?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data("not a factorization file".into()));
        }
        let kind = read_u64(&mut r)?;
        let rows = read_u64(&mut r)?;
        let cols = read_u64(&mut r)?;
        let k = read_u64(&mut r)?;
        match kind {
            0 => {
                let u = read_mat(&mut r, rows, k)?;
                let s = read_f64s(&mut r, k)?;
                let v = read_mat(&mut r, cols, k)?;
                Ok(StoredFactorization::Svd(LowRankSvd { u, s, v }))
            }
            1 if rows == cols => {
                let u = read_mat(&mut r, rows, k)?;
                let sigma = read_f64s(&mut r, k)?;
                Ok(StoredFactorization::Psd(LowRankPsd { u, sigma }))
            }
            _ => Err(Error::Data(format!(
                "unknown factorization header kind {kind}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{child_rng, Stream};
    use crate::sketch::{make_operator, SketchKind};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = child_rng(seed, Stream::Data, 3);
        Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn diag(values: &[f64]) -> Mat<f64> {
        Mat::from_fn(values.len(), values.len(), |i, j| {
            if i == j {
                values[i]
            } else {
                0.0
            }
        })
    }

    fn full_srht(n: usize, p: usize, seed: u64) -> SketchOperator {
        make_operator(
            SketchKind::Srht {
                with_replacement: false,
            },
            n,
            n,
            p,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn norm_kinds_on_diagonal() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let best = truncated_svd(a.as_ref(), 1).unwrap();
        let b = LowRankSvd {
            u: best.u,
            s: best.s,
            v: best.v,
        };
        assert!((error_norm(a.as_ref(), &b, NormKind::Spectral).unwrap() - 2.0).abs() < 1e-12);
        assert!((error_norm(a.as_ref(), &b, NormKind::Trace).unwrap() - 3.0).abs() < 1e-12);
        assert!(
            (error_norm(a.as_ref(), &b, NormKind::Frobenius).unwrap() - 5f64.sqrt()).abs() < 1e-12
        );
        let exact = truncated_svd(a.as_ref(), 3).unwrap();
        let exact = LowRankSvd {
            u: exact.u,
            s: exact.s,
            v: exact.v,
        };
        for kind in [NormKind::Spectral, NormKind::Trace, NormKind::Frobenius] {
            assert!(error_norm(a.as_ref(), &exact, kind).unwrap() < 1e-12);
            assert_eq!(kind.to_string().parse::<NormKind>().unwrap(), kind);
        }
    }

    #[test]
    fn rsvd_with_full_transform_is_optimal() {
        let a_dense = gaussian(64, 64, 1);
        let a = distribute(a_dense.as_ref(), Layout::Grid(2)).unwrap();
        let out = rsvd(&a, &full_srht(64, 2, 3), 5).unwrap();
        let best = truncated_svd(a_dense.as_ref(), 5).unwrap();
        let best = LowRankSvd {
            u: best.u,
            s: best.s,
            v: best.v,
        };
        let e = error_norm(a_dense.as_ref(), &out, NormKind::Frobenius).unwrap();
        let e_best = error_norm(a_dense.as_ref(), &best, NormKind::Frobenius).unwrap();
        assert!((e - e_best).abs() <= 1e-10 * a_dense.norm_l2());
    }

    #[test]
    fn rsvd_recovers_exact_rank() {
        let a_dense = gaussian(90, 4, 2) * gaussian(4, 70, 3);
        let a = distribute(a_dense.as_ref(), Layout::Grid(2)).unwrap();
        let op = make_operator(SketchKind::BlockSrht, 10, 70, 2, 4).unwrap();
        let out = rsvd(&a, &op, 4).unwrap();
        assert_eq!(out.rank(), 4);
        assert!(
            error_norm(a_dense.as_ref(), &out, NormKind::Frobenius).unwrap()
                <= 1e-8 * a_dense.norm_l2()
        );
        let u_defect = (out.u.transpose() * &out.u - Mat::<f64>::identity(4, 4)).norm_l2();
        assert!(u_defect <= 1e-10);
        assert!(matches!(rsvd(&a, &op, 11), Err(Error::Parameter(_))));
    }

    #[test]
    fn nystrom_of_identity() {
        let a = distribute(Mat::<f64>::identity(32, 32).as_ref(), Layout::Grid(2)).unwrap();
        let out = nystrom(&a, &full_srht(32, 2, 1), 5, NystromOptions::default()).unwrap();
        let err = error_norm(Mat::<f64>::identity(32, 32).as_ref(), &out, NormKind::Trace).unwrap();
        assert!((err - 27.0).abs() < 1e-10);
        assert!((nystrom_trace_error(32.0, &out) - 27.0).abs() < 1e-10);
    }

    #[test]
    fn nystrom_exact_rank_and_symmetry() {
        let g = gaussian(48, 3, 5);
        let a_dense = &g * g.transpose();
        let a = distribute(a_dense.as_ref(), Layout::Grid(2)).unwrap();
        let op = make_operator(SketchKind::Gaussian, 8, 48, 2, 6).unwrap();
        for orthonormal_basis in [false, true] {
            let opts = NystromOptions {
                orthonormal_basis,
                ..Default::default()
            };
            let out = nystrom(&a, &op, 3, opts).unwrap();
            let dense = out.to_dense();
            assert_eq!(dense, dense.transpose().to_owned());
            let err = error_norm(a_dense.as_ref(), &out, NormKind::Trace).unwrap();
            assert!(err <= 1e-8 * grid_trace(&a).unwrap(), "{err}");
        }
    }

    #[test]
    fn nystrom_rejects_asymmetric() {
        let a = distribute(gaussian(16, 16, 7).as_ref(), Layout::Grid(1)).unwrap();
        let op = make_operator(SketchKind::Gaussian, 4, 16, 1, 0).unwrap();
        assert!(matches!(
            nystrom(&a, &op, 2, NystromOptions::default()),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn single_view_full_transforms() {
        let a_dense = gaussian(32, 32, 8);
        let a = distribute(a_dense.as_ref(), Layout::Grid(2)).unwrap();
        let ops = [
            full_srht(32, 2, 1),
            full_srht(32, 2, 2),
            full_srht(32, 2, 3),
            full_srht(32, 2, 4),
        ];
        let out = single_view(
            &a,
            SingleViewOps {
                omega: &ops[0],
                gamma: &ops[1],
                phi: &ops[2],
                psi: &ops[3],
            },
            6,
        )
        .unwrap();
        let best = truncated_svd(a_dense.as_ref(), 6).unwrap();
        let best = LowRankSvd {
            u: best.u,
            s: best.s,
            v: best.v,
        };
        assert!((out.to_dense() - best.to_dense()).norm_l2() <= 1e-8 * a_dense.norm_l2());
    }

    #[test]
    fn single_view_exact_rank() {
        let a_dense = gaussian(40, 3, 9) * gaussian(3, 56, 10);
        let a = distribute(a_dense.as_ref(), Layout::Grid(2)).unwrap();
        let omega = make_operator(SketchKind::BlockSrht, 6, 56, 2, 1).unwrap();
        let gamma = make_operator(SketchKind::BlockSrht, 6, 40, 2, 2).unwrap();
        let phi = make_operator(SketchKind::Gaussian, 13, 40, 2, 3).unwrap();
        let psi = make_operator(SketchKind::Gaussian, 13, 56, 2, 4).unwrap();
        let ops = SingleViewOps {
            omega: &omega,
            gamma: &gamma,
            phi: &phi,
            psi: &psi,
        };
        let out = single_view(&a, ops, 3).unwrap();
        assert!(out.rank() <= 3);
        assert!(
            error_norm(a_dense.as_ref(), &out, NormKind::Frobenius).unwrap()
                <= 1e-6 * a_dense.norm_l2()
        );
        let bad = SingleViewOps {
            phi: &gamma,
            psi: &omega,
            omega: &phi,
            gamma: &psi,
        };
        assert!(single_view(&a, bad, 3).is_err());
    }

    #[test]
    fn container_round_trip() {
        let svd = LowRankSvd {
            u: gaussian(5, 2, 1),
            s: vec![2.0, 1.0],
            v: gaussian(4, 2, 2),
        };
        let psd = LowRankPsd {
            u: gaussian(6, 3, 3),
            sigma: vec![3.0, 2.0, 0.5],
        };
        for stored in [StoredFactorization::Svd(svd), StoredFactorization::Psd(psd)] {
            let mut buf = Vec::new();
            stored.write_to(&mut buf).unwrap();
            assert_eq!(
                StoredFactorization::read_from(buf.as_slice()).unwrap(),
                stored
            );
        }
        assert!(StoredFactorization::read_from(&b"nonsense-header"[..]).is_err());
    }

    #[test]
    fn error_norm_size_guard() {
        let a = Mat::<f64>::zeros(DENSE_LIMIT + 1, 1);
        let f = LowRankSvd {
            u: Mat::zeros(DENSE_LIMIT + 1, 0),
            s: vec![],
            v: Mat::zeros(1, 0),
        };
        assert!(matches!(
            error_norm(a.as_ref(), &f, NormKind::Frobenius),
            Err(Error::Size(_))
        ));
    }
}
