//! Sketching operators: Gaussian, Rademacher, SRHT and block SRHT.
//!
//! An operator `Ω` is an `l × n` random matrix that is never stored densely
//! (except for small diagnostic assembly). The ambient dimension is padded to
//! `p · r` where `r` is a power of two, and the padded columns are split into
//! `p` consecutive blocks of length `r`. Each block can be applied to the
//! matching rows of an input on its own:
//!
//! ```text
//! Ω V = Σ_i Ω⁽ⁱ⁾ V⁽ⁱ⁾,    Ω⁽ⁱ⁾ = √(r/l) · D̃⁽ⁱ⁾ R H D⁽ⁱ⁾   (block SRHT)
//! ```
//!
//! All randomness is derived from the master seed with [`crate::rng`], so an
//! operator is fully reproducible from `(kind, l, n, p, seed)`.

use std::fmt;
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::prelude::*;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hadamard::{fwht_columns_inplace, HadamardSize};
use crate::rng::{child_rng, Stream};

/// Default number of input columns processed at once by the Hadamard kernels.
pub const DEFAULT_PANEL: usize = 20;

/// Columns of a Gaussian/Rademacher operator generated per dense panel.
const DENSE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchKind {
    /// i.i.d. `N(0, 1/l)` entries.
    Gaussian,
    /// i.i.d. `±1/√l` entries.
    Rademacher,
    /// `√(n/l) R H D` on the padded dimension.
    Srht { with_replacement: bool },
    /// `[Ω⁽¹⁾ … Ω⁽ᵖ⁾]` with a shared sampling matrix, always with replacement.
    BlockSrht,
}

impl SketchKind {
    pub fn is_hadamard(self) -> bool {
        matches!(self, Self::Srht { .. } | Self::BlockSrht)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::Srht {
                with_replacement: false,
            } => "srht",
            Self::Srht {
                with_replacement: true,
            } => "srht-wr",
            Self::BlockSrht => "bsrht",
        }
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "srht" => Ok(Self::Srht {
                with_replacement: false,
            }),
            "srht-wr" => Ok(Self::Srht {
                with_replacement: true,
            }),
            "bsrht" | "block-srht" | "blocksrht" => Ok(Self::BlockSrht),
            other => Err(Error::Parameter(format!("unknown sketch kind `{other}`"))),
        }
    }
}

/// Sampling and sign data of the Hadamard-family operators.
#[derive(Debug, Clone, PartialEq)]
struct HadamardParts {
    /// Sampled row of the padded transform, one per output row.
    sample: Vec<usize>,
    /// Row of the length-`r` local transform read by each output row.
    local_index: Vec<usize>,
    /// `D`, concatenated over blocks (length `p · r`).
    right_signs: Vec<f64>,
    /// `D̃⁽ⁱ⁾`, concatenated over blocks (length `p · l`).
    left_signs: Vec<f64>,
}

/// A sketching operator, fully determined by `(kind, l, n, p, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    kind: SketchKind,
    rows: usize,
    dim: usize,
    blocks: usize,
    block_len: HadamardSize,
    seed: u64,
    panel: usize,
    hadamard: Option<HadamardParts>,
}

fn random_sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn sign_vector(seed: u64, stream: Stream, index: u64, len: usize) -> Vec<f64> {
    let mut rng = child_rng(seed, stream, index);
    (0..len).map(|_| random_sign(&mut rng)).collect()
}

/// Block length used for `n` columns split over `p` blocks.
pub fn block_length(n: usize, p: usize) -> HadamardSize {
    HadamardSize::covering(n.div_ceil(p.max(1)))
}

/// Builds a sketching operator.
///
/// The padded dimension is `p · r` with `r` the next power of two of
/// `⌈n/p⌉`. For the SRHT `p` only selects how the (monolithic) operator is
/// split for distributed application and must be a power of two.
pub fn make_operator(
    kind: SketchKind,
    l: usize,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<SketchOperator> {
    if l == 0 || n == 0 || p == 0 {
        return Err(Error::Parameter(format!(
            "l, n and p must be positive (got l={l}, n={n}, p={p})"
        )));
    }
    if matches!(kind, SketchKind::Srht { .. }) && !p.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "SRHT can only be split into a power-of-two number of blocks (got p={p})"
        )));
    }
    let r = block_length(n, p);
    let padded = p * r.get();

    let hadamard = match kind {
        SketchKind::Gaussian | SketchKind::Rademacher => None,
        SketchKind::Srht { with_replacement } => {
            let mut rng = child_rng(seed, Stream::Sampling, 0);
            let sample: Vec<usize> = if with_replacement {
                (0..l).map(|_| rng.random_range(0..padded)).collect()
            } else {
                if l > padded {
                    return Err(Error::Parameter(format!(
                        "cannot sample {l} distinct rows out of {padded}"
                    )));
                }
                index::sample(&mut rng, padded, l).into_vec()
            };
            // H_{p·r} = H_p ⊗ H_r: the block factor of sampled row s for
            // block i is (-1)^popcount((s / r) & i).
            let local_index = sample.iter().map(|&s| s % r.get()).collect();
            let mut left_signs = Vec::with_capacity(p * l);
            for i in 0..p {
                left_signs.extend(sample.iter().map(|&s| {
                    if ((s / r.get()) & i).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }));
            }
            Some(HadamardParts {
                local_index,
                sample,
                right_signs: sign_vector(seed, Stream::RightSigns, 0, padded),
                left_signs,
            })
        }
        SketchKind::BlockSrht => {
            let mut rng = child_rng(seed, Stream::Sampling, 0);
            let sample: Vec<usize> = (0..l).map(|_| rng.random_range(0..r.get())).collect();
            let mut right_signs = Vec::with_capacity(padded);
            let mut left_signs = Vec::with_capacity(p * l);
            for i in 0..p {
                right_signs.extend(sign_vector(seed, Stream::RightSigns, i as u64, r.get()));
                left_signs.extend(sign_vector(seed, Stream::LeftSigns, i as u64, l));
            }
            Some(HadamardParts {
                local_index: sample.clone(),
                sample,
                right_signs,
                left_signs,
            })
        }
    };

    Ok(SketchOperator {
        kind,
        rows: l,
        dim: n,
        blocks: p,
        block_len: r,
        seed,
        panel: DEFAULT_PANEL,
        hadamard,
    })
}

impl SketchOperator {
    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    /// Number of sketch rows `l`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Ambient (unpadded) dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of column blocks `p`.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Block length `r` (a power of two).
    pub fn block_len(&self) -> usize {
        self.block_len.get()
    }

    /// `p · r`.
    pub fn padded_dim(&self) -> usize {
        self.blocks * self.block_len.get()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn panel_width(&self) -> usize {
        self.panel
    }

    /// Sets the number of input columns transformed per panel.
    pub fn with_panel_width(mut self, width: usize) -> Self {
        self.panel = width.max(1);
        self
    }

    /// Sampled rows, in `[0, r)` for block SRHT and `[0, p·r)` for SRHT.
    pub fn sample_indices(&self) -> Option<&[usize]> {
        self.hadamard.as_ref().map(|h| h.sample.as_slice())
    }

    /// The diagonal of `D⁽ⁱ⁾`.
    pub fn right_signs(&self, block: usize) -> Option<&[f64]> {
        let r = self.block_len();
        self.hadamard
            .as_ref()
            .filter(|_| block < self.blocks)
            .map(|h| &h.right_signs[block * r..(block + 1) * r])
    }

    /// The diagonal of `D̃⁽ⁱ⁾`. For the SRHT these are the deterministic
    /// signs contributed by the `H_p` Kronecker factor.
    pub fn left_signs(&self, block: usize) -> Option<&[f64]> {
        let l = self.rows;
        self.hadamard
            .as_ref()
            .filter(|_| block < self.blocks)
            .map(|h| &h.left_signs[block * l..(block + 1) * l])
    }

    /// Descriptor that regenerates this operator bit-exactly.
    pub fn descriptor(&self) -> SketchDescriptor {
        SketchDescriptor {
            kind: self.kind,
            l: self.rows,
            n: self.dim,
            p: self.blocks,
            seed: self.seed,
        }
    }

    /// Writes column `j` (a padded column index) of a Gaussian or Rademacher
    /// operator into `out`.
    fn fill_dense_column(&self, j: usize, out: &mut [f64]) {
        let scale = 1.0 / (self.rows as f64).sqrt();
        let mut rng = child_rng(self.seed, Stream::Column, j as u64);
        match self.kind {
            SketchKind::Gaussian => {
                for v in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = z * scale;
                }
            }
            SketchKind::Rademacher => {
                for v in out.iter_mut() {
                    *v = random_sign(&mut rng) * scale;
                }
            }
            _ => unreachable!("dense columns requested for a Hadamard operator"),
        }
    }

    /// Applies the dense columns `[first, first + count)` of a Gaussian or
    /// Rademacher operator to `v` (which has `count` rows), accumulating into
    /// `out`.
    fn accumulate_dense(&self, first: usize, v: MatRef<'_, f64>, mut out: MatMut<'_, f64>) {
        let count = v.nrows();
        let mut panel = Mat::<f64>::zeros(self.rows, DENSE_CHUNK.min(count.max(1)));
        let mut start = 0;
        while start < count {
            let width = DENSE_CHUNK.min(count - start);
            for c in 0..width {
                self.fill_dense_column(first + start + c, panel.col_as_slice_mut(c));
            }
            matmul(
                out.rb_mut(),
                Accum::Add,
                panel.as_ref().subcols(0, width),
                v.subrows(start, width),
                1.0,
                Par::Seq,
            );
            start += width;
        }
    }

    /// Core Hadamard kernel: `scale · D̃ · sample(H (D v))` for a block whose
    /// signs are `right` (length = rows of `v`) and whose output rows read
    /// `index[t]` with sign `left[t]`.
    fn hadamard_kernel(
        &self,
        v: MatRef<'_, f64>,
        right: &[f64],
        index: &[usize],
        left: Option<&[f64]>,
        scale: f64,
    ) -> Mat<f64> {
        let len = v.nrows();
        let d = v.ncols();
        let mut out = Mat::<f64>::zeros(self.rows, d);
        let width = self.panel.min(d.max(1));
        let mut buf = Mat::<f64>::zeros(len, width);
        let mut start = 0;
        while start < d {
            let w = width.min(d - start);
            for c in 0..w {
                let src = v.col(start + c);
                let dst = buf.col_as_slice_mut(c);
                for (i, (x, s)) in dst.iter_mut().zip(right).enumerate() {
                    *x = src[i] * s;
                }
            }
            fwht_columns_inplace(buf.as_mut().subcols_mut(0, w))
                .expect("block length is a power of two");
            for c in 0..w {
                let col = buf.col_as_slice(c);
                let dst = out.col_as_slice_mut(start + c);
                match left {
                    Some(left) => {
                        for t in 0..self.rows {
                            dst[t] = (scale * col[index[t]]) * left[t];
                        }
                    }
                    None => {
                        for t in 0..self.rows {
                            dst[t] = scale * col[index[t]];
                        }
                    }
                }
            }
            start += w;
        }
        out
    }

    /// Local contribution `Ω⁽ⁱ⁾ V⁽ⁱ⁾` of block `i`. `vi` must have `r` rows.
    pub fn apply_block_local(&self, block: usize, vi: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if block >= self.blocks {
            return Err(Error::Parameter(format!(
                "block index {block} out of range for p={}",
                self.blocks
            )));
        }
        let r = self.block_len();
        if vi.nrows() != r {
            return Err(Error::Dimension(format!(
                "local block has {} rows, operator block length is {r}",
                vi.nrows()
            )));
        }
        match &self.hadamard {
            None => {
                let mut out = Mat::<f64>::zeros(self.rows, vi.ncols());
                self.accumulate_dense(block * r, vi, out.as_mut());
                Ok(out)
            }
            Some(h) => {
                let scale = (r as f64).sqrt() / (self.rows as f64).sqrt();
                Ok(self.hadamard_kernel(
                    vi,
                    &h.right_signs[block * r..(block + 1) * r],
                    &h.local_index,
                    Some(&h.left_signs[block * self.rows..(block + 1) * self.rows]),
                    scale,
                ))
            }
        }
    }

    /// Monolithic product `Ω M` for an `n × d` input.
    pub fn apply_dense(&self, m: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if m.nrows() != self.dim {
            return Err(Error::Dimension(format!(
                "input has {} rows, operator expects {}",
                m.nrows(),
                self.dim
            )));
        }
        let d = m.ncols();
        let padded = self.padded_dim();
        match (&self.hadamard, self.kind) {
            (None, _) => {
                let mut out = Mat::<f64>::zeros(self.rows, d);
                self.accumulate_dense(0, m, out.as_mut());
                Ok(out)
            }
            (Some(h), SketchKind::Srht { .. }) => {
                // One transform over the whole padded dimension.
                let padded_m = pad_rows(m, padded);
                let scale = (padded as f64).sqrt() / (self.rows as f64).sqrt();
                Ok(self.hadamard_kernel(padded_m.as_ref(), &h.right_signs, &h.sample, None, scale))
            }
            (Some(_), _) => {
                let r = self.block_len();
                let padded_m = pad_rows(m, padded);
                let mut out = Mat::<f64>::zeros(self.rows, d);
                for i in 0..self.blocks {
                    let part = self.apply_block_local(i, padded_m.as_ref().subrows(i * r, r))?;
                    out += &part;
                }
                Ok(out)
            }
        }
    }

    /// Assembles the dense `l × n` matrix by applying the operator to the
    /// canonical basis. Diagnostic use only.
    pub fn to_dense(&self) -> Result<Mat<f64>> {
        self.apply_dense(Mat::<f64>::identity(self.dim, self.dim).as_ref())
    }

    /// Bytes needed to hold this operator's random data on one worker if the
    /// local block were materialized (dense kinds) or stored implicitly
    /// (Hadamard kinds).
    pub fn local_memory_bytes(&self) -> usize {
        let words = match self.kind {
            SketchKind::Gaussian | SketchKind::Rademacher => self.rows * self.block_len(),
            // signs of D⁽ⁱ⁾ and D̃⁽ⁱ⁾ plus the shared sample indices
            _ => self.block_len() + 2 * self.rows,
        };
        words * std::mem::size_of::<f64>()
    }
}

/// Copies `m` into a matrix with `rows >= m.nrows()` rows, zero-filled.
pub(crate) fn pad_rows(m: MatRef<'_, f64>, rows: usize) -> Mat<f64> {
    if rows == m.nrows() {
        return m.to_owned();
    }
    let mut out = Mat::<f64>::zeros(rows, m.ncols());
    out.as_mut().subrows_mut(0, m.nrows()).copy_from(m);
    out
}

/// Plain-text operator record, e.g. `kind=bsrht l=8 n=16 p=2 seed=42`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchDescriptor {
    pub kind: SketchKind,
    pub l: usize,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl SketchDescriptor {
    pub fn build(&self) -> Result<SketchOperator> {
        make_operator(self.kind, self.l, self.n, self.p, self.seed)
    }
}

impl fmt::Display for SketchDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kind={} l={} n={} p={} seed={}",
            self.kind, self.l, self.n, self.p, self.seed
        )
    }
}

impl FromStr for SketchDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut kind, mut l, mut n, mut p, mut seed) = (None, None, None, None, None);
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("malformed field `{token}`")))?;
            let bad = |_| Error::Parameter(format!("invalid value in `{token}`"));
            match key {
                "kind" => kind = Some(value.parse()?),
                "l" => l = Some(value.parse().map_err(bad)?),
                "n" => n = Some(value.parse().map_err(bad)?),
                "p" => p = Some(value.parse().map_err(bad)?),
                "seed" => seed = Some(value.parse().map_err(bad)?),
                other => return Err(Error::Parameter(format!("unknown field `{other}`"))),
            }
        }
        let missing = |f: &str| Error::Parameter(format!("descriptor is missing `{f}`"));
        Ok(Self {
            kind: kind.ok_or_else(|| missing("kind"))?,
            l: l.ok_or_else(|| missing("l"))?,
            n: n.ok_or_else(|| missing("n"))?,
            p: p.ok_or_else(|| missing("p"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        })
    }
}

fn check_bound_args(eps: f64, delta: f64, d: usize, n: usize) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) || d == 0 || n == 0 {
        return Err(Error::Parameter(format!(
            "bound requires 0<eps<1, 0<delta<1, d>=1, n>=1 (got eps={eps}, delta={delta}, d={d}, n={n})"
        )));
    }
    Ok(())
}

/// Smallest `l` for which a block SRHT is an `(ε, δ, d)` subspace embedding:
///
/// `l ≥ 3.7 ε⁻² (√d + 4 √(ln(n/δ) + 6.3))² ln(5d/δ)`.
///
/// The result is not capped at `n`; callers that need `l ≤ n` must clamp.
pub fn min_rows_theorem1(eps: f64, delta: f64, d: usize, n: usize) -> Result<usize> {
    check_bound_args(eps, delta, d, n)?;
    let d = d as f64;
    let n = n as f64;
    let inner = d.sqrt() + 4.0 * ((n / delta).ln() + 6.3).sqrt();
    let bound = 3.7 / (eps * eps) * inner * inner * (5.0 * d / delta).ln();
    Ok(bound.ceil() as usize)
}

/// Smallest `l` for which a standard SRHT is an `(ε, δ, d)` subspace
/// embedding: `l ≥ 3 ε⁻² (√d + √(8 ln(6n/δ)))² ln(3d/δ)`.
pub fn min_rows_srht(eps: f64, delta: f64, d: usize, n: usize) -> Result<usize> {
    check_bound_args(eps, delta, d, n)?;
    let d = d as f64;
    let n = n as f64;
    let inner = d.sqrt() + (8.0 * (6.0 * n / delta).ln()).sqrt();
    let bound = 3.0 / (eps * eps) * inner * inner * (3.0 * d / delta).ln();
    Ok(bound.ceil() as usize)
}
