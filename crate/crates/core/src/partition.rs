//! Simulated distributed layer.
//!
//! Matrices are split either into `p` row blocks or over a `p × p` grid of
//! workers. Each worker computes its local sketch contribution on a pool of
//! `p` threads, and contributions are combined with a binary tree whose shape
//! depends only on the number of parts, so results are bitwise reproducible.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sketch::{block_length, SketchKind, SketchOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// `p` blocks of consecutive rows.
    RowBlocks(usize),
    /// A `p × p` grid of blocks.
    Grid(usize),
}

impl Layout {
    pub fn p(self) -> usize {
        match self {
            Layout::RowBlocks(p) | Layout::Grid(p) => p,
        }
    }

    /// Number of (row, column) block positions.
    pub fn shape(self) -> (usize, usize) {
        match self {
            Layout::RowBlocks(p) => (p, 1),
            Layout::Grid(p) => (p, p),
        }
    }
}

/// A matrix split into equally sized, zero-padded blocks.
///
/// Block `(i, j)` covers global rows `i·row_block ..` and columns
/// `j·col_block ..`; entries past the global shape are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    layout: Layout,
    rows: usize,
    cols: usize,
    row_block: usize,
    col_block: usize,
    blocks: Vec<Mat<f64>>,
}

impl DistMatrix {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Rows per block, padding included.
    pub fn row_block(&self) -> usize {
        self.row_block
    }

    /// Columns per block, padding included.
    pub fn col_block(&self) -> usize {
        self.col_block
    }

    pub fn block(&self, i: usize, j: usize) -> MatRef<'_, f64> {
        let (_, pc) = self.layout.shape();
        self.blocks[i * pc + j].as_ref()
    }

    pub fn blocks(&self) -> &[Mat<f64>] {
        &self.blocks
    }

    /// Reassembles the global matrix, dropping padding.
    pub fn gather(&self) -> Mat<f64> {
        let (pr, pc) = self.layout.shape();
        let mut out = Mat::<f64>::zeros(self.rows, self.cols);
        for i in 0..pr {
            let r0 = i * self.row_block;
            if r0 >= self.rows {
                break;
            }
            let nr = self.row_block.min(self.rows - r0);
            for j in 0..pc {
                let c0 = j * self.col_block;
                if c0 >= self.cols {
                    break;
                }
                let nc = self.col_block.min(self.cols - c0);
                out.as_mut()
                    .submatrix_mut(r0, c0, nr, nc)
                    .copy_from(self.block(i, j).submatrix(0, 0, nr, nc));
            }
        }
        out
    }

    /// Row-block matrix built from already padded blocks.
    pub(crate) fn from_row_blocks(rows: usize, cols: usize, blocks: Vec<Mat<f64>>) -> Self {
        let row_block = blocks.first().map_or(0, |b| b.nrows());
        Self {
            layout: Layout::RowBlocks(blocks.len()),
            rows,
            cols,
            row_block,
            col_block: cols,
            blocks,
        }
    }

    /// Grid matrix from `p²` padded blocks in row-major block order.
    pub(crate) fn from_grid_blocks(
        rows: usize,
        cols: usize,
        p: usize,
        blocks: Vec<Mat<f64>>,
    ) -> Result<Self> {
        check_p(p)?;
        let row_block = block_length(rows, p).get();
        let col_block = block_length(cols, p).get();
        if blocks.len() != p * p
            || blocks
                .iter()
                .any(|b| b.nrows() != row_block || b.ncols() != col_block)
        {
            return Err(Error::Layout(format!(
                "expected {} blocks of {row_block}×{col_block}",
                p * p
            )));
        }
        Ok(Self {
            layout: Layout::Grid(p),
            rows,
            cols,
            row_block,
            col_block,
            blocks,
        })
    }

    /// Builds a grid matrix by evaluating `f(i, j, rows, cols)` for every
    /// block, where `rows`/`cols` are the global index ranges of the block
    /// (padding excluded). Blocks are computed on `p` workers.
    pub fn from_grid_fn<F>(rows: usize, cols: usize, p: usize, f: F) -> Result<Self>
    where
        F: Fn(std::ops::Range<usize>, std::ops::Range<usize>) -> Mat<f64> + Sync,
    {
        check_p(p)?;
        let row_block = block_length(rows, p).get();
        let col_block = block_length(cols, p).get();
        let blocks = run_workers(p, p * p, |b| {
            let (i, j) = (b / p, b % p);
            let rr = (i * row_block).min(rows)..((i + 1) * row_block).min(rows);
            let cr = (j * col_block).min(cols)..((j + 1) * col_block).min(cols);
            let mut block = Mat::<f64>::zeros(row_block, col_block);
            if !rr.is_empty() && !cr.is_empty() {
                let (nr, nc) = (rr.len(), cr.len());
                let local = f(rr, cr);
                block
                    .as_mut()
                    .submatrix_mut(0, 0, nr, nc)
                    .copy_from(local.as_ref());
            }
            Ok(block)
        })?;
        Ok(Self {
            layout: Layout::Grid(p),
            rows,
            cols,
            row_block,
            col_block,
            blocks,
        })
    }
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::Layout("block count must be positive".into()));
    }
    Ok(())
}

/// Deep-copies `m` into blocks. Block lengths are the next power of two of
/// `⌈dim/p⌉`, matching the padding of sketch operators with `p` blocks.
pub fn distribute(m: MatRef<'_, f64>, layout: Layout) -> Result<DistMatrix> {
    let p = layout.p();
    check_p(p)?;
    let (rows, cols) = (m.nrows(), m.ncols());
    let row_block = block_length(rows, p).get();
    let col_block = match layout {
        Layout::RowBlocks(_) => cols,
        Layout::Grid(_) => block_length(cols, p).get(),
    };
    let (pr, pc) = layout.shape();
    let mut blocks = Vec::with_capacity(pr * pc);
    for i in 0..pr {
        for j in 0..pc {
            let mut block = Mat::<f64>::zeros(row_block, col_block);
            let r0 = (i * row_block).min(rows);
            let c0 = (j * col_block).min(cols);
            let nr = row_block.min(rows - r0);
            let nc = col_block.min(cols - c0);
            if nr > 0 && nc > 0 {
                block
                    .as_mut()
                    .submatrix_mut(0, 0, nr, nc)
                    .copy_from(m.submatrix(r0, c0, nr, nc));
            }
            blocks.push(block);
        }
    }
    Ok(DistMatrix {
        layout,
        rows,
        cols,
        row_block,
        col_block,
        blocks,
    })
}

/// Fixed binary reduction tree over `parts` contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducePlan {
    parts: usize,
}

impl ReducePlan {
    pub fn new(parts: usize) -> Self {
        Self { parts }
    }

    /// Tree depth, i.e. the number of message rounds `⌈log₂ p⌉`.
    pub fn rounds(&self) -> u32 {
        ceil_log2(self.parts)
    }

    /// Sums `parts` pairwise: `(0,1), (2,3), …` at every level, an odd
    /// trailing part being carried up unchanged.
    pub fn reduce(&self, parts: Vec<Mat<f64>>) -> Mat<f64> {
        assert_eq!(
            parts.len(),
            self.parts,
            "reduce plan built for a different part count"
        );
        let mut level = parts;
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            let mut it = level.into_iter();
            while let Some(mut a) = it.next() {
                if let Some(b) = it.next() {
                    a += &b;
                }
                next.push(a);
            }
            level = next;
        }
        level.pop().expect("reduce of zero parts")
    }
}

pub(crate) fn ceil_log2(p: usize) -> u32 {
    if p <= 1 {
        0
    } else {
        usize::BITS - (p - 1).leading_zeros()
    }
}

/// Runs `tasks` jobs on a pool of `workers` threads and returns the results
/// in task order.
pub(crate) fn run_workers<T, F>(workers: usize, tasks: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if workers <= 1 || tasks <= 1 {
        return (0..tasks).map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Layout(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..tasks).into_par_iter().map(&job).collect())
}

fn check_rowwise(op: &SketchOperator, v: &DistMatrix) -> Result<()> {
    match v.layout {
        Layout::RowBlocks(p) if p == op.blocks() => {}
        layout => {
            return Err(Error::Layout(format!(
                "expected RowBlocks({}), got {layout:?}",
                op.blocks()
            )))
        }
    }
    if v.rows != op.dim() || v.row_block != op.block_len() {
        return Err(Error::Dimension(format!(
            "distributed input is {}×{} in blocks of {} rows; operator is {}×{} with blocks of {}",
            v.rows,
            v.cols,
            v.row_block,
            op.rows(),
            op.dim(),
            op.block_len()
        )));
    }
    Ok(())
}

/// `Ω V` for a row-distributed `V`: local products on `p` workers, then a
/// tree sum-reduce to the root.
pub fn sketch_rowwise(op: &SketchOperator, v: &DistMatrix) -> Result<Mat<f64>> {
    check_rowwise(op, v)?;
    let p = op.blocks();
    let parts = run_workers(p, p, |i| op.apply_block_local(i, v.block(i, 0)))?;
    Ok(ReducePlan::new(p).reduce(parts))
}

fn check_grid(a: &DistMatrix, op: &SketchOperator, along_cols: bool) -> Result<usize> {
    let p = match a.layout {
        Layout::Grid(p) => p,
        layout => {
            return Err(Error::Layout(format!(
                "expected a grid layout, got {layout:?}"
            )))
        }
    };
    if op.blocks() != p {
        return Err(Error::Layout(format!(
            "operator has {} blocks, grid is {p}×{p}",
            op.blocks()
        )));
    }
    let (dim, block, what) = if along_cols {
        (a.cols, a.col_block, "columns")
    } else {
        (a.rows, a.row_block, "rows")
    };
    if op.dim() != dim || op.block_len() != block {
        return Err(Error::Dimension(format!(
            "operator dimension {} (blocks of {}) does not match {dim} {what} (blocks of {block})",
            op.dim(),
            op.block_len()
        )));
    }
    Ok(p)
}

/// Combines a `p × p` array of local contributions (row-major) by reducing
/// along `j` for every `i` (`along_j`) or along `i` for every `j`, then
/// transposes each sum into a block of a row-distributed result.
fn reduce_grid(
    parts: Vec<Mat<f64>>,
    p: usize,
    along_j: bool,
    rows: usize,
    cols: usize,
) -> DistMatrix {
    let mut slots: Vec<Option<Mat<f64>>> = parts.into_iter().map(Some).collect();
    let plan = ReducePlan::new(p);
    let mut blocks = Vec::with_capacity(p);
    for outer in 0..p {
        let group: Vec<Mat<f64>> = (0..p)
            .map(|inner| {
                let idx = if along_j {
                    outer * p + inner
                } else {
                    inner * p + outer
                };
                slots[idx].take().expect("each part is reduced once")
            })
            .collect();
        blocks.push(plan.reduce(group).transpose().to_owned());
    }
    DistMatrix::from_row_blocks(rows, cols, blocks)
}

/// `Y = A Ωᵀ` for a grid-distributed `A`.
///
/// Worker `(i, j)` computes `Ω⁽ʲ⁾ (A⁽ⁱʲ⁾)ᵀ`; the contributions of grid row `i`
/// are sum-reduced, so `Yᵀ = Ω Aᵀ` ends up row-distributed over the first
/// worker of each grid row.
pub fn sketch_grid_right(a: &DistMatrix, op: &SketchOperator) -> Result<DistMatrix> {
    let p = check_grid(a, op, true)?;
    let parts = run_workers(p, p * p, |b| {
        let (i, j) = (b / p, b % p);
        op.apply_block_local(j, a.block(i, j).transpose())
    })?;
    Ok(reduce_grid(parts, p, true, a.rows, op.rows()))
}

/// `X = Aᵀ Ωᵀ = (Ω A)ᵀ` for a grid-distributed `A`, reducing along grid
/// columns.
pub fn sketch_grid_left(a: &DistMatrix, op: &SketchOperator) -> Result<DistMatrix> {
    let p = check_grid(a, op, false)?;
    let parts = run_workers(p, p * p, |b| {
        let (i, j) = (b / p, b % p);
        op.apply_block_local(i, a.block(i, j))
    })?;
    Ok(reduce_grid(parts, p, false, a.cols, op.rows()))
}

/// All three sketches needed by the single-view algorithm from one sweep over
/// the blocks of `A`: `X = AᵀΓᵀ`, `Y = AΩᵀ` and `W = AΨᵀ`.
pub fn sketch_grid_three(
    a: &DistMatrix,
    omega: &SketchOperator,
    gamma: &SketchOperator,
    psi: &SketchOperator,
) -> Result<(DistMatrix, DistMatrix, DistMatrix)> {
    let p = check_grid(a, omega, true)?;
    check_grid(a, psi, true)?;
    check_grid(a, gamma, false)?;
    let parts = run_workers(p, p * p, |b| {
        let (i, j) = (b / p, b % p);
        let block = a.block(i, j);
        Ok((
            gamma.apply_block_local(i, block)?,
            omega.apply_block_local(j, block.transpose())?,
            psi.apply_block_local(j, block.transpose())?,
        ))
    })?;
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (x, y, w) in parts {
        xs.push(x);
        ys.push(y);
        ws.push(w);
    }
    Ok((
        reduce_grid(xs, p, false, a.cols, gamma.rows()),
        reduce_grid(ys, p, true, a.rows, omega.rows()),
        reduce_grid(ws, p, true, a.rows, psi.rows()),
    ))
}

/// `Qᵀ A` for a row-distributed `Q` (aligned with the grid rows of `A`):
/// worker `(i, j)` forms `Q⁽ⁱ⁾ᵀ A⁽ⁱʲ⁾`, grid columns are sum-reduced.
pub fn transpose_multiply_grid(q: &DistMatrix, a: &DistMatrix) -> Result<Mat<f64>> {
    let p = match (q.layout, a.layout) {
        (Layout::RowBlocks(pq), Layout::Grid(p)) if pq == p => p,
        (lq, la) => {
            return Err(Error::Layout(format!(
                "expected RowBlocks(p) and Grid(p), got {lq:?} and {la:?}"
            )))
        }
    };
    if q.rows != a.rows || q.row_block != a.row_block {
        return Err(Error::Dimension(format!(
            "row partitions differ: {} rows in blocks of {} vs {} in blocks of {}",
            q.rows, q.row_block, a.rows, a.row_block
        )));
    }
    let l = q.cols;
    let parts = run_workers(p, p * p, |b| {
        let (i, j) = (b / p, b % p);
        let mut out = Mat::<f64>::zeros(l, a.col_block);
        matmul(
            out.as_mut(),
            Accum::Replace,
            q.block(i, 0).transpose(),
            a.block(i, j),
            1.0,
            Par::Seq,
        );
        Ok(out)
    })?;
    // reduce_grid hands back transposed sums; undo that on gather.
    let reduced = reduce_grid(parts, p, false, a.cols, l);
    Ok(reduced.gather().transpose().to_owned())
}

/// Modeled cost of one distributed application `Ω V` with `V` of width `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub flops_per_worker: f64,
    pub words_reduced: f64,
    pub messages: u32,
    /// Bytes per worker to hold the local operator data.
    pub operator_bytes: usize,
}

impl CostReport {
    pub const CSV_HEADER: &'static str = "kind,n,d,l,p,flops,words,messages";

    pub fn csv_row(&self, op: &SketchOperator, d: usize) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            op.kind(),
            op.dim(),
            d,
            op.rows(),
            op.blocks(),
            self.flops_per_worker,
            self.words_reduced,
            self.messages
        )
    }
}

/// Cost model: Hadamard kinds need `r·d·log₂r + d·l·log₂p` flops per worker,
/// dense kinds `r·d·l + d·l·log₂p`; the reduce moves `d·l·log₂p` words in
/// `⌈log₂p⌉` messages.
pub fn cost_report(op: &SketchOperator, d: usize) -> CostReport {
    let r = op.block_len() as f64;
    let l = op.rows() as f64;
    let d = d as f64;
    let p = op.blocks();
    let log_p = (p as f64).log2();
    let reduce = d * l * log_p;
    let local = match op.kind() {
        SketchKind::Gaussian | SketchKind::Rademacher => r * d * l,
        SketchKind::Srht { .. } | SketchKind::BlockSrht => r * d * r.log2(),
    };
    CostReport {
        flops_per_worker: local + reduce,
        words_reduced: reduce,
        messages: ceil_log2(p),
        operator_bytes: op.local_memory_bytes(),
    }
}
