//! Helpers shared by the integration tests: random inputs, conversions to
//! nalgebra, and operators assembled entry by entry from their definition.

#![allow(dead_code)]

use bsrht::sketch::{SketchKind, SketchOperator};
use faer::Mat;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

pub fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn from_na(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn rel_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let scale = b.norm_l2();
    let d = (a - b).norm_l2();
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

/// Entry `(a, b)` of the normalized Walsh–Hadamard matrix of order `r`.
pub fn hadamard_entry(a: usize, b: usize, r: usize) -> f64 {
    let sign = if (a & b).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    sign / (r as f64).sqrt()
}

pub fn dense_hadamard(r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, r, |a, b| hadamard_entry(a, b, r))
}

/// `Ω` assembled entry by entry from the sampled rows and sign vectors:
/// `√(r/l)·D̃⁽ⁱ⁾ R H D⁽ⁱ⁾` per block for block SRHT, `√(P/l)·R H D` over
/// the padded dimension `P` for the SRHT. Padding columns are dropped.
pub fn hadamard_operator_oracle(op: &SketchOperator) -> DMatrix<f64> {
    let (l, n, p, r) = (op.rows(), op.dim(), op.blocks(), op.block_len());
    let sample = op.sample_indices().expect("Hadamard-family operator");
    match op.kind() {
        SketchKind::BlockSrht => {
            let scale = (r as f64 / l as f64).sqrt();
            DMatrix::from_fn(l, n, |t, col| {
                let (i, c) = (col / r, col % r);
                let left = op.left_signs(i).unwrap()[t];
                let right = op.right_signs(i).unwrap()[c];
                scale * left * hadamard_entry(sample[t], c, r) * right
            })
        }
        SketchKind::Srht { .. } => {
            let padded = p * r;
            let scale = (padded as f64 / l as f64).sqrt();
            DMatrix::from_fn(l, n, |t, col| {
                let right = op.right_signs(col / r).unwrap()[col % r];
                scale * hadamard_entry(sample[t], col, padded) * right
            })
        }
        kind => panic!("{kind} has no Hadamard structure"),
    }
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Best rank-`k` approximation from a full SVD.
pub fn best_rank_k(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for &i in order.iter().take(k) {
        out += svd.singular_values[i] * u.column(i) * vt.row(i);
    }
    out
}

/// Moore–Penrose pseudoinverse with singular values below `rtol·σ₁` dropped.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let s_max = singular_values(m).first().copied().unwrap_or(0.0);
    m.clone().pseudo_inverse(rtol * s_max).unwrap()
}

/// Orthonormal basis of the column space of a full-column-rank matrix.
pub fn orth(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}
