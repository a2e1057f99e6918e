//! In-place normalized fast Walsh–Hadamard transform.
//!
//! The transform computes `H x` where `H` is the `r × r` Sylvester–Hadamard
//! matrix scaled by `1/√r`, so `H` is symmetric, orthogonal and its own
//! inverse. The butterfly stages are left unscaled and a single `1/√r`
//! multiply is applied at the end.

use faer::prelude::*;
use faer::{Mat, MatMut};

use crate::error::{Error, Result};

/// Block length of a Hadamard transform. Always a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HadamardSize(usize);

impl HadamardSize {
    pub fn new(r: usize) -> Result<Self> {
        if r == 0 || !r.is_power_of_two() {
            return Err(Error::Size(format!(
                "Hadamard length {r} is not a power of two"
            )));
        }
        Ok(Self(r))
    }

    /// Smallest power of two that is `>= n` (and at least 1).
    pub fn covering(n: usize) -> Self {
        Self(n.max(1).next_power_of_two())
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// `log2(r)`, the number of butterfly stages.
    pub fn stages(self) -> u32 {
        self.0.trailing_zeros()
    }
}

/// Unnormalized butterfly network. Caller guarantees a power-of-two length.
#[inline]
fn butterflies(x: &mut [f64]) {
    let n = x.len();
    let mut half = 1;
    while half < n {
        for chunk in x.chunks_exact_mut(2 * half) {
            let (lo, hi) = chunk.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        half *= 2;
    }
}

/// Replaces `x` with `H x`. The length of `x` must be a power of two.
pub fn fwht_inplace(x: &mut [f64]) -> Result<()> {
    let size = HadamardSize::new(x.len())?;
    butterflies(x);
    let scale = 1.0 / (size.get() as f64).sqrt();
    for v in x.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

/// Applies [`fwht_inplace`] to every column of `m`.
pub fn fwht_columns_inplace(mut m: MatMut<'_, f64>) -> Result<()> {
    let size = HadamardSize::new(m.nrows())?;
    let scale = 1.0 / (size.get() as f64).sqrt();
    let mut scratch = vec![0.0; size.get()];
    for j in 0..m.ncols() {
        // Columns of an owned matrix are contiguous, but a view may be strided.
        match m.rb_mut().col_mut(j).try_as_col_major_mut() {
            Some(col) => {
                let col = col.as_slice_mut();
                butterflies(col);
                col.iter_mut().for_each(|v| *v *= scale);
            }
            None => {
                let mut col = m.rb_mut().col_mut(j);
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s = col[i];
                }
                butterflies(&mut scratch);
                for (i, s) in scratch.iter().enumerate() {
                    col[i] = s * scale;
                }
            }
        }
    }
    Ok(())
}

/// Columnwise transform returning a new matrix.
pub fn fwht_columns(m: &Mat<f64>) -> Result<Mat<f64>> {
    let mut out = m.clone();
    fwht_columns_inplace(out.as_mut())?;
    Ok(out)
}
