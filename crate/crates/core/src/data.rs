//! Test matrices: RBF kernels over tabular data and PSD matrices with a
//! prescribed spectrum.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ose::random_orthonormal;
use crate::partition::{run_workers, DistMatrix};
use crate::rng::{child_rng, Stream};
use crate::sketch::block_length;

/// `n` feature vectors of equal length, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    rows: usize,
    width: usize,
    source: String,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Data(format!(
                    "row {i} has {} fields, expected {width}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_values(values, rows.len(), width, source)
    }

    fn from_values(
        values: Vec<f64>,
        rows: usize,
        width: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature at row {}, column {}",
                pos / width.max(1),
                pos % width.max(1)
            )));
        }
        Ok(Self {
            values,
            rows,
            width,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Self {
            values: self.values[..n * self.width].to_vec(),
            rows: n,
            width: self.width,
            source: self.source.clone(),
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "kernel width must be positive, got {sigma}"
        )));
    }
    Ok((sigma * sigma).recip())
}

/// Kernel entries for rows `r0..r0+nr` against rows `c0..c0+nc`, written
/// into the top-left corner of a `block_rows × block_cols` zero matrix.
fn rbf_block(
    x: &Dataset,
    inv_sigma2: f64,
    (r0, nr): (usize, usize),
    (c0, nc): (usize, usize),
    (block_rows, block_cols): (usize, usize),
) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(block_rows, block_cols);
    for j in 0..nc {
        let xj = x.row(c0 + j);
        let col = out
            .col_mut(j)
            .try_as_col_major_mut()
            .expect("owned column")
            .as_slice_mut();
        for (i, e) in col.iter_mut().take(nr).enumerate() {
            *e = (-squared_distance(x.row(r0 + i), xj) * inv_sigma2).exp();
        }
    }
    out
}

/// Dense RBF kernel `Aᵢⱼ = exp(−‖xᵢ − xⱼ‖²/σ²)`.
///
/// Each entry is evaluated from the coordinate differences, which are
/// symmetric in `i, j`, so the result is exactly symmetric with unit
/// diagonal.
pub fn rbf_kernel(x: &Dataset, sigma: f64) -> Result<Mat<f64>> {
    let inv = check_sigma(sigma)?;
    let n = x.len();
    let mut a = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        a[(j, j)] = 1.0;
        for i in 0..j {
            let v = (-squared_distance(x.row(i), x.row(j)) * inv).exp();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// RBF kernel built directly in a `p × p` grid layout. Blocks on and above
/// the diagonal are computed on `p` workers and mirrored below it.
pub fn rbf_kernel_grid(x: &Dataset, sigma: f64, p: usize) -> Result<DistMatrix> {
    let inv = check_sigma(sigma)?;
    if p == 0 {
        return Err(Error::Layout("block count must be positive".into()));
    }
    let n = x.len();
    let b = block_length(n, p).get();
    let span = |i: usize| {
        let start = (i * b).min(n);
        (start, b.min(n - start))
    };
    let upper: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
    let computed = run_workers(p, upper.len(), |t| {
        let (i, j) = upper[t];
        Ok(rbf_block(x, inv, span(i), span(j), (b, b)))
    })?;
    let mut blocks: Vec<Option<Mat<f64>>> = vec![None; p * p];
    for (&(i, j), block) in upper.iter().zip(computed) {
        if i != j {
            blocks[j * p + i] = Some(block.transpose().to_owned());
        }
        blocks[i * p + j] = Some(block);
    }
    let blocks = blocks
        .into_iter()
        .map(|b| b.expect("every block filled"))
        .collect();
    DistMatrix::from_grid_blocks(n, n, p, blocks)
}

/// A PSD matrix with known eigenvalues.
#[derive(Debug, Clone)]
pub struct SyntheticPsd {
    pub matrix: Mat<f64>,
    /// Eigenvalues (equivalently singular values), nonincreasing.
    pub spectrum: Vec<f64>,
}

impl SyntheticPsd {
    /// `‖A − [[A]]ₖ‖` in the Frobenius norm.
    pub fn tail_frobenius(&self, k: usize) -> f64 {
        self.spectrum
            .iter()
            .skip(k)
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }

    /// `‖A − [[A]]ₖ‖` in the trace norm.
    pub fn tail_trace(&self, k: usize) -> f64 {
        self.spectrum.iter().skip(k).sum()
    }

    /// `‖A − [[A]]ₖ‖` in the spectral norm.
    pub fn tail_spectral(&self, k: usize) -> f64 {
        self.spectrum.get(k).copied().unwrap_or(0.0)
    }
}

/// `A = Q diag(spectrum) Qᵀ` with `Q` Haar-distributed. Only the columns of
/// `Q` matching nonzero eigenvalues are drawn. A constant spectrum `c`
/// yields `c·I` exactly.
pub fn synthetic_psd(n: usize, spectrum: &[f64], seed: u64) -> Result<SyntheticPsd> {
    if spectrum.len() != n {
        return Err(Error::Parameter(format!(
            "spectrum has {} values for dimension {n}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Parameter(
            "spectrum must be finite and nonnegative".into(),
        ));
    }
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Parameter("spectrum must be nonincreasing".into()));
    }
    let spectrum = spectrum.to_vec();
    if spectrum.windows(2).all(|w| w[0] == w[1]) {
        let c = spectrum.first().copied().unwrap_or(0.0);
        let matrix = Mat::from_fn(n, n, |i, j| if i == j { c } else { 0.0 });
        return Ok(SyntheticPsd { matrix, spectrum });
    }
    let rank = spectrum.iter().take_while(|&&s| s > 0.0).count();
    let q = random_orthonormal(n, rank, seed)?;
    let scaled = Mat::from_fn(n, rank, |i, j| q[(i, j)] * spectrum[j]);
    let mut matrix = Mat::<f64>::zeros(n, n);
    matmul(
        matrix.as_mut(),
        Accum::Replace,
        scaled.as_ref(),
        q.as_ref().transpose(),
        1.0,
        Par::Seq,
    );
    for j in 0..n {
        for i in j + 1..n {
            matrix[(i, j)] = matrix[(j, i)];
        }
    }
    Ok(SyntheticPsd { matrix, spectrum })
}

/// `ρ⁰, ρ¹, …, ρⁿ⁻¹`.
pub fn geometric_spectrum(n: usize, rho: f64) -> Vec<f64> {
    (0..n).map(|i| rho.powi(i as i32)).collect()
}

/// Reads a comma-separated numeric table. A first row containing any
/// non-numeric field is taken as a header and skipped.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if index == 0 => continue,
            Err(_) => {
                return Err(Error::Data(format!(
                    "{}: non-numeric field on line {}",
                    path.display(),
                    index + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Dataset::from_rows(rows, path.display().to_string())
}

/// Writes a dataset as headerless CSV.
pub fn write_csv(x: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for i in 0..x.len() {
        writer.write_record(x.row(i).iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

fn smooth_field(rng: &mut impl Rng, side: usize, blobs: usize, spread: f64) -> Vec<f64> {
    let centers: Vec<(f64, f64, f64)> = (0..blobs)
        .map(|_| {
            (
                rng.random_range(0.2..0.8) * side as f64,
                rng.random_range(0.2..0.8) * side as f64,
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let mut field = vec![0.0; side * side];
    for (k, v) in field.iter_mut().enumerate() {
        let (y, x) = ((k / side) as f64, (k % side) as f64);
        *v = centers
            .iter()
            .map(|&(cy, cx, w)| {
                w * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * spread * spread)).exp()
            })
            .sum();
    }
    field
}

/// Stand-in for a handwritten-digit subset: `n` images of 28×28 pixels in
/// `[0, 1]`, drawn from ten smooth class templates deformed along a few
/// smooth modes, with pixel noise and clipping.
pub fn mnist_like(n: usize, seed: u64) -> Dataset {
    const SIDE: usize = 28;
    const CLASSES: usize = 10;
    const MODES: usize = 8;
    let mut rng = child_rng(seed, Stream::Data, 10);
    let templates: Vec<Vec<f64>> = (0..CLASSES)
        .map(|_| {
            smooth_field(&mut rng, SIDE, 6, 2.5)
                .into_iter()
                .map(|v| (1.6 * v.abs()).min(1.0))
                .collect()
        })
        .collect();
    let modes: Vec<Vec<Vec<f64>>> = (0..CLASSES)
        .map(|_| {
            (0..MODES)
                .map(|_| smooth_field(&mut rng, SIDE, 3, 3.0))
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n * SIDE * SIDE);
    for _ in 0..n {
        let class = rng.random_range(0..CLASSES);
        let coeffs: Vec<f64> = (0..MODES)
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.5 / (1.0 + m as f64) * z
            })
            .collect();
        for k in 0..SIDE * SIDE {
            let mut v = templates[class][k];
            for (m, c) in coeffs.iter().enumerate() {
                v += c * modes[class][m][k];
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            values.push((v + 0.05 * noise).clamp(0.0, 1.0));
        }
    }
    Dataset::from_values(
        values,
        n,
        SIDE * SIDE,
        format!("mnist-like(n={n}, seed={seed})"),
    )
    .expect("generated features are finite")
}

/// Stand-in for a song-year regression table: `n` rows of 90 features,
/// correlated through 12 latent factors, with per-feature scales spread
/// log-uniformly over `[1, 200]`.
pub fn year_like(n: usize, seed: u64) -> Dataset {
    const WIDTH: usize = 90;
    const LATENT: usize = 12;
    let mut rng = child_rng(seed, Stream::Data, 11);
    let scales: Vec<f64> = (0..WIDTH)
        .map(|_| 200f64.powf(rng.random::<f64>()))
        .collect();
    let mixing: Vec<f64> = (0..WIDTH * LATENT)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut values = Vec::with_capacity(n * WIDTH);
    for _ in 0..n {
        let z: Vec<f64> = (0..LATENT)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        for j in 0..WIDTH {
            let signal: f64 = (0..LATENT).map(|t| mixing[j * LATENT + t] * z[t]).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            values.push(scales[j] * (signal / (LATENT as f64).sqrt() + 0.3 * noise));
        }
    }
    Dataset::from_values(values, n, WIDTH, format!("year-like(n={n}, seed={seed})"))
        .expect("generated features are finite")
}

const MATRIX_MAGIC: &[u8; 8] = b"BSRHTMAT";

/// Writes `m` as magic, rows and cols (little-endian `u64`), then the
/// entries column-major as little-endian `f64`.
pub fn write_matrix(m: MatRef<'_, f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for j in 0..m.ncols() {
        for &x in m.col(j).iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    if &word != MATRIX_MAGIC {
        return Err(Error::Data("not a matrix cache file".into()));
    }
    let mut dims = [0usize; 2];
    for d in dims.iter_mut() {
        r.read_exact(&mut word)?;
        *d = usize::try_from(u64::from_le_bytes(word))
            .map_err(|_| Error::Data("matrix dimension overflows".into()))?;
    }
    let [rows, cols] = dims;
    let mut m = Mat::<f64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            r.read_exact(&mut word)?;
            m[(i, j)] = f64::from_le_bytes(word);
        }
    }
    Ok(m)
}
