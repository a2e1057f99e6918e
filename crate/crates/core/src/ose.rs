//! Embedding-quality diagnostics.
//!
//! An operator `Ω` is an ε-embedding of a subspace with orthonormal basis
//! `V` when every singular value of `ΩV` lies in `[√(1−ε), √(1+ε)]`.
//! [`subspace_distortion`] measures the smallest such ε, and
//! [`ose_monte_carlo`] estimates how often a freshly drawn operator misses a
//! target ε on random subspaces.

use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::tsqr;
use crate::rng::{child_rng, child_seed, Stream};
use crate::sketch::{make_operator, SketchKind, SketchOperator};

/// Extreme singular values of `ΩV` and the distortion they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `max(|1 − σ_min²|, |σ_max² − 1|)`.
    pub eps_hat: f64,
}

impl DistortionReport {
    fn from_extremes(sigma_min: f64, sigma_max: f64) -> Self {
        let eps_hat = (1.0 - sigma_min * sigma_min)
            .abs()
            .max((sigma_max * sigma_max - 1.0).abs());
        Self {
            sigma_min,
            sigma_max,
            eps_hat,
        }
    }
}

/// Distortion of `op` on `span(V)`. `V` must have orthonormal columns.
pub fn subspace_distortion(op: &SketchOperator, v: MatRef<'_, f64>) -> Result<DistortionReport> {
    let d = v.ncols();
    let defect = (v.transpose() * v - Mat::<f64>::identity(d, d)).norm_l2();
    if !(defect <= 1e-10) {
        return Err(Error::NotOrthonormal(defect));
    }
    if d == 0 {
        return Ok(DistortionReport::from_extremes(1.0, 1.0));
    }
    let w = op.apply_dense(v)?;
    let s = w
        .singular_values()
        .map_err(|e| Error::Factorization(format!("SVD did not converge: {e:?}")))?;
    let sigma_max = s.iter().copied().fold(0.0, f64::max);
    // Fewer rows than columns leaves a null direction in span(V).
    let sigma_min = if w.nrows() < d {
        0.0
    } else {
        s.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(DistortionReport::from_extremes(sigma_min, sigma_max))
}

/// Orthonormal basis of a random `d`-dimensional subspace of `ℝⁿ`, the Q
/// factor of an `n × d` Gaussian matrix.
pub fn random_orthonormal(n: usize, d: usize, seed: u64) -> Result<Mat<f64>> {
    let mut rng = child_rng(seed, Stream::Data, 0);
    let g = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    Ok(tsqr(g.as_ref(), 1)?.q)
}

/// Configuration of one Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OseConfig {
    pub kind: SketchKind,
    pub l: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OseReport {
    pub config: OseConfig,
    pub failures: usize,
    pub mean_eps_hat: f64,
    pub max_eps_hat: f64,
}

impl OseReport {
    pub const CSV_HEADER: &'static str = "kind,n,p,d,l,eps,trials,failures,failure_rate";

    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.config.trials as f64
    }

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            c.kind,
            c.n,
            c.p,
            c.d,
            c.l,
            c.eps,
            c.trials,
            self.failures,
            self.failure_rate()
        )
    }
}

/// Draws `trials` independent (operator, subspace) pairs and counts those
/// with `eps_hat > eps`. Trial `t` uses seeds derived from `(seed, t)`, so
/// the result does not depend on scheduling.
pub fn ose_monte_carlo(config: OseConfig) -> Result<OseReport> {
    if config.trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    if config.d > config.n {
        return Err(Error::Parameter(format!(
            "subspace dimension {} exceeds ambient dimension {}",
            config.d, config.n
        )));
    }
    let eps_hats = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = child_seed(config.seed, Stream::Trial, t as u64);
            let op = make_operator(config.kind, config.l, config.n, config.p, trial_seed)?;
            let v = random_orthonormal(config.n, config.d, trial_seed)?;
            Ok(subspace_distortion(&op, v.as_ref())?.eps_hat)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(OseReport {
        config,
        failures: eps_hats.iter().filter(|&&e| e > config.eps).count(),
        mean_eps_hat: eps_hats.iter().sum::<f64>() / eps_hats.len() as f64,
        max_eps_hat: eps_hats.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_operator_is_isometry() {
        let op = make_operator(
            SketchKind::Srht {
                with_replacement: false,
            },
            64,
            64,
            1,
            3,
        )
        .unwrap();
        let v = random_orthonormal(64, 5, 1).unwrap();
        let report = subspace_distortion(&op, v.as_ref()).unwrap();
        assert!(report.eps_hat <= 1e-10);
    }

    #[test]
    fn short_sketch_reports_rank_deficiency() {
        let op = make_operator(SketchKind::BlockSrht, 1, 4, 4, 0).unwrap();
        let v = random_orthonormal(4, 2, 1).unwrap();
        let report = subspace_distortion(&op, v.as_ref()).unwrap();
        assert_eq!(report.sigma_min, 0.0);
        assert!(report.eps_hat >= 1.0);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let op = make_operator(SketchKind::Gaussian, 8, 16, 1, 0).unwrap();
        let v = Mat::from_fn(16, 2, |i, j| (i + j) as f64);
        assert!(matches!(
            subspace_distortion(&op, v.as_ref()),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn basis_rotation_invariance() {
        let op = make_operator(SketchKind::BlockSrht, 32, 128, 2, 5).unwrap();
        let v = random_orthonormal(128, 4, 2).unwrap();
        let w = random_orthonormal(4, 4, 3).unwrap();
        let a = subspace_distortion(&op, v.as_ref()).unwrap();
        let b = subspace_distortion(&op, (&v * &w).as_ref()).unwrap();
        assert!((a.sigma_min - b.sigma_min).abs() <= 1e-12);
        assert!((a.sigma_max - b.sigma_max).abs() <= 1e-12);
    }

    #[test]
    fn monte_carlo_full_transform_never_fails() {
        let config = OseConfig {
            kind: SketchKind::Srht {
                with_replacement: false,
            },
            l: 128,
            n: 128,
            p: 2,
            d: 6,
            eps: 1e-8,
            trials: 20,
            seed: 4,
        };
        let report = ose_monte_carlo(config).unwrap();
        assert_eq!(report.failures, 0);
        assert_eq!(report.csv_row(), "srht,128,2,6,128,0.00000001,20,0,0");
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let config = OseConfig {
            kind: SketchKind::BlockSrht,
            l: 24,
            n: 256,
            p: 4,
            d: 4,
            eps: 0.5,
            trials: 30,
            seed: 11,
        };
        let a = ose_monte_carlo(config).unwrap();
        let b = ose_monte_carlo(config).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.failure_rate()));
        assert!(ose_monte_carlo(OseConfig {
            trials: 0,
            ..config
        })
        .is_err());
    }
}
