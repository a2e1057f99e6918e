//! Batch experiment runner behind the `bsrht` binary.
//!
//! Every subcommand writes CSV with a header row to stdout or `--out`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use faer::Mat;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{
    geometric_spectrum, load_csv, mnist_like, rbf_kernel_grid, read_matrix, synthetic_psd,
    write_matrix, year_like, Dataset,
};
use crate::error::{Error, Result};
use crate::lowrank::{
    dense_norm, error_norm, grid_trace, nystrom, nystrom_trace_error, rsvd, single_view, NormKind,
    NystromOptions, SingleViewOps,
};
use crate::ose::{ose_monte_carlo, OseConfig, OseReport};
use crate::partition::{cost_report, distribute, sketch_rowwise, CostReport, DistMatrix, Layout};
use crate::plot::{line_chart_svg, Series};
use crate::rng::{child_rng, child_seed, Stream};
use crate::sketch::{make_operator, min_rows_theorem1, SketchKind};

#[derive(Debug, Parser)]
#[command(name = "bsrht", version, about = "Block SRHT sketching experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo check of the subspace-embedding property.
    Ose(OseArgs),
    /// Low-rank approximation error sweeps.
    Lowrank(LowrankArgs),
    /// Timings and modeled costs of distributed sketch application.
    Bench(BenchArgs),
    /// Build an RBF kernel matrix and store it in the binary cache format.
    KernelBuild(KernelBuildArgs),
    /// Modeled per-worker cost of applying a sketch.
    Cost(CostArgs),
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct OseArgs {
    #[arg(long, value_delimiter = ',', default_value = "bsrht")]
    pub kind: Vec<SketchKind>,
    #[arg(long, default_value_t = 4096)]
    pub n: usize,
    /// Subspace dimension.
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Failure probability used to size `l` when `--l` is not given.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub p: Vec<usize>,
    /// Sketch sizes; defaults to the sample-size bound, capped at `n`.
    #[arg(long, value_delimiter = ',')]
    pub l: Vec<usize>,
    #[arg(long, default_value_t = 1000, value_parser = positive)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Rsvd,
    Nystrom,
    SingleView,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Rsvd => "rsvd",
            Algorithm::Nystrom => "nystrom",
            Algorithm::SingleView => "single-view",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    /// 28×28 digit-like images in [0, 1].
    Mnist,
    /// 90 correlated features on mixed scales.
    Year,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct InputArgs {
    /// Numeric CSV whose rows are data points of an RBF kernel.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic data points of an RBF kernel.
    #[arg(long, value_enum)]
    pub generator: Option<Generator>,
    /// Synthetic PSD spectrum: `geometric:RHO` or `rank:K`.
    #[arg(long)]
    pub spectrum: Option<String>,
    /// Matrix in the binary cache format.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LowrankArgs {
    #[arg(long, value_enum)]
    pub alg: Algorithm,
    #[command(flatten)]
    pub input: InputArgs,
    /// RBF kernel width.
    #[arg(long, default_value_t = 100.0)]
    pub sigma: f64,
    /// Matrix dimension (number of data points used).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub l: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "bsrht,gaussian")]
    pub kind: Vec<SketchKind>,
    /// Grid side: the matrix is split over p × p workers.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub p: usize,
    #[arg(long, default_value_t = 20, value_parser = positive)]
    pub reps: usize,
    /// Error norm; trace for Nyström and Frobenius otherwise by default.
    #[arg(long)]
    pub norm: Option<NormKind>,
    /// Core sketch size for single-view; defaults to 2l + 1.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG chart of the median error against k.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 65536)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048")]
    pub l: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "gaussian,bsrht")]
    pub kind: Vec<SketchKind>,
    /// Timing repetitions; the fastest is reported.
    #[arg(long, default_value_t = 3, value_parser = positive)]
    pub reps: usize,
    /// Refuse configurations whose modeled memory exceeds this many GiB.
    #[arg(long, default_value_t = 4.0)]
    pub max_gib: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelBuildArgs {
    #[arg(
        long,
        conflicts_with = "generator",
        required_unless_present = "generator"
    )]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 100.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, value_delimiter = ',', default_value = "gaussian,bsrht")]
    pub kind: Vec<SketchKind>,
    #[arg(long, default_value_t = 65536)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub l: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub p: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ose(args) => cmd_ose(&args),
        Command::Lowrank(args) => cmd_lowrank(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::KernelBuild(args) => cmd_kernel_build(&args),
        Command::Cost(args) => cmd_cost(&args),
    }
}

pub fn cmd_ose(args: &OseArgs) -> Result<()> {
    let sizes = if args.l.is_empty() {
        let bound = min_rows_theorem1(args.eps, args.delta, args.d, args.n)?;
        if bound > args.n {
            log::info!("sample-size bound {bound} exceeds n = {}; capped", args.n);
        }
        vec![bound.min(args.n)]
    } else {
        args.l.clone()
    };
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", OseReport::CSV_HEADER)?;
    for &kind in &args.kind {
        for &l in &sizes {
            for &p in &args.p {
                let report = ose_monte_carlo(OseConfig {
                    kind,
                    l,
                    n: args.n,
                    p,
                    d: args.d,
                    eps: args.eps,
                    trials: args.trials,
                    seed: args.seed,
                })?;
                writeln!(out, "{}", report.csv_row())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn generate(generator: Generator, n: usize, seed: u64) -> Dataset {
    let seed = child_seed(seed, Stream::Data, 0);
    match generator {
        Generator::Mnist => mnist_like(n, seed),
        Generator::Year => year_like(n, seed),
    }
}

/// Input matrix of a low-rank experiment, grid-distributed.
fn build_input(args: &LowrankArgs) -> Result<DistMatrix> {
    let input = &args.input;
    if let Some(path) = &input.dataset {
        let data = load_csv(path)?;
        let data = data.head(args.n.unwrap_or(data.len()));
        return rbf_kernel_grid(&data, args.sigma, args.p);
    }
    if let Some(generator) = input.generator {
        let data = generate(generator, args.n.unwrap_or(4096), args.seed);
        return rbf_kernel_grid(&data, args.sigma, args.p);
    }
    if let Some(path) = &input.matrix {
        return distribute(read_matrix(path)?.as_ref(), Layout::Grid(args.p));
    }
    let spec = input.spectrum.as_deref().unwrap_or_default();
    let n = args.n.unwrap_or(1024);
    let spectrum = parse_spectrum(spec, n)?;
    let a = synthetic_psd(n, &spectrum, child_seed(args.seed, Stream::Data, 0))?;
    distribute(a.matrix.as_ref(), Layout::Grid(args.p))
}

fn parse_spectrum(spec: &str, n: usize) -> Result<Vec<f64>> {
    let bad = || {
        Error::Parameter(format!(
            "spectrum {spec:?} is not `geometric:RHO` or `rank:K`"
        ))
    };
    let (name, value) = spec.split_once(':').ok_or_else(bad)?;
    match name {
        "geometric" => Ok(geometric_spectrum(n, value.parse().map_err(|_| bad())?)),
        "rank" => {
            let k: usize = value.parse().map_err(|_| bad())?;
            Ok((0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect())
        }
        _ => Err(bad()),
    }
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn cmd_lowrank(args: &LowrankArgs) -> Result<()> {
    let a = build_input(args)?;
    let n = a.nrows();
    let norm = args.norm.unwrap_or(match args.alg {
        Algorithm::Nystrom => NormKind::Trace,
        _ => NormKind::Frobenius,
    });
    let fast_trace = args.alg == Algorithm::Nystrom && norm == NormKind::Trace;
    let dense = if fast_trace { None } else { Some(a.gather()) };
    let reference = match &dense {
        Some(m) => dense_norm(m.as_ref(), norm)?,
        None => grid_trace(&a)?,
    };
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "alg,kind,n,p,l,k,norm,record,rep,rel_error")?;
    let mut series = Vec::new();
    for &kind in &args.kind {
        for &l in &args.l {
            let ks: Vec<usize> = args.k.iter().copied().filter(|&k| k <= l).collect();
            if ks.len() < args.k.len() {
                log::warn!("skipping ranks above l = {l}");
            }
            let Some(&k_max) = ks.iter().max() else {
                continue;
            };
            let mut errors = vec![Vec::with_capacity(args.reps); ks.len()];
            for rep in 0..args.reps {
                let seed = child_seed(args.seed, Stream::Trial, rep as u64);
                let op_seed = |i: u64| child_seed(seed, Stream::Trial, i);
                let factor: Box<dyn Fn(usize) -> Result<f64>> = match args.alg {
                    Algorithm::Nystrom => {
                        let op = make_operator(kind, l, n, args.p, op_seed(0))?;
                        let f = nystrom(&a, &op, k_max, NystromOptions::default())?;
                        let dense = dense.as_ref();
                        Box::new(move |k| {
                            let t = f.truncate(k);
                            match dense {
                                None => Ok(nystrom_trace_error(reference, &t) / reference),
                                Some(m) => Ok(error_norm(m.as_ref(), &t, norm)? / reference),
                            }
                        })
                    }
                    Algorithm::Rsvd | Algorithm::SingleView => {
                        let f = if args.alg == Algorithm::Rsvd {
                            rsvd(
                                &a,
                                &make_operator(kind, l, a.ncols(), args.p, op_seed(0))?,
                                k_max,
                            )?
                        } else {
                            let s = args.s.unwrap_or(2 * l + 1);
                            let omega = make_operator(kind, l, a.ncols(), args.p, op_seed(0))?;
                            let gamma = make_operator(kind, l, n, args.p, op_seed(1))?;
                            let phi = make_operator(kind, s, n, args.p, op_seed(2))?;
                            let psi = make_operator(kind, s, a.ncols(), args.p, op_seed(3))?;
                            let ops = SingleViewOps {
                                omega: &omega,
                                gamma: &gamma,
                                phi: &phi,
                                psi: &psi,
                            };
                            single_view(&a, ops, k_max)?
                        };
                        let m = dense
                            .as_ref()
                            .expect("dense input kept for non-trace norms");
                        Box::new(move |k| {
                            Ok(error_norm(m.as_ref(), &f.truncate(k), norm)? / reference)
                        })
                    }
                };
                for (slot, &k) in ks.iter().enumerate() {
                    let e = factor(k)?;
                    writeln!(
                        out,
                        "{},{kind},{n},{},{l},{k},{norm},run,{rep},{e}",
                        args.alg.name(),
                        args.p
                    )?;
                    errors[slot].push(e);
                }
            }
            let mut medians = Vec::with_capacity(ks.len());
            for (slot, &k) in ks.iter().enumerate() {
                let mut sorted = errors[slot].clone();
                sorted.sort_by(f64::total_cmp);
                for (record, q) in [("median", 0.5), ("lo95", 0.025), ("hi95", 0.975)] {
                    let v = quantile(&sorted, q);
                    writeln!(
                        out,
                        "{},{kind},{n},{},{l},{k},{norm},{record},,{v}",
                        args.alg.name(),
                        args.p
                    )?;
                    if record == "median" {
                        medians.push((k as f64, v));
                    }
                }
            }
            series.push(Series {
                label: format!("{kind} l={l}"),
                points: medians,
            });
        }
    }
    out.flush()?;
    if let Some(path) = &args.plot {
        let svg = line_chart_svg(
            &format!("{} relative {norm} error, n = {n}", args.alg.name()),
            "k",
            "relative error",
            &series,
            true,
        );
        std::fs::write(path, svg)?;
    }
    Ok(())
}

/// One row of `bench` output.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: SketchKind,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub p: usize,
    pub wall_total: Duration,
    pub wall_local_max: Duration,
    pub cost: CostReport,
    pub memory_bytes: usize,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "kind,n,d,l,p,wall_seconds_total,wall_seconds_local_max,\
modeled_flops,modeled_words,memory_bytes_per_worker";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.kind,
            self.n,
            self.d,
            self.l,
            self.p,
            self.wall_total.as_secs_f64(),
            self.wall_local_max.as_secs_f64(),
            self.cost.flops_per_worker,
            self.cost.words_reduced,
            self.memory_bytes
        )
    }
}

/// Times `Ω V` for a Gaussian `n × d` matrix `V` split over `p` workers.
///
/// `wall_total` covers the whole distributed application including the
/// reduce. `wall_local_max` is the slowest local block product, with blocks
/// timed one after another so concurrent workers do not share cores. Both
/// are minima over `reps` repetitions.
pub fn bench_one(
    kind: SketchKind,
    n: usize,
    d: usize,
    l: usize,
    p: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchRow> {
    let op = make_operator(kind, l, n, p, seed)?;
    let mut rng = child_rng(seed, Stream::Data, 0);
    let v = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let dist = distribute(v.as_ref(), Layout::RowBlocks(p))?;
    drop(v);
    let mut wall_total = Duration::MAX;
    let mut wall_local_max = Duration::MAX;
    for _ in 0..reps.max(1) {
        let mut slowest = Duration::ZERO;
        for i in 0..p {
            let start = Instant::now();
            let local = op.apply_block_local(i, dist.block(i, 0))?;
            slowest = slowest.max(start.elapsed());
            drop(local);
        }
        wall_local_max = wall_local_max.min(slowest);
        let start = Instant::now();
        let sketch = sketch_rowwise(&op, &dist)?;
        wall_total = wall_total.min(start.elapsed());
        drop(sketch);
    }
    let cost = cost_report(&op, d);
    let word = std::mem::size_of::<f64>();
    Ok(BenchRow {
        kind,
        n,
        d,
        l,
        p,
        wall_total,
        wall_local_max,
        cost,
        memory_bytes: op.block_len() * d * word + l * d * word + cost.operator_bytes,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let limit = args.max_gib * (1u64 << 30) as f64;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", BenchRow::CSV_HEADER)?;
    for &kind in &args.kind {
        for &p in &args.p {
            for &l in &args.l {
                let op = make_operator(kind, l, args.n, p, args.seed)?;
                let word = std::mem::size_of::<f64>() as f64;
                let modeled = 2.0 * (op.padded_dim() * args.d) as f64 * word
                    + p as f64 * (op.local_memory_bytes() as f64 + (l * args.d) as f64 * word);
                if modeled > limit {
                    return Err(Error::Size(format!(
                        "{kind} with n={}, l={l}, p={p} needs about {:.2} GiB (limit {} GiB)",
                        args.n,
                        modeled / (1u64 << 30) as f64,
                        args.max_gib
                    )));
                }
                let row = bench_one(kind, args.n, args.d, l, p, args.reps, args.seed)?;
                writeln!(out, "{}", row.csv_row())?;
                out.flush()?;
            }
        }
    }
    Ok(())
}

pub fn cmd_kernel_build(args: &KernelBuildArgs) -> Result<()> {
    let data = match (&args.dataset, args.generator) {
        (Some(path), _) => {
            let data = load_csv(path)?;
            data.head(args.n.unwrap_or(data.len()))
        }
        (None, Some(generator)) => generate(generator, args.n.unwrap_or(4096), args.seed),
        (None, None) => return Err(Error::Parameter("no input data given".into())),
    };
    let kernel = rbf_kernel_grid(&data, args.sigma, args.p)?.gather();
    write_matrix(kernel.as_ref(), &args.out)?;
    eprintln!(
        "wrote {}×{} RBF kernel (sigma = {}) of {} to {}",
        kernel.nrows(),
        kernel.ncols(),
        args.sigma,
        data.source(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_cost(args: &CostArgs) -> Result<()> {
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", CostReport::CSV_HEADER)?;
    for &kind in &args.kind {
        for &l in &args.l {
            for &p in &args.p {
                let op = make_operator(kind, l, args.n, p, 0)?;
                writeln!(out, "{}", cost_report(&op, args.d).csv_row(&op, args.d))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.025) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn spectra() {
        assert_eq!(
            parse_spectrum("rank:2", 4).unwrap(),
            vec![1.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(
            parse_spectrum("geometric:0.5", 3).unwrap(),
            vec![1.0, 0.5, 0.25]
        );
        assert!(parse_spectrum("flat", 3).is_err());
    }

    #[test]
    fn parser_rejects_zero_trials() {
        let err = Cli::try_parse_from(["bsrht", "ose", "--trials", "0"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bench_small() {
        let row = bench_one(SketchKind::BlockSrht, 256, 2, 16, 1, 1, 0).unwrap();
        assert!(row.csv_row().starts_with("bsrht,256,2,16,1,"));
    }
}
