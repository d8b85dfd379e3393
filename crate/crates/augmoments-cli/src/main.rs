//! Command-line front end: every experiment the library supports as a
//! reproducible subcommand emitting PGM images, CSV tables and AMTF
//! tensors, each with a JSON manifest sufficient to re-run the command.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use augmoments::dataio::{
    read_idx, read_pgm, synth_digits, synth_image, write_csv, write_pgm, write_tensor,
};
use augmoments::distribution::ParamDistribution;
use augmoments::grid::{Grid, Image};
use augmoments::losses::{
    expected_mse, optimal_linear, AugmentedDataset, AugmentedSample, Covariance, LinearModel,
};
use augmoments::mat::Mat;
use augmoments::moments::{
    expected_image, expected_operator, moment_set, operator_rule, variance_profile,
};
use augmoments::montecarlo::{
    convergence_sweep, dataset_moments, sgd_train_linear, TrainConfig, TrainMode,
};
use augmoments::spectral::{eig_sym, rank_sweep, top_eigvec_images};
use augmoments::transform::TransformKind;
use augmoments::{Error, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "augmoments",
    version,
    about = "Exact moments, losses and spectra of images under randomized augmentations"
)]
struct Cli {
    /// Worker thread cap (also via AUGMOMENTS_THREADS); default: all cores
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expected augmented image of a PGM input
    ExpectedImage(ExpectedImageArgs),
    /// Expected operator matrix E[M(theta)] as an AMTF tensor
    ExpectedOperator(ExpectedOperatorArgs),
    /// Per-pixel augmentation variance (and optional covariance rows)
    VarianceMap(VarianceMapArgs),
    /// Leading eigenvectors of the augmentation variance as images
    Eigvecs(EigvecsArgs),
    /// Numerical rank of the variance across amplitudes
    RankSweep(RankSweepArgs),
    /// Monte-Carlo estimate error vs sample count
    McConverge(McConvergeArgs),
    /// Train a linear one-hot regressor: sampled augmentation vs analytic
    TrainLinear(TrainLinearArgs),
    /// Closed-form expected MSE of a stored linear model
    ExpectedLoss(ExpectedLossArgs),
    /// Closed-form optimal linear model under augmentation
    OptimalW(OptimalWArgs),
}

/// Input image source shared by the image-based subcommands: either a
/// PGM file or a seeded synthetic image on an explicit grid.
#[derive(Args, Serialize)]
struct ImageSource {
    /// Input PGM image
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Synthetic image grid as HxW (used when --in is absent)
    #[arg(long)]
    grid: Option<String>,
    /// Seed of the synthetic image
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl ImageSource {
    fn load(&self) -> Result<Image<f64>> {
        match (&self.input, &self.grid) {
            (Some(path), _) => read_pgm(path),
            (None, Some(spec)) => {
                let grid = parse_grid(spec)?;
                synth_image(grid, self.synth_seed, 0.2)
            }
            (None, None) => Err(Error::Argument(
                "provide either --in <pgm> or --grid HxW".into(),
            )),
        }
    }
}

#[derive(Args, Serialize)]
struct ExpectedImageArgs {
    /// Transform kind: translation, rotation, zoom, shear-h, shear-v
    #[arg(long)]
    kind: String,
    /// Distribution literal, e.g. "prod(gauss(0,0.04),gauss(0,0.04))"
    #[arg(long)]
    dist: String,
    #[command(flatten)]
    source: ImageSource,
    /// Output PGM image
    #[arg(long)]
    out: PathBuf,
    /// Exact expected image as an AMTF tensor (optional)
    #[arg(long)]
    tensor_out: Option<PathBuf>,
    /// Quadrature nodes per smooth panel
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct ExpectedOperatorArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    /// Grid as HxW
    #[arg(long)]
    grid: String,
    /// Output AMTF tensor (D x D)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct VarianceMapArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    #[command(flatten)]
    source: ImageSource,
    /// Output AMTF tensor holding the H x W variance diagonal
    #[arg(long)]
    out: PathBuf,
    /// Flat pixel indices whose covariance rows are also emitted
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
    /// Output AMTF tensor for the covariance rows (r x D)
    #[arg(long)]
    rows_out: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct EigvecsArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    #[command(flatten)]
    source: ImageSource,
    /// Number of leading eigenvectors to emit
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Output directory: eigvec_NN.pgm plus eigenvalues.csv
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct RankSweepArgs {
    #[arg(long)]
    kind: String,
    #[command(flatten)]
    source: ImageSource,
    /// Amplitudes a of the uniform(-a, a) sweep, ascending; degrees for
    /// rotation, normalized units otherwise; 0 means the Dirac limit
    #[arg(long, value_delimiter = ',', required = true)]
    amplitudes: Vec<f64>,
    /// Output CSV: amplitude,rank,lambda_max,trace
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct McConvergeArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    #[command(flatten)]
    source: ImageSource,
    /// Sample counts, strictly increasing
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Independent repetitions
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also track the loss error of a seeded probe linear model
    #[arg(long, default_value_t = false)]
    probe_loss: bool,
    /// Output CSV: n,run,img_l2_err,loss_abs_err,seed
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct TrainLinearArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    /// Training images in IDX layout (with --train-labels); when absent a
    /// synthetic digit set is generated instead
    #[arg(long, requires = "train_labels")]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long, requires = "test_labels")]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Synthetic set grid as HxW (when no IDX paths are given)
    #[arg(long, default_value = "28x28")]
    synth_grid: String,
    #[arg(long, default_value_t = 1000)]
    train_size: usize,
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
    /// Augmentations per sample per epoch, or "analytic" (closed form) or
    /// "analytic-gd" (gradient descent on the exact expected loss)
    #[arg(long, default_value = "1")]
    n_aug: String,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: train_size,n_aug,epoch,test_mse,test_acc,seed
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct ExpectedLossArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    /// Model weights, AMTF K x D
    #[arg(long)]
    weights: PathBuf,
    /// Model bias, AMTF length-K vector
    #[arg(long)]
    bias: PathBuf,
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "28x28")]
    synth_grid: String,
    #[arg(long, default_value_t = 100)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON holding the expected MSE
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
}

#[derive(Args, Serialize)]
struct OptimalWArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dist: String,
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "28x28")]
    synth_grid: String,
    #[arg(long, default_value_t = 100)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output AMTF for the K x D weights; bias goes next to it
    #[arg(long)]
    weights_out: PathBuf,
    #[arg(long)]
    bias_out: PathBuf,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
}

fn parse_grid(spec: &str) -> Result<Grid> {
    let (h, w) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Argument(format!("grid must be HxW, got {spec:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Argument(format!("bad grid dimension {s:?}")))
    };
    Grid::new(parse(h)?, parse(w)?)
}

fn parse_kind(name: &str) -> Result<TransformKind> {
    name.parse()
}

/// Tracks files written by the current run so they can be removed if a
/// later step fails: a run either delivers all outputs or none.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            written: Vec::new(),
        }
    }

    fn emit(&mut self, path: &Path, write: impl FnOnce() -> Result<()>) -> Result<()> {
        write()?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn discard_all(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn write_manifest(
    out: &mut Outputs,
    dir_of: &Path,
    name: &str,
    config: impl Serialize,
    seed: Option<u64>,
    started: Instant,
) -> Result<()> {
    let manifest = serde_json::json!({
        "command": name,
        "config": serde_json::to_value(&config).map_err(|e| Error::Format(e.to_string()))?,
        "seed": seed,
        "version": VERSION,
        "walltime_seconds": started.elapsed().as_secs_f64(),
    });
    let path = dir_of
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .join(format!(
            "{}.manifest.json",
            dir_of
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("run")
        ));
    out.emit(&path, || {
        std::fs::write(&path, format!("{:#}\n", manifest)).map_err(Error::Io)
    })
}

fn image_tensor(img: &Image<f64>) -> (Vec<u64>, Vec<f64>) {
    let g = img.grid();
    (
        vec![g.height() as u64, g.width() as u64],
        img.data().to_vec(),
    )
}

/// Affine rescale of arbitrary-range data onto [0, 1] for PGM output.
fn normalized_image(grid: Grid, data: &[f64]) -> Result<Image<f64>> {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image::new(grid, data.iter().map(|&v| (v - lo) / span).collect())
}

fn run_expected_image(a: &ExpectedImageArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let img = a.source.load()?;
    let quad = operator_rule(kind, &dist, img.grid(), a.nodes)?;
    let op = expected_operator(kind, &dist, img.grid(), &quad)?;
    let expected = expected_image(&op, &img)?;
    out.emit(&a.out, || write_pgm(&a.out, &expected))?;
    if let Some(tpath) = &a.tensor_out {
        let (dims, data) = image_tensor(&expected);
        out.emit(tpath, || write_tensor(tpath, &dims, &data))?;
    }
    write_manifest(out, &a.out, "expected-image", a, None, started)
}

fn run_expected_operator(
    a: &ExpectedOperatorArgs,
    out: &mut Outputs,
    started: Instant,
) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let grid = parse_grid(&a.grid)?;
    let quad = operator_rule(kind, &dist, grid, a.nodes)?;
    let op = expected_operator(kind, &dist, grid, &quad)?;
    let d = grid.dim() as u64;
    out.emit(&a.out, || {
        write_tensor(&a.out, &[d, d], op.matrix().data())
    })?;
    write_manifest(out, &a.out, "expected-operator", a, None, started)
}

fn run_variance_map(a: &VarianceMapArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let img = a.source.load()?;
    let grid = img.grid();
    let quad = operator_rule(kind, &dist, grid, a.nodes)?;
    let (diag, rows) = variance_profile(kind, &dist, &img, &quad, &a.rows)?;
    out.emit(&a.out, || {
        write_tensor(
            &a.out,
            &[grid.height() as u64, grid.width() as u64],
            &diag,
        )
    })?;
    if !a.rows.is_empty() {
        let rows_out = a
            .rows_out
            .clone()
            .ok_or_else(|| Error::Argument("--rows requires --rows-out".into()))?;
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        out.emit(&rows_out, || {
            write_tensor(
                &rows_out,
                &[a.rows.len() as u64, grid.dim() as u64],
                &flat,
            )
        })?;
    }
    write_manifest(out, &a.out, "variance-map", a, None, started)
}

fn run_eigvecs(a: &EigvecsArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let img = a.source.load()?;
    let quad = operator_rule(kind, &dist, img.grid(), a.nodes)?;
    let ms = moment_set(kind, &dist, &img, &quad)?;
    let factor = eig_sym(ms.variance())?;
    let count = a.count.min(factor.rank());
    let vecs = top_eigvec_images(&factor, img.grid(), count)?;
    std::fs::create_dir_all(&a.out_dir)?;
    for (i, v) in vecs.iter().enumerate() {
        let path = a.out_dir.join(format!("eigvec_{i:02}.pgm"));
        let rescaled = normalized_image(img.grid(), v.data())?;
        out.emit(&path, || write_pgm(&path, &rescaled))?;
    }
    let csv = a.out_dir.join("eigenvalues.csv");
    let rows: Vec<String> = factor
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &l)| format!("{i},{l}"))
        .collect();
    out.emit(&csv, || write_csv(&csv, "index,eigenvalue", &rows))?;
    write_manifest(
        out,
        &a.out_dir.join("run"),
        "eigvecs",
        a,
        None,
        started,
    )
}

/// Uniform(-a, a) on each transform parameter at sweep amplitude `a`;
/// amplitude zero degenerates to the Dirac identity.
fn sweep_distribution(kind: TransformKind, amp: f64) -> Result<ParamDistribution<f64>> {
    let scalar = |a: f64| {
        if a == 0.0 {
            ParamDistribution::dirac(if matches!(kind, TransformKind::Zoom) {
                1.0
            } else {
                0.0
            })
        } else if matches!(kind, TransformKind::Zoom) {
            ParamDistribution::uniform(1.0 - a, 1.0 + a)
        } else {
            ParamDistribution::uniform(-a, a)
        }
    };
    match kind.arity() {
        2 => ParamDistribution::product(scalar(amp)?, scalar(amp)?),
        _ => scalar(amp),
    }
}

fn run_rank_sweep(a: &RankSweepArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let img = a.source.load()?;
    // rotation amplitudes are spoken in degrees at the CLI
    let scale = if matches!(kind, TransformKind::Rotation) {
        std::f64::consts::PI / 180.0
    } else {
        1.0
    };
    let amplitudes: Vec<f64> = a.amplitudes.iter().map(|&d| d * scale).collect();
    let records = rank_sweep(
        kind,
        &img,
        &amplitudes,
        |amp| sweep_distribution(kind, amp),
        a.nodes,
    )?;
    let rows: Vec<String> = records
        .iter()
        .zip(&a.amplitudes)
        .map(|(r, &amp_in)| format!("{},{},{},{}", amp_in, r.rank, r.lambda_max, r.trace))
        .collect();
    out.emit(&a.out, || {
        write_csv(&a.out, "amplitude,rank,lambda_max,trace", &rows)
    })?;
    write_manifest(out, &a.out, "rank-sweep", a, None, started)
}

/// Seeded probe model for loss-error tracking: K=8 random rows, targets
/// offset from the model's own prediction at the expected image.
fn probe_model(img: &Image<f64>, seed: u64) -> Result<(LinearModel<f64>, Vec<f64>)> {
    let d = img.grid().dim();
    let k = 8usize;
    let weights = Mat::from_fn(k, d, |i, j| {
        let x = ((i * d + j) as u64)
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(seed.wrapping_mul(0xBF58476D1CE4E5B9));
        (((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5) / (d as f64).sqrt()
    });
    let model = LinearModel::new(weights, vec![0.0; k])?;
    let mut target = model.predict(img.data())?;
    for t in target.iter_mut() {
        *t += 0.25;
    }
    Ok((model, target))
}

fn run_mc_converge(a: &McConvergeArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let img = a.source.load()?;
    let quad = operator_rule(kind, &dist, img.grid(), a.nodes)?;
    let probe = if a.probe_loss {
        Some(probe_model(&img, a.seed)?)
    } else {
        None
    };
    let model_target = probe.as_ref().map(|(m, t)| (m, t.as_slice()));
    let records = convergence_sweep(
        kind,
        &dist,
        &img,
        model_target,
        &quad,
        &a.n,
        a.runs,
        a.seed,
    )?;
    let rows: Vec<String> = records.iter().map(|r| r.csv_row()).collect();
    out.emit(&a.out, || {
        write_csv(&a.out, "n,run,img_l2_err,loss_abs_err,seed", &rows)
    })?;
    write_manifest(out, &a.out, "mc-converge", a, Some(a.seed), started)
}

fn load_labeled(
    images: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    synth_grid: &str,
    size: usize,
    seed: u64,
) -> Result<augmoments::dataio::LabeledDataset<f64>> {
    match (images, labels) {
        (Some(im), Some(lb)) => {
            let full = read_idx::<f64>(im, lb, 10)?;
            full.slice(0, size.min(full.len()))
        }
        _ => synth_digits(parse_grid(synth_grid)?, size, seed),
    }
}

fn run_train_linear(a: &TrainLinearArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let train = load_labeled(
        &a.train_images,
        &a.train_labels,
        &a.synth_grid,
        a.train_size,
        a.seed.wrapping_add(101),
    )?;
    let test = load_labeled(
        &a.test_images,
        &a.test_labels,
        &a.synth_grid,
        a.test_size,
        a.seed.wrapping_add(202),
    )?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        seed: a.seed,
    };
    let quad = operator_rule(kind, &dist, train.grid(), a.nodes)?;
    let analytic_moments = if a.n_aug == "analytic" || a.n_aug == "analytic-gd" {
        Some(dataset_moments(train.images(), kind, &dist, &quad)?)
    } else {
        None
    };
    let mode = match a.n_aug.as_str() {
        "analytic" => TrainMode::ClosedForm(analytic_moments.as_ref().unwrap()),
        "analytic-gd" => TrainMode::AnalyticGd(analytic_moments.as_ref().unwrap()),
        n => TrainMode::Sampled {
            n_aug: n.parse().map_err(|_| {
                Error::Argument(format!(
                    "--n-aug must be a count, \"analytic\" or \"analytic-gd\", got {n:?}"
                ))
            })?,
        },
    };
    let points = sgd_train_linear(&train, &test, kind, &dist, mode, &cfg)?;
    let rows: Vec<String> = points
        .iter()
        .map(|p| p.csv_row(train.len(), &a.n_aug, a.seed))
        .collect();
    out.emit(&a.out, || {
        write_csv(&a.out, "train_size,n_aug,epoch,test_mse,test_acc,seed", &rows)
    })?;
    write_manifest(out, &a.out, "train-linear", a, Some(a.seed), started)
}

fn augmented_dataset(
    set: &augmoments::dataio::LabeledDataset<f64>,
    kind: TransformKind,
    dist: &ParamDistribution<f64>,
    nodes: usize,
) -> Result<AugmentedDataset<f64>> {
    let quad = operator_rule(kind, dist, set.grid(), nodes)?;
    let samples = (0..set.len())
        .map(|n| {
            let ms = moment_set(kind, dist, &set.images()[n], &quad)?;
            Ok(AugmentedSample {
                mean: ms.mean().data().to_vec(),
                cov: Covariance::Dense(ms.variance().clone()),
                target: set.one_hot(n),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AugmentedDataset::new(samples)
}

fn read_matrix(path: &Path, rows: Option<usize>) -> Result<Mat<f64>> {
    let (dims, data) = augmoments::dataio::read_tensor(path)?;
    match dims.as_slice() {
        [r, c] => Mat::from_vec(*r as usize, *c as usize, data),
        [n] if rows == Some(1) => Mat::from_vec(1, *n as usize, data),
        _ => Err(Error::Shape(format!(
            "{} does not hold a matrix (dims {dims:?})",
            path.display()
        ))),
    }
}

fn run_expected_loss(a: &ExpectedLossArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let set = load_labeled(&a.images, &a.labels, &a.synth_grid, a.size, a.seed)?;
    let weights = read_matrix(&a.weights, None)?;
    let bias = read_matrix(&a.bias, Some(1))?;
    let model = LinearModel::new(weights, bias.data().to_vec())?;
    let data = augmented_dataset(&set, kind, &dist, a.nodes)?;
    let loss = expected_mse(&model, &data)?;
    let report = serde_json::json!({ "expected_mse": loss, "samples": data.len() });
    out.emit(&a.out, || {
        std::fs::write(&a.out, format!("{:#}\n", report)).map_err(Error::Io)
    })?;
    write_manifest(out, &a.out, "expected-loss", a, Some(a.seed), started)
}

fn run_optimal_w(a: &OptimalWArgs, out: &mut Outputs, started: Instant) -> Result<()> {
    let kind = parse_kind(&a.kind)?;
    let dist = ParamDistribution::parse(&a.dist)?;
    let set = load_labeled(&a.images, &a.labels, &a.synth_grid, a.size, a.seed)?;
    let data = augmented_dataset(&set, kind, &dist, a.nodes)?;
    let opt = optimal_linear(&data)?;
    let (k, d) = (opt.model.out_dim() as u64, opt.model.dim() as u64);
    out.emit(&a.weights_out, || {
        write_tensor(&a.weights_out, &[k, d], opt.model.weights().data())
    })?;
    out.emit(&a.bias_out, || {
        write_tensor(&a.bias_out, &[k], opt.model.bias())
    })?;
    if let Some(j) = opt.jitter {
        eprintln!("note: normal equations needed a ridge of {j:e} (condition >= {:.3e})", opt.condition);
    }
    write_manifest(out, &a.weights_out, "optimal-w", a, Some(a.seed), started)
}

fn dispatch(cli: &Cli, out: &mut Outputs) -> Result<()> {
    let started = Instant::now();
    match &cli.command {
        Command::ExpectedImage(a) => run_expected_image(a, out, started),
        Command::ExpectedOperator(a) => run_expected_operator(a, out, started),
        Command::VarianceMap(a) => run_variance_map(a, out, started),
        Command::Eigvecs(a) => run_eigvecs(a, out, started),
        Command::RankSweep(a) => run_rank_sweep(a, out, started),
        Command::McConverge(a) => run_mc_converge(a, out, started),
        Command::TrainLinear(a) => run_train_linear(a, out, started),
        Command::ExpectedLoss(a) => run_expected_loss(a, out, started),
        Command::OptimalW(a) => run_optimal_w(a, out, started),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("AUGMOMENTS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if t == 0 {
            eprintln!("augmoments: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("augmoments: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let mut out = Outputs::new();
    match dispatch(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.discard_all();
            eprintln!("augmoments: {e}");
            let usage = matches!(
                e,
                Error::Argument(_) | Error::Range(_) | Error::Unsupported(_)
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
