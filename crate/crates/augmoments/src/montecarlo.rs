//! Seeded Monte-Carlo estimation of augmented moments and losses, the
//! convergence harness that compares them against the deterministic
//! quadrature values, and the SGD baseline trainer for the one-hot
//! regression experiments.
//!
//! Determinism: every run draws from a ChaCha8 stream derived from the
//! recorded seed (run r uses seed + r), and draws within a run are
//! sequential, so identical inputs and seed reproduce results bit for
//! bit. Independent runs may execute in parallel; records are keyed by
//! run index so scheduling cannot change the output.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::distribution::{seeded_rng, stream_rng, ParamDistribution, QuadratureRule};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::grid::Image;
use crate::losses::{solve_normal_equations, LinearModel};
use crate::mat::{dot, Mat};
use crate::moments::expected_operator;
use crate::num::Scalar;
use crate::transform::{build_operator, reference_transform, TransformKind};

/// Mean of `reference_transform` over `n` i.i.d. parameter draws.
pub fn mc_expected_image<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    img: &Image<F>,
    n: usize,
    seed: u64,
) -> Result<Image<F>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut acc = vec![F::zero(); img.grid().dim()];
    for _ in 0..n {
        let theta = dist.sample(&mut rng);
        let t = reference_transform(kind, &theta, img)?;
        for (a, &v) in acc.iter_mut().zip(t.data()) {
            *a = *a + v;
        }
    }
    let inv = F::one() / F::of(n as f64);
    for a in acc.iter_mut() {
        *a = *a * inv;
    }
    Image::new(img.grid(), acc)
}

/// Mean per-draw MSE of one sample over `n` i.i.d. parameter draws.
pub fn mc_expected_mse<F: Scalar>(
    model: &LinearModel<F>,
    img: &Image<F>,
    target: &[F],
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    n: usize,
    seed: u64,
) -> Result<F> {
    if n == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut acc = F::zero();
    for _ in 0..n {
        let theta = dist.sample(&mut rng);
        let t = reference_transform(kind, &theta, img)?;
        let r = model.residual(t.data(), target)?;
        acc = acc + dot(&r, &r);
    }
    Ok(acc / F::of(n as f64))
}

/// One (sample count, run) cell of the convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord<F> {
    pub n_samples: usize,
    pub run_index: usize,
    pub image_l2_error: F,
    pub loss_abs_error: F,
    pub seed: u64,
}

impl<F: Scalar> ConvergenceRecord<F> {
    /// CSV row in the `n,run,img_l2_err,loss_abs_err,seed` schema.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.n_samples,
            self.run_index,
            self.image_l2_error.as_f64(),
            self.loss_abs_error.as_f64(),
            self.seed
        )
    }
}

/// MC estimates vs the quadrature references over a grid of sample
/// counts, repeated over independent runs. Within a run the draws are
/// shared across sample counts (each n uses the first n draws of the
/// run's stream). The loss error column is zero when no model is given.
pub fn convergence_sweep<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    img: &Image<F>,
    model_target: Option<(&LinearModel<F>, &[F])>,
    quad: &QuadratureRule<F>,
    n_grid: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRecord<F>>> {
    if n_grid.is_empty() || runs == 0 {
        return Err(Error::Argument("need at least one sample count and one run".into()));
    }
    for w in n_grid.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Argument("sample counts must be strictly increasing".into()));
        }
    }
    if n_grid[0] == 0 {
        return Err(Error::Argument("sample counts must be positive".into()));
    }

    // deterministic quadrature references
    let d = img.grid().dim();
    let mut ref_mean = vec![F::zero(); d];
    let mut ref_loss = F::zero();
    for (theta, w) in quad.nodes() {
        let t = reference_transform(kind, theta, img)?;
        for (a, &v) in ref_mean.iter_mut().zip(t.data()) {
            *a = *a + *w * v;
        }
        if let Some((model, target)) = model_target {
            let r = model.residual(t.data(), target)?;
            ref_loss = ref_loss + *w * dot(&r, &r);
        }
    }

    let run_records = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<ConvergenceRecord<F>>> {
            let run_seed = seed.wrapping_add(run as u64);
            let mut rng = stream_rng(seed, run as u64);
            let mut img_acc = vec![F::zero(); d];
            let mut loss_acc = F::zero();
            let mut records = Vec::with_capacity(n_grid.len());
            let mut drawn = 0usize;
            for &n in n_grid {
                while drawn < n {
                    let theta = dist.sample(&mut rng);
                    let t = reference_transform(kind, &theta, img)?;
                    for (a, &v) in img_acc.iter_mut().zip(t.data()) {
                        *a = *a + v;
                    }
                    if let Some((model, target)) = model_target {
                        let r = model.residual(t.data(), target)?;
                        loss_acc = loss_acc + dot(&r, &r);
                    }
                    drawn += 1;
                }
                let inv = F::one() / F::of(n as f64);
                let image_l2_error = img_acc
                    .iter()
                    .zip(&ref_mean)
                    .map(|(&a, &m)| {
                        let e = a * inv - m;
                        e * e
                    })
                    .sum::<F>()
                    .sqrt();
                let loss_abs_error = if model_target.is_some() {
                    (loss_acc * inv - ref_loss).abs()
                } else {
                    F::zero()
                };
                records.push(ConvergenceRecord {
                    n_samples: n,
                    run_index: run,
                    image_l2_error,
                    loss_abs_error,
                    seed: run_seed,
                });
            }
            Ok(records)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(run_records.into_iter().flatten().collect())
}

/// Slope of the least-squares line of ln(mean error) against ln(n).
pub fn loglog_slope<F: Scalar>(records: &[ConvergenceRecord<F>]) -> Result<F> {
    let mut by_n: Vec<(usize, F, usize)> = Vec::new();
    for r in records {
        match by_n.iter_mut().find(|(n, _, _)| *n == r.n_samples) {
            Some((_, sum, count)) => {
                *sum = *sum + r.image_l2_error;
                *count += 1;
            }
            None => by_n.push((r.n_samples, r.image_l2_error, 1)),
        }
    }
    if by_n.len() < 2 {
        return Err(Error::Argument("slope needs at least two sample counts".into()));
    }
    let pts: Vec<(F, F)> = by_n
        .iter()
        .map(|&(n, sum, count)| {
            (
                F::of((n as f64).ln()),
                (sum / F::of(count as f64)).ln(),
            )
        })
        .collect();
    let nf = F::of(pts.len() as f64);
    let mx = pts.iter().map(|&(x, _)| x).sum::<F>() / nf;
    let my = pts.iter().map(|&(_, y)| y).sum::<F>() / nf;
    let mut sxy = F::zero();
    let mut sxx = F::zero();
    for &(x, y) in &pts {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

/// Per-sample expected inputs and the dataset-level variance sum needed
/// by the analytic training modes, computed without materializing any
/// per-sample D x D matrix: sum_n V_n = sum_k w_k M_k C M_k^T - sum_n
/// mu_n mu_n^T with C = sum_n x_n x_n^T.
#[derive(Debug, Clone)]
pub struct DatasetMoments<F> {
    pub means: Vec<Vec<F>>,
    pub sum_variance: Mat<F>,
}

/// Left-multiplies a dense matrix by the sparse operator.
fn sparse_dense<F: Scalar>(
    op: &crate::transform::SparseOperator<F>,
    dense: &Mat<F>,
) -> Mat<F> {
    let d = dense.cols();
    let mut out = Mat::zeros(op.rows().len(), d);
    for (r, taps) in op.rows().iter().enumerate() {
        let out_row = out.row_mut(r);
        for &(c, w) in taps {
            let src = dense.row(c);
            for j in 0..d {
                out_row[j] = out_row[j] + w * src[j];
            }
        }
    }
    out
}

pub fn dataset_moments<F: Scalar>(
    images: &[Image<F>],
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    quad: &QuadratureRule<F>,
) -> Result<DatasetMoments<F>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Argument("dataset moments need at least one image".into()))?;
    let grid = first.grid();
    if images.iter().any(|im| im.grid() != grid) {
        return Err(Error::Shape("images do not share a grid".into()));
    }
    let d = grid.dim();
    let mut c = Mat::zeros(d, d);
    for im in images {
        c.add_outer(F::one(), im.data());
    }
    let mut sum_second = Mat::zeros(d, d);
    for (theta, w) in quad.nodes() {
        let m = build_operator(kind, theta, grid)?;
        let mc = sparse_dense(&m, &c);
        // C symmetric, so M (M C)^T = M C M^T
        let mcmt = sparse_dense(&m, &mc.transpose());
        sum_second.add_scaled(*w, &mcmt);
    }
    let e_op = expected_operator(kind, dist, grid, quad)?;
    let mut means = Vec::with_capacity(images.len());
    let mut sum_variance = sum_second;
    for im in images {
        let mu = e_op.matrix().matvec(im.data())?;
        sum_variance.add_outer(-F::one(), &mu);
        means.push(mu);
    }
    Ok(DatasetMoments {
        means,
        sum_variance,
    })
}

/// How training sees the augmentation distribution.
#[derive(Debug, Clone, Copy)]
pub enum TrainMode<'a, F> {
    /// Mini-batch SGD with `n_aug` fresh draws per sample per epoch.
    Sampled { n_aug: usize },
    /// Full-batch gradient descent on the closed-form expected loss.
    AnalyticGd(&'a DatasetMoments<F>),
    /// The closed-form optimum of the expected loss (no iterations).
    ClosedForm(&'a DatasetMoments<F>),
}

/// Training hyperparameters; recorded alongside every emitted curve.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig<F> {
    pub epochs: usize,
    pub batch: usize,
    pub lr: F,
    pub seed: u64,
}

/// One evaluated point of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPoint<F> {
    pub epoch: usize,
    pub test_mse: F,
    pub test_accuracy: F,
}

impl<F: Scalar> TrainPoint<F> {
    /// CSV row in the `train_size,n_aug,epoch,test_mse,test_acc,seed`
    /// schema; `n_aug` is a count or the literal `analytic`.
    pub fn csv_row(&self, train_size: usize, n_aug: &str, seed: u64) -> String {
        format!(
            "{},{},{},{},{},{}",
            train_size,
            n_aug,
            self.epoch,
            self.test_mse.as_f64(),
            self.test_accuracy.as_f64(),
            seed
        )
    }
}

fn evaluate<F: Scalar>(
    model: &LinearModel<F>,
    test: &LabeledDataset<F>,
) -> Result<(F, F)> {
    let mut mse = F::zero();
    let mut hits = 0usize;
    for (n, im) in test.images().iter().enumerate() {
        let pred = model.predict(im.data())?;
        let y = test.one_hot(n);
        let r: F = pred
            .iter()
            .zip(&y)
            .map(|(&p, &t)| (t - p) * (t - p))
            .sum();
        mse = mse + r;
        let argmax = pred
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k)
            .unwrap();
        if argmax == test.labels()[n] {
            hits += 1;
        }
    }
    let nf = F::of(test.len() as f64);
    Ok((mse / nf, F::of(hits as f64) / nf))
}

/// Trains a linear one-hot regressor and reports the test curve.
///
/// Sampled mode runs mini-batch SGD on the Monte-Carlo loss; AnalyticGd
/// runs full-batch gradient descent on the mean expected loss; ClosedForm
/// solves for the optimum directly and returns a single evaluated point.
/// Gradients are means over the (augmented) batch, so `lr` is comparable
/// across modes and dataset sizes.
pub fn sgd_train_linear<F: Scalar>(
    train: &LabeledDataset<F>,
    test: &LabeledDataset<F>,
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    mode: TrainMode<'_, F>,
    cfg: &TrainConfig<F>,
) -> Result<Vec<TrainPoint<F>>> {
    if !(cfg.lr >= F::zero()) || !cfg.lr.is_finite() {
        return Err(Error::Argument(format!(
            "learning rate must be finite and nonnegative, got {}",
            cfg.lr
        )));
    }
    if cfg.batch == 0 || cfg.epochs == 0 {
        return Err(Error::Argument("batch size and epochs must be positive".into()));
    }
    if train.grid() != test.grid() || train.num_classes() != test.num_classes() {
        return Err(Error::Shape("train and test sets are incompatible".into()));
    }
    let d = train.grid().dim();
    let k = train.num_classes();
    let n = train.len();
    let nf = F::of(n as f64);

    if let TrainMode::ClosedForm(mom) = mode {
        check_moments(mom, n, d)?;
        let mut mu_bar = vec![F::zero(); d];
        let mut y_bar = vec![F::zero(); k];
        for (i, mu) in mom.means.iter().enumerate() {
            for (a, &m) in mu_bar.iter_mut().zip(mu) {
                *a = *a + m;
            }
            y_bar[train.labels()[i]] = y_bar[train.labels()[i]] + F::one();
        }
        for a in mu_bar.iter_mut() {
            *a = *a / nf;
        }
        for a in y_bar.iter_mut() {
            *a = *a / nf;
        }
        let mut gram = mom.sum_variance.clone();
        let mut rhs = vec![vec![F::zero(); d]; k];
        for (i, mu) in mom.means.iter().enumerate() {
            let mu_c: Vec<F> = mu.iter().zip(&mu_bar).map(|(&m, &b)| m - b).collect();
            gram.add_outer(F::one(), &mu_c);
            let label = train.labels()[i];
            for (ki, row) in rhs.iter_mut().enumerate() {
                let yc = if ki == label { F::one() } else { F::zero() } - y_bar[ki];
                for (ri, &mi) in row.iter_mut().zip(&mu_c) {
                    *ri = *ri + yc * mi;
                }
            }
        }
        let (rows, _cond, _jitter) = solve_normal_equations(&gram, &rhs)?;
        let mut weights = Mat::zeros(k, d);
        for (r, row) in rows.iter().enumerate() {
            weights.row_mut(r).copy_from_slice(row);
        }
        let wmu = weights.matvec(&mu_bar)?;
        let bias: Vec<F> = y_bar.iter().zip(&wmu).map(|(&y, &p)| y - p).collect();
        let model = LinearModel::new(weights, bias)?;
        let (test_mse, test_accuracy) = evaluate(&model, test)?;
        return Ok(vec![TrainPoint {
            epoch: 0,
            test_mse,
            test_accuracy,
        }]);
    }

    let mut model = LinearModel::<F>::zeros(k, d);
    let mut rng = seeded_rng(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        match mode {
            TrainMode::Sampled { n_aug } => {
                if n_aug == 0 {
                    return Err(Error::Argument("n_aug must be positive".into()));
                }
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let mut batch_gw = Mat::zeros(k, d);
                let mut batch_gb = vec![F::zero(); k];
                let mut in_batch = 0usize;
                for &idx in &order {
                    let y = train.one_hot(idx);
                    for _ in 0..n_aug {
                        let theta = dist.sample(&mut rng);
                        let x = reference_transform(kind, &theta, &train.images()[idx])?;
                        let r = model.residual(x.data(), &y)?;
                        // d/dW of ||y - Wx - b||^2 is -2 r x^T
                        for ki in 0..k {
                            let c = F::of(-2.0) * r[ki];
                            let row = batch_gw.row_mut(ki);
                            for (g, &xv) in row.iter_mut().zip(x.data()) {
                                *g = *g + c * xv;
                            }
                            batch_gb[ki] = batch_gb[ki] + c;
                        }
                        in_batch += 1;
                        if in_batch == cfg.batch {
                            apply_step(&mut model, &mut batch_gw, &mut batch_gb, cfg.lr, in_batch);
                            in_batch = 0;
                        }
                    }
                }
                if in_batch > 0 {
                    apply_step(&mut model, &mut batch_gw, &mut batch_gb, cfg.lr, in_batch);
                }
            }
            TrainMode::AnalyticGd(mom) => {
                check_moments(mom, n, d)?;
                let mut gw = model.weights().matmul(&mom.sum_variance)?;
                gw.scale(F::of(2.0));
                let mut gb = vec![F::zero(); k];
                for (i, mu) in mom.means.iter().enumerate() {
                    let y = train.one_hot(i);
                    let r = model.residual(mu, &y)?;
                    for ki in 0..k {
                        let c = F::of(-2.0) * r[ki];
                        let row = gw.row_mut(ki);
                        for (g, &mv) in row.iter_mut().zip(mu) {
                            *g = *g + c * mv;
                        }
                        gb[ki] = gb[ki] + c;
                    }
                }
                apply_step(&mut model, &mut gw, &mut gb, cfg.lr, n);
            }
            TrainMode::ClosedForm(_) => unreachable!(),
        }
        let (test_mse, test_accuracy) = evaluate(&model, test)?;
        curve.push(TrainPoint {
            epoch,
            test_mse,
            test_accuracy,
        });
    }
    Ok(curve)
}

fn check_moments<F: Scalar>(mom: &DatasetMoments<F>, n: usize, d: usize) -> Result<()> {
    if mom.means.len() != n || mom.means.iter().any(|m| m.len() != d) {
        return Err(Error::Shape(
            "dataset moments do not match the training set".into(),
        ));
    }
    if mom.sum_variance.rows() != d || mom.sum_variance.cols() != d {
        return Err(Error::Shape("variance sum has the wrong shape".into()));
    }
    Ok(())
}

/// One descent step on the accumulated gradient (mean over `count`
/// contributions); resets the accumulators.
fn apply_step<F: Scalar>(
    model: &mut LinearModel<F>,
    gw: &mut Mat<F>,
    gb: &mut [F],
    lr: F,
    count: usize,
) {
    let step = lr / F::of(count as f64);
    model.weights_mut().add_scaled(-step, gw);
    for (b, g) in model.bias_mut().iter_mut().zip(gb.iter()) {
        *b = *b - step * *g;
    }
    gw.scale(F::zero());
    for g in gb.iter_mut() {
        *g = F::zero();
    }
}
