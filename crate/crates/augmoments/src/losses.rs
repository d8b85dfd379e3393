//! Closed-form expected MSE under augmentation, the optimal linear
//! solution, the delta-method loss variance with its Cauchy-Schwarz bound,
//! the second-order Taylor expected loss, and the tangent-penalty bound.
//!
//! Everything is expressed over explicit matrices (gradient, Jacobian,
//! Hessian), so any model that can supply those applies; the built-in
//! linear/MSE specializations are the ones the library can verify in
//! closed form.

use crate::error::{Error, Result};
use crate::mat::{cholesky_solve, dot, Mat};
use crate::num::Scalar;
use crate::spectral::eig_sym;

/// Affine model x -> W x + b with W of shape K x D.
#[derive(Debug, Clone)]
pub struct LinearModel<F> {
    weights: Mat<F>,
    bias: Vec<F>,
}

impl<F: Scalar> LinearModel<F> {
    pub fn new(weights: Mat<F>, bias: Vec<F>) -> Result<Self> {
        if weights.rows() == 0 || weights.rows() != bias.len() {
            return Err(Error::Shape(format!(
                "weights are {}x{} but bias has length {}",
                weights.rows(),
                weights.cols(),
                bias.len()
            )));
        }
        if weights.data().iter().any(|v| !v.is_finite())
            || bias.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Argument("model parameters must be finite".into()));
        }
        Ok(LinearModel { weights, bias })
    }

    pub fn zeros(out_dim: usize, dim: usize) -> Self {
        LinearModel {
            weights: Mat::zeros(out_dim, dim),
            bias: vec![F::zero(); out_dim],
        }
    }

    pub fn weights(&self) -> &Mat<F> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Mat<F> {
        &mut self.weights
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [F] {
        &mut self.bias
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// W x + b.
    pub fn predict(&self, x: &[F]) -> Result<Vec<F>> {
        let mut y = self.weights.matvec(x)?;
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi = *yi + *bi;
        }
        Ok(y)
    }

    /// y - (W x + b).
    pub fn residual(&self, x: &[F], target: &[F]) -> Result<Vec<F>> {
        if target.len() != self.out_dim() {
            return Err(Error::Shape(format!(
                "target length {} does not match output dimension {}",
                target.len(),
                self.out_dim()
            )));
        }
        let pred = self.predict(x)?;
        Ok(target
            .iter()
            .zip(pred.iter())
            .map(|(&t, &p)| t - p)
            .collect())
    }
}

/// Input covariance, either dense or as a factor T with V = T T^T.
#[derive(Debug, Clone)]
pub enum Covariance<F> {
    Dense(Mat<F>),
    /// D x r tangent factor (eigenvectors scaled by sqrt eigenvalues).
    Factor(Mat<F>),
}

impl<F: Scalar> Covariance<F> {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Dense(m) => m.rows(),
            Covariance::Factor(t) => t.rows(),
        }
    }

    /// Tr(W^T W V) for this covariance, i.e. the augmentation penalty of
    /// one sample.
    fn penalty(&self, weights: &Mat<F>) -> Result<F> {
        match self {
            Covariance::Dense(sigma) => {
                let mut acc = F::zero();
                for k in 0..weights.rows() {
                    let row = weights.row(k);
                    let sv = sigma.matvec(row)?;
                    acc = acc + dot(row, &sv);
                }
                Ok(acc)
            }
            Covariance::Factor(t) => {
                let wt = weights.matmul(t)?;
                let f = wt.frobenius_norm();
                Ok(f * f)
            }
        }
    }

    /// Adds V to the accumulator.
    fn add_to(&self, acc: &mut Mat<F>) -> Result<()> {
        match self {
            Covariance::Dense(sigma) => {
                if sigma.rows() != acc.rows() || sigma.cols() != acc.cols() {
                    return Err(Error::Shape("covariance dimension mismatch".into()));
                }
                acc.add_scaled(F::one(), sigma);
            }
            Covariance::Factor(t) => {
                if t.rows() != acc.rows() {
                    return Err(Error::Shape("covariance dimension mismatch".into()));
                }
                for r in 0..t.cols() {
                    let col: Vec<F> = (0..t.rows()).map(|i| t[(i, r)]).collect();
                    acc.add_outer(F::one(), &col);
                }
            }
        }
        Ok(())
    }
}

/// One augmented training sample: input moments and regression target.
#[derive(Debug, Clone)]
pub struct AugmentedSample<F> {
    pub mean: Vec<F>,
    pub cov: Covariance<F>,
    pub target: Vec<F>,
}

/// Samples with consistent input and output dimensions.
#[derive(Debug, Clone)]
pub struct AugmentedDataset<F> {
    samples: Vec<AugmentedSample<F>>,
    dim: usize,
    out_dim: usize,
}

impl<F: Scalar> AugmentedDataset<F> {
    pub fn new(samples: Vec<AugmentedSample<F>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Argument("dataset needs at least one sample".into()))?;
        let dim = first.mean.len();
        let out_dim = first.target.len();
        if dim == 0 || out_dim == 0 {
            return Err(Error::Shape("dataset dimensions must be positive".into()));
        }
        for (n, s) in samples.iter().enumerate() {
            if s.mean.len() != dim || s.target.len() != out_dim || s.cov.dim() != dim {
                return Err(Error::Shape(format!(
                    "sample {n} has inconsistent dimensions"
                )));
            }
            if s.mean.iter().chain(s.target.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("sample {n} has non-finite data")));
            }
        }
        Ok(AugmentedDataset {
            samples,
            dim,
            out_dim,
        })
    }

    pub fn samples(&self) -> &[AugmentedSample<F>] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn check_model_data<F: Scalar>(model: &LinearModel<F>, data: &AugmentedDataset<F>) -> Result<()> {
    if model.dim() != data.dim() || model.out_dim() != data.out_dim() {
        return Err(Error::Shape(format!(
            "model is {}x{} but data is {}x{}",
            model.out_dim(),
            model.dim(),
            data.out_dim(),
            data.dim()
        )));
    }
    Ok(())
}

/// Exact expected MSE under augmentation:
/// sum_n [ ||y_n - W mu_n - b||^2 + Tr(W^T W V_n) ],
/// accumulated in ascending sample order.
pub fn expected_mse<F: Scalar>(model: &LinearModel<F>, data: &AugmentedDataset<F>) -> Result<F> {
    check_model_data(model, data)?;
    let mut total = F::zero();
    for s in data.samples() {
        let r = model.residual(&s.mean, &s.target)?;
        total = total + dot(&r, &r) + s.cov.penalty(model.weights())?;
    }
    Ok(total)
}

/// Output of the closed-form linear solve.
#[derive(Debug, Clone)]
pub struct OptimalLinear<F> {
    pub model: LinearModel<F>,
    /// Ratio of extreme squared Cholesky pivots of the solved Gram matrix;
    /// a lower bound on its condition number.
    pub condition: F,
    /// Ridge added to the Gram diagonal, if the plain solve failed.
    pub jitter: Option<F>,
}

pub(crate) fn solve_normal_equations<F: Scalar>(
    gram: &Mat<F>,
    rhs: &[Vec<F>],
) -> Result<(Vec<Vec<F>>, F, Option<F>)> {
    match cholesky_solve(gram, rhs) {
        Ok(sol) => {
            let cond = sol.condition_estimate();
            Ok((sol.solutions, cond, None))
        }
        Err(first_err) => {
            // singular or indefinite within roundoff: retry with a ridge
            let d = gram.rows();
            let jitter = F::of(1e-10) * gram.trace() / F::of(d as f64);
            if !(jitter > F::zero()) {
                return Err(first_err);
            }
            let mut ridged = gram.clone();
            for i in 0..d {
                ridged[(i, i)] = ridged[(i, i)] + jitter;
            }
            let sol = cholesky_solve(&ridged, rhs).map_err(|_| {
                Error::Numerical(format!(
                    "normal equations singular even with ridge {jitter}: {first_err}"
                ))
            })?;
            let cond = sol.condition_estimate();
            Ok((sol.solutions, cond, Some(jitter)))
        }
    }
}

/// Minimizer of `expected_mse` jointly over (W, b): solves the centered
/// normal equations W [sum (mu-mubar)(mu-mubar)^T + sum V] = sum
/// (y-ybar)(mu-mubar)^T and sets b = ybar - W mubar.
pub fn optimal_linear<F: Scalar>(data: &AugmentedDataset<F>) -> Result<OptimalLinear<F>> {
    let d = data.dim();
    let k = data.out_dim();
    let nf = F::of(data.len() as f64);
    let mut mu_bar = vec![F::zero(); d];
    let mut y_bar = vec![F::zero(); k];
    for s in data.samples() {
        for (a, &m) in mu_bar.iter_mut().zip(&s.mean) {
            *a = *a + m;
        }
        for (a, &y) in y_bar.iter_mut().zip(&s.target) {
            *a = *a + y;
        }
    }
    for a in mu_bar.iter_mut() {
        *a = *a / nf;
    }
    for a in y_bar.iter_mut() {
        *a = *a / nf;
    }

    let mut gram = Mat::zeros(d, d);
    let mut rhs = vec![vec![F::zero(); d]; k];
    for s in data.samples() {
        let mu_c: Vec<F> = s.mean.iter().zip(&mu_bar).map(|(&m, &mb)| m - mb).collect();
        gram.add_outer(F::one(), &mu_c);
        s.cov.add_to(&mut gram)?;
        for (row, (&y, &yb)) in rhs.iter_mut().zip(s.target.iter().zip(&y_bar)) {
            let yc = y - yb;
            for (ri, &mi) in row.iter_mut().zip(&mu_c) {
                *ri = *ri + yc * mi;
            }
        }
    }
    let (rows, condition, jitter) = solve_normal_equations(&gram, &rhs)?;
    let mut weights = Mat::zeros(k, d);
    for (r, row) in rows.iter().enumerate() {
        weights.row_mut(r).copy_from_slice(row);
    }
    let wmu = weights.matvec(&mu_bar)?;
    let bias: Vec<F> = y_bar.iter().zip(&wmu).map(|(&y, &p)| y - p).collect();
    Ok(OptimalLinear {
        model: LinearModel::new(weights, bias)?,
        condition,
        jitter,
    })
}

/// Minimizer of `expected_mse` over W with the bias held fixed:
/// W = [sum (y_n - b) mu_n^T] [sum (mu_n mu_n^T + V_n)]^{-1}.
pub fn optimal_linear_fixed_bias<F: Scalar>(
    data: &AugmentedDataset<F>,
    bias: &[F],
) -> Result<OptimalLinear<F>> {
    let d = data.dim();
    let k = data.out_dim();
    if bias.len() != k {
        return Err(Error::Shape(format!(
            "bias length {} does not match output dimension {k}",
            bias.len()
        )));
    }
    let mut gram = Mat::zeros(d, d);
    let mut rhs = vec![vec![F::zero(); d]; k];
    for s in data.samples() {
        gram.add_outer(F::one(), &s.mean);
        s.cov.add_to(&mut gram)?;
        for (out, (&y, &b)) in rhs.iter_mut().zip(s.target.iter().zip(bias)) {
            let yc = y - b;
            for (ri, &mi) in out.iter_mut().zip(&s.mean) {
                *ri = *ri + yc * mi;
            }
        }
    }
    let (rows, condition, jitter) = solve_normal_equations(&gram, &rhs)?;
    let mut weights = Mat::zeros(k, d);
    for (r, row) in rows.iter().enumerate() {
        weights.row_mut(r).copy_from_slice(row);
    }
    Ok(OptimalLinear {
        model: LinearModel::new(weights, bias.to_vec())?,
        condition,
        jitter,
    })
}

/// Gradient of ||y - W x - b||^2 at x = mu: -2 W^T (y - W mu - b).
pub fn mse_grad_at_mean<F: Scalar>(
    model: &LinearModel<F>,
    mean: &[F],
    target: &[F],
) -> Result<Vec<F>> {
    let r = model.residual(mean, target)?;
    let mut g = vec![F::zero(); model.dim()];
    for k in 0..model.out_dim() {
        let row = model.weights().row(k);
        let c = F::of(-2.0) * r[k];
        for (gi, &wi) in g.iter_mut().zip(row) {
            *gi = *gi + c * wi;
        }
    }
    Ok(g)
}

/// Delta-method loss variance: grad^T Sigma grad, clamped at zero.
pub fn delta_variance<F: Scalar>(grad: &[F], sigma: &Mat<F>) -> Result<F> {
    if sigma.rows() != grad.len() || sigma.cols() != grad.len() {
        return Err(Error::Shape(format!(
            "gradient length {} does not match {}x{} covariance",
            grad.len(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let v = dot(grad, &sigma.matvec(grad)?);
    if v < F::zero() {
        let scale = dot(grad, grad) * sigma.max_abs();
        if -v > F::of(1e-10) * scale {
            return Err(Error::Numerical(format!(
                "delta variance is negative beyond tolerance: {v}"
            )));
        }
        return Ok(F::zero());
    }
    Ok(v)
}

/// Double Cauchy-Schwarz variance bound:
/// ||grad_out||^4 * ||J tangent||_F^4.
pub fn variance_bound<F: Scalar>(
    grad_out: &[F],
    jac: &Mat<F>,
    tangent: &Mat<F>,
) -> Result<F> {
    if jac.rows() != grad_out.len() {
        return Err(Error::Shape(format!(
            "gradient length {} does not match Jacobian rows {}",
            grad_out.len(),
            jac.rows()
        )));
    }
    let jt = jac.matmul(tangent)?;
    let g2 = dot(grad_out, grad_out);
    let f2 = {
        let f = jt.frobenius_norm();
        f * f
    };
    Ok(g2 * g2 * f2 * f2)
}

/// Second-order Taylor expected loss:
/// loss_at_mean + 1/2 Tr(hessian sigma).
pub fn taylor_expected_loss<F: Scalar>(
    loss_at_mean: F,
    hessian: &Mat<F>,
    sigma: &Mat<F>,
) -> Result<F> {
    if hessian.rows() != sigma.rows()
        || hessian.cols() != sigma.cols()
        || hessian.rows() != hessian.cols()
    {
        return Err(Error::Shape("hessian/covariance dimension mismatch".into()));
    }
    let mut tr = F::zero();
    for i in 0..hessian.rows() {
        tr = tr + dot(hessian.row(i), sigma.row(i)); // both symmetric
    }
    Ok(loss_at_mean + F::of(0.5) * tr)
}

/// Tangent-penalty upper bound on the Taylor expected loss:
/// loss_at_mean + kappa ||J tangent||_F^2 with
/// kappa = 1/2 lambda_max(output-space loss Hessian). Returns (bound, kappa).
pub fn tangentprop_bound<F: Scalar>(
    loss_at_mean: F,
    output_hessian: &Mat<F>,
    jac: &Mat<F>,
    tangent: &Mat<F>,
) -> Result<(F, F)> {
    if output_hessian.rows() != jac.rows() {
        return Err(Error::Shape(format!(
            "output Hessian is {}x{} but Jacobian has {} rows",
            output_hessian.rows(),
            output_hessian.cols(),
            jac.rows()
        )));
    }
    let kappa = F::of(0.5) * eig_sym(output_hessian)?.lambda_max();
    let jt = jac.matmul(tangent)?;
    let f = jt.frobenius_norm();
    Ok((loss_at_mean + kappa * f * f, kappa))
}
