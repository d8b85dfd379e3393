//! Symmetric eigendecomposition of augmentation covariance matrices and
//! derived quantities: numerical rank, tangent-direction factors and the
//! rank-versus-amplitude sweep.
//!
//! The solver is the classical Householder tridiagonalization followed by
//! the implicit-shift QL iteration, specialized to symmetric input. It is
//! self-contained so the decomposition behaves identically for `f32` and
//! `f64` builds.

use crate::distribution::ParamDistribution;
use crate::error::{Error, Result};
use crate::grid::{Grid, Image};
use crate::mat::Mat;
use crate::moments::{moment_set, operator_rule};
use crate::num::Scalar;
use crate::transform::TransformKind;

/// Eigendecomposition of a symmetric PSD matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SpectralFactor<F> {
    eigenvalues: Vec<F>,
    /// Column k is the unit eigenvector of `eigenvalues[k]`.
    eigenvectors: Mat<F>,
    rank: usize,
}

impl<F: Scalar> SpectralFactor<F> {
    /// Eigenvalues in descending order, negatives within tolerance
    /// clamped to zero.
    pub fn eigenvalues(&self) -> &[F] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as matrix columns, ordered like the
    /// eigenvalues; each column's first nonzero coefficient is positive.
    pub fn eigenvectors(&self) -> &Mat<F> {
        &self.eigenvectors
    }

    /// Number of eigenvalues above the rank cutoff.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn lambda_max(&self) -> F {
        self.eigenvalues.first().copied().unwrap_or(F::zero())
    }

    pub fn trace(&self) -> F {
        self.eigenvalues.iter().copied().sum()
    }

    /// D x rank factor Q_r diag(sqrt(lambda)); its Gram matrix recovers
    /// the retained part of the input.
    pub fn tangent(&self) -> Mat<F> {
        let d = self.eigenvectors.rows();
        Mat::from_fn(d, self.rank, |i, k| {
            self.eigenvectors[(i, k)] * self.eigenvalues[k].sqrt()
        })
    }
}

/// Relative rank cutoff: eigenvalues above `rel_tol * lambda_max` count.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix. The input must be square,
/// finite and symmetric to within `1e-10 * max(1, |A|_max)`.
pub fn eig_sym<F: Scalar>(a: &Mat<F>) -> Result<SpectralFactor<F>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!(
            "eig_sym needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("eig_sym needs a nonempty matrix".into()));
    }
    let scale = F::one().max(a.max_abs());
    if !scale.is_finite() {
        return Err(Error::Argument("eig_sym input has non-finite entries".into()));
    }
    if a.asymmetry() > F::of(1e-10) * scale {
        return Err(Error::Argument(format!(
            "eig_sym input is not symmetric (asymmetry {})",
            a.asymmetry()
        )));
    }

    let mut z = a.clone();
    z.symmetrize();
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut z, &mut d, &mut e)?;

    // sort descending, carrying the eigenvector columns along
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let lambda_max = d[order[0]].max(F::zero());
    let clamp_tol = F::of(RANK_REL_TOL) * F::one().max(lambda_max);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Mat::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let lam = if d[src] < F::zero() && -d[src] <= clamp_tol {
            F::zero()
        } else {
            d[src]
        };
        eigenvalues.push(lam);
        // deterministic sign: first nonzero coefficient positive
        let mut sign = F::one();
        for i in 0..n {
            let v = z[(i, src)];
            if v != F::zero() {
                if v < F::zero() {
                    sign = -F::one();
                }
                break;
            }
        }
        for i in 0..n {
            eigenvectors[(i, k)] = sign * z[(i, src)];
        }
    }
    let cutoff = F::of(RANK_REL_TOL) * lambda_max;
    let rank = eigenvalues.iter().filter(|&&l| l > cutoff).count();
    Ok(SpectralFactor {
        eigenvalues,
        eigenvectors,
        rank,
    })
}

/// Householder reduction to tridiagonal form with accumulation of the
/// orthogonal transform in `z` (EISPACK tred2).
fn tred2<F: Scalar>(z: &mut Mat<F>, d: &mut [F], e: &mut [F]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = F::zero();
        let mut scale = F::zero();
        if l > 0 {
            for k in 0..=l {
                scale = scale + z[(i, k)].abs();
            }
            if scale == F::zero() {
                e[i] = z[(i, l)];
            } else {
                for k in 0..=l {
                    let v = z[(i, k)] / scale;
                    z[(i, k)] = v;
                    h = h + v * v;
                }
                let mut f = z[(i, l)];
                let g = if f >= F::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h = h - f * g;
                z[(i, l)] = f - g;
                f = F::zero();
                for j in 0..=l {
                    z[(j, i)] = z[(i, j)] / h;
                    let mut g = F::zero();
                    for k in 0..=j {
                        g = g + z[(j, k)] * z[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g = g + z[(k, j)] * z[(i, k)];
                    }
                    e[j] = g / h;
                    f = f + e[j] * z[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let fj = z[(i, j)];
                    let gj = e[j] - hh * fj;
                    e[j] = gj;
                    for k in 0..=j {
                        z[(j, k)] = z[(j, k)] - fj * e[k] - gj * z[(i, k)];
                    }
                }
            }
        } else {
            e[i] = z[(i, l)];
        }
        d[i] = h;
    }
    d[0] = F::zero();
    e[0] = F::zero();
    for i in 0..n {
        if d[i] != F::zero() {
            for j in 0..i {
                let mut g = F::zero();
                for k in 0..i {
                    g = g + z[(i, k)] * z[(k, j)];
                }
                for k in 0..i {
                    z[(k, j)] = z[(k, j)] - g * z[(k, i)];
                }
            }
        }
        d[i] = z[(i, i)];
        z[(i, i)] = F::one();
        for j in 0..i {
            z[(j, i)] = F::zero();
            z[(i, j)] = F::zero();
        }
    }
}

fn hypot2<F: Scalar>(a: F, b: F) -> F {
    (a * a + b * b).sqrt()
}

/// Implicit-shift QL iteration on the tridiagonal (d, e) with eigenvector
/// accumulation in `z` (EISPACK tql2).
fn tql2<F: Scalar>(z: &mut Mat<F>, d: &mut [F], e: &mut [F]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = F::zero();
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            // find a small subdiagonal element
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= F::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical(
                    "eigenvalue iteration failed to converge".into(),
                ));
            }
            let two = F::of(2.0);
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = hypot2(g, F::one());
            let sign_r = if g >= F::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = F::one();
            let mut c = F::one();
            let mut p = F::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = hypot2(f, g);
                e[i + 1] = r;
                if r == F::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = F::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = F::zero();
        }
    }
    Ok(())
}

/// One row of the rank-versus-amplitude sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord<F> {
    pub amplitude: F,
    pub rank: usize,
    pub lambda_max: F,
    pub trace: F,
}

/// Spectral summary of the augmentation variance at each amplitude.
/// `dist_at` maps an amplitude to the parameter distribution; amplitudes
/// must be finite, nonnegative and strictly increasing.
pub fn rank_sweep<F: Scalar>(
    kind: TransformKind,
    img: &Image<F>,
    amplitudes: &[F],
    mut dist_at: impl FnMut(F) -> Result<ParamDistribution<F>>,
    nodes_per_panel: usize,
) -> Result<Vec<SweepRecord<F>>> {
    if amplitudes.is_empty() {
        return Err(Error::Argument("rank sweep needs at least one amplitude".into()));
    }
    for w in amplitudes.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Argument(
                "rank sweep amplitudes must be strictly increasing".into(),
            ));
        }
    }
    if !(amplitudes[0] >= F::zero()) || amplitudes.iter().any(|a| !a.is_finite()) {
        return Err(Error::Argument(
            "rank sweep amplitudes must be finite and nonnegative".into(),
        ));
    }
    let mut out = Vec::with_capacity(amplitudes.len());
    for &amp in amplitudes {
        let dist = dist_at(amp)?;
        let quad = operator_rule(kind, &dist, img.grid(), nodes_per_panel)?;
        let ms = moment_set(kind, &dist, img, &quad)?;
        let factor = eig_sym(ms.variance())?;
        out.push(SweepRecord {
            amplitude: amp,
            rank: factor.rank(),
            lambda_max: factor.lambda_max(),
            trace: factor.trace(),
        });
    }
    Ok(out)
}

/// Leading eigenvectors reshaped onto the grid as unit-norm images.
pub fn top_eigvec_images<F: Scalar>(
    factor: &SpectralFactor<F>,
    grid: Grid,
    k: usize,
) -> Result<Vec<Image<F>>> {
    if k > factor.rank() {
        return Err(Error::Range(format!(
            "requested {k} eigenvectors but rank is {}",
            factor.rank()
        )));
    }
    if factor.eigenvectors.rows() != grid.dim() {
        return Err(Error::Shape(
            "eigenvector dimension does not match the grid".into(),
        ));
    }
    (0..k)
        .map(|col| {
            let data = (0..grid.dim())
                .map(|i| factor.eigenvectors[(i, col)])
                .collect();
            Image::new(grid, data)
        })
        .collect()
}
