//! Exact first and second moments of augmented images: expected operator,
//! expected image, second-moment and variance matrices.
//!
//! Two routes are provided. The generic quadrature route averages the
//! sparse operators `M(theta)` over a deterministic rule. The analytic
//! route implements the closed forms for translation (2-D convolution of
//! the image with the parameter density) and shear (per-row 1-D
//! convolution with the density rescaled by the row's transverse
//! coordinate), with the expected bilinear tap weights integrated in
//! closed form (erf for Gaussians, piecewise quadratics for uniforms).
//! The two routes are independent implementations and serve as oracles
//! for one another.
//!
//! Operator entries are piecewise-linear in theta with kinks wherever the
//! warped source crosses a pixel boundary, so a single-panel
//! Gauss-Legendre rule converges slowly for operator expectations.
//! `operator_rule` builds a rule whose panels are aligned with the kink
//! lattice of the given transform and grid, restoring fast convergence.

use crate::distribution::{ParamDistribution, QuadratureRule};
use crate::error::{Error, Result};
use crate::grid::{Grid, Image};
use crate::mat::Mat;
use crate::num::Scalar;
use crate::special::normal_cdf;
use crate::transform::{build_operator, reference_transform, TransformKind};

/// Dense expected transform operator E[M(theta)].
#[derive(Debug, Clone)]
pub struct ExpectedOperator<F> {
    grid: Grid,
    matrix: Mat<F>,
}

impl<F: Scalar> ExpectedOperator<F> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn matrix(&self) -> &Mat<F> {
        &self.matrix
    }
}

/// First and second moments of the augmented image.
#[derive(Debug, Clone)]
pub struct MomentSet<F> {
    grid: Grid,
    mean: Image<F>,
    second: Mat<F>,
    variance: Mat<F>,
}

impl<F: Scalar> MomentSet<F> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mean(&self) -> &Image<F> {
        &self.mean
    }

    pub fn second(&self) -> &Mat<F> {
        &self.second
    }

    pub fn variance(&self) -> &Mat<F> {
        &self.variance
    }
}

fn check_arity<F: Scalar>(kind: TransformKind, dist: &ParamDistribution<F>) -> Result<()> {
    if kind.arity() != dist.arity() {
        return Err(Error::Argument(format!(
            "{} takes {} parameter(s) but the distribution has arity {}",
            kind.name(),
            kind.arity(),
            dist.arity()
        )));
    }
    Ok(())
}

/// Kink positions of theta -> M(theta) within the scalar support, one axis.
fn lattice_edges<F: Scalar>(support: (F, F), scales: &[F]) -> Vec<F> {
    let (lo, hi) = support;
    let mut edges: Vec<F> = Vec::new();
    for &c in scales {
        if c.abs() <= F::epsilon() {
            continue;
        }
        // theta = k / c crosses a pixel boundary for integer k
        let (a, b) = if c > F::zero() {
            (lo * c, hi * c)
        } else {
            (hi * c, lo * c)
        };
        let mut k = a.ceil().as_f64() as i64;
        let kmax = b.floor().as_f64() as i64;
        while k <= kmax {
            let t = F::of(k as f64) / c;
            if t > lo && t < hi {
                edges.push(t);
            }
            k += 1;
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() <= F::epsilon() * F::of(16.0));
    edges
}

/// Quadrature rule for operator-valued expectations, with panels aligned
/// to the pixel-crossing lattice of (kind, grid). `nodes_per_panel` points
/// are placed in each panel; 4 is enough for the translation and shear
/// integrands, whose restriction to a panel is polynomial times the
/// density.
pub fn operator_rule<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    grid: Grid,
    nodes_per_panel: usize,
) -> Result<QuadratureRule<F>> {
    check_arity(kind, dist)?;
    let w = F::of(grid.width() as f64);
    let h = F::of(grid.height() as f64);
    match kind {
        TransformKind::Translation => {
            let ParamDistribution::Product(px, py) = dist else {
                return Err(Error::Argument(
                    "translation requires a product distribution".into(),
                ));
            };
            let ex = lattice_edges(px.support()?, &[w]);
            let ey = lattice_edges(py.support()?, &[h]);
            let rx = px.scalar_rule(nodes_per_panel, &ex)?;
            let ry = py.scalar_rule(nodes_per_panel, &ey)?;
            Ok(QuadratureRule::tensor(&rx, &ry))
        }
        TransformKind::ShearHorizontal => {
            // per-row column shift is theta * v * w
            let scales: Vec<F> = (0..grid.height())
                .map(|i| grid.pixel_to_coord::<F>(i, 0).map(|(_, v)| v * w))
                .collect::<Result<_>>()?;
            let edges = lattice_edges(dist.support()?, &scales);
            Ok(QuadratureRule::from_scalar(
                dist.scalar_rule(nodes_per_panel, &edges)?,
            ))
        }
        TransformKind::ShearVertical => {
            let scales: Vec<F> = (0..grid.width())
                .map(|j| grid.pixel_to_coord::<F>(0, j).map(|(u, _)| u * h))
                .collect::<Result<_>>()?;
            let edges = lattice_edges(dist.support()?, &scales);
            Ok(QuadratureRule::from_scalar(
                dist.scalar_rule(nodes_per_panel, &edges)?,
            ))
        }
        TransformKind::Rotation | TransformKind::Zoom => {
            // no shared kink lattice; subdivide at the pixel pitch, which
            // bounds the kink density of any single matrix entry
            let (lo, hi) = dist.support()?;
            let pitch = F::one() / w.max(h);
            let mut edges = Vec::new();
            let mut t = (lo / pitch).ceil() * pitch;
            while t < hi {
                if t > lo {
                    edges.push(t);
                }
                t = t + pitch;
            }
            Ok(QuadratureRule::from_scalar(
                dist.scalar_rule(nodes_per_panel, &edges)?,
            ))
        }
    }
}

/// E[M(theta)] = sum_k weight_k M(theta_k), accumulated densely in
/// ascending node order.
pub fn expected_operator<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    grid: Grid,
    quad: &QuadratureRule<F>,
) -> Result<ExpectedOperator<F>> {
    check_arity(kind, dist)?;
    let d = grid.dim();
    let mut matrix = Mat::zeros(d, d);
    for (theta, weight) in quad.nodes() {
        let op = build_operator(kind, theta, grid)?;
        for (r, row) in op.rows().iter().enumerate() {
            let out = matrix.row_mut(r);
            for &(c, w) in row {
                out[c] = out[c] + *weight * w;
            }
        }
    }
    Ok(ExpectedOperator { grid, matrix })
}

/// Expected image = E[M(theta)] x.
pub fn expected_image<F: Scalar>(op: &ExpectedOperator<F>, img: &Image<F>) -> Result<Image<F>> {
    if op.grid != img.grid() {
        return Err(Error::Shape("expected operator and image grids differ".into()));
    }
    Image::new(op.grid, op.matrix.matvec(img.data())?)
}

/// Uncentered second moment E[(M x)(M x)^T] under the rule.
pub fn second_moment<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    img: &Image<F>,
    quad: &QuadratureRule<F>,
) -> Result<Mat<F>> {
    check_arity(kind, dist)?;
    let d = img.grid().dim();
    let mut second = Mat::zeros(d, d);
    for (theta, weight) in quad.nodes() {
        let t = reference_transform(kind, theta, img)?;
        second.add_outer(*weight, t.data());
    }
    Ok(second)
}

/// Mean, second moment and variance in one pass over the rule.
pub fn moment_set<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    img: &Image<F>,
    quad: &QuadratureRule<F>,
) -> Result<MomentSet<F>> {
    check_arity(kind, dist)?;
    let grid = img.grid();
    let d = grid.dim();
    let mut mean = vec![F::zero(); d];
    let mut second = Mat::zeros(d, d);
    for (theta, weight) in quad.nodes() {
        let t = reference_transform(kind, theta, img)?;
        for (m, &v) in mean.iter_mut().zip(t.data()) {
            *m = *m + *weight * v;
        }
        second.add_outer(*weight, t.data());
    }
    let mut variance = second.clone();
    for i in 0..d {
        let mi = mean[i];
        let row = variance.row_mut(i);
        for j in 0..d {
            row[j] = row[j] - mi * mean[j];
        }
    }
    Ok(MomentSet {
        grid,
        mean: Image::new(grid, mean)?,
        second,
        variance,
    })
}

/// Streaming variance accumulation: only the diagonal and the requested
/// rows of V[T(x)] are stored, so grids too large for the dense D x D
/// matrix remain tractable.
pub fn variance_profile<F: Scalar>(
    kind: TransformKind,
    dist: &ParamDistribution<F>,
    img: &Image<F>,
    quad: &QuadratureRule<F>,
    rows: &[usize],
) -> Result<(Vec<F>, Vec<Vec<F>>)> {
    check_arity(kind, dist)?;
    let d = img.grid().dim();
    for &r in rows {
        if r >= d {
            return Err(Error::Range(format!("variance row {r} outside dimension {d}")));
        }
    }
    let mut mean = vec![F::zero(); d];
    let mut diag2 = vec![F::zero(); d];
    let mut rows2 = vec![vec![F::zero(); d]; rows.len()];
    for (theta, weight) in quad.nodes() {
        let t = reference_transform(kind, theta, img)?;
        let td = t.data();
        for k in 0..d {
            mean[k] = mean[k] + *weight * td[k];
            diag2[k] = diag2[k] + *weight * td[k] * td[k];
        }
        for (out, &r) in rows2.iter_mut().zip(rows) {
            let tr = td[r];
            for k in 0..d {
                out[k] = out[k] + *weight * tr * td[k];
            }
        }
    }
    let diag: Vec<F> = (0..d).map(|k| diag2[k] - mean[k] * mean[k]).collect();
    let rowvar: Vec<Vec<F>> = rows2
        .into_iter()
        .zip(rows)
        .map(|(second_row, &r)| {
            (0..d)
                .map(|k| second_row[k] - mean[r] * mean[k])
                .collect()
        })
        .collect();
    Ok((diag, rowvar))
}

/// Integral of the unit hat from -infinity to t.
fn hat_cdf<F: Scalar>(t: F) -> F {
    let one = F::one();
    let half = F::of(0.5);
    if t <= -one {
        F::zero()
    } else if t <= F::zero() {
        (t + one) * (t + one) * half
    } else if t <= one {
        one - (one - t) * (one - t) * half
    } else {
        one
    }
}

fn hat<F: Scalar>(t: F) -> F {
    (F::one() - t.abs()).max(F::zero())
}

/// Closed-form E[max(0, 1 - |theta * scale - k|)] for a scalar
/// distribution: the expected bilinear tap weight at integer offset k.
pub fn hat_expectation<F: Scalar>(
    dist: &ParamDistribution<F>,
    scale: F,
    k: i64,
) -> Result<F> {
    let kf = F::of(k as f64);
    match dist {
        ParamDistribution::Dirac { at } => Ok(hat(*at * scale - kf)),
        ParamDistribution::Uniform { lo, hi } => {
            let (a, b) = if scale >= F::zero() {
                (*lo * scale, *hi * scale)
            } else {
                (*hi * scale, *lo * scale)
            };
            if b - a <= F::epsilon() {
                return Ok(hat((a + b) * F::of(0.5) - kf));
            }
            Ok((hat_cdf(b - kf) - hat_cdf(a - kf)) / (b - a))
        }
        ParamDistribution::Gaussian { mean, std } => {
            let m = (*mean * scale).as_f64();
            let s = (*std * scale).abs().as_f64();
            if s <= f64::EPSILON {
                return Ok(hat(F::of(m) - kf));
            }
            let kk = k as f64;
            let q = |t: f64| {
                (-(t - m) * (t - m) / (2.0 * s * s)).exp()
                    / (s * (2.0 * std::f64::consts::PI).sqrt())
            };
            let i0 = |a: f64, b: f64| normal_cdf((b - m) / s) - normal_cdf((a - m) / s);
            let i1 = |a: f64, b: f64| m * i0(a, b) - s * s * (q(b) - q(a));
            let left = (1.0 - kk) * i0(kk - 1.0, kk) + i1(kk - 1.0, kk);
            let right = (1.0 + kk) * i0(kk, kk + 1.0) - i1(kk, kk + 1.0);
            Ok(F::of(left + right))
        }
        ParamDistribution::Product(_, _) => Err(Error::Argument(
            "hat expectation is defined per scalar axis".into(),
        )),
    }
}

/// Expected-tap kernel of a scalar distribution at pixel scale `scale`,
/// truncated where mass is negligible and normalized to sum one (the
/// full-support kernel sums to one exactly).
fn kernel_1d<F: Scalar>(dist: &ParamDistribution<F>, scale: F) -> Result<Vec<(i64, F)>> {
    let (lo, hi) = dist.support()?;
    let (mut a, mut b) = (lo * scale, hi * scale);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if let ParamDistribution::Gaussian { mean, std } = dist {
        // widen past the 6-sigma support so truncation stays below 1e-12
        let m = *mean * scale;
        let s = (*std * scale).abs();
        a = m - F::of(8.5) * s;
        b = m + F::of(8.5) * s;
    }
    let k_lo = a.floor().as_f64() as i64 - 1;
    let k_hi = b.ceil().as_f64() as i64 + 1;
    let mut kernel = Vec::new();
    let mut total = F::zero();
    for k in k_lo..=k_hi {
        let w = hat_expectation(dist, scale, k)?;
        total = total + w;
        if w > F::zero() {
            kernel.push((k, w));
        }
    }
    if total > F::zero() {
        for (_, w) in kernel.iter_mut() {
            *w = *w / total;
        }
    }
    Ok(kernel)
}

/// Closed-form expected image under random translation: the image
/// convolved with the expected-tap kernel of the density, separably per
/// axis, with zero padding. A scalar distribution means horizontal-only
/// translation.
pub fn translation_expected_analytic<F: Scalar>(
    img: &Image<F>,
    dist: &ParamDistribution<F>,
) -> Result<Image<F>> {
    let grid = img.grid();
    let w = F::of(grid.width() as f64);
    let h = F::of(grid.height() as f64);
    let (kx, ky) = match dist {
        ParamDistribution::Product(px, py) => {
            (kernel_1d(px, w)?, kernel_1d(py, h)?)
        }
        _ => (kernel_1d(dist, w)?, vec![(0i64, F::one())]),
    };
    let rows_done = convolve_rows(img, |_| Ok(kx.clone()))?;
    convolve_cols(&rows_done, |_| Ok(ky.clone()))
}

/// Axis selector for the shear closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShearAxis {
    Horizontal,
    Vertical,
}

/// Closed-form expected image under random shear: each row (horizontal)
/// or column (vertical) is convolved with the density rescaled by its
/// transverse coordinate; lines within half a pixel pitch of the anchor
/// axis pass through unchanged.
pub fn shear_expected_analytic<F: Scalar>(
    img: &Image<F>,
    dist: &ParamDistribution<F>,
    axis: ShearAxis,
) -> Result<Image<F>> {
    if dist.arity() != 1 {
        return Err(Error::Argument("shear takes a scalar distribution".into()));
    }
    let grid = img.grid();
    let w = F::of(grid.width() as f64);
    let h = F::of(grid.height() as f64);
    let identity = vec![(0i64, F::one())];
    match axis {
        // only the exact anchor line (v = 0, odd grids) passes through:
        // every other row sits at least half a pixel pitch away, so a
        // quarter-pitch threshold separates the two cases with a wide
        // floating-point margin
        ShearAxis::Horizontal => convolve_rows(img, |i| {
            let (_, v) = grid.pixel_to_coord::<F>(i, 0)?;
            if v.abs() < F::of(0.25) / h {
                Ok(identity.clone())
            } else {
                kernel_1d(dist, v * w)
            }
        }),
        ShearAxis::Vertical => convolve_cols(img, |j| {
            let (u, _) = grid.pixel_to_coord::<F>(0, j)?;
            if u.abs() < F::of(0.25) / w {
                Ok(identity.clone())
            } else {
                kernel_1d(dist, u * h)
            }
        }),
    }
}

fn convolve_rows<F: Scalar>(
    img: &Image<F>,
    mut kernel_for_row: impl FnMut(usize) -> Result<Vec<(i64, F)>>,
) -> Result<Image<F>> {
    let grid = img.grid();
    let (hh, ww) = (grid.height(), grid.width());
    let mut out = vec![F::zero(); grid.dim()];
    for i in 0..hh {
        let kernel = kernel_for_row(i)?;
        for j in 0..ww {
            let mut acc = F::zero();
            for &(k, wt) in &kernel {
                let src = j as i64 - k;
                if src >= 0 && (src as usize) < ww {
                    acc = acc + wt * img.get(i, src as usize);
                }
            }
            out[i * ww + j] = acc;
        }
    }
    Image::new(grid, out)
}

fn convolve_cols<F: Scalar>(
    img: &Image<F>,
    mut kernel_for_col: impl FnMut(usize) -> Result<Vec<(i64, F)>>,
) -> Result<Image<F>> {
    let grid = img.grid();
    let (hh, ww) = (grid.height(), grid.width());
    let mut out = vec![F::zero(); grid.dim()];
    for j in 0..ww {
        let kernel = kernel_for_col(j)?;
        for i in 0..hh {
            let mut acc = F::zero();
            for &(k, wt) in &kernel {
                let src = i as i64 - k;
                if src >= 0 && (src as usize) < hh {
                    acc = acc + wt * img.get(src as usize, j);
                }
            }
            out[i * ww + j] = acc;
        }
    }
    Image::new(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(unused)]
    type Image = crate::grid::Image<f64>;
    use crate::transform::{apply_operator, Theta};

    fn test_image(grid: Grid, seed: u64) -> Image {
        // deterministic pseudo-random content, no RNG dependency
        let data = (0..grid.dim())
            .map(|k| {
                let x = (k as u64)
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(seed.wrapping_mul(1442695040888963407));
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        Image::new(grid, data).unwrap()
    }

    #[test]
    fn dirac_expected_operator_is_identity() {
        let grid = Grid::new(6, 6).unwrap();
        let dist = ParamDistribution::product(
            ParamDistribution::dirac(0.0).unwrap(),
            ParamDistribution::dirac(0.0).unwrap(),
        )
        .unwrap();
        let quad = dist.quadrature(9).unwrap();
        let op = expected_operator(TransformKind::Translation, &dist, grid, &quad).unwrap();
        let id = Mat::identity(grid.dim());
        assert!(op.matrix().max_abs_diff(&id) < 1e-12);

        let zoom = ParamDistribution::dirac(1.0).unwrap();
        let qz = zoom.quadrature(9).unwrap();
        let opz = expected_operator(TransformKind::Zoom, &zoom, grid, &qz).unwrap();
        assert!(opz.matrix().max_abs_diff(&id) < 1e-12);
    }

    #[test]
    fn expected_operator_rows_are_substochastic() {
        let grid = Grid::new(8, 8).unwrap();
        let dist = ParamDistribution::gaussian(0.0, 0.05).unwrap();
        let quad = operator_rule(TransformKind::Rotation, &dist, grid, 4).unwrap();
        let op = expected_operator(TransformKind::Rotation, &dist, grid, &quad).unwrap();
        for r in 0..grid.dim() {
            let s: f64 = op.matrix().row(r).iter().sum();
            assert!(s >= 0.0 && s <= 1.0 + 1e-10, "row {r} sum {s}");
            assert!(op.matrix().row(r).iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn hat_expectation_against_fine_quadrature() {
        // brute-force oracle: Riemann sum over a dense theta grid
        let dist = ParamDistribution::gaussian(0.01, 0.07).unwrap();
        let scale = 16.0;
        for k in [-2i64, 0, 1, 3] {
            let exact = hat_expectation(&dist, scale, k).unwrap();
            let n = 400_001;
            let (lo, hi) = (-0.8, 0.82);
            let dt = (hi - lo) / (n as f64 - 1.0);
            let mut acc = 0.0;
            for i in 0..n {
                let t = lo + dt * i as f64;
                let p = dist.density(&Theta::Scalar(t)).unwrap();
                let h = (1.0 - (t * scale - k as f64).abs()).max(0.0);
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                acc += w * p * h * dt;
            }
            assert!((exact - acc).abs() < 1e-9, "k={k}: {exact} vs {acc}");
        }
    }

    #[test]
    fn translation_analytic_dirac_is_identity() {
        let grid = Grid::new(5, 7).unwrap();
        let img = test_image(grid, 3);
        let dist = ParamDistribution::product(
            ParamDistribution::dirac(0.0).unwrap(),
            ParamDistribution::dirac(0.0).unwrap(),
        )
        .unwrap();
        let out = translation_expected_analytic(&img, &dist).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-15);
    }

    #[test]
    fn translation_analytic_impulse_reproduces_kernel() {
        let grid = Grid::new(17, 17).unwrap();
        let img = Image::impulse(grid, 8, 8).unwrap();
        let sigma = 0.08;
        let dist = ParamDistribution::product(
            ParamDistribution::gaussian(0.0, sigma).unwrap(),
            ParamDistribution::gaussian(0.0, sigma).unwrap(),
        )
        .unwrap();
        let out = translation_expected_analytic(&img, &dist).unwrap();
        let kx = kernel_1d(&ParamDistribution::gaussian(0.0, sigma).unwrap(), 17.0).unwrap();
        let lookup = |k: i64| {
            kx.iter()
                .find(|&&(kk, _)| kk == k)
                .map(|&(_, w)| w)
                .unwrap_or(0.0)
        };
        for di in -3i64..=3 {
            for dj in -3i64..=3 {
                let v = out.get((8 + di) as usize, (8 + dj) as usize);
                let want = lookup(di) * lookup(dj);
                assert!((v - want).abs() < 1e-12, "offset ({di},{dj})");
            }
        }
    }

    #[test]
    fn translation_paths_agree() {
        let grid = Grid::new(16, 16).unwrap();
        let img = test_image(grid, 11);
        let dist = ParamDistribution::product(
            ParamDistribution::gaussian(0.0, 0.1).unwrap(),
            ParamDistribution::gaussian(0.01, 0.08).unwrap(),
        )
        .unwrap();
        let quad = operator_rule(TransformKind::Translation, &dist, grid, 4).unwrap();
        let op = expected_operator(TransformKind::Translation, &dist, grid, &quad).unwrap();
        let via_quad = expected_image(&op, &img).unwrap();
        let via_conv = translation_expected_analytic(&img, &dist).unwrap();
        let diff = via_quad.max_abs_diff(&via_conv);
        assert!(diff < 1e-8, "paths differ by {diff}");
    }

    #[test]
    fn shear_paths_agree() {
        let grid = Grid::new(12, 12).unwrap();
        let img = test_image(grid, 5);
        let dist = ParamDistribution::uniform(-0.2, 0.2).unwrap();
        for (kind, axis) in [
            (TransformKind::ShearHorizontal, ShearAxis::Horizontal),
            (TransformKind::ShearVertical, ShearAxis::Vertical),
        ] {
            let quad = operator_rule(kind, &dist, grid, 4).unwrap();
            let op = expected_operator(kind, &dist, grid, &quad).unwrap();
            let via_quad = expected_image(&op, &img).unwrap();
            let via_conv = shear_expected_analytic(&img, &dist, axis).unwrap();
            let diff = via_quad.max_abs_diff(&via_conv);
            assert!(diff < 1e-6, "{} differs by {diff}", kind.name());
        }
    }

    #[test]
    fn shear_center_line_unchanged() {
        // odd grid: the v = 0 row sits exactly on the anchor line
        let grid = Grid::new(9, 9).unwrap();
        let img = test_image(grid, 2);
        let dist = ParamDistribution::uniform(-0.3, 0.3).unwrap();
        let out = shear_expected_analytic(&img, &dist, ShearAxis::Horizontal).unwrap();
        for j in 0..9 {
            assert!((out.get(4, j) - img.get(4, j)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_image_keeps_interior_darkens_border() {
        let grid = Grid::new(16, 16).unwrap();
        let img = Image::constant(grid, 1.0);
        let dist = ParamDistribution::product(
            ParamDistribution::uniform(-2.0 / 16.0, 2.0 / 16.0).unwrap(),
            ParamDistribution::dirac(0.0).unwrap(),
        )
        .unwrap();
        let out = translation_expected_analytic(&img, &dist).unwrap();
        // interior untouched by the zero padding
        assert!((out.get(8, 8) - 1.0).abs() < 1e-12);
        // border column loses mass shifted off-grid
        assert!(out.get(8, 0) < 1.0 - 1e-3);
    }

    #[test]
    fn second_moment_dirac_is_outer_product() {
        let grid = Grid::new(6, 6).unwrap();
        let img = test_image(grid, 9);
        let dist = ParamDistribution::dirac(0.15).unwrap();
        let quad = dist.quadrature(1).unwrap();
        let second = second_moment(TransformKind::Rotation, &dist, &img, &quad).unwrap();
        let t = reference_transform(TransformKind::Rotation, &Theta::Scalar(0.15), &img).unwrap();
        let mut expect = Mat::zeros(grid.dim(), grid.dim());
        expect.add_outer(1.0, t.data());
        assert!(second.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn second_moment_zero_image_is_zero() {
        let grid = Grid::new(5, 5).unwrap();
        let img = Image::zeros(grid);
        let dist = ParamDistribution::uniform(-0.1, 0.1).unwrap();
        let quad = dist.quadrature(17).unwrap();
        let second = second_moment(TransformKind::Rotation, &dist, &img, &quad).unwrap();
        assert_eq!(second.max_abs(), 0.0);
    }

    #[test]
    fn second_moment_matches_dense_grid_brute_force() {
        let grid = Grid::new(8, 8).unwrap();
        let img = Image::impulse(grid, 3, 4).unwrap();
        let amp = 2.0 / 8.0;
        let dist = ParamDistribution::product(
            ParamDistribution::uniform(-amp, amp).unwrap(),
            ParamDistribution::uniform(-amp, amp).unwrap(),
        )
        .unwrap();
        let quad = operator_rule(TransformKind::Translation, &dist, grid, 4).unwrap();
        let second = second_moment(TransformKind::Translation, &dist, &img, &quad).unwrap();

        // brute force: Simpson average over a dense 201^2 theta grid; the
        // integrand is piecewise quadratic per axis with kinks on even
        // grid indices, so composite Simpson integrates it exactly
        let n = 201usize;
        let simpson = |k: usize| -> f64 {
            if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut brute = Mat::zeros(grid.dim(), grid.dim());
        let mut wsum = 0.0;
        for a in 0..n {
            let ta = -amp + 2.0 * amp * a as f64 / (n - 1) as f64;
            let wa = simpson(a);
            for b in 0..n {
                let tb = -amp + 2.0 * amp * b as f64 / (n - 1) as f64;
                let wb = simpson(b);
                let t = reference_transform(
                    TransformKind::Translation,
                    &Theta::Pair(ta, tb),
                    &img,
                )
                .unwrap();
                brute.add_outer(wa * wb, t.data());
                wsum += wa * wb;
            }
        }
        brute.scale(1.0 / wsum);
        let diff = second.max_abs_diff(&brute);
        assert!(diff < 1e-10, "brute-force mismatch {diff}");
    }

    #[test]
    fn moment_set_identity_and_dirac_variance() {
        let grid = Grid::new(7, 7).unwrap();
        let img = test_image(grid, 21);
        let dist = ParamDistribution::dirac(0.2).unwrap();
        let quad = dist.quadrature(1).unwrap();
        let ms = moment_set(TransformKind::ShearHorizontal, &dist, &img, &quad).unwrap();
        assert!(ms.variance().max_abs() < 1e-12);
    }

    #[test]
    fn moment_identity_and_psd() {
        let grid = Grid::new(8, 8).unwrap();
        let img = test_image(grid, 33);
        let dist = ParamDistribution::uniform(-0.15, 0.15).unwrap();
        let quad = operator_rule(TransformKind::Rotation, &dist, grid, 4).unwrap();
        let ms = moment_set(TransformKind::Rotation, &dist, &img, &quad).unwrap();
        // variance + mean mean^T = second
        let d = grid.dim();
        let mut recon = ms.variance().clone();
        for i in 0..d {
            for j in 0..d {
                recon[(i, j)] += ms.mean().data()[i] * ms.mean().data()[j];
            }
        }
        assert!(recon.max_abs_diff(ms.second()) < 1e-10);
        assert!(ms.variance().asymmetry() < 1e-12);
        // variance diagonal nonnegative
        for i in 0..d {
            assert!(ms.variance()[(i, i)] >= -1e-12);
        }
    }

    #[test]
    fn variance_profile_matches_dense() {
        let grid = Grid::new(6, 6).unwrap();
        let img = test_image(grid, 8);
        let dist = ParamDistribution::product(
            ParamDistribution::gaussian(0.0, 0.06).unwrap(),
            ParamDistribution::gaussian(0.0, 0.06).unwrap(),
        )
        .unwrap();
        let quad = operator_rule(TransformKind::Translation, &dist, grid, 4).unwrap();
        let ms = moment_set(TransformKind::Translation, &dist, &img, &quad).unwrap();
        let (diag, rows) =
            variance_profile(TransformKind::Translation, &dist, &img, &quad, &[7, 20]).unwrap();
        for i in 0..grid.dim() {
            assert!((diag[i] - ms.variance()[(i, i)]).abs() < 1e-12);
            assert!((rows[0][i] - ms.variance()[(7, i)]).abs() < 1e-12);
            assert!((rows[1][i] - ms.variance()[(20, i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn shrinking_gaussian_support_approaches_dirac_limit() {
        let grid = Grid::new(12, 12).unwrap();
        let img = test_image(grid, 4);
        let mut prev = f64::INFINITY;
        for sigma in [0.1, 0.01, 0.001] {
            let dist = ParamDistribution::product(
                ParamDistribution::gaussian(0.0, sigma).unwrap(),
                ParamDistribution::gaussian(0.0, sigma).unwrap(),
            )
            .unwrap();
            let mean = translation_expected_analytic(&img, &dist).unwrap();
            let dist_to_img = mean.l2_distance(&img);
            assert!(dist_to_img < prev, "sigma {sigma} did not shrink");
            prev = dist_to_img;
        }
    }

    #[test]
    fn linearity_of_expectation() {
        let grid = Grid::new(6, 6).unwrap();
        let img = test_image(grid, 13);
        let scaled = Image::new(grid, img.data().iter().map(|&v| 2.5 * v).collect()).unwrap();
        let dist = ParamDistribution::gaussian(0.0, 0.08).unwrap();
        let quad = operator_rule(TransformKind::ShearHorizontal, &dist, grid, 4).unwrap();
        let op = expected_operator(TransformKind::ShearHorizontal, &dist, grid, &quad).unwrap();
        let a = expected_image(&op, &scaled).unwrap();
        let b = expected_image(&op, &img).unwrap();
        for k in 0..grid.dim() {
            assert!((a.data()[k] - 2.5 * b.data()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_equals_operator_application_under_rule_nodes() {
        let grid = Grid::new(8, 8).unwrap();
        let img = test_image(grid, 6);
        let dist = ParamDistribution::gaussian(0.0, 0.1).unwrap();
        let quad = operator_rule(TransformKind::Rotation, &dist, grid, 2).unwrap();
        for (theta, _) in quad.nodes().iter().step_by(13) {
            let a = reference_transform(TransformKind::Rotation, theta, &img).unwrap();
            let op = build_operator(TransformKind::Rotation, theta, grid).unwrap();
            let b = apply_operator(&op, &img).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn arity_mismatch_rejected() {
        let grid = Grid::new(4, 4).unwrap();
        let scalar = ParamDistribution::gaussian(0.0, 0.1).unwrap();
        let quad = scalar.quadrature(5).unwrap();
        assert!(expected_operator(TransformKind::Translation, &scalar, grid, &quad).is_err());
    }
}
