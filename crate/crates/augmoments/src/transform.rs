//! Coordinate warps for the transform families and their sparse
//! pixel-space operators.
//!
//! A transform is applied by reading, for each target pixel at coordinate
//! (u, v), a source coordinate `warp_coord(kind, theta, (u, v))` and
//! bilinearly interpolating the four surrounding pixel centers. Building
//! the weights into a matrix gives the sparse operator `M(theta)` with
//! `transformed = M(theta) * flattened_image`; evaluating them on the fly
//! gives `reference_transform`, which is the same computation without
//! materializing the matrix.
//!
//! Sign convention: translation by `theta` moves image content by `+theta`,
//! i.e. target (u, v) reads source (u - theta_x, v - theta_y). Rotation
//! reads `R(-theta) (u, v)`, zoom reads `(u / theta, v / theta)`,
//! horizontal shear reads `(u - theta * v, v)` and vertical shear
//! `(u, v - theta * u)`. Boundary policy is zero padding: source locations
//! outside the hull of pixel centers contribute nothing, so border rows of
//! `M(theta)` may sum to less than one.

use crate::error::{Error, Result};
use crate::grid::{Grid, Image};
use crate::mat::Mat;
use crate::num::Scalar;

/// The supported transform families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Shift by (theta_x, theta_y) in normalized coordinates.
    Translation,
    /// x' = x + theta * y at fixed y.
    ShearHorizontal,
    /// y' = y + theta * x at fixed x.
    ShearVertical,
    /// Rotation by theta radians about the image center.
    Rotation,
    /// Scaling about the center by a factor theta > 0.
    Zoom,
}

impl TransformKind {
    /// Number of scalar parameters of this family.
    pub fn arity(&self) -> usize {
        match self {
            TransformKind::Translation => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Translation => "translation",
            TransformKind::ShearHorizontal => "shear-horizontal",
            TransformKind::ShearVertical => "shear-vertical",
            TransformKind::Rotation => "rotation",
            TransformKind::Zoom => "zoom",
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translation" => Ok(TransformKind::Translation),
            "shear-horizontal" | "shear-h" => Ok(TransformKind::ShearHorizontal),
            "shear-vertical" | "shear-v" => Ok(TransformKind::ShearVertical),
            "rotation" => Ok(TransformKind::Rotation),
            "zoom" => Ok(TransformKind::Zoom),
            other => Err(Error::Argument(format!("unknown transform kind '{other}'"))),
        }
    }
}

/// Transform parameter: a scalar or a pair, matching the family's arity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta<F> {
    Scalar(F),
    Pair(F, F),
}

impl<F: Scalar> Theta<F> {
    pub fn arity(&self) -> usize {
        match self {
            Theta::Scalar(_) => 1,
            Theta::Pair(_, _) => 2,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Theta::Scalar(a) => a.is_finite(),
            Theta::Pair(a, b) => a.is_finite() && b.is_finite(),
        }
    }

    pub fn scalar(&self) -> Result<F> {
        match self {
            Theta::Scalar(a) => Ok(*a),
            Theta::Pair(_, _) => Err(Error::Argument(
                "expected a scalar parameter, got a pair".into(),
            )),
        }
    }

    pub fn pair(&self) -> Result<(F, F)> {
        match self {
            Theta::Pair(a, b) => Ok((*a, *b)),
            Theta::Scalar(_) => Err(Error::Argument(
                "expected a pair parameter, got a scalar".into(),
            )),
        }
    }
}

fn check_theta<F: Scalar>(kind: TransformKind, theta: &Theta<F>) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::Argument("non-finite transform parameter".into()));
    }
    if theta.arity() != kind.arity() {
        return Err(Error::Argument(format!(
            "{} takes {} parameter(s), got {}",
            kind.name(),
            kind.arity(),
            theta.arity()
        )));
    }
    if kind == TransformKind::Zoom && theta.scalar()? <= F::zero() {
        return Err(Error::Argument("zoom factor must be positive".into()));
    }
    Ok(())
}

/// Source coordinate that target coordinate `p` reads from.
pub fn warp_coord<F: Scalar>(
    kind: TransformKind,
    theta: &Theta<F>,
    p: (F, F),
) -> Result<(F, F)> {
    check_theta(kind, theta)?;
    let (u, v) = p;
    Ok(match kind {
        TransformKind::Translation => {
            let (tx, ty) = theta.pair()?;
            (u - tx, v - ty)
        }
        TransformKind::ShearHorizontal => {
            let t = theta.scalar()?;
            (u - t * v, v)
        }
        TransformKind::ShearVertical => {
            let t = theta.scalar()?;
            (u, v - t * u)
        }
        TransformKind::Rotation => {
            let t = theta.scalar()?;
            let (s, c) = (t.sin(), t.cos());
            // R(-theta) * (u, v)
            (c * u + s * v, -s * u + c * v)
        }
        TransformKind::Zoom => {
            let t = theta.scalar()?;
            (u / t, v / t)
        }
    })
}

/// Up to four (flat index, weight) bilinear taps for the source coordinate
/// (x, y); taps falling outside the grid are dropped (zero padding).
fn bilinear_taps<F: Scalar>(grid: Grid, x: F, y: F, out: &mut Vec<(usize, F)>) {
    out.clear();
    let half = F::of(0.5);
    let w = grid.width();
    let h = grid.height();
    let col = (x + half) * F::of(w as f64) - half;
    let row = (y + half) * F::of(h as f64) - half;
    let c0 = col.floor();
    let r0 = row.floor();
    let fc = col - c0;
    let fr = row - r0;
    let c0 = c0.as_f64() as i64;
    let r0 = r0.as_f64() as i64;
    let one = F::one();
    let taps = [
        (r0, c0, (one - fr) * (one - fc)),
        (r0, c0 + 1, (one - fr) * fc),
        (r0 + 1, c0, fr * (one - fc)),
        (r0 + 1, c0 + 1, fr * fc),
    ];
    for (r, c, wt) in taps {
        if wt == F::zero() {
            continue;
        }
        if r >= 0 && (r as usize) < h && c >= 0 && (c as usize) < w {
            out.push((r as usize * w + c as usize, wt));
        }
    }
}

/// Sparse row-major transform operator; at most 4 nonzeros per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<F> {
    grid: Grid,
    rows: Vec<Vec<(usize, F)>>,
}

impl<F: Scalar> SparseOperator<F> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rows(&self) -> &[Vec<(usize, F)>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn row_sum(&self, r: usize) -> F {
        self.rows[r].iter().map(|&(_, w)| w).sum()
    }

    pub fn to_dense(&self) -> Mat<F> {
        let d = self.grid.dim();
        let mut m = Mat::zeros(d, d);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                m[(r, c)] = m[(r, c)] + w;
            }
        }
        m
    }

    pub fn is_identity(&self, tol: F) -> bool {
        self.rows.iter().enumerate().all(|(r, row)| {
            let diag: F = row
                .iter()
                .filter(|&&(c, _)| c == r)
                .map(|&(_, w)| w)
                .sum();
            let off: F = row
                .iter()
                .filter(|&&(c, _)| c != r)
                .map(|&(_, w)| w.abs())
                .sum();
            (diag - F::one()).abs() <= tol && off <= tol
        })
    }
}

/// Builds the sparse pixel-space operator M(theta) on the given grid.
pub fn build_operator<F: Scalar>(
    kind: TransformKind,
    theta: &Theta<F>,
    grid: Grid,
) -> Result<SparseOperator<F>> {
    check_theta(kind, theta)?;
    let mut rows = Vec::with_capacity(grid.dim());
    let mut taps = Vec::with_capacity(4);
    for i in 0..grid.height() {
        for j in 0..grid.width() {
            let p = grid.pixel_to_coord(i, j)?;
            let (sx, sy) = warp_coord(kind, theta, p)?;
            bilinear_taps(grid, sx, sy, &mut taps);
            rows.push(taps.clone());
        }
    }
    Ok(SparseOperator { grid, rows })
}

/// Sparse matrix-vector product with an image.
pub fn apply_operator<F: Scalar>(op: &SparseOperator<F>, img: &Image<F>) -> Result<Image<F>> {
    if op.grid != img.grid() {
        return Err(Error::Shape("operator and image grids differ".into()));
    }
    let x = img.data();
    let data = op
        .rows
        .iter()
        .map(|row| row.iter().map(|&(c, w)| w * x[c]).sum())
        .collect();
    Image::new(op.grid, data)
}

/// Direct coordinate-space warp, evaluated per pixel without building
/// M(theta). Semantically identical to `apply_operator(build_operator(..))`.
pub fn reference_transform<F: Scalar>(
    kind: TransformKind,
    theta: &Theta<F>,
    img: &Image<F>,
) -> Result<Image<F>> {
    check_theta(kind, theta)?;
    let grid = img.grid();
    let x = img.data();
    let mut data = Vec::with_capacity(grid.dim());
    let mut taps = Vec::with_capacity(4);
    for i in 0..grid.height() {
        for j in 0..grid.width() {
            let p = grid.pixel_to_coord(i, j)?;
            let (sx, sy) = warp_coord(kind, theta, p)?;
            bilinear_taps(grid, sx, sy, &mut taps);
            data.push(taps.iter().map(|&(c, w)| w * x[c]).sum());
        }
    }
    Image::new(grid, data)
}
