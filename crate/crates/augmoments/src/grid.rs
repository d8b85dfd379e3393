//! Grid geometry, image container and index/coordinate conventions.
//!
//! Pixels are 0-indexed (row, column) and flatten row-major as
//! `k = i * width + j`. Pixel `(i, j)` sits at the center-anchored
//! continuous coordinate
//! `(x, y) = ((j + 0.5) / width - 0.5, (i + 0.5) / height - 0.5)`,
//! so the image center is the origin and rotation/zoom/shear are anchored
//! at the center.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Uniform pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    height: usize,
    width: usize,
}

impl Grid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "grid dimensions must be positive, got {}x{}",
                height, width
            )));
        }
        Ok(Grid { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Flattened dimension D = height * width.
    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    fn check_index(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.height || j >= self.width {
            return Err(Error::Range(format!(
                "pixel ({}, {}) outside {}x{} grid",
                i, j, self.height, self.width
            )));
        }
        Ok(())
    }

    /// Center-anchored coordinate of pixel (i, j); x follows columns,
    /// y follows rows.
    pub fn pixel_to_coord<F: Scalar>(&self, i: usize, j: usize) -> Result<(F, F)> {
        self.check_index(i, j)?;
        let half = F::of(0.5);
        let x = (F::of(j as f64) + half) / F::of(self.width as f64) - half;
        let y = (F::of(i as f64) + half) / F::of(self.height as f64) - half;
        Ok((x, y))
    }

    /// Row-major flat index k = i * width + j.
    pub fn flat_index(&self, i: usize, j: usize) -> Result<usize> {
        self.check_index(i, j)?;
        Ok(i * self.width + j)
    }

    /// Inverse of `flat_index`: (k // width, k % width).
    pub fn unflatten(&self, k: usize) -> Result<(usize, usize)> {
        if k >= self.dim() {
            return Err(Error::Range(format!(
                "flat index {} outside dimension {}",
                k,
                self.dim()
            )));
        }
        Ok((k / self.width, k % self.width))
    }
}

/// Flattened grayscale raster with its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<F> {
    grid: Grid,
    data: Vec<F>,
}

impl<F: Scalar> Image<F> {
    pub fn new(grid: Grid, data: Vec<F>) -> Result<Self> {
        if data.len() != grid.dim() {
            return Err(Error::Shape(format!(
                "image data length {} does not match {}x{} grid",
                data.len(),
                grid.height(),
                grid.width()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("image contains non-finite values".into()));
        }
        Ok(Image { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Image {
            grid,
            data: vec![F::zero(); grid.dim()],
        }
    }

    /// Single pixel set to 1, everything else 0.
    pub fn impulse(grid: Grid, i: usize, j: usize) -> Result<Self> {
        let k = grid.flat_index(i, j)?;
        let mut img = Self::zeros(grid);
        img.data[k] = F::one();
        Ok(img)
    }

    pub fn constant(grid: Grid, value: F) -> Self {
        Image {
            grid,
            data: vec![value; grid.dim()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.grid.width() + j]
    }

    pub fn l2_distance(&self, other: &Image<F>) -> F {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Image<F>) -> F {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords_match_convention() {
        let g = Grid::new(2, 2).unwrap();
        assert_eq!(g.pixel_to_coord::<f64>(0, 0).unwrap(), (-0.25, -0.25));
        let g1 = Grid::new(1, 1).unwrap();
        assert_eq!(g1.pixel_to_coord::<f64>(0, 0).unwrap(), (0.0, 0.0));
        let g4 = Grid::new(4, 4).unwrap();
        assert_eq!(g4.pixel_to_coord::<f64>(3, 3).unwrap(), (0.375, 0.375));
    }

    #[test]
    fn flat_index_examples() {
        let g = Grid::new(3, 5).unwrap();
        assert_eq!(g.flat_index(0, 0).unwrap(), 0);
        assert_eq!(g.flat_index(2, 4).unwrap(), 14);
        assert_eq!(g.flat_index(1, 2).unwrap(), 7);
    }

    #[test]
    fn out_of_range_rejected() {
        let g = Grid::new(3, 5).unwrap();
        assert!(g.flat_index(3, 0).is_err());
        assert!(g.pixel_to_coord::<f64>(0, 5).is_err());
        assert!(g.unflatten(15).is_err());
    }

    #[test]
    fn flat_index_round_trip() {
        let g = Grid::new(7, 3).unwrap();
        for i in 0..7 {
            for j in 0..3 {
                let k = g.flat_index(i, j).unwrap();
                assert_eq!(g.unflatten(k).unwrap(), (i, j));
            }
        }
    }

    #[test]
    fn mirrored_pixels_have_opposite_coords() {
        let g = Grid::new(6, 9).unwrap();
        for i in 0..6 {
            for j in 0..9 {
                let (x, y) = g.pixel_to_coord::<f64>(i, j).unwrap();
                let (xm, ym) = g.pixel_to_coord::<f64>(5 - i, 8 - j).unwrap();
                assert!((x + xm).abs() < 1e-15);
                assert!((y + ym).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn image_checks_length_and_finiteness() {
        let g = Grid::new(2, 2).unwrap();
        assert!(Image::new(g, vec![0.0f64; 3]).is_err());
        assert!(Image::new(g, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let g = Grid::new(2, 2).unwrap();
        let (x, y) = g.pixel_to_coord::<f32>(0, 0).unwrap();
        assert_eq!((x, y), (-0.25f32, -0.25f32));
    }
}
