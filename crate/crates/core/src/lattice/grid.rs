use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Default cap on `nx * ny` for 2D renders.
pub const MAX_GRID2D_PIXELS: usize = 1 << 22;

/// Uniform 1D transverse lattice. Lengths are in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D<T> {
    pixel_count: usize,
    pitch: T,
    origin: T,
}

impl<T: Real> Grid1D<T> {
    pub fn new(pixel_count: usize, pitch: T, origin: T) -> Result<Self> {
        if pixel_count < 2 {
            return Err(Error::config("grid", "pixel_count", "must be at least 2"));
        }
        if !(pitch > T::zero()) || !pitch.is_finite() {
            return Err(Error::config("grid", "pitch", "must be positive and finite"));
        }
        if !origin.is_finite() {
            return Err(Error::config("grid", "origin", "must be finite"));
        }
        Ok(Self {
            pixel_count,
            pitch,
            origin,
        })
    }

    /// Grid whose pixel centers are symmetric about x = 0.
    pub fn centered(pixel_count: usize, pitch: T) -> Result<Self> {
        let half = lit::<T>((pixel_count as f64 - 1.0) / 2.0);
        Self::new(pixel_count, pitch, -half * pitch)
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn origin(&self) -> T {
        self.origin
    }

    #[inline]
    pub fn coordinate(&self, i: usize) -> T {
        self.origin + lit::<T>(i as f64) * self.pitch
    }

    pub fn coordinates(&self) -> Vec<T> {
        (0..self.pixel_count).map(|i| self.coordinate(i)).collect()
    }

    /// Left edge of pixel 0 to right edge of the last pixel.
    pub fn extent(&self) -> (T, T) {
        let half = self.pitch / lit(2.0);
        (
            self.coordinate(0) - half,
            self.coordinate(self.pixel_count - 1) + half,
        )
    }

    pub fn span(&self) -> T {
        lit::<T>(self.pixel_count as f64) * self.pitch
    }
}

/// Square-pixel 2D lattice for the speckle renderer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D<T> {
    pub nx: usize,
    pub ny: usize,
    pub pitch: T,
}

impl<T: Real> Grid2D<T> {
    pub fn new(nx: usize, ny: usize, pitch: T) -> Result<Self> {
        Self::with_limit(nx, ny, pitch, MAX_GRID2D_PIXELS)
    }

    pub fn with_limit(nx: usize, ny: usize, pitch: T, max_pixels: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config("grid2d", "nx/ny", "must be positive"));
        }
        if nx.saturating_mul(ny) > max_pixels {
            return Err(Error::config(
                "grid2d",
                "nx/ny",
                format!("{}x{} exceeds the {} pixel limit", nx, ny, max_pixels),
            ));
        }
        if !(pitch > T::zero()) || !pitch.is_finite() {
            return Err(Error::config("grid2d", "pitch", "must be positive and finite"));
        }
        Ok(Self { nx, ny, pitch })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical coordinate of pixel (ix, iy), with the grid centered on the origin.
    pub fn coordinate(&self, ix: usize, iy: usize) -> (T, T) {
        let cx = lit::<T>((self.nx as f64 - 1.0) / 2.0);
        let cy = lit::<T>((self.ny as f64 - 1.0) / 2.0);
        (
            (lit::<T>(ix as f64) - cx) * self.pitch,
            (lit::<T>(iy as f64) - cy) * self.pitch,
        )
    }

    /// Row-major index (rows are y).
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_increase() {
        let g = Grid1D::new(5, 2.0, -4.0).unwrap();
        assert_eq!(g.coordinates(), vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
        assert_eq!(g.extent(), (-5.0, 5.0));
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::<f64>::new(1, 1.0, 0.0).is_err());
        assert!(Grid1D::<f64>::new(4, 0.0, 0.0).is_err());
        assert!(Grid1D::<f64>::new(4, -1.0, 0.0).is_err());
        assert!(Grid2D::<f64>::new(4096, 4096, 1.0).is_err());
        assert!(Grid2D::<f64>::new(2048, 2048, 1.0).is_ok());
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = Grid1D::<f64>::centered(4, 1.0).unwrap();
        assert_eq!(g.coordinates(), vec![-1.5, -0.5, 0.5, 1.5]);
    }
}
