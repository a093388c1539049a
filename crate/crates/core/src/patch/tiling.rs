use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square sliding window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingSpec {
    pub window: usize,
    pub stride: usize,
}

/// Grid coordinate of a window: `col` along the width, `row` along the height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridXY {
    pub col: usize,
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub cols: usize,
    pub rows: usize,
}

impl GridSize {
    pub fn cells(&self) -> usize {
        self.cols * self.rows
    }

    /// Row-major cell coordinates.
    pub fn iter(&self) -> impl Iterator<Item = GridXY> + '_ {
        let cols = self.cols;
        (0..self.rows).flat_map(move |row| (0..cols).map(move |col| GridXY { col, row }))
    }
}

/// Window placements along one axis of length `dim`.
pub fn axis_count(dim: usize, window: usize, stride: usize) -> Option<usize> {
    (window <= dim && stride > 0).then(|| (dim - window) / stride + 1)
}

impl TilingSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let spec = Self { window, stride };
        spec.validate()?;
        Ok(spec)
    }

    /// Non-overlapping tiling (`stride == window`).
    pub fn non_overlapping(window: usize) -> Self {
        Self {
            window,
            stride: window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::InvalidTiling(
                "window and stride must be positive".into(),
            ));
        }
        if self.stride > self.window {
            return Err(Error::InvalidTiling(format!(
                "stride {} exceeds window {}",
                self.stride, self.window
            )));
        }
        Ok(())
    }

    pub fn grid(&self, height: usize, width: usize) -> Result<GridSize> {
        self.validate()?;
        let (Some(cols), Some(rows)) = (
            axis_count(width, self.window, self.stride),
            axis_count(height, self.window, self.stride),
        ) else {
            return Err(Error::InvalidTiling(format!(
                "window {} larger than image {}x{} (width x height)",
                self.window, width, height
            )));
        };
        Ok(GridSize { cols, rows })
    }

    /// Top-left pixel `(x, y)` of a grid cell.
    pub fn origin(&self, cell: GridXY) -> (usize, usize) {
        (cell.col * self.stride, cell.row * self.stride)
    }
}

/// Copies the `window x window` square whose top-left corner is `(x0, y0)`.
pub fn crop<T: Copy>(pixels: &Tensor<T>, x0: usize, y0: usize, window: usize) -> Tensor<T> {
    let (w, c) = (pixels.shape()[1], pixels.shape()[2]);
    let mut data = Vec::with_capacity(window * window * c);
    for y in y0..y0 + window {
        let start = (y * w + x0) * c;
        data.extend_from_slice(&pixels.data()[start..start + window * c]);
    }
    Tensor::new(vec![window, window, c], data).expect("crop shape is consistent")
}

/// All windows of an `H x W x C` image, row-major.
pub fn tile<T: Copy>(pixels: &Tensor<T>, spec: &TilingSpec) -> Result<Vec<(GridXY, Tensor<T>)>> {
    let &[h, w, _] = pixels.shape() else {
        return Err(Error::InvalidShape {
            shape: pixels.shape().to_vec(),
            reason: "expected an HxWxC image".into(),
        });
    };
    let grid = spec.grid(h, w)?;
    Ok(grid
        .iter()
        .map(|cell| {
            let (x, y) = spec.origin(cell);
            (cell, crop(pixels, x, y, spec.window))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn reference_geometries() {
        let train = TilingSpec::new(512, 256).unwrap();
        assert_eq!(
            train.grid(1536, 2048).unwrap(),
            GridSize { cols: 7, rows: 5 }
        );
        assert_eq!(train.grid(1536, 2048).unwrap().cells(), 35);
        let scu = TilingSpec::non_overlapping(512);
        assert_eq!(scu.grid(1536, 2048).unwrap(), GridSize { cols: 4, rows: 3 });
        for stride in [1, 100, 256, 512] {
            assert_eq!(
                TilingSpec::new(512, stride)
                    .unwrap()
                    .grid(512, 512)
                    .unwrap()
                    .cells(),
                1
            );
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(TilingSpec::new(4, 5).is_err());
        assert!(TilingSpec::new(0, 0).is_err());
        assert!(TilingSpec::new(64, 32).unwrap().grid(63, 100).is_err());
    }

    #[test]
    fn tiles_are_copies_in_row_major_order() {
        let img = Tensor::new(vec![4, 6, 1], (0..24).collect::<Vec<u32>>()).unwrap();
        let tiles = tile(&img, &TilingSpec::new(2, 2).unwrap()).unwrap();
        let coords: Vec<_> = tiles.iter().map(|(g, _)| (g.col, g.row)).collect();
        assert_eq!(coords, [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]);
        assert_eq!(tiles[4].1.data(), &[14, 15, 20, 21]);
    }

    proptest! {
        // Brute force: every x0 with x0 % stride == 0 and x0 + window <= dim.
        #[test]
        fn count_matches_enumeration(dim in 1usize..80, window in 1usize..40, stride in 1usize..40) {
            prop_assume!(stride <= window);
            let brute = (0..dim).filter(|x| x % stride == 0 && x + window <= dim).count();
            match axis_count(dim, window, stride) {
                Some(n) => prop_assert_eq!(n, brute),
                None => prop_assert_eq!(brute, 0),
            }
        }

        #[test]
        fn every_window_fits(h in 4usize..40, w in 4usize..40, window in 1usize..5, stride in 1usize..5) {
            prop_assume!(stride <= window);
            let spec = TilingSpec::new(window, stride).unwrap();
            let grid = spec.grid(h, w).unwrap();
            for cell in grid.iter() {
                let (x, y) = spec.origin(cell);
                prop_assert!(x + window <= w && y + window <= h);
            }
        }
    }
}
