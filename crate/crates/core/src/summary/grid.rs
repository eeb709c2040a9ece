use crate::error::{Error, Result};
use crate::model::BoundingBox;

/// Square patch tiling of a frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
    default_boxes: Vec<BoundingBox>,
}

impl PatchGrid {
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Frame height the grid was built for.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of patches `K`.
    pub fn len(&self) -> usize {
        self.default_boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.default_boxes.is_empty()
    }

    pub fn default_boxes(&self) -> &[BoundingBox] {
        &self.default_boxes
    }

    /// Pixel-space centre of patch `k`.
    pub fn center(&self, k: usize) -> (f64, f64) {
        let b = &self.default_boxes[k];
        (0.5 * (b.x_min() + b.x_max()), 0.5 * (b.y_min() + b.y_max()))
    }
}

/// Tiles the top-left `floor(H/S)*S x floor(W/S)*S` region with `S x S` patches.
pub fn build_patch_grid(height: usize, width: usize, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::InvalidConfig("patch size must be positive".into()));
    }
    if height < patch_size || width < patch_size {
        return Err(Error::PatchLargerThanFrame { height, width, patch: patch_size });
    }
    let rows = height / patch_size;
    let cols = width / patch_size;
    let s = patch_size as f64;
    let mut default_boxes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (c as f64 * s, r as f64 * s);
            default_boxes.push(BoundingBox::new(x, y, x + s, y + s)?);
        }
    }
    Ok(PatchGrid { patch_size, rows, cols, height, width, default_boxes })
}
