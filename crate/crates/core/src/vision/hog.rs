//! Whole-image HOG descriptor.
//!
//! The image is resized to a square canvas, gradients are taken by central
//! differences (borders replicated), each pixel votes its gradient magnitude
//! into the two nearest of `bins` unsigned orientation bins, and overlapping
//! blocks of cells are L2-normalized, clipped and renormalized (L2-Hys).

use serde::{Deserialize, Serialize};

use super::image::GrayImage;
use super::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogLayout {
    /// Side of the square canvas in pixels.
    pub canvas: usize,
    /// Side of a cell in pixels.
    pub cell: usize,
    /// Unsigned orientation bins over [0, 180) degrees.
    pub bins: usize,
    /// Side of a block in cells.
    pub block: usize,
    /// Block stride in cells.
    pub stride: usize,
    /// L2-Hys clipping value.
    pub clip: f64,
}

impl Default for HogLayout {
    fn default() -> Self {
        Self {
            canvas: 64,
            cell: 8,
            bins: 9,
            block: 2,
            stride: 1,
            clip: 0.2,
        }
    }
}

impl HogLayout {
    pub fn cells_per_side(&self) -> usize {
        self.canvas / self.cell
    }

    pub fn blocks_per_side(&self) -> usize {
        (self.cells_per_side() - self.block) / self.stride + 1
    }

    pub fn block_len(&self) -> usize {
        self.block * self.block * self.bins
    }

    /// Descriptor length.
    pub fn len(&self) -> usize {
        self.blocks_per_side().pow(2) * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-cell orientation histograms of an image already at canvas size,
/// laid out `[cell_y][cell_x][bin]`.
pub fn cell_histograms(image: &GrayImage, layout: &HogLayout) -> Vec<f64> {
    let cells = layout.cells_per_side();
    let bins = layout.bins;
    let bin_width = 180.0 / bins as f64;
    let mut hist = vec![0.0; cells * cells * bins];
    for y in 0..cells * layout.cell {
        for x in 0..cells * layout.cell {
            let (xi, yi) = (x as isize, y as isize);
            let gx = image.get_clamped(xi + 1, yi) - image.get_clamped(xi - 1, yi);
            let gy = image.get_clamped(xi, yi + 1) - image.get_clamped(xi, yi - 1);
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            // Bin centers sit at (b + 0.5) * bin_width.
            let pos = angle / bin_width - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as isize).rem_euclid(bins as isize) as usize;
            let b1 = (b0 + 1) % bins;
            let cell = (y / layout.cell) * cells + x / layout.cell;
            hist[cell * bins + b0] += magnitude * (1.0 - frac);
            hist[cell * bins + b1] += magnitude * frac;
        }
    }
    hist
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// HOG descriptor of `image` (resized to the canvas first).
pub fn extract_hog(image: &GrayImage, layout: &HogLayout) -> FeatureVector {
    let canvas = image.resize_bilinear(layout.canvas, layout.canvas);
    let hist = cell_histograms(&canvas, layout);
    let cells = layout.cells_per_side();
    let blocks = layout.blocks_per_side();
    let bins = layout.bins;
    let mut out = Vec::with_capacity(layout.len());
    let mut block = Vec::with_capacity(layout.block_len());
    for by in 0..blocks {
        for bx in 0..blocks {
            block.clear();
            for cy in by * layout.stride..by * layout.stride + layout.block {
                for cx in bx * layout.stride..bx * layout.stride + layout.block {
                    let at = (cy * cells + cx) * bins;
                    block.extend_from_slice(&hist[at..at + bins]);
                }
            }
            l2_normalize(&mut block);
            block.iter_mut().for_each(|x| *x = x.min(layout.clip));
            l2_normalize(&mut block);
            out.extend_from_slice(&block);
        }
    }
    FeatureVector::new(out)
}
