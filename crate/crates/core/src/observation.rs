//! The observed image stack and whatever ground truth accompanies it.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Mask, PixelGrid};
use crate::vec3::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub mask: Mask,
    pub channels: usize,
    /// One `height × width × channels` row-major image per light.
    pub images: Vec<Vec<f64>>,
    /// Per image and full-grid pixel, `true` removes it from the image loss.
    pub excluded: Option<Vec<Vec<bool>>>,
    pub truth: Truth,
}

/// Optional ground truth, used for evaluation and light initialization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Truth {
    /// Full-grid unit normals (unmasked entries are ignored).
    pub normals: Option<Vec<Vec3>>,
    pub lights: Option<Vec<Vec3>>,
    pub intensities: Option<Vec<f64>>,
}

impl ObservationSet {
    pub fn new(mask: Mask, channels: usize, images: Vec<Vec<f64>>) -> Result<Self> {
        if mask.count() == 0 {
            return Err(Error::EmptyMask);
        }
        if channels == 0 {
            return Err(Error::Invalid("images need at least one channel".into()));
        }
        let len = mask.width() * mask.height() * channels;
        for (k, img) in images.iter().enumerate() {
            if img.len() != len {
                return Err(Error::Invalid(format!(
                    "image {k} has {} values, expected {len} ({}×{}×{channels})",
                    img.len(),
                    mask.width(),
                    mask.height()
                )));
            }
        }
        Ok(Self {
            mask,
            channels,
            images,
            excluded: None,
            truth: Truth::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    /// Number of images.
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn grid(&self) -> Result<PixelGrid> {
        PixelGrid::new(self.mask.clone()).ok_or(Error::EmptyMask)
    }

    pub fn pixel(&self, image: usize, u: usize, v: usize) -> &[f64] {
        let o = (v * self.width() + u) * self.channels;
        &self.images[image][o..o + self.channels]
    }

    /// Masked observations as `[P, F, C]`.
    pub fn masked_stack(&self, grid: &PixelGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len() * self.len() * self.channels);
        for &(u, v) in grid.pixels() {
            for j in 0..self.len() {
                out.extend_from_slice(self.pixel(j, u, v));
            }
        }
        out
    }

    /// `[P, F]` weights: 1 where the pixel counts toward the image loss.
    pub fn loss_weights(&self, grid: &PixelGrid) -> Vec<f64> {
        let w = self.width();
        let mut out = Vec::with_capacity(grid.len() * self.len());
        for &(u, v) in grid.pixels() {
            for j in 0..self.len() {
                let out_of_loss = self
                    .excluded
                    .as_ref()
                    .is_some_and(|ex| ex[j][v * w + u]);
                out.push(if out_of_loss { 0.0 } else { 1.0 });
            }
        }
        out
    }

    /// Ground-truth normals of the masked pixels, if known.
    pub fn masked_truth_normals(&self, grid: &PixelGrid) -> Option<Vec<Vec3>> {
        let n = self.truth.normals.as_ref()?;
        let w = self.width();
        Some(grid.pixels().iter().map(|&(u, v)| n[v * w + u]).collect())
    }
}
