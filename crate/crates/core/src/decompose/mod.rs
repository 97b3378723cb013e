//! Pixel mask to transformer patch grid.
//!
//! A binary mask is resized to the extractor input resolution with
//! nearest-neighbor sampling, then every patch holding at least one object
//! pixel becomes an object patch; all remaining patches are background. The
//! attention spec lists the patches whose attention scores the extractor
//! must zero for a given view.

mod pgm;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pgm::{parse_pgm, read_pgm, write_pgm};

pub const DEFAULT_IMAGE_SIZE: usize = 224;
pub const DEFAULT_PATCH_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("IndivisibleGrid: image size {image_size} is not a multiple of patch size {patch_size}")]
    IndivisibleGrid { image_size: usize, patch_size: usize },
    #[error("MalformedMask: {0}")]
    MalformedMask(String),
    #[error("IoFailure: {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = DecomposeError> = std::result::Result<T, E>;

/// Binary mask, row-major, 0 = background and 255 = object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(DecomposeError::MalformedMask("empty mask".into()));
        }
        if data.len() != width * height {
            return Err(DecomposeError::MalformedMask(format!(
                "{} bytes for a {width}x{height} mask",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v != 0 && v != 255) {
            return Err(DecomposeError::MalformedMask(format!(
                "value {} at pixel ({}, {}); only 0 and 255 are allowed",
                data[pos],
                pos / width,
                pos % width
            )));
        }
        Ok(PixelMask {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_object(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 255
    }

    pub fn set(&mut self, row: usize, col: usize, object: bool) {
        self.data[row * self.width + col] = if object { 255 } else { 0 };
    }

    /// Nearest-neighbor resize; destination pixel `(y, x)` samples source
    /// `(y * h / size, x * w / size)`.
    pub fn resize_nearest(&self, size: usize) -> PixelMask {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let mut data = Vec::with_capacity(size * size);
        for y in 0..size {
            let sy = y * self.height / size;
            for x in 0..size {
                let sx = x * self.width / size;
                data.push(self.data[sy * self.width + sx]);
            }
        }
        PixelMask {
            width: size,
            height: size,
            data,
        }
    }
}

pub type Patch = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPartition {
    pub grid_w: usize,
    pub grid_h: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub object_patches: BTreeSet<Patch>,
    pub background_patches: BTreeSet<Patch>,
}

impl PatchPartition {
    pub fn n_patches(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn has_object(&self) -> bool {
        !self.object_patches.is_empty()
    }
}

pub fn partition_mask(
    mask: &PixelMask,
    image_size: usize,
    patch_size: usize,
) -> Result<PatchPartition> {
    if patch_size == 0 || image_size == 0 || !image_size.is_multiple_of(patch_size) {
        return Err(DecomposeError::IndivisibleGrid {
            image_size,
            patch_size,
        });
    }
    let resized = mask.resize_nearest(image_size);
    let grid = image_size / patch_size;
    let mut object = vec![false; grid * grid];
    for y in 0..image_size {
        let row = &resized.data[y * image_size..(y + 1) * image_size];
        for (x, &v) in row.iter().enumerate() {
            if v == 255 {
                object[(y / patch_size) * grid + x / patch_size] = true;
            }
        }
    }
    let mut object_patches = BTreeSet::new();
    let mut background_patches = BTreeSet::new();
    for (p, &is_object) in object.iter().enumerate() {
        let patch = (p / grid, p % grid);
        if is_object {
            object_patches.insert(patch);
        } else {
            background_patches.insert(patch);
        }
    }
    Ok(PatchPartition {
        grid_w: grid,
        grid_h: grid,
        image_size,
        patch_size,
        object_patches,
        background_patches,
    })
}

/// Which half of the partition the extractor keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskView {
    Object,
    Background,
}

impl std::str::FromStr for MaskView {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "object" => Ok(MaskView::Object),
            "background" => Ok(MaskView::Background),
            other => Err(format!("unknown mask view {other:?} (object or background)")),
        }
    }
}

/// Patches whose attention scores are zeroed. Serializes as
/// `{view, image_size, patch_size, zeroed: [[row, col], ...]}` with
/// `zeroed` in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionMaskSpec {
    pub view: MaskView,
    pub image_size: usize,
    pub patch_size: usize,
    pub zeroed: BTreeSet<Patch>,
}

impl AttentionMaskSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

pub fn to_attention_spec(partition: &PatchPartition, view: MaskView) -> AttentionMaskSpec {
    let zeroed = match view {
        MaskView::Object => partition.background_patches.clone(),
        MaskView::Background => partition.object_patches.clone(),
    };
    AttentionMaskSpec {
        view,
        image_size: partition.image_size,
        patch_size: partition.patch_size,
        zeroed,
    }
}
