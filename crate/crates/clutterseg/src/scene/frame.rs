//! In-memory frame data: images, depth maps and posed mask layers.

use std::collections::BTreeMap;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::camera::{CameraPose, Intrinsics};
use crate::mask::rle::RleMask;

/// RGB image with channels in [0, 1].
#[derive(Debug, Clone)]
pub struct ImageBuf {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 3]>,
}

impl ImageBuf {
    pub fn new(width: u32, height: u32) -> Self {
        ImageBuf {
            width,
            height,
            pixels: vec![[0.0; 3]; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> [f32; 3] {
        self.pixels[(v * self.width + u) as usize]
    }

    /// Bilinear sample at subpixel coordinates, clamped to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f64; 3] {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as u32;
        let y0 = yc.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let mut out = [0.0f64; 3];
        for c in 0..3 {
            let v00 = self.get(x0, y0)[c] as f64;
            let v10 = self.get(x1, y0)[c] as f64;
            let v01 = self.get(x0, y1)[c] as f64;
            let v11 = self.get(x1, y1)[c] as f64;
            out[c] = v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy;
        }
        out
    }
}

/// Depth map in meters; 0 marks invalid pixels.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.values[(v * self.width + u) as usize]
    }

    /// Replace non-finite or negative entries with 0 (invalid).
    pub fn sanitize(&mut self) {
        for v in &mut self.values {
            if !v.is_finite() || *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// One posed input view with its mask layer and per-mask embeddings.
#[derive(Debug, Clone)]
pub struct CameraFrame {
    pub frame_index: u32,
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
    pub rgb: ImageBuf,
    pub depth: DepthMap,
    /// (mask id, mask), sorted by id.
    pub masks: Vec<(u32, RleMask)>,
    pub mask_embeddings: BTreeMap<u32, Embedding>,
}

impl CameraFrame {
    /// Check the dimensional and pairing invariants.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.rgb.width, self.rgb.height);
        if self.depth.width != w || self.depth.height != h {
            return Err(Error::GeometryMismatch(format!(
                "frame {}: depth is {}x{}, rgb is {}x{}",
                self.frame_index, self.depth.width, self.depth.height, w, h
            )));
        }
        for (id, m) in &self.masks {
            if m.width() != w || m.height() != h {
                return Err(Error::GeometryMismatch(format!(
                    "frame {}: mask {} is {}x{}, image is {}x{}",
                    self.frame_index,
                    id,
                    m.width(),
                    m.height(),
                    w,
                    h
                )));
            }
            if !self.mask_embeddings.contains_key(id) {
                return Err(Error::IncompleteBundle(format!(
                    "frame {}: mask {} has no embedding",
                    self.frame_index, id
                )));
            }
        }
        if self.mask_embeddings.len() != self.masks.len() {
            return Err(Error::IncompleteBundle(format!(
                "frame {}: {} embeddings for {} masks",
                self.frame_index,
                self.mask_embeddings.len(),
                self.masks.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SceneMeta {
    pub scene_id: String,
    pub embed_dim: usize,
    /// Length unit of poses and depth; always meters in this crate.
    pub units: String,
}

/// A validated multi-view capture.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub meta: SceneMeta,
    pub frames: Vec<CameraFrame>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::IncompleteBundle(format!(
                "need at least 2 frames, found {}",
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.frame_index as usize != i {
                return Err(Error::IncompleteBundle(format!(
                    "frame indices must be contiguous from 0; slot {i} holds index {}",
                    f.frame_index
                )));
            }
            f.validate()?;
        }
        Ok(())
    }

    /// Restrict to a subset of views, re-indexing frames from 0.
    pub fn subset(&self, keep: &[usize]) -> SceneBundle {
        let frames = keep
            .iter()
            .enumerate()
            .map(|(new_idx, &old)| {
                let mut f = self.frames[old].clone();
                f.frame_index = new_idx as u32;
                f
            })
            .collect();
        SceneBundle {
            meta: self.meta.clone(),
            frames,
        }
    }

    pub fn total_mask_count(&self) -> usize {
        self.frames.iter().map(|f| f.masks.len()).sum()
    }
}
