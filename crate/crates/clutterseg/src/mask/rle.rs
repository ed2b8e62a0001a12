//! Run-length encoded binary masks.
//!
//! Runs are (start, len) pairs over row-major pixel indices, sorted,
//! non-overlapping and non-adjacent, so equal pixel sets have equal runs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    width: u32,
    height: u32,
    runs: Vec<(u32, u32)>,
}

/// Dense boolean pixel grid used in projection-heavy loops.
#[derive(Debug, Clone)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Bitmap {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        u < self.width && v < self.height && self.bits[(v * self.width + u) as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32) {
        if u < self.width && v < self.height {
            self.bits[(v * self.width + u) as usize] = true;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// 8-connected dilation by `radius` pixels.
    pub fn dilate(&self, radius: u32) -> Bitmap {
        let mut out = self.clone();
        for _ in 0..radius {
            let src = out.clone();
            for v in 0..self.height as i64 {
                for u in 0..self.width as i64 {
                    if src.get(u as u32, v as u32) {
                        continue;
                    }
                    'probe: for dv in -1..=1i64 {
                        for du in -1..=1i64 {
                            let (nu, nv) = (u + du, v + dv);
                            if nu >= 0
                                && nv >= 0
                                && src.get(nu as u32, nv as u32)
                            {
                                out.set(u as u32, v as u32);
                                break 'probe;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Pixels of the set region with at least one 4-neighbor outside it
    /// (image border counts as outside).
    pub fn boundary_pixels(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if !self.get(u, v) {
                    continue;
                }
                let edge = u == 0
                    || v == 0
                    || u + 1 == self.width
                    || v + 1 == self.height
                    || !self.get(u - 1, v)
                    || !self.get(u + 1, v)
                    || !self.get(u, v - 1)
                    || !self.get(u, v + 1);
                if edge {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn intersection_count(&self, other: &Bitmap) -> usize {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn iou(&self, other: &Bitmap) -> f64 {
        let inter = self.intersection_count(other);
        let union = self.count() + other.count() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) {
                    su += u as f64;
                    sv += v as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (su / n as f64, sv / n as f64))
    }
}

impl RleMask {
    pub fn new(width: u32, height: u32, mut runs: Vec<(u32, u32)>) -> Result<Self> {
        runs.retain(|&(_, len)| len > 0);
        runs.sort_unstable();
        let total = (width as u64) * (height as u64);
        let mut normalized: Vec<(u32, u32)> = Vec::with_capacity(runs.len());
        for (start, len) in runs {
            let end = start as u64 + len as u64;
            if end > total {
                return Err(Error::parse(
                    "<rle>",
                    format!("run {start}+{len} exceeds {width}x{height} grid"),
                ));
            }
            match normalized.last_mut() {
                Some((ps, pl)) if *ps as u64 + *pl as u64 >= start as u64 => {
                    let pend = *ps as u64 + *pl as u64;
                    if end > pend {
                        *pl = (end - *ps as u64) as u32;
                    }
                }
                _ => normalized.push((start, len)),
            }
        }
        Ok(RleMask {
            width,
            height,
            runs: normalized,
        })
    }

    pub fn from_bitmap(bm: &Bitmap) -> Self {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &b) in bm.bits.iter().enumerate() {
            match (b, start) {
                (true, None) => start = Some(i as u32),
                (false, Some(s)) => {
                    runs.push((s, i as u32 - s));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, bm.bits.len() as u32 - s));
        }
        RleMask {
            width: bm.width,
            height: bm.height,
            runs,
        }
    }

    pub fn to_bitmap(&self) -> Bitmap {
        let mut bm = Bitmap::new(self.width, self.height);
        for &(start, len) in &self.runs {
            for i in start..start + len {
                bm.bits[i as usize] = true;
            }
        }
        bm
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn area(&self) -> u32 {
        self.runs.iter().map(|&(_, len)| len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Pixel count of the intersection, by merging sorted run lists.
    pub fn intersection_area(&self, other: &RleMask) -> u32 {
        let (mut i, mut j, mut acc) = (0usize, 0usize, 0u64);
        while i < self.runs.len() && j < other.runs.len() {
            let (a0, al) = self.runs[i];
            let (b0, bl) = other.runs[j];
            let (a1, b1) = (a0 as u64 + al as u64, b0 as u64 + bl as u64);
            let lo = a0.max(b0) as u64;
            let hi = a1.min(b1);
            if hi > lo {
                acc += hi - lo;
            }
            if a1 <= b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        acc as u32
    }

    pub fn union(&self, other: &RleMask) -> RleMask {
        let mut runs = self.runs.clone();
        runs.extend_from_slice(&other.runs);
        RleMask::new(self.width, self.height, runs).expect("valid runs")
    }

    pub fn iou(&self, other: &RleMask) -> f64 {
        let inter = self.intersection_area(other) as f64;
        let union = self.area() as f64 + other.area() as f64 - inter;
        if union == 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let (mut su, mut sv, mut n) = (0.0f64, 0.0f64, 0u64);
        for &(start, len) in &self.runs {
            for i in start..start + len {
                su += (i % self.width) as f64;
                sv += (i / self.width) as f64;
                n += 1;
            }
        }
        Some((su / n as f64, sv / n as f64))
    }

    /// Row-major pixel indices of the mask.
    pub fn pixel_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.runs
            .iter()
            .flat_map(|&(start, len)| start..start + len)
    }
}
