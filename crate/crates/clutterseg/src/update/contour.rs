//! Exact Euclidean distance transforms and contour extraction for the
//! chamfer loss.

use crate::mask::rle::Bitmap;

/// Distance field over a pixel grid: value at (x, y) is the Euclidean
/// distance to the nearest site pixel. Bilinear sampling gives sub-pixel,
/// piecewise-smooth values.
pub struct DistanceField {
    pub width: u32,
    pub height: u32,
    values: Vec<f64>,
}

const INF: f64 = 1e18;

/// One-dimensional squared-distance transform (Felzenszwalb–Huttenlocher
/// lower-envelope-of-parabolas pass).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

impl DistanceField {
    /// Exact Euclidean distance transform with the given pixels as sites.
    pub fn from_sites(width: u32, height: u32, sites: &[(u32, u32)]) -> DistanceField {
        let (w, h) = (width as usize, height as usize);
        let mut grid = vec![INF; w * h];
        for &(u, v) in sites {
            if u < width && v < height {
                grid[v as usize * w + u as usize] = 0.0;
            }
        }
        // columns
        let mut col_in = vec![0.0f64; h];
        let mut col_out = vec![0.0f64; h];
        for x in 0..w {
            for y in 0..h {
                col_in[y] = grid[y * w + x];
            }
            dt_1d(&col_in, &mut col_out);
            for y in 0..h {
                grid[y * w + x] = col_out[y];
            }
        }
        // rows
        let mut row_out = vec![0.0f64; w];
        for y in 0..h {
            dt_1d(&grid[y * w..(y + 1) * w].to_vec(), &mut row_out);
            grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
        }
        for v in &mut grid {
            *v = v.sqrt();
        }
        DistanceField {
            width,
            height,
            values: grid,
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    /// Bilinear sample, clamped to the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as u32;
        let y0 = yc.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        self.at(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + self.at(x1, y0) * fx * (1.0 - fy)
            + self.at(x0, y1) * (1.0 - fx) * fy
            + self.at(x1, y1) * fx * fy
    }
}

/// Splat points to pixels (nearest pixel per point) and dilate once.
pub fn footprint_bitmap(points_px: &[(f64, f64)], width: u32, height: u32) -> Bitmap {
    let mut bm = Bitmap::new(width, height);
    for &(x, y) in points_px {
        let (u, v) = (x.round(), y.round());
        if u >= 0.0 && v >= 0.0 && (u as u32) < width && (v as u32) < height {
            bm.set(u as u32, v as u32);
        }
    }
    bm.dilate(1)
}
