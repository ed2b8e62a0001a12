//! Uniform-grid k-nearest-neighbor search for bounded 3D point sets.

use nalgebra::Point3;
use std::collections::HashMap;

pub struct PointGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<Point3<f64>>,
}

impl PointGrid {
    pub fn build(points: &[Point3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        PointGrid {
            cell,
            cells,
            points: points.to_vec(),
        }
    }

    fn key(p: &Point3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices of the k nearest neighbors of point `idx` (self excluded),
    /// sorted by ascending distance, ties by index.
    pub fn k_nearest(&self, idx: usize, k: usize) -> Vec<u32> {
        let q = &self.points[idx];
        let (cx, cy, cz) = Self::key(q, self.cell);
        let mut found: Vec<(f64, u32)> = Vec::with_capacity(k + 8);
        let mut ring = 0i64;
        loop {
            // Points in the current Chebyshev shell.
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &j in ids {
                                if j as usize == idx {
                                    continue;
                                }
                                let d2 = (self.points[j as usize] - q).norm_squared();
                                found.push((d2, j));
                            }
                        }
                    }
                }
            }
            if found.len() >= k {
                found.sort_by(|a, b| a.partial_cmp(b).unwrap());
                // A shell at radius `ring` guarantees all points closer than
                // (ring) * cell have been seen.
                let kth = found[k - 1].0.sqrt();
                if kth <= ring as f64 * self.cell {
                    found.truncate(k);
                    return found.into_iter().map(|(_, j)| j).collect();
                }
            }
            ring += 1;
            if ring as f64 * self.cell > 1e6 {
                // Degenerate fallback: fewer points than k in the whole grid.
                found.sort_by(|a, b| a.partial_cmp(b).unwrap());
                found.truncate(k);
                return found.into_iter().map(|(_, j)| j).collect();
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
