//! Segmentation outputs and ground-truth files.
//!
//! A segment run writes `labeled_cloud.ply` (ascii PLY with per-vertex color
//! and instance label, -1 = unassigned) and `instances.json` (per-instance
//! confidence, embedding, super-voxel ids). Fixture bundles additionally
//! carry `gt_points.ply`, `gt_instances.json` and `category_embeddings.f32`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::cloud::PointCloud;
use crate::instances::Instance3D;

pub const LABEL_UNASSIGNED: i32 = -1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub confidence: u32,
    pub point_count: usize,
    pub supervoxels: Vec<u32>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LabeledPoint {
    pub position: Point3<f64>,
    pub color: [f64; 3],
    pub label: i32,
}

pub fn write_labeled_ply(path: &Path, points: &[LabeledPoint]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    for c in ["red", "green", "blue"] {
        writeln!(w, "property uchar {c}")?;
    }
    writeln!(w, "property int label")?;
    writeln!(w, "end_header")?;
    for p in points {
        let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        writeln!(
            w,
            "{:.9} {:.9} {:.9} {} {} {} {}",
            p.position.x,
            p.position.y,
            p.position.z,
            to_u8(p.color[0]),
            to_u8(p.color[1]),
            to_u8(p.color[2]),
            p.label
        )?;
    }
    Ok(())
}

pub fn read_labeled_ply(path: &Path) -> Result<Vec<LabeledPoint>> {
    let file = std::fs::File::open(path)
        .map_err(|_| Error::IncompleteBundle(format!("missing {}", path.display())))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let mut vertex_count: Option<usize> = None;
    for line in lines.by_ref() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("element vertex ") {
            vertex_count = Some(
                rest.trim()
                    .parse()
                    .map_err(|e| Error::parse(path, format!("bad vertex count: {e}")))?,
            );
        }
        if line.trim() == "end_header" {
            break;
        }
    }
    let n = vertex_count.ok_or_else(|| Error::parse(path, "missing element vertex"))?;
    let mut out = Vec::with_capacity(n);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 7 {
            return Err(Error::parse(path, format!("bad vertex line {line:?}")));
        }
        let f = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::parse(path, format!("{e}")))
        };
        out.push(LabeledPoint {
            position: Point3::new(f(t[0])?, f(t[1])?, f(t[2])?),
            color: [f(t[3])? / 255.0, f(t[4])? / 255.0, f(t[5])? / 255.0],
            label: t[6]
                .parse()
                .map_err(|e| Error::parse(path, format!("bad label: {e}")))?,
        });
    }
    if out.len() != n {
        return Err(Error::parse(
            path,
            format!("header says {n} vertices, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Write the labeled point cloud and the instance manifest.
pub fn write_instance_output(
    instances: &[Instance3D],
    cloud: &PointCloud,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io_ctx(format!("creating {}", dir.display()), e))?;
    let mut labels = vec![LABEL_UNASSIGNED; cloud.len()];
    for inst in instances {
        for &p in &inst.points {
            labels[p as usize] = inst.id as i32;
        }
    }
    let points: Vec<LabeledPoint> = (0..cloud.len())
        .map(|i| LabeledPoint {
            position: cloud.positions[i],
            color: cloud.colors[i],
            label: labels[i],
        })
        .collect();
    write_labeled_ply(&dir.join("labeled_cloud.ply"), &points)?;

    let records: Vec<InstanceRecord> = instances
        .iter()
        .map(|inst| InstanceRecord {
            id: inst.id,
            confidence: inst.confidence,
            point_count: inst.points.len(),
            supervoxels: inst.supervoxels.clone(),
            embedding: inst.embedding.values().to_vec(),
        })
        .collect();
    std::fs::write(
        dir.join("instances.json"),
        serde_json::to_string_pretty(&records)?,
    )
    .map_err(|e| Error::io_ctx(format!("writing {}", dir.join("instances.json").display()), e))?;
    Ok(())
}

pub fn read_instance_output(dir: &Path) -> Result<(Vec<LabeledPoint>, Vec<InstanceRecord>)> {
    let points = read_labeled_ply(&dir.join("labeled_cloud.ply"))?;
    let manifest_path = dir.join("instances.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|_| Error::IncompleteBundle(format!("missing {}", manifest_path.display())))?;
    let records: Vec<InstanceRecord> = serde_json::from_str(&text)?;
    Ok((points, records))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtInstanceMeta {
    pub id: u32,
    pub category: u32,
}

pub fn write_gt_instances(path: &Path, meta: &[GtInstanceMeta]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(meta)?)
        .map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))
}

pub fn read_gt_instances(path: &Path) -> Result<Vec<GtInstanceMeta>> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| Error::NoGroundTruth)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_category_embeddings(
    path: &Path,
    prototypes: &BTreeMap<u32, Embedding>,
) -> Result<()> {
    crate::scene::bundle::save_embeddings_f32(path, prototypes)
}

pub fn read_category_embeddings(path: &Path, dim: usize) -> Result<BTreeMap<u32, Embedding>> {
    crate::scene::bundle::load_embeddings_f32(path, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.ply");
        let points = vec![
            LabeledPoint {
                position: Point3::new(0.125, -3.5, 2.0),
                color: [1.0, 0.0, 0.5],
                label: 2,
            },
            LabeledPoint {
                position: Point3::new(1e-7, 0.0, -0.25),
                color: [0.0, 0.0, 0.0],
                label: LABEL_UNASSIGNED,
            },
        ];
        write_labeled_ply(&path, &points).unwrap();
        let back = read_labeled_ply(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].label, 2);
        assert_eq!(back[1].label, -1);
        assert!((back[0].position - points[0].position).norm() < 1e-6);
    }
}
