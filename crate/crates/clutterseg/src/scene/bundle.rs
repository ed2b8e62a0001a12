//! Scene bundle directory IO.
//!
//! Layout:
//!   manifest.json                scene id, embed dim, frame list, units
//!   frame_<i>/pose.txt           4x4 row-major camera-to-world matrix
//!   frame_<i>/intrinsics.txt     fx fy cx cy
//!   frame_<i>/rgb.png            8-bit RGB
//!   frame_<i>/depth.bin          u32 w, u32 h, then w*h f32 meters (LE)
//!   frame_<i>/depth.png          16-bit grayscale millimeters (alternative)
//!   frame_<i>/masks.rle          text RLE, see below
//!   frame_<i>/embeddings.f32     records of u32 mask id + D f32 (LE)
//!
//! masks.rle:
//!   rle <width> <height> <count>
//!   <id> <n_runs> <start> <len> ... (row-major pixel indices)
//!
//! Poses are camera-to-world; depth 0 means invalid.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::camera::{CameraPose, Intrinsics};
use crate::mask::rle::RleMask;
use crate::scene::frame::{CameraFrame, DepthMap, ImageBuf, SceneBundle, SceneMeta};

#[derive(Debug, Serialize, Deserialize)]
struct ManifestJson {
    scene_id: String,
    embed_dim: usize,
    units: String,
    frames: Vec<u32>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|_| Error::IncompleteBundle(format!("missing or unreadable {}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path)
        .map_err(|_| Error::IncompleteBundle(format!("missing or unreadable {}", path.display())))
}

fn parse_floats(path: &Path, text: &str, expect: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    if values.len() != expect {
        return Err(Error::parse(
            path,
            format!("expected {expect} numbers, found {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn load_pose(path: &Path) -> Result<CameraPose> {
    let v = parse_floats(path, &read_to_string(path)?, 16)?;
    let m = Matrix4::from_row_slice(&v);
    CameraPose::from_matrix(&m)
}

pub fn save_pose(path: &Path, pose: &CameraPose) -> Result<()> {
    let m = pose.to_matrix();
    let mut out = String::new();
    for r in 0..4 {
        for c in 0..4 {
            out.push_str(&format!("{:.17e}", m[(r, c)]));
            out.push(if c == 3 { '\n' } else { ' ' });
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))
}

pub fn load_intrinsics(path: &Path) -> Result<Intrinsics> {
    let v = parse_floats(path, &read_to_string(path)?, 4)?;
    Ok(Intrinsics {
        fx: v[0],
        fy: v[1],
        cx: v[2],
        cy: v[3],
    })
}

pub fn save_intrinsics(path: &Path, intr: &Intrinsics) -> Result<()> {
    std::fs::write(
        path,
        format!("{:.17e} {:.17e} {:.17e} {:.17e}\n", intr.fx, intr.fy, intr.cx, intr.cy),
    )
    .map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))
}

pub fn load_rgb(path: &Path) -> Result<ImageBuf> {
    let bytes = read_bytes(path)?;
    let img = image::load_from_memory(&bytes)?.to_rgb8();
    let (width, height) = (img.width(), img.height());
    let pixels = img
        .pixels()
        .map(|p| {
            [
                p.0[0] as f32 / 255.0,
                p.0[1] as f32 / 255.0,
                p.0[2] as f32 / 255.0,
            ]
        })
        .collect();
    Ok(ImageBuf {
        width,
        height,
        pixels,
    })
}

pub fn save_rgb(path: &Path, img: &ImageBuf) -> Result<()> {
    let mut out = image::RgbImage::new(img.width, img.height);
    for (i, px) in img.pixels.iter().enumerate() {
        let (u, v) = (i as u32 % img.width, i as u32 / img.width);
        out.put_pixel(
            u,
            v,
            image::Rgb([
                (px[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                (px[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (px[2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ]),
        );
    }
    out.save(path)?;
    Ok(())
}

pub fn load_depth_bin(path: &Path) -> Result<DepthMap> {
    let bytes = read_bytes(path)?;
    if bytes.len() < 8 {
        return Err(Error::parse(path, "truncated depth header"));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let expect = 8 + (w as usize) * (h as usize) * 4;
    if bytes.len() != expect {
        return Err(Error::parse(
            path,
            format!("expected {expect} bytes for {w}x{h}, found {}", bytes.len()),
        ));
    }
    let values = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut depth = DepthMap {
        width: w,
        height: h,
        values,
    };
    depth.sanitize();
    Ok(depth)
}

pub fn save_depth_bin(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))?;
    f.write_all(&depth.width.to_le_bytes())?;
    f.write_all(&depth.height.to_le_bytes())?;
    let mut buf = Vec::with_capacity(depth.values.len() * 4);
    for v in &depth.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

/// 16-bit grayscale PNG in millimeters.
pub fn load_depth_png(path: &Path) -> Result<DepthMap> {
    let bytes = read_bytes(path)?;
    let img = image::load_from_memory(&bytes)?.to_luma16();
    let (width, height) = (img.width(), img.height());
    let values = img.pixels().map(|p| p.0[0] as f32 / 1000.0).collect();
    let mut depth = DepthMap {
        width,
        height,
        values,
    };
    depth.sanitize();
    Ok(depth)
}

pub fn load_masks_rle(path: &Path) -> Result<Vec<(u32, RleMask)>> {
    let text = read_to_string(path)?;
    parse_masks_rle(path, &text)
}

fn parse_masks_rle(path: &Path, text: &str) -> Result<Vec<(u32, RleMask)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty mask file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 4 || head[0] != "rle" {
        return Err(Error::parse(path, "header must be `rle <w> <h> <count>`"));
    }
    let parse_u32 = |t: &str| -> Result<u32> {
        t.parse::<u32>()
            .map_err(|e| Error::parse(path, format!("bad integer {t:?}: {e}")))
    };
    let (w, h, count) = (parse_u32(head[1])?, parse_u32(head[2])?, parse_u32(head[3])?);
    let mut out = Vec::with_capacity(count as usize);
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(Error::parse(path, format!("short mask line {line:?}")));
        }
        let id = parse_u32(tokens[0])?;
        let n_runs = parse_u32(tokens[1])? as usize;
        if tokens.len() != 2 + 2 * n_runs {
            return Err(Error::parse(
                path,
                format!("mask {id}: expected {n_runs} runs, line has {} tokens", tokens.len()),
            ));
        }
        let runs = tokens[2..]
            .chunks_exact(2)
            .map(|c| Ok((parse_u32(c[0])?, parse_u32(c[1])?)))
            .collect::<Result<Vec<_>>>()?;
        out.push((id, RleMask::new(w, h, runs)?));
    }
    if out.len() != count as usize {
        return Err(Error::parse(
            path,
            format!("header says {count} masks, file has {}", out.len()),
        ));
    }
    out.sort_by_key(|(id, _)| *id);
    Ok(out)
}

pub fn save_masks_rle(path: &Path, width: u32, height: u32, masks: &[(u32, RleMask)]) -> Result<()> {
    let mut sorted: Vec<&(u32, RleMask)> = masks.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    let mut out = format!("rle {} {} {}\n", width, height, sorted.len());
    for (id, m) in sorted {
        out.push_str(&format!("{} {}", id, m.runs().len()));
        for &(start, len) in m.runs() {
            out.push_str(&format!(" {start} {len}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))
}

/// Load `u32 id + D f32` embedding records; embeddings are re-normalized.
pub fn load_embeddings_f32(path: &Path, dim: usize) -> Result<BTreeMap<u32, Embedding>> {
    let bytes = read_bytes(path)?;
    let record = 4 + 4 * dim;
    if record == 4 || bytes.len() % record != 0 {
        return Err(Error::parse(
            path,
            format!("file size {} is not a multiple of record size {record}", bytes.len()),
        ));
    }
    let mut out = BTreeMap::new();
    for chunk in bytes.chunks_exact(record) {
        let id = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let values = chunk[4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        out.insert(id, Embedding::from_raw(values)?);
    }
    Ok(out)
}

pub fn save_embeddings_f32(path: &Path, embeddings: &BTreeMap<u32, Embedding>) -> Result<()> {
    let mut buf = Vec::new();
    for (id, e) in embeddings {
        buf.extend_from_slice(&id.to_le_bytes());
        for v in e.values() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io_ctx(format!("writing {}", path.display()), e))
}

/// Load a single query embedding: either a bare vector of D f32, or one
/// id+vector record as written by `save_embeddings_f32`.
pub fn load_query_embedding(path: &Path, dim: usize) -> Result<Embedding> {
    let bytes = read_bytes(path)?;
    let body = if bytes.len() == 4 * dim {
        &bytes[..]
    } else if bytes.len() == 4 + 4 * dim {
        &bytes[4..]
    } else {
        return Err(Error::DimensionMismatch(bytes.len() / 4, dim));
    };
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Embedding::from_raw(values)
}

/// Load one frame directory. `depth_required` distinguishes bundle frames
/// from post-interaction frames, which may omit depth.
pub fn load_frame_dir(
    dir: &Path,
    frame_index: u32,
    embed_dim: usize,
    depth_required: bool,
) -> Result<CameraFrame> {
    let pose = load_pose(&dir.join("pose.txt"))?;
    let intrinsics = load_intrinsics(&dir.join("intrinsics.txt"))?;
    let rgb = load_rgb(&dir.join("rgb.png"))?;
    let depth = if dir.join("depth.bin").exists() {
        load_depth_bin(&dir.join("depth.bin"))?
    } else if dir.join("depth.png").exists() {
        load_depth_png(&dir.join("depth.png"))?
    } else if depth_required {
        return Err(Error::IncompleteBundle(format!(
            "missing depth.bin or depth.png in {}",
            dir.display()
        )));
    } else {
        DepthMap::new(rgb.width, rgb.height)
    };
    let masks = load_masks_rle(&dir.join("masks.rle"))?;
    let mask_embeddings = load_embeddings_f32(&dir.join("embeddings.f32"), embed_dim)?;
    let frame = CameraFrame {
        frame_index,
        intrinsics,
        pose,
        rgb,
        depth,
        masks,
        mask_embeddings,
    };
    frame.validate()?;
    Ok(frame)
}

/// Load and validate a scene bundle directory.
pub fn load_scene_bundle(path: &Path) -> Result<SceneBundle> {
    let manifest_path = path.join("manifest.json");
    let mut text = String::new();
    std::fs::File::open(&manifest_path)
        .map_err(|_| Error::IncompleteBundle(format!("missing {}", manifest_path.display())))?
        .read_to_string(&mut text)?;
    let manifest: ManifestJson = serde_json::from_str(&text)?;

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for &idx in &manifest.frames {
        let dir = path.join(format!("frame_{idx}"));
        frames.push(load_frame_dir(&dir, idx, manifest.embed_dim, true)?);
    }
    let bundle = SceneBundle {
        meta: SceneMeta {
            scene_id: manifest.scene_id,
            embed_dim: manifest.embed_dim,
            units: manifest.units,
        },
        frames,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn save_frame_dir(dir: &Path, frame: &CameraFrame, with_depth: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_pose(&dir.join("pose.txt"), &frame.pose)?;
    save_intrinsics(&dir.join("intrinsics.txt"), &frame.intrinsics)?;
    save_rgb(&dir.join("rgb.png"), &frame.rgb)?;
    if with_depth {
        save_depth_bin(&dir.join("depth.bin"), &frame.depth)?;
    }
    save_masks_rle(
        &dir.join("masks.rle"),
        frame.rgb.width,
        frame.rgb.height,
        &frame.masks,
    )?;
    save_embeddings_f32(&dir.join("embeddings.f32"), &frame.mask_embeddings)?;
    Ok(())
}

pub fn save_scene_bundle(bundle: &SceneBundle, path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    let manifest = ManifestJson {
        scene_id: bundle.meta.scene_id.clone(),
        embed_dim: bundle.meta.embed_dim,
        units: bundle.meta.units.clone(),
        frames: bundle.frames.iter().map(|f| f.frame_index).collect(),
    };
    std::fs::write(
        path.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for frame in &bundle.frames {
        save_frame_dir(&path.join(format!("frame_{}", frame.frame_index)), frame, true)?;
    }
    Ok(())
}
