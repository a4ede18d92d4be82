//! On-disk cohort layout: one directory per case holding
//! `img_t{t}_s{s}.png` (16-bit grey), `lab_t{t}_s{s}.png` (8-bit class
//! indices) and a `case.json` with geometry, subject parameters and
//! per-file SHA-256 checksums. `cohort.json` at the root lists the cases.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{ImageBuffer, ImageEncoder};
use serde::{Deserialize, Serialize};

use super::{CineCase, CohortSpec, SubjectParams};
use crate::error::{Error, Result};
use crate::volume::{Dims, Geometry, ImageStack, LabelMap, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub case_id: String,
    pub task: Task,
    pub dims: Dims,
    pub geometry: Geometry,
    pub subject_params: SubjectParams,
    pub has_labels: bool,
    pub checksums: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortManifest {
    pub task: Task,
    pub spec: Option<CohortSpec>,
    pub case_ids: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn png_u16(w: usize, h: usize, px: Vec<u16>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let bytes: Vec<u8> = px.iter().flat_map(|v| v.to_ne_bytes()).collect();
    image::codecs::png::PngEncoder::new(&mut buf).write_image(
        &bytes,
        w as u32,
        h as u32,
        image::ExtendedColorType::L16,
    )?;
    Ok(buf)
}

fn png_u8(w: usize, h: usize, px: &[u8]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf).write_image(px, w as u32, h as u32, image::ExtendedColorType::L8)?;
    Ok(buf)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn image_name(t: usize, s: usize) -> String {
    format!("img_t{t}_s{s}.png")
}

pub fn label_name(t: usize, s: usize) -> String {
    format!("lab_t{t}_s{s}.png")
}

pub fn save_case(case: &CineCase, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dims = case.dims();
    let mut checksums = BTreeMap::new();
    for t in 0..dims.frames {
        for s in 0..dims.slices {
            let px = case
                .images
                .plane(t, s)
                .iter()
                .map(|&v| (v as f64 * 65535.0).round().clamp(0.0, 65535.0) as u16)
                .collect();
            let bytes = png_u16(dims.width, dims.height, px)?;
            let name = image_name(t, s);
            checksums.insert(name.clone(), sha256_hex(&bytes));
            write(&dir.join(name), &bytes)?;
            if let Some(gt) = &case.gt_labels {
                let bytes = png_u8(dims.width, dims.height, gt.plane(t, s))?;
                let name = label_name(t, s);
                checksums.insert(name.clone(), sha256_hex(&bytes));
                write(&dir.join(name), &bytes)?;
            }
        }
    }
    let manifest = CaseManifest {
        case_id: case.case_id.clone(),
        task: case.task,
        dims,
        geometry: case.geometry,
        subject_params: case.subject.clone(),
        has_labels: case.gt_labels.is_some(),
        checksums,
    };
    write(&dir.join("case.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

fn decode_checked(dir: &Path, name: &str, manifest: &CaseManifest) -> Result<image::DynamicImage> {
    let path = dir.join(name);
    let bytes = read(&path)?;
    let expected = manifest
        .checksums
        .get(name)
        .ok_or_else(|| Error::format("case.json", format!("no checksum for {name}")))?;
    let found = sha256_hex(&bytes);
    if &found != expected {
        return Err(Error::Checksum { path, expected: expected.clone(), found });
    }
    Ok(image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?)
}

pub fn load_case(dir: &Path) -> Result<CineCase> {
    let mpath = dir.join("case.json");
    let manifest: CaseManifest = serde_json::from_slice(&read(&mpath)?)?;
    let dims = manifest.dims;
    let mut images = vec![0f32; dims.len()];
    let mut labels = manifest.has_labels.then(|| vec![0u8; dims.len()]);
    for t in 0..dims.frames {
        for s in 0..dims.slices {
            let off = dims.plane_offset(t, s);
            let img = decode_checked(dir, &image_name(t, s), &manifest)?.into_luma16();
            if img.width() as usize != dims.width || img.height() as usize != dims.height {
                return Err(Error::Shape(format!("{} plane ({t},{s})", manifest.case_id)));
            }
            for (dst, v) in images[off..off + dims.plane()].iter_mut().zip(img.as_raw()) {
                *dst = *v as f32 / 65535.0;
            }
            if let Some(l) = labels.as_mut() {
                let lab = decode_checked(dir, &label_name(t, s), &manifest)?.into_luma8();
                l[off..off + dims.plane()].copy_from_slice(lab.as_raw());
            }
        }
    }
    let gt_labels = labels.map(|data| LabelMap { task: manifest.task, dims, data });
    let case = CineCase {
        case_id: manifest.case_id,
        task: manifest.task,
        images: ImageStack { dims, data: images },
        gt_labels,
        geometry: manifest.geometry,
        subject: manifest.subject_params,
    };
    case.validate()?;
    Ok(case)
}

pub fn save_cohort(cases: &[CineCase], spec: Option<&CohortSpec>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let task = cases.first().map(|c| c.task).or(spec.map(|s| s.task)).unwrap_or(Task::Sax);
    for c in cases {
        save_case(c, &dir.join(&c.case_id))?;
    }
    let m = CohortManifest {
        task,
        spec: spec.cloned(),
        case_ids: cases.iter().map(|c| c.case_id.clone()).collect(),
    };
    write(&dir.join("cohort.json"), serde_json::to_string_pretty(&m)?.as_bytes())
}

pub fn load_cohort_manifest(dir: &Path) -> Result<CohortManifest> {
    let p = dir.join("cohort.json");
    Ok(serde_json::from_slice(&read(&p)?)?)
}

pub fn load_cohort(dir: &Path) -> Result<Vec<CineCase>> {
    let m = load_cohort_manifest(dir)?;
    m.case_ids.iter().map(|id| load_case(&dir.join(id))).collect()
}

/// Write a single label plane as an 8-bit PNG (used for exported masks).
pub fn label_png(labels: &LabelMap, t: usize, s: usize) -> Result<Vec<u8>> {
    png_u8(labels.dims.width, labels.dims.height, labels.plane(t, s))
}

/// Contour colour per class (index 0 unused).
const CONTOUR: [[u8; 3]; 4] = [[0, 0, 0], [230, 60, 40], [60, 200, 80], [60, 120, 240]];

/// One plane as an RGB PNG, with the boundary pixels of every foreground
/// class of `labels` drawn in colour.
pub fn overlay_png(images: &ImageStack, labels: Option<&LabelMap>, t: usize, s: usize) -> Result<Vec<u8>> {
    let d = images.dims;
    if t >= d.frames || s >= d.slices {
        return Err(Error::NotFound(format!("plane ({t}, {s})")));
    }
    let px = images.plane(t, s);
    let (w, h) = (d.width, d.height);
    let mut img: image::RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let g = (px[y as usize * w + x as usize].clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([g, g, g])
    });
    if let Some(l) = labels {
        if l.dims != d {
            return Err(Error::Shape("overlay labels do not match the image stack".into()));
        }
        let lab = l.plane(t, s);
        for y in 0..h {
            for x in 0..w {
                let c = lab[y * w + x];
                if c == 0 {
                    continue;
                }
                let edge = [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dx, dy)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || lab[ny as usize * w + nx as usize] != c
                });
                if edge {
                    img.put_pixel(x as u32, y as u32, image::Rgb(CONTOUR[(c as usize).min(3)]));
                }
            }
        }
    }
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf).write_image(
        img.as_raw(),
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(buf)
}
