//! Label corruptions used to manufacture the "erroneous" class.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::volume::{sax, LabelMap, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    DropFrame,
    Erode,
    Dilate,
    SpatialShift,
    SwapLabels,
    SpuriousBlob,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 6] = [
        CorruptionKind::DropFrame,
        CorruptionKind::Erode,
        CorruptionKind::Dilate,
        CorruptionKind::SpatialShift,
        CorruptionKind::SwapLabels,
        CorruptionKind::SpuriousBlob,
    ];
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::invalid("kind", format!("unknown corruption kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Pixels (erode/dilate/shift radius or offset) or blob radius.
    pub severity: u32,
    pub frame_range: Vec<usize>,
    pub target_class: u8,
    pub seed: u64,
}

/// Class exchanged with `class` by `swap_labels`.
pub fn swap_partner(task: Task, class: u8) -> u8 {
    match (task, class) {
        (Task::Sax, sax::LV_BLOOD) => sax::RV_BLOOD,
        (Task::Sax, sax::RV_BLOOD) => sax::LV_BLOOD,
        (Task::Sax, sax::LV_MYO) => sax::LV_BLOOD,
        (Task::Aorta, 1) => 0,
        (_, c) => c,
    }
}

/// Offsets of a disc structuring element of the given radius.
pub fn disc_offsets(radius: u32) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn erode(mask: &[bool], h: usize, w: usize, se: &[(isize, isize)]) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            out[y * w + x] = se.iter().all(|&(dx, dy)| {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h && mask[sy as usize * w + sx as usize]
            });
        }
    }
    out
}

fn dilate(mask: &[bool], h: usize, w: usize, se: &[(isize, isize)]) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            for &(dx, dy) in se {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    out[sy as usize * w + sx as usize] = true;
                }
            }
        }
    }
    out
}

const DIRECTIONS: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Apply `spec` to a copy of `labels`; frames outside `frame_range` are
/// untouched and severity 0 is the identity.
pub fn corrupt_labels(labels: &LabelMap, spec: &CorruptionSpec) -> Result<LabelMap> {
    labels.validate()?;
    let dims = labels.dims;
    if let Some(&t) = spec.frame_range.iter().find(|&&t| t >= dims.frames) {
        return Err(Error::invalid("frame_range", format!("frame {t} outside [0, {})", dims.frames)));
    }
    let task = labels.task;
    if spec.kind != CorruptionKind::DropFrame
        && !(spec.target_class >= 1 && (spec.target_class as usize) < task.n_classes())
    {
        return Err(Error::invalid("target_class", format!("{} is not a foreground class", spec.target_class)));
    }
    let mut out = labels.clone();
    if spec.severity == 0 {
        return Ok(out);
    }
    let (h, w) = (dims.height, dims.width);
    let target = spec.target_class;
    let se = disc_offsets(spec.severity);
    let mut rng = rng::named(spec.seed, "corruption");
    let dir = DIRECTIONS[rng.random_range(0..DIRECTIONS.len())];
    let mut frames = spec.frame_range.clone();
    frames.sort_unstable();
    frames.dedup();
    for &t in &frames {
        for s in 0..dims.slices {
            let plane = out.plane_mut(t, s);
            let mask: Vec<bool> = plane.iter().map(|&c| c == target).collect();
            match spec.kind {
                CorruptionKind::DropFrame => plane.fill(0),
                CorruptionKind::Erode => {
                    let kept = erode(&mask, h, w, &se);
                    for (i, px) in plane.iter_mut().enumerate() {
                        if mask[i] && !kept[i] {
                            *px = 0;
                        }
                    }
                }
                CorruptionKind::Dilate => {
                    let grown = dilate(&mask, h, w, &se);
                    for (i, px) in plane.iter_mut().enumerate() {
                        if grown[i] {
                            *px = target;
                        }
                    }
                }
                CorruptionKind::SpatialShift => {
                    let (dx, dy) = (dir.0 * spec.severity as isize, dir.1 * spec.severity as isize);
                    for (i, px) in plane.iter_mut().enumerate() {
                        if mask[i] {
                            *px = 0;
                        }
                    }
                    for y in 0..h {
                        for x in 0..w {
                            if !mask[y * w + x] {
                                continue;
                            }
                            let (sx, sy) = (x as isize + dx, y as isize + dy);
                            if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                                plane[sy as usize * w + sx as usize] = target;
                            }
                        }
                    }
                }
                CorruptionKind::SwapLabels => {
                    let partner = swap_partner(task, target);
                    for px in plane.iter_mut() {
                        if *px == target {
                            *px = partner;
                        } else if *px == partner {
                            *px = target;
                        }
                    }
                }
                CorruptionKind::SpuriousBlob => {
                    let mut blob_rng = rng::rng(spec.seed, (t * dims.slices + s) as u64);
                    let cx = blob_rng.random_range(0..w) as isize;
                    let cy = blob_rng.random_range(0..h) as isize;
                    for &(dx, dy) in &se {
                        let (sx, sy) = (cx + dx, cy + dy);
                        if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                            plane[sy as usize * w + sx as usize] = target;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn disc_map(radius: f64, frames: usize) -> LabelMap {
        let dims = Dims { frames, slices: 1, height: 32, width: 32 };
        let mut l = LabelMap::background(Task::Sax, dims);
        for t in 0..frames {
            let p = l.plane_mut(t, 0);
            for y in 0..32 {
                for x in 0..32 {
                    let (dx, dy) = (x as f64 - 16.0, y as f64 - 16.0);
                    if dx * dx + dy * dy <= radius * radius {
                        p[y * 32 + x] = sax::LV_BLOOD;
                    }
                }
            }
        }
        l
    }

    fn spec(kind: CorruptionKind, severity: u32, frames: Vec<usize>) -> CorruptionSpec {
        CorruptionSpec { kind, severity, frame_range: frames, target_class: sax::LV_BLOOD, seed: 9 }
    }

    #[test]
    fn drop_frame_clears_only_listed_frames() {
        let l = disc_map(6.0, 5);
        let out = corrupt_labels(&l, &spec(CorruptionKind::DropFrame, 1, vec![3])).unwrap();
        assert!(out.frame(3).iter().all(|&c| c == 0));
        for t in [0, 1, 2, 4] {
            assert_eq!(out.frame(t), l.frame(t));
        }
    }

    /// Oracle: a pixel survives erosion iff every pixel within Euclidean
    /// distance `r` is inside the disc.
    #[test]
    fn erosion_matches_direct_oracle() {
        let l = disc_map(10.0, 2);
        let out = corrupt_labels(&l, &spec(CorruptionKind::Erode, 2, vec![0, 1])).unwrap();
        let inside = |x: i64, y: i64| {
            (0..32).contains(&x) && (0..32).contains(&y) && {
                let (dx, dy) = (x as f64 - 16.0, y as f64 - 16.0);
                dx * dx + dy * dy <= 100.0
            }
        };
        let mut oracle = 0;
        for y in 0..32i64 {
            for x in 0..32i64 {
                let mut keep = inside(x, y);
                for oy in -2i64..=2 {
                    for ox in -2i64..=2 {
                        if ox * ox + oy * oy <= 4 && !inside(x + ox, y + oy) {
                            keep = false;
                        }
                    }
                }
                oracle += keep as usize;
            }
        }
        for t in 0..2 {
            let area = out.frame(t).iter().filter(|&&c| c == sax::LV_BLOOD).count();
            assert_eq!(area, oracle);
        }
        let before = l.frame(0).iter().filter(|&&c| c == sax::LV_BLOOD).count();
        assert!(oracle < before);
    }

    #[test]
    fn zero_severity_is_identity() {
        let l = disc_map(7.0, 3);
        for kind in CorruptionKind::ALL {
            let out = corrupt_labels(&l, &spec(kind, 0, vec![0, 1, 2])).unwrap();
            assert_eq!(out, l, "{kind:?}");
        }
    }

    #[test]
    fn errors_on_bad_inputs() {
        let l = disc_map(7.0, 3);
        assert!(matches!(
            corrupt_labels(&l, &spec(CorruptionKind::Erode, 1, vec![3])),
            Err(Error::Invalid { field, .. }) if field == "frame_range"
        ));
        let mut s = spec(CorruptionKind::Dilate, 1, vec![0]);
        s.target_class = 9;
        assert!(corrupt_labels(&l, &s).is_err());
        assert!("melt".parse::<CorruptionKind>().is_err());
        assert_eq!("spurious_blob".parse::<CorruptionKind>().unwrap(), CorruptionKind::SpuriousBlob);
        let bad: std::result::Result<CorruptionSpec, _> = serde_json::from_str(
            r#"{"kind":"melt","severity":1,"frame_range":[0],"target_class":1,"seed":0}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn outputs_stay_valid() {
        let l = disc_map(7.0, 3);
        for kind in CorruptionKind::ALL {
            let out = corrupt_labels(&l, &spec(kind, 3, vec![1])).unwrap();
            out.validate().unwrap();
            assert_eq!(out.frame(0), l.frame(0));
            assert_eq!(out.frame(2), l.frame(2));
        }
    }
}
