//! Cine volumes: intensity stacks, label maps and per-class probability maps.
//!
//! All volumes are stored flat in `[T][S][H][W]` order (probability maps add
//! a class axis: `[T][S][C][H][W]`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Aorta,
    Sax,
}

pub mod sax {
    pub const BACKGROUND: u8 = 0;
    pub const LV_BLOOD: u8 = 1;
    pub const LV_MYO: u8 = 2;
    pub const RV_BLOOD: u8 = 3;
}

pub mod aorta {
    pub const BACKGROUND: u8 = 0;
    pub const AORTA: u8 = 1;
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Aorta => 2,
            Task::Sax => 4,
        }
    }

    pub fn foreground(self) -> Vec<u8> {
        (1..self.n_classes() as u8).collect()
    }

    /// Structures whose curves feed the quality-control classifier.
    pub fn qc_structures(self) -> Vec<u8> {
        match self {
            Task::Aorta => vec![aorta::AORTA],
            Task::Sax => vec![sax::LV_BLOOD, sax::RV_BLOOD],
        }
    }

    pub fn class_name(self, class: u8) -> &'static str {
        match (self, class) {
            (_, 0) => "background",
            (Task::Aorta, 1) => "aorta",
            (Task::Sax, 1) => "lv_blood",
            (Task::Sax, 2) => "lv_myo",
            (Task::Sax, 3) => "rv_blood",
            _ => "invalid",
        }
    }

    pub fn check_class(self, class: u8) -> Result<()> {
        if (class as usize) < self.n_classes() {
            Ok(())
        } else {
            Err(Error::invalid("structure", format!("class {class} not defined for {self:?}")))
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Aorta => "aorta",
            Task::Sax => "sax",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn planes(&self) -> usize {
        self.frames * self.slices
    }

    pub fn len(&self) -> usize {
        self.planes() * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the first pixel of plane `(t, s)`.
    pub fn plane_offset(&self, t: usize, s: usize) -> usize {
        (t * self.slices + s) * self.plane()
    }

    pub fn frame_len(&self) -> usize {
        self.slices * self.plane()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// mm per pixel along (x, y).
    pub pixel_spacing: [f64; 2],
    pub slice_thickness: f64,
}

impl Geometry {
    pub fn pixel_area_mm2(&self) -> f64 {
        self.pixel_spacing[0] * self.pixel_spacing[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageStack {
    pub dims: Dims,
    pub data: Vec<f32>,
}

impl ImageStack {
    pub fn plane(&self, t: usize, s: usize) -> &[f32] {
        let o = self.dims.plane_offset(t, s);
        &self.data[o..o + self.dims.plane()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub task: Task,
    pub dims: Dims,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn background(task: Task, dims: Dims) -> Self {
        Self { task, dims, data: vec![0; dims.len()] }
    }

    pub fn plane(&self, t: usize, s: usize) -> &[u8] {
        let o = self.dims.plane_offset(t, s);
        &self.data[o..o + self.dims.plane()]
    }

    pub fn plane_mut(&mut self, t: usize, s: usize) -> &mut [u8] {
        let o = self.dims.plane_offset(t, s);
        let n = self.dims.plane();
        &mut self.data[o..o + n]
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.dims.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Every pixel carries exactly one valid class index.
    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.dims.len() {
            return Err(Error::Shape(format!(
                "label map has {} pixels, dims imply {}",
                self.data.len(),
                self.dims.len()
            )));
        }
        let n = self.task.n_classes() as u8;
        if let Some(bad) = self.data.iter().find(|&&c| c >= n) {
            return Err(Error::invalid("labels", format!("class {bad} invalid for {:?}", self.task)));
        }
        Ok(())
    }
}

/// Per-pixel class probabilities, `[T][S][C][H][W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    pub dims: Dims,
    pub n_classes: usize,
    pub data: Vec<f64>,
}

impl ProbMap {
    pub fn plane(&self, t: usize, s: usize) -> &[f64] {
        let n = self.n_classes * self.dims.plane();
        let o = (t * self.dims.slices + s) * n;
        &self.data[o..o + n]
    }

    /// Per-pixel argmax; ties resolve to the lowest class index.
    pub fn argmax(&self, task: Task) -> LabelMap {
        let hw = self.dims.plane();
        let mut out = LabelMap::background(task, self.dims);
        for t in 0..self.dims.frames {
            for s in 0..self.dims.slices {
                let labels = argmax_plane(self.plane(t, s), self.n_classes, hw);
                out.plane_mut(t, s).copy_from_slice(&labels);
            }
        }
        out
    }
}

/// Argmax over the class axis of a `[C][HW]` plane (lowest index wins ties).
pub fn argmax_plane(probs: &[f64], n_classes: usize, hw: usize) -> Vec<u8> {
    (0..hw)
        .map(|p| {
            let mut best = 0;
            for c in 1..n_classes {
                if probs[c * hw + p] > probs[best * hw + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}
