//! Seeded synthetic cine phantoms with exact ground truth.
//!
//! Short-axis cases model the LV blood pool as a disc inside a myocardial
//! annulus of constant area, and the RV as a crescent (a disc minus the
//! end-diastolic epicardium) beside it. Aortic cases model a pulsatile disc
//! next to a static distractor vessel. Every anatomy is drawn in a warped
//! coordinate frame `q = M (p - c)`, so labels and intensities agree by
//! construction.
//!
//! Ejection fraction (or aortic pulsatility) is targeted by solving the
//! end-systolic radius against the rasterised pixel counts, not the
//! continuous geometry, which keeps the counted EF within one lattice step
//! of the target.

mod corrupt;
pub mod io;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use corrupt::{corrupt_labels, disc_offsets, swap_partner, CorruptionKind, CorruptionSpec};

use crate::error::{Error, Result};
use crate::rng;
use crate::volume::{aorta, sax, Dims, Geometry, ImageStack, LabelMap, Task};

/// Fraction of the cycle at which end-systole sits.
pub const SYSTOLE_FRACTION: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub task: Task,
    pub frames: usize,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    /// mm per pixel along (x, y).
    pub pixel_spacing: [f64; 2],
    pub slice_thickness: f64,
    pub target_lvef_range: [f64; 2],
    pub target_rvef_range: [f64; 2],
    pub aortic_pulsatility_range: [f64; 2],
    /// Gaussian noise standard deviation, as a fraction of full intensity.
    pub noise_level: f64,
    /// Fraction of subjects drawn with reduced, dilated-LV function.
    pub disease_fraction: f64,
    /// Fraction of subjects acquired with low contrast and heavy noise.
    pub hard_fraction: f64,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 10,
            task: Task::Sax,
            frames: 20,
            slices: 1,
            height: 64,
            width: 64,
            pixel_spacing: [1.8, 1.8],
            slice_thickness: 8.0,
            target_lvef_range: [0.35, 0.70],
            target_rvef_range: [0.40, 0.65],
            aortic_pulsatility_range: [0.15, 0.35],
            noise_level: 0.04,
            disease_fraction: 0.3,
            hard_fraction: 0.0,
            id_prefix: "case".into(),
            seed: 0,
        }
    }
}

impl CohortSpec {
    /// Acquisition shape of the short-axis cine in the reference study.
    pub fn reference_sax() -> Self {
        Self { frames: 50, slices: 10, ..Self::default() }
    }

    /// Acquisition shape of the aortic cine in the reference study.
    pub fn reference_aorta() -> Self {
        Self { task: Task::Aorta, frames: 100, slices: 1, ..Self::default() }
    }

    pub fn dims(&self) -> Dims {
        Dims { frames: self.frames, slices: self.slices, height: self.height, width: self.width }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry { pixel_spacing: self.pixel_spacing, slice_thickness: self.slice_thickness }
    }

    pub fn es_frame(&self) -> usize {
        es_frame(self.frames)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::invalid("frames", "must be at least 2"));
        }
        if self.slices < 1 {
            return Err(Error::invalid("slices", "must be at least 1"));
        }
        if self.task == Task::Aorta && self.slices != 1 {
            return Err(Error::invalid("slices", "aortic cines are single-slice"));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::invalid("height", "images must be at least 16x16"));
        }
        if !self.pixel_spacing.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("pixel_spacing", "must be positive"));
        }
        if !(self.slice_thickness > 0.0 && self.slice_thickness.is_finite()) {
            return Err(Error::invalid("slice_thickness", "must be positive"));
        }
        for (name, r) in [
            ("target_lvef_range", self.target_lvef_range),
            ("target_rvef_range", self.target_rvef_range),
            ("aortic_pulsatility_range", self.aortic_pulsatility_range),
        ] {
            if !(r[0] > 0.0 && r[1] < 1.0 && r[0] <= r[1]) {
                return Err(Error::invalid(name, "must be an ordered sub-interval of (0, 1)"));
            }
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::invalid("noise_level", "must be non-negative"));
        }
        for (name, f) in [("disease_fraction", self.disease_fraction), ("hard_fraction", self.hard_fraction)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        if self.id_prefix.is_empty() || self.id_prefix.contains(['/', '\\']) {
            return Err(Error::invalid("id_prefix", "must be a non-empty path-safe string"));
        }
        Ok(())
    }

    pub fn case_id(&self, index: usize) -> String {
        format!("{}-{index:04}", self.id_prefix)
    }
}

pub fn es_frame(frames: usize) -> usize {
    ((SYSTOLE_FRACTION * frames as f64).round() as usize).clamp(1, frames - 1)
}

/// Contraction phase in [0, 1]: 0 at end-diastole (frame 0), 1 at end-systole.
pub fn motion_phase(t: usize, frames: usize) -> f64 {
    let e = es_frame(frames);
    if t == 0 {
        0.0
    } else if t <= e {
        (1.0 - (std::f64::consts::PI * t as f64 / e as f64).cos()) / 2.0
    } else {
        (1.0 + (std::f64::consts::PI * (t - e) as f64 / (frames - e) as f64).cos()) / 2.0
    }
}

/// Radius between `rest` (phase 0) and `peak` (phase 1), exact at both ends.
fn lerp_radius(rest: f64, peak: f64, u: f64) -> f64 {
    if u <= 0.0 {
        rest
    } else if u >= 1.0 {
        peak
    } else {
        peak + (1.0 - u) * (rest - peak)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaxAnatomy {
    pub target_lvef: f64,
    pub target_rvef: f64,
    pub lv_radius_ed: f64,
    pub lv_radius_es: f64,
    /// Myocardial cross-section area (constant through the cycle), px².
    pub myo_area: f64,
    pub rv_radius_ed: f64,
    pub rv_radius_es: f64,
    /// Distance of the RV disc centre from the LV centre (warped frame).
    pub rv_distance: f64,
    /// Radius of the epicardial disc carved out of the RV disc.
    pub rv_cut_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AortaAnatomy {
    pub target_pulsatility: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Position of the static distractor vessel relative to the aorta.
    pub vessel_offset: [f64; 2],
    pub vessel_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Anatomy {
    Sax(SaxAnatomy),
    Aorta(AortaAnatomy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub air: f64,
    pub tissue: f64,
    pub myocardium: f64,
    pub blood: f64,
    pub noise_std: f64,
    /// Multiplicative bias field coefficients on (x, y, xy) in [-1, 1]².
    pub bias: [f64; 3],
    pub body_radii: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    /// Anatomy centre in pixel coordinates (x, y).
    pub center: [f64; 2],
    /// Row-major 2x2 map from pixel offsets to the anatomical frame.
    pub warp: [[f64; 2]; 2],
    pub diseased: bool,
    pub hard: bool,
    pub es_frame: usize,
    pub anatomy: Anatomy,
    pub appearance: Appearance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CineCase {
    pub case_id: String,
    pub task: Task,
    pub images: ImageStack,
    pub gt_labels: Option<LabelMap>,
    pub geometry: Geometry,
    pub subject: SubjectParams,
}

impl CineCase {
    pub fn dims(&self) -> Dims {
        self.images.dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.data.len() != self.images.dims.len() {
            return Err(Error::Shape(format!("case {} image size", self.case_id)));
        }
        if self.images.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("images", format!("case {} has non-finite pixels", self.case_id)));
        }
        if let Some(gt) = &self.gt_labels {
            if gt.dims != self.images.dims {
                return Err(Error::Shape(format!("case {} labels do not cover every plane", self.case_id)));
            }
            gt.validate()?;
        }
        Ok(())
    }
}

/// Taper factor for slice `k` (base largest, apex smallest).
fn slice_scale(k: usize, slices: usize) -> f64 {
    if slices <= 1 {
        1.0
    } else {
        1.0 - 0.4 * k as f64 / (slices - 1) as f64
    }
}

struct Frame {
    lv: f64,
    rv: f64,
}

struct Rasteriser<'a> {
    spec: &'a CohortSpec,
    params: &'a SubjectParams,
}

impl Rasteriser<'_> {
    fn anatomical(&self, x: usize, y: usize) -> (f64, f64) {
        let px = x as f64 - self.params.center[0];
        let py = y as f64 - self.params.center[1];
        let m = &self.params.warp;
        (m[0][0] * px + m[0][1] * py, m[1][0] * px + m[1][1] * py)
    }

    fn frame_radii(&self, t: usize) -> Frame {
        let u = motion_phase(t, self.spec.frames);
        match &self.params.anatomy {
            Anatomy::Sax(a) => Frame {
                lv: lerp_radius(a.lv_radius_ed, a.lv_radius_es, u),
                rv: lerp_radius(a.rv_radius_ed, a.rv_radius_es, u),
            },
            Anatomy::Aorta(a) => Frame { lv: lerp_radius(a.radius_min, a.radius_max, u), rv: 0.0 },
        }
    }

    /// Class of pixel (x, y) on slice `k` given per-frame radii.
    fn class_at(&self, x: usize, y: usize, k: usize, f: &Frame) -> u8 {
        let (qx, qy) = self.anatomical(x, y);
        let s = slice_scale(k, self.spec.slices);
        let (qx, qy) = (qx / s, qy / s);
        let d2 = qx * qx + qy * qy;
        match &self.params.anatomy {
            Anatomy::Sax(a) => {
                if d2 <= f.lv * f.lv {
                    return sax::LV_BLOOD;
                }
                let epi2 = f.lv * f.lv + a.myo_area / std::f64::consts::PI;
                if d2 <= epi2 {
                    return sax::LV_MYO;
                }
                let has_rv = self.spec.slices == 1 || k + 1 < self.spec.slices;
                if has_rv && d2 > a.rv_cut_radius * a.rv_cut_radius {
                    let rx = qx + a.rv_distance;
                    if rx * rx + qy * qy <= f.rv * f.rv {
                        return sax::RV_BLOOD;
                    }
                }
                sax::BACKGROUND
            }
            Anatomy::Aorta(_) => {
                if d2 <= f.lv * f.lv {
                    aorta::AORTA
                } else {
                    aorta::BACKGROUND
                }
            }
        }
    }

    fn frame_labels(&self, f: &Frame, out: &mut [u8]) {
        let (h, w) = (self.spec.height, self.spec.width);
        for k in 0..self.spec.slices {
            for y in 0..h {
                for x in 0..w {
                    out[(k * h + y) * w + x] = self.class_at(x, y, k, f);
                }
            }
        }
    }

    fn count(&self, f: &Frame, class: u8) -> usize {
        let mut buf = vec![0u8; self.spec.slices * self.spec.height * self.spec.width];
        self.frame_labels(f, &mut buf);
        buf.iter().filter(|&&c| c == class).count()
    }

    /// Solve for the radius whose pixel count is closest to `target`, given
    /// a monotone count over `[lo, hi]`.
    fn solve_radius(&self, mut lo: f64, mut hi: f64, target: f64, count: impl Fn(f64) -> usize) -> f64 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (count(mid) as f64) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (count(lo) as f64 - target).abs() <= (count(hi) as f64 - target).abs() {
            lo
        } else {
            hi
        }
    }
}

fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn sample_subject(spec: &CohortSpec, rng: &mut rng::Rng) -> SubjectParams {
    let (h, w) = (spec.height as f64, spec.width as f64);
    // Anatomy is sized relative to a 64-pixel field of view.
    let scale = h.min(w) / 64.0;
    let diseased = rng.random_bool(spec.disease_fraction);
    let hard = rng.random_bool(spec.hard_fraction);

    let theta = uniform(rng, -0.45, 0.45);
    let (sx, sy) = (uniform(rng, 0.92, 1.08), uniform(rng, 0.92, 1.08));
    let shear = uniform(rng, -0.05, 0.05);
    let (c, s) = (theta.cos(), theta.sin());
    // M = diag(sx, sy) · [[1, shear], [0, 1]] · R(theta)
    let r = [[c, s], [-s, c]];
    let sh = [[r[0][0] + shear * r[1][0], r[0][1] + shear * r[1][1]], r[1]];
    let warp = [[sx * sh[0][0], sx * sh[0][1]], [sy * sh[1][0], sy * sh[1][1]]];

    let tissue = uniform(rng, 0.15, 0.25);
    let myocardium = tissue + uniform(rng, 0.08, 0.15);
    let mut contrast = uniform(rng, 0.42, 0.55);
    let mut noise_std = spec.noise_level * uniform(rng, 0.7, 1.3);
    if hard {
        contrast *= 0.5;
        noise_std *= 3.5;
    }
    let appearance = Appearance {
        air: uniform(rng, 0.02, 0.05),
        tissue,
        myocardium,
        blood: (myocardium + contrast).min(0.98),
        noise_std,
        bias: [uniform(rng, -0.12, 0.12), uniform(rng, -0.12, 0.12), uniform(rng, -0.08, 0.08)],
        body_radii: [uniform(rng, 0.42, 0.47) * w, uniform(rng, 0.38, 0.45) * h],
    };

    // Half-width of the anatomy along the warped x axis, used to centre it.
    let (anatomy, mid_q) = match spec.task {
        Task::Sax => {
            let [lo, hi] = spec.target_lvef_range;
            let split = lo + 0.4 * (hi - lo);
            let target_lvef = if diseased { uniform(rng, lo, split) } else { uniform(rng, split, hi) };
            let [rlo, rhi] = spec.target_rvef_range;
            let target_rvef = uniform(rng, rlo, rhi);
            let dil = if diseased { 1.15 } else { 1.0 };
            let lv_radius_ed = uniform(rng, 7.5, 10.0) * dil * scale;
            let wall = uniform(rng, 2.6, 3.6) * scale;
            let epi_ed = lv_radius_ed + wall;
            let rv_radius_ed = uniform(rng, 8.0, 10.5) * scale;
            let rv_distance = epi_ed + 0.35 * rv_radius_ed;
            let anatomy = SaxAnatomy {
                target_lvef,
                target_rvef,
                lv_radius_ed,
                lv_radius_es: lv_radius_ed * (1.0 - target_lvef).sqrt(),
                myo_area: std::f64::consts::PI * (epi_ed * epi_ed - lv_radius_ed * lv_radius_ed),
                rv_radius_ed,
                rv_radius_es: rv_radius_ed * (1.0 - target_rvef).sqrt(),
                rv_distance,
                rv_cut_radius: epi_ed,
            };
            let mid = 0.5 * (epi_ed - (rv_distance + rv_radius_ed));
            (Anatomy::Sax(anatomy), mid)
        }
        Task::Aorta => {
            let [lo, hi] = spec.aortic_pulsatility_range;
            let target_pulsatility = uniform(rng, lo, hi);
            let radius_max = uniform(rng, 6.5, 9.0) * scale;
            let vessel_radius = uniform(rng, 0.6, 0.8) * radius_max;
            let gap = radius_max + vessel_radius + uniform(rng, 6.0, 10.0) * scale;
            let angle = uniform(rng, 1.2, 1.9);
            let anatomy = AortaAnatomy {
                target_pulsatility,
                radius_min: radius_max * (1.0 - target_pulsatility).sqrt(),
                radius_max,
                vessel_offset: [gap * angle.cos(), gap * angle.sin()],
                vessel_radius,
            };
            (Anatomy::Aorta(anatomy), 0.0)
        }
    };

    // Place the anatomy so its bounding extent is centred in the image.
    let det = warp[0][0] * warp[1][1] - warp[0][1] * warp[1][0];
    let inv = [[warp[1][1] / det, -warp[0][1] / det], [-warp[1][0] / det, warp[0][0] / det]];
    let (ox, oy) = (inv[0][0] * mid_q, inv[1][0] * mid_q);
    let jitter = 3.0 * scale;
    let mut center = [
        w / 2.0 - ox + uniform(rng, -jitter, jitter),
        h / 2.0 - oy + uniform(rng, -jitter, jitter),
    ];
    if let Anatomy::Aorta(a) = &anatomy {
        center[0] -= 0.5 * a.vessel_offset[0];
        center[1] -= 0.5 * a.vessel_offset[1];
    }

    SubjectParams {
        center,
        warp,
        diseased,
        hard,
        es_frame: spec.es_frame(),
        anatomy,
        appearance,
    }
}

/// Refine end-systolic radii so the rasterised EF matches the target.
fn target_function(spec: &CohortSpec, params: &mut SubjectParams) {
    let es = spec.es_frame();
    let snapshot = params.clone();
    let ras = Rasteriser { spec, params: &snapshot };
    match &mut params.anatomy {
        Anatomy::Sax(a) => {
            let ed = ras.frame_radii(0);
            let lv_ed = ras.count(&ed, sax::LV_BLOOD) as f64;
            let rv_ed = ras.count(&ed, sax::RV_BLOOD) as f64;
            let rv_now = a.rv_radius_es;
            a.lv_radius_es = ras.solve_radius(0.0, a.lv_radius_ed, lv_ed * (1.0 - a.target_lvef), |r| {
                ras.count(&Frame { lv: r, rv: rv_now }, sax::LV_BLOOD)
            });
            a.rv_radius_es = ras.solve_radius(0.0, a.rv_radius_ed, rv_ed * (1.0 - a.target_rvef), |r| {
                ras.count(&Frame { lv: 0.0, rv: r }, sax::RV_BLOOD)
            });
            debug_assert!(es > 0);
        }
        Anatomy::Aorta(a) => {
            let peak = ras.count(&Frame { lv: a.radius_max, rv: 0.0 }, aorta::AORTA) as f64;
            a.radius_min = ras.solve_radius(0.0, a.radius_max, peak * (1.0 - a.target_pulsatility), |r| {
                ras.count(&Frame { lv: r, rv: 0.0 }, aorta::AORTA)
            });
        }
    }
}

fn render_images(spec: &CohortSpec, params: &SubjectParams, labels: &LabelMap, rng: &mut rng::Rng) -> ImageStack {
    let dims = spec.dims();
    let (h, w) = (dims.height, dims.width);
    let app = &params.appearance;
    let noise = Normal::new(0.0, app.noise_std.max(0.0)).expect("finite std");
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut base = vec![0f64; h * w];
    let mut tmp = vec![0f64; h * w];
    let mut data = vec![0f32; dims.len()];
    let vessel = match &params.anatomy {
        Anatomy::Aorta(a) => Some(a),
        Anatomy::Sax(_) => None,
    };
    for t in 0..dims.frames {
        for k in 0..dims.slices {
            let plane = labels.plane(t, k);
            for y in 0..h {
                for x in 0..w {
                    let bx = (x as f64 - cx) / app.body_radii[0];
                    let by = (y as f64 - cy) / app.body_radii[1];
                    let inside = bx * bx + by * by <= 1.0;
                    let mut v = match (labels.task, plane[y * w + x]) {
                        (Task::Sax, sax::LV_BLOOD | sax::RV_BLOOD) | (Task::Aorta, aorta::AORTA) => app.blood,
                        (Task::Sax, sax::LV_MYO) => app.myocardium,
                        _ if inside => app.tissue,
                        _ => app.air,
                    };
                    if let Some(a) = vessel {
                        let dx = x as f64 - params.center[0] - a.vessel_offset[0];
                        let dy = y as f64 - params.center[1] - a.vessel_offset[1];
                        if plane[y * w + x] == 0 && dx * dx + dy * dy <= a.vessel_radius * a.vessel_radius {
                            v = app.blood * 0.9;
                        }
                    }
                    base[y * w + x] = v;
                }
            }
            // [1 2 1] / 4 separable smoothing, edge-clamped.
            for y in 0..h {
                for x in 0..w {
                    let l = base[y * w + x.saturating_sub(1)];
                    let r = base[y * w + (x + 1).min(w - 1)];
                    tmp[y * w + x] = 0.25 * l + 0.5 * base[y * w + x] + 0.25 * r;
                }
            }
            let off = dims.plane_offset(t, k);
            for y in 0..h {
                for x in 0..w {
                    let u = tmp[y.saturating_sub(1) * w + x];
                    let d = tmp[(y + 1).min(h - 1) * w + x];
                    let v = 0.25 * u + 0.5 * tmp[y * w + x] + 0.25 * d;
                    let nx = 2.0 * x as f64 / (w - 1) as f64 - 1.0;
                    let ny = 2.0 * y as f64 / (h - 1) as f64 - 1.0;
                    let bias = 1.0 + app.bias[0] * nx + app.bias[1] * ny + app.bias[2] * nx * ny;
                    let v = (v * bias + noise.sample(rng)).clamp(0.0, 1.0);
                    // Quantise to the 16-bit grid used on disk.
                    data[off + y * w + x] = quantise(v);
                }
            }
        }
    }
    ImageStack { dims, data }
}

pub(crate) fn quantise(v: f64) -> f32 {
    ((v * 65535.0).round() as u16) as f32 / 65535.0
}

/// Generate one subject; `index` selects the case's own seed stream.
pub fn generate_case(spec: &CohortSpec, index: usize) -> Result<CineCase> {
    spec.validate()?;
    let mut rng = rng::rng(spec.seed, index as u64);
    let mut params = sample_subject(spec, &mut rng);
    target_function(spec, &mut params);

    let dims = spec.dims();
    let ras = Rasteriser { spec, params: &params };
    let mut labels = LabelMap::background(spec.task, dims);
    for t in 0..dims.frames {
        let f = ras.frame_radii(t);
        let n = dims.frame_len();
        ras.frame_labels(&f, &mut labels.data[t * n..(t + 1) * n]);
    }
    let images = render_images(spec, &params, &labels, &mut rng);
    Ok(CineCase {
        case_id: spec.case_id(index),
        task: spec.task,
        images,
        gt_labels: Some(labels),
        geometry: spec.geometry(),
        subject: params,
    })
}

pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<CineCase>> {
    spec.validate()?;
    (0..spec.n_subjects).map(|i| generate_case(spec, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_class(l: &LabelMap, t: usize, class: u8) -> usize {
        l.frame(t).iter().filter(|&&c| c == class).count()
    }

    #[test]
    fn example_lvef_window() {
        let spec = CohortSpec {
            n_subjects: 1,
            frames: 20,
            target_lvef_range: [0.58, 0.62],
            seed: 7,
            ..CohortSpec::default()
        };
        let cases = generate_cohort(&spec).unwrap();
        assert_eq!(cases.len(), 1);
        let gt = cases[0].gt_labels.as_ref().unwrap();
        // brute-force pixel counting over every frame
        let vols: Vec<usize> = (0..spec.frames).map(|t| count_class(gt, t, sax::LV_BLOOD)).collect();
        let edv = *vols.iter().max().unwrap() as f64;
        let esv = *vols.iter().min().unwrap() as f64;
        let ef = (edv - esv) / edv;
        assert!((0.56..=0.64).contains(&ef), "ef {ef}");
    }

    #[test]
    fn empty_and_deterministic() {
        let spec = CohortSpec { n_subjects: 0, ..CohortSpec::default() };
        assert!(generate_cohort(&spec).unwrap().is_empty());
        let spec = CohortSpec { n_subjects: 2, seed: 3, ..CohortSpec::default() };
        assert_eq!(generate_cohort(&spec).unwrap(), generate_cohort(&spec).unwrap());
        let other = CohortSpec { seed: 4, ..spec.clone() };
        assert_ne!(generate_cohort(&spec).unwrap(), generate_cohort(&other).unwrap());
    }

    #[test]
    fn invalid_spec_names_field() {
        let bad = CohortSpec { frames: 1, ..CohortSpec::default() };
        match generate_cohort(&bad) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "frames"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = CohortSpec { target_lvef_range: [0.5, 1.0], ..CohortSpec::default() };
        assert!(matches!(generate_cohort(&bad), Err(Error::Invalid { field, .. }) if field == "target_lvef_range"));
        let bad = CohortSpec { slice_thickness: 0.0, ..CohortSpec::default() };
        assert!(matches!(generate_cohort(&bad), Err(Error::Invalid { field, .. }) if field == "slice_thickness"));
    }

    #[test]
    fn phase_is_periodic_single_trough() {
        for frames in [2, 5, 20, 50, 100] {
            let e = es_frame(frames);
            let u: Vec<f64> = (0..frames).map(|t| motion_phase(t, frames)).collect();
            assert_eq!(u[0], 0.0);
            assert_eq!(u[e], 1.0);
            for t in 1..=e {
                assert!(u[t] > u[t - 1]);
            }
            for t in e + 1..frames {
                assert!(u[t] < u[t - 1]);
            }
        }
    }

    #[test]
    fn multi_slice_geometry() {
        let spec = CohortSpec { n_subjects: 2, slices: 4, frames: 10, ..CohortSpec::default() };
        for case in generate_cohort(&spec).unwrap() {
            let gt = case.gt_labels.as_ref().unwrap();
            for t in 0..spec.frames {
                let apex = gt.plane(t, 3);
                assert!(!apex.contains(&sax::RV_BLOOD), "RV on apical slice");
                let base = gt.plane(t, 0).iter().filter(|&&c| c == sax::LV_BLOOD).count();
                let top = apex.iter().filter(|&&c| c == sax::LV_BLOOD).count();
                assert!(base > top);
            }
        }
    }

    #[test]
    fn aorta_pulsatility_targeted() {
        let spec = CohortSpec { task: Task::Aorta, n_subjects: 4, frames: 30, ..CohortSpec::default() };
        for case in generate_cohort(&spec).unwrap() {
            let gt = case.gt_labels.as_ref().unwrap();
            let areas: Vec<usize> = (0..spec.frames).map(|t| count_class(gt, t, aorta::AORTA)).collect();
            let mx = *areas.iter().max().unwrap() as f64;
            let mn = *areas.iter().min().unwrap() as f64;
            let Anatomy::Aorta(a) = &case.subject.anatomy else { panic!() };
            assert!(((mx - mn) / mx - a.target_pulsatility).abs() <= 0.02);
            assert_eq!(areas[spec.es_frame()] as f64, mx);
        }
    }
}
