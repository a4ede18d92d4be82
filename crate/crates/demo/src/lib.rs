//! WebAssembly bindings for the static demo page in `www/`.

use qcseg::crf::{refine, CrfParams};
use qcseg::curves::{clinical_from_labels, qc_curves};
use qcseg::phantom::{generate_cohort, CineCase, CohortSpec};
use qcseg::qc::{roc, youden_threshold};
use qcseg::stats::dice;
use qcseg::volume::Task;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

const SIZE: usize = 48;
const FRAMES: usize = 20;
const FILL: [[u8; 3]; 4] = [[0, 0, 0], [230, 60, 40], [60, 200, 80], [60, 120, 240]];

fn err(e: qcseg::Error) -> String {
    e.to_string()
}

/// Intensity plane as RGBA with the labels blended on top.
fn rgba(image: &[f32], labels: Option<&[u8]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.len() * 4);
    for (i, &v) in image.iter().enumerate() {
        let g = (v.clamp(0.0, 1.0) * 255.0) as f32;
        let mut px = [g, g, g];
        if let Some(c) = labels.map(|l| l[i] as usize).filter(|&c| c > 0) {
            for k in 0..3 {
                px[k] = 0.55 * px[k] + 0.45 * FILL[c][k] as f32;
            }
        }
        out.extend(px.iter().map(|&x| x as u8));
        out.push(255);
    }
    out
}

#[wasm_bindgen]
pub struct Phantom {
    case: CineCase,
    target_lvef: f64,
}

#[wasm_bindgen]
impl Phantom {
    /// One short-axis subject whose LV ejection fraction is drawn close to
    /// `lvef_percent`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, lvef_percent: f64, hard: bool) -> Result<Phantom, String> {
        let f = lvef_percent / 100.0;
        let spec = CohortSpec {
            n_subjects: 1,
            frames: FRAMES,
            height: SIZE,
            width: SIZE,
            target_lvef_range: [f - 0.005, f + 0.005],
            disease_fraction: 0.0,
            hard_fraction: if hard { 1.0 } else { 0.0 },
            id_prefix: "demo".into(),
            seed,
            ..CohortSpec::default()
        };
        let case = generate_cohort(&spec).map_err(err)?.remove(0);
        Ok(Phantom { case, target_lvef: lvef_percent })
    }

    pub fn width(&self) -> usize {
        SIZE
    }

    pub fn height(&self) -> usize {
        SIZE
    }

    pub fn frames(&self) -> usize {
        FRAMES
    }

    pub fn target_lvef(&self) -> f64 {
        self.target_lvef
    }

    /// LVEF (percent) counted from the ground-truth masks.
    pub fn measured_lvef(&self) -> Result<f64, String> {
        let gt = self.case.gt_labels.as_ref().expect("phantoms carry ground truth");
        Ok(clinical_from_labels(gt, &self.case.geometry).map_err(err)?.lvef)
    }

    pub fn frame_rgba(&self, t: usize, overlay: bool) -> Vec<u8> {
        let t = t.min(FRAMES - 1);
        let labels = overlay.then(|| self.case.gt_labels.as_ref().expect("ground truth").plane(t, 0));
        rgba(self.case.images.plane(t, 0), labels)
    }

    /// `{"lv_blood": [...], "rv_blood": [...]}` volumes in mL per frame.
    pub fn curves_json(&self) -> Result<String, String> {
        let gt = self.case.gt_labels.as_ref().expect("ground truth");
        let curves = qc_curves(gt, &self.case.geometry).map_err(err)?;
        let by_name: serde_json::Map<String, serde_json::Value> = curves
            .iter()
            .map(|c| (Task::Sax.class_name(c.structure).to_owned(), serde_json::json!(c.values)))
            .collect();
        Ok(serde_json::Value::Object(by_name).to_string())
    }

    /// Corrupt the ground truth of frame `t` into a noisy probability map and
    /// clean it up with the CRF.
    pub fn crf(&self, t: usize, noise: f64, seed: u64, w_smooth: f64, w_appearance: f64, iterations: usize) -> Result<CrfResult, String> {
        let t = t.min(FRAMES - 1);
        let gt = self.case.gt_labels.as_ref().expect("ground truth").plane(t, 0);
        let image = self.case.images.plane(t, 0);
        let n = SIZE * SIZE;
        let c = Task::Sax.n_classes();
        let mut r = qcseg::rng::rng(seed, qcseg::rng::stream("demo-crf"));
        let mut probs = vec![0.0; c * n];
        for i in 0..n {
            let logits: Vec<f64> = (0..c)
                .map(|l| if gt[i] as usize == l { 2.0 } else { 0.0 } + noise * Distribution::<f64>::sample(&StandardNormal, &mut r))
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
            for l in 0..c {
                probs[l * n + i] = (logits[l] - m).exp() / z;
            }
        }
        let before = qcseg::volume::argmax_plane(&probs, c, n);
        let params = CrfParams { w_smooth, w_appearance, iterations, ..CrfParams::default() };
        let after = refine(&probs, image, c, SIZE, SIZE, &params).map_err(err)?;
        let mean_dice = |pred: &[u8]| -> Result<f64, String> {
            let mut s = 0.0;
            for class in 1..c as u8 {
                s += dice(pred, gt, class).map_err(err)?;
            }
            Ok(s / (c - 1) as f64)
        };
        Ok(CrfResult {
            dice_before: mean_dice(&before)?,
            dice_after: mean_dice(&after)?,
            before: rgba(image, Some(&before)),
            after: rgba(image, Some(&after)),
        })
    }
}

#[wasm_bindgen]
pub struct CrfResult {
    dice_before: f64,
    dice_after: f64,
    before: Vec<u8>,
    after: Vec<u8>,
}

#[wasm_bindgen]
impl CrfResult {
    pub fn dice_before(&self) -> f64 {
        self.dice_before
    }

    pub fn dice_after(&self) -> f64 {
        self.dice_after
    }

    pub fn before_rgba(&self) -> Vec<u8> {
        self.before.clone()
    }

    pub fn after_rgba(&self) -> Vec<u8> {
        self.after.clone()
    }
}

/// ROC of `scores` (probability a case is accurate) against `erroneous`
/// flags (non-zero = erroneous) and the weighted-Youden operating point, as
/// JSON: `{"auc", "points": [{threshold, sensitivity, specificity}], "operating"}`.
#[wasm_bindgen]
pub fn roc_youden(scores: &[f64], erroneous: &[u8], weight: f64) -> Result<String, String> {
    let flags: Vec<bool> = erroneous.iter().map(|&e| e != 0).collect();
    let curve = roc(scores, &flags).map_err(err)?;
    let op = youden_threshold(&curve, weight).map_err(err)?;
    Ok(serde_json::json!({ "auc": curve.auc, "points": curve.points, "operating": op }).to_string())
}

/// Seeded scores for a toy QC set: accurate cases centred at `0.5 +
/// separation / 2`, erroneous ones at `0.5 - separation / 2`, clipped to
/// [0, 1]. Returns `[score_0, flag_0, score_1, flag_1, ...]`.
#[wasm_bindgen]
pub fn toy_scores(n: usize, separation: f64, spread: f64, seed: u64) -> Vec<f64> {
    let mut r = qcseg::rng::rng(seed, qcseg::rng::stream("demo-roc"));
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let bad = i % 2 == 1;
        let centre = if bad { 0.5 - separation / 2.0 } else { 0.5 + separation / 2.0 };
        let z: f64 = StandardNormal.sample(&mut r);
        out.push((centre + spread * z).clamp(0.0, 1.0));
        out.push(if bad { 1.0 } else { 0.0 });
    }
    out
}
