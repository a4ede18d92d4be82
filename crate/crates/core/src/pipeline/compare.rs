//! Cross-run comparison tables and plots.

use std::fmt::Write as _;

use image::{ImageBuffer, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::eval::compare_to;
use super::run::RunRecord;
use crate::curves::ClinicalMetrics;
use crate::error::{Error, Result};
use crate::stats::MeanSd;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSummary {
    pub n: usize,
    pub lvedv: MeanSd,
    pub lvef: MeanSd,
    pub rvedv: MeanSd,
    pub rvef: MeanSd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub dice: Option<MeanSd>,
    pub t_vs_reference: Option<f64>,
    pub p_vs_reference: Option<f64>,
    pub clinical: Option<ClinicalSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub case_id: String,
    pub run: String,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub delta_baseline: Option<String>,
    /// One row per run, then a `ground_truth` row for short-axis tasks.
    pub rows: Vec<SummaryRow>,
    pub deltas: Vec<DeltaRow>,
}

fn mean_sd(v: &[f64]) -> MeanSd {
    if v.is_empty() {
        return MeanSd { mean: f64::NAN, sd: f64::NAN };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MeanSd { mean, sd: var.sqrt() }
}

pub fn clinical_summary<'a>(metrics: impl Iterator<Item = &'a ClinicalMetrics>) -> Option<ClinicalSummary> {
    let m: Vec<&ClinicalMetrics> = metrics.collect();
    if m.is_empty() {
        return None;
    }
    let col = |f: fn(&ClinicalMetrics) -> f64| mean_sd(&m.iter().map(|x| f(x)).collect::<Vec<_>>());
    Some(ClinicalSummary {
        n: m.len(),
        lvedv: col(|x| x.lvedv),
        lvef: col(|x| x.lvef),
        rvedv: col(|x| x.rvedv),
        rvef: col(|x| x.rvef),
    })
}

/// Table of every run against `reference`, plus per-case deltas against the
/// `half` run when one is present.
pub fn compare(runs: &[RunRecord], reference: &str) -> Result<Comparison> {
    let rf = runs
        .iter()
        .find(|r| r.run_id == reference)
        .ok_or_else(|| Error::NotFound(format!("reference run {reference}")))?;
    let ids = rf.metrics.case_ids();
    if let Some(bad) = runs.iter().find(|r| r.metrics.case_ids() != ids) {
        return Err(Error::invalid("runs", format!("run {} used a different test cohort", bad.run_id)));
    }
    let mut rows = Vec::new();
    for r in runs {
        let c = compare_to(&r.metrics, reference, &rf.metrics)?;
        rows.push(SummaryRow {
            run: r.run_id.clone(),
            dice: Some(r.metrics.pooled),
            t_vs_reference: Some(c.ttest.t),
            p_vs_reference: Some(c.ttest.p),
            clinical: clinical_summary(r.metrics.clinical.iter().filter_map(|c| c.predicted.as_ref())),
        });
    }
    if let Some(gt) = clinical_summary(rf.metrics.clinical.iter().map(|c| &c.ground_truth)) {
        rows.push(SummaryRow {
            run: "ground_truth".into(),
            dice: None,
            t_vs_reference: None,
            p_vs_reference: None,
            clinical: Some(gt),
        });
    }
    let half = runs.iter().find(|r| r.run_id == "half");
    let mut deltas = Vec::new();
    if let Some(h) = half {
        for r in runs.iter().filter(|r| r.run_id != "half") {
            for d in compare_to(&r.metrics, "half", &h.metrics)?.deltas {
                deltas.push(DeltaRow { case_id: d.case_id, run: r.run_id.clone(), delta: d.delta });
            }
        }
    }
    Ok(Comparison { reference: reference.into(), delta_baseline: half.map(|_| "half".into()), rows, deltas })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Comparison {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "run,dice_mean,dice_sd,t_vs_reference,p_vs_reference,n_clinical,lvedv_mean,lvedv_sd,lvef_mean,lvef_sd,rvedv_mean,rvedv_sd,rvef_mean,rvef_sd\n",
        );
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.run,
                opt(r.dice.map(|d| d.mean)),
                opt(r.dice.map(|d| d.sd)),
                opt(r.t_vs_reference),
                opt(r.p_vs_reference)
            );
            match &r.clinical {
                Some(c) => {
                    let _ = write!(out, ",{}", c.n);
                    for m in [c.lvedv, c.lvef, c.rvedv, c.rvef] {
                        let _ = write!(out, ",{},{}", m.mean, m.sd);
                    }
                }
                None => out.push_str(",0,,,,,,,,"),
            }
            out.push('\n');
        }
        out
    }

    pub fn deltas_csv(&self) -> String {
        let mut out = String::from("case_id,run,delta_vs_half\n");
        for d in &self.deltas {
            let _ = writeln!(out, "{},{},{}", d.case_id, d.run, d.delta);
        }
        out
    }

    /// Bars of pooled Dice (mean, with a whisker of one sd) per run.
    pub fn dice_plot(&self) -> RgbImage {
        let runs: Vec<(&str, MeanSd)> = self.rows.iter().filter_map(|r| r.dice.map(|d| (r.run.as_str(), d))).collect();
        let (w, h) = (60 * runs.len().max(1) as u32 + 40, 240u32);
        let mut img = canvas(w, h);
        axis(&mut img, 20, h - 20);
        for (i, (_, d)) in runs.iter().enumerate() {
            let x0 = 30 + 60 * i as u32;
            let top = y_of(d.mean, h);
            rect(&mut img, x0, top, x0 + 40, h - 20, PALETTE[i % PALETTE.len()]);
            let (lo, hi) = (y_of(d.mean - d.sd, h), y_of(d.mean + d.sd, h));
            rect(&mut img, x0 + 19, hi, x0 + 21, lo.max(hi + 1), Rgb([0, 0, 0]));
        }
        img
    }

    /// Per-case Dice change against the half run, one panel row per run,
    /// cases sorted by delta.
    pub fn delta_plot(&self) -> RgbImage {
        let mut runs: Vec<&str> = self.deltas.iter().map(|d| d.run.as_str()).collect();
        runs.dedup();
        let n_cases = self.deltas.iter().filter(|d| Some(d.run.as_str()) == runs.first().copied()).count().max(1);
        let panel = 120u32;
        let (w, h) = (8 * n_cases as u32 + 40, panel * runs.len().max(1) as u32);
        let mut img = canvas(w, h);
        let max = self.deltas.iter().map(|d| d.delta.abs()).fold(1e-6, f64::max);
        for (k, run) in runs.iter().enumerate() {
            let mut v: Vec<f64> = self.deltas.iter().filter(|d| d.run == *run).map(|d| d.delta).collect();
            v.sort_by(f64::total_cmp);
            let mid = panel * k as u32 + panel / 2;
            rect(&mut img, 20, mid, w - 10, mid + 1, Rgb([120, 120, 120]));
            for (i, d) in v.iter().enumerate() {
                let x0 = 24 + 8 * i as u32;
                let len = (d.abs() / max * (panel as f64 / 2.0 - 8.0)).round() as u32;
                let colour = if *d >= 0.0 { Rgb([40, 140, 60]) } else { Rgb([190, 50, 40]) };
                if *d >= 0.0 {
                    rect(&mut img, x0, mid - len, x0 + 6, mid, colour);
                } else {
                    rect(&mut img, x0, mid + 1, x0 + 6, mid + 1 + len, colour);
                }
            }
        }
        img
    }
}

const PALETTE: [Rgb<u8>; 5] = [Rgb([70, 110, 180]), Rgb([220, 140, 50]), Rgb([90, 160, 90]), Rgb([170, 80, 160]), Rgb([200, 60, 60])];

fn canvas(w: u32, h: u32) -> RgbImage {
    ImageBuffer::from_pixel(w, h, Rgb([255, 255, 255]))
}

fn y_of(v: f64, h: u32) -> u32 {
    let span = (h - 40) as f64;
    (h as f64 - 20.0 - v.clamp(0.0, 1.0) * span).round() as u32
}

fn axis(img: &mut RgbImage, x: u32, y: u32) {
    let (w, _) = img.dimensions();
    rect(img, x, 10, x + 1, y, Rgb([0, 0, 0]));
    rect(img, x, y, w - 10, y + 1, Rgb([0, 0, 0]));
}

fn rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, c: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for y in y0.min(h)..y1.min(h) {
        for x in x0.min(w)..x1.min(w) {
            img.put_pixel(x, y, c);
        }
    }
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}
