//! Quality-control data sets, ROC analysis, operating-point selection and
//! best-in-class ranking.
//!
//! Scores are always the classifier's probability that a case is accurate.
//! The positive class of the ROC is "erroneous": a case is flagged when its
//! score falls below the threshold, so sensitivity is the recall on
//! erroneous cases. ROC points are listed from the `-inf` sentinel (nothing
//! flagged, Se = 0) to `+inf` (everything flagged, Se = 1).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::curves::{prepare_qc_input, qc_curves, Normalisation};
use crate::error::{Error, Result};
use crate::models::QcExample;
use crate::phantom::{corrupt_labels, CineCase, CorruptionKind, CorruptionSpec};
use crate::rng;
use crate::volume::{LabelMap, Task};

pub const DEFAULT_K: usize = 30;
pub const DEFAULT_YOUDEN_WEIGHT: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcLabel {
    #[serde(alias = "good")]
    Accurate,
    Erroneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SyntheticCorruption,
    HumanReview,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcEntry {
    pub case_id: String,
    pub features: Vec<Vec<f64>>,
    pub label: QcLabel,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QcDataset {
    pub entries: Vec<QcEntry>,
}

/// One line of the JSON-lines dataset file. Features are either stored in a
/// separate file or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcRecord {
    pub case_id: String,
    pub label: QcLabel,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
}

impl QcDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: QcLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("QC dataset".into()));
        }
        if self.count(QcLabel::Accurate) == 0 || self.count(QcLabel::Erroneous) == 0 {
            return Err(Error::SingleClass);
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.case_id.as_str()) {
                return Err(Error::invalid("case_id", format!("duplicate QC entry {}", e.case_id)));
            }
        }
        Ok(())
    }

    pub fn case_ids(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.case_id.clone()).collect()
    }

    pub fn examples(&self) -> Vec<QcExample> {
        self.entries
            .iter()
            .map(|e| QcExample { features: e.features.clone(), accurate: e.label == QcLabel::Accurate })
            .collect()
    }

    /// Split by a seeded shuffle; the second part holds `ceil(fraction * n)`
    /// entries, stratified per label.
    pub fn split(&self, fraction: f64, seed: u64) -> (QcDataset, QcDataset) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (k, label) in [QcLabel::Accurate, QcLabel::Erroneous].into_iter().enumerate() {
            let mut part: Vec<&QcEntry> = self.entries.iter().filter(|e| e.label == label).collect();
            part.shuffle(&mut rng::rng(seed, rng::stream("qc-split") ^ k as u64));
            let n_b = (part.len() as f64 * fraction).ceil() as usize;
            let cut = part.len() - n_b.min(part.len());
            a.extend(part[..cut].iter().map(|e| (*e).clone()));
            b.extend(part[cut..].iter().map(|e| (*e).clone()));
        }
        let sort = |mut v: Vec<QcEntry>| {
            v.sort_by(|x, y| x.case_id.cmp(&y.case_id));
            QcDataset { entries: v }
        };
        (sort(a), sort(b))
    }

    /// Write `qc_dataset.jsonl` plus one feature file per entry under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let fdir = dir.join("features");
        fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
        let mut out = String::new();
        for e in &self.entries {
            let rel = format!("features/{}.json", e.case_id);
            let p = dir.join(&rel);
            fs::write(&p, serde_json::to_string(&e.features)?).map_err(|err| Error::io(&p, err))?;
            let rec = QcRecord {
                case_id: e.case_id.clone(),
                label: e.label,
                provenance: e.provenance,
                features_path: Some(rel),
                features: None,
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        let p = dir.join(QC_DATASET_FILE);
        fs::write(&p, out).map_err(|e| Error::io(&p, e))
    }

    /// Self-contained JSON lines with the features inline.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            let rec = QcRecord {
                case_id: e.case_id.clone(),
                label: e.label,
                provenance: e.provenance,
                features_path: None,
                features: Some(e.features.clone()),
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Read a JSON-lines file; relative feature paths resolve against its directory.
    pub fn load(path: &Path) -> Result<QcDataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: QcRecord = serde_json::from_str(line)
                .map_err(|e| Error::format(path.display().to_string(), format!("line {}: {e}", i + 1)))?;
            let features: Vec<Vec<f64>> = match (rec.features, &rec.features_path) {
                (Some(f), _) => f,
                (None, Some(rel)) => {
                    let fp = base.join(rel);
                    serde_json::from_slice(&fs::read(&fp).map_err(|e| Error::io(&fp, e))?)?
                }
                (None, None) => {
                    return Err(Error::format(
                        path.display().to_string(),
                        format!("line {}: entry has neither features nor features_path", i + 1),
                    ))
                }
            };
            entries.push(QcEntry { case_id: rec.case_id, features, label: rec.label, provenance: rec.provenance });
        }
        Ok(QcDataset { entries })
    }
}

pub const QC_DATASET_FILE: &str = "qc_dataset.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedCorruption {
    pub case_id: String,
    pub corruptions: Vec<CorruptionSpec>,
}

/// Which cases to corrupt, and how.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub cases: Vec<PlannedCorruption>,
}

impl CorruptionPlan {
    pub fn get(&self, case_id: &str) -> Option<&[CorruptionSpec]> {
        self.cases.iter().find(|c| c.case_id == case_id).map(|c| c.corruptions.as_slice())
    }

    /// Corrupt `round(fraction * n)` seeded-random cases with one or two
    /// curve-visible corruptions each.
    pub fn random(cases: &[CineCase], fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid("fraction", "must lie in [0, 1]"));
        }
        let mut r = rng::named(seed, "corruption-plan");
        let n_bad = (cases.len() as f64 * fraction).round() as usize;
        let mut idx: Vec<usize> = (0..cases.len()).collect();
        idx.shuffle(&mut r);
        let mut chosen: Vec<usize> = idx[..n_bad].to_vec();
        chosen.sort_unstable();
        let kinds = [
            CorruptionKind::DropFrame,
            CorruptionKind::Erode,
            CorruptionKind::Dilate,
            CorruptionKind::SwapLabels,
            CorruptionKind::SpuriousBlob,
        ];
        let mut planned = Vec::new();
        for i in chosen {
            let case = &cases[i];
            let t = case.dims().frames;
            let targets = case.task.qc_structures();
            let n = r.random_range(1..=2);
            let mut corruptions = Vec::new();
            for _ in 0..n {
                let kind = *kinds.choose(&mut r).expect("non-empty");
                let (lo, hi) = match kind {
                    CorruptionKind::DropFrame => (1, 3.min(t)),
                    _ => ((t / 5).max(1), (t / 2).max(1)),
                };
                let count = r.random_range(lo..=hi);
                let mut frames: Vec<usize> = (0..t).collect();
                frames.shuffle(&mut r);
                frames.truncate(count);
                frames.sort_unstable();
                let severity = match kind {
                    CorruptionKind::SpuriousBlob => r.random_range(2..=5),
                    CorruptionKind::Erode | CorruptionKind::Dilate => r.random_range(1..=3),
                    _ => 1,
                };
                corruptions.push(CorruptionSpec {
                    kind,
                    severity,
                    frame_range: frames,
                    target_class: *targets.choose(&mut r).expect("task has QC structures"),
                    seed: r.random(),
                });
            }
            planned.push(PlannedCorruption { case_id: case.case_id.clone(), corruptions });
        }
        Ok(Self { cases: planned })
    }
}

/// Reviewer verdicts keyed by case id.
pub type HumanLabels = BTreeMap<String, QcLabel>;

/// Parse a JSON-lines label file; each line needs `case_id` and `label`
/// (later lines win).
pub fn parse_human_labels(text: &str) -> Result<HumanLabels> {
    #[derive(Deserialize)]
    struct Line {
        case_id: String,
        #[serde(alias = "verdict")]
        label: QcLabel,
    }
    let mut out = HumanLabels::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: Line = serde_json::from_str(line)
            .map_err(|e| Error::format("label file", format!("line {}: {e}", i + 1)))?;
        out.insert(l.case_id, l.label);
    }
    Ok(out)
}

pub enum LabelSource<'a> {
    Corruption(&'a CorruptionPlan),
    Human(&'a HumanLabels),
}

/// QC input features of a label map.
pub fn features_of(case: &CineCase, labels: &LabelMap) -> Result<Vec<Vec<f64>>> {
    prepare_qc_input(&qc_curves(labels, &case.geometry)?, Normalisation::Max)
}

/// One entry per case. `labels[i]` is the segmentation of `cases[i]`: the
/// clean masks for the synthetic path, the reviewed segmentation for the
/// human path.
pub fn build_qc_dataset(cases: &[CineCase], labels: &[LabelMap], source: LabelSource) -> Result<QcDataset> {
    if cases.len() != labels.len() {
        return Err(Error::Shape(format!("{} cases but {} label maps", cases.len(), labels.len())));
    }
    let ids: BTreeSet<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let mut entries = Vec::with_capacity(cases.len());
    match source {
        LabelSource::Corruption(plan) => {
            if let Some(p) = plan.cases.iter().find(|p| !ids.contains(p.case_id.as_str())) {
                return Err(Error::NotFound(format!("planned case {} is not in the cohort", p.case_id)));
            }
            for (case, clean) in cases.iter().zip(labels) {
                let (map, label) = match plan.get(&case.case_id) {
                    Some(specs) => {
                        let mut m = clean.clone();
                        for s in specs {
                            m = corrupt_labels(&m, s)?;
                        }
                        (m, QcLabel::Erroneous)
                    }
                    None => (clean.clone(), QcLabel::Accurate),
                };
                entries.push(QcEntry {
                    case_id: case.case_id.clone(),
                    features: features_of(case, &map)?,
                    label,
                    provenance: Provenance::SyntheticCorruption,
                });
            }
        }
        LabelSource::Human(verdicts) => {
            if let Some(id) = verdicts.keys().find(|id| !ids.contains(id.as_str())) {
                return Err(Error::NotFound(format!("labelled case {id} is not in the cohort")));
            }
            for (case, seg) in cases.iter().zip(labels) {
                let label = *verdicts
                    .get(&case.case_id)
                    .ok_or_else(|| Error::NotFound(format!("no review label for case {}", case.case_id)))?;
                entries.push(QcEntry {
                    case_id: case.case_id.clone(),
                    features: features_of(case, seg)?,
                    label,
                    provenance: Provenance::HumanReview,
                });
            }
        }
    }
    Ok(QcDataset { entries })
}

mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad threshold `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "inf_f64")]
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,sensitivity,specificity\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.sensitivity, p.specificity);
        }
        out
    }
}

/// ROC of `scores` (probability accurate) against `erroneous` flags.
pub fn roc(scores: &[f64], erroneous: &[bool]) -> Result<RocCurve> {
    if scores.len() != erroneous.len() {
        return Err(Error::Shape(format!("{} scores but {} labels", scores.len(), erroneous.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores", "must be finite"));
    }
    let n_pos = erroneous.iter().filter(|&&e| e).count();
    let n_neg = erroneous.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut points = vec![RocPoint { threshold: f64::NEG_INFINITY, sensitivity: 0.0, specificity: 1.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if erroneous[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() { 0.5 * (v + scores[order[i]]) } else { f64::INFINITY };
        points.push(RocPoint {
            threshold,
            sensitivity: tp as f64 / n_pos as f64,
            specificity: (n_neg - fp) as f64 / n_neg as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| {
            let (x0, x1) = (1.0 - w[0].specificity, 1.0 - w[1].specificity);
            0.5 * (x1 - x0) * (w[0].sensitivity + w[1].sensitivity)
        })
        .sum();
    Ok(RocCurve { points, auc })
}

pub fn weighted_youden(p: &RocPoint, w: f64) -> f64 {
    2.0 * (w * p.sensitivity + (1.0 - w) * p.specificity) - 1.0
}

/// Point maximising the weighted Youden index; ties prefer higher
/// sensitivity, then higher specificity.
pub fn youden_threshold(roc: &RocCurve, w: f64) -> Result<RocPoint> {
    if !(0.5..1.0).contains(&w) {
        return Err(Error::invalid("w", "Youden weight must lie in [0.5, 1)"));
    }
    let mut best: Option<(f64, &RocPoint)> = None;
    for p in &roc.points {
        let j = weighted_youden(p, w);
        let better = match best {
            None => true,
            Some((bj, bp)) => {
                j > bj
                    || (j == bj && p.sensitivity > bp.sensitivity)
                    || (j == bj && p.sensitivity == bp.sensitivity && p.specificity > bp.specificity)
            }
        };
        if better {
            best = Some((j, p));
        }
    }
    best.map(|(_, p)| *p).ok_or_else(|| Error::Empty("ROC curve".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Good,
    Erroneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcVerdict {
    pub case_id: String,
    pub prob_accurate: f64,
    #[serde(with = "inf_f64")]
    pub threshold: f64,
    pub decision: Decision,
}

impl QcVerdict {
    pub fn new(case_id: impl Into<String>, prob_accurate: f64, threshold: f64) -> Self {
        let decision = if prob_accurate >= threshold { Decision::Good } else { Decision::Erroneous };
        Self { case_id: case_id.into(), prob_accurate, threshold, decision }
    }
}

/// The `k` highest-scoring ids, descending; ties by ascending id.
pub fn rank_select(scores: &[(String, f64)], k: usize) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = scores.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(id, _)| id.clone()).collect()
}

/// Erroneous-detection sensitivity and specificity at a threshold.
pub fn operating_point(scores: &[f64], erroneous: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut pos, mut tn, mut neg) = (0, 0, 0, 0);
    for (&s, &e) in scores.iter().zip(erroneous) {
        let flagged = s < threshold;
        if e {
            pos += 1;
            tp += flagged as usize;
        } else {
            neg += 1;
            tn += (!flagged) as usize;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    (ratio(tp, pos), ratio(tn, neg))
}

/// Task of every case, which must agree.
pub fn common_task(cases: &[CineCase]) -> Result<Task> {
    let first = cases.first().ok_or_else(|| Error::Empty("cohort".into()))?.task;
    if cases.iter().any(|c| c.task != first) {
        return Err(Error::invalid("task", "cohort mixes tasks"));
    }
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_cohort, CohortSpec};

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn roc_examples() {
        let r = roc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert!(matches!(roc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
        assert!(roc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn roc_endpoints_and_order() {
        let r = roc(&[0.3, 0.1, 0.7, 0.3, 0.9, 0.4], &[true, true, false, false, false, true]).unwrap();
        let first = r.points.first().unwrap();
        let last = r.points.last().unwrap();
        assert_eq!((first.threshold, first.sensitivity), (f64::NEG_INFINITY, 0.0));
        assert_eq!((last.threshold, last.sensitivity), (f64::INFINITY, 1.0));
        assert!(r.points.windows(2).all(|w| w[0].threshold < w[1].threshold));
        assert!(r.points.windows(2).all(|w| w[0].sensitivity <= w[1].sensitivity));
        let interior: Vec<f64> = r.points[1..r.points.len() - 1].iter().map(|p| p.threshold).collect();
        assert_eq!(interior, vec![0.2, 0.35, 0.55, 0.8]);
    }

    #[test]
    fn roc_thresholds_survive_json() {
        let r = roc(&[0.1, 0.9], &[true, false]).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"-inf\""));
        let back: RocCurve = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().starts_with("threshold,sensitivity,specificity\n-inf,0,1\n"));
    }

    #[test]
    fn youden_examples() {
        let perfect = roc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        for w in [0.5, 0.7, 0.95] {
            let p = youden_threshold(&perfect, w).unwrap();
            assert_eq!((p.sensitivity, p.specificity), (1.0, 1.0));
            assert_eq!(p.threshold, 0.5);
        }
        assert!(youden_threshold(&perfect, 1.0).is_err());
        assert!(youden_threshold(&perfect, 0.4).is_err());
    }

    #[test]
    fn verdict_decision() {
        assert_eq!(QcVerdict::new("a", 0.5, 0.5).decision, Decision::Good);
        assert_eq!(QcVerdict::new("a", 0.49, 0.5).decision, Decision::Erroneous);
    }

    #[test]
    fn rank_examples() {
        let s = vec![("a".to_string(), 0.9), ("b".to_string(), 0.1), ("c".to_string(), 0.8)];
        assert_eq!(rank_select(&s, 2), ids(&["a", "c"]));
        assert!(rank_select(&s, 0).is_empty());
        assert_eq!(rank_select(&s, 10).len(), 3);
        let t = vec![("b".to_string(), 0.5), ("a".to_string(), 0.5)];
        assert_eq!(rank_select(&t, 1), ids(&["a"]));
        assert_eq!(DEFAULT_K, 30);
    }

    fn cohort(n: usize) -> Vec<CineCase> {
        let spec = CohortSpec { n_subjects: n, frames: 8, height: 32, width: 32, seed: 4, ..CohortSpec::default() };
        generate_cohort(&spec).unwrap()
    }

    #[test]
    fn synthetic_dataset_bookkeeping() {
        let cases = cohort(10);
        let clean: Vec<LabelMap> = cases.iter().map(|c| c.gt_labels.clone().unwrap()).collect();
        let plan = CorruptionPlan::random(&cases, 0.5, 3).unwrap();
        assert_eq!(plan.cases.len(), 5);
        let ds = build_qc_dataset(&cases, &clean, LabelSource::Corruption(&plan)).unwrap();
        assert_eq!((ds.len(), ds.count(QcLabel::Erroneous)), (10, 5));
        ds.validate().unwrap();
        for e in &ds.entries {
            let i = cases.iter().position(|c| c.case_id == e.case_id).unwrap();
            let clean_f = features_of(&cases[i], &clean[i]).unwrap();
            assert_eq!(e.features == clean_f, e.label == QcLabel::Accurate, "{}", e.case_id);
        }
    }

    #[test]
    fn human_dataset_bookkeeping() {
        let cases = cohort(10);
        let segs: Vec<LabelMap> = cases.iter().map(|c| c.gt_labels.clone().unwrap()).collect();
        let text: String = cases
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v = if i < 7 { "good" } else { "erroneous" };
                format!("{{\"case_id\":\"{}\",\"label\":\"{v}\"}}\n", c.case_id)
            })
            .collect();
        let labels = parse_human_labels(&text).unwrap();
        let ds = build_qc_dataset(&cases, &segs, LabelSource::Human(&labels)).unwrap();
        assert_eq!((ds.count(QcLabel::Accurate), ds.count(QcLabel::Erroneous)), (7, 3));
        assert!(ds.entries.iter().all(|e| e.provenance == Provenance::HumanReview));

        let mut missing = labels.clone();
        missing.remove(&cases[0].case_id);
        assert!(matches!(
            build_qc_dataset(&cases, &segs, LabelSource::Human(&missing)),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn dataset_file_round_trip() {
        let cases = cohort(4);
        let clean: Vec<LabelMap> = cases.iter().map(|c| c.gt_labels.clone().unwrap()).collect();
        let plan = CorruptionPlan::random(&cases, 0.5, 1).unwrap();
        let ds = build_qc_dataset(&cases, &clean, LabelSource::Corruption(&plan)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        ds.save(tmp.path()).unwrap();
        let back = QcDataset::load(&tmp.path().join(QC_DATASET_FILE)).unwrap();
        assert_eq!(back, ds);
        let (a, b) = ds.split(0.5, 0);
        assert_eq!(a.len() + b.len(), 4);
        assert_eq!(b.count(QcLabel::Erroneous), 1);
    }
}
