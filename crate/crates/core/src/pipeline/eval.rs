use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::curves::{clinical_from_labels, ClinicalMetrics};
use crate::error::{Error, Result};
use crate::models::{segment, TrainedModel};
use crate::phantom::CineCase;
use crate::stats::{dice, paired_ttest, pooled_dice, MeanSd, TTest};
use crate::volume::{LabelMap, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDice {
    pub case_id: String,
    pub class: String,
    pub dice: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseClinical {
    pub case_id: String,
    /// `None` when the predicted volumes leave EF undefined.
    pub predicted: Option<ClinicalMetrics>,
    pub ground_truth: ClinicalMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDelta {
    pub case_id: String,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub baseline: String,
    pub deltas: Vec<CaseDelta>,
    pub ttest: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    /// One row per case and foreground class, cases in test-set order.
    pub dice: Vec<CaseDice>,
    pub pooled: MeanSd,
    pub clinical: Vec<CaseClinical>,
    pub baseline: Option<BaselineComparison>,
}

impl MetricsReport {
    pub fn case_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.dice {
            if out.last() != Some(&r.case_id) {
                out.push(r.case_id.clone());
            }
        }
        out
    }

    /// Mean foreground Dice of every case, in test-set order.
    pub fn per_case(&self) -> Vec<(String, f64)> {
        let mut acc: Vec<(String, f64, usize)> = Vec::new();
        for r in &self.dice {
            match acc.last_mut() {
                Some((id, s, n)) if *id == r.case_id => {
                    *s += r.dice;
                    *n += 1;
                }
                _ => acc.push((r.case_id.clone(), r.dice, 1)),
            }
        }
        acc.into_iter().map(|(id, s, n)| (id, s / n as f64)).collect()
    }

    pub fn class_means(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &self.dice {
            let e = acc.entry(r.class.clone()).or_default();
            e.0 += r.dice;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// `case_id,class,dice`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id,class,dice\n");
        for r in &self.dice {
            let _ = writeln!(out, "{},{},{}", r.case_id, r.class, r.dice);
        }
        out
    }
}

/// Per-case, per-class Dice over every frame and slice of one case.
pub fn case_dice(pred: &LabelMap, gt: &LabelMap) -> Result<Vec<(u8, f64)>> {
    if pred.dims != gt.dims || pred.task != gt.task {
        return Err(Error::Shape("prediction and ground truth differ in shape or task".into()));
    }
    gt.task.foreground().into_iter().map(|c| Ok((c, dice(&pred.data, &gt.data, c)?))).collect()
}

/// Paired comparison of per-case pooled Dice against a baseline report.
pub fn compare_to(report: &MetricsReport, name: &str, baseline: &MetricsReport) -> Result<BaselineComparison> {
    let ours = report.per_case();
    let theirs = baseline.per_case();
    if ours.iter().map(|x| &x.0).ne(theirs.iter().map(|x| &x.0)) {
        return Err(Error::invalid("baseline", format!("run {name} was evaluated on a different test set")));
    }
    let deltas = ours
        .iter()
        .zip(&theirs)
        .map(|(a, b)| CaseDelta { case_id: a.0.clone(), delta: a.1 - b.1 })
        .collect();
    let x: Vec<f64> = ours.iter().map(|v| v.1).collect();
    let y: Vec<f64> = theirs.iter().map(|v| v.1).collect();
    let ttest = if x.len() >= 2 { paired_ttest(&x, &y)? } else { TTest { t: 0.0, p: 1.0, df: 0 } };
    Ok(BaselineComparison { baseline: name.to_owned(), deltas, ttest })
}

/// Evaluate any predictor on a labelled test cohort.
pub fn evaluate_with(
    predict: impl Fn(&CineCase) -> Result<LabelMap>,
    test: &[CineCase],
    baseline: Option<(&str, &MetricsReport)>,
) -> Result<MetricsReport> {
    let first = test.first().ok_or_else(|| Error::Empty("test cohort".into()))?;
    let task = first.task;
    let mut rows = Vec::new();
    let mut clinical = Vec::new();
    for case in test {
        if case.task != task {
            return Err(Error::invalid("task", "test cohort mixes tasks"));
        }
        let gt = case
            .gt_labels
            .as_ref()
            .ok_or_else(|| Error::NotFound(format!("test case {} has no ground truth", case.case_id)))?;
        let pred = predict(case)?;
        for (c, d) in case_dice(&pred, gt)? {
            rows.push(CaseDice { case_id: case.case_id.clone(), class: task.class_name(c).to_owned(), dice: d });
        }
        if task == Task::Sax {
            let ground_truth = clinical_from_labels(gt, &case.geometry)?;
            let predicted = match clinical_from_labels(&pred, &case.geometry) {
                Ok(m) => Some(m),
                Err(Error::UndefinedEf) => None,
                Err(e) => return Err(e),
            };
            clinical.push(CaseClinical { case_id: case.case_id.clone(), predicted, ground_truth });
        }
    }
    let values: Vec<f64> = rows.iter().map(|r| r.dice).collect();
    let pooled = pooled_dice(&[values])?;
    let mut report = MetricsReport { task, dice: rows, pooled, clinical, baseline: None };
    if let Some((name, b)) = baseline {
        report.baseline = Some(compare_to(&report, name, b)?);
    }
    Ok(report)
}

pub fn evaluate(model: &TrainedModel, test: &[CineCase], baseline: Option<(&str, &MetricsReport)>) -> Result<MetricsReport> {
    evaluate_with(|c| Ok(segment(model, c)?.1), test, baseline)
}
