use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::census::{stage_counts, Census, CensusStage};
use super::config::{CohortRef, QcSettings, Scenario, ScenarioConfig};
use super::eval::{evaluate, MetricsReport};
use crate::crf::refine_case;
use crate::error::{Error, Result};
use crate::models::{
    qc_score, seg_dataset_loss, segment, train_qc_classifier_restarts, train_segmenter_with_validation, EpochLoss,
    SegDataset, TrainConfig, TrainedModel,
};
use crate::phantom::{generate_cohort, io, CineCase};
use crate::qc::{
    build_qc_dataset, features_of, rank_select, roc, youden_threshold, CorruptionPlan, LabelSource, QcDataset, QcLabel,
    RocCurve,
};
use crate::rng;
use crate::volume::LabelMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub stage: String,
    pub seed: u64,
    pub loss_history: Vec<EpochLoss>,
    pub val_loss: Option<f64>,
    /// Cases pseudo-labelled in this round.
    pub selected: Vec<String>,
    pub model_checksum: String,
    /// Rejected by the validation-loss early stop.
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcSummary {
    pub source: String,
    pub n_train: usize,
    pub n_threshold: usize,
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
    pub model_checksum: String,
    /// prob_accurate of every pool case scored in the last round.
    pub pool_scores: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ScenarioConfig,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub census: Census,
    pub qc: Option<QcSummary>,
    pub model_checksum: String,
    pub metrics: MetricsReport,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    /// The record with run-time noise removed.
    pub fn reproducible(&self) -> RunRecord {
        RunRecord { wall_clock_seconds: 0.0, ..self.clone() }
    }
}

pub struct RunOutput {
    pub record: RunRecord,
    pub model: TrainedModel,
    pub qc_model: Option<TrainedModel>,
    pub log: Vec<String>,
}

pub fn load_cohort_ref(r: &CohortRef) -> Result<Vec<CineCase>> {
    match r {
        CohortRef::Path(p) => io::load_cohort(p),
        CohortRef::Generate(spec) => generate_cohort(spec),
    }
}

/// `n` frames per subject: ED and ES first, then evenly spaced frames.
pub fn labelled_frames(frames: usize, es: usize, n: usize) -> Vec<usize> {
    let n = n.max(1);
    let mut out: Vec<usize> = Vec::new();
    let candidates = [0, es]
        .into_iter()
        .chain((0..n).map(|i| i * frames / n))
        .chain(0..frames);
    for f in candidates {
        if out.len() == n.min(frames) {
            break;
        }
        if f < frames && !out.contains(&f) {
            out.push(f);
        }
    }
    out.sort_unstable();
    out
}

/// `n` evenly spaced frames (all frames when `n >= frames`).
pub fn spread_frames(frames: usize, n: usize) -> Vec<usize> {
    if n >= frames {
        return (0..frames).collect();
    }
    (0..n).map(|i| i * frames / n).collect()
}

fn push_frames(d: &mut SegDataset, case: &CineCase, labels: &LabelMap, frames: &[usize]) -> Result<()> {
    for &t in frames {
        d.push_frame(&case.case_id, &case.images, labels, t)?;
    }
    Ok(())
}

fn gt(case: &CineCase) -> Result<&LabelMap> {
    case.gt_labels
        .as_ref()
        .ok_or_else(|| Error::NotFound(format!("labelled case {} has no ground truth", case.case_id)))
}

/// Loaded cohorts for one configuration.
pub struct Cohorts {
    pub labelled: Vec<CineCase>,
    pub unlabelled: Vec<CineCase>,
    pub test: Vec<CineCase>,
    pub qc_train: Vec<CineCase>,
}

impl Cohorts {
    pub fn load(cfg: &ScenarioConfig) -> Result<Self> {
        let opt = |r: &Option<CohortRef>| r.as_ref().map(load_cohort_ref).transpose().map(Option::unwrap_or_default);
        let c = Cohorts {
            labelled: load_cohort_ref(&cfg.labelled)?,
            unlabelled: opt(&cfg.unlabelled)?,
            test: load_cohort_ref(&cfg.test)?,
            qc_train: opt(&cfg.qc_train)?,
        };
        c.check(cfg)?;
        Ok(c)
    }

    pub fn check(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.labelled.len() < 2 {
            return Err(Error::invalid("labelled", "needs at least 2 subjects"));
        }
        if self.test.is_empty() {
            return Err(Error::Empty("test cohort".into()));
        }
        for (name, set) in [
            ("labelled", &self.labelled),
            ("unlabelled", &self.unlabelled),
            ("test", &self.test),
            ("qc_train", &self.qc_train),
        ] {
            if let Some(c) = set.iter().find(|c| c.task != cfg.task) {
                return Err(Error::invalid(name, format!("case {} is {}, scenario is {}", c.case_id, c.task.as_str(), cfg.task.as_str())));
            }
            let ids: BTreeSet<&str> = set.iter().map(|c| c.case_id.as_str()).collect();
            if ids.len() != set.len() {
                return Err(Error::invalid(name, "duplicate case ids"));
            }
        }
        let ids = |v: &[CineCase]| v.iter().map(|c| c.case_id.clone()).collect::<BTreeSet<_>>();
        let (l, u, t, q) = (ids(&self.labelled), ids(&self.unlabelled), ids(&self.test), ids(&self.qc_train));
        for (a, an, b, bn) in [
            (&l, "labelled", &u, "unlabelled"),
            (&l, "labelled", &t, "test"),
            (&u, "unlabelled", &t, "test"),
            (&q, "qc_train", &l, "labelled"),
            (&q, "qc_train", &u, "unlabelled"),
            (&q, "qc_train", &t, "test"),
        ] {
            if let Some(id) = a.intersection(b).next() {
                return Err(Error::invalid(bn, format!("case {id} appears in both {an} and {bn}")));
            }
        }
        if cfg.scenario.is_ssl() && self.unlabelled.len() < cfg.k * cfg.iterations {
            return Err(Error::invalid(
                "k",
                format!("unlabelled pool holds {} cases, {} rounds of {} requested", self.unlabelled.len(), cfg.iterations, cfg.k),
            ));
        }
        if cfg.scenario == Scenario::Semiqcseg && cfg.qc.dataset.is_none() && self.qc_train.len() < 4 {
            return Err(Error::invalid("qc_train", "needs at least 4 cases"));
        }
        for c in self.labelled.iter().chain(&self.test) {
            cfg.seg_arch.check_input(c.dims().height, c.dims().width)?;
        }
        Ok(())
    }
}

/// Memoises the models that several scenarios share (the half-data
/// segmenter and the QC classifier), keyed by everything they depend on.
pub struct QcTraining {
    pub model: TrainedModel,
    pub summary: QcSummary,
    /// ROC on the threshold split.
    pub roc: RocCurve,
}

/// Build the QC set (synthetic corruptions of `cases`, or the human-reviewed
/// file in `q.dataset`), train on one split and pick the weighted-Youden
/// threshold on the other.
pub fn train_qc_model(q: &QcSettings, cases: &[CineCase], seed: u64) -> Result<QcTraining> {
    let (dataset, source) = match &q.dataset {
        Some(path) => (QcDataset::load(path)?, "human_review"),
        None => {
            let clean: Vec<LabelMap> = cases.iter().map(|c| gt(c).cloned()).collect::<Result<_>>()?;
            let plan = CorruptionPlan::random(cases, q.corruption_fraction, rng::derive(seed, rng::stream("qc-plan")))?;
            (build_qc_dataset(cases, &clean, LabelSource::Corruption(&plan))?, "synthetic_corruption")
        }
    };
    dataset.validate()?;
    let (train, hold) = dataset.split(q.threshold_fraction, rng::derive(seed, rng::stream("qc-threshold-split")));
    train.validate()?;
    hold.validate()?;
    let tc = TrainConfig { seed: rng::derive(seed ^ q.train.seed, rng::stream("qc-train")), ..q.train.clone() };
    let model = train_qc_classifier_restarts(&train.examples(), &q.arch, &tc, q.restarts)?;
    let scores: Vec<f64> = hold.entries.iter().map(|e| qc_score(&model, &e.features)).collect::<Result<_>>()?;
    let erroneous: Vec<bool> = hold.entries.iter().map(|e| e.label == QcLabel::Erroneous).collect();
    let curve = roc(&scores, &erroneous)?;
    let op = youden_threshold(&curve, q.youden_weight)?;
    let summary = QcSummary {
        source: source.into(),
        n_train: train.len(),
        n_threshold: hold.len(),
        threshold: op.threshold,
        sensitivity: op.sensitivity,
        specificity: op.specificity,
        auc: curve.auc,
        model_checksum: model.checksum.clone(),
        pool_scores: Vec::new(),
    };
    Ok(QcTraining { model, summary, roc: curve })
}

#[derive(Default)]
pub struct Session {
    seg: BTreeMap<String, TrainedModel>,
    qc: BTreeMap<String, (TrainedModel, QcSummary)>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    fn train_seg(
        &mut self,
        cfg: &ScenarioConfig,
        train: &SegDataset,
        val: Option<&SegDataset>,
        tc: &TrainConfig,
        ids: &[String],
    ) -> Result<TrainedModel> {
        let key = serde_json::to_string(&(&cfg.seg_arch, tc, ids, train.len(), val.map(|v| v.len())))?;
        if let Some(m) = self.seg.get(&key) {
            return Ok(m.clone());
        }
        let m = train_segmenter_with_validation(&cfg.seg_arch, train, val, tc)?;
        self.seg.insert(key, m.clone());
        Ok(m)
    }

    fn train_qc(&mut self, cfg: &ScenarioConfig, cohorts: &Cohorts) -> Result<(TrainedModel, QcSummary)> {
        let ids: Vec<&str> = cohorts.qc_train.iter().map(|c| c.case_id.as_str()).collect();
        let key = serde_json::to_string(&(&cfg.qc, cfg.seed, ids))?;
        if let Some(m) = self.qc.get(&key) {
            return Ok(m.clone());
        }
        let t = train_qc_model(&cfg.qc, &cohorts.qc_train, cfg.seed)?;
        self.qc.insert(key, (t.model.clone(), t.summary.clone()));
        Ok((t.model, t.summary))
    }

    pub fn run(&mut self, cfg: &ScenarioConfig) -> Result<RunOutput> {
        cfg.validate()?;
        let cohorts = Cohorts::load(cfg)?;
        self.run_with(cfg, &cohorts)
    }

    pub fn run_with(&mut self, cfg: &ScenarioConfig, cohorts: &Cohorts) -> Result<RunOutput> {
        cfg.validate()?;
        cohorts.check(cfg)?;
        let start = Instant::now();
        let mut log = Vec::new();
        let n_lab = cfg.labelled_frames();

        let mut order: Vec<usize> = (0..cohorts.labelled.len()).collect();
        order.shuffle(&mut rng::named(cfg.seed, "half-split"));
        let half = cohorts.labelled.len() / 2;
        let (train_idx, held_idx): (Vec<usize>, Vec<usize>) = match cfg.scenario {
            Scenario::Full => (order.clone(), Vec::new()),
            _ => (order[..half].to_vec(), order[half..].to_vec()),
        };
        let frames_of = |c: &CineCase| labelled_frames(c.dims().frames, c.subject.es_frame, n_lab);

        let mut base = SegDataset::default();
        let mut base_ids = Vec::new();
        for &i in &train_idx {
            let c = &cohorts.labelled[i];
            push_frames(&mut base, c, gt(c)?, &frames_of(c))?;
            base_ids.push(c.case_id.clone());
        }
        let val = if cfg.early_stop_on_val_loss && !held_idx.is_empty() {
            let mut v = SegDataset::default();
            for &i in &held_idx {
                let c = &cohorts.labelled[i];
                push_frames(&mut v, c, gt(c)?, &frames_of(c))?;
            }
            Some(v)
        } else {
            None
        };

        let round_seed = |r: usize| rng::derive(rng::derive(cfg.seed, cfg.seg_train.seed), r as u64);
        let base_stage = if cfg.scenario == Scenario::Full { "full" } else { "half" };
        let tc = TrainConfig { seed: round_seed(0), validation_fraction: 0.0, ..cfg.seg_train.clone() };
        let mut model = self.train_seg(cfg, &base, val.as_ref(), &tc, &base_ids)?;
        let mut val_loss = val.as_ref().map(|v| seg_dataset_loss(&model, v)).transpose()?;
        log.push(format!(
            "{base_stage}: {} subjects, {} images, final train loss {:.5}",
            base_ids.len(),
            base.len() / cohorts.labelled[0].dims().slices,
            model.loss_history.last().map_or(f64::NAN, |e| e.train)
        ));

        let mut stage = stage_counts(base_stage, base_ids.len(), n_lab, 0, 0);
        stage.case_ids = sorted(&base_ids);
        let mut census = Census { stages: vec![stage] };
        let mut rounds = vec![RoundRecord {
            stage: base_stage.into(),
            seed: tc.seed,
            loss_history: model.loss_history.clone(),
            val_loss,
            selected: Vec::new(),
            model_checksum: model.checksum.clone(),
            rejected: false,
        }];

        let mut qc_model = None;
        let mut qc_summary = None;
        if cfg.scenario == Scenario::Semiqcseg {
            let (m, s) = self.train_qc(cfg, cohorts)?;
            log.push(format!(
                "qc: {} train / {} threshold cases, AUC {:.4}, threshold {:.4}, Se {:.4}, Sp {:.4}",
                s.n_train, s.n_threshold, s.auc, s.threshold, s.sensitivity, s.specificity
            ));
            qc_model = Some(m);
            qc_summary = Some(s);
        }

        if cfg.scenario.is_ssl() {
            let mut dataset = base.clone();
            let mut remaining: Vec<&CineCase> = cohorts.unlabelled.iter().collect();
            let mut pseudo_ids: Vec<String> = Vec::new();
            let mut pseudo_images = 0;
            for round in 1..=cfg.iterations {
                let mut preds = Vec::with_capacity(remaining.len());
                for c in &remaining {
                    let (probs, labels) = segment(&model, c)?;
                    preds.push((probs, labels));
                }
                let selected: Vec<usize> = match cfg.scenario {
                    Scenario::Semiqcseg => {
                        let qm = qc_model.as_ref().expect("trained above");
                        let mut scores = Vec::with_capacity(remaining.len());
                        for (c, (_, labels)) in remaining.iter().zip(&preds) {
                            scores.push((c.case_id.clone(), qc_score(qm, &features_of(c, labels)?)?));
                        }
                        let pick = rank_select(&scores, cfg.k);
                        if let Some(s) = qc_summary.as_mut() {
                            s.pool_scores = scores;
                        }
                        pick.iter()
                            .map(|id| remaining.iter().position(|c| &c.case_id == id).expect("scored case"))
                            .collect()
                    }
                    _ => {
                        let mut idx: Vec<usize> = (0..remaining.len()).collect();
                        idx.sort_by(|&a, &b| remaining[a].case_id.cmp(&remaining[b].case_id));
                        idx.shuffle(&mut rng::rng(cfg.seed, rng::stream("ssl-random") ^ round as u64));
                        idx.truncate(cfg.k);
                        idx
                    }
                };
                let mut candidate = dataset.clone();
                let mut chosen_ids = Vec::new();
                let mut added = 0;
                for &i in &selected {
                    let c = remaining[i];
                    let (probs, labels) = &preds[i];
                    let labels = if cfg.scenario == Scenario::SslRandomCrf {
                        refine_case(probs, &c.images, c.task, &cfg.crf)?
                    } else {
                        labels.clone()
                    };
                    let frames = spread_frames(c.dims().frames, cfg.frames_added_per_case.unwrap_or(c.dims().frames));
                    added += frames.len();
                    push_frames(&mut candidate, c, &labels, &frames)?;
                    chosen_ids.push(c.case_id.clone());
                }
                let tc = TrainConfig { seed: round_seed(round), validation_fraction: 0.0, ..cfg.seg_train.clone() };
                let next = train_segmenter_with_validation(&cfg.seg_arch, &candidate, val.as_ref(), &tc)?;
                let next_val = val.as_ref().map(|v| seg_dataset_loss(&next, v)).transpose()?;
                let rejected = cfg.early_stop_on_val_loss
                    && round > 1
                    && matches!((next_val, val_loss), (Some(a), Some(b)) if a > b);
                let stage_name = if round == 1 { "ssl".to_string() } else { format!("ssl{round}") };
                log.push(format!(
                    "{stage_name}: selected {} ({} images), final train loss {:.5}{}",
                    chosen_ids.join(" "),
                    added,
                    next.loss_history.last().map_or(f64::NAN, |e| e.train),
                    if rejected { ", rejected by validation-loss early stop" } else { "" }
                ));
                rounds.push(RoundRecord {
                    stage: stage_name.clone(),
                    seed: tc.seed,
                    loss_history: next.loss_history.clone(),
                    val_loss: next_val,
                    selected: chosen_ids.clone(),
                    model_checksum: next.checksum.clone(),
                    rejected,
                });
                if rejected {
                    break;
                }
                model = next;
                val_loss = next_val;
                dataset = candidate;
                pseudo_images += added;
                pseudo_ids.extend(chosen_ids);
                let mut keep: Vec<&CineCase> = Vec::new();
                for c in remaining {
                    if !pseudo_ids.contains(&c.case_id) {
                        keep.push(c);
                    }
                }
                remaining = keep;
                let mut st = CensusStage {
                    stage: stage_name,
                    subjects: base_ids.len() + pseudo_ids.len(),
                    images: base_ids.len() * n_lab + pseudo_images,
                    labelled_subjects: base_ids.len(),
                    labelled_images: base_ids.len() * n_lab,
                    pseudo_subjects: pseudo_ids.len(),
                    pseudo_images,
                    case_ids: Vec::new(),
                };
                st.case_ids = sorted(&base_ids.iter().chain(&pseudo_ids).cloned().collect::<Vec<_>>());
                census.stages.push(st);
            }
        }

        let metrics = evaluate(&model, &cohorts.test, None)?;
        log.push(format!("test: pooled Dice {:.5} (sd {:.5})", metrics.pooled.mean, metrics.pooled.sd));
        let record = RunRecord {
            run_id: cfg.scenario.as_str().into(),
            config: cfg.clone(),
            seed: cfg.seed,
            rounds,
            census,
            qc: qc_summary,
            model_checksum: model.checksum.clone(),
            metrics,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        Ok(RunOutput { record, model, qc_model, log })
    }
}

fn sorted(ids: &[String]) -> Vec<String> {
    let mut v = ids.to_vec();
    v.sort();
    v
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Session::new().run(cfg)
}
