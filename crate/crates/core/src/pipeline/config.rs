use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::crf::CrfParams;
use crate::error::{Error, Result};
use crate::models::{LossKind, QcArchConfig, SegArchConfig, TrainConfig};
use crate::phantom::CohortSpec;
use crate::qc::{DEFAULT_K, DEFAULT_YOUDEN_WEIGHT};
use crate::volume::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Full,
    Half,
    SslRandom,
    SslRandomCrf,
    Semiqcseg,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::Full, Scenario::Half, Scenario::SslRandom, Scenario::SslRandomCrf, Scenario::Semiqcseg];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Full => "full",
            Scenario::Half => "half",
            Scenario::SslRandom => "ssl_random",
            Scenario::SslRandomCrf => "ssl_random_crf",
            Scenario::Semiqcseg => "semiqcseg",
        }
    }

    pub fn is_ssl(self) -> bool {
        matches!(self, Scenario::SslRandom | Scenario::SslRandomCrf | Scenario::Semiqcseg)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid("scenario", format!("unknown scenario `{s}`")))
    }
}

/// A cohort on disk, or a spec to generate it from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CohortRef {
    Path(PathBuf),
    Generate(CohortSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcSettings {
    pub arch: QcArchConfig,
    pub train: TrainConfig,
    /// Independent initialisations tried; the lowest training loss wins.
    pub restarts: usize,
    /// Share of QC training cases given a synthetic corruption.
    pub corruption_fraction: f64,
    /// Held-out share of the QC set used to pick the operating threshold.
    pub threshold_fraction: f64,
    pub youden_weight: f64,
    /// Human-reviewed QC dataset (JSON lines); replaces the synthetic plan.
    pub dataset: Option<PathBuf>,
}

impl Default for QcSettings {
    fn default() -> Self {
        Self {
            arch: QcArchConfig::new(2),
            train: TrainConfig {
                epochs: 200,
                batch_size: 8,
                learning_rate: 3e-3,
                loss: LossKind::Bce,
                grad_clip: Some(1.0),
                ..TrainConfig::default()
            },
            restarts: 3,
            corruption_fraction: 0.5,
            threshold_fraction: 0.3,
            youden_weight: DEFAULT_YOUDEN_WEIGHT,
            dataset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub task: Task,
    pub labelled: CohortRef,
    pub unlabelled: Option<CohortRef>,
    pub test: CohortRef,
    pub qc_train: Option<CohortRef>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Defaults to 3 (aorta) or 2 (short axis).
    #[serde(default)]
    pub labelled_frames_per_subject: Option<usize>,
    /// Pseudo-labelled frames per selected case; defaults to every frame.
    #[serde(default)]
    pub frames_added_per_case: Option<usize>,
    pub seg_arch: SegArchConfig,
    pub seg_train: TrainConfig,
    #[serde(default)]
    pub qc: QcSettings,
    #[serde(default)]
    pub crf: CrfParams,
    #[serde(default = "one")]
    pub iterations: usize,
    #[serde(default)]
    pub early_stop_on_val_loss: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn one() -> usize {
    1
}

pub fn default_labelled_frames(task: Task) -> usize {
    match task {
        Task::Aorta => 3,
        Task::Sax => 2,
    }
}

impl ScenarioConfig {
    pub fn labelled_frames(&self) -> usize {
        self.labelled_frames_per_subject.unwrap_or_else(|| default_labelled_frames(self.task))
    }

    /// Checks that need no cohort data.
    pub fn validate(&self) -> Result<()> {
        self.seg_arch.validate()?;
        self.seg_train.validate()?;
        if self.seg_arch.n_classes != self.task.n_classes() {
            return Err(Error::invalid(
                "seg_arch.n_classes",
                format!("{} needs {} classes", self.task.as_str(), self.task.n_classes()),
            ));
        }
        if self.labelled_frames() == 0 {
            return Err(Error::invalid("labelled_frames_per_subject", "must be at least 1"));
        }
        if self.frames_added_per_case == Some(0) {
            return Err(Error::invalid("frames_added_per_case", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if self.scenario.is_ssl() {
            if self.unlabelled.is_none() {
                return Err(Error::invalid("unlabelled", format!("{} needs an unlabelled pool", self.scenario.as_str())));
            }
            if self.k == 0 {
                return Err(Error::invalid("k", "must be at least 1 for self-training scenarios"));
            }
        } else if self.iterations != 1 {
            return Err(Error::invalid("iterations", "only self-training scenarios iterate"));
        }
        if self.scenario == Scenario::Semiqcseg {
            if self.qc_train.is_none() {
                return Err(Error::invalid("qc_train", "semiqcseg needs a QC training cohort"));
            }
            let q = &self.qc;
            q.arch.validate()?;
            q.train.validate()?;
            if q.restarts == 0 {
                return Err(Error::invalid("qc.restarts", "must be at least 1"));
            }
            if !(0.0..1.0).contains(&q.threshold_fraction) || q.threshold_fraction == 0.0 {
                return Err(Error::invalid("qc.threshold_fraction", "must lie in (0, 1)"));
            }
            if !(0.0..1.0).contains(&q.corruption_fraction) || q.corruption_fraction == 0.0 {
                return Err(Error::invalid("qc.corruption_fraction", "must lie in (0, 1)"));
            }
            if !(0.5..1.0).contains(&q.youden_weight) {
                return Err(Error::invalid("qc.youden_weight", "must lie in [0.5, 1)"));
            }
            if q.arch.input_dim != self.task.qc_structures().len() {
                return Err(Error::invalid(
                    "qc.arch.input_dim",
                    format!("{} QC curves per case", self.task.qc_structures().len()),
                ));
            }
        }
        if self.scenario == Scenario::SslRandomCrf {
            self.crf.validate()?;
        }
        Ok(())
    }
}

/// Seeded desk-scale benchmark: 40 labelled, 30 unlabelled and 20 test
/// short-axis subjects (T = 20, one slice, 64x64), a disjoint 240-case QC
/// cohort and K = 8.
pub fn desk_benchmark(scenario: Scenario) -> ScenarioConfig {
    let cohort = |n: usize, prefix: &str, seed: u64| {
        CohortRef::Generate(CohortSpec {
            n_subjects: n,
            hard_fraction: DESK_HARD_FRACTION,
            id_prefix: prefix.into(),
            seed,
            ..CohortSpec::default()
        })
    };
    ScenarioConfig {
        scenario,
        task: Task::Sax,
        labelled: cohort(40, "lab", 101),
        unlabelled: Some(cohort(30, "pool", 102)),
        test: cohort(20, "test", 103),
        qc_train: Some(cohort(240, "qc", 104)),
        k: 8,
        labelled_frames_per_subject: None,
        frames_added_per_case: None,
        seg_arch: SegArchConfig { depth: 3, base_channels: 8, ..SegArchConfig::unet(4) },
        seg_train: TrainConfig { epochs: 30, batch_size: 4, learning_rate: 3e-3, ..TrainConfig::default() },
        qc: QcSettings::default(),
        crf: CrfParams::default(),
        iterations: 1,
        early_stop_on_val_loss: false,
        seed: 7,
    }
}

/// Share of low-contrast, heavily noisy subjects in every desk cohort.
pub const DESK_HARD_FRACTION: f64 = 0.3;
