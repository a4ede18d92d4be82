//! `qcseg` command line. Every verb reads a JSON stage config (`--config`),
//! optionally the application settings (`--app`), and takes `--seed` and
//! `--out`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use qcseg::models::{segment, train_segmenter, SegArchConfig, SegDataset, TrainConfig, TrainedModel};
use qcseg::phantom::{generate_cohort, io, CohortSpec};
use qcseg::pipeline::{
    compare, default_labelled_frames, desk_benchmark, labelled_frames, load_cohort_ref, run_scenario, train_qc_model,
    CohortRef, QcSettings, Scenario, ScenarioConfig,
};
use qcseg::qc::common_task;
use qcseg::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{load_config, read_json, AppConfig};
use crate::review::{serve, ReviewState};
use crate::runs::{load_run, save_comparison, save_run, ArtifactWriter};
use crate::store::LabelStore;

#[derive(Debug, Parser)]
#[command(name = "qcseg", version, about = "Semi-supervised segmentation with curve-based quality control")]
pub struct Cli {
    /// Application settings file.
    #[arg(long, global = true)]
    pub app: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Stage configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom cohort from a cohort spec.
    Generate(Common),
    /// Train a segmenter on the labelled frames of a cohort.
    TrainSeg(Common),
    /// Train the QC classifier and choose its threshold.
    QcTrain(Common),
    /// Run one training scenario end to end.
    RunScenario {
        #[command(flatten)]
        common: Common,
        /// Named preset: one from the settings file or `desk-<scenario>`.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
    },
    /// Summarise saved runs against a reference run.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Run directories (in addition to those in the config).
        runs: Vec<PathBuf>,
        #[arg(long)]
        reference: Option<String>,
    },
    /// Serve cases for review and record verdicts.
    ServeReview {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSegConfig {
    pub labelled: CohortRef,
    #[serde(default)]
    pub frames_per_subject: Option<usize>,
    pub arch: SegArchConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcTrainConfig {
    /// Cohort to corrupt; not needed when `qc.dataset` is set.
    #[serde(default)]
    pub cohort: Option<CohortRef>,
    #[serde(default)]
    pub qc: QcSettings,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub runs: Vec<PathBuf>,
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    /// Cohort directory written by `generate`.
    pub cohort: PathBuf,
    /// Saved run whose segmenter produces the reviewed segmentations;
    /// without it the cohort's ground truth is shown.
    #[serde(default)]
    pub run: Option<PathBuf>,
    /// Label log; defaults to `review_labels.jsonl` in the cohort directory.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

pub const DEFAULT_REFERENCE: &str = "semiqcseg";

fn stage_config<T: serde::de::DeserializeOwned>(common: &Common, verb: &str) -> Result<T> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::invalid("--config", format!("{verb} needs a stage config")))?;
    read_json(path)
}

fn seed(common: &Common, app: &AppConfig, from_config: u64) -> u64 {
    common.seed.or(app.seed).unwrap_or(from_config)
}

fn out_dir(common: &Common, default: PathBuf) -> PathBuf {
    common.out.clone().unwrap_or(default)
}

/// Execute a parsed command line; output lines go to `print`.
pub fn run(cli: Cli, print: &mut dyn FnMut(&str)) -> Result<()> {
    let app = match &cli.app {
        Some(p) => {
            let cfg = load_config(p)?;
            cfg.resolved(p.parent().unwrap_or(Path::new(".")))
        }
        None => AppConfig::default(),
    };
    match cli.command {
        Command::Generate(c) => {
            let mut spec: CohortSpec = stage_config(&c, "generate")?;
            spec.seed = seed(&c, &app, spec.seed);
            let cases = generate_cohort(&spec)?;
            let out = out_dir(&c, app.data_root.join(&spec.id_prefix));
            io::save_cohort(&cases, Some(&spec), &out)?;
            print(&format!("wrote {} cases to {}", cases.len(), out.display()));
        }
        Command::TrainSeg(c) => {
            let mut cfg: TrainSegConfig = stage_config(&c, "train-seg")?;
            cfg.train.seed = seed(&c, &app, cfg.train.seed);
            let cases = load_cohort_ref(&cfg.labelled)?;
            let task = common_task(&cases)?;
            let n = cfg.frames_per_subject.unwrap_or_else(|| default_labelled_frames(task));
            let mut data = SegDataset::default();
            for case in &cases {
                let gt = case
                    .gt_labels
                    .as_ref()
                    .ok_or_else(|| Error::NotFound(format!("case {} has no ground truth", case.case_id)))?;
                for t in labelled_frames(case.dims().frames, case.subject.es_frame, n) {
                    data.push_frame(&case.case_id, &case.images, gt, t)?;
                }
            }
            let model = train_segmenter(&cfg.arch, &data, &cfg.train)?;
            let out = out_dir(&c, app.runs_root.join("train-seg"));
            let mut w = ArtifactWriter::new(&out)?;
            w.write_json("config.json", &cfg)?;
            w.write_model("model", &model)?;
            w.write("loss.csv", loss_csv(&model).as_bytes())?;
            w.finish()?;
            print(&format!("trained on {} planes, checksum {}", data.len(), model.checksum));
        }
        Command::QcTrain(c) => {
            let cfg: QcTrainConfig = stage_config(&c, "qc-train")?;
            let s = seed(&c, &app, cfg.seed);
            let cases = match (&cfg.cohort, &cfg.qc.dataset) {
                (Some(r), _) => load_cohort_ref(r)?,
                (None, Some(_)) => Vec::new(),
                (None, None) => return Err(Error::invalid("cohort", "needed unless qc.dataset is set")),
            };
            let t = train_qc_model(&cfg.qc, &cases, s)?;
            let out = out_dir(&c, app.runs_root.join("qc-train"));
            let mut w = ArtifactWriter::new(&out)?;
            w.write_json("config.json", &cfg)?;
            w.write_json("summary.json", &t.summary)?;
            w.write("roc.csv", t.roc.to_csv().as_bytes())?;
            w.write_model("model", &t.model)?;
            w.finish()?;
            print(&format!(
                "{} train / {} threshold cases ({}): AUC {:.4}, threshold {:.4}, sensitivity {:.4}, specificity {:.4}",
                t.summary.n_train,
                t.summary.n_threshold,
                t.summary.source,
                t.summary.auc,
                t.summary.threshold,
                t.summary.sensitivity,
                t.summary.specificity
            ));
        }
        Command::RunScenario { common: c, preset } => {
            let mut cfg: ScenarioConfig = match preset {
                Some(name) => preset_config(&app, &name)?,
                None => stage_config(&c, "run-scenario")?,
            };
            cfg.seed = seed(&c, &app, cfg.seed);
            let out = run_scenario(&cfg)?;
            let dir = out_dir(&c, app.runs_root.join(format!("{}-{}", cfg.scenario.as_str(), cfg.seed)));
            save_run(&out, &dir)?;
            for l in &out.log {
                print(l);
            }
            print(&format!("saved {} to {}", out.record.run_id, dir.display()));
        }
        Command::Compare { common: c, runs, reference } => {
            let cfg: CompareConfig = match &c.config {
                Some(p) => read_json(p)?,
                None => CompareConfig { runs: Vec::new(), reference: None },
            };
            let reference = reference.or(cfg.reference).unwrap_or_else(|| DEFAULT_REFERENCE.into());
            let dirs: Vec<PathBuf> = cfg.runs.into_iter().chain(runs).collect();
            if dirs.is_empty() {
                return Err(Error::invalid("runs", "no run directories given"));
            }
            let records = dirs.iter().map(|d| load_run(d).map(|r| r.record)).collect::<Result<Vec<_>>>()?;
            let cmp = compare(&records, &reference)?;
            let out = out_dir(&c, app.runs_root.join("compare"));
            save_comparison(&cmp, &out)?;
            for line in cmp.summary_csv().lines() {
                print(line);
            }
        }
        Command::ServeReview { common: c, port } => {
            let cfg: ReviewConfig = stage_config(&c, "serve-review")?;
            let port = port.unwrap_or(app.port);
            AppConfig { port, ..app.clone() }.validate()?;
            let state = review_state(&cfg)?;
            let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
            print(&format!("reviewing {} cases on http://{addr}", state.case_ids().count()));
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(serve(std::sync::Arc::new(state), addr))?;
        }
    }
    Ok(())
}

pub fn preset_config(app: &AppConfig, name: &str) -> Result<ScenarioConfig> {
    if let Some(cfg) = app.presets.get(name) {
        return Ok(cfg.clone());
    }
    match name.strip_prefix("desk-") {
        Some(s) => Ok(desk_benchmark(s.parse::<Scenario>()?)),
        None => Err(Error::NotFound(format!("preset {name}"))),
    }
}

pub fn review_state(cfg: &ReviewConfig) -> Result<ReviewState> {
    let cases = io::load_cohort(&cfg.cohort)?;
    let segs = match &cfg.run {
        Some(dir) => {
            let run = load_run(dir)?;
            Some(segment_all(&run.model, &cases)?)
        }
        None => None,
    };
    let labels = cfg.labels.clone().unwrap_or_else(|| cfg.cohort.join("review_labels.jsonl"));
    ReviewState::new(cases, segs, LabelStore::open(&labels)?)
}

fn segment_all(model: &TrainedModel, cases: &[qcseg::phantom::CineCase]) -> Result<Vec<qcseg::volume::LabelMap>> {
    cases.iter().map(|c| segment(model, c).map(|(_, l)| l)).collect()
}

fn loss_csv(model: &TrainedModel) -> String {
    let mut s = String::from("epoch,train,val\n");
    for (i, e) in model.loss_history.iter().enumerate() {
        let val = e.val.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{i},{},{val}\n", e.train));
    }
    s
}

/// Process exit code for a finished command: 0 success, 1 bad input,
/// 2 runtime failure.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}
