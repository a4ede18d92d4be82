//! Training scenarios, the self-training loop and evaluation.
//!
//! `full` and `half` train on ground truth only. The three self-training
//! scenarios start from the half-data model, segment the unlabelled pool,
//! pick `k` cases (at random, at random with CRF-refined pseudo-labels, or
//! by QC ranking), add every frame of those cases as pseudo-labelled data
//! and retrain from scratch.

mod census;
mod compare;
mod config;
mod eval;
mod run;

pub use census::{stage_counts, Census, CensusPreset, CensusStage};
pub use compare::{clinical_summary, compare, png_bytes, ClinicalSummary, Comparison, DeltaRow, SummaryRow};
pub use config::{default_labelled_frames, desk_benchmark, DESK_HARD_FRACTION, CohortRef, QcSettings, Scenario, ScenarioConfig};
pub use eval::{
    case_dice, compare_to, evaluate, evaluate_with, BaselineComparison, CaseClinical, CaseDelta, CaseDice,
    MetricsReport,
};
pub use run::{
    labelled_frames, load_cohort_ref, run_scenario, spread_frames, train_qc_model, Cohorts, QcSummary, QcTraining,
    RoundRecord, RunOutput, RunRecord, Session,
};
