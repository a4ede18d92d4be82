use qcseg::models::SegArchConfig;
use qcseg::phantom::{generate_cohort, CohortSpec};
use qcseg::pipeline::{
    compare, desk_benchmark, evaluate_with, labelled_frames, run_scenario, spread_frames, CohortRef, Scenario,
    ScenarioConfig, Session,
};
use qcseg::Error;

fn cohort(n: usize, prefix: &str, seed: u64) -> CohortRef {
    CohortRef::Generate(CohortSpec {
        n_subjects: n,
        frames: 6,
        height: 16,
        width: 16,
        id_prefix: prefix.into(),
        seed,
        ..CohortSpec::default()
    })
}

fn tiny(scenario: Scenario) -> ScenarioConfig {
    let mut cfg = desk_benchmark(scenario);
    cfg.labelled = cohort(4, "lab", 1);
    cfg.unlabelled = Some(cohort(4, "pool", 2));
    cfg.test = cohort(3, "test", 3);
    cfg.qc_train = Some(cohort(8, "qc", 4));
    cfg.k = 2;
    cfg.seg_arch = SegArchConfig { depth: 2, base_channels: 4, ..SegArchConfig::unet(4) };
    cfg.seg_train.epochs = 1;
    cfg.seg_train.batch_size = 2;
    cfg.qc.train.epochs = 2;
    cfg.qc.restarts = 1;
    cfg
}

fn invalid_field(r: qcseg::Result<impl Sized>) -> String {
    match r {
        Err(Error::Invalid { field, .. }) => field,
        Err(e) => panic!("expected Invalid, got {e}"),
        Ok(_) => panic!("expected Invalid, got Ok"),
    }
}

#[test]
fn rerun_is_byte_identical() {
    let cfg = tiny(Scenario::Semiqcseg);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.record.metrics.to_csv(), b.record.metrics.to_csv());
    assert_eq!(a.model.checksum, b.model.checksum);
    assert_eq!(a.qc_model.unwrap().checksum, b.qc_model.unwrap().checksum);
    assert_eq!(a.record.reproducible(), b.record.reproducible());

    let other = run_scenario(&ScenarioConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(other.model.checksum, a.model.checksum);
}

#[test]
fn census_counts_pseudo_labelled_frames() {
    let out = run_scenario(&tiny(Scenario::SslRandom)).unwrap();
    let half = out.record.census.stage("half").unwrap();
    let ssl = out.record.census.stage("ssl").unwrap();
    assert_eq!((half.subjects, half.images), (2, 4));
    assert_eq!((ssl.subjects, ssl.images), (4, 4 + 2 * 6));
    assert_eq!(ssl.pseudo_images, 2 * 6);

    let cfg = ScenarioConfig { frames_added_per_case: Some(3), iterations: 2, ..tiny(Scenario::SslRandom) };
    let out = run_scenario(&cfg).unwrap();
    let last = out.record.census.stages.last().unwrap();
    assert_eq!(last.stage, "ssl2");
    assert_eq!(last.pseudo_subjects, 4);
    assert_eq!(last.images - out.record.census.stage("half").unwrap().images, 2 * 2 * 3);
    assert_eq!(last.case_ids.len(), 6);
}

#[test]
fn session_shares_the_half_model() {
    let mut s = Session::new();
    let half = s.run(&tiny(Scenario::Half)).unwrap();
    let ssl = s.run(&tiny(Scenario::SslRandomCrf)).unwrap();
    assert_eq!(ssl.record.rounds[0].model_checksum, half.model.checksum);
    let fresh = run_scenario(&tiny(Scenario::SslRandomCrf)).unwrap();
    assert_eq!(fresh.model.checksum, ssl.model.checksum);
}

#[test]
fn ground_truth_predictor_scores_one() {
    let CohortRef::Generate(spec) = &tiny(Scenario::Half).test else { unreachable!() };
    let cases = generate_cohort(spec).unwrap();
    let report = evaluate_with(|c| Ok(c.gt_labels.clone().unwrap()), &cases, None).unwrap();
    assert_eq!((report.pooled.mean, report.pooled.sd), (1.0, 0.0));
    assert_eq!(report.dice.len(), 3 * 3);
    assert!(report.clinical.iter().all(|c| c.predicted == Some(c.ground_truth)));
}

#[test]
fn compare_against_itself() {
    let mut s = Session::new();
    let half = s.run(&tiny(Scenario::Half)).unwrap().record;
    let full = s.run(&tiny(Scenario::Full)).unwrap().record;
    let c = compare(&[full.clone(), half.clone()], "half").unwrap();
    let me = c.rows.iter().find(|r| r.run == "half").unwrap();
    assert_eq!((me.t_vs_reference, me.p_vs_reference), (Some(0.0), Some(1.0)));
    assert_eq!(c.rows.last().unwrap().run, "ground_truth");
    assert_eq!(c.delta_baseline.as_deref(), Some("half"));
    assert_eq!(c.deltas.len(), 3);
    let csv = c.summary_csv();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("run,dice_mean,dice_sd,t_vs_reference,p_vs_reference,n_clinical"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == header.split(',').count()));
    assert!(matches!(compare(&[half], "semiqcseg"), Err(Error::NotFound(_))));
}

#[test]
fn configuration_errors_name_the_field() {
    let mut cfg = tiny(Scenario::Semiqcseg);
    cfg.qc_train = None;
    assert_eq!(invalid_field(run_scenario(&cfg)), "qc_train");

    let cfg = ScenarioConfig { k: 5, ..tiny(Scenario::SslRandom) };
    assert_eq!(invalid_field(run_scenario(&cfg)), "k");

    let cfg = ScenarioConfig { test: cohort(3, "lab", 1), ..tiny(Scenario::Half) };
    assert_eq!(invalid_field(run_scenario(&cfg)), "test");

    let cfg = ScenarioConfig { seg_arch: SegArchConfig::unet(2), ..tiny(Scenario::Half) };
    assert_eq!(invalid_field(run_scenario(&cfg)), "seg_arch.n_classes");

    let cfg = ScenarioConfig { iterations: 2, ..tiny(Scenario::Half) };
    assert_eq!(invalid_field(run_scenario(&cfg)), "iterations");

    let mut cfg = tiny(Scenario::Semiqcseg);
    cfg.qc.youden_weight = 0.4;
    assert_eq!(invalid_field(run_scenario(&cfg)), "qc.youden_weight");

    let cfg = ScenarioConfig { labelled: CohortRef::Path("/nonexistent/cohort".into()), ..tiny(Scenario::Half) };
    assert!(run_scenario(&cfg).is_err());
}

#[test]
fn frame_choices() {
    assert_eq!(labelled_frames(20, 8, 2), vec![0, 8]);
    assert_eq!(labelled_frames(20, 8, 3), vec![0, 6, 8]);
    assert_eq!(labelled_frames(2, 1, 5), vec![0, 1]);
    assert_eq!(spread_frames(20, 4), vec![0, 5, 10, 15]);
    assert_eq!(spread_frames(6, 10), (0..6).collect::<Vec<_>>());
}
