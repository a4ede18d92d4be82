//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

mod support;

use std::time::Instant;

use rand::Rng as _;
use qcseg::crf::{refine, refine_trace, CrfParams};
use qcseg::curves::{clinical_from_labels, structure_series};
use qcseg::models::{
    qc_loss, qc_score, seg_loss, ParamSet, QcArchConfig, QcExample, QcNet, SegArch, SegArchConfig, SegNet, SegSample,
    Tensor,
};
use qcseg::models::autograd::ParamId;
use qcseg::phantom::{generate_cohort, CohortSpec};
use qcseg::pipeline::{
    desk_benchmark, train_qc_model, CensusPreset, CohortRef, QcSettings, RunOutput, Scenario, ScenarioConfig, Session,
};
use qcseg::qc::{
    build_qc_dataset, operating_point, rank_select, roc, youden_threshold, CorruptionPlan, LabelSource, QcLabel,
};
use qcseg::rng;
use qcseg::stats::paired_ttest;
use qcseg::volume::{argmax_plane, Dims, Geometry, LabelMap, Task};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: qcseg::Error) -> String {
    e.to_string()
}

// ------------------------------------------------------------ benchmark

struct Bench {
    half: RunOutput,
    ssl_random: RunOutput,
    semiqcseg: RunOutput,
    seconds: f64,
}

fn run_bench() -> Result<Bench, String> {
    let start = Instant::now();
    let mut session = Session::new();
    let mut run = |s: Scenario| session.run(&desk_benchmark(s)).map_err(err);
    let half = run(Scenario::Half)?;
    let ssl_random = run(Scenario::SslRandom)?;
    let semiqcseg = run(Scenario::Semiqcseg)?;
    Ok(Bench { half, ssl_random, semiqcseg, seconds: start.elapsed().as_secs_f64() })
}

fn per_case(run: &RunOutput) -> Vec<f64> {
    run.record.metrics.per_case().into_iter().map(|(_, d)| d).collect()
}

fn scenario_ordering(b: &Bench) -> Outcome {
    let pooled = |r: &RunOutput| r.record.metrics.pooled.mean;
    let (h, r, q) = (pooled(&b.half), pooled(&b.ssl_random), pooled(&b.semiqcseg));
    let t = paired_ttest(&per_case(&b.semiqcseg), &per_case(&b.half)).map_err(err)?;
    check(
        q > h && t.p < 0.05 && q >= r && b.seconds <= 1800.0,
        format!("semiqcseg {q:.4}, ssl_random {r:.4}, half {h:.4}; p vs half {:.2e}; {:.0}s", t.p, b.seconds),
    )
}

fn census_arithmetic(b: &Bench) -> Outcome {
    let c = CensusPreset::REFERENCE_SAX.census().map_err(err)?;
    let rows: Vec<(usize, usize)> = c.stages.iter().map(|s| (s.subjects, s.images)).collect();
    let reference_ok = rows == [(500, 1000), (250, 500), (280, 2000)];

    let mut desk = Vec::new();
    for run in [&b.ssl_random, &b.semiqcseg] {
        let cfg = &run.record.config;
        let half = run.record.census.stage("half").ok_or("no half stage")?;
        let last = run.record.census.stages.last().ok_or("empty census")?;
        let frames = match cfg.unlabelled.as_ref() {
            Some(CohortRef::Generate(s)) => s.frames,
            _ => return Err("desk pool is not generated".into()),
        };
        let per_case = cfg.frames_added_per_case.unwrap_or(frames);
        let added = last.images - half.images;
        desk.push((cfg.k * per_case, added, last.pseudo_images));
    }
    let desk_ok = desk.iter().all(|&(want, added, pseudo)| want == added && want == pseudo);
    check(reference_ok && desk_ok, format!("reference rows {rows:?}; desk (K x frames, added, pseudo) {desk:?}"))
}

fn tiny_cohort(n: usize, prefix: &str, seed: u64) -> CohortRef {
    CohortRef::Generate(CohortSpec {
        n_subjects: n,
        frames: 8,
        height: 32,
        width: 32,
        hard_fraction: 0.3,
        id_prefix: prefix.into(),
        seed,
        ..CohortSpec::default()
    })
}

fn reduced(scenario: Scenario) -> ScenarioConfig {
    let mut cfg = desk_benchmark(scenario);
    cfg.labelled = tiny_cohort(8, "lab", 201);
    cfg.unlabelled = Some(tiny_cohort(6, "pool", 202));
    cfg.test = tiny_cohort(4, "test", 203);
    cfg.qc_train = Some(tiny_cohort(24, "qc", 204));
    cfg.k = 2;
    cfg.seg_arch = SegArchConfig { depth: 2, base_channels: 4, ..SegArchConfig::unet(4) };
    cfg.seg_train.epochs = 3;
    cfg.qc.train.epochs = 5;
    cfg.qc.restarts = 1;
    cfg.iterations = 2;
    cfg.seed = 11;
    cfg
}

fn determinism(b: &Bench) -> Outcome {
    let again = Session::new().run(&desk_benchmark(Scenario::Half)).map_err(err)?;
    let half_same = again.record.metrics.to_csv() == b.half.record.metrics.to_csv()
        && again.model.checksum == b.half.model.checksum;
    let cfg = reduced(Scenario::Semiqcseg);
    let x = Session::new().run(&cfg).map_err(err)?;
    let y = Session::new().run(&cfg).map_err(err)?;
    let qc = |o: &RunOutput| o.qc_model.as_ref().map(|m| m.checksum.clone());
    let ssl_same = x.record.metrics.to_csv() == y.record.metrics.to_csv()
        && x.model.checksum == y.model.checksum
        && qc(&x) == qc(&y)
        && x.record.reproducible() == y.record.reproducible();
    check(
        half_same && ssl_same,
        format!("desk half re-run identical: {half_same}; reduced semiqcseg x2 identical: {ssl_same}"),
    )
}

// ------------------------------------------------------ QC operating point

fn qc_operating_point() -> Outcome {
    let start = Instant::now();
    let desk = desk_benchmark(Scenario::Semiqcseg);
    let Some(CohortRef::Generate(spec)) = &desk.qc_train else { return Err("desk QC cohort is not generated".into()) };
    let train_cases = generate_cohort(spec).map_err(err)?;
    let trained = train_qc_model(&QcSettings::default(), &train_cases, desk.seed).map_err(err)?;

    let held_spec = CohortSpec { n_subjects: 200, id_prefix: "qcheld".into(), seed: 105, ..spec.clone() };
    let held = generate_cohort(&held_spec).map_err(err)?;
    let clean: Vec<LabelMap> = held.iter().map(|c| c.gt_labels.clone().expect("phantom truth")).collect();
    let plan = CorruptionPlan::random(&held, 0.5, 106).map_err(err)?;
    let set = build_qc_dataset(&held, &clean, LabelSource::Corruption(&plan)).map_err(err)?;
    let scores: Vec<f64> =
        set.entries.iter().map(|e| qc_score(&trained.model, &e.features)).collect::<Result<_, _>>().map_err(err)?;
    let erroneous: Vec<bool> = set.entries.iter().map(|e| e.label == QcLabel::Erroneous).collect();
    let (se, sp) = operating_point(&scores, &erroneous, trained.summary.threshold);
    let seconds = start.elapsed().as_secs_f64();
    check(
        set.len() >= 200 && set.count(QcLabel::Erroneous) * 2 == set.len() && se >= 0.95 && seconds < 300.0,
        format!(
            "held-out {} cases ({} erroneous): Se {se:.3}, Sp {sp:.3} at tau {:.4}; {seconds:.0}s",
            set.len(),
            set.count(QcLabel::Erroneous),
            trained.summary.threshold
        ),
    )
}

// ---------------------------------------------------------- exact oracles

fn random_label_map(r: &mut rng::Rng) -> (LabelMap, Geometry) {
    let task = if r.random_bool(0.5) { Task::Sax } else { Task::Aorta };
    let dims = Dims {
        frames: r.random_range(1..6),
        slices: r.random_range(1..4),
        height: r.random_range(1..12),
        width: r.random_range(1..12),
    };
    let nc = task.n_classes() as u8;
    let data = (0..dims.len()).map(|_| r.random_range(0..nc)).collect();
    let geom = Geometry {
        pixel_spacing: [r.random_range(0.5..3.0), r.random_range(0.5..3.0)],
        slice_thickness: r.random_range(2.0..12.0),
    };
    (LabelMap { task, dims, data }, geom)
}

fn random_scored_set(r: &mut rng::Rng) -> (Vec<f64>, Vec<bool>) {
    loop {
        let n = r.random_range(2..40);
        // a coarse grid forces ties
        let levels = r.random_range(2..12) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * levels).floor() / levels).collect();
        let erroneous: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        if erroneous.iter().any(|&e| e) && erroneous.iter().any(|&e| !e) {
            return (scores, erroneous);
        }
    }
}

fn exact_oracles() -> Outcome {
    let mut r = rng::named(2024, "acceptance-oracles");
    let mut series_bad = 0;
    for _ in 0..100 {
        let (labels, geom) = random_label_map(&mut r);
        for class in labels.task.foreground() {
            let c = structure_series(&labels, class, &geom).map_err(err)?;
            series_bad += (c.values != support::brute_force_series(&labels, class, &geom, c.unit)) as usize;
        }
    }
    let (mut youden_bad, mut roc_bad, mut rank_bad) = (0, 0, 0);
    for i in 0..1000 {
        let (scores, erroneous) = random_scored_set(&mut r);
        let curve = roc(&scores, &erroneous).map_err(err)?;
        for p in &curve.points {
            roc_bad += ((p.sensitivity, p.specificity) != support::confusion(&scores, &erroneous, p.threshold)) as usize;
        }
        let w = 0.5 + 0.49 * r.random::<f64>();
        let got = youden_threshold(&curve, w).map_err(err)?;
        let want = support::exhaustive_youden(&scores, &erroneous, w);
        youden_bad += ((got.threshold, got.sensitivity, got.specificity)
            != (want.threshold, want.sensitivity, want.specificity)) as usize;

        let ids: Vec<(String, f64)> = scores.iter().enumerate().map(|(j, &s)| (format!("c{:03}", (j * 7 + i) % 97), s)).collect();
        let k = r.random_range(0..=ids.len() + 2);
        rank_bad += (rank_select(&ids, k) != support::extraction_rank(&ids, k)) as usize;
    }
    check(
        series_bad + youden_bad + roc_bad + rank_bad == 0,
        format!("mismatches: series {series_bad}/100 cases, youden {youden_bad}/1000, roc points {roc_bad}, rank {rank_bad}/1000"),
    )
}

// ------------------------------------------------------ clinical fidelity

fn lvef_fidelity() -> Outcome {
    let mut specs: Vec<CohortSpec> = Vec::new();
    let desk = desk_benchmark(Scenario::Semiqcseg);
    for c in [Some(&desk.labelled), desk.unlabelled.as_ref(), Some(&desk.test), desk.qc_train.as_ref()].into_iter().flatten() {
        if let CohortRef::Generate(s) = c {
            specs.push(s.clone());
        }
    }
    specs.push(CohortSpec { n_subjects: 40, disease_fraction: 0.5, hard_fraction: 0.5, seed: 300, ..CohortSpec::default() });
    specs.push(CohortSpec { n_subjects: 4, seed: 301, ..CohortSpec::reference_sax() });
    let (mut n, mut worst) = (0, 0.0f64);
    for spec in &specs {
        for case in generate_cohort(spec).map_err(err)? {
            let m = clinical_from_labels(case.gt_labels.as_ref().expect("phantom truth"), &case.geometry).map_err(err)?;
            let qcseg::phantom::Anatomy::Sax(a) = &case.subject.anatomy else { return Err(format!("{} is not short axis", case.case_id)) };
            worst = worst.max((m.lvef - 100.0 * a.target_lvef).abs());
            n += 1;
        }
    }
    check(worst <= 2.0, format!("{n} cases, worst |LVEF - target| {worst:.3} EF points"))
}

// ---------------------------------------------------------------- CRF

fn random_plane(r: &mut rng::Rng, c: usize, n: usize) -> (Vec<f64>, Vec<f32>) {
    let mut p = vec![0.0; c * n];
    for i in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| r.random::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        for l in 0..c {
            p[l * n + i] = raw[l] / s;
        }
    }
    (p, (0..n).map(|_| r.random::<f32>()).collect())
}

fn crf_degeneracy() -> Outcome {
    let mut r = rng::named(7, "acceptance-crf");
    let (mut degenerate_bad, mut worst_norm) = (0, 0.0f64);
    for trial in 0..40 {
        let (c, h, w) = (r.random_range(2..5), r.random_range(2..9), r.random_range(2..9));
        let (p, img) = random_plane(&mut r, c, h * w);
        let argmax = argmax_plane(&p, c, h * w);
        for params in [
            CrfParams { w_smooth: 0.0, w_appearance: 0.0, ..CrfParams::default() },
            CrfParams { iterations: 0, ..CrfParams::default() },
        ] {
            degenerate_bad += (refine(&p, &img, c, h, w, &params).map_err(err)? != argmax) as usize;
        }
        let params = CrfParams {
            w_smooth: r.random_range(0.0..5.0),
            w_appearance: r.random_range(0.0..5.0),
            iterations: 1 + trial % 8,
            ..CrfParams::default()
        };
        for q in refine_trace(&p, &img, c, h, w, &params).map_err(err)? {
            for i in 0..h * w {
                let s: f64 = (0..c).map(|l| q[l * h * w + i]).sum();
                worst_norm = worst_norm.max((s - 1.0).abs());
            }
        }
    }
    let mean_field = |wt: f64| {
        let (p, img) = support::salt_plane();
        let params = CrfParams {
            w_smooth: wt,
            w_appearance: 0.0,
            theta_spatial: support::SALT_THETA,
            iterations: support::SALT_ITERATIONS,
            ..CrfParams::default()
        };
        refine(&p, &img, 2, 3, 3, &params).expect("valid plane")[4]
    };
    let w_map = support::flip_point(support::map_centre);
    let w_mf = support::flip_point(mean_field);
    let w_oracle = support::flip_point(support::oracle_mean_field_centre);
    let sweep_ok = (0..=40).map(|i| i as f64 * 0.05).all(|wt| mean_field(wt) == support::oracle_mean_field_centre(wt));
    check(
        degenerate_bad == 0 && worst_norm <= 1e-9 && (w_mf - w_oracle).abs() < 1e-9 && sweep_ok && w_mf >= w_map,
        format!(
            "degenerate mismatches {degenerate_bad}/80; worst |sum Q - 1| {worst_norm:.1e}; salt flip at w = {w_mf:.6} \
             (oracle {w_oracle:.6}, exact MAP {w_map:.6})"
        ),
    )
}

// -------------------------------------------------------------- statistics

fn statistics() -> Outcome {
    let mut r = rng::named(99, "acceptance-ttest");
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..20 {
        let n = 2 + i * 3;
        let shift = (i as f64 - 10.0) * 0.01;
        let x: Vec<f64> = (0..n).map(|_| 0.8 + 0.1 * r.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| v - shift + 0.05 * (r.random::<f64>() - 0.5)).collect();
        let got = paired_ttest(&x, &y).map_err(err)?;
        let (t, df) = support::paired_t(&x, &y);
        let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).expect("df > 0").cdf(t.abs()));
        worst.0 = worst.0.max((got.t - t).abs() / t.abs().max(1.0));
        worst.1 = worst.1.max((got.p - p).abs());
    }
    let zero = paired_ttest(&[0.9, 0.8, 0.7], &[0.9, 0.8, 0.7]).map_err(err)?;
    let conventions = (zero.t, zero.p) == (0.0, 1.0);
    check(
        worst.0 <= 1e-6 && worst.1 <= 1e-6 && conventions,
        format!("20 fixtures: worst t error {:.1e}, worst p error {:.1e}; zero differences give t 0, p 1: {conventions}", worst.0, worst.1),
    )
}

// --------------------------------------------------------------- gradients

fn worst_fd_error(params: &ParamSet, loss: impl Fn(&ParamSet) -> f64, analytic: &[Tensor]) -> f64 {
    let h = 1e-6;
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for k in 0..p.len() {
        for j in 0..p.get(ParamId(k)).len() {
            let orig = p.get(ParamId(k)).data[j];
            p.get_mut(ParamId(k)).data[j] = orig + h;
            let up = loss(&p);
            p.get_mut(ParamId(k)).data[j] = orig - h;
            let down = loss(&p);
            p.get_mut(ParamId(k)).data[j] = orig;
            let num = (up - down) / (2.0 * h);
            let ana = analytic[k].data[j];
            worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-3));
        }
    }
    worst
}

fn gradients() -> Outcome {
    let mut r = rng::named(5, "acceptance-grad");
    let mut report = Vec::new();
    for arch in [SegArch::Unet, SegArch::Fcn] {
        let cfg = SegArchConfig { arch, depth: 2, base_channels: 4, n_classes: 4, input_channels: 1 };
        let (net, mut params) = SegNet::init(&cfg, &mut rng::rng(3, 1)).map_err(err)?;
        // keep ReLU inputs off the kink
        for k in 0..params.len() {
            if params.name(ParamId(k)).ends_with(".b") {
                for v in &mut params.get_mut(ParamId(k)).data {
                    *v = r.random_range(-0.1..0.1);
                }
            }
        }
        let s = SegSample {
            case_id: "g".into(),
            image: (0..64).map(|_| r.random::<f32>()).collect(),
            labels: (0..64).map(|_| r.random_range(0..4u8)).collect(),
        };
        let mut grads = params.zero_grads();
        seg_loss(&net, &params, &s, 8, 8, Some((1.0, &mut grads)));
        report.push((format!("{arch:?}"), worst_fd_error(&params, |p| seg_loss(&net, p, &s, 8, 8, None), &grads)));
    }
    let cfg = QcArchConfig { input_dim: 2, dense_dim: 3, lstm_layers: 3, lstm_hidden: 4 };
    let (net, params) = QcNet::init(&cfg, &mut rng::rng(4, 1)).map_err(err)?;
    for accurate in [true, false] {
        let ex = QcExample { features: (0..6).map(|_| vec![r.random(), r.random()]).collect(), accurate };
        let mut grads = params.zero_grads();
        qc_loss(&net, &params, &ex, Some((1.0, &mut grads)));
        report.push((format!("qc({accurate})"), worst_fd_error(&params, |p| qc_loss(&net, p, &ex, None), &grads)));
    }
    let ok = report.iter().all(|(_, e)| *e < 1e-4);
    let detail = report.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    check(ok, format!("worst relative error: {detail}"))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        match &o {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}")
            }
        }
    };
    report("exact oracles", exact_oracles());
    report("statistics", statistics());
    report("gradients", gradients());
    report("crf degeneracy", crf_degeneracy());
    report("lvef fidelity", lvef_fidelity());
    report("qc operating point", qc_operating_point());
    match run_bench() {
        Ok(b) => {
            report("scenario ordering", scenario_ordering(&b));
            report("census arithmetic", census_arithmetic(&b));
            report("determinism", determinism(&b));
        }
        Err(e) => {
            for name in ["scenario ordering", "census arithmetic", "determinism"] {
                report(name, Err(format!("benchmark failed: {e}")));
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
