#![allow(dead_code)]

use qcseg::models::{SegArchConfig, TrainConfig};
use qcseg::phantom::CohortSpec;
use qcseg::pipeline::{desk_benchmark, CohortRef, Scenario, ScenarioConfig};

pub fn tiny_spec(n: usize, prefix: &str, seed: u64) -> CohortSpec {
    CohortSpec { n_subjects: n, frames: 4, height: 16, width: 16, id_prefix: prefix.into(), seed, ..CohortSpec::default() }
}

/// A scenario small enough to run in a couple of seconds.
pub fn tiny_scenario(scenario: Scenario) -> ScenarioConfig {
    let mut cfg = desk_benchmark(scenario);
    cfg.labelled = CohortRef::Generate(tiny_spec(4, "lab", 1));
    cfg.unlabelled = Some(CohortRef::Generate(tiny_spec(4, "pool", 2)));
    cfg.test = CohortRef::Generate(tiny_spec(3, "test", 3));
    cfg.qc_train = Some(CohortRef::Generate(tiny_spec(8, "qc", 4)));
    cfg.k = 2;
    cfg.seg_arch = SegArchConfig { depth: 2, base_channels: 4, ..SegArchConfig::unet(4) };
    cfg.seg_train = TrainConfig { epochs: 1, batch_size: 2, ..cfg.seg_train };
    cfg.qc.train.epochs = 2;
    cfg.qc.restarts = 1;
    cfg
}
