//! Trainable models and the training contract they share.
//!
//! Gradients come from the small reverse-mode tape in [`autograd`]; every
//! op's backward pass is checked against central finite differences in the
//! crate's tests. Training is single-threaded and fully determined by
//! `(architecture, dataset, TrainConfig)`: initialisation and per-epoch
//! shuffles draw from seed-derived ChaCha streams.

pub mod autograd;
pub mod checkpoint;
pub mod qcnet;
pub mod seg;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use autograd::{Graph, ParamSet, Tensor};
pub use qcnet::{QcArchConfig, QcNet};
pub use seg::{SegArch, SegArchConfig, SegNet};

use crate::error::{Error, Result};
use crate::phantom::CineCase;
use crate::rng;
use crate::volume::{Dims, ImageStack, LabelMap, ProbMap};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Bce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub loss: LossKind,
    pub validation_fraction: f64,
    /// Rescale each batch gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
            loss: LossKind::CrossEntropy,
            validation_fraction: 0.0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction", "must lie in [0, 1)"));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("grad_clip", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ArchConfig {
    Seg(SegArchConfig),
    Qc(QcArchConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train: f64,
    pub val: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub arch: ArchConfig,
    pub params: ParamSet,
    pub loss_history: Vec<EpochLoss>,
    pub seed: u64,
    pub checksum: String,
}

impl TrainedModel {
    fn new(arch: ArchConfig, params: ParamSet, loss_history: Vec<EpochLoss>, seed: u64) -> Self {
        let checksum = params.checksum();
        Self { arch, params, loss_history, seed, checksum }
    }

    pub fn verify_checksum(&self) -> bool {
        self.params.checksum() == self.checksum
    }

    pub fn seg_net(&self) -> Result<SegNet> {
        match &self.arch {
            ArchConfig::Seg(c) => Ok(SegNet::layout(c)?.0),
            ArchConfig::Qc(_) => Err(Error::invalid("model", "expected a segmentation model")),
        }
    }

    pub fn qc_net(&self) -> Result<QcNet> {
        match &self.arch {
            ArchConfig::Qc(c) => Ok(QcNet::layout(c)?.0),
            ArchConfig::Seg(_) => Err(Error::invalid("model", "expected a QC classifier")),
        }
    }

    /// Last recorded validation loss, if any.
    pub fn final_val_loss(&self) -> Option<f64> {
        self.loss_history.last().and_then(|e| e.val)
    }
}

struct OptState {
    kind: Optimizer,
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl OptState {
    fn new(cfg: &TrainConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self { kind: cfg.optimizer, lr: cfg.learning_rate, m: zeros.clone(), v: zeros, step: 0 }
    }

    fn apply(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            match self.kind {
                Optimizer::Sgd => {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= self.lr * d;
                    }
                }
                Optimizer::Adam => {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for j in 0..p.data.len() {
                        let d = g.data[j];
                        m[j] = B1 * m[j] + (1.0 - B1) * d;
                        v[j] = B2 * v[j] + (1.0 - B2) * d * d;
                        p.data[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Seeded mini-batch loop. `sample` must add `scale * d(loss_i)/dθ` into the
/// gradient buffers and return the unscaled loss of sample `i`.
fn fit(
    params: &mut ParamSet,
    n_train: usize,
    cfg: &TrainConfig,
    mut sample: impl FnMut(&ParamSet, usize, f64, &mut [Tensor]) -> f64,
    validate: impl Fn(&ParamSet) -> Option<f64>,
) -> Vec<EpochLoss> {
    let mut opt = OptState::new(cfg, params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::rng(cfg.seed, rng::stream("epoch-shuffle") ^ epoch as u64);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += sample(params, i, scale, &mut grads);
            }
            if let Some(max) = cfg.grad_clip {
                let norm = grads.iter().flat_map(|g| &g.data).map(|d| d * d).sum::<f64>().sqrt();
                if norm > max {
                    for d in grads.iter_mut().flat_map(|g| g.data.iter_mut()) {
                        *d *= max / norm;
                    }
                }
            }
            opt.apply(params, &grads);
        }
        history.push(EpochLoss { train: total / n_train as f64, val: validate(params) });
    }
    history
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 || n < 2 {
        return ((0..n).collect(), Vec::new());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::named(seed, "validation-split"));
    let n_val = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

// ---------------------------------------------------------------- segmenter

/// One labelled 2D plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SegSample {
    pub case_id: String,
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegDataset {
    pub height: usize,
    pub width: usize,
    pub samples: Vec<SegSample>,
}

impl SegDataset {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Add every slice of frame `t`.
    pub fn push_frame(&mut self, case_id: &str, images: &ImageStack, labels: &LabelMap, t: usize) -> Result<()> {
        let d = images.dims;
        if d != labels.dims {
            return Err(Error::Shape(format!("{case_id}: image and label dims differ")));
        }
        if self.samples.is_empty() && self.height == 0 {
            self.height = d.height;
            self.width = d.width;
        }
        if d.height != self.height || d.width != self.width {
            return Err(Error::Shape(format!(
                "{case_id}: {}x{} plane in a {}x{} dataset",
                d.height, d.width, self.height, self.width
            )));
        }
        if t >= d.frames {
            return Err(Error::invalid("frame", format!("{case_id}: frame {t} of {}", d.frames)));
        }
        for s in 0..d.slices {
            self.samples.push(SegSample {
                case_id: case_id.to_owned(),
                image: images.plane(t, s).to_vec(),
                labels: labels.plane(t, s).to_vec(),
            });
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Empty("segmentation dataset".into()));
        }
        let n = self.height * self.width;
        if let Some(s) = self.samples.iter().find(|s| s.image.len() != n || s.labels.len() != n) {
            return Err(Error::Shape(format!("{}: plane size differs from {}x{}", s.case_id, self.height, self.width)));
        }
        Ok(())
    }
}

/// Zero-mean, unit-variance `[1, H, W]` network input.
pub fn plane_input(image: &[f32], height: usize, width: usize) -> Tensor {
    let n = image.len() as f64;
    let mean = image.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = image.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-3);
    Tensor::new(vec![1, height, width], image.iter().map(|&v| (v as f64 - mean) / sd).collect())
}

pub fn seg_loss(net: &SegNet, params: &ParamSet, s: &SegSample, h: usize, w: usize, grads: Option<(f64, &mut [Tensor])>) -> f64 {
    let mut g = Graph::new(params);
    let x = g.input(plane_input(&s.image, h, w));
    let logits = net.forward(&mut g, x);
    let loss = g.softmax_cross_entropy(logits, &s.labels);
    let value = g.value(loss).data[0];
    if let Some((scale, buf)) = grads {
        g.backward(loss, scale, buf);
    }
    value
}

/// Mean per-plane cross-entropy of a model on a dataset.
pub fn seg_dataset_loss(model: &TrainedModel, data: &SegDataset) -> Result<f64> {
    data.check()?;
    let net = model.seg_net()?;
    let total: f64 = data
        .samples
        .iter()
        .map(|s| seg_loss(&net, &model.params, s, data.height, data.width, None))
        .sum();
    Ok(total / data.len() as f64)
}

pub fn train_segmenter(arch: &SegArchConfig, dataset: &SegDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    dataset.check()?;
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.validation_fraction, cfg.seed);
    let pick = |idx: &[usize]| SegDataset {
        height: dataset.height,
        width: dataset.width,
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    let val = (!val_idx.is_empty()).then(|| pick(&val_idx));
    train_segmenter_with_validation(arch, &pick(&train_idx), val.as_ref(), cfg)
}

/// As [`train_segmenter`], with an explicit held-out set scored each epoch.
pub fn train_segmenter_with_validation(
    arch: &SegArchConfig,
    train: &SegDataset,
    val: Option<&SegDataset>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if cfg.loss != LossKind::CrossEntropy {
        return Err(Error::invalid("loss", "segmenters train with cross_entropy"));
    }
    train.check()?;
    arch.check_input(train.height, train.width)?;
    if let Some(v) = val {
        v.check()?;
        if (v.height, v.width) != (train.height, train.width) {
            return Err(Error::Shape("validation planes differ from training planes".into()));
        }
    }
    let (net, mut params) = SegNet::init(arch, &mut rng::named(cfg.seed, "seg-init"))?;
    let (h, w) = (train.height, train.width);
    let history = fit(
        &mut params,
        train.len(),
        cfg,
        |p, i, scale, grads| seg_loss(&net, p, &train.samples[i], h, w, Some((scale, grads))),
        |p| {
            val.map(|v| {
                v.samples.iter().map(|s| seg_loss(&net, p, s, h, w, None)).sum::<f64>() / v.len() as f64
            })
        },
    );
    Ok(TrainedModel::new(ArchConfig::Seg(arch.clone()), params, history, cfg.seed))
}

/// Class probabilities `[C][H][W]` for one plane.
pub fn segment_plane(net: &SegNet, params: &ParamSet, image: &[f32], height: usize, width: usize) -> Vec<f64> {
    let mut g = Graph::new(params);
    let x = g.input(plane_input(image, height, width));
    let logits = net.forward(&mut g, x);
    autograd::softmax_channels(g.value(logits))
}

/// Segment every frame and slice of a case.
pub fn segment(model: &TrainedModel, case: &CineCase) -> Result<(ProbMap, LabelMap)> {
    let net = model.seg_net()?;
    let n_classes = net.config.n_classes;
    if n_classes != case.task.n_classes() {
        return Err(Error::Shape(format!(
            "model predicts {n_classes} classes, {:?} needs {}",
            case.task,
            case.task.n_classes()
        )));
    }
    let dims: Dims = case.dims();
    net.config.check_input(dims.height, dims.width)?;
    let mut data = Vec::with_capacity(dims.planes() * n_classes * dims.plane());
    for t in 0..dims.frames {
        for s in 0..dims.slices {
            data.extend(segment_plane(&net, &model.params, case.images.plane(t, s), dims.height, dims.width));
        }
    }
    let probs = ProbMap { dims, n_classes, data };
    let labels = probs.argmax(case.task);
    Ok((probs, labels))
}

// --------------------------------------------------------------- classifier

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcExample {
    pub features: Vec<Vec<f64>>,
    pub accurate: bool,
}

pub fn qc_loss(net: &QcNet, params: &ParamSet, ex: &QcExample, grads: Option<(f64, &mut [Tensor])>) -> f64 {
    let mut g = Graph::new(params);
    let logit = net.forward(&mut g, &ex.features);
    let loss = g.bce_with_logits(logit, if ex.accurate { 1.0 } else { 0.0 });
    let v = g.value(loss).data[0];
    if let Some((scale, buf)) = grads {
        g.backward(loss, scale, buf);
    }
    v
}

pub fn train_qc_classifier(dataset: &[QcExample], arch: &QcArchConfig, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if cfg.loss != LossKind::Bce {
        return Err(Error::invalid("loss", "the QC classifier trains with bce"));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("QC dataset".into()));
    }
    let n_good = dataset.iter().filter(|e| e.accurate).count();
    if n_good == 0 || n_good == dataset.len() {
        return Err(Error::SingleClass);
    }
    let (net, mut params) = QcNet::init(arch, &mut rng::named(cfg.seed, "qc-init"))?;
    for ex in dataset {
        net.check_input(&ex.features)?;
    }
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.validation_fraction, cfg.seed);
    let history = fit(
        &mut params,
        train_idx.len(),
        cfg,
        |p, i, scale, grads| qc_loss(&net, p, &dataset[train_idx[i]], Some((scale, grads))),
        |p| {
            (!val_idx.is_empty()).then(|| {
                val_idx.iter().map(|&i| qc_loss(&net, p, &dataset[i], None)).sum::<f64>() / val_idx.len() as f64
            })
        },
    );
    Ok(TrainedModel::new(ArchConfig::Qc(arch.clone()), params, history, cfg.seed))
}

/// Train `restarts` classifiers from independent initialisations and keep the
/// one with the lowest final training loss (earliest on ties). Small LSTM
/// stacks can sit on the `ln 2` plateau for a whole run from an unlucky start.
pub fn train_qc_classifier_restarts(
    dataset: &[QcExample],
    arch: &QcArchConfig,
    cfg: &TrainConfig,
    restarts: usize,
) -> Result<TrainedModel> {
    if restarts == 0 {
        return Err(Error::invalid("restarts", "must be at least 1"));
    }
    let mut best = train_qc_classifier(dataset, arch, cfg)?;
    for r in 1..restarts {
        let cand = train_qc_classifier(dataset, arch, &TrainConfig { seed: rng::derive(cfg.seed, r as u64), ..cfg.clone() })?;
        let loss = |m: &TrainedModel| m.loss_history.last().map_or(f64::INFINITY, |e| e.train);
        if loss(&cand) < loss(&best) {
            best = cand;
        }
    }
    Ok(best)
}

/// Probability that the curves come from an accurate segmentation.
pub fn qc_score(model: &TrainedModel, features: &[Vec<f64>]) -> Result<f64> {
    let net = model.qc_net()?;
    net.check_input(features)?;
    let mut g = Graph::new(&model.params);
    let logit = net.forward(&mut g, features);
    let z = g.sigmoid(logit);
    Ok(g.value(z).data[0])
}

/// Initialised but untrained model (`epochs = 0`).
pub fn initial_segmenter(arch: &SegArchConfig, seed: u64) -> Result<TrainedModel> {
    let (_, params) = SegNet::init(arch, &mut rng::named(seed, "seg-init"))?;
    Ok(TrainedModel::new(ArchConfig::Seg(arch.clone()), params, Vec::new(), seed))
}
