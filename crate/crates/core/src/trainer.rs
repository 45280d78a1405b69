//! Patch-based training and whole-image evaluation.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{crop, patch_corners, ImageSample, PatchSpec};
use crate::error::{Error, Result};
use crate::grid_graph::GridShape;
use crate::metrics::MetricsReport;
use crate::optim::{adam_step, lr_schedule, AdamState};
use crate::regularizers::{objective_terms, ObjectiveKind, RegularizerConfig};
use crate::segnet::{init_params, NetworkSpec, ParamSet, Real, SegNet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub objective: ObjectiveKind,
    pub regularizer: RegularizerConfig,
    pub seed: u64,
    pub patches_per_image: usize,
    pub patch_size: usize,
    /// Worker threads for per-sample work inside a batch.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            base_lr: 1e-3,
            lr_decay_every: 25,
            lr_decay_factor: 10.0,
            batch_size: 32,
            objective: ObjectiveKind::Baseline,
            regularizer: RegularizerConfig::default(),
            seed: 0,
            patches_per_image: 4750,
            patch_size: 48,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("lr_decay_every", self.lr_decay_every),
            ("batch_size", self.batch_size),
            ("patches_per_image", self.patches_per_image),
            ("patch_size", self.patch_size),
            ("threads", self.threads),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor >= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay_factor must be at least 1, got {}",
                self.lr_decay_factor
            )));
        }
        self.regularizer.validate()
    }

    pub fn patch_spec(&self, image: usize) -> PatchSpec {
        PatchSpec {
            size: self.patch_size,
            count: self.patches_per_image,
            seed: mix(self.seed, 1, image as u64),
        }
    }
}

fn mix(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Location of one training patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRef {
    pub image: usize,
    pub row: usize,
    pub col: usize,
}

/// All training patches, image by image, in sampling order.
pub fn patch_refs(data: &[ImageSample], cfg: &TrainConfig) -> Result<Vec<PatchRef>> {
    let mut refs = Vec::with_capacity(data.len() * cfg.patches_per_image);
    for (i, s) in data.iter().enumerate() {
        let corners = patch_corners(s.shape, s.fov.as_deref(), &cfg.patch_spec(i))?;
        refs.extend(corners.into_iter().map(|(row, col)| PatchRef { image: i, row, col }));
    }
    Ok(refs)
}

/// Visiting order of `n` patches in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 2, epoch as u64)));
    order
}

fn patch_input<T: Real>(data: &[ImageSample], p: PatchRef, size: usize) -> (Vec<T>, Vec<f64>) {
    let s = &data[p.image];
    let image = crop(&s.image, s.shape, p.row, p.col, size);
    (
        image.into_iter().map(T::of).collect(),
        crop(&s.mask, s.shape, p.row, p.col, size),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSummary {
    pub loss: f64,
    pub bce: f64,
    pub reg_value: f64,
}

struct SampleResult {
    grads: ParamSet<f32>,
    terms: LossSummary,
}

fn sample_step(
    net: &SegNet,
    params: &ParamSet<f32>,
    data: &[ImageSample],
    p: PatchRef,
    cfg: &TrainConfig,
) -> Result<SampleResult> {
    let size = cfg.patch_size;
    let shape = GridShape::new(size, size)?;
    let (input, mask) = patch_input::<f32>(data, p, size);
    let cache = net.forward_sample(params, &input, size, size)?;
    let y: Vec<f64> = cache.output().iter().map(|&v| v as f64).collect();
    let terms = objective_terms(shape, &y, &mask, cfg.objective, &cfg.regularizer)?;
    let grad_out: Vec<f32> = terms.total.grad.iter().map(|&g| g as f32).collect();
    Ok(SampleResult {
        grads: net.backward_sample(params, &cache, &grad_out)?,
        terms: LossSummary {
            loss: terms.total.value,
            bce: terms.bce,
            reg_value: terms.regularizer,
        },
    })
}

/// One epoch of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean objective over the epoch's patches.
    pub loss: f64,
    pub bce: f64,
    /// Mean normalized regularizer value (before lambda).
    pub reg_value: f64,
    pub val_acc: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Mean objective of every batch, in training order.
    pub batch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,lr,loss,reg_value,val_acc,val_auc")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        for r in &self.epochs {
            writeln!(
                out,
                "{},{:e},{:.9},{:.9},{},{}",
                r.epoch,
                r.lr,
                r.loss,
                r.reg_value,
                opt(r.val_acc),
                opt(r.val_auc)
            )?;
        }
        Ok(())
    }
}

/// Validation run after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub samples: &'a [ImageSample],
    pub threshold: f64,
    pub fov_only: bool,
}

fn run_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Trains from the He-normal initialization of `cfg.seed`. Gradients are
/// summed over each batch in sample order, so results do not depend on
/// `cfg.threads`.
pub fn train(
    data: &[ImageSample],
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<(ParamSet<f32>, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let net = SegNet::new(*spec)?;
    spec.check_input(cfg.patch_size, cfg.patch_size)?;
    let refs = patch_refs(data, cfg)?;
    let mut params = init_params::<f32>(spec, cfg.seed);
    let mut state = AdamState::new(&params);
    let mut log = TrainLog::default();

    run_pool(cfg.threads, || {
        for epoch in 0..cfg.epochs {
            let lr = lr_schedule(epoch, cfg)?;
            let order = epoch_order(refs.len(), cfg.seed, epoch);
            let mut sums = LossSummary::default();
            for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let step = |&i: &usize| sample_step(&net, &params, data, refs[i], cfg);
                let results: Vec<SampleResult> = if cfg.threads == 1 {
                    chunk.iter().map(step).collect::<Result<_>>()?
                } else {
                    chunk.par_iter().map(step).collect::<Result<_>>()?
                };
                let mut grads = params.zeros_like();
                let mut batch = LossSummary::default();
                for r in &results {
                    grads.add_assign(&r.grads);
                    batch.loss += r.terms.loss;
                    batch.bce += r.terms.bce;
                    batch.reg_value += r.terms.reg_value;
                }
                let n = chunk.len() as f64;
                if !batch.loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss is {} at epoch {epoch}, batch {b}", batch.loss)));
                }
                grads.scale(1.0 / n as f32);
                adam_step(&mut params, &grads, &mut state, lr)
                    .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
                log.batch_losses.push(batch.loss / n);
                sums.loss += batch.loss;
                sums.bce += batch.bce;
                sums.reg_value += batch.reg_value;
            }
            let total = refs.len() as f64;
            let (val_acc, val_auc) = match validation {
                Some(v) => {
                    let report = evaluate(&params, spec, v.samples, v.threshold, v.fov_only)?;
                    (Some(report.acc), Some(report.auc))
                }
                None => (None, None),
            };
            log.epochs.push(EpochRecord {
                epoch,
                lr,
                loss: sums.loss / total,
                bce: sums.bce / total,
                reg_value: sums.reg_value / total,
                val_acc,
                val_auc,
            });
        }
        Ok(())
    })??;
    Ok((params, log))
}

/// Mean objective terms over the given patches, without updating anything.
pub fn mean_objective(
    params: &ParamSet<f32>,
    spec: &NetworkSpec,
    data: &[ImageSample],
    refs: &[PatchRef],
    cfg: &TrainConfig,
) -> Result<LossSummary> {
    if refs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let net = SegNet::new(*spec)?;
    let size = cfg.patch_size;
    let shape = GridShape::new(size, size)?;
    let mut sums = LossSummary::default();
    for &p in refs {
        let (input, mask) = patch_input::<f32>(data, p, size);
        let y: Vec<f64> = net.predict(params, &input, size, size)?.iter().map(|&v| v as f64).collect();
        let terms = objective_terms(shape, &y, &mask, cfg.objective, &cfg.regularizer)?;
        sums.loss += terms.total.value;
        sums.bce += terms.bce;
        sums.reg_value += terms.regularizer;
    }
    let n = refs.len() as f64;
    Ok(LossSummary {
        loss: sums.loss / n,
        bce: sums.bce / n,
        reg_value: sums.reg_value / n,
    })
}

/// Full-image probabilities. The image is zero-padded at the bottom and right
/// to a multiple of the network stride and the output cropped back.
pub fn predict_image<T: Real>(params: &ParamSet<T>, spec: &NetworkSpec, sample: &ImageSample) -> Result<Vec<f64>> {
    let net = SegNet::new(*spec)?;
    let m = spec.size_multiple();
    let (h, w) = (sample.shape.rows(), sample.shape.cols());
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let mut input = vec![T::zero(); ph * pw];
    for r in 0..h {
        for c in 0..w {
            input[r * pw + c] = T::of(sample.image[r * w + c]);
        }
    }
    let out = net.predict(params, &input, ph, pw)?;
    Ok((0..h)
        .flat_map(|r| out[r * pw..r * pw + w].iter().map(|v| v.as_f64()))
        .collect())
}

/// Pixel-level metrics over all samples. With `fov_only`, pixels outside a
/// sample's field of view are skipped (samples without one are used whole).
pub fn evaluate<T: Real>(
    params: &ParamSet<T>,
    spec: &NetworkSpec,
    samples: &[ImageSample],
    threshold: f64,
    fov_only: bool,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for s in samples {
        let y = predict_image(params, spec, s)?;
        for (i, &v) in y.iter().enumerate() {
            if fov_only && s.fov.as_ref().is_some_and(|f| !f[i]) {
                continue;
            }
            scores.push(v);
            truth.push(s.mask[i] >= 0.5);
        }
    }
    MetricsReport::compute(&scores, &truth, threshold)
}
