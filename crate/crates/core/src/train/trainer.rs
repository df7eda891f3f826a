use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{augment, sample_patch, scale_augment, AugmentToggles, Dataset, Image, SrPair, SCALE_FACTORS};
use crate::model::{forward_unroll, FeedbackTopology, ModelConfig, ParamStore};
use crate::tensor::{Backend, Real, Recorder, Tensor};
use crate::train::{adam_step, loss_multi_step, lr_schedule, AdamHyper, AdamState, LossMode};

/// Header of the training log CSV.
pub const LOG_HEADER: &str = "iter,lr,loss";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    /// LR patch side; the HR patch is `scale` times larger.
    pub patch: usize,
    pub iterations: u64,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub augment: AugmentToggles,
    /// Parameters are handed to the checkpoint hook every this many
    /// iterations (and after the last one).
    pub checkpoint_every: u64,
    pub hyper: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 16,
            patch: 48,
            iterations: 1000,
            seed: 0,
            loss_mode: LossMode::AllSteps,
            augment: AugmentToggles::flips_and_rotations(),
            checkpoint_every: 1000,
            hyper: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.patch == 0 {
            return Err(Error::Config("batch and patch must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        self.hyper.validate()
    }
}

/// One line of the training log: the loss of the forward pass at
/// iteration `iter`, before that iteration's update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iter: u64,
    pub lr: f64,
    pub loss: f64,
}

impl LogRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{},{}", self.iter, self.lr, self.loss)
    }
}

pub enum TrainEvent<'a, F> {
    Record(&'a LogRecord),
    /// Parameters after `iter` completed updates.
    Checkpoint { iter: u64, params: &'a ParamStore<F> },
}

pub struct TrainOutcome<F> {
    pub params: ParamStore<F>,
    pub log: Vec<LogRecord>,
}

/// Draws `batch` aligned patch pairs: image index, optional scaling,
/// crop position, then flip/rotation, all from `rng`.
pub fn assemble_batch<F: Real, R: Rng + ?Sized>(
    dataset: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let mut lrs = Vec::with_capacity(config.batch);
    let mut hrs = Vec::with_capacity(config.batch);
    for _ in 0..config.batch {
        let base = &dataset.items[rng.random_range(0..dataset.len())].1;
        let scaled;
        let mut pair: &SrPair = base;
        if config.augment.scale {
            let factor = SCALE_FACTORS[rng.random_range(0..SCALE_FACTORS.len())];
            if factor != 1.0 {
                let candidate = scale_augment(&base.hr, factor, base.scale)?;
                if candidate.lr.height() >= config.patch && candidate.lr.width() >= config.patch {
                    scaled = candidate;
                    pair = &scaled;
                }
            }
        }
        let (lr, hr) = sample_patch(pair, config.patch, rng)?;
        let (lr, hr) = augment(&lr, &hr, rng, config.augment);
        lrs.push(lr);
        hrs.push(hr);
    }
    let lr_refs: Vec<&Image> = lrs.iter().collect();
    let hr_refs: Vec<&Image> = hrs.iter().collect();
    Ok((Image::batch_tensor(&lr_refs)?, Image::batch_tensor(&hr_refs)?))
}

/// Samples a batch, unrolls the network, backpropagates the multi-step L1
/// loss and applies Adam, `config.iterations` times.
///
/// A non-finite loss is reported through `on_event` and then aborts with
/// [`Error::NonFiniteLoss`].
pub fn train_loop<F: Real>(
    config: &TrainConfig,
    model: &ModelConfig,
    topology: &FeedbackTopology,
    dataset: &Dataset,
    mut params: ParamStore<F>,
    mut on_event: impl FnMut(TrainEvent<'_, F>) -> Result<()>,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset(format!("training set `{}` is empty", dataset.name)));
    }
    if dataset.scale != model.scale {
        return Err(Error::Config(format!(
            "dataset is degraded at x{}, model upscales x{}",
            dataset.scale, model.scale
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(&params);
    let mut log = Vec::with_capacity(config.iterations as usize);

    for iter in 0..config.iterations {
        let (lr_batch, hr_batch) = assemble_batch::<F, _>(dataset, config, &mut rng)?;
        let mut be = Recorder::new(params.iter(), true);
        let lr_in = be.input(lr_batch);
        let hr = be.input(hr_batch);
        let out = forward_unroll(&mut be, model, topology, &lr_in)?;
        let targets = vec![hr; out.outputs.len()];
        let loss = loss_multi_step(&mut be, &out.outputs, &targets, config.loss_mode)?;
        let loss_value = be.value(&loss).item().to_f64_lossy();

        let record = LogRecord { iter, lr: lr_schedule(iter, &config.hyper), loss: loss_value };
        on_event(TrainEvent::Record(&record))?;
        log.push(record);
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss { iter, lr: record.lr, loss: loss_value });
        }

        let grads = be.param_grads(loss)?;
        drop(be);
        adam_step(&mut params, &grads, &mut state, &config.hyper, iter)?;

        let done = iter + 1;
        if done % config.checkpoint_every == 0 || done == config.iterations {
            on_event(TrainEvent::Checkpoint { iter: done, params: &params })?;
        }
    }
    Ok(TrainOutcome { params, log })
}
