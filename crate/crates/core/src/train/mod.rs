//! Supervised training of [`DinParams`] on interlaced/ground-truth pairs.
//!
//! The loss is `λ·L1(intermediate, Y) + (1−λ)·L1(final, Y)`; λ starts at 0.5,
//! holds for the first half of the run and then decays linearly to 0.1. The
//! learning rate drops by a constant factor every few epochs.
//!
//! Randomness comes from one ChaCha stream per epoch derived from the seed,
//! so a run resumed at an epoch boundary continues exactly as an
//! uninterrupted one would.

mod data;
mod schedule;
mod state;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use data::{
    augment_flip, batch_tensors, flip_horizontal, flip_vertical, sample_patches, TrainSample, TrainingSet,
};
pub use schedule::{lambda_schedule, lr_schedule};
pub use state::{TrainState, STATE_MAGIC};

use crate::error::{Error, Result};
use crate::frame::write_atomic;
use crate::interlace::{pair_seed, ManifestEntry};
use crate::model::{load_checkpoint, save_checkpoint, DinConfig, DinParams};
use crate::tensor::{Adam, AdamConfig, Real, Tape, Var};

/// File names written into the checkpoint directory.
pub const LATEST_CHECKPOINT: &str = "latest.din";
pub const LATEST_STATE: &str = "latest.state";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const STEP_LOG: &str = "train_steps.csv";

/// Header of the per-epoch CSV log.
pub const LOG_HEADER: &str = "epoch,loss_total,loss_inter,loss_final,lambda,lr";

/// Salt separating the sampling streams from the weight-init stream.
const SAMPLING_STREAM: u64 = 0x5A4D_504C_4553;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Side of the square training crops; must be even.
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub seed: u64,
    /// Upper bound on optimizer steps per epoch.
    pub max_steps_per_epoch: Option<usize>,
    pub augment: Augment,
}

/// Which random flips are applied to training samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Augment {
    None,
    /// Left-right flips only; the temporal reference field stays on top.
    Horizontal,
    /// Left-right and top-bottom flips. A vertical flip swaps which field
    /// is the temporal reference while the target stays put.
    #[default]
    Both,
}

impl std::str::FromStr for Augment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augment::None),
            "hflip" => Ok(Augment::Horizontal),
            "both" => Ok(Augment::Both),
            other => Err(Error::InvalidArgument(format!("unknown augmentation `{other}` (none|hflip|both)"))),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 32,
            batch_size: 8,
            epochs: 100,
            lr0: 1e-4,
            lr_decay_every: 20,
            lr_decay_factor: 10.0,
            lambda_start: 0.5,
            lambda_end: 0.1,
            seed: 0,
            max_steps_per_epoch: None,
            augment: Augment::Both,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.patch_size < 2 || !self.patch_size.is_multiple_of(2) {
            return fail(format!("patch size must be even and at least 2, got {}", self.patch_size));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail(format!("initial learning rate must be positive, got {}", self.lr0));
        }
        if self.lr_decay_every == 0 {
            return fail("lr decay interval must be at least 1 epoch".into());
        }
        if !(self.lr_decay_factor >= 1.0 && self.lr_decay_factor.is_finite()) {
            return fail(format!("lr decay factor must be >= 1, got {}", self.lr_decay_factor));
        }
        if !(0.0..=1.0).contains(&self.lambda_end)
            || !(0.0..=1.0).contains(&self.lambda_start)
            || self.lambda_end > self.lambda_start
        {
            return fail(format!(
                "need 0 <= lambda_end <= lambda_start <= 1, got {} and {}",
                self.lambda_end, self.lambda_start
            ));
        }
        if self.max_steps_per_epoch == Some(0) {
            return fail("max steps per epoch must be at least 1".into());
        }
        Ok(())
    }

    /// `ceil(patches / batch)`, capped by `max_steps_per_epoch`.
    pub fn steps_per_epoch(&self, set: &TrainingSet) -> usize {
        let steps = set.patches_per_epoch(self.patch_size).div_ceil(self.batch_size).max(1);
        self.max_steps_per_epoch.map_or(steps, |cap| steps.min(cap))
    }
}

/// Mean losses and schedule values of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_inter: f64,
    pub loss_final: f64,
    pub lambda: f64,
    pub lr: f64,
}

/// Loss of a single optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{LOG_HEADER}\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.loss_total, r.loss_inter, r.loss_final, r.lambda, r.lr
            );
        }
        out
    }

    pub fn steps_to_csv(&self) -> String {
        let mut out = String::from("step,epoch,loss_total\n");
        for s in &self.steps {
            let _ = writeln!(out, "{},{},{}", s.step, s.epoch, s.loss_total);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    /// Trailing moving average of the step losses; entry `i` averages steps
    /// `i+1-window ..= i` (fewer at the start).
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        let mut out = Vec::with_capacity(self.steps.len());
        let mut sum = 0.0;
        for (i, s) in self.steps.iter().enumerate() {
            sum += s.loss_total;
            if i >= window {
                sum -= self.steps[i - window].loss_total;
            }
            out.push(sum / (i + 1).min(window) as f64);
        }
        out
    }
}

/// Tape handles of the weighted loss and its two terms.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub inter: Var,
    pub last: Var,
}

/// `λ·L1(intermediate, target) + (1−λ)·L1(final, target)`, each term the mean
/// absolute error over the whole batch.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    intermediate: Var,
    output: Var,
    target: Var,
    lambda: f64,
) -> Result<LossVars> {
    let inter = tape.l1_loss(intermediate, target)?;
    let last = tape.l1_loss(output, target)?;
    let a = tape.scale(inter, T::from_f64_lossy(lambda));
    let b = tape.scale(last, T::from_f64_lossy(1.0 - lambda));
    let total = tape.add(a, b)?;
    Ok(LossVars { total, inter, last })
}

/// A training run that can be advanced epoch by epoch and checkpointed.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: DinParams<f32>,
    adam: Adam<f32>,
    set: TrainingSet,
    config: TrainConfig,
    next_epoch: usize,
    global_step: usize,
    log: TrainLog,
}

impl Trainer {
    /// Fresh run with weights initialised from `config.seed`.
    pub fn new(set: TrainingSet, din: DinConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = DinParams::build(din, config.seed)?;
        Self::with_params(set, params, config)
    }

    /// Fresh optimizer state around existing weights.
    pub fn with_params(set: TrainingSet, params: DinParams<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if set.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        Ok(Trainer {
            params,
            adam: Adam::new(AdamConfig::default()),
            set,
            config,
            next_epoch: 0,
            global_step: 0,
            log: TrainLog::default(),
        })
    }

    /// Continue from a checkpoint and its optimizer state.
    pub fn resume(
        set: TrainingSet,
        config: TrainConfig,
        checkpoint: impl AsRef<Path>,
        state: impl AsRef<Path>,
    ) -> Result<Self> {
        let params = load_checkpoint(checkpoint)?;
        let state = TrainState::load(state)?;
        let mut trainer = Self::with_params(set, params, config)?;
        trainer.adam.state = state.adam;
        trainer.next_epoch = state.next_epoch;
        trainer.global_step = state.global_step;
        trainer.log = state.log;
        Ok(trainer)
    }

    /// Resume from `latest.din`/`latest.state` inside `dir`.
    pub fn resume_from_dir(set: TrainingSet, config: TrainConfig, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::resume(set, config, dir.join(LATEST_CHECKPOINT), dir.join(LATEST_STATE))
    }

    pub fn params(&self) -> &DinParams<f32> {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn next_epoch(&self) -> usize {
        self.next_epoch
    }

    pub fn is_finished(&self) -> bool {
        self.next_epoch >= self.config.epochs
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            next_epoch: self.next_epoch,
            global_step: self.global_step,
            adam: self.adam.state.clone(),
            log: self.log.clone(),
        }
    }

    pub fn into_parts(self) -> (DinParams<f32>, TrainLog) {
        (self.params, self.log)
    }

    /// One optimizer step on `samples`; returns `(total, inter, final)` loss.
    fn step(&mut self, samples: &[TrainSample], lambda: f64, lr: f64) -> Result<(f64, f64, f64)> {
        let (top, bottom, target) = batch_tensors::<f32>(samples)?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, true);
        let vars = bound.vars().to_vec();
        let t = tape.leaf(top);
        let b = tape.leaf(bottom);
        let y = tape.leaf(target);
        let out = bound.forward(&mut tape, t, b)?;
        let loss = total_loss(&mut tape, out.intermediate, out.output, y, lambda)?;
        let values = (
            tape.value(loss.total).item()? as f64,
            tape.value(loss.inter).item()? as f64,
            tape.value(loss.last).item()? as f64,
        );
        if !(values.0.is_finite() && values.1.is_finite() && values.2.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch: self.next_epoch, step: self.global_step });
        }
        tape.backward(loss.total)?;
        self.params.collect_grads(&tape, &vars)?;
        self.adam.step(&mut self.params.tensors_mut(), lr)?;
        Ok(values)
    }

    /// Run the next epoch and append its record to the log.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::InvalidArgument(format!("all {} epochs already ran", self.config.epochs)));
        }
        let epoch = self.next_epoch;
        let lambda = lambda_schedule(epoch, self.config.epochs, &self.config);
        let lr = lr_schedule(epoch, &self.config);
        let steps = self.config.steps_per_epoch(&self.set);
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(self.config.seed ^ SAMPLING_STREAM, epoch as u64));
        let (mut total, mut inter, mut last) = (0.0, 0.0, 0.0);
        for _ in 0..steps {
            let mut batch = sample_patches(&self.set, self.config.patch_size, self.config.batch_size, &mut rng)?;
            match self.config.augment {
                Augment::None => {}
                Augment::Horizontal => {
                    for s in &mut batch {
                        if rng.random_bool(0.5) {
                            *s = flip_horizontal(s);
                        }
                    }
                }
                Augment::Both => {
                    batch = batch.iter().map(|s| augment_flip(s, &mut rng)).collect::<Result<_>>()?;
                }
            }
            let (t, i, f) = self.step(&batch, lambda, lr)?;
            self.log.steps.push(StepRecord { epoch, step: self.global_step, loss_total: t });
            self.global_step += 1;
            total += t;
            inter += i;
            last += f;
        }
        let n = steps as f64;
        let record = EpochRecord { epoch, loss_total: total / n, loss_inter: inter / n, loss_final: last / n, lambda, lr };
        self.log.epochs.push(record);
        self.next_epoch += 1;
        info!(
            "epoch {epoch}: loss {:.5} (inter {:.5}, final {:.5}) lambda {lambda:.3} lr {lr:e}",
            record.loss_total, record.loss_inter, record.loss_final
        );
        Ok(record)
    }

    /// Write `latest.din`, `latest.state` and the CSV logs into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&self.params, dir.join(LATEST_CHECKPOINT))?;
        self.state().save(dir.join(LATEST_STATE))?;
        self.log.write_csv(dir.join(TRAIN_LOG))?;
        write_atomic(&dir.join(STEP_LOG), self.log.steps_to_csv().as_bytes())
    }

    /// Run the remaining epochs, saving after each one when `dir` is given.
    pub fn run(&mut self, dir: Option<&Path>) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch()?;
            if let Some(dir) = dir {
                self.save(dir)?;
            }
        }
        Ok(())
    }
}

/// Train from a manifest end to end. With `checkpoint_dir`, a checkpoint,
/// optimizer state and CSV logs are written after every epoch.
pub fn train(
    manifest: &[ManifestEntry],
    din: &DinConfig,
    config: &TrainConfig,
    checkpoint_dir: Option<PathBuf>,
) -> Result<(DinParams<f32>, TrainLog)> {
    config.validate()?;
    din.validate()?;
    let set = TrainingSet::load(manifest, config.patch_size)?;
    let mut trainer = Trainer::new(set, *din, config.clone())?;
    trainer.run(checkpoint_dir.as_deref())?;
    Ok(trainer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interlace::{toy_pairs, ToySetConfig};

    fn toy_set(pairs: usize, patch: usize) -> TrainingSet {
        let mut cfg = ToySetConfig::train();
        cfg.pairs = pairs;
        cfg.size = 32;
        let pairs = toy_pairs(&cfg).unwrap().into_iter().map(|(_, i, t)| (i, t)).collect();
        TrainingSet::from_pairs(pairs, patch).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig { patch_size: 16, batch_size: 2, epochs: 3, lr0: 1e-3, max_steps_per_epoch: Some(3), ..Default::default() }
    }

    #[test]
    fn loss_terms_combine() {
        use crate::tensor::{Shape, Tensor};
        let s = Shape::new(1, 1, 1, 2).unwrap();
        let mut tape = Tape::<f64>::new();
        let y = tape.leaf(Tensor::zeros(s));
        let i = tape.leaf(Tensor::full(s, 2.0).with_requires_grad(true));
        let f = tape.leaf(Tensor::full(s, 4.0).with_requires_grad(true));
        let l = total_loss(&mut tape, i, f, y, 0.5).unwrap();
        assert_eq!(tape.value(l.total).item().unwrap(), 3.0);
        let l = total_loss(&mut tape, i, f, y, 1.0).unwrap();
        assert_eq!(tape.value(l.total).item().unwrap(), 2.0);
        let same = total_loss(&mut tape, y, y, y, 0.3).unwrap();
        assert_eq!(tape.value(same.total).item().unwrap(), 0.0);
        let bad = tape.leaf(Tensor::zeros(Shape::new(1, 1, 2, 2).unwrap()));
        assert!(total_loss(&mut tape, bad, f, y, 0.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { patch_size: 15, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lambda_end: 0.6, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn steps_per_epoch_from_area() {
        let set = toy_set(3, 16);
        let cfg = TrainConfig { patch_size: 16, batch_size: 5, ..Default::default() };
        // 3 pairs x (32*32 / 16*16 = 4) = 12 patches -> 3 steps of 5
        assert_eq!(cfg.steps_per_epoch(&set), 3);
        let capped = TrainConfig { max_steps_per_epoch: Some(2), ..cfg };
        assert_eq!(capped.steps_per_epoch(&set), 2);
    }

    #[test]
    fn log_follows_schedules() {
        let cfg = small_config();
        let mut t = Trainer::new(toy_set(2, 16), DinConfig::with_channels(4), cfg.clone()).unwrap();
        t.run(None).unwrap();
        assert!(t.run_epoch().is_err());
        let log = t.log();
        assert_eq!(log.epochs.len(), 3);
        assert_eq!(log.steps.len(), 9);
        for r in &log.epochs {
            assert_eq!(r.lambda, lambda_schedule(r.epoch, 3, &cfg));
            assert_eq!(r.lr, lr_schedule(r.epoch, &cfg));
            assert!(r.loss_total.is_finite() && r.loss_total >= 0.0);
        }
        let csv = log.to_csv();
        assert!(csv.starts_with("epoch,loss_total,loss_inter,loss_final,lambda,lr\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn runs_are_reproducible_and_resumable() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let mut full = Trainer::new(toy_set(2, 16), DinConfig::with_channels(4), cfg.clone()).unwrap();
        full.run(None).unwrap();

        let mut first = Trainer::new(toy_set(2, 16), DinConfig::with_channels(4), cfg.clone()).unwrap();
        first.run_epoch().unwrap();
        first.save(dir.path()).unwrap();
        let mut resumed = Trainer::resume_from_dir(toy_set(2, 16), cfg, dir.path()).unwrap();
        assert_eq!(resumed.next_epoch(), 1);
        resumed.run(None).unwrap();
        assert_eq!(resumed.log(), full.log());
        assert_eq!(resumed.params(), full.params());
    }

    #[test]
    fn moving_average_is_trailing() {
        let log = TrainLog {
            epochs: Vec::new(),
            steps: (0..5).map(|i| StepRecord { epoch: 0, step: i, loss_total: i as f64 }).collect(),
        };
        assert_eq!(log.moving_average(3), vec![0.0, 0.5, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn diverging_run_reports_epoch_and_step() {
        let cfg = TrainConfig { lr0: 1e30, ..small_config() };
        let mut t = Trainer::new(toy_set(2, 16), DinConfig::with_channels(4), cfg).unwrap();
        let err = t.run(None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }
}
