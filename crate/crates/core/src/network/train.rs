use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::loss::{class_weights_from_frequencies, cross_entropy, ClassWeights};
use super::metrics::{argmax_classes, evaluate};
use super::model::Model;
use super::optim::{lr_schedule, Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::Ctx;
use crate::rng::{self, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeightMode {
    Uniform,
    LogFrequency,
}

impl FromStr for ClassWeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ClassWeightMode::Uniform),
            "log-frequency" => Ok(ClassWeightMode::LogFrequency),
            _ => Err(Error::InvalidArgument(format!("unknown class-weight mode '{s}'"))),
        }
    }
}

impl fmt::Display for ClassWeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassWeightMode::Uniform => "uniform",
            ClassWeightMode::LogFrequency => "log-frequency",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub decay: f64,
    pub decay_period: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub class_weights: ClassWeightMode,
}

impl Default for TrainConfig {
    /// The spherical MNIST recipe: batch 16, lr 1e-2 halved every 10 epochs.
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr: 1e-2,
            decay: 0.5,
            decay_period: 10,
            epochs: 30,
            seed: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            class_weights: ClassWeightMode::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.batch_size > 0
            && self.lr > 0.0
            && self.decay_period > 0
            && self.epochs > 0
            && self.eps > 0.0;
        if !positive {
            return Err(Error::InvalidArgument(
                "batch size, lr, decay period, epochs and eps must be positive".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay {} not in (0, 1]", self.decay)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_schedule(epoch, self.lr, self.decay, self.decay_period)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

impl EpochReport {
    pub const HEADER: &'static str = "epoch\tlr\ttrain_loss\ttrain_acc\tval_acc\tseconds";

    /// Tab-separated report line; `val_acc` is `-` without a validation set.
    pub fn line(&self) -> String {
        format!(
            "{}\t{:.4e}\t{:.6}\t{:.6}\t{}\t{:.3}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.train_acc,
            self.val_acc.map_or("-".to_string(), |v| format!("{v:.6}")),
            self.seconds
        )
    }

    /// The line without the wall-clock column.
    pub fn deterministic_line(&self) -> String {
        let l = self.line();
        l[..l.rfind('\t').unwrap()].to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from(EpochReport::HEADER);
        s.push('\n');
        for e in &self.epochs {
            s.push_str(&e.line());
            s.push('\n');
        }
        s
    }

    pub fn final_val_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_acc)
    }
}

/// Model, optimiser and random streams advanced one epoch at a time.
pub struct Trainer {
    pub model: Model,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub weights: ClassWeights,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig, weights: ClassWeights) -> Result<Self> {
        config.validate()?;
        if weights.len() != model.spec().num_classes {
            return Err(Error::Shape(format!(
                "{} class weights for {} classes",
                weights.len(),
                model.spec().num_classes
            )));
        }
        Ok(Trainer {
            model,
            optimizer: Adam::new(config.beta1, config.beta2, config.eps),
            shuffle_rng: rng::stream(config.seed, rng::SHUFFLE),
            dropout_rng: rng::stream(config.seed, rng::DROPOUT),
            config,
            weights,
            epoch: 0,
        })
    }

    /// Weights for `config.class_weights` computed from `data`'s label frequencies.
    pub fn weights_for(config: &TrainConfig, data: &Dataset) -> Result<ClassWeights> {
        match config.class_weights {
            ClassWeightMode::Uniform => Ok(ClassWeights::uniform(data.num_classes())),
            ClassWeightMode::LogFrequency => {
                let f = data.class_frequencies();
                let dropped: Vec<usize> = (0..f.len()).filter(|&c| f[c] == 0.0).collect();
                class_weights_from_frequencies(&f, &dropped)
            }
        }
    }

    pub fn resume(ck: &Checkpoint, config: TrainConfig, weights: ClassWeights) -> Result<Self> {
        let model = ck.model()?;
        let optimizer = ck.optimizer(&model, config.beta1, config.beta2, config.eps)?;
        let mut t = Trainer::new(model, config, weights)?;
        t.optimizer = optimizer;
        t.shuffle_rng = ck.shuffle_rng.restore();
        t.dropout_rng = ck.dropout_rng.restore();
        t.epoch = ck.epoch as usize;
        Ok(t)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let (adam_m, adam_v) = self.optimizer.flat_moments();
        Checkpoint {
            spec: self.model.spec().clone(),
            epoch: self.epoch as u64,
            params: self.model.flat_params(),
            buffers: self.model.flat_buffers(),
            adam_m,
            adam_v,
            adam_t: self.optimizer.t,
            shuffle_rng: RngState::capture(&self.shuffle_rng),
            dropout_rng: RngState::capture(&self.dropout_rng),
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        let spec = self.model.spec();
        if data.level() != spec.input_level || data.channels() != spec.in_channels {
            return Err(Error::LevelMismatch {
                expected: spec.input_level,
                actual: data.level(),
            });
        }
        if data.is_per_vertex() == spec.is_classification() {
            return Err(Error::InvalidArgument("label kind does not match the model task".into()));
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        Ok(())
    }

    pub fn run_epoch(&mut self, train: &Dataset, val: Option<&Dataset>) -> Result<EpochReport> {
        self.check_data(train)?;
        let start = Instant::now();
        let lr = self.config.lr_at(self.epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let (mut loss_sum, mut seen, mut correct, mut counted) = (0.0, 0usize, 0usize, 0usize);
        for (bi, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let (x, y) = train.batch(chunk)?;
            self.model.zero_grad();
            let logits = self.model.forward(&x, &mut Ctx::train(&mut self.dropout_rng))?;
            let (loss, grad) = cross_entropy(logits.view(), &y, &self.weights)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss} at epoch {} batch {bi}",
                    self.epoch
                )));
            }
            self.model.backward(&grad)?;
            self.optimizer.step(&mut self.model.params_mut(), lr)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            for (p, t) in argmax_classes(logits.view()).into_iter().zip(&y) {
                if self.weights.is_active(*t) {
                    counted += 1;
                    correct += (p == *t) as usize;
                }
            }
        }
        let val_acc = match val {
            Some(v) => {
                self.check_data(v)?;
                Some(evaluate(&mut self.model, v, self.config.batch_size, &self.weights)?.accuracy)
            }
            None => None,
        };
        let report = EpochReport {
            epoch: self.epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / counted.max(1) as f64,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.epoch += 1;
        Ok(report)
    }

    /// Runs the remaining epochs, writing `latest.ckpt` under `checkpoint_dir`
    /// after each one.
    pub fn run(
        &mut self,
        train: &Dataset,
        val: Option<&Dataset>,
        checkpoint_dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochReport),
    ) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        while self.epoch < self.config.epochs {
            let e = self.run_epoch(train, val)?;
            if let Some(dir) = checkpoint_dir {
                self.checkpoint().save(&latest_checkpoint(dir))?;
            }
            on_epoch(&e);
            report.epochs.push(e);
        }
        Ok(report)
    }
}

pub fn latest_checkpoint(dir: &Path) -> PathBuf {
    dir.join("latest.ckpt")
}

/// Trains `model` for `config.epochs` epochs with weights from `config`.
pub fn train(
    model: Model,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(Trainer, TrainReport)> {
    let weights = Trainer::weights_for(config, train)?;
    let mut t = Trainer::new(model, config.clone(), weights)?;
    let r = t.run(train, val, checkpoint_dir, |_| {})?;
    Ok((t, r))
}
