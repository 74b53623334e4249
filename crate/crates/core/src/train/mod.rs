//! Losses, optimizers, learning-rate schedules, the training loop, and
//! checkpointing.

mod checkpoint;
mod data;
mod optim;
mod schedule;

pub use checkpoint::{
    load_checkpoint, restore_into, save_checkpoint, LoadedCheckpoint, TrainState,
};
pub use data::{ClassifyData, SrData, TaskData};
pub use optim::{Optimizer, OptimizerCfg, ADAM_EPS};
pub use schedule::Schedule;

use crate::error::{Error, Result};
use crate::image::{ImageRGB, PairedSample};
use crate::metrics;
use crate::models::Model;
use crate::tensor::{Mode, Shape, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    SuperResolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCfg {
    CrossEntropy,
    L1,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub optimizer: OptimizerCfg,
    pub schedule: Schedule,
    pub lr0: f64,
    /// Steps per schedule unit: 1 drives the schedule per iteration, an
    /// epoch length drives it per epoch.
    pub steps_per_unit: u64,
    pub loss: LossCfg,
    pub batch_size: usize,
    pub steps: u64,
    pub eval_every: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.steps_per_unit == 0 {
            return Err(Error::Config(
                "steps, batch size, and schedule unit must be >= 1".into(),
            ));
        }
        if self.lr0 <= 0.0 {
            return Err(Error::Config("initial learning rate must be > 0".into()));
        }
        if self.task == TaskKind::SuperResolution && self.loss == LossCfg::CrossEntropy {
            return Err(Error::Config(
                "cross-entropy loss is undefined for super-resolution".into(),
            ));
        }
        self.schedule.validate(self.lr0)
    }
}

#[derive(Debug, Clone)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub metric: Option<f64>,
}

impl LogRow {
    pub fn csv(&self) -> String {
        match self.metric {
            Some(m) => format!("{},{},{},{}", self.step, self.lr, self.loss, m),
            None => format!("{},{},{},", self.step, self.lr, self.loss),
        }
    }
}

/// Drives forward/loss/backward/update over a task's data.
pub struct Trainer<'a> {
    pub model: &'a mut Model,
    pub data: &'a TaskData,
    pub cfg: &'a TrainConfig,
    pub optimizer: Optimizer,
    pub state: TrainState,
    pub log: Vec<LogRow>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a mut Model, data: &'a TaskData, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        match (cfg.task, data) {
            (TaskKind::Classification, TaskData::Classify { .. }) => {}
            (TaskKind::SuperResolution, TaskData::Sr { .. }) => {}
            _ => return Err(Error::Config("task and dataset kinds disagree".into())),
        }
        Ok(Trainer {
            model,
            data,
            cfg,
            optimizer: Optimizer::new(&cfg.optimizer),
            state: TrainState::default(),
            log: Vec::new(),
        })
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.cfg.schedule.lr(self.cfg.lr0, step / self.cfg.steps_per_unit)
    }

    /// One forward/backward/update step; returns the log row.
    pub fn step_once(&mut self) -> Result<LogRow> {
        let step = self.state.step;
        let lr = self.lr_at(step);
        let mut tape = Tape::<f32>::new();
        let binding = self.model.bind(&mut tape)?;

        let loss_var = match self.data {
            TaskData::Classify { train, .. } => {
                let (images, labels) = train.batch(self.cfg.seed, step, self.cfg.batch_size)?;
                let x = tape.leaf(images)?;
                let logits = self.model.forward(&mut tape, &binding, x, Mode::Train)?;
                match self.cfg.loss {
                    LossCfg::CrossEntropy => tape.cross_entropy(logits, &labels)?,
                    LossCfg::L1 => {
                        let onehot = one_hot(&labels, train.classes)?;
                        tape.l1_loss(logits, &onehot)?
                    }
                }
            }
            TaskData::Sr { train, .. } => {
                let (lr_batch, hr_batch) = train.batch(self.cfg.seed, step, self.cfg.batch_size)?;
                let x = tape.leaf(lr_batch)?;
                let pred = self.model.forward(&mut tape, &binding, x, Mode::Train)?;
                tape.l1_loss(pred, &hr_batch)?
            }
        };

        let loss = tape.value(loss_var).data()[0] as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, value: loss });
        }
        tape.backward(loss_var)?;
        let grads = self.model.store.grads(&tape, &binding)?;
        drop(tape);
        self.optimizer.step(&mut self.model.store, &grads, lr)?;

        self.state.step += 1;
        self.state.lr = lr;

        let at_cadence =
            self.state.step % self.cfg.eval_every == 0 || self.state.step == self.cfg.steps;
        let metric = if at_cadence { Some(self.evaluate()?) } else { None };
        if let Some(m) = metric {
            if self.state.best_metric.map_or(true, |b| m > b) {
                self.state.best_metric = Some(m);
            }
        }
        let row = LogRow {
            step: self.state.step,
            lr,
            loss,
            metric,
        };
        self.log.push(row.clone());
        Ok(row)
    }

    /// Task metric: top-1 accuracy for classification, mean Y-channel PSNR
    /// against HR for super-resolution.
    pub fn evaluate(&mut self) -> Result<f64> {
        match self.data {
            TaskData::Classify { eval, .. } => {
                classification_accuracy(self.model, eval, self.cfg.batch_size)
            }
            TaskData::Sr { eval, border, .. } => sr_psnr(self.model, eval, *border),
        }
    }
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor<f32>> {
    let mut data = vec![0.0f32; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::from_vec(Shape::vector(labels.len(), classes), data)
}

/// Top-1 accuracy over a dataset in eval mode.
pub fn classification_accuracy(
    model: &mut Model,
    data: &ClassifyData,
    batch: usize,
) -> Result<f64> {
    let mut hits = 0.0;
    let mut total = 0usize;
    for (images, labels) in data.eval_batches(batch)? {
        let logits = model.predict(&images, Mode::Eval)?;
        hits += metrics::topk_accuracy(&logits, &labels, 1)? * labels.len() as f64;
        total += labels.len();
    }
    Ok(hits / total as f64)
}

/// Mean Y-PSNR of model outputs against HR over paired samples.
pub fn sr_psnr(model: &mut Model, pairs: &[PairedSample], border: usize) -> Result<f64> {
    let mut acc = 0.0;
    for pair in pairs {
        let pred = model.predict(&pair.lr.to_tensor()?, Mode::Eval)?;
        let pred_img = ImageRGB::from_tensor(&pred, 0)?;
        acc += y_psnr(&pred_img, &pair.hr, border)?;
    }
    Ok(acc / pairs.len() as f64)
}

/// Mean Y-PSNR of plain bicubic ×4 upscaling over paired samples.
pub fn sr_bicubic_baseline(pairs: &[PairedSample], border: usize) -> Result<f64> {
    let mut acc = 0.0;
    for pair in pairs {
        let up = crate::image::bicubic_resize(&pair.lr, pair.hr.h, pair.hr.w);
        acc += y_psnr(&up, &pair.hr, border)?;
    }
    Ok(acc / pairs.len() as f64)
}

/// Border-cropped Y-channel PSNR between two images on the [0,255] scale.
pub fn y_psnr(a: &ImageRGB, b: &ImageRGB, border: usize) -> Result<f64> {
    let ya = a.to_y_plane().crop_border(border)?;
    let yb = b.to_y_plane().crop_border(border)?;
    metrics::psnr(&ya, &yb, 255.0)
}
