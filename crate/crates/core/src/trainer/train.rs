use log::debug;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::frames::FrameTensor;
use crate::scenesim::Scene;

/// One labelled utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: FrameTensor,
    pub scene: Option<Scene>,
    pub speaker: usize,
}

impl Sample {
    /// Restricts features and scene to the given channels.
    pub fn with_channels(&self, idx: &[usize]) -> Result<Sample> {
        Ok(Sample {
            id: self.id.clone(),
            features: self.features.select_channels(idx)?,
            scene: self.scene.as_ref().map(|s| s.subset(idx)).transpose()?,
            speaker: self.speaker,
        })
    }

    /// Random subset of `n` channels (kept in ascending order); unchanged when `n >= C`.
    pub fn subsample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Sample> {
        let c = self.features.c();
        if n == 0 {
            return Err(Error::Config("channel subsample size must be positive".into()));
        }
        if n >= c {
            return Ok(self.clone());
        }
        let mut idx = index::sample(rng, c, n).into_vec();
        idx.sort_unstable();
        self.with_channels(&idx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Random channels drawn per utterance and epoch; `None` keeps all.
    pub train_channels: Option<usize>,
    /// Rescales the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-2, momentum: 0.9, batch_size: 8, epochs: 30, train_channels: None, clip_norm: None, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be a non-negative number".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.train_channels == Some(0) {
            return Err(Error::Config("train_channels must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("clip_norm must be a positive number".into()));
        }
        Ok(())
    }
}

/// Momentum buffers and progress, so training can resume bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub epochs_completed: usize,
    pub velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(model: &Model) -> Self {
        Self {
            epochs_completed: 0,
            velocity: model.parameters().iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }
}

fn check_dataset(model: &Model, data: &[Sample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut speakers: Vec<usize> = data.iter().map(|s| s.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    if speakers.len() < 2 {
        return Err(Error::DegenerateTask(speakers.len()));
    }
    if let Some(s) = data.iter().find(|s| s.speaker >= model.n_speakers) {
        return Err(Error::UnknownSpeaker(s.speaker));
    }
    Ok(())
}

/// Trains from scratch for `cfg.epochs` epochs and returns the per-epoch mean loss.
pub fn train_second_stage(model: &mut Model, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut state = OptimizerState::new(model);
    train_until(model, &mut state, data, cfg)
}

/// Continues SGD with momentum from `state` up to `cfg.epochs` epochs.
///
/// Epoch `e` shuffles with a generator seeded by `(cfg.seed, e)`, so a run
/// split across several calls matches an uninterrupted one.
pub fn train_until(model: &mut Model, state: &mut OptimizerState, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dataset(model, data)?;
    if state.velocity.len() != model.parameters().len() {
        return Err(Error::Data("optimizer state does not match the model".into()));
    }
    let mut curve = Vec::new();
    while state.epochs_completed < cfg.epochs {
        let epoch = state.epochs_completed;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            for &i in batch {
                let sample = match cfg.train_channels {
                    Some(n) => data[i].subsample(n, &mut rng)?,
                    None => data[i].clone(),
                };
                let (loss, _) = model.loss_and_backward(&sample.features, sample.scene.as_ref(), sample.speaker)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss {loss} on utterance {}", sample.id)));
                }
                total += loss;
            }
            let mut scale = 1.0 / batch.len() as f64;
            if let Some(max) = cfg.clip_norm {
                let norm = scale * model.parameters().iter().map(|p| p.grad.dot(&p.grad)).sum::<f64>().sqrt();
                if norm > max {
                    scale *= max / norm;
                }
            }
            for (p, v) in model.parameters_mut().into_iter().zip(state.velocity.iter_mut()) {
                for ((w, g), m) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(v.data_mut()) {
                    *m = cfg.momentum * *m + g * scale;
                    *w -= cfg.lr * *m;
                }
                if !p.value.is_finite() {
                    return Err(Error::NonFinite(format!("parameter {} diverged", p.name)));
                }
            }
        }
        let mean = total / data.len() as f64;
        debug!("epoch {epoch}: mean loss {mean:.6}");
        curve.push(mean);
        state.epochs_completed += 1;
    }
    model.zero_grad();
    Ok(curve)
}
