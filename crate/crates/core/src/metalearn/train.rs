use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, Adam};
use super::config::{InnerLoopConfig, OuterLoopConfig};
use super::evaluate::{evaluate, EvalMode, EvalOptions};
use super::inner::MetaState;
use super::outer::MetaLearner;
use super::task::{Batch, TargetSpec, Task, TaskSource};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::nets::{ParamSet, Regressor};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean meta-loss (or mini-batch loss for the baseline) over the epoch.
    pub train_loss: f64,
    /// Validation MPJPE (MSE for generic targets), when validation ran.
    pub val_metric: Option<f64>,
    pub second_order: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_metric,second_order,selected\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_metric.map_or(String::new(), |v| v.to_string()),
                e.second_order.map_or(String::new(), |v| v.to_string()),
                (self.best_epoch == Some(e.epoch)) as u8
            );
        }
        s
    }
}

/// Tracks the best-by-validation checkpoint.
struct Selector<T> {
    best: Option<(f64, usize, T)>,
}

impl<T: Clone> Selector<T> {
    fn offer(&mut self, metric: f64, epoch: usize, value: &T) {
        if self.best.as_ref().map_or(true, |(m, _, _)| metric < *m) {
            self.best = Some((metric, epoch, value.clone()));
        }
    }
}

fn should_validate(epoch: usize, epochs: usize, every: usize) -> bool {
    epoch + 1 == epochs || (every > 0 && (epoch + 1) % every == 0)
}

/// Full meta-training loop: per epoch, shuffle, step over meta-batches,
/// validate, and keep the best-by-validation state. Without validation tasks
/// the final state is returned.
#[allow(clippy::too_many_arguments)]
pub fn train_meta<M: Regressor, S: TaskSource + ?Sized>(
    model: &M,
    init: MetaState,
    train: &[Task],
    val: Option<&S>,
    inner: &InnerLoopConfig,
    outer: &OuterLoopConfig,
    spec: &TargetSpec,
    seed: u64,
) -> Result<(MetaState, TrainLog)> {
    if train.is_empty() {
        return Err(Error::Invalid("no training tasks".into()));
    }
    let mut learner = MetaLearner::new(init, inner.clone(), outer.clone())?;
    let mut log = TrainLog::default();
    let mut selector = Selector { best: None };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let val_inner = InnerLoopConfig {
        regularizer_weight: None,
        ..inner.clone()
    };
    for epoch in 0..outer.epochs {
        let mut rng = seed::rng(seed, "meta_shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(outer.meta_batch).enumerate() {
            let tasks: Vec<Task> = chunk.iter().map(|&i| train[i].clone()).collect();
            let noise_seed = seed::derive(seed, "meta_noise", ((epoch as u64) << 32) | b as u64);
            let report = learner.outer_step(model, &tasks, epoch, noise_seed)?;
            loss_sum += report.meta_loss;
            batches += 1;
        }
        let val_metric = match val {
            Some(v) if should_validate(epoch, outer.epochs, outer.val_every) => {
                let opts = EvalOptions {
                    mode: EvalMode::Meta,
                    runs: 1,
                    seed,
                    resample: false,
                };
                let report = evaluate(model, &learner.state, v, &val_inner, spec, &opts)?;
                Some(report.mean.selection_metric())
            }
            _ => None,
        };
        if let Some(m) = val_metric {
            selector.offer(m, epoch, &learner.state);
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_metric,
            second_order: Some(outer.second_order(epoch)),
        });
    }
    match selector.best {
        Some((_, epoch, state)) => {
            log.best_epoch = Some(epoch);
            Ok((state, log))
        }
        None => {
            log.best_epoch = outer.epochs.checked_sub(1);
            Ok((learner.state, log))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineOptimizer {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub optimizer: BaselineOptimizer,
    pub clip_norm: Option<f64>,
    pub val_every: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-3,
            epochs: 100,
            weight_decay: 1e-4,
            optimizer: BaselineOptimizer::Adam,
            clip_norm: Some(10.0),
            val_every: 1,
        }
    }
}

/// Mini-batch training on pooled samples with decoupled weight decay.
pub fn train_baseline<M: Regressor, S: TaskSource + ?Sized>(
    model: &M,
    init: ParamSet,
    data: &Batch,
    val: Option<&S>,
    cfg: &BaselineConfig,
    spec: &TargetSpec,
    seed: u64,
) -> Result<(ParamSet, TrainLog)> {
    if data.is_empty() {
        return Err(Error::Invalid("no training samples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut params = init;
    let mut tensors = params.tensors();
    let mut adam = Adam::new(cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut log = TrainLog::default();
    let mut selector = Selector { best: None };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let eval_inner = InnerLoopConfig {
        regularizer_weight: None,
        ..InnerLoopConfig::default()
    };
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed, "baseline_shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let mut g = Graph::new();
            let vars: Vec<_> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
            let x = g.leaf(batch.inputs);
            let y = g.leaf(batch.targets);
            let pred = model.forward(&mut g, &vars, x)?;
            let loss = g.mse(pred, y)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("baseline loss at epoch {epoch}")));
            }
            let grads = g.backward(loss, &vars, false)?;
            let mut grads: Vec<Tensor> = grads.iter().map(|v| g.value(*v).clone()).collect();
            clip_global_norm(&mut grads, cfg.clip_norm);
            match cfg.optimizer {
                BaselineOptimizer::Adam => adam.step(&mut tensors, &grads),
                BaselineOptimizer::Sgd => sgd_step(&mut tensors, &grads, cfg.lr, cfg.weight_decay),
            }
            loss_sum += lv;
            batches += 1;
        }
        for (p, t) in params.params_mut().iter_mut().zip(&tensors) {
            p.tensor = t.clone();
        }
        let val_metric = match val {
            Some(v) if should_validate(epoch, cfg.epochs, cfg.val_every) => {
                let state = MetaState {
                    params: params.clone(),
                    inner_lrs: None,
                    noise_logvar: None,
                };
                let opts = EvalOptions {
                    mode: EvalMode::Baseline,
                    runs: 1,
                    seed,
                    resample: false,
                };
                let r = evaluate(model, &state, v, &eval_inner, spec, &opts)?;
                Some(r.mean.selection_metric())
            }
            _ => None,
        };
        if let Some(m) = val_metric {
            selector.offer(m, epoch, &params);
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_metric,
            second_order: None,
        });
    }
    match selector.best {
        Some((_, epoch, best)) => {
            log.best_epoch = Some(epoch);
            Ok((best, log))
        }
        None => {
            log.best_epoch = cfg.epochs.checked_sub(1);
            Ok((params, log))
        }
    }
}

fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f64, wd: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
            *x -= lr * (d + wd * *x);
        }
    }
}
