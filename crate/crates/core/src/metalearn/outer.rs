use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, Adam};
use super::config::{InnerLoopConfig, OuterLoopConfig};
use super::inner::{adapt, meta_loss, regularizer_penalty, MetaState};
use super::task::Task;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::nets::Regressor;
use crate::seed;

/// Summed meta-loss of a meta-batch and its gradient with respect to every
/// meta-parameter (ordered as [`MetaState::to_tensors`]), before clipping.
#[derive(Clone, Debug)]
pub struct MetaGradient {
    pub loss: f64,
    pub penalty: f64,
    pub grads: Vec<Tensor>,
}

/// Each task is adapted from the same `state` on its own graph; per-task
/// gradients are summed in task order. `noise_seed` keys the regularizer's
/// noise streams.
#[allow(clippy::too_many_arguments)]
pub fn meta_gradient<M: Regressor>(
    model: &M,
    state: &MetaState,
    tasks: &[Task],
    inner: &InnerLoopConfig,
    weights: &[f64],
    second_order: bool,
    noise_seed: u64,
) -> Result<MetaGradient> {
    if tasks.is_empty() {
        return Err(Error::Invalid("meta-batch is empty".into()));
    }
    let mut total: Option<Vec<Tensor>> = None;
    let mut loss = 0.0;
    for (k, task) in tasks.iter().enumerate() {
        let mut g = Graph::new();
        let bound = state.bind(&mut g, inner.head_only);
        let mut rng = seed::rng(noise_seed, "inner_noise", k as u64);
        let noise = inner.regularizer_active().then_some(&mut rng);
        let trace = adapt(model, &mut g, &bound, &task.support, inner, second_order, noise)?;
        let l = meta_loss(model, &mut g, &trace, &task.query, weights)?;
        loss += g.value(l).item();
        let leaves = bound.leaves();
        let grads = g.backward(l, &leaves, false)?;
        let grads: Vec<Tensor> = grads.iter().map(|v| g.value(*v).clone()).collect();
        total = Some(match total {
            None => grads,
            Some(mut acc) => {
                for (a, b) in acc.iter_mut().zip(&grads) {
                    a.data_mut()
                        .iter_mut()
                        .zip(b.data())
                        .for_each(|(x, y)| *x += y);
                }
                acc
            }
        });
    }
    let mut grads = total.expect("non-empty meta-batch");

    let mut penalty = 0.0;
    if let (Some(w), Some(lv)) = (inner.regularizer_weight, &state.noise_logvar) {
        if w > 0.0 {
            let mut g = Graph::new();
            let v = g.leaf(lv.clone());
            let p = regularizer_penalty(&mut g, v, w)?;
            penalty = g.value(p).item();
            let gp = g.backward(p, &[v], false)?;
            let last = grads.last_mut().expect("noise gradient slot");
            last.data_mut()
                .iter_mut()
                .zip(g.value(gp[0]).data())
                .for_each(|(x, y)| *x += y);
        }
    }
    if !(loss + penalty).is_finite() {
        return Err(Error::NonFinite(format!("meta-loss {}", loss + penalty)));
    }
    Ok(MetaGradient {
        loss,
        penalty,
        grads,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterStepReport {
    pub meta_loss: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub second_order: bool,
}

/// Meta-parameters plus the outer Adam state.
#[derive(Clone, Debug)]
pub struct MetaLearner {
    pub state: MetaState,
    pub inner: InnerLoopConfig,
    pub outer: OuterLoopConfig,
    adam: Adam,
}

impl MetaLearner {
    pub fn new(state: MetaState, inner: InnerLoopConfig, outer: OuterLoopConfig) -> Result<Self> {
        inner.validate()?;
        outer.validate()?;
        let adam = Adam::new(outer.meta_lr);
        Ok(Self {
            state,
            inner,
            outer,
            adam,
        })
    }

    /// One meta-update on `tasks` at `epoch`: second-order iff
    /// `epoch >= da_threshold`, MSL weights from the annealing schedule.
    pub fn outer_step<M: Regressor>(
        &mut self,
        model: &M,
        tasks: &[Task],
        epoch: usize,
        noise_seed: u64,
    ) -> Result<OuterStepReport> {
        let second_order = self.outer.second_order(epoch);
        let weights = self.outer.msl_weights(self.inner.steps, epoch);
        let mg = meta_gradient(
            model,
            &self.state,
            tasks,
            &self.inner,
            &weights,
            second_order,
            noise_seed,
        )?;
        let mut grads = mg.grads;
        let grad_norm = clip_global_norm(&mut grads, self.outer.clip_norm);
        let mut tensors = self.state.to_tensors();
        self.adam.step(&mut tensors, &grads);
        self.state.set_from_tensors(&tensors);
        Ok(OuterStepReport {
            meta_loss: mg.loss + mg.penalty,
            penalty: mg.penalty,
            grad_norm,
            second_order,
        })
    }
}
