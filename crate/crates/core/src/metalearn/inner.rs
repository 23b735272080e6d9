//! Differentiable task adaptation and the multi-step query loss.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::InnerLoopConfig;
use super::task::Batch;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{ParamSet, Partition, Regressor};
use crate::seed::Rng;

/// Everything the outer loop learns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub params: ParamSet,
    /// Per adapted tensor, per step inner learning rates.
    pub inner_lrs: Option<Vec<Vec<f64>>>,
    /// Log-variance of the head-input noise, shape `1 × feature_dim`.
    pub noise_logvar: Option<Tensor>,
}

impl MetaState {
    /// Wraps `params` with the extra meta-parameters `cfg` asks for.
    pub fn new(params: ParamSet, cfg: &InnerLoopConfig, feature_dim: usize) -> Self {
        let adapted = adapted_indices(&params, cfg.head_only).len();
        Self {
            inner_lrs: cfg
                .learnable_lr
                .then(|| vec![vec![cfg.base_lr; cfg.steps]; adapted]),
            noise_logvar: cfg
                .regularizer_active()
                .then(|| Tensor::zeros(&[1, feature_dim])),
            params,
        }
    }

    /// All meta-parameters as tensors: network params, then rates, then noise.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = self.params.tensors();
        if let Some(lrs) = &self.inner_lrs {
            for row in lrs {
                out.extend(row.iter().map(|&v| Tensor::scalar(v)));
            }
        }
        if let Some(lv) = &self.noise_logvar {
            out.push(lv.clone());
        }
        out
    }

    pub fn set_from_tensors(&mut self, tensors: &[Tensor]) {
        let mut it = tensors.iter();
        for p in self.params.params_mut() {
            p.tensor = it.next().expect("param tensor").clone();
        }
        if let Some(lrs) = &mut self.inner_lrs {
            for row in lrs.iter_mut() {
                for v in row.iter_mut() {
                    *v = it.next().expect("rate tensor").item();
                }
            }
        }
        if let Some(lv) = &mut self.noise_logvar {
            *lv = it.next().expect("noise tensor").clone();
        }
    }

    pub fn bind(&self, g: &mut Graph, head_only: bool) -> BoundState {
        let params = self.params.bind(g);
        let lrs = self.inner_lrs.as_ref().map(|rows| {
            rows.iter()
                .map(|row| row.iter().map(|&v| g.leaf(Tensor::scalar(v))).collect())
                .collect()
        });
        let logvar = self.noise_logvar.as_ref().map(|t| g.leaf(t.clone()));
        BoundState {
            adapted: adapted_indices(&self.params, head_only),
            head_only,
            params,
            lrs,
            logvar,
        }
    }
}

pub fn adapted_indices(params: &ParamSet, head_only: bool) -> Vec<usize> {
    if head_only {
        params.indices(Partition::Head)
    } else {
        (0..params.len()).collect()
    }
}

/// A [`MetaState`] whose tensors are leaves of a graph.
#[derive(Clone, Debug)]
pub struct BoundState {
    pub params: Vec<Var>,
    /// Indices into `params` that the inner loop updates.
    pub adapted: Vec<usize>,
    pub head_only: bool,
    pub lrs: Option<Vec<Vec<Var>>>,
    pub logvar: Option<Var>,
}

impl BoundState {
    /// Leaves in the same order as [`MetaState::to_tensors`].
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = self.params.clone();
        if let Some(lrs) = &self.lrs {
            for row in lrs {
                out.extend(row);
            }
        }
        out.extend(self.logvar);
        out
    }
}

/// Adapted parameters after every step, plus per-step diagnostics.
#[derive(Clone, Debug)]
pub struct AdaptationTrace {
    /// `psi[s]` is the full parameter list after step `s + 1`.
    pub psi: Vec<Vec<Var>>,
    pub support_losses: Vec<f64>,
    /// L2 norm of the support-loss gradient over the adapted tensors,
    /// measured before clipping.
    pub grad_norms: Vec<f64>,
    pub head_only: bool,
    /// Body parameters (unchanged by head-only adaptation).
    pub theta: Vec<Var>,
}

impl AdaptationTrace {
    pub fn steps(&self) -> usize {
        self.psi.len()
    }

    pub fn final_params(&self) -> &[Var] {
        self.psi.last().map_or(&self.theta[..], |p| &p[..])
    }
}

/// Runs `cfg.steps` SGD steps on the support MSE starting from `theta`.
///
/// With `second_order` the inner gradients stay on the graph, so the
/// returned parameters are differentiable functions of `theta` through the
/// gradients themselves. Without it they are detached (first-order mode).
/// `noise` enables the head-input noise of the memorization regularizer;
/// it is ignored when `theta` carries no noise log-variance.
pub fn adapt<M: Regressor>(
    model: &M,
    g: &mut Graph,
    theta: &BoundState,
    support: &Batch,
    cfg: &InnerLoopConfig,
    second_order: bool,
    mut noise: Option<&mut Rng>,
) -> Result<AdaptationTrace> {
    if support.is_empty() {
        return Err(Error::Invalid("support set is empty".into()));
    }
    let x = g.leaf(support.inputs.clone());
    let y = g.leaf(support.targets.clone());
    let shared_features = if theta.head_only {
        Some(model.body(g, &theta.params, x)?)
    } else {
        None
    };
    let noise_std = match (theta.logvar, noise.is_some()) {
        (Some(lv), true) => {
            let half = g.scale(lv, 0.5)?;
            Some(g.exp(half)?)
        }
        _ => None,
    };

    let mut psi = theta.params.clone();
    let mut trace = AdaptationTrace {
        psi: Vec::with_capacity(cfg.steps),
        support_losses: Vec::with_capacity(cfg.steps),
        grad_norms: Vec::with_capacity(cfg.steps),
        head_only: theta.head_only,
        theta: theta.params.clone(),
    };
    for step in 0..cfg.steps {
        let mut h = match shared_features {
            Some(h) => h,
            None => model.body(g, &psi, x)?,
        };
        if let (Some(std), Some(rng)) = (noise_std, noise.as_deref_mut()) {
            let shape = g.shape(h).to_vec();
            let eps: Vec<f64> = (0..shape.iter().product::<usize>())
                .map(|_| StandardNormal.sample(rng))
                .collect();
            let e = g.leaf(Tensor::new(shape, eps)?);
            let scaled = g.mul_row(e, std)?;
            h = g.add(h, scaled)?;
        }
        let pred = model.head(g, &psi, h)?;
        let loss = g.mse(pred, y)?;
        let lv = g.value(loss).item();
        if !lv.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let wrt: Vec<Var> = theta.adapted.iter().map(|&i| psi[i]).collect();
        let grads = g.backward(loss, &wrt, second_order)?;
        let norm = grads
            .iter()
            .map(|v| g.value(*v).norm_sq())
            .sum::<f64>()
            .sqrt();
        let factor = match cfg.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };

        let mut next = psi.clone();
        for (slot, (&i, &grad)) in theta.adapted.iter().zip(&grads).enumerate() {
            let grad = if factor != 1.0 { g.scale(grad, factor)? } else { grad };
            let delta = match &theta.lrs {
                Some(lrs) => g.mul_scalar(lrs[slot][step], grad)?,
                None => g.scale(grad, cfg.base_lr)?,
            };
            next[i] = g.sub(psi[i], delta)?;
        }
        psi = next;
        trace.support_losses.push(lv);
        trace.grad_norms.push(norm);
        trace.psi.push(psi.clone());
    }
    Ok(trace)
}

/// `Σ_s w_s · MSE(query | ψ_s)`. Zero-weight steps are skipped.
pub fn meta_loss<M: Regressor>(
    model: &M,
    g: &mut Graph,
    trace: &AdaptationTrace,
    query: &Batch,
    weights: &[f64],
) -> Result<Var> {
    if weights.len() != trace.steps() {
        return Err(Error::Invalid(format!(
            "{} loss weights for {} adaptation steps",
            weights.len(),
            trace.steps()
        )));
    }
    let x = g.leaf(query.inputs.clone());
    let y = g.leaf(query.targets.clone());
    let shared = if trace.head_only {
        Some(model.body(g, &trace.theta, x)?)
    } else {
        None
    };
    let mut total: Option<Var> = None;
    for (psi, &w) in trace.psi.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let h = match shared {
            Some(h) => h,
            None => model.body(g, psi, x)?,
        };
        let pred = model.head(g, psi, h)?;
        let l = g.mse(pred, y)?;
        let term = if w == 1.0 { l } else { g.scale(l, w)? };
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => Ok(g.leaf(Tensor::scalar(0.0))),
    }
}

/// `weight · Σ_j KL(N(0, σ_j²) ‖ N(0, 1))` with `σ_j² = exp(logvar_j)`.
pub fn regularizer_penalty(g: &mut Graph, logvar: Var, weight: f64) -> Result<Var> {
    // KL = ½(σ² − 1 − ln σ²)
    let var = g.exp(logvar)?;
    let d = g.sub(var, logvar)?;
    let s = g.sum(d)?;
    let n = g.value(logvar).len() as f64;
    let kl_sum = g.scale(s, 0.5)?;
    let offset = g.leaf(Tensor::scalar(-0.5 * n));
    let kl = g.add(kl_sum, offset)?;
    g.scale(kl, weight)
}
