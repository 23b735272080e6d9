use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inner-loop (task adaptation) settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopConfig {
    pub steps: usize,
    pub base_lr: f64,
    /// ANIL: adapt only the head.
    pub head_only: bool,
    /// Learn one rate per (adapted tensor, step), initialised to `base_lr`.
    pub learnable_lr: bool,
    /// Weight of the noise-bottleneck memorization regularizer. `None`
    /// removes the regularizer entirely.
    pub regularizer_weight: Option<f64>,
    /// Global-norm gradient clipping inside adaptation.
    pub clip_norm: Option<f64>,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        Self {
            steps: 15,
            base_lr: 1e-5,
            head_only: true,
            learnable_lr: false,
            regularizer_weight: Some(1e-4),
            clip_norm: Some(10.0),
        }
    }
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("inner steps must be >= 1".into()));
        }
        if !(self.base_lr >= 0.0) {
            return Err(Error::Config(format!("inner lr must be >= 0, got {}", self.base_lr)));
        }
        if let Some(w) = self.regularizer_weight {
            if !(w >= 0.0) {
                return Err(Error::Config(format!("regularizer weight must be >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Noise injection and KL penalty are active.
    pub fn regularizer_active(&self) -> bool {
        self.regularizer_weight.is_some_and(|w| w > 0.0)
    }
}

/// Outer-loop (meta-update) settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterLoopConfig {
    pub meta_lr: f64,
    pub meta_batch: usize,
    pub epochs: usize,
    /// Multi-step loss. When off, only the final step's query loss counts.
    pub msl: bool,
    /// Fraction of epochs after which all MSL weight sits on the last step.
    pub msl_anneal_fraction: f64,
    /// Epochs before this index use first-order inner gradients.
    pub da_threshold: usize,
    pub clip_norm: Option<f64>,
    /// Run validation every this many epochs (and always on the last).
    pub val_every: usize,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        Self::with_epochs(300)
    }
}

impl OuterLoopConfig {
    /// Defaults with derivative-order annealing over the first 10% of epochs.
    pub fn with_epochs(epochs: usize) -> Self {
        Self {
            meta_lr: 1e-2,
            meta_batch: 8,
            epochs,
            msl: true,
            msl_anneal_fraction: 0.6,
            da_threshold: (epochs as f64 * 0.1).round() as usize,
            clip_norm: Some(10.0),
            val_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.meta_lr >= 0.0) {
            return Err(Error::Config(format!("meta lr must be >= 0, got {}", self.meta_lr)));
        }
        if self.meta_batch == 0 {
            return Err(Error::Config("meta batch must be >= 1".into()));
        }
        if !(self.msl_anneal_fraction > 0.0) {
            return Err(Error::Config("msl anneal fraction must be > 0".into()));
        }
        Ok(())
    }

    pub fn second_order(&self, epoch: usize) -> bool {
        epoch >= self.da_threshold
    }

    /// Per-step query-loss weights at `epoch`; they always sum to 1.
    pub fn msl_weights(&self, steps: usize, epoch: usize) -> Vec<f64> {
        if !self.msl {
            return final_step_weights(steps);
        }
        msl_weights(steps, epoch, self.epochs, self.msl_anneal_fraction)
    }
}

pub fn final_step_weights(steps: usize) -> Vec<f64> {
    let mut w = vec![0.0; steps];
    if let Some(last) = w.last_mut() {
        *last = 1.0;
    }
    w
}

/// Uniform at epoch 0, shifting mass linearly onto the last step until
/// `anneal_fraction · epochs`, then `(0, …, 0, 1)`.
pub fn msl_weights(steps: usize, epoch: usize, epochs: usize, anneal_fraction: f64) -> Vec<f64> {
    if steps == 0 {
        return Vec::new();
    }
    let horizon = anneal_fraction * epochs as f64;
    let progress = if horizon <= 0.0 {
        1.0
    } else {
        (epoch as f64 / horizon).min(1.0)
    };
    if progress >= 1.0 {
        return final_step_weights(steps);
    }
    let s = steps as f64;
    let early = (1.0 - progress) / s;
    let mut w = vec![early; steps];
    w[steps - 1] = 1.0 - early * (s - 1.0);
    w
}
