//! Baseline supervised training and the ANIL/MAML meta-learner with
//! multi-step loss, derivative-order annealing, learnable per-step rates and
//! a noise-bottleneck memorization regularizer.

mod adam;
mod config;
mod evaluate;
mod inner;
mod outer;
pub mod sinusoid;
mod task;
mod train;

pub use adam::{clip_global_norm, Adam};
pub use config::{final_step_weights, msl_weights, InnerLoopConfig, OuterLoopConfig};
pub use evaluate::{adapt_task, evaluate, AdaptedTask, EvalMode, EvalOptions, EvalReport, RunScore};
pub use inner::{
    adapt, adapted_indices, meta_loss, regularizer_penalty, AdaptationTrace, BoundState, MetaState,
};
pub use outer::{meta_gradient, MetaGradient, MetaLearner, OuterStepReport};
pub use task::{Batch, ScoreAccumulator, Scores, TargetLayout, TargetSpec, Task, TaskSource};
pub use train::{
    train_baseline, train_meta, BaselineConfig, BaselineOptimizer, EpochLog, TrainLog,
};
