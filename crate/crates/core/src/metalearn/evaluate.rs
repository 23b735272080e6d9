use serde::{Deserialize, Serialize};

use super::config::InnerLoopConfig;
use super::inner::{adapt, MetaState};
use super::task::{Batch, ScoreAccumulator, Scores, TargetSpec, Task, TaskSource};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nets::{ParamSet, Regressor};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Adapt on each task's support set, then predict its query set.
    Meta,
    /// Predict query sets directly.
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub runs: usize,
    pub seed: u64,
    /// Draw a fresh support/query split per run.
    pub resample: bool,
}

impl EvalOptions {
    pub fn new(mode: EvalMode, seed: u64) -> Self {
        Self {
            mode,
            runs: 5,
            seed,
            resample: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub run: usize,
    pub seed: u64,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub runs: Vec<RunScore>,
    pub mean: Scores,
    /// Variance across runs of the per-run MPJPE (or MSE for generic targets).
    pub variance: f64,
    pub mpcpe_variance: Option<f64>,
}

/// Result of adapting detached parameters to one support set.
#[derive(Clone, Debug)]
pub struct AdaptedTask {
    pub params: ParamSet,
    pub support_losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
}

/// First-order adaptation with `inner.steps` steps and no noise; returns
/// concrete parameter values.
pub fn adapt_task<M: Regressor>(
    model: &M,
    state: &MetaState,
    support: &Batch,
    inner: &InnerLoopConfig,
) -> Result<AdaptedTask> {
    let mut g = Graph::new();
    let bound = state.bind(&mut g, inner.head_only);
    let trace = adapt(model, &mut g, &bound, support, inner, false, None)?;
    Ok(AdaptedTask {
        params: state.params.with_values(&g, trace.final_params()),
        support_losses: trace.support_losses,
        grad_norms: trace.grad_norms,
    })
}

fn predict_query<M: Regressor>(
    model: &M,
    state: &MetaState,
    task: &Task,
    inner: &InnerLoopConfig,
    mode: EvalMode,
) -> Result<crate::autodiff::Tensor> {
    let mut g = Graph::new();
    let bound = state.bind(&mut g, inner.head_only);
    let params: Vec<Var> = match mode {
        EvalMode::Baseline => bound.params.clone(),
        EvalMode::Meta => {
            let trace = adapt(model, &mut g, &bound, &task.support, inner, false, None)?;
            trace.final_params().to_vec()
        }
    };
    let x = g.leaf(task.query.inputs.clone());
    let y = model.forward(&mut g, &params, x)?;
    Ok(g.value(y).clone())
}

/// Scores tasks from `source` over `opts.runs` resamplings.
pub fn evaluate<M: Regressor, S: TaskSource + ?Sized>(
    model: &M,
    state: &MetaState,
    source: &S,
    inner: &InnerLoopConfig,
    spec: &TargetSpec,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if opts.runs == 0 {
        return Err(Error::Config("evaluation needs at least one run".into()));
    }
    let mut runs = Vec::with_capacity(opts.runs);
    for run in 0..opts.runs {
        let run_seed = seed::derive(opts.seed, "eval_run", run as u64);
        let tasks = source.tasks(opts.resample.then_some(run_seed))?;
        if tasks.is_empty() {
            return Err(Error::Invalid("no tasks to evaluate".into()));
        }
        let mut acc = ScoreAccumulator::default();
        for task in &tasks {
            let pred = predict_query(model, state, task, inner, opts.mode)?;
            acc.add(&pred, &task.query.targets, spec)?;
        }
        runs.push(RunScore {
            run,
            seed: run_seed,
            scores: acc.finish(spec),
        });
    }
    let n = runs.len() as f64;
    let mean_of = |f: &dyn Fn(&Scores) -> f64| runs.iter().map(|r| f(&r.scores)).sum::<f64>() / n;
    let var_of = |f: &dyn Fn(&Scores) -> f64| {
        let m = mean_of(f);
        runs.iter().map(|r| (f(&r.scores) - m).powi(2)).sum::<f64>() / n
    };
    let mean = Scores {
        mse: mean_of(&|s| s.mse),
        mpjpe: runs[0].scores.mpjpe.map(|_| mean_of(&|s| s.mpjpe.unwrap_or(0.0))),
        mpcpe: runs[0].scores.mpcpe.map(|_| mean_of(&|s| s.mpcpe.unwrap_or(0.0))),
        count: runs.iter().map(|r| r.scores.count).sum(),
    };
    let variance = var_of(&|s| s.selection_metric());
    let mpcpe_variance = mean
        .mpcpe
        .map(|_| var_of(&|s| s.mpcpe.unwrap_or(0.0)));
    Ok(EvalReport {
        mode: opts.mode,
        runs,
        mean,
        variance,
        mpcpe_variance,
    })
}
