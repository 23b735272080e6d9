//! Benchmark runs: train the baseline and the meta-learner on a split,
//! evaluate both on the held-out objects, and turn sweeps into curves.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    relative_curve, relative_to_first, slope_difference_test, CurvePoint, MetricCurve, RelativeMode, SlopeTest,
};
use crate::error::{Error, Result};
use crate::graspworld::Dataset;
use crate::metalearn::{
    evaluate, train_baseline, train_meta, BaselineConfig, EvalMode, EvalOptions, EvalReport, InnerLoopConfig,
    MetaState, OuterLoopConfig, TargetLayout, TargetSpec, TrainLog,
};
use crate::nets::{init_params, Mlp, NetConfig, ParamSet, HAND_OUTPUT_DIM, JOINT_OUTPUT_DIM};
use crate::seed;
use crate::taskset::{InputNorm, Splits, TaskConfig, TaskPool, TaskSet};

/// Which targets the networks regress.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// 21 hand joints.
    HandOnly,
    /// 21 hand joints plus the 8 cuboid corners.
    Joint,
}

impl ExperimentMode {
    pub fn layout(self) -> TargetLayout {
        match self {
            ExperimentMode::HandOnly => TargetLayout::Hand,
            ExperimentMode::Joint => TargetLayout::HandObject,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            ExperimentMode::HandOnly => HAND_OUTPUT_DIM,
            ExperimentMode::Joint => JOINT_OUTPUT_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub body_layers: Vec<usize>,
    pub head_layers: Vec<usize>,
    pub inner: InnerLoopConfig,
    pub outer: OuterLoopConfig,
    pub baseline: BaselineConfig,
    pub task: TaskConfig,
    /// Model units per millimetre of target.
    pub target_scale: f64,
    /// Standardise inputs with reference-dataset statistics.
    pub normalize_inputs: bool,
    pub eval_runs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: ExperimentMode::HandOnly,
            body_layers: vec![128, 128],
            head_layers: vec![64],
            inner: InnerLoopConfig::default(),
            outer: OuterLoopConfig::default(),
            baseline: BaselineConfig::default(),
            task: TaskConfig::default(),
            target_scale: 1.0,
            normalize_inputs: true,
            eval_runs: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn net(&self, input_dim: usize) -> NetConfig {
        NetConfig {
            input_dim,
            body_layers: self.body_layers.clone(),
            head_layers: self.head_layers.clone(),
            output_dim: self.mode.output_dim(),
        }
    }

    pub fn spec(&self) -> TargetSpec {
        TargetSpec {
            layout: self.mode.layout(),
            scale: self.target_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        self.outer.validate()?;
        if !(self.target_scale > 0.0) {
            return Err(Error::Config("target scale must be positive".into()));
        }
        if self.eval_runs == 0 {
            return Err(Error::Config("eval runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Both models trained on one split.
#[derive(Clone, Debug)]
pub struct TrainedPair {
    pub net: NetConfig,
    pub meta: MetaState,
    pub baseline: ParamSet,
    pub meta_log: TrainLog,
    pub baseline_log: TrainLog,
}

impl TrainedPair {
    pub fn baseline_state(&self) -> MetaState {
        MetaState {
            params: self.baseline.clone(),
            inner_lrs: None,
            noise_logvar: None,
        }
    }
}

fn input_dim(pool: &TaskPool) -> Result<usize> {
    pool.sequences
        .first()
        .map(|s| s.inputs.cols())
        .ok_or_else(|| Error::Invalid("split has no sequences".into()))
}

/// Trains the baseline on pooled training samples and the meta-learner on
/// training tasks, both from the same initialisation and both selected on
/// the validation objects.
pub fn train_pair(ts: &TaskSet, cfg: &ExperimentConfig, seed: u64) -> Result<TrainedPair> {
    cfg.validate()?;
    let net = cfg.net(input_dim(&ts.train)?);
    let model = Mlp::new(net.clone())?;
    let spec = cfg.spec();
    let init = init_params(&net, seed::derive(seed, "init", 0))?;
    let val = (!ts.val.sequences.is_empty()).then_some(&ts.val);

    let pooled = ts.train.pooled()?;
    let (baseline, baseline_log) = train_baseline(
        &model,
        init.clone(),
        &pooled,
        val,
        &cfg.baseline,
        &spec,
        seed::derive(seed, "baseline", 0),
    )?;

    let train_tasks = crate::metalearn::TaskSource::tasks(&ts.train, None)?;
    let state = MetaState::new(init, &cfg.inner, net.feature_dim());
    let (meta, meta_log) = train_meta(
        &model,
        state,
        &train_tasks,
        val,
        &cfg.inner,
        &cfg.outer,
        &spec,
        seed::derive(seed, "meta", 0),
    )?;
    Ok(TrainedPair {
        net,
        meta,
        baseline,
        meta_log,
        baseline_log,
    })
}

/// Test-set scores of both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub meta: EvalReport,
    pub baseline: EvalReport,
}

/// Evaluates both models on `pool` with per-run support/query resampling.
pub fn evaluate_pair(pair: &TrainedPair, pool: &TaskPool, cfg: &ExperimentConfig, seed: u64) -> Result<PairScores> {
    let model = Mlp::new(pair.net.clone())?;
    let spec = cfg.spec();
    let eval_inner = InnerLoopConfig {
        regularizer_weight: None,
        ..cfg.inner.clone()
    };
    let opts = |mode| EvalOptions {
        mode,
        runs: cfg.eval_runs,
        seed: seed::derive(seed, "evaluate", 0),
        resample: true,
    };
    Ok(PairScores {
        meta: evaluate(&model, &pair.meta, pool, &eval_inner, &spec, &opts(EvalMode::Meta))?,
        baseline: evaluate(&model, &pair.baseline_state(), pool, &eval_inner, &spec, &opts(EvalMode::Baseline))?,
    })
}

/// One point of a macro sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaResult {
    pub omega: usize,
    pub splits: Splits,
    pub scores: PairScores,
    pub meta_log: TrainLog,
    pub baseline_log: TrainLog,
}

/// Task pools for `splits`, with inputs standardised when configured.
pub fn build_taskset(dataset: &Dataset, splits: &Splits, cfg: &ExperimentConfig) -> Result<TaskSet> {
    let mut ts = TaskSet::build(dataset, splits, &cfg.spec(), &cfg.task)?;
    if cfg.normalize_inputs {
        ts.normalize_inputs(&InputNorm::reference(&dataset.manifest.config)?)?;
    }
    Ok(ts)
}

pub fn run_omega(dataset: &Dataset, splits: &Splits, cfg: &ExperimentConfig, seed: u64) -> Result<(OmegaResult, TrainedPair)> {
    let ts = build_taskset(dataset, splits, cfg)?;
    let pair = train_pair(&ts, cfg, seed)?;
    let scores = evaluate_pair(&pair, &ts.test, cfg, seed)?;
    Ok((
        OmegaResult {
            omega: splits.test.len(),
            splits: splits.clone(),
            scores,
            meta_log: pair.meta_log.clone(),
            baseline_log: pair.baseline_log.clone(),
        },
        pair,
    ))
}

/// Which error a curve tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mpjpe,
    Mpcpe,
}

fn report_point(r: &EvalReport, metric: Metric, n: usize) -> Result<CurvePoint> {
    let (mean, variance) = match metric {
        Metric::Mpjpe => (r.mean.mpjpe, Some(r.variance)),
        Metric::Mpcpe => (r.mean.mpcpe, r.mpcpe_variance),
    };
    match (mean, variance) {
        (Some(mean), Some(variance)) => Ok(CurvePoint {
            n_test_objects: n,
            mean,
            variance,
        }),
        _ => Err(Error::Invalid(format!("report has no {metric:?}"))),
    }
}

/// Raw curves `(meta, baseline)` for one metric from `(n, scores)` points.
pub fn curves(points: &[(usize, &PairScores)], metric: Metric) -> Result<(MetricCurve, MetricCurve)> {
    let mut pts: Vec<(usize, &PairScores)> = points.to_vec();
    pts.sort_by_key(|p| p.0);
    let meta = pts.iter().map(|(n, s)| report_point(&s.meta, metric, *n)).collect::<Result<_>>()?;
    let base = pts.iter().map(|(n, s)| report_point(&s.baseline, metric, *n)).collect::<Result<_>>()?;
    Ok((MetricCurve::new("meta", meta)?, MetricCurve::new("baseline", base)?))
}

/// Relative curves and the slope-difference test between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub metric: Metric,
    pub meta: MetricCurve,
    pub baseline: MetricCurve,
    pub meta_relative: MetricCurve,
    pub baseline_relative: MetricCurve,
    pub meta_ratio: MetricCurve,
    pub baseline_ratio: MetricCurve,
    /// `fit_a` is the baseline, `fit_b` the meta-learner.
    pub test: SlopeTest,
}

impl CurveComparison {
    /// The meta-learner's relative error grows more slowly.
    pub fn meta_slope_smaller(&self) -> bool {
        self.test.fit_b.slope < self.test.fit_a.slope
    }
}

/// Aligns both curves (at the 5-object anchor when present, else at the
/// first point) and tests their slopes.
pub fn compare(meta: MetricCurve, baseline: MetricCurve, metric: Metric) -> Result<CurveComparison> {
    let align = |c: &MetricCurve, mode| {
        if c.points.iter().any(|p| p.n_test_objects == crate::analysis::ANCHOR_OBJECTS) {
            relative_curve(c, mode)
        } else {
            relative_to_first(c, mode)
        }
    };
    let meta_relative = align(&meta, RelativeMode::Subtract)?;
    let baseline_relative = align(&baseline, RelativeMode::Subtract)?;
    let test = slope_difference_test(
        &baseline_relative.xs(),
        &baseline_relative.ys(),
        &meta_relative.xs(),
        &meta_relative.ys(),
    )?;
    Ok(CurveComparison {
        metric,
        meta_ratio: align(&meta, RelativeMode::Ratio)?,
        baseline_ratio: align(&baseline, RelativeMode::Ratio)?,
        meta,
        baseline,
        meta_relative,
        baseline_relative,
        test,
    })
}

/// Head parameters after adapting `state` to tasks from `pool`, one vector
/// per task and per head tensor, plus `"head"` with all head tensors
/// concatenated. Resampled task draws are added until at least
/// `min_vectors` tasks are covered.
pub struct AdaptedHeads {
    pub names: Vec<String>,
    /// `vectors[k][t]` is tensor `names[k]` after adapting to task `t`.
    pub vectors: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
}

pub fn adapted_heads(
    net: &NetConfig,
    state: &MetaState,
    pool: &TaskPool,
    inner: &InnerLoopConfig,
    min_vectors: usize,
    seed: u64,
) -> Result<AdaptedHeads> {
    let model = Mlp::new(net.clone())?;
    let head = state.params.head_indices();
    if head.is_empty() {
        return Err(Error::Invalid("network has no head parameters".into()));
    }
    let mut names: Vec<String> = head.iter().map(|&i| state.params.params()[i].name.clone()).collect();
    names.push("head".into());
    let mut vectors = vec![Vec::new(); names.len()];
    let mut labels = Vec::new();
    let mut draw = 0u64;
    while labels.len() < min_vectors.max(1) {
        let run_seed = (draw > 0).then(|| seed::derive(seed, "embed_draw", draw));
        let tasks = crate::metalearn::TaskSource::tasks(pool, run_seed)?;
        if tasks.is_empty() {
            return Err(Error::Invalid("no tasks to adapt".into()));
        }
        for task in &tasks {
            let adapted = crate::metalearn::adapt_task(&model, state, &task.support, inner)?;
            let mut all = Vec::new();
            for (k, &i) in head.iter().enumerate() {
                let v = adapted.params.params()[i].tensor.data().to_vec();
                all.extend_from_slice(&v);
                vectors[k].push(v);
            }
            vectors[head.len()].push(all);
            labels.push(task.object_id);
        }
        draw += 1;
    }
    Ok(AdaptedHeads { names, vectors, labels })
}

/// Inner-loop gradient norms of `state` adapting to every canonical task of
/// `objects` for `inner.steps` steps.
pub fn norm_traces(
    net: &NetConfig,
    state: &MetaState,
    pool: &TaskPool,
    objects: &[usize],
    inner: &InnerLoopConfig,
) -> Result<Vec<crate::analysis::NormTrace>> {
    let model = Mlp::new(net.clone())?;
    let tasks = crate::metalearn::TaskSource::tasks(&pool.subset(objects), None)?;
    tasks
        .iter()
        .map(|t| {
            let a = crate::metalearn::adapt_task(&model, state, &t.support, inner)?;
            Ok(crate::analysis::NormTrace {
                object_id: t.object_id,
                norms: a.grad_norms,
            })
        })
        .collect()
}
