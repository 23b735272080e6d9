use serde::{Deserialize, Serialize};

use crate::analysis::metrics;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Inputs and targets of a set of samples, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.shape().len() != 2 || targets.shape().len() != 2 || inputs.rows() != targets.rows() {
            return Err(Error::ShapeMismatch {
                op: "batch",
                lhs: inputs.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select_rows(idx),
        }
    }

    /// Row-wise concatenation.
    pub fn concat(batches: &[&Batch]) -> Result<Batch> {
        let first = batches
            .first()
            .ok_or_else(|| Error::Invalid("cannot concatenate zero batches".into()))?;
        let (di, dt) = (first.inputs.cols(), first.targets.cols());
        let mut xi = Vec::new();
        let mut xt = Vec::new();
        let mut n = 0;
        for b in batches {
            if b.inputs.cols() != di || b.targets.cols() != dt {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: vec![di, dt],
                    rhs: vec![b.inputs.cols(), b.targets.cols()],
                });
            }
            xi.extend_from_slice(b.inputs.data());
            xt.extend_from_slice(b.targets.data());
            n += b.len();
        }
        Batch::new(Tensor::matrix(n, di, xi)?, Tensor::matrix(n, dt, xt)?)
    }
}

/// One task: a support set for adaptation and a disjoint query set.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub object_id: usize,
    pub sequence_id: usize,
    pub support: Batch,
    pub query: Batch,
}

/// How target rows are laid out and scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLayout {
    /// Arbitrary regression targets; only MSE is reported.
    Generic,
    /// 63 hand coordinates.
    Hand,
    /// 63 hand coordinates followed by 24 cuboid-corner coordinates.
    HandObject,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub layout: TargetLayout,
    /// Model units per millimetre.
    pub scale: f64,
}

impl TargetSpec {
    pub fn generic() -> Self {
        Self {
            layout: TargetLayout::Generic,
            scale: 1.0,
        }
    }
}

/// Aggregated prediction errors over a set of rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mse: f64,
    pub mpjpe: Option<f64>,
    pub mpcpe: Option<f64>,
    pub count: usize,
}

impl Scores {
    /// Metric used for model selection: MPJPE when available, else MSE.
    pub fn selection_metric(&self) -> f64 {
        self.mpjpe.unwrap_or(self.mse)
    }
}

/// Running sums for [`Scores`], combined in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ScoreAccumulator {
    sq: f64,
    elems: usize,
    joint: f64,
    corner: f64,
    rows: usize,
}

impl ScoreAccumulator {
    pub fn add(&mut self, pred: &Tensor, target: &Tensor, spec: &TargetSpec) -> Result<()> {
        if pred.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "score",
                lhs: pred.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        self.sq += pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        self.elems += pred.len();
        let inv = 1.0 / spec.scale;
        for r in 0..pred.rows() {
            let (p, t) = (pred.row(r), target.row(r));
            match spec.layout {
                TargetLayout::Generic => {}
                TargetLayout::Hand | TargetLayout::HandObject => {
                    let pm: Vec<f64> = p[..63].iter().map(|v| v * inv).collect();
                    let tm: Vec<f64> = t[..63].iter().map(|v| v * inv).collect();
                    self.joint += metrics::mpjpe(&pm, &tm)?;
                    if spec.layout == TargetLayout::HandObject {
                        let pc: Vec<f64> = p[63..87].iter().map(|v| v * inv).collect();
                        let tc: Vec<f64> = t[63..87].iter().map(|v| v * inv).collect();
                        self.corner += metrics::mpcpe(&pc, &tc)?;
                    }
                }
            }
        }
        self.rows += pred.rows();
        Ok(())
    }

    pub fn finish(&self, spec: &TargetSpec) -> Scores {
        let rows = self.rows.max(1) as f64;
        Scores {
            mse: if self.elems == 0 {
                0.0
            } else {
                self.sq / self.elems as f64
            },
            mpjpe: (spec.layout != TargetLayout::Generic).then(|| self.joint / rows),
            mpcpe: (spec.layout == TargetLayout::HandObject).then(|| self.corner / rows),
            count: self.rows,
        }
    }
}

/// Supplies tasks for evaluation. `None` gives the canonical tasks; a run
/// seed asks for a fresh support/query resampling.
pub trait TaskSource {
    fn tasks(&self, run_seed: Option<u64>) -> Result<Vec<Task>>;
}

impl TaskSource for [Task] {
    fn tasks(&self, _run_seed: Option<u64>) -> Result<Vec<Task>> {
        Ok(self.to_vec())
    }
}

impl TaskSource for Vec<Task> {
    fn tasks(&self, _run_seed: Option<u64>) -> Result<Vec<Task>> {
        Ok(self.clone())
    }
}
