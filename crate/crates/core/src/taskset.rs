//! Objects-left-out splits and few-shot task assembly.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graspworld::{Dataset, DatasetConfig};
use crate::metalearn::{Batch, TargetLayout, TargetSpec, Task, TaskSource};
use crate::seed;

/// Validation objects held out alongside `omega` test objects:
/// `min(5, ⌊Ω/2⌋ + Ω mod 2)`.
pub fn validation_count(omega: usize) -> usize {
    (omega / 2 + omega % 2).min(5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub omega: usize,
    pub seed: u64,
    pub catalog_size: usize,
    /// Draw every Ω from one permutation so test sets nest as Ω grows.
    pub nested: bool,
}

impl SplitSpec {
    pub fn new(omega: usize, seed: u64, catalog_size: usize) -> Self {
        Self {
            omega,
            seed,
            catalog_size,
            nested: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega == 0 {
            return Err(Error::Config("omega must be >= 1".into()));
        }
        let held = self.omega + validation_count(self.omega);
        if held >= self.catalog_size {
            return Err(Error::Config(format!(
                "omega {} holds out {held} of {} objects, leaving no training objects",
                self.omega, self.catalog_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn object_permutation(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut seed::rng(seed, "object_permutation", stream));
    ids
}

/// First Ω objects of a seeded permutation go to test, the next
/// `validation_count(Ω)` to validation, the rest to training.
pub fn make_splits(spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let stream = if spec.nested { 0 } else { spec.omega as u64 };
    let perm = object_permutation(spec.catalog_size, spec.seed, stream);
    let v = validation_count(spec.omega);
    let mut train = perm[spec.omega + v..].to_vec();
    train.sort_unstable();
    Ok(Splits {
        test: perm[..spec.omega].to_vec(),
        val: perm[spec.omega..spec.omega + v].to_vec(),
        train,
    })
}

/// How a sequence's frames become tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// One task per sequence.
    PerSequence,
    /// ⌊T/(K+Q)⌋ disjoint tasks per sequence of T frames.
    Partition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub k: usize,
    pub q: usize,
    pub mode: TaskMode,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            k: 10,
            q: 50,
            mode: TaskMode::Partition,
            seed: 0,
        }
    }
}

/// One sequence's samples as model-ready matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceData {
    pub object_id: usize,
    pub sequence_id: usize,
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl SequenceData {
    pub fn frames(&self) -> usize {
        self.inputs.rows()
    }
}

/// Sample indices of one task within its sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskIndices {
    pub object_id: usize,
    pub sequence_id: usize,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

/// Sequences of one split; produces tasks on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskPool {
    pub sequences: Vec<SequenceData>,
    pub cfg: TaskConfig,
}

impl TaskPool {
    pub fn new(sequences: Vec<SequenceData>, cfg: TaskConfig) -> Result<Self> {
        if cfg.k == 0 || cfg.q == 0 {
            return Err(Error::Config("K and Q must be >= 1".into()));
        }
        for s in &sequences {
            if s.frames() < cfg.k + cfg.q {
                return Err(Error::Invalid(format!(
                    "sequence {} has {} frames, tasks need K+Q = {}",
                    s.sequence_id,
                    s.frames(),
                    cfg.k + cfg.q
                )));
            }
        }
        Ok(Self { sequences, cfg })
    }

    /// Support/query indices for every task. `None` gives the canonical
    /// draw; a run seed gives a fresh one.
    pub fn indices(&self, run_seed: Option<u64>) -> Vec<TaskIndices> {
        let base = run_seed.unwrap_or(self.cfg.seed);
        let tag = if run_seed.is_some() { "task_resample" } else { "task_sample" };
        let per = self.cfg.k + self.cfg.q;
        let mut out = Vec::new();
        for s in &self.sequences {
            let mut idx: Vec<usize> = (0..s.frames()).collect();
            idx.shuffle(&mut seed::rng(base, tag, s.sequence_id as u64));
            let count = match self.cfg.mode {
                TaskMode::PerSequence => 1,
                TaskMode::Partition => s.frames() / per,
            };
            for c in idx.chunks_exact(per).take(count) {
                out.push(TaskIndices {
                    object_id: s.object_id,
                    sequence_id: s.sequence_id,
                    support: c[..self.cfg.k].to_vec(),
                    query: c[self.cfg.k..].to_vec(),
                });
            }
        }
        out
    }

    pub fn objects(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.sequences.iter().map(|s| s.object_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Every sample of the split as one batch.
    pub fn pooled(&self) -> Result<Batch> {
        let batches: Vec<Batch> = self
            .sequences
            .iter()
            .map(|s| Batch::new(s.inputs.clone(), s.targets.clone()))
            .collect::<Result<_>>()?;
        Batch::concat(&batches.iter().collect::<Vec<_>>())
    }

    pub fn num_samples(&self) -> usize {
        self.sequences.iter().map(SequenceData::frames).sum()
    }

    /// Restricts the pool to sequences of the given objects.
    pub fn subset(&self, objects: &[usize]) -> TaskPool {
        TaskPool {
            sequences: self
                .sequences
                .iter()
                .filter(|s| objects.contains(&s.object_id))
                .cloned()
                .collect(),
            cfg: self.cfg.clone(),
        }
    }
}

impl TaskSource for TaskPool {
    fn tasks(&self, run_seed: Option<u64>) -> Result<Vec<Task>> {
        let by_id: std::collections::HashMap<usize, &SequenceData> =
            self.sequences.iter().map(|s| (s.sequence_id, s)).collect();
        self.indices(run_seed)
            .into_iter()
            .map(|t| {
                let s = by_id[&t.sequence_id];
                Ok(Task {
                    object_id: t.object_id,
                    sequence_id: t.sequence_id,
                    support: Batch::new(s.inputs.select_rows(&t.support), s.targets.select_rows(&t.support))?,
                    query: Batch::new(s.inputs.select_rows(&t.query), s.targets.select_rows(&t.query))?,
                })
            })
            .collect()
    }
}

/// Canonical tasks over `sequences`: one task per sequence (or per
/// `K+Q`-frame block in partition mode), support and query disjoint.
pub fn build_tasks(sequences: Vec<SequenceData>, cfg: &TaskConfig) -> Result<Vec<Task>> {
    TaskPool::new(sequences, cfg.clone())?.tasks(None)
}

/// Converts dataset sequences of the given objects to matrices, with targets
/// laid out and scaled by `spec`.
pub fn sequence_data(dataset: &Dataset, objects: &[usize], spec: &TargetSpec) -> Result<Vec<SequenceData>> {
    let mut out = Vec::new();
    for s in &dataset.sequences {
        if !objects.contains(&s.info.object_id) {
            continue;
        }
        let n = s.samples.len();
        let d_in = s.samples.first().map_or(0, |x| x.input.len());
        let mut x = Vec::with_capacity(n * d_in);
        let mut y = Vec::new();
        for smp in &s.samples {
            x.extend_from_slice(&smp.input);
            y.extend(smp.target_hand.iter().map(|v| v * spec.scale));
            match spec.layout {
                TargetLayout::Hand => {}
                TargetLayout::HandObject => {
                    let c = smp
                        .target_corners
                        .as_ref()
                        .ok_or_else(|| Error::Invalid(format!("sequence {} lacks corner targets", s.info.sequence_id)))?;
                    y.extend(c.iter().map(|v| v * spec.scale));
                }
                TargetLayout::Generic => {
                    return Err(Error::Config("grasp tasks need a hand or hand_object layout".into()));
                }
            }
        }
        let d_out = y.len() / n.max(1);
        out.push(SequenceData {
            object_id: s.info.object_id,
            sequence_id: s.info.sequence_id,
            inputs: Tensor::matrix(n, d_in, x)?,
            targets: Tensor::matrix(n, d_out, y)?,
        });
    }
    Ok(out)
}

/// Fixed per-feature affine standardisation of network inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputNorm {
    /// Mean and standard deviation of each column over `rows`; near-constant
    /// columns keep unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for r in rows {
            if sum.is_empty() {
                sum = vec![0.0; r.len()];
                sq = vec![0.0; r.len()];
            }
            if r.len() != sum.len() {
                return Err(Error::Invalid("input rows differ in width".into()));
            }
            for (j, v) in r.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
            n += 1;
        }
        if n < 2 {
            return Err(Error::Invalid("normalisation needs >= 2 rows".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / nf - m * m).max(0.0).sqrt();
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Statistics of a small reference dataset drawn with the same generator
    /// settings but an independent seed, so no split's objects inform them.
    pub fn reference(cfg: &DatasetConfig) -> Result<Self> {
        let rcfg = DatasetConfig {
            sequences_per_object: 2,
            frames_per_sequence: cfg.frames_per_sequence.min(100),
            seed: seed::derive(cfg.seed, "input_reference", 0),
            ..cfg.clone()
        };
        let d = Dataset::generate(&rcfg)?;
        Self::fit(d.sequences.iter().flat_map(|s| s.samples.iter().map(|x| x.input.as_slice())))
    }

    pub fn apply(&self, t: &mut Tensor) -> Result<()> {
        let cols = t.cols();
        if cols != self.mean.len() {
            return Err(Error::ShapeMismatch {
                op: "input_norm",
                lhs: t.shape().to_vec(),
                rhs: vec![self.mean.len()],
            });
        }
        for row in t.data_mut().chunks_exact_mut(cols) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Train/validation/test pools for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSet {
    pub splits: Splits,
    pub train: TaskPool,
    pub val: TaskPool,
    pub test: TaskPool,
}

impl TaskSet {
    pub fn build(dataset: &Dataset, splits: &Splits, spec: &TargetSpec, cfg: &TaskConfig) -> Result<Self> {
        let pool = |ids: &[usize]| TaskPool::new(sequence_data(dataset, ids, spec)?, cfg.clone());
        let ts = Self {
            splits: splits.clone(),
            train: pool(&splits.train)?,
            val: pool(&splits.val)?,
            test: pool(&splits.test)?,
        };
        ts.validate()?;
        Ok(ts)
    }

    /// Standardises the inputs of every pool.
    pub fn normalize_inputs(&mut self, norm: &InputNorm) -> Result<()> {
        for pool in [&mut self.train, &mut self.val, &mut self.test] {
            for s in &mut pool.sequences {
                norm.apply(&mut s.inputs)?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.splits;
        let overlap = s.train.iter().any(|o| s.val.contains(o) || s.test.contains(o))
            || s.val.iter().any(|o| s.test.contains(o));
        if overlap {
            return Err(Error::Invalid("train, validation and test objects overlap".into()));
        }
        for (pool, ids) in [(&self.train, &s.train), (&self.val, &s.val), (&self.test, &s.test)] {
            if pool.sequences.iter().any(|q| !ids.contains(&q.object_id)) {
                return Err(Error::Invalid("task object outside its split".into()));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> TaskManifest {
        TaskManifest {
            splits: self.splits.clone(),
            k: self.train.cfg.k,
            q: self.train.cfg.q,
            train: self.train.indices(None),
            val: self.val.indices(None),
            test: self.test.indices(None),
        }
    }
}

/// Everything needed to rebuild a task set's canonical tasks externally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub splits: Splits,
    pub k: usize,
    pub q: usize,
    pub train: Vec<TaskIndices>,
    pub val: Vec<TaskIndices>,
    pub test: Vec<TaskIndices>,
}

/// One frozen-training-split series: fixed train/validation objects and
/// test sets that grow one object at a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroSeries {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    /// `tests[i]` has `i + 1` objects and contains `tests[i − 1]`.
    pub tests: Vec<Vec<usize>>,
}

impl MicroSeries {
    pub fn splits(&self, i: usize) -> Splits {
        Splits {
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.tests[i].clone(),
        }
    }
}

/// Validation objects reserved in every micro-benchmark series.
pub const MICRO_VALIDATION: usize = 3;

/// Frozen-training-split series, one per seed.
pub fn micro_series(catalog_size: usize, train_size: usize, seeds: &[u64]) -> Result<Vec<MicroSeries>> {
    if train_size == 0 || train_size + MICRO_VALIDATION >= catalog_size {
        return Err(Error::Config(format!(
            "train size {train_size} leaves no test objects in a catalog of {catalog_size}"
        )));
    }
    Ok(seeds
        .iter()
        .map(|&s| {
            let perm = object_permutation(catalog_size, s, 1_000 + train_size as u64);
            let mut train = perm[..train_size].to_vec();
            train.sort_unstable();
            let val = perm[train_size..train_size + MICRO_VALIDATION].to_vec();
            let rest = &perm[train_size + MICRO_VALIDATION..];
            MicroSeries {
                seed: s,
                train,
                val,
                tests: (1..=rest.len()).map(|n| rest[..n].to_vec()).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: usize, obj: usize, frames: usize) -> SequenceData {
        SequenceData {
            object_id: obj,
            sequence_id: id,
            inputs: Tensor::matrix(frames, 1, (0..frames).map(|v| v as f64).collect()).unwrap(),
            targets: Tensor::matrix(frames, 1, (0..frames).map(|v| -(v as f64)).collect()).unwrap(),
        }
    }

    #[test]
    fn input_norm_standardises_columns() {
        let rows = [vec![1.0, 5.0, 2.0], vec![3.0, 5.0, 4.0], vec![5.0, 5.0, 9.0]];
        let norm = InputNorm::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(norm.std[1], 1.0);
        let mut t = Tensor::matrix(3, 3, rows.concat()).unwrap();
        norm.apply(&mut t).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..3).map(|i| t.data()[i * 3 + j]).collect();
            let m = col.iter().sum::<f64>() / 3.0;
            assert!(m.abs() < 1e-12);
            if j != 1 {
                let v = col.iter().map(|x| x * x).sum::<f64>() / 3.0;
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn table_anchors() {
        for (omega, v, train) in [(5, 3, 12), (8, 4, 8), (9, 5, 6), (13, 5, 2)] {
            assert_eq!(validation_count(omega), v);
            let s = make_splits(&SplitSpec::new(omega, 3, 20)).unwrap();
            assert_eq!(s.train.len(), train);
        }
    }

    #[test]
    fn splits_partition_the_catalog() {
        for omega in 1..=13 {
            let s = make_splits(&SplitSpec::new(omega, 9, 20)).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..20).collect::<Vec<_>>());
        }
    }

    #[test]
    fn nested_test_sets() {
        for omega in 1..13 {
            let a = make_splits(&SplitSpec::new(omega, 4, 20)).unwrap();
            let b = make_splits(&SplitSpec::new(omega + 1, 4, 20)).unwrap();
            assert_eq!(&b.test[..omega], &a.test[..]);
        }
    }

    #[test]
    fn too_large_omega_errors() {
        assert!(make_splits(&SplitSpec::new(15, 0, 20)).is_err());
        assert!(make_splits(&SplitSpec::new(0, 0, 20)).is_err());
    }

    #[test]
    fn sixty_frames_used_disjointly() {
        let cfg = TaskConfig {
            mode: TaskMode::PerSequence,
            ..Default::default()
        };
        let tasks = build_tasks(vec![seq(0, 0, 60)], &cfg).unwrap();
        let mut seen: Vec<f64> = tasks[0]
            .support
            .inputs
            .data()
            .iter()
            .chain(tasks[0].query.inputs.data())
            .copied()
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..60).map(|v| v as f64).collect::<Vec<_>>());
        // Targets stay paired with their inputs.
        for (x, y) in tasks[0].support.inputs.data().iter().zip(tasks[0].support.targets.data()) {
            assert_eq!(*y, -*x);
        }
    }

    #[test]
    fn short_sequence_errors() {
        assert!(build_tasks(vec![seq(0, 0, 59)], &TaskConfig::default()).is_err());
    }

    #[test]
    fn partition_consumes_k_per_block() {
        let pool = TaskPool::new(vec![seq(0, 0, 200), seq(1, 0, 130)], TaskConfig::default()).unwrap();
        let idx = pool.indices(None);
        // ⌊200/60⌋ + ⌊130/60⌋ = 5 tasks, 10 supports each.
        assert_eq!(idx.len(), 5);
        assert_eq!(idx.iter().map(|t| t.support.len()).sum::<usize>(), 50);
        assert_ne!(pool.indices(Some(1)), idx);
        assert_eq!(pool.indices(Some(1)), pool.indices(Some(1)));
    }

    #[test]
    fn micro_series_freezes_training() {
        let all = micro_series(20, 6, &[0, 1, 2]).unwrap();
        assert_eq!(all.len(), 3);
        for s in &all {
            assert_eq!(s.train.len(), 6);
            for w in s.tests.windows(2) {
                assert!(w[0].iter().all(|o| w[1].contains(o)));
                assert_eq!(w[1].len(), w[0].len() + 1);
            }
            assert!(s.tests.last().unwrap().iter().all(|o| !s.train.contains(o) && !s.val.contains(o)));
        }
        assert_ne!(all[0].train, all[1].train);
    }
}
