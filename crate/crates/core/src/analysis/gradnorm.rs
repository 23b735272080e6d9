//! Per-object, per-step average inner-loop gradient norms for two models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient norms recorded while adapting to one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTrace {
    pub object_id: usize,
    pub norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradNormRow {
    pub object_id: usize,
    /// 1-based adaptation step.
    pub step: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b / mean_a`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradNormTable {
    pub steps: usize,
    pub objects: Vec<usize>,
    pub rows: Vec<GradNormRow>,
}

impl GradNormTable {
    pub fn column(&self, object_id: usize, b: bool) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.object_id == object_id)
            .map(|r| if b { r.mean_b } else { r.mean_a })
            .collect()
    }

    pub fn to_csv(&self, label_a: &str, label_b: &str) -> String {
        let mut s = format!("object,step,{label_a},{label_b},ratio\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.object_id, r.step, r.mean_a, r.mean_b, r.ratio));
        }
        s
    }
}

fn per_object(traces: &[NormTrace], steps: usize) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for t in traces {
        if t.norms.len() < steps {
            return Err(Error::Invalid(format!(
                "trace for object {} has {} steps, table needs {steps}",
                t.object_id,
                t.norms.len()
            )));
        }
        let e = sums.entry(t.object_id).or_insert_with(|| (vec![0.0; steps], 0));
        for (acc, v) in e.0.iter_mut().zip(&t.norms) {
            *acc += v;
        }
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect()))
        .collect())
}

/// Averages the first `steps` norms per object for both models. Both trace
/// sets must cover the same objects.
pub fn gradient_norm_table(a: &[NormTrace], b: &[NormTrace], steps: usize) -> Result<GradNormTable> {
    if steps == 0 {
        return Err(Error::Invalid("gradient-norm table needs >= 1 step".into()));
    }
    let ma = per_object(a, steps)?;
    let mb = per_object(b, steps)?;
    if !ma.keys().eq(mb.keys()) {
        return Err(Error::Invalid("both models must be adapted on the same objects".into()));
    }
    let mut rows = Vec::new();
    for (obj, va) in &ma {
        let vb = &mb[obj];
        for s in 0..steps {
            rows.push(GradNormRow {
                object_id: *obj,
                step: s + 1,
                mean_a: va[s],
                mean_b: vb[s],
                ratio: vb[s] / va[s],
            });
        }
    }
    Ok(GradNormTable {
        steps,
        objects: ma.keys().copied().collect(),
        rows,
    })
}
