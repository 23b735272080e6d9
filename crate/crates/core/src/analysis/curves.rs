//! Error-vs-test-set-size curves and their origin alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The easiest benchmark setting every curve is aligned to.
pub const ANCHOR_OBJECTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_test_objects: usize,
    /// Mean error (mm) over evaluation runs.
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub label: String,
    pub points: Vec<CurvePoint>,
    /// Value subtracted (or divided out) by `relative_curve`; 0 for raw curves.
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelativeMode {
    /// `e(n) − e(anchor)`.
    Subtract,
    /// `e(n) / e(anchor)`.
    Ratio,
}

impl MetricCurve {
    pub fn new(label: impl Into<String>, points: Vec<CurvePoint>) -> Result<Self> {
        let c = Self {
            label: label.into(),
            points,
            offset: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| w[1].n_test_objects <= w[0].n_test_objects) {
            return Err(Error::Invalid(format!("curve {}: n must be strictly increasing", self.label)));
        }
        if self.points.iter().any(|p| !(p.variance >= 0.0)) {
            return Err(Error::Invalid(format!("curve {}: negative variance", self.label)));
        }
        Ok(())
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.n_test_objects as f64).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    /// Point-wise mean of curves sampled at the same `n` values; variances
    /// are averaged too.
    pub fn average(label: impl Into<String>, curves: &[MetricCurve]) -> Result<Self> {
        let first = curves.first().ok_or_else(|| Error::Invalid("no curves to average".into()))?;
        let k = curves.len() as f64;
        let mut points = first.points.clone();
        for c in &curves[1..] {
            if c.xs() != first.xs() {
                return Err(Error::Invalid("curves sampled at different n".into()));
            }
            for (p, q) in points.iter_mut().zip(&c.points) {
                p.mean += q.mean;
                p.variance += q.variance;
            }
        }
        for p in &mut points {
            p.mean /= k;
            p.variance /= k;
        }
        MetricCurve::new(label, points)
    }
}

/// Aligns a curve to its value at `ANCHOR_OBJECTS` test objects.
pub fn relative_curve(curve: &MetricCurve, mode: RelativeMode) -> Result<MetricCurve> {
    let anchor = curve
        .points
        .iter()
        .find(|p| p.n_test_objects == ANCHOR_OBJECTS)
        .ok_or_else(|| Error::Invalid(format!("curve {} has no {ANCHOR_OBJECTS}-object point", curve.label)))?
        .mean;
    relative_to(curve, anchor, mode)
}

/// Aligns a curve to its first point; used for series that do not start at
/// the benchmark anchor.
pub fn relative_to_first(curve: &MetricCurve, mode: RelativeMode) -> Result<MetricCurve> {
    let anchor = curve
        .points
        .first()
        .ok_or_else(|| Error::Invalid(format!("curve {} is empty", curve.label)))?
        .mean;
    relative_to(curve, anchor, mode)
}

fn relative_to(curve: &MetricCurve, anchor: f64, mode: RelativeMode) -> Result<MetricCurve> {
    if mode == RelativeMode::Ratio && anchor == 0.0 {
        return Err(Error::Invalid("ratio against a zero anchor".into()));
    }
    let points = curve
        .points
        .iter()
        .map(|p| match mode {
            RelativeMode::Subtract => CurvePoint {
                mean: p.mean - anchor,
                ..*p
            },
            RelativeMode::Ratio => CurvePoint {
                mean: p.mean / anchor,
                variance: p.variance / (anchor * anchor),
                ..*p
            },
        })
        .collect();
    Ok(MetricCurve {
        label: curve.label.clone(),
        points,
        offset: anchor,
    })
}
