//! Generalised Procrustes analysis of hand shapes.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Shape = Vec<[f64; 3]>;

pub const SVD_TOL: f64 = 1e-12;
pub const GPA_TOL: f64 = 1e-9;
pub const GPA_MAX_ITERS: usize = 100;

/// One-sided Jacobi SVD `m = U diag(s) Vᵀ` with `s` sorted descending and
/// `U`, `V` orthogonal.
pub fn svd3(m: &Matrix3<f64>) -> (Matrix3<f64>, [f64; 3], Matrix3<f64>) {
    let mut a = *m;
    let mut v = Matrix3::identity();
    for _ in 0..60 {
        let mut rotated = false;
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let alpha = a.column(p).norm_squared();
            let beta = a.column(q).norm_squared();
            let gamma = a.column(p).dot(&a.column(q));
            if gamma.abs() <= SVD_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let t = if zeta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for mat in [&mut a, &mut v] {
                for r in 0..3 {
                    let (x, y) = (mat[(r, p)], mat[(r, q)]);
                    mat[(r, p)] = c * x - s * y;
                    mat[(r, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order = [0usize, 1, 2];
    let norms: Vec<f64> = (0..3).map(|i| a.column(i).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = Matrix3::zeros();
    let mut vs = Matrix3::zeros();
    let mut s = [0.0; 3];
    for (k, &i) in order.iter().enumerate() {
        s[k] = norms[i];
        vs.set_column(k, &v.column(i));
        if norms[i] > SVD_TOL * norms[order[0]].max(f64::MIN_POSITIVE) {
            u.set_column(k, &(a.column(i) / norms[i]));
        }
    }
    // Complete U where singular values vanished.
    complete_basis(&mut u, &s, norms[order[0]]);
    (u, s, vs)
}

fn complete_basis(u: &mut Matrix3<f64>, s: &[f64; 3], s_max: f64) {
    let zero = |k: usize| !(s[k] > SVD_TOL * s_max.max(f64::MIN_POSITIVE));
    if zero(0) {
        *u = Matrix3::identity();
        return;
    }
    if zero(1) {
        let a: Vector3<f64> = u.column(0).into();
        let trial = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let b = (trial - a * a.dot(&trial)).normalize();
        u.set_column(1, &b);
    }
    if zero(2) {
        let c = u.column(0).cross(&u.column(1));
        u.set_column(2, &c);
    }
}

/// Rotation `R` (det +1) minimising `Σ |R a_i − b_i|²` over centred shapes.
pub fn kabsch(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<Matrix3<f64>> {
    check_pair(a, b)?;
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += Vector3::from(*p) * Vector3::from(*q).transpose();
    }
    let (u, _, v) = svd3(&h);
    let d = (v * u.transpose()).determinant().signum();
    let d = if d == 0.0 { 1.0 } else { d };
    Ok(v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose())
}

fn check_pair(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "procrustes",
            lhs: vec![a.len(), 3],
            rhs: vec![b.len(), 3],
        });
    }
    Ok(())
}

/// Centres a shape and scales it to unit Frobenius norm.
pub fn normalize(shape: &[[f64; 3]]) -> Result<Shape> {
    if shape.is_empty() {
        return Err(Error::Invalid("empty shape".into()));
    }
    let n = shape.len() as f64;
    let mut c = [0.0; 3];
    for p in shape {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    let centred: Shape = shape.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect();
    let norm = centred.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::Invalid("degenerate shape: all points coincide".into()));
    }
    Ok(centred.iter().map(|p| p.map(|v| v / norm)).collect())
}

pub fn rotate(shape: &[[f64; 3]], r: &Matrix3<f64>) -> Shape {
    shape.iter().map(|p| (r * Vector3::from(*p)).into()).collect()
}

/// Normalises `shape` and rotates it onto the (normalised) `target`.
pub fn align_to(shape: &[[f64; 3]], target: &[[f64; 3]]) -> Result<Shape> {
    let s = normalize(shape)?;
    let r = kabsch(&s, target)?;
    Ok(rotate(&s, &r))
}

/// Sum of squared vertex distances.
pub fn procrustes_distance(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    check_pair(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
        .sum())
}

/// Procrustes distance after normalising both shapes and rotating `b` onto `a`.
pub fn aligned_distance(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let a = normalize(a)?;
    let b = align_to(b, &a)?;
    procrustes_distance(&a, &b)
}

fn mean_shape(shapes: &[Shape]) -> Shape {
    let n = shapes.len() as f64;
    let mut m = vec![[0.0; 3]; shapes[0].len()];
    for s in shapes {
        for (acc, p) in m.iter_mut().zip(s) {
            for k in 0..3 {
                acc[k] += p[k] / n;
            }
        }
    }
    m
}

/// Iterative GPA of one collection: every shape is normalised and rotated
/// onto the running mean until the mean moves less than `GPA_TOL`.
pub fn gpa(shapes: &[Shape]) -> Result<Shape> {
    if shapes.len() < 2 {
        return Err(Error::Invalid(format!("GPA needs >= 2 shapes, got {}", shapes.len())));
    }
    let normed: Vec<Shape> = shapes.iter().map(|s| normalize(s)).collect::<Result<_>>()?;
    let mut mean = normed[0].clone();
    for _ in 0..GPA_MAX_ITERS {
        let aligned: Vec<Shape> = normed
            .iter()
            .map(|s| kabsch(s, &mean).map(|r| rotate(s, &r)))
            .collect::<Result<_>>()?;
        // Keep the mean in the previous mean's orientation.
        let next = align_to(&mean_shape(&aligned), &mean)?;
        let moved = procrustes_distance(&next, &mean)?.sqrt();
        mean = next;
        if moved < GPA_TOL {
            break;
        }
    }
    Ok(mean)
}

/// Per-object GPA mean shapes.
pub fn gpa_mean_shapes(groups: &[Vec<Shape>]) -> Result<Vec<Shape>> {
    groups.iter().map(|g| gpa(g)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("object");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            s.push_str(l);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Pairwise aligned distances between mean shapes; symmetric with a zero
/// diagonal by construction.
pub fn distance_heatmap(labels: &[String], means: &[Shape]) -> Result<DistanceMatrix> {
    if means.len() < 2 || labels.len() != means.len() {
        return Err(Error::Invalid("heatmap needs >= 2 labelled shapes".into()));
    }
    let n = means.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = aligned_distance(&means[i], &means[j])?;
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    Ok(DistanceMatrix {
        labels: labels.to_vec(),
        values,
    })
}

/// Mean aligned distance between shapes of the same group and between
/// shapes of different groups.
pub fn group_separation(groups: &[Vec<Shape>]) -> Result<(f64, f64)> {
    let normed: Vec<Vec<Shape>> = groups
        .iter()
        .map(|g| g.iter().map(|s| normalize(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (gi, g) in normed.iter().enumerate() {
        for (i, a) in g.iter().enumerate() {
            for (gj, h) in normed.iter().enumerate().skip(gi) {
                let start = if gi == gj { i + 1 } else { 0 };
                for b in &h[start..] {
                    let r = kabsch(b, a)?;
                    let d = procrustes_distance(a, &rotate(b, &r))?;
                    if gi == gj {
                        within += d;
                        nw += 1;
                    } else {
                        between += d;
                        nb += 1;
                    }
                }
            }
        }
    }
    if nw == 0 || nb == 0 {
        return Err(Error::Invalid("separation needs >= 2 groups with >= 2 shapes".into()));
    }
    Ok((within / nw as f64, between / nb as f64))
}

/// Splits a flattened 21×3 target into points.
pub fn shape_from_flat(v: &[f64]) -> Shape {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};

    fn random_matrix(seed: u64) -> Matrix3<f64> {
        let mut x = seed as f64 * 0.618;
        Matrix3::from_fn(|_, _| {
            x = (x * 9.7 + 0.31).fract();
            2.0 * x - 1.0
        })
    }

    #[test]
    fn svd_reconstructs() {
        for seed in 1..40 {
            let m = random_matrix(seed);
            let (u, s, v) = svd3(&m);
            let back = u * Matrix3::from_diagonal(&Vector3::from(s)) * v.transpose();
            assert!((back - m).abs().max() < 1e-12, "seed {seed}");
            assert!((u.transpose() * u - Matrix3::identity()).abs().max() < 1e-12);
            assert!((v.transpose() * v - Matrix3::identity()).abs().max() < 1e-12);
            assert!(s[0] >= s[1] && s[1] >= s[2] && s[2] >= 0.0);
        }
    }

    #[test]
    fn svd_rank_deficient() {
        let m = Matrix3::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0);
        let (u, s, v) = svd3(&m);
        assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
        assert!((u.transpose() * u - Matrix3::identity()).abs().max() < 1e-12);
        let back = u * Matrix3::from_diagonal(&Vector3::from(s)) * v.transpose();
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn kabsch_recovers_rotation() {
        let a: Shape = (0..21).map(|i| {
            let t = i as f64;
            [t.sin(), (1.3 * t).cos(), 0.1 * t - 1.0]
        }).collect();
        let a = normalize(&a).unwrap();
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.2, -1.0, 0.4)), 2.1);
        let b = rotate(&a, r.matrix());
        let k = kabsch(&a, &b).unwrap();
        assert!((k - r.matrix()).abs().max() < 1e-10);
        assert!((k.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reflection_is_not_returned() {
        let a: Shape = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -1.0, -1.0]];
        let b: Shape = a.iter().map(|p| [-p[0], p[1], p[2]]).collect();
        let k = kabsch(&a, &b).unwrap();
        assert!((k.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identical_shapes_mean_is_the_shape() {
        let s: Shape = (0..21).map(|i| [i as f64, (i * i) as f64 * 0.1, 1.0]).collect();
        let mean = gpa(&[s.clone(), s.clone(), s.clone()]).unwrap();
        let n = normalize(&s).unwrap();
        assert!(procrustes_distance(&mean, &n).unwrap() < 1e-20);
    }

    #[test]
    fn coincident_points_error() {
        assert!(normalize(&[[1.0, 1.0, 1.0]; 21]).is_err());
    }
}
