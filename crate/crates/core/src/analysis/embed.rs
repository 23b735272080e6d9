//! PCA, exact t-SNE and silhouette scores for adapted-parameter vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Projects rows onto their top `k` principal components. Component signs
/// are fixed so each component's largest-magnitude score is positive.
pub fn pca(rows: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < 2 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Invalid("pca needs >= 2 rows of equal nonzero length".into()));
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    let k = k.min(d).min(n);
    // Work on whichever Gram matrix is smaller; both give the same scores.
    let scores = if d <= n {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        let order = descending(&eig.eigenvalues);
        let mut out = DMatrix::zeros(n, k);
        for (c, &i) in order.iter().take(k).enumerate() {
            out.set_column(c, &(&x * eig.eigenvectors.column(i)));
        }
        out
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose());
        let order = descending(&eig.eigenvalues);
        let mut out = DMatrix::zeros(n, k);
        for (c, &i) in order.iter().take(k).enumerate() {
            let l = eig.eigenvalues[i].max(0.0).sqrt();
            out.set_column(c, &(eig.eigenvectors.column(i) * l));
        }
        out
    };
    let mut scores = scores;
    for c in 0..k {
        let col = scores.column(c);
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            scores.column_mut(c).neg_mut();
        }
    }
    Ok((0..n).map(|i| scores.row(i).iter().copied().collect()).collect())
}

fn descending(values: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub pca_dims: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            pca_dims: 50,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

fn sq_dists(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Symmetrised input affinities with per-point bandwidths found by bisection
/// on the entropy.
fn affinities(d: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        // Shift by the nearest-neighbour distance so exp() cannot underflow.
        let dmin = (0..n).filter(|&j| j != i).map(|j| d[i * n + j]).fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut dsum = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d[i * n + j] - dmin) * beta).exp() };
                sum += row[j];
                dsum += (d[i * n + j] - dmin) * row[j];
            }
            let h = sum.ln() + beta * dsum / sum;
            if (h - target).abs() < 1e-10 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let sum: f64 = row.iter().sum();
        for j in 0..n {
            p[i * n + j] = row[j] / sum;
        }
    }
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    sym
}

/// Exact O(n²) t-SNE to two dimensions.
pub fn tsne(rows: &[Vec<f64>], cfg: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    if (n as f64) <= 3.0 * cfg.perplexity {
        return Err(Error::Invalid(format!(
            "t-SNE with perplexity {} needs more than {} vectors, got {n}",
            cfg.perplexity,
            3.0 * cfg.perplexity
        )));
    }
    let reduced = if rows[0].len() > cfg.pca_dims {
        pca(rows, cfg.pca_dims)?
    } else {
        rows.to_vec()
    };
    let p = affinities(&sq_dists(&reduced), n, cfg.perplexity);
    let mut rng = seed::rng(cfg.seed, "tsne_init", 0);
    let normal = Normal::new(0.0, 1e-4).expect("std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut vel = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        let mut zsum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                zsum += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let m = (exag * p[i * n + j] - q / zsum) * q;
                g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                g[1] += 4.0 * m * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                gains[i][k] = if (g[k] > 0.0) != (vel[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8f64).max(0.01)
                };
                vel[i][k] = momentum * vel[i][k] - cfg.learning_rate * gains[i][k] * g[k];
            }
        }
        let mut mean = [0.0; 2];
        for i in 0..n {
            for k in 0..2 {
                y[i][k] += vel[i][k];
                mean[k] += y[i][k] / n as f64;
            }
        }
        for p in &mut y {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE embedding".into()));
    }
    Ok(y)
}

/// Mean silhouette coefficient under Euclidean distance. Points alone in
/// their cluster score 0.
pub fn silhouette<P: AsRef<[f64]>>(points: &[P], labels: &[usize]) -> Result<f64> {
    let n = points.len();
    if n != labels.len() || n < 2 {
        return Err(Error::Invalid("silhouette needs >= 2 labelled points".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Invalid("silhouette needs >= 2 distinct labels".into()));
    }
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .as_ref()
            .iter()
            .zip(points[j].as_ref())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        for j in 0..n {
            if i != j {
                let c = classes.binary_search(&labels[j]).expect("label");
                sums[c] += dist(i, j);
                counts[c] += 1;
            }
        }
        let own = classes.binary_search(&labels[i]).expect("label");
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..classes.len())
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub name: String,
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub silhouette: f64,
}

impl Embedding {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,label\n");
        for (c, l) in self.coords.iter().zip(&self.labels) {
            s.push_str(&format!("{},{},{}\n", c[0], c[1], l));
        }
        s
    }
}

/// t-SNE embedding of parameter vectors plus the silhouette of the object
/// labels on it.
pub fn embed_adapted_params(name: &str, vectors: &[Vec<f64>], labels: &[usize], cfg: &TsneConfig) -> Result<Embedding> {
    if vectors.len() != labels.len() {
        return Err(Error::Invalid("one label per vector required".into()));
    }
    if vectors.len() < 10 {
        return Err(Error::Invalid("embedding needs >= 10 vectors".into()));
    }
    let coords = tsne(vectors, cfg)?;
    let silhouette = silhouette(&coords, labels)?;
    Ok(Embedding {
        name: name.into(),
        coords,
        labels: labels.to_vec(),
        silhouette,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouette_of_two_tight_pairs() {
        let pts = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        // Oracle: a = 1, b = mean(10, √101) for every point.
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        assert!((s - (b - 1.0) / b).abs() < 1e-12);
    }

    #[test]
    fn pca_of_a_line_has_one_component() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let p = pca(&rows, 3).unwrap();
        for r in &p {
            assert!(r[1].abs() < 1e-9 && r[2].abs() < 1e-9);
        }
        let spread: f64 = p.iter().map(|r| r[0] * r[0]).sum();
        let total: f64 = rows.iter().map(|r| {
            let c = r[0] - 4.5;
            c * c * 6.0
        }).sum();
        assert!((spread - total).abs() < 1e-9);
    }

    #[test]
    fn too_few_vectors_error() {
        let rows = vec![vec![0.0, 1.0]; 50];
        assert!(tsne(&rows, &TsneConfig::default()).is_err());
    }
}
