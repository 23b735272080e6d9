//! The standard few-shot sinusoid regression family:
//! `y = A sin(x − φ)`, `A ~ U[0.1, 5]`, `φ ~ U[0, π]`, `x ~ U[−5, 5]`.

use rand::Rng as _;

use super::task::{Batch, Task};
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            amplitude: rng.random_range(0.1..5.0),
            phase: rng.random_range(0.0..std::f64::consts::PI),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (x - self.phase).sin()
    }

    pub fn batch(&self, rng: &mut Rng, n: usize) -> Result<Batch> {
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();
        Batch::new(Tensor::matrix(n, 1, xs)?, Tensor::matrix(n, 1, ys)?)
    }

    pub fn task(&self, rng: &mut Rng, k: usize, q: usize, id: usize) -> Result<Task> {
        Ok(Task {
            object_id: id,
            sequence_id: id,
            support: self.batch(rng, k)?,
            query: self.batch(rng, q)?,
        })
    }
}

/// `n` independent tasks with `k` support and `q` query points each.
pub fn sample_tasks(rng: &mut Rng, n: usize, k: usize, q: usize) -> Result<Vec<Task>> {
    (0..n)
        .map(|i| Sinusoid::sample(rng).task(rng, k, q, i))
        .collect()
}
