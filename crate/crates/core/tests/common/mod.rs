//! Oracle checks shared by the per-area suites and the acceptance report.
#![allow(dead_code)]

use graspmeta::analysis::procrustes::shape_from_flat;
use graspmeta::analysis::{
    aligned_distance, distance_heatmap, gpa_mean_shapes, group_separation, kabsch, slope_difference_test, t_cdf,
    Shape,
};
use graspmeta::autodiff::{finite_difference_check, Graph, Tensor, Var};
use graspmeta::error::Result;
use graspmeta::graspworld::{Dataset, DatasetConfig};
use graspmeta::metalearn::{
    adapt, adapt_task, evaluate, meta_gradient, meta_loss, sinusoid, train_baseline, train_meta, Batch,
    BaselineConfig, BaselineOptimizer, BoundState, EvalMode, EvalOptions, InnerLoopConfig, MetaLearner, MetaState,
    OuterLoopConfig, TargetSpec, Task,
};
use graspmeta::nets::{init_params, Mlp, NetConfig, ParamSet, Partition, Regressor};
use graspmeta::seed;
use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix(rng: &mut seed::Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * normal(rng)).collect()).unwrap()
}

/// Worst relative error of reverse-mode gradients against central
/// differences over `n` randomly shaped MLP regression losses.
pub fn mlp_gradient_worst(n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut rng = seed::rng(7, "gradcheck", i as u64);
        let cfg = NetConfig {
            input_dim: rng.random_range(1..5),
            body_layers: (0..rng.random_range(1..3)).map(|_| rng.random_range(2..7)).collect(),
            head_layers: (0..rng.random_range(0..2)).map(|_| rng.random_range(2..5)).collect(),
            output_dim: rng.random_range(1..4),
        };
        let model = Mlp::new(cfg.clone()).unwrap();
        let mut params = init_params(&cfg, i as u64).unwrap().tensors();
        // Nonzero biases so no unit sits exactly on a ReLU kink.
        for t in params.iter_mut().skip(1).step_by(2) {
            *t = random_matrix(&mut rng, 1, t.cols(), 0.3);
        }
        let rows = rng.random_range(2..6);
        let x = random_matrix(&mut rng, rows, cfg.input_dim, 1.0);
        let y = random_matrix(&mut rng, rows, cfg.output_dim, 1.0);
        let err = finite_difference_check(
            |g, v| {
                let xv = g.leaf(x.clone());
                let yv = g.leaf(y.clone());
                let pred = model.forward(g, v, xv)?;
                g.mse(pred, yv)
            },
            &params,
            1e-6,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

/// `pred = x · w` with a single 1 × 1 weight: every loss is a 1-D quadratic.
pub struct ScalarLinear;

impl Regressor for ScalarLinear {
    fn body(&self, _g: &mut Graph, _params: &[Var], x: Var) -> Result<Var> {
        Ok(x)
    }

    fn head(&self, g: &mut Graph, params: &[Var], features: Var) -> Result<Var> {
        g.matmul(features, params[0])
    }
}

fn column(rng: &mut seed::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

fn scalar_batch(xs: &[f64], ys: &[f64]) -> Batch {
    Batch::new(
        Tensor::matrix(xs.len(), 1, xs.to_vec()).unwrap(),
        Tensor::matrix(ys.len(), 1, ys.to_vec()).unwrap(),
    )
    .unwrap()
}

fn moments(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    (
        xs.iter().map(|x| x * x).sum::<f64>() / n,
        xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / n,
    )
}

/// Meta-gradient of `Σ_s w_s L_q(w_s)` on 1-D quadratics, from the tape and
/// from the closed form. Returns the worst absolute discrepancy in
/// second-order and first-order mode.
pub fn quadratic_meta_gradient_errors() -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for case in 0..40u64 {
        let mut rng = seed::rng(11, "quadratic", case);
        let k = rng.random_range(2..8);
        let (xs, ys) = (column(&mut rng, k), column(&mut rng, k));
        let (xq, yq) = (column(&mut rng, k + 3), column(&mut rng, k + 3));
        let (a_s, b_s) = moments(&xs, &ys);
        let (a_q, b_q) = moments(&xq, &yq);
        let steps = rng.random_range(1..6);
        let lr = rng.random_range(0.01..0.3);
        let w0 = normal(&mut rng);
        let mut weights: Vec<f64> = (0..steps).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        // w_{s+1} = r w_s + 2 α b_s with r = 1 − 2 α a_s, so dw_s/dw_0 = r^s.
        let r = 1.0 - 2.0 * lr * a_s;
        let mut w = w0;
        let (mut so, mut fo) = (0.0, 0.0);
        for (s, &ws) in weights.iter().enumerate() {
            w = r * w + 2.0 * lr * b_s;
            let dq = 2.0 * (a_q * w - b_q);
            so += ws * dq * r.powi(s as i32 + 1);
            fo += ws * dq;
        }

        let inner = InnerLoopConfig {
            steps,
            base_lr: lr,
            head_only: false,
            learnable_lr: false,
            regularizer_weight: None,
            clip_norm: None,
        };
        let support = scalar_batch(&xs, &ys);
        let query = scalar_batch(&xq, &yq);
        for (second_order, expected) in [(true, so), (false, fo)] {
            let mut g = Graph::new();
            let theta = BoundState {
                params: vec![g.leaf(Tensor::matrix(1, 1, vec![w0]).unwrap())],
                adapted: vec![0],
                head_only: false,
                lrs: None,
                logvar: None,
            };
            let trace = adapt(&ScalarLinear, &mut g, &theta, &support, &inner, second_order, None).unwrap();
            let l = meta_loss(&ScalarLinear, &mut g, &trace, &query, &weights).unwrap();
            let grad = g.backward(l, &theta.params, false).unwrap();
            let err = (g.value(grad[0]).item() - expected).abs();
            if second_order {
                worst.0 = worst.0.max(err);
            } else {
                worst.1 = worst.1.max(err);
            }
        }
    }
    worst
}

/// Worst relative error of the full second-order meta-loss gradient (network
/// weights, learnable rates and noise log-variance) against central
/// differences on a one-hidden-layer net.
pub fn meta_loss_gradient_worst() -> f64 {
    let cfg = NetConfig {
        input_dim: 3,
        body_layers: vec![6],
        head_layers: vec![],
        output_dim: 2,
    };
    let model = Mlp::new(cfg.clone()).unwrap();
    let mut worst = 0.0f64;
    for case in 0..3u64 {
        let mut rng = seed::rng(13, "meta_fd", case);
        let mut params = init_params(&cfg, case).unwrap().tensors();
        for t in params.iter_mut().skip(1).step_by(2) {
            *t = random_matrix(&mut rng, 1, t.cols(), 0.3);
        }
        let support = Batch::new(random_matrix(&mut rng, 5, 3, 1.0), random_matrix(&mut rng, 5, 2, 1.0)).unwrap();
        let query = Batch::new(random_matrix(&mut rng, 7, 3, 1.0), random_matrix(&mut rng, 7, 2, 1.0)).unwrap();
        let head_only = case == 1;
        let steps = 3;
        let inner = InnerLoopConfig {
            steps,
            base_lr: 0.05,
            head_only,
            learnable_lr: true,
            regularizer_weight: Some(0.1),
            clip_norm: None,
        };
        let n_params = params.len();
        let adapted: Vec<usize> = if head_only { vec![2, 3] } else { (0..n_params).collect() };
        let mut leaves = params.clone();
        for _ in 0..adapted.len() * steps {
            leaves.push(Tensor::scalar(rng.random_range(0.02..0.08)));
        }
        leaves.push(random_matrix(&mut rng, 1, 6, 0.5));
        let weights = [0.2, 0.3, 0.5];
        let err = finite_difference_check(
            |g, v| {
                let lrs = (0..adapted.len())
                    .map(|i| v[n_params + i * steps..n_params + (i + 1) * steps].to_vec())
                    .collect();
                let theta = BoundState {
                    params: v[..n_params].to_vec(),
                    adapted: adapted.clone(),
                    head_only,
                    lrs: Some(lrs),
                    logvar: Some(*v.last().unwrap()),
                };
                let mut noise = seed::rng(case, "fd_noise", 0);
                let trace = adapt(&model, g, &theta, &support, &inner, true, Some(&mut noise))?;
                meta_loss(&model, g, &trace, &query, &weights)
            },
            &leaves,
            1e-6,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

fn sine_model() -> (Mlp, NetConfig) {
    let cfg = NetConfig {
        input_dim: 1,
        body_layers: vec![40, 40],
        head_layers: vec![],
        output_dim: 1,
    };
    (Mlp::new(cfg.clone()).unwrap(), cfg)
}

fn sine_inner(head_only: bool) -> InnerLoopConfig {
    InnerLoopConfig {
        steps: 5,
        base_lr: 0.01,
        head_only,
        learnable_lr: false,
        regularizer_weight: None,
        clip_norm: Some(10.0),
    }
}

/// Head-only adaptation leaves every body tensor bit-identical and moves
/// the head.
pub fn anil_body_frozen() -> bool {
    let (model, cfg) = sine_model();
    let params = init_params(&cfg, 3).unwrap();
    let inner = sine_inner(true);
    let state = MetaState::new(params.clone(), &inner, 40);
    let tasks = sinusoid::sample_tasks(&mut seed::rng(3, "anil", 0), 4, 10, 10).unwrap();
    tasks.iter().all(|t| {
        let adapted = adapt_task(&model, &state, &t.support, &inner).unwrap().params;
        let body_same = adapted
            .params()
            .iter()
            .zip(params.params())
            .filter(|(_, p)| p.partition == Partition::Body)
            .all(|(a, p)| bits(a.tensor.data()) == bits(p.tensor.data()));
        let head_moved = adapted
            .params()
            .iter()
            .zip(params.params())
            .any(|(a, p)| p.partition == Partition::Head && a.tensor != p.tensor);
        body_same && head_moved
    })
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn bits_all(ts: &[Tensor]) -> Vec<u64> {
    ts.iter().flat_map(|t| bits(t.data())).collect()
}

/// After the annealing window the multi-step loss puts all weight on the
/// final step and its meta-gradient equals the final-step-only loss's, bit
/// for bit.
pub fn msl_final_step_equivalent() -> bool {
    let (model, cfg) = sine_model();
    let inner = sine_inner(false);
    let state = MetaState::new(init_params(&cfg, 4).unwrap(), &inner, 40);
    let tasks = sinusoid::sample_tasks(&mut seed::rng(4, "msl", 0), 3, 10, 10).unwrap();
    let outer = OuterLoopConfig::with_epochs(20);
    let plain = OuterLoopConfig { msl: false, ..outer.clone() };
    let late = outer.msl_weights(inner.steps, 15);
    let last = plain.msl_weights(inner.steps, 15);
    if late != last {
        return false;
    }
    let a = meta_gradient(&model, &state, &tasks, &inner, &late, true, 0).unwrap();
    let b = meta_gradient(&model, &state, &tasks, &inner, &last, true, 0).unwrap();
    let early = outer.msl_weights(inner.steps, 0);
    a.loss.to_bits() == b.loss.to_bits() && bits_all(&a.grads) == bits_all(&b.grads) && early != last
}

fn sine_training(weight: Option<f64>) -> (MetaState, Vec<u64>) {
    let (model, cfg) = sine_model();
    let inner = InnerLoopConfig {
        regularizer_weight: weight,
        ..sine_inner(false)
    };
    let mut outer = OuterLoopConfig::with_epochs(3);
    outer.meta_lr = 1e-3;
    let mut rng = seed::rng(5, "reg_noop", 0);
    let train = sinusoid::sample_tasks(&mut rng, 16, 10, 10).unwrap();
    let val = sinusoid::sample_tasks(&mut rng, 4, 10, 10).unwrap();
    let init = MetaState::new(init_params(&cfg, 5).unwrap(), &inner, 40);
    let (state, log) = train_meta(&model, init, &train, Some(&val), &inner, &outer, &TargetSpec::generic(), 5).unwrap();
    let trail = log
        .epochs
        .iter()
        .flat_map(|e| [e.train_loss.to_bits(), e.val_metric.unwrap_or(f64::NAN).to_bits()])
        .collect();
    (state, trail)
}

/// A zero regularizer weight trains bit-identically to no regularizer.
pub fn regularizer_zero_noop() -> bool {
    let (a, la) = sine_training(Some(0.0));
    let (b, lb) = sine_training(None);
    la == lb
        && bits_all(&a.to_tensors()) == bits_all(&b.to_tensors())
        && a.noise_logvar.is_none()
        && b.noise_logvar.is_none()
}

const SINE_META_BATCH: usize = 25;

/// Post-adaptation query MSE of a meta-trained sinusoid regressor and of a
/// jointly trained then fine-tuned one, over 100 test tasks.
pub fn sinusoid_benchmark(seed_value: u64, meta_iterations: usize) -> (f64, f64) {
    let (model, cfg) = sine_model();
    let inner = sine_inner(false);
    let mut outer = OuterLoopConfig::with_epochs(meta_iterations);
    outer.meta_lr = 1e-3;
    outer.msl = false;
    outer.da_threshold = 0;
    let init = init_params(&cfg, seed_value).unwrap();
    let mut learner = MetaLearner::new(MetaState::new(init.clone(), &inner, 40), inner.clone(), outer).unwrap();
    let mut rng = seed::rng(seed_value, "sine_train", 0);
    for it in 0..meta_iterations {
        let tasks = sinusoid::sample_tasks(&mut rng, SINE_META_BATCH, 10, 10).unwrap();
        learner.outer_step(&model, &tasks, it, 0).unwrap();
    }

    // The baseline sees the same number of samples, pooled across tasks.
    let mut brng = seed::rng(seed_value, "sine_baseline", 0);
    let pool = sinusoid::sample_tasks(&mut brng, meta_iterations * SINE_META_BATCH, 20, 0).unwrap();
    let data = Batch::concat(&pool.iter().map(|t| &t.support).collect::<Vec<_>>()).unwrap();
    let bc = BaselineConfig {
        batch_size: 64,
        lr: 1e-3,
        epochs: 5,
        weight_decay: 0.0,
        optimizer: BaselineOptimizer::Adam,
        clip_norm: None,
        val_every: 0,
    };
    let (bp, _) =
        train_baseline::<_, Vec<Task>>(&model, init, &data, None, &bc, &TargetSpec::generic(), seed_value).unwrap();
    let baseline = MetaState {
        params: bp,
        inner_lrs: None,
        noise_logvar: None,
    };

    let test = sinusoid::sample_tasks(&mut seed::rng(seed_value, "sine_test", 0), 100, 10, 100).unwrap();
    let opts = EvalOptions {
        mode: EvalMode::Meta,
        runs: 1,
        seed: 0,
        resample: false,
    };
    let spec = TargetSpec::generic();
    let m = evaluate(&model, &learner.state, &test, &inner, &spec, &opts).unwrap();
    let b = evaluate(&model, &baseline, &test, &inner, &spec, &opts).unwrap();
    (m.mean.mse, b.mean.mse)
}

/// Interaction p-value by Freedman–Lane permutation: residuals of the
/// no-interaction model `y ~ 1 + x + g` are permuted and added back to its
/// fitted values; the statistic is the interaction's |t|.
pub fn freedman_lane_p(xa: &[f64], ya: &[f64], xb: &[f64], yb: &[f64], perms: usize, seed_value: u64) -> f64 {
    let na = xa.len();
    let x: Vec<f64> = xa.iter().chain(xb).copied().collect();
    let y: Vec<f64> = ya.iter().chain(yb).copied().collect();
    let g: Vec<f64> = (0..x.len()).map(|i| if i < na { 0.0 } else { 1.0 }).collect();
    let reduced = ols3(&x, &g, &y);
    let fitted: Vec<f64> = (0..x.len()).map(|i| reduced[0] + reduced[1] * x[i] + reduced[2] * g[i]).collect();
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let stat = |y: &[f64]| {
        let t = slope_difference_test(&x[..na], &y[..na], &x[na..], &y[na..]).unwrap();
        (t.interaction / t.interaction_se).abs()
    };
    let observed = stat(&y);
    let mut rng = seed::rng(seed_value, "freedman_lane", 0);
    let mut perm: Vec<usize> = (0..x.len()).collect();
    let mut yp = vec![0.0; x.len()];
    let mut hits = 0usize;
    for _ in 0..perms {
        // Fisher–Yates
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        for i in 0..x.len() {
            yp[i] = fitted[i] + resid[perm[i]];
        }
        if stat(&yp) >= observed - 1e-12 {
            hits += 1;
        }
    }
    hits as f64 / perms as f64
}

/// Least squares for `y ~ 1 + x + g` via the normal equations.
fn ols3(x: &[f64], g: &[f64], y: &[f64]) -> [f64; 3] {
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for i in 0..x.len() {
        let row = Vector3::new(1.0, x[i], g[i]);
        xtx += row * row.transpose();
        xty += row * y[i];
    }
    let b = xtx.lu().solve(&xty).expect("full-rank design");
    [b[0], b[1], b[2]]
}

/// `(parametric, permutation)` p-values on `n` random two-curve datasets
/// shaped like an Ω sweep.
pub fn permutation_pairs(n: usize, perms: usize) -> Vec<(f64, f64)> {
    (0..n as u64)
        .map(|d| {
            let mut rng = seed::rng(17, "perm_dataset", d);
            let xs: Vec<f64> = (5..=13).map(f64::from).collect();
            let slope_a = rng.random_range(0.0..2.0);
            let slope_b = slope_a + rng.random_range(-1.0..1.0);
            let ya: Vec<f64> = xs.iter().map(|x| 50.0 + slope_a * x + 3.0 * normal(&mut rng)).collect();
            let yb: Vec<f64> = xs.iter().map(|x| 48.0 + slope_b * x + 3.0 * normal(&mut rng)).collect();
            let p = slope_difference_test(&xs, &ya, &xs, &yb).unwrap().p_value;
            (p, freedman_lane_p(&xs, &ya, &xs, &yb, perms, d))
        })
        .collect()
}

/// Largest `|t_cdf − q|` over two-sided critical values from a printed
/// t table (three decimals).
pub fn t_table_worst() -> f64 {
    const TABLE: [(f64, f64, f64); 15] = [
        (1.0, 0.95, 6.314),
        (1.0, 0.975, 12.706),
        (2.0, 0.975, 4.303),
        (3.0, 0.99, 4.541),
        (5.0, 0.95, 2.015),
        (5.0, 0.975, 2.571),
        (8.0, 0.9, 1.397),
        (10.0, 0.95, 1.812),
        (10.0, 0.975, 2.228),
        (10.0, 0.995, 3.169),
        (14.0, 0.975, 2.145),
        (20.0, 0.95, 1.725),
        (30.0, 0.975, 2.042),
        (60.0, 0.99, 2.390),
        (120.0, 0.975, 1.980),
    ];
    TABLE
        .iter()
        .flat_map(|&(dof, q, t)| [(t_cdf(t, dof) - q).abs(), (t_cdf(-t, dof) - (1.0 - q)).abs()])
        .fold(0.0, f64::max)
}

pub fn random_shape(rng: &mut seed::Rng, n: usize) -> Shape {
    (0..n).map(|_| [normal(rng), normal(rng), normal(rng)]).collect()
}

pub fn random_rotation(rng: &mut seed::Rng) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vector3::new(normal(rng), normal(rng), normal(rng)));
    Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1)).into_inner()
}

/// Largest aligned distance between a shape and a scaled, rotated and
/// translated copy of it.
pub fn similarity_invariance_worst(cases: usize) -> f64 {
    (0..cases as u64)
        .map(|c| {
            let mut rng = seed::rng(19, "similarity", c);
            let a = random_shape(&mut rng, 21);
            let r = random_rotation(&mut rng);
            let s = rng.random_range(0.1..10.0);
            let t = Vector3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * 50.0;
            let b: Shape = a.iter().map(|p| (s * (r * Vector3::from(*p)) + t).into()).collect();
            aligned_distance(&a, &b).unwrap()
        })
        .fold(0.0, f64::max)
}

/// Worst `max(‖RᵀR − I‖, |det R − 1|)` over Kabsch fits of random pairs,
/// including reflected targets.
pub fn kabsch_orthogonality_worst(cases: usize) -> f64 {
    (0..cases as u64)
        .map(|c| {
            let mut rng = seed::rng(23, "kabsch", c);
            let a = random_shape(&mut rng, 21);
            let b = if c % 3 == 0 {
                a.iter().map(|p| [-p[0], p[1], p[2]]).collect()
            } else {
                random_shape(&mut rng, 21)
            };
            let r = kabsch(&a, &b).unwrap();
            let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
            orth.max((r.determinant() - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

/// Per-object hand shapes from a small generated dataset.
pub fn catalog_hand_shapes(per_object: usize) -> Vec<Vec<Shape>> {
    let cfg = DatasetConfig {
        sequences_per_object: 2,
        frames_per_sequence: per_object.div_ceil(2),
        seed: 29,
        ..Default::default()
    };
    let d = Dataset::generate(&cfg).unwrap();
    let mut groups = vec![Vec::new(); cfg.n_objects];
    for s in &d.sequences {
        for x in &s.samples {
            groups[s.info.object_id].push(shape_from_flat(&x.target_hand));
        }
    }
    groups
}

pub struct GpaReport {
    pub heatmap_size: usize,
    pub symmetric: bool,
    pub zero_diagonal: bool,
    pub within: f64,
    pub between: f64,
}

pub fn gpa_report() -> GpaReport {
    let groups = catalog_hand_shapes(20);
    let means = gpa_mean_shapes(&groups).unwrap();
    let labels: Vec<String> = (0..means.len()).map(|i| format!("obj{i}")).collect();
    let m = distance_heatmap(&labels, &means).unwrap();
    let n = m.values.len();
    let symmetric = (0..n).all(|i| (0..n).all(|j| m.values[i][j].to_bits() == m.values[j][i].to_bits()));
    let zero_diagonal = (0..n).all(|i| m.values[i][i] == 0.0);
    let (within, between) = group_separation(&groups).unwrap();
    GpaReport {
        heatmap_size: n,
        symmetric,
        zero_diagonal,
        within,
        between,
    }
}

pub fn param_bits(p: &ParamSet) -> Vec<u64> {
    bits_all(&p.tensors())
}

pub struct CliOutput {
    pub code: i32,
    pub json: serde_json::Value,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI binary in `dir` and parses whichever stream carries JSON.
pub fn graspmeta(dir: &std::path::Path, args: &[&str]) -> CliOutput {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_graspmeta"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn graspmeta");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let code = out.status.code().unwrap_or(-1);
    let text = if code == 0 { &stdout } else { &stderr };
    let json = text
        .lines()
        .rev()
        .find_map(|l| serde_json::from_str(l).ok())
        .unwrap_or(serde_json::Value::Null);
    CliOutput {
        code,
        json,
        stdout,
        stderr,
    }
}

/// Runs a command that must succeed and returns its run directory.
pub fn graspmeta_ok(dir: &std::path::Path, args: &[&str]) -> std::path::PathBuf {
    let o = graspmeta(dir, args);
    assert_eq!(o.code, 0, "graspmeta {args:?} failed: {}", o.stderr);
    dir.join(o.json["run_dir"].as_str().expect("run_dir in output"))
}

/// CSV outputs of a run with their hashes.
pub fn csv_hashes(run_dir: &std::path::Path) -> std::collections::BTreeMap<String, String> {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"]
        .as_object()
        .unwrap()
        .iter()
        .filter(|(k, _)| k.ends_with(".csv"))
        .map(|(k, v)| (k.clone(), v.as_str().unwrap().to_string()))
        .collect()
}
