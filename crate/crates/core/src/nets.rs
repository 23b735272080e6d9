//! Regression network: a ReLU MLP body (shared feature extractor) followed by
//! a fully-connected head, the part ANIL adapts per task.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

/// Output width in hand-only mode: 21 joints × 3.
pub const HAND_OUTPUT_DIM: usize = 63;
/// Output width in joint hand-object mode: 63 + 8 corners × 3.
pub const JOINT_OUTPUT_DIM: usize = 87;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    /// Hidden widths of the body; every body layer is followed by a ReLU.
    pub body_layers: Vec<usize>,
    /// Hidden widths of the head; the final head layer maps to `output_dim`
    /// without an activation.
    pub head_layers: Vec<usize>,
    pub output_dim: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            body_layers: vec![128, 128],
            head_layers: vec![64],
            output_dim,
        }
    }

    /// Checks widths. Pose networks additionally require `output_dim` to be
    /// 63 or 87; see [`NetConfig::validate_pose`].
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.output_dim == 0
            || self.body_layers.iter().chain(&self.head_layers).any(|&w| w == 0)
        {
            return Err(Error::Config(format!("all layer widths must be >= 1: {self:?}")));
        }
        Ok(())
    }

    pub fn validate_pose(&self) -> Result<()> {
        self.validate()?;
        if self.output_dim != HAND_OUTPUT_DIM && self.output_dim != JOINT_OUTPUT_DIM {
            return Err(Error::Config(format!(
                "pose output_dim must be {HAND_OUTPUT_DIM} or {JOINT_OUTPUT_DIM}, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }

    /// Width of the body output, i.e. of the head input.
    pub fn feature_dim(&self) -> usize {
        self.body_layers.last().copied().unwrap_or(self.input_dim)
    }

    /// `(in, out)` per linear layer, body first.
    fn layer_dims(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let mut body = Vec::new();
        let mut prev = self.input_dim;
        for &w in &self.body_layers {
            body.push((prev, w));
            prev = w;
        }
        let mut head = Vec::new();
        for &w in self.head_layers.iter().chain(std::iter::once(&self.output_dim)) {
            head.push((prev, w));
            prev = w;
        }
        (body, head)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Body,
    Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub partition: Partition,
    pub tensor: Tensor,
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new(params: Vec<Param>) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }

    /// Adds every tensor as a leaf of `g`, in order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.tensor.clone())).collect()
    }

    /// Copy with tensors replaced by the values of `vars`.
    pub fn with_values(&self, g: &Graph, vars: &[Var]) -> ParamSet {
        let params = self
            .params
            .iter()
            .zip(vars)
            .map(|(p, v)| Param {
                name: p.name.clone(),
                partition: p.partition,
                tensor: g.value(*v).clone(),
            })
            .collect();
        ParamSet { params }
    }

    pub fn head_indices(&self) -> Vec<usize> {
        self.indices(Partition::Head)
    }

    pub fn indices(&self, part: Partition) -> Vec<usize> {
        (0..self.params.len())
            .filter(|&i| self.params[i].partition == part)
            .collect()
    }

    /// Disjoint body and head views.
    pub fn partition(&self) -> (Vec<&Param>, Vec<&Param>) {
        self.params.iter().partition(|p| p.partition == Partition::Body)
    }

    pub fn partition_mut(&mut self) -> (Vec<&mut Param>, Vec<&mut Param>) {
        self.params
            .iter_mut()
            .partition(|p| p.partition == Partition::Body)
    }

    /// All values of the given partition concatenated in order.
    pub fn flatten(&self, part: Option<Partition>) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| part.map_or(true, |q| p.partition == q))
            .flat_map(|p| p.tensor.data().iter().copied())
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Writes `<stem>.bin` (little-endian f64, params in order) and a
    /// `<stem>.json` manifest with names, shapes and partition labels.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.num_values() * 8);
        let mut entries = Vec::new();
        let mut offset = 0;
        for p in &self.params {
            for v in p.tensor.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(ManifestEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                partition: p.partition,
                offset,
            });
            offset += p.tensor.len();
        }
        let manifest = ParamManifest {
            format: "f64-le".into(),
            total: offset,
            params: entries,
        };
        let (bin, json) = checkpoint_paths(stem);
        if let Some(dir) = bin.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<ParamSet> {
        let (bin, json) = checkpoint_paths(stem);
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let manifest: ParamManifest = serde_json::from_str(&text)?;
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() != manifest.total * 8 {
            return Err(Error::Invalid(format!(
                "{} holds {} bytes, manifest expects {}",
                bin.display(),
                bytes.len(),
                manifest.total * 8
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut params = Vec::with_capacity(manifest.params.len());
        for e in manifest.params {
            let len: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Invalid(format!("param {} out of range", e.name)))?
                .to_vec();
            params.push(Param {
                name: e.name,
                partition: e.partition,
                tensor: Tensor::new(e.shape, data)?,
            });
        }
        Ok(ParamSet { params })
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    partition: Partition,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct ParamManifest {
    format: String,
    total: usize,
    params: Vec<ManifestEntry>,
}

pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// He-initialized weights (variance 2/fan_in), zero biases.
pub fn init_params(cfg: &NetConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = seed::rng(seed, "init_params", 0);
    let (body, head) = cfg.layer_dims();
    let mut params = Vec::new();
    let layers = body
        .iter()
        .enumerate()
        .map(|(i, d)| (Partition::Body, format!("body.{i}"), *d))
        .chain(
            head.iter()
                .enumerate()
                .map(|(i, d)| (Partition::Head, format!("head.{i}"), *d)),
        );
    for (partition, name, (fan_in, fan_out)) in layers {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
        params.push(Param {
            name: format!("{name}.weight"),
            partition,
            tensor: Tensor::matrix(fan_in, fan_out, w)?,
        });
        params.push(Param {
            name: format!("{name}.bias"),
            partition,
            tensor: Tensor::zeros(&[1, fan_out]),
        });
    }
    Ok(ParamSet { params })
}

/// A differentiable model split into a shared body and an adaptable head.
/// `params` is the full parameter list in [`ParamSet`] order.
pub trait Regressor {
    fn body(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var>;
    fn head(&self, g: &mut Graph, params: &[Var], features: Var) -> Result<Var>;

    fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let h = self.body(g, params, x)?;
        self.head(g, params, h)
    }
}

/// The MLP described by a [`NetConfig`].
#[derive(Clone, Debug)]
pub struct Mlp {
    cfg: NetConfig,
}

impl Mlp {
    pub fn new(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    fn check_arity(&self, params: &[Var]) -> Result<()> {
        let expected = 2 * (self.cfg.body_layers.len() + self.cfg.head_layers.len() + 1);
        if params.len() != expected {
            return Err(Error::Invalid(format!(
                "expected {expected} parameter tensors, got {}",
                params.len()
            )));
        }
        Ok(())
    }
}

impl Regressor for Mlp {
    fn body(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        self.check_arity(params)?;
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.cfg.input_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: shape,
                rhs: vec![self.cfg.input_dim],
            });
        }
        let mut h = x;
        for l in 0..self.cfg.body_layers.len() {
            let z = Self::linear(g, h, params[2 * l], params[2 * l + 1])?;
            h = g.relu(z)?;
        }
        Ok(h)
    }

    fn head(&self, g: &mut Graph, params: &[Var], features: Var) -> Result<Var> {
        self.check_arity(params)?;
        let first = 2 * self.cfg.body_layers.len();
        let n_head = self.cfg.head_layers.len() + 1;
        let mut h = features;
        for l in 0..n_head {
            let i = first + 2 * l;
            h = Self::linear(g, h, params[i], params[i + 1])?;
            if l + 1 < n_head {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Runs the network on `input`, recording on `graph`.
pub fn forward(params: &ParamSet, cfg: &NetConfig, input: &Tensor, graph: &mut Graph) -> Result<Var> {
    let mlp = Mlp::new(cfg.clone())?;
    let vars = params.bind(graph);
    let x = graph.leaf(input.clone());
    mlp.forward(graph, &vars, x)
}

/// Plain evaluation without keeping a graph around.
pub fn predict(params: &ParamSet, cfg: &NetConfig, input: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let y = forward(params, cfg, input, &mut g)?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetConfig {
        NetConfig {
            input_dim: 4,
            body_layers: vec![8, 8],
            head_layers: vec![6],
            output_dim: 3,
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_params(&small(), 7).unwrap();
        let b = init_params(&small(), 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&small(), 8).unwrap());
        for p in a.params().iter().filter(|p| p.name.ends_with("bias")) {
            assert!(p.tensor.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn he_variance_on_wide_layer() {
        let cfg = NetConfig {
            input_dim: 256,
            body_layers: vec![256],
            head_layers: vec![],
            output_dim: 63,
        };
        let p = init_params(&cfg, 3).unwrap();
        let w = &p.get("body.0.weight").unwrap().tensor;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 2.0 / 256.0;
        assert!((var - expected).abs() / expected < 0.2, "{var} vs {expected}");
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let cfg = small();
        let mut p = init_params(&cfg, 1).unwrap();
        for q in p.params_mut() {
            q.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let y = predict(&p, &cfg, &Tensor::zeros(&[2, 4])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), &[2, 3]);
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let cfg = NetConfig {
            input_dim: 3,
            body_layers: vec![],
            head_layers: vec![],
            output_dim: 3,
        };
        let mut p = init_params(&cfg, 1).unwrap();
        p.params_mut()[0].tensor = Tensor::identity(3);
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        assert_eq!(predict(&p, &cfg, &x).unwrap(), x);
    }

    #[test]
    fn forward_is_repeatable() {
        let cfg = small();
        let p = init_params(&cfg, 2).unwrap();
        let x = Tensor::matrix(1, 4, vec![0.3, -0.1, 0.7, 1.0]).unwrap();
        assert_eq!(predict(&p, &cfg, &x).unwrap(), predict(&p, &cfg, &x).unwrap());
    }

    #[test]
    fn input_dim_mismatch_errors() {
        let cfg = small();
        let p = init_params(&cfg, 2).unwrap();
        assert!(predict(&p, &cfg, &Tensor::zeros(&[1, 5])).is_err());
    }

    #[test]
    fn partition_sizes() {
        let cfg = NetConfig {
            input_dim: 2,
            body_layers: vec![3],
            head_layers: vec![],
            output_dim: 1,
        };
        let p = init_params(&cfg, 0).unwrap();
        let (body, head) = p.partition();
        assert_eq!((body.len(), head.len()), (2, 2));

        let all_head = NetConfig {
            body_layers: vec![],
            ..cfg
        };
        let p = init_params(&all_head, 0).unwrap();
        assert!(p.partition().0.is_empty());
    }

    #[test]
    fn partition_is_disjoint_cover() {
        let mut p = init_params(&small(), 4).unwrap();
        let before = p.clone();
        {
            let (body, head) = p.partition();
            let mut names: Vec<_> = body.iter().chain(&head).map(|q| q.name.clone()).collect();
            names.sort();
            let mut all: Vec<_> = before.params().iter().map(|q| q.name.clone()).collect();
            all.sort();
            assert_eq!(names, all);
        }
        let (body, head) = p.partition_mut();
        for q in head {
            q.tensor.data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
        let body_names: Vec<_> = body.iter().map(|q| q.name.clone()).collect();
        for name in body_names {
            assert_eq!(p.get(&name), before.get(&name));
        }
    }

    #[test]
    fn pose_output_dims_enforced() {
        let mut cfg = NetConfig::new(10, 63);
        assert!(cfg.validate_pose().is_ok());
        cfg.output_dim = 87;
        assert!(cfg.validate_pose().is_ok());
        cfg.output_dim = 64;
        assert!(cfg.validate_pose().is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params(&small(), 9).unwrap();
        let stem = dir.path().join("ckpt/theta");
        p.save(&stem).unwrap();
        assert_eq!(ParamSet::load(&stem).unwrap(), p);
    }
}
