use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::metalearn::MetaState;
use crate::nets::{checkpoint_paths, ParamSet};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash over every regular file below `dir`, in sorted relative-path order.
pub fn hash_tree(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let p = dir.join(&rel);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("inside root").to_path_buf());
        }
    }
    Ok(())
}

/// What a run consumed and produced. Re-running `command` with `config`
/// regenerates `outputs` byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_id: String,
    pub config: RunConfig,
    /// Artifact path to SHA-256 (directories hash their whole tree).
    pub inputs: BTreeMap<String, String>,
    /// Output file, relative to the run directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: file.clone(),
                prerequisite: "the command that produced this run".into(),
            },
            _ => Error::io(&file, e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Default run id: the command plus a prefix of the config hash, so
/// identical configs land in the same directory.
pub fn default_run_id(command: &str, cfg: &RunConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(format!("{command}-{}", &sha256_hex(&json)[..12]))
}

/// One run's output directory.
pub struct RunDir {
    pub root: PathBuf,
    pub run_id: String,
    command: String,
    config: RunConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(command: &str, cfg: &RunConfig) -> Result<Self> {
        let run_id = match &cfg.run_id {
            Some(id) => id.clone(),
            None => default_run_id(command, cfg)?,
        };
        let root = cfg.out_dir.join(&run_id);
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            run_id,
            command: command.into(),
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn input(&mut self, label: impl Into<String>, hash: String) {
        self.inputs.insert(label.into(), hash);
    }

    /// Records a file written outside the run directory.
    pub fn external_output(&mut self, path: &Path) -> Result<()> {
        let h = hash_file(path)?;
        self.outputs.insert(path.to_string_lossy().into_owned(), h);
        Ok(())
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&p, bytes.as_ref()).map_err(|e| Error::io(&p, e))?;
        self.outputs.insert(rel.into(), sha256_hex(bytes.as_ref()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Saves a meta-learner state under `rel` and records its files.
    pub fn save_state(&mut self, rel: &str, state: &MetaState) -> Result<()> {
        let stem = self.path(rel);
        save_state(&stem, state)?;
        let (bin, json) = checkpoint_paths(&stem);
        for p in [bin, json, extras_path(&stem)] {
            if p.exists() {
                let key = p.strip_prefix(&self.root).expect("inside run dir").to_string_lossy().into_owned();
                self.outputs.insert(key, hash_file(&p)?);
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            run_id: self.run_id.clone(),
            config: self.config.clone(),
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let p = self.path(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }
}

#[derive(Serialize, Deserialize)]
struct StateExtras {
    inner_lrs: Option<Vec<Vec<f64>>>,
    noise_logvar: Option<Vec<f64>>,
}

fn extras_path(stem: &Path) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".extra.json");
    PathBuf::from(s)
}

/// Network parameters as a checkpoint plus learned rates and noise scales
/// in a small JSON file.
pub fn save_state(stem: &Path, state: &MetaState) -> Result<()> {
    state.params.save(stem)?;
    let extras = StateExtras {
        inner_lrs: state.inner_lrs.clone(),
        noise_logvar: state.noise_logvar.as_ref().map(|t| t.data().to_vec()),
    };
    let p = extras_path(stem);
    fs::write(&p, serde_json::to_string_pretty(&extras)?).map_err(|e| Error::io(&p, e))
}

pub fn load_state(stem: &Path, prerequisite: &str) -> Result<MetaState> {
    let (bin, _) = checkpoint_paths(stem);
    if !bin.exists() {
        return Err(Error::MissingArtifact {
            path: bin,
            prerequisite: prerequisite.into(),
        });
    }
    let params = ParamSet::load(stem)?;
    let p = extras_path(stem);
    let extras: StateExtras = match fs::read_to_string(&p) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => StateExtras {
            inner_lrs: None,
            noise_logvar: None,
        },
        Err(e) => return Err(Error::io(&p, e)),
    };
    let noise_logvar = extras
        .noise_logvar
        .map(|v| Tensor::matrix(1, v.len(), v))
        .transpose()?;
    Ok(MetaState {
        params,
        inner_lrs: extras.inner_lrs,
        noise_logvar,
    })
}
