//! Whole-dataset generation and the on-disk format.
//!
//! A dataset directory holds `manifest.json` and one `seq_NNNNN.bin` per
//! sequence. Each binary file is a run of fixed-size records of
//! little-endian f64 values in the order: input (61), validity bits as
//! 0.0/1.0 (29), target_hand (63), target_corners (24, NaN when absent).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::objects::{generate_catalog, ObjectSpec};
use super::sequence::{
    generate_sequence, RenderConfig, Sample, CORNER_TARGET_DIM, HAND_TARGET_DIM, INPUT_DIM, NUM_POINTS,
};
use crate::error::{Error, Result};
use crate::seed;

pub const FORMAT: &str = "graspmeta-dataset-v1";
pub const RECORD_LEN: usize = INPUT_DIM + NUM_POINTS + HAND_TARGET_DIM + CORNER_TARGET_DIM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_objects: usize,
    pub subjects: usize,
    pub sequences_per_object: usize,
    pub frames_per_sequence: usize,
    pub seed: u64,
    pub render: RenderConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_objects: 20,
            subjects: 10,
            sequences_per_object: 100,
            frames_per_sequence: 200,
            seed: 0,
            render: RenderConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 || self.subjects == 0 || self.sequences_per_object == 0 || self.frames_per_sequence == 0 {
            return Err(Error::Config("dataset counts must all be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub sequence_id: usize,
    pub object_id: usize,
    pub subject: usize,
    pub seq_seed: u64,
    pub frames: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub info: SequenceInfo,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordLayout {
    pub input: usize,
    pub validity: usize,
    pub target_hand: usize,
    pub target_corners: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: DatasetConfig,
    pub layout: RecordLayout,
    pub catalog: Vec<ObjectSpec>,
    pub sequences: Vec<SequenceInfo>,
}

impl Manifest {
    pub fn samples_per_object(&self) -> Vec<usize> {
        let mut out = vec![0; self.catalog.len()];
        for s in &self.sequences {
            out[s.object_id] += s.frames;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub sequences: Vec<Sequence>,
}

fn layout() -> RecordLayout {
    RecordLayout {
        input: INPUT_DIM,
        validity: NUM_POINTS,
        target_hand: HAND_TARGET_DIM,
        target_corners: CORNER_TARGET_DIM,
    }
}

impl Dataset {
    pub fn generate(cfg: &DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let catalog = generate_catalog(cfg.n_objects, cfg.seed);
        let mut sequences = Vec::with_capacity(cfg.n_objects * cfg.sequences_per_object);
        for obj in &catalog {
            for i in 0..cfg.sequences_per_object {
                let sequence_id = obj.object_id * cfg.sequences_per_object + i;
                let seq_seed = seed::derive(cfg.seed, "sequence", sequence_id as u64);
                let subject = i % cfg.subjects;
                let samples = generate_sequence(obj, subject, seq_seed, cfg.frames_per_sequence, &cfg.render)?;
                sequences.push(Sequence {
                    info: SequenceInfo {
                        sequence_id,
                        object_id: obj.object_id,
                        subject,
                        seq_seed,
                        frames: samples.len(),
                        file: format!("seq_{sequence_id:05}.bin"),
                    },
                    samples,
                });
            }
        }
        Ok(Self {
            manifest: Manifest {
                format: FORMAT.into(),
                config: cfg.clone(),
                layout: layout(),
                catalog,
                sequences: sequences.iter().map(|s| s.info.clone()).collect(),
            },
            sequences,
        })
    }

    pub fn catalog(&self) -> &[ObjectSpec] {
        &self.manifest.catalog
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.sequences {
            let path = dir.join(&s.info.file);
            fs::write(&path, encode_samples(&s.samples)?).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let mut sequences = Vec::with_capacity(manifest.sequences.len());
        for info in &manifest.sequences {
            let path = dir.join(&info.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let samples = decode_samples(&bytes)?;
            if samples.len() != info.frames {
                return Err(Error::Invalid(format!(
                    "{} holds {} records, manifest says {}",
                    path.display(),
                    samples.len(),
                    info.frames
                )));
            }
            sequences.push(Sequence {
                info: info.clone(),
                samples,
            });
        }
        Ok(Self { manifest, sequences })
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: path.clone(),
            prerequisite: "gen".into(),
        },
        _ => Error::io(&path, e),
    })?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT || m.layout != layout() {
        return Err(Error::Invalid(format!("unsupported dataset format {}", m.format)));
    }
    Ok(m)
}

pub fn encode_samples(samples: &[Sample]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(samples.len() * RECORD_LEN * 8);
    for s in samples {
        if s.input.len() != INPUT_DIM || s.validity.len() != NUM_POINTS || s.target_hand.len() != HAND_TARGET_DIM {
            return Err(Error::Invalid("sample does not match the record layout".into()));
        }
        let corners = match &s.target_corners {
            Some(c) if c.len() == CORNER_TARGET_DIM => c.clone(),
            Some(_) => return Err(Error::Invalid("corner target length".into())),
            None => vec![f64::NAN; CORNER_TARGET_DIM],
        };
        let values = s
            .input
            .iter()
            .copied()
            .chain(s.validity.iter().map(|&v| if v { 1.0 } else { 0.0 }))
            .chain(s.target_hand.iter().copied())
            .chain(corners);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<Sample>> {
    let rec = RECORD_LEN * 8;
    if bytes.len() % rec != 0 {
        return Err(Error::Invalid(format!("{} bytes is not a whole number of records", bytes.len())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(values
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            let (input, r) = r.split_at(INPUT_DIM);
            let (valid, r) = r.split_at(NUM_POINTS);
            let (hand, corners) = r.split_at(HAND_TARGET_DIM);
            Sample {
                input: input.to_vec(),
                validity: valid.iter().map(|&v| v != 0.0).collect(),
                target_hand: hand.to_vec(),
                target_corners: if corners.iter().all(|c| c.is_nan()) {
                    None
                } else {
                    Some(corners.to_vec())
                },
            }
        })
        .collect())
}
