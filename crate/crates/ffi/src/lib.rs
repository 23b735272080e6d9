//! C ABI over `graspmeta`.
//!
//! Every function returns a [`GmStatus`]. On failure a message is available
//! from [`gm_last_error`] until the next call on the same thread. Handles are
//! opaque pointers owned by the caller and released with the matching
//! `*_free` function. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use graspmeta::analysis::slope_difference_test;
use graspmeta::autodiff::Tensor;
use graspmeta::cli::{self, AnalyzeKind, Profile, RunConfig};
use graspmeta::graspworld::{Dataset, DatasetConfig, INPUT_DIM};
use graspmeta::metalearn::{adapt_task, Batch, InnerLoopConfig, MetaState};
use graspmeta::nets::{predict, NetConfig};
use graspmeta::taskset::InputNorm;
use graspmeta::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    MissingArtifact = 4,
    Io = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Which model of a `train` run to load.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmModelKind {
    Meta = 0,
    Baseline = 1,
}

/// Configuration profile for [`gm_config_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmProfile {
    Full = 0,
    Reduced = 1,
    Smoke = 2,
}

/// Slope-difference test between two regression lines.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GmSlopeTest {
    pub slope_a: f64,
    pub slope_b: f64,
    /// `slope_b - slope_a`.
    pub interaction: f64,
    pub interaction_se: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Opaque run configuration.
pub struct GmConfig {
    inner: RunConfig,
}

/// Opaque in-memory dataset.
pub struct GmDataset {
    inner: Dataset,
}

/// Opaque trained network with its target scaling.
pub struct GmModel {
    net: NetConfig,
    state: MetaState,
    inner: InnerLoopConfig,
    scale: f64,
    norm: Option<InputNorm>,
}

impl GmModel {
    fn inputs(&self, rows: usize, data: &[f64]) -> Result<Tensor, Fail> {
        let mut x = matrix(rows, self.net.input_dim, data)?;
        if let Some(n) = &self.norm {
            n.apply(&mut x)?;
        }
        Ok(x)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> GmStatus {
    match e {
        Error::Config(_) | Error::Toml(_) => GmStatus::Config,
        Error::MissingArtifact { .. } => GmStatus::MissingArtifact,
        Error::Io { .. } => GmStatus::Io,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => GmStatus::Numeric,
        _ => GmStatus::InvalidArgument,
    }
}

struct Fail(GmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            GmStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn gm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `s` into `buf` (with NUL) when it fits; `needed` always receives
/// the size including the NUL.
unsafe fn write_string(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    let n = s.len() + 1;
    if let Some(out) = needed.as_mut() {
        *out = n;
    }
    if buf.is_null() || cap < n {
        return Err(Fail(GmStatus::BufferTooSmall, format!("buffer needs {n} bytes")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// New configuration from a profile.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_config_new(profile: GmProfile, out: *mut *mut GmConfig) -> GmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = match profile {
            GmProfile::Full => Profile::Full,
            GmProfile::Reduced => Profile::Reduced,
            GmProfile::Smoke => Profile::Smoke,
        };
        *out = Box::into_raw(Box::new(GmConfig {
            inner: RunConfig::profile(p),
        }));
        Ok(())
    })
}

/// Overrides one field by dotted path; `value` is a TOML literal or a bare
/// word, as with the command line's `--set`.
///
/// # Safety
/// `cfg` must come from [`gm_config_new`]; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gm_config_set(cfg: *mut GmConfig, key: *const c_char, value: *const c_char) -> GmStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let next = cli::resolve_from(
            cfg.inner.clone(),
            None,
            &[(key.to_string(), cli::config::parse_value(value))],
        )?;
        cfg.inner = next;
        Ok(())
    })
}

/// Writes the configuration as TOML into `buf`. With a NULL or short
/// buffer, returns `BufferTooSmall` and stores the required size.
///
/// # Safety
/// `buf` must hold `cap` bytes; `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_config_to_toml(
    cfg: *const GmConfig,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> GmStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        write_string(&cfg.inner.to_toml()?, buf, cap, needed)
    })
}

/// # Safety
/// `cfg` must come from [`gm_config_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_config_free(cfg: *mut GmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a command (`gen`, `train`, `benchmark`, `micro`, `analyze-gpa`,
/// `analyze-embed`, `analyze-gradnorm`, `analyze-slopes`, `report`) and
/// writes the run directory (or dataset directory for `gen`) into `buf`.
///
/// # Safety
/// `cfg` must be valid; `buf` must hold `cap` bytes; `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_run_command(
    cfg: *const GmConfig,
    command: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> GmStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(|| null("cfg"))?.inner;
        let command = str_arg(command, "command")?;
        let dir: PathBuf = match command {
            "gen" => cli::cmd_gen(cfg)?.1.data_dir,
            other => {
                let m = match other {
                    "train" => cli::cmd_train(cfg)?,
                    "benchmark" => cli::cmd_benchmark(cfg)?.0,
                    "micro" => cli::cmd_micro(cfg)?.0,
                    "report" => cli::cmd_report(cfg)?,
                    "analyze-gpa" => cli::cmd_analyze(cfg, AnalyzeKind::Gpa)?,
                    "analyze-embed" => cli::cmd_analyze(cfg, AnalyzeKind::Embed)?,
                    "analyze-gradnorm" => cli::cmd_analyze(cfg, AnalyzeKind::Gradnorm)?,
                    "analyze-slopes" => cli::cmd_analyze(cfg, AnalyzeKind::Slopes)?,
                    _ => {
                        return Err(Fail(GmStatus::InvalidArgument, format!("unknown command {other:?}")));
                    }
                };
                m.config.out_dir.join(m.run_id)
            }
        };
        write_string(&dir.to_string_lossy(), buf, cap, needed)
    })
}

/// Generates a dataset in memory.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_generate(
    n_objects: usize,
    sequences_per_object: usize,
    frames_per_sequence: usize,
    seed: u64,
    out: *mut *mut GmDataset,
) -> GmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = DatasetConfig {
            n_objects,
            sequences_per_object,
            frames_per_sequence,
            seed,
            ..DatasetConfig::default()
        };
        cfg.validate()?;
        *out = Box::into_raw(Box::new(GmDataset {
            inner: Dataset::generate(&cfg)?,
        }));
        Ok(())
    })
}

/// Reads a dataset directory written by `gen` or [`gm_dataset_write`].
///
/// # Safety
/// `dir` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_read(dir: *const c_char, out: *mut *mut GmDataset) -> GmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        *out = Box::into_raw(Box::new(GmDataset {
            inner: Dataset::read(dir.as_ref())?,
        }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be valid; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_write(ds: *const GmDataset, dir: *const c_char) -> GmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let dir = str_arg(dir, "dir")?;
        ds.inner.write(dir.as_ref())?;
        Ok(())
    })
}

/// Number of sequences and total samples.
///
/// # Safety
/// `ds` must be valid; outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_counts(ds: *const GmDataset, sequences: *mut usize, samples: *mut usize) -> GmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        if let Some(s) = sequences.as_mut() {
            *s = ds.inner.sequences.len();
        }
        if let Some(s) = samples.as_mut() {
            *s = ds.inner.sequences.iter().map(|q| q.samples.len()).sum();
        }
        Ok(())
    })
}

/// Copies one sample's network input (`INPUT_DIM` values) and hand target
/// (63 values, millimetres, wrist-aligned camera frame).
///
/// # Safety
/// `ds` must be valid; `input` must hold `gm_input_dim()` values and
/// `target` 63.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_sample(
    ds: *const GmDataset,
    sequence: usize,
    frame: usize,
    input: *mut f64,
    target: *mut f64,
) -> GmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let s = ds
            .inner
            .sequences
            .get(sequence)
            .and_then(|q| q.samples.get(frame))
            .ok_or_else(|| Fail(GmStatus::InvalidArgument, format!("no sample ({sequence}, {frame})")))?;
        if input.is_null() || target.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(s.input.as_ptr(), input, s.input.len());
        ptr::copy_nonoverlapping(s.target_hand.as_ptr(), target, s.target_hand.len());
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_free(ds: *mut GmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Width of a network input row.
#[no_mangle]
pub extern "C" fn gm_input_dim() -> usize {
    INPUT_DIM
}

/// Loads one model of a `train` run directory.
///
/// # Safety
/// `run_dir` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gm_model_load(run_dir: *const c_char, kind: GmModelKind, out: *mut *mut GmModel) -> GmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = str_arg(run_dir, "run_dir")?;
        let t = cli::commands::load_trained(Some(dir.as_ref()), "checkpoint")?;
        let c = &t.manifest.config;
        let state = match kind {
            GmModelKind::Meta => t.meta,
            GmModelKind::Baseline => t.baseline,
        };
        *out = Box::into_raw(Box::new(GmModel {
            net: c.experiment.net(INPUT_DIM),
            state,
            inner: InnerLoopConfig {
                regularizer_weight: None,
                ..c.experiment.inner.clone()
            },
            scale: c.experiment.target_scale,
            norm: if c.experiment.normalize_inputs {
                Some(InputNorm::reference(&c.dataset)?)
            } else {
                None
            },
        }));
        Ok(())
    })
}

/// Output width in values per row.
///
/// # Safety
/// `model` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gm_model_output_dim(model: *const GmModel, out: *mut usize) -> GmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m.net.output_dim;
        Ok(())
    })
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> Result<Tensor, Fail> {
    if rows == 0 {
        return Err(Fail(GmStatus::InvalidArgument, "need at least one row".into()));
    }
    Ok(Tensor::matrix(rows, cols, data.to_vec())?)
}

/// Predicts `rows` samples. `inputs` is row-major `rows × gm_input_dim()`;
/// `out` receives `rows × output_dim` values in millimetres.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn gm_model_predict(
    model: *const GmModel,
    inputs: *const f64,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> GmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = m.inputs(rows, slice_arg(inputs, rows * m.net.input_dim, "inputs")?)?;
        let need = rows * m.net.output_dim;
        if out_len < need {
            return Err(Fail(GmStatus::BufferTooSmall, format!("output needs {need} values")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let y = predict(&m.state.params, &m.net, &x)?;
        for (i, v) in y.data().iter().enumerate() {
            *out.add(i) = v / m.scale;
        }
        Ok(())
    })
}

/// Adapts a copy of `model` to a support set (targets in millimetres) with
/// the inner-loop settings it was trained with.
///
/// # Safety
/// Buffers must hold `rows × input_dim` and `rows × output_dim` values;
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gm_model_adapt(
    model: *const GmModel,
    inputs: *const f64,
    targets: *const f64,
    rows: usize,
    out: *mut *mut GmModel,
) -> GmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out_arg(out, "out")?;
        let x = m.inputs(rows, slice_arg(inputs, rows * m.net.input_dim, "inputs")?)?;
        let t: Vec<f64> = slice_arg(targets, rows * m.net.output_dim, "targets")?
            .iter()
            .map(|v| v * m.scale)
            .collect();
        let support = Batch::new(x, matrix(rows, m.net.output_dim, &t)?)?;
        let adapted = adapt_task(&graspmeta::nets::Mlp::new(m.net.clone())?, &m.state, &support, &m.inner)?;
        *out = Box::into_raw(Box::new(GmModel {
            net: m.net.clone(),
            state: MetaState {
                params: adapted.params,
                ..m.state.clone()
            },
            inner: m.inner.clone(),
            scale: m.scale,
            norm: m.norm.clone(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_model_free(model: *mut GmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Interaction t-test of `slope_b - slope_a` for two regression lines.
///
/// # Safety
/// Each array must hold the stated number of values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gm_slope_difference_test(
    xa: *const f64,
    ya: *const f64,
    na: usize,
    xb: *const f64,
    yb: *const f64,
    nb: usize,
    out: *mut GmSlopeTest,
) -> GmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = slope_difference_test(
            slice_arg(xa, na, "xa")?,
            slice_arg(ya, na, "ya")?,
            slice_arg(xb, nb, "xb")?,
            slice_arg(yb, nb, "yb")?,
        )?;
        *out = GmSlopeTest {
            slope_a: t.fit_a.slope,
            slope_b: t.fit_b.slope,
            interaction: t.interaction,
            interaction_se: t.interaction_se,
            dof: t.dof as u64,
            p_value: t.p_value,
        };
        Ok(())
    })
}
