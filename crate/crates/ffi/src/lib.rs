//! C ABI over the `unibi` crate.
//!
//! Every function returns a [`UnibiStatus`]; on failure the message is kept
//! per thread and can be copied out with [`unibi_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use unibi::cli::Checkpoint;
use unibi::diagnostics::imbalance_degree;
use unibi::evaluator::evaluate;
use unibi::kg_store::{augment_reciprocal, build_filter_index, load_dataset_dir, Dataset, Split};
use unibi::model::{self, init_state, ModelConfig, ModelKind, ModelState};
use unibi::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnibiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BadCheckpoint = 4,
    Mismatch = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Model parameters plus the vocabulary hash they were trained against
/// (empty for freshly initialized models).
pub struct UnibiModel {
    state: ModelState,
    vocab_fingerprint: String,
}

pub struct UnibiDataset {
    dataset: Dataset,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnibiMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> UnibiStatus {
    match err.root() {
        Error::Io { .. } | Error::Parse { .. } => UnibiStatus::Io,
        Error::BadCheckpoint(_) => UnibiStatus::BadCheckpoint,
        Error::CheckpointMismatch(_) | Error::Shape(_) => UnibiStatus::Mismatch,
        Error::DegenerateVector { .. }
        | Error::NoConvergence { .. }
        | Error::NonFiniteGradient { .. }
        | Error::BoundViolation { .. }
        | Error::NecessaryConditionViolation { .. }
        | Error::SpectralRadius(_)
        | Error::Counterexample(_)
        | Error::UnnormalizedBlock { .. } => UnibiStatus::Numeric,
        _ => UnibiStatus::InvalidArgument,
    }
}

enum Failure {
    Status(UnibiStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn fail(status: UnibiStatus, msg: impl Into<String>) -> Failure {
    Failure::Status(status, msg.into())
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UnibiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            UnibiStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            UnibiStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(UnibiStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(UnibiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(UnibiStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(UnibiStatus::NullPointer, format!("{what} is null")))
}

/// Copy `src` into the caller buffer `out[..len]`, which must match exactly.
unsafe fn fill(out: *mut f64, len: usize, src: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(UnibiStatus::NullPointer, "output buffer is null"));
    }
    if len < src.len() {
        return Err(fail(
            UnibiStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Copy the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes. Returns the full message length without NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn unibi_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Freshly initialized model. `kind` is one of `unibi-o2`, `unibi-o3`, `cp`,
/// `complex`, `rescal`.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unibi_model_new(
    kind: *const c_char,
    dim: usize,
    entity_constraint: bool,
    relation_constraint: bool,
    n_entities: usize,
    n_relations: usize,
    seed: u64,
    out: *mut *mut UnibiModel,
) -> UnibiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind: ModelKind = str_arg(kind, "kind")?.parse()?;
        let cfg =
            ModelConfig::new(kind, dim)?.with_constraints(entity_constraint, relation_constraint);
        let state = init_state(cfg, n_entities, n_relations, seed)?;
        *out = Box::into_raw(Box::new(UnibiModel {
            state,
            vocab_fingerprint: String::new(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn unibi_model_free(model: *mut UnibiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unibi_model_load(
    path: *const c_char,
    out: *mut *mut UnibiModel,
) -> UnibiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(UnibiModel {
            state: ck.state,
            vocab_fingerprint: ck.header.vocab_fingerprint,
        }));
        Ok(())
    })
}

/// Refuses to replace an existing file unless `force` is set.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn unibi_model_save(
    model: *const UnibiModel,
    path: *const c_char,
    force: bool,
) -> UnibiStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let ck = Checkpoint::with_fingerprint(
            m.state.clone(),
            m.vocab_fingerprint.clone(),
            None,
            BTreeMap::new(),
        );
        ck.save(&path, force)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn unibi_model_shape(
    model: *const UnibiModel,
    n_entities: *mut usize,
    n_relations: *mut usize,
    dim: *mut usize,
) -> UnibiStatus {
    guard(|| {
        let s = &ref_arg(model, "model")?.state;
        for (p, v) in [
            (n_entities, s.n_entities()),
            (n_relations, s.n_relations()),
            (dim, s.dim()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unibi_score(
    model: *const UnibiModel,
    head: usize,
    relation: usize,
    tail: usize,
    out: *mut f64,
) -> UnibiStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let out = out_arg(out, "out")?;
        *out = model::score(&m.state, head, relation, tail)?.0;
        Ok(())
    })
}

/// Scores of `(head, relation, e)` for every entity `e`; `len` must be at
/// least the entity count.
///
/// # Safety
/// `model` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn unibi_score_all_tails(
    model: *const UnibiModel,
    head: usize,
    relation: usize,
    out: *mut f64,
    len: usize,
) -> UnibiStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let scores = model::score_all_tails(&m.state, head, relation)?;
        fill(out, len, &scores)
    })
}

/// Singular values of a relation's effective matrix, descending; `len` must
/// be at least the dimension.
///
/// # Safety
/// `model` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn unibi_singular_spectrum(
    model: *const UnibiModel,
    relation: usize,
    out: *mut f64,
    len: usize,
) -> UnibiStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        fill(out, len, &model::singular_spectrum(&m.state, relation)?)
    })
}

/// Dense effective matrix in row-major order; `len` must be at least `dim²`.
///
/// # Safety
/// `model` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn unibi_effective_matrix(
    model: *const UnibiModel,
    relation: usize,
    out: *mut f64,
    len: usize,
) -> UnibiStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        fill(
            out,
            len,
            model::effective_matrix(&m.state, relation)?.data(),
        )
    })
}

/// # Safety
/// `sigma` must point to `len` readable doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn unibi_imbalance_degree(
    sigma: *const f64,
    len: usize,
    out: *mut f64,
) -> UnibiStatus {
    guard(|| {
        if sigma.is_null() {
            return Err(fail(UnibiStatus::NullPointer, "sigma is null"));
        }
        let out = out_arg(out, "out")?;
        *out = imbalance_degree(std::slice::from_raw_parts(sigma, len))?;
        Ok(())
    })
}

/// Load `train.txt`, `valid.txt` and `test.txt` from `dir`, optionally adding
/// reciprocal relations.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unibi_dataset_load(
    dir: *const c_char,
    reciprocal: bool,
    out: *mut *mut UnibiDataset,
) -> UnibiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mut dataset = load_dataset_dir(&PathBuf::from(str_arg(dir, "dir")?))?;
        if reciprocal {
            dataset = augment_reciprocal(&dataset)?;
        }
        *out = Box::into_raw(Box::new(UnibiDataset { dataset }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn unibi_dataset_free(dataset: *mut UnibiDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn unibi_dataset_counts(
    dataset: *const UnibiDataset,
    n_entities: *mut usize,
    n_relations: *mut usize,
    n_train: *mut usize,
    n_valid: *mut usize,
    n_test: *mut usize,
) -> UnibiStatus {
    guard(|| {
        let d = &ref_arg(dataset, "dataset")?.dataset;
        let values = [
            (n_entities, d.vocab.n_entities()),
            (n_relations, d.vocab.n_relations()),
            (n_train, d.train.len()),
            (n_valid, d.valid.len()),
            (n_test, d.test.len()),
        ];
        for (p, v) in values {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Filtered tail-prediction metrics on one split: 0 train, 1 valid, 2 test.
/// Models loaded from a checkpoint must match the dataset vocabulary.
///
/// # Safety
/// Both handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unibi_evaluate(
    model: *const UnibiModel,
    dataset: *const UnibiDataset,
    split: u32,
    out: *mut UnibiMetrics,
) -> UnibiStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = &ref_arg(dataset, "dataset")?.dataset;
        let out = out_arg(out, "out")?;
        let split = match split {
            0 => Split::Train,
            1 => Split::Valid,
            2 => Split::Test,
            _ => {
                return Err(fail(
                    UnibiStatus::InvalidArgument,
                    format!("unknown split {split}"),
                ))
            }
        };
        if !m.vocab_fingerprint.is_empty() && m.vocab_fingerprint != d.vocab.fingerprint() {
            return Err(fail(
                UnibiStatus::Mismatch,
                "model was trained on a different vocabulary",
            ));
        }
        if m.state.n_entities() != d.vocab.n_entities()
            || m.state.n_relations() != d.vocab.n_relations()
        {
            return Err(fail(
                UnibiStatus::Mismatch,
                "model and dataset sizes differ",
            ));
        }
        let r = evaluate(&m.state, d.split(split), &build_filter_index(d))?;
        *out = UnibiMetrics {
            mrr: r.mrr,
            hits1: r.hits(1),
            hits3: r.hits(3),
            hits10: r.hits(10),
            n_queries: r.n_queries,
        };
        Ok(())
    })
}
