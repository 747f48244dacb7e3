//! C ABI over the `score` crate.
//!
//! Every fallible function returns a [`ScoreStatus`]. On failure a message is
//! available from [`score_last_error`] on the same thread. Strings handed out
//! by the library must be released with [`score_string_free`]; handles with
//! their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use score::dataset::{load_dataset, DatasetFamily, ItemSet, LoadOptions};
use score::extraction::{extract_boxed_answer, extract_mcq_answer, Prediction};
use score::math::{normalize_math, sym_equiv};
use score::metrics::{
    agreement_stats, consistency_rate, Answer, Gold, MetricConfig, PredictionMatrix, PredictionSet, TaggedPrediction,
};
use score::perturbation::Variant;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    InvalidData = 5,
    Panic = 6,
}

/// Predictions collected item by item, scored as a whole.
pub struct ScoreMatrix {
    inner: PredictionMatrix,
}

/// A validated dataset.
pub struct ScoreDataset {
    inner: ItemSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ScoreStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> ScoreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScoreStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            ScoreStatus::Panic
        }
    }
}

fn not_null<T>(p: *const T, name: &str) -> FfiResult<()> {
    if p.is_null() {
        Err(Failure(ScoreStatus::NullPointer, format!("`{name}` is NULL")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be NULL or point to a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    not_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ScoreStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn into_c(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', "")).expect("nul bytes removed").into_raw()
}

fn family(name: &str) -> FfiResult<DatasetFamily> {
    name.parse().map_err(|e: String| Failure(ScoreStatus::InvalidArgument, e))
}

/// # Safety
/// `out` must be NULL or writable.
unsafe fn write_prediction(p: Prediction, out: *mut *mut c_char) -> FfiResult<()> {
    not_null(out, "out")?;
    *out = p.value().map_or(ptr::null_mut(), into_c);
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Owned by the
/// library and valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn score_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn score_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn score_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Extracts the option letter after the last `best answer is`. `*out` is
/// set to the letter, or NULL when extraction fails.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_extract_mcq(raw: *const c_char, n_options: usize, out: *mut *mut c_char) -> ScoreStatus {
    guard(|| {
        let raw = text(raw, "raw")?;
        if !(2..=score::dataset::MAX_OPTIONS).contains(&n_options) {
            return Err(Failure(ScoreStatus::InvalidArgument, format!("n_options {n_options} out of range")));
        }
        write_prediction(extract_mcq_answer(raw, n_options), out)
    })
}

/// Extracts the content of the last `\boxed{...}`. `*out` is NULL when
/// extraction fails.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_extract_boxed(raw: *const c_char, out: *mut *mut c_char) -> ScoreStatus {
    guard(|| write_prediction(extract_boxed_answer(text(raw, "raw")?), out))
}

/// Canonical form of a math answer.
///
/// # Safety
/// `answer` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_normalize_math(answer: *const c_char, out: *mut *mut c_char) -> ScoreStatus {
    guard(|| {
        let normalized = normalize_math(text(answer, "answer")?);
        not_null(out, "out")?;
        *out = into_c(&normalized);
        Ok(())
    })
}

/// Whether two math answers are equivalent.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_sym_equiv(a: *const c_char, b: *const c_char, out: *mut bool) -> ScoreStatus {
    guard(|| {
        let same = sym_equiv(text(a, "a")?, text(b, "b")?);
        not_null(out, "out")?;
        *out = same;
        Ok(())
    })
}

/// Creates an empty matrix for `family` (`mmlu-pro`, `agieval` or `math`).
///
/// # Safety
/// `family_name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_matrix_new(family_name: *const c_char, out: *mut *mut ScoreMatrix) -> ScoreStatus {
    guard(|| {
        let family = family(text(family_name, "family")?)?;
        not_null(out, "out")?;
        *out = Box::into_raw(Box::new(ScoreMatrix { inner: PredictionMatrix::new(family, Vec::new()) }));
        Ok(())
    })
}

fn letter_index(letter: &str) -> FfiResult<usize> {
    match letter.as_bytes() {
        [c] if c.is_ascii_uppercase() => Ok((c - b'A') as usize),
        _ => Err(Failure(ScoreStatus::InvalidArgument, format!("`{letter}` is not an option letter"))),
    }
}

/// Adds one item. `answers` holds `n_answers` predictions, one per run;
/// a NULL entry is a failed extraction. Multiple-choice answers and gold are
/// letters (`"A"`, `"B"`, ...), math ones are answer strings. Every item
/// must carry the same number of answers.
///
/// # Safety
/// `matrix` must be a live handle; string arguments must be NUL-terminated;
/// `answers` must point to `n_answers` readable pointers.
#[no_mangle]
pub unsafe extern "C" fn score_matrix_push_item(
    matrix: *mut ScoreMatrix,
    item_id: *const c_char,
    category: *const c_char,
    gold: *const c_char,
    answers: *const *const c_char,
    n_answers: usize,
) -> ScoreStatus {
    guard(|| {
        not_null(matrix, "matrix")?;
        let m = &mut (*matrix).inner;
        let math = m.family == DatasetFamily::Math;
        let item_id = text(item_id, "item_id")?.to_string();
        let category = text(category, "category")?.to_string();
        let gold = text(gold, "gold")?;
        let gold = if math { Gold::Math(gold.to_string()) } else { Gold::Option(letter_index(gold)?) };
        if n_answers < 2 {
            return Err(Failure(ScoreStatus::InvalidArgument, "at least 2 answers are needed".into()));
        }
        if let Some(first) = m.sets.first() {
            if first.predictions.len() != n_answers {
                return Err(Failure(
                    ScoreStatus::InvalidArgument,
                    format!("expected {} answers, got {n_answers}", first.predictions.len()),
                ));
            }
        }
        if m.sets.iter().any(|s| s.item_id == item_id) {
            return Err(Failure(ScoreStatus::InvalidArgument, format!("duplicate item `{item_id}`")));
        }
        not_null(answers, "answers")?;
        let mut predictions = Vec::with_capacity(n_answers);
        for i in 0..n_answers {
            let p = *answers.add(i);
            let answer = if p.is_null() {
                None
            } else {
                let s = text(p, "answer")?;
                Some(if math { Answer::Math(s.to_string()) } else { Answer::Option(letter_index(s)?) })
            };
            predictions.push(TaggedPrediction::new(Variant::prompt(i as u32), answer));
        }
        m.sets.push(PredictionSet { item_id, category, gold, predictions });
        Ok(())
    })
}

/// Number of items pushed so far; 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn score_matrix_len(matrix: *const ScoreMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.sets.len())
}

fn metric_config(failed_pairs_similar: bool) -> MetricConfig {
    MetricConfig { failed_pairs_similar, ..MetricConfig::default() }
}

/// Consistency rate in `[0, 100]`.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_matrix_consistency_rate(
    matrix: *const ScoreMatrix,
    failed_pairs_similar: bool,
    out: *mut f64,
) -> ScoreStatus {
    guard(|| {
        not_null(matrix, "matrix")?;
        not_null(out, "out")?;
        let cr = consistency_rate(&(*matrix).inner, &metric_config(failed_pairs_similar))
            .map_err(|e| Failure(ScoreStatus::InvalidData, e.to_string()))?;
        *out = cr;
        Ok(())
    })
}

/// Percentage of unanimous items, and of items with at least `threshold`
/// mutually similar answers.
///
/// # Safety
/// `matrix` must be a live handle; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_matrix_agreement(
    matrix: *const ScoreMatrix,
    threshold: usize,
    out_unanimity: *mut f64,
    out_cluster: *mut f64,
) -> ScoreStatus {
    guard(|| {
        not_null(matrix, "matrix")?;
        not_null(out_unanimity, "out_unanimity")?;
        not_null(out_cluster, "out_cluster")?;
        let stats = agreement_stats(&(*matrix).inner, &[threshold], &MetricConfig::default())
            .map_err(|e| Failure(ScoreStatus::InvalidData, e.to_string()))?;
        *out_unanimity = stats.unanimity;
        *out_cluster = stats.clusters[&threshold];
        Ok(())
    })
}

/// Releases a matrix. NULL is ignored.
///
/// # Safety
/// `matrix` must come from [`score_matrix_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn score_matrix_free(matrix: *mut ScoreMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Loads and validates a JSON Lines dataset.
///
/// # Safety
/// `path` and `family_name` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn score_dataset_load(
    path: *const c_char,
    family_name: *const c_char,
    lenient: bool,
    out: *mut *mut ScoreDataset,
) -> ScoreStatus {
    guard(|| {
        let path = Path::new(text(path, "path")?);
        let family = family(text(family_name, "family")?)?;
        not_null(out, "out")?;
        let loaded = load_dataset(path, family, LoadOptions { lenient }).map_err(|e| {
            let status = if matches!(e, score::dataset::DatasetError::Io { .. }) {
                ScoreStatus::Io
            } else {
                ScoreStatus::InvalidData
            };
            Failure(status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(ScoreDataset { inner: loaded.set }));
        Ok(())
    })
}

/// Number of items; 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn score_dataset_len(dataset: *const ScoreDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Content digest of the dataset, as hex.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn score_dataset_digest(dataset: *const ScoreDataset, out: *mut *mut c_char) -> ScoreStatus {
    guard(|| {
        not_null(dataset, "dataset")?;
        not_null(out, "out")?;
        *out = into_c(&(*dataset).inner.digest());
        Ok(())
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must come from [`score_dataset_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn score_dataset_free(dataset: *mut ScoreDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}
