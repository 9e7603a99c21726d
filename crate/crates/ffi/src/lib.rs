//! C ABI over the `groupdet` library.
//!
//! Conventions:
//! - every fallible function returns a [`GdStatus`]; results go through out
//!   pointers that are written only on `GD_STATUS_OK`;
//! - on failure, [`gd_last_error_message`] describes the error for the
//!   calling thread;
//! - matrices and partitions are opaque handles released with their `_free`
//!   function; passing NULL to a `_free` function is a no-op;
//! - strings are NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use groupdet::classifier::{parse_answer, HeuristicBackend, Judgment, OracleBackend, PairClassifier};
use groupdet::cluster::{agreement_score, exhaustive_cluster, greedy_cluster, AgreementWeights, Partition};
use groupdet::evaluation::{score_results, EvalReport};
use groupdet::geometry::{bbox_union, center_distance, iou, pad_bbox, BBox, ImageGeometry};
use groupdet::pair_filter::{FilterParams, Provenance, RelationMatrix};
use groupdet::pipeline::{run_detect, PipelineConfig, DEFAULT_TAU_DET};
use groupdet::scene_io::{load_scenes, manifest_dir, read_results, write_results};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    OutOfRange = 4,
    RemoteUnavailable = 5,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdJudgment {
    Yes = 0,
    No = 1,
    NotSure = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdBackend {
    Heuristic = 0,
    Oracle = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdBBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdWeights {
    pub w_yes: f64,
    pub w_no: f64,
    pub w_notsure: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdRunOptions {
    pub backend: GdBackend,
    pub tau_det: f64,
    pub tau_d: f64,
    pub tau_z: u8,
    pub weights: GdWeights,
    /// Scenes processed in parallel; 0 means 1.
    pub jobs: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GdRunSummary {
    pub scenes: u64,
    pub failed_scenes: u64,
    pub persons: u64,
    pub pairs: u64,
    pub filtered_distance: u64,
    pub filtered_depth: u64,
    pub classified: u64,
    pub groups: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GdEvalReport {
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_pred: u64,
    pub n_gt: u64,
    pub n_matched: u64,
    pub tp: u64,
}

/// Opaque pairwise judgment matrix.
pub struct GdMatrix {
    inner: RelationMatrix,
}

/// Opaque clustering result.
pub struct GdPartition {
    inner: Partition,
}

struct Failure(GdStatus, String);

impl Failure {
    fn invalid(msg: impl ToString) -> Self {
        Failure(GdStatus::InvalidArgument, msg.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            GdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GdStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(GdStatus::NullPointer, format!("{name} is NULL")))
}

unsafe fn write<T>(p: *mut T, v: T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure(GdStatus::NullPointer, format!("{name} is NULL")));
    }
    p.write(v);
    Ok(())
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(GdStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{name} is not valid UTF-8")))
}

fn to_bbox(b: &GdBBox) -> Result<BBox, Failure> {
    BBox::new(b.x1, b.y1, b.x2, b.y2).map_err(Failure::invalid)
}

fn from_bbox(b: BBox) -> GdBBox {
    let [x1, y1, x2, y2] = b.to_array();
    GdBBox { x1, y1, x2, y2 }
}

fn image(width: u32, height: u32) -> Result<ImageGeometry, Failure> {
    ImageGeometry::new(width, height).map_err(Failure::invalid)
}

fn to_judgment(j: GdJudgment) -> Judgment {
    match j {
        GdJudgment::Yes => Judgment::Yes,
        GdJudgment::No => Judgment::No,
        GdJudgment::NotSure => Judgment::NotSure,
    }
}

fn from_judgment(j: Judgment) -> GdJudgment {
    match j {
        Judgment::Yes => GdJudgment::Yes,
        Judgment::No => GdJudgment::No,
        Judgment::NotSure => GdJudgment::NotSure,
    }
}

unsafe fn weights_or_default(w: *const GdWeights) -> Result<AgreementWeights, Failure> {
    match w.as_ref() {
        None => Ok(AgreementWeights::default()),
        Some(w) => AgreementWeights::new(w.w_yes, w.w_no, w.w_notsure).map_err(Failure::invalid),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn gd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn gd_iou(a: *const GdBBox, b: *const GdBBox, out: *mut f64) -> GdStatus {
    guard(|| {
        let (a, b) = (to_bbox(read(a, "a")?)?, to_bbox(read(b, "b")?)?);
        write(out, iou(&a, &b), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gd_bbox_union(a: *const GdBBox, b: *const GdBBox, out: *mut GdBBox) -> GdStatus {
    guard(|| {
        let (a, b) = (to_bbox(read(a, "a")?)?, to_bbox(read(b, "b")?)?);
        write(out, from_bbox(bbox_union(&a, &b)), "out")
    })
}

/// Grow `b` by `fraction` of its width/height on every side, clamped to the image.
#[no_mangle]
pub unsafe extern "C" fn gd_pad_bbox(
    b: *const GdBBox,
    fraction: f64,
    width: u32,
    height: u32,
    out: *mut GdBBox,
) -> GdStatus {
    guard(|| {
        let b = to_bbox(read(b, "b")?)?;
        if !(fraction.is_finite() && fraction >= 0.0) {
            return Err(Failure::invalid("fraction must be finite and >= 0"));
        }
        write(out, from_bbox(pad_bbox(&b, fraction, image(width, height)?)), "out")
    })
}

/// Center distance divided by the image diagonal.
#[no_mangle]
pub unsafe extern "C" fn gd_center_distance(
    a: *const GdBBox,
    b: *const GdBBox,
    width: u32,
    height: u32,
    out: *mut f64,
) -> GdStatus {
    guard(|| {
        let (a, b) = (to_bbox(read(a, "a")?)?, to_bbox(read(b, "b")?)?);
        write(out, center_distance(&a, &b, image(width, height)?), "out")
    })
}

/// Map a free-text classifier answer to a judgment ("not sure" wins).
#[no_mangle]
pub unsafe extern "C" fn gd_parse_answer(text: *const c_char, out: *mut GdJudgment) -> GdStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        write(out, from_judgment(parse_answer(text)), "out")
    })
}

/// New matrix over `n` distinct person ids; every pair starts as No.
#[no_mangle]
pub unsafe extern "C" fn gd_matrix_new(ids: *const u32, n: usize, out: *mut *mut GdMatrix) -> GdStatus {
    guard(|| {
        let ids: Vec<u32> = if n == 0 {
            Vec::new()
        } else {
            if ids.is_null() {
                return Err(Failure(GdStatus::NullPointer, "ids is NULL".into()));
            }
            std::slice::from_raw_parts(ids, n).to_vec()
        };
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Failure::invalid("person ids must be distinct"));
        }
        let handle = Box::new(GdMatrix {
            inner: RelationMatrix::new(ids),
        });
        write(out, Box::into_raw(handle), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gd_matrix_free(m: *mut GdMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gd_matrix_len(m: *const GdMatrix, out: *mut usize) -> GdStatus {
    guard(|| write(out, read(m, "matrix")?.inner.len(), "out"))
}

fn check_pair(m: &RelationMatrix, i: usize, j: usize) -> Result<(), Failure> {
    if i >= m.len() || j >= m.len() {
        return Err(Failure(GdStatus::OutOfRange, format!("index out of range for {} persons", m.len())));
    }
    if i == j {
        return Err(Failure::invalid("diagonal entries are fixed"));
    }
    Ok(())
}

/// Set the judgment for positions `i` and `j` (both orders).
#[no_mangle]
pub unsafe extern "C" fn gd_matrix_set(m: *mut GdMatrix, i: usize, j: usize, judgment: GdJudgment) -> GdStatus {
    guard(|| {
        let m = m
            .as_mut()
            .ok_or_else(|| Failure(GdStatus::NullPointer, "matrix is NULL".into()))?;
        check_pair(&m.inner, i, j)?;
        m.inner.set(i, j, to_judgment(judgment), Provenance::Classified);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gd_matrix_get(m: *const GdMatrix, i: usize, j: usize, out: *mut GdJudgment) -> GdStatus {
    guard(|| {
        let m = &read(m, "matrix")?.inner;
        check_pair(m, i, j)?;
        write(out, from_judgment(m.get(i, j)), "out")
    })
}

/// Greedy agreement clustering. `weights` may be NULL for (+1, -1, -1).
#[no_mangle]
pub unsafe extern "C" fn gd_cluster_greedy(
    m: *const GdMatrix,
    weights: *const GdWeights,
    out: *mut *mut GdPartition,
) -> GdStatus {
    guard(|| {
        let m = &read(m, "matrix")?.inner;
        let w = weights_or_default(weights)?;
        let p = Box::new(GdPartition {
            inner: greedy_cluster(m, &w),
        });
        write(out, Box::into_raw(p), "out")
    })
}

/// Best partition by exhaustive search; at most 10 persons.
#[no_mangle]
pub unsafe extern "C" fn gd_cluster_exhaustive(
    m: *const GdMatrix,
    weights: *const GdWeights,
    out: *mut *mut GdPartition,
) -> GdStatus {
    guard(|| {
        let m = &read(m, "matrix")?.inner;
        let w = weights_or_default(weights)?;
        let (p, _) = exhaustive_cluster(m, &w).map_err(|e| Failure(GdStatus::OutOfRange, e.to_string()))?;
        write(out, Box::into_raw(Box::new(GdPartition { inner: p })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gd_partition_free(p: *mut GdPartition) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gd_partition_num_clusters(p: *const GdPartition, out: *mut usize) -> GdStatus {
    guard(|| write(out, read(p, "partition")?.inner.len(), "out"))
}

/// Copy the ids of cluster `k` into `buf` (capacity `cap`) and store the
/// cluster size in `len`. Clusters are ordered by smallest member id and
/// members ascend. With `cap` smaller than the size only `len` is written
/// and `GD_STATUS_OUT_OF_RANGE` is returned.
#[no_mangle]
pub unsafe extern "C" fn gd_partition_cluster(
    p: *const GdPartition,
    k: usize,
    buf: *mut u32,
    cap: usize,
    len: *mut usize,
) -> GdStatus {
    guard(|| {
        let clusters = read(p, "partition")?.inner.clusters();
        let c = clusters
            .get(k)
            .ok_or_else(|| Failure(GdStatus::OutOfRange, format!("cluster {k} of {}", clusters.len())))?;
        write(len, c.len(), "len")?;
        if cap < c.len() {
            return Err(Failure(GdStatus::OutOfRange, format!("buffer holds {cap}, cluster has {}", c.len())));
        }
        if buf.is_null() {
            return Err(Failure(GdStatus::NullPointer, "buf is NULL".into()));
        }
        std::ptr::copy_nonoverlapping(c.as_ptr(), buf, c.len());
        Ok(())
    })
}

/// Sum of weights over same-cluster pairs.
#[no_mangle]
pub unsafe extern "C" fn gd_agreement_score(
    p: *const GdPartition,
    m: *const GdMatrix,
    weights: *const GdWeights,
    out: *mut f64,
) -> GdStatus {
    guard(|| {
        let p = &read(p, "partition")?.inner;
        let m = &read(m, "matrix")?.inner;
        let w = weights_or_default(weights)?;
        let s = agreement_score(p, m, &w).map_err(Failure::invalid)?;
        write(out, s, "out")
    })
}

/// Defaults: heuristic backend, tau_det 0.5, tau_d 0.4, tau_z 80, weights (+1, -1, -1), one job.
#[no_mangle]
pub unsafe extern "C" fn gd_run_options_default(out: *mut GdRunOptions) -> GdStatus {
    guard(|| {
        let f = FilterParams::default();
        let w = AgreementWeights::default();
        let opts = GdRunOptions {
            backend: GdBackend::Heuristic,
            tau_det: DEFAULT_TAU_DET,
            tau_d: f.tau_d,
            tau_z: f.tau_z,
            weights: GdWeights {
                w_yes: w.w_yes,
                w_no: w.w_no,
                w_notsure: w.w_notsure,
            },
            jobs: 1,
        };
        write(out, opts, "out")
    })
}

/// Detect groups for every scene of `manifest` and write the results file.
/// `options` may be NULL for defaults; `summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gd_run_manifest(
    manifest: *const c_char,
    results: *const c_char,
    options: *const GdRunOptions,
    summary: *mut GdRunSummary,
) -> GdStatus {
    guard(|| {
        let manifest = PathBuf::from(read_str(manifest, "manifest")?);
        let results = PathBuf::from(read_str(results, "results")?);
        let opts = match options.as_ref() {
            Some(o) => *o,
            None => {
                let mut o = std::mem::MaybeUninit::uninit();
                gd_run_options_default(o.as_mut_ptr());
                o.assume_init()
            }
        };
        let cfg = PipelineConfig {
            tau_det: opts.tau_det,
            filter: FilterParams::new(opts.tau_d, opts.tau_z).map_err(Failure::invalid)?,
            weights: AgreementWeights::new(opts.weights.w_yes, opts.weights.w_no, opts.weights.w_notsure)
                .map_err(Failure::invalid)?,
            ..PipelineConfig::default()
        };
        let scenes = load_scenes(&manifest).map_err(|e| Failure(GdStatus::Io, e.to_string()))?;
        let heuristic = HeuristicBackend::new(Default::default());
        let backend: &dyn PairClassifier = match opts.backend {
            GdBackend::Heuristic => &heuristic,
            GdBackend::Oracle => &OracleBackend,
        };
        let outcome = run_detect(&scenes, &manifest_dir(&manifest), &cfg, backend, opts.jobs.max(1) as usize).map_err(|e| {
            let status = if e.is_remote_unavailable() {
                GdStatus::RemoteUnavailable
            } else {
                GdStatus::InvalidArgument
            };
            Failure(status, e.to_string())
        })?;
        write_results(&results, &outcome.results()).map_err(|e| Failure(GdStatus::Io, e.to_string()))?;
        if !summary.is_null() {
            let s = &outcome.summary;
            summary.write(GdRunSummary {
                scenes: s.scenes as u64,
                failed_scenes: s.failed_scenes as u64,
                persons: s.persons as u64,
                pairs: s.pairs as u64,
                filtered_distance: s.filtered_distance as u64,
                filtered_depth: s.filtered_depth as u64,
                classified: s.classified as u64,
                groups: s.groups as u64,
            });
        }
        Ok(())
    })
}

fn to_report(r: &EvalReport) -> GdEvalReport {
    GdEvalReport {
        miou: r.miou,
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        n_pred: r.n_pred as u64,
        n_gt: r.n_gt as u64,
        n_matched: r.n_matched as u64,
        tp: r.tp as u64,
    }
}

/// Score a results file against the manifest's ground-truth groups.
#[no_mangle]
pub unsafe extern "C" fn gd_evaluate_files(
    manifest: *const c_char,
    predictions: *const c_char,
    iou_threshold: f64,
    out: *mut GdEvalReport,
) -> GdStatus {
    guard(|| {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Failure::invalid("iou_threshold must lie in (0, 1]"));
        }
        let manifest = PathBuf::from(read_str(manifest, "manifest")?);
        let predictions = PathBuf::from(read_str(predictions, "predictions")?);
        let scenes = load_scenes(&manifest).map_err(|e| Failure(GdStatus::Io, e.to_string()))?;
        let results = read_results(&predictions).map_err(|e| Failure(GdStatus::Io, e.to_string()))?;
        let report = score_results(&scenes, &results, iou_threshold).map_err(Failure::invalid)?;
        write(out, to_report(&report), "out")
    })
}
