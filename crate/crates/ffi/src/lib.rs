//! C ABI over `tcr-core`.
//!
//! Objects are opaque handles created and freed through this API. Every
//! fallible call returns a [`TcrStatus`]; on failure the thread's last error
//! message is available from [`tcr_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tcr_core::bench::{evaluate, BenchError, BenchParams, Candidate, Retrieval};
use tcr_core::cloud::{load_cloud_auto, CloudError, PointCloud};
use tcr_core::geom::Point3;
use tcr_core::tcr::{self, CropShape, NumeratorMode, TcrError};

/// Result codes; the numeric values match the `tcr` command's exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcrStatus {
    Ok = 0,
    Io = 1,
    DegenerateHull = 2,
    EmptyDomain = 3,
    NoTrueMatch = 4,
    InvalidArgument = 6,
    EmptySession = 7,
    NullPointer = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcrCropShape {
    Radial = 0,
    Box = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcrNumeratorMode {
    HullRestricted = 0,
    Literal = 1,
}

/// Comparison parameters. A `crop_range` of zero or less disables cropping.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcrParams {
    pub tau: f64,
    pub voxel_resolution: f64,
    pub voxel_origin: [f64; 3],
    pub crop_range: f64,
    pub crop_shape: TcrCropShape,
    pub numerator_mode: TcrNumeratorMode,
}

/// Plain-data view of a report. Undefined one-sided ratios are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcrSummary {
    pub source_voxels: usize,
    pub target_voxels: usize,
    pub o_st: usize,
    pub o_ts: usize,
    pub h_st: usize,
    pub h_ts: usize,
    pub tcr_forward: f64,
    pub tcr_backward: f64,
    pub tcr_sym: f64,
}

/// Precision-recall summary over top-1 retrievals.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcrPrSummary {
    pub auc: f64,
    pub max_f1: f64,
    pub max_f1_threshold: f64,
    pub recall_at_1: f64,
    pub num_queries: usize,
    pub num_with_true_match: usize,
}

/// Opaque point cloud.
pub struct TcrCloud {
    inner: PointCloud,
}

/// Opaque comparison report.
pub struct TcrReport {
    inner: tcr::TcrReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: TcrStatus, msg: impl std::fmt::Display) -> TcrStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> TcrStatus) -> TcrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == TcrStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(TcrStatus::Panic, "internal panic"),
    }
}

fn cloud_status(e: &CloudError) -> TcrStatus {
    match e {
        CloudError::Io { .. } | CloudError::Malformed { .. } | CloudError::NonFinite { .. } => TcrStatus::Io,
        _ => TcrStatus::InvalidArgument,
    }
}

fn tcr_status(e: &TcrError) -> TcrStatus {
    match e {
        TcrError::DegenerateHull { .. } => TcrStatus::DegenerateHull,
        TcrError::EmptyDomain => TcrStatus::EmptyDomain,
        TcrError::EmptyTarget { .. } => TcrStatus::EmptySession,
        TcrError::InvalidParams(_) => TcrStatus::InvalidArgument,
    }
}

impl From<&TcrParams> for tcr::TcrParams {
    fn from(p: &TcrParams) -> Self {
        tcr::TcrParams {
            tau: p.tau,
            voxel_resolution: p.voxel_resolution,
            voxel_origin: Point3::new(p.voxel_origin[0], p.voxel_origin[1], p.voxel_origin[2]),
            crop_range: (p.crop_range > 0.0).then_some(p.crop_range),
            crop_shape: match p.crop_shape {
                TcrCropShape::Radial => CropShape::Radial,
                TcrCropShape::Box => CropShape::Box,
            },
            numerator_mode: match p.numerator_mode {
                TcrNumeratorMode::HullRestricted => NumeratorMode::HullRestricted,
                TcrNumeratorMode::Literal => NumeratorMode::Literal,
            },
        }
    }
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next API call on the same thread.
#[no_mangle]
pub extern "C" fn tcr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn tcr_params_default() -> TcrParams {
    let d = tcr::TcrParams::default();
    TcrParams {
        tau: d.tau,
        voxel_resolution: d.voxel_resolution,
        voxel_origin: d.voxel_origin.to_array(),
        crop_range: d.crop_range.unwrap_or(0.0),
        crop_shape: TcrCropShape::Radial,
        numerator_mode: TcrNumeratorMode::HullRestricted,
    }
}

/// Builds a cloud from `n` interleaved `x, y, z` triples.
///
/// # Safety
/// `xyz` must point to `3 * n` readable doubles (it may be null when `n` is
/// 0) and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcr_cloud_from_xyz(xyz: *const f64, n: usize, out: *mut *mut TcrCloud) -> TcrStatus {
    guard(|| {
        if out.is_null() || (xyz.is_null() && n > 0) {
            return fail(TcrStatus::NullPointer, "null pointer argument");
        }
        let Some(len) = n.checked_mul(3) else {
            return fail(TcrStatus::InvalidArgument, "point count overflows");
        };
        let coords = if n == 0 { &[][..] } else { std::slice::from_raw_parts(xyz, len) };
        let points = coords.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
        match PointCloud::new(points) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TcrCloud { inner }));
                TcrStatus::Ok
            }
            Err(e) => fail(cloud_status(&e), e),
        }
    })
}

/// Loads a cloud file; the format follows the extension.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcr_cloud_load(path: *const c_char, out: *mut *mut TcrCloud) -> TcrStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(TcrStatus::NullPointer, "null pointer argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(TcrStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match load_cloud_auto(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TcrCloud { inner }));
                TcrStatus::Ok
            }
            Err(e) => fail(cloud_status(&e), e),
        }
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcr_cloud_len(cloud: *const TcrCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcr_cloud_free(cloud: *mut TcrCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Compares two sessions. `params` may be null for the defaults.
///
/// # Safety
/// `source` and `target` must be live handles, `params` null or valid, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcr_compute(
    source: *const TcrCloud,
    target: *const TcrCloud,
    params: *const TcrParams,
    out: *mut *mut TcrReport,
) -> TcrStatus {
    guard(|| {
        let (Some(s), Some(t)) = (source.as_ref(), target.as_ref()) else {
            return fail(TcrStatus::NullPointer, "null cloud handle");
        };
        if out.is_null() {
            return fail(TcrStatus::NullPointer, "null output pointer");
        }
        let params = params.as_ref().map_or_else(tcr::TcrParams::default, tcr::TcrParams::from);
        match tcr::tcr_pair(&s.inner, &t.inner, &params) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TcrReport { inner }));
                TcrStatus::Ok
            }
            Err(e) => fail(tcr_status(&e), e),
        }
    })
}

/// Symmetric ratio, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcr_report_sym(report: *const TcrReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.tcr_sym)
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcr_report_summary(report: *const TcrReport, out: *mut TcrSummary) -> TcrStatus {
    guard(|| {
        let (Some(r), false) = (report.as_ref(), out.is_null()) else {
            return fail(TcrStatus::NullPointer, "null pointer argument");
        };
        let r = &r.inner;
        *out = TcrSummary {
            source_voxels: r.source_voxels,
            target_voxels: r.target_voxels,
            o_st: r.counts.o_st,
            o_ts: r.counts.o_ts,
            h_st: r.counts.h_st,
            h_ts: r.counts.h_ts,
            tcr_forward: r.tcr_forward.unwrap_or(f64::NAN),
            tcr_backward: r.tcr_backward.unwrap_or(f64::NAN),
            tcr_sym: r.tcr_sym,
        };
        TcrStatus::Ok
    })
}

/// The report as JSON, the same document the `tcr` command writes. Release
/// it with [`tcr_string_free`]. Returns null for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcr_report_to_json(report: *const TcrReport) -> *mut c_char {
    match report.as_ref() {
        Some(r) => CString::new(r.inner.to_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcr_report_free(report: *mut TcrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Precision-recall metrics from the best candidate of each of `n` queries.
///
/// `scores[i]` is the similarity of query `i`'s top candidate (higher is
/// more similar), `distances[i]` the metric distance between the two poses,
/// and `has_true_match[i]` is nonzero when any database pose lies within
/// `tp_radius` of query `i`.
///
/// # Safety
/// The three arrays must each hold `n` elements and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tcr_pr_evaluate(
    scores: *const f64,
    distances: *const f64,
    has_true_match: *const u8,
    n: usize,
    tp_radius: f64,
    out: *mut TcrPrSummary,
) -> TcrStatus {
    guard(|| {
        if out.is_null() || (n > 0 && (scores.is_null() || distances.is_null() || has_true_match.is_null())) {
            return fail(TcrStatus::NullPointer, "null pointer argument");
        }
        if n == 0 {
            return fail(TcrStatus::InvalidArgument, "no queries");
        }
        let (scores, distances, truth) = (
            std::slice::from_raw_parts(scores, n),
            std::slice::from_raw_parts(distances, n),
            std::slice::from_raw_parts(has_true_match, n),
        );
        if let Some(i) = (0..n).find(|&i| scores[i].is_nan() || distances[i].is_nan()) {
            return fail(TcrStatus::InvalidArgument, format!("query {i} has a NaN score or distance"));
        }
        let retrievals: Vec<Retrieval> = (0..n)
            .map(|i| Retrieval {
                query_id: i,
                candidates: vec![Candidate { db_id: 0, score: scores[i], distance: distances[i] }],
                has_true_match: truth[i] != 0,
            })
            .collect();
        let params = BenchParams { tp_radius, top_n: 1, ..Default::default() };
        if let Err(e) = params.validate() {
            return fail(TcrStatus::InvalidArgument, e);
        }
        match evaluate(&retrievals, &params) {
            Ok(r) => {
                *out = TcrPrSummary {
                    auc: r.auc,
                    max_f1: r.max_f1,
                    max_f1_threshold: r.max_f1_threshold,
                    recall_at_1: r.recall_at_1(),
                    num_queries: r.num_queries,
                    num_with_true_match: r.num_with_true_match,
                };
                TcrStatus::Ok
            }
            Err(e @ BenchError::NoTrueMatch) => fail(TcrStatus::NoTrueMatch, e),
            Err(e) => fail(TcrStatus::InvalidArgument, e),
        }
    })
}
