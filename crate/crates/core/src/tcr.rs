//! Temporal change ratio between two map sessions.
//!
//! Both sessions are cropped (optionally), voxelized on a shared grid, and
//! compared in both directions:
//!
//! * `H(S, T)`: voxels of `S` inside the convex hull of `T`, the region the
//!   two sessions have in common;
//! * `O(S, T)`: voxels of `S` within `tau` of some voxel of `T`.
//!
//! The directional ratio is `1 - |O(S,T)| / |H(S,T)|`. The symmetric ratio
//! pools both directions, `1 - (|O(S,T)| + |O(T,S)|) / (|H(S,T)| + |H(T,S)|)`,
//! which makes it independent of which session is called the source.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{crop_box, crop_range, PointCloud};
use crate::geom::Point3;
use crate::hull::{ConvexHull3, HullError};
use crate::spatial::{voxel_downsample, KdIndex, VoxelParams};

/// Whether `O` is counted over the whole voxelized session or only over its
/// hull-restricted part `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NumeratorMode {
    #[default]
    HullRestricted,
    Literal,
}

impl std::str::FromStr for NumeratorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hull-restricted" => Ok(NumeratorMode::HullRestricted),
            "literal" => Ok(NumeratorMode::Literal),
            other => Err(format!("unknown numerator mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CropShape {
    /// Euclidean ball around the origin.
    #[default]
    Radial,
    /// Axis-aligned cube `[-r, r]^3`.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcrParams {
    pub tau: f64,
    pub voxel_resolution: f64,
    pub voxel_origin: Point3,
    pub crop_range: Option<f64>,
    pub crop_shape: CropShape,
    pub numerator_mode: NumeratorMode,
}

impl Default for TcrParams {
    fn default() -> Self {
        TcrParams {
            tau: 4.5,
            voxel_resolution: 5.0,
            voxel_origin: Point3::ZERO,
            crop_range: None,
            crop_shape: CropShape::Radial,
            numerator_mode: NumeratorMode::HullRestricted,
        }
    }
}

impl TcrParams {
    pub fn validate(&self) -> Result<(), TcrError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau) {
            return Err(TcrError::InvalidParams(format!("tau must be positive, got {}", self.tau)));
        }
        if !positive(self.voxel_resolution) {
            return Err(TcrError::InvalidParams(format!(
                "voxel resolution must be positive, got {}",
                self.voxel_resolution
            )));
        }
        if let Some(r) = self.crop_range {
            if !positive(r) {
                return Err(TcrError::InvalidParams(format!("crop range must be positive, got {r}")));
            }
        }
        if !self.voxel_origin.is_finite() {
            return Err(TcrError::InvalidParams("voxel origin must be finite".into()));
        }
        Ok(())
    }

    pub fn voxel_params(&self) -> VoxelParams {
        VoxelParams { resolution: self.voxel_resolution, origin: self.voxel_origin }
    }
}

/// Which session of a pair an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TcrError {
    #[error("{side} session has a degenerate convex hull: {source}")]
    DegenerateHull {
        side: Side,
        #[source]
        source: HullError,
    },
    #[error("sessions share no spatial domain (both hull-restricted sets are empty)")]
    EmptyDomain,
    #[error("{side} session is empty")]
    EmptyTarget { side: Side },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Crop then voxelize, exactly as every TCR path does before comparing.
pub fn preprocess(cloud: &PointCloud, params: &TcrParams) -> Result<PointCloud, TcrError> {
    params.validate()?;
    let cropped = params.crop_range.map(|r| match params.crop_shape {
        CropShape::Radial => crop_range(cloud, r),
        CropShape::Box => crop_box(cloud, r),
    });
    voxel_downsample(cropped.as_ref().unwrap_or(cloud), &params.voxel_params())
        .map_err(|e| TcrError::InvalidParams(e.to_string()))
}

/// Points of `source` whose nearest neighbor in the indexed target is within `tau`.
pub fn overlap_set(source: &PointCloud, target: &KdIndex, tau: f64) -> PointCloud {
    source.select(&overlap_mask(source.points(), target, tau))
}

fn overlap_mask(points: &[Point3], target: &KdIndex, tau: f64) -> Vec<bool> {
    target.nearest_many(points).into_iter().map(|(_, d2)| d2.sqrt() <= tau).collect()
}

/// A voxelized session with its hull and nearest-neighbor index.
#[derive(Debug, Clone)]
pub struct PreparedSession {
    pub id: String,
    pub voxels: PointCloud,
    hull: Result<ConvexHull3, HullError>,
    index: Option<KdIndex>,
}

impl PreparedSession {
    pub fn new(id: impl Into<String>, cloud: &PointCloud, params: &TcrParams) -> Result<Self, TcrError> {
        let voxels = preprocess(cloud, params)?;
        let (hull, index) = rayon::join(
            || ConvexHull3::build(&voxels),
            || KdIndex::build(&voxels).ok(),
        );
        Ok(PreparedSession { id: id.into(), voxels, hull, index })
    }

    pub fn hull(&self) -> Result<&ConvexHull3, &HullError> {
        self.hull.as_ref()
    }
}

/// The four sets behind a TCR value, as masks over the voxelized sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSets {
    pub source_voxels: PointCloud,
    pub target_voxels: PointCloud,
    pub h_st: Vec<bool>,
    pub h_ts: Vec<bool>,
    pub o_st: Vec<bool>,
    pub o_ts: Vec<bool>,
}

impl ChangeSets {
    pub fn counts(&self) -> Counts {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        Counts { o_st: c(&self.o_st), o_ts: c(&self.o_ts), h_st: c(&self.h_st), h_ts: c(&self.h_ts) }
    }

    pub fn o_st_cloud(&self) -> PointCloud {
        self.source_voxels.select(&self.o_st)
    }

    pub fn h_st_cloud(&self) -> PointCloud {
        self.source_voxels.select(&self.h_st)
    }

    pub fn o_ts_cloud(&self) -> PointCloud {
        self.target_voxels.select(&self.o_ts)
    }

    pub fn h_ts_cloud(&self) -> PointCloud {
        self.target_voxels.select(&self.h_ts)
    }

    /// Per-voxel labels for the source (`true`) or target session:
    /// 0 outside the shared domain, 1 unchanged, 2 changed.
    pub fn labels(&self, source: bool) -> Vec<u8> {
        let (h, o) = if source { (&self.h_st, &self.o_st) } else { (&self.h_ts, &self.o_ts) };
        h.iter()
            .zip(o)
            .map(|(&h, &o)| match (h, o) {
                (false, _) => 0,
                (true, true) => 1,
                (true, false) => 2,
            })
            .collect()
    }
}

/// Cardinalities of the four change sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub o_st: usize,
    pub o_ts: usize,
    pub h_st: usize,
    pub h_ts: usize,
}

impl Counts {
    pub fn swapped(self) -> Counts {
        Counts { o_st: self.o_ts, o_ts: self.o_st, h_st: self.h_ts, h_ts: self.h_st }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcrReport {
    pub source_id: String,
    pub target_id: String,
    pub source_voxels: usize,
    pub target_voxels: usize,
    pub counts: Counts,
    /// `None` when `|H(S,T)|` is zero.
    pub tcr_forward: Option<f64>,
    /// `None` when `|H(T,S)|` is zero.
    pub tcr_backward: Option<f64>,
    pub tcr_sym: f64,
    pub params: TcrParams,
}

pub const CSV_HEADER: &str = "source_id,target_id,source_voxels,target_voxels,o_st,o_ts,h_st,h_ts,tcr_forward,tcr_backward,tcr_sym,tau,voxel_resolution,crop_range,numerator_mode";

impl TcrReport {
    /// Builds the ratios from the counts; fails when the pooled domain is empty.
    pub fn from_counts(
        source_id: &str,
        target_id: &str,
        source_voxels: usize,
        target_voxels: usize,
        counts: Counts,
        params: TcrParams,
    ) -> Result<TcrReport, TcrError> {
        let denom = counts.h_st + counts.h_ts;
        if denom == 0 {
            return Err(TcrError::EmptyDomain);
        }
        let ratio = |o: usize, h: usize| (h > 0).then(|| 1.0 - o as f64 / h as f64);
        Ok(TcrReport {
            source_id: source_id.to_string(),
            target_id: target_id.to_string(),
            source_voxels,
            target_voxels,
            counts,
            tcr_forward: ratio(counts.o_st, counts.h_st),
            tcr_backward: ratio(counts.o_ts, counts.h_ts),
            tcr_sym: 1.0 - (counts.o_st + counts.o_ts) as f64 / denom as f64,
            params,
        })
    }

    /// The same comparison seen from the other session.
    pub fn swapped(&self) -> TcrReport {
        TcrReport {
            source_id: self.target_id.clone(),
            target_id: self.source_id.clone(),
            source_voxels: self.target_voxels,
            target_voxels: self.source_voxels,
            counts: self.counts.swapped(),
            tcr_forward: self.tcr_backward,
            tcr_backward: self.tcr_forward,
            tcr_sym: self.tcr_sym,
            params: self.params,
        }
    }

    pub fn with_ids(mut self, source: impl Into<String>, target: impl Into<String>) -> Self {
        self.source_id = source.into();
        self.target_id = target.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.source_id),
            csv_field(&self.target_id),
            self.source_voxels,
            self.target_voxels,
            self.counts.o_st,
            self.counts.o_ts,
            self.counts.h_st,
            self.counts.h_ts,
            opt(self.tcr_forward),
            opt(self.tcr_backward),
            self.tcr_sym,
            self.params.tau,
            self.params.voxel_resolution,
            opt(self.params.crop_range),
            match self.params.numerator_mode {
                NumeratorMode::HullRestricted => "hull-restricted",
                NumeratorMode::Literal => "literal",
            }
        )
        .expect("writing to a String");
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Change sets between two prepared sessions.
pub fn change_sets(
    s: &PreparedSession,
    t: &PreparedSession,
    params: &TcrParams,
) -> Result<ChangeSets, TcrError> {
    let idx_s = s.index.as_ref().ok_or(TcrError::EmptyTarget { side: Side::Source })?;
    let idx_t = t.index.as_ref().ok_or(TcrError::EmptyTarget { side: Side::Target })?;
    let hull_s = s.hull().map_err(|e| TcrError::DegenerateHull { side: Side::Source, source: e.clone() })?;
    let hull_t = t.hull().map_err(|e| TcrError::DegenerateHull { side: Side::Target, source: e.clone() })?;

    let h_st = hull_t.contains_all(s.voxels.points());
    let h_ts = hull_s.contains_all(t.voxels.points());
    let directional = |pts: &[Point3], h: &[bool], idx: &KdIndex| -> Vec<bool> {
        match params.numerator_mode {
            NumeratorMode::Literal => overlap_mask(pts, idx, params.tau),
            NumeratorMode::HullRestricted => {
                let inside: Vec<Point3> = pts.iter().zip(h).filter(|(_, &i)| i).map(|(&p, _)| p).collect();
                let mut near = overlap_mask(&inside, idx, params.tau).into_iter();
                h.iter().map(|&i| i && near.next().expect("one flag per inside point")).collect()
            }
        }
    };
    let o_st = directional(s.voxels.points(), &h_st, idx_t);
    let o_ts = directional(t.voxels.points(), &h_ts, idx_s);
    Ok(ChangeSets {
        source_voxels: s.voxels.clone(),
        target_voxels: t.voxels.clone(),
        h_st,
        h_ts,
        o_st,
        o_ts,
    })
}

pub fn compare_prepared(
    s: &PreparedSession,
    t: &PreparedSession,
    params: &TcrParams,
) -> Result<TcrReport, TcrError> {
    let sets = change_sets(s, t, params)?;
    TcrReport::from_counts(&s.id, &t.id, s.voxels.len(), t.voxels.len(), sets.counts(), *params)
}

/// TCR between a source and a target session.
pub fn tcr_pair(s: &PointCloud, t: &PointCloud, params: &TcrParams) -> Result<TcrReport, TcrError> {
    let (ps, pt) = rayon::join(
        || PreparedSession::new("source", s, params),
        || PreparedSession::new("target", t, params),
    );
    compare_prepared(&ps?, &pt?, params)
}

/// Reports for every ordered pair of sessions. Entry `(i, j)` has session
/// `i` as source; `(j, i)` is the swapped view of the same computation.
#[derive(Debug, Clone)]
pub struct StageMatrix {
    pub ids: Vec<String>,
    cells: Vec<Vec<Result<TcrReport, TcrError>>>,
}

impl StageMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> &Result<TcrReport, TcrError> {
        &self.cells[i][j]
    }

    /// `tcr_sym` for each cell, `None` where the pair failed.
    pub fn sym_values(&self) -> Vec<Vec<Option<f64>>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.as_ref().ok().map(|r| r.tcr_sym)).collect())
            .collect()
    }

    /// Square CSV of `tcr_sym` with session ids as header; failed cells empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("session");
        for id in &self.ids {
            s.push(',');
            s.push_str(&csv_field(id));
        }
        s.push('\n');
        for (i, row) in self.sym_values().iter().enumerate() {
            s.push_str(&csv_field(&self.ids[i]));
            for v in row {
                s.push(',');
                if let Some(v) = v {
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("need at least 2 sessions, got {0}")]
    TooFewSessions(usize),
    #[error(transparent)]
    Tcr(#[from] TcrError),
}

pub fn tcr_stage_matrix(
    sessions: &[(String, PointCloud)],
    params: &TcrParams,
) -> Result<StageMatrix, MatrixError> {
    if sessions.len() < 2 {
        return Err(MatrixError::TooFewSessions(sessions.len()));
    }
    params.validate()?;
    let prepared: Vec<PreparedSession> = sessions
        .par_iter()
        .map(|(id, c)| PreparedSession::new(id.clone(), c, params))
        .collect::<Result<_, _>>()?;
    let n = prepared.len();
    let upper: Vec<(usize, usize, Result<TcrReport, TcrError>)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| (i, j, compare_prepared(&prepared[i], &prepared[j], params)))
        .collect();
    let mut cells: Vec<Vec<Option<Result<TcrReport, TcrError>>>> =
        (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    for (i, j, r) in upper {
        if i != j {
            cells[j][i] = Some(r.as_ref().map(TcrReport::swapped).map_err(|e| match e {
                TcrError::DegenerateHull { side, source } => TcrError::DegenerateHull {
                    side: if *side == Side::Source { Side::Target } else { Side::Source },
                    source: source.clone(),
                },
                other => other.clone(),
            }));
        }
        cells[i][j] = Some(r);
    }
    Ok(StageMatrix {
        ids: sessions.iter().map(|(id, _)| id.clone()).collect(),
        cells: cells
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.expect("filled")).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, n: usize, center: Point3, r: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    center
                        + Point3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = blob(&mut rng, 2000, Point3::ZERO, 40.0);
        let r = tcr_pair(&x, &x, &TcrParams::default()).unwrap();
        assert_eq!(r.tcr_sym, 0.0);
        assert_eq!(r.tcr_forward, Some(0.0));
        assert_eq!(r.counts.o_st, r.source_voxels);
        assert_eq!(r.counts.h_st, r.source_voxels);
    }

    #[test]
    fn overlap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = 4.5;
        let x = blob(&mut rng, 300, Point3::ZERO, 10.0);
        let idx = KdIndex::build(&x).unwrap();
        assert_eq!(overlap_set(&x, &idx, tau), x);
        // Diameter < 9·tau and shifted by 10·tau: nothing within tau.
        let far: Vec<Point3> = x.points().iter().map(|&p| p + Point3::new(10.0 * tau, 0.0, 0.0)).collect();
        let far = PointCloud::new(far).unwrap();
        assert!(overlap_set(&far, &idx, tau).is_empty());
    }

    #[test]
    fn disjoint_sessions_have_empty_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = blob(&mut rng, 500, Point3::ZERO, 20.0);
        let b = blob(&mut rng, 500, Point3::new(500.0, 0.0, 0.0), 20.0);
        assert_eq!(tcr_pair(&a, &b, &TcrParams::default()), Err(TcrError::EmptyDomain));
    }

    #[test]
    fn flat_session_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = blob(&mut rng, 500, Point3::ZERO, 20.0);
        let flat = PointCloud::new(
            (0..400).map(|i| Point3::new((i % 20) as f64 * 3.0, (i / 20) as f64 * 3.0, 0.0)).collect(),
        )
        .unwrap();
        match tcr_pair(&a, &flat, &TcrParams::default()) {
            Err(TcrError::DegenerateHull { side: Side::Target, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match tcr_pair(&flat, &a, &TcrParams::default()) {
            Err(TcrError::DegenerateHull { side: Side::Source, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_params() {
        let c = PointCloud::new(vec![Point3::ZERO]).unwrap();
        let bad = TcrParams { tau: 0.0, ..TcrParams::default() };
        assert!(matches!(tcr_pair(&c, &c, &bad), Err(TcrError::InvalidParams(_))));
        let bad = TcrParams { voxel_resolution: -1.0, ..TcrParams::default() };
        assert!(matches!(tcr_pair(&c, &c, &bad), Err(TcrError::InvalidParams(_))));
    }

    #[test]
    fn growth_outside_source_hull() {
        // S is a block; T = S plus a far tower outside hull(S). Every S voxel
        // is unchanged and inside hull(T), so the forward ratio is 0.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = blob(&mut rng, 4000, Point3::ZERO, 30.0);
        let tower = blob(&mut rng, 1000, Point3::new(120.0, 0.0, 0.0), 8.0);
        let t = PointCloud::concat([&s, &tower]);
        let r = tcr_pair(&s, &t, &TcrParams::default()).unwrap();
        assert_eq!(r.tcr_forward, Some(0.0));
        assert_eq!(r.counts.h_st, r.source_voxels);
        // Tower voxels are outside hull(S), so T's domain is exactly S's voxels.
        assert_eq!(r.counts.h_ts, r.source_voxels);
        assert_eq!(r.tcr_sym, 0.0);
    }

    #[test]
    fn direction_sensitivity() {
        // Demolishing the core of a block: every voxel of the hollow session
        // survives in the full one, but not the other way round.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let full = blob(&mut rng, 6000, Point3::ZERO, 60.0);
        let hollow = full.filter_by(|_, p| p.norm() > 25.0);
        let r = tcr_pair(&hollow, &full, &TcrParams::default()).unwrap();
        assert_eq!(r.tcr_forward, Some(0.0));
        assert!(r.tcr_backward.unwrap() > 0.0);
        let back = tcr_pair(&full, &hollow, &TcrParams::default()).unwrap();
        assert_eq!(back.tcr_sym.to_bits(), r.tcr_sym.to_bits());
        assert_eq!(back.tcr_forward, r.tcr_backward);
    }

    #[test]
    fn modes_and_csv() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = blob(&mut rng, 3000, Point3::ZERO, 40.0);
        let t = blob(&mut rng, 3000, Point3::new(30.0, 0.0, 0.0), 40.0);
        let hr = tcr_pair(&s, &t, &TcrParams::default()).unwrap();
        let lit = tcr_pair(&s, &t, &TcrParams { numerator_mode: NumeratorMode::Literal, ..TcrParams::default() })
            .unwrap();
        assert!(lit.counts.o_st >= hr.counts.o_st);
        assert_eq!(lit.counts.h_st, hr.counts.h_st);
        for v in [hr.tcr_forward.unwrap(), hr.tcr_backward.unwrap(), hr.tcr_sym] {
            assert!((0.0..=1.0).contains(&v));
        }
        let row = hr.csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        let json: TcrReport = serde_json::from_str(&hr.to_json()).unwrap();
        assert_eq!(json, hr);
    }

    #[test]
    fn stage_matrix_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = blob(&mut rng, 2000, Point3::ZERO, 40.0);
        let b = blob(&mut rng, 2000, Point3::new(10.0, 0.0, 0.0), 40.0);
        let sessions = vec![("a".to_string(), a.clone()), ("a2".to_string(), a), ("b".to_string(), b)];
        let m = tcr_stage_matrix(&sessions, &TcrParams::default()).unwrap();
        let v = m.sym_values();
        assert_eq!(v[0][1], Some(0.0));
        for i in 0..3 {
            assert_eq!(v[i][i], Some(0.0));
            for j in 0..3 {
                assert_eq!(v[i][j].map(f64::to_bits), v[j][i].map(f64::to_bits));
            }
        }
        let r02 = m.get(0, 2).as_ref().unwrap();
        let r20 = m.get(2, 0).as_ref().unwrap();
        assert_eq!(r02.source_id, "a");
        assert_eq!(r20.source_id, "b");
        assert_eq!(r02.tcr_forward, r20.tcr_backward);
        assert_eq!(m.to_csv().lines().count(), 4);
        assert!(matches!(
            tcr_stage_matrix(&sessions[..1], &TcrParams::default()),
            Err(MatrixError::TooFewSessions(1))
        ));
    }
}
