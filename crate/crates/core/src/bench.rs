//! Long-term place-recognition evaluation.
//!
//! Query and database sequences are sampled along their trajectories, each
//! sampled scan is turned into a global descriptor, and every query is
//! matched against the database. A retrieved candidate is correct when its
//! pose lies within `tp_radius` of the query pose.
//!
//! Precision/recall follow the single-best-candidate protocol: a query is
//! accepted when its top-1 score reaches the threshold; an accepted query is
//! a true positive if the top-1 candidate is correct and a false positive
//! otherwise. Recall is measured against the number of queries that have a
//! correct database entry at all, so queries without one only ever affect
//! precision.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{crop_box, crop_range, submap_ending_at, CloudError, PointCloud};
use crate::geom::Pose;
use crate::tcr::CropShape;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no query has a true match in the database; recall is undefined")]
    NoTrueMatch,
    #[error("no retrievals to evaluate")]
    NoRetrievals,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("database is empty")]
    EmptyDatabase,
    #[error("cannot describe an empty cloud")]
    EmptyCloud,
    #[error("descriptor length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no external descriptor for {set} id {id}")]
    MissingDescriptor { set: &'static str, id: usize },
    #[error("descriptor file {path}: line {line}: {reason}")]
    DescriptorFile { path: String, line: usize, reason: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub query_interval: f64,
    pub db_interval: f64,
    pub tp_radius: f64,
    pub crop_range: f64,
    pub crop_shape: CropShape,
    pub top_n: usize,
    pub submap_window: Option<usize>,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            query_interval: 10.0,
            db_interval: 5.0,
            tp_radius: 7.5,
            crop_range: 100.0,
            crop_shape: CropShape::Radial,
            top_n: 25,
            submap_window: None,
        }
    }
}

impl BenchParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.query_interval) && ok(self.db_interval) && ok(self.tp_radius) && ok(self.crop_range)) {
            return Err(BenchError::InvalidParams("intervals, radius and crop range must be positive".into()));
        }
        if self.top_n == 0 || self.submap_window == Some(0) {
            return Err(BenchError::InvalidParams("top_n and submap window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Similarity used to rank database entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Cosine,
    /// Negated Euclidean distance, for position-like descriptors.
    NegEuclidean,
}

impl Similarity {
    pub fn score(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na.sqrt() * nb.sqrt())
                }
            }
            Similarity::NegEuclidean => {
                -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub method: String,
    pub values: Vec<f64>,
}

/// Bird's-eye-view polar grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevParams {
    pub rings: usize,
    pub sectors: usize,
    pub max_range: f64,
}

impl Default for BevParams {
    fn default() -> Self {
        BevParams { rings: 20, sectors: 60, max_range: 100.0 }
    }
}

/// Polar ring × sector grid holding the highest point per cell (0 when
/// empty), flattened ring-major.
pub fn describe_bev(cloud: &PointCloud, params: &BevParams) -> Result<Descriptor, BenchError> {
    if cloud.is_empty() {
        return Err(BenchError::EmptyCloud);
    }
    if params.rings == 0 || params.sectors == 0 || !(params.max_range > 0.0 && params.max_range.is_finite()) {
        return Err(BenchError::InvalidParams("bev grid must be non-empty".into()));
    }
    let cells = params.rings * params.sectors;
    let mut grid = vec![f64::NEG_INFINITY; cells];
    let ring_size = params.max_range / params.rings as f64;
    let sector_size = 2.0 * PI / params.sectors as f64;
    for p in cloud.points() {
        let r = p.x.hypot(p.y);
        if r >= params.max_range {
            continue;
        }
        let ring = ((r / ring_size) as usize).min(params.rings - 1);
        let az = p.y.atan2(p.x).rem_euclid(2.0 * PI);
        let sector = ((az / sector_size) as usize).min(params.sectors - 1);
        let cell = &mut grid[ring * params.sectors + sector];
        *cell = cell.max(p.z);
    }
    for v in &mut grid {
        if *v == f64::NEG_INFINITY {
            *v = 0.0;
        }
    }
    Ok(Descriptor { method: "bev".into(), values: grid })
}

/// Indices of the poses kept by greedy arc-length sampling: the first pose,
/// then every pose whose travelled distance since the last kept one reaches
/// `interval`.
pub fn sample_trajectory(poses: &[Pose], interval: f64) -> Result<Vec<usize>, BenchError> {
    if poses.is_empty() {
        return Err(BenchError::EmptyTrajectory);
    }
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(BenchError::InvalidParams(format!("interval must be positive, got {interval}")));
    }
    let mut out = vec![0];
    let mut travelled = 0.0;
    for k in 1..poses.len() {
        travelled += poses[k].translation.dist(poses[k - 1].translation);
        if travelled >= interval {
            out.push(k);
            travelled = 0.0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the database passed to [`retrieve`] or its external id.
    pub db_id: usize,
    pub score: f64,
    /// Distance between query and candidate poses, meters.
    pub distance: f64,
}

/// Top `top_n` database entries by similarity, ties broken by lower index.
/// `distance` is left at NaN for the caller to fill in.
pub fn retrieve(
    query: &Descriptor,
    db: &[Descriptor],
    top_n: usize,
    similarity: Similarity,
) -> Result<Vec<Candidate>, BenchError> {
    if db.is_empty() {
        return Err(BenchError::EmptyDatabase);
    }
    let mut scored = Vec::with_capacity(db.len());
    for (i, d) in db.iter().enumerate() {
        if d.values.len() != query.values.len() {
            return Err(BenchError::LengthMismatch { expected: query.values.len(), got: d.values.len() });
        }
        scored.push(Candidate { db_id: i, score: similarity.score(&query.values, &d.values), distance: f64::NAN });
    }
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.db_id.cmp(&b.db_id)));
    scored.truncate(top_n);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub query_id: usize,
    pub candidates: Vec<Candidate>,
    /// Whether any database entry lies within the true-positive radius.
    pub has_true_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    #[serde(with = "signed_inf")]
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Serializes ±∞ as the strings "inf"/"-inf"; JSON has no infinities.
mod signed_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad threshold '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Ordered by decreasing threshold, from +∞ to −∞.
    pub curve: Vec<PrPoint>,
    pub auc: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub max_f1: f64,
    #[serde(with = "signed_inf")]
    pub max_f1_threshold: f64,
    pub num_queries: usize,
    pub num_with_true_match: usize,
    pub params: BenchParams,
}

impl BenchReport {
    pub fn recall_at_1(&self) -> f64 {
        self.recall_at.get(&1).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `threshold,precision,recall` rows in curve order.
    pub fn pr_curve_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.curve {
            writeln!(s, "{},{},{}", p.threshold, p.precision, p.recall).expect("writing to a String");
        }
        s
    }
}

/// `pair_id,tcr_sym,auc` rows, one per evaluated session pair.
pub fn auc_vs_tcr_csv(rows: &[(String, f64, f64)]) -> String {
    let mut s = String::from("pair_id,tcr_sym,auc\n");
    for (id, tcr, auc) in rows {
        writeln!(s, "{id},{tcr},{auc}").expect("writing to a String");
    }
    s
}

struct Top1 {
    score: f64,
    correct: bool,
}

fn top1(retrievals: &[Retrieval], tp_radius: f64) -> Vec<Top1> {
    retrievals
        .iter()
        .filter_map(|r| {
            r.candidates.first().map(|c| Top1 { score: c.score, correct: c.distance <= tp_radius })
        })
        .collect()
}

/// Precision and recall when accepting every query with top-1 score ≥ `threshold`.
/// Precision is 1 when nothing is accepted.
pub fn operating_point(
    retrievals: &[Retrieval],
    threshold: f64,
    tp_radius: f64,
) -> Result<(f64, f64), BenchError> {
    let n_true = retrievals.iter().filter(|r| r.has_true_match).count();
    if n_true == 0 {
        return Err(BenchError::NoTrueMatch);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for t in top1(retrievals, tp_radius) {
        if t.score >= threshold {
            if t.correct {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    Ok((precision, tp as f64 / n_true as f64))
}

/// The `N` values reported for recall@N.
pub fn recall_levels(top_n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [1, 5, 10, 20, 25].into_iter().filter(|&n| n <= top_n).collect();
    if !v.contains(&top_n) {
        v.push(top_n);
    }
    v
}

pub fn evaluate(retrievals: &[Retrieval], params: &BenchParams) -> Result<BenchReport, BenchError> {
    if retrievals.is_empty() {
        return Err(BenchError::NoRetrievals);
    }
    let n_true = retrievals.iter().filter(|r| r.has_true_match).count();
    if n_true == 0 {
        return Err(BenchError::NoTrueMatch);
    }
    let mut tops = top1(retrievals, params.tp_radius);
    tops.sort_by(|a, b| b.score.total_cmp(&a.score));

    let point = |threshold: f64, tp: usize, fp: usize| {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        // Equal to 2PR/(P+R) with the recall denominator `n_true`.
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (tp + fp + n_true) as f64 };
        PrPoint { threshold, precision, recall: tp as f64 / n_true as f64, f1 }
    };
    let mut curve = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0, 0);
    for group in tops.chunk_by(|a, b| a.score == b.score) {
        for t in group {
            if t.correct {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        curve.push(point(group[0].score, tp, fp));
    }
    curve.push(point(f64::NEG_INFINITY, tp, fp));

    let auc = curve
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) * 0.5)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    let best = curve
        .iter()
        .fold(curve[0], |best, p| if p.f1 > best.f1 { *p } else { best });

    let mut recall_at = BTreeMap::new();
    for n in recall_levels(params.top_n) {
        let hits = retrievals
            .iter()
            .filter(|r| r.has_true_match)
            .filter(|r| r.candidates.iter().take(n).any(|c| c.distance <= params.tp_radius))
            .count();
        recall_at.insert(n, hits as f64 / n_true as f64);
    }

    Ok(BenchReport {
        curve,
        auc,
        recall_at,
        max_f1: best.f1,
        max_f1_threshold: best.threshold,
        num_queries: retrievals.len(),
        num_with_true_match: n_true,
        params: *params,
    })
}

/// Access to the scans and poses of one recorded sequence.
pub trait ScanSource: Sync {
    fn poses(&self) -> &[Pose];
    fn scan(&self, index: usize) -> Result<PointCloud, CloudError>;
}

/// A sequence held in memory.
#[derive(Debug, Clone)]
pub struct MemorySequence {
    pub scans: Vec<PointCloud>,
    pub poses: Vec<Pose>,
}

impl ScanSource for MemorySequence {
    fn poses(&self) -> &[Pose] {
        &self.poses
    }

    fn scan(&self, index: usize) -> Result<PointCloud, CloudError> {
        Ok(self.scans[index].clone())
    }
}

/// How descriptors are produced for a benchmark run.
#[derive(Debug, Clone)]
pub enum DescriptorMethod {
    Bev(BevParams),
    /// The pose translation itself; an upper bound for any real method.
    OraclePosition,
    /// Descriptors computed elsewhere, keyed by pose index.
    External {
        query: HashMap<usize, Descriptor>,
        db: HashMap<usize, Descriptor>,
        similarity: Similarity,
    },
}

impl DescriptorMethod {
    fn similarity(&self) -> Similarity {
        match self {
            DescriptorMethod::Bev(_) => Similarity::Cosine,
            DescriptorMethod::OraclePosition => Similarity::NegEuclidean,
            DescriptorMethod::External { similarity, .. } => *similarity,
        }
    }

    fn describe<S: ScanSource>(
        &self,
        seq: &S,
        index: usize,
        is_query: bool,
        params: &BenchParams,
    ) -> Result<Descriptor, BenchError> {
        match self {
            DescriptorMethod::OraclePosition => {
                let t = seq.poses()[index].translation;
                Ok(Descriptor { method: "oracle-position".into(), values: t.to_array().to_vec() })
            }
            DescriptorMethod::External { query, db, .. } => {
                let (set, map) = if is_query { ("query", query) } else { ("db", db) };
                map.get(&index).cloned().ok_or(BenchError::MissingDescriptor { set, id: index })
            }
            DescriptorMethod::Bev(bev) => {
                let raw = match params.submap_window {
                    Some(w) => {
                        let start = (index + 1).saturating_sub(w);
                        let scans: Vec<PointCloud> =
                            (start..=index).map(|k| seq.scan(k)).collect::<Result<_, _>>()?;
                        submap_ending_at(&scans, &seq.poses()[start..=index], index - start, w)?
                    }
                    None => seq.scan(index)?,
                };
                let cropped = match params.crop_shape {
                    CropShape::Radial => crop_range(&raw, params.crop_range),
                    CropShape::Box => crop_box(&raw, params.crop_range),
                };
                if cropped.is_empty() {
                    // Nothing in range: an all-empty grid.
                    return Ok(Descriptor { method: "bev".into(), values: vec![0.0; bev.rings * bev.sectors] });
                }
                describe_bev(&cropped, bev)
            }
        }
    }
}

/// Sampled query/database indices and the retrievals for one session pair.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub query_indices: Vec<usize>,
    pub db_indices: Vec<usize>,
    pub retrievals: Vec<Retrieval>,
}

pub fn run_retrievals<Q: ScanSource, D: ScanSource>(
    query: &Q,
    db: &D,
    params: &BenchParams,
    method: &DescriptorMethod,
) -> Result<BenchRun, BenchError> {
    params.validate()?;
    let q_idx = sample_trajectory(query.poses(), params.query_interval)?;
    let d_idx = sample_trajectory(db.poses(), params.db_interval)?;
    let db_desc: Vec<Descriptor> = d_idx
        .par_iter()
        .map(|&i| method.describe(db, i, false, params))
        .collect::<Result<_, _>>()?;
    let similarity = method.similarity();
    let retrievals: Vec<Retrieval> = q_idx
        .par_iter()
        .map(|&qi| {
            let desc = method.describe(query, qi, true, params)?;
            let q_pos = query.poses()[qi].translation;
            let candidates = retrieve(&desc, &db_desc, params.top_n, similarity)?
                .into_iter()
                .map(|c| {
                    let db_pose = d_idx[c.db_id];
                    Candidate { db_id: db_pose, score: c.score, distance: q_pos.dist(db.poses()[db_pose].translation) }
                })
                .collect();
            let has_true_match =
                d_idx.iter().any(|&d| q_pos.dist(db.poses()[d].translation) <= params.tp_radius);
            Ok(Retrieval { query_id: qi, candidates, has_true_match })
        })
        .collect::<Result<_, BenchError>>()?;
    Ok(BenchRun { query_indices: q_idx, db_indices: d_idx, retrievals })
}

/// Samples, describes, retrieves and evaluates one query/database pair.
pub fn run_bench<Q: ScanSource, D: ScanSource>(
    query: &Q,
    db: &D,
    params: &BenchParams,
    method: &DescriptorMethod,
) -> Result<BenchReport, BenchError> {
    let run = run_retrievals(query, db, params, method)?;
    evaluate(&run.retrievals, params)
}

/// Reads a descriptor exchange file: header `id,dim,v0,...,v{dim-1}`, then
/// one row per descriptor.
pub fn read_descriptor_csv(path: &Path, method: &str) -> Result<HashMap<usize, Descriptor>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        BenchError::Cloud(CloudError::Io { path: path.display().to_string(), source })
    })?;
    parse_descriptor_csv(&path.display().to_string(), &text, method)
}

pub fn parse_descriptor_csv(
    path: &str,
    text: &str,
    method: &str,
) -> Result<HashMap<usize, Descriptor>, BenchError> {
    let bad = |line: usize, reason: String| BenchError::DescriptorFile { path: path.to_string(), line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "dim" {
        return Err(bad(1, "header must start with 'id,dim'".into()));
    }
    let dim = cols.len() - 2;
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("v{k}") {
            return Err(bad(1, format!("expected column 'v{k}', found '{c}'")));
        }
    }
    let mut out = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(bad(line_no, format!("expected {} fields, found {}", dim + 2, fields.len())));
        }
        let id: usize = fields[0].parse().map_err(|_| bad(line_no, format!("bad id '{}'", fields[0])))?;
        let d: usize = fields[1].parse().map_err(|_| bad(line_no, format!("bad dim '{}'", fields[1])))?;
        if d != dim {
            return Err(bad(line_no, format!("dim {d} disagrees with header ({dim})")));
        }
        let values = fields[2..]
            .iter()
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(line_no, format!("bad value '{s}'"))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if out.insert(id, Descriptor { method: method.to_string(), values }).is_some() {
            return Err(bad(line_no, format!("duplicate id {id}")));
        }
    }
    Ok(out)
}

/// Writes descriptors in the exchange format, rows sorted by id.
pub fn descriptor_csv(descriptors: &BTreeMap<usize, Descriptor>) -> String {
    let dim = descriptors.values().next().map_or(0, |d| d.values.len());
    let mut s = String::from("id,dim");
    for k in 0..dim {
        write!(s, ",v{k}").expect("writing to a String");
    }
    s.push('\n');
    for (id, d) in descriptors {
        write!(s, "{id},{}", d.values.len()).expect("writing to a String");
        for v in &d.values {
            write!(s, ",{v}").expect("writing to a String");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, Quaternion};
    use proptest::prelude::*;

    fn cand(score: f64, distance: f64) -> Candidate {
        Candidate { db_id: 0, score, distance }
    }

    fn three_queries() -> Vec<Retrieval> {
        vec![
            Retrieval { query_id: 1, candidates: vec![cand(0.9, 2.0)], has_true_match: true },
            Retrieval { query_id: 2, candidates: vec![cand(0.8, 20.0)], has_true_match: true },
            Retrieval { query_id: 3, candidates: vec![cand(0.7, 3.0)], has_true_match: true },
        ]
    }

    #[test]
    fn hand_checked_example() {
        let r = three_queries();
        assert_eq!(operating_point(&r, 0.7, 7.5).unwrap(), (2.0 / 3.0, 2.0 / 3.0));
        assert_eq!(operating_point(&r, 0.85, 7.5).unwrap(), (1.0, 1.0 / 3.0));
        let rep = evaluate(&r, &BenchParams::default()).unwrap();
        assert_eq!(rep.max_f1, 2.0 / 3.0);
        assert_eq!(rep.max_f1_threshold, 0.7);
        // Curve: (R,P) = (0,1) (1/3,1) (1/3,1/2) (2/3,2/3) (2/3,2/3).
        let pr: Vec<(f64, f64)> = rep.curve.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pr, vec![(0.0, 1.0), (1.0 / 3.0, 1.0), (1.0 / 3.0, 0.5), (2.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 2.0 / 3.0)]);
        let expected_auc = 1.0 / 3.0 * 1.0 + 1.0 / 3.0 * (0.5 + 2.0 / 3.0) / 2.0;
        assert!((rep.auc - expected_auc).abs() < 1e-15);
        assert_eq!(rep.recall_at_1(), 2.0 / 3.0);
    }

    #[test]
    fn unmatched_query_is_only_a_false_positive() {
        let mut r = three_queries();
        r.push(Retrieval { query_id: 4, candidates: vec![cand(0.95, 40.0)], has_true_match: false });
        let rep = evaluate(&r, &BenchParams::default()).unwrap();
        assert_eq!(rep.num_with_true_match, 3);
        assert_eq!(rep.curve[1].threshold, 0.95);
        assert_eq!(rep.curve[1].precision, 0.0);
        assert_eq!(rep.curve[1].recall, 0.0);
        assert_eq!(rep.curve.last().unwrap().recall, 2.0 / 3.0);
        assert_eq!(rep.curve.last().unwrap().precision, 0.5);
    }

    #[test]
    fn no_true_match_is_an_error() {
        let r = vec![Retrieval { query_id: 0, candidates: vec![cand(0.9, 50.0)], has_true_match: false }];
        assert!(matches!(evaluate(&r, &BenchParams::default()), Err(BenchError::NoTrueMatch)));
        assert!(matches!(evaluate(&[], &BenchParams::default()), Err(BenchError::NoRetrievals)));
    }

    #[test]
    fn retrieve_examples() {
        let d = |v: Vec<f64>| Descriptor { method: "t".into(), values: v };
        let db = vec![d(vec![0.0, 1.0]), d(vec![1.0, 0.0]), d(vec![1.0, 0.0])];
        let top = retrieve(&d(vec![1.0, 0.0]), &db, 5, Similarity::Cosine).unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!((top[0].db_id, top[0].score), (1, 1.0));
        assert_eq!(top[1].db_id, 2);
        assert_eq!(top[2].score, 0.0);
        assert_eq!(retrieve(&d(vec![1.0, 0.0]), &db, 1, Similarity::Cosine).unwrap().len(), 1);
        assert!(matches!(
            retrieve(&d(vec![1.0]), &db, 1, Similarity::Cosine),
            Err(BenchError::LengthMismatch { .. })
        ));
        assert!(matches!(retrieve(&d(vec![1.0]), &[], 1, Similarity::Cosine), Err(BenchError::EmptyDatabase)));
    }

    #[test]
    fn sampling_examples() {
        let line: Vec<Pose> = (0..35)
            .map(|i| Pose { t: i as f64, ..Pose::from_translation(Point3::new(i as f64, 0.0, 0.0)) })
            .collect();
        assert_eq!(sample_trajectory(&line, 10.0).unwrap(), vec![0, 10, 20, 30]);
        assert_eq!(sample_trajectory(&line[..1], 10.0).unwrap(), vec![0]);
        assert!(matches!(sample_trajectory(&[], 10.0), Err(BenchError::EmptyTrajectory)));
    }

    #[test]
    fn bev_single_point() {
        let c = PointCloud::new(vec![Point3::new(5.0, 0.0, 2.0)]).unwrap();
        let d = describe_bev(&c, &BevParams::default()).unwrap();
        assert_eq!(d.values.len(), 1200);
        let nonzero: Vec<(usize, f64)> =
            d.values.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        assert_eq!(nonzero, vec![(60, 2.0)]);
        assert!(matches!(describe_bev(&PointCloud::empty(), &BevParams::default()), Err(BenchError::EmptyCloud)));
    }

    #[test]
    fn bev_half_turn_shifts_sectors() {
        let p = BevParams::default();
        let a = Point3::new(12.3, 4.1, 1.5);
        let b = Point3::new(-30.2, 7.7, 3.0);
        let cloud = PointCloud::new(vec![a, -a + Point3::new(0.0, 0.0, 2.0 * a.z), b]).unwrap();
        let turn = Quaternion::from_yaw(PI);
        let rotated = crate::cloud::transform_cloud(&cloud, &Pose { rotation: turn, ..Pose::identity() });
        let d0 = describe_bev(&cloud, &p).unwrap().values;
        let d1 = describe_bev(&rotated, &p).unwrap().values;
        for ring in 0..p.rings {
            for s in 0..p.sectors {
                let shifted = (s + p.sectors / 2) % p.sectors;
                assert_eq!(d1[ring * p.sectors + shifted], d0[ring * p.sectors + s]);
            }
        }
    }

    #[test]
    fn descriptor_csv_round_trip_and_errors() {
        let mut m = BTreeMap::new();
        m.insert(3, Descriptor { method: "x".into(), values: vec![1.0, -2.5] });
        m.insert(1, Descriptor { method: "x".into(), values: vec![0.0, 0.125] });
        let text = descriptor_csv(&m);
        assert!(text.starts_with("id,dim,v0,v1\n"));
        let back = parse_descriptor_csv("mem", &text, "x").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[&3], m[&3]);
        let bad = "id,dim,v0\n1,2,0.5\n";
        assert!(matches!(parse_descriptor_csv("mem", bad, "x"), Err(BenchError::DescriptorFile { line: 2, .. })));
        assert!(parse_descriptor_csv("mem", "x,y\n", "x").is_err());
    }

    #[test]
    fn thresholds_serialize() {
        let rep = evaluate(&three_queries(), &BenchParams::default()).unwrap();
        let json = rep.to_json();
        assert!(json.contains("\"inf\"") && json.contains("\"-inf\""));
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        assert!(rep.pr_curve_csv().starts_with("threshold,precision,recall\ninf,1,0\n"));
    }

    fn arb_retrievals() -> impl Strategy<Value = Vec<Retrieval>> {
        prop::collection::vec(
            (prop::collection::vec((0u8..10, 0.0f64..30.0), 1..8), any::<bool>()),
            1..40,
        )
        .prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (cands, has))| {
                    let mut c: Vec<Candidate> =
                        cands.into_iter().map(|(s, d)| cand(s as f64 / 10.0, d)).collect();
                    c.sort_by(|a, b| b.score.total_cmp(&a.score));
                    let has = has || c.iter().any(|x| x.distance <= 7.5);
                    Retrieval { query_id: i, candidates: c, has_true_match: has }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn evaluate_invariants(r in arb_retrievals(), seed in any::<u64>()) {
            let params = BenchParams { top_n: 8, ..BenchParams::default() };
            prop_assume!(r.iter().any(|x| x.has_true_match));
            let rep = evaluate(&r, &params).unwrap();
            for p in &rep.curve {
                prop_assert!((0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall));
            }
            for w in rep.curve.windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold || w[1].threshold == f64::NEG_INFINITY);
                prop_assert!(w[1].recall >= w[0].recall);
            }
            prop_assert!((0.0..=1.0).contains(&rep.auc));
            let levels: Vec<f64> = rep.recall_at.values().copied().collect();
            prop_assert!(levels.windows(2).all(|w| w[0] <= w[1]));

            // max F1 by brute force over every observed threshold.
            let mut brute: f64 = 0.0;
            for x in &r {
                let th = x.candidates[0].score;
                let (p, rc) = operating_point(&r, th, 7.5).unwrap();
                if p + rc > 0.0 {
                    brute = brute.max(2.0 * p * rc / (p + rc));
                }
            }
            prop_assert!((brute - rep.max_f1).abs() < 1e-12);

            let mut shuffled = r.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let rep2 = evaluate(&shuffled, &params).unwrap();
            prop_assert_eq!(rep2, rep);
        }

        #[test]
        fn retrieve_matches_full_sort(
            db in prop::collection::vec(prop::collection::vec(-5i8..5, 4), 1..60),
            q in prop::collection::vec(-5i8..5, 4),
            top_n in 1usize..70,
        ) {
            let d = |v: &Vec<i8>| Descriptor { method: "t".into(), values: v.iter().map(|&x| x as f64).collect() };
            let db: Vec<Descriptor> = db.iter().map(d).collect();
            let q = d(&q);
            let got = retrieve(&q, &db, top_n, Similarity::Cosine).unwrap();
            let mut all: Vec<(usize, f64)> =
                db.iter().enumerate().map(|(i, x)| (i, Similarity::Cosine.score(&q.values, &x.values))).collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let want: Vec<usize> = all.iter().take(top_n).map(|x| x.0).collect();
            prop_assert_eq!(got.iter().map(|c| c.db_id).collect::<Vec<_>>(), want);
            prop_assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
        }

        #[test]
        fn sampled_poses_are_an_interval_apart(steps in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..200), interval in 0.5f64..15.0) {
            let mut pos = Point3::ZERO;
            let mut poses = vec![Pose::identity()];
            for (k, (dx, dy)) in steps.iter().enumerate() {
                pos += Point3::new(*dx, *dy, 0.0);
                poses.push(Pose { t: (k + 1) as f64, ..Pose::from_translation(pos) });
            }
            let idx = sample_trajectory(&poses, interval).unwrap();
            prop_assert_eq!(idx[0], 0);
            let mut cum = vec![0.0];
            for k in 1..poses.len() {
                cum.push(cum[k - 1] + poses[k].translation.dist(poses[k - 1].translation));
            }
            for w in idx.windows(2) {
                // Path length between consecutive picks reaches the interval, and the
                // pose before the pick had not yet reached it.
                prop_assert!(cum[w[1]] - cum[w[0]] >= interval - 1e-9);
                prop_assert!(cum[w[1] - 1] - cum[w[0]] < interval + 1e-9);
            }
        }
    }
}
