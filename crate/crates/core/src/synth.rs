//! Synthetic evolving city: axis-aligned box buildings on a flat ground
//! rectangle, each present for an interval of construction stages.
//!
//! Two independent views of the same geometry are produced. Maps are
//! stratified surface samples (ground, four walls and a roof per building)
//! drawn from seeded per-surface streams, so a surface that exists in two
//! stages yields identical points in both. Scans are analytic ray casts
//! of an ideal spinning LiDAR, returned in the sensor frame.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::ScanSource;
use crate::cloud::{CloudError, PointCloud, Trajectory};
use crate::geom::{Point3, Pose, Quaternion};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{path}{}: {reason}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config { path: String, line: Option<usize>, reason: String },
    #[error("stage {stage} outside scene stage range {first}..={last}")]
    InvalidStage { stage: u32, first: u32, last: u32 },
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSpec {
    /// Footprint center (x, y).
    pub center: [f64; 2],
    /// Extent along x.
    pub width: f64,
    /// Extent along y.
    pub depth: f64,
    pub height: f64,
    /// First and last stage (inclusive) in which the building stands.
    pub stages: [u32; 2],
}

impl BuildingSpec {
    pub fn exists_at(&self, stage: u32) -> bool {
        self.stages[0] <= stage && stage <= self.stages[1]
    }

    pub fn min(&self) -> Point3 {
        Point3::new(self.center[0] - self.width / 2.0, self.center[1] - self.depth / 2.0, 0.0)
    }

    pub fn max(&self) -> Point3 {
        Point3::new(self.center[0] + self.width / 2.0, self.center[1] + self.depth / 2.0, self.height)
    }

    /// Walls and roof as (corner, edge u, edge v) rectangles.
    pub fn faces(&self) -> [Rect; 5] {
        let (lo, hi) = (self.min(), self.max());
        let (w, d, h) = (hi.x - lo.x, hi.y - lo.y, hi.z);
        let ex = Point3::new(w, 0.0, 0.0);
        let ey = Point3::new(0.0, d, 0.0);
        let ez = Point3::new(0.0, 0.0, h);
        [
            Rect { corner: lo, u: ey, v: ez },
            Rect { corner: Point3::new(hi.x, lo.y, 0.0), u: ey, v: ez },
            Rect { corner: lo, u: ex, v: ez },
            Rect { corner: Point3::new(lo.x, hi.y, 0.0), u: ex, v: ez },
            Rect { corner: Point3::new(lo.x, lo.y, h), u: ex, v: ey },
        ]
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.width + self.depth) * self.height + self.width * self.depth
    }
}

/// Planar rectangle `corner + s·u + t·v`, `s, t ∈ [0, 1]`, with `u ⊥ v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub corner: Point3,
    pub u: Point3,
    pub v: Point3,
}

impl Rect {
    pub fn distance(&self, p: Point3) -> f64 {
        let d = p - self.corner;
        let s = (d.dot(self.u) / self.u.norm_squared()).clamp(0.0, 1.0);
        let t = (d.dot(self.v) / self.v.norm_squared()).clamp(0.0, 1.0);
        p.dist(self.corner + self.u * s + self.v * t)
    }
}

/// Ground rectangle at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Extent {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        self.min[0] <= x && x <= self.max[0] && self.min[1] <= y && y <= self.max[1]
    }

    pub fn rect(&self) -> Rect {
        Rect {
            corner: Point3::new(self.min[0], self.min[1], 0.0),
            u: Point3::new(self.max[0] - self.min[0], 0.0, 0.0),
            v: Point3::new(0.0, self.max[1] - self.min[1], 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub buildings: Vec<BuildingSpec>,
    pub extent: Extent,
    /// Surface samples per square meter.
    pub density: f64,
    pub seed: u64,
    /// Valid stages, inclusive.
    pub stage_range: [u32; 2],
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad(format!("density must be positive, got {}", self.density));
        }
        let e = &self.extent;
        if !(e.min[0] < e.max[0] && e.min[1] < e.max[1]) || !e.min.iter().chain(&e.max).all(|v| v.is_finite()) {
            return bad("ground extent must have min < max".into());
        }
        if self.stage_range[0] > self.stage_range[1] {
            return bad("stage range must have first <= last".into());
        }
        for (i, b) in self.buildings.iter().enumerate() {
            if let Err(m) = check_building(b) {
                return bad(format!("building {i}: {m}"));
            }
        }
        Ok(())
    }

    pub fn check_stage(&self, stage: u32) -> Result<(), SynthError> {
        let [first, last] = self.stage_range;
        if stage < first || stage > last {
            return Err(SynthError::InvalidStage { stage, first, last });
        }
        Ok(())
    }

    pub fn active(&self, stage: u32) -> impl Iterator<Item = (usize, &BuildingSpec)> {
        self.buildings.iter().enumerate().filter(move |(_, b)| b.exists_at(stage))
    }

    /// Distance from a world point to the nearest surface present at `stage`.
    pub fn surface_distance(&self, p: Point3, stage: u32) -> f64 {
        self.active(stage)
            .flat_map(|(_, b)| b.faces())
            .map(|f| f.distance(p))
            .fold(self.extent.rect().distance(p), f64::min)
    }
}

fn check_building(b: &BuildingSpec) -> Result<(), String> {
    let dims = [b.width, b.depth, b.height];
    if !dims.iter().all(|&d| d > 0.0 && d.is_finite()) || !b.center.iter().all(|c| c.is_finite()) {
        return Err("dimensions must be positive and finite".into());
    }
    if b.stages[0] > b.stages[1] {
        return Err("first stage after last stage".into());
    }
    Ok(())
}

/// Samples on a rectangle of sides `a × b` at `density`: one jittered sample
/// per cell of a `round(a·√ρ) × round(b·√ρ)` grid, at least one per side.
pub fn face_grid(a: f64, b: f64, density: f64) -> (usize, usize) {
    let k = density.sqrt();
    (((a * k).round() as usize).max(1), ((b * k).round() as usize).max(1))
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined key.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_rect(r: &Rect, density: f64, seed: u64) -> Vec<Point3> {
    let (nu, nv) = face_grid(r.u.norm(), r.v.norm(), density);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let s = (i as f64 + rng.gen::<f64>()) / nu as f64;
            let t = (j as f64 + rng.gen::<f64>()) / nv as f64;
            // Axis-aligned faces: the constant coordinate is copied exactly.
            let mut p = r.corner + r.u * s + r.v * t;
            for axis in 0..3 {
                if r.u.axis(axis) == 0.0 && r.v.axis(axis) == 0.0 {
                    set_axis(&mut p, axis, r.corner.axis(axis));
                }
            }
            out.push(p);
        }
    }
    out
}

fn set_axis(p: &mut Point3, axis: usize, v: f64) {
    match axis {
        0 => p.x = v,
        1 => p.y = v,
        _ => p.z = v,
    }
}

/// Surface samples of the ground and every building standing at `stage`.
pub fn build_map(spec: &SceneSpec, stage: u32) -> Result<PointCloud, SynthError> {
    spec.validate()?;
    spec.check_stage(stage)?;
    let mut surfaces: Vec<(Rect, u64)> = vec![(spec.extent.rect(), 0)];
    for (i, b) in spec.active(stage) {
        for (f, rect) in b.faces().into_iter().enumerate() {
            surfaces.push((rect, 1 + 8 * i as u64 + f as u64));
        }
    }
    let parts: Vec<Vec<Point3>> = surfaces
        .par_iter()
        .map(|(r, stream)| sample_rect(r, spec.density, stream_seed(spec.seed, *stream)))
        .collect();
    Ok(PointCloud::from_trusted(parts.concat(), None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub channels: usize,
    /// Half-angle of the vertical field of view; channels are spread
    /// evenly over ±this.
    pub vertical_fov_deg: f64,
    pub max_range: f64,
    pub horizontal_resolution_deg: f64,
    pub rate_hz: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        LidarSpec {
            channels: 32,
            vertical_fov_deg: 22.5,
            max_range: 120.0,
            horizontal_resolution_deg: 0.35,
            rate_hz: 20.0,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.channels == 0 {
            return Err(SynthError::InvalidSpec("lidar needs at least one channel".into()));
        }
        let positive = [self.max_range, self.horizontal_resolution_deg, self.rate_hz];
        if !positive.iter().all(|v| *v > 0.0 && v.is_finite())
            || !(0.0..90.0).contains(&self.vertical_fov_deg)
        {
            return Err(SynthError::InvalidSpec("lidar range, resolution, rate and fov out of bounds".into()));
        }
        Ok(())
    }

    pub fn elevations(&self) -> Vec<f64> {
        let half = self.vertical_fov_deg.to_radians();
        if self.channels == 1 {
            return vec![0.0];
        }
        let step = 2.0 * half / (self.channels - 1) as f64;
        (0..self.channels).map(|c| -half + step * c as f64).collect()
    }

    pub fn azimuth_count(&self) -> usize {
        ((360.0 / self.horizontal_resolution_deg).round() as usize).max(1)
    }
}

const MIN_HIT: f64 = 1e-9;

fn ray_box(o: Point3, d: Point3, lo: Point3, hi: Point3) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let (oa, da) = (o.axis(a), d.axis(a));
        if da == 0.0 {
            if oa < lo.axis(a) || oa > hi.axis(a) {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo.axis(a) - oa) / da, (hi.axis(a) - oa) / da);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    if t0 > t1 {
        None
    } else if t0 > MIN_HIT {
        Some(t0)
    } else if t1 > MIN_HIT {
        // Sensor inside the box: the exit face.
        Some(t1)
    } else {
        None
    }
}

fn cast(spec: &SceneSpec, boxes: &[(Point3, Point3)], o: Point3, d: Point3, max_range: f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    if d.z < 0.0 && o.z > 0.0 {
        let t = -o.z / d.z;
        let hit = o + d * t;
        if spec.extent.contains_xy(hit.x, hit.y) {
            best = t;
        }
    }
    for &(lo, hi) in boxes {
        if let Some(t) = ray_box(o, d, lo, hi) {
            best = best.min(t);
        }
    }
    (best <= max_range).then_some(best)
}

/// Ideal, noise-free scan from `pose` (sensor to world), in the sensor frame.
/// Rays are ordered channel-major, then by azimuth.
pub fn simulate_scan(spec: &SceneSpec, stage: u32, pose: &Pose, lidar: &LidarSpec) -> Result<PointCloud, SynthError> {
    spec.check_stage(stage)?;
    lidar.validate()?;
    let boxes: Vec<(Point3, Point3)> = spec.active(stage).map(|(_, b)| (b.min(), b.max())).collect();
    let n_az = lidar.azimuth_count();
    let o = pose.translation;
    let rows: Vec<Vec<Point3>> = lidar
        .elevations()
        .par_iter()
        .map(|&el| {
            let mut row = Vec::new();
            for k in 0..n_az {
                let az = 2.0 * PI * k as f64 / n_az as f64;
                let ds = Point3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let dw = pose.rotation.rotate(ds);
                if let Some(t) = cast(spec, &boxes, o, dw, lidar.max_range) {
                    row.push(ds * t);
                }
            }
            row
        })
        .collect();
    Ok(PointCloud::from_trusted(rows.concat(), None))
}

/// One scan per pose; the poses are returned unchanged as ground truth.
pub fn gen_sequence(
    spec: &SceneSpec,
    stage: u32,
    traj: &Trajectory,
    lidar: &LidarSpec,
) -> Result<(Vec<PointCloud>, Vec<Pose>), SynthError> {
    spec.validate()?;
    let scans = traj
        .poses()
        .iter()
        .map(|p| simulate_scan(spec, stage, p, lidar))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((scans, traj.poses().to_vec()))
}

/// Scans simulated on demand, for benchmarks that only touch sampled poses.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    spec: SceneSpec,
    stage: u32,
    poses: Vec<Pose>,
    lidar: LidarSpec,
}

impl SyntheticSequence {
    pub fn new(spec: SceneSpec, stage: u32, poses: Vec<Pose>, lidar: LidarSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        spec.check_stage(stage)?;
        lidar.validate()?;
        Ok(SyntheticSequence { spec, stage, poses, lidar })
    }
}

impl ScanSource for SyntheticSequence {
    fn poses(&self) -> &[Pose] {
        &self.poses
    }

    fn scan(&self, index: usize) -> Result<PointCloud, CloudError> {
        Ok(simulate_scan(&self.spec, self.stage, &self.poses[index], &self.lidar)
            .expect("validated in SyntheticSequence::new"))
    }
}

/// A constant-speed drive along a polyline, sampled at the LiDAR rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub waypoints: Vec<[f64; 2]>,
    /// Meters per second.
    pub speed: f64,
    /// Poses per second.
    pub rate: f64,
    pub sensor_height: f64,
    pub start_time: f64,
}

impl TrajectorySpec {
    pub fn new(waypoints: Vec<[f64; 2]>, step: f64) -> Self {
        TrajectorySpec { waypoints, speed: step * 20.0, rate: 20.0, sensor_height: 1.8, start_time: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.waypoints.is_empty() {
            return Err(SynthError::InvalidSpec("trajectory needs at least one waypoint".into()));
        }
        for w in self.waypoints.windows(2) {
            if w[0] == w[1] {
                return Err(SynthError::InvalidSpec("consecutive waypoints must differ".into()));
            }
        }
        let positive = [self.speed, self.rate];
        if !positive.iter().all(|v| *v > 0.0 && v.is_finite()) || !self.sensor_height.is_finite() {
            return Err(SynthError::InvalidSpec("speed and rate must be positive".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
    }

    /// Poses every `speed / rate` meters of path, heading along the current
    /// segment.
    pub fn poses(&self) -> Result<Trajectory, SynthError> {
        self.validate()?;
        let step = self.speed / self.rate;
        let total = self.length();
        let mut cum = vec![0.0];
        for w in self.waypoints.windows(2) {
            cum.push(cum.last().unwrap() + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
        }
        let mut poses = Vec::new();
        let mut seg = 0;
        let mut k = 0usize;
        loop {
            let s = k as f64 * step;
            if s > total * (1.0 + 1e-12) {
                break;
            }
            let (x, y, yaw) = if self.waypoints.len() == 1 {
                (self.waypoints[0][0], self.waypoints[0][1], 0.0)
            } else {
                while seg + 2 < self.waypoints.len() && s >= cum[seg + 1] {
                    seg += 1;
                }
                let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
                let f = ((s - cum[seg]) / (cum[seg + 1] - cum[seg])).min(1.0);
                (a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, (b[1] - a[1]).atan2(b[0] - a[0]))
            };
            poses.push(Pose {
                t: self.start_time + k as f64 / self.rate,
                translation: Point3::new(x, y, self.sensor_height),
                rotation: Quaternion::from_yaw(yaw),
            });
            k += 1;
            if self.waypoints.len() == 1 {
                break;
            }
        }
        Ok(Trajectory::new(poses)?)
    }
}

/// Knobs for [`random_nested_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedSceneParams {
    pub stages: u32,
    pub half_extent: f64,
    pub lots_per_side: usize,
    /// Probability that a lot gets a building.
    pub occupancy: f64,
    pub density: f64,
    pub max_height: f64,
}

impl Default for NestedSceneParams {
    fn default() -> Self {
        NestedSceneParams {
            stages: 4,
            half_extent: 120.0,
            lots_per_side: 6,
            occupancy: 0.8,
            density: 0.05,
            max_height: 30.0,
        }
    }
}

/// A city whose stages only ever add buildings: each building appears at a
/// random stage and stays. Lots sit on a grid with streets along every lot
/// boundary (including x = 0 and y = 0 for an even lot count). Thin towers
/// in the four corners stand at every stage so the scene's convex hull does
/// not change between stages.
pub fn random_nested_scene(seed: u64, p: &NestedSceneParams) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
    let h = p.half_extent;
    let lot = 2.0 * h / p.lots_per_side as f64;
    let all = [1, p.stages];
    let mut buildings = Vec::new();
    for i in 0..p.lots_per_side {
        for j in 0..p.lots_per_side {
            if rng.gen::<f64>() >= p.occupancy {
                continue;
            }
            let cx = -h + lot * (i as f64 + 0.5) + rng.gen_range(-0.1..0.1) * lot;
            let cy = -h + lot * (j as f64 + 0.5) + rng.gen_range(-0.1..0.1) * lot;
            buildings.push(BuildingSpec {
                center: [cx, cy],
                width: rng.gen_range(0.3..0.6) * lot,
                depth: rng.gen_range(0.3..0.6) * lot,
                height: rng.gen_range(0.2..1.0) * p.max_height,
                stages: [rng.gen_range(1..=p.stages), p.stages],
            });
        }
    }
    for (sx, sy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        buildings.push(BuildingSpec {
            center: [sx * (h - 1.0), sy * (h - 1.0)],
            width: 2.0,
            depth: 2.0,
            height: p.max_height + 10.0,
            stages: all,
        });
    }
    SceneSpec {
        name: format!("nested-{seed}"),
        buildings,
        extent: Extent { min: [-h, -h], max: [h, h] },
        density: p.density,
        seed,
        stage_range: all,
    }
}

// Config files.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    density: toml::Spanned<f64>,
    stages: Option<toml::Spanned<[u32; 2]>>,
    extent: toml::Spanned<Extent>,
    #[serde(default)]
    building: Vec<toml::Spanned<BuildingFile>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildingFile {
    center: toml::Spanned<[f64; 2]>,
    /// width, depth, height
    size: toml::Spanned<[f64; 3]>,
    stages: toml::Spanned<[u32; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    waypoints: toml::Spanned<Vec<[f64; 2]>>,
    #[serde(default = "default_speed")]
    speed: f64,
    rate: Option<f64>,
    #[serde(default = "default_height")]
    sensor_height: f64,
    #[serde(default)]
    start_time: f64,
    #[serde(default)]
    lidar: LidarSpec,
}

fn default_speed() -> f64 {
    10.0
}

fn default_height() -> f64 {
    1.8
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn config_err(path: &str, text: &str, span: Option<Range<usize>>, reason: impl Into<String>) -> SynthError {
    SynthError::Config { path: path.to_string(), line: span.map(|s| line_of(text, s.start)), reason: reason.into() }
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &str, text: &str) -> Result<T, SynthError> {
    toml::from_str(text).map_err(|e| config_err(path, text, e.span(), e.message().trim().to_string()))
}

/// Parses a scene config. `path` is only used in error messages.
///
/// ```toml
/// name = "city"
/// seed = 7
/// density = 0.2            # samples per m²
/// stages = [1, 4]          # optional; defaults to the buildings' stage span
///
/// [extent]
/// min = [-100, -100]
/// max = [100, 100]
///
/// [[building]]
/// center = [10, 20]
/// size = [12, 8, 20]       # width (x), depth (y), height
/// stages = [2, 4]
/// ```
pub fn parse_scene(path: &str, text: &str) -> Result<SceneSpec, SynthError> {
    let f: SceneFile = parse_toml(path, text)?;
    let err = |span: Range<usize>, reason: String| config_err(path, text, Some(span), reason);
    let mut buildings = Vec::with_capacity(f.building.len());
    for b in &f.building {
        let b = b.get_ref();
        let size = *b.size.get_ref();
        let spec = BuildingSpec {
            center: *b.center.get_ref(),
            width: size[0],
            depth: size[1],
            height: size[2],
            stages: *b.stages.get_ref(),
        };
        if let Err(m) = check_building(&spec) {
            let span = if !spec.center.iter().all(|c| c.is_finite()) {
                b.center.span()
            } else if spec.stages[0] > spec.stages[1] {
                b.stages.span()
            } else {
                b.size.span()
            };
            return Err(err(span, format!("building: {m}")));
        }
        buildings.push(spec);
    }
    let density = *f.density.get_ref();
    if !(density > 0.0 && density.is_finite()) {
        return Err(err(f.density.span(), format!("density must be positive, got {density}")));
    }
    let extent = *f.extent.get_ref();
    if !(extent.min[0] < extent.max[0] && extent.min[1] < extent.max[1]) {
        return Err(err(f.extent.span(), "extent must have min < max".into()));
    }
    let stage_range = match &f.stages {
        Some(s) => {
            let r = *s.get_ref();
            if r[0] > r[1] {
                return Err(err(s.span(), "stages must be [first, last] with first <= last".into()));
            }
            r
        }
        None => {
            let first = buildings.iter().map(|b| b.stages[0]).min().unwrap_or(1);
            let last = buildings.iter().map(|b| b.stages[1]).max().unwrap_or(1);
            [first, last]
        }
    };
    let spec = SceneSpec {
        name: f.name.unwrap_or_else(|| "synth".into()),
        buildings,
        extent,
        density,
        seed: f.seed,
        stage_range,
    };
    spec.validate()?;
    Ok(spec)
}

/// Parses a trajectory config: `waypoints = [[x, y], ...]`, optional
/// `speed` (m/s, default 10), `rate` (Hz, default the LiDAR rate),
/// `sensor_height` (default 1.8), `start_time`, and a `[lidar]` table
/// overriding [`LidarSpec`] fields.
pub fn parse_trajectory(path: &str, text: &str) -> Result<(TrajectorySpec, LidarSpec), SynthError> {
    let f: TrajectoryFile = parse_toml(path, text)?;
    let spec = TrajectorySpec {
        waypoints: f.waypoints.get_ref().clone(),
        speed: f.speed,
        rate: f.rate.unwrap_or(f.lidar.rate_hz),
        sensor_height: f.sensor_height,
        start_time: f.start_time,
    };
    spec.validate().map_err(|e| config_err(path, text, Some(f.waypoints.span()), e.to_string()))?;
    f.lidar.validate().map_err(|e| config_err(path, text, None, e.to_string()))?;
    Ok((spec, f.lidar))
}

pub fn load_scene(path: &Path) -> Result<SceneSpec, SynthError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CloudError::Io { path: path.display().to_string(), source })?;
    parse_scene(&path.display().to_string(), &text)
}

pub fn load_trajectory(path: &Path) -> Result<(TrajectorySpec, LidarSpec), SynthError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CloudError::Io { path: path.display().to_string(), source })?;
    parse_trajectory(&path.display().to_string(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_box(stages: [u32; 2]) -> SceneSpec {
        SceneSpec {
            name: "t".into(),
            buildings: vec![BuildingSpec { center: [20.0, 0.0], width: 10.0, depth: 8.0, height: 12.0, stages }],
            extent: Extent { min: [-50.0, -50.0], max: [50.0, 50.0] },
            density: 0.5,
            seed: 3,
            stage_range: [1, 3],
        }
    }

    #[test]
    fn empty_scene_is_ground_only() {
        let mut s = one_box([2, 2]);
        s.buildings.clear();
        let m = build_map(&s, 1).unwrap();
        assert!(m.points().iter().all(|p| p.z == 0.0));
        assert_eq!(m.len(), 71 * 71);
    }

    #[test]
    fn building_adds_points_only_in_its_stages() {
        let s = one_box([2, 2]);
        let (m1, m2, m3) = (build_map(&s, 1).unwrap(), build_map(&s, 2).unwrap(), build_map(&s, 3).unwrap());
        assert!(m1.len() < m2.len());
        assert_eq!(m1, m3);
        // Ground samples are the same whether or not the building stands.
        assert_eq!(&m2.points()[..m1.len()], m1.points());
        assert!(matches!(build_map(&s, 4), Err(SynthError::InvalidStage { stage: 4, .. })));
    }

    #[test]
    fn map_points_lie_on_surfaces() {
        let s = one_box([1, 3]);
        let m = build_map(&s, 2).unwrap();
        for p in m.points() {
            assert!(s.surface_distance(*p, 2) < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn downward_rays_hit_ground_in_closed_form() {
        let mut s = one_box([1, 1]);
        s.buildings.clear();
        s.extent = Extent { min: [-1e4, -1e4], max: [1e4, 1e4] };
        let lidar = LidarSpec { horizontal_resolution_deg: 10.0, ..LidarSpec::default() };
        let h = 1.8;
        let pose = Pose::from_translation(Point3::new(0.0, 0.0, h));
        let scan = simulate_scan(&s, 1, &pose, &lidar).unwrap();
        let down: Vec<f64> = lidar.elevations().into_iter().filter(|e| *e < 0.0).collect();
        let expected: Vec<f64> =
            down.iter().map(|e| h / e.abs().sin()).filter(|r| *r <= lidar.max_range).collect();
        assert_eq!(scan.len(), expected.len() * lidar.azimuth_count());
        for (k, p) in scan.points().iter().enumerate() {
            let r = expected[k / lidar.azimuth_count()];
            assert!((p.norm() - r).abs() < 1e-9 * r);
            assert!((p.z + h).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_range_gives_empty_scan() {
        let s = one_box([1, 3]);
        let lidar = LidarSpec { max_range: 0.001, ..LidarSpec::default() };
        let scan = simulate_scan(&s, 1, &Pose::from_translation(Point3::new(0.0, 0.0, 1.8)), &lidar).unwrap();
        assert!(scan.is_empty());
    }

    #[test]
    fn trajectory_sampling() {
        let t = TrajectorySpec::new(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]], 0.5);
        let poses = t.poses().unwrap();
        assert_eq!(poses.len(), 31);
        let p = poses.poses();
        assert_eq!(p[20].translation, Point3::new(10.0, 0.0, 1.8));
        assert!((p[10].rotation.yaw()).abs() < 1e-12);
        assert!((p[25].rotation.yaw() - PI / 2.0).abs() < 1e-12);
        assert!((p[25].translation.y - 2.5).abs() < 1e-12);
        assert!((p[1].t - 0.05).abs() < 1e-15);
        let single = TrajectorySpec::new(vec![[3.0, 4.0]], 1.0).poses().unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn scene_config_parses() {
        let text = r#"
name = "city"
seed = 9
density = 0.25

[extent]
min = [-100, -80]
max = [100, 80]

[[building]]
center = [10, 20]
size = [12, 8, 20]
stages = [2, 4]
"#;
        let s = parse_scene("scene.toml", text).unwrap();
        assert_eq!(s.name, "city");
        assert_eq!(s.stage_range, [2, 4]);
        assert_eq!(s.buildings[0].height, 20.0);
        assert_eq!(s.extent.min, [-100.0, -80.0]);
    }

    #[test]
    fn scene_config_errors_carry_lines() {
        let bad_building = "density = 1.0\n[extent]\nmin = [0, 0]\nmax = [1, 1]\n\n[[building]]\ncenter = [0, 0]\nsize = [1, -2, 3]\nstages = [1, 1]\n";
        match parse_scene("s.toml", bad_building) {
            Err(SynthError::Config { line: Some(l), .. }) => assert!((6..=9).contains(&l), "line {l}"),
            other => panic!("{other:?}"),
        }
        let syntax = "density = 1.0\nextent = [\n";
        assert!(matches!(parse_scene("s.toml", syntax), Err(SynthError::Config { line: Some(_), .. })));
        let unknown = "density = 1.0\ncolour = 3\n[extent]\nmin = [0, 0]\nmax = [1, 1]\n";
        let e = parse_scene("s.toml", unknown).unwrap_err().to_string();
        assert!(e.starts_with("s.toml:"), "{e}");
    }

    #[test]
    fn trajectory_config_parses() {
        let (t, l) = parse_trajectory("t.toml", "waypoints = [[0, 0], [50, 0]]\nspeed = 5\n[lidar]\nchannels = 16\n").unwrap();
        assert_eq!(t.rate, 20.0);
        assert_eq!(l.channels, 16);
        assert_eq!(l.max_range, 120.0);
        assert!(parse_trajectory("t.toml", "waypoints = [[0, 0], [0, 0]]\n").is_err());
    }

    #[test]
    fn nested_scene_is_nested() {
        let s = random_nested_scene(5, &NestedSceneParams::default());
        s.validate().unwrap();
        assert!(s.buildings.iter().all(|b| b.stages[1] == 4));
        let counts: Vec<usize> = (1..=4).map(|st| s.active(st).count()).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        // Streets along x = 0 and y = 0 stay clear.
        for b in &s.buildings {
            assert!(b.min().x > 0.0 || b.max().x < 0.0);
            assert!(b.min().y > 0.0 || b.max().y < 0.0);
        }
        assert_eq!(random_nested_scene(5, &NestedSceneParams::default()), s);
    }
}
