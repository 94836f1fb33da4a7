//! Point clouds, their on-disk formats, trajectories and map aggregation.
//!
//! Two cloud formats are supported:
//!
//! * `xyz-binary`: little-endian `f32` records of `x y z intensity`, 16 bytes
//!   per point, no header (the KITTI velodyne layout).
//! * `xyz-ascii`: one `x y z [intensity]` record per line, whitespace
//!   separated; `#` starts a comment.
//!
//! Poses are stored one per line as `t tx ty tz qx qy qz qw`.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::geom::{Point3, Pose, PoseError, Quaternion};

#[derive(Debug, thiserror::Error)]
pub enum CloudError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed record at {location}: {reason}")]
    Malformed { path: String, location: Location, reason: String },
    #[error("{path}: non-finite coordinate at {location}")]
    NonFinite { path: String, location: Location },
    #[error("intensity has {intensity} entries but cloud has {points} points")]
    IntensityLength { points: usize, intensity: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinitePoint(usize),
    #[error("{scans} scans but {poses} poses")]
    LengthMismatch { scans: usize, poses: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("{path}: invalid pose at line {line}: {reason}")]
    BadPose { path: String, line: usize, reason: String },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("timestamps not strictly increasing at pose {0}")]
    NonMonotonic(usize),
}

/// Position of a bad record inside a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(u64),
    Line(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {b}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> CloudError {
    CloudError::Io { path: path.display().to_string(), source }
}

/// Cloud file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzBinary,
    XyzAscii,
}

impl CloudFormat {
    /// `.bin` is binary, anything else is ascii.
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("bin") => CloudFormat::XyzBinary,
            _ => CloudFormat::XyzAscii,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "xyz-binary" | "bin" => Ok(CloudFormat::XyzBinary),
            "xyz-ascii" | "txt" => Ok(CloudFormat::XyzAscii),
            other => Err(format!("unknown cloud format '{other}'")),
        }
    }
}

/// Ordered point set with optional per-point intensity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    intensity: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self, CloudError> {
        Self::with_intensity(points, None)
    }

    pub fn with_intensity(
        points: Vec<Point3>,
        intensity: Option<Vec<f32>>,
    ) -> Result<Self, CloudError> {
        if let Some(i) = &intensity {
            if i.len() != points.len() {
                return Err(CloudError::IntensityLength {
                    points: points.len(),
                    intensity: i.len(),
                });
            }
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(CloudError::NonFinitePoint(bad));
        }
        Ok(PointCloud { points, intensity })
    }

    /// Builds a cloud from points already known to be finite.
    pub(crate) fn from_trusted(points: Vec<Point3>, intensity: Option<Vec<f32>>) -> Self {
        debug_assert!(points.iter().all(|p| p.is_finite()));
        debug_assert!(intensity.as_ref().is_none_or(|i| i.len() == points.len()));
        PointCloud { points, intensity }
    }

    pub fn empty() -> Self {
        PointCloud::default()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn intensity(&self) -> Option<&[f32]> {
        self.intensity.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Keeps the points for which `keep` is true, preserving order and intensity.
    pub fn filter_by<F: Fn(usize, Point3) -> bool>(&self, keep: F) -> PointCloud {
        let mask: Vec<bool> = self.points.iter().enumerate().map(|(i, &p)| keep(i, p)).collect();
        self.select(&mask)
    }

    /// Keeps the points whose mask entry is true.
    pub fn select(&self, mask: &[bool]) -> PointCloud {
        assert_eq!(mask.len(), self.points.len());
        let points = self
            .points
            .iter()
            .zip(mask)
            .filter_map(|(&p, &m)| m.then_some(p))
            .collect();
        let intensity = self.intensity.as_ref().map(|inten| {
            inten.iter().zip(mask).filter_map(|(&v, &m)| m.then_some(v)).collect()
        });
        PointCloud { points, intensity }
    }

    /// Concatenates clouds. Intensity is kept when any input has it; missing
    /// channels are filled with 0.
    pub fn concat<'a, I: IntoIterator<Item = &'a PointCloud>>(clouds: I) -> PointCloud {
        let clouds: Vec<&PointCloud> = clouds.into_iter().collect();
        let total = clouds.iter().map(|c| c.len()).sum();
        let any_intensity = clouds.iter().any(|c| c.intensity.is_some());
        let mut points = Vec::with_capacity(total);
        let mut intensity = any_intensity.then(|| Vec::with_capacity(total));
        for c in clouds {
            points.extend_from_slice(&c.points);
            if let Some(out) = intensity.as_mut() {
                match &c.intensity {
                    Some(i) => out.extend_from_slice(i),
                    None => out.extend(std::iter::repeat_n(0.0, c.len())),
                }
            }
        }
        PointCloud { points, intensity }
    }
}

/// Reads a cloud, picking the format from the file extension.
pub fn load_cloud_auto(path: &Path) -> Result<PointCloud, CloudError> {
    load_cloud(path, CloudFormat::from_path(path))
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, CloudError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    match format {
        CloudFormat::XyzBinary => parse_binary(path, &bytes),
        CloudFormat::XyzAscii => {
            let text = String::from_utf8(bytes).map_err(|e| CloudError::Malformed {
                path: path.display().to_string(),
                location: Location::Byte(e.utf8_error().valid_up_to() as u64),
                reason: "invalid UTF-8".into(),
            })?;
            parse_ascii(path, &text)
        }
    }
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<PointCloud, CloudError> {
    const RECORD: usize = 16;
    if !bytes.len().is_multiple_of(RECORD) {
        return Err(CloudError::Malformed {
            path: path.display().to_string(),
            location: Location::Byte((bytes.len() - bytes.len() % RECORD) as u64),
            reason: format!("truncated record ({} trailing bytes)", bytes.len() % RECORD),
        });
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (k, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]);
        let (x, y, z, i) = (f(0), f(4), f(8), f(12));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(CloudError::NonFinite {
                path: path.display().to_string(),
                location: Location::Byte((k * RECORD) as u64),
            });
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        intensity.push(i);
    }
    Ok(PointCloud { points, intensity: Some(intensity) })
}

fn parse_ascii(path: &Path, text: &str) -> Result<PointCloud, CloudError> {
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    let mut with_intensity: Option<bool> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let malformed = |reason: String| CloudError::Malformed {
            path: path.display().to_string(),
            location: Location::Line(line_no),
            reason,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(malformed(format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        let has_i = fields.len() == 4;
        match with_intensity {
            None => with_intensity = Some(has_i),
            Some(prev) if prev != has_i => {
                return Err(malformed("inconsistent field count".into()));
            }
            _ => {}
        }
        let mut vals = [0f64; 4];
        for (v, s) in vals.iter_mut().zip(&fields) {
            *v = s.parse().map_err(|_| malformed(format!("not a number: '{s}'")))?;
        }
        let p = Point3::new(vals[0], vals[1], vals[2]);
        if !p.is_finite() {
            return Err(CloudError::NonFinite {
                path: path.display().to_string(),
                location: Location::Line(line_no),
            });
        }
        points.push(p);
        if has_i {
            intensity.push(vals[3] as f32);
        }
    }
    let intensity = (with_intensity == Some(true)).then_some(intensity);
    Ok(PointCloud { points, intensity })
}

/// Writes a cloud, picking the format from the file extension.
pub fn save_cloud_auto(cloud: &PointCloud, path: &Path) -> Result<(), CloudError> {
    save_cloud(cloud, path, CloudFormat::from_path(path))
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<(), CloudError> {
    let bytes = match format {
        CloudFormat::XyzBinary => encode_binary(cloud),
        CloudFormat::XyzAscii => encode_ascii(cloud).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Binary encoding; absent intensity is written as 0.
pub fn encode_binary(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for (k, p) in cloud.points.iter().enumerate() {
        let i = cloud.intensity.as_ref().map_or(0.0, |v| v[k]);
        for v in [p.x as f32, p.y as f32, p.z as f32, i] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn encode_ascii(cloud: &PointCloud) -> String {
    use std::fmt::Write as _;
    let mut s = String::with_capacity(cloud.len() * 32);
    for (k, p) in cloud.points.iter().enumerate() {
        match &cloud.intensity {
            Some(i) => writeln!(s, "{} {} {} {}", p.x, p.y, p.z, i[k]),
            None => writeln!(s, "{} {} {}", p.x, p.y, p.z),
        }
        .expect("writing to a String");
    }
    s
}

/// Points within Euclidean distance `max_range` of the origin.
pub fn crop_range(cloud: &PointCloud, max_range: f64) -> PointCloud {
    let r2 = max_range * max_range;
    cloud.filter_by(|_, p| p.norm_squared() <= r2)
}

/// Points with every coordinate inside `[-half_extent, half_extent]`.
pub fn crop_box(cloud: &PointCloud, half_extent: f64) -> PointCloud {
    cloud.filter_by(|_, p| {
        p.x.abs() <= half_extent && p.y.abs() <= half_extent && p.z.abs() <= half_extent
    })
}

pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let points = cloud.points.iter().map(|&p| pose.apply(p)).collect();
    PointCloud { points, intensity: cloud.intensity.clone() }
}

/// Splits the scans into consecutive chunks of `window` scans and returns
/// each chunk merged into the world frame. With `window >= scans.len()` the
/// result is a single session map.
pub fn aggregate_map(
    scans: &[PointCloud],
    poses: &[Pose],
    window: usize,
) -> Result<Vec<PointCloud>, CloudError> {
    if scans.len() != poses.len() {
        return Err(CloudError::LengthMismatch { scans: scans.len(), poses: poses.len() });
    }
    if window == 0 {
        return Err(CloudError::ZeroWindow);
    }
    Ok(scans
        .chunks(window)
        .zip(poses.chunks(window))
        .map(|(s, p)| {
            let world: Vec<PointCloud> =
                s.iter().zip(p).map(|(c, pose)| transform_cloud(c, pose)).collect();
            PointCloud::concat(&world)
        })
        .collect())
}

/// All scans merged into one world-frame map.
pub fn session_map(scans: &[PointCloud], poses: &[Pose]) -> Result<PointCloud, CloudError> {
    let mut maps = aggregate_map(scans, poses, scans.len().max(1))?;
    Ok(maps.pop().unwrap_or_default())
}

/// The `window` scans ending at `end` (inclusive), expressed in the frame
/// of scan `end`.
pub fn submap_ending_at(
    scans: &[PointCloud],
    poses: &[Pose],
    end: usize,
    window: usize,
) -> Result<PointCloud, CloudError> {
    if scans.len() != poses.len() {
        return Err(CloudError::LengthMismatch { scans: scans.len(), poses: poses.len() });
    }
    if window == 0 {
        return Err(CloudError::ZeroWindow);
    }
    let start = (end + 1).saturating_sub(window);
    let to_local = poses[end].inverse();
    let parts: Vec<PointCloud> = (start..=end)
        .map(|k| transform_cloud(&scans[k], &to_local.compose(&poses[k])))
        .collect();
    Ok(PointCloud::concat(&parts))
}

/// Poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, CloudError> {
        if poses.is_empty() {
            return Err(CloudError::EmptyTrajectory);
        }
        if let Some(k) = poses.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(CloudError::NonMonotonic(k + 1));
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

pub fn load_poses(path: &Path) -> Result<Trajectory, CloudError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_poses(path, &text)
}

fn parse_poses(path: &Path, text: &str) -> Result<Trajectory, CloudError> {
    let mut poses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |reason: String| CloudError::BadPose {
            path: path.display().to_string(),
            line: idx + 1,
            reason,
        };
        let vals: Vec<f64> = content
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("not a number: '{s}'"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", vals.len())));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        let pose = Pose::new(vals[0], Point3::new(vals[1], vals[2], vals[3]), q)
            .map_err(|e: PoseError| bad(e.to_string()))?;
        poses.push(pose);
    }
    Trajectory::new(poses)
}

pub fn save_poses(poses: &[Pose], path: &Path) -> Result<(), CloudError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for p in poses {
        let (t, q) = (p.translation, p.rotation);
        writeln!(w, "{} {} {} {} {} {} {} {}", p.t, t.x, t.y, t.z, q.x, q.y, q.z, q.w)
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
