//! On-disk sequence layout shared by real recordings and generated data:
//!
//! ```text
//! <sequence>/poses.txt         one TUM pose line per scan
//! <sequence>/scans/000000.bin  one cloud per pose, sorted by file name
//! ```

use std::path::{Path, PathBuf};

use crate::bench::ScanSource;
use crate::cloud::{load_cloud_auto, load_poses, save_cloud, save_poses, session_map, CloudError, CloudFormat, PointCloud};
use crate::geom::Pose;

pub const POSES_FILE: &str = "poses.txt";
pub const SCANS_DIR: &str = "scans";

fn io_err(path: &Path, source: std::io::Error) -> CloudError {
    CloudError::Io { path: path.display().to_string(), source }
}

pub fn is_sequence_dir(path: &Path) -> bool {
    path.join(POSES_FILE).is_file() && path.join(SCANS_DIR).is_dir()
}

/// A sequence directory; scans are read lazily.
#[derive(Debug, Clone)]
pub struct DiskSequence {
    pub dir: PathBuf,
    poses: Vec<Pose>,
    scan_paths: Vec<PathBuf>,
}

impl DiskSequence {
    pub fn open(dir: &Path) -> Result<Self, CloudError> {
        let poses = load_poses(&dir.join(POSES_FILE))?.poses().to_vec();
        let scans_dir = dir.join(SCANS_DIR);
        let mut scan_paths: Vec<PathBuf> = std::fs::read_dir(&scans_dir)
            .map_err(|e| io_err(&scans_dir, e))?
            .map(|entry| entry.map(|e| e.path()).map_err(|e| io_err(&scans_dir, e)))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| {
                p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("bin" | "txt" | "xyz"))
            })
            .collect();
        scan_paths.sort();
        if scan_paths.len() != poses.len() {
            return Err(CloudError::LengthMismatch { scans: scan_paths.len(), poses: poses.len() });
        }
        Ok(DiskSequence { dir: dir.to_path_buf(), poses, scan_paths })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Every scan moved into the world frame and concatenated.
    pub fn session_map(&self) -> Result<PointCloud, CloudError> {
        let scans = (0..self.len()).map(|i| self.scan(i)).collect::<Result<Vec<_>, _>>()?;
        session_map(&scans, &self.poses)
    }
}

impl ScanSource for DiskSequence {
    fn poses(&self) -> &[Pose] {
        &self.poses
    }

    fn scan(&self, index: usize) -> Result<PointCloud, CloudError> {
        load_cloud_auto(&self.scan_paths[index])
    }
}

/// Writes `scans/NNNNNN.bin` and `poses.txt` under `dir`.
pub fn write_sequence(dir: &Path, scans: &[PointCloud], poses: &[Pose]) -> Result<(), CloudError> {
    if scans.len() != poses.len() {
        return Err(CloudError::LengthMismatch { scans: scans.len(), poses: poses.len() });
    }
    let scans_dir = dir.join(SCANS_DIR);
    std::fs::create_dir_all(&scans_dir).map_err(|e| io_err(&scans_dir, e))?;
    for (i, scan) in scans.iter().enumerate() {
        save_cloud(scan, &scans_dir.join(format!("{i:06}.bin")), CloudFormat::XyzBinary)?;
    }
    save_poses(poses, &dir.join(POSES_FILE))
}

/// A cloud file, or a sequence directory aggregated into its session map.
pub fn load_session(path: &Path) -> Result<PointCloud, CloudError> {
    if path.is_dir() {
        DiskSequence::open(path)?.session_map()
    } else {
        load_cloud_auto(path)
    }
}
