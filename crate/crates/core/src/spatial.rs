//! Exact nearest-neighbor queries and voxel-grid downsampling.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::geom::{Aabb, Point3};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("cannot index an empty cloud")]
    EmptyCloud,
}

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy)]
enum Node {
    Split { axis: u8, value: f64, left: u32, right: u32 },
    Leaf { start: u32, end: u32 },
}

/// Balanced 3-d tree over a point cloud. Read-only once built.
///
/// Points are stored permuted into tree order so each leaf is a contiguous
/// slice.
#[derive(Debug, Clone)]
pub struct KdIndex {
    points: Vec<Point3>,
    original: Vec<u32>,
    nodes: Vec<Node>,
    bbox: Aabb,
}

impl KdIndex {
    pub fn build(cloud: &PointCloud) -> Result<KdIndex, IndexError> {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &[Point3]) -> Result<KdIndex, IndexError> {
        let bbox = Aabb::from_points(points).ok_or(IndexError::EmptyCloud)?;
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(points, &mut order, 0, &mut nodes);
        let permuted = order.iter().map(|&i| points[i as usize]).collect();
        Ok(KdIndex { points: permuted, original: order, nodes, bbox })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    /// Index (into the indexed cloud) and squared distance of the nearest point.
    pub fn nearest(&self, q: Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        (self.original[best.0] as usize, best.1)
    }

    /// Exact Euclidean distance from `q` to the closest indexed point.
    pub fn nn_dist(&self, q: Point3) -> f64 {
        self.nearest(q).1.sqrt()
    }

    /// [`KdIndex::nearest`] for many queries, in query order. Queries are
    /// visited along a Morton curve so consecutive searches touch the same
    /// part of the tree.
    pub fn nearest_many(&self, queries: &[Point3]) -> Vec<(usize, f64)> {
        let Some(bbox) = Aabb::from_points(queries) else { return Vec::new() };
        let mut order: Vec<(u64, u32)> =
            queries.par_iter().enumerate().map(|(i, q)| (morton_key(*q, &bbox), i as u32)).collect();
        order.par_sort_unstable();
        let found: Vec<(usize, f64)> = order.par_iter().map(|&(_, i)| self.nearest(queries[i as usize])).collect();
        let mut out = vec![(0, 0.0); queries.len()];
        for (&(_, i), r) in order.iter().zip(found) {
            out[i as usize] = r;
        }
        out
    }

    fn search(&self, node: usize, q: Point3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start as usize..end as usize {
                    let d = q.dist_squared(self.points[k]);
                    if d < best.1 {
                        *best = (k, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q.axis(axis as usize) - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, best);
                // Far-side points are at least |diff| away; rounding is monotone,
                // so pruning at diff² >= best never drops a strictly closer point.
                if diff * diff < best.1 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }
}

fn morton_key(p: Point3, bbox: &Aabb) -> u64 {
    const BITS: u32 = 21;
    let mut key = 0u64;
    for axis in 0..3 {
        let span = bbox.max.axis(axis) - bbox.min.axis(axis);
        let t = if span > 0.0 { (p.axis(axis) - bbox.min.axis(axis)) / span } else { 0.0 };
        let cell = (t * ((1u64 << BITS) - 1) as f64) as u64;
        for b in 0..BITS as u64 {
            key |= ((cell >> b) & 1) << (3 * b + axis as u64);
        }
    }
    key
}

fn build_node(points: &[Point3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
        return id;
    }
    let (lo, hi) = order.iter().fold(
        (Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), &i| (lo.min(points[i as usize]), hi.max(points[i as usize])),
    );
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    if extent.axis(axis) == 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize].axis(axis).total_cmp(&points[b as usize].axis(axis))
    });
    let value = points[order[mid] as usize].axis(axis);
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build_node(points, l, offset, nodes);
    let right = build_node(points, r, offset + mid, nodes);
    nodes[id as usize] = Node::Split { axis: axis as u8, value, left, right };
    id
}

/// Voxel grid definition.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VoxelParams {
    pub resolution: f64,
    pub origin: Point3,
}

impl VoxelParams {
    pub fn new(resolution: f64) -> Self {
        VoxelParams { resolution, origin: Point3::ZERO }
    }

    /// Integer voxel coordinates; boundary points fall in the higher voxel.
    #[inline]
    pub fn voxel_of(&self, p: Point3) -> [i64; 3] {
        let r = self.resolution;
        [
            ((p.x - self.origin.x) / r).floor() as i64,
            ((p.y - self.origin.y) / r).floor() as i64,
            ((p.z - self.origin.z) / r).floor() as i64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VoxelError {
    #[error("voxel resolution must be positive and finite, got {0}")]
    BadResolution(f64),
}

/// One centroid per occupied voxel, ordered by voxel id.
///
/// Members of a voxel are summed in a canonical order, so the output does
/// not depend on the input order. Intensity, when present, is averaged.
pub fn voxel_downsample(cloud: &PointCloud, params: &VoxelParams) -> Result<PointCloud, VoxelError> {
    if !(params.resolution > 0.0 && params.resolution.is_finite()) {
        return Err(VoxelError::BadResolution(params.resolution));
    }
    let intensity = cloud.intensity();
    let mut keyed: Vec<([i64; 3], Point3, f32)> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| (params.voxel_of(p), p, intensity.map_or(0.0, |v| v[i])))
        .collect();
    keyed.par_sort_unstable_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.x.total_cmp(&b.1.x))
            .then(a.1.y.total_cmp(&b.1.y))
            .then(a.1.z.total_cmp(&b.1.z))
            .then(a.2.total_cmp(&b.2))
    });

    let mut points = Vec::new();
    let mut out_intensity = Vec::new();
    for group in keyed.chunk_by(|a, b| a.0 == b.0) {
        let n = group.len() as f64;
        let mut sum = Point3::ZERO;
        let mut lo = group[0].1;
        let mut hi = group[0].1;
        let mut isum = 0.0f64;
        for (_, p, i) in group {
            sum += *p;
            lo = lo.min(*p);
            hi = hi.max(*p);
            isum += *i as f64;
        }
        // Clamping to the member bounds keeps the centroid in its own voxel
        // despite rounding in the division.
        let c = sum / n;
        points.push(Point3::new(c.x.clamp(lo.x, hi.x), c.y.clamp(lo.y, hi.y), c.z.clamp(lo.z, hi.z)));
        out_intensity.push((isum / n) as f32);
    }
    Ok(PointCloud::from_trusted(points, intensity.map(|_| out_intensity)))
}
