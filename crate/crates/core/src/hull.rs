//! 3D convex hulls (quickhull) and tolerant point containment.
//!
//! Hull facets are triangles with outward unit normals. A point is inside
//! when it lies no more than `eps` in front of every facet plane, so points
//! on the boundary (hull vertices included) count as inside.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::geom::{Aabb, Point3};

/// Relative rank tolerance used to reject flat or collinear inputs.
pub const RANK_TOL: f64 = 1e-7;
/// Default containment tolerance relative to the bounding-box diagonal.
pub const CONTAIN_TOL: f64 = 1e-6;
/// Points closer than this (relative to the diagonal) to a facet plane are
/// not treated as outside during construction.
const BUILD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HullError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("hull construction lost precision: {0}")]
    Numerical(String),
}

/// A facet plane `normal · x = offset` together with its triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub normal: Point3,
    pub offset: f64,
    /// Indices into the input points.
    pub vertices: [usize; 3],
}

impl Facet {
    #[inline]
    pub fn signed_distance(&self, p: Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

#[derive(Debug, Clone)]
pub struct ConvexHull3 {
    facets: Vec<Facet>,
    vertex_indices: Vec<usize>,
    vertices: Vec<Point3>,
    eps: f64,
    bbox: Aabb,
}

impl ConvexHull3 {
    pub fn build(cloud: &PointCloud) -> Result<ConvexHull3, HullError> {
        quickhull(cloud.points())
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Sorted indices of the input points that are hull vertices.
    pub fn vertex_indices(&self) -> &[usize] {
        &self.vertex_indices
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Largest signed distance of `p` in front of any facet plane.
    pub fn max_violation(&self, p: Point3) -> f64 {
        self.facets.iter().map(|f| f.signed_distance(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    #[inline]
    pub fn contains(&self, p: Point3) -> bool {
        self.facets.iter().all(|f| f.signed_distance(p) <= self.eps)
    }

    /// Containment flags for many points, in input order.
    pub fn contains_all(&self, points: &[Point3]) -> Vec<bool> {
        points.par_iter().map(|&p| self.contains(p)).collect()
    }
}

/// Points of `source` inside `hull`, order preserved.
pub fn hull_restrict(source: &PointCloud, hull: &ConvexHull3) -> PointCloud {
    source.select(&hull.contains_all(source.points()))
}

#[derive(Debug, Clone)]
struct Face {
    v: [u32; 3],
    normal: Point3,
    offset: f64,
    nb: [u32; 3],
    outside: Vec<u32>,
    alive: bool,
}

fn plane(p: &[Point3], v: [u32; 3]) -> (Point3, f64) {
    let (a, b, c) = (p[v[0] as usize], p[v[1] as usize], p[v[2] as usize]);
    let n = (b - a).cross(c - a);
    let n = n / n.norm();
    (n, (n.dot(a) + n.dot(b) + n.dot(c)) / 3.0)
}

#[inline]
fn dist(face: &Face, p: Point3) -> f64 {
    face.normal.dot(p) - face.offset
}

/// Builds the convex hull of at least four non-coplanar points.
pub fn quickhull(input: &[Point3]) -> Result<ConvexHull3, HullError> {
    if input.len() < 4 {
        return Err(HullError::Degenerate(format!("{} points, need at least 4", input.len())));
    }
    if input.len() > u32::MAX as usize {
        return Err(HullError::Degenerate("too many points".into()));
    }
    let bbox = Aabb::from_points(input).expect("non-empty");
    let diag = bbox.diagonal();
    if !(diag > 0.0 && diag.is_finite()) {
        return Err(HullError::Degenerate("all points coincide".into()));
    }
    let center = (bbox.min + bbox.max) * 0.5;
    let pts: Vec<Point3> = input.iter().map(|&p| p - center).collect();
    let rank_tol = RANK_TOL * diag;
    let tol = BUILD_TOL * diag;

    let simplex = initial_simplex(&pts, rank_tol)?;
    let mut faces = tetrahedron(&pts, simplex);

    // Seed conflict lists.
    let in_simplex = |i: u32| simplex.contains(&i);
    for i in 0..pts.len() as u32 {
        if in_simplex(i) {
            continue;
        }
        let p = pts[i as usize];
        let best = (0..4).map(|f| (f, dist(&faces[f], p))).max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((f, d)) = best {
            if d > tol {
                faces[f].outside.push(i);
            }
        }
    }

    let mut stack: Vec<u32> = (0..4).filter(|&f| !faces[f as usize].outside.is_empty()).collect();
    let mut mark: Vec<u32> = vec![0; 4];
    let mut iteration = 0u32;
    let mut visible = Vec::new();
    let mut horizon: Vec<(u32, u32, u32)> = Vec::new();

    while let Some(f) = stack.pop() {
        let f = f as usize;
        if !faces[f].alive || faces[f].outside.is_empty() {
            continue;
        }
        iteration += 1;
        let eye = *faces[f]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                dist(&faces[f], pts[a as usize]).total_cmp(&dist(&faces[f], pts[b as usize]))
            })
            .expect("non-empty");
        let eye_p = pts[eye as usize];

        // Visible region: faces reachable from f that the eye is strictly in front of.
        // mark == iteration: visible; mark == iteration | HIGH: checked, not visible.
        const NOT_VISIBLE: u32 = 1 << 31;
        visible.clear();
        visible.push(f as u32);
        mark[f] = iteration;
        let mut k = 0;
        while k < visible.len() {
            let g = visible[k] as usize;
            k += 1;
            for h in faces[g].nb {
                let hu = h as usize;
                if mark[hu] == iteration || mark[hu] == (iteration | NOT_VISIBLE) {
                    continue;
                }
                if dist(&faces[hu], eye_p) > tol {
                    mark[hu] = iteration;
                    visible.push(h);
                } else {
                    mark[hu] = iteration | NOT_VISIBLE;
                }
            }
        }

        horizon.clear();
        for &g in &visible {
            let face = &faces[g as usize];
            for e in 0..3 {
                let h = face.nb[e];
                if mark[h as usize] != iteration {
                    horizon.push((face.v[e], face.v[(e + 1) % 3], h));
                }
            }
        }
        if horizon.len() < 3 {
            return Err(HullError::Numerical(format!("horizon of {} edges", horizon.len())));
        }

        // Link new faces around the horizon loop.
        let base = faces.len() as u32;
        let mut by_start: HashMap<u32, u32> = HashMap::with_capacity(horizon.len());
        let mut by_end: HashMap<u32, u32> = HashMap::with_capacity(horizon.len());
        for (k, &(u, v, _)) in horizon.iter().enumerate() {
            let id = base + k as u32;
            if by_start.insert(u, id).is_some() || by_end.insert(v, id).is_some() {
                return Err(HullError::Numerical("horizon is not a simple loop".into()));
            }
        }
        for &(u, v, h) in &horizon {
            let v3 = [u, v, eye];
            let (normal, offset) = plane(&pts, v3);
            let next = *by_start.get(&v).ok_or_else(|| HullError::Numerical("open horizon".into()))?;
            let prev = *by_end.get(&u).ok_or_else(|| HullError::Numerical("open horizon".into()))?;
            let id = faces.len() as u32;
            let hf = &mut faces[h as usize];
            let j = (0..3)
                .find(|&j| hf.v[j] == v && hf.v[(j + 1) % 3] == u)
                .ok_or_else(|| HullError::Numerical("inconsistent adjacency".into()))?;
            hf.nb[j] = id;
            faces.push(Face { v: v3, normal, offset, nb: [h, next, prev], outside: Vec::new(), alive: true });
            mark.push(0);
        }
        if faces[base as usize..].iter().any(|f| !f.normal.is_finite()) {
            return Err(HullError::Numerical("zero-area facet".into()));
        }

        // Hand the orphaned conflict points to the new faces.
        let mut orphans = Vec::new();
        for &g in &visible {
            let face = &mut faces[g as usize];
            face.alive = false;
            orphans.append(&mut face.outside);
        }
        let new_range = base as usize..faces.len();
        for i in orphans {
            if i == eye {
                continue;
            }
            let p = pts[i as usize];
            let mut best = (usize::MAX, tol);
            for nf in new_range.clone() {
                let d = dist(&faces[nf], p);
                if d > best.1 {
                    best = (nf, d);
                }
            }
            if best.0 != usize::MAX {
                faces[best.0].outside.push(i);
            }
        }
        for nf in new_range {
            if !faces[nf].outside.is_empty() {
                stack.push(nf as u32);
            }
        }
    }

    let eps = CONTAIN_TOL * diag;
    let mut facets = Vec::new();
    let mut is_vertex = vec![false; pts.len()];
    for f in faces.iter().filter(|f| f.alive) {
        for &v in &f.v {
            is_vertex[v as usize] = true;
        }
        facets.push(Facet {
            normal: f.normal,
            offset: f.offset + f.normal.dot(center),
            vertices: [f.v[0] as usize, f.v[1] as usize, f.v[2] as usize],
        });
    }
    let vertex_indices: Vec<usize> = (0..pts.len()).filter(|&i| is_vertex[i]).collect();
    let vertices = vertex_indices.iter().map(|&i| input[i]).collect();
    let hull = ConvexHull3 { facets, vertex_indices, vertices, eps, bbox };

    let worst = input
        .par_iter()
        .map(|&p| hull.max_violation(p))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if worst > eps {
        return Err(HullError::Numerical(format!(
            "input point lies {worst:e} outside the hull (tolerance {eps:e})"
        )));
    }
    Ok(hull)
}

fn initial_simplex(p: &[Point3], rank_tol: f64) -> Result<[u32; 4], HullError> {
    let mut extremes = [0usize; 6];
    for (i, q) in p.iter().enumerate() {
        for a in 0..3 {
            if q.axis(a) < p[extremes[2 * a]].axis(a) {
                extremes[2 * a] = i;
            }
            if q.axis(a) > p[extremes[2 * a + 1]].axis(a) {
                extremes[2 * a + 1] = i;
            }
        }
    }
    let mut best = (0, 0, -1.0);
    for &i in &extremes {
        for &j in &extremes {
            let d = p[i].dist_squared(p[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (a, b) = (best.0, best.1);
    if best.2.sqrt() <= rank_tol {
        return Err(HullError::Degenerate("all points coincide".into()));
    }
    let ab = p[b] - p[a];
    let ab_len = ab.norm();
    let (c, dc) = (0..p.len())
        .map(|i| (i, ab.cross(p[i] - p[a]).norm() / ab_len))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    if dc <= rank_tol {
        return Err(HullError::Degenerate("points are collinear".into()));
    }
    let n = ab.cross(p[c] - p[a]);
    let n = n / n.norm();
    let (d, dd) = (0..p.len())
        .map(|i| (i, n.dot(p[i] - p[a]).abs()))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    if dd <= rank_tol {
        return Err(HullError::Degenerate("points are coplanar".into()));
    }
    Ok([a as u32, b as u32, c as u32, d as u32])
}

fn tetrahedron(p: &[Point3], s: [u32; 4]) -> Vec<Face> {
    let tris = [[s[0], s[1], s[2]], [s[0], s[3], s[1]], [s[1], s[3], s[2]], [s[2], s[3], s[0]]];
    let mut faces: Vec<Face> = tris
        .iter()
        .map(|&t| {
            let mut v = t;
            let (n, off) = plane(p, v);
            let apex = s.iter().find(|x| !t.contains(x)).copied().expect("apex");
            let (normal, offset) = if n.dot(p[apex as usize]) - off > 0.0 {
                v.swap(1, 2);
                plane(p, v)
            } else {
                (n, off)
            };
            Face { v, normal, offset, nb: [0; 3], outside: Vec::new(), alive: true }
        })
        .collect();
    for f in 0..4 {
        for e in 0..3 {
            let (u, v) = (faces[f].v[e], faces[f].v[(e + 1) % 3]);
            let g = (0..4)
                .find(|&g| g != f && (0..3).any(|j| faces[g].v[j] == v && faces[g].v[(j + 1) % 3] == u))
                .expect("closed tetrahedron");
            faces[f].nb[e] = g as u32;
        }
    }
    faces
}
