//! Slow reference implementations used to cross-check the fast paths.
//!
//! Nothing here touches the k-d tree or the quickhull code: nearest
//! neighbors are linear scans and hull membership is decided by linear
//! programming feasibility (`p` is in `conv(X)` iff some `λ ≥ 0` with
//! `Σλ = 1` has `Σ λ_i x_i = p`). Intended for clouds of a few thousand
//! points at most.

use crate::cloud::PointCloud;
use crate::geom::{Aabb, Point3};
use crate::hull::HullError;
use crate::tcr::{preprocess, Counts, NumeratorMode, Side, TcrError, TcrParams, TcrReport};

/// Residual below which the feasibility problem counts as solved, relative
/// to the bounding-box diagonal of the inputs.
pub const LP_FEASIBILITY_TOL: f64 = 1e-9;

/// Minimum distance from `q` to `points` by linear scan.
pub fn brute_nn_dist(points: &[Point3], q: Point3) -> f64 {
    points.iter().map(|p| q.dist_squared(*p)).fold(f64::INFINITY, f64::min).sqrt()
}

/// Whether `p` is a convex combination of `points`.
pub fn lp_in_hull(points: &[Point3], p: Point3) -> bool {
    lp_residual(points, p) <= LP_FEASIBILITY_TOL
}

/// Smallest L1 constraint violation of the convex-combination system, in
/// units of the bounding-box diagonal (0 when `p` is in the hull).
pub fn lp_residual(points: &[Point3], p: Point3) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let bbox = Aabb::from_points(points).expect("non-empty");
    let both = Aabb { min: bbox.min.min(p), max: bbox.max.max(p) };
    let scale = both.diagonal().max(f64::MIN_POSITIVE);
    let center = (both.min + both.max) * 0.5;
    let q = (p - center) / scale;
    let cols: Vec<[f64; 4]> = points
        .iter()
        .map(|&x| {
            let y = (x - center) / scale - q;
            [y.x, y.y, y.z, 1.0]
        })
        .collect();
    phase_one(&cols, [0.0, 0.0, 0.0, 1.0])
}

/// Phase-one simplex for `A λ = b, λ ≥ 0` with four equality rows and
/// `b ≥ 0`; returns the optimal sum of artificial variables. Bland's rule.
fn phase_one(cols: &[[f64; 4]], b: [f64; 4]) -> f64 {
    const M: usize = 4;
    const PIVOT_TOL: f64 = 1e-12;
    let n = cols.len();
    let width = n + M + 1;
    // Row-major tableau: M constraint rows, rhs in the last column.
    let mut t = vec![0.0; M * width];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..M {
            t[i * width + j] = c[i];
        }
    }
    for i in 0..M {
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = b[i];
    }
    let mut basis: [usize; M] = [n, n + 1, n + 2, n + 3];
    // Reduced costs for minimizing the artificial sum.
    let mut cost = vec![0.0; width];
    for j in 0..width {
        if (n..n + M).contains(&j) {
            continue;
        }
        cost[j] = -(0..M).map(|i| t[i * width + j]).sum::<f64>();
    }

    for _ in 0..100_000 {
        let Some(enter) = (0..n + M).find(|&j| cost[j] < -PIVOT_TOL) else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..M {
            let a = t[i * width + enter];
            if a > PIVOT_TOL {
                let ratio = t[i * width + width - 1] / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr || (ratio == lr && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { break };
        let piv = t[r * width + enter];
        for j in 0..width {
            t[r * width + j] /= piv;
        }
        for i in 0..M {
            if i != r {
                let f = t[i * width + enter];
                if f != 0.0 {
                    for j in 0..width {
                        t[i * width + j] -= f * t[r * width + j];
                    }
                }
            }
        }
        let f = cost[enter];
        for j in 0..width {
            cost[j] -= f * t[r * width + j];
        }
        basis[r] = enter;
    }
    (0..M)
        .filter(|&i| basis[i] >= n)
        .map(|i| t[i * width + width - 1].abs())
        .sum()
}

/// Indices of points that are not convex combinations of the others.
pub fn lp_extreme_points(points: &[Point3]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let others: Vec<Point3> =
                points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &p)| p).collect();
            !lp_in_hull(&others, points[i])
        })
        .collect()
}

/// Exhaustive affine-rank check with the same relative tolerance as the hull.
pub fn brute_is_degenerate(points: &[Point3]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let diag = Aabb::from_points(points).expect("non-empty").diagonal();
    let tol = crate::hull::RANK_TOL * diag;
    let mut far = (0, 0, 0.0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].dist(points[j]);
            if d > far.2 {
                far = (i, j, d);
            }
        }
    }
    if far.2 <= tol {
        return true;
    }
    let (a, b) = (points[far.0], points[far.1]);
    let ab = b - a;
    let (c, dc) = points
        .iter()
        .map(|&p| (p, ab.cross(p - a).norm() / ab.norm()))
        .fold((a, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if dc <= tol {
        return true;
    }
    let n = ab.cross(c - a);
    let n = n / n.norm();
    points.iter().map(|&p| n.dot(p - a).abs()).fold(0.0, f64::max) <= tol
}

/// Reference TCR: same preprocessing as [`crate::tcr::tcr_pair`], then
/// linear-scan nearest neighbors and LP hull membership.
pub fn brute_tcr(s: &PointCloud, t: &PointCloud, params: &TcrParams) -> Result<TcrReport, TcrError> {
    let sv = preprocess(s, params)?;
    let tv = preprocess(t, params)?;
    let degenerate = |side| TcrError::DegenerateHull {
        side,
        source: HullError::Degenerate("rank below 3".into()),
    };
    if brute_is_degenerate(sv.points()) {
        return Err(degenerate(Side::Source));
    }
    if brute_is_degenerate(tv.points()) {
        return Err(degenerate(Side::Target));
    }
    let (h_st, o_st) = brute_direction(sv.points(), tv.points(), params);
    let (h_ts, o_ts) = brute_direction(tv.points(), sv.points(), params);
    TcrReport::from_counts(
        "source",
        "target",
        sv.len(),
        tv.len(),
        Counts { o_st, o_ts, h_st, h_ts },
        *params,
    )
}

fn brute_direction(src: &[Point3], dst: &[Point3], params: &TcrParams) -> (usize, usize) {
    let mut h = 0;
    let mut o = 0;
    for &x in src {
        let inside = lp_in_hull(dst, x);
        let near = brute_nn_dist(dst, x) <= params.tau;
        h += inside as usize;
        o += match params.numerator_mode {
            NumeratorMode::HullRestricted => (inside && near) as usize,
            NumeratorMode::Literal => near as usize,
        };
    }
    (h, o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_on_tetrahedron() {
        let t = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        assert!(lp_in_hull(&t, Point3::new(0.1, 0.1, 0.1)));
        assert!(lp_in_hull(&t, Point3::new(1.0, 0.0, 0.0)));
        assert!(lp_in_hull(&t, Point3::new(0.5, 0.5, 0.0)));
        assert!(!lp_in_hull(&t, Point3::new(1.0, 1.0, 1.0)));
        assert!(!lp_in_hull(&t, Point3::new(0.34, 0.34, 0.34)));
        assert!(lp_in_hull(&t, Point3::new(0.33, 0.33, 0.33)));
        assert_eq!(lp_extreme_points(&t), vec![0, 1, 2, 3]);
    }

    #[test]
    fn lp_on_segment_and_point() {
        let seg = [Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(lp_in_hull(&seg, Point3::new(1.0, 0.0, 0.0)));
        assert!(!lp_in_hull(&seg, Point3::new(1.0, 0.1, 0.0)));
        assert!(!lp_in_hull(&seg, Point3::new(2.5, 0.0, 0.0)));
        assert!(lp_in_hull(&[Point3::new(3.0, 3.0, 3.0)], Point3::new(3.0, 3.0, 3.0)));
        assert!(!lp_in_hull(&[], Point3::ZERO));
    }

    #[test]
    fn rank_check() {
        let flat: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(brute_is_degenerate(&flat));
        let mut solid = flat.clone();
        solid.push(Point3::new(0.0, 0.0, 1.0));
        assert!(!brute_is_degenerate(&solid));
    }
}
