//! Small fixed-size geometry: points, unit quaternions and rigid poses.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point (or vector) in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Squared Euclidean distance. Every nearest-neighbor path in the crate
    /// goes through this one expression so results compare bitwise.
    #[inline]
    pub fn dist_squared(self, o: Point3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn dist(self, o: Point3) -> f64 {
        self.dist_squared(o).sqrt()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn axis(self, a: usize) -> f64 {
        match a {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn min(self, o: Point3) -> Point3 {
        Point3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Point3) -> Point3 {
        Point3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    /// Bounding box of a point set, `None` when empty.
    pub fn from_points(points: &[Point3]) -> Option<Aabb> {
        let first = *points.first()?;
        let (min, max) = points
            .iter()
            .fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        Some(Aabb { min, max })
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// Squared distance from `p` to the box (0 inside).
    #[inline]
    pub fn dist_squared(&self, p: Point3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = p.axis(a);
            let lo = self.min.axis(a);
            let hi = self.max.axis(a);
            if v < lo {
                d += (lo - v) * (lo - v);
            } else if v > hi {
                d += (v - hi) * (v - hi);
            }
        }
        d
    }
}

/// Unit quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Self {
        let a = axis / axis.norm();
        let (s, c) = (angle * 0.5).sin_cos();
        Quaternion::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (yaw * 0.5).sin_cos();
        Quaternion::new(c, 0.0, 0.0, s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * o`.
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotation matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn rotate(&self, v: Point3) -> Point3 {
        let q = Point3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(t)
    }

    pub fn yaw(&self) -> f64 {
        (2.0 * (self.w * self.z + self.x * self.y))
            .atan2(1.0 - 2.0 * (self.y * self.y + self.z * self.z))
    }
}

/// Error raised by [`Pose::new`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseError {
    #[error("quaternion norm {0} is not within 1e-9 of 1")]
    NotUnit(f64),
    #[error("pose contains a non-finite value")]
    NonFinite,
}

/// Tolerance on the quaternion norm accepted by [`Pose::new`].
pub const UNIT_QUATERNION_TOL: f64 = 1e-9;

/// Timestamped rigid transform from sensor frame to world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub t: f64,
    pub translation: Point3,
    pub rotation: Quaternion,
}

impl Pose {
    pub fn new(t: f64, translation: Point3, rotation: Quaternion) -> Result<Self, PoseError> {
        let finite = t.is_finite()
            && translation.is_finite()
            && [rotation.w, rotation.x, rotation.y, rotation.z]
                .iter()
                .all(|v| v.is_finite());
        if !finite {
            return Err(PoseError::NonFinite);
        }
        let n = rotation.norm();
        if (n - 1.0).abs() > UNIT_QUATERNION_TOL {
            return Err(PoseError::NotUnit(n));
        }
        Ok(Pose { t, translation, rotation })
    }

    pub fn identity() -> Self {
        Pose { t: 0.0, translation: Point3::ZERO, rotation: Quaternion::IDENTITY }
    }

    pub fn from_translation(translation: Point3) -> Self {
        Pose { translation, ..Pose::identity() }
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Maps a world point into this pose's frame.
    #[inline]
    pub fn apply_inverse(&self, p: Point3) -> Point3 {
        self.rotation.conjugate().rotate(p - self.translation)
    }

    /// `self ∘ other`: first apply `other`, then `self`. Keeps `self.t`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            t: self.t,
            translation: self.apply(other.translation),
            rotation: self.rotation.mul(&other.rotation).normalized(),
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.conjugate();
        Pose { t: self.t, translation: -r.rotate(self.translation), rotation: r }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_rotation_matches_matrix() {
        let q = Quaternion::from_axis_angle(Point3::new(1.0, 2.0, -0.5), 0.7);
        let m = q.to_matrix();
        let v = Point3::new(0.3, -1.2, 4.0);
        let r = q.rotate(v);
        let rm = Point3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        );
        assert!(r.dist(rm) < 1e-12);
    }

    #[test]
    fn pose_rejects_non_unit_quaternion() {
        let q = Quaternion::new(1.0, 0.1, 0.0, 0.0);
        assert!(matches!(Pose::new(0.0, Point3::ZERO, q), Err(PoseError::NotUnit(_))));
        assert_eq!(
            Pose::new(f64::NAN, Point3::ZERO, Quaternion::IDENTITY),
            Err(PoseError::NonFinite)
        );
    }

    #[test]
    fn yaw_round_trip() {
        for yaw in [-3.0, -1.0, 0.0, 0.5, 3.1] {
            assert!((Quaternion::from_yaw(yaw).yaw() - yaw).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_undoes_pose() {
        let p = Pose::new(
            1.0,
            Point3::new(4.0, -2.0, 1.0),
            Quaternion::from_axis_angle(Point3::new(0.2, 1.0, 0.3), 1.1),
        )
        .unwrap();
        let x = Point3::new(1.5, 2.5, -3.5);
        assert!(p.apply_inverse(p.apply(x)).dist(x) < 1e-12);
        assert!(p.inverse().apply(p.apply(x)).dist(x) < 1e-12);
    }
}
