//! Small rigid-body geometry kit: vectors, unit quaternions and oriented boxes.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn unit_z() -> Self {
        Vec3::new(T::zero(), T::zero(), T::one())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Distance in the horizontal (x, y) plane.
    pub fn horizontal_distance(self, o: Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn abs(self) -> Self {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Quaternion stored as (w, x, y, z).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Quat<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_wxyz(a: [T; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_wxyz(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let n = axis.norm();
        let half = angle / lit(2.0);
        let s = half.sin() / n;
        Quat::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = Vec3::new(self.x, self.y, self.z);
        let two = lit::<T>(2.0);
        let t = u.cross(v).scale(two);
        v + t.scale(self.w) + u.cross(t)
    }

    /// World direction of the body's local +z axis.
    pub fn up_axis(self) -> Vec3<T> {
        let two = lit::<T>(2.0);
        Vec3::new(
            two * (self.x * self.z + self.w * self.y),
            two * (self.y * self.z - self.w * self.x),
            T::one() - two * (self.x * self.x + self.y * self.y),
        )
    }

    /// Rotation matrix, row-major.
    pub fn matrix(self) -> [[T; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = T::one();
        let two = lit::<T>(2.0);
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }
}

impl<T: Scalar> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Angle in radians between two vectors, robust near 0 and pi.
pub fn angle_between<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Tilt in degrees of the body up axis between two orientations.
pub fn tilt_deg<T: Scalar>(reference: Quat<T>, current: Quat<T>) -> T {
    angle_between(reference.up_axis(), current.up_axis()).to_degrees()
}

/// A box with a pose and local half-extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox<T> {
    pub center: Vec3<T>,
    pub orientation: Quat<T>,
    pub half_extents: Vec3<T>,
}

impl<T: Scalar> OrientedBox<T> {
    pub fn new(center: Vec3<T>, orientation: Quat<T>, half_extents: Vec3<T>) -> Self {
        OrientedBox {
            center,
            orientation,
            half_extents,
        }
    }

    /// Half-extents of the world axis-aligned box enclosing this box.
    pub fn world_aabb_half(&self) -> Vec3<T> {
        aabb_half_under(self.orientation.matrix(), self.half_extents)
    }

    /// Expresses a world point in this box's local frame.
    pub fn to_local(&self, p: Vec3<T>) -> Vec3<T> {
        self.orientation.conjugate().rotate(p - self.center)
    }

    pub fn contains_point(&self, p: Vec3<T>) -> bool {
        let l = self.to_local(p).abs();
        let e = self.half_extents;
        l.x <= e.x && l.y <= e.y && l.z <= e.z
    }

    /// Fraction of `other`'s enclosing box (taken in this box's frame) that overlaps this box.
    pub fn overlap_fraction_of(&self, other: &OrientedBox<T>) -> T {
        let rel = self.orientation.conjugate() * other.orientation;
        let half = aabb_half_under(rel.matrix(), other.half_extents);
        let c = self.to_local(other.center);
        let e = self.half_extents;
        let axis = |c: T, h: T, e: T| {
            let lo = (c - h).max(-e);
            let hi = (c + h).min(e);
            (hi - lo).max(T::zero()) / (h + h)
        };
        axis(c.x, half.x, e.x) * axis(c.y, half.y, e.y) * axis(c.z, half.z, e.z)
    }
}

fn aabb_half_under<T: Scalar>(m: [[T; 3]; 3], e: Vec3<T>) -> Vec3<T> {
    let row = |r: [T; 3]| r[0].abs() * e.x + r[1].abs() * e.y + r[2].abs() * e.z;
    Vec3::new(row(m[0]), row(m[1]), row(m[2]))
}

/// Overlap length of the intervals `[a_lo, a_hi]` and `[b_lo, b_hi]`.
pub fn interval_overlap<T: Scalar>(a_lo: T, a_hi: T, b_lo: T, b_hi: T) -> T {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(T::zero())
}
