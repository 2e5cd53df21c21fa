//! Vector, ray, camera, and transform primitives.
//!
//! Everything is plain `f64` value types; operations are pure and the types
//! are freely shareable across threads.

use crate::math;

/// 3D point or direction in scene units (meters).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    #[inline]
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    #[inline]
    pub fn abs(self) -> Vec3 {
        Vec3::new(math::abs(self.x), math::abs(self.y), math::abs(self.z))
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn get(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl core::ops::Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl core::ops::Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl core::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl core::ops::Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix; used for rotations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3 {
    pub m: [f64; 9],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] };

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 { m: [r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z] }
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3 { m: [c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z] }
    }

    /// Rotation of `angle` radians about a unit `axis` (Rodrigues).
    pub fn rotation(axis: Vec3, angle: f64) -> Mat3 {
        let a = axis.normalized();
        let (s, c) = (math::sin(angle), math::cos(angle));
        let t = 1.0 - c;
        Mat3 {
            m: [
                t * a.x * a.x + c,
                t * a.x * a.y - s * a.z,
                t * a.x * a.z + s * a.y,
                t * a.x * a.y + s * a.z,
                t * a.y * a.y + c,
                t * a.y * a.z - s * a.x,
                t * a.x * a.z - s * a.y,
                t * a.y * a.z + s * a.x,
                t * a.z * a.z + c,
            ],
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z,
        )
    }

    /// Transpose-multiply, i.e. R^T v.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0] * v.x + m[3] * v.y + m[6] * v.z,
            m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += self.m[3 * i + k] * o.m[3 * k + j];
                }
                r[3 * i + j] = acc;
            }
        }
        Mat3 { m: r }
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 { m: [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]] }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    /// Max |(R^T R - I)| entry; 0 for a perfectly orthonormal matrix.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.transpose().mul_mat(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                err = err.max(math::abs(g.m[3 * i + j] - want));
            }
        }
        err
    }

    /// Re-orthonormalize a near-rotation via Gram-Schmidt on the rows.
    pub fn orthonormalized(&self) -> Mat3 {
        let r0 = Vec3::new(self.m[0], self.m[1], self.m[2]).normalized();
        let mut r1 = Vec3::new(self.m[3], self.m[4], self.m[5]);
        r1 = (r1 - r0 * r1.dot(r0)).normalized();
        let r2 = r0.cross(r1);
        Mat3::from_rows(r0, r1, r2)
    }
}

/// Ray with unit direction.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Panics in debug builds if `direction` is not unit length (1e-9).
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        debug_assert!(math::abs(direction.norm() - 1.0) < 1e-9, "ray direction must be unit");
        Ray { origin, direction }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Aabb { min, max }
    }

    /// Canonical object box [-1,1]^3.
    pub const CANONICAL: Aabb =
        Aabb { min: Vec3 { x: -1.0, y: -1.0, z: -1.0 }, max: Vec3 { x: 1.0, y: 1.0, z: 1.0 } };

    #[inline]
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    #[inline]
    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    #[inline]
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        p.max(self.min).min(self.max)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.min(o.min), max: self.max.max(o.max) }
    }
}

/// Slab-method ray/box intersection.
///
/// Returns `(t_near, t_far)` with `0 <= t_near <= t_far` when the ray hits the
/// box at a non-negative parameter; `t_near` is clamped to 0 for origins
/// inside the box. Returns `None` when the box is missed or entirely behind.
pub fn ray_aabb_intersect(ray: &Ray, b: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin.get(axis);
        let d = ray.direction.get(axis);
        let (lo, hi) = (b.min.get(axis), b.max.get(axis));
        if math::abs(d) < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let inv = 1.0 / d;
            let (mut ta, mut tb) = ((lo - o) * inv, (hi - o) * inv);
            if ta > tb {
                core::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
    }
    if t1 <= 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

/// Pinhole camera with a rigid camera-to-world pose.
#[derive(Clone, Debug)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Rotation part of the camera-to-world transform (orthonormal).
    pub rotation: Mat3,
    /// Camera center in world coordinates.
    pub position: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BehindCamera;

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Mat3,
        position: Vec3,
    ) -> Camera {
        debug_assert!(fx > 0.0 && fy > 0.0);
        debug_assert!(rotation.orthonormality_error() < 1e-9, "camera rotation not orthonormal");
        Camera { fx, fy, cx, cy, width, height, rotation, position }
    }

    /// Camera placed at `eye` looking at `target`, +y up (world), +z forward
    /// (camera frame looks down its own +z axis).
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Camera {
        let fwd = (target - eye).normalized();
        let right = fwd.cross(up).normalized();
        let down = fwd.cross(right).normalized();
        // Columns are the camera basis vectors expressed in world coordinates:
        // camera x = right, camera y = down (image v grows downward), camera z = forward.
        let rotation = Mat3::from_cols(right, down, fwd);
        Camera::new(fx, fy, cx, cy, width, height, rotation, eye)
    }

    #[inline]
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.tr_mul_vec(p - self.position)
    }

    #[inline]
    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.position
    }

    /// World ray through the center of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: u32, j: u32) -> Ray {
        let u = i as f64 + 0.5;
        let v = j as f64 + 0.5;
        let dir_cam =
            Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalized();
        Ray::new(self.position, self.rotation.mul_vec(dir_cam))
    }
}

/// Projection onto the image plane: `u = fx*(x/z) + cx`, `v = fy*(y/z) + cy`.
///
/// Rejects points with camera-frame depth `z <= 1e-6`.
pub fn project_point(camera: &Camera, p_world: Vec3) -> Result<(f64, f64), BehindCamera> {
    let pc = camera.world_to_camera(p_world);
    if pc.z <= 1e-6 {
        return Err(BehindCamera);
    }
    Ok((camera.fx * (pc.x / pc.z) + camera.cx, camera.fy * (pc.y / pc.z) + camera.cy))
}

/// Rotation + uniform scale + translation mapping canonical to world space.
#[derive(Clone, Copy, Debug)]
pub struct SimilarityTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
        scale: 1.0,
    };

    pub fn new(rotation: Mat3, translation: Vec3, scale: f64) -> SimilarityTransform {
        debug_assert!(scale > 0.0);
        debug_assert!(math::abs(rotation.det() - 1.0) < 1e-9, "rotation must be proper");
        SimilarityTransform { rotation, translation, scale }
    }

    pub fn from_translation(t: Vec3) -> SimilarityTransform {
        SimilarityTransform { rotation: Mat3::IDENTITY, translation: t, scale: 1.0 }
    }

    /// Composition: `self` after `first` (i.e. apply `first`, then `self`).
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            rotation: self.rotation.mul_mat(&first.rotation),
            translation: self.rotation.mul_vec(first.translation) * self.scale + self.translation,
            scale: self.scale * first.scale,
        }
    }
}

/// Forward: `R*(scale*p) + t`. Inverse: `R^T*(p - t) / scale`.
pub fn apply_similarity(t: &SimilarityTransform, p: Vec3, inverse: bool) -> Vec3 {
    if inverse {
        t.rotation.tr_mul_vec(p - t.translation) * (1.0 / t.scale)
    } else {
        t.rotation.mul_vec(p * t.scale) + t.translation
    }
}
