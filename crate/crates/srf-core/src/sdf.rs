//! Analytic signed distance fields and their voxelized form.
//!
//! These stand in for ground-truth geometry: exact signed distance for
//! sphere/box/torus (union is exact outside, a lower bound inside), a simple
//! albedo model for shading, and a voxel-center grid with trilinear sampling
//! used as the 3D supervision source.

use alloc::vec::Vec;

use crate::geom::{Aabb, Vec3};
use crate::math;

/// Shape of an analytic SDF in canonical coordinates.
#[derive(Clone, Debug)]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half_extents: Vec3 },
    /// Ring around the local y axis: `major_radius` to the tube center,
    /// `minor_radius` of the tube.
    Torus { center: Vec3, major_radius: f64, minor_radius: f64 },
    /// min over members: exact signed distance outside, a conservative lower
    /// bound of the magnitude inside overlapping regions.
    Union(Vec<Primitive>),
}

impl Primitive {
    pub fn eval(&self, p: Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - *center).norm() - radius,
            Primitive::Box { center, half_extents } => {
                let q = (p - *center).abs() - *half_extents;
                let outside = q.max(Vec3::ZERO).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            Primitive::Torus { center, major_radius, minor_radius } => {
                let q = p - *center;
                let ring = math::sqrt(q.x * q.x + q.z * q.z) - major_radius;
                math::sqrt(ring * ring + q.y * q.y) - minor_radius
            }
            Primitive::Union(members) => {
                let mut s = f64::INFINITY;
                for m in members {
                    s = s.min(m.eval(p));
                }
                s
            }
        }
    }

    /// Tight axis-aligned bound of the zero-level set.
    pub fn bounds(&self) -> Aabb {
        match self {
            Primitive::Sphere { center, radius } => {
                Aabb::new(*center - Vec3::splat(*radius), *center + Vec3::splat(*radius))
            }
            Primitive::Box { center, half_extents } => {
                Aabb::new(*center - *half_extents, *center + *half_extents)
            }
            Primitive::Torus { center, major_radius, minor_radius } => {
                let r = major_radius + minor_radius;
                Aabb::new(
                    *center - Vec3::new(r, *minor_radius, r),
                    *center + Vec3::new(r, *minor_radius, r),
                )
            }
            Primitive::Union(members) => {
                let mut it = members.iter();
                let mut b = it.next().expect("empty union").bounds();
                for m in it {
                    b = b.union(&m.bounds());
                }
                b
            }
        }
    }
}

/// Surface color as a function of the canonical-space point.
#[derive(Clone, Debug)]
pub enum Albedo {
    Constant([f64; 3]),
    /// Alternating bands of width `period` along one axis.
    AxisStripe { axis: usize, period: f64, even: [f64; 3], odd: [f64; 3] },
}

impl Albedo {
    pub fn eval(&self, p: Vec3) -> [f64; 3] {
        match self {
            Albedo::Constant(c) => *c,
            Albedo::AxisStripe { axis, period, even, odd } => {
                let band = math::floor(p.get(*axis) / period) as i64;
                if band.rem_euclid(2) == 0 {
                    *even
                } else {
                    *odd
                }
            }
        }
    }
}

/// Analytic ground-truth object: exact geometry plus an albedo.
#[derive(Clone, Debug)]
pub struct AnalyticSdf {
    pub shape: Primitive,
    pub albedo: Albedo,
}

impl AnalyticSdf {
    pub fn new(shape: Primitive, albedo: Albedo) -> Self {
        AnalyticSdf { shape, albedo }
    }

    pub fn sphere(radius: f64, albedo: [f64; 3]) -> Self {
        AnalyticSdf {
            shape: Primitive::Sphere { center: Vec3::ZERO, radius },
            albedo: Albedo::Constant(albedo),
        }
    }

    #[inline]
    pub fn eval(&self, p: Vec3) -> f64 {
        self.shape.eval(p)
    }

    /// Surface normal by central differences (the shapes are Lipschitz-1, so
    /// eps=1e-5 keeps the truncation error far below render tolerances).
    pub fn normal(&self, p: Vec3) -> Vec3 {
        let e = 1e-5;
        Vec3::new(
            self.eval(p + Vec3::new(e, 0.0, 0.0)) - self.eval(p - Vec3::new(e, 0.0, 0.0)),
            self.eval(p + Vec3::new(0.0, e, 0.0)) - self.eval(p - Vec3::new(0.0, e, 0.0)),
            self.eval(p + Vec3::new(0.0, 0.0, e)) - self.eval(p - Vec3::new(0.0, 0.0, e)),
        )
        .normalized()
    }
}

/// Signed distance at the query point; positive outside, negative inside.
#[inline]
pub fn evaluate_analytic_sdf(sdf: &AnalyticSdf, p: Vec3) -> f64 {
    sdf.eval(p)
}

/// Voxel-center SDF grid over a bounding box.
///
/// `values[(k*res + j)*res + i]` holds the signed distance at the center of
/// voxel (i, j, k); x varies fastest.
#[derive(Clone, Debug)]
pub struct SdfGrid {
    pub bbox: Aabb,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(bbox: Aabb, resolution: usize, values: Vec<f64>) -> Self {
        assert!(resolution >= 2, "grid resolution must be at least 2");
        assert_eq!(values.len(), resolution * resolution * resolution);
        SdfGrid { bbox, resolution, values }
    }

    #[inline]
    pub fn spacing(&self) -> Vec3 {
        self.bbox.extent() * (1.0 / self.resolution as f64)
    }

    /// World position of the center of voxel (i, j, k).
    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        self.bbox.min
            + Vec3::new(
                (i as f64 + 0.5) * h.x,
                (j as f64 + 0.5) * h.y,
                (k as f64 + 0.5) * h.z,
            )
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.resolution + j) * self.resolution + i]
    }
}

/// Evaluate the SDF at every voxel center of `resolution`^3 voxels in `bbox`.
pub fn build_sdf_grid(sdf: &AnalyticSdf, bbox: Aabb, resolution: usize) -> SdfGrid {
    assert!(resolution >= 2);
    let mut values = Vec::with_capacity(resolution * resolution * resolution);
    let h = bbox.extent() * (1.0 / resolution as f64);
    for k in 0..resolution {
        let z = bbox.min.z + (k as f64 + 0.5) * h.z;
        for j in 0..resolution {
            let y = bbox.min.y + (j as f64 + 0.5) * h.y;
            for i in 0..resolution {
                let x = bbox.min.x + (i as f64 + 0.5) * h.x;
                values.push(sdf.eval(Vec3::new(x, y, z)));
            }
        }
    }
    SdfGrid { bbox, resolution, values }
}

/// Trilinear interpolation of the voxel-center values.
///
/// Queries outside the bbox clamp to the boundary. Within half a voxel of the
/// boundary the outermost cell is extended affinely, so trilinear functions
/// are reproduced exactly everywhere inside the bbox.
pub fn sample_sdf_grid(grid: &SdfGrid, p: Vec3) -> f64 {
    let p = grid.bbox.clamp(p);
    let h = grid.spacing();
    let res = grid.resolution;
    let mut idx = [0usize; 3];
    let mut frac = [0.0f64; 3];
    let rel = [
        (p.x - grid.bbox.min.x) / h.x - 0.5,
        (p.y - grid.bbox.min.y) / h.y - 0.5,
        (p.z - grid.bbox.min.z) / h.z - 0.5,
    ];
    for a in 0..3 {
        let i0 = math::floor(rel[a]) as isize;
        let i0 = i0.clamp(0, res as isize - 2) as usize;
        idx[a] = i0;
        frac[a] = rel[a] - i0 as f64;
    }
    let (i, j, k) = (idx[0], idx[1], idx[2]);
    let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
    let mut acc = 0.0;
    for dk in 0..2 {
        let wz = if dk == 0 { 1.0 - fz } else { fz };
        for dj in 0..2 {
            let wy = if dj == 0 { 1.0 - fy } else { fy };
            for di in 0..2 {
                let wx = if di == 0 { 1.0 - fx } else { fx };
                acc += wx * wy * wz * grid.value(i + di, j + dj, k + dk);
            }
        }
    }
    acc
}
