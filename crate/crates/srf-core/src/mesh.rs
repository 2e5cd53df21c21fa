//! Marching-cubes extraction, surface sampling, and scene-level mesh merging.
//!
//! The 256-case table is generated once per extraction rather than
//! transcribed: each cube face contributes marching-squares segments (saddle
//! faces always separate the inside corners, the asymptotic-decider-free
//! choice), segments chain into boundary loops, and loops are fanned into
//! triangles oriented toward positive field values. Because face segments
//! depend only on the face's sign pattern, adjacent cells always stitch and
//! extraction is watertight on sign-consistent fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Aabb, SimilarityTransform, Vec3};
use crate::rng::DetRng;

#[derive(Clone, Debug, Default)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bbox(&self) -> Option<Aabb> {
        let first = *self.positions.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.positions {
            lo = lo.min(*p);
            hi = hi.max(*p);
        }
        Some(Aabb::new(lo, hi))
    }

    pub fn triangle_area(&self, t: [u32; 3]) -> f64 {
        let a = self.positions[t[0] as usize];
        let b = self.positions[t[1] as usize];
        let c = self.positions[t[2] as usize];
        (b - a).cross(c - a).norm() * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles.iter().map(|&t| self.triangle_area(t)).sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshError {
    EmptyMesh,
    CountMismatch { instances: usize, meshes: usize },
}

impl core::fmt::Display for MeshError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MeshError::EmptyMesh => write!(f, "mesh is empty"),
            MeshError::CountMismatch { instances, meshes } => {
                write!(f, "{instances} instances but {meshes} meshes")
            }
        }
    }
}

// Corner i of a cell sits at offset (i&1, i>>1&1, i>>2&1).
const CORNER_OFFSET: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// The 12 cell edges as corner pairs: x-aligned, then y-, then z-aligned.
const EDGE_CORNERS: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Faces as corner cycles, counter-clockwise seen from outside the cell.
const FACE_CYCLES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // -x
    [1, 3, 7, 5], // +x
    [0, 1, 5, 4], // -y
    [2, 6, 7, 3], // +y
    [0, 2, 3, 1], // -z
    [4, 5, 7, 6], // +z
];

fn edge_id(a: usize, b: usize) -> usize {
    EDGE_CORNERS
        .iter()
        .position(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
        .expect("corner pair is a cell edge")
}

/// Triangulation of one sign configuration: triples of edge ids.
fn triangulate_case(case: u8) -> Vec<[usize; 3]> {
    let inside = |c: usize| case >> c & 1 == 1;
    // Directed segments (from_edge -> to_edge): one per maximal cyclic run of
    // inside corners on each face. A diagonal saddle yields two runs, i.e.
    // the inside corners are always separated.
    let mut next = [usize::MAX; 12];
    for cycle in FACE_CYCLES {
        let ins: Vec<bool> = cycle.iter().map(|&c| inside(c)).collect();
        if ins.iter().all(|&b| b) || ins.iter().all(|&b| !b) {
            continue;
        }
        for start in 0..4 {
            if !ins[start] || ins[(start + 3) % 4] {
                continue; // not the beginning of a run
            }
            let mut end = start;
            while ins[(end + 1) % 4] {
                end = (end + 1) % 4;
            }
            let from = edge_id(cycle[(start + 3) % 4], cycle[start]);
            let to = edge_id(cycle[end], cycle[(end + 1) % 4]);
            debug_assert_eq!(next[from], usize::MAX, "edge emitted twice");
            next[from] = to;
        }
    }

    // Chain segments into closed loops over the crossed edges.
    let mut triangles = Vec::new();
    let mut visited = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut cur = next[start];
        while cur != start {
            visited[cur] = true;
            cycle.push(cur);
            cur = next[cur];
        }
        if cycle.len() < 3 {
            continue;
        }
        // Orient the loop so its vector area points toward positive values
        // (outside), using edge midpoints and corner values of -+1.
        let midpoint = |e: usize| {
            let (a, b) = EDGE_CORNERS[e];
            let pa = Vec3::new(
                CORNER_OFFSET[a][0] as f64,
                CORNER_OFFSET[a][1] as f64,
                CORNER_OFFSET[a][2] as f64,
            );
            let pb = Vec3::new(
                CORNER_OFFSET[b][0] as f64,
                CORNER_OFFSET[b][1] as f64,
                CORNER_OFFSET[b][2] as f64,
            );
            (pa + pb) * 0.5
        };
        let mut area = Vec3::ZERO;
        for i in 0..cycle.len() {
            let a = midpoint(cycle[i]);
            let b = midpoint(cycle[(i + 1) % cycle.len()]);
            area = area + a.cross(b);
        }
        let mut gradient = Vec3::ZERO;
        for (c, off) in CORNER_OFFSET.iter().enumerate() {
            let v = if inside(c) { -1.0 } else { 1.0 };
            gradient = gradient
                + Vec3::new(off[0] as f64 - 0.5, off[1] as f64 - 0.5, off[2] as f64 - 0.5) * v;
        }
        if area.dot(gradient) < 0.0 {
            cycle.reverse();
        }
        for i in 1..cycle.len() - 1 {
            triangles.push([cycle[0], cycle[i], cycle[i + 1]]);
        }
    }
    triangles
}

/// All 256 case triangulations.
pub(crate) fn build_case_table() -> Vec<Vec<[usize; 3]>> {
    (0..=255u16).map(|c| triangulate_case(c as u8)).collect()
}

/// Extract the iso-surface of `field` over a `resolution`^3 cell lattice in
/// `bbox`. Vertices are linearly interpolated along sign-crossing edges and
/// shared between adjacent cells; per-vertex normals come from central
/// differences of the evaluator. An all-positive or all-negative field gives
/// an empty mesh.
pub fn marching_cubes<F: Fn(Vec3) -> f64>(
    field: F,
    bbox: Aabb,
    resolution: usize,
    iso: f64,
) -> TriangleMesh {
    assert!(resolution >= 2, "marching cubes needs at least a 2^3 lattice");
    let table = build_case_table();
    let n = resolution + 1;
    let h = bbox.extent() * (1.0 / resolution as f64);
    let corner_pos = |i: usize, j: usize, k: usize| {
        bbox.min + Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z)
    };

    let mut values = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let mut v = field(corner_pos(i, j, k)) - iso;
                // Nudge exact zeros so no vertex lands on a lattice corner.
                if v == 0.0 {
                    v = 1e-9;
                }
                values.push(v);
            }
        }
    }
    let value = |i: usize, j: usize, k: usize| values[(k * n + j) * n + i];

    // Vertex cache per lattice corner and axis.
    let mut edge_vertex = vec![u32::MAX; n * n * n * 3];
    let mut mesh = TriangleMesh { normals: Some(Vec::new()), ..Default::default() };

    let mut cell_corner_vals = [0.0f64; 8];
    for k in 0..resolution {
        for j in 0..resolution {
            for i in 0..resolution {
                let mut case = 0u8;
                for (c, off) in CORNER_OFFSET.iter().enumerate() {
                    let v = value(i + off[0], j + off[1], k + off[2]);
                    cell_corner_vals[c] = v;
                    if v < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut cell_edge_vertex = [u32::MAX; 12];
                for (e, &(a, b)) in EDGE_CORNERS.iter().enumerate() {
                    let needed = table[case as usize].iter().any(|t| t.contains(&e));
                    if !needed {
                        continue;
                    }
                    let (ca, cb) = (CORNER_OFFSET[a], CORNER_OFFSET[b]);
                    let (ia, ja, ka) = (i + ca[0], j + ca[1], k + ca[2]);
                    let axis = if ca[0] != cb[0] {
                        0
                    } else if ca[1] != cb[1] {
                        1
                    } else {
                        2
                    };
                    let key = ((ka * n + ja) * n + ia) * 3 + axis;
                    if edge_vertex[key] == u32::MAX {
                        let va = cell_corner_vals[a];
                        let vb = cell_corner_vals[b];
                        // Keep crossings off the lattice corners so triangles
                        // adjacent to exact surface hits stay above the
                        // degenerate-area threshold.
                        let t = (va / (va - vb)).clamp(1e-4, 1.0 - 1e-4);
                        let pa = corner_pos(ia, ja, ka);
                        let pb = corner_pos(i + cb[0], j + cb[1], k + cb[2]);
                        let p = pa + (pb - pa) * t;
                        edge_vertex[key] = mesh.positions.len() as u32;
                        mesh.positions.push(p);
                    }
                    cell_edge_vertex[e] = edge_vertex[key];
                }
                for tri in &table[case as usize] {
                    mesh.triangles.push([
                        cell_edge_vertex[tri[0]],
                        cell_edge_vertex[tri[1]],
                        cell_edge_vertex[tri[2]],
                    ]);
                }
            }
        }
    }

    // Drop degenerate output (identical indices or vanishing area).
    mesh.triangles.retain(|t| {
        t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && {
            let a = mesh.positions[t[0] as usize];
            let b = mesh.positions[t[1] as usize];
            let c = mesh.positions[t[2] as usize];
            (b - a).cross(c - a).norm() * 0.5 > 1e-12
        }
    });

    let eps = 0.5 * h.x.min(h.y).min(h.z);
    let normals = mesh
        .positions
        .iter()
        .map(|&p| {
            let (n, _) = crate::field::finite_difference_normal(&field, p, eps);
            n
        })
        .collect();
    mesh.normals = Some(normals);
    mesh
}

/// Area-weighted uniform sampling of a mesh surface; normals are the
/// geometric triangle normals.
pub fn sample_surface_points(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut DetRng,
) -> Result<PointCloud, MeshError> {
    if mesh.is_empty() || n == 0 {
        return Err(MeshError::EmptyMesh);
    }
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for &t in &mesh.triangles {
        total += mesh.triangle_area(t);
        cdf.push(total);
    }
    if total <= 0.0 {
        return Err(MeshError::EmptyMesh);
    }
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.uniform(0.0, total);
        let idx = cdf.partition_point(|&acc| acc < pick).min(mesh.triangles.len() - 1);
        let t = mesh.triangles[idx];
        let a = mesh.positions[t[0] as usize];
        let b = mesh.positions[t[1] as usize];
        let c = mesh.positions[t[2] as usize];
        let mut u = rng.next_f64();
        let mut v = rng.next_f64();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push(a + (b - a) * u + (c - a) * v);
        normals.push((b - a).cross(c - a).normalized());
    }
    Ok(PointCloud { points, normals: Some(normals) })
}

/// Transform each mesh by its instance transform and concatenate with
/// re-indexed faces. Normals rotate with the instance.
pub fn merge_scene_meshes(
    transforms: &[SimilarityTransform],
    meshes: &[TriangleMesh],
) -> Result<TriangleMesh, MeshError> {
    if transforms.len() != meshes.len() {
        return Err(MeshError::CountMismatch {
            instances: transforms.len(),
            meshes: meshes.len(),
        });
    }
    let mut out = TriangleMesh { normals: Some(Vec::new()), ..Default::default() };
    for (tf, mesh) in transforms.iter().zip(meshes) {
        let base = out.positions.len() as u32;
        for &p in &mesh.positions {
            out.positions.push(crate::geom::apply_similarity(tf, p, false));
        }
        match (&mut out.normals, &mesh.normals) {
            (Some(dst), Some(src)) => {
                for &nrm in src {
                    dst.push(tf.rotation.mul_vec(nrm));
                }
            }
            (Some(dst), None) => {
                dst.extend(core::iter::repeat(Vec3::new(0.0, 0.0, 1.0)).take(mesh.positions.len()));
            }
            _ => {}
        }
        for &t in &mesh.triangles {
            out.triangles.push([t[0] + base, t[1] + base, t[2] + base]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;
    use crate::math;
    use crate::sdf::Primitive;
    use std::collections::{BTreeMap, BTreeSet};

    #[test]
    fn case_table_is_face_consistent() {
        // Segments on a shared face must depend only on that face's sign
        // pattern: collect, for every case, the boundary edges of the patch
        // restricted to each face and compare against all other cases with
        // the same face pattern.
        let table = build_case_table();
        let mut seen: BTreeMap<(usize, u8), BTreeSet<(usize, usize)>> = BTreeMap::new();
        for case in 0..256usize {
            // Boundary edges of the triangulated patch: edges used an odd
            // number of... in a fan they appear once (boundary) or twice
            // (interior diagonals).
            let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for t in &table[case] {
                for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                    let key = (a.min(b), a.max(b));
                    *counts.entry(key).or_default() += 1;
                }
            }
            for (face_idx, cycle) in FACE_CYCLES.iter().enumerate() {
                let mut pattern = 0u8;
                for (bit, &c) in cycle.iter().enumerate() {
                    if case >> c & 1 == 1 {
                        pattern |= 1 << bit;
                    }
                }
                let face_edges: BTreeSet<usize> = (0..4)
                    .map(|i| edge_id(cycle[i], cycle[(i + 1) % 4]))
                    .collect();
                let on_face: BTreeSet<(usize, usize)> = counts
                    .iter()
                    .filter(|((a, b), &count)| {
                        count == 1 && face_edges.contains(a) && face_edges.contains(b)
                    })
                    .map(|(&k, _)| k)
                    .collect();
                // Normalize the face edge pair to slots within the cycle so
                // patterns compare across faces of different orientation.
                let normalized: BTreeSet<(usize, usize)> = on_face
                    .iter()
                    .map(|&(a, b)| {
                        let slot = |e: usize| {
                            (0..4)
                                .find(|&i| edge_id(cycle[i], cycle[(i + 1) % 4]) == e)
                                .unwrap()
                        };
                        let (sa, sb) = (slot(a), slot(b));
                        (sa.min(sb), sa.max(sb))
                    })
                    .collect();
                let entry = seen.entry((0, pattern)).or_insert_with(|| normalized.clone());
                assert_eq!(
                    *entry, normalized,
                    "case {case} face {face_idx} pattern {pattern:04b} disagrees"
                );
            }
        }
    }

    #[test]
    fn case_table_basic_counts() {
        let table = build_case_table();
        assert!(table[0].is_empty());
        assert!(table[255].is_empty());
        // Single inside corner: one triangle cutting that corner.
        for c in 0..8 {
            assert_eq!(table[1usize << c].len(), 1);
        }
        for case in 0..256 {
            for t in &table[case] {
                assert!(t.iter().all(|&e| e < 12));
            }
        }
    }

    fn closedness(mesh: &TriangleMesh) -> (usize, usize, usize, bool) {
        let mut edge_count: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for t in &mesh.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let closed = edge_count.values().all(|&c| c == 2);
        (mesh.positions.len(), edge_count.len(), mesh.triangles.len(), closed)
    }

    #[test]
    fn constant_positive_field_gives_empty_mesh() {
        let mesh = marching_cubes(|_| 1.0, Aabb::CANONICAL, 8, 0.0);
        assert!(mesh.is_empty());
    }

    #[test]
    fn sphere_vertices_lie_near_surface() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 64, 0.0);
        assert!(!mesh.is_empty());
        let cell = 2.0 / 64.0;
        for v in &mesh.positions {
            assert!((v.norm() - 0.5).abs() < 2.0 * cell, "vertex at {}", v.norm());
        }
        let (_, _, _, closed) = closedness(&mesh);
        assert!(closed, "sphere mesh must be watertight");
    }

    #[test]
    fn box_mesh_is_closed_two_manifold() {
        let shape = Primitive::Box { center: Vec3::ZERO, half_extents: Vec3::new(0.5, 0.4, 0.3) };
        let mesh = marching_cubes(|p| shape.eval(p), Aabb::CANONICAL, 64, 0.0);
        let (v, e, f, closed) = closedness(&mesh);
        assert!(closed);
        assert_eq!(v as i64 - e as i64 + f as i64, 2, "V-E+F: {v}-{e}+{f}");
    }

    #[test]
    fn torus_euler_characteristic_is_zero() {
        let shape =
            Primitive::Torus { center: Vec3::ZERO, major_radius: 0.55, minor_radius: 0.2 };
        let mesh = marching_cubes(|p| shape.eval(p), Aabb::CANONICAL, 64, 0.0);
        let (v, e, f, closed) = closedness(&mesh);
        assert!(closed);
        assert_eq!(v as i64 - e as i64 + f as i64, 0, "V-E+F: {v}-{e}+{f}");
    }

    #[test]
    fn vertices_satisfy_lipschitz_residual_bound() {
        let shapes: Vec<(&str, Primitive)> = vec![
            ("sphere", Primitive::Sphere { center: Vec3::ZERO, radius: 0.5 }),
            ("box", Primitive::Box { center: Vec3::ZERO, half_extents: Vec3::new(0.5, 0.35, 0.45) }),
            ("torus", Primitive::Torus { center: Vec3::ZERO, major_radius: 0.5, minor_radius: 0.22 }),
        ];
        let res = 48;
        let cell = 2.0 / res as f64;
        let bound = cell * math::sqrt(3.0);
        for (name, shape) in shapes {
            let mesh = marching_cubes(|p| shape.eval(p), Aabb::CANONICAL, res, 0.0);
            for v in &mesh.positions {
                assert!(
                    shape.eval(*v).abs() < bound,
                    "{name}: residual {} exceeds {bound}",
                    shape.eval(*v).abs()
                );
            }
        }
    }

    #[test]
    fn refinement_halves_max_residual_on_sphere() {
        let max_residual = |res: usize| {
            let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, res, 0.0);
            mesh.positions.iter().map(|v| (v.norm() - 0.5).abs()).fold(0.0f64, f64::max)
        };
        let coarse = max_residual(24);
        let fine = max_residual(48);
        assert!(fine * 2.0 <= coarse, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn triangle_winding_points_outward() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 32, 0.0);
        let mut bad = 0;
        for t in &mesh.triangles {
            let a = mesh.positions[t[0] as usize];
            let b = mesh.positions[t[1] as usize];
            let c = mesh.positions[t[2] as usize];
            let n = (b - a).cross(c - a);
            let center = (a + b + c) * (1.0 / 3.0);
            if n.dot(center) < 0.0 {
                bad += 1;
            }
        }
        assert_eq!(bad, 0, "{bad}/{} triangles wind inward", mesh.triangles.len());
    }

    #[test]
    fn extraction_is_deterministic() {
        let run = || {
            let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 16, 0.0);
            (mesh.positions.len(), mesh.triangles.clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_triangle_sampling_is_planar() {
        let mesh = TriangleMesh {
            positions: vec![
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(2.0, 0.0, 1.0),
                Vec3::new(0.0, 3.0, 1.0),
            ],
            triangles: vec![[0, 1, 2]],
            normals: None,
        };
        let mut rng = DetRng::new(8);
        let cloud = sample_surface_points(&mesh, 1000, &mut rng).unwrap();
        for p in &cloud.points {
            assert!((p.z - 1.0).abs() < 1e-9);
            assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.x / 2.0 + p.y / 3.0 <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn sampling_is_area_weighted() {
        // Two triangles with areas 1 and 3: the larger gets ~75% of samples.
        let mesh = TriangleMesh {
            positions: vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(12.0, 0.0, 0.0),
                Vec3::new(10.0, 3.0, 0.0),
            ],
            triangles: vec![[0, 1, 2], [3, 4, 5]],
            normals: None,
        };
        let mut rng = DetRng::new(99);
        let n = 100_000;
        let cloud = sample_surface_points(&mesh, n, &mut rng).unwrap();
        let in_second = cloud.points.iter().filter(|p| p.x >= 9.0).count();
        let frac = in_second as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.03, "fraction {frac}");
    }

    #[test]
    fn sampling_is_deterministic_and_empty_mesh_errors() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 12, 0.0);
        let mut r1 = DetRng::new(4);
        let mut r2 = DetRng::new(4);
        let a = sample_surface_points(&mesh, 500, &mut r1).unwrap();
        let b = sample_surface_points(&mesh, 500, &mut r2).unwrap();
        assert_eq!(a.points, b.points);
        let empty = TriangleMesh::default();
        assert_eq!(sample_surface_points(&empty, 10, &mut r1).err(), Some(MeshError::EmptyMesh));
    }

    #[test]
    fn sphere_sampling_matches_uniform_nn_distance() {
        // Median nearest-neighbor distance of mesh-sampled points vs points
        // drawn uniformly on the analytic sphere.
        let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 48, 0.0);
        let n = 10_000;
        let mut rng = DetRng::new(21);
        let sampled = sample_surface_points(&mesh, n, &mut rng).unwrap();
        let mut uniform = Vec::with_capacity(n);
        for _ in 0..n {
            let v = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized();
            uniform.push(v * 0.5);
        }
        let median_nn = |pts: &[Vec3]| {
            let mut ds: Vec<f64> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut best = f64::INFINITY;
                    for (j, q) in pts.iter().enumerate() {
                        if i != j {
                            best = best.min((*p - *q).norm());
                        }
                    }
                    best
                })
                .collect();
            ds.sort_by(f64::total_cmp);
            ds[ds.len() / 2]
        };
        let m_mesh = median_nn(&sampled.points);
        let m_uniform = median_nn(&uniform);
        assert!(
            (m_mesh - m_uniform).abs() / m_uniform < 0.10,
            "median NN {m_mesh} vs uniform {m_uniform}"
        );
    }

    #[test]
    fn merge_identity_is_unchanged() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 8, 0.0);
        let merged =
            merge_scene_meshes(&[SimilarityTransform::IDENTITY], core::slice::from_ref(&mesh))
                .unwrap();
        assert_eq!(merged.positions, mesh.positions);
        assert_eq!(merged.triangles, mesh.triangles);
    }

    #[test]
    fn merge_concatenates_and_shifts_centroid() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 8, 0.0);
        let shift = Vec3::new(1.0, 0.0, 0.0);
        let merged = merge_scene_meshes(
            &[SimilarityTransform::IDENTITY, SimilarityTransform::from_translation(shift)],
            &[mesh.clone(), mesh.clone()],
        )
        .unwrap();
        assert_eq!(merged.positions.len(), 2 * mesh.positions.len());
        assert_eq!(merged.triangles.len(), 2 * mesh.triangles.len());
        let centroid = |pts: &[Vec3]| {
            pts.iter().fold(Vec3::ZERO, |acc, &p| acc + p) * (1.0 / pts.len() as f64)
        };
        let c0 = centroid(&mesh.positions);
        let c1 = centroid(&merged.positions[mesh.positions.len()..]);
        assert!((c1 - c0 - shift).norm() < 1e-12);
        // Face indices of the second copy reference the second vertex block.
        assert!(merged.triangles[mesh.triangles.len()..]
            .iter()
            .all(|t| t.iter().all(|&i| i >= mesh.positions.len() as u32)));
    }

    #[test]
    fn merge_count_mismatch_errors() {
        let mesh = TriangleMesh::default();
        let err = merge_scene_meshes(
            &[SimilarityTransform::IDENTITY, SimilarityTransform::IDENTITY],
            core::slice::from_ref(&mesh),
        )
        .unwrap_err();
        assert_eq!(err, MeshError::CountMismatch { instances: 2, meshes: 1 });
    }

    #[test]
    fn merge_rotates_normals() {
        let mesh = TriangleMesh {
            positions: vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            triangles: vec![[0, 1, 2]],
            normals: Some(vec![Vec3::new(0.0, 0.0, 1.0); 3]),
        };
        let rot = SimilarityTransform::new(
            Mat3::rotation(Vec3::new(1.0, 0.0, 0.0), math::PI / 2.0),
            Vec3::ZERO,
            1.0,
        );
        let merged = merge_scene_meshes(&[rot], core::slice::from_ref(&mesh)).unwrap();
        let n = merged.normals.as_ref().unwrap()[0];
        assert!((n - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
    }
}
