//! Reconstruction and rendering evaluation: ICP alignment, Chamfer distance,
//! F-Score, normal consistency, and depth/normal image errors.
//!
//! Nearest-neighbor queries use an exact k-d tree with ties broken by lowest
//! point index, verified against the O(n^2) scan in tests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Mat3, Vec3};
use crate::math;
use crate::mesh::{PointCloud, TriangleMesh};
use crate::rng::DetRng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MetricsError {
    EmptyCloud,
    MissingNormals,
    DegenerateBbox,
    EmptyMask,
    ResolutionMismatch,
}

/// Exact nearest-neighbor index over a fixed point set.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    /// Flattened recursion: entries are (point index, split axis).
    order: Vec<(u32, u8)>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vec3]) -> KdTree<'a> {
        assert!(!points.is_empty());
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        let mut order = vec![(u32::MAX, 0u8); points.len()];
        let mut tree = KdTree { points, order: Vec::new() };
        build_node(points, &mut idx, 0, &mut order, 0);
        tree.order = order;
        tree
    }

    /// Index and squared distance of the nearest point; equal distances
    /// resolve to the lowest index.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, self.order.len(), q, &mut best);
        (best.0, best.1)
    }

    fn search(&self, lo: usize, hi: usize, q: Vec3, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let (pi, axis) = self.order[mid];
        let p = self.points[pi as usize];
        let d2 = (q - p).dot(q - p);
        if d2 < best.1 || (d2 == best.1 && (pi as usize) < best.0) {
            *best = (pi as usize, d2);
        }
        let delta = q.get(axis as usize) - p.get(axis as usize);
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        // Visit the far side unless it is strictly outside the best radius,
        // so exact ties still resolve to the lowest index.
        if delta * delta <= best.1 {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build_node(points: &[Vec3], idx: &mut [u32], lo: usize, order: &mut [(u32, u8)], depth: usize) {
    if idx.is_empty() {
        return;
    }
    // Split along the widest axis of this subset.
    let mut min = points[idx[0] as usize];
    let mut max = min;
    for &i in idx.iter() {
        min = min.min(points[i as usize]);
        max = max.max(points[i as usize]);
    }
    let ext = max - min;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |&a, &b| {
        let ka = (points[a as usize].get(axis), a);
        let kb = (points[b as usize].get(axis), b);
        ka.partial_cmp(&kb).expect("finite coordinates")
    });
    order[lo + mid] = (idx[mid], axis as u8);
    let (left, rest) = idx.split_at_mut(mid);
    let right = &mut rest[1..];
    build_node(points, left, lo, order, depth + 1);
    build_node(points, right, lo + mid + 1, order, depth + 1);
}

/// Rigid transform produced by [`icp_align`].
#[derive(Clone, Copy, Debug)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { rotation: Mat3::IDENTITY, translation: Vec3::ZERO };

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub mse: f64,
    pub iterations: usize,
    /// Rank-deficient correspondences: only the centroid translation was
    /// recovered.
    pub degenerate: bool,
}

/// Cyclic Jacobi sweeps on a symmetric 4x4; diagonalizes `a` in place and
/// accumulates rotations into `v`.
fn jacobi_sweeps_sym4(a: &mut [[f64; 4]; 4], v: &mut [[f64; 4]; 4]) {
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..4 {
            for q in (p + 1)..4 {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if math::abs(a[p][q]) < 1e-30 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..4 {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

/// Eigenvector of the largest eigenvalue of a symmetric 4x4.
fn max_eigenvector_sym4(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    jacobi_sweeps_sym4(&mut a, &mut v);
    let mut best = 0;
    for i in 1..4 {
        if a[i][i] > a[best][best] {
            best = i;
        }
    }
    [v[0][best], v[1][best], v[2][best], v[3][best]]
}

/// Eigenvalues of a symmetric 4x4 (unsorted).
fn jacobi_eigenvalues_sym4(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    jacobi_sweeps_sym4(&mut a, &mut v);
    [a[0][0], a[1][1], a[2][2], a[3][3]]
}

fn quaternion_to_rotation(q: [f64; 4]) -> Mat3 {
    let n = math::sqrt(q.iter().map(|x| x * x).sum());
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Mat3 {
        m: [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::ZERO, |acc, &p| acc + p) * (1.0 / points.len() as f64)
}

/// Best rigid transform mapping `src[i]` onto `dst[i]` (Horn's quaternion
/// closed form). Returns `(transform, degenerate)`; degenerate correspondence
/// sets (rank < 2 cross-covariance) fall back to centroid translation.
fn solve_rigid(src: &[Vec3], dst: &[Vec3]) -> (RigidTransform, bool) {
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut s = [[0.0f64; 3]; 3];
    for (p, q) in src.iter().zip(dst) {
        let a = *p - cs;
        let b = *q - cd;
        let av = [a.x, a.y, a.z];
        let bv = [b.x, b.y, b.z];
        for (i, &ai) in av.iter().enumerate() {
            for (j, &bj) in bv.iter().enumerate() {
                s[i][j] += ai * bj;
            }
        }
    }
    // Rank of the cross-covariance via its Gram matrix eigenvalues; the
    // rotation is fully determined only when at least two are non-vanishing.
    let mut gram = [[0.0f64; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += s[k][i] * s[k][j];
            }
            gram[i][j] = acc;
        }
    }
    let scale: f64 = (0..3).map(|i| gram[i][i]).sum();
    let mut evs = jacobi_eigenvalues_sym4(gram);
    evs.sort_by(f64::total_cmp);
    // evs[0] belongs to the zero 4th row/column padding.
    let rank2_ok = scale > 0.0 && evs[2] > 1e-12 * scale;
    if !rank2_ok {
        return (
            RigidTransform { rotation: Mat3::IDENTITY, translation: cd - cs },
            true,
        );
    }

    let n = [
        [
            s[0][0] + s[1][1] + s[2][2],
            s[1][2] - s[2][1],
            s[2][0] - s[0][2],
            s[0][1] - s[1][0],
        ],
        [
            s[1][2] - s[2][1],
            s[0][0] - s[1][1] - s[2][2],
            s[0][1] + s[1][0],
            s[2][0] + s[0][2],
        ],
        [
            s[2][0] - s[0][2],
            s[0][1] + s[1][0],
            -s[0][0] + s[1][1] - s[2][2],
            s[1][2] + s[2][1],
        ],
        [
            s[0][1] - s[1][0],
            s[2][0] + s[0][2],
            s[1][2] + s[2][1],
            -s[0][0] - s[1][1] + s[2][2],
        ],
    ];
    let q = max_eigenvector_sym4(n);
    let rotation = quaternion_to_rotation(q);
    let translation = cd - rotation.mul_vec(cs);
    (RigidTransform { rotation, translation }, false)
}

/// Point-to-point ICP: nearest-neighbor correspondence, rigid solve, repeat
/// until the mean-squared error stops improving by `tol`.
pub fn icp_align(
    src: &PointCloud,
    dst: &PointCloud,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult, MetricsError> {
    if src.points.len() < 3 || dst.points.len() < 3 {
        return Err(MetricsError::EmptyCloud);
    }
    let tree = KdTree::build(&dst.points);
    let mut transform = RigidTransform {
        rotation: Mat3::IDENTITY,
        translation: centroid(&dst.points) - centroid(&src.points),
    };
    let mut prev_mse = f64::INFINITY;
    let mut degenerate = false;
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        let mut matched = Vec::with_capacity(src.points.len());
        let mut mse = 0.0;
        for &p in &src.points {
            let moved = transform.apply(p);
            let (j, d2) = tree.nearest(moved);
            matched.push(dst.points[j]);
            mse += d2;
        }
        mse /= src.points.len() as f64;
        let (solved, dg) = solve_rigid(&src.points, &matched);
        degenerate = dg;
        transform = solved;
        if prev_mse - mse < tol {
            break;
        }
        prev_mse = mse;
    }
    // Final error under the final transform.
    let mut mse = 0.0;
    for &p in &src.points {
        let (_, d2) = tree.nearest(transform.apply(p));
        mse += d2;
    }
    mse /= src.points.len() as f64;
    Ok(IcpResult { transform, mse, iterations, degenerate })
}

/// Per-direction reduction used by the Chamfer distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChamferMode {
    /// Mean squared NN distance per direction, then summed (default).
    MeanPerDirection,
    /// Sum of squared NN distances per direction, then summed.
    SumPerDirection,
}

pub fn chamfer_distance_with_mode(
    a: &PointCloud,
    b: &PointCloud,
    mode: ChamferMode,
) -> Result<f64, MetricsError> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let ta = KdTree::build(&a.points);
    let tb = KdTree::build(&b.points);
    let mut ab = 0.0;
    for &p in &a.points {
        ab += tb.nearest(p).1;
    }
    let mut ba = 0.0;
    for &p in &b.points {
        ba += ta.nearest(p).1;
    }
    Ok(match mode {
        ChamferMode::MeanPerDirection => {
            ab / a.points.len() as f64 + ba / b.points.len() as f64
        }
        ChamferMode::SumPerDirection => ab + ba,
    })
}

/// Symmetric Chamfer distance (mean squared NN distance per direction,
/// summed). Reports multiply by 1e3.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    chamfer_distance_with_mode(a, b, ChamferMode::MeanPerDirection)
}

/// Harmonic mean of precision and recall (percent of points within `tau` of
/// the other cloud); 0 when both vanish.
pub fn f_score(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64, MetricsError> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    assert!(tau > 0.0);
    let tau2 = tau * tau;
    let ta = KdTree::build(&a.points);
    let tb = KdTree::build(&b.points);
    let precision = 100.0
        * a.points.iter().filter(|&&p| tb.nearest(p).1 <= tau2).count() as f64
        / a.points.len() as f64;
    let recall = 100.0
        * b.points.iter().filter(|&&p| ta.nearest(p).1 <= tau2).count() as f64
        / b.points.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean absolute dot product of unit normals at nearest-neighbor
/// correspondences, symmetrized over both directions.
pub fn normal_consistency(pred: &PointCloud, gt: &PointCloud) -> Result<f64, MetricsError> {
    let (pn, gn) = match (&pred.normals, &gt.normals) {
        (Some(p), Some(g)) => (p, g),
        _ => return Err(MetricsError::MissingNormals),
    };
    if pred.points.is_empty() || gt.points.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let tp = KdTree::build(&pred.points);
    let tg = KdTree::build(&gt.points);
    let mut fwd = 0.0;
    for (i, &p) in pred.points.iter().enumerate() {
        let (j, _) = tg.nearest(p);
        fwd += math::abs(pn[i].dot(gn[j]));
    }
    fwd /= pred.points.len() as f64;
    let mut bwd = 0.0;
    for (j, &q) in gt.points.iter().enumerate() {
        let (i, _) = tp.nearest(q);
        bwd += math::abs(gn[j].dot(pn[i]));
    }
    bwd /= gt.points.len() as f64;
    Ok(0.5 * (fwd + bwd))
}

/// Uniform scale about the bbox center making the longest bbox edge exactly
/// 2 scene units. The same (center, scale) must be applied to the paired
/// ground-truth mesh.
pub fn normalize_longest_edge(mesh: &TriangleMesh) -> Result<(TriangleMesh, f64), MetricsError> {
    let bbox = mesh.bbox().ok_or(MetricsError::DegenerateBbox)?;
    let ext = bbox.extent();
    let longest = ext.x.max(ext.y).max(ext.z);
    if longest <= 0.0 {
        return Err(MetricsError::DegenerateBbox);
    }
    let scale = 2.0 / longest;
    let center = bbox.center();
    let mut out = mesh.clone();
    for p in &mut out.positions {
        *p = (*p - center) * scale + center;
    }
    Ok((out, scale))
}

/// Depth L1 after least-squares scale-and-shift alignment to the [0,1]
/// mapped ground truth, plus normal L1 and angular error in degrees over the
/// valid mask.
pub fn depth_normal_error(
    pred_depth: &[f64],
    gt_depth: &[f64],
    pred_normal: &[[f64; 3]],
    gt_normal: &[[f64; 3]],
    mask: &[bool],
) -> Result<(f64, f64, f64), MetricsError> {
    let n = mask.len();
    if pred_depth.len() != n
        || gt_depth.len() != n
        || pred_normal.len() != n
        || gt_normal.len() != n
    {
        return Err(MetricsError::ResolutionMismatch);
    }
    let valid: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if valid.is_empty() {
        return Err(MetricsError::EmptyMask);
    }

    // Ground truth mapped to [0,1] over the valid pixels.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &valid {
        lo = lo.min(gt_depth[i]);
        hi = hi.max(gt_depth[i]);
    }
    let span = hi - lo;
    let gt01: Vec<f64> = valid
        .iter()
        .map(|&i| if span > 0.0 { (gt_depth[i] - lo) / span } else { 0.0 })
        .collect();
    // Closed-form least squares for gt01 ~ a*pred + b.
    let m = valid.len() as f64;
    let sum_p: f64 = valid.iter().map(|&i| pred_depth[i]).sum();
    let sum_g: f64 = gt01.iter().sum();
    let sum_pp: f64 = valid.iter().map(|&i| pred_depth[i] * pred_depth[i]).sum();
    let sum_pg: f64 = valid.iter().zip(&gt01).map(|(&i, &g)| pred_depth[i] * g).sum();
    let det = m * sum_pp - sum_p * sum_p;
    let (a, b) = if math::abs(det) > 1e-12 {
        ((m * sum_pg - sum_p * sum_g) / det, (sum_g * sum_pp - sum_p * sum_pg) / det)
    } else {
        (0.0, sum_g / m)
    };
    let mut depth_l1 = 0.0;
    for (&i, &g) in valid.iter().zip(&gt01) {
        depth_l1 += math::abs(a * pred_depth[i] + b - g);
    }
    depth_l1 /= m;

    let mut normal_l1 = 0.0;
    let mut angular = 0.0;
    for &i in &valid {
        let p = Vec3::new(pred_normal[i][0], pred_normal[i][1], pred_normal[i][2]).normalized();
        let g = Vec3::new(gt_normal[i][0], gt_normal[i][1], gt_normal[i][2]).normalized();
        normal_l1 +=
            (math::abs(p.x - g.x) + math::abs(p.y - g.y) + math::abs(p.z - g.z)) / 3.0;
        angular += math::acos(p.dot(g).clamp(-1.0, 1.0)) * 180.0 / math::PI;
    }
    normal_l1 /= m;
    angular /= m;
    Ok((depth_l1, normal_l1, angular))
}

/// Everything the `eval` interface reports; serializes with stable key order.
#[derive(Clone, Debug)]
pub struct EvalReport {
    /// Chamfer distance in units of 1e-3 squared scene units.
    pub cd: f64,
    /// Percent.
    pub fscore: f64,
    pub nc: f64,
    pub depth_l1: Option<f64>,
    pub normal_l1: Option<f64>,
    /// Degrees.
    pub normal_angular: Option<f64>,
    pub tau: f64,
    pub samples: usize,
    pub normalization: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => alloc::format!("{x}"),
        None => String::from("null"),
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        alloc::format!(
            "{{\n  \"cd\": {},\n  \"fscore\": {},\n  \"nc\": {},\n  \"depth_l1\": {},\n  \"normal_l1\": {},\n  \"normal_angular\": {},\n  \"tau\": {},\n  \"samples\": {},\n  \"normalization\": \"{}\"\n}}\n",
            self.cd,
            self.fscore,
            self.nc,
            fmt_opt(self.depth_l1),
            fmt_opt(self.normal_l1),
            fmt_opt(self.normal_angular),
            self.tau,
            self.samples,
            self.normalization
        )
    }

    pub fn csv_header() -> &'static str {
        "cd,fscore,nc,depth_l1,normal_l1,normal_angular,tau,samples,normalization"
    }

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| alloc::format!("{x}")).unwrap_or_default();
        alloc::format!(
            "{},{},{},{},{},{},{},{},{}",
            self.cd,
            self.fscore,
            self.nc,
            opt(self.depth_l1),
            opt(self.normal_l1),
            opt(self.normal_angular),
            self.tau,
            self.samples,
            self.normalization
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalSettings {
    pub tau: f64,
    pub samples: usize,
    pub chamfer_mode: ChamferMode,
    pub icp_max_iters: usize,
    pub icp_tol: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            tau: 0.02,
            samples: 10_000,
            chamfer_mode: ChamferMode::MeanPerDirection,
            icp_max_iters: 50,
            icp_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Full mesh-vs-mesh evaluation pipeline: normalize the prediction's longest
/// bbox edge to 2 (same transform applied to the ground truth), sample both
/// surfaces, ICP-align the prediction points, then CD / F-Score / NC.
pub fn evaluate_meshes(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    settings: &EvalSettings,
) -> Result<EvalReport, MetricsError> {
    let bbox = pred.bbox().ok_or(MetricsError::DegenerateBbox)?;
    let ext = bbox.extent();
    let longest = ext.x.max(ext.y).max(ext.z);
    if longest <= 0.0 {
        return Err(MetricsError::DegenerateBbox);
    }
    let scale = 2.0 / longest;
    let center = bbox.center();
    let rescale = |mesh: &TriangleMesh| {
        let mut out = mesh.clone();
        for p in &mut out.positions {
            *p = (*p - center) * scale + center;
        }
        out
    };
    let pred_n = rescale(pred);
    let gt_n = rescale(gt);

    // Identical seeds per side: evaluating a mesh against itself samples the
    // exact same cloud twice and reports a true zero.
    let mut rng_pred = DetRng::new(settings.seed);
    let mut rng_gt = DetRng::new(settings.seed);
    let mut pred_cloud =
        crate::mesh::sample_surface_points(&pred_n, settings.samples, &mut rng_pred)
            .map_err(|_| MetricsError::EmptyCloud)?;
    let gt_cloud = crate::mesh::sample_surface_points(&gt_n, settings.samples, &mut rng_gt)
        .map_err(|_| MetricsError::EmptyCloud)?;

    let icp = icp_align(&pred_cloud, &gt_cloud, settings.icp_max_iters, settings.icp_tol)?;
    for p in &mut pred_cloud.points {
        *p = icp.transform.apply(*p);
    }
    if let Some(normals) = &mut pred_cloud.normals {
        for n in normals.iter_mut() {
            *n = icp.transform.rotation.mul_vec(*n);
        }
    }

    let cd = chamfer_distance_with_mode(&pred_cloud, &gt_cloud, settings.chamfer_mode)?;
    let fscore = f_score(&pred_cloud, &gt_cloud, settings.tau)?;
    let nc = normal_consistency(&pred_cloud, &gt_cloud)?;
    Ok(EvalReport {
        cd: cd * 1e3,
        fscore,
        nc,
        depth_l1: None,
        normal_l1: None,
        normal_angular: None,
        tau: settings.tau,
        samples: settings.samples,
        normalization: String::from("longest_edge_2"),
    })
}
