//! Losses, the two-stage curriculum, supervision sampling, the synthetic
//! ground-truth generator, and the per-object training loop.
//!
//! Stage One applies only the direct SDF loss; Stage Two linearly ramps the
//! color, depth, and normal rendering losses on top of it. Everything is
//! driven by one seeded RNG, so a (config, scene, seed) triple reproduces the
//! run bit for bit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{AdamConfig, Tape, Var};
use crate::field::{camera_in_canonical, FieldConfig, ObjectField, TapedField};
use crate::geom::{ray_aabb_intersect, Aabb, Camera, Mat3, Ray, SimilarityTransform, Vec3};
use crate::math;
use crate::render::{sdf_to_density_taped, stratified_samples, Lighting};
use crate::rng::DetRng;
use crate::sdf::{build_sdf_grid, sample_sdf_grid, AnalyticSdf, SdfGrid};

/// Base weight and ablation multiplier for one loss term.
#[derive(Clone, Copy, Debug)]
pub struct WeightKnob {
    pub base: f64,
    pub multiplier: f64,
}

impl Default for WeightKnob {
    fn default() -> Self {
        WeightKnob { base: 1.0, multiplier: 1.0 }
    }
}

/// Loss weights; the multipliers are the x1/x5/x10 ablation knobs.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub sdf: f64,
    pub rgb: WeightKnob,
    pub depth: WeightKnob,
    pub normal: WeightKnob,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            sdf: 1.0,
            rgb: WeightKnob::default(),
            depth: WeightKnob::default(),
            normal: WeightKnob::default(),
        }
    }
}

/// When Stage Two begins: a fixed epoch or a fraction of the budget.
#[derive(Clone, Copy, Debug)]
pub enum StageTwoStart {
    Epoch(usize),
    Fraction(f64),
}

/// Two-stage schedule: 2D losses are zero through epoch `lambda0`, then ramp
/// linearly with slope `eta` per epoch up to per-loss caps.
#[derive(Clone, Copy, Debug)]
pub struct CurriculumSchedule {
    pub stage_two_start: StageTwoStart,
    /// Ramp slope per epoch; `None` picks 2*max_cap/(epochs - lambda0) so the
    /// slowest cap saturates halfway through Stage Two.
    pub eta: Option<f64>,
    pub cap_rgb: f64,
    pub cap_depth: f64,
    pub cap_normal: f64,
    pub capped: bool,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            stage_two_start: StageTwoStart::Fraction(0.5),
            eta: None,
            cap_rgb: 1.0,
            cap_depth: 0.5,
            cap_normal: 0.5,
            capped: true,
        }
    }
}

impl CurriculumSchedule {
    pub fn resolve_lambda0(&self, epochs: usize) -> usize {
        match self.stage_two_start {
            StageTwoStart::Epoch(e) => e,
            StageTwoStart::Fraction(f) => (epochs as f64 * f) as usize,
        }
    }

    pub fn resolve_eta(&self, epochs: usize) -> f64 {
        match self.eta {
            Some(e) => e,
            None => {
                let lambda0 = self.resolve_lambda0(epochs);
                let remaining = epochs.saturating_sub(lambda0).max(1);
                let max_cap = self.cap_rgb.max(self.cap_depth).max(self.cap_normal);
                2.0 * max_cap / remaining as f64
            }
        }
    }
}

/// Weights actually applied at one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveWeights {
    pub sdf: f64,
    pub rgb: f64,
    pub depth: f64,
    pub normal: f64,
}

impl EffectiveWeights {
    pub fn any_2d(&self) -> bool {
        self.rgb > 0.0 || self.depth > 0.0 || self.normal > 0.0
    }
}

/// The SDF weight is constant; each 2D weight is 0 through `lambda0` and
/// `min(cap, eta*(epoch - lambda0)) * base * multiplier` afterwards.
pub fn curriculum_weights(
    schedule: &CurriculumSchedule,
    weights: &LossWeights,
    epochs: usize,
    epoch: usize,
) -> EffectiveWeights {
    let lambda0 = schedule.resolve_lambda0(epochs);
    let eta = schedule.resolve_eta(epochs);
    let ramp = |cap: f64, knob: &WeightKnob| {
        if epoch <= lambda0 {
            0.0
        } else {
            let r = eta * (epoch - lambda0) as f64;
            let r = if schedule.capped { r.min(cap) } else { r };
            r * knob.base * knob.multiplier
        }
    };
    EffectiveWeights {
        sdf: weights.sdf,
        rgb: ramp(schedule.cap_rgb, &weights.rgb),
        depth: ramp(schedule.cap_depth, &weights.depth),
        normal: ramp(schedule.cap_normal, &weights.normal),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrainError {
    CountMismatch { pred: usize, truth: usize },
    NoViews,
    NoVisiblePixels,
    BadObjectIndex(usize),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::CountMismatch { pred, truth } => {
                write!(f, "prediction/truth count mismatch: {pred} vs {truth}")
            }
            TrainError::NoViews => write!(f, "training needs at least one view"),
            TrainError::NoVisiblePixels => write!(f, "object is not visible in any view"),
            TrainError::BadObjectIndex(i) => write!(f, "scene has no object at index {i}"),
        }
    }
}

/// L1 sum and mean between predicted and true SDF values.
pub fn loss_3d(pred: &[f64], truth: &[f64]) -> Result<(f64, f64), TrainError> {
    if pred.len() != truth.len() {
        return Err(TrainError::CountMismatch { pred: pred.len(), truth: truth.len() });
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| math::abs(t - p)).sum();
    let mean = if pred.is_empty() { 0.0 } else { sum / pred.len() as f64 };
    Ok((sum, mean))
}

/// Photometric L1 summed over rays and channels; the flag marks an empty
/// (unsupervised) batch.
pub fn loss_rgb(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> (f64, bool) {
    let sum = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            math::abs(t[0] - p[0]) + math::abs(t[1] - p[1]) + math::abs(t[2] - p[2])
        })
        .sum();
    (sum, pred.is_empty())
}

/// Squared depth error and the two-part normal error (componentwise L1 of the
/// raw rendered normal plus |1 - dot| against its normalized form), summed
/// over rays.
pub fn loss_geometric(
    pred_depth: &[f64],
    gt_depth: &[f64],
    pred_normal: &[Vec3],
    gt_normal: &[Vec3],
) -> (f64, f64) {
    let l_d: f64 =
        pred_depth.iter().zip(gt_depth).map(|(p, t)| (t - p) * (t - p)).sum();
    let mut l_n = 0.0;
    for (p, t) in pred_normal.iter().zip(gt_normal) {
        l_n += math::abs(t.x - p.x) + math::abs(t.y - p.y) + math::abs(t.z - p.z);
        let unit = *p * (1.0 / math::sqrt(p.dot(*p) + 1e-16));
        l_n += math::abs(1.0 - t.dot(unit));
    }
    (l_d, l_n)
}

/// Where true SDF values come from during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupervisionSource {
    /// Exact analytic oracle.
    Analytic,
    /// Trilinear interpolation of a voxelized grid, mirroring a dataset
    /// pipeline where only a discretized SDF exists.
    Grid { resolution: usize },
}

/// Supervision point set with true SDF values.
#[derive(Clone, Debug)]
pub struct SupervisionSet {
    pub points: Vec<Vec3>,
    pub values: Vec<f64>,
}

/// `n_uniform` points uniform in the box plus `n_near` surface points with an
/// isotropic Gaussian offset of `band`; true values from the analytic oracle
/// or the grid.
pub fn sample_supervision_points(
    sdf: &AnalyticSdf,
    grid: Option<&SdfGrid>,
    bbox: Aabb,
    n_uniform: usize,
    n_near: usize,
    band: f64,
    rng: &mut DetRng,
) -> SupervisionSet {
    let mut points = Vec::with_capacity(n_uniform + n_near);
    for _ in 0..n_uniform {
        points.push(Vec3::new(
            rng.uniform(bbox.min.x, bbox.max.x),
            rng.uniform(bbox.min.y, bbox.max.y),
            rng.uniform(bbox.min.z, bbox.max.z),
        ));
    }
    for _ in 0..n_near {
        // Exact SDFs project onto the surface in one Newton step; a second
        // step cleans up the finite-difference normal error.
        let mut p = Vec3::new(
            rng.uniform(bbox.min.x, bbox.max.x),
            rng.uniform(bbox.min.y, bbox.max.y),
            rng.uniform(bbox.min.z, bbox.max.z),
        );
        for _ in 0..3 {
            let s = sdf.eval(p);
            if math::abs(s) < 1e-9 {
                break;
            }
            p = p - sdf.normal(p) * s;
        }
        p = p + Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * band;
        points.push(p);
    }
    let values = points
        .iter()
        .map(|&p| match grid {
            Some(g) => sample_sdf_grid(g, p),
            None => sdf.eval(p),
        })
        .collect();
    SupervisionSet { points, values }
}

/// One rendered supervision view: camera, color, depth (0 = invalid), world
/// unit normals, and a per-pixel object id (`NO_HIT` for background).
#[derive(Clone, Debug)]
pub struct GroundTruthView {
    pub camera: Camera,
    pub color: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub normal: Vec<[f64; 3]>,
    pub mask: Vec<u8>,
}

pub const NO_HIT: u8 = u8::MAX;

impl GroundTruthView {
    pub fn masked_pixels(&self, object: u8) -> Vec<u32> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == object)
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// An analytic ground-truth scene: canonical SDFs placed by similarity
/// transforms.
#[derive(Clone, Debug)]
pub struct SceneObject {
    pub id: String,
    pub sdf: AnalyticSdf,
    pub bbox: Aabb,
    pub transform: SimilarityTransform,
}

#[derive(Clone, Debug)]
pub struct TrainScene {
    pub objects: Vec<SceneObject>,
    pub lighting: Lighting,
    pub background: [f64; 3],
}

impl TrainScene {
    /// World-space signed distance of the whole scene and the owning object.
    fn world_sdf(&self, p: Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, obj) in self.objects.iter().enumerate() {
            let pc = crate::geom::apply_similarity(&obj.transform, p, true);
            let s = obj.sdf.eval(pc) * obj.transform.scale;
            if s < best.0 {
                best = (s, i);
            }
        }
        best
    }

    pub fn world_bounds(&self) -> Aabb {
        let mut bounds: Option<Aabb> = None;
        for obj in &self.objects {
            for corner in 0..8 {
                let c = Vec3::new(
                    if corner & 1 == 0 { obj.bbox.min.x } else { obj.bbox.max.x },
                    if corner & 2 == 0 { obj.bbox.min.y } else { obj.bbox.max.y },
                    if corner & 4 == 0 { obj.bbox.min.z } else { obj.bbox.max.z },
                );
                let w = crate::geom::apply_similarity(&obj.transform, c, false);
                bounds = Some(match bounds {
                    Some(b) => Aabb::new(b.min.min(w), b.max.max(w)),
                    None => Aabb::new(w, w),
                });
            }
        }
        bounds.expect("scene has objects")
    }
}

/// Sphere-trace the analytic scene into a full supervision view.
///
/// Per pixel: march to |s| < 1e-5 (max 256 steps) inside the scene bounds;
/// depth is the hit distance, the normal comes from central differences of
/// the world SDF, color is Lambertian shading of the owning object's albedo,
/// and the mask stores the owning object id.
pub fn sphere_trace_gt(scene: &TrainScene, camera: &Camera) -> GroundTruthView {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let n = w * h;
    let mut view = GroundTruthView {
        camera: camera.clone(),
        color: vec![scene.background; n],
        depth: vec![0.0; n],
        normal: vec![[0.0, 0.0, 0.0]; n],
        mask: vec![NO_HIT; n],
    };
    let bounds = scene.world_bounds();
    for j in 0..h {
        for i in 0..w {
            let idx = j * w + i;
            let ray = camera.pixel_ray(i as u32, j as u32);
            let Some((t_enter, t_exit)) = ray_aabb_intersect(&ray, &bounds) else {
                continue;
            };
            let mut t = t_enter;
            let mut hit = None;
            for _ in 0..256 {
                let p = ray.at(t);
                let (s, obj) = scene.world_sdf(p);
                if math::abs(s) < 1e-5 {
                    hit = Some((t, obj));
                    break;
                }
                t += s;
                if t > t_exit + 0.1 {
                    break;
                }
            }
            let Some((t_hit, obj)) = hit else {
                continue;
            };
            let p = ray.at(t_hit);
            let eps = 1e-5;
            let grad = Vec3::new(
                scene.world_sdf(p + Vec3::new(eps, 0.0, 0.0)).0
                    - scene.world_sdf(p - Vec3::new(eps, 0.0, 0.0)).0,
                scene.world_sdf(p + Vec3::new(0.0, eps, 0.0)).0
                    - scene.world_sdf(p - Vec3::new(0.0, eps, 0.0)).0,
                scene.world_sdf(p + Vec3::new(0.0, 0.0, eps)).0
                    - scene.world_sdf(p - Vec3::new(0.0, 0.0, eps)).0,
            )
            .normalized();
            let object = &scene.objects[obj];
            let pc = crate::geom::apply_similarity(&object.transform, p, true);
            view.depth[idx] = t_hit;
            view.normal[idx] = [grad.x, grad.y, grad.z];
            view.mask[idx] = obj as u8;
            view.color[idx] = scene.lighting.shade(object.sdf.albedo.eval(pc), grad);
        }
    }
    view
}

/// Cameras on a ring around `center`, all looking at it.
pub fn orbit_cameras(
    center: Vec3,
    radius: f64,
    elevation_deg: f64,
    count: usize,
    width: u32,
    height: u32,
    fov_deg: f64,
) -> Vec<Camera> {
    let f = 0.5 * width as f64 / math::tan(0.5 * fov_deg.to_radians());
    let el = elevation_deg.to_radians();
    (0..count)
        .map(|i| {
            let az = 2.0 * math::PI * i as f64 / count as f64;
            let eye = center
                + Vec3::new(
                    radius * math::cos(el) * math::cos(az),
                    radius * math::sin(el),
                    radius * math::cos(el) * math::sin(az),
                );
            Camera::look_at(
                f,
                f,
                width as f64 / 2.0,
                height as f64 / 2.0,
                width,
                height,
                eye,
                center,
                Vec3::new(0.0, 1.0, 0.0),
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rays_per_iteration: usize,
    /// Upper bound on iterations per epoch (the natural count is
    /// ceil(masked pixels / rays)).
    pub max_iterations_per_epoch: usize,
    /// Supervision-point minibatch per iteration.
    pub point_batch: usize,
    pub n_uniform: usize,
    pub n_near: usize,
    pub near_band: f64,
    pub lr: f64,
    pub lr_decay_factor: f64,
    /// Epoch fractions at which the decay factor applies.
    pub lr_decay_at: (f64, f64),
    pub samples_per_ray: usize,
    pub normal_eps: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub schedule: CurriculumSchedule,
    pub supervision: SupervisionSource,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            rays_per_iteration: 64,
            max_iterations_per_epoch: 4,
            point_batch: 512,
            n_uniform: 2000,
            n_near: 2000,
            near_band: 0.05,
            lr: 1e-3,
            lr_decay_factor: 0.2,
            lr_decay_at: (330.0 / 400.0, 370.0 / 400.0),
            samples_per_ray: 24,
            normal_eps: 1e-3,
            seed: 0,
            weights: LossWeights::default(),
            schedule: CurriculumSchedule::default(),
            supervision: SupervisionSource::Analytic,
            field: FieldConfig::desk(),
        }
    }
}

impl TrainConfig {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let d1 = (self.epochs as f64 * self.lr_decay_at.0) as usize;
        let d2 = (self.epochs as f64 * self.lr_decay_at.1) as usize;
        let mut lr = self.lr;
        if epoch >= d1 {
            lr *= self.lr_decay_factor;
        }
        if epoch >= d2 {
            lr *= self.lr_decay_factor;
        }
        lr
    }
}

/// Per-epoch log line; losses are means per supervised unit (point or ray).
#[derive(Clone, Copy, Debug)]
pub struct LossRecord {
    pub epoch: usize,
    pub loss_3d: f64,
    pub loss_rgb: f64,
    pub loss_d: f64,
    pub loss_n: f64,
    pub w_3d: f64,
    pub w_rgb: f64,
    pub w_d: f64,
    pub w_n: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_3d,loss_rgb,loss_d,loss_n,w_3d,w_rgb,w_d,w_n,lr\n");
        for r in &self.records {
            out.push_str(&alloc::format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.loss_3d,
                r.loss_rgb,
                r.loss_d,
                r.loss_n,
                r.w_3d,
                r.w_rgb,
                r.w_d,
                r.w_n,
                r.lr
            ));
        }
        out
    }
}

pub struct TrainResult {
    pub field: ObjectField,
    pub history: LossHistory,
    /// Epoch at which a non-finite loss aborted training; the field carries
    /// the last good epoch's parameters.
    pub diverged_at: Option<usize>,
}

/// One ray of a prepared minibatch, fully in canonical coordinates with
/// world-space compositing carriers.
struct BatchRay {
    direction: Vec3,
    samples: Vec<BatchSample>,
    gt_color: [f64; 3],
    gt_depth: f64,
    gt_normal: Vec3,
}

struct BatchSample {
    point: Vec3,
    t_world: f64,
    delta_world: f64,
    sdf_truth: f64,
}

struct IterationBatch {
    rays: Vec<BatchRay>,
    points: Vec<(Vec3, f64)>,
    rotation: Mat3,
    /// Instance scale; canonical densities divide by it to act on
    /// world-space segment lengths.
    scale: f64,
}

/// Scalar-valued handles to each raw loss term recorded on the tape.
struct TapedLosses {
    total: Var,
    l3d_sum: Var,
    lrgb_sum: Option<Var>,
    ld_sum: Option<Var>,
    ln_sum: Option<Var>,
    n_sdf_terms: usize,
    n_rays: usize,
}

fn prepare_batch(
    scene_obj: &SceneObject,
    views: &[GroundTruthView],
    masked: &[Vec<u32>],
    supervision: &SupervisionSet,
    config: &TrainConfig,
    need_2d: bool,
    rng: &mut DetRng,
) -> IterationBatch {
    // One random view per iteration, rays drawn with replacement from its
    // visible pixels.
    let candidates: Vec<usize> =
        (0..views.len()).filter(|&v| !masked[v].is_empty()).collect();
    let view_idx = candidates[rng.index(candidates.len())];
    let view = &views[view_idx];
    let pixels = &masked[view_idx];
    let tf = &scene_obj.transform;

    let mut rays = Vec::with_capacity(config.rays_per_iteration);
    for _ in 0..config.rays_per_iteration {
        let pix = pixels[rng.index(pixels.len())] as usize;
        let (i, j) = (pix as u32 % view.camera.width, pix as u32 / view.camera.width);
        let world_ray = view.camera.pixel_ray(i, j);
        let origin_c = crate::geom::apply_similarity(tf, world_ray.origin, true);
        let dir_c = tf.rotation.tr_mul_vec(world_ray.direction);
        let canonical_ray = Ray { origin: origin_c, direction: dir_c };
        let Some((tau0, tau1)) = ray_aabb_intersect(&canonical_ray, &scene_obj.bbox) else {
            continue; // visible pixels always hit the box; guard anyway
        };
        let ts = stratified_samples(tau0, tau1, config.samples_per_ray, true, rng);
        let span_end = tau1 * tf.scale;
        let mut samples: Vec<BatchSample> = ts
            .iter()
            .map(|s| {
                let p = canonical_ray.at(s.t);
                let truth = match config.supervision {
                    SupervisionSource::Analytic => scene_obj.sdf.eval(p),
                    SupervisionSource::Grid { .. } => scene_obj.sdf.eval(p),
                };
                BatchSample {
                    point: p,
                    t_world: s.t * tf.scale,
                    delta_world: s.delta * tf.scale,
                    sdf_truth: truth,
                }
            })
            .collect();
        if need_2d {
            // Segment lengths from merged neighbors, final one to span end.
            for k in 0..samples.len() {
                samples[k].delta_world = if k + 1 < samples.len() {
                    samples[k + 1].t_world - samples[k].t_world
                } else {
                    (span_end - samples[k].t_world).max(0.0)
                };
            }
        }
        rays.push(BatchRay {
            direction: dir_c,
            samples,
            gt_color: view.color[pix],
            gt_depth: view.depth[pix],
            gt_normal: Vec3::new(
                view.normal[pix][0],
                view.normal[pix][1],
                view.normal[pix][2],
            ),
        });
    }

    let mut points = Vec::with_capacity(config.point_batch);
    for _ in 0..config.point_batch {
        let k = rng.index(supervision.points.len());
        points.push((supervision.points[k], supervision.values[k]));
    }
    IterationBatch { rays, points, rotation: tf.rotation, scale: tf.scale }
}

/// Record the full weighted loss for one minibatch. Grid-mode ray samples are
/// re-valued through the grid before this call (see `prepare_batch`).
fn build_iteration_loss(
    tape: &mut Tape,
    staged: &TapedField,
    batch: &IterationBatch,
    weights: &EffectiveWeights,
    config: &TrainConfig,
) -> TapedLosses {
    let need_2d = weights.any_2d();
    let mut l3d_sum: Option<Var> = None;
    let mut lrgb_sum: Option<Var> = None;
    let mut ld_sum: Option<Var> = None;
    let mut ln_sum: Option<Var> = None;
    let mut n_sdf_terms = 0usize;

    let rot_flat = tape.constant(&[
        batch.rotation.m[0],
        batch.rotation.m[1],
        batch.rotation.m[2],
        batch.rotation.m[3],
        batch.rotation.m[4],
        batch.rotation.m[5],
        batch.rotation.m[6],
        batch.rotation.m[7],
        batch.rotation.m[8],
    ]);
    let beta = if need_2d { Some(staged.beta(tape)) } else { None };

    let add_abs_term = |tape: &mut Tape, acc: &mut Option<Var>, term: Var| {
        *acc = Some(match *acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    };

    for ray in &batch.rays {
        if !need_2d {
            for s in &ray.samples {
                let pred = staged.sdf(tape, s.point);
                let truth = tape.scalar(s.sdf_truth);
                let diff = tape.sub(truth, pred);
                let term = tape.abs(diff);
                add_abs_term(tape, &mut l3d_sum, term);
                n_sdf_terms += 1;
            }
            continue;
        }

        let beta = beta.expect("beta staged for 2D losses");
        let mut transmittance = tape.scalar(1.0);
        let mut color_acc = tape.constant(&[0.0, 0.0, 0.0]);
        let mut depth_acc = tape.scalar(0.0);
        let mut normal_acc = tape.constant(&[0.0, 0.0, 0.0]);
        let one = tape.scalar(1.0);
        for s in &ray.samples {
            let (pred, z) = staged.implicit(tape, s.point);
            let truth = tape.scalar(s.sdf_truth);
            let diff = tape.sub(truth, pred);
            let term = tape.abs(diff);
            add_abs_term(tape, &mut l3d_sum, term);
            n_sdf_terms += 1;

            let n_c = staged.normal(tape, s.point, config.normal_eps);
            let color = staged.render(tape, s.point, ray.direction, n_c, z);
            let sigma = sdf_to_density_taped(tape, pred, beta);
            // Canonical density on a world segment: sigma_c/scale * delta_w.
            let sd = tape.scalar(s.delta_world / batch.scale);
            let sigma_delta = tape.mul(sigma, sd);
            let neg = tape.neg(sigma_delta);
            let transparency = tape.exp(neg);
            let alpha = tape.sub(one, transparency);
            let w = tape.mul(transmittance, alpha);
            let weighted_color = tape.mul(color, w);
            color_acc = tape.add(color_acc, weighted_color);
            let t_const = tape.scalar(s.t_world);
            let wt = tape.mul(w, t_const);
            depth_acc = tape.add(depth_acc, wt);
            let n_world = tape.matvec(rot_flat, n_c);
            let weighted_n = tape.mul(n_world, w);
            normal_acc = tape.add(normal_acc, weighted_n);
            transmittance = tape.mul(transmittance, transparency);
        }

        // L_rgb: per-channel L1 against the view color.
        let gt_c = tape.constant(&ray.gt_color);
        let cdiff = tape.sub(gt_c, color_acc);
        let cabs = tape.abs(cdiff);
        let csum = tape.sum(cabs);
        add_abs_term(tape, &mut lrgb_sum, csum);

        // L_d: squared error on composited depth.
        let gt_d = tape.scalar(ray.gt_depth);
        let ddiff = tape.sub(gt_d, depth_acc);
        let dsq = tape.square(ddiff);
        add_abs_term(tape, &mut ld_sum, dsq);

        // L_n: L1 on the raw composited normal plus the angular term against
        // its normalized form.
        let gt_n = tape.constant(&[ray.gt_normal.x, ray.gt_normal.y, ray.gt_normal.z]);
        let ndiff = tape.sub(gt_n, normal_acc);
        let nabs = tape.abs(ndiff);
        let nl1 = tape.sum(nabs);
        let nsq = tape.dot(normal_acc, normal_acc);
        let guard = tape.scalar(1e-16);
        let nsq = tape.add(nsq, guard);
        let nnorm = tape.sqrt(nsq);
        let n_unit = tape.div(normal_acc, nnorm);
        let ndot = tape.dot(gt_n, n_unit);
        let angular = tape.sub(one, ndot);
        let angular = tape.abs(angular);
        let ln_term = tape.add(nl1, angular);
        add_abs_term(tape, &mut ln_sum, ln_term);
    }

    for (p, truth) in &batch.points {
        let pred = staged.sdf(tape, *p);
        let tv = tape.scalar(*truth);
        let diff = tape.sub(tv, pred);
        let term = tape.abs(diff);
        add_abs_term(tape, &mut l3d_sum, term);
        n_sdf_terms += 1;
    }

    let l3d = l3d_sum.unwrap_or_else(|| tape.scalar(0.0));
    let w3d = tape.scalar(weights.sdf);
    let mut total = tape.mul(w3d, l3d);
    if let Some(l) = lrgb_sum {
        let w = tape.scalar(weights.rgb);
        let term = tape.mul(w, l);
        total = tape.add(total, term);
    }
    if let Some(l) = ld_sum {
        let w = tape.scalar(weights.depth);
        let term = tape.mul(w, l);
        total = tape.add(total, term);
    }
    if let Some(l) = ln_sum {
        let w = tape.scalar(weights.normal);
        let term = tape.mul(w, l);
        total = tape.add(total, term);
    }
    TapedLosses {
        total,
        l3d_sum: l3d,
        lrgb_sum,
        ld_sum,
        ln_sum,
        n_sdf_terms,
        n_rays: batch.rays.len(),
    }
}

/// Train one object of the scene against its views.
///
/// Per iteration: a 64-ray batch from one random view plus a supervision
/// point minibatch; losses weighted by the curriculum; one Adam step. The
/// learning rate decays by the configured factor at the two schedule points.
/// A non-finite loss aborts with the parameters of the last completed epoch.
pub fn train_object(
    scene: &TrainScene,
    object_index: usize,
    views: &[GroundTruthView],
    config: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    let obj = scene.objects.get(object_index).ok_or(TrainError::BadObjectIndex(object_index))?;
    if views.is_empty() {
        return Err(TrainError::NoViews);
    }
    let masked: Vec<Vec<u32>> =
        views.iter().map(|v| v.masked_pixels(object_index as u8)).collect();
    let total_masked: usize = masked.iter().map(|m| m.len()).sum();
    if total_masked == 0 {
        return Err(TrainError::NoVisiblePixels);
    }

    let mut rng = DetRng::new(config.seed);
    let init_seed = rng.fork(1).next_u64();
    let cond_camera = camera_in_canonical(&views[0].camera, &obj.transform);
    let mut field = ObjectField::init(config.field, cond_camera, init_seed);
    field.bbox = obj.bbox;

    let grid = match config.supervision {
        SupervisionSource::Grid { resolution } => {
            Some(build_sdf_grid(&obj.sdf, obj.bbox, resolution))
        }
        SupervisionSource::Analytic => None,
    };
    let mut sup_rng = rng.fork(2);

    let iterations = total_masked
        .div_ceil(config.rays_per_iteration)
        .clamp(1, config.max_iterations_per_epoch);

    let mut batch_rng = rng.fork(3);
    let mut tape = Tape::new();
    let mut history = LossHistory::default();
    let mut snapshot = field.store.snapshot();

    for epoch in 0..config.epochs {
        let weights = curriculum_weights(&config.schedule, &config.weights, config.epochs, epoch);
        let lr = config.lr_at_epoch(epoch);
        let adam = AdamConfig::with_lr(lr);
        let mut epoch_l3d = 0.0;
        let mut epoch_rgb = 0.0;
        let mut epoch_d = 0.0;
        let mut epoch_n = 0.0;

        // Fresh supervision set each epoch; the oracle (analytic or grid)
        // provides truth anywhere, so there is no fixed point set to
        // overfit between.
        let supervision = sample_supervision_points(
            &obj.sdf,
            grid.as_ref(),
            obj.bbox,
            config.n_uniform,
            config.n_near,
            config.near_band,
            &mut sup_rng,
        );

        for _ in 0..iterations {
            let mut batch = prepare_batch(
                obj,
                views,
                &masked,
                &supervision,
                config,
                weights.any_2d(),
                &mut batch_rng,
            );
            if let Some(g) = &grid {
                for ray in &mut batch.rays {
                    for s in &mut ray.samples {
                        s.sdf_truth = sample_sdf_grid(g, s.point);
                    }
                }
            }
            tape.clear();
            let staged = TapedField::stage(&mut tape, &field);
            let losses = build_iteration_loss(&mut tape, &staged, &batch, &weights, config);
            let total_value = tape.scalar_value(losses.total);
            if !total_value.is_finite() {
                field.store.restore(&snapshot);
                return Ok(TrainResult { field, history, diverged_at: Some(epoch) });
            }
            let l3d = tape.scalar_value(losses.l3d_sum);
            epoch_l3d += l3d / losses.n_sdf_terms.max(1) as f64;
            if let Some(v) = losses.lrgb_sum {
                epoch_rgb += tape.scalar_value(v) / losses.n_rays.max(1) as f64;
            }
            if let Some(v) = losses.ld_sum {
                epoch_d += tape.scalar_value(v) / losses.n_rays.max(1) as f64;
            }
            if let Some(v) = losses.ln_sum {
                epoch_n += tape.scalar_value(v) / losses.n_rays.max(1) as f64;
            }
            let grads = tape
                .backward(losses.total, &field.store)
                .expect("loss root is scalar");
            if !grads.is_finite() {
                field.store.restore(&snapshot);
                return Ok(TrainResult { field, history, diverged_at: Some(epoch) });
            }
            field.store.adam_step(&grads, &adam).expect("gradients match store");
        }

        history.records.push(LossRecord {
            epoch,
            loss_3d: epoch_l3d / iterations as f64,
            loss_rgb: epoch_rgb / iterations as f64,
            loss_d: epoch_d / iterations as f64,
            loss_n: epoch_n / iterations as f64,
            w_3d: weights.sdf,
            w_rgb: weights.rgb,
            w_d: weights.depth,
            w_n: weights.normal,
            lr,
        });
        snapshot = field.store.snapshot();
    }
    Ok(TrainResult { field, history, diverged_at: None })
}

/// Max relative error between the taped gradient of one training iteration's
/// weighted loss (all four terms active) and central differences over every
/// parameter, on a batch drawn with the given seed. Exercises the full
/// pipeline: implicit net, finite-difference normals, rendering network,
/// density conversion, and compositing.
pub fn full_loss_gradient_error(
    scene: &TrainScene,
    object_index: usize,
    views: &[GroundTruthView],
    config: &TrainConfig,
    seed: u64,
) -> f64 {
    let obj = &scene.objects[object_index];
    let masked: Vec<Vec<u32>> =
        views.iter().map(|v| v.masked_pixels(object_index as u8)).collect();
    let mut rng = DetRng::new(seed);
    let supervision = sample_supervision_points(
        &obj.sdf,
        None,
        obj.bbox,
        50,
        50,
        config.near_band,
        &mut rng.fork(1),
    );
    let batch =
        prepare_batch(obj, views, &masked, &supervision, config, true, &mut rng.fork(2));
    let weights = EffectiveWeights { sdf: 1.0, rgb: 0.7, depth: 0.4, normal: 0.3 };
    let cond_cam = camera_in_canonical(&views[0].camera, &obj.transform);
    let mut field = ObjectField::init(config.field, cond_cam.clone(), rng.next_u64());
    let mut store = core::mem::take(&mut field.store);
    crate::autodiff::gradient_check(&mut store, 1e-5, |tape, store| {
        let staged = TapedField::stage_with(tape, config.field, &field.params, store, &cond_cam);
        build_iteration_loss(tape, &staged, &batch, &weights, config).total
    })
}

/// Mean |s_hat - s| of the field against the oracle over a fresh held-out
/// supervision set.
pub fn held_out_sdf_error(
    field: &ObjectField,
    sdf: &AnalyticSdf,
    bbox: Aabb,
    n_uniform: usize,
    n_near: usize,
    band: f64,
    seed: u64,
) -> f64 {
    let mut rng = DetRng::new(seed);
    let set = sample_supervision_points(sdf, None, bbox, n_uniform, n_near, band, &mut rng);
    let mut total = 0.0;
    for (p, truth) in set.points.iter().zip(&set.values) {
        total += math::abs(field.sdf(*p) - truth);
    }
    total / set.points.len() as f64
}
