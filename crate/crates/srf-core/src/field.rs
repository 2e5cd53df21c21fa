//! The learned object representation: positional encoding, conditioning
//! features, the implicit SDF network and the rendering network.
//!
//! Both networks exist in two forms that must agree exactly: a plain `f64`
//! forward pass used for rendering, meshing and evaluation, and a taped form
//! (see [`TapedField`]) used during training so gradients reach every
//! parameter, including the conditioning.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::geom::{project_point, Aabb, Camera, SimilarityTransform, Vec3};
use crate::math;
use crate::rng::DetRng;

/// Sin/cos frequency encoding applied componentwise to 3D points.
#[derive(Clone, Copy, Debug)]
pub struct PositionalEncodingConfig {
    /// Number of frequency octaves.
    pub frequencies: usize,
    /// Base angular frequency multiplying the raw coordinate.
    pub omega: f64,
    /// Prepend the raw point to the encoding.
    pub include_input: bool,
}

impl Default for PositionalEncodingConfig {
    fn default() -> Self {
        PositionalEncodingConfig { frequencies: 6, omega: math::PI, include_input: true }
    }
}

impl PositionalEncodingConfig {
    pub fn output_width(&self) -> usize {
        3 * (2 * self.frequencies + usize::from(self.include_input))
    }
}

/// Encode a point as `[x?, sin(2^l w x), cos(2^l w x) for l in 0..L]`,
/// each block applied componentwise.
pub fn positional_encode(cfg: &PositionalEncodingConfig, x: Vec3) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.output_width());
    positional_encode_into(cfg, x, &mut out);
    out
}

pub fn positional_encode_into(cfg: &PositionalEncodingConfig, x: Vec3, out: &mut Vec<f64>) {
    out.clear();
    if cfg.include_input {
        out.extend_from_slice(&[x.x, x.y, x.z]);
    }
    let mut freq = cfg.omega;
    for _ in 0..cfg.frequencies {
        out.extend_from_slice(&[
            math::sin(freq * x.x),
            math::sin(freq * x.y),
            math::sin(freq * x.z),
        ]);
        out.extend_from_slice(&[
            math::cos(freq * x.x),
            math::cos(freq * x.y),
            math::cos(freq * x.z),
        ]);
        freq *= 2.0;
    }
}

/// Implicit (SDF) network shape.
#[derive(Clone, Copy, Debug)]
pub struct ImplicitNetConfig {
    /// Hidden softplus layers before the two linear heads.
    pub layers: usize,
    pub hidden: usize,
    /// Width of the geometry feature emitted by the second head.
    pub geo_features: usize,
    /// Concatenate the network input onto the middle hidden layer.
    pub skip: bool,
}

impl Default for ImplicitNetConfig {
    fn default() -> Self {
        ImplicitNetConfig { layers: 8, hidden: 256, geo_features: 256, skip: false }
    }
}

/// Rendering (color) network shape.
#[derive(Clone, Copy, Debug)]
pub struct RenderNetConfig {
    pub layers: usize,
    pub hidden: usize,
}

impl Default for RenderNetConfig {
    fn default() -> Self {
        RenderNetConfig { layers: 2, hidden: 256 }
    }
}

/// Full shape of one object field.
#[derive(Clone, Copy, Debug)]
pub struct FieldConfig {
    pub encoding: PositionalEncodingConfig,
    pub implicit: ImplicitNetConfig,
    pub render: RenderNetConfig,
    /// Instance latent width.
    pub instance_features: usize,
    /// Pixel-aligned feature width.
    pub pixel_features: usize,
    /// Trainable feature image resolution (width, height).
    pub feature_res: (usize, usize),
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            encoding: PositionalEncodingConfig::default(),
            implicit: ImplicitNetConfig::default(),
            render: RenderNetConfig::default(),
            instance_features: 32,
            pixel_features: 16,
            feature_res: (16, 16),
        }
    }
}

impl FieldConfig {
    /// Small configuration that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        FieldConfig {
            encoding: PositionalEncodingConfig::default(),
            implicit: ImplicitNetConfig { layers: 8, hidden: 64, geo_features: 32, skip: false },
            render: RenderNetConfig { layers: 2, hidden: 64 },
            instance_features: 32,
            pixel_features: 16,
            feature_res: (16, 16),
        }
    }

    pub fn implicit_input_width(&self) -> usize {
        self.encoding.output_width() + self.instance_features + self.pixel_features
    }

    pub fn render_input_width(&self) -> usize {
        3 + 3 + 3 + self.implicit.geo_features
    }
}

/// Bilinear sample of the feature image: four texel indices and weights.
///
/// `None` when the point is behind the camera or projects out of frame.
fn bilinear_footprint(
    camera: &Camera,
    feature_res: (usize, usize),
    x: Vec3,
) -> Option<[(usize, f64); 4]> {
    let (u, v) = project_point(camera, x).ok()?;
    if u < 0.0 || u > camera.width as f64 || v < 0.0 || v > camera.height as f64 {
        return None;
    }
    let (fw, fh) = feature_res;
    // Texel centers tile the camera image uniformly; the border half-texel is
    // extended affinely so linear functions are reproduced exactly.
    let uf = u * fw as f64 / camera.width as f64 - 0.5;
    let vf = v * fh as f64 / camera.height as f64 - 0.5;
    let a0 = (math::floor(uf) as isize).clamp(0, fw as isize - 2) as usize;
    let b0 = (math::floor(vf) as isize).clamp(0, fh as isize - 2) as usize;
    let du = uf - a0 as f64;
    let dv = vf - b0 as f64;
    Some([
        (b0 * fw + a0, (1.0 - du) * (1.0 - dv)),
        (b0 * fw + a0 + 1, du * (1.0 - dv)),
        ((b0 + 1) * fw + a0, (1.0 - du) * dv),
        ((b0 + 1) * fw + a0 + 1, du * dv),
    ])
}

/// Trainable conditioning: the instance latent and the pixel-aligned feature
/// image with the camera it is registered to.
///
/// The camera lives in the same coordinate system the field is evaluated in
/// (canonical object space); see [`camera_in_canonical`] for moving a
/// world-space view camera into canonical space.
pub struct Conditioning<'a> {
    pub latent: &'a [f64],
    pub feature_image: &'a [f64],
    pub feature_res: (usize, usize),
    pub feature_width: usize,
    pub camera: &'a Camera,
}

/// Pixel-aligned feature for a point, with an out-of-view flag for points
/// behind the camera or projecting out of frame (those get the zero vector).
pub fn pixel_feature(cond: &Conditioning<'_>, x: Vec3) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; cond.feature_width];
    let oov = !pixel_feature_into(cond, x, &mut out);
    (out, oov)
}

fn pixel_feature_into(cond: &Conditioning<'_>, x: Vec3, out: &mut [f64]) -> bool {
    out.fill(0.0);
    let Some(corners) = bilinear_footprint(cond.camera, cond.feature_res, x) else {
        return false;
    };
    let d = cond.feature_width;
    for (texel, w) in corners {
        let block = &cond.feature_image[texel * d..(texel + 1) * d];
        for (o, f) in out.iter_mut().zip(block) {
            *o += w * f;
        }
    }
    true
}

/// Parameter ids of one object field inside its store.
#[derive(Clone, Debug)]
pub struct FieldParams {
    pub implicit_w: Vec<ParamId>,
    pub implicit_b: Vec<ParamId>,
    pub sdf_head_w: ParamId,
    pub sdf_head_b: ParamId,
    pub geo_head_w: ParamId,
    pub geo_head_b: ParamId,
    pub render_w: Vec<ParamId>,
    pub render_b: Vec<ParamId>,
    pub render_out_w: ParamId,
    pub render_out_b: ParamId,
    /// Unconstrained scalar; density sharpness is `softplus(raw) + 1e-4`.
    pub beta_raw: ParamId,
    pub latent: ParamId,
    pub feature_image: ParamId,
}

/// All trainable state for one object plus its canonical bounding box and
/// the conditioning camera.
pub struct ObjectField {
    pub config: FieldConfig,
    pub store: ParamStore,
    pub params: FieldParams,
    /// Camera the feature image is registered to, in canonical coordinates.
    pub camera: Camera,
    pub bbox: Aabb,
}

/// Raised when a forward pass produces non-finite activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Divergence;

pub const BETA_FLOOR: f64 = 1e-4;
pub const BETA_INIT: f64 = 0.1;

fn init_linear(
    store: &mut ParamStore,
    rng: &mut DetRng,
    name_w: &str,
    name_b: &str,
    rows: usize,
    cols: usize,
) -> (ParamId, ParamId) {
    let bound = math::sqrt(1.0 / cols as f64);
    let w: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    let b = vec![0.0; rows];
    (store.add_param(name_w, rows, cols, w), store.add_param(name_b, rows, 1, b))
}

impl ObjectField {
    /// Fresh field with uniform +-sqrt(1/fan_in) weights. The SDF head bias
    /// starts at +0.3 so the initial volume is mostly empty rather than
    /// opaque.
    pub fn init(config: FieldConfig, camera: Camera, seed: u64) -> ObjectField {
        let mut rng = DetRng::new(seed);
        let mut store = ParamStore::new();
        let in_w = config.implicit_input_width();
        let hid = config.implicit.hidden;
        let skip_at = skip_layer(&config.implicit);

        let mut implicit_w = Vec::new();
        let mut implicit_b = Vec::new();
        for l in 0..config.implicit.layers {
            let cols = if l == 0 {
                in_w
            } else if Some(l) == skip_at {
                hid + in_w
            } else {
                hid
            };
            let name_w = alloc::format!("implicit.w{l}");
            let name_b = alloc::format!("implicit.b{l}");
            let (w, b) = init_linear(&mut store, &mut rng, &name_w, &name_b, hid, cols);
            implicit_w.push(w);
            implicit_b.push(b);
        }
        let (sdf_head_w, sdf_head_b) =
            init_linear(&mut store, &mut rng, "sdf_head.w", "sdf_head.b", 1, hid);
        let (geo_head_w, geo_head_b) = init_linear(
            &mut store,
            &mut rng,
            "geo_head.w",
            "geo_head.b",
            config.implicit.geo_features,
            hid,
        );
        store.data_mut(sdf_head_b)[0] = 0.3;

        let rin = config.render_input_width();
        let rhid = config.render.hidden;
        let mut render_w = Vec::new();
        let mut render_b = Vec::new();
        for l in 0..config.render.layers {
            let cols = if l == 0 { rin } else { rhid };
            let name_w = alloc::format!("render.w{l}");
            let name_b = alloc::format!("render.b{l}");
            let (w, b) = init_linear(&mut store, &mut rng, &name_w, &name_b, rhid, cols);
            render_w.push(w);
            render_b.push(b);
        }
        let (render_out_w, render_out_b) =
            init_linear(&mut store, &mut rng, "render_out.w", "render_out.b", 3, rhid);

        let beta_raw =
            store.add_param("beta_raw", 1, 1, vec![math::softplus_inv(BETA_INIT - BETA_FLOOR)]);
        let latent: Vec<f64> =
            (0..config.instance_features).map(|_| rng.uniform(-0.1, 0.1)).collect();
        let latent = store.add_param("latent", config.instance_features, 1, latent);
        let (fw, fh) = config.feature_res;
        let feature: Vec<f64> =
            (0..fw * fh * config.pixel_features).map(|_| rng.uniform(-0.1, 0.1)).collect();
        let feature_image =
            store.add_param("feature_image", fw * fh, config.pixel_features, feature);

        ObjectField {
            config,
            store,
            params: FieldParams {
                implicit_w,
                implicit_b,
                sdf_head_w,
                sdf_head_b,
                geo_head_w,
                geo_head_b,
                render_w,
                render_b,
                render_out_w,
                render_out_b,
                beta_raw,
                latent,
                feature_image,
            },
            camera,
            bbox: Aabb::CANONICAL,
        }
    }

    pub fn beta(&self) -> f64 {
        math::softplus(self.store.data(self.params.beta_raw)[0]) + BETA_FLOOR
    }

    pub fn conditioning(&self) -> Conditioning<'_> {
        Conditioning {
            latent: self.store.data(self.params.latent),
            feature_image: self.store.data(self.params.feature_image),
            feature_res: self.config.feature_res,
            feature_width: self.config.pixel_features,
            camera: &self.camera,
        }
    }

    fn input_vector(&self, x: Vec3) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.config.implicit_input_width());
        positional_encode_into(&self.config.encoding, x, &mut input);
        input.extend_from_slice(self.store.data(self.params.latent));
        let start = input.len();
        input.resize(start + self.config.pixel_features, 0.0);
        let cond = self.conditioning();
        pixel_feature_into(&cond, x, &mut input[start..]);
        input
    }

    fn hidden_activations(&self, x: Vec3) -> Vec<f64> {
        let input = self.input_vector(x);
        let skip_at = skip_layer(&self.config.implicit);
        let mut h = input.clone();
        for l in 0..self.config.implicit.layers {
            if Some(l) == skip_at {
                h.extend_from_slice(&input);
            }
            h = linear_softplus(
                self.store.data(self.params.implicit_w[l]),
                self.store.data(self.params.implicit_b[l]),
                &h,
            );
        }
        h
    }

    /// SDF value and geometry feature at a canonical-space point.
    pub fn implicit_forward(&self, x: Vec3) -> Result<(f64, Vec<f64>), Divergence> {
        let h = self.hidden_activations(x);
        let s = affine_scalar(
            self.store.data(self.params.sdf_head_w),
            self.store.data(self.params.sdf_head_b)[0],
            &h,
        );
        let z = affine(
            self.store.data(self.params.geo_head_w),
            self.store.data(self.params.geo_head_b),
            &h,
        );
        if !s.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Divergence);
        }
        Ok((s, z))
    }

    /// SDF value only (skips the geometry head).
    pub fn sdf(&self, x: Vec3) -> f64 {
        let h = self.hidden_activations(x);
        affine_scalar(
            self.store.data(self.params.sdf_head_w),
            self.store.data(self.params.sdf_head_b)[0],
            &h,
        )
    }

    /// Unit normal by central differences of the SDF, with a degenerate flag
    /// when the gradient magnitude is below 1e-8 (the fallback is +z).
    pub fn normal(&self, x: Vec3, eps: f64) -> (Vec3, bool) {
        finite_difference_normal(|p| self.sdf(p), x, eps)
    }

    /// Color for a canonical point/direction/normal/feature tuple. Inputs
    /// `d` and `n` are expected unit-length; output channels are in (0, 1).
    pub fn render_forward(&self, x: Vec3, d: Vec3, n: Vec3, z: &[f64]) -> [f64; 3] {
        let mut h = Vec::with_capacity(self.config.render_input_width());
        h.extend_from_slice(&[x.x, x.y, x.z, d.x, d.y, d.z, n.x, n.y, n.z]);
        h.extend_from_slice(z);
        for l in 0..self.config.render.layers {
            h = linear_softplus(
                self.store.data(self.params.render_w[l]),
                self.store.data(self.params.render_b[l]),
                &h,
            );
        }
        let o = affine(
            self.store.data(self.params.render_out_w),
            self.store.data(self.params.render_out_b),
            &h,
        );
        [math::sigmoid(o[0]), math::sigmoid(o[1]), math::sigmoid(o[2])]
    }
}

fn skip_layer(cfg: &ImplicitNetConfig) -> Option<usize> {
    if cfg.skip && cfg.layers >= 3 {
        Some(cfg.layers / 2)
    } else {
        None
    }
}

// Products accumulate via math::dot4 and the bias lands last, exactly like
// the taped matvec + add path, so both forwards agree bit for bit.
fn linear_softplus(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let rows = b.len();
    let cols = x.len();
    debug_assert_eq!(w.len(), rows * cols);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(math::softplus(math::dot4(&w[r * cols..(r + 1) * cols], x) + b[r]));
    }
    out
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let rows = b.len();
    let cols = x.len();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(math::dot4(&w[r * cols..(r + 1) * cols], x) + b[r]);
    }
    out
}

fn affine_scalar(w: &[f64], b: f64, x: &[f64]) -> f64 {
    math::dot4(w, x) + b
}

/// Central-difference unit normal of an arbitrary scalar field.
///
/// Normalization guards the denominator with the same 1e-16 epsilon the
/// taped path uses, so training and inference agree bit for bit away from
/// the degenerate branch.
pub fn finite_difference_normal<F: Fn(Vec3) -> f64>(f: F, x: Vec3, eps: f64) -> (Vec3, bool) {
    let g = Vec3::new(
        f(x + Vec3::new(eps, 0.0, 0.0)) - f(x - Vec3::new(eps, 0.0, 0.0)),
        f(x + Vec3::new(0.0, eps, 0.0)) - f(x - Vec3::new(0.0, eps, 0.0)),
        f(x + Vec3::new(0.0, 0.0, eps)) - f(x - Vec3::new(0.0, 0.0, eps)),
    );
    let sq = g.dot(g);
    if sq < 1e-16 {
        (Vec3::new(0.0, 0.0, 1.0), true)
    } else {
        (g * (1.0 / math::sqrt(sq + 1e-16)), false)
    }
}

/// Move a world-space camera into the canonical frame of an instance, so
/// projecting a canonical point through it matches projecting the instanced
/// world point through the original camera.
pub fn camera_in_canonical(camera: &Camera, instance: &SimilarityTransform) -> Camera {
    let rotation = instance.rotation.transpose().mul_mat(&camera.rotation);
    let position = crate::geom::apply_similarity(instance, camera.position, true);
    Camera {
        fx: camera.fx,
        fy: camera.fy,
        cx: camera.cx,
        cy: camera.cy,
        width: camera.width,
        height: camera.height,
        rotation,
        position,
    }
}

/// The same networks staged on a tape for training. All parameter leaves are
/// loaded once; per-point forwards then share them.
pub struct TapedField {
    pub config: FieldConfig,
    implicit_w: Vec<Var>,
    implicit_b: Vec<Var>,
    sdf_head_w: Var,
    sdf_head_b: Var,
    geo_head_w: Var,
    geo_head_b: Var,
    render_w: Vec<Var>,
    render_b: Vec<Var>,
    render_out_w: Var,
    render_out_b: Var,
    beta_raw: Var,
    latent: Var,
    feature_image: Var,
    camera: Camera,
}

impl TapedField {
    pub fn stage(tape: &mut Tape, field: &ObjectField) -> TapedField {
        Self::stage_with(tape, field.config, &field.params, &field.store, &field.camera)
    }

    /// Stage with an explicit parameter store (the store need not live inside
    /// an [`ObjectField`], e.g. under gradient checking).
    pub fn stage_with(
        tape: &mut Tape,
        config: FieldConfig,
        p: &FieldParams,
        s: &ParamStore,
        camera: &Camera,
    ) -> TapedField {
        TapedField {
            config,
            implicit_w: p.implicit_w.iter().map(|&id| tape.param(s, id)).collect(),
            implicit_b: p.implicit_b.iter().map(|&id| tape.param(s, id)).collect(),
            sdf_head_w: tape.param(s, p.sdf_head_w),
            sdf_head_b: tape.param(s, p.sdf_head_b),
            geo_head_w: tape.param(s, p.geo_head_w),
            geo_head_b: tape.param(s, p.geo_head_b),
            render_w: p.render_w.iter().map(|&id| tape.param(s, id)).collect(),
            render_b: p.render_b.iter().map(|&id| tape.param(s, id)).collect(),
            render_out_w: tape.param(s, p.render_out_w),
            render_out_b: tape.param(s, p.render_out_b),
            beta_raw: tape.param(s, p.beta_raw),
            latent: tape.param(s, p.latent),
            feature_image: tape.param(s, p.feature_image),
            camera: camera.clone(),
        }
    }

    /// Density sharpness beta = softplus(raw) + floor, as a tape variable.
    pub fn beta(&self, tape: &mut Tape) -> Var {
        let sp = tape.softplus(self.beta_raw);
        let floor = tape.scalar(BETA_FLOOR);
        tape.add(sp, floor)
    }

    /// Network input [gamma(x), latent, F_pix(x)]; the pixel feature keeps
    /// gradient flow into the feature image through the bilinear weights.
    fn input(&self, tape: &mut Tape, x: Vec3) -> Var {
        let enc = positional_encode(&self.config.encoding, x);
        let enc = tape.constant(&enc);
        let with_latent = tape.concat(enc, self.latent);
        let d = self.config.pixel_features;
        let fpix = match bilinear_footprint(&self.camera, self.config.feature_res, x) {
            Some(corners) => {
                let mut acc: Option<Var> = None;
                for (texel, w) in corners {
                    let block = tape.slice(self.feature_image, texel * d, d);
                    let wv = tape.scalar(w);
                    let term = tape.mul(block, wv);
                    acc = Some(match acc {
                        Some(a) => tape.add(a, term),
                        None => term,
                    });
                }
                acc.expect("bilinear footprint has four corners")
            }
            None => tape.constant(&vec![0.0; d]),
        };
        tape.concat(with_latent, fpix)
    }

    fn hidden(&self, tape: &mut Tape, x: Vec3) -> Var {
        let input = self.input(tape, x);
        let skip_at = skip_layer(&self.config.implicit);
        let mut h = input;
        for l in 0..self.config.implicit.layers {
            if Some(l) == skip_at {
                h = tape.concat(h, input);
            }
            let lin = tape.matvec(self.implicit_w[l], h);
            let lin = tape.add(lin, self.implicit_b[l]);
            h = tape.softplus(lin);
        }
        h
    }

    /// SDF value and geometry feature, both scalar/vector tape variables.
    pub fn implicit(&self, tape: &mut Tape, x: Vec3) -> (Var, Var) {
        let h = self.hidden(tape, x);
        let s = tape.matvec(self.sdf_head_w, h);
        let s = tape.add(s, self.sdf_head_b);
        let z = tape.matvec(self.geo_head_w, h);
        let z = tape.add(z, self.geo_head_b);
        (s, z)
    }

    /// SDF value only; used by the finite-difference normal probes.
    pub fn sdf(&self, tape: &mut Tape, x: Vec3) -> Var {
        let h = self.hidden(tape, x);
        let s = tape.matvec(self.sdf_head_w, h);
        tape.add(s, self.sdf_head_b)
    }

    /// Central-difference normal (six extra SDF evaluations, all on tape so
    /// gradients flow through them), normalized with a guarded denominator.
    /// Returns a length-3 variable.
    pub fn normal(&self, tape: &mut Tape, x: Vec3, eps: f64) -> Var {
        let mut diffs = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut e = Vec3::ZERO;
            match axis {
                0 => e.x = eps,
                1 => e.y = eps,
                _ => e.z = eps,
            }
            let plus = self.sdf(tape, x + e);
            let minus = self.sdf(tape, x - e);
            diffs.push(tape.sub(plus, minus));
        }
        let gx = diffs[0];
        let gxy = tape.concat(gx, diffs[1]);
        let g = tape.concat(gxy, diffs[2]);
        let sq = tape.dot(g, g);
        let guard = tape.scalar(1e-16);
        let sq = tape.add(sq, guard);
        let norm = tape.sqrt(sq);
        tape.div(g, norm)
    }

    /// Color head over [x, d, n, z]; sigmoid output per channel.
    pub fn render(&self, tape: &mut Tape, x: Vec3, d: Vec3, n: Var, z: Var) -> Var {
        let xd = tape.constant(&[x.x, x.y, x.z, d.x, d.y, d.z]);
        let xdn = tape.concat(xd, n);
        let mut h = tape.concat(xdn, z);
        for l in 0..self.config.render.layers {
            let lin = tape.matvec(self.render_w[l], h);
            let lin = tape.add(lin, self.render_b[l]);
            h = tape.softplus(lin);
        }
        let o = tape.matvec(self.render_out_w, h);
        let o = tape.add(o, self.render_out_b);
        tape.sigmoid(o)
    }
}
