//! Analytic scene specifications: builtin desk scenes, the scene JSON format,
//! and the ground-truth view manifest written by `gen-data`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use srf_core::geom::{Aabb, Camera, Mat3, SimilarityTransform, Vec3};
use srf_core::render::Lighting;
use srf_core::sdf::{Albedo, AnalyticSdf, Primitive};
use srf_core::train::{GroundTruthView, SceneObject, TrainScene, NO_HIT};

use crate::config::DataSection;
use crate::images;

#[derive(Debug)]
pub enum SceneError {
    Io(std::io::Error),
    Parse(String),
    UnknownScene(String),
}

impl std::fmt::Display for SceneError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneError::Io(e) => write!(f, "io error: {e}"),
            SceneError::Parse(m) => write!(f, "scene error: {m}"),
            SceneError::UnknownScene(name) => write!(
                f,
                "unknown scene '{name}' (builtins: sphere, two_spheres, sphere_box; or pass a JSON file)"
            ),
        }
    }
}

impl std::error::Error for SceneError {}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum PrimitiveSpec {
    #[serde(rename = "sphere")]
    Sphere { center: [f64; 3], radius: f64 },
    #[serde(rename = "box")]
    Box { center: [f64; 3], half_extents: [f64; 3] },
    #[serde(rename = "torus")]
    Torus { center: [f64; 3], major_radius: f64, minor_radius: f64 },
    #[serde(rename = "union")]
    Union(Vec<PrimitiveSpec>),
}

impl PrimitiveSpec {
    fn build(&self) -> Primitive {
        match self {
            PrimitiveSpec::Sphere { center, radius } => {
                Primitive::Sphere { center: vec3(center), radius: *radius }
            }
            PrimitiveSpec::Box { center, half_extents } => {
                Primitive::Box { center: vec3(center), half_extents: vec3(half_extents) }
            }
            PrimitiveSpec::Torus { center, major_radius, minor_radius } => Primitive::Torus {
                center: vec3(center),
                major_radius: *major_radius,
                minor_radius: *minor_radius,
            },
            PrimitiveSpec::Union(members) => {
                Primitive::Union(members.iter().map(|m| m.build()).collect())
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum AlbedoSpec {
    #[serde(rename = "constant")]
    Constant([f64; 3]),
    #[serde(rename = "stripe")]
    Stripe { axis: usize, period: f64, even: [f64; 3], odd: [f64; 3] },
}

impl AlbedoSpec {
    fn build(&self) -> Albedo {
        match self {
            AlbedoSpec::Constant(c) => Albedo::Constant(*c),
            AlbedoSpec::Stripe { axis, period, even, odd } => Albedo::AxisStripe {
                axis: *axis,
                period: *period,
                even: *even,
                odd: *odd,
            },
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformSpec {
    pub translation: Option<[f64; 3]>,
    pub rotation_axis: Option<[f64; 3]>,
    pub rotation_deg: Option<f64>,
    pub scale: Option<f64>,
}

impl TransformSpec {
    pub fn build(&self) -> SimilarityTransform {
        let rotation = match (self.rotation_axis, self.rotation_deg) {
            (Some(axis), Some(deg)) => Mat3::rotation(vec3(&axis), deg.to_radians()),
            _ => Mat3::IDENTITY,
        };
        SimilarityTransform {
            rotation,
            translation: self.translation.map(|t| vec3(&t)).unwrap_or(Vec3::ZERO),
            scale: self.scale.unwrap_or(1.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub primitive: PrimitiveSpec,
    pub albedo: AlbedoSpec,
    #[serde(default)]
    pub transform: TransformSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightingSpec {
    pub direction: [f64; 3],
    pub ambient: f64,
    pub diffuse: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub background: Option<[f64; 3]>,
    #[serde(default)]
    pub lighting: Option<LightingSpec>,
    /// Optional camera-ring defaults embedded in the scene.
    #[serde(default)]
    pub camera_ring: Option<CameraRingSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraRingSpec {
    pub views: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
}

impl Default for CameraRingSpec {
    fn default() -> Self {
        let d = DataSection::default();
        CameraRingSpec {
            views: d.views,
            radius: d.ring_radius,
            elevation_deg: d.elevation_deg,
            width: d.width,
            height: d.height,
            fov_deg: d.fov_deg,
        }
    }
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl SceneSpec {
    pub fn build(&self) -> Result<TrainScene, SceneError> {
        if self.objects.is_empty() {
            return Err(SceneError::Parse("scene has no objects".into()));
        }
        if self.objects.len() >= NO_HIT as usize {
            return Err(SceneError::Parse("too many objects".into()));
        }
        let mut objects = Vec::new();
        for spec in &self.objects {
            let shape = spec.primitive.build();
            let bounds = shape.bounds();
            // Objects live in the canonical box [-1,1]^3; their shapes must
            // fit inside it with some margin for the density tails.
            let limit = 0.95;
            if bounds.min.min(Vec3::splat(-limit)) != Vec3::splat(-limit)
                || bounds.max.max(Vec3::splat(limit)) != Vec3::splat(limit)
            {
                return Err(SceneError::Parse(format!(
                    "object '{}' exceeds the canonical box [-{limit},{limit}]^3",
                    spec.id
                )));
            }
            objects.push(SceneObject {
                id: spec.id.clone(),
                sdf: AnalyticSdf::new(shape, spec.albedo.build()),
                bbox: Aabb::CANONICAL,
                transform: spec.transform.build(),
            });
        }
        let lighting = match &self.lighting {
            Some(l) => Lighting {
                direction: vec3(&l.direction).normalized(),
                ambient: l.ambient,
                diffuse: l.diffuse,
            },
            None => Lighting::default(),
        };
        Ok(TrainScene {
            objects,
            lighting,
            background: self.background.unwrap_or([0.5, 0.5, 0.5]),
        })
    }
}

/// Builtin scene by name, or a scene JSON file by path.
pub fn load_scene(name_or_path: &str) -> Result<(SceneSpec, TrainScene), SceneError> {
    let spec = match name_or_path {
        "sphere" => builtin_sphere(),
        "two_spheres" => builtin_two_spheres(),
        "sphere_box" => builtin_sphere_box(),
        path if path.ends_with(".json") => {
            let text = std::fs::read_to_string(path).map_err(SceneError::Io)?;
            serde_json::from_str(&text).map_err(|e| SceneError::Parse(e.to_string()))?
        }
        other => return Err(SceneError::UnknownScene(other.to_string())),
    };
    let scene = spec.build()?;
    Ok((spec, scene))
}

fn builtin_sphere() -> SceneSpec {
    SceneSpec {
        objects: vec![ObjectSpec {
            id: "sphere".into(),
            primitive: PrimitiveSpec::Sphere { center: [0.0; 3], radius: 0.5 },
            albedo: AlbedoSpec::Constant([0.85, 0.15, 0.1]),
            transform: TransformSpec::default(),
        }],
        background: None,
        lighting: None,
        camera_ring: None,
    }
}

fn builtin_two_spheres() -> SceneSpec {
    SceneSpec {
        objects: vec![
            ObjectSpec {
                id: "left".into(),
                primitive: PrimitiveSpec::Sphere { center: [0.0; 3], radius: 0.5 },
                albedo: AlbedoSpec::Constant([0.85, 0.2, 0.1]),
                transform: TransformSpec {
                    translation: Some([-0.9, 0.0, 0.0]),
                    ..Default::default()
                },
            },
            ObjectSpec {
                id: "right".into(),
                primitive: PrimitiveSpec::Sphere { center: [0.0; 3], radius: 0.4 },
                albedo: AlbedoSpec::Constant([0.15, 0.3, 0.85]),
                transform: TransformSpec {
                    translation: Some([0.9, 0.1, 0.0]),
                    ..Default::default()
                },
            },
        ],
        background: None,
        lighting: None,
        camera_ring: None,
    }
}

fn builtin_sphere_box() -> SceneSpec {
    SceneSpec {
        objects: vec![
            ObjectSpec {
                id: "ball".into(),
                primitive: PrimitiveSpec::Sphere { center: [0.0; 3], radius: 0.5 },
                albedo: AlbedoSpec::Constant([0.85, 0.25, 0.15]),
                transform: TransformSpec {
                    translation: Some([-0.8, 0.0, 0.0]),
                    ..Default::default()
                },
            },
            ObjectSpec {
                id: "crate".into(),
                primitive: PrimitiveSpec::Box {
                    center: [0.0; 3],
                    half_extents: [0.45, 0.55, 0.4],
                },
                albedo: AlbedoSpec::Constant([0.2, 0.55, 0.85]),
                transform: TransformSpec {
                    translation: Some([0.85, 0.05, 0.1]),
                    ..Default::default()
                },
            },
        ],
        background: None,
        lighting: None,
        camera_ring: None,
    }
}

/// Cameras for a scene: its embedded ring when present, else the data config.
pub fn scene_cameras(spec: &SceneSpec, scene: &TrainScene, data: &DataSection) -> Vec<Camera> {
    let ring = spec.camera_ring.clone().unwrap_or(CameraRingSpec {
        views: data.views,
        radius: data.ring_radius,
        elevation_deg: data.elevation_deg,
        width: data.width,
        height: data.height,
        fov_deg: data.fov_deg,
    });
    let center = scene.world_bounds().center();
    srf_core::train::orbit_cameras(
        center,
        ring.radius,
        ring.elevation_deg,
        ring.views,
        ring.width,
        ring.height,
        ring.fov_deg,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [f64; 9],
    pub position: [f64; 3],
}

impl CameraJson {
    pub fn from_camera(c: &Camera) -> CameraJson {
        CameraJson {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: c.rotation.m,
            position: [c.position.x, c.position.y, c.position.z],
        }
    }

    pub fn to_camera(&self) -> Camera {
        Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            Mat3 { m: self.rotation }.orthonormalized(),
            Vec3::new(self.position[0], self.position[1], self.position[2]),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestView {
    pub camera: CameraJson,
    pub color: String,
    pub depth: String,
    pub normal: String,
    /// Object id -> mask file.
    pub masks: std::collections::BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub objects: Vec<String>,
    pub views: Vec<ManifestView>,
}

/// Write one ground-truth view's images plus its manifest record.
pub fn write_view_files(
    dir: &Path,
    index: usize,
    view: &GroundTruthView,
    object_ids: &[String],
) -> Result<ManifestView, images::ImageError> {
    let (w, h) = (view.camera.width, view.camera.height);
    let color = format!("view_{index:03}_color.ppm");
    let depth = format!("view_{index:03}_depth.pfm");
    let normal = format!("view_{index:03}_normal.pfm");
    images::write_ppm(&dir.join(&color), w, h, &view.color)?;
    images::write_pfm_gray(&dir.join(&depth), w, h, &view.depth)?;
    images::write_pfm_rgb(&dir.join(&normal), w, h, &view.normal)?;
    let mut masks = std::collections::BTreeMap::new();
    for (obj, id) in object_ids.iter().enumerate() {
        let file = format!("view_{index:03}_mask_{id}.pgm");
        let mask: Vec<bool> = view.mask.iter().map(|&m| m == obj as u8).collect();
        images::write_pgm_mask(&dir.join(&file), w, h, &mask)?;
        masks.insert(id.clone(), file);
    }
    Ok(ManifestView {
        camera: CameraJson::from_camera(&view.camera),
        color,
        depth,
        normal,
        masks,
    })
}

/// Rebuild ground-truth views from a gen-data directory.
pub fn read_views(dir: &Path, manifest: &Manifest) -> Result<Vec<GroundTruthView>, String> {
    let mut views = Vec::new();
    for mv in &manifest.views {
        let camera = mv.camera.to_camera();
        let (w, h, color) =
            images::read_ppm(&dir.join(&mv.color)).map_err(|e| e.to_string())?;
        if (w, h) != (camera.width, camera.height) {
            return Err(format!("color image {} has wrong size", mv.color));
        }
        let (_, _, depth) =
            images::read_pfm_gray(&dir.join(&mv.depth)).map_err(|e| e.to_string())?;
        let (_, _, normal) =
            images::read_pfm_rgb(&dir.join(&mv.normal)).map_err(|e| e.to_string())?;
        let mut mask = vec![NO_HIT; (w * h) as usize];
        for (obj, id) in manifest.objects.iter().enumerate() {
            let file = mv
                .masks
                .get(id)
                .ok_or_else(|| format!("manifest view lacks mask for '{id}'"))?;
            let (_, _, bits) =
                images::read_pgm_mask(&dir.join(file)).map_err(|e| e.to_string())?;
            for (m, b) in mask.iter_mut().zip(&bits) {
                if *b {
                    *m = obj as u8;
                }
            }
        }
        views.push(GroundTruthView { camera, color, depth, normal, mask });
    }
    Ok(views)
}
