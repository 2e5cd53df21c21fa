//! Scene graphs of placed object fields and the object-level edit language
//! (translate, rotate, duplicate, remove, import).
//!
//! Duplicated instances alias the same field through an `Arc`; edits only
//! touch placement. Imports are resolved by a caller-supplied callback since
//! checkpoint loading lives outside this crate.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::geom::{Aabb, Camera, Mat3, SimilarityTransform, Vec3};
use crate::render::{Instance, VolumeField};

#[derive(Clone)]
pub struct SceneInstance {
    pub id: String,
    pub field: Arc<dyn VolumeField>,
    /// Canonical-space bounding box of the field.
    pub bbox: Aabb,
    pub transform: SimilarityTransform,
}

#[derive(Clone)]
pub struct SceneGraph {
    pub instances: Vec<SceneInstance>,
    pub camera: Camera,
    pub background: [f64; 3],
}

impl SceneGraph {
    pub fn find(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.id == id)
    }

    /// Borrowed instance list in the renderer's format.
    pub fn render_instances(&self) -> Vec<Instance<'_>> {
        self.instances
            .iter()
            .map(|i| Instance { field: i.field.as_ref(), bbox: i.bbox, transform: i.transform })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::new(1.0, 0.0, 0.0),
            Axis::Y => Vec3::new(0.0, 1.0, 0.0),
            Axis::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Extra placement applied to an imported instance, composed onto the
/// transform stored in its source scene.
#[derive(Clone, Copy, Debug, Default)]
pub struct ImportPlacement {
    pub translate: Option<Vec3>,
    pub rotate: Option<(Axis, f64)>,
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EditCommand {
    Translate { id: String, delta: Vec3 },
    Rotate { id: String, axis: Axis, degrees: f64 },
    Duplicate { id: String, new_id: String, delta: Vec3 },
    Remove { id: String },
    Import { id: String, path: String, placement: ImportPlacement },
}

impl PartialEq for ImportPlacement {
    fn eq(&self, other: &Self) -> bool {
        self.translate == other.translate
            && self.rotate == other.rotate
            && self.scale == other.scale
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EditScript {
    pub commands: Vec<EditCommand>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EditError {
    Parse { line: usize, message: String },
    UnknownId(String),
    IdCollision(String),
    ImportFailed(String),
}

impl core::fmt::Display for EditError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EditError::Parse { line, message } => write!(f, "line {line}: {message}"),
            EditError::UnknownId(id) => write!(f, "unknown instance id '{id}'"),
            EditError::IdCollision(id) => write!(f, "instance id '{id}' already exists"),
            EditError::ImportFailed(m) => write!(f, "import failed: {m}"),
        }
    }
}

fn parse_axis(tok: &str, line: usize) -> Result<Axis, EditError> {
    match tok {
        "x" | "X" => Ok(Axis::X),
        "y" | "Y" => Ok(Axis::Y),
        "z" | "Z" => Ok(Axis::Z),
        _ => Err(EditError::Parse { line, message: alloc::format!("bad axis '{tok}'") }),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, EditError> {
    tok.parse::<f64>()
        .map_err(|_| EditError::Parse { line, message: alloc::format!("bad number '{tok}'") })
}

/// One command per line; `#` starts a comment, tokens are
/// whitespace-delimited.
///
/// ```text
/// translate chair1 0.5 0 0
/// rotate sofa z 30
/// duplicate chair1 chair2 1 0 0
/// remove lamp
/// import lamp from scene_b.ssr --translate 1 0 0 --rotate y 45 --scale 1.2
/// ```
pub fn parse_edit_script(text: &str) -> Result<EditScript, EditError> {
    let mut commands = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let err = |message: String| EditError::Parse { line, message };
        let need = |n: usize| -> Result<(), EditError> {
            if tokens.len() == n {
                Ok(())
            } else {
                Err(EditError::Parse {
                    line,
                    message: alloc::format!(
                        "'{}' takes {} arguments, got {}",
                        tokens[0],
                        n - 1,
                        tokens.len() - 1
                    ),
                })
            }
        };
        match tokens[0] {
            "translate" => {
                need(5)?;
                commands.push(EditCommand::Translate {
                    id: tokens[1].to_string(),
                    delta: Vec3::new(
                        parse_f64(tokens[2], line)?,
                        parse_f64(tokens[3], line)?,
                        parse_f64(tokens[4], line)?,
                    ),
                });
            }
            "rotate" => {
                need(4)?;
                commands.push(EditCommand::Rotate {
                    id: tokens[1].to_string(),
                    axis: parse_axis(tokens[2], line)?,
                    degrees: parse_f64(tokens[3], line)?,
                });
            }
            "duplicate" => {
                need(6)?;
                commands.push(EditCommand::Duplicate {
                    id: tokens[1].to_string(),
                    new_id: tokens[2].to_string(),
                    delta: Vec3::new(
                        parse_f64(tokens[3], line)?,
                        parse_f64(tokens[4], line)?,
                        parse_f64(tokens[5], line)?,
                    ),
                });
            }
            "remove" => {
                need(2)?;
                commands.push(EditCommand::Remove { id: tokens[1].to_string() });
            }
            "import" => {
                if tokens.len() < 4 || tokens[2] != "from" {
                    return Err(err("expected: import <id> from <path> [flags]".to_string()));
                }
                let mut placement = ImportPlacement::default();
                let mut k = 4;
                while k < tokens.len() {
                    match tokens[k] {
                        "--translate" => {
                            if k + 3 >= tokens.len() {
                                return Err(err("--translate takes 3 numbers".to_string()));
                            }
                            placement.translate = Some(Vec3::new(
                                parse_f64(tokens[k + 1], line)?,
                                parse_f64(tokens[k + 2], line)?,
                                parse_f64(tokens[k + 3], line)?,
                            ));
                            k += 4;
                        }
                        "--rotate" => {
                            if k + 2 >= tokens.len() {
                                return Err(err("--rotate takes axis and degrees".to_string()));
                            }
                            placement.rotate = Some((
                                parse_axis(tokens[k + 1], line)?,
                                parse_f64(tokens[k + 2], line)?,
                            ));
                            k += 3;
                        }
                        "--scale" => {
                            if k + 1 >= tokens.len() {
                                return Err(err("--scale takes a number".to_string()));
                            }
                            placement.scale = Some(parse_f64(tokens[k + 1], line)?);
                            k += 2;
                        }
                        other => {
                            return Err(err(alloc::format!("unknown import flag '{other}'")));
                        }
                    }
                }
                commands.push(EditCommand::Import {
                    id: tokens[1].to_string(),
                    path: tokens[3].to_string(),
                    placement,
                });
            }
            other => return Err(err(alloc::format!("unknown command '{other}'"))),
        }
    }
    Ok(EditScript { commands })
}

/// Loads an instance (by id) from another scene file for `import` commands.
pub trait ImportResolver {
    fn resolve(&mut self, path: &str, id: &str) -> Result<SceneInstance, EditError>;
}

/// Resolver for scripts without imports.
pub struct NoImports;

impl ImportResolver for NoImports {
    fn resolve(&mut self, path: &str, _id: &str) -> Result<SceneInstance, EditError> {
        Err(EditError::ImportFailed(alloc::format!(
            "no import resolver available for '{path}'"
        )))
    }
}

fn rotation_about(pivot: Vec3, axis: Vec3, radians: f64) -> SimilarityTransform {
    let rotation = Mat3::rotation(axis, radians);
    SimilarityTransform {
        rotation,
        translation: pivot - rotation.mul_vec(pivot),
        scale: 1.0,
    }
}

/// Apply the commands in order; placement edits compose onto instance
/// transforms and rotation pivots at the instance's world bbox center.
pub fn apply_edits(
    scene: &SceneGraph,
    script: &EditScript,
    resolver: &mut dyn ImportResolver,
) -> Result<SceneGraph, EditError> {
    let mut out = scene.clone();
    for cmd in &script.commands {
        match cmd {
            EditCommand::Translate { id, delta } => {
                let idx = out.find(id).ok_or_else(|| EditError::UnknownId(id.clone()))?;
                out.instances[idx].transform.translation =
                    out.instances[idx].transform.translation + *delta;
            }
            EditCommand::Rotate { id, axis, degrees } => {
                let idx = out.find(id).ok_or_else(|| EditError::UnknownId(id.clone()))?;
                let inst = &mut out.instances[idx];
                let pivot =
                    crate::geom::apply_similarity(&inst.transform, inst.bbox.center(), false);
                let rot = rotation_about(pivot, axis.unit(), degrees.to_radians());
                inst.transform = rot.compose(&inst.transform);
            }
            EditCommand::Duplicate { id, new_id, delta } => {
                let idx = out.find(id).ok_or_else(|| EditError::UnknownId(id.clone()))?;
                if out.find(new_id).is_some() {
                    return Err(EditError::IdCollision(new_id.clone()));
                }
                let mut copy = out.instances[idx].clone();
                copy.id = new_id.clone();
                copy.transform.translation = copy.transform.translation + *delta;
                out.instances.push(copy);
            }
            EditCommand::Remove { id } => {
                let idx = out.find(id).ok_or_else(|| EditError::UnknownId(id.clone()))?;
                out.instances.remove(idx);
            }
            EditCommand::Import { id, path, placement } => {
                if out.find(id).is_some() {
                    return Err(EditError::IdCollision(id.clone()));
                }
                let mut inst = resolver.resolve(path, id)?;
                inst.id = id.clone();
                if let Some(s) = placement.scale {
                    inst.transform.scale *= s;
                }
                if let Some((axis, degrees)) = placement.rotate {
                    let pivot =
                        crate::geom::apply_similarity(&inst.transform, inst.bbox.center(), false);
                    let rot = rotation_about(pivot, axis.unit(), degrees.to_radians());
                    inst.transform = rot.compose(&inst.transform);
                }
                if let Some(t) = placement.translate {
                    inst.transform.translation = inst.transform.translation + t;
                }
                out.instances.push(inst);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{
        composite_scene_ray, AnalyticVolumeField, Lighting, RenderSettings,
    };
    use crate::rng::DetRng;
    use crate::sdf::AnalyticSdf;

    fn test_scene() -> SceneGraph {
        let field: Arc<dyn VolumeField> = Arc::new(AnalyticVolumeField {
            sdf: AnalyticSdf::sphere(0.4, [0.9, 0.1, 0.1]),
            beta: 0.01,
            lighting: Lighting::default(),
        });
        let camera = Camera::look_at(
            48.0,
            48.0,
            16.0,
            16.0,
            32,
            32,
            Vec3::new(0.0, 0.5, -3.0),
            Vec3::ZERO,
            Vec3::new(0.0, 1.0, 0.0),
        );
        SceneGraph {
            instances: alloc::vec![SceneInstance {
                id: String::from("a"),
                field,
                bbox: Aabb::CANONICAL,
                transform: SimilarityTransform::IDENTITY,
            }],
            camera,
            background: [0.5, 0.5, 0.5],
        }
    }

    #[test]
    fn empty_script_is_identity() {
        let scene = test_scene();
        let edited = apply_edits(&scene, &EditScript::default(), &mut NoImports).unwrap();
        assert_eq!(edited.instances.len(), 1);
        assert_eq!(
            edited.instances[0].transform.translation,
            scene.instances[0].transform.translation
        );
    }

    #[test]
    fn translations_compose() {
        let scene = test_scene();
        let two_steps = parse_edit_script("translate a 0.2 0 0\ntranslate a 0.3 -1 0").unwrap();
        let one_step = parse_edit_script("translate a 0.5 -1 0").unwrap();
        let e1 = apply_edits(&scene, &two_steps, &mut NoImports).unwrap();
        let e2 = apply_edits(&scene, &one_step, &mut NoImports).unwrap();
        let d = e1.instances[0].transform.translation - e2.instances[0].transform.translation;
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn script_concatenation_is_associative() {
        let scene = test_scene();
        let p = parse_edit_script("translate a 0.2 0 0\nrotate a y 30").unwrap();
        let q = parse_edit_script("rotate a z -10\ntranslate a 0 0.1 0").unwrap();
        let mut pq = p.clone();
        pq.commands.extend(q.commands.clone());

        let stepwise =
            apply_edits(&apply_edits(&scene, &p, &mut NoImports).unwrap(), &q, &mut NoImports)
                .unwrap();
        let combined = apply_edits(&scene, &pq, &mut NoImports).unwrap();
        let (a, b) = (&stepwise.instances[0].transform, &combined.instances[0].transform);
        assert!((a.translation - b.translation).norm() < 1e-12);
        for i in 0..9 {
            assert!((a.rotation.m[i] - b.rotation.m[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_turn_restores_transform() {
        let mut scene = test_scene();
        scene.instances[0].transform =
            SimilarityTransform::from_translation(Vec3::new(0.7, -0.2, 0.1));
        let before = scene.instances[0].transform;
        let script = parse_edit_script("rotate a y 90\nrotate a y 90\nrotate a y 90\nrotate a y 90")
            .unwrap();
        let edited = apply_edits(&scene, &script, &mut NoImports).unwrap();
        let after = edited.instances[0].transform;
        assert!((after.translation - before.translation).norm() < 1e-9);
        for i in 0..9 {
            assert!((after.rotation.m[i] - before.rotation.m[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_shares_field_and_render_equivariance() {
        let scene = test_scene();
        let delta = Vec3::new(1.0, 0.0, 0.0);
        let script = parse_edit_script("duplicate a b 1 0 0").unwrap();
        let edited = apply_edits(&scene, &script, &mut NoImports).unwrap();
        assert_eq!(edited.instances.len(), 2);
        assert!(Arc::ptr_eq(&edited.instances[0].field, &edited.instances[1].field));

        // Rendering the duplicate alone equals rendering the original alone
        // with the camera shifted by -delta.
        let b_only = SceneGraph {
            instances: alloc::vec![edited.instances[1].clone()],
            camera: edited.camera.clone(),
            background: edited.background,
        };
        let mut shifted_cam = scene.camera.clone();
        shifted_cam.position = shifted_cam.position - delta;
        let a_only = SceneGraph {
            instances: alloc::vec![scene.instances[0].clone()],
            camera: shifted_cam,
            background: scene.background,
        };
        let settings = RenderSettings { samples_per_ray: 32, ..Default::default() };
        for &(i, j) in &[(16u32, 16u32), (10, 20), (25, 7)] {
            let ray_b = b_only.camera.pixel_ray(i, j);
            let ray_a = a_only.camera.pixel_ray(i, j);
            let mut r1 = DetRng::new(1);
            let out_b = composite_scene_ray(
                &b_only.render_instances(),
                &ray_b,
                settings.samples_per_ray,
                false,
                &mut r1,
                None,
            );
            let mut r2 = DetRng::new(1);
            let out_a = composite_scene_ray(
                &a_only.render_instances(),
                &ray_a,
                settings.samples_per_ray,
                false,
                &mut r2,
                None,
            );
            for c in 0..3 {
                assert!((out_a.color[c] - out_b.color[c]).abs() < 1e-6);
            }
            assert!((out_a.acc - out_b.acc).abs() < 1e-6);
        }
    }

    #[test]
    fn remove_then_reimport_renders_identically() {
        let scene = test_scene();
        struct Fixed(SceneInstance);
        impl ImportResolver for Fixed {
            fn resolve(&mut self, _path: &str, _id: &str) -> Result<SceneInstance, EditError> {
                Ok(self.0.clone())
            }
        }
        let mut resolver = Fixed(scene.instances[0].clone());
        let script = parse_edit_script("remove a\nimport a from original.ssr").unwrap();
        let edited = apply_edits(&scene, &script, &mut resolver).unwrap();

        let settings = RenderSettings { samples_per_ray: 16, ..Default::default() };
        let before = crate::render::render_view(
            &scene.render_instances(),
            &scene.camera,
            &settings,
        );
        let after = crate::render::render_view(
            &edited.render_instances(),
            &edited.camera,
            &settings,
        );
        for (a, b) in before.color.iter().zip(&after.color) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parse_errors_and_comments() {
        let script = parse_edit_script("# a comment\n\n  translate a 1 2 3  # trailing\n").unwrap();
        assert_eq!(script.commands.len(), 1);

        assert!(matches!(
            parse_edit_script("warp a 1 2 3"),
            Err(EditError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_edit_script("translate a 1 2"),
            Err(EditError::Parse { .. })
        ));
        assert!(matches!(
            parse_edit_script("rotate a w 30"),
            Err(EditError::Parse { .. })
        ));
    }

    #[test]
    fn unknown_and_colliding_ids() {
        let scene = test_scene();
        let missing = parse_edit_script("translate ghost 1 0 0").unwrap();
        assert_eq!(
            apply_edits(&scene, &missing, &mut NoImports).err(),
            Some(EditError::UnknownId(String::from("ghost")))
        );
        let collide = parse_edit_script("duplicate a a 1 0 0").unwrap();
        assert_eq!(
            apply_edits(&scene, &collide, &mut NoImports).err(),
            Some(EditError::IdCollision(String::from("a")))
        );
    }

    #[test]
    fn import_parsing_with_placement() {
        let script =
            parse_edit_script("import lamp from scene_b.ssr --translate 1 0 0 --rotate y 45")
                .unwrap();
        match &script.commands[0] {
            EditCommand::Import { id, path, placement } => {
                assert_eq!(id, "lamp");
                assert_eq!(path, "scene_b.ssr");
                assert_eq!(placement.translate, Some(Vec3::new(1.0, 0.0, 0.0)));
                assert_eq!(placement.rotate, Some((Axis::Y, 45.0)));
                assert_eq!(placement.scale, None);
            }
            other => panic!("unexpected command {other:?}"),
        }
    }
}
