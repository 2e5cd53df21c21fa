//! Command-line interface: gen-data, train, render, extract, compose, eval.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed inputs), 3 numerical divergence during training.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use srf_core::field::ObjectField;
use srf_core::geom::{Camera, Mat3, Vec3};
use srf_core::mesh::{marching_cubes, merge_scene_meshes};
use srf_core::metrics::{depth_normal_error, evaluate_meshes, EvalReport};
use srf_core::render::{render_view, RenderSettings};
use srf_core::scene::{
    apply_edits, parse_edit_script, EditError, EditScript, ImportResolver, SceneGraph,
    SceneInstance,
};
use srf_core::train::{sphere_trace_gt, train_object};

use crate::checkpoint::{fnv1a, load_object_field, save_object_field, CheckpointMeta};
use crate::config::{load_config, Config};
use crate::images;
use crate::meshio;
use crate::scenes::{load_scene, read_views, scene_cameras, write_view_files, Manifest};

pub enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

const USAGE: &str = "\
srf - neural implicit shape and radiance field toolkit

USAGE:
  srf <command> [options]

COMMANDS:
  gen-data   Render ground-truth views of an analytic scene to files
  train      Fit object fields to a scene's ground-truth views
  render     Render color/depth/normal/acc images from a checkpoint
  extract    Run marching cubes on a checkpoint and export OBJ/PLY
  compose    Assemble checkpoints into a scene, apply edits, render and mesh
  eval       Compare meshes (and optionally depth/normal images)

Common options:
  --config <file.json>   configuration document
  --set <key.path=val>   override one config value (repeatable)

Run 'srf <command> --help' for command options.
";

fn command_usage(cmd: &str) -> String {
    match cmd {
        "gen-data" => "\
srf gen-data --scene <name|spec.json> --out <dir> [--config c.json] [--set k=v]

Renders the scene's camera ring to view_NNN_{color.ppm,depth.pfm,normal.pfm}
plus one mask PGM per object, and writes manifest.json describing them.
Builtin scenes: sphere, two_spheres, sphere_box.
"
        .into(),
        "train" => "\
srf train --scene <name|spec.json> --out <path> [--config c.json] [--set k=v]
          [--data <gen-data dir>] [--object <id>]

Trains one field per object (or only --object). Views come from --data when
given, otherwise they are ray-traced in memory. Writes <out>/<id>.ssr and a
<id>.loss.csv per object; a single-object --out ending in .ssr is used as the
exact checkpoint path.
"
        .into(),
        "render" => "\
srf render <ckpt.ssr> --out <dir> [--config c.json] [--set k=v]
           [--sweep-yaw lo:hi:step]

Renders the checkpoint's original view, or an orbit sweep about the object
center at the stated yaw angles (degrees), writing color.ppm, depth.pfm,
normal.pfm, and acc.pfm per view.
"
        .into(),
        "extract" => "\
srf extract <ckpt.ssr> --out <mesh.obj|mesh.ply> [--res N] [--iso X]

Marching-cubes the field over its canonical box (default resolution 64).
"
        .into(),
        "compose" => "\
srf compose --ckpt <name=path.ssr> [--ckpt ...] --out <dir>
            [--script edits.txt] [--config c.json] [--set k=v]
            [--render-images] [--mesh] [--res N]

Builds a scene from checkpoints (placed by their stored transforms), applies
the edit script, then renders images and/or extracts a merged mesh (both by
default). Scripts may import instances from other checkpoints.
"
        .into(),
        "eval" => "\
srf eval --pred <mesh> (--gt <mesh> | --gt-scene <name|json> --gt-object <id>)
         [--gt-res N] [--out report.json] [--csv report.csv]
         [--pred-depth d.pfm --gt-depth d.pfm --pred-normal n.pfm
          --gt-normal n.pfm --mask m.pgm] [--config c.json] [--set k=v]

Normalizes, ICP-aligns, samples, and reports Chamfer distance (x1e3), F-Score,
and normal consistency; image flags add depth/normal errors to the report.
"
        .into(),
        _ => USAGE.into(),
    }
}

struct Args {
    positional: Vec<String>,
    flags: BTreeMap<String, Vec<String>>,
}

/// `spec` lists the known flags and whether each takes a value.
fn parse_args(cmd: &str, args: &[String], spec: &[(&str, bool)]) -> Result<Args, CliError> {
    let mut out = Args { positional: Vec::new(), flags: BTreeMap::new() };
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        if a == "--help" || a == "-h" {
            return Err(CliError::Usage(command_usage(cmd)));
        }
        if let Some(name) = a.strip_prefix("--") {
            let Some(&(_, takes_value)) = spec.iter().find(|(n, _)| *n == name) else {
                return Err(CliError::Usage(format!(
                    "unknown flag --{name} for '{cmd}'\n\n{}",
                    command_usage(cmd)
                )));
            };
            let entry = out.flags.entry(name.to_string()).or_default();
            if takes_value {
                i += 1;
                let Some(v) = args.get(i) else {
                    return Err(CliError::Usage(format!("--{name} requires a value")));
                };
                entry.push(v.clone());
            } else {
                entry.push(String::new());
            }
        } else {
            out.positional.push(a.clone());
        }
        i += 1;
    }
    Ok(out)
}

impl Args {
    fn value(&self, name: &str) -> Option<&str> {
        self.flags.get(name).and_then(|v| v.last()).map(|s| s.as_str())
    }

    fn values(&self, name: &str) -> &[String] {
        self.flags.get(name).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn has(&self, name: &str) -> bool {
        self.flags.contains_key(name)
    }

    fn require(&self, cmd: &str, name: &str) -> Result<&str, CliError> {
        self.value(name).ok_or_else(|| {
            CliError::Usage(format!("'{cmd}' requires --{name}\n\n{}", command_usage(cmd)))
        })
    }
}

fn config_from(args: &Args) -> Result<Config, CliError> {
    let path = args.value("config").map(Path::new);
    load_config(path, args.values("set")).map_err(|e| CliError::Data(e.to_string()))
}

pub fn run(args: &[String]) -> i32 {
    let result = match args.first().map(|s| s.as_str()) {
        None | Some("--help") | Some("-h") | Some("help") => {
            println!("{USAGE}");
            Ok(())
        }
        Some("gen-data") => cmd_gen_data(&args[1..]),
        Some("train") => cmd_train(&args[1..]),
        Some("render") => cmd_render(&args[1..]),
        Some("extract") => cmd_extract(&args[1..]),
        Some("compose") => cmd_compose(&args[1..]),
        Some("eval") => cmd_eval(&args[1..]),
        Some(other) => Err(CliError::Usage(format!("unknown command '{other}'\n\n{USAGE}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("{m}"),
                CliError::Data(m) => eprintln!("error: {m}"),
                CliError::Divergence(m) => eprintln!("divergence: {m}"),
            }
            e.exit_code()
        }
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn cmd_gen_data(args: &[String]) -> Result<(), CliError> {
    let spec = [("scene", true), ("out", true), ("config", true), ("set", true)];
    let args = parse_args("gen-data", args, &spec)?;
    let config = config_from(&args)?;
    let scene_name = args.require("gen-data", "scene")?;
    let out_dir = PathBuf::from(args.require("gen-data", "out")?);
    let (spec, scene) = load_scene(scene_name).map_err(data_err)?;
    std::fs::create_dir_all(&out_dir).map_err(data_err)?;

    let cameras = scene_cameras(&spec, &scene, &config.data);
    let object_ids: Vec<String> = scene.objects.iter().map(|o| o.id.clone()).collect();
    let mut views = Vec::new();
    for (i, cam) in cameras.iter().enumerate() {
        let view = sphere_trace_gt(&scene, cam);
        views.push(write_view_files(&out_dir, i, &view, &object_ids).map_err(data_err)?);
    }
    let manifest = Manifest { objects: object_ids, views };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(data_err)?;
    std::fs::write(out_dir.join("manifest.json"), manifest_json).map_err(data_err)?;
    println!("wrote {} views to {}", cameras.len(), out_dir.display());
    Ok(())
}

fn cmd_train(args: &[String]) -> Result<(), CliError> {
    let spec = [
        ("scene", true),
        ("out", true),
        ("config", true),
        ("set", true),
        ("data", true),
        ("object", true),
    ];
    let args = parse_args("train", args, &spec)?;
    let config = config_from(&args)?;
    let scene_name = args.require("train", "scene")?;
    let out = PathBuf::from(args.require("train", "out")?);
    let (spec, scene) = load_scene(scene_name).map_err(data_err)?;
    let train_config = config.train_config().map_err(data_err)?;

    let views = match args.value("data") {
        Some(dir) => {
            let dir = Path::new(dir);
            let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(data_err)?;
            let manifest: Manifest = serde_json::from_str(&text).map_err(data_err)?;
            if manifest.objects != scene.objects.iter().map(|o| o.id.clone()).collect::<Vec<_>>()
            {
                return Err(CliError::Data(format!(
                    "data directory objects {:?} do not match scene objects",
                    manifest.objects
                )));
            }
            read_views(dir, &manifest).map_err(CliError::Data)?
        }
        None => {
            let cameras = scene_cameras(&spec, &scene, &config.data);
            cameras.iter().map(|c| sphere_trace_gt(&scene, c)).collect()
        }
    };

    let targets: Vec<usize> = match args.value("object") {
        Some(id) => {
            let idx = scene
                .objects
                .iter()
                .position(|o| o.id == id)
                .ok_or_else(|| CliError::Data(format!("scene has no object '{id}'")))?;
            vec![idx]
        }
        None => (0..scene.objects.len()).collect(),
    };

    let single_file = targets.len() == 1 && out.extension().is_some_and(|e| e == "ssr");
    if !single_file {
        std::fs::create_dir_all(&out).map_err(data_err)?;
    }
    let config_hash = fnv1a(config.canonical_json().as_bytes());

    let mut diverged = None;
    for &idx in &targets {
        let object = &scene.objects[idx];
        let result = train_object(&scene, idx, &views, &train_config).map_err(data_err)?;
        let ckpt_path =
            if single_file { out.clone() } else { out.join(format!("{}.ssr", object.id)) };
        let meta = CheckpointMeta {
            epoch: train_config.epochs as u64,
            seed: train_config.seed,
            config_hash,
            transform: object.transform,
        };
        save_object_field(&ckpt_path, &result.field, &meta).map_err(data_err)?;
        let csv_path = ckpt_path.with_extension("loss.csv");
        std::fs::write(&csv_path, result.history.to_csv()).map_err(data_err)?;
        match result.diverged_at {
            Some(epoch) => {
                println!(
                    "object '{}' diverged at epoch {epoch}; checkpoint rolled back to last good state",
                    object.id
                );
                diverged = Some((object.id.clone(), epoch));
            }
            None => println!("trained '{}' -> {}", object.id, ckpt_path.display()),
        }
    }
    if let Some((id, epoch)) = diverged {
        return Err(CliError::Divergence(format!("object '{id}' diverged at epoch {epoch}")));
    }
    Ok(())
}

/// World-space camera that the canonical conditioning camera corresponds to.
fn world_camera(field: &ObjectField, meta: &CheckpointMeta) -> Camera {
    let tf = &meta.transform;
    Camera::new(
        field.camera.fx,
        field.camera.fy,
        field.camera.cx,
        field.camera.cy,
        field.camera.width,
        field.camera.height,
        tf.rotation.mul_mat(&field.camera.rotation),
        srf_core::geom::apply_similarity(tf, field.camera.position, false),
    )
}

fn render_settings(config: &Config) -> RenderSettings {
    RenderSettings {
        samples_per_ray: config.render.samples_per_ray,
        background: config.render.background,
        jitter: false,
        jitter_seed: 0,
        beta_override: config.render.beta_override,
    }
}

fn write_view_images(
    dir: &Path,
    prefix: &str,
    imgs: &srf_core::render::ViewImages,
) -> Result<(), CliError> {
    let (w, h) = (imgs.width, imgs.height);
    images::write_ppm(&dir.join(format!("{prefix}color.ppm")), w, h, &imgs.color)
        .map_err(data_err)?;
    images::write_pfm_gray(&dir.join(format!("{prefix}depth.pfm")), w, h, &imgs.depth)
        .map_err(data_err)?;
    images::write_pfm_rgb(&dir.join(format!("{prefix}normal.pfm")), w, h, &imgs.normal)
        .map_err(data_err)?;
    images::write_pfm_gray(&dir.join(format!("{prefix}acc.pfm")), w, h, &imgs.acc)
        .map_err(data_err)?;
    Ok(())
}

fn parse_sweep(text: &str) -> Result<Vec<i64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Usage(format!("--sweep-yaw expects lo:hi:step, got '{text}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: i64 = parts[0].parse().map_err(|_| bad())?;
    let hi: i64 = parts[1].parse().map_err(|_| bad())?;
    let step: i64 = parts[2].parse().map_err(|_| bad())?;
    if step <= 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).step_by(step as usize).collect())
}

fn cmd_render(args: &[String]) -> Result<(), CliError> {
    let spec = [("out", true), ("config", true), ("set", true), ("sweep-yaw", true)];
    let args = parse_args("render", args, &spec)?;
    let config = config_from(&args)?;
    let [ckpt_path] = args.positional.as_slice() else {
        return Err(CliError::Usage(format!(
            "'render' takes exactly one checkpoint path\n\n{}",
            command_usage("render")
        )));
    };
    let out_dir = PathBuf::from(args.require("render", "out")?);
    std::fs::create_dir_all(&out_dir).map_err(data_err)?;
    let (field, meta) = load_object_field(Path::new(ckpt_path)).map_err(data_err)?;
    let settings = render_settings(&config);
    let instance = srf_core::render::Instance {
        field: &field,
        bbox: field.bbox,
        transform: meta.transform,
    };
    let base_cam = world_camera(&field, &meta);

    match args.value("sweep-yaw") {
        None => {
            let imgs = render_view(std::slice::from_ref(&instance), &base_cam, &settings);
            write_view_images(&out_dir, "", &imgs)?;
            println!("rendered original view to {}", out_dir.display());
        }
        Some(sweep) => {
            let yaws = parse_sweep(sweep)?;
            let center =
                srf_core::geom::apply_similarity(&meta.transform, field.bbox.center(), false);
            for yaw in &yaws {
                let rot = Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), (*yaw as f64).to_radians());
                let eye = center + rot.mul_vec(base_cam.position - center);
                let cam = Camera::look_at(
                    base_cam.fx,
                    base_cam.fy,
                    base_cam.cx,
                    base_cam.cy,
                    base_cam.width,
                    base_cam.height,
                    eye,
                    center,
                    Vec3::new(0.0, 1.0, 0.0),
                );
                let imgs = render_view(std::slice::from_ref(&instance), &cam, &settings);
                write_view_images(&out_dir, &format!("yaw_{yaw}_"), &imgs)?;
            }
            println!("rendered {} sweep views to {}", yaws.len(), out_dir.display());
        }
    }
    Ok(())
}

fn cmd_extract(args: &[String]) -> Result<(), CliError> {
    let spec = [("out", true), ("res", true), ("iso", true), ("config", true), ("set", true)];
    let args = parse_args("extract", args, &spec)?;
    let [ckpt_path] = args.positional.as_slice() else {
        return Err(CliError::Usage(format!(
            "'extract' takes exactly one checkpoint path\n\n{}",
            command_usage("extract")
        )));
    };
    let out = PathBuf::from(args.require("extract", "out")?);
    let res: usize = args
        .value("res")
        .unwrap_or("64")
        .parse()
        .map_err(|_| CliError::Usage("--res expects an integer".into()))?;
    if res < 2 {
        return Err(CliError::Usage("--res must be at least 2".into()));
    }
    let iso: f64 = args
        .value("iso")
        .unwrap_or("0")
        .parse()
        .map_err(|_| CliError::Usage("--iso expects a number".into()))?;
    let (field, _meta) = load_object_field(Path::new(ckpt_path)).map_err(data_err)?;
    let mesh = marching_cubes(|p| field.sdf(p), field.bbox, res, iso);
    if mesh.is_empty() {
        return Err(CliError::Data("level set is empty at this iso value".into()));
    }
    meshio::write_mesh(&out, &mesh).map_err(data_err)?;
    println!(
        "extracted {} vertices / {} triangles -> {}",
        mesh.positions.len(),
        mesh.triangles.len(),
        out.display()
    );
    Ok(())
}

struct CheckpointResolver;

impl ImportResolver for CheckpointResolver {
    fn resolve(&mut self, path: &str, id: &str) -> Result<SceneInstance, EditError> {
        let (field, meta) = load_object_field(Path::new(path))
            .map_err(|e| EditError::ImportFailed(e.to_string()))?;
        Ok(SceneInstance {
            id: id.to_string(),
            bbox: field.bbox,
            transform: meta.transform,
            field: Arc::new(field),
        })
    }
}

fn cmd_compose(args: &[String]) -> Result<(), CliError> {
    let spec = [
        ("ckpt", true),
        ("script", true),
        ("out", true),
        ("config", true),
        ("set", true),
        ("render-images", false),
        ("mesh", false),
        ("res", true),
    ];
    let args = parse_args("compose", args, &spec)?;
    let config = config_from(&args)?;
    let out_dir = PathBuf::from(args.require("compose", "out")?);
    if args.values("ckpt").is_empty() {
        return Err(CliError::Usage(format!(
            "'compose' needs at least one --ckpt name=path\n\n{}",
            command_usage("compose")
        )));
    }
    std::fs::create_dir_all(&out_dir).map_err(data_err)?;

    let mut instances = Vec::new();
    let mut camera: Option<Camera> = None;
    for item in args.values("ckpt") {
        let (name, path) = item.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--ckpt expects name=path, got '{item}'"))
        })?;
        let (field, meta) = load_object_field(Path::new(path)).map_err(data_err)?;
        if camera.is_none() {
            camera = Some(world_camera(&field, &meta));
        }
        instances.push(SceneInstance {
            id: name.to_string(),
            bbox: field.bbox,
            transform: meta.transform,
            field: Arc::new(field),
        });
    }
    let scene = SceneGraph {
        instances,
        camera: camera.expect("at least one checkpoint"),
        background: config.render.background,
    };

    let script = match args.value("script") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(data_err)?;
            parse_edit_script(&text).map_err(data_err)?
        }
        None => EditScript::default(),
    };
    let scene = apply_edits(&scene, &script, &mut CheckpointResolver).map_err(data_err)?;

    let do_render = args.has("render-images") || !args.has("mesh");
    let do_mesh = args.has("mesh") || !args.has("render-images");

    if do_render {
        let settings = render_settings(&config);
        let imgs = render_view(&scene.render_instances(), &scene.camera, &settings);
        write_view_images(&out_dir, "scene_", &imgs)?;
    }
    if do_mesh {
        let res: usize = args
            .value("res")
            .unwrap_or("64")
            .parse()
            .map_err(|_| CliError::Usage("--res expects an integer".into()))?;
        let mut transforms = Vec::new();
        let mut meshes = Vec::new();
        for inst in &scene.instances {
            let mesh = marching_cubes(|p| inst.field.sdf(p), inst.bbox, res, 0.0);
            transforms.push(inst.transform);
            meshes.push(mesh);
        }
        let merged = merge_scene_meshes(&transforms, &meshes).map_err(data_err)?;
        meshio::write_ply(&out_dir.join("scene.ply"), &merged).map_err(data_err)?;
        meshio::write_obj(&out_dir.join("scene.obj"), &merged).map_err(data_err)?;
    }
    println!(
        "composed {} instances -> {}",
        scene.instances.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_eval(args: &[String]) -> Result<(), CliError> {
    let spec = [
        ("pred", true),
        ("gt", true),
        ("gt-scene", true),
        ("gt-object", true),
        ("gt-res", true),
        ("out", true),
        ("csv", true),
        ("config", true),
        ("set", true),
        ("pred-depth", true),
        ("gt-depth", true),
        ("pred-normal", true),
        ("gt-normal", true),
        ("mask", true),
    ];
    let args = parse_args("eval", args, &spec)?;
    let config = config_from(&args)?;
    let settings = config.eval_settings().map_err(data_err)?;

    let pred_path = args.require("eval", "pred")?;
    let pred = meshio::read_mesh(Path::new(pred_path)).map_err(data_err)?;
    let gt = match (args.value("gt"), args.value("gt-scene")) {
        (Some(path), _) => meshio::read_mesh(Path::new(path)).map_err(data_err)?,
        (None, Some(scene_name)) => {
            let (_, scene) = load_scene(scene_name).map_err(data_err)?;
            let object = args.require("eval", "gt-object")?;
            let obj = scene
                .objects
                .iter()
                .find(|o| o.id == object)
                .ok_or_else(|| CliError::Data(format!("scene has no object '{object}'")))?;
            let res: usize = args
                .value("gt-res")
                .unwrap_or("64")
                .parse()
                .map_err(|_| CliError::Usage("--gt-res expects an integer".into()))?;
            marching_cubes(|p| obj.sdf.eval(p), obj.bbox, res, 0.0)
        }
        (None, None) => {
            return Err(CliError::Usage(format!(
                "'eval' needs --gt or --gt-scene\n\n{}",
                command_usage("eval")
            )))
        }
    };

    let mut report = evaluate_meshes(&pred, &gt, &settings).map_err(|e| match e {
        srf_core::metrics::MetricsError::DegenerateBbox => {
            CliError::Data("prediction mesh has a degenerate bounding box".into())
        }
        other => CliError::Data(format!("{other:?}")),
    })?;

    // Optional image protocol.
    if let (Some(pd), Some(gd), Some(pn), Some(gn), Some(mk)) = (
        args.value("pred-depth"),
        args.value("gt-depth"),
        args.value("pred-normal"),
        args.value("gt-normal"),
        args.value("mask"),
    ) {
        let (_, _, pred_depth) = images::read_pfm_gray(Path::new(pd)).map_err(data_err)?;
        let (_, _, gt_depth) = images::read_pfm_gray(Path::new(gd)).map_err(data_err)?;
        let (_, _, pred_normal) = images::read_pfm_rgb(Path::new(pn)).map_err(data_err)?;
        let (_, _, gt_normal) = images::read_pfm_rgb(Path::new(gn)).map_err(data_err)?;
        let (_, _, mask) = images::read_pgm_mask(Path::new(mk)).map_err(data_err)?;
        let (d, l1, ang) =
            depth_normal_error(&pred_depth, &gt_depth, &pred_normal, &gt_normal, &mask)
                .map_err(|e| CliError::Data(format!("{e:?}")))?;
        report.depth_l1 = Some(d);
        report.normal_l1 = Some(l1);
        report.normal_angular = Some(ang);
    } else if [
        args.value("pred-depth"),
        args.value("gt-depth"),
        args.value("pred-normal"),
        args.value("gt-normal"),
        args.value("mask"),
    ]
    .iter()
    .any(Option::is_some)
    {
        return Err(CliError::Usage(
            "image evaluation needs all of --pred-depth --gt-depth --pred-normal --gt-normal --mask"
                .into(),
        ));
    }

    let json = report.to_json();
    match args.value("out") {
        Some(path) => std::fs::write(path, &json).map_err(data_err)?,
        None => print!("{json}"),
    }
    if let Some(path) = args.value("csv") {
        let row = format!("{}\n{}\n", EvalReport::csv_header(), report.to_csv_row());
        std::fs::write(path, row).map_err(data_err)?;
    }
    println!("cd(x1e3)={:.4} fscore={:.2} nc={:.4}", report.cd, report.fscore, report.nc);
    Ok(())
}
