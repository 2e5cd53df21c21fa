//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured values (run with `--nocapture` to see them).
//!
//! The expensive artifacts (the sphere fit, the two-primitive curriculum
//! comparison) are built once and shared between criteria through OnceLock;
//! the determinism criterion rebuilds its pipeline from scratch on purpose.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use srf_core::autodiff::{gradient_check, ParamStore, Tape};
use srf_core::field::FieldConfig;
use srf_core::geom::{Camera, Mat3, Vec3};
use srf_core::math;
use srf_core::mesh::marching_cubes;
use srf_core::metrics::{evaluate_meshes, icp_align, EvalSettings};
use srf_core::render::{
    composite_ray, composite_scene_ray, render_pixel, sdf_to_density, AnalyticVolumeField,
    Instance, Lighting, RaySample, RenderSettings,
};
use srf_core::rng::DetRng;
use srf_core::sdf::{Albedo, AnalyticSdf, Primitive};
use srf_core::train::{
    held_out_sdf_error, orbit_cameras, sphere_trace_gt, train_object, CurriculumSchedule,
    GroundTruthView, StageTwoStart, SupervisionSource, TrainConfig, NO_HIT,
};
use srf_core::{Aabb, SimilarityTransform};

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("srf-acceptance-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cli(args: &[&str]) -> i32 {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    srf::run(&owned)
}

// ---------------------------------------------------------------------------
// Criterion 1: density law
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_density_law() {
    for &beta in &[0.05, 0.1, 0.5] {
        let left = sdf_to_density(beta, -1e-13);
        let right = sdf_to_density(beta, 1e-13);
        assert!(
            (left - right).abs() < 1e-9,
            "continuity at s=0 for beta={beta}: {left} vs {right}"
        );
        let mut prev = f64::INFINITY;
        for i in 0..10_000 {
            let s = -3.0 + 6.0 * i as f64 / 9_999.0;
            let d = sdf_to_density(beta, s);
            assert!(d <= prev + 1e-15, "monotonicity at beta={beta}, s={s}");
            assert!((0.0..=1.0 / beta + 1e-12).contains(&d));
            prev = d;
        }
    }
    assert!((sdf_to_density(0.1, 0.0) - 5.0).abs() < 1e-12);
    assert!((sdf_to_density(0.1, 0.2) - 5.0 * math::exp(-2.0)).abs() < 1e-12);
    assert!((sdf_to_density(0.1, -10.0) - 10.0).abs() < 1e-6);
    println!("criterion 01 PASS: density law continuous, monotone, bounded for beta in {{0.05,0.1,0.5}}");
}

// ---------------------------------------------------------------------------
// Criterion 2: compositing oracle
// ---------------------------------------------------------------------------

/// Independent straight-line reimplementation of alpha compositing; written
/// against the equations, not the renderer.
fn composite_reference(samples: &[RaySample]) -> ([f64; 3], f64, [f64; 3], f64) {
    let m = samples.len();
    let mut alphas = vec![0.0; m];
    for i in 0..m {
        alphas[i] = 1.0 - math::exp(-samples[i].sigma * samples[i].delta);
    }
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    let mut normal = [0.0; 3];
    let mut acc = 0.0;
    for i in 0..m {
        let mut transmittance = 1.0;
        for (j, a) in alphas.iter().enumerate().take(i) {
            let _ = j;
            transmittance *= 1.0 - a;
        }
        let w = transmittance * alphas[i];
        for c in 0..3 {
            color[c] += w * samples[i].color[c];
        }
        depth += w * samples[i].t;
        normal[0] += w * samples[i].normal.x;
        normal[1] += w * samples[i].normal.y;
        normal[2] += w * samples[i].normal.z;
        acc += w;
    }
    (color, depth, normal, acc)
}

#[test]
fn criterion_02_compositing_oracle() {
    let mut rng = DetRng::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = 1 + rng.index(48);
        let mut t = rng.uniform(0.1, 1.0);
        let samples: Vec<RaySample> = (0..m)
            .map(|_| {
                t += rng.uniform(0.01, 0.3);
                RaySample {
                    t,
                    delta: rng.uniform(0.001, 0.4),
                    point: Vec3::ZERO,
                    sigma: rng.uniform(0.0, 40.0),
                    color: [rng.next_f64(), rng.next_f64(), rng.next_f64()],
                    normal: Vec3::new(
                        rng.uniform(-1.0, 1.0),
                        rng.uniform(-1.0, 1.0),
                        rng.uniform(-1.0, 1.0),
                    )
                    .normalized(),
                    object: 0,
                }
            })
            .collect();
        let got = composite_ray(&samples);
        let (color, depth, normal, acc) = composite_reference(&samples);
        assert!((0.0..=1.0 + 1e-12).contains(&got.acc), "acc {}", got.acc);
        for c in 0..3 {
            worst = worst.max((got.color[c] - color[c]).abs());
        }
        worst = worst.max((got.depth - depth).abs());
        worst = worst.max((got.normal.x - normal[0]).abs());
        worst = worst.max((got.normal.y - normal[1]).abs());
        worst = worst.max((got.normal.z - normal[2]).abs());
        worst = worst.max((got.acc - acc).abs());
    }
    assert!(worst < 1e-12, "worst deviation {worst}");
    println!("criterion 02 PASS: compositor matches reference within {worst:.2e} on 1000 sample lists");
}

// ---------------------------------------------------------------------------
// Criterion 3: gradient suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_gradient_suite() {
    // 100 random micro-networks.
    let mut worst_net: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = DetRng::new(40_000 + seed);
        let hidden = 2 + rng.index(14);
        let inputs = 1 + rng.index(3);
        let mut store = ParamStore::new();
        let w1: Vec<f64> = (0..hidden * inputs).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let b1: Vec<f64> = (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let w2: Vec<f64> = (0..hidden).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let w1 = store.add_param("w1", hidden, inputs, w1);
        let b1 = store.add_param("b1", hidden, 1, b1);
        let w2 = store.add_param("w2", 1, hidden, w2);
        let x: Vec<f64> = (0..inputs).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let err = gradient_check(&mut store, 1e-4, |tape: &mut Tape, store: &ParamStore| {
            let input = tape.constant(&x);
            let w1 = tape.param(store, w1);
            let b1 = tape.param(store, b1);
            let w2 = tape.param(store, w2);
            let h = tape.matvec(w1, input);
            let h = tape.add(h, b1);
            let h = tape.softplus(h);
            let o = tape.matvec(w2, h);
            let o = tape.sin(o);
            tape.sum(o)
        });
        worst_net = worst_net.max(err);
        assert!(err < 1e-4, "micro-net seed {seed}: gradient error {err}");
    }

    // Full training loss on a 5-ray micro batch vs central differences.
    let scene = srf::scenes::load_scene("sphere").unwrap().1;
    let cams = orbit_cameras(Vec3::ZERO, 3.0, 12.0, 1, 16, 16, 40.0);
    let views: Vec<GroundTruthView> = cams.iter().map(|c| sphere_trace_gt(&scene, c)).collect();
    let mut config = TrainConfig {
        rays_per_iteration: 5,
        point_batch: 6,
        samples_per_ray: 4,
        ..TrainConfig::default()
    };
    config.field = FieldConfig {
        encoding: srf_core::field::PositionalEncodingConfig {
            frequencies: 1,
            omega: math::PI,
            include_input: true,
        },
        implicit: srf_core::field::ImplicitNetConfig {
            layers: 2,
            hidden: 6,
            geo_features: 3,
            skip: false,
        },
        render: srf_core::field::RenderNetConfig { layers: 1, hidden: 5 },
        instance_features: 3,
        pixel_features: 2,
        feature_res: (3, 3),
    };
    let err = srf_core::train::full_loss_gradient_error(&scene, 0, &views, &config, 17);
    assert!(err < 1e-3, "full loss gradient error {err}");
    println!(
        "criterion 03 PASS: micro-net gradcheck worst {worst_net:.2e} (<1e-4), full-loss gradient error {err:.2e} (<1e-3)"
    );
}

// ---------------------------------------------------------------------------
// Criteria 4, 5, 6, 7, 10 share trained artifacts.
// ---------------------------------------------------------------------------

struct SphereFitArtifacts {
    ckpt_bytes: Vec<u8>,
    render_bytes: Vec<Vec<u8>>,
    csv_bytes: Vec<u8>,
    held_out: f64,
    cd: f64,
    fscore: f64,
    nc: f64,
    field: srf_core::field::ObjectField,
}

/// The criterion-4 pipeline, end to end through the CLI: train (Stage One
/// only), extract, eval, plus a small render for the determinism check.
fn run_sphere_fit(tag: &str) -> SphereFitArtifacts {
    let dir = work_dir(tag);
    let ckpt = dir.join("sphere.ssr");
    let settings: &[&str] = &[
        "--set",
        "train.epochs=200",
        "--set",
        "train.max_iterations_per_epoch=8",
        "--set",
        "train.seed=42",
        // Stage One only: 3D supervision from start to finish.
        "--set",
        "train.curriculum.stage_two_epoch=100000",
    ];
    let mut args = vec!["train", "--scene", "sphere", "--out", ckpt.to_str().unwrap()];
    args.extend_from_slice(settings);
    assert_eq!(cli(&args), 0, "training failed");

    let mesh_path = dir.join("sphere.ply");
    assert_eq!(
        cli(&[
            "extract",
            ckpt.to_str().unwrap(),
            "--res",
            "64",
            "--out",
            mesh_path.to_str().unwrap()
        ]),
        0
    );
    // Small render for the byte-determinism comparison.
    let render_dir = dir.join("render");
    assert_eq!(
        cli(&[
            "render",
            ckpt.to_str().unwrap(),
            "--out",
            render_dir.to_str().unwrap(),
            "--set",
            "render.samples_per_ray=32",
        ]),
        0
    );

    let (field, _meta) = srf::checkpoint::load_object_field(&ckpt).unwrap();
    let pred = srf::meshio::read_ply(&mesh_path).unwrap();
    let gt_sdf = AnalyticSdf::sphere(0.5, [1.0; 3]);
    let gt = marching_cubes(|p| gt_sdf.eval(p), Aabb::CANONICAL, 64, 0.0);
    // tau=0.02 on a 2m-normalized object needs ~50K samples per cloud: the
    // point-to-point F-Score of two independent 10K samplings of even a
    // perfect surface is capped near 63 by sampling density alone.
    let report = evaluate_meshes(
        &pred,
        &gt,
        &EvalSettings { samples: 50_000, ..Default::default() },
    )
    .unwrap();
    let held_out = held_out_sdf_error(&field, &gt_sdf, Aabb::CANONICAL, 2000, 2000, 0.05, 777);

    let render_bytes = ["color.ppm", "depth.pfm", "normal.pfm", "acc.pfm"]
        .iter()
        .map(|f| std::fs::read(render_dir.join(f)).unwrap())
        .collect();
    SphereFitArtifacts {
        ckpt_bytes: std::fs::read(&ckpt).unwrap(),
        render_bytes,
        csv_bytes: std::fs::read(ckpt.with_extension("loss.csv")).unwrap(),
        held_out,
        cd: report.cd,
        fscore: report.fscore,
        nc: report.nc,
        field,
    }
}

fn sphere_fit() -> &'static SphereFitArtifacts {
    static FIT: OnceLock<SphereFitArtifacts> = OnceLock::new();
    FIT.get_or_init(|| run_sphere_fit("sphere-fit"))
}

#[test]
fn criterion_04_sphere_fit() {
    let fit = sphere_fit();
    assert!(fit.held_out < 0.02, "held-out |s_hat - s| = {}", fit.held_out);
    assert!(fit.cd < 1.0, "CD(x1e3) = {}", fit.cd);
    assert!(fit.fscore > 95.0, "F-Score = {}", fit.fscore);
    assert!(fit.nc > 0.99, "NC = {}", fit.nc);
    println!(
        "criterion 04 PASS: held-out {:.4} (<0.02), CD {:.3} (<1.0), F {:.2} (>95), NC {:.4} (>0.99)",
        fit.held_out, fit.cd, fit.fscore, fit.nc
    );
}

#[test]
fn criterion_05_rendered_depth_oracle() {
    let fit = sphere_fit();
    let inst = Instance {
        field: &fit.field,
        bbox: fit.field.bbox,
        transform: SimilarityTransform::IDENTITY,
    };
    let settings = RenderSettings {
        samples_per_ray: 128,
        beta_override: Some(0.01),
        ..Default::default()
    };
    let mut rng = DetRng::new(555);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let az = rng.uniform(0.0, 2.0 * math::PI);
        let el = rng.uniform(-1.0, 1.0);
        let eye = Vec3::new(
            3.0 * math::cos(el) * math::cos(az),
            3.0 * math::sin(el),
            3.0 * math::cos(el) * math::sin(az),
        );
        let cam = Camera::look_at(
            90.0,
            90.0,
            32.5,
            32.5,
            65,
            65,
            eye,
            Vec3::ZERO,
            Vec3::new(0.0, 1.0, 0.0),
        );
        let out = render_pixel(std::slice::from_ref(&inst), &cam, &settings, 32, 32);
        // Analytic: the center ray is radial, so it hits the r=0.5 sphere at
        // distance 3 - 0.5.
        worst = worst.max((out.depth - 2.5).abs());
    }
    assert!(worst < 0.05, "worst center-pixel depth error {worst}");
    println!("criterion 05 PASS: worst center-pixel depth error {worst:.4} (<0.05) over 20 orbit cameras");
}

// ---------------------------------------------------------------------------
// Criterion 7 artifact: two-primitive curriculum comparison (3 seeds).
// ---------------------------------------------------------------------------

struct SeedOutcome {
    image_l1_3d: f64,
    image_l1_full: f64,
    cd_3d: f64,
    cd_full: f64,
}

struct CurriculumArtifacts {
    outcomes: Vec<SeedOutcome>,
    /// Loss CSV of one full-curriculum run, plus its schedule parameters.
    full_csv: String,
    epochs: usize,
    lambda0: usize,
    eta: f64,
    caps: (f64, f64, f64),
}

const TREND_EPOCHS: usize = 140;

fn curriculum_config(seed: u64, full: bool) -> TrainConfig {
    TrainConfig {
        epochs: TREND_EPOCHS,
        seed,
        max_iterations_per_epoch: 5,
        samples_per_ray: 16,
        supervision: SupervisionSource::Grid { resolution: 64 },
        schedule: CurriculumSchedule {
            stage_two_start: if full {
                StageTwoStart::Fraction(0.5)
            } else {
                StageTwoStart::Epoch(usize::MAX)
            },
            ..Default::default()
        },
        field: FieldConfig::desk(),
        ..Default::default()
    }
}

fn run_trend_seed(
    scene: &srf_core::train::TrainScene,
    views: &[GroundTruthView],
    train_idx: &[usize],
    held_idx: &[usize],
    seed: u64,
) -> (SeedOutcome, String) {
    let train_views: Vec<GroundTruthView> =
        train_idx.iter().map(|&i| views[i].clone()).collect();
    let mut full_csv = String::new();

    let mut run = |full: bool| -> (f64, f64) {
        let config = curriculum_config(seed, full);
        let mut fields = Vec::new();
        for i in 0..scene.objects.len() {
            let r = train_object(scene, i, &train_views, &config).unwrap();
            assert!(r.diverged_at.is_none(), "seed {seed} full={full} object {i} diverged");
            if full && i == 0 {
                full_csv = r.history.to_csv();
            }
            fields.push(r.field);
        }
        // Held-out image L1 over pixels covered by any object.
        let instances: Vec<Instance<'_>> = fields
            .iter()
            .zip(&scene.objects)
            .map(|(f, o)| Instance { field: f, bbox: f.bbox, transform: o.transform })
            .collect();
        let settings = RenderSettings {
            samples_per_ray: 32,
            background: scene.background,
            ..Default::default()
        };
        let mut l1 = 0.0;
        let mut count = 0usize;
        for &h in held_idx {
            let imgs = srf_core::render::render_view(&instances, &views[h].camera, &settings);
            for (i, px) in imgs.color.iter().enumerate() {
                if views[h].mask[i] != NO_HIT {
                    for c in 0..3 {
                        l1 += (px[c] - views[h].color[i][c]).abs();
                    }
                    count += 3;
                }
            }
        }
        let image_l1 = l1 / count as f64;
        // Mean mesh CD across objects against the analytic meshes.
        let mut cd = 0.0;
        for (f, o) in fields.iter().zip(&scene.objects) {
            let pred = marching_cubes(|p| f.sdf(p), f.bbox, 64, 0.0);
            let gt = marching_cubes(|p| o.sdf.eval(p), o.bbox, 64, 0.0);
            let report = evaluate_meshes(
                &pred,
                &gt,
                &EvalSettings { samples: 50_000, ..Default::default() },
            )
            .unwrap();
            cd += report.cd;
        }
        (image_l1, cd / fields.len() as f64)
    };

    let (image_l1_3d, cd_3d) = run(false);
    let (image_l1_full, cd_full) = run(true);
    (SeedOutcome { image_l1_3d, image_l1_full, cd_3d, cd_full }, full_csv)
}

fn curriculum_artifacts() -> &'static CurriculumArtifacts {
    static ART: OnceLock<CurriculumArtifacts> = OnceLock::new();
    ART.get_or_init(|| {
        let scene = srf::scenes::load_scene("sphere_box").unwrap().1;
        let center = scene.world_bounds().center();
        let cams = orbit_cameras(center, 3.2, 18.0, 10, 48, 48, 45.0);
        let views: Vec<GroundTruthView> =
            cams.iter().map(|c| sphere_trace_gt(&scene, c)).collect();
        let train_idx = [0usize, 1, 2, 3, 5, 6, 7, 8];
        let held_idx = [4usize, 9];

        let mut outcomes = Vec::new();
        let mut full_csv = String::new();
        for seed in [11u64, 22, 33] {
            let (outcome, csv) = run_trend_seed(&scene, &views, &train_idx, &held_idx, seed);
            println!(
                "  seed {seed}: image L1 3d {:.4} vs full {:.4}; mesh CD 3d {:.3} vs full {:.3}",
                outcome.image_l1_3d, outcome.image_l1_full, outcome.cd_3d, outcome.cd_full
            );
            outcomes.push(outcome);
            if full_csv.is_empty() {
                full_csv = csv;
            }
        }
        let schedule = curriculum_config(0, true).schedule;
        CurriculumArtifacts {
            outcomes,
            full_csv,
            epochs: TREND_EPOCHS,
            lambda0: schedule.resolve_lambda0(TREND_EPOCHS),
            eta: schedule.resolve_eta(TREND_EPOCHS),
            caps: (schedule.cap_rgb, schedule.cap_depth, schedule.cap_normal),
        }
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

#[test]
fn criterion_06_curriculum_contract() {
    let art = curriculum_artifacts();
    let mut lines = art.full_csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss_3d,loss_rgb,loss_d,loss_n,w_3d,w_rgb,w_d,w_n,lr"
    );
    let mut checked = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let epoch = cols[0] as usize;
        let (w_rgb, w_d, w_n) = (cols[6], cols[7], cols[8]);
        if epoch <= art.lambda0 {
            assert_eq!((w_rgb, w_d, w_n), (0.0, 0.0, 0.0), "epoch {epoch} must be Stage One");
        } else {
            let ramp = art.eta * (epoch - art.lambda0) as f64;
            assert!((w_rgb - ramp.min(art.caps.0)).abs() < 1e-12, "epoch {epoch} rgb weight");
            assert!((w_d - ramp.min(art.caps.1)).abs() < 1e-12, "epoch {epoch} depth weight");
            assert!((w_n - ramp.min(art.caps.2)).abs() < 1e-12, "epoch {epoch} normal weight");
        }
        assert_eq!(cols[5], 1.0, "3D weight is constant");
        checked += 1;
    }
    assert_eq!(checked, art.epochs);
    println!(
        "criterion 06 PASS: CSV weights exactly 0 through epoch {} and min(cap, {:.4}*(e-{})) after",
        art.lambda0, art.eta, art.lambda0
    );
}

#[test]
fn criterion_07_curriculum_trend() {
    let art = curriculum_artifacts();
    let l1_3d = median(art.outcomes.iter().map(|o| o.image_l1_3d).collect());
    let l1_full = median(art.outcomes.iter().map(|o| o.image_l1_full).collect());
    let cd_3d = median(art.outcomes.iter().map(|o| o.cd_3d).collect());
    let cd_full = median(art.outcomes.iter().map(|o| o.cd_full).collect());
    assert!(
        l1_full < l1_3d,
        "median held-out image L1: full {l1_full} vs 3D-only {l1_3d}"
    );
    assert!(cd_full < cd_3d, "median mesh CD: full {cd_full} vs 3D-only {cd_3d}");
    println!(
        "criterion 07 PASS: median image L1 full {l1_full:.4} < 3d {l1_3d:.4}; median CD full {cd_full:.3} < 3d {cd_3d:.3}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: composition oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_composition_oracle() {
    let albedo =
        Albedo::AxisStripe { axis: 0, period: 0.4, even: [0.9, 0.2, 0.1], odd: [0.1, 0.3, 0.9] };
    let beta = 0.01;
    let c1 = Vec3::new(-0.9, 0.0, 0.0);
    let c2 = Vec3::new(0.9, 0.2, 0.1);
    let s1 = Primitive::Sphere { center: c1, radius: 0.45 };
    let s2 = Primitive::Sphere { center: c2, radius: 0.35 };
    let f1 = AnalyticVolumeField {
        sdf: AnalyticSdf::new(s1.clone(), albedo.clone()),
        beta,
        lighting: Lighting::default(),
    };
    let f2 = AnalyticVolumeField {
        sdf: AnalyticSdf::new(s2.clone(), albedo.clone()),
        beta,
        lighting: Lighting::default(),
    };
    let composed = [
        Instance {
            field: &f1,
            bbox: Aabb::new(c1 - Vec3::splat(0.6), c1 + Vec3::splat(0.6)),
            transform: SimilarityTransform::IDENTITY,
        },
        Instance {
            field: &f2,
            bbox: Aabb::new(c2 - Vec3::splat(0.5), c2 + Vec3::splat(0.5)),
            transform: SimilarityTransform::IDENTITY,
        },
    ];
    let union = AnalyticVolumeField {
        sdf: AnalyticSdf::new(Primitive::Union(vec![s1, s2]), albedo),
        beta,
        lighting: Lighting::default(),
    };
    let union_inst = Instance {
        field: &union,
        bbox: Aabb::new(Vec3::new(-1.5, -0.6, -0.6), Vec3::new(1.4, 0.7, 0.6)),
        transform: SimilarityTransform::IDENTITY,
    };

    let mut rng = DetRng::new(88);
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let target = if rng.next_f64() < 0.5 { c1 } else { c2 };
        let offset =
            Vec3::new(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        let origin = Vec3::new(
            rng.uniform(-4.0, 4.0),
            rng.uniform(-4.0, 4.0),
            rng.uniform(-4.0, 4.0),
        )
        .normalized()
            * 3.0;
        let ray = srf_core::geom::Ray::new(origin, (target + offset - origin).normalized());
        let mut r1 = DetRng::new(5);
        let a = composite_scene_ray(&composed, &ray, 384, false, &mut r1, None);
        let mut r2 = DetRng::new(5);
        let b =
            composite_scene_ray(std::slice::from_ref(&union_inst), &ray, 768, false, &mut r2, None);
        for c in 0..3 {
            worst = worst.max((a.color[c] - b.color[c]).abs());
        }
    }
    assert!(worst < 1e-2, "worst per-channel difference {worst}");

    // Occlusion ordering: a ray through both spheres reports the nearer depth.
    let near = AnalyticVolumeField {
        sdf: AnalyticSdf::sphere(0.4, [1.0, 0.0, 0.0]),
        beta: 0.003,
        lighting: Lighting::default(),
    };
    let far = AnalyticVolumeField {
        sdf: AnalyticSdf::sphere(0.4, [0.0, 1.0, 0.0]),
        beta: 0.003,
        lighting: Lighting::default(),
    };
    let pair = [
        Instance {
            field: &near,
            bbox: Aabb::CANONICAL,
            transform: SimilarityTransform::from_translation(Vec3::new(0.0, 0.0, -1.5)),
        },
        Instance {
            field: &far,
            bbox: Aabb::CANONICAL,
            transform: SimilarityTransform::from_translation(Vec3::new(0.0, 0.0, 1.5)),
        },
    ];
    let ray = srf_core::geom::Ray::new(Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.0, 0.0, 1.0));
    let mut r = DetRng::new(3);
    let both = composite_scene_ray(&pair, &ray, 128, false, &mut r, None);
    let mut r = DetRng::new(3);
    let near_only = composite_scene_ray(&pair[..1], &ray, 128, false, &mut r, None);
    assert!(both.acc > 0.95);
    assert!((both.depth - near_only.depth).abs() < 1e-3, "occlusion depth mismatch");
    println!(
        "criterion 08 PASS: composed vs min-union worst channel diff {worst:.4} (<0.01); occlusion depth respected"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: metrics self-consistency and ICP recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_metrics_and_icp() {
    // Self-consistency through the full eval pipeline.
    let mesh = marching_cubes(|p| p.norm() - 0.5, Aabb::CANONICAL, 32, 0.0);
    let report = evaluate_meshes(&mesh, &mesh, &EvalSettings::default()).unwrap();
    assert!(report.cd < 1e-9, "self CD {}", report.cd);
    assert!((report.fscore - 100.0).abs() < 1e-9);
    assert!(report.nc >= 0.999);

    // ICP recovery: 100 random rigid perturbations of a 2000-point sphere
    // cloud, rotation error < 0.5 deg in at least 95.
    let mut rng = DetRng::new(909);
    let base: Vec<Vec3> = (0..2000)
        .map(|_| Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized())
        .collect();
    let cloud = srf_core::mesh::PointCloud { points: base.clone(), normals: None };
    let mut recovered = 0;
    for _ in 0..100 {
        let axis =
            Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized();
        let angle = rng.uniform(-20.0f64, 20.0).to_radians();
        let rot = Mat3::rotation(axis, angle);
        let shift = Vec3::new(
            rng.uniform(-0.3, 0.3),
            rng.uniform(-0.3, 0.3),
            rng.uniform(-0.3, 0.3),
        );
        let moved = srf_core::mesh::PointCloud {
            points: base.iter().map(|&p| rot.mul_vec(p) + shift).collect(),
            normals: None,
        };
        // Sphere clouds drift slowly through a flat basin before snapping to
        // the exact-twin alignment; give ICP a real iteration budget.
        let result = icp_align(&cloud, &moved, 600, 1e-14).unwrap();
        let err_mat = result.transform.rotation.mul_mat(&rot.transpose());
        let deg = math::acos(((err_mat.m[0] + err_mat.m[4] + err_mat.m[8] - 1.0) * 0.5).clamp(-1.0, 1.0))
            .to_degrees();
        if deg < 0.5 {
            recovered += 1;
        }
    }
    assert!(recovered >= 95, "ICP recovered only {recovered}/100 perturbations");
    println!(
        "criterion 09 PASS: self-eval perfect; ICP recovered {recovered}/100 rigid perturbations (<0.5 deg)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let first = sphere_fit();
    let second = run_sphere_fit("sphere-fit-repeat");
    assert_eq!(first.ckpt_bytes, second.ckpt_bytes, "checkpoints differ between runs");
    assert_eq!(first.csv_bytes, second.csv_bytes, "loss histories differ between runs");
    for (a, b) in first.render_bytes.iter().zip(&second.render_bytes) {
        assert_eq!(a, b, "rendered images differ between runs");
    }
    println!("criterion 10 PASS: re-running the sphere pipeline reproduces checkpoint, CSV, and images byte for byte");
}

// Keep the unused import warnings away in case Path is only used on some
// configurations.
#[allow(dead_code)]
fn _unused(_: &Path) {}
