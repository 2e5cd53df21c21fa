// One-seed rehearsal of the curriculum-vs-3D-only comparison.
use srf_core::mesh::marching_cubes;
use srf_core::metrics::{evaluate_meshes, EvalSettings};
use srf_core::render::{render_view, Instance, RenderSettings};
use srf_core::train::*;
use srf_core::field::FieldConfig;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let grid_res: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let epochs: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(120);
    let iters: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(4);
    let m: usize = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(24);
    let (_, scene) = srf::scenes::load_scene("sphere_box").unwrap();
    // 10 ring cameras: train on 8, hold out 2.
    let center = scene.world_bounds().center();
    let cams = orbit_cameras(center, 3.2, 18.0, 10, 48, 48, 45.0);
    let t0 = std::time::Instant::now();
    let views: Vec<GroundTruthView> = cams.iter().map(|c| sphere_trace_gt(&scene, c)).collect();
    println!("GT gen: {:?}", t0.elapsed());
    let train_idx = [0usize, 1, 2, 3, 5, 6, 7, 8];
    let held_idx = [4usize, 9];
    let train_views: Vec<GroundTruthView> = train_idx.iter().map(|&i| views[i].clone()).collect();

    let mk_config = |full: bool| TrainConfig {
        epochs,
        seed,
        max_iterations_per_epoch: iters,
        samples_per_ray: m,
        supervision: SupervisionSource::Grid { resolution: grid_res },
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
    };

    let run = |full: bool| {
        let config = mk_config(full);
        let mut fields = Vec::new();
        for i in 0..scene.objects.len() {
            let t = std::time::Instant::now();
            let r = train_object(&scene, i, &train_views, &config).unwrap();
            println!("  obj {i} ({}) trained in {:?} diverged={:?}", if full {"full"} else {"3d"}, t.elapsed(), r.diverged_at);
            fields.push(r.field);
        }
        // Held-out image L1 over GT-masked pixels.
        let instances: Vec<Instance> = fields
            .iter()
            .zip(&scene.objects)
            .map(|(f, o)| Instance { field: f, bbox: f.bbox, transform: o.transform })
            .collect();
        let settings = RenderSettings { samples_per_ray: 32, background: scene.background, ..Default::default() };
        let mut l1 = 0.0;
        let mut count = 0usize;
        let t = std::time::Instant::now();
        for &h in &held_idx {
            let imgs = render_view(&instances, &views[h].camera, &settings);
            for (i, px) in imgs.color.iter().enumerate() {
                if views[h].mask[i] != NO_HIT {
                    for c in 0..3 {
                        l1 += (px[c] - views[h].color[i][c]).abs();
                    }
                    count += 3;
                }
            }
        }
        println!("  renders in {:?}", t.elapsed());
        let image_l1 = l1 / count as f64;
        // Mesh CD per object vs analytic meshes, mean.
        let mut cd = 0.0;
        for (f, o) in fields.iter().zip(&scene.objects) {
            let pred = marching_cubes(|p| f.sdf(p), f.bbox, 64, 0.0);
            let gt = marching_cubes(|p| o.sdf.eval(p), o.bbox, 64, 0.0);
            let report = evaluate_meshes(&pred, &gt, &EvalSettings { samples: 50_000, ..Default::default() }).unwrap();
            println!("  obj {} cd {:.4} f {:.2} nc {:.4}", o.id, report.cd, report.fscore, report.nc);
            cd += report.cd;
        }
        (image_l1, cd / fields.len() as f64)
    };

    let t = std::time::Instant::now();
    let (l1_3d, cd_3d) = run(false);
    let (l1_full, cd_full) = run(true);
    println!("seed {seed} grid {grid_res} epochs {epochs}: elapsed {:?}", t.elapsed());
    println!("3D-only: image L1 {l1_3d:.4} mesh CD {cd_3d:.4}");
    println!("full:    image L1 {l1_full:.4} mesh CD {cd_full:.4}");
    println!("full better on L1: {} CD: {}", l1_full < l1_3d, cd_full < cd_3d);
}
