// Box-object diagnosis: where does the reconstruction error live?
use srf_core::mesh::marching_cubes;
use srf_core::metrics::{evaluate_meshes, EvalSettings};
use srf_core::train::*;
use srf_core::field::FieldConfig;

fn main() {
    let grid: Option<usize> = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let iters: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let (_, scene) = srf::scenes::load_scene("sphere_box").unwrap();
    let center = scene.world_bounds().center();
    let cams = orbit_cameras(center, 3.2, 18.0, 8, 56, 56, 45.0);
    let views: Vec<GroundTruthView> = cams.iter().map(|c| sphere_trace_gt(&scene, c)).collect();
    let config = TrainConfig {
        epochs,
        seed: 1,
        max_iterations_per_epoch: iters,
        supervision: match grid {
            Some(r) => SupervisionSource::Grid { resolution: r },
            None => SupervisionSource::Analytic,
        },
        schedule: CurriculumSchedule { stage_two_start: StageTwoStart::Epoch(usize::MAX), ..Default::default() },
        field: FieldConfig::desk(),
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let r = train_object(&scene, 1, &views, &config).unwrap();
    println!("trained in {:?}", t.elapsed());
    let obj = &scene.objects[1];
    let pred = marching_cubes(|p| r.field.sdf(p), r.field.bbox, 64, 0.0);
    println!("mesh: {} verts {} tris", pred.positions.len(), pred.triangles.len());
    // Residual |s_true| at mesh vertices
    let mut res: Vec<f64> = pred.positions.iter().map(|&v| obj.sdf.eval(v).abs()).collect();
    res.sort_by(f64::total_cmp);
    let n = res.len();
    println!("|s_true| at verts: p50 {:.4} p90 {:.4} p99 {:.4} max {:.4}", res[n/2], res[n*9/10], res[n*99/100], res[n-1]);
    let junk = res.iter().filter(|&&x| x > 0.06).count();
    println!("junk verts (>0.06 from true surface): {} / {}", junk, n);
    let gt = marching_cubes(|p| obj.sdf.eval(p), obj.bbox, 64, 0.0);
    let report = evaluate_meshes(&pred, &gt, &EvalSettings { samples: 50_000, ..Default::default() }).unwrap();
    println!("cd {:.4} f {:.2} nc {:.4}", report.cd, report.fscore, report.nc);
    let last = r.history.records.last().unwrap();
    println!("final loss_3d {:.5}", last.loss_3d);
    let err = held_out_sdf_error(&r.field, &obj.sdf, obj.bbox, 2000, 2000, 0.05, 999);
    println!("held-out |err|: {:.5}", err);
}
