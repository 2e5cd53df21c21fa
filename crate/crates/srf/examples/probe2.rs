use srf_core::geom::Vec3;
use srf_core::rng::DetRng;

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let (field, _meta) = srf::checkpoint::load_object_field(std::path::Path::new(&path)).unwrap();
    // Mesh vertex radial distribution
    let mesh = srf_core::mesh::marching_cubes(|p| field.sdf(p), field.bbox, 64, 0.0);
    let mut radii: Vec<f64> = mesh.positions.iter().map(|v| v.norm()).collect();
    radii.sort_by(f64::total_cmp);
    let n = radii.len();
    println!("mesh vertices: {n}");
    for q in [0, 1, 5, 25, 50, 75, 95, 99, 100] {
        let idx = (n - 1) * q / 100;
        println!("radius p{q}: {:.4}", radii[idx]);
    }
    // Far-field errors at uniform box points
    let mut rng = DetRng::new(31);
    let mut errs: Vec<(f64, Vec3)> = (0..2000)
        .map(|_| {
            let p = Vec3::new(rng.uniform(-1.0,1.0), rng.uniform(-1.0,1.0), rng.uniform(-1.0,1.0));
            ((field.sdf(p) - (p.norm() - 0.5)).abs(), p)
        })
        .collect();
    errs.sort_by(|a,b| a.0.total_cmp(&b.0));
    println!("uniform-point |err|: p50 {:.4} p90 {:.4} p99 {:.4} max {:.4} at {:?}",
        errs[1000].0, errs[1800].0, errs[1980].0, errs[1999].0, errs[1999].1);
    let mean: f64 = errs.iter().map(|e| e.0).sum::<f64>() / errs.len() as f64;
    println!("uniform mean: {:.5}", mean);
    // near-band points
    let mut errs2: Vec<f64> = (0..2000)
        .map(|_| {
            let dir = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized();
            let p = dir * 0.5 + Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * 0.05;
            (field.sdf(p) - (p.norm() - 0.5)).abs()
        })
        .collect();
    errs2.sort_by(f64::total_cmp);
    let mean2: f64 = errs2.iter().sum::<f64>() / errs2.len() as f64;
    println!("near-band |err|: mean {:.5} p90 {:.4}", mean2, errs2[1800]);
}
