use srf_core::geom::Vec3;
use srf_core::rng::DetRng;

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let (field, _meta) = srf::checkpoint::load_object_field(std::path::Path::new(&path)).unwrap();
    let mut rng = DetRng::new(999);
    let mut residuals = Vec::new();
    for _ in 0..4000 {
        let dir = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized();
        let p = dir * 0.5;
        residuals.push((field.sdf(p).abs(), p));
    }
    residuals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = residuals.len();
    for q in [50, 75, 90, 95, 99] {
        println!("p{q}: {:.5}", residuals[n * q / 100].0);
    }
    println!("max: {:.5} at {:?}", residuals[n - 1].0, residuals[n - 1].1);
    // Spatial pattern: mean residual per z-slab and per octant
    let mut upper = (0.0, 0);
    let mut lower = (0.0, 0);
    let mut front = (0.0, 0);
    let mut back = (0.0, 0);
    for (r, p) in &residuals {
        if p.y > 0.0 { upper.0 += r; upper.1 += 1 } else { lower.0 += r; lower.1 += 1 }
        if p.z < 0.0 { front.0 += r; front.1 += 1 } else { back.0 += r; back.1 += 1 }
    }
    println!("mean |s| upper y: {:.5} lower y: {:.5}", upper.0/upper.1 as f64, lower.0/lower.1 as f64);
    println!("mean |s| front z (camera side): {:.5} back z: {:.5}", front.0/front.1 as f64, back.0/back.1 as f64);
    // Held-out near-band error
    let sdf = srf_core::sdf::AnalyticSdf::sphere(0.5, [1.0;3]);
    let err = srf_core::train::held_out_sdf_error(&field, &sdf, srf_core::Aabb::CANONICAL, 2000, 2000, 0.05, 4242);
    println!("held-out mean |s_hat - s|: {:.5}", err);
    // Gradient magnitude at surface (eikonal sanity)
    let mut gnorms = Vec::new();
    for k in 0..200 {
        let (_, p) = residuals[k * n / 200];
        let e = 1e-3;
        let g = Vec3::new(
            field.sdf(p + Vec3::new(e,0.,0.)) - field.sdf(p - Vec3::new(e,0.,0.)),
            field.sdf(p + Vec3::new(0.,e,0.)) - field.sdf(p - Vec3::new(0.,e,0.)),
            field.sdf(p + Vec3::new(0.,0.,e)) - field.sdf(p - Vec3::new(0.,0.,e)),
        ) * (1.0/(2.0*e));
        gnorms.push(g.norm());
    }
    gnorms.sort_by(f64::total_cmp);
    println!("grad norm at surface: p10 {:.3} p50 {:.3} p90 {:.3}", gnorms[20], gnorms[100], gnorms[180]);
}
