use srf_core::geom::{Camera, Vec3};
use srf_core::render::{render_pixel, Instance, RenderSettings};
use srf_core::rng::DetRng;
use srf_core::SimilarityTransform;

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let (field, _meta) = srf::checkpoint::load_object_field(std::path::Path::new(&path)).unwrap();
    let inst = Instance { field: &field, bbox: field.bbox, transform: SimilarityTransform::IDENTITY };
    let settings = RenderSettings {
        samples_per_ray: 128,
        beta_override: Some(0.01),
        ..Default::default()
    };
    let mut rng = DetRng::new(777);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let az = rng.uniform(0.0, std::f64::consts::TAU);
        let el = rng.uniform(-0.9, 0.9);
        let eye = Vec3::new(3.0*el.cos()*az.cos(), 3.0*el.sin(), 3.0*el.cos()*az.sin());
        let cam = Camera::look_at(90.0, 90.0, 32.5, 32.5, 65, 65, eye, Vec3::ZERO, Vec3::new(0.0,1.0,0.0));
        let out = render_pixel(std::slice::from_ref(&inst), &cam, &settings, 32, 32);
        // analytic: ray through center hits sphere r=0.5 at t = 3 - 0.5
        let err = (out.depth - 2.5).abs();
        worst = worst.max(err);
        println!("cam {k}: depth {:.4} err {:.4} acc {:.4}", out.depth, err, out.acc);
    }
    println!("worst: {worst:.4}");
}
