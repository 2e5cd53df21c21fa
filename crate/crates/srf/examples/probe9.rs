use srf_core::autodiff::Tape;
use srf_core::field::{FieldConfig, ObjectField, TapedField};
use srf_core::geom::{Camera, Mat3, Vec3};
use srf_core::rng::DetRng;
use std::time::Instant;

fn main() {
    let camera = Camera::new(64.0, 64.0, 32.0, 32.0, 64, 64, Mat3::IDENTITY, Vec3::new(0.0, 0.0, -3.0));
    let field = ObjectField::init(FieldConfig::desk(), camera, 7);
    let mut rng = DetRng::new(1);
    let pts: Vec<Vec3> = (0..2048)
        .map(|_| Vec3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
        .collect();

    // 1. plain forward
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..5 {
        for &p in &pts {
            acc += field.sdf(p);
        }
    }
    println!("plain sdf: {:.1} us/eval (sink {acc:.3})", t.elapsed().as_micros() as f64 / (5.0 * 2048.0));

    // 2. taped forward only
    let mut tape = Tape::new();
    let t = Instant::now();
    for _ in 0..5 {
        tape.clear();
        let staged = TapedField::stage(&mut tape, &field);
        let mut sum = None;
        for &p in &pts {
            let s = staged.sdf(&mut tape, p);
            sum = Some(match sum { Some(a) => tape.add(a, s), None => s });
        }
    }
    println!("taped fwd: {:.1} us/eval ({} nodes)", t.elapsed().as_micros() as f64 / (5.0*2048.0), tape.node_count());

    // 3. taped forward + backward
    let t = Instant::now();
    for _ in 0..5 {
        tape.clear();
        let staged = TapedField::stage(&mut tape, &field);
        let mut sum = None;
        for &p in &pts {
            let s = staged.sdf(&mut tape, p);
            sum = Some(match sum { Some(a) => tape.add(a, s), None => s });
        }
        let root = sum.unwrap();
        let g = tape.backward(root, &field.store).unwrap();
        std::hint::black_box(&g);
    }
    println!("taped fwd+bwd: {:.1} us/eval", t.elapsed().as_micros() as f64 / (5.0*2048.0));
}
