use std::time::Instant;
fn main() {
    let xs: Vec<f64> = (0..1_000_000).map(|i| (i as f64 * 0.7919) % 8.0 - 4.0).collect();
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += libm::exp(x); }
    println!("libm exp: {:.1} ns/call (sink {acc:.1})", t.elapsed().as_nanos() as f64 / 1e6);
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += libm::log(1.0 + x.abs()); }
    println!("libm log: {:.1} ns/call (sink {acc:.1})", t.elapsed().as_nanos() as f64 / 1e6);
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += srf_core::math::softplus(x); }
    println!("softplus: {:.1} ns/call (sink {acc:.1})", t.elapsed().as_nanos() as f64 / 1e6);
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += srf_core::math::sigmoid(x); }
    println!("sigmoid:  {:.1} ns/call (sink {acc:.1})", t.elapsed().as_nanos() as f64 / 1e6);
    // std exp for comparison
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += x.exp(); }
    println!("std exp:  {:.1} ns/call (sink {acc:.1})", t.elapsed().as_nanos() as f64 / 1e6);
}
