//! Times manifold construction and membership at a chosen scale.
//!
//! `cargo run --release -p ddig-core --example scale -- 30000 768`

use std::time::Instant;

use ddig_core::manifold::{evaluate, Manifold, Points};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer"));
    let n = args.next().unwrap_or(3000);
    let dim = args.next().unwrap_or(768);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let real: Vec<f32> = (0..n * dim).map(|_| rng.random::<f32>()).collect();
    let generated: Vec<f32> = (0..n * dim).map(|_| rng.random::<f32>()).collect();

    let t = Instant::now();
    let manifold = Manifold::from_rows(dim, &real, 3).expect("manifold");
    let built = t.elapsed();
    let (result, _) = evaluate(&manifold, &Points::from_f32(dim, &generated), n).expect("metrics");
    println!(
        "n={n} d={dim} threads={} manifold={:.2?} total={:.2?} precision={} coverage={}",
        rayon::current_num_threads(),
        built,
        t.elapsed(),
        result.precision,
        result.coverage
    );
}
