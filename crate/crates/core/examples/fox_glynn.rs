//! Right truncation points and Poisson weights over a range of means.
//!
//! `cargo run --example fox_glynn`

use mpm_transient::{right_truncation, PoissonTruncation};

fn main() {
    println!("{:>8}  {:>7}  {:>6}  {:>22}", "mu", "eps", "R", "captured");
    for mu in [0.065, 0.1, 1.0, 10.0, 100.0, 1000.0, 1e5] {
        for eps in [1e-6, 1e-10] {
            let tr = PoissonTruncation::new(mu, eps);
            println!("{mu:>8}  {eps:>7.0e}  {:>6}  {:>22.17}", tr.right_point, tr.captured_mass);
        }
    }
    // largest mean that still fits in R = 5 jumps at eps = 1e-10
    let (mut lo, mut hi) = (0.0f64, 5.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if right_truncation(mid, 1e-10) <= 5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    println!("largest mu with R <= 5 at eps 1e-10: {lo:.6}");
}
