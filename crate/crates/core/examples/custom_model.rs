//! Loads a model file and prints the most likely states at the horizon.
//!
//! `cargo run --example custom_model -- [model.json]`

use mpm_transient::{parse_model, run, RunOptions};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/models/finite_pair.json").into());
    let spec = parse_model(&std::fs::read_to_string(&path)?)?;
    println!("{path}: {} species, {} classes, horizon {}", spec.n(), spec.m(), spec.horizon());
    let res = run(&spec, &RunOptions::default())?;
    let p = res.final_distribution();
    let mut top: Vec<_> = p.iter().collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (x, prob) in top.iter().take(10) {
        println!("  {:?}  {prob:.6e}", &x[..]);
    }
    println!("support {}, error bound {:.3e}", p.len(), res.total_error());
    Ok(())
}
