//! Gene expression in a growing cell: checkpoints, error bound and means.
//!
//! `cargo run --release --example gene_expression -- [t_max]`

use mpm_transient::{builtin_model, run, RunOptions};

fn main() -> anyhow::Result<()> {
    let t_max: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(600.0);
    let spec = builtin_model("gene_expression")?.with_horizon(t_max)?;
    let checkpoints: Vec<f64> = (1..4).map(|k| t_max * k as f64 / 4.0).collect();
    let res = run(
        &spec,
        &RunOptions {
            checkpoints,
            ..RunOptions::default()
        },
    )?;
    println!("{:>8}  {:>10}  {:>8}  {:>8}  {:>8}", "t", "error", "states", "mRNA", "protein");
    for (t, p) in &res.checkpoints {
        let (means, _) = p.moments().unwrap_or_default();
        let lost = 1.0 - p.total_mass();
        println!(
            "{t:>8.1}  {lost:>10.3e}  {:>8}  {:>8.3}  {:>8.3}",
            p.len(),
            means.first().copied().unwrap_or(0.0),
            means.get(1).copied().unwrap_or(0.0)
        );
    }
    let (b, p, r) = res.ledger.split_percent();
    println!("windows {}, max |S| {}", res.ledger.steps.len(), res.max_window_size);
    println!("loss split: bounding {b:.1}%  poisson {p:.1}%  prune {r:.1}%");
    Ok(())
}
