//! Exclusive switch with worst-case dominating states.
//!
//! `cargo run --release --example exclusive_switch -- [R*] [t_max]`

use std::time::Instant;

use mpm_transient::{builtin_model, run, FindMaxMethod, RunOptions};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let r_star: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let t_max: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3600.0);

    let spec = builtin_model("exclusive_switch")?.with_horizon(t_max)?;
    let opts = RunOptions {
        r_star,
        method: FindMaxMethod::Monotone,
        ..RunOptions::default()
    };
    let start = Instant::now();
    let res = run(&spec, &opts)?;
    let (b, p, r) = res.ledger.split_percent();
    println!("R* = {r_star}, t = {t_max}");
    println!("  total error      {:.3e}", res.total_error());
    println!("  max window |S|   {}", res.max_window_size);
    println!("  final support    {}", res.final_distribution().len());
    println!("  windows          {}", res.ledger.steps.len());
    println!("  loss split       bounding {b:.1}%  poisson {p:.1}%  prune {r:.1}%");
    println!("  runtime          {:.1?}", start.elapsed());

    // mass in the two lobes of the (P1, P2) marginal
    let marginal = res.final_distribution().marginal(&[0, 1]);
    let (mut both, mut lobes) = (0.0, 0.0);
    for (x, p) in marginal.iter() {
        match (x[0] >= 5, x[1] >= 5) {
            (true, true) => both += p,
            (true, false) | (false, true) => lobes += p,
            _ => {}
        }
    }
    println!("  mass P1>=5 & P2>=5: {both:.4}, single lobe: {lobes:.4}");
    Ok(())
}
