//! Checks the lower bound against a dense forward integration on a box.
//!
//! `cargo run --release --example verify_against_oracle -- [model] [t] [box, e.g. 60,200] [R*]`

use mpm_transient::{builtin_model, integrate_forward, run, verify_underapprox, RunOptions, StateBox};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = args.next().unwrap_or_else(|| "gene_expression".into());
    let t: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300.0);
    let upper: Vec<u32> = match args.next() {
        Some(s) => s.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => vec![60, 200],
    };
    let r_star: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let spec = builtin_model(&model)?.with_horizon(t)?;
    let started = std::time::Instant::now();
    let res = run(&spec, &RunOptions { r_star, ..RunOptions::default() })?;
    let p_hat = res.final_distribution();

    println!("run time          {:.1?}", started.elapsed());
    let started = std::time::Instant::now();
    let initial = spec.initial().iter().cloned().collect();
    let oracle = integrate_forward(&initial, 0.0, t, &StateBox::new(upper), &spec, 1e-10)?;
    println!("oracle time       {:.1?}", started.elapsed());
    let report = verify_underapprox(p_hat, &oracle, 1e-9);
    println!("states compared   {}", report.states_checked);
    println!("oracle states     {}", oracle.states.len());
    println!("boundary mass     {:.3e}", oracle.boundary_mass);
    println!("max excess        {:.3e}", report.max_excess);
    println!("lost mass         {:.3e}", res.total_error());
    println!("ledger total      {:.3e}", res.ledger.total());
    if let Some(v) = report.worst() {
        println!("worst state       {:?} (lower {:.3e}, reference {:.3e})", &v.state[..], v.lower, v.reference);
    }
    println!("verdict           {}", if report.passed() { "lower bound holds" } else { "VIOLATED" });
    Ok(())
}
