//! Dominating states from moment envelopes versus worst-case growth, and a
//! complete run that picks them from the moments.
//!
//! `cargo run --release --example moment_envelope -- [t_max]`

use mpm_transient::{
    builtin_model, find_max_state_moments, find_max_state_monotone, run, FindMaxMethod, RunOptions,
    SparseDistribution, StateVec,
};

fn main() -> anyhow::Result<()> {
    let t_max: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300.0);
    let spec = builtin_model("gene_expression")?.with_horizon(t_max)?;
    let start = SparseDistribution::point(StateVec::new(vec![5, 20]));
    println!("from (5, 20):");
    for delta in [1.0, 10.0, 100.0] {
        for ell in [2.0, 4.0, 8.0] {
            let x = find_max_state_moments(&start, 0.0, delta, ell, &spec)?;
            println!("  delta {delta:>5}  ell {ell}  x_max {:?}", &x[..]);
        }
    }
    println!("  worst case after 5 jumps: {:?}", &find_max_state_monotone(&start, 5, &spec)[..]);

    for method in [FindMaxMethod::Monotone, FindMaxMethod::Moments] {
        let res = run(
            &spec,
            &RunOptions {
                method,
                r_star: 20,
                ..RunOptions::default()
            },
        )?;
        println!(
            "{method:?}: windows {}, error {:.3e}, retries {}, fallbacks {}",
            res.ledger.steps.len(),
            res.total_error(),
            res.exceed_retries,
            res.fallbacks
        );
    }
    Ok(())
}
