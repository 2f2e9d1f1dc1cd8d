//! Min-bound jump probabilities and the mass one bounded step loses, for
//! shrinking window lengths.
//!
//! `cargo run --example single_window`

use mpm_transient::{builtin_model, dtmc_step, jump_bound, self_loop_bound, SparseDistribution, StateVec, StepPlan};

fn main() -> anyhow::Result<()> {
    let spec = builtin_model("gene_expression")?;
    let x = [3u32, 10];
    let x_max = StateVec::new(vec![8, 15]);
    let v = SparseDistribution::point(StateVec::new(x.to_vec()));
    println!("{:>7}  {:>12}  {:>12}  {:>12}", "delta", "u_transcr", "u_self", "defect");
    for delta in [1000.0, 100.0, 10.0, 1.0, 0.1] {
        let plan = StepPlan::new(&spec, x_max.clone(), 1200.0, delta, 1e-10, 5)?;
        let step = dtmc_step(&v, &plan, &spec, 0.0)?;
        println!(
            "{delta:>7}  {:>12.6e}  {:>12.6e}  {:>12.6e}",
            jump_bound(0, &x, &plan, &spec),
            self_loop_bound(&x, &plan, &spec)?,
            step.step_defect
        );
    }
    Ok(())
}
