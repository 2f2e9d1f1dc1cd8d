//! Window lengths chosen by bisection for several jump budgets.
//!
//! `cargo run --example step_size_search`

use mpm_transient::{builtin_model, choose_step, FindMaxMethod};

fn main() -> anyhow::Result<()> {
    let spec = builtin_model("exclusive_switch")?;
    let support = spec.initial().iter().cloned().collect();
    println!("{:>4}  {:>12}  {:>9}  {:>3}  {:>10}  x_max", "R*", "delta", "mu", "R", "Lambda(t)");
    for r_star in [1, 2, 5, 10, 20, 50] {
        let plan = choose_step(r_star, 0.0, spec.horizon(), 1e-10, &support, &spec, FindMaxMethod::Monotone, 4.0)?;
        println!(
            "{r_star:>4}  {:>12.6e}  {:>9.5}  {:>3}  {:>10.4}  {:?}",
            plan.delta,
            plan.mu(),
            plan.truncation.right_point,
            plan.lambda.value(0.0),
            &plan.x_max()[..]
        );
    }
    Ok(())
}
