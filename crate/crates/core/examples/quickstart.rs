//! Select a shared sparse model on synthetic data and print the adjusted
//! confidence intervals next to the truth.
//!
//! ```sh
//! cargo run -p mtsi-core --example quickstart
//! ```

use mtsi_core::inference::{confidence_intervals, infer_mtl};
use mtsi_core::mtl::{run_mtl_selection, uniform_lambda_max, MtlConfig};
use mtsi_core::sim::{generate_coefficients, generate_dataset, projected_target};
use mtsi_core::types::RandomizationSpec;
use nalgebra::DVector;

fn main() -> mtsi_core::Result<()> {
    let (n, p, k) = (200, 30, 3);
    let beta = generate_coefficients(p, k, 0.85, 0.2, 7)?;
    let dataset = generate_dataset(n, p, 0.3, &beta, 1.0, 11)?;

    let spec = RandomizationSpec::new(1.0, 5)?;
    let zeros = vec![DVector::zeros(p); k];
    let lambda = 0.3 * uniform_lambda_max(&dataset, &zeros);
    let outcome = run_mtl_selection(&dataset, &spec, &MtlConfig::with_lambda(lambda))?;
    println!(
        "selected {} (task, feature) pairs at lambda = {lambda:.2}",
        outcome.total_active()
    );

    let result = infer_mtl(&dataset, &outcome, &[1.0; 3])?;
    // The intervals target the best linear coefficients of the selected
    // model, which absorb whatever the selection left out.
    let targets: Vec<DVector<f64>> = (0..k)
        .map(|t| {
            projected_target(
                &dataset.task(t).x,
                &beta.column(t).into_owned(),
                &outcome.tasks[t].active,
            )
        })
        .collect::<mtsi_core::Result<_>>()?;
    println!(
        "{:>4} {:>7} {:>9} {:>20} {:>9}",
        "task", "feature", "target", "90% interval", "covers"
    );
    for rec in confidence_intervals(&result, 0.1, "MTL(1.0)+SI") {
        let i = outcome.tasks[rec.task]
            .active
            .iter()
            .position(|&j| j == rec.feature)
            .unwrap();
        let target = targets[rec.task][i];
        println!(
            "{:>4} {:>7} {:>9.3} [{:>8.3}, {:>8.3}] {:>9}",
            rec.task,
            rec.feature,
            target,
            rec.lower,
            rec.upper,
            rec.covers(target)
        );
    }
    Ok(())
}
