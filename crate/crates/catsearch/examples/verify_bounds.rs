//! Empirically checks both theoretical guarantees at reduced trial counts:
//! the finite-class generalization bound by resampling, and the Best-of-N
//! answer-accuracy lower bound on a parameter grid.

use catsearch::core::RngStream;
use catsearch::theory::{
    accuracy_lower_bound, default_accuracy_grid, pac_bayes_bound, verify_accuracy_bound,
    verify_pac_bayes,
};
use catsearch::Result;

fn main() -> Result<()> {
    // Closed-form reference points first.
    println!(
        "generalization bound at kl = 0, n = 101, delta = 0.01: {:.6}",
        pac_bayes_bound(0.0, 101, 0.01)?
    );
    println!(
        "accuracy lower bound (p_cov = 1, delta = 0.05, N = 2, gamma = 0.4, eps = 0.1): {:.6}",
        accuracy_lower_bound(1.0, 0.05, 2, 0.4, 0.1)?
    );

    // Resampling check: fraction of hypothesis draws whose generalization
    // error exceeds the bound must stay within the delta budget.
    let report = verify_pac_bayes(64, 200, 0.1, 300, &RngStream::new(1, 0))?;
    println!(
        "resampling: bound {:.4}, violation fraction {:.4}, violated: {:?}",
        report.bound_value,
        report.mc_estimate.unwrap(),
        report.violated.unwrap(),
    );

    // Grid check: empirical Best-of-N accuracy against the lower bound.
    let reports = verify_accuracy_bound(&default_accuracy_grid(), 2000, &RngStream::new(2, 0))?;
    let vacuous = reports.iter().filter(|r| r.vacuous).count();
    let violated = reports.iter().filter(|r| r.violated == Some(true)).count();
    println!(
        "accuracy grid: {} cells, {} vacuous, {} violated",
        reports.len(),
        vacuous,
        violated,
    );
    for r in reports.iter().take(3) {
        println!(
            "  eps {:.2} gamma {:.1} N {:>2}: accuracy {:.4} vs bound {:.4}",
            r.inputs.epsilon,
            r.inputs.gamma_gap,
            r.inputs.candidate_count,
            r.mc_estimate.unwrap(),
            r.bound_value,
        );
    }
    Ok(())
}
