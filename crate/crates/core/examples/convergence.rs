// Empirical frequencies of `n` particles approach the frequency process as
// `n` grows; both are driven by the same coordinated jumps.

use dicekit::definetti::{convergence_check, FrequencyState};
use dicekit::{CoordinationMeasure, DiceParams, RateMatrixA, StochasticMatrix};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let r0 = FrequencyState::new(vec![0.6, 0.4])?;
    let sizes = [10, 100, 1000];

    let independent = DiceParams::independent(RateMatrixA::symmetric(2, 1.0)?);
    let report = convergence_check(&independent, &r0, &sizes, 1.0, 300, 1, 1e-3)?;
    for e in &report.entries {
        println!("n = {:>4}: distance {:.4} ± {:.4}", e.n, e.distance, e.se);
    }
    println!("slope {:.3} ({})", report.slope, report.verdict);

    let coordinated = DiceParams::new(
        RateMatrixA::symmetric(2, 0.5)?,
        CoordinationMeasure::single_atom(
            1.0,
            StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.1, 0.9]])?,
        )?,
    )?;
    let report = convergence_check(&coordinated, &r0, &sizes, 1.0, 300, 2, 1e-3)?;
    for e in &report.entries {
        println!(
            "n = {:>4}: distance {:.4}, first moment gap {:.4}",
            e.n, e.distance, e.first_moment_gap
        );
    }
    println!("coordinated: {}", report.verdict);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
