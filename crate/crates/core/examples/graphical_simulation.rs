// Simulates the particle system, writes its trajectory, and checks that the
// first `m` particles of an `n` system behave like an `m` system.

use dicekit::measures::{Atom, MeasureFamily};
use dicekit::simulator::{
    consistency_statistical_test, empirical_frequency, restrict_trajectory, simulate_graphical,
    SimulationSpec,
};
use dicekit::{Configuration, CoordinationMeasure, DiceParams, RateMatrixA, StochasticMatrix};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let nu = CoordinationMeasure::new(
        2,
        MeasureFamily::Atomic(vec![Atom {
            weight: 0.8,
            matrix: StochasticMatrix::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.4]])?,
        }]),
    )?;
    let p = DiceParams::new(RateMatrixA::from_rows(&[vec![0.0, 0.5], vec![0.2, 0.0]])?, nu)?;
    let x0 = Configuration::from_one_based(&[1, 1, 1, 2, 2], 2)?;

    let spec = SimulationSpec::new(x0.len(), p.clone(), 2.0, 1e-3, 42)?;
    let path = simulate_graphical(&spec, &x0)?;
    println!(
        "{} events ({} changed something), final state {}",
        path.events.len(),
        path.effective_events(),
        path.final_state()
    );
    let mut csv = Vec::new();
    path.write_csv(&mut csv)?;
    for line in String::from_utf8(csv)?.lines().take(4) {
        println!("  {line}");
    }

    let first_two = restrict_trajectory(&path, 2)?;
    println!("particles 1..2 alone: {} events", first_two.events.len());
    let freq = empirical_frequency(&path)?;
    println!("type frequencies at t = 1: {:?}", freq.value_at(1.0));

    let report = consistency_statistical_test(&p, &x0, 2, 1.0, 4_000, 7, 1e-3)?;
    println!(
        "restriction test: p = {:.3}, exact fit p = {:.3}, verdict {}",
        report.homogeneity.p_value,
        report.exact_fit_restricted.as_ref().map_or(f64::NAN, |r| r.p_value),
        report.verdict
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
