// The type-frequency process of the infinite system: deterministic flow
// between coordinated jumps, and its mean against the closed form.

use dicekit::definetti::{mean_frequency, simulate_frequency_sde, FrequencyState};
use dicekit::measures::{block, MeasureFamily};
use dicekit::stats::MeanEstimate;
use dicekit::{CoordinationMeasure, DiceParams, RateMatrixA};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = DiceParams::new(
        RateMatrixA::from_rows(&[vec![0.0, 0.3, 0.1], vec![0.2, 0.0, 0.2], vec![0.1, 0.4, 0.0]])?,
        CoordinationMeasure::new(
            3,
            MeasureFamily::DirichletSplitting {
                eta: vec![1.0, 1.0, 2.0],
                blocks: vec![block(&[0, 1, 2], 1.5)],
            },
        )?,
    )?;
    let r0 = FrequencyState::new(vec![0.7, 0.2, 0.1])?;

    let path = simulate_frequency_sde(&r0, &p, 3.0, 1e-3, 5)?;
    println!("{} jumps", path.jumps());
    for (t, r) in path.on_grid(6)? {
        println!("  t = {t:.1}  r = {:.4?}", r.values());
    }

    let exact = mean_frequency(&r0, &p, 1.0)?;
    let finals: Vec<Vec<f64>> = (0..2_000)
        .map(|seed| {
            simulate_frequency_sde(&r0, &p, 1.0, 1e-3, seed)
                .and_then(|path| path.final_state())
                .map(|r| r.values().to_vec())
        })
        .collect::<Result<_, _>>()?;
    for (i, want) in exact.iter().enumerate() {
        let xs: Vec<f64> = finals.iter().map(|r| r[i]).collect();
        let est = MeanEstimate::from_samples(&xs);
        println!("E R_{}(1): exact {want:.4}, Monte Carlo {:.4} ± {:.4}", i + 1, est.mean, est.se);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
