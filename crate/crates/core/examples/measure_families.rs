// Builds one coordination measure per family and prints what the rest of
// the crate consumes: integrability, a few monomial integrals, and what is
// left after truncating near the identity.

use dicekit::measures::{block, Atom, HarmonicComponent, MeasureFamily};
use dicekit::rng::{stream, Purpose};
use dicekit::{CoordinationMeasure, StochasticMatrix, TransitionCountMatrix};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let d = 3;
    let eta = vec![0.8, 1.4, 2.0];
    let measures = vec![
        CoordinationMeasure::atomic(vec![Atom {
            weight: 0.5,
            matrix: StochasticMatrix::from_rows(&[
                vec![0.2, 0.8, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.3, 0.3, 0.4],
            ])?,
        }])?,
        CoordinationMeasure::new(
            d,
            MeasureFamily::MultinomialSplitting {
                eta: eta.clone(),
                blocks: vec![block(&[0, 1, 2], 1.0)],
            },
        )?,
        CoordinationMeasure::new(
            d,
            MeasureFamily::DirichletSplitting {
                eta: eta.clone(),
                blocks: vec![block(&[0, 1], 0.6), block(&[0, 1, 2], 0.4)],
            },
        )?,
        CoordinationMeasure::new(
            d,
            MeasureFamily::HarmonicSplitting {
                eta: eta.clone(),
                components: vec![HarmonicComponent { source: 0, targets: vec![1, 2], rate: 1.0 }],
            },
        )?,
        CoordinationMeasure::new(
            d,
            MeasureFamily::InstantExchange {
                eta: vec![1.8, 2.2, 1.5],
                kappa: 0.9,
                blocks: vec![block(&[0, 1], 1.0)],
            },
        )?,
    ];

    // one particle 1 -> 2 and one staying at 1
    let k = TransitionCountMatrix::from_rows(&[vec![1, 1, 0], vec![0, 0, 0], vec![0, 0, 0]])?;
    let mut rng = stream(1, 0, 0, Purpose::Misc);
    for nu in &measures {
        let cut = nu.truncate(0.05)?;
        println!(
            "{:<22} integrability {:.4}  ∫U^K {:.5}  mass beyond 0.05 {:.4}  neglected {:.2e}",
            nu.family().tag(),
            nu.integrability_value()?,
            nu.monomial_integral(&k)?,
            cut.mass(),
            cut.neglected_integrability()
        );
        if !cut.is_empty() {
            println!("  sample {}", cut.sample(&mut rng)?);
        }
    }

    // divergent parameters are refused with the offending component named
    let bad = CoordinationMeasure::new(
        2,
        MeasureFamily::HarmonicSplitting {
            eta: vec![0.0, 1.0],
            components: vec![HarmonicComponent { source: 0, targets: vec![1], rate: 1.0 }],
        },
    );
    println!("eta = 0: {}", bad.err().map(|e| e.to_string()).unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
