// Relabelling particles leaves the generator unchanged, while a generator
// that singles out particle 1 is caught.

use dicekit::combinatorics::all_permutations;
use dicekit::measures::{block, MeasureFamily};
use dicekit::rates::{build_generator, check_permutation_commutation};
use dicekit::{Configuration, CoordinationMeasure, DiceParams, GeneratorMatrix, Permutation, RateMatrixA};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = DiceParams::new(
        RateMatrixA::symmetric(3, 0.3)?,
        CoordinationMeasure::new(
            3,
            MeasureFamily::MultinomialSplitting {
                eta: vec![1.0, 2.0, 3.0],
                blocks: vec![block(&[0, 1, 2], 0.8)],
            },
        )?,
    )?;
    let q = build_generator(3, &p)?;
    let worst = all_permutations(3)
        .iter()
        .map(|s| check_permutation_commutation(&q, s, None))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("all 6 relabellings: max |Q(xσ, yσ) - Q(x, y)| = {worst:.1e}");

    // partial exchangeability: σ must keep the blocks of equal initial types
    let x0 = Configuration::from_one_based(&[1, 1, 3], 3)?;
    let inside = Permutation::from_one_based(&[2, 1, 3])?;
    let across = Permutation::from_one_based(&[3, 2, 1])?;
    println!("swap 1,2 preserves {x0}: {}", inside.preserves(&x0));
    println!(
        "swap 1,3 from {x0}: {}",
        check_permutation_commutation(&q, &across, Some(&x0))
            .err()
            .map(|e| e.to_string())
            .unwrap_or_default()
    );

    // make particle 1 leave type 1 faster than the others
    let mut corrupted = q.matrix().clone();
    for x in 0..q.states() {
        for y in 0..q.states() {
            if x != y && q.state(x).get(0) == 0 && q.state(y).get(0) != 0 {
                corrupted[(x, y)] += 0.2;
                corrupted[(x, x)] -= 0.2;
            }
        }
    }
    let bad = GeneratorMatrix::from_dense(3, 3, corrupted)?;
    let sigma = Permutation::from_one_based(&[2, 1, 3])?;
    println!(
        "label-dependent generator: residual {:.3}",
        check_permutation_commutation(&bad, &sigma, None)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
