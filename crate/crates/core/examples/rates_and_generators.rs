// Exact `(b, K)` rates, the consistency equation they satisfy, and the
// finite generator they induce on `[d]^n`.

use dicekit::measures::{block, MeasureFamily};
use dicekit::rates::{
    build_generator, check_consistency_equation, gamma, lumped_generator,
};
use dicekit::{
    Configuration, CoordinationMeasure, CountVector, DiceParams, RateMatrixA,
    TransitionCountMatrix,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let a = RateMatrixA::from_rows(&[vec![0.0, 0.4], vec![0.7, 0.0]])?;
    let nu = CoordinationMeasure::new(
        2,
        MeasureFamily::DirichletSplitting { eta: vec![0.5, 1.5], blocks: vec![block(&[0, 1], 1.0)] },
    )?;
    let p = DiceParams::new(a, nu)?;

    let b = CountVector::new(vec![2, 1]);
    let single = TransitionCountMatrix::from_rows(&[vec![1, 1], vec![0, 1]])?;
    let double = TransitionCountMatrix::from_rows(&[vec![0, 2], vec![1, 0]])?;
    println!("gamma(b = {b}, one move)    = {:.6}", gamma(&b, &single, &p)?);
    println!("gamma(b = {b}, three moves) = {:.6}", gamma(&b, &double, &p)?);

    let report = check_consistency_equation(&p, 4)?;
    println!(
        "consistency equation: {} triples, max residual {:.2e}",
        report.checked, report.max_residual
    );

    let q3 = build_generator(3, &p)?;
    let q2 = build_generator(2, &p)?;
    let lumped = lumped_generator(&q3, 2)?;
    let gap = (lumped.matrix() - q2.matrix()).abs().max();
    println!("generator on [2]^3: {} states, lumped to [2]^2 gap {gap:.2e}", q3.states());

    let x = Configuration::from_one_based(&[1, 1, 2], 2)?;
    let y = Configuration::from_one_based(&[2, 2, 1], 2)?;
    println!("Q({x}, {y}) = {:.6}", q3.rate(&x, &y));
    let pt = q3.transition_matrix(0.5);
    println!("P_0.5({x} -> {x}) = {:.6}", pt[(x.index(), x.index())]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
