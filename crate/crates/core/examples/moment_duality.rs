// Mixed moments of the frequency process computed from the counting dual.

use dicekit::definetti::{
    dual_generator_apply, dual_rates, generator_apply, moment_duality_check, DualChain,
    FrequencyState,
};
use dicekit::{CoordinationMeasure, CountVector, DiceParams, RateMatrixA, StochasticMatrix};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // balanced A, doubly stochastic atom
    let p = DiceParams::new(
        RateMatrixA::symmetric(2, 1.0)?,
        CoordinationMeasure::single_atom(
            0.5,
            StochasticMatrix::from_rows(&[vec![0.25, 0.75], vec![0.75, 0.25]])?,
        )?,
    )?;
    let b = CountVector::new(vec![2, 1]);
    for (target, rate) in dual_rates(&b, &p)? {
        println!("{b} -> {target} at rate {rate:.4}");
    }

    let r = FrequencyState::new(vec![0.8, 0.2])?;
    println!(
        "generator on r^b: {:.6}, dual side: {:.6}",
        generator_apply(&b, &r, &p)?,
        dual_generator_apply(&b, &r, &p)?
    );

    // the dual on |b| = 3 is a finite chain, so its law is exp(tG)
    let chain = DualChain::new(3, &p)?;
    let g = chain.generator();
    let law = (g * 0.5).exp();
    let start = chain.index_of(&b).expect("composition of 3");
    let exact: f64 = chain
        .states()
        .iter()
        .enumerate()
        .map(|(k, c)| law[(start, k)] * c.monomial(r.values()))
        .sum();

    let report = moment_duality_check(&r, &b, 0.5, &p, 20_000, 3, 1e-3)?;
    println!(
        "E[R(0.5)^b]: frequency {:.5} ± {:.5}, dual {:.5} ± {:.5}, exact {exact:.5}, verdict {}",
        report.lhs.mean, report.lhs.se, report.rhs.mean, report.rhs.se, report.verdict
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
