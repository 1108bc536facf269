// Typed genealogies: mergers plus type switching driven by a particle
// system, and the checks that tie the two together.

use dicekit::coalescent::{
    coalescent_consistency_test, mrca_times, simulate_coalescent, switching_embedding_test,
    CoalescenceSpec, CoalescentParams, MergerAtom, TypedPartition,
};
use dicekit::stats::MeanEstimate;
use dicekit::{Configuration, CoordinationMeasure, DiceParams, RateMatrixA, StochasticMatrix};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let coal = CoalescenceSpec::new(
        vec![0.6, 0.9],
        vec![
            vec![MergerAtom { weight: 0.7, u: vec![0.5, 0.3] }],
            vec![MergerAtom { weight: 0.4, u: vec![0.2, 0.8] }],
        ],
    )?;
    let switch = DiceParams::new(
        RateMatrixA::from_rows(&[vec![0.0, 0.5], vec![0.8, 0.0]])?,
        CoordinationMeasure::single_atom(
            0.6,
            StochasticMatrix::from_rows(&[vec![0.4, 0.6], vec![0.3, 0.7]])?,
        )?,
    )?;
    let params = CoalescentParams::new(coal.clone(), switch.clone())?;

    let pi0 = TypedPartition::parse("1:1|2:2|3:1|4:2|5:1", 2)?;
    let path = simulate_coalescent(&pi0, &params, 2.0, 11, 1e-3)?;
    println!("start {}", path.initial);
    for (t, pi) in &path.events {
        println!("  t = {t:.3}  {pi}");
    }

    let kingman = CoalescentParams::new(
        CoalescenceSpec::kingman(1.0)?,
        DiceParams::independent(RateMatrixA::zero(1)),
    )?;
    let three = TypedPartition::parse("1:1|2:1|3:1", 1)?;
    let est = MeanEstimate::from_samples(&mrca_times(&three, &kingman, 20_000, 2, 1e-3)?);
    println!("Kingman, 3 lineages: mean time to MRCA {:.4} ± {:.4} (4/3 expected)", est.mean, est.se);

    let restriction = coalescent_consistency_test(&coal, &switch, &pi0.restrict(4)?, 2, 0.5, 5_000, 3, 1e-3)?;
    println!("restriction to 2 of 4: p = {:.3} ({})", restriction.homogeneity.p_value, restriction.verdict);

    let x0 = Configuration::from_one_based(&[1, 2, 1], 2)?;
    let embed = switching_embedding_test(&switch, &x0, 0.8, 5_000, 4, 1e-3)?;
    println!("block types vs particles: p = {:.3} ({})", embed.homogeneity.p_value, embed.verdict);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
