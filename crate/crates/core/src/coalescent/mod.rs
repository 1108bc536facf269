//! Multitype coalescent in which blocks merge (taking one new type) and
//! switch types by a dice process running on block types.

mod partition;

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

pub use partition::{coal_apply, muta_apply, TypedPartition};

use crate::cli_io::format_f64;
use crate::combinatorics::{Configuration, TransitionCountMatrix};
use crate::error::{Error, Result};
use crate::measures::Truncation;
use crate::rates::{gamma, DiceParams};
use crate::rng::{stream, Lane, Purpose};
use crate::simulator::final_states;
use crate::simulator::SimulationSpec;
use crate::stats::{chi_square_homogeneity, ChiSquareReport, Verdict, P_VALUE_FLOOR};

/// Largest number of elements the exact simulator enumerates mergers for.
pub const DEFAULT_ELEMENT_CAP: usize = 12;

/// Point mass `weight·δ_u` on `[0,1]^d`: each block of type `k` joins the
/// merger with probability `u_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergerAtom {
    pub weight: f64,
    pub u: Vec<f64>,
}

/// Binary same-type merger rates `ρ_ii` and atomic measures `Q_i`, indexed
/// by the type of the merged block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescenceSpec {
    d: usize,
    rho: Vec<f64>,
    q: Vec<Vec<MergerAtom>>,
}

impl CoalescenceSpec {
    pub fn new(rho: Vec<f64>, q: Vec<Vec<MergerAtom>>) -> Result<Self> {
        let d = rho.len();
        if d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        if q.len() != d {
            return Err(Error::Shape(format!(
                "{} merger measures for d = {d}",
                q.len()
            )));
        }
        for (i, &r) in rho.iter().enumerate() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "pair merger rate for type {} must be finite and nonnegative, got {r}",
                    i + 1
                )));
            }
        }
        for (i, atoms) in q.iter().enumerate() {
            for a in atoms {
                if !(a.weight > 0.0 && a.weight.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "merger atom weight for type {} must be positive, got {}",
                        i + 1,
                        a.weight
                    )));
                }
                if a.u.len() != d {
                    return Err(Error::Shape(format!(
                        "merger atom has {} coordinates, d = {d}",
                        a.u.len()
                    )));
                }
                if a.u.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::InvalidParameter(format!(
                        "merger atom {:?} leaves [0,1]^d",
                        a.u
                    )));
                }
                if a.u.iter().all(|&x| x == 0.0) {
                    return Err(Error::InvalidParameter(
                        "merger atom at the zero vector never merges anything".into(),
                    ));
                }
            }
        }
        Ok(CoalescenceSpec { d, rho, q })
    }

    /// From a full `d×d` pair-rate matrix, which must be diagonal.
    pub fn from_rho_matrix(rho: &[Vec<f64>], q: Vec<Vec<MergerAtom>>) -> Result<Self> {
        for (i, row) in rho.iter().enumerate() {
            if row.len() != rho.len() {
                return Err(Error::Shape("pair-rate matrix is not square".into()));
            }
            for (k, &v) in row.iter().enumerate() {
                if i != k && v != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "rho[{}][{}] = {v}: a pair merger keeps its type; single-block \
                         type changes belong to the switching mechanism",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        CoalescenceSpec::new((0..rho.len()).map(|i| rho[i][i]).collect(), q)
    }

    /// No mergers at all.
    pub fn none(d: usize) -> Self {
        CoalescenceSpec {
            d,
            rho: vec![0.0; d],
            q: vec![Vec::new(); d],
        }
    }

    /// Single-type binary mergers at rate `rho` per pair.
    pub fn kingman(rho: f64) -> Result<Self> {
        CoalescenceSpec::new(vec![rho], vec![Vec::new()])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn atoms(&self, target: usize) -> &[MergerAtom] {
        &self.q[target]
    }

    pub fn is_zero(&self) -> bool {
        self.rho.iter().all(|&r| r == 0.0) && self.q.iter().all(Vec::is_empty)
    }
}

/// Rates at which a set of blocks merges into one block of a given type.
pub trait MergerRates: Sync {
    fn dim(&self) -> usize;
    /// `members` are distinct 0-based block indices of `partition`.
    fn merger_rate(&self, partition: &TypedPartition, members: &[usize], target: usize) -> f64;
}

fn participation(partition: &TypedPartition, members: &[usize], d: usize) -> (Vec<i32>, Vec<i32>) {
    let mut inside = vec![0i32; d];
    let mut outside = vec![0i32; d];
    for (k, &t) in partition.types().iter().enumerate() {
        if members.contains(&k) {
            inside[t] += 1;
        } else {
            outside[t] += 1;
        }
    }
    (inside, outside)
}

impl MergerRates for CoalescenceSpec {
    fn dim(&self) -> usize {
        self.d
    }

    fn merger_rate(&self, partition: &TypedPartition, members: &[usize], target: usize) -> f64 {
        let (inside, outside) = participation(partition, members, self.d);
        let mut rate = 0.0;
        if members.len() == 2 && inside[target] == 2 {
            rate += self.rho[target];
        }
        for a in &self.q[target] {
            let mut w = a.weight;
            for k in 0..self.d {
                w *= a.u[k].powi(inside[k]) * (1.0 - a.u[k]).powi(outside[k]);
            }
            rate += w;
        }
        rate
    }
}

/// Pair mergers whose rate grows with the current number of blocks. Not
/// consistent: a sub-sample sees its pairs merge faster when more blocks are
/// around. Used as a negative control.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdedPairRates {
    pub d: usize,
    pub rho: f64,
}

impl MergerRates for CrowdedPairRates {
    fn dim(&self) -> usize {
        self.d
    }

    fn merger_rate(&self, partition: &TypedPartition, members: &[usize], target: usize) -> f64 {
        let (inside, _) = participation(partition, members, self.d);
        if members.len() == 2 && inside[target] == 2 {
            self.rho * partition.block_count() as f64
        } else {
            0.0
        }
    }
}

fn check_members(pi: &TypedPartition, members: &[usize], target: usize) -> Result<()> {
    // reuse the checks of the merge itself
    coal_apply(pi, members, target).map(|_| ())
}

/// `λ_{π,J,i}` for the block set `members`.
pub fn coal_rate(
    pi: &TypedPartition,
    members: &[usize],
    target: usize,
    spec: &CoalescenceSpec,
) -> Result<f64> {
    if pi.dim() != spec.dim() {
        return Err(Error::Shape(format!(
            "partition has d = {}, spec has d = {}",
            pi.dim(),
            spec.dim()
        )));
    }
    check_members(pi, members, target)?;
    Ok(spec.merger_rate(pi, members, target))
}

/// Rate of replacing the block types by `types`: `γ_{b,K}` of the switching
/// dice process with `b` the block-type counts.
pub fn switch_rate(pi: &TypedPartition, types: &[usize], p: &DiceParams) -> Result<f64> {
    if types.len() != pi.block_count() {
        return Err(Error::Shape(format!(
            "{} types for {} blocks",
            types.len(),
            pi.block_count()
        )));
    }
    if types == pi.types() {
        return Err(Error::InvalidTransition(
            "new types equal the current ones".into(),
        ));
    }
    let d = p.dim();
    let mut k = TransitionCountMatrix::zeros(d);
    for (&from, &to) in pi.types().iter().zip(types) {
        if to >= d {
            return Err(Error::Range(format!("type {} outside 1..={d}", to + 1)));
        }
        k = k.plus_elementary(from, to);
    }
    gamma(&pi.type_counts(), &k, p)
}

/// Merger and switching mechanisms together.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentParams {
    pub coal: CoalescenceSpec,
    pub switch: DiceParams,
}

impl CoalescentParams {
    pub fn new(coal: CoalescenceSpec, switch: DiceParams) -> Result<Self> {
        if coal.dim() != switch.dim() {
            return Err(Error::Shape(format!(
                "merger spec on d = {}, switching on d = {}",
                coal.dim(),
                switch.dim()
            )));
        }
        Ok(CoalescentParams { coal, switch })
    }
}

/// Partitions right after each event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescentTrajectory {
    pub initial: TypedPartition,
    pub events: Vec<(f64, TypedPartition)>,
    pub horizon: f64,
}

impl CoalescentTrajectory {
    pub fn state_at(&self, t: f64) -> &TypedPartition {
        let idx = self.events.partition_point(|(s, _)| *s <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.events[idx - 1].1
        }
    }

    pub fn final_state(&self) -> &TypedPartition {
        self.events.last().map_or(&self.initial, |(_, p)| p)
    }

    /// First time a single block remains.
    pub fn time_to_mrca(&self) -> Option<f64> {
        if self.initial.block_count() == 1 {
            return Some(0.0);
        }
        self.events
            .iter()
            .find(|(_, p)| p.block_count() == 1)
            .map(|(t, _)| *t)
    }

    /// CSV `time,partition`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "partition"]).map_err(crate::rates::csv_err)?;
        w.write_record([format_f64(0.0), self.initial.to_string()])
            .map_err(crate::rates::csv_err)?;
        for (t, p) in &self.events {
            w.write_record([format_f64(*t), p.to_string()])
                .map_err(crate::rates::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct MergerEvent {
    members: Vec<usize>,
    target: usize,
    rate: f64,
}

fn merger_events<M: MergerRates + ?Sized>(pi: &TypedPartition, mergers: &M) -> Vec<MergerEvent> {
    let b = pi.block_count();
    let mut out = Vec::new();
    for mask in 1u32..(1 << b) {
        let members: Vec<usize> = (0..b).filter(|k| mask >> k & 1 == 1).collect();
        for target in 0..mergers.dim() {
            // relabelling a block to its own type changes nothing
            if members.len() == 1 && pi.types()[members[0]] == target {
                continue;
            }
            let rate = mergers.merger_rate(pi, &members, target);
            if rate > 0.0 {
                out.push(MergerEvent {
                    members: members.clone(),
                    target,
                    rate,
                });
            }
        }
    }
    out
}

fn pick_weighted<'a, T>(items: &'a [T], weight: impl Fn(&T) -> f64, total: f64, rng: &mut ChaCha8Rng) -> &'a T {
    let mut pick = rng.random::<f64>() * total;
    for it in items {
        let w = weight(it);
        if pick < w {
            return it;
        }
        pick -= w;
    }
    items.last().expect("nonempty event list")
}

fn roll(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

#[allow(clippy::too_many_arguments)]
fn run_coalescent<M: MergerRates + ?Sized, F: FnMut(f64, &TypedPartition)>(
    pi0: &TypedPartition,
    mergers: &M,
    switch: &DiceParams,
    truncation: &Truncation,
    horizon: f64,
    stop_at_single: bool,
    rng: &mut ChaCha8Rng,
    mut sink: F,
) -> TypedPartition {
    let d = switch.dim();
    let a = switch.a();
    let coordinated = truncation.mass();
    let mut pi = pi0.clone();
    let mut t = 0.0;
    loop {
        if stop_at_single && pi.block_count() == 1 {
            break;
        }
        let events = merger_events(&pi, mergers);
        let merger_total: f64 = events.iter().map(|e| e.rate).sum();
        let individual: f64 = pi.types().iter().map(|&i| a.out_rate(i)).sum();
        let total = merger_total + individual + coordinated;
        if total <= 0.0 {
            break;
        }
        t += Exp::new(total).expect("positive rate").sample(rng);
        if t > horizon {
            break;
        }
        let pick = rng.random::<f64>() * total;
        let next = if pick < merger_total {
            let e = pick_weighted(&events, |e| e.rate, merger_total, rng);
            coal_apply(&pi, &e.members, e.target).expect("enumerated merger is valid")
        } else if pick < merger_total + individual {
            let blocks: Vec<usize> = (0..pi.block_count()).collect();
            let &k = pick_weighted(&blocks, |&k| a.out_rate(pi.types()[k]), individual, rng);
            let from = pi.types()[k];
            let targets: Vec<usize> = (0..d).filter(|&j| j != from).collect();
            let &to = pick_weighted(&targets, |&j| a.get(from, j), a.out_rate(from), rng);
            let mut types = pi.types().to_vec();
            types[k] = to;
            muta_apply(&pi, &types).expect("valid types")
        } else {
            let u = truncation.sample(rng).expect("nonempty truncation");
            let types: Vec<usize> = pi
                .types()
                .iter()
                .map(|&i| if u.get(i, i) < 1.0 { roll(u.row(i), rng) } else { i })
                .collect();
            if types == pi.types() {
                // thinned: the sampled matrix moved no block
                continue;
            }
            muta_apply(&pi, &types).expect("valid types")
        };
        pi = next;
        sink(t, &pi);
    }
    pi
}

fn check_setup<M: MergerRates + ?Sized>(
    pi0: &TypedPartition,
    mergers: &M,
    switch: &DiceParams,
    epsilon: f64,
    cap: usize,
) -> Result<Truncation> {
    if pi0.size() > cap {
        return Err(Error::Resource(format!(
            "{} elements exceed the merger enumeration cap of {cap}",
            pi0.size()
        )));
    }
    if pi0.dim() != mergers.dim() || pi0.dim() != switch.dim() {
        return Err(Error::Shape(format!(
            "partition on d = {}, mergers on d = {}, switching on d = {}",
            pi0.dim(),
            mergers.dim(),
            switch.dim()
        )));
    }
    switch.nu().truncate(epsilon)
}

/// One path up to time `horizon`.
pub fn simulate_coalescent(
    pi0: &TypedPartition,
    params: &CoalescentParams,
    horizon: f64,
    seed: u64,
    epsilon: f64,
) -> Result<CoalescentTrajectory> {
    simulate_with(pi0, &params.coal, &params.switch, horizon, seed, 0, 0, epsilon)
}

/// Path `(lane, path)` under arbitrary merger rates.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with<M: MergerRates + ?Sized>(
    pi0: &TypedPartition,
    mergers: &M,
    switch: &DiceParams,
    horizon: f64,
    seed: u64,
    lane: Lane,
    path: u64,
    epsilon: f64,
) -> Result<CoalescentTrajectory> {
    let truncation = check_setup(pi0, mergers, switch, epsilon, DEFAULT_ELEMENT_CAP)?;
    let mut rng = stream(seed, lane, path, Purpose::Mergers);
    let mut events = Vec::new();
    run_coalescent(pi0, mergers, switch, &truncation, horizon, false, &mut rng, |t, p| {
        events.push((t, p.clone()))
    });
    Ok(CoalescentTrajectory {
        initial: pi0.clone(),
        events,
        horizon,
    })
}

/// Times until one block remains, for `paths` independent runs.
pub fn mrca_times(
    pi0: &TypedPartition,
    params: &CoalescentParams,
    paths: u64,
    seed: u64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let truncation = check_setup(pi0, &params.coal, &params.switch, epsilon, DEFAULT_ELEMENT_CAP)?;
    (0..paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, 0, k, Purpose::Mergers);
            let mut last = 0.0;
            let end = run_coalescent(
                pi0,
                &params.coal,
                &params.switch,
                &truncation,
                f64::INFINITY,
                true,
                &mut rng,
                |t, _| last = t,
            );
            if end.block_count() == 1 {
                Ok(last)
            } else {
                Err(Error::Precondition(
                    "mergers stop before a single block remains".into(),
                ))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescentTestReport {
    pub n: usize,
    pub m: usize,
    pub paths: u64,
    pub homogeneity: ChiSquareReport,
    pub verdict: Verdict,
}

#[allow(clippy::too_many_arguments)]
fn final_partitions<M: MergerRates + ?Sized>(
    pi0: &TypedPartition,
    mergers: &M,
    switch: &DiceParams,
    truncation: &Truncation,
    horizon: f64,
    paths: u64,
    seed: u64,
    lane: Lane,
) -> Vec<TypedPartition> {
    (0..paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, lane, k, Purpose::Mergers);
            run_coalescent(pi0, mergers, switch, truncation, horizon, false, &mut rng, |_, _| {})
        })
        .collect()
}

fn tabulate<'a, I: IntoIterator<Item = &'a TypedPartition>>(parts: I) -> BTreeMap<String, u64> {
    let mut table = BTreeMap::new();
    for p in parts {
        *table.entry(p.to_string()).or_insert(0) += 1;
    }
    table
}

/// Time-`T` law of `π|[m]` under the `n`-system against the `m`-system
/// started from `π0|[m]`.
#[allow(clippy::too_many_arguments)]
pub fn coalescent_consistency_test<M: MergerRates + ?Sized>(
    mergers: &M,
    switch: &DiceParams,
    pi0: &TypedPartition,
    m: usize,
    horizon: f64,
    paths: u64,
    seed: u64,
    epsilon: f64,
) -> Result<CoalescentTestReport> {
    let n = pi0.size();
    if m == 0 || m >= n {
        return Err(Error::Shape(format!("restriction size {m} must lie in 1..{n}")));
    }
    let truncation = check_setup(pi0, mergers, switch, epsilon, DEFAULT_ELEMENT_CAP)?;
    let small0 = pi0.restrict(m)?;
    let big = final_partitions(pi0, mergers, switch, &truncation, horizon, paths, seed, 0);
    let small = final_partitions(&small0, mergers, switch, &truncation, horizon, paths, seed, 1);
    let restricted: Vec<TypedPartition> = big
        .iter()
        .map(|p| p.restrict(m))
        .collect::<Result<_>>()?;
    let homogeneity = chi_square_homogeneity(&tabulate(&restricted), &tabulate(&small));
    let verdict = Verdict::from_test(&homogeneity, P_VALUE_FLOOR);
    Ok(CoalescentTestReport {
        n,
        m,
        paths,
        homogeneity,
        verdict,
    })
}

/// With mergers off, block types from singletons against the dice process
/// started from the same configuration.
pub fn switching_embedding_test(
    switch: &DiceParams,
    x0: &Configuration,
    horizon: f64,
    paths: u64,
    seed: u64,
    epsilon: f64,
) -> Result<CoalescentTestReport> {
    let n = x0.len();
    let pi0 = TypedPartition::singletons(x0);
    let none = CoalescenceSpec::none(switch.dim());
    let truncation = check_setup(&pi0, &none, switch, epsilon, DEFAULT_ELEMENT_CAP)?;
    let blocks = final_partitions(&pi0, &none, switch, &truncation, horizon, paths, seed, 0);
    let spec = SimulationSpec::new(n, switch.clone(), horizon, epsilon, seed)?;
    let dice = final_states(&spec, x0, 1, paths)?;
    let mut left = BTreeMap::new();
    for p in &blocks {
        *left.entry(p.element_types().index()).or_insert(0) += 1;
    }
    let mut right = BTreeMap::new();
    for x in &dice {
        *right.entry(x.index()).or_insert(0) += 1;
    }
    let homogeneity = chi_square_homogeneity(&left, &right);
    let verdict = Verdict::from_test(&homogeneity, P_VALUE_FLOOR);
    Ok(CoalescentTestReport {
        n,
        m: n,
        paths,
        homogeneity,
        verdict,
    })
}
