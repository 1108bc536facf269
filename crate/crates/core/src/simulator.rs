//! Path simulation of the `n`-dice process by its graphical construction.
//!
//! Individual moves are drawn by Gillespie's method. Coordinated events come
//! from a separate Poisson stream of rate `ν(V^ε)` carrying sampled matrices;
//! at each one every particle at type `i` rolls row `i` independently. The
//! coordinated stream has its own rng so it can be replayed elsewhere (the
//! frequency SDE uses the same stream for coupled comparisons).

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::cli_io::{format_f64, to_json_line};
use crate::combinatorics::Configuration;
use crate::error::{Error, Result};
use crate::measures::{StochasticMatrix, Truncation};
use crate::rates::{build_generator, DiceParams, DEFAULT_STATE_CAP};
use crate::rng::{stream, Lane, Purpose};
use crate::stats::{
    chi_square_goodness_of_fit, chi_square_homogeneity, ChiSquareReport, Verdict, P_VALUE_FLOOR,
};

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub n: usize,
    pub params: DiceParams,
    pub horizon: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(n: usize, params: DiceParams, horizon: f64, epsilon: f64, seed: u64) -> Result<Self> {
        if horizon.is_nan() || horizon < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be nonnegative, got {horizon}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation level must lie in (0,1), got {epsilon}"
            )));
        }
        Ok(SimulationSpec {
            n,
            params,
            horizon,
            epsilon,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    /// One particle moves on its own (types 0-based).
    Individual {
        particle: usize,
        from: usize,
        to: usize,
    },
    /// A sampled matrix and the type of every particle right after the event.
    /// Outcomes equal to the previous state mean a no-op event.
    Coordinated {
        matrix: StochasticMatrix,
        outcomes: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    pub events: Vec<EventRecord>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn size(&self) -> usize {
        self.initial.len()
    }

    /// Configurations right after each event, starting with the initial one.
    pub fn states(&self) -> Vec<(f64, Configuration)> {
        let d = self.initial.dim();
        let mut current = self.initial.states().to_vec();
        let mut out = vec![(0.0, self.initial.clone())];
        for e in &self.events {
            apply_event(&mut current, &e.kind);
            out.push((e.time, Configuration::new(current.clone(), d).expect("valid types")));
        }
        out
    }

    /// Right-continuous state at time `t`.
    pub fn state_at(&self, t: f64) -> Configuration {
        let d = self.initial.dim();
        let mut current = self.initial.states().to_vec();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            apply_event(&mut current, &e.kind);
        }
        Configuration::new(current, d).expect("valid types")
    }

    pub fn final_state(&self) -> Configuration {
        self.state_at(f64::INFINITY)
    }

    /// Number of events that changed at least one particle.
    pub fn effective_events(&self) -> usize {
        let mut current = self.initial.states().to_vec();
        let mut count = 0;
        for e in &self.events {
            let before = current.clone();
            apply_event(&mut current, &e.kind);
            count += usize::from(before != current);
        }
        count
    }

    /// CSV with columns `time, x1, …, xn` (1-based types), one row per event.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.size()).map(|l| format!("x{l}")));
        w.write_record(&header).map_err(crate::rates::csv_err)?;
        for (t, x) in self.states() {
            let mut row = vec![format_f64(t)];
            row.extend(x.to_one_based().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(crate::rates::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON-lines event log.
    pub fn write_events<W: Write>(&self, mut writer: W) -> Result<()> {
        for e in &self.events {
            writeln!(writer, "{}", to_json_line(e)?)?;
        }
        Ok(())
    }
}

fn apply_event(state: &mut [usize], kind: &EventKind) {
    match kind {
        EventKind::Individual { particle, to, .. } => state[*particle] = *to,
        EventKind::Coordinated { outcomes, .. } => state.copy_from_slice(outcomes),
    }
}

/// Poisson stream of `(time, U)` pairs from a truncated measure.
pub struct CoordinatedStream<'a> {
    truncation: &'a Truncation,
    rng: ChaCha8Rng,
    clock: Option<Exp<f64>>,
    time: f64,
}

impl<'a> CoordinatedStream<'a> {
    pub fn new(truncation: &'a Truncation, seed: u64, lane: Lane, path: u64) -> Self {
        let clock = (!truncation.is_empty())
            .then(|| Exp::new(truncation.mass()).expect("positive finite mass"));
        CoordinatedStream {
            truncation,
            rng: stream(seed, lane, path, Purpose::Coordinated),
            clock,
            time: 0.0,
        }
    }

    /// Next event, or `None` if the stream is empty.
    pub fn next_event(&mut self) -> Option<(f64, StochasticMatrix)> {
        let clock = self.clock.as_ref()?;
        self.time += clock.sample(&mut self.rng);
        let u = self
            .truncation
            .sample(&mut self.rng)
            .expect("nonempty truncation samples");
        Some((self.time, u))
    }
}

/// Per-type particle lists for O(d) Gillespie steps.
struct Occupancy {
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
}

impl Occupancy {
    fn new(state: &[usize], d: usize) -> Self {
        let mut members = vec![Vec::new(); d];
        let mut slot = vec![0; state.len()];
        for (l, &s) in state.iter().enumerate() {
            slot[l] = members[s].len();
            members[s].push(l);
        }
        Occupancy { members, slot }
    }

    fn relocate(&mut self, particle: usize, from: usize, to: usize) {
        let pos = self.slot[particle];
        self.members[from].swap_remove(pos);
        if let Some(&moved) = self.members[from].get(pos) {
            self.slot[moved] = pos;
        }
        self.slot[particle] = self.members[to].len();
        self.members[to].push(particle);
    }
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
    // rounding: land on the last positive entry
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Runs one path and hands every event to `sink`; returns the final state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_path<F: FnMut(EventRecord)>(
    params: &DiceParams,
    truncation: &Truncation,
    x0: &Configuration,
    horizon: f64,
    seed: u64,
    lane: Lane,
    path: u64,
    mut sink: F,
) -> Configuration {
    let d = params.dim();
    let a = params.a();
    let out_rates: Vec<f64> = (0..d).map(|i| a.out_rate(i)).collect();
    let mut state = x0.states().to_vec();
    let mut occ = Occupancy::new(&state, d);
    let mut coordinated = CoordinatedStream::new(truncation, seed, lane, path);
    let mut individual_rng = stream(seed, lane, path, Purpose::Individual);
    let mut outcome_rng = stream(seed, lane, path, Purpose::Outcomes);
    let mut next_coord = coordinated.next_event();
    let mut t = 0.0;
    loop {
        let total: f64 = (0..d)
            .map(|i| occ.members[i].len() as f64 * out_rates[i])
            .sum();
        let candidate = if total > 0.0 {
            t + Exp::new(total).expect("positive rate").sample(&mut individual_rng)
        } else {
            f64::INFINITY
        };
        let coord_time = next_coord.as_ref().map_or(f64::INFINITY, |(s, _)| *s);
        if candidate.min(coord_time) > horizon {
            break;
        }
        if candidate < coord_time {
            t = candidate;
            // type by total outflow, then a uniform member, then a target
            let mut pick = individual_rng.random::<f64>() * total;
            let mut from = d - 1;
            for (i, (members, rate)) in occ.members.iter().zip(&out_rates).enumerate() {
                let w = members.len() as f64 * rate;
                if pick < w {
                    from = i;
                    break;
                }
                pick -= w;
            }
            let members = &occ.members[from];
            let particle = members[individual_rng.random_range(0..members.len())];
            let mut pick = individual_rng.random::<f64>() * out_rates[from];
            let mut to = (0..d).rev().find(|&j| j != from && a.get(from, j) > 0.0).unwrap_or(from);
            for j in 0..d {
                if j == from {
                    continue;
                }
                if pick < a.get(from, j) {
                    to = j;
                    break;
                }
                pick -= a.get(from, j);
            }
            state[particle] = to;
            occ.relocate(particle, from, to);
            sink(EventRecord {
                time: t,
                kind: EventKind::Individual { particle, from, to },
            });
        } else {
            let (time, u) = next_coord.take().expect("finite coordinated time");
            t = time;
            let mut outcomes = state.clone();
            for (l, o) in outcomes.iter_mut().enumerate() {
                let i = state[l];
                if u.get(i, i) < 1.0 {
                    *o = roll(u.row(i), &mut outcome_rng);
                }
            }
            for l in 0..state.len() {
                if outcomes[l] != state[l] {
                    occ.relocate(l, state[l], outcomes[l]);
                }
            }
            state.copy_from_slice(&outcomes);
            sink(EventRecord {
                time: t,
                kind: EventKind::Coordinated {
                    matrix: u,
                    outcomes,
                },
            });
            next_coord = coordinated.next_event();
        }
    }
    Configuration::new(state, d).expect("valid types")
}

fn check_start(spec: &SimulationSpec, x0: &Configuration) -> Result<Truncation> {
    if x0.len() != spec.n {
        return Err(Error::Shape(format!(
            "initial configuration has length {}, spec has n = {}",
            x0.len(),
            spec.n
        )));
    }
    if x0.dim() != spec.params.dim() {
        return Err(Error::Shape(format!(
            "initial configuration lives on d = {}, parameters on d = {}",
            x0.dim(),
            spec.params.dim()
        )));
    }
    spec.params.nu().truncate(spec.epsilon)
}

/// One path of the `ε`-truncated `n`-dice process.
pub fn simulate_graphical(spec: &SimulationSpec, x0: &Configuration) -> Result<Trajectory> {
    simulate_path(spec, x0, 0, 0)
}

/// Path `path` of lane `lane`; distinct `(lane, path)` pairs are independent.
pub fn simulate_path(
    spec: &SimulationSpec,
    x0: &Configuration,
    lane: Lane,
    path: u64,
) -> Result<Trajectory> {
    let truncation = check_start(spec, x0)?;
    let mut events = Vec::new();
    run_path(
        &spec.params,
        &truncation,
        x0,
        spec.horizon,
        spec.seed,
        lane,
        path,
        |e| events.push(e),
    );
    Ok(Trajectory {
        initial: x0.clone(),
        events,
        horizon: spec.horizon,
    })
}

/// Time-`T` states of `paths` independent runs, in path order.
pub fn final_states(
    spec: &SimulationSpec,
    x0: &Configuration,
    lane: Lane,
    paths: u64,
) -> Result<Vec<Configuration>> {
    let truncation = check_start(spec, x0)?;
    Ok((0..paths)
        .into_par_iter()
        .map(|p| {
            run_path(
                &spec.params,
                &truncation,
                x0,
                spec.horizon,
                spec.seed,
                lane,
                p,
                |_| {},
            )
        })
        .collect())
}

/// Keeps the first `m` particles and the events that move any of them.
/// Events that moved nobody in the full system are kept as they were.
pub fn restrict_trajectory(t: &Trajectory, m: usize) -> Result<Trajectory> {
    if m > t.size() {
        return Err(Error::Shape(format!(
            "cannot restrict {} particles to {m}",
            t.size()
        )));
    }
    if m == t.size() {
        return Ok(t.clone());
    }
    let mut current = t.initial.states().to_vec();
    let mut events = Vec::new();
    for e in &t.events {
        let before = current.clone();
        apply_event(&mut current, &e.kind);
        let moved_any = before != current;
        let moved_kept = before[..m] != current[..m];
        if moved_any && !moved_kept {
            continue;
        }
        let kind = match &e.kind {
            EventKind::Individual { .. } => e.kind.clone(),
            EventKind::Coordinated { matrix, outcomes } => EventKind::Coordinated {
                matrix: matrix.clone(),
                outcomes: outcomes[..m].to_vec(),
            },
        };
        events.push(EventRecord { time: e.time, kind });
    }
    Ok(Trajectory {
        initial: t.initial.restrict(m)?,
        events,
        horizon: t.horizon,
    })
}

/// Right-continuous step path of type frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPath {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl StepPath {
    pub fn value_at(&self, t: f64) -> &[f64] {
        let idx = self.times.partition_point(|&s| s <= t).max(1) - 1;
        &self.values[idx]
    }
}

pub fn frequencies(x: &Configuration) -> Vec<f64> {
    let n = x.len() as f64;
    x.counts().counts().iter().map(|&c| f64::from(c) / n).collect()
}

/// `R_i(s) = #{l : X_l(s) = i} / n` along a trajectory.
pub fn empirical_frequency(t: &Trajectory) -> Result<StepPath> {
    if t.size() == 0 {
        return Err(Error::Shape("empirical frequency needs n ≥ 1".into()));
    }
    let mut path = StepPath {
        times: Vec::new(),
        values: Vec::new(),
    };
    for (time, x) in t.states() {
        path.times.push(time);
        path.values.push(frequencies(&x));
    }
    Ok(path)
}

/// Restriction test: time-`T` law of the first `m` particles of the
/// `n`-system against the `m`-system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictionTestReport {
    pub n: usize,
    pub m: usize,
    pub paths: u64,
    pub homogeneity: ChiSquareReport,
    /// Restricted large system against `exp(T Q_m)`, when the truncation is
    /// exact and the generator small enough.
    pub exact_fit_restricted: Option<ChiSquareReport>,
    /// Small system against `exp(T Q_m)`.
    pub exact_fit_small: Option<ChiSquareReport>,
    /// Probability bound on a neglected coordinated move per run.
    pub truncation_bias_bound: f64,
    pub verdict: Verdict,
}

fn tabulate(states: &[Configuration], m: usize) -> BTreeMap<usize, u64> {
    let mut table = BTreeMap::new();
    for x in states {
        let key = x.restrict(m).expect("m ≤ n").index();
        *table.entry(key).or_insert(0) += 1;
    }
    table
}

/// Restriction test for one parameter set.
#[allow(clippy::too_many_arguments)]
pub fn consistency_statistical_test(
    params: &DiceParams,
    x0: &Configuration,
    m: usize,
    horizon: f64,
    paths: u64,
    seed: u64,
    epsilon: f64,
) -> Result<RestrictionTestReport> {
    restriction_test_between(params, params, x0, m, horizon, paths, seed, epsilon)
}

/// Same as [`consistency_statistical_test`] with separate parameters for the
/// large and the small system (negative controls).
#[allow(clippy::too_many_arguments)]
pub fn restriction_test_between(
    large: &DiceParams,
    small: &DiceParams,
    x0: &Configuration,
    m: usize,
    horizon: f64,
    paths: u64,
    seed: u64,
    epsilon: f64,
) -> Result<RestrictionTestReport> {
    let n = x0.len();
    if m == 0 || m >= n {
        return Err(Error::Shape(format!("restriction size {m} must lie in 1..{n}")));
    }
    let d = large.dim();
    let x0_small = x0.restrict(m)?;
    let spec_large = SimulationSpec::new(n, large.clone(), horizon, epsilon, seed)?;
    let spec_small = SimulationSpec::new(m, small.clone(), horizon, epsilon, seed)?;
    let big = final_states(&spec_large, x0, 0, paths)?;
    let little = final_states(&spec_small, &x0_small, 1, paths)?;
    let table_big = tabulate(&big, m);
    let table_small = tabulate(&little, m);
    let homogeneity = chi_square_homogeneity(&table_big, &table_small);
    let mut verdict = Verdict::from_test(&homogeneity, P_VALUE_FLOOR);

    let tr_large = large.nu().truncate(epsilon)?;
    let tr_small = small.nu().truncate(epsilon)?;
    let exact = tr_large.neglected_integrability() == 0.0
        && tr_small.neglected_integrability() == 0.0
        && large == small;
    let (mut fit_restricted, mut fit_small) = (None, None);
    let states = d.checked_pow(m as u32).unwrap_or(usize::MAX);
    if exact && states <= 256 {
        let q = build_generator(m, large)?;
        let p = q.transition_matrix(horizon);
        let row: Vec<f64> = (0..states).map(|j| p[(x0_small.index(), j)]).collect();
        let counts = |table: &BTreeMap<usize, u64>| -> Vec<u64> {
            (0..states).map(|j| *table.get(&j).unwrap_or(&0)).collect()
        };
        let fr = chi_square_goodness_of_fit(&counts(&table_big), &row);
        let fs = chi_square_goodness_of_fit(&counts(&table_small), &row);
        verdict = verdict
            .and(Verdict::from_test(&fr, P_VALUE_FLOOR))
            .and(Verdict::from_test(&fs, P_VALUE_FLOOR));
        fit_restricted = Some(fr);
        fit_small = Some(fs);
    }
    let bias = (n as f64 * horizon * tr_large.neglected_integrability()).min(1.0);
    Ok(RestrictionTestReport {
        n,
        m,
        paths,
        homogeneity,
        exact_fit_restricted: fit_restricted,
        exact_fit_small: fit_small,
        truncation_bias_bound: bias,
        verdict,
    })
}

/// Exact generator size limit used by statistical oracles.
pub const ORACLE_STATE_CAP: usize = DEFAULT_STATE_CAP;
