//! Distance between the empirical frequencies of the `n`-dice process and
//! the frequency SDE at a fixed time, for growing `n`.
//!
//! Both sides of each path read the same coordinated stream, so they see the
//! same jump times and matrices; what remains is the sampling noise of the
//! finite system, which should shrink like `n^{-1/2}`.

use rayon::prelude::*;
use serde::Serialize;

use super::sde::{frequency_path, FrequencyState};
use crate::combinatorics::Configuration;
use crate::error::{Error, Result};
use crate::rates::DiceParams;
use crate::rng::Lane;
use crate::simulator::{frequencies, run_path};
use crate::stats::{compensated_sum, log_log_slope, MeanEstimate, Verdict};

/// Slope window for independent chains.
pub const SLOPE_RANGE: (f64, f64) = (-0.7, -0.3);

/// `n` particles whose type counts round `n·r0` by largest remainder,
/// listed type by type.
pub fn initial_configuration(n: usize, r0: &FrequencyState) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let d = r0.dim();
    let exact: Vec<f64> = r0.values().iter().map(|x| x * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut short = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    let states = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect();
    Configuration::new(states, d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceEntry {
    pub n: usize,
    /// `max_i sqrt(E[(R^n_i(T) − R_i(T))²])` over coupled paths.
    pub distance: f64,
    pub se: f64,
    /// `max_i |E R^n_i(T) − E R_i(T)|`.
    pub first_moment_gap: f64,
    /// `max_i |E R^n_i(T)² − E R_i(T)²|`.
    pub second_moment_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    /// Log-log slope of distance against `n`.
    pub slope: f64,
    /// `true` when `ν = 0`, judged by the slope window; otherwise by
    /// monotonicity up to 3 standard errors.
    pub independent: bool,
    pub verdict: Verdict,
}

fn entry(n: usize, diffs: &[Vec<f64>], left: &[Vec<f64>], right: &[Vec<f64>]) -> ConvergenceEntry {
    let d = diffs[0].len();
    let (mut distance, mut se) = (0.0, 0.0);
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for i in 0..d {
        let sq: Vec<f64> = diffs.iter().map(|v| v[i] * v[i]).collect();
        let ms = MeanEstimate::from_samples(&sq);
        let rms = ms.mean.sqrt();
        if rms >= distance {
            distance = rms;
            // delta method for sqrt
            se = if rms > 0.0 { ms.se / (2.0 * rms) } else { 0.0 };
        }
        let count = left.len() as f64;
        let mean_l = compensated_sum(left.iter().map(|v| v[i])) / count;
        let mean_r = compensated_sum(right.iter().map(|v| v[i])) / count;
        let sq_l = compensated_sum(left.iter().map(|v| v[i] * v[i])) / count;
        let sq_r = compensated_sum(right.iter().map(|v| v[i] * v[i])) / count;
        first = first.max((mean_l - mean_r).abs());
        second = second.max((sq_l - sq_r).abs());
    }
    ConvergenceEntry {
        n,
        distance,
        se,
        first_moment_gap: first,
        second_moment_gap: second,
    }
}

/// Coupled distance at time `T` for each `n` in `n_list`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_check(
    p: &DiceParams,
    r0: &FrequencyState,
    n_list: &[usize],
    horizon: f64,
    paths: u64,
    seed: u64,
    epsilon: f64,
) -> Result<ConvergenceReport> {
    if n_list.len() < 2 {
        return Err(Error::InvalidParameter(
            "convergence needs at least two system sizes".into(),
        ));
    }
    if paths < 2 {
        return Err(Error::InvalidParameter("need at least two paths".into()));
    }
    if r0.dim() != p.dim() {
        return Err(Error::Shape(format!(
            "frequencies on d = {}, parameters on d = {}",
            r0.dim(),
            p.dim()
        )));
    }
    let truncation = p.nu().truncate(epsilon)?;
    let mut entries = Vec::with_capacity(n_list.len());
    for (lane, &n) in n_list.iter().enumerate() {
        let lane = Lane::try_from(lane)
            .map_err(|_| Error::InvalidParameter("too many system sizes".into()))?;
        let x0 = initial_configuration(n, r0)?;
        let start = FrequencyState::new(frequencies(&x0))?;
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..paths)
            .into_par_iter()
            .map(|k| {
                let particles = run_path(p, &truncation, &x0, horizon, seed, lane, k, |_| {});
                let sde = frequency_path(&start, p.a(), &truncation, horizon, seed, lane, k)?
                    .final_state()?;
                Ok((frequencies(&particles), sde.values().to_vec()))
            })
            .collect::<Result<_>>()?;
        let (left, right): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let diffs: Vec<Vec<f64>> = left
            .iter()
            .zip(&right)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let e = entry(n, &diffs, &left, &right);
        log::info!("n = {n}: distance {:e} ± {:e}", e.distance, e.se);
        entries.push(e);
    }
    let ns: Vec<f64> = entries.iter().map(|e| e.n as f64).collect();
    let ds: Vec<f64> = entries.iter().map(|e| e.distance).collect();
    let slope = log_log_slope(&ns, &ds);
    let independent = p.nu().is_zero();
    let pass = if independent {
        (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope)
    } else {
        entries
            .windows(2)
            .all(|w| w[1].distance <= w[0].distance + 3.0 * (w[0].se + w[1].se))
    };
    Ok(ConvergenceReport {
        entries,
        slope,
        independent,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}
