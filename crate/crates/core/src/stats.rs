//! Small statistics toolkit: compensated sums, Monte Carlo means and
//! chi-square tests on categorical samples.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanEstimate {
    /// Sums are taken in slice order so results do not depend on thread
    /// scheduling.
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let n = count as f64;
        let mean = compensated_sum(samples.iter().copied()) / n;
        if count == 1 {
            return MeanEstimate {
                mean,
                se: 0.0,
                count,
            };
        }
        let ss = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
        let var = ss / (n - 1.0);
        MeanEstimate {
            mean,
            se: (var / n).sqrt(),
            count,
        }
    }
}

/// Outcome of a chi-square test on categorical data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Smallest expected cell count among the cells used.
    pub min_expected: f64,
    /// Set when samples are too thin for the asymptotic chi-square law.
    pub power_warning: bool,
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
}

/// Two-sample homogeneity test over the union of observed categories.
pub fn chi_square_homogeneity<K: Ord + Clone>(
    left: &BTreeMap<K, u64>,
    right: &BTreeMap<K, u64>,
) -> ChiSquareReport {
    let n1: u64 = left.values().sum();
    let n2: u64 = right.values().sum();
    let total = (n1 + n2) as f64;
    let mut keys: Vec<&K> = left.keys().chain(right.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut stat = NeumaierSum::new();
    let mut min_expected = f64::INFINITY;
    let mut cells = 0usize;
    for k in &keys {
        let o1 = *left.get(*k).unwrap_or(&0) as f64;
        let o2 = *right.get(*k).unwrap_or(&0) as f64;
        let col = o1 + o2;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        for (obs, n) in [(o1, n1 as f64), (o2, n2 as f64)] {
            let expected = n * col / total;
            min_expected = min_expected.min(expected);
            stat.add((obs - expected).powi(2) / expected);
        }
    }
    let dof = cells.saturating_sub(1);
    let statistic = stat.value();
    ChiSquareReport {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
        min_expected: if cells == 0 { 0.0 } else { min_expected },
        power_warning: cells == 0 || (n1.min(n2) as f64) < 100.0 * cells as f64,
    }
}

/// Goodness of fit of observed counts against exact probabilities indexed by
/// category. Cells with probability below `1e-15` must be empty; a hit there
/// gives an infinite statistic.
pub fn chi_square_goodness_of_fit(counts: &[u64], probs: &[f64]) -> ChiSquareReport {
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut stat = NeumaierSum::new();
    let mut cells = 0usize;
    let mut min_expected = f64::INFINITY;
    let mut impossible_hit = false;
    for (&o, &p) in counts.iter().zip(probs) {
        if p <= 1e-15 {
            impossible_hit |= o > 0;
            continue;
        }
        cells += 1;
        let expected = nf * p;
        min_expected = min_expected.min(expected);
        stat.add((o as f64 - expected).powi(2) / expected);
    }
    let dof = cells.saturating_sub(1);
    let statistic = if impossible_hit {
        f64::INFINITY
    } else {
        stat.value()
    };
    ChiSquareReport {
        statistic,
        dof,
        p_value: if impossible_hit {
            0.0
        } else {
            p_value(statistic, dof)
        },
        min_expected: if cells == 0 { 0.0 } else { min_expected },
        power_warning: cells == 0 || nf < 100.0 * cells as f64,
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}


/// Outcome class of a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl Verdict {
    /// The worse of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }

    /// Pass/fail from a p-value floor, downgraded to warn on thin samples.
    pub fn from_test(report: &ChiSquareReport, floor: f64) -> Verdict {
        if report.p_value <= floor {
            Verdict::Fail
        } else if report.power_warning {
            Verdict::Warn
        } else {
            Verdict::Pass
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Warn => "warn",
            Verdict::Fail => "fail",
        })
    }
}

/// p-value floor for single statistical checks.
pub const P_VALUE_FLOOR: f64 = 1e-3;
