//! Frequency process of the infinite system: linear drift between the jump
//! times of a Poisson clock, with `r ↦ Uᵀr` at each jump.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{StochasticMatrix, Truncation};
use crate::rates::{DiceParams, RateMatrixA};
use crate::rng::Lane;
use crate::simulator::CoordinatedStream;
use crate::ROW_SUM_TOL;

/// Entries this far below zero are rounding noise; anything lower is a bug.
const NEGATIVE_TOL: f64 = 1e-12;

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FrequencyState {
    r: Vec<f64>,
}

impl FrequencyState {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::InvalidDimension("frequency vector is empty".into()));
        }
        if let Some(x) = r.iter().find(|x| !x.is_finite() || **x < -1e-15) {
            return Err(Error::Invariant(format!(
                "frequency entry {x} is not a probability"
            )));
        }
        let total: f64 = r.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Invariant(format!(
                "frequencies sum to {total}, not 1"
            )));
        }
        Ok(FrequencyState {
            r: r.into_iter().map(|x| x.max(0.0)).collect(),
        })
    }

    /// Uniform frequencies on `d` types.
    pub fn uniform(d: usize) -> Self {
        FrequencyState {
            r: vec![1.0 / d as f64; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    pub fn get(&self, i: usize) -> f64 {
        self.r[i]
    }

    /// Clamps rounding-level negatives and renormalizes.
    fn settle(mut r: Vec<f64>) -> Self {
        for x in r.iter_mut() {
            if *x < 0.0 {
                assert!(
                    *x >= -NEGATIVE_TOL,
                    "frequency entry {x} below rounding tolerance"
                );
                log::warn!("clamping frequency entry {x:e} to 0");
                *x = 0.0;
            }
        }
        let total: f64 = r.iter().sum();
        if total != 1.0 {
            r.iter_mut().for_each(|x| *x /= total);
        }
        FrequencyState { r }
    }
}

/// `exp(Δt·Mᵀ) r`, where `M` is the conservative matrix built from `A`.
pub fn drift_flow(r: &FrequencyState, a: &RateMatrixA, dt: f64) -> Result<FrequencyState> {
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "drift step must be nonnegative, got {dt}"
        )));
    }
    if a.dim() != r.dim() {
        return Err(Error::Shape(format!(
            "frequencies on d = {}, rates on d = {}",
            r.dim(),
            a.dim()
        )));
    }
    if dt == 0.0 || a.is_zero() {
        return Ok(r.clone());
    }
    let flow = (a.conservative().transpose() * dt).exp();
    Ok(apply_flow(&flow, r))
}

fn apply_flow(flow: &DMatrix<f64>, r: &FrequencyState) -> FrequencyState {
    let v = flow * DVector::from_column_slice(&r.r);
    FrequencyState::settle(v.iter().copied().collect())
}

/// `Uᵀr`.
pub fn coordination_jump(r: &FrequencyState, u: &StochasticMatrix) -> Result<FrequencyState> {
    if u.dim() != r.dim() {
        return Err(Error::Shape(format!(
            "frequencies on d = {}, matrix is {}x{}",
            r.dim(),
            u.dim(),
            u.dim()
        )));
    }
    Ok(FrequencyState::settle(u.transpose_apply(&r.r)))
}

/// Piecewise deterministic path: states right after each jump, flowed by
/// the drift in between.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyPath {
    pub knots: Vec<(f64, FrequencyState)>,
    pub horizon: f64,
    #[serde(skip)]
    a: RateMatrixA,
}

impl FrequencyPath {
    pub fn jumps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn value_at(&self, t: f64) -> Result<FrequencyState> {
        let idx = self.knots.partition_point(|(s, _)| *s <= t).max(1) - 1;
        let (s, r) = &self.knots[idx];
        drift_flow(r, &self.a, (t - s).max(0.0))
    }

    pub fn final_state(&self) -> Result<FrequencyState> {
        self.value_at(self.horizon)
    }

    /// Samples on a uniform grid of `steps + 1` times, for plotting.
    pub fn on_grid(&self, steps: usize) -> Result<Vec<(f64, FrequencyState)>> {
        (0..=steps)
            .map(|k| {
                let t = self.horizon * k as f64 / steps.max(1) as f64;
                Ok((t, self.value_at(t)?))
            })
            .collect()
    }
}

/// Path driven by coordinated stream `(lane, path)`. Reusing the pair of a
/// particle simulation couples the two through shared jump times and matrices.
pub fn frequency_path(
    r0: &FrequencyState,
    a: &RateMatrixA,
    truncation: &Truncation,
    horizon: f64,
    seed: u64,
    lane: Lane,
    path: u64,
) -> Result<FrequencyPath> {
    if r0.dim() != a.dim() || truncation.dim() != a.dim() {
        return Err(Error::Shape("frequency, rate and measure dimensions differ".into()));
    }
    let mut stream = CoordinatedStream::new(truncation, seed, lane, path);
    let mut knots = vec![(0.0, r0.clone())];
    let mut current = r0.clone();
    let mut last = 0.0;
    while let Some((t, u)) = stream.next_event() {
        if t > horizon {
            break;
        }
        current = coordination_jump(&drift_flow(&current, a, t - last)?, &u)?;
        knots.push((t, current.clone()));
        last = t;
    }
    Ok(FrequencyPath {
        knots,
        horizon,
        a: a.clone(),
    })
}

/// One path of the `ε`-truncated frequency SDE.
pub fn simulate_frequency_sde(
    r0: &FrequencyState,
    p: &DiceParams,
    horizon: f64,
    epsilon: f64,
    seed: u64,
) -> Result<FrequencyPath> {
    if horizon.is_nan() || horizon < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    let truncation = p.nu().truncate(epsilon)?;
    frequency_path(r0, p.a(), &truncation, horizon, seed, 0, 0)
}

/// `E[R(t)] = exp(t (Mᵀ + ∫(Uᵀ − I) ν)) r0`, the first-moment equation.
pub fn mean_frequency(r0: &FrequencyState, p: &DiceParams, t: f64) -> Result<Vec<f64>> {
    let d = p.dim();
    let mut drift = p.a().conservative().transpose();
    for i in 0..d {
        for j in 0..d {
            drift[(i, j)] += if i == j {
                -p.nu()
                    .diagonal_deficit(&crate::CountVector::unit(d, i))?
            } else {
                // ∫ u_ji ν
                p.nu().monomial_integral(&crate::TransitionCountMatrix::elementary(d, j, i))?
            };
        }
    }
    let v = (drift * t).exp() * DVector::from_column_slice(r0.values());
    Ok(v.iter().copied().collect())
}
