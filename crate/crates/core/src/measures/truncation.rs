//! Restriction of `ν` to `V^ε = ∪_i {U : u_ii < 1 − ε}` and exact sampling
//! from the normalized restriction.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::beta::beta_reg;

use super::{CoordinationMeasure, MeasureFamily, StochasticMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Component {
    Atom(StochasticMatrix),
    Dirichlet {
        members: Vec<usize>,
        eta: Vec<f64>,
    },
    InstantExchange {
        members: Vec<usize>,
        /// `alphas[r][c]` for rows/columns indexed within the block.
        alphas: Vec<Vec<f64>>,
    },
    Harmonic {
        source: usize,
        targets: Vec<usize>,
        eta: f64,
        /// `∫_0^{1−ε} s^{η−1}/(1−s) ds`
        cdf_total: f64,
    },
}

/// Finite restriction of a coordination measure.
#[derive(Debug, Clone)]
pub struct Truncation {
    d: usize,
    epsilon: f64,
    mass: f64,
    components: Vec<Component>,
    cumulative: Vec<f64>,
    neglected: f64,
}

impl Truncation {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `ν(V^ε)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_empty(&self) -> bool {
        self.mass <= 0.0
    }

    /// Upper bound on `∫_{(V^ε)^c} Σ_i (1 − u_ii) ν(dU)`, the per-particle rate
    /// of coordinated moves the truncated process ignores. Exact for atoms,
    /// Dirichlet blocks and harmonic components.
    pub fn neglected_integrability(&self) -> f64 {
        self.neglected
    }

    /// Draws from `ν(· ∩ V^ε) / ν(V^ε)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StochasticMatrix> {
        if self.is_empty() {
            return Err(Error::Precondition(
                "cannot sample from an empty truncation".into(),
            ));
        }
        let target = rng.random::<f64>() * self.mass;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.components.len() - 1);
        let threshold = 1.0 - self.epsilon;
        let d = self.d;
        Ok(match &self.components[idx] {
            Component::Atom(m) => m.clone(),
            Component::Dirichlet { members, eta } => {
                let gammas: Vec<Gamma<f64>> = eta
                    .iter()
                    .map(|&e| Gamma::new(e, 1.0).expect("validated shape"))
                    .collect();
                let s = loop {
                    let s = dirichlet_draw(&gammas, rng);
                    if s.iter().any(|&x| x < threshold) {
                        break s;
                    }
                };
                let mut entries = StochasticMatrix::identity(d).entries;
                for &i in members {
                    entries[i * d + i] = 0.0;
                }
                for &i in members {
                    for (c, &j) in members.iter().enumerate() {
                        entries[i * d + j] = s[c];
                    }
                }
                StochasticMatrix::new(d, entries)?
            }
            Component::InstantExchange { members, alphas } => {
                let gammas: Vec<Vec<Gamma<f64>>> = alphas
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|&a| Gamma::new(a, 1.0).expect("validated shape"))
                            .collect()
                    })
                    .collect();
                let rows = loop {
                    let rows: Vec<Vec<f64>> =
                        gammas.iter().map(|g| dirichlet_draw(g, rng)).collect();
                    if rows.iter().enumerate().any(|(r, row)| row[r] < threshold) {
                        break rows;
                    }
                };
                let mut entries = StochasticMatrix::identity(d).entries;
                for (r, &i) in members.iter().enumerate() {
                    entries[i * d + i] = 0.0;
                    for (c, &j) in members.iter().enumerate() {
                        entries[i * d + j] = rows[r][c];
                    }
                }
                StochasticMatrix::new(d, entries)?
            }
            Component::Harmonic {
                source,
                targets,
                eta,
                cdf_total,
            } => {
                let u = rng.random::<f64>() * cdf_total;
                let s = invert_harmonic_cdf(u, *eta, threshold);
                let mut entries = StochasticMatrix::identity(d).entries;
                let i = *source;
                entries[i * d + i] = s;
                let share = (1.0 - s) / targets.len() as f64;
                for &j in targets {
                    entries[i * d + j] = share;
                }
                StochasticMatrix::new(d, entries)?
            }
        })
    }
}

fn dirichlet_draw<R: Rng + ?Sized>(gammas: &[Gamma<f64>], rng: &mut R) -> Vec<f64> {
    loop {
        let w: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 && total.is_finite() {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// `G(x) = ∫_0^x s^{η−1}/(1−s) ds` for `0 ≤ x < 1`.
///
/// Below `½` the power series `Σ_k x^{η+k}/(η+k)` is used; above, the
/// remaining piece is integrated in `t = −ln(1−s)`, where the integrand
/// `(1−e^{−t})^{η−1}` has a binomial series in `e^{−t} ≤ ½`.
pub fn harmonic_cdf(x: f64, eta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return f64::INFINITY;
    }
    let head = |y: f64| -> f64 {
        let mut acc = 0.0;
        let mut power = y.powf(eta);
        for k in 0..10_000 {
            let term = power / (eta + k as f64);
            acc += term;
            if term <= acc * 1e-17 {
                break;
            }
            power *= y;
        }
        acc
    };
    if x <= 0.5 {
        return head(x);
    }
    let t = -(1.0 - x).ln();
    let ln2 = std::f64::consts::LN_2;
    let mut tail = t - ln2;
    let a = eta - 1.0;
    let mut coeff = 1.0; // binom(a, m) (-1)^m
    for m in 1..10_000 {
        let mf = m as f64;
        coeff *= -(a - mf + 1.0) / mf;
        if coeff == 0.0 {
            break;
        }
        let term = coeff * (0.5f64.powi(m) - (-mf * t).exp()) / mf;
        tail += term;
        if term.abs() <= 1e-18 * tail.abs().max(1e-300) && 0.5f64.powi(m) < 1e-18 {
            break;
        }
    }
    head(0.5) + tail
}

fn invert_harmonic_cdf(target: f64, eta: f64, upper: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if harmonic_cdf(mid, eta) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl CoordinationMeasure {
    /// Restriction to `V^ε` with its total mass and sampler.
    pub fn truncate(&self, epsilon: f64) -> Result<Truncation> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation level must lie in (0,1), got {epsilon}"
            )));
        }
        let d = self.dim();
        let threshold = 1.0 - epsilon;
        let mut components = Vec::new();
        let mut weights = Vec::new();
        let mut neglected = 0.0;

        if let Some(atoms) = self.atoms() {
            for a in atoms {
                if a.matrix.min_diagonal() < threshold {
                    components.push(Component::Atom(a.matrix.clone()));
                    weights.push(a.weight);
                } else {
                    let moved: f64 = (0..d).map(|i| 1.0 - a.matrix.get(i, i)).sum();
                    neglected += a.weight * moved;
                }
            }
        } else {
            match self.family() {
                MeasureFamily::DirichletSplitting { eta, blocks } => {
                    for b in blocks.iter().filter(|b| b.rate > 0.0) {
                        let size = b.members.len();
                        let fraction = if size as f64 * threshold >= 1.0 {
                            1.0
                        } else if size == 2 {
                            let (e1, e2) = (eta[b.members[0]], eta[b.members[1]]);
                            // all S_i ≥ 1−ε means S_1 ∈ [1−ε, ε]
                            1.0 - (beta_reg(e1, e2, epsilon) - beta_reg(e1, e2, threshold))
                        } else {
                            return Err(Error::UnsupportedTruncation(format!(
                                "Dirichlet block of size {size} needs epsilon < {}",
                                1.0 - 1.0 / size as f64
                            )));
                        };
                        neglected += b.rate * (1.0 - fraction) * (size as f64 - 1.0);
                        if fraction > 0.0 {
                            components.push(Component::Dirichlet {
                                members: b.members.clone(),
                                eta: b.members.iter().map(|&j| eta[j]).collect(),
                            });
                            weights.push(b.rate * fraction);
                        }
                    }
                }
                MeasureFamily::InstantExchange { eta, kappa, blocks } => {
                    for b in blocks.iter().filter(|b| b.rate > 0.0) {
                        let size = b.members.len() as f64;
                        let off = kappa / size;
                        let mut all_stay = 1.0;
                        let mut alphas = Vec::new();
                        for &i in &b.members {
                            let alpha_ii = eta[i] - kappa * (size - 1.0) / size;
                            all_stay *= 1.0 - beta_reg(alpha_ii, eta[i] - alpha_ii, threshold);
                            alphas.push(
                                b.members
                                    .iter()
                                    .map(|&j| if i == j { alpha_ii } else { off })
                                    .collect(),
                            );
                        }
                        let fraction = 1.0 - all_stay;
                        neglected += b.rate * all_stay * size * epsilon;
                        if fraction > 0.0 {
                            components.push(Component::InstantExchange {
                                members: b.members.clone(),
                                alphas,
                            });
                            weights.push(b.rate * fraction);
                        }
                    }
                }
                MeasureFamily::HarmonicSplitting { eta, components: list } => {
                    for c in list.iter().filter(|c| c.rate > 0.0) {
                        let e = eta[c.source];
                        let cdf_total = harmonic_cdf(threshold, e);
                        neglected += c.rate * (1.0 - threshold.powf(e)) / e;
                        components.push(Component::Harmonic {
                            source: c.source,
                            targets: c.targets.clone(),
                            eta: e,
                            cdf_total,
                        });
                        weights.push(c.rate * cdf_total);
                    }
                }
                _ => unreachable!("atomic-like families carry an atom expansion"),
            }
        }

        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(Truncation {
            d,
            epsilon,
            mass: acc,
            components,
            cumulative,
            neglected,
        })
    }
}
