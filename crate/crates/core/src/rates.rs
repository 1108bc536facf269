//! Dice-process rates, exact finite generators and the mechanical checks of
//! consistency and relabelling invariance.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{
    apply_permutation, counts_from_configs, enumerate_compositions, enumerate_configurations,
    enumerate_transition_matrices, Configuration, CountVector, Permutation, TransitionCountMatrix,
};
use crate::error::{Error, Result};
use crate::measures::CoordinationMeasure;
use crate::RESIDUAL_TOL;

/// Default cap on `d^n` for exact generators.
pub const DEFAULT_STATE_CAP: usize = 4096;

/// Off-diagonal rates `a_ij ≥ 0` of individual moves. The diagonal is unused
/// and stored as zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateMatrixA {
    d: usize,
    entries: Vec<f64>,
}

impl RateMatrixA {
    pub fn zero(d: usize) -> Self {
        RateMatrixA {
            d,
            entries: vec![0.0; d * d],
        }
    }

    /// Row-major entries; diagonal values are ignored.
    pub fn new(d: usize, mut entries: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        if entries.len() != d * d {
            return Err(Error::Shape(format!(
                "rate matrix needs {} entries, got {}",
                d * d,
                entries.len()
            )));
        }
        for i in 0..d {
            entries[i * d + i] = 0.0;
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "individual rates must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(RateMatrixA { d, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("rate matrix must be square".into()));
        }
        RateMatrixA::new(d, rows.iter().flatten().copied().collect())
    }

    /// `a_ij = a_ji = a` for all `i ≠ j`.
    pub fn symmetric(d: usize, a: f64) -> Result<Self> {
        RateMatrixA::new(d, vec![a; d * d])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d)
            .map(|i| self.entries[i * self.d..(i + 1) * self.d].to_vec())
            .collect()
    }

    /// `Σ_{j≠i} a_ij`.
    pub fn out_rate(&self, i: usize) -> f64 {
        self.entries[i * self.d..(i + 1) * self.d].iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0)
    }

    /// `max_i |Σ_{j≠i} (a_ij − a_ji)|`.
    pub fn imbalance(&self) -> f64 {
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| self.get(i, j) - self.get(j, i))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Conservative single-chain rate matrix `M` with `M_ii = −Σ_j a_ij`.
    pub fn conservative(&self) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                -self.out_rate(i)
            } else {
                self.get(i, j)
            }
        })
    }
}

/// Parameters `(A, ν)` of a dice process.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceParams {
    a: RateMatrixA,
    nu: CoordinationMeasure,
}

impl DiceParams {
    pub fn new(a: RateMatrixA, nu: CoordinationMeasure) -> Result<Self> {
        if a.dim() != nu.dim() {
            return Err(Error::Shape(format!(
                "rate matrix has d = {}, measure has d = {}",
                a.dim(),
                nu.dim()
            )));
        }
        nu.integrability_value()?;
        Ok(DiceParams { a, nu })
    }

    pub fn independent(a: RateMatrixA) -> Self {
        let d = a.dim();
        DiceParams {
            a,
            nu: CoordinationMeasure::zero(d),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn a(&self) -> &RateMatrixA {
        &self.a
    }

    pub fn nu(&self) -> &CoordinationMeasure {
        &self.nu
    }

    /// Single-particle rate `a_ij + ∫ u_ij ν`.
    pub fn single_chain_rate(&self, i: usize, j: usize) -> Result<f64> {
        gamma(
            &CountVector::unit(self.dim(), i),
            &TransitionCountMatrix::elementary(self.dim(), i, j),
            self,
        )
    }
}

/// Anything that assigns a rate to a `(b, K)`-change.
pub trait RateArray: Sync {
    fn dim(&self) -> usize;
    fn rate(&self, b: &CountVector, k: &TransitionCountMatrix) -> Result<f64>;
}

impl RateArray for DiceParams {
    fn dim(&self) -> usize {
        DiceParams::dim(self)
    }

    fn rate(&self, b: &CountVector, k: &TransitionCountMatrix) -> Result<f64> {
        gamma(b, k, self)
    }
}

/// `γ_{b,K} = ∫ Π u^K ν + Σ_{i≠j} a_ij 1{K = diag(b) − E_ii + E_ij}`.
pub fn gamma(b: &CountVector, k: &TransitionCountMatrix, p: &DiceParams) -> Result<f64> {
    if k.dim() != p.dim() || b.dim() != p.dim() {
        return Err(Error::Shape(format!(
            "(b, K) has dimension ({}, {}), parameters have d = {}",
            b.dim(),
            k.dim(),
            p.dim()
        )));
    }
    if &k.row_sums() != b {
        return Err(Error::Invariant(format!("row sums of {k} do not match {b}")));
    }
    if k.is_diagonal() {
        return Err(Error::InvalidTransition(format!(
            "K = diag{b} is not a change"
        )));
    }
    let mut rate = p.nu.monomial_integral(k)?;
    if k.moved() == 1 {
        let d = p.dim();
        for i in 0..d {
            for j in 0..d {
                if i != j && k.get(i, j) == 1 {
                    rate += p.a.get(i, j);
                }
            }
        }
    }
    Ok(rate)
}

/// `γ̃_{x,y}` of the `n`-dice process.
pub fn config_rate(x: &Configuration, y: &Configuration, p: &DiceParams) -> Result<f64> {
    if x == y {
        return Err(Error::InvalidTransition(format!(
            "no rate from {x} to itself"
        )));
    }
    let (b, k) = counts_from_configs(x, y)?;
    gamma(&b, &k, p)
}

/// Outcome of [`check_consistency_equation`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_residual: f64,
    /// Number of `(b, K, j)` triples checked.
    pub checked: usize,
    /// The triple with the largest residual, 1-based, if any were checked.
    pub worst: Option<String>,
}

/// Checks `γ_{b,K} = Σ_l γ_{b+e_j, K+E_jl}` for `1 ≤ |b| ≤ n_max`, every
/// `K ≠ diag(b)` and every `j`.
pub fn check_consistency_equation<R: RateArray + ?Sized>(
    rates: &R,
    n_max: u32,
) -> Result<ConsistencyReport> {
    let d = rates.dim();
    let mut jobs = Vec::new();
    for total in 1..=n_max {
        for b in enumerate_compositions(total, d)? {
            for k in enumerate_transition_matrices(&b, false) {
                jobs.push((b.clone(), k));
            }
        }
    }
    let results: Vec<(f64, usize, String)> = jobs
        .par_iter()
        .map(|(b, k)| -> Result<(f64, usize, String)> {
            let lhs = rates.rate(b, k)?;
            let mut worst = (0.0, 0usize, String::new());
            for j in 0..d {
                let bigger_b = b.plus_unit(j);
                let mut rhs = 0.0;
                for l in 0..d {
                    rhs += rates.rate(&bigger_b, &k.plus_elementary(j, l))?;
                }
                let r = (lhs - rhs).abs();
                if r > worst.0 || worst.2.is_empty() {
                    worst = (r, 0, format!("b={b} K={k} j={}", j + 1));
                }
            }
            worst.1 = d;
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ConsistencyReport {
        max_residual: 0.0,
        checked: 0,
        worst: None,
    };
    for (r, count, label) in results {
        report.checked += count;
        if report.worst.is_none() || r > report.max_residual {
            report.max_residual = r;
            report.worst = Some(label);
        }
    }
    Ok(report)
}

/// Dense generator on `[d]^n`, indexed lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    d: usize,
    q: DMatrix<f64>,
}

impl GeneratorMatrix {
    /// Wraps a dense matrix, checking shape and generator structure.
    pub fn from_dense(n: usize, d: usize, q: DMatrix<f64>) -> Result<Self> {
        let states = state_count(n, d)?;
        if q.nrows() != states || q.ncols() != states {
            return Err(Error::Shape(format!(
                "generator on [{d}]^{n} must be {states}x{states}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let g = GeneratorMatrix { n, d, q };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.q.nrows() {
            let mut sum = 0.0;
            for j in 0..self.q.ncols() {
                let v = self.q[(i, j)];
                if i != j && v < 0.0 {
                    return Err(Error::Invariant(format!(
                        "negative off-diagonal rate {v} at ({}, {})",
                        self.state(i),
                        self.state(j)
                    )));
                }
                sum += v;
            }
            if sum.abs() > RESIDUAL_TOL * (1.0 + self.q[(i, i)].abs()) {
                return Err(Error::Invariant(format!(
                    "row {} sums to {sum}",
                    self.state(i)
                )));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn states(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn state(&self, index: usize) -> Configuration {
        Configuration::from_index(index, self.n, self.d)
    }

    pub fn rate(&self, x: &Configuration, y: &Configuration) -> f64 {
        self.q[(x.index(), y.index())]
    }

    /// Largest row-sum magnitude.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.q.nrows())
            .map(|i| self.q.row(i).sum().abs())
            .fold(0.0, f64::max)
    }

    /// `exp(tQ)`.
    pub fn transition_matrix(&self, t: f64) -> DMatrix<f64> {
        (&self.q * t).exp()
    }

    /// Dense CSV with 1-based configuration labels on both axes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let labels: Vec<String> = (0..self.states()).map(|i| self.state(i).to_string()).collect();
        let mut header = vec!["state".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, label) in labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend((0..self.states()).map(|j| crate::cli_io::format_f64(self.q[(i, j)])));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn state_count(n: usize, d: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::InvalidDimension("d must be at least 1".into()));
    }
    u32::try_from(n)
        .ok()
        .and_then(|n| d.checked_pow(n))
        .ok_or_else(|| Error::Resource(format!("[{d}]^{n} is too large to enumerate")))
}

/// Exact generator of the `n`-dice process.
pub fn build_generator(n: usize, p: &DiceParams) -> Result<GeneratorMatrix> {
    build_generator_with_cap(n, p, DEFAULT_STATE_CAP)
}

pub fn build_generator_with_cap(n: usize, p: &DiceParams, cap: usize) -> Result<GeneratorMatrix> {
    build_from_rates(n, p, cap)
}

/// Generator of any `(b, K)` rate array on `[d]^n`.
pub fn build_from_rates<R: RateArray + ?Sized>(
    n: usize,
    rates: &R,
    cap: usize,
) -> Result<GeneratorMatrix> {
    let d = rates.dim();
    let states = state_count(n, d)?;
    if states > cap {
        return Err(Error::Resource(format!(
            "[{d}]^{n} has {states} states, cap is {cap}"
        )));
    }
    let mut table: HashMap<TransitionCountMatrix, f64> = HashMap::new();
    for b in enumerate_compositions(n as u32, d)? {
        for k in enumerate_transition_matrices(&b, false) {
            let r = rates.rate(&b, &k)?;
            table.insert(k, r);
        }
    }
    let rows: Vec<Vec<f64>> = (0..states)
        .into_par_iter()
        .map(|i| {
            let x = Configuration::from_index(i, n, d);
            let mut row = vec![0.0; states];
            let mut total = 0.0;
            for (j, slot) in row.iter_mut().enumerate() {
                if i == j {
                    continue;
                }
                let y = Configuration::from_index(j, n, d);
                let (_, k) = counts_from_configs(&x, &y).expect("same shape");
                let r = table[&k];
                *slot = r;
                total += r;
            }
            row[i] = -total;
            row
        })
        .collect();
    let q = DMatrix::from_fn(states, states, |i, j| rows[i][j]);
    Ok(GeneratorMatrix { n, d, q })
}

/// Generator of the first `m` coordinates, checking that every extension of a
/// restricted state induces the same aggregated row.
pub fn lumped_generator(q: &GeneratorMatrix, m: usize) -> Result<GeneratorMatrix> {
    let n = q.n;
    let d = q.d;
    if m >= n {
        return Err(Error::Shape(format!(
            "projection size {m} must be below {n}"
        )));
    }
    let small = d.pow(m as u32);
    let factor = d.pow((n - m) as u32);
    // lexicographic order: the first m coordinates are the leading digits
    let mut lumped = DMatrix::zeros(small, small);
    for xs in 0..small {
        let mut reference: Option<Vec<f64>> = None;
        for ext in 0..factor {
            let x = xs * factor + ext;
            let mut row = vec![0.0; small];
            for y in 0..q.states() {
                let ys = y / factor;
                if ys != xs {
                    row[ys] += q.q[(x, y)];
                }
            }
            match &reference {
                None => reference = Some(row),
                Some(r) => {
                    let dev = r
                        .iter()
                        .zip(&row)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if dev > RESIDUAL_TOL {
                        return Err(Error::NotLumpable(format!(
                            "extensions of {} disagree by {dev:.3e}",
                            Configuration::from_index(xs, m, d)
                        )));
                    }
                }
            }
        }
        let row = reference.expect("at least one extension");
        let total: f64 = row.iter().sum();
        for (ys, v) in row.into_iter().enumerate() {
            lumped[(xs, ys)] = v;
        }
        lumped[(xs, xs)] = -total;
    }
    Ok(GeneratorMatrix {
        n: m,
        d,
        q: lumped,
    })
}

/// `max_{x≠y} |Q(xσ, yσ) − Q(x, y)|`.
pub fn check_permutation_commutation(
    q: &GeneratorMatrix,
    sigma: &Permutation,
    initial: Option<&Configuration>,
) -> Result<f64> {
    if sigma.len() != q.n {
        return Err(Error::InvalidPermutation(format!(
            "permutation acts on {} labels, generator on {}",
            sigma.len(),
            q.n
        )));
    }
    if let Some(x0) = initial {
        if !sigma.preserves(x0) {
            return Err(Error::Precondition(format!(
                "permutation does not preserve the partition induced by {x0}"
            )));
        }
    }
    let states: Vec<Configuration> = enumerate_configurations(q.n, q.d).collect();
    let images: Vec<usize> = states
        .iter()
        .map(|x| apply_permutation(x, sigma).map(|y| y.index()))
        .collect::<Result<_>>()?;
    let residual = (0..states.len())
        .into_par_iter()
        .map(|i| {
            let mut worst: f64 = 0.0;
            for j in 0..states.len() {
                if i != j {
                    worst = worst.max((q.q[(images[i], images[j])] - q.q[(i, j)]).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::all_permutations;
    use crate::measures::{Atom, MeasureFamily, StochasticMatrix};
    use proptest::prelude::*;

    fn sm(rows: &[&[f64]]) -> StochasticMatrix {
        StochasticMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn swap() -> StochasticMatrix {
        sm(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    fn km(rows: &[&[u32]]) -> TransitionCountMatrix {
        TransitionCountMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    fn cv(v: &[u32]) -> CountVector {
        CountVector::new(v.to_vec())
    }

    fn cfg(v: &[usize], d: usize) -> Configuration {
        Configuration::from_one_based(v, d).unwrap()
    }

    fn a12(a: f64) -> RateMatrixA {
        RateMatrixA::from_rows(&[vec![0.0, a], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let p = DiceParams::independent(a12(3.0));
        let k = km(&[&[1, 1], &[0, 1]]);
        assert_eq!(gamma(&cv(&[2, 1]), &k, &p).unwrap(), 3.0);

        let nu = CoordinationMeasure::single_atom(1.5, swap()).unwrap();
        let p = DiceParams::new(RateMatrixA::zero(2), nu.clone()).unwrap();
        assert_eq!(gamma(&cv(&[1, 1]), &km(&[&[0, 1], &[1, 0]]), &p).unwrap(), 1.5);

        let p = DiceParams::new(a12(0.25), nu).unwrap();
        assert_eq!(gamma(&cv(&[1, 1]), &km(&[&[0, 1], &[0, 1]]), &p).unwrap(), 0.25);

        assert!(matches!(
            gamma(&cv(&[1, 1]), &km(&[&[1, 0], &[0, 1]]), &p),
            Err(Error::InvalidTransition(_))
        ));
    }

    #[test]
    fn config_rate_examples() {
        let nu = CoordinationMeasure::single_atom(1.0, sm(&[&[0.5, 0.5], &[0.0, 1.0]])).unwrap();
        let p = DiceParams::new(a12(2.0), nu.clone()).unwrap();
        assert!((config_rate(&cfg(&[1], 2), &cfg(&[2], 2), &p).unwrap() - 2.5).abs() < 1e-15);
        let p = DiceParams::new(RateMatrixA::symmetric(2, 0.7).unwrap(), nu).unwrap();
        assert!((config_rate(&cfg(&[1, 1], 2), &cfg(&[2, 2], 2), &p).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            config_rate(&cfg(&[1, 1], 2), &cfg(&[1, 1], 2), &p),
            Err(Error::InvalidTransition(_))
        ));
    }

    #[test]
    fn generator_examples() {
        let a = RateMatrixA::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let g = build_generator(1, &DiceParams::independent(a)).unwrap();
        assert_eq!(
            g.matrix(),
            &DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0])
        );

        let nu = CoordinationMeasure::single_atom(1.0, swap()).unwrap();
        let g = build_generator(2, &DiceParams::new(RateMatrixA::zero(2), nu).unwrap()).unwrap();
        for i in 0..4 {
            let x = g.state(i);
            let swapped = Configuration::new(x.states().iter().map(|s| 1 - s).collect(), 2).unwrap();
            for j in 0..4 {
                let expected = if j == swapped.index() {
                    1.0
                } else if i == j {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(g.matrix()[(i, j)], expected);
            }
        }
    }

    #[test]
    fn generator_cap_is_enforced() {
        let p = DiceParams::independent(RateMatrixA::symmetric(2, 1.0).unwrap());
        assert!(matches!(
            build_generator_with_cap(5, &p, 16),
            Err(Error::Resource(_))
        ));
        assert!(matches!(build_generator(13, &p), Err(Error::Resource(_))));
    }

    struct Handmade;

    impl RateArray for Handmade {
        fn dim(&self) -> usize {
            2
        }

        fn rate(&self, b: &CountVector, k: &TransitionCountMatrix) -> Result<f64> {
            Ok(if b.total() == 1 && k.get(0, 1) == 1 { 1.0 } else { 0.0 })
        }
    }

    #[test]
    fn inconsistent_array_reports_residual() {
        let report = check_consistency_equation(&Handmade, 1).unwrap();
        assert_eq!(report.max_residual, 1.0);
        assert!(report.worst.unwrap().contains("b=(1,0)"));
    }

    fn random_params(d: usize, seed: &[f64]) -> DiceParams {
        let a = RateMatrixA::new(d, seed[..d * d].to_vec()).unwrap();
        let mut atoms = Vec::new();
        for t in 0..2 {
            let raw = &seed[d * d * (t + 1)..d * d * (t + 2)];
            let mut entries = raw.to_vec();
            for i in 0..d {
                let s: f64 = entries[i * d..(i + 1) * d].iter().sum();
                entries[i * d..(i + 1) * d].iter_mut().for_each(|x| *x /= s);
            }
            atoms.push(Atom {
                weight: 0.5 + seed[t],
                matrix: StochasticMatrix::new(d, entries).unwrap(),
            });
        }
        DiceParams::new(a, CoordinationMeasure::new(d, MeasureFamily::Atomic(atoms)).unwrap())
            .unwrap()
    }

    #[test]
    fn consistency_residual_scales_linearly() {
        // a rate array that is off by the same amount at every size
        struct Shifted(DiceParams, f64);
        impl RateArray for Shifted {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn rate(&self, b: &CountVector, k: &TransitionCountMatrix) -> Result<f64> {
                let extra = if b.total() == 1 { self.1 } else { 0.0 };
                Ok(gamma(b, k, &self.0)? + extra)
            }
        }
        let p = random_params(2, &[0.3, 0.6, 0.2, 0.9, 0.4, 0.1, 0.8, 0.5, 0.7, 0.2, 0.6, 0.3]);
        let base = check_consistency_equation(&Shifted(p.clone(), 0.5), 2).unwrap().max_residual;
        let scaled_nu = p.nu().scaled(3.0).unwrap();
        let a3 = RateMatrixA::new(2, p.a().rows().concat().iter().map(|x| x * 3.0).collect()).unwrap();
        let p3 = DiceParams::new(a3, scaled_nu).unwrap();
        let scaled = check_consistency_equation(&Shifted(p3, 1.5), 2).unwrap().max_residual;
        assert!((scaled - 3.0 * base).abs() < 1e-12, "{base} {scaled}");
    }

    #[test]
    fn totally_dependent_single_chain_rates() {
        let maps = vec![
            crate::measures::MapAtom {
                map: vec![1, 2, 0],
                rate: 0.5,
            },
            crate::measures::MapAtom {
                map: vec![1, 1, 1],
                rate: 2.0,
            },
        ];
        let nu = CoordinationMeasure::new(3, MeasureFamily::TotallyDependent(maps.clone())).unwrap();
        let p = DiceParams::new(RateMatrixA::zero(3), nu).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let expected: f64 = maps.iter().filter(|m| m.map[i] == j).map(|m| m.rate).sum();
                assert_eq!(p.single_chain_rate(i, j).unwrap(), expected);
            }
        }
    }

    #[test]
    fn lumping_examples() {
        let a = RateMatrixA::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let p = DiceParams::independent(a);
        let l = lumped_generator(&build_generator(2, &p).unwrap(), 1).unwrap();
        assert_eq!(l.matrix(), build_generator(1, &p).unwrap().matrix());

        // corrupt one rate so that extensions disagree
        let mut q = build_generator(2, &p).unwrap().matrix().clone();
        q[(0, 2)] += 0.5;
        q[(0, 0)] -= 0.5;
        let bad = GeneratorMatrix::from_dense(2, 2, q).unwrap();
        assert!(matches!(lumped_generator(&bad, 1), Err(Error::NotLumpable(_))));
    }

    #[test]
    fn commutation_examples() {
        let p = random_params(2, &[0.3, 0.6, 0.2, 0.9, 0.4, 0.1, 0.8, 0.5, 0.7, 0.2, 0.6, 0.3]);
        let g = build_generator(3, &p).unwrap();
        for sigma in all_permutations(3) {
            assert!(check_permutation_commutation(&g, &sigma, None).unwrap() <= 1e-12);
        }
        assert_eq!(
            check_permutation_commutation(&g, &Permutation::identity(3), None).unwrap(),
            0.0
        );
        let x0 = cfg(&[1, 2, 1], 2);
        let bad = Permutation::from_one_based(&[2, 1, 3]).unwrap();
        assert!(matches!(
            check_permutation_commutation(&g, &bad, Some(&x0)),
            Err(Error::Precondition(_))
        ));
        let good = Permutation::from_one_based(&[3, 2, 1]).unwrap();
        assert!(check_permutation_commutation(&g, &good, Some(&x0)).unwrap() <= 1e-12);

        // particle 1 flips faster than the others
        let mut q = g.matrix().clone();
        let from = cfg(&[1, 1, 1], 2).index();
        let to = cfg(&[2, 1, 1], 2).index();
        q[(from, to)] += 1.0;
        q[(from, from)] -= 1.0;
        let corrupted = GeneratorMatrix::from_dense(3, 2, q).unwrap();
        let sigma = Permutation::from_one_based(&[2, 1, 3]).unwrap();
        assert!(check_permutation_commutation(&corrupted, &sigma, None).unwrap() > 0.5);
    }

    #[test]
    fn csv_export_labels() {
        let p = DiceParams::independent(RateMatrixA::symmetric(2, 1.0).unwrap());
        let g = build_generator(2, &p).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "state,\"1,1\",\"1,2\",\"2,1\",\"2,2\"");
        assert_eq!(text.lines().count(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_atomic_params_are_consistent(seed in proptest::collection::vec(0.01f64..1.0, 27)) {
            for d in [2usize, 3] {
                let p = random_params(d, &seed);
                let report = check_consistency_equation(&p, 3).unwrap();
                prop_assert!(report.max_residual <= 1e-9);
                let g3 = build_generator(3, &p).unwrap();
                prop_assert!(g3.max_row_sum() <= 1e-9);
                let g2 = build_generator(2, &p).unwrap();
                let l = lumped_generator(&g3, 2).unwrap();
                prop_assert!((l.matrix() - g2.matrix()).abs().max() <= 1e-9);
            }
        }

        #[test]
        fn config_rate_relabelling(
            seed in proptest::collection::vec(0.01f64..1.0, 27),
            xs in proptest::collection::vec(0usize..3, 4),
            ys in proptest::collection::vec(0usize..3, 4),
            p_idx in 0usize..24,
        ) {
            prop_assume!(xs != ys);
            let p = random_params(3, &seed);
            let x = Configuration::new(xs, 3).unwrap();
            let y = Configuration::new(ys, 3).unwrap();
            let sigma = &all_permutations(4)[p_idx];
            let lhs = config_rate(&apply_permutation(&x, sigma).unwrap(), &apply_permutation(&y, sigma).unwrap(), &p).unwrap();
            prop_assert_eq!(lhs, config_rate(&x, &y, &p).unwrap());
        }
    }
}
