//! Coordination measures on `d×d` stochastic matrices.
//!
//! A measure is either a finite list of atoms (possibly given through a
//! structured family that expands to atoms) or one of three continuous
//! families with closed-form moments. Monomial integrals
//! `∫ Π u_ij^{k_ij} ν(dU)` are computed exactly: for atoms as finite sums,
//! for the continuous families through rising-factorial ratios, which are
//! exact for the integer exponents that occur.

mod truncation;

use std::fmt;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::combinatorics::{CountVector, TransitionCountMatrix};
use crate::error::{Error, Result};
use crate::ROW_SUM_TOL;

pub use truncation::{harmonic_cdf, Truncation};

/// Rows within this distance of 1 are rescaled instead of rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Default truncation level for simulation.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Row-stochastic `d×d` matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    d: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(d: usize, mut entries: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("matrix dimension must be at least 1".into()));
        }
        if entries.len() != d * d {
            return Err(Error::Shape(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Invariant(format!(
                "matrix entries must be finite and nonnegative, got {bad}"
            )));
        }
        for i in 0..d {
            let row = &mut entries[i * d..(i + 1) * d];
            let s: f64 = row.iter().sum();
            let off = (s - 1.0).abs();
            if off > RENORMALIZE_TOL {
                return Err(Error::Invariant(format!(
                    "row {} sums to {s}, not 1",
                    i + 1
                )));
            }
            if off > ROW_SUM_TOL {
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
        Ok(StochasticMatrix { d, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("stochastic matrix must be square".into()));
        }
        StochasticMatrix::new(d, rows.iter().flatten().copied().collect())
    }

    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1.0;
        }
        StochasticMatrix { d, entries }
    }

    /// Matrix with a single 1 per row at column `map[i]`.
    pub fn from_map(map: &[usize]) -> Self {
        let d = map.len();
        let mut entries = vec![0.0; d * d];
        for (i, &j) in map.iter().enumerate() {
            entries[i * d + j] = 1.0;
        }
        StochasticMatrix { d, entries }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column_sum_residual(&self) -> f64 {
        (0..self.d)
            .map(|j| ((0..self.d).map(|i| self.get(i, j)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.column_sum_residual() <= ROW_SUM_TOL
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    pub fn is_identity(&self) -> bool {
        (0..self.d).all(|i| self.get(i, i) == 1.0)
    }

    /// `Uᵀ`, which is stochastic only when `U` is doubly stochastic.
    pub fn transpose(&self) -> Result<Self> {
        if !self.is_doubly_stochastic() {
            return Err(Error::DualityPrecondition(format!(
                "transpose of a matrix with column-sum residual {:.3e} is not stochastic",
                self.column_sum_residual()
            )));
        }
        let d = self.d;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.get(i, j);
            }
        }
        StochasticMatrix::new(d, entries)
    }

    /// `(Uᵀ r)_j = Σ_i u_ij r_i`.
    pub fn transpose_apply(&self, r: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d];
        for (i, &ri) in r.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.entries[i * d + j] * ri;
            }
        }
        out
    }
}

impl Serialize for StochasticMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.d))?;
        for i in 0..self.d {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

impl fmt::Display for StochasticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.d {
            if i > 0 {
                f.write_str(";")?;
            }
            for j in 0..self.d {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        f.write_str("]")
    }
}

/// Weighted point mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub weight: f64,
    pub matrix: StochasticMatrix,
}

/// `rate · δ_{U^(f)}` where row `i` of `U^(f)` jumps to `map[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapAtom {
    pub map: Vec<usize>,
    pub rate: f64,
}

/// Point mass of the pairwise exchange matrix between `from` and `to`.
///
/// Row `from` keeps `s` and sends `1−s` to `to`; row `to` keeps `v` and
/// sends `1−v` to `from`; other rows are the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeAtom {
    pub from: usize,
    pub to: usize,
    pub s: f64,
    pub v: f64,
    pub weight: f64,
}

/// A block `J` (at least two types) chosen at `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBlock {
    pub members: Vec<usize>,
    pub rate: f64,
}

/// Harmonic component: row `source` keeps `s` and spreads `1−s` uniformly on
/// `targets`, with intensity `rate · s^{η−1}/(1−s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicComponent {
    pub source: usize,
    pub targets: Vec<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureFamily {
    Zero,
    Atomic(Vec<Atom>),
    TotallyDependent(Vec<MapAtom>),
    StochasticExchange(Vec<ExchangeAtom>),
    /// Rows in `J` all equal `η_J/η(J)`.
    MultinomialSplitting { eta: Vec<f64>, blocks: Vec<SplitBlock> },
    /// Rows in `J` all equal one `Dirichlet(η_J)` draw.
    DirichletSplitting { eta: Vec<f64>, blocks: Vec<SplitBlock> },
    HarmonicSplitting { eta: Vec<f64>, components: Vec<HarmonicComponent> },
    /// Rows in `J` are independent Dirichlet vectors with mean
    /// `κ/(η_i|J|)` off the diagonal.
    InstantExchange { eta: Vec<f64>, kappa: f64, blocks: Vec<SplitBlock> },
}

impl MeasureFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            MeasureFamily::Zero => "zero",
            MeasureFamily::Atomic(_) => "atomic",
            MeasureFamily::TotallyDependent(_) => "totally-dependent",
            MeasureFamily::StochasticExchange(_) => "stochastic-exchange",
            MeasureFamily::MultinomialSplitting { .. } => "multinomial-splitting",
            MeasureFamily::DirichletSplitting { .. } => "dirichlet-splitting",
            MeasureFamily::HarmonicSplitting { .. } => "harmonic-splitting",
            MeasureFamily::InstantExchange { .. } => "instant-exchange",
        }
    }
}

/// Validated coordination measure `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationMeasure {
    d: usize,
    family: MeasureFamily,
    /// Expansion into atoms for every finite atomic-like family.
    atoms: Option<Vec<Atom>>,
}

fn block_name(members: &[usize]) -> String {
    let inner: Vec<String> = members.iter().map(|m| (m + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

fn check_rate(rate: f64, component: impl Fn() -> String) -> Result<()> {
    if rate.is_nan() || rate < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{}: rate must be nonnegative, got {rate}",
            component()
        )));
    }
    if rate.is_infinite() {
        return Err(Error::InfiniteMass {
            component: component(),
            reason: "infinite rate".into(),
        });
    }
    Ok(())
}

fn check_block(members: &[usize], d: usize) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "block {} needs at least two types",
            block_name(members)
        )));
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != members.len() {
        return Err(Error::InvalidParameter(format!(
            "block {} repeats a type",
            block_name(members)
        )));
    }
    if let Some(m) = members.iter().find(|&&m| m >= d) {
        return Err(Error::Range(format!("type {} outside 1..={d}", m + 1)));
    }
    Ok(())
}

fn check_eta(eta: &[f64], d: usize, used: &[usize], component: &str) -> Result<()> {
    if eta.len() != d {
        return Err(Error::Shape(format!(
            "eta has {} entries, expected {d}",
            eta.len()
        )));
    }
    for &i in used {
        let e = eta[i];
        if !e.is_finite() {
            return Err(Error::InvalidParameter(format!("eta_{} = {e} is not finite", i + 1)));
        }
        if e <= 0.0 {
            return Err(Error::InfiniteMass {
                component: component.to_string(),
                reason: format!("eta_{} = {e} makes the intensity non-integrable", i + 1),
            });
        }
    }
    Ok(())
}

/// `Π_{t<m} (x + t)`.
fn rising(x: f64, m: u32) -> f64 {
    (0..m).map(|t| x + f64::from(t)).product()
}

fn sorted_members(members: &[usize]) -> Vec<usize> {
    let mut v = members.to_vec();
    v.sort_unstable();
    v
}

impl CoordinationMeasure {
    pub fn new(d: usize, family: MeasureFamily) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        let family = Self::validate(d, family)?;
        let atoms = Self::expand_atoms(d, &family)?;
        Ok(CoordinationMeasure { d, family, atoms })
    }

    pub fn zero(d: usize) -> Self {
        CoordinationMeasure {
            d,
            family: MeasureFamily::Zero,
            atoms: Some(Vec::new()),
        }
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        let d = atoms
            .first()
            .map(|a| a.matrix.dim())
            .ok_or_else(|| Error::InvalidParameter("atomic measure needs at least one atom".into()))?;
        CoordinationMeasure::new(d, MeasureFamily::Atomic(atoms))
    }

    /// `weight · δ_U`.
    pub fn single_atom(weight: f64, matrix: StochasticMatrix) -> Result<Self> {
        CoordinationMeasure::atomic(vec![Atom { weight, matrix }])
    }

    fn validate(d: usize, mut family: MeasureFamily) -> Result<MeasureFamily> {
        match &mut family {
            MeasureFamily::Zero => {}
            MeasureFamily::Atomic(atoms) => {
                for (idx, atom) in atoms.iter().enumerate() {
                    if atom.matrix.dim() != d {
                        return Err(Error::Shape(format!(
                            "atom {} is {}x{}, expected {d}x{d}",
                            idx + 1,
                            atom.matrix.dim(),
                            atom.matrix.dim()
                        )));
                    }
                    check_rate(atom.weight, || format!("atom {}", idx + 1))?;
                    if atom.weight == 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "atom {} has zero weight",
                            idx + 1
                        )));
                    }
                }
            }
            MeasureFamily::TotallyDependent(maps) => {
                for (idx, m) in maps.iter().enumerate() {
                    if m.map.len() != d {
                        return Err(Error::Shape(format!(
                            "map {} has {} entries, expected {d}",
                            idx + 1,
                            m.map.len()
                        )));
                    }
                    if let Some(v) = m.map.iter().find(|&&v| v >= d) {
                        return Err(Error::Range(format!("map image {} outside 1..={d}", v + 1)));
                    }
                    check_rate(m.rate, || format!("map {}", idx + 1))?;
                }
            }
            MeasureFamily::StochasticExchange(atoms) => {
                for (idx, a) in atoms.iter().enumerate() {
                    if a.from >= d || a.to >= d {
                        return Err(Error::Range(format!(
                            "exchange atom {} uses a type outside 1..={d}",
                            idx + 1
                        )));
                    }
                    if a.from == a.to {
                        return Err(Error::InvalidParameter(format!(
                            "exchange atom {} needs two distinct types",
                            idx + 1
                        )));
                    }
                    for (name, x) in [("s", a.s), ("v", a.v)] {
                        if !(0.0..=1.0).contains(&x) {
                            return Err(Error::InvalidParameter(format!(
                                "exchange atom {}: {name} = {x} outside [0,1]",
                                idx + 1
                            )));
                        }
                    }
                    check_rate(a.weight, || format!("exchange atom {}", idx + 1))?;
                }
            }
            MeasureFamily::MultinomialSplitting { eta, blocks }
            | MeasureFamily::DirichletSplitting { eta, blocks } => {
                for b in blocks.iter_mut() {
                    check_block(&b.members, d)?;
                    b.members.sort_unstable();
                    let name = format!("block {}", block_name(&b.members));
                    check_rate(b.rate, || name.clone())?;
                    if b.rate > 0.0 {
                        check_eta(eta, d, &b.members, &name)?;
                    }
                }
                if eta.len() != d {
                    return Err(Error::Shape(format!("eta has {} entries, expected {d}", eta.len())));
                }
            }
            MeasureFamily::HarmonicSplitting { eta, components } => {
                if eta.len() != d {
                    return Err(Error::Shape(format!("eta has {} entries, expected {d}", eta.len())));
                }
                for c in components.iter_mut() {
                    if c.source >= d {
                        return Err(Error::Range(format!("type {} outside 1..={d}", c.source + 1)));
                    }
                    c.targets.sort_unstable();
                    let len = c.targets.len();
                    c.targets.dedup();
                    if c.targets.is_empty() || c.targets.len() != len {
                        return Err(Error::InvalidParameter(format!(
                            "harmonic component from {} needs distinct targets",
                            c.source + 1
                        )));
                    }
                    if c.targets.iter().any(|&t| t >= d || t == c.source) {
                        return Err(Error::InvalidParameter(format!(
                            "harmonic component from {} has a target outside [d] or equal to the source",
                            c.source + 1
                        )));
                    }
                    let name = format!(
                        "harmonic component (source {}, targets {})",
                        c.source + 1,
                        block_name(&c.targets)
                    );
                    check_rate(c.rate, || name.clone())?;
                    if c.rate > 0.0 {
                        check_eta(eta, d, &[c.source], &name)?;
                    }
                }
            }
            MeasureFamily::InstantExchange { eta, kappa, blocks } => {
                for b in blocks.iter_mut() {
                    check_block(&b.members, d)?;
                    b.members.sort_unstable();
                    let name = format!("block {}", block_name(&b.members));
                    check_rate(b.rate, || name.clone())?;
                }
                let all: Vec<usize> = (0..d).collect();
                check_eta(eta, d, &all, "instant exchange")?;
                let min_eta = eta.iter().copied().fold(f64::INFINITY, f64::min);
                if !(*kappa > 0.0 && *kappa < min_eta) {
                    return Err(Error::InvalidParameter(format!(
                        "kappa = {kappa} must lie in (0, {min_eta})"
                    )));
                }
            }
        }
        Ok(family)
    }

    fn expand_atoms(d: usize, family: &MeasureFamily) -> Result<Option<Vec<Atom>>> {
        let atoms = match family {
            MeasureFamily::Zero => Vec::new(),
            MeasureFamily::Atomic(atoms) => atoms.clone(),
            MeasureFamily::TotallyDependent(maps) => maps
                .iter()
                .filter(|m| m.rate > 0.0)
                .map(|m| Atom {
                    weight: m.rate,
                    matrix: StochasticMatrix::from_map(&m.map),
                })
                .collect(),
            MeasureFamily::StochasticExchange(list) => list
                .iter()
                .filter(|a| a.weight > 0.0)
                .map(|a| {
                    let mut u = StochasticMatrix::identity(d);
                    let (i, j) = (a.from, a.to);
                    u.entries[i * d + i] = a.s;
                    u.entries[i * d + j] = 1.0 - a.s;
                    u.entries[j * d + j] = a.v;
                    u.entries[j * d + i] = 1.0 - a.v;
                    Atom {
                        weight: a.weight,
                        matrix: u,
                    }
                })
                .collect(),
            MeasureFamily::MultinomialSplitting { eta, blocks } => {
                let mut out = Vec::new();
                for b in blocks.iter().filter(|b| b.rate > 0.0) {
                    let total: f64 = b.members.iter().map(|&j| eta[j]).sum();
                    let mut entries = StochasticMatrix::identity(d).entries;
                    for &i in &b.members {
                        for &j in &b.members {
                            entries[i * d + j] = eta[j] / total;
                        }
                    }
                    out.push(Atom {
                        weight: b.rate,
                        matrix: StochasticMatrix::new(d, entries)?,
                    });
                }
                out
            }
            _ => return Ok(None),
        };
        Ok(Some(atoms))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn family(&self) -> &MeasureFamily {
        &self.family
    }

    /// Atom expansion, present for every family with finitely many atoms.
    pub fn atoms(&self) -> Option<&[Atom]> {
        self.atoms.as_deref()
    }

    /// `true` for the zero measure or when every rate is zero.
    pub fn is_zero(&self) -> bool {
        match &self.family {
            MeasureFamily::DirichletSplitting { blocks, .. }
            | MeasureFamily::InstantExchange { blocks, .. } => blocks.iter().all(|b| b.rate == 0.0),
            MeasureFamily::HarmonicSplitting { components, .. } => {
                components.iter().all(|c| c.rate == 0.0)
            }
            _ => self.atoms.as_ref().is_some_and(|a| a.is_empty()),
        }
    }

    /// Returns `λ·ν`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {lambda}"
            )));
        }
        let family = match &self.family {
            MeasureFamily::Zero => MeasureFamily::Zero,
            MeasureFamily::Atomic(a) => MeasureFamily::Atomic(
                a.iter()
                    .map(|x| Atom {
                        weight: x.weight * lambda,
                        matrix: x.matrix.clone(),
                    })
                    .collect(),
            ),
            MeasureFamily::TotallyDependent(m) => MeasureFamily::TotallyDependent(
                m.iter()
                    .map(|x| MapAtom {
                        map: x.map.clone(),
                        rate: x.rate * lambda,
                    })
                    .collect(),
            ),
            MeasureFamily::StochasticExchange(a) => MeasureFamily::StochasticExchange(
                a.iter()
                    .map(|x| ExchangeAtom {
                        weight: x.weight * lambda,
                        ..x.clone()
                    })
                    .collect(),
            ),
            MeasureFamily::MultinomialSplitting { eta, blocks } => {
                MeasureFamily::MultinomialSplitting {
                    eta: eta.clone(),
                    blocks: scale_blocks(blocks, lambda),
                }
            }
            MeasureFamily::DirichletSplitting { eta, blocks } => MeasureFamily::DirichletSplitting {
                eta: eta.clone(),
                blocks: scale_blocks(blocks, lambda),
            },
            MeasureFamily::HarmonicSplitting { eta, components } => {
                MeasureFamily::HarmonicSplitting {
                    eta: eta.clone(),
                    components: components
                        .iter()
                        .map(|c| HarmonicComponent {
                            rate: c.rate * lambda,
                            ..c.clone()
                        })
                        .collect(),
                }
            }
            MeasureFamily::InstantExchange { eta, kappa, blocks } => MeasureFamily::InstantExchange {
                eta: eta.clone(),
                kappa: *kappa,
                blocks: scale_blocks(blocks, lambda),
            },
        };
        CoordinationMeasure::new(self.d, family)
    }

    fn check_dim(&self, k: &TransitionCountMatrix) -> Result<()> {
        if k.dim() != self.d {
            return Err(Error::Shape(format!(
                "exponent matrix is {}x{}, measure lives on {}x{}",
                k.dim(),
                k.dim(),
                self.d,
                self.d
            )));
        }
        Ok(())
    }

    /// `∫ Π_ij u_ij^{k_ij} ν(dU)`.
    pub fn monomial_integral(&self, k: &TransitionCountMatrix) -> Result<f64> {
        self.check_dim(k)?;
        if let Some(atoms) = &self.atoms {
            return Ok(atoms
                .iter()
                .map(|a| a.weight * k.monomial(a.matrix.entries()))
                .sum());
        }
        let d = self.d;
        match &self.family {
            MeasureFamily::DirichletSplitting { eta, blocks } => Ok(blocks
                .iter()
                .filter(|b| b.rate > 0.0)
                .map(|b| b.rate * dirichlet_block_moment(k, eta, &b.members, d))
                .sum()),
            MeasureFamily::InstantExchange { eta, kappa, blocks } => Ok(blocks
                .iter()
                .filter(|b| b.rate > 0.0)
                .map(|b| b.rate * instant_exchange_moment(k, eta, *kappa, &b.members, d))
                .sum()),
            MeasureFamily::HarmonicSplitting { eta, components } => {
                let active = components.iter().any(|c| c.rate > 0.0);
                if active && k.is_diagonal() {
                    return Err(Error::UndefinedIntegral(format!(
                        "diagonal monomial {k} diverges under the harmonic intensity"
                    )));
                }
                Ok(components
                    .iter()
                    .filter(|c| c.rate > 0.0)
                    .map(|c| c.rate * harmonic_moment(k, eta[c.source], c, d))
                    .sum())
            }
            _ => unreachable!("atomic-like families carry an atom expansion"),
        }
    }

    /// `∫ (1 − Π_i u_ii^{b_i}) ν(dU)`, finite for every valid measure.
    pub fn diagonal_deficit(&self, b: &CountVector) -> Result<f64> {
        if b.dim() != self.d {
            return Err(Error::Shape(format!(
                "count vector has {} entries, measure lives on d = {}",
                b.dim(),
                self.d
            )));
        }
        if let Some(atoms) = &self.atoms {
            return Ok(atoms
                .iter()
                .map(|a| {
                    let stay: f64 = (0..self.d)
                        .map(|i| a.matrix.get(i, i).powi(b.get(i) as i32))
                        .product();
                    a.weight * (1.0 - stay)
                })
                .sum());
        }
        match &self.family {
            MeasureFamily::DirichletSplitting { eta, blocks } => Ok(blocks
                .iter()
                .filter(|bl| bl.rate > 0.0)
                .map(|bl| {
                    let total_eta: f64 = bl.members.iter().map(|&j| eta[j]).sum();
                    let total_b: u32 = bl.members.iter().map(|&j| b.get(j)).sum();
                    let num: f64 = bl.members.iter().map(|&j| rising(eta[j], b.get(j))).product();
                    bl.rate * (1.0 - num / rising(total_eta, total_b))
                })
                .sum()),
            MeasureFamily::InstantExchange { eta, kappa, blocks } => Ok(blocks
                .iter()
                .filter(|bl| bl.rate > 0.0)
                .map(|bl| {
                    let size = bl.members.len() as f64;
                    let stay: f64 = bl
                        .members
                        .iter()
                        .map(|&i| {
                            let alpha_ii = eta[i] - kappa * (size - 1.0) / size;
                            rising(alpha_ii, b.get(i)) / rising(eta[i], b.get(i))
                        })
                        .product();
                    bl.rate * (1.0 - stay)
                })
                .sum()),
            MeasureFamily::HarmonicSplitting { eta, components } => Ok(components
                .iter()
                .filter(|c| c.rate > 0.0)
                .map(|c| {
                    let e = eta[c.source];
                    c.rate * (0..b.get(c.source)).map(|m| 1.0 / (e + f64::from(m))).sum::<f64>()
                })
                .sum()),
            _ => unreachable!("atomic-like families carry an atom expansion"),
        }
    }

    /// `∫ Σ_i (1 − u_ii) ν(dU)`.
    pub fn integrability_value(&self) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.d {
            total += self.diagonal_deficit(&CountVector::unit(self.d, i))?;
        }
        if !total.is_finite() {
            return Err(Error::InfiniteMass {
                component: self.family.tag().into(),
                reason: format!("integrability value evaluates to {total}"),
            });
        }
        Ok(total)
    }

    /// `true` when every matrix charged by `ν` is doubly stochastic.
    pub fn is_doubly_stochastic_supported(&self) -> bool {
        match &self.atoms {
            Some(atoms) => atoms.iter().all(|a| a.matrix.is_doubly_stochastic()),
            None => self.is_zero(),
        }
    }

    /// Pushforward under `U ↦ Uᵀ`, returned as an atomic measure.
    pub fn transpose_pushforward(&self) -> Result<Self> {
        if !self.is_doubly_stochastic_supported() {
            return Err(Error::DualityPrecondition(format!(
                "{} measure is not supported on doubly stochastic matrices",
                self.family.tag()
            )));
        }
        let atoms = match &self.atoms {
            Some(a) => a,
            None => return Ok(CoordinationMeasure::zero(self.d)),
        };
        if atoms.is_empty() {
            return Ok(CoordinationMeasure::zero(self.d));
        }
        let transposed = atoms
            .iter()
            .map(|a| {
                Ok(Atom {
                    weight: a.weight,
                    matrix: a.matrix.transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CoordinationMeasure::new(self.d, MeasureFamily::Atomic(transposed))
    }
}

fn scale_blocks(blocks: &[SplitBlock], lambda: f64) -> Vec<SplitBlock> {
    blocks
        .iter()
        .map(|b| SplitBlock {
            members: b.members.clone(),
            rate: b.rate * lambda,
        })
        .collect()
}

/// Whether every nonzero off-diagonal exponent sits inside `J × J`.
fn exponents_inside(k: &TransitionCountMatrix, members: &[usize], d: usize) -> bool {
    let mut inside = vec![false; d];
    for &m in members {
        inside[m] = true;
    }
    for i in 0..d {
        for j in 0..d {
            if i != j && k.get(i, j) > 0 && !(inside[i] && inside[j]) {
                return false;
            }
        }
    }
    true
}

/// `E[Π_{i,j∈J} S_j^{k_ij}]` for `S ~ Dirichlet(η_J)`, zero if `K` moves
/// anything outside `J`.
fn dirichlet_block_moment(k: &TransitionCountMatrix, eta: &[f64], members: &[usize], d: usize) -> f64 {
    if !exponents_inside(k, members, d) {
        return 0.0;
    }
    let mut num = 1.0;
    let mut total_eta = 0.0;
    let mut total_m = 0;
    for &j in members {
        let m_j: u32 = members.iter().map(|&i| k.get(i, j)).sum();
        num *= rising(eta[j], m_j);
        total_eta += eta[j];
        total_m += m_j;
    }
    num / rising(total_eta, total_m)
}

/// Product over `i ∈ J` of independent Dirichlet row moments.
fn instant_exchange_moment(
    k: &TransitionCountMatrix,
    eta: &[f64],
    kappa: f64,
    members: &[usize],
    d: usize,
) -> f64 {
    if !exponents_inside(k, members, d) {
        return 0.0;
    }
    let size = members.len() as f64;
    let off = kappa / size;
    let mut value = 1.0;
    for &i in members {
        let alpha_ii = eta[i] - kappa * (size - 1.0) / size;
        let row_total: u32 = members.iter().map(|&j| k.get(i, j)).sum();
        let mut num = 1.0;
        for &j in members {
            let alpha = if i == j { alpha_ii } else { off };
            num *= rising(alpha, k.get(i, j));
        }
        value *= num / rising(eta[i], row_total);
    }
    value
}

/// `|J|^{-m} B(η + k_ii, m)` with `m` the number of moves out of `i`, zero if
/// any other row moves or `i` moves outside `J`.
fn harmonic_moment(k: &TransitionCountMatrix, eta: f64, c: &HarmonicComponent, d: usize) -> f64 {
    let i = c.source;
    for r in 0..d {
        for j in 0..d {
            if r == j || k.get(r, j) == 0 {
                continue;
            }
            if r != i || !c.targets.contains(&j) {
                return 0.0;
            }
        }
    }
    let m: u32 = c.targets.iter().map(|&j| k.get(i, j)).sum();
    debug_assert!(m > 0, "diagonal exponents handled by caller");
    let a = eta + f64::from(k.get(i, i));
    // B(a, m) = (m-1)! / (a)_m
    let factorial: f64 = (1..m).map(f64::from).product();
    factorial / rising(a, m) * (c.targets.len() as f64).powi(-(m as i32))
}

/// Members of a split block, sorted (for callers that build blocks by hand).
pub fn block(members: &[usize], rate: f64) -> SplitBlock {
    SplitBlock {
        members: sorted_members(members),
        rate,
    }
}
