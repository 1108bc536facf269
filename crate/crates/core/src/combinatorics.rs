//! Integer combinatorics of types, configurations and `(b, K)`-changes.
//!
//! Types are 0-based everywhere inside the crate. Parsing and `Display`
//! implementations convert to and from the 1-based notation used in config
//! files and exported artifacts.
//!
//! Enumeration order is fixed: compositions are listed lexicographically with
//! the first coordinate *descending*, so `(2,0), (1,1), (0,2)`, and transition
//! matrices are the Cartesian product of their row compositions with row 1
//! varying slowest.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A type (vertex of the complete graph on `d` vertices), stored 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeIndex(usize);

impl TypeIndex {
    pub fn new(zero_based: usize, d: usize) -> Result<Self> {
        if zero_based >= d {
            return Err(Error::Range(format!(
                "type {} outside 1..={d}",
                zero_based + 1
            )));
        }
        Ok(TypeIndex(zero_based))
    }

    pub fn from_one_based(value: usize, d: usize) -> Result<Self> {
        if value == 0 || value > d {
            return Err(Error::Range(format!("type {value} outside 1..={d}")));
        }
        Ok(TypeIndex(value - 1))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    #[inline]
    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for TypeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

/// A labelled particle configuration `x ∈ [d]^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    d: usize,
    states: Vec<usize>,
}

impl Configuration {
    /// Builds a configuration from 0-based states.
    pub fn new(states: Vec<usize>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        if let Some(bad) = states.iter().find(|&&s| s >= d) {
            return Err(Error::Range(format!("type {} outside 1..={d}", bad + 1)));
        }
        Ok(Configuration { d, states })
    }

    pub fn from_one_based(values: &[usize], d: usize) -> Result<Self> {
        let states = values
            .iter()
            .map(|&v| TypeIndex::from_one_based(v, d).map(TypeIndex::get))
            .collect::<Result<Vec<_>>>()?;
        Configuration::new(states, d)
    }

    /// Parses `"1,2,1"`. The empty string is the empty configuration.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Configuration::new(Vec::new(), d);
        }
        let values = trimmed
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Range(format!("bad type `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Configuration::from_one_based(&values, d)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    #[inline]
    pub fn get(&self, l: usize) -> usize {
        self.states[l]
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.states.iter().map(|s| s + 1).collect()
    }

    /// Position of this configuration in the lexicographic order of `[d]^n`.
    pub fn index(&self) -> usize {
        self.states.iter().fold(0, |acc, &s| acc * self.d + s)
    }

    pub fn from_index(mut index: usize, n: usize, d: usize) -> Self {
        let mut states = vec![0; n];
        for slot in states.iter_mut().rev() {
            *slot = index % d;
            index /= d;
        }
        Configuration { d, states }
    }

    /// First `m` coordinates.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        if m > self.len() {
            return Err(Error::Shape(format!(
                "cannot restrict a configuration of length {} to {m}",
                self.len()
            )));
        }
        Ok(Configuration {
            d: self.d,
            states: self.states[..m].to_vec(),
        })
    }

    /// Occupation counts `b_i = #{l : x_l = i}`.
    pub fn counts(&self) -> CountVector {
        let mut counts = vec![0u32; self.d];
        for &s in &self.states {
            counts[s] += 1;
        }
        CountVector { counts }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, s) in self.states.iter().enumerate() {
            if l > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", s + 1)?;
        }
        Ok(())
    }
}

/// All configurations of `[d]^n` in lexicographic order.
pub fn enumerate_configurations(n: usize, d: usize) -> impl Iterator<Item = Configuration> {
    let total = d.checked_pow(n as u32).unwrap_or(usize::MAX);
    (0..total).map(move |idx| Configuration::from_index(idx, n, d))
}

/// Occupation vector `b ∈ ℕ₀^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u32>,
}

impl CountVector {
    pub fn new(counts: Vec<u32>) -> Self {
        CountVector { counts }
    }

    pub fn zeros(d: usize) -> Self {
        CountVector { counts: vec![0; d] }
    }

    pub fn unit(d: usize, i: usize) -> Self {
        let mut counts = vec![0; d];
        counts[i] = 1;
        CountVector { counts }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        self.counts[i]
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// `b + e_i`.
    pub fn plus_unit(&self, i: usize) -> Self {
        let mut counts = self.counts.clone();
        counts[i] += 1;
        CountVector { counts }
    }

    /// `r^b = Π r_i^{b_i}`, with `0^0 = 1`.
    pub fn monomial(&self, r: &[f64]) -> f64 {
        self.counts
            .iter()
            .zip(r)
            .map(|(&b, &x)| x.powi(b as i32))
            .product()
    }
}

impl fmt::Display for CountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Matrix `K` where `k_ij` counts particles that moved from `i` to `j`.
///
/// Row sums are derived, so a matrix is always consistent with its own
/// `row_sums()`; consistency with an externally given `b` is checked by the
/// operations that need it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionCountMatrix {
    d: usize,
    entries: Vec<u32>,
}

impl TransitionCountMatrix {
    pub fn zeros(d: usize) -> Self {
        TransitionCountMatrix {
            d,
            entries: vec![0; d * d],
        }
    }

    /// Row-major construction from nested rows.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("transition count matrix must be square".into()));
        }
        Ok(TransitionCountMatrix {
            d,
            entries: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn diag(b: &CountVector) -> Self {
        let d = b.dim();
        let mut k = TransitionCountMatrix::zeros(d);
        for i in 0..d {
            k.entries[i * d + i] = b.get(i);
        }
        k
    }

    /// Elementary matrix `E_ij`.
    pub fn elementary(d: usize, i: usize, j: usize) -> Self {
        let mut k = TransitionCountMatrix::zeros(d);
        k.entries[i * d + j] = 1;
        k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.entries[i * self.d + j]
    }

    #[inline]
    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn row_sums(&self) -> CountVector {
        CountVector::new((0..self.d).map(|i| self.row(i).iter().sum()).collect())
    }

    pub fn col_sums(&self) -> CountVector {
        CountVector::new(
            (0..self.d)
                .map(|j| (0..self.d).map(|i| self.get(i, j)).sum())
                .collect(),
        )
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.d).all(|i| (0..self.d).all(|j| i == j || self.get(i, j) == 0))
    }

    /// Sum of the off-diagonal entries (particles that actually moved).
    pub fn moved(&self) -> u32 {
        (0..self.d)
            .flat_map(|i| (0..self.d).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| self.get(i, j))
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let d = self.d;
        let mut t = TransitionCountMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                t.entries[j * d + i] = self.get(i, j);
            }
        }
        t
    }

    /// `K + E_ij`.
    pub fn plus_elementary(&self, i: usize, j: usize) -> Self {
        let mut k = self.clone();
        k.entries[i * self.d + j] += 1;
        k
    }

    /// `K - E_ij`, if that entry is positive.
    pub fn minus_elementary(&self, i: usize, j: usize) -> Option<Self> {
        let mut k = self.clone();
        let slot = &mut k.entries[i * self.d + j];
        *slot = slot.checked_sub(1)?;
        Some(k)
    }

    /// `Π u_ij^{k_ij}` for a row-major `d×d` array `u` (with `0^0 = 1`).
    pub fn monomial(&self, u: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (&k, &x) in self.entries.iter().zip(u) {
            if k > 0 {
                acc *= x.powi(k as i32);
            }
        }
        acc
    }

    /// `Π_i b_i! / Π_ij k_ij!`, as a float (products of multinomials).
    pub fn multinomial_weight(&self) -> f64 {
        (0..self.d).map(|i| multinomial_f64(self.row(i))).product()
    }
}

impl fmt::Display for TransitionCountMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.d {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str("[")?;
            for j in 0..self.d {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}

/// Bijection on `0..n` acting on configurations by `(xσ)_i = x_{σ(i)}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n {
                return Err(Error::InvalidPermutation(format!(
                    "image {} outside 1..={n}",
                    m + 1
                )));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidPermutation(format!(
                    "image {} repeated",
                    m + 1
                )));
            }
        }
        Ok(Permutation { map })
    }

    pub fn from_one_based(values: &[usize]) -> Result<Self> {
        let map = values
            .iter()
            .map(|&v| {
                v.checked_sub(1)
                    .ok_or_else(|| Error::InvalidPermutation("images are 1-based".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(map)
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { map: inv }
    }

    /// `true` when `σ(A_i) = A_i` for the partition induced by `x`.
    pub fn preserves(&self, x: &Configuration) -> bool {
        self.map.len() == x.len() && (0..x.len()).all(|i| x.get(self.map[i]) == x.get(i))
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![Permutation {
        map: current.clone(),
    }];
    // next lexicographic permutation until none is left
    while let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) {
        let pivot = i - 1;
        let j = (i..n).rev().find(|&j| current[j] > current[pivot]).unwrap();
        current.swap(pivot, j);
        current[i..].reverse();
        out.push(Permutation {
            map: current.clone(),
        });
    }
    out
}

/// Every `b ∈ ℕ₀^d` with `Σ b_i = n`, first coordinate descending.
pub fn enumerate_compositions(n: u32, d: usize) -> Result<Vec<CountVector>> {
    if d == 0 {
        return Err(Error::InvalidDimension("d must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(d);
    compositions_rec(n, d, &mut prefix, &mut |c| out.push(CountVector::new(c.to_vec())));
    Ok(out)
}

fn compositions_rec(n: u32, d: usize, prefix: &mut Vec<u32>, emit: &mut impl FnMut(&[u32])) {
    if d == 1 {
        prefix.push(n);
        emit(prefix);
        prefix.pop();
        return;
    }
    for first in (0..=n).rev() {
        prefix.push(first);
        compositions_rec(n - first, d - 1, prefix, emit);
        prefix.pop();
    }
}

/// All `K` whose `i`-th row is a composition of `b_i`; `diag(b)` is skipped
/// unless `include_diagonal` is set.
pub fn enumerate_transition_matrices(
    b: &CountVector,
    include_diagonal: bool,
) -> Vec<TransitionCountMatrix> {
    let d = b.dim();
    let rows: Vec<Vec<CountVector>> = (0..d)
        .map(|i| enumerate_compositions(b.get(i), d).expect("d >= 1 for a nonempty count vector"))
        .collect();
    let diagonal = TransitionCountMatrix::diag(b);
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    let mut choice = vec![0usize; d];
    loop {
        let mut entries = Vec::with_capacity(d * d);
        for (i, &c) in choice.iter().enumerate() {
            entries.extend_from_slice(rows[i][c].counts());
        }
        let k = TransitionCountMatrix { d, entries };
        if include_diagonal || k != diagonal {
            out.push(k);
        }
        // odometer, last row fastest
        let mut pos = d;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < rows[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Returns `(b, K)` with `b_i = #{l : x_l = i}` and `k_ij = #{l : x_l = i, y_l = j}`.
pub fn counts_from_configs(
    x: &Configuration,
    y: &Configuration,
) -> Result<(CountVector, TransitionCountMatrix)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "configurations have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "configurations have dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let d = x.dim();
    let mut k = TransitionCountMatrix::zeros(d);
    for (&i, &j) in x.states().iter().zip(y.states()) {
        k.entries[i * d + j] += 1;
    }
    Ok((x.counts(), k))
}

/// Number of targets `y` reachable from a fixed `x` through a `(b, K)`-change:
/// `Π_i b_i! / Π_ij k_ij!`.
pub fn target_multiplicity(b: &CountVector, k: &TransitionCountMatrix) -> Result<u64> {
    if k.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "K is {}x{} but b has {} entries",
            k.dim(),
            k.dim(),
            b.dim()
        )));
    }
    if &k.row_sums() != b {
        return Err(Error::Invariant(format!(
            "row sums of {k} do not match {b}"
        )));
    }
    let mut acc: u64 = 1;
    for i in 0..k.dim() {
        acc = acc
            .checked_mul(multinomial_u64(k.row(i))?)
            .ok_or_else(|| Error::Overflow("target multiplicity exceeds u64".into()))?;
    }
    Ok(acc)
}

/// `(Σk)! / Π k!` computed as a product of binomials.
pub fn multinomial_u64(parts: &[u32]) -> Result<u64> {
    let mut acc: u64 = 1;
    let mut running: u64 = 0;
    for &p in parts {
        for step in 1..=u64::from(p) {
            running += 1;
            // acc * running / step stays integral: acc·C(running, step) pattern
            acc = acc
                .checked_mul(running)
                .ok_or_else(|| Error::Overflow("multinomial exceeds u64".into()))?
                / step;
        }
    }
    Ok(acc)
}

/// Multinomial coefficient as a float; exact for the small sizes used here.
pub fn multinomial_f64(parts: &[u32]) -> f64 {
    let mut acc = 1.0;
    let mut running = 0.0;
    for &p in parts {
        for step in 1..=p {
            running += 1.0;
            acc *= running / f64::from(step);
        }
    }
    acc
}

/// `x_σ` with `(x_σ)_i = x_{σ(i)}`.
pub fn apply_permutation(x: &Configuration, sigma: &Permutation) -> Result<Configuration> {
    if sigma.len() != x.len() {
        return Err(Error::InvalidPermutation(format!(
            "permutation acts on {} labels, configuration has {}",
            sigma.len(),
            x.len()
        )));
    }
    Ok(Configuration {
        d: x.dim(),
        states: (0..x.len()).map(|i| x.get(sigma.image(i))).collect(),
    })
}

/// Index sets `A_i = {l : x_l = i}` (0-based labels), one per type.
pub fn induced_partition(x: &Configuration) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); x.dim()];
    for (l, &s) in x.states().iter().enumerate() {
        sets[s].push(l);
    }
    sets
}
