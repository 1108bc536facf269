//! Partitions of `{0..n}` with a type attached to each block.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::combinatorics::{Configuration, CountVector};
use crate::error::{Error, Result};

/// Blocks are sorted internally and ordered by least element; `types[k]` is
/// the type of `blocks[k]`. Stored 0-based, printed 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypedPartition {
    d: usize,
    blocks: Vec<Vec<usize>>,
    types: Vec<usize>,
}

impl TypedPartition {
    pub fn new(mut blocks: Vec<Vec<usize>>, types: Vec<usize>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        if blocks.len() != types.len() {
            return Err(Error::Shape(format!(
                "{} blocks but {} types",
                blocks.len(),
                types.len()
            )));
        }
        if let Some(t) = types.iter().find(|&&t| t >= d) {
            return Err(Error::Range(format!("type {} outside 1..={d}", t + 1)));
        }
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::Invariant("empty block".into()));
            }
            b.sort_unstable();
            for &e in b.iter() {
                if e >= n || std::mem::replace(&mut seen[e], true) {
                    return Err(Error::Invariant(format!(
                        "blocks do not partition 1..={n} (element {})",
                        e + 1
                    )));
                }
            }
        }
        let mut paired: Vec<(Vec<usize>, usize)> = blocks.into_iter().zip(types).collect();
        paired.sort_by_key(|(b, _)| b[0]);
        let (blocks, types) = paired.into_iter().unzip();
        Ok(TypedPartition { d, blocks, types })
    }

    /// One singleton block per particle, typed by the configuration.
    pub fn singletons(x: &Configuration) -> Self {
        TypedPartition {
            d: x.dim(),
            blocks: (0..x.len()).map(|l| vec![l]).collect(),
            types: x.states().to_vec(),
        }
    }

    /// Parses `"1,3:2|2:1"`.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut types = Vec::new();
        for part in text.trim().split('|') {
            let (members, ty) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidParameter(format!("block '{part}' lacks ':type'")))?;
            let ty: usize = ty
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad type in '{part}'")))?;
            if ty == 0 {
                return Err(Error::Range(format!("type 0 in '{part}', types are 1-based")));
            }
            let members = members
                .split(',')
                .map(|s| match s.trim().parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::InvalidParameter(format!("bad element '{s}' in '{part}'"))),
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push(members);
            types.push(ty - 1);
        }
        TypedPartition::new(blocks, types, d)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of elements partitioned.
    pub fn size(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    /// Number of blocks of each type.
    pub fn type_counts(&self) -> CountVector {
        let mut c = vec![0u32; self.d];
        for &t in &self.types {
            c[t] += 1;
        }
        CountVector::new(c)
    }

    /// Type carried by each element.
    pub fn element_types(&self) -> Configuration {
        let mut states = vec![0; self.size()];
        for (b, &t) in self.blocks.iter().zip(&self.types) {
            for &e in b {
                states[e] = t;
            }
        }
        Configuration::new(states, self.d).expect("types checked on construction")
    }

    /// Drops elements `≥ m` and the blocks they empty.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        if m > self.size() {
            return Err(Error::Shape(format!(
                "cannot restrict {} elements to {m}",
                self.size()
            )));
        }
        let mut blocks = Vec::new();
        let mut types = Vec::new();
        for (b, &t) in self.blocks.iter().zip(&self.types) {
            let kept: Vec<usize> = b.iter().copied().filter(|&e| e < m).collect();
            if !kept.is_empty() {
                blocks.push(kept);
                types.push(t);
            }
        }
        // filtering keeps least elements ordered
        Ok(TypedPartition {
            d: self.d,
            blocks,
            types,
        })
    }
}

impl fmt::Display for TypedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (b, t)) in self.blocks.iter().zip(&self.types).enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            for (l, e) in b.iter().enumerate() {
                if l > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", e + 1)?;
            }
            write!(f, ":{}", t + 1)?;
        }
        Ok(())
    }
}

impl Serialize for TypedPartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn check_blocks(pi: &TypedPartition, members: &[usize]) -> Result<()> {
    if members.is_empty() {
        return Err(Error::Range("merger needs at least one block".into()));
    }
    let mut seen = vec![false; pi.block_count()];
    for &j in members {
        if j >= pi.block_count() || std::mem::replace(&mut seen[j], true) {
            return Err(Error::Range(format!(
                "block index {} invalid for {} blocks",
                j + 1,
                pi.block_count()
            )));
        }
    }
    Ok(())
}

/// Merges the blocks listed in `members` (0-based block indices) into one
/// block of type `target`.
pub fn coal_apply(pi: &TypedPartition, members: &[usize], target: usize) -> Result<TypedPartition> {
    check_blocks(pi, members)?;
    if target >= pi.d {
        return Err(Error::Range(format!("type {} outside 1..={}", target + 1, pi.d)));
    }
    let mut merged = Vec::new();
    let mut blocks = Vec::new();
    let mut types = Vec::new();
    for (k, (b, &t)) in pi.blocks.iter().zip(&pi.types).enumerate() {
        if members.contains(&k) {
            merged.extend_from_slice(b);
        } else {
            blocks.push(b.clone());
            types.push(t);
        }
    }
    blocks.push(merged);
    types.push(target);
    TypedPartition::new(blocks, types, pi.d)
}

/// Same blocks with new types.
pub fn muta_apply(pi: &TypedPartition, types: &[usize]) -> Result<TypedPartition> {
    if types.len() != pi.block_count() {
        return Err(Error::Shape(format!(
            "{} types for {} blocks",
            types.len(),
            pi.block_count()
        )));
    }
    if let Some(t) = types.iter().find(|&&t| t >= pi.d) {
        return Err(Error::Range(format!("type {} outside 1..={}", t + 1, pi.d)));
    }
    Ok(TypedPartition {
        d: pi.d,
        blocks: pi.blocks.clone(),
        types: types.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_print() {
        let p = TypedPartition::parse("2:1|1,3:2", 2).unwrap();
        assert_eq!(p.to_string(), "1,3:2|2:1");
        assert_eq!(p.types(), &[1, 0]);
        assert!(TypedPartition::parse("1,1:1", 2).is_err());
        assert!(TypedPartition::parse("1:3", 2).is_err());
        assert!(TypedPartition::parse("1:1|3:1", 2).is_err());
    }

    #[test]
    fn merge_examples() {
        let p = TypedPartition::parse("1:1|2:1", 1).unwrap();
        let q = coal_apply(&p, &[0, 1], 0).unwrap();
        assert_eq!(q.to_string(), "1,2:1");
        let p = TypedPartition::parse("1:1|2:1", 2).unwrap();
        let q = coal_apply(&p, &[1], 1).unwrap();
        assert_eq!(q.to_string(), "1:1|2:2");
        assert!(matches!(coal_apply(&p, &[2], 0), Err(Error::Range(_))));
        assert!(matches!(coal_apply(&p, &[0, 0], 0), Err(Error::Range(_))));
    }

    #[test]
    fn relabel_examples() {
        let p = TypedPartition::parse("1,3:1|2:2", 2).unwrap();
        assert_eq!(muta_apply(&p, p.types()).unwrap(), p);
        let q = muta_apply(&p, &[1, 0]).unwrap();
        assert_eq!(q.blocks(), p.blocks());
        assert_eq!(q.types(), &[1, 0]);
        assert_eq!(muta_apply(&q, &[1, 0]).unwrap(), q);
        assert!(matches!(muta_apply(&p, &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn restriction_drops_and_reorders() {
        let p = TypedPartition::parse("1,4:2|2:1|3,5:1", 2).unwrap();
        assert_eq!(p.restrict(3).unwrap().to_string(), "1:2|2:1|3:1");
        assert_eq!(p.restrict(2).unwrap().to_string(), "1:2|2:1");
        assert_eq!(p.restrict(5).unwrap(), p);
    }

    fn arb_partition() -> impl Strategy<Value = TypedPartition> {
        (1usize..8, 1usize..4).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(0..n, n),
                proptest::collection::vec(0..d, n),
                Just(d),
            )
                .prop_map(|(labels, tys, d)| {
                    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
                    for (e, &l) in labels.iter().enumerate() {
                        blocks[l].push(e);
                    }
                    let mut types = Vec::new();
                    let blocks: Vec<Vec<usize>> = blocks
                        .into_iter()
                        .enumerate()
                        .filter(|(_, b)| !b.is_empty())
                        .map(|(k, b)| {
                            types.push(tys[k]);
                            b
                        })
                        .collect();
                    TypedPartition::new(blocks, types, d).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn merging_keeps_canonical_order(p in arb_partition(), mask in 1u32..256, t in 0usize..3) {
            let members: Vec<usize> = (0..p.block_count()).filter(|k| mask >> k & 1 == 1).collect();
            prop_assume!(!members.is_empty());
            let q = coal_apply(&p, &members, t % p.dim()).unwrap();
            let leasts: Vec<usize> = q.blocks().iter().map(|b| b[0]).collect();
            prop_assert!(leasts.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(q.block_count(), p.block_count() + 1 - members.len());
            prop_assert_eq!(q.size(), p.size());
        }

        #[test]
        fn print_parse_roundtrip(p in arb_partition()) {
            prop_assert_eq!(TypedPartition::parse(&p.to_string(), p.dim()).unwrap(), p);
        }
    }
}
