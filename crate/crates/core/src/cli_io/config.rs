//! TOML scenario files.
//!
//! Types in the file are 1-based. Unknown keys are rejected. After
//! [`ScenarioConfig::resolve`] every field the scenario uses is present, and
//! [`ScenarioConfig::to_canonical_toml`] is the form that gets hashed.

use serde::{Deserialize, Serialize};

use crate::coalescent::{CoalescenceSpec, MergerAtom, TypedPartition};
use crate::combinatorics::{Configuration, CountVector};
use crate::definetti::FrequencyState;
use crate::error::{Error, Result};
use crate::measures::{
    Atom, CoordinationMeasure, ExchangeAtom, HarmonicComponent, MapAtom, MeasureFamily,
    SplitBlock, StochasticMatrix, DEFAULT_EPSILON,
};
use crate::rates::{DiceParams, RateMatrixA};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PATHS: u64 = 100_000;
pub const DEFAULT_CONVERGENCE_PATHS: u64 = 2_000;
pub const DEFAULT_HORIZON: f64 = 1.0;
pub const DEFAULT_N_MAX: u32 = 4;
pub const DEFAULT_N_LIST: [usize; 3] = [10, 100, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    VerifyConsistency,
    VerifyExchangeability,
    SimulateDice,
    FrequencySde,
    DualityCheck,
    ConvergenceCheck,
    Coalescent,
    CoalescentConsistency,
}

impl ScenarioKind {
    pub fn tag(self) -> &'static str {
        match self {
            ScenarioKind::VerifyConsistency => "verify-consistency",
            ScenarioKind::VerifyExchangeability => "verify-exchangeability",
            ScenarioKind::SimulateDice => "simulate-dice",
            ScenarioKind::FrequencySde => "frequency-sde",
            ScenarioKind::DualityCheck => "duality-check",
            ScenarioKind::ConvergenceCheck => "convergence-check",
            ScenarioKind::Coalescent => "coalescent",
            ScenarioKind::CoalescentConsistency => "coalescent-consistency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub weight: f64,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub map: Vec<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeConfig {
    pub from: usize,
    pub to: usize,
    pub s: f64,
    pub v: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub members: Vec<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicConfig {
    pub source: usize,
    pub targets: Vec<usize>,
    pub rate: f64,
}

/// Coordination measure, tagged by `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    Zero,
    Atomic { atoms: Vec<AtomConfig> },
    TotallyDependent { maps: Vec<MapConfig> },
    StochasticExchange { atoms: Vec<ExchangeConfig> },
    MultinomialSplitting { eta: Vec<f64>, blocks: Vec<BlockConfig> },
    DirichletSplitting { eta: Vec<f64>, blocks: Vec<BlockConfig> },
    HarmonicSplitting { eta: Vec<f64>, components: Vec<HarmonicConfig> },
    InstantExchange { eta: Vec<f64>, kappa: f64, blocks: Vec<BlockConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergerAtomConfig {
    /// Type of the merged block.
    pub target: usize,
    pub weight: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoalescenceConfig {
    /// `d×d` pair merger rates; only the diagonal may be nonzero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub atoms: Vec<MergerAtomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub scenario: ScenarioKind,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    /// Time horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coalescence: Option<CoalescenceConfig>,
}

fn cfg_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.to_string(),
        message: e.to_string(),
    }
}

fn required<T: Clone>(value: &Option<T>, key: &str, scenario: ScenarioKind) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| cfg_err(key, format!("required by scenario {}", scenario.tag())))
}

fn zero_based(values: &[usize], d: usize, path: &str) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if (1..=d).contains(&v) {
                Ok(v - 1)
            } else {
                Err(cfg_err(path, format!("type {v} outside 1..={d}")))
            }
        })
        .collect()
}

fn blocks(list: &[BlockConfig], d: usize, path: &str) -> Result<Vec<SplitBlock>> {
    list.iter()
        .enumerate()
        .map(|(k, b)| {
            Ok(SplitBlock {
                members: zero_based(&b.members, d, &format!("{path}[{k}].members"))?,
                rate: b.rate,
            })
        })
        .collect()
}

impl MeasureConfig {
    pub fn to_measure(&self, d: usize) -> Result<CoordinationMeasure> {
        let family = match self {
            MeasureConfig::Zero => MeasureFamily::Zero,
            MeasureConfig::Atomic { atoms } => MeasureFamily::Atomic(
                atoms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        Ok(Atom {
                            weight: a.weight,
                            matrix: StochasticMatrix::from_rows(&a.matrix)
                                .map_err(|e| cfg_err(&format!("measure.atoms[{k}].matrix"), e))?,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            MeasureConfig::TotallyDependent { maps } => MeasureFamily::TotallyDependent(
                maps.iter()
                    .enumerate()
                    .map(|(k, m)| {
                        Ok(MapAtom {
                            map: zero_based(&m.map, d, &format!("measure.maps[{k}].map"))?,
                            rate: m.rate,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            MeasureConfig::StochasticExchange { atoms } => MeasureFamily::StochasticExchange(
                atoms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let path = format!("measure.atoms[{k}]");
                        let ends = zero_based(&[a.from, a.to], d, &path)?;
                        Ok(ExchangeAtom {
                            from: ends[0],
                            to: ends[1],
                            s: a.s,
                            v: a.v,
                            weight: a.weight,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            MeasureConfig::MultinomialSplitting { eta, blocks: b } => {
                MeasureFamily::MultinomialSplitting {
                    eta: eta.clone(),
                    blocks: blocks(b, d, "measure.blocks")?,
                }
            }
            MeasureConfig::DirichletSplitting { eta, blocks: b } => {
                MeasureFamily::DirichletSplitting {
                    eta: eta.clone(),
                    blocks: blocks(b, d, "measure.blocks")?,
                }
            }
            MeasureConfig::HarmonicSplitting { eta, components } => {
                MeasureFamily::HarmonicSplitting {
                    eta: eta.clone(),
                    components: components
                        .iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let path = format!("measure.components[{k}]");
                            Ok(HarmonicComponent {
                                source: zero_based(&[c.source], d, &path)?[0],
                                targets: zero_based(&c.targets, d, &path)?,
                                rate: c.rate,
                            })
                        })
                        .collect::<Result<_>>()?,
                }
            }
            MeasureConfig::InstantExchange {
                eta,
                kappa,
                blocks: b,
            } => MeasureFamily::InstantExchange {
                eta: eta.clone(),
                kappa: *kappa,
                blocks: blocks(b, d, "measure.blocks")?,
            },
        };
        CoordinationMeasure::new(d, family).map_err(|e| cfg_err("measure", e))
    }
}

impl CoalescenceConfig {
    pub fn to_spec(&self, d: usize) -> Result<CoalescenceSpec> {
        let mut q = vec![Vec::new(); d];
        for (k, a) in self.atoms.iter().enumerate() {
            let path = format!("coalescence.atoms[{k}]");
            let target = zero_based(&[a.target], d, &path)?[0];
            q[target].push(MergerAtom {
                weight: a.weight,
                u: a.u.clone(),
            });
        }
        let rho = self.rho.clone().unwrap_or_else(|| vec![vec![0.0; d]; d]);
        if rho.len() != d {
            return Err(cfg_err("coalescence.rho", format!("expected {d} rows")));
        }
        CoalescenceSpec::from_rho_matrix(&rho, q).map_err(|e| cfg_err("coalescence.rho", e))
    }
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: DiceParams,
    pub seed: u64,
    pub epsilon: f64,
    pub paths: u64,
    pub horizon: f64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            cfg_err(&path, e.message())
        })?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(cfg_err(
                "schema",
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", cfg.schema),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err("<document>", e))
    }

    /// Fills every default the scenario uses. Idempotent.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        use ScenarioKind::*;
        let mut c = self.clone();
        let d = c.d;
        c.a.get_or_insert_with(|| vec![vec![0.0; d]; d]);
        c.measure.get_or_insert(MeasureConfig::Zero);
        match c.scenario {
            VerifyConsistency => {
                c.n_max.get_or_insert(DEFAULT_N_MAX);
            }
            VerifyExchangeability => {
                required(&c.n, "n", c.scenario)?;
            }
            SimulateDice | Coalescent | CoalescentConsistency => {
                c.t.get_or_insert(DEFAULT_HORIZON);
                c.epsilon.get_or_insert(DEFAULT_EPSILON);
                if c.scenario != SimulateDice {
                    c.coalescence.get_or_insert(CoalescenceConfig {
                        rho: None,
                        atoms: Vec::new(),
                    });
                    if let Some(co) = &mut c.coalescence {
                        co.rho.get_or_insert_with(|| vec![vec![0.0; d]; d]);
                    }
                }
                if c.scenario == CoalescentConsistency || c.m.is_some() {
                    c.paths.get_or_insert(DEFAULT_PATHS);
                }
            }
            FrequencySde => {
                required(&c.r0, "r0", c.scenario)?;
                c.t.get_or_insert(DEFAULT_HORIZON);
                c.epsilon.get_or_insert(DEFAULT_EPSILON);
                c.paths.get_or_insert(DEFAULT_PATHS);
            }
            DualityCheck => {
                c.t.get_or_insert(DEFAULT_HORIZON);
                c.epsilon.get_or_insert(DEFAULT_EPSILON);
                c.paths.get_or_insert(DEFAULT_PATHS);
            }
            ConvergenceCheck => {
                c.t.get_or_insert(DEFAULT_HORIZON);
                c.epsilon.get_or_insert(DEFAULT_EPSILON);
                c.paths.get_or_insert(DEFAULT_CONVERGENCE_PATHS);
                c.n_list.get_or_insert_with(|| DEFAULT_N_LIST.to_vec());
                c.r0.get_or_insert_with(|| vec![1.0 / d as f64; d]);
            }
        }
        Ok(c)
    }

    /// Structural checks that need no defaults.
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(cfg_err("d", "must be at least 1"));
        }
        if let Some(a) = &self.a {
            if a.len() != d || a.iter().any(|r| r.len() != d) {
                return Err(cfg_err("a", format!("must be {d}x{d}")));
            }
            RateMatrixA::from_rows(a).map_err(|e| cfg_err("a", e))?;
        }
        if let Some(m) = &self.measure {
            m.to_measure(d)?;
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(cfg_err("epsilon", format!("must lie in (0,1), got {e}")));
            }
        }
        if let Some(t) = self.t {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(cfg_err("t", format!("must be finite and nonnegative, got {t}")));
            }
        }
        if self.paths == Some(0) {
            return Err(cfg_err("paths", "must be positive"));
        }
        if let Some(r0) = &self.r0 {
            if r0.len() != d {
                return Err(cfg_err("r0", format!("needs {d} entries")));
            }
            FrequencyState::new(r0.clone()).map_err(|e| cfg_err("r0", e))?;
        }
        if let Some(b0) = &self.b0 {
            if b0.len() != d {
                return Err(cfg_err("b0", format!("needs {d} entries")));
            }
        }
        if let Some(x0) = &self.x0 {
            Configuration::from_one_based(x0, d).map_err(|e| cfg_err("x0", e))?;
            if let Some(n) = self.n {
                if n != x0.len() {
                    return Err(cfg_err("n", format!("x0 has {} entries", x0.len())));
                }
            }
        }
        if let Some(p) = &self.partition {
            TypedPartition::parse(p, d).map_err(|e| cfg_err("partition", e))?;
        }
        if let Some(c) = &self.coalescence {
            c.to_spec(d)?;
        }
        if let (Some(m), Some(n)) = (self.m, self.size()) {
            if m == 0 || m >= n {
                return Err(cfg_err("m", format!("must lie in 1..{n}")));
            }
        }
        Ok(())
    }

    /// System size implied by `x0`, `partition` or `n`.
    pub fn size(&self) -> Option<usize> {
        if let Some(x0) = &self.x0 {
            return Some(x0.len());
        }
        if let Some(p) = &self.partition {
            return TypedPartition::parse(p, self.d).ok().map(|p| p.size());
        }
        self.n
    }

    pub fn params(&self) -> Result<DiceParams> {
        let d = self.d;
        let a = match &self.a {
            Some(rows) => RateMatrixA::from_rows(rows).map_err(|e| cfg_err("a", e))?,
            None => RateMatrixA::zero(d),
        };
        let nu = match &self.measure {
            Some(m) => m.to_measure(d)?,
            None => CoordinationMeasure::zero(d),
        };
        DiceParams::new(a, nu).map_err(|e| cfg_err("measure", e))
    }

    pub fn initial_configuration(&self) -> Result<Configuration> {
        if let Some(x0) = &self.x0 {
            return Configuration::from_one_based(x0, self.d).map_err(|e| cfg_err("x0", e));
        }
        let n = required(&self.n, "x0", self.scenario)?;
        Configuration::new(vec![0; n], self.d)
    }

    pub fn initial_partition(&self) -> Result<TypedPartition> {
        if let Some(p) = &self.partition {
            return TypedPartition::parse(p, self.d).map_err(|e| cfg_err("partition", e));
        }
        Ok(TypedPartition::singletons(&self.initial_configuration()?))
    }

    pub fn initial_frequencies(&self) -> Result<FrequencyState> {
        let r0 = required(&self.r0, "r0", self.scenario)?;
        FrequencyState::new(r0).map_err(|e| cfg_err("r0", e))
    }

    pub fn initial_counts(&self) -> Result<CountVector> {
        Ok(CountVector::new(required(&self.b0, "b0", self.scenario)?))
    }

    /// Validated run description; `seed` must already be resolved.
    pub fn into_scenario(self) -> Result<Scenario> {
        let config = self.resolve()?;
        config.validate()?;
        let seed = config
            .seed
            .ok_or_else(|| cfg_err("seed", "no seed after resolution"))?;
        Ok(Scenario {
            params: config.params()?,
            seed,
            epsilon: config.epsilon.unwrap_or(DEFAULT_EPSILON),
            paths: config.paths.unwrap_or(DEFAULT_PATHS),
            horizon: config.t.unwrap_or(DEFAULT_HORIZON),
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DUALITY: &str = r#"
schema = 1
scenario = "duality-check"
d = 2
seed = 7
a = [[0, 1], [1, 0]]
r0 = [0.8, 0.2]
b0 = [1, 1]

[measure]
family = "atomic"
atoms = [{ weight = 1.0, matrix = [[0, 1], [1, 0]] }]
"#;

    #[test]
    fn minimal_duality_config() {
        let cfg = ScenarioConfig::parse(DUALITY).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::DualityCheck);
        let s = cfg.into_scenario().unwrap();
        assert_eq!(s.paths, DEFAULT_PATHS);
        assert_eq!(s.epsilon, DEFAULT_EPSILON);
        assert!(s.params.nu().is_doubly_stochastic_supported());
    }

    #[test]
    fn off_simplex_start_rejected() {
        let text = DUALITY.replace("r0 = [0.8, 0.2]", "r0 = [0.5, 0.6]");
        match ScenarioConfig::parse(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "r0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = DUALITY.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(matches!(ScenarioConfig::parse(&text), Err(Error::Config { .. })));
        let text = DUALITY.replace("weight = 1.0", "weight = 1.0, wieght = 2.0");
        assert!(matches!(ScenarioConfig::parse(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn off_diagonal_rho_rejected() {
        let text = r#"
schema = 1
scenario = "coalescent"
d = 2
x0 = [1, 2]
[coalescence]
rho = [[1.0, 0.5], [0.0, 1.0]]
"#;
        match ScenarioConfig::parse(text) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "coalescence.rho");
                assert!(message.contains("switching mechanism"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_family_parses() {
        let families = [
            r#"family = "zero""#,
            r#"family = "totally-dependent"
maps = [{ map = [2, 1, 3], rate = 0.5 }]"#,
            r#"family = "stochastic-exchange"
atoms = [{ from = 1, to = 3, s = 0.5, v = 0.25, weight = 1.0 }]"#,
            r#"family = "multinomial-splitting"
eta = [1.0, 2.0, 3.0]
blocks = [{ members = [1, 2], rate = 1.0 }]"#,
            r#"family = "dirichlet-splitting"
eta = [1.0, 2.0, 3.0]
blocks = [{ members = [1, 2, 3], rate = 1.0 }]"#,
            r#"family = "harmonic-splitting"
eta = [1.5, 2.0, 3.0]
components = [{ source = 1, targets = [2, 3], rate = 1.0 }]"#,
            r#"family = "instant-exchange"
eta = [1.0, 2.0, 3.0]
kappa = 0.5
blocks = [{ members = [1, 3], rate = 1.0 }]"#,
        ];
        for f in families {
            let text = format!(
                "schema = 1\nscenario = \"verify-consistency\"\nd = 3\n[measure]\n{f}\n"
            );
            let cfg = ScenarioConfig::parse(&text).unwrap();
            cfg.params().unwrap();
        }
    }

    #[test]
    fn non_integrable_measure_names_component() {
        let text = r#"
schema = 1
scenario = "verify-consistency"
d = 2
[measure]
family = "dirichlet-splitting"
eta = [0.0, 1.0]
blocks = [{ members = [1, 2], rate = 1.0 }]
"#;
        match ScenarioConfig::parse(text) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "measure");
                assert!(message.contains("block {1,2}"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            prop_oneof![
                Just(ScenarioKind::VerifyConsistency),
                Just(ScenarioKind::DualityCheck),
                Just(ScenarioKind::ConvergenceCheck),
                Just(ScenarioKind::SimulateDice),
            ],
            proptest::option::of(any::<u64>()),
            proptest::option::of(1e-6f64..0.5),
            proptest::option::of(0.0f64..5.0),
            proptest::option::of(0.0f64..3.0),
            0.01f64..0.99,
        )
            .prop_map(|(scenario, seed, epsilon, t, a, r)| ScenarioConfig {
                schema: 1,
                scenario,
                d: 2,
                seed,
                epsilon,
                paths: None,
                t,
                n: Some(3),
                m: None,
                n_max: None,
                n_list: None,
                r0: Some(vec![r, 1.0 - r]),
                b0: Some(vec![1, 0]),
                x0: None,
                partition: None,
                output: None,
                a: a.map(|v| vec![vec![0.0, v], vec![v, 0.0]]),
                measure: None,
            coalescence: None,
            })
    }

    proptest! {
        #[test]
        fn canonical_form_round_trips(cfg in arb_config()) {
            let resolved = cfg.resolve().unwrap();
            let text = resolved.to_canonical_toml().unwrap();
            let back = ScenarioConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &resolved);
            prop_assert_eq!(back.resolve().unwrap(), resolved);
        }
    }
}
