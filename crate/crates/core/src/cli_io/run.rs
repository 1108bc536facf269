//! Scenario dispatch, artifact writing and the command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{Scenario, ScenarioConfig, ScenarioKind};
use super::output::{format_f64, to_json_line};
use crate::coalescent::{
    coalescent_consistency_test, simulate_coalescent, CoalescentParams,
};
use crate::combinatorics::{all_permutations, enumerate_compositions};
use crate::definetti::{
    convergence_check, dual_generator_apply, generator_apply, mean_frequency,
    moment_duality_check, simulate_frequency_sde, frequency_path,
};
use crate::error::{Error, Result};
use crate::rates::{
    build_generator, check_consistency_equation, check_permutation_commutation, lumped_generator,
};
use crate::simulator::{consistency_statistical_test, simulate_graphical, SimulationSpec};
use crate::stats::{MeanEstimate, Verdict};
use crate::{RESIDUAL_TOL, ROW_SUM_TOL};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DICEKIT_OUT";
pub const DEFAULT_OUT_DIR: &str = "dicekit-out";
const EXCHANGE_TOL: f64 = 1e-12;
const SDE_GRID: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub scenario: &'static str,
    pub schema: u32,
    /// sha256 of the canonical resolved config.
    pub config_hash: String,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
    pub metrics: Value,
    pub verdict: Verdict,
}

impl ResultRecord {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.verdict)
    }
}

pub fn exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Warn => 2,
    }
}

/// Exit status for runs that ended in an error.
pub const ERROR_EXIT: i32 = 3;

fn now() -> String {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn config_hash(config: &ScenarioConfig) -> Result<String> {
    let canonical = config.to_canonical_toml()?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

fn context(kind: ScenarioKind, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Precondition(format!("scenario {}: {other}", kind.tag())),
    }
}

/// Runs a resolved scenario, writing artifacts into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path, timestamps: bool) -> Result<ResultRecord> {
    let kind = scenario.config.scenario;
    fs::create_dir_all(out_dir)?;
    let started = timestamps.then(now);
    log::info!("running {} with seed {}", kind.tag(), scenario.seed);
    let (metrics, verdict) = dispatch(scenario, out_dir).map_err(|e| context(kind, e))?;
    let record = ResultRecord {
        scenario: kind.tag(),
        schema: scenario.config.schema,
        config_hash: config_hash(&scenario.config)?,
        config: to_value(&scenario.config)?,
        started,
        finished: timestamps.then(now),
        metrics,
        verdict,
    };
    let mut w = create(out_dir, "result.jsonl")?;
    writeln!(w, "{}", to_json_line(&record)?)?;
    w.flush()?;
    log::info!("{}: {}", kind.tag(), verdict);
    Ok(record)
}

fn dispatch(s: &Scenario, out: &Path) -> Result<(Value, Verdict)> {
    let c = &s.config;
    let p = &s.params;
    match c.scenario {
        ScenarioKind::VerifyConsistency => {
            let n_max = c.n_max.expect("resolved");
            let report = check_consistency_equation(p, n_max)?;
            let mut verdict = pass_if(report.max_residual <= RESIDUAL_TOL);
            let mut metrics = json!({ "consistency": to_value(&report)? });
            if let Some(n) = c.n {
                let m = c.m.unwrap_or(n.saturating_sub(1)).max(1);
                let q = build_generator(n, p)?;
                q.write_csv(create(out, "generator.csv")?)?;
                if m < n {
                    let lumped = lumped_generator(&q, m)?;
                    let direct = build_generator(m, p)?;
                    let gap = (lumped.matrix() - direct.matrix()).amax();
                    verdict = verdict.and(pass_if(gap <= RESIDUAL_TOL));
                    metrics["lumping"] = json!({ "n": n, "m": m, "max_gap": gap });
                }
            }
            Ok((metrics, verdict))
        }
        ScenarioKind::VerifyExchangeability => {
            let n = c.n.expect("resolved");
            if n > 6 {
                return Err(Error::Resource(format!(
                    "permutation sweep over n = {n} labels is too large (max 6)"
                )));
            }
            let q = build_generator(n, p)?;
            q.write_csv(create(out, "generator.csv")?)?;
            let mut worst: f64 = 0.0;
            let perms = all_permutations(n);
            for sigma in &perms {
                worst = worst.max(check_permutation_commutation(&q, sigma, None)?);
            }
            Ok((
                json!({ "n": n, "permutations": perms.len(), "max_residual": worst }),
                pass_if(worst <= EXCHANGE_TOL),
            ))
        }
        ScenarioKind::SimulateDice => {
            let x0 = c.initial_configuration()?;
            let spec = SimulationSpec::new(x0.len(), p.clone(), s.horizon, s.epsilon, s.seed)?;
            let traj = simulate_graphical(&spec, &x0)?;
            traj.write_csv(create(out, "trajectory.csv")?)?;
            traj.write_events(create(out, "events.jsonl")?)?;
            let truncation = p.nu().truncate(s.epsilon)?;
            let mut metrics = json!({
                "n": x0.len(),
                "events": traj.events.len(),
                "effective_events": traj.effective_events(),
                "final_state": traj.final_state().to_string(),
                "truncated_mass": truncation.mass(),
                "neglected_integrability": truncation.neglected_integrability(),
            });
            let mut verdict = Verdict::Pass;
            if let Some(m) = c.m {
                let report = consistency_statistical_test(
                    p, &x0, m, s.horizon, s.paths, s.seed, s.epsilon,
                )?;
                verdict = report.verdict;
                metrics["restriction"] = to_value(&report)?;
            }
            Ok((metrics, verdict))
        }
        ScenarioKind::FrequencySde => {
            let r0 = c.initial_frequencies()?;
            let path = simulate_frequency_sde(&r0, p, s.horizon, s.epsilon, s.seed)?;
            let mut w = csv::Writer::from_writer(create(out, "trajectory.csv")?);
            let mut header = vec!["time".to_string()];
            header.extend((1..=p.dim()).map(|i| format!("r{i}")));
            w.write_record(&header).map_err(crate::rates::csv_err)?;
            for (t, r) in path.on_grid(SDE_GRID)? {
                let mut row = vec![format_f64(t)];
                row.extend(r.values().iter().map(|&x| format_f64(x)));
                w.write_record(&row).map_err(crate::rates::csv_err)?;
            }
            w.flush()?;
            // first moment against its linear equation
            let truncation = p.nu().truncate(s.epsilon)?;
            let finals: Vec<Vec<f64>> = {
                use rayon::prelude::*;
                (0..s.paths)
                    .into_par_iter()
                    .map(|k| {
                        Ok(frequency_path(&r0, p.a(), &truncation, s.horizon, s.seed, 1, k)?
                            .final_state()?
                            .values()
                            .to_vec())
                    })
                    .collect::<Result<_>>()?
            };
            let exact = mean_frequency(&r0, p, s.horizon)?;
            let mut ok = true;
            let mut means = Vec::new();
            for (i, &e) in exact.iter().enumerate() {
                let col: Vec<f64> = finals.iter().map(|v| v[i]).collect();
                let est = MeanEstimate::from_samples(&col);
                ok &= (est.mean - e).abs() <= (3.0 * est.se).max(ROW_SUM_TOL);
                means.push(est);
            }
            Ok((
                json!({
                    "jumps": path.jumps(),
                    "final_state": to_value(&path.final_state()?)?,
                    "mean_estimate": to_value(&means)?,
                    "mean_exact": exact,
                    "truncated_mass": truncation.mass(),
                }),
                pass_if(ok),
            ))
        }
        ScenarioKind::DualityCheck => {
            let r0 = c.initial_frequencies()?;
            let b0 = c.initial_counts()?;
            let report = moment_duality_check(&r0, &b0, s.horizon, p, s.paths, s.seed, s.epsilon)?;
            let mut worst: f64 = 0.0;
            for total in 0..=b0.total().max(3) {
                for b in enumerate_compositions(total, p.dim())? {
                    let gap = generator_apply(&b, &r0, p)? - dual_generator_apply(&b, &r0, p)?;
                    worst = worst.max(gap.abs());
                }
            }
            Ok((
                json!({
                    "monte_carlo": to_value(&report)?,
                    "generator_identity_residual": worst,
                }),
                report.verdict.and(pass_if(worst <= RESIDUAL_TOL)),
            ))
        }
        ScenarioKind::ConvergenceCheck => {
            let r0 = c.initial_frequencies()?;
            let n_list = c.n_list.clone().expect("resolved");
            let report = convergence_check(p, &r0, &n_list, s.horizon, s.paths, s.seed, s.epsilon)?;
            let verdict = report.verdict;
            Ok((to_value(&report)?, verdict))
        }
        ScenarioKind::Coalescent => {
            let pi0 = c.initial_partition()?;
            let params = CoalescentParams::new(
                c.coalescence.as_ref().expect("resolved").to_spec(c.d)?,
                p.clone(),
            )?;
            let traj = simulate_coalescent(&pi0, &params, s.horizon, s.seed, s.epsilon)?;
            traj.write_csv(create(out, "trajectory.csv")?)?;
            Ok((
                json!({
                    "events": traj.events.len(),
                    "final_partition": traj.final_state().to_string(),
                    "time_to_mrca": traj.time_to_mrca(),
                }),
                Verdict::Pass,
            ))
        }
        ScenarioKind::CoalescentConsistency => {
            let pi0 = c.initial_partition()?;
            let m = c.m.ok_or_else(|| Error::Config {
                path: "m".into(),
                message: "required by scenario coalescent-consistency".into(),
            })?;
            let spec = c.coalescence.as_ref().expect("resolved").to_spec(c.d)?;
            let report =
                coalescent_consistency_test(&spec, p, &pi0, m, s.horizon, s.paths, s.seed, s.epsilon)?;
            let verdict = report.verdict;
            Ok((to_value(&report)?, verdict))
        }
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// `dicekit <scenario> --config <path> [flags]`
#[derive(Debug, Parser)]
#[command(name = "dicekit", version, about = "Run a dice-process scenario from a TOML config")]
pub struct Cli {
    pub scenario: ScenarioKind,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub paths: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Record wall-clock start and end times (breaks byte-identical reruns).
    #[arg(long)]
    pub timestamps: bool,
}

impl Cli {
    /// Loads the config and applies flag overrides and the seed policy.
    pub fn resolve(&self) -> Result<(Scenario, PathBuf)> {
        let text = fs::read_to_string(&self.config).map_err(|e| Error::Config {
            path: self.config.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = ScenarioConfig::parse(&text)?;
        if cfg.scenario != self.scenario {
            return Err(Error::Config {
                path: "scenario".into(),
                message: format!(
                    "config describes {}, command asked for {}",
                    cfg.scenario.tag(),
                    self.scenario.tag()
                ),
            });
        }
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(paths) = self.paths {
            cfg.paths = Some(paths);
        }
        if let Some(eps) = self.epsilon {
            cfg.epsilon = Some(eps);
        }
        if cfg.seed.is_none() {
            if std::env::var_os("CI").is_some() {
                return Err(Error::Config {
                    path: "seed".into(),
                    message: "a seed is mandatory when CI is set".into(),
                });
            }
            let seed: u64 = rand::random();
            log::warn!("no seed given, drew {seed} from entropy");
            cfg.seed = Some(seed);
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.clone().map(PathBuf::from))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok((cfg.into_scenario()?, out))
    }
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ERROR_EXIT } else { 0 };
        }
    };
    let outcome = cli
        .resolve()
        .and_then(|(scenario, out)| run_scenario(&scenario, &out, cli.timestamps));
    match outcome {
        Ok(record) => {
            println!("{}: {}", record.scenario, record.verdict);
            record.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            ERROR_EXIT
        }
    }
}
