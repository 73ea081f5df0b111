//! Config-driven experiment runs, sweeps and their on-disk results.
//!
//! A run writes `detail.csv` (per-epoch or per-round rows), `summary.csv`
//! (one row per seed) and `manifest.json`. Everything except the manifest's
//! wall-clock field is a pure function of the config.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environments::{decoy_class, make_combination_lock, make_hadamard_instance, make_random_decodable, RandomSpec};
use crate::error::{Error, Result};
use crate::isrl::{self, ClassMode};
use crate::megastate::{build_megastate_mdp, ucbvi_learn, UcbviConfig};
use crate::mgolf::{run_mgolf, MGolfConfig};
use crate::model::TabularPomdp;
use crate::olive::{run_olive, OliveConfig};
use crate::oracle::{enumerate_paths, path_value, FunctionClassPair, Oracle};
use crate::simulate::EpisodeSampler;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Lock { memory: usize, actions: usize },
    Hadamard {
        /// `O = 2^exponent`.
        exponent: u32,
        #[serde(default)]
        all_ones_decoy: bool,
    },
    Random {
        states: usize,
        observations: usize,
        actions: usize,
        horizon: usize,
        memory: usize,
        seed: u64,
        #[serde(default = "default_retries")]
        max_retries: usize,
    },
    File { path: PathBuf },
}

fn default_retries() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassSpec {
    /// The built-in class of a Hadamard environment.
    Hadamard,
    /// `Q*` plus `count` corrupted copies.
    Decoys { count: usize, seed: u64 },
    /// `{Q*}` alone.
    Qstar,
    File { path: PathBuf },
}

fn default_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Mgolf(MGolfConfig),
    Ucbvi(UcbviConfig),
    Isrl {
        #[serde(default = "default_mode")]
        mode: ClassMode,
        /// Uniform trajectories; `None` uses the sample-size formula.
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default = "default_fraction")]
        epsilon: f64,
        #[serde(default = "default_fraction")]
        delta: f64,
    },
    Olive(OliveConfig),
}

fn default_mode() -> ClassMode {
    ClassMode::FixedChain
}

impl AlgorithmSpec {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Mgolf(_) => "mgolf",
            Self::Ucbvi(_) => "ucbvi",
            Self::Isrl { .. } => "isrl",
            Self::Olive(_) => "olive",
        }
    }
}

fn default_target() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub env: EnvSpec,
    #[serde(default)]
    pub class: Option<ClassSpec>,
    pub algorithm: AlgorithmSpec,
    pub seeds: Vec<u64>,
    /// Gap used for the episodes-to-target column.
    #[serde(default = "default_target")]
    pub target_gap: f64,
    /// Output directory, overridable from the command line.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seed list is empty".into()));
        }
        let needs_class = matches!(self.algorithm, AlgorithmSpec::Mgolf(_) | AlgorithmSpec::Olive(_));
        if needs_class && self.class.is_none() {
            return Err(Error::InvalidArgument(format!("{} needs a function class", self.algorithm.id())));
        }
        if matches!(self.class, Some(ClassSpec::Hadamard)) && !matches!(self.env, EnvSpec::Hadamard { .. }) {
            return Err(Error::InvalidArgument("the hadamard class needs the hadamard environment".into()));
        }
        if self.target_gap.is_nan() || self.target_gap < 0.0 {
            return Err(Error::InvalidArgument("target_gap must be nonnegative".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form (output path excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        let text = serde_json::to_string(&canonical).expect("serializable");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed handed to the learner: the first 8 bytes of `sha256(config hash, seed)`.
pub fn derive_seed(config_hash: &str, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(config_hash.as_bytes());
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Environment plus, for Hadamard, its built-in class.
pub fn build_env(spec: &EnvSpec) -> Result<(TabularPomdp, Option<FunctionClassPair>)> {
    match spec {
        EnvSpec::Lock { memory, actions } => Ok((make_combination_lock(*memory, *actions)?, None)),
        EnvSpec::Hadamard { exponent, all_ones_decoy } => {
            let inst = make_hadamard_instance(*exponent, *all_ones_decoy)?;
            Ok((inst.pomdp, Some(inst.classes)))
        }
        EnvSpec::Random { states, observations, actions, horizon, memory, seed, max_retries } => {
            let spec = RandomSpec {
                states: *states,
                observations: *observations,
                actions: *actions,
                horizon: *horizon,
                memory: *memory,
                seed: *seed,
                max_retries: *max_retries,
            };
            Ok((make_random_decodable(&spec)?.pomdp, None))
        }
        EnvSpec::File { path } => Ok((crate::io::read_pomdp(path)?, None)),
    }
}

fn build_class(spec: &ClassSpec, oracle: &Oracle<'_>, builtin: Option<FunctionClassPair>) -> Result<FunctionClassPair> {
    match spec {
        ClassSpec::Hadamard => builtin.ok_or_else(|| Error::InvalidArgument("no built-in class".into())),
        ClassSpec::Decoys { count, seed } => decoy_class(oracle, *count, *seed),
        ClassSpec::Qstar => FunctionClassPair::with_backups(oracle, vec![oracle.qstar()?]),
        ClassSpec::File { path } => crate::io::read_class(path),
    }
}

/// One seed's outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    pub episodes_used: usize,
    pub final_value: f64,
    pub final_gap: f64,
    pub episodes_to_target: Option<usize>,
}

pub const SUMMARY_HEADER: [&str; 6] =
    ["algorithm", "seed", "episodes_used", "final_value", "final_gap", "episodes_to_target"];

impl SummaryRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.algorithm.clone(),
            self.seed.to_string(),
            self.episodes_used.to_string(),
            fmt_f64(self.final_value),
            fmt_f64(self.final_gap),
            opt(self.episodes_to_target),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub derived_seed: u64,
    pub detail_header: Vec<&'static str>,
    /// Rows without the leading seed column.
    pub detail: Vec<Vec<String>>,
    pub summary: SummaryRow,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
    pub wall_clock_seconds: f64,
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn opt_f64(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

/// Runs every seed of `config`; the first failing seed aborts the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let hash = config.hash();
    let (pomdp, builtin) = build_env(&config.env)?;
    let oracle = Oracle::new(&pomdp)?;
    let classes = config.class.as_ref().map(|c| build_class(c, &oracle, builtin)).transpose()?;
    let runs = config
        .seeds
        .iter()
        .map(|&seed| run_seed(config, &hash, &pomdp, &oracle, classes.as_ref(), seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        config_hash: hash,
        runs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_seed(
    config: &ExperimentConfig,
    hash: &str,
    pomdp: &TabularPomdp,
    oracle: &Oracle<'_>,
    classes: Option<&FunctionClassPair>,
    seed: u64,
) -> Result<RunRecord> {
    let derived_seed = derive_seed(hash, seed);
    let target = config.target_gap;
    let algorithm = config.algorithm.id().to_string();
    let optimal = oracle.optimal_value()?;
    let mut sampler = EpisodeSampler::new(pomdp, derived_seed);
    let (detail_header, detail, summary) = match &config.algorithm {
        AlgorithmSpec::Mgolf(cfg) => {
            let classes = classes.expect("validated");
            let mut cfg = cfg.clone();
            if cfg.num_states == 0 {
                cfg.num_states = pomdp.num_states();
            }
            let out = run_mgolf(&mut sampler, classes, &cfg, Some(oracle))?;
            let rows = out
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.epoch.to_string(),
                        r.selected.to_string(),
                        fmt_f64(r.optimistic_value),
                        r.confset_size.to_string(),
                        r.episodes_used.to_string(),
                        opt_f64(r.exact_gap),
                        opt(r.qstar_in_set),
                        fmt_f64(r.beta),
                    ]
                })
                .collect();
            let value = out.mixture_value.unwrap_or(0.0);
            let summary = SummaryRow {
                algorithm,
                seed,
                episodes_used: out.total_episodes(),
                final_value: value,
                final_gap: optimal - value,
                episodes_to_target: out.episodes_to_gap(target),
            };
            let header = vec![
                "epoch",
                "selected",
                "optimistic_value",
                "confset_size",
                "episodes_used",
                "exact_gap",
                "qstar_in_set",
                "beta",
            ];
            (header, rows, summary)
        }
        AlgorithmSpec::Ucbvi(cfg) => {
            let mdp = build_megastate_mdp(pomdp, pomdp.memory())?;
            let out = ucbvi_learn(&mdp, cfg, derived_seed)?;
            let rows = out
                .curve
                .iter()
                .map(|r| {
                    vec![
                        r.episode.to_string(),
                        fmt_f64(r.total_reward),
                        fmt_f64(r.gap),
                        fmt_f64(r.cumulative_regret),
                    ]
                })
                .collect();
            let summary = SummaryRow {
                algorithm,
                seed,
                episodes_used: out.curve.len(),
                final_value: optimal - out.final_gap,
                final_gap: out.final_gap,
                episodes_to_target: out.episodes_to_gap(target),
            };
            (vec!["episode", "total_reward", "gap", "cumulative_regret"], rows, summary)
        }
        AlgorithmSpec::Isrl { mode, samples, epsilon, delta } => {
            let class = isrl::enumerate_policy_class(pomdp, mode, oracle.cap())?;
            let size = class.len() as f64;
            let n = samples.unwrap_or_else(|| {
                isrl::required_samples(pomdp.horizon(), pomdp.num_actions(), size, *delta, *epsilon)
            });
            let out = isrl::is_rl(&mut sampler, &class, n)?;
            let paths = enumerate_paths(pomdp, &class[out.best], pomdp.horizon(), oracle.cap())?;
            let value = path_value(pomdp, &paths);
            let rows = out
                .estimates
                .iter()
                .enumerate()
                .map(|(i, e)| vec![i.to_string(), fmt_f64(*e), (i == out.best).to_string()])
                .collect();
            let gap = optimal - value;
            let summary = SummaryRow {
                algorithm,
                seed,
                episodes_used: out.episodes,
                final_value: value,
                final_gap: gap,
                episodes_to_target: (gap <= target).then_some(out.episodes),
            };
            (vec!["policy", "estimate", "selected"], rows, summary)
        }
        AlgorithmSpec::Olive(cfg) => {
            let classes = classes.expect("validated");
            let out = run_olive(&mut sampler, classes.functions(), cfg, Some(oracle))?;
            let rows = out
                .rounds
                .iter()
                .map(|r| {
                    let eliminated: Vec<String> = r.eliminated.iter().map(ToString::to_string).collect();
                    vec![
                        r.round.to_string(),
                        r.selected.to_string(),
                        opt(r.violating_step),
                        eliminated.join(" "),
                        r.survivors.to_string(),
                        r.episodes_used.to_string(),
                        opt_f64(r.exact_gap),
                    ]
                })
                .collect();
            let value = oracle.policy_value(&out.policy)?;
            let summary = SummaryRow {
                algorithm,
                seed,
                episodes_used: out.episodes_used,
                final_value: value,
                final_gap: optimal - value,
                episodes_to_target: out.episodes_to_gap(target),
            };
            let header =
                vec!["round", "selected", "violating_step", "eliminated", "survivors", "episodes_used", "exact_gap"];
            (header, rows, summary)
        }
    };
    Ok(RunRecord { seed, derived_seed, detail_header, detail, summary })
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

impl ExperimentResult {
    pub fn detail_header(&self) -> Vec<&'static str> {
        let mut h = vec!["seed"];
        if let Some(r) = self.runs.first() {
            h.extend(&r.detail_header);
        }
        h
    }

    pub fn detail_rows(&self) -> Vec<Vec<String>> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.detail.iter().map(move |row| {
                    let mut out = vec![r.seed.to_string()];
                    out.extend(row.iter().cloned());
                    out
                })
            })
            .collect()
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "config_hash": self.config_hash,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock_seconds": self.wall_clock_seconds,
            "runs": self.runs.iter().map(|r| serde_json::json!({"seed": r.seed, "derived_seed": r.derived_seed})).collect::<Vec<_>>(),
            "failures": [],
        })
    }

    /// Writes `detail.csv`, `summary.csv` and `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join("detail.csv"), &self.detail_header(), self.detail_rows())?;
        write_csv(&dir.join("summary.csv"), &SUMMARY_HEADER, self.runs.iter().map(|r| r.summary.cells()))?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest())? + "\n")?;
        Ok(())
    }
}

/// A list of experiments, read from `{"configs": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub configs: Vec<ExperimentConfig>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let sweep: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if sweep.configs.is_empty() {
            return Err(Error::InvalidArgument("sweep has no configs".into()));
        }
        Ok(sweep)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug)]
pub struct SweepEntry {
    pub index: usize,
    pub config_hash: String,
    pub label: String,
    pub outcome: std::result::Result<ExperimentResult, String>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub wall_clock_seconds: f64,
}

pub const SWEEP_PREFIX: [&str; 3] = ["config_index", "config_hash", "label"];

/// Runs every config on a pool of `parallelism` threads. Failures are kept
/// per config and do not stop the others; results come back in config order.
pub fn sweep(configs: &[ExperimentConfig], parallelism: usize) -> Result<SweepResult> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let entries = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(index, c)| SweepEntry {
                index,
                config_hash: c.hash(),
                label: c.label.clone().unwrap_or_default(),
                outcome: run_experiment(c).map_err(|e| e.to_string()),
            })
            .collect()
    });
    Ok(SweepResult { entries, wall_clock_seconds: start.elapsed().as_secs_f64() })
}

impl SweepResult {
    fn prefix(e: &SweepEntry) -> Vec<String> {
        vec![e.index.to_string(), e.config_hash.clone(), e.label.clone()]
    }

    /// Summary rows of every successful config, prefixed with its identity.
    pub fn summary_rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().map(|r| (e, r)))
            .flat_map(|(e, r)| {
                r.runs.iter().map(move |run| {
                    let mut row = Self::prefix(e);
                    row.extend(run.summary.cells());
                    row
                })
            })
            .collect()
    }

    pub fn failures(&self) -> Vec<(usize, String)> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().err().map(|m| (e.index, m.clone()))).collect()
    }

    /// Writes the aggregated `summary.csv`, each config's files under
    /// `config_<index>/` and a top-level `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header: Vec<&str> = SWEEP_PREFIX.iter().chain(SUMMARY_HEADER.iter()).copied().collect();
        write_csv(&dir.join("summary.csv"), &header, self.summary_rows())?;
        for e in &self.entries {
            if let Ok(r) = &e.outcome {
                r.write(&dir.join(format!("config_{}", e.index)))?;
            }
        }
        let manifest = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock_seconds": self.wall_clock_seconds,
            "configs": self.entries.iter().map(|e| serde_json::json!({
                "index": e.index,
                "config_hash": e.config_hash,
                "label": e.label,
                "ok": e.outcome.is_ok(),
            })).collect::<Vec<_>>(),
            "failures": self.failures().into_iter().map(|(i, m)| serde_json::json!({"index": i, "error": m})).collect::<Vec<_>>(),
        });
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidModel(_) | Error::Parse(_) | Error::Json(_) => 2,
        Error::CapExceeded { .. } => 3,
        Error::Io(_) => 4,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOCK: &str = r#"{
        "env": {"kind": "lock", "memory": 2, "actions": 2},
        "algorithm": {"name": "ucbvi", "episodes": 50},
        "seeds": [0, 1]
    }"#;

    #[test]
    fn parses_and_rejects() {
        let c = ExperimentConfig::from_json(LOCK).unwrap();
        assert_eq!(c.target_gap, 0.05);
        let empty = LOCK.replace("[0, 1]", "[]");
        let e = ExperimentConfig::from_json(&empty).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let unknown = LOCK.replace("\"seeds\"", "\"colour\": 1, \"seeds\"");
        assert_eq!(exit_code(&ExperimentConfig::from_json(&unknown).unwrap_err()), 2);
        let inner = LOCK.replace("\"episodes\": 50", "\"episodes\": 50, \"bogus\": true");
        assert!(ExperimentConfig::from_json(&inner).is_err());
        let no_class = LOCK.replace(r#""name": "ucbvi", "episodes": 50"#, r#""name": "olive""#);
        assert!(ExperimentConfig::from_json(&no_class).is_err());
    }

    #[test]
    fn random_env_tag_is_accepted() {
        let text = r#"{"env": {"kind": "random", "states": 2, "observations": 2, "actions": 2,
            "horizon": 2, "memory": 1, "seed": 3}, "algorithm": {"name": "isrl"}, "seeds": [1]}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(c.env, EnvSpec::Random { max_retries: 10_000, .. }));
    }

    #[test]
    fn hash_ignores_output_and_seeds_differ() {
        let mut c = ExperimentConfig::from_json(LOCK).unwrap();
        let h = c.hash();
        c.output = Some("elsewhere".into());
        assert_eq!(c.hash(), h);
        assert_ne!(derive_seed(&h, 0), derive_seed(&h, 1));
        assert_eq!(derive_seed(&h, 0), derive_seed(&h, 0));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 0.75, 1e-300] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn run_is_reproducible() {
        let c = ExperimentConfig::from_json(LOCK).unwrap();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.detail_rows().len(), 100);
    }
}
