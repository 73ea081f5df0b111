//! `decodable`: build environments, verify decodability, run learners and
//! analyses, and execute config-driven sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use decodable::decode::verify_decodability;
use decodable::environments::{decoy_class, random_function};
use decodable::harness::{
    self, AlgorithmSpec, ClassSpec, EnvSpec, ExperimentConfig, SweepConfig,
};
use decodable::io::{read_class, read_pomdp, write_class, write_pomdp};
use decodable::isrl::ClassMode;
use decodable::megastate::UcbviConfig;
use decodable::mgolf::MGolfConfig;
use decodable::olive::OliveConfig;
use decodable::oracle::{ErrorKind, Oracle, DEFAULT_RANK_TOLERANCE};
use decodable::TabularPomdp;

/// Workbench for POMDPs whose latent state is decodable from a short window
/// of recent observations and actions.
///
/// Exact routines refuse enumerations larger than a cap, which can be raised
/// with the DECODABLE_ORACLE_CAP environment variable.
#[derive(Parser)]
#[command(name = "decodable", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build environments and function classes.
    #[command(subcommand)]
    Env(EnvCommand),
    /// Check m-step decodability of a model file.
    Verify {
        #[arg(long)]
        env: PathBuf,
        /// Memory to test; defaults to the model's own.
        #[arg(long)]
        memory: Option<usize>,
    },
    /// Run a learner on a model file, or a JSON experiment config.
    #[command(subcommand)]
    Run(RunCommand),
    /// Exact structural analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Run a list of experiment configs, optionally in parallel.
    Sweep {
        /// JSON file of the form {"configs": [...]}.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Lock,
    Hadamard,
    Random,
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Write a model (and optionally a function class) to JSON.
    Build {
        #[arg(long, value_enum)]
        kind: EnvKind,
        /// Memory length (lock, random).
        #[arg(long, default_value_t = 2)]
        memory: usize,
        /// Number of actions (lock, random).
        #[arg(long, default_value_t = 2)]
        actions: usize,
        /// Observation count is 2^exponent (hadamard).
        #[arg(long, default_value_t = 3)]
        exponent: u32,
        /// Add the all-ones decoy to the hadamard class.
        #[arg(long)]
        all_ones_decoy: bool,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 4)]
        observations: usize,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        /// Generator seed (random) and decoy seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_retries: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write a function class: the built-in one for hadamard, Q* plus decoys otherwise.
        #[arg(long)]
        class_out: Option<PathBuf>,
        /// Decoy count for lock and random classes.
        #[arg(long, default_value_t = 3)]
        decoys: usize,
    },
}

#[derive(Args)]
struct RunCommon {
    /// Model file.
    #[arg(long)]
    env: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gap defining the episodes-to-target column.
    #[arg(long, default_value_t = 0.05)]
    target_gap: f64,
    /// Detail CSV; the summary and manifest are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    FixedChain,
    Full,
}

#[derive(Subcommand)]
enum RunCommand {
    /// Optimistic confidence-set learner over a function class.
    Mgolf {
        #[command(flatten)]
        common: RunCommon,
        #[arg(long)]
        class: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        /// Initial-value episodes; default from the sample-size formula.
        #[arg(long)]
        k_est: Option<usize>,
        /// Fixed confidence threshold; default from the formula.
        #[arg(long)]
        beta: Option<f64>,
        /// Constant in the threshold and initial-value formulas.
        #[arg(long, default_value_t = 1.0)]
        beta_c: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Double the threshold instead of stopping when the set empties.
        #[arg(long)]
        beta_doubling: bool,
    },
    /// UCB-VI on the megastate MDP.
    Ucbvi {
        #[command(flatten)]
        common: RunCommon,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        bonus_scale: f64,
        /// Plan with the true transitions.
        #[arg(long)]
        known_model: bool,
    },
    /// Importance-sampling policy search over belief policies.
    Isrl {
        #[command(flatten)]
        common: RunCommon,
        #[arg(long, value_enum, default_value = "fixed-chain")]
        mode: Mode,
        /// Uniform trajectories; default from the sample-size formula.
        #[arg(long = "N")]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Average-Bellman-error elimination baseline.
    Olive {
        #[command(flatten)]
        common: RunCommon,
        #[arg(long)]
        class: PathBuf,
        #[arg(long, default_value_t = 0.125)]
        eps_act: f64,
        #[arg(long, default_value_t = 0.125)]
        eps_elim: f64,
        #[arg(long, default_value_t = 1000)]
        n_est: usize,
        /// Use exact errors instead of estimates.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 1000)]
        max_rounds: usize,
    },
    /// Run a JSON experiment config.
    Config {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's own.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Bellman,
    Surrogate,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Rank of the error matrix [E_h(pi_{f_i}, f_j)] over a class.
    Rank {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        class: PathBuf,
        #[arg(long, default_value_t = 2)]
        step: usize,
        #[arg(long, value_enum, default_value = "bellman")]
        kind: Kind,
        /// Relative singular-value tolerance.
        #[arg(long, default_value_t = DEFAULT_RANK_TOLERANCE)]
        tolerance: f64,
        /// Optional CSV of the matrix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the moment-matching identities for random greedy policies.
    MomentMatching {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 20)]
        policies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// One Bellman (or surrogate) error entry.
    BellmanError {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        class: PathBuf,
        /// Index of the function whose greedy policy is the roll-in.
        #[arg(long)]
        roll_in: usize,
        /// Index of the function being tested.
        #[arg(long)]
        function: usize,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        surrogate: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<decodable::Error>().map_or(1, harness::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Env(EnvCommand::Build {
            kind,
            memory,
            actions,
            exponent,
            all_ones_decoy,
            states,
            observations,
            horizon,
            seed,
            max_retries,
            out,
            class_out,
            decoys,
        }) => {
            let spec = match kind {
                EnvKind::Lock => EnvSpec::Lock { memory, actions },
                EnvKind::Hadamard => EnvSpec::Hadamard { exponent, all_ones_decoy },
                EnvKind::Random => {
                    EnvSpec::Random { states, observations, actions, horizon, memory, seed, max_retries }
                }
            };
            let (pomdp, builtin) = harness::build_env(&spec)?;
            write_pomdp(&out, &pomdp)?;
            println!(
                "wrote {} (H={} m={} S={} O={} A={})",
                out.display(),
                pomdp.horizon(),
                pomdp.memory(),
                pomdp.num_states(),
                pomdp.num_observations(),
                pomdp.num_actions()
            );
            if let Some(path) = class_out {
                let classes = match builtin {
                    Some(c) => c,
                    None => decoy_class(&Oracle::new(&pomdp)?, decoys, seed)?,
                };
                write_class(&path, &classes)?;
                println!("wrote {} (|F|={} |G|={})", path.display(), classes.len_f(), classes.len_g());
            }
            Ok(())
        }
        Command::Verify { env, memory } => {
            let pomdp = read_pomdp(&env)?;
            let m = memory.unwrap_or(pomdp.memory());
            let report = verify_decodability(&pomdp, m)?;
            println!("memory {m}: decodable = {}", report.decodable);
            if let Some((z, states)) = report.witness {
                println!("witness: {z} reachable from states {states:?}");
            }
            Ok(())
        }
        Command::Run(run) => run_command(run),
        Command::Analyze(a) => analyze(a),
        Command::Sweep { config, parallelism, out } => {
            let sweep = SweepConfig::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let result = harness::sweep(&sweep.configs, parallelism)?;
            result.write(&out)?;
            let failures = result.failures();
            println!("{} configs, {} failed; results in {}", result.entries.len(), failures.len(), out.display());
            for (i, msg) in failures {
                eprintln!("config {i} failed: {msg}");
            }
            Ok(())
        }
    }
}

fn single_run(common: RunCommon, class: Option<PathBuf>, algorithm: AlgorithmSpec) -> Result<()> {
    let config = ExperimentConfig {
        label: None,
        env: EnvSpec::File { path: common.env },
        class: class.map(|path| ClassSpec::File { path }),
        algorithm,
        seeds: vec![common.seed],
        target_gap: common.target_gap,
        output: None,
    };
    let result = harness::run_experiment(&config)?;
    let out = common.out;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = tempdir_next_to(&out)?;
    result.write(&tmp)?;
    std::fs::rename(tmp.join("detail.csv"), &out)?;
    std::fs::rename(tmp.join("summary.csv"), sibling(&out, "summary.csv"))?;
    std::fs::rename(tmp.join("manifest.json"), sibling(&out, "manifest.json"))?;
    std::fs::remove_dir(&tmp)?;
    print_summary(&result);
    Ok(())
}

/// `results.csv` -> `results.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn tempdir_next_to(path: &Path) -> Result<PathBuf> {
    let dir = sibling(path, "partial");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn print_summary(result: &harness::ExperimentResult) {
    for r in &result.runs {
        let s = &r.summary;
        println!(
            "{} seed={} episodes={} value={:.6} gap={:.6} episodes_to_target={}",
            s.algorithm,
            s.seed,
            s.episodes_used,
            s.final_value,
            s.final_gap,
            s.episodes_to_target.map_or_else(|| "none".into(), |e| e.to_string())
        );
    }
}

fn run_command(run: RunCommand) -> Result<()> {
    match run {
        RunCommand::Mgolf { common, class, epochs, k_est, beta, beta_c, epsilon, delta, beta_doubling } => {
            let cfg = MGolfConfig { epochs, k_est, beta, beta_c, epsilon, delta, num_states: 0, beta_doubling };
            single_run(common, Some(class), AlgorithmSpec::Mgolf(cfg))
        }
        RunCommand::Ucbvi { common, episodes, delta, bonus_scale, known_model } => {
            let cfg = UcbviConfig { episodes, delta, bonus_scale, known_model };
            single_run(common, None, AlgorithmSpec::Ucbvi(cfg))
        }
        RunCommand::Isrl { common, mode, samples, epsilon, delta } => {
            let mode = match mode {
                Mode::FixedChain => ClassMode::FixedChain,
                Mode::Full => ClassMode::Full,
            };
            single_run(common, None, AlgorithmSpec::Isrl { mode, samples, epsilon, delta })
        }
        RunCommand::Olive { common, class, eps_act, eps_elim, n_est, exact, max_rounds } => {
            let cfg = OliveConfig { eps_act, eps_elim, n_est, exact, max_rounds };
            single_run(common, Some(class), AlgorithmSpec::Olive(cfg))
        }
        RunCommand::Config { config, out } => {
            let cfg = ExperimentConfig::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let Some(dir) = out.or_else(|| cfg.output.clone()) else {
                bail!(decodable::Error::InvalidArgument("no output directory given".into()));
            };
            let result = harness::run_experiment(&cfg)?;
            result.write(&dir)?;
            print_summary(&result);
            Ok(())
        }
    }
}

/// Loads a model and attaches the constructed decoder when the file has none.
fn load_with_decoder(path: &Path) -> Result<TabularPomdp> {
    let pomdp = read_pomdp(path)?;
    if pomdp.decoder().is_some() {
        return Ok(pomdp);
    }
    let decoder = Oracle::new(&pomdp)?.decoder().clone();
    Ok(pomdp.with_decoder(Some(decoder))?)
}

fn analyze(command: AnalyzeCommand) -> Result<()> {
    match command {
        AnalyzeCommand::Rank { env, class, step, kind, tolerance, out } => {
            let pomdp = load_with_decoder(&env)?;
            let classes = read_class(&class)?;
            let oracle = Oracle::new(&pomdp)?;
            let policies: Vec<_> = classes.functions().iter().map(|f| f.greedy_policy()).collect();
            let kind = match kind {
                Kind::Bellman => ErrorKind::Bellman,
                Kind::Surrogate => ErrorKind::Surrogate,
            };
            let (matrix, report) = oracle.bellman_rank(&policies, classes.functions(), step, tolerance, kind)?;
            println!("numerical rank = {}", report.numerical_rank);
            let sv: Vec<String> = report.singular_values.iter().map(|s| format!("{s:.6e}")).collect();
            println!("singular values = [{}]", sv.join(", "));
            if let Some(path) = out {
                let mut w = csv::Writer::from_path(&path)?;
                for row in &matrix {
                    w.write_record(row.iter().map(|x| harness::fmt_f64(*x)))?;
                }
                w.flush()?;
            }
            Ok(())
        }
        AnalyzeCommand::MomentMatching { env, policies, seed, tolerance } => {
            let pomdp = load_with_decoder(&env)?;
            let oracle = Oracle::new(&pomdp)?;
            let (mut dist, mut fact, mut surr) = (0.0_f64, 0.0_f64, 0.0_f64);
            for i in 0..policies as u64 {
                let f = random_function(&oracle, "f", seed.wrapping_add(2 * i))?;
                let roll_in = random_function(&oracle, "g", seed.wrapping_add(2 * i + 1))?.greedy_policy();
                for h in 1..=pomdp.horizon() {
                    let c = oracle.check_moment_matching(&roll_in, &f, h)?;
                    dist = dist.max(c.distribution_gap);
                    fact = fact.max(c.factorization_gap);
                    surr = surr.max(c.surrogate_gap);
                }
            }
            println!("max distribution gap = {dist:.3e}");
            println!("max factorization gap = {fact:.3e}");
            println!("max surrogate gap = {surr:.3e}");
            if dist.max(fact).max(surr) > tolerance {
                bail!("moment-matching identities violated beyond {tolerance:e}");
            }
            println!("all identities hold within {tolerance:e}");
            Ok(())
        }
        AnalyzeCommand::BellmanError { env, class, roll_in, function, step, surrogate } => {
            let pomdp = load_with_decoder(&env)?;
            let classes = read_class(&class)?;
            let oracle = Oracle::new(&pomdp)?;
            let n = classes.len_f();
            if roll_in >= n || function >= n {
                bail!(decodable::Error::InvalidArgument(format!("indices must be below |F| = {n}")));
            }
            let pi = classes.functions()[roll_in].greedy_policy();
            let f = &classes.functions()[function];
            let value = if surrogate {
                oracle.surrogate_bellman_error(&pi, f, step)?
            } else {
                oracle.bellman_error(&pi, f, step)?
            };
            println!("{}", harness::fmt_f64(value));
            Ok(())
        }
    }
}
