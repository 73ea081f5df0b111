//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line, then exits nonzero if any
//! criterion failed.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use decodable::decode::verify_decodability;
use decodable::environments::{
    decoy_class, make_combination_lock, make_hadamard_instance, make_random_decodable, random_function, RandomSpec,
};
use decodable::isrl::{self, construct_bstar, enumerate_policy_class, exact_estimator_mean, ClassMode};
use decodable::megastate::{build_megastate_mdp, markov_deviation, ucbvi_learn, UcbviConfig};
use decodable::mgolf::{run_mgolf, MGolfConfig};
use decodable::olive::{run_olive, OliveConfig};
use decodable::oracle::{enumerate_paths, path_value, ErrorKind, Oracle, DEFAULT_RANK_TOLERANCE};
use decodable::simulate::EpisodeSampler;
use decodable::{Suffix, TabularPomdp};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Generated instances within S <= 4, O <= 5, A <= 2, H <= 4, m <= 3.
fn generated_corpus(count: usize) -> Vec<(RandomSpec, decodable::environments::RandomInstance)> {
    (0..count)
        .map(|i| {
            let horizon = 2 + i % 3;
            let spec = RandomSpec {
                states: 2 + i % 3,
                observations: 2 + (i / 2) % 4,
                actions: 1 + (i / 3) % 2,
                horizon,
                memory: 1 + (i / 4) % horizon.min(3),
                seed: 1000 + i as u64,
                max_retries: 20_000,
            };
            let inst = make_random_decodable(&spec).expect("generator succeeds");
            (spec, inst)
        })
        .collect()
}

fn builtin_corpus() -> Vec<TabularPomdp> {
    vec![
        make_combination_lock(2, 2).unwrap(),
        make_combination_lock(3, 2).unwrap(),
        make_hadamard_instance(2, false).unwrap().pomdp,
    ]
}

fn e(x: impl std::fmt::Display) -> String {
    x.to_string()
}

fn hadamard_exact_values() -> Outcome {
    for exponent in [2, 3] {
        let inst = make_hadamard_instance(exponent, false).map_err(e)?;
        let o = Oracle::new(&inst.pomdp).map_err(e)?;
        let v = o.optimal_value().map_err(e)?;
        ensure(close(v, 0.75, 1e-12), || format!("V* = {v}"))?;
        let decoys = inst.decoys();
        for (i, fi) in decoys.iter().enumerate() {
            let pi = fi.greedy_policy();
            let init = o.initial_value(fi).map_err(e)?;
            ensure(close(init, 0.875, 1e-12), || format!("initial value of f_{} = {init}", i + 1))?;
            let first = o.bellman_error(&pi, fi, 1).map_err(e)?;
            ensure(close(first, 0.0, 1e-12), || format!("step-1 error of f_{} = {first}", i + 1))?;
            for (j, fj) in decoys.iter().enumerate() {
                let err = o.bellman_error(&pi, fj, 2).map_err(e)?;
                let want = if i == j { 0.25 } else { 0.0 };
                ensure(close(err, want, 1e-12), || format!("E_2(pi_{}, f_{}) = {err}", i + 1, j + 1))?;
            }
        }
    }
    Ok("O in {4, 8}: V* = 3/4, initial values 7/8, diagonal 1/4, off-diagonal 0, step-1 errors 0".into())
}

fn bellman_rank_separation() -> Outcome {
    let inst = make_hadamard_instance(3, false).map_err(e)?;
    let o = Oracle::new(&inst.pomdp).map_err(e)?;
    let decoys = inst.decoys();
    let policies: Vec<_> = decoys.iter().map(|f| f.greedy_policy()).collect();
    let (_, bellman) = o.bellman_rank(&policies, decoys, 2, DEFAULT_RANK_TOLERANCE, ErrorKind::Bellman).map_err(e)?;
    let (_, surrogate) =
        o.bellman_rank(&policies, decoys, 2, DEFAULT_RANK_TOLERANCE, ErrorKind::Surrogate).map_err(e)?;
    let s = inst.pomdp.num_states();
    ensure(bellman.numerical_rank == 7 && surrogate.numerical_rank <= s, || {
        format!("ranks {} and {}", bellman.numerical_rank, surrogate.numerical_rank)
    })?;
    Ok(format!("O=8: Bellman rank {}, surrogate rank {} <= S = {s}", bellman.numerical_rank, surrogate.numerical_rank))
}

fn moment_matching_corpus() -> Outcome {
    let mut models: Vec<TabularPomdp> = builtin_corpus().into_iter().take(2).collect();
    models.extend(generated_corpus(25).into_iter().map(|(_, inst)| inst.pomdp));
    let policies = 50u64;
    let mut worst = 0.0_f64;
    let mut checks = 0usize;
    for (k, m) in models.iter().enumerate() {
        let o = Oracle::new(m).map_err(e)?;
        for p in 0..policies {
            let f = random_function(&o, "f", 10_000 * k as u64 + 2 * p).map_err(e)?;
            let roll_in = random_function(&o, "g", 10_000 * k as u64 + 2 * p + 1).map_err(e)?.greedy_policy();
            for h in 1..=m.horizon() {
                let c = o.check_moment_matching(&roll_in, &f, h).map_err(e)?;
                let gap = c.distribution_gap.max(c.factorization_gap).max(c.surrogate_gap);
                ensure(gap <= 1e-10, || format!("instance {k}, policy {p}, step {h}: {c:?}"))?;
                worst = worst.max(gap);
                checks += 1;
            }
        }
    }
    Ok(format!("{} instances x {policies} policies ({checks} checks), max deviation {worst:.1e}", models.len()))
}

fn decodability_suite() -> Outcome {
    for memory in [2, 3] {
        let lock = make_combination_lock(memory, 2).map_err(e)?;
        let at = verify_decodability(&lock, memory).map_err(e)?.decodable;
        let below = verify_decodability(&lock, memory - 1).map_err(e)?.decodable;
        ensure(at && !below, || format!("lock m={memory}: {at} at m, {below} at m-1"))?;
    }
    let corpus = generated_corpus(25);
    let mut claimed = 0;
    for (spec, inst) in &corpus {
        ensure(verify_decodability(&inst.pomdp, spec.memory).map_err(e)?.decodable, || {
            format!("seed {} not decodable at m", spec.seed)
        })?;
        if inst.needs_full_memory && spec.memory > 1 {
            claimed += 1;
            ensure(!verify_decodability(&inst.pomdp, spec.memory - 1).map_err(e)?.decodable, || {
                format!("seed {} decodable at m-1 despite the claim", spec.seed)
            })?;
        }
    }
    let mut trajectories = 0;
    let models = builtin_corpus().into_iter().chain(corpus.into_iter().map(|(_, i)| i.pomdp));
    for m in models {
        let o = Oracle::new(&m).map_err(e)?;
        let chain = construct_bstar(&m).map_err(e)?;
        let uniform = decodable::SuffixPolicy::uniform(m.horizon(), 1, m.num_actions());
        for path in enumerate_paths(&m, &uniform, m.horizon(), o.cap()).map_err(e)? {
            let predicted = chain.predict(&path.obs, &path.actions);
            for h in 1..=m.horizon() {
                let z = Suffix::extract(&path.obs, &path.actions, h, m.memory());
                let decoded = o.decoder().decode(&z);
                ensure(decoded == Some(predicted[h - 1]) && path.states[h - 1] == predicted[h - 1], || {
                    format!("recursion disagrees at step {h} on {:?}", path.obs)
                })?;
            }
            trajectories += 1;
        }
    }
    Ok(format!("locks m in {{2, 3}} exact; {claimed} generated claims confirmed; recursion matched on {trajectories} trajectories"))
}

fn megastate_correctness() -> Outcome {
    let mut models = builtin_corpus();
    models.extend(generated_corpus(25).into_iter().map(|(_, i)| i.pomdp));
    let mut worst = 0.0_f64;
    for (k, m) in models.iter().enumerate() {
        let mdp = build_megastate_mdp(m, m.memory()).map_err(e)?;
        let dev = markov_deviation(m, &mdp).map_err(e)?;
        let vstar = Oracle::new(m).map_err(e)?.optimal_value().map_err(e)?;
        let diff = (mdp.optimal_value() - vstar).abs();
        ensure(dev <= 1e-12 && diff <= 1e-12, || format!("instance {k}: markov {dev:e}, value diff {diff:e}"))?;
        worst = worst.max(dev).max(diff);
    }
    let lock = make_combination_lock(2, 2).map_err(e)?;
    let mdp = build_megastate_mdp(&lock, 2).map_err(e)?;
    let out = ucbvi_learn(&mdp, &UcbviConfig { episodes: 5000, ..UcbviConfig::default() }, 0).map_err(e)?;
    let reached = out.episodes_to_gap(0.05);
    ensure(reached.is_some_and(|k| k <= 5000), || format!("UCB-VI settled at {reached:?}"))?;
    Ok(format!("{} instances, max deviation {worst:.1e}; UCB-VI on lock settles at episode {}", models.len(), reached.unwrap()))
}

fn mgolf_end_to_end() -> Outcome {
    let inst = make_hadamard_instance(3, true).map_err(e)?;
    ensure(inst.classes.len_f() == 9, || format!("class size {}", inst.classes.len_f()))?;
    let o = Oracle::new(&inst.pomdp).map_err(e)?;
    let cfg = MGolfConfig { epochs: 200, beta_c: 0.1, num_states: 3, ..MGolfConfig::default() };
    let out = run_mgolf(&mut EpisodeSampler::new(&inst.pomdp, 0), &inst.classes, &cfg, Some(&o)).map_err(e)?;
    let hv = out.mixture_value.unwrap();
    ensure(hv >= 0.70, || format!("Hadamard mixture value {hv}"))?;

    let lock = make_combination_lock(2, 2).map_err(e)?;
    let lo = Oracle::new(&lock).map_err(e)?;
    let classes = decoy_class(&lo, 3, 0).map_err(e)?;
    let cfg = MGolfConfig { epochs: 500, num_states: 2, ..MGolfConfig::default() };
    let out = run_mgolf(&mut EpisodeSampler::new(&lock, 0), &classes, &cfg, Some(&lo)).map_err(e)?;
    let lock_gap = out.optimal_value.unwrap() - out.mixture_value.unwrap();
    ensure(lock_gap <= 0.1, || format!("lock mixture gap {lock_gap}"))?;

    let noisy = make_random_decodable(&RandomSpec {
        states: 3,
        observations: 4,
        actions: 2,
        horizon: 3,
        memory: 2,
        seed: 7,
        max_retries: 20_000,
    })
    .map_err(e)?
    .pomdp;
    let no = Oracle::new(&noisy).map_err(e)?;
    let classes = decoy_class(&no, 3, 1).map_err(e)?;
    let cfg = MGolfConfig { epochs: 100, num_states: 3, ..MGolfConfig::default() };
    let mut survived = 0;
    for seed in 0..100 {
        let out = run_mgolf(&mut EpisodeSampler::new(&noisy, seed), &classes, &cfg, None).map_err(e)?;
        if out.records.iter().all(|r| r.qstar_in_set == Some(true)) && out.aborted_at.is_none() {
            survived += 1;
        }
    }
    ensure(survived >= 95, || format!("Q* survived in {survived}/100 runs"))?;
    Ok(format!("Hadamard mixture value {hv:.4}; lock gap {lock_gap:.4}; Q* survived {survived}/100"))
}

fn olive_vs_mgolf_scaling() -> Outcome {
    let seeds = 0..20u64;
    let mut olive = Vec::new();
    let mut golf = Vec::new();
    for exponent in [2u32, 3, 4] {
        let inst = make_hadamard_instance(exponent, false).map_err(e)?;
        let o = Oracle::new(&inst.pomdp).map_err(e)?;
        let (mut ol, mut mg) = (0.0, 0.0);
        for seed in seeds.clone() {
            let cfg = OliveConfig { n_est: 500, ..OliveConfig::default() };
            let out = run_olive(&mut EpisodeSampler::new(&inst.pomdp, seed), inst.classes.functions(), &cfg, Some(&o))
                .map_err(e)?;
            ol += out.episodes_to_gap(0.05).ok_or_else(|| format!("OLIVE never settled at O={}", 1 << exponent))? as f64;
            let cfg = MGolfConfig { epochs: 200, beta_c: 0.1, num_states: 3, ..MGolfConfig::default() };
            let out = run_mgolf(&mut EpisodeSampler::new(&inst.pomdp, seed), &inst.classes, &cfg, Some(&o)).map_err(e)?;
            mg += out.episodes_to_gap(0.05).ok_or_else(|| format!("m-GOLF never settled at O={}", 1 << exponent))? as f64;
        }
        olive.push(ol / seeds.end as f64);
        golf.push(mg / seeds.end as f64);
    }
    let olive_ratio = olive[2] / olive[0];
    let golf_ratio = golf[2] / golf[0];
    ensure(olive_ratio >= 3.0 && golf_ratio < 1.5, || {
        format!("OLIVE {olive:?} (ratio {olive_ratio:.2}), m-GOLF {golf:?} (ratio {golf_ratio:.2})")
    })?;
    Ok(format!(
        "mean episodes OLIVE {olive:?} (x{olive_ratio:.2}), m-GOLF {:?} (x{golf_ratio:.2})",
        golf.iter().map(|g| format!("{g:.1}")).collect::<Vec<_>>()
    ))
}

fn isrl_checks() -> Outcome {
    let tiny = make_random_decodable(&RandomSpec {
        states: 2,
        observations: 3,
        actions: 2,
        horizon: 3,
        memory: 3,
        seed: 21,
        max_retries: 20_000,
    })
    .map_err(e)?
    .pomdp;
    let o = Oracle::new(&tiny).map_err(e)?;
    let class = enumerate_policy_class(&tiny, &ClassMode::FixedChain, o.cap()).map_err(e)?;
    let mut worst = 0.0_f64;
    for pi in class.iter().step_by(class.len() / 10).take(10) {
        let exact = path_value(&tiny, &enumerate_paths(&tiny, pi, tiny.horizon(), o.cap()).map_err(e)?);
        worst = worst.max((exact_estimator_mean(&tiny, pi, o.cap()).map_err(e)? - exact).abs());
    }
    ensure(worst <= 1e-12, || format!("estimator bias {worst:e}"))?;

    let two = make_random_decodable(&RandomSpec {
        states: 2,
        observations: 3,
        actions: 2,
        horizon: 2,
        memory: 2,
        seed: 5,
        max_retries: 20_000,
    })
    .map_err(e)?
    .pomdp;
    let o = Oracle::new(&two).map_err(e)?;
    let vstar = o.optimal_value().map_err(e)?;
    let class = enumerate_policy_class(&two, &ClassMode::FixedChain, o.cap()).map_err(e)?;
    let values: Vec<f64> = class
        .iter()
        .map(|pi| Ok(path_value(&two, &enumerate_paths(&two, pi, 2, o.cap())?)))
        .collect::<decodable::Result<_>>()
        .map_err(e)?;
    let best = values.iter().copied().fold(f64::MIN, f64::max);
    ensure(close(best, vstar, 1e-12), || format!("class optimum {best} vs V* {vstar}"))?;
    let n = isrl::required_samples(2, 2, class.len() as f64, 0.1, 0.1);
    let mut good = 0;
    for seed in 0..100 {
        let out = isrl::is_rl(&mut EpisodeSampler::new(&two, seed), &class, n).map_err(e)?;
        if vstar - values[out.best] <= 0.1 {
            good += 1;
        }
    }
    ensure(good >= 90, || format!("0.1-optimal in {good}/100 runs"))?;
    Ok(format!("bias {worst:.1e} over 10 policies; |class| = {}, N = {n}, 0.1-optimal in {good}/100", class.len()))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_decodable")).args(args).current_dir(cwd).output().map_err(e)?;
    ensure(out.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|err| format!("{}: {err}", path.display()))
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let d = dir.path();
    run_cli(&["env", "build", "--kind", "hadamard", "--exponent", "2", "--out", "h.json", "--class-out", "hc.json"], d)?;
    run_cli(&["env", "build", "--kind", "lock", "--memory", "2", "--out", "l.json", "--class-out", "lc.json"], d)?;
    run_cli(&["env", "build", "--kind", "random", "--states", "2", "--observations", "3", "--horizon", "2", "--memory", "2", "--seed", "5", "--out", "r.json"], d)?;
    let runs: Vec<Vec<&str>> = vec![
        vec!["run", "mgolf", "--env", "h.json", "--class", "hc.json", "--epochs", "40", "--beta-c", "0.1", "--seed", "3"],
        vec!["run", "olive", "--env", "h.json", "--class", "hc.json", "--n-est", "100", "--seed", "3"],
        vec!["run", "ucbvi", "--env", "l.json", "--episodes", "300", "--seed", "3"],
        vec!["run", "isrl", "--env", "r.json", "--N", "500", "--seed", "3"],
    ];
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let name = format!("run{i}_{rep}.csv");
            let mut full = args.clone();
            full.extend(["--out", &name]);
            run_cli(&full, d)?;
            outputs.push((read(&d.join(&name))?, read(&d.join(format!("run{i}_{rep}.summary.csv")))?));
        }
        ensure(outputs[0] == outputs[1], || format!("{args:?} differs between runs"))?;
        files += 2;
    }
    let sweep = r#"{"configs": [
        {"label": "golf", "env": {"kind": "hadamard", "exponent": 2}, "class": {"kind": "hadamard"},
         "algorithm": {"name": "mgolf", "epochs": 30, "beta_c": 0.1}, "seeds": [0, 1]},
        {"label": "olive", "env": {"kind": "hadamard", "exponent": 2}, "class": {"kind": "hadamard"},
         "algorithm": {"name": "olive", "n_est": 100}, "seeds": [0, 1]},
        {"label": "ucbvi", "env": {"kind": "lock", "memory": 2, "actions": 2},
         "algorithm": {"name": "ucbvi", "episodes": 200}, "seeds": [4]}
    ]}"#;
    std::fs::write(d.join("sweep.json"), sweep).map_err(e)?;
    run_cli(&["sweep", "--config", "sweep.json", "--parallelism", "1", "--out", "s1"], d)?;
    run_cli(&["sweep", "--config", "sweep.json", "--parallelism", "4", "--out", "s4"], d)?;
    ensure(read(&d.join("s1/summary.csv"))? == read(&d.join("s4/summary.csv"))?, || "sweep summaries differ".into())?;
    for i in 0..3 {
        let p = format!("config_{i}/detail.csv");
        ensure(read(&d.join("s1").join(&p))? == read(&d.join("s4").join(&p))?, || format!("{p} differs"))?;
    }
    Ok(format!("{files} CLI outputs and sweeps at parallelism 1 and 4 byte-identical"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("hadamard exact values", hadamard_exact_values),
        ("bellman rank separation", bellman_rank_separation),
        ("moment matching identities", moment_matching_corpus),
        ("decodability suite", decodability_suite),
        ("megastate correctness", megastate_correctness),
        ("m-GOLF end to end", mgolf_end_to_end),
        ("OLIVE vs m-GOLF scaling", olive_vs_mgolf_scaling),
        ("IS-RL", isrl_checks),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
