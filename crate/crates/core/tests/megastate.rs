use decodable::environments::{make_combination_lock, make_random_decodable, RandomSpec};
use decodable::megastate::{build_megastate_mdp, markov_deviation, ucbvi_learn, UcbviConfig};
use decodable::oracle::Oracle;

#[test]
fn memory_one_reduces_to_observation_states() {
    let spec = RandomSpec { states: 3, observations: 5, actions: 2, horizon: 3, memory: 1, seed: 2, max_retries: 20_000 };
    let m = make_random_decodable(&spec).unwrap().pomdp;
    let mdp = build_megastate_mdp(&m, 1).unwrap();
    assert!(mdp.max_layer_size() <= 5);
    for h in 1..=3 {
        assert!(mdp.layer(h).iter().all(|z| z.len() == 1));
    }
    assert!(markov_deviation(&m, &mdp).unwrap() < 1e-12);
    let vstar = Oracle::new(&m).unwrap().optimal_value().unwrap();
    assert!((mdp.optimal_value() - vstar).abs() < 1e-12);
}

#[test]
fn pulled_back_optimal_policy_is_optimal_in_the_pomdp() {
    let lock = make_combination_lock(3, 2).unwrap();
    let mdp = build_megastate_mdp(&lock, 3).unwrap();
    let greedy = decodable::megastate::MegastateMdp::greedy(&mdp.optimal_q());
    let pi = mdp.pull_back(&greedy);
    let o = Oracle::new(&lock).unwrap();
    assert!((o.policy_value(&pi).unwrap() - 1.0).abs() < 1e-12);
    assert!((mdp.policy_value(&greedy) - 1.0).abs() < 1e-12);
}

#[test]
fn known_model_ucbvi_is_optimal_from_the_start() {
    let lock = make_combination_lock(2, 2).unwrap();
    let mdp = build_megastate_mdp(&lock, 2).unwrap();
    let out = ucbvi_learn(&mdp, &UcbviConfig { episodes: 20, known_model: true, ..UcbviConfig::default() }, 1).unwrap();
    assert_eq!(out.episodes_to_gap(0.0), Some(1));
}

#[test]
fn ucbvi_sample_count_grows_with_the_action_count() {
    let run = |actions: usize, episodes: usize| {
        let lock = make_combination_lock(3, actions).unwrap();
        let mdp = build_megastate_mdp(&lock, 3).unwrap();
        ucbvi_learn(&mdp, &UcbviConfig { episodes, ..UcbviConfig::default() }, 0).unwrap().episodes_to_gap(0.05)
    };
    let two = run(2, 30_000).expect("A=2 settles");
    let three = run(3, 30_000).expect("A=3 settles");
    assert!(three as f64 >= 2.0 * two as f64, "A=2: {two}, A=3: {three}");
}
