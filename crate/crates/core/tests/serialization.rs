use decodable::environments::{decoy_class, make_combination_lock, make_hadamard_instance, make_random_decodable, RandomSpec};
use decodable::io::{class_from_str, class_to_string, pomdp_from_str, pomdp_to_string, read_pomdp, write_pomdp};
use decodable::oracle::Oracle;
use decodable::{Error, TabularPomdp};

fn corpus() -> Vec<TabularPomdp> {
    let mut out = vec![
        make_combination_lock(2, 2).unwrap(),
        make_combination_lock(3, 3).unwrap(),
        make_hadamard_instance(3, true).unwrap().pomdp,
    ];
    for seed in 0..8 {
        let spec = RandomSpec {
            states: 2 + seed as usize % 3,
            observations: 3,
            actions: 2,
            horizon: 3,
            memory: 1 + seed as usize % 3,
            seed,
            max_retries: 20_000,
        };
        out.push(make_random_decodable(&spec).unwrap().pomdp);
    }
    out
}

#[test]
fn models_round_trip_exactly() {
    for m in corpus() {
        let text = pomdp_to_string(&m);
        let back = pomdp_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(pomdp_to_string(&back), text);
    }
}

#[test]
fn models_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for (i, m) in corpus().into_iter().enumerate() {
        let path = dir.path().join(format!("m{i}.json"));
        write_pomdp(&path, &m).unwrap();
        assert_eq!(read_pomdp(&path).unwrap(), m);
    }
}

#[test]
fn classes_round_trip_with_flags() {
    let inst = make_hadamard_instance(2, false).unwrap();
    let text = class_to_string(&inst.classes);
    let back = class_from_str(&text).unwrap();
    assert_eq!(back.functions(), inst.classes.functions());
    assert_eq!(back.auxiliary(), inst.classes.auxiliary());
    assert_eq!(back.qstar_index(), inst.classes.qstar_index());

    let lock = make_combination_lock(2, 2).unwrap();
    let classes = decoy_class(&Oracle::new(&lock).unwrap(), 3, 4).unwrap();
    let back = class_from_str(&class_to_string(&classes)).unwrap();
    assert_eq!(back.functions(), classes.functions());
    assert_eq!(back.complete(), Some(true));
}

#[test]
fn malformed_files_are_parse_errors() {
    assert!(matches!(pomdp_from_str("{\"H\": 2"), Err(Error::Parse(_))));
    let lock = make_combination_lock(2, 2).unwrap();
    let text = pomdp_to_string(&lock).replacen("\"H\"", "\"horizon_typo\"", 1);
    assert!(pomdp_from_str(&text).is_err());
}
