use coco_core::harness::output::{write_eval_csv, write_trajectory_csv, EVAL_HEADER, TRAJECTORY_HEADER};
use coco_core::harness::{run_simulation, PolicyKind, SimConfig};
use coco_core::CocoError;

fn small(policy: PolicyKind) -> SimConfig {
    let mut c = SimConfig::desk_mog().with_policy(policy);
    c.recruitment_rounds = 3;
    c.batch_size = 2;
    c.user_horizon = 3;
    c.smc.particles = 30;
    c
}

#[test]
fn csv_layout() {
    let out = run_simulation(&small(PolicyKind::NpmTs)).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &out).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
    // 3 batches × 2 users × 3 steps
    assert_eq!(lines.clone().count(), 18);
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0].parse::<usize>().unwrap(), i + 1);
        assert!(fields[3].contains('e'));
    }
    let mut buf = Vec::new();
    write_eval_csv(&mut buf, &out).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some(EVAL_HEADER));
}

#[test]
fn regret_series_are_consistent() {
    let out = run_simulation(&small(PolicyKind::Gids)).unwrap();
    let steps = out.ledger.steps();
    let bayes = out.ledger.bayes_regret();
    let mut acc = 0.0;
    for (s, b) in steps.iter().zip(&bayes) {
        assert!(s.regret_expected() >= 0.0);
        acc += s.regret_expected();
        assert!((acc - b).abs() < 1e-12);
    }
    let mtr_total: f64 = out.ledger.mtr_increments().iter().sum();
    let oracle_total: f64 = out.ledger.oracle_steps().iter().map(|s| s.regret_expected()).sum();
    // MTR = algorithm regret − oracle regret, step by step
    assert!((mtr_total - (acc - oracle_total)).abs() < 1e-9);
}

#[test]
fn same_seed_same_ledger() {
    let c = small(PolicyKind::OracleTs);
    let a = run_simulation(&c).unwrap();
    let b = run_simulation(&c).unwrap();
    assert_eq!(a.ledger, b.ledger);
    let other = run_simulation(&c.with_seed(c.seed + 1)).unwrap();
    assert_ne!(a.ledger, other.ledger);
}

#[test]
fn batched_updates_run() {
    let mut c = small(PolicyKind::NpmTs);
    c.update_every = 4;
    let out = run_simulation(&c).unwrap();
    assert_eq!(out.ledger.steps().len(), 18);
}

#[test]
fn unknown_key_is_config_error() {
    let err = SimConfig::from_json_str(r#"{"polcy": "gids"}"#).unwrap_err();
    match err {
        CocoError::Config { field, .. } => assert_eq!(field, "polcy"),
        other => panic!("unexpected {other:?}"),
    }
}
