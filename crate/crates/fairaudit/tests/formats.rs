use std::collections::BTreeMap;

use fairaudit::formats::{
    read_pool_csv, read_pool_jsonl, read_round_logs, read_score_cache, write_pool_csv,
    write_pool_jsonl, write_round_logs, write_score_cache, FormatError,
};
use fairaudit_core::blackbox::make_planted_bias_scorer;
use fairaudit_core::harness::{generate_synthetic_pool, run_audit, SyntheticSpec};
use fairaudit_core::{AuditExample, AuditPool, AuditSettings, PoolError, Sequential, Strategy};

use fairaudit::scoring::BatchOf;

fn synthetic(n: usize) -> AuditPool {
    generate_synthetic_pool(&SyntheticSpec {
        n,
        dim: 6,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .pool
}

#[test]
fn csv_round_trip_is_exact() {
    let pool = synthetic(1000);
    let mut buf = Vec::new();
    write_pool_csv(&pool, &mut buf).unwrap();
    let back = read_pool_csv(buf.as_slice()).unwrap();
    assert_eq!(back, pool);
    let mut again = Vec::new();
    write_pool_csv(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn jsonl_round_trip_keeps_text() {
    let mut ex: Vec<AuditExample> = synthetic(40).examples().to_vec();
    ex[3].text = Some("a comment, with \"quotes\"".into());
    let pool = AuditPool::new(ex).unwrap();
    let mut buf = Vec::new();
    write_pool_jsonl(&pool, &mut buf).unwrap();
    assert_eq!(read_pool_jsonl(buf.as_slice()).unwrap(), pool);
    let mut csv = Vec::new();
    write_pool_csv(&pool, &mut csv).unwrap();
    assert_eq!(read_pool_csv(csv.as_slice()).unwrap(), pool);
}

#[test]
fn duplicate_ids_are_rejected() {
    let text = "id,group,label,f0\nID7,0,1,0.5\nID8,1,0,0.1\nID7,1,1,0.2\n";
    match read_pool_csv(text.as_bytes()) {
        Err(FormatError::Pool(PoolError::DuplicateId(id))) => assert_eq!(id, "ID7"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn parse_errors_carry_the_line() {
    let text = "id,group,label,f0,f1\na,0,1,0.5,1\nb,0,1,oops,1\n";
    match read_pool_csv(text.as_bytes()) {
        Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let text = "id,group,label,f0\na,2,1,0.5\n";
    assert!(matches!(
        read_pool_csv(text.as_bytes()),
        Err(FormatError::Parse { line: 2, .. })
    ));
    assert!(matches!(
        read_pool_csv("id,label,group,f0\n".as_bytes()),
        Err(FormatError::Parse { line: 1, .. })
    ));
    assert!(matches!(
        read_pool_csv("id,group,label,f1\n".as_bytes()),
        Err(FormatError::Parse { line: 1, .. })
    ));
    assert!(matches!(
        read_pool_jsonl("{\"id\":\"a\"}\n".as_bytes()),
        Err(FormatError::Parse { line: 1, .. })
    ));
    assert!(matches!(
        read_pool_csv("id,group,label,f0,f1\na,0,1,0.5\n".as_bytes()),
        Err(FormatError::Pool(PoolError::InconsistentDimension { .. }))
    ));
}

#[test]
fn score_cache_round_trip_and_checks() {
    let table: BTreeMap<String, f64> = [("a".to_string(), 0.25), ("b".to_string(), 1.0)].into();
    let mut buf = Vec::new();
    write_score_cache(&table, &mut buf).unwrap();
    assert_eq!(read_score_cache(buf.as_slice()).unwrap(), table);
    assert!(read_score_cache("id,score\na,1.3\n".as_bytes()).is_err());
    assert!(read_score_cache("id,score\na,0.1\na,0.2\n".as_bytes()).is_err());
}

#[test]
fn round_logs_read_back() {
    let syn = generate_synthetic_pool(&SyntheticSpec {
        n: 400,
        dim: 4,
        seed: 2,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut s = AuditSettings {
        strategy: Strategy::BafaDisagreement,
        budget: 40,
        candidates: 100,
        ..AuditSettings::default()
    };
    s.cerm.epochs = 2;
    s.cerm.steps_per_epoch = 10;
    let oracle = BatchOf(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let logs = run_audit(&syn.pool, oracle, &s, 0, Some(syn.truth), &Sequential).unwrap();
    let mut buf = Vec::new();
    write_round_logs(&logs, &mut buf).unwrap();
    let back = read_round_logs(buf.as_slice()).unwrap();
    assert_eq!(back.len(), logs.len());
    for (a, b) in logs.iter().zip(&back) {
        assert_eq!(a.round, b.round);
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.batch, b.batch);
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.error, b.error);
        assert_eq!(a.certificate.as_ref().map(|c| c.width), b.width);
    }
}
