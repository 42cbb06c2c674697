use mrcad::dataset::{
    annotate, append_record, build_splits, read_records, to_jsonl, validate_rollout, write_records, DatasetError,
    SplitSpec, ValidateOptions, SUCCESS_THRESHOLD,
};
use mrcad::eval::{build_benchmark, Group};
use mrcad::metric::MetricConfig;
use mrcad::synth::{self, DesignOptions};

#[test]
fn write_then_append_then_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let records = synth::corpus(11, &[2, 1], 3, 1, &DesignOptions::default());
    let (head, tail) = records.split_at(2);
    write_records(&path, head).unwrap();
    for r in tail {
        append_record(&path, r).unwrap();
    }
    assert_eq!(read_records(&path).unwrap(), records);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), to_jsonl(&records));
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let mut text = to_jsonl(&synth::corpus(1, &[1], 2, 0, &DesignOptions::default()));
    text.push_str("{not json}\n");
    std::fs::write(&path, text).unwrap();
    match read_records(&path) {
        Err(DatasetError::Json { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a json error, got {other:?}"),
    }
}

#[test]
fn generated_corpus_validates_and_feeds_the_benchmark() {
    let metric = MetricConfig::default();
    let opts = DesignOptions { min_curves: 3, ..DesignOptions::default() };
    let records = synth::corpus(3, &[4, 2], 3, 1, &opts);
    for r in &records {
        let issues = validate_rollout(r, &ValidateOptions::default());
        assert!(issues.is_empty(), "{}: {issues:?}", r.id());
    }
    let annotated = annotate(records, &metric, SUCCESS_THRESHOLD).unwrap();
    let spec = SplitSpec::default();
    let splits = build_splits(&annotated, &spec);
    assert_eq!(splits.iter().map(|s| s.successes).collect::<Vec<_>>().iter().sum::<usize>(), 6);
    let items = build_benchmark(&annotated, &spec, &metric);
    // only the design with four wins qualifies; its lost rollout contributes too
    assert!(items.iter().any(|i| i.group() == Group::Generation));
    assert!(items.iter().any(|i| i.group() == Group::Refinement));
    assert!(items.iter().all(|i| i.baseline(&metric) > 0.0));
    let ids: std::collections::BTreeSet<_> = items.iter().map(|i| &i.rollout_id).collect();
    assert_eq!(ids.len(), 5);
}
