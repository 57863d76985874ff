use std::collections::BTreeSet;

use proptest::prelude::*;
use query2vec::corpus::{
    builtin_templates, generate_templated_workload, load_workload, split_train_test, Query, Workload, WorkloadFormat,
};

#[test]
fn full_benchmark_size() {
    let w = generate_templated_workload(&builtin_templates(), 200, 1).unwrap();
    assert_eq!(w.len(), 4200);
}

#[test]
fn same_seed_gives_identical_serialization() {
    let t = &builtin_templates()[..3];
    let a = generate_templated_workload(t, 50, 7).unwrap().to_jsonl();
    let b = generate_templated_workload(t, 50, 7).unwrap().to_jsonl();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 150);
}

#[test]
fn jsonl_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.jsonl");
    let w = generate_templated_workload(&builtin_templates()[..2], 3, 2).unwrap();
    std::fs::write(&path, w.to_jsonl()).unwrap();
    let back = load_workload(&path, WorkloadFormat::JsonLines).unwrap();
    assert_eq!(back.queries, w.queries);
}

#[test]
fn hundred_queries_split_85_15() {
    let w = Workload::new("w", (0..100).map(|i| Query::new(format!("q{i}"), "SELECT 1")).collect()).unwrap();
    let (train, test) = split_train_test(&w, 0.15, 3).unwrap();
    assert_eq!((train.len(), test.len()), (85, 15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_a_deterministic_partition(n in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let w = Workload::new("w", (0..n).map(|i| Query::new(format!("q{i}"), "SELECT 1")).collect()).unwrap();
        let (train, test) = split_train_test(&w, frac, seed).unwrap();
        let ids = |w: &Workload| w.queries.iter().map(|q| q.id.clone()).collect::<BTreeSet<_>>();
        let (a, b) = (ids(&train), ids(&test));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.union(&b).cloned().collect::<BTreeSet<_>>(), ids(&w));
        prop_assert_eq!(test.len(), (frac * n as f64).round() as usize);
        let (train2, test2) = split_train_test(&w, frac, seed).unwrap();
        prop_assert_eq!(train.queries, train2.queries);
        prop_assert_eq!(test.queries, test2.queries);
    }

    #[test]
    fn generated_labels_name_their_template(seed in any::<u64>(), n in 1usize..4) {
        let templates = builtin_templates();
        let w = generate_templated_workload(&templates, n, seed).unwrap();
        prop_assert_eq!(w.len(), templates.len() * n);
        for (i, q) in w.queries.iter().enumerate() {
            let t = &templates[i / n];
            prop_assert_eq!(q.label.as_deref(), Some(t.name.as_str()));
            prop_assert!(!q.text.trim().is_empty());
        }
    }
}
