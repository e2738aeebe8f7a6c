//! Bundle and trace round trips, schema errors, LINQS ingest.

use std::fs;
use std::path::Path;

use edgepoison::attack::{dice_attack, run_attack, AttackConfig, AttackTrace, AttackMethod};
use edgepoison::graph::generate_sbm;
use edgepoison::io::*;
use edgepoison::surrogate::Architecture;
use edgepoison::Error;
use tempfile::tempdir;

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn tiny_bundle(dir: &Path, edges: &str) {
    write(dir, META_FILE, r#"{"num_nodes": 4, "num_classes": 2, "feature_dim": 2, "feature_storage": "dense"}"#);
    write(dir, EDGES_FILE, edges);
    write(dir, DENSE_FEATURES_FILE, "1,0\n0,1\n1,1\n0.5,0\n");
    write(dir, LABELS_FILE, "node,label\n0,0\n1,0\n2,1\n3,1\n");
}

#[test]
fn dense_and_sparse_bundles_round_trip() {
    for (n, d) in [(40, 4), (60, 30)] {
        let (g, labels) = generate_sbm(n, d.min(4), 0.3, 0.05, 2).unwrap();
        let dir = tempdir().unwrap();
        save_dataset(dir.path(), &g, &labels, 11).unwrap();
        let (g2, l2) = load_dataset(dir.path()).unwrap();
        assert_eq!(g, g2);
        assert_eq!(labels.labels, l2.labels);
        assert_eq!((labels.train.clone(), labels.test.clone()), (l2.train, l2.test));
        let splits: Splits = read_json(&dir.path().join(SPLITS_FILE)).unwrap();
        assert_eq!(splits.seed, 11);
    }
}

#[test]
fn sparse_storage_is_chosen_for_sparse_features() {
    let edges: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
    let x = edgepoison::Csr::from_triplets(10, 50, (0..10).map(|i| (i, i, 1.0)).collect()).unwrap();
    let g = edgepoison::Graph::new(10, &edges, x).unwrap();
    let labels = edgepoison::LabelData::new((0..10).map(|i| i % 2).collect(), 2, vec![0, 1], (2..10).collect()).unwrap();
    let dir = tempdir().unwrap();
    save_dataset(dir.path(), &g, &labels, 0).unwrap();
    let meta: Meta = read_json(&dir.path().join(META_FILE)).unwrap();
    assert_eq!(meta.feature_storage, FeatureStorage::Sparse);
    assert!(dir.path().join(SPARSE_FEATURES_FILE).exists());
    assert_eq!(load_dataset(dir.path()).unwrap().0, g);
}

#[test]
fn missing_splits_fall_back_to_a_seeded_stratified_split() {
    let dir = tempdir().unwrap();
    tiny_bundle(dir.path(), "src,dst\n0,1\n1,2\n2,3\n");
    let (_, a) = load_dataset_with_seed(dir.path(), 4).unwrap();
    let (_, b) = load_dataset_with_seed(dir.path(), 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.train.len() + a.test.len(), 4);
}

#[test]
fn edge_file_errors_are_typed() {
    let cases: [(&str, &str); 5] = [
        ("5,5\n", "SelfLoopInInput"),
        ("0,0\n", "SelfLoopInInput"),
        ("0,1\n0,1\n", "DuplicateEdge"),
        ("0,9\n", "IndexOutOfRange"),
        ("2,1\n", "SchemaError"),
    ];
    for (edges, kind) in cases {
        let dir = tempdir().unwrap();
        tiny_bundle(dir.path(), edges);
        let err = load_dataset(dir.path()).unwrap_err();
        // "5,5" on 4 nodes is both out of range and a self-loop; either is acceptable.
        if edges == "5,5\n" {
            assert!(matches!(err, Error::SelfLoopInInput(5) | Error::IndexOutOfRange { .. }), "{err}");
        } else {
            assert_eq!(err.kind(), kind, "{edges:?}: {err}");
        }
    }
}

#[test]
fn self_loop_within_range_is_rejected() {
    let dir = tempdir().unwrap();
    tiny_bundle(dir.path(), "src,dst\n0,1\n3,3\n");
    assert!(matches!(load_dataset(dir.path()), Err(Error::SelfLoopInInput(3))));
}

#[test]
fn schema_errors_carry_file_and_line() {
    let dir = tempdir().unwrap();
    tiny_bundle(dir.path(), "src,dst\n0,1\n1,x\n");
    match load_dataset(dir.path()) {
        Err(Error::Schema { file, line, .. }) => {
            assert!(file.ends_with(EDGES_FILE));
            assert_eq!(line, 3);
        }
        other => panic!("{other:?}"),
    }
    let dir = tempdir().unwrap();
    tiny_bundle(dir.path(), "0,1\n");
    write(dir.path(), DENSE_FEATURES_FILE, "1,0\n0,1\n1\n0,0\n");
    assert_eq!(load_dataset(dir.path()).unwrap_err().kind(), "SchemaError");
}

fn small_attack() -> (edgepoison::Graph, edgepoison::LabelData, edgepoison::Graph, AttackTrace) {
    let (g, labels) = generate_sbm(50, 2, 0.2, 0.03, 5).unwrap();
    let mut cfg = AttackConfig::new(Architecture::Gcn, 3);
    cfg.budget = Some(6);
    cfg.train.epochs = 40;
    let (p, trace) = run_attack(&g, &labels, &cfg).unwrap();
    (g, labels, p, trace)
}

#[test]
fn poisoned_bundle_round_trips() {
    let (g, labels, poisoned, trace) = small_attack();
    let dir = tempdir().unwrap();
    save_poisoned(dir.path(), &g, &poisoned, &labels, &trace, 0).unwrap();
    let text = fs::read_to_string(dir.path().join(PERTURBATIONS_FILE)).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(text.lines().next().unwrap(), PERTURBATION_HEADER);
    let back = load_poisoned(dir.path()).unwrap();
    assert_eq!(back.clean, g);
    assert_eq!(back.poisoned, poisoned);
    assert_eq!(back.trace, trace);
    assert_eq!(load_trace(&dir.path().join(PERTURBATIONS_FILE)).unwrap(), trace);
    assert_eq!(load_trace(dir.path()).unwrap(), trace);
}

#[test]
fn empty_trace_writes_header_only() {
    let (g, labels) = generate_sbm(30, 2, 0.2, 0.03, 6).unwrap();
    let (p, trace) = dice_attack(&g, &labels, 0, 0).unwrap();
    assert_eq!(trace.method, AttackMethod::Dice);
    assert_eq!(p, g);
    let dir = tempdir().unwrap();
    save_poisoned(dir.path(), &g, &p, &labels, &trace, 0).unwrap();
    let text = fs::read_to_string(dir.path().join(PERTURBATIONS_FILE)).unwrap();
    assert_eq!(text, format!("{PERTURBATION_HEADER}\n"));
    assert_eq!(load_poisoned(dir.path()).unwrap().poisoned, g);
}

#[test]
fn tampered_traces_are_detected() {
    let (g, labels, poisoned, trace) = small_attack();
    let dir = tempdir().unwrap();
    save_poisoned(dir.path(), &g, &poisoned, &labels, &trace, 0).unwrap();
    let path = dir.path().join(PERTURBATIONS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines.pop();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert_eq!(load_poisoned(dir.path()).unwrap_err().kind(), "ReplayMismatch");

    let dir = tempdir().unwrap();
    save_poisoned(dir.path(), &g, &poisoned, &labels, &trace, 0).unwrap();
    let edges = dir.path().join(EDGES_FILE);
    let mut text = fs::read_to_string(&edges).unwrap();
    let first_data = text.lines().nth(1).unwrap().to_string() + "\n";
    text = text.replacen(&first_data, "", 1);
    fs::write(&edges, text).unwrap();
    assert_eq!(load_poisoned(dir.path()).unwrap_err().kind(), "ReplayMismatch");

    let mut bad = trace.clone();
    bad.records[0].action = match bad.records[0].action {
        edgepoison::attack::Action::Add => edgepoison::attack::Action::Remove,
        edgepoison::attack::Action::Remove => edgepoison::attack::Action::Add,
    };
    let dir = tempdir().unwrap();
    assert_eq!(save_poisoned(dir.path(), &g, &poisoned, &labels, &bad, 0).unwrap_err().kind(), "ReplayMismatch");
}

#[test]
fn floats_round_trip_through_text() {
    for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 6.02214076e23, -0.7443248, 5e-324] {
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }
}

#[test]
fn linqs_ingest_builds_a_loadable_bundle() {
    let raw = tempdir().unwrap();
    write(
        raw.path(),
        "toy.content",
        "p10\t1\t0\t0\tTheory\np20\t0\t1\t0\tAI\np30\t0\t0\t1\tTheory\np40\t1\t1\t0\tML\n",
    );
    write(raw.path(), "toy.cites", "p10\tp20\np20\tp10\np20\tp30\np30\tp30\np40\tp99\np10\tp40\n");
    let out = tempdir().unwrap();
    let summary = ingest_linqs(raw.path(), out.path(), 1).unwrap();
    assert_eq!(summary.num_nodes, 4);
    assert_eq!(summary.class_names, vec!["AI", "ML", "Theory"]);
    assert_eq!(summary.raw_citation_lines, 6);
    assert_eq!(summary.undirected_edges, 3);
    assert_eq!(summary.dropped_self_loops, 1);
    assert_eq!(summary.dropped_unknown_ids, 1);
    assert_eq!(summary.duplicate_citations, 1);
    let (g, l) = load_dataset(out.path()).unwrap();
    assert_eq!(g.edge_count(), 3);
    assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && g.has_edge(0, 3));
    assert_eq!(l.labels, vec![2, 0, 2, 1]);
    assert_eq!(g.feature_dim(), 3);
}

#[test]
fn trajectory_csv_has_expected_columns() {
    let (_, _, _, trace) = small_attack();
    let dir = tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let points = edgepoison::diagnostics::homophily_trajectory(&trace);
    write_trajectory(&path, &points).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
    assert_eq!(text.lines().count(), trace.records.len() + 2);
}
