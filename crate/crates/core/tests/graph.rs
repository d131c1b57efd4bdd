use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use curvgnn::{
    load_graph, make_lp_split, make_nc_split, normalize_adjacency, sample_non_edges, stochastic_block_model, stream, write_graph,
    Error, Graph, SbmConfig, SplitManifest, SplitPolicy, Stream,
};
use curvgnn_autodiff::Matrix;
use proptest::prelude::*;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("curvgnn-graph-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_files(name: &str, edges: &str, features: &str, labels: &str) -> PathBuf {
    let dir = scratch(name);
    fs::write(dir.join("edges.txt"), edges).unwrap();
    fs::write(dir.join("features.txt"), features).unwrap();
    fs::write(dir.join("labels.txt"), labels).unwrap();
    dir
}

fn load(dir: &Path) -> curvgnn::Result<(Graph, curvgnn::LoadStats)> {
    load_graph(&dir.join("edges.txt"), &dir.join("features.txt"), &dir.join("labels.txt"))
}

const FEATURES3: &str = "0 1 0\n1 0 1\n2 0.5 0.5\n";
const LABELS3: &str = "0 0\n1 1\n2 -1\n";

#[test]
fn loads_simple_files() {
    let dir = write_files("simple", "0 1\n1 2\n", FEATURES3, LABELS3);
    let (g, stats) = load(&dir).unwrap();
    assert_eq!(g.num_nodes, 3);
    assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    assert_eq!(g.feature_dim(), 2);
    assert_eq!(g.labels, vec![0, 1, -1]);
    assert_eq!(g.num_classes, 2);
    assert_eq!(g.features[[2, 0]], 0.5);
    assert_eq!(stats.edge_lines, 2);
}

#[test]
fn duplicates_and_self_loops_are_dropped() {
    let dir = write_files("dups", "0 1\n0 1\n1 0\n2 2\n", FEATURES3, LABELS3);
    let (g, stats) = load(&dir).unwrap();
    assert_eq!(g.edges, vec![(0, 1)]);
    assert_eq!(stats.edge_lines, 4);
    assert_eq!(stats.duplicate_edges, 2);
    assert_eq!(stats.self_loops, 1);
}

#[test]
fn parse_errors_name_file_and_line() {
    let cases = [
        ("range", "0 1\n1 7\n", FEATURES3, LABELS3, "edges.txt", 2),
        ("ragged", "0 1\n", "0 1 0\n1 0\n2 1 1\n", LABELS3, "features.txt", 2),
        ("label", "0 1\n", FEATURES3, "0 0\n1 cat\n", "labels.txt", 2),
        ("negative", "0 1\n", FEATURES3, "0 -3\n", "labels.txt", 1),
    ];
    for (name, e, f, l, file, line) in cases {
        let dir = write_files(name, e, f, l);
        match load(&dir) {
            Err(Error::Parse { path, line: got, .. }) => {
                assert!(path.ends_with(file), "{name}: {path:?}");
                assert_eq!(got, line, "{name}");
            }
            other => panic!("{name}: {other:?}"),
        }
    }
    let dir = scratch("missing");
    match load(&dir) {
        Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("features.txt")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn written_graphs_load_back() {
    let g = stochastic_block_model(&SbmConfig { nodes: 40, feature_dim: 9, ..SbmConfig::default() }).unwrap();
    let dir = scratch("roundtrip");
    write_graph(&g, &dir).unwrap();
    let (back, _) = load(&dir).unwrap();
    assert_eq!(back, g);
}

#[test]
fn normalization_examples() {
    let a = normalize_adjacency(2, &[(0, 1)]).unwrap();
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert_eq!(a.coefficient(i, j), Some(0.5));
    }
    let a = normalize_adjacency(1, &[]).unwrap();
    assert_eq!(a.coefficient(0, 0), Some(1.0));
    let a = normalize_adjacency(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
    assert_eq!(a.coefficient(0, 0), Some(0.25));
    for leaf in 1..4 {
        assert_eq!(a.coefficient(0, leaf), Some(1.0 / (4f64.sqrt() * 2f64.sqrt())));
        assert_eq!(a.coefficient(leaf, leaf), Some(0.5));
    }
    assert_eq!(a.coefficient(1, 2), None);
    assert_eq!(a.degrees, vec![4, 2, 2, 2]);
}

fn spectral_norm(m: &Matrix) -> f64 {
    let mut v = Matrix::from_elem((m.ncols(), 1), 1.0);
    let mut s = 0.0;
    for _ in 0..500 {
        let w = m.t().dot(&m.dot(&v));
        s = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w / s;
    }
    s.sqrt()
}

proptest! {
    #[test]
    fn coefficients_follow_degrees(pairs in proptest::collection::vec((0usize..12, 0usize..12), 0..40)) {
        let g = Graph::new(Matrix::zeros((12, 1)), pairs, vec![0; 12]).unwrap();
        let a = normalize_adjacency(12, &g.edges).unwrap();
        let mut deg = vec![1usize; 12];
        for &(u, v) in &g.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        prop_assert_eq!(&a.degrees, &deg);
        prop_assert_eq!(a.matrix.nnz(), 12 + 2 * g.edges.len());
        for i in 0..12 {
            let row: Vec<(usize, f64)> = a.matrix.row(i).collect();
            prop_assert_eq!(row[0].0, i);
            for (j, c) in row {
                prop_assert_eq!(c, 1.0 / ((deg[i] * deg[j]) as f64).sqrt());
                prop_assert_eq!(a.coefficient(j, i), Some(c));
            }
        }
        prop_assert!(spectral_norm(&a.matrix.to_dense()) <= 1.0 + 1e-9);
    }
}

fn labeled_graph(n: usize, classes: usize) -> Graph {
    Graph::new(Matrix::zeros((n, 2)), vec![], (0..n).map(|i| (i % classes) as i64).collect()).unwrap()
}

fn nc_parts(s: &SplitManifest) -> (&Vec<usize>, &Vec<usize>, &Vec<usize>) {
    match s {
        SplitManifest::Nc { train, val, test, .. } => (train, val, test),
        _ => panic!("not a node split"),
    }
}

#[test]
fn fractional_splits_respect_fractions() {
    let g = labeled_graph(1000, 4);
    let s = make_nc_split(&g, SplitPolicy::Fractional { train: 0.3, val: 0.1 }, 3).unwrap();
    let (tr, va, te) = nc_parts(&s);
    assert_eq!((tr.len(), va.len(), te.len()), (300, 100, 600));
    let all: HashSet<usize> = tr.iter().chain(va).chain(te).copied().collect();
    assert_eq!(all.len(), 1000);

    let s = make_nc_split(&g, SplitPolicy::Fractional { train: 0.7, val: 0.15 }, 3).unwrap();
    let (tr, va, te) = nc_parts(&s);
    assert_eq!((tr.len(), va.len(), te.len()), (700, 150, 150));
    assert_eq!(s, make_nc_split(&g, SplitPolicy::Fractional { train: 0.7, val: 0.15 }, 3).unwrap());
    assert_ne!(s, make_nc_split(&g, SplitPolicy::Fractional { train: 0.7, val: 0.15 }, 4).unwrap());
}

#[test]
fn planetoid_split_takes_twenty_per_class() {
    let g = labeled_graph(2000, 5);
    let s = make_nc_split(&g, SplitPolicy::StandardPlanetoid, 0).unwrap();
    let (tr, va, te) = nc_parts(&s);
    assert_eq!((tr.len(), va.len(), te.len()), (100, 500, 1000));
    for c in 0..5 {
        assert_eq!(tr.iter().filter(|&&i| g.labels[i] == c).count(), 20);
    }
    let sets: Vec<HashSet<usize>> = [tr, va, te].iter().map(|v| v.iter().copied().collect()).collect();
    assert!(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]));
}

#[test]
fn split_errors() {
    let g = Graph::new(Matrix::zeros((4, 1)), vec![], vec![0, 0, 2, -1]).unwrap();
    assert!(matches!(make_nc_split(&g, SplitPolicy::StandardPlanetoid, 0), Err(Error::Split(_))));
    let g = labeled_graph(10, 2);
    assert!(matches!(make_nc_split(&g, SplitPolicy::Fractional { train: 0.8, val: 0.5 }, 0), Err(Error::Split(_))));
}

#[test]
fn split_manifest_json_round_trip() {
    let g = stochastic_block_model(&SbmConfig { nodes: 60, ..SbmConfig::default() }).unwrap();
    for s in [make_nc_split(&g, SplitPolicy::Fractional { train: 0.5, val: 0.2 }, 1).unwrap(), make_lp_split(&g, 1).unwrap()] {
        let json = s.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.get("task").is_some() && v.get("seed").is_some() && v.get("train").is_some());
        assert_eq!(SplitManifest::from_json(&json).unwrap(), s);
    }
}

fn ring(n: usize, extra: usize) -> Graph {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.extend((0..extra).map(|i| (i, (i + n / 2) % n)));
    Graph::new(Matrix::zeros((n, 1)), edges, vec![0; n]).unwrap()
}

#[test]
fn link_split_partitions_edges() {
    let g = ring(100, 0);
    assert_eq!(g.edges.len(), 100);
    let s = make_lp_split(&g, 5).unwrap();
    let SplitManifest::Lp { train, val, test, neg_val, neg_test, .. } = &s else { panic!() };
    assert_eq!((train.len(), val.len(), test.len()), (85, 5, 10));
    assert_eq!((neg_val.len(), neg_test.len()), (5, 10));
    let train_set: HashSet<_> = train.iter().copied().collect();
    let edge_set = g.edge_set();
    for e in val.iter().chain(test) {
        assert!(!train_set.contains(e));
    }
    let negs: HashSet<_> = neg_val.iter().chain(neg_test).copied().collect();
    assert_eq!(negs.len(), 15);
    for e in &negs {
        assert!(e.0 < e.1 && !edge_set.contains(e));
    }
    assert_eq!(s, make_lp_split(&g, 5).unwrap());
}

#[test]
fn link_split_errors() {
    assert!(matches!(make_lp_split(&ring(10, 0), 0), Err(Error::Split(_))));
}

#[test]
fn negative_sampling_exhaustion() {
    let n = 8;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if (u, v) != (2, 5) {
                edges.push((u, v));
            }
        }
    }
    let exclude: HashSet<_> = edges.into_iter().collect();
    let mut rng = stream(0, Stream::Negatives);
    assert_eq!(sample_non_edges(n, &exclude, 1, &mut rng).unwrap(), vec![(2, 5)]);
    assert!(matches!(sample_non_edges(n, &exclude, 2, &mut rng), Err(Error::Sampling(_))));
}

proptest! {
    #[test]
    fn sampled_negatives_are_distinct_non_edges(seed in 0u64..1000, count in 1usize..60) {
        let g = ring(40, 10);
        let mut rng = stream(seed, Stream::Negatives);
        let out = sample_non_edges(40, &g.edge_set(), count, &mut rng).unwrap();
        prop_assert_eq!(out.len(), count);
        let set: HashSet<_> = out.iter().copied().collect();
        prop_assert_eq!(set.len(), count);
        for e in out {
            prop_assert!(e.0 < e.1 && !g.edge_set().contains(&e));
        }
    }
}

#[test]
fn row_normalization() {
    let mut g = Graph::new(Matrix::from_shape_vec((2, 2), vec![1.0, 3.0, 0.0, 0.0]).unwrap(), vec![], vec![0, 0]).unwrap();
    g.row_normalize_features();
    assert_eq!(g.features.row(0).to_vec(), vec![0.25, 0.75]);
    assert_eq!(g.features.row(1).to_vec(), vec![0.0, 0.0]);
}
