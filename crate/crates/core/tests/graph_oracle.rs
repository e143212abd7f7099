mod common;

use std::fs;
use std::path::PathBuf;

use common::{brute_force_edges, graph_edges, random_corpus, seeded};
use connhs::corpus::{generate_synthetic, load_bundle, read_bundle, SyntheticSpec};
use connhs::graph::{
    build_association_relation, build_graph, build_title_relation, count_matching_pairs, separate,
    AssociationFeature, MultiRelationalTextGraph, Relation, RelationAdjacency, ThresholdConfig,
};
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

#[test]
fn golden_bundle_matches_listing() {
    let corpus = load_bundle(data("golden6.jsonl")).unwrap();
    assert_eq!(corpus.len(), 6);
    assert_eq!(corpus.dim(), 3);
    assert_eq!(corpus.encoder(), "hand");
    let mut listing = Vec::new();
    for d in corpus.docs() {
        listing.push(format!("{} label {}", d.id, d.label.as_deref().unwrap_or("-")));
        listing.push(format!("{} split {}", d.id, serde_json::to_value(d.split).unwrap().as_str().unwrap()));
        listing.push(format!("{} content_vec {}", d.id, fmt_vec(&d.content_vec)));
        listing.push(format!("{} title_vec {}", d.id, fmt_vec(&d.title_vec)));
        for (k, v) in d.keyword_vecs.iter().enumerate() {
            listing.push(format!("{} keyword_vecs[{k}] {}", d.id, fmt_vec(v)));
        }
        for (k, v) in d.event_vecs.iter().enumerate() {
            listing.push(format!("{} event_vecs[{k}] {}", d.id, fmt_vec(v)));
        }
    }
    let expected = fs::read_to_string(data("golden6_listing.txt")).unwrap();
    assert_eq!(listing.join("\n") + "\n", expected);
}

#[test]
fn golden_bundle_reserializes_byte_for_byte() {
    let bytes = fs::read_to_string(data("golden6.jsonl")).unwrap();
    let corpus = read_bundle(bytes.as_bytes()).unwrap();
    assert_eq!(corpus.to_bundle_string().unwrap(), bytes);
}

#[test]
fn golden_graph_matches_checked_in_edges() {
    let corpus = load_bundle(data("golden6.jsonl")).unwrap();
    let graph = build_graph(&corpus, &ThresholdConfig::default()).unwrap();
    let mut listed = Vec::new();
    for r in Relation::ALL {
        for (i, j) in graph.adjacency(r).edges() {
            listed.push(format!("{} {} {}", r.name(), corpus.docs()[i].id, corpus.docs()[j].id));
        }
    }
    let expected = fs::read_to_string(data("golden6_edges.txt")).unwrap();
    assert_eq!(listed.join("\n") + "\n", expected);
    assert_eq!(graph.edge_counts(), [2, 2, 1]);
}

#[test]
fn count_matching_pairs_enumerates_all_pairs() {
    let mut rng = seeded(11);
    let a = common::rows(&common::random_matrix(3, 5, &mut rng));
    let b = common::rows(&common::random_matrix(4, 5, &mut rng));
    for rho in [-0.5, 0.0, 0.2, 0.6] {
        let mut expected = 0;
        for x in &a {
            for y in &b {
                if common::cos(x, y) > rho {
                    expected += 1;
                }
            }
        }
        assert_eq!(count_matching_pairs(&a, &b, rho).unwrap(), expected, "rho {rho}");
    }
}

#[test]
fn five_titles_match_all_pairs_thresholding() {
    let corpus = random_corpus(5, 4, &mut seeded(3));
    let adj = build_title_relation(&corpus, 0.7).unwrap();
    let oracle = brute_force_edges(&corpus, &ThresholdConfig::default());
    assert_eq!(adj.edges().into_iter().collect::<std::collections::BTreeSet<_>>(), oracle[0]);
}

#[test]
fn six_document_association_matches_oracle() {
    let corpus = random_corpus(6, 4, &mut seeded(5));
    let cfg = ThresholdConfig {
        rho_k: 0.6,
        gamma_k: 2,
        rho_e: 0.6,
        gamma_e: 2,
        ..Default::default()
    };
    let oracle = brute_force_edges(&corpus, &cfg);
    let kw = build_association_relation(&corpus, AssociationFeature::Keyword, 0.6, 2).unwrap();
    let ev = build_association_relation(&corpus, AssociationFeature::Event, 0.6, 2).unwrap();
    assert_eq!(kw.edges().into_iter().collect::<std::collections::BTreeSet<_>>(), oracle[1]);
    assert_eq!(ev.edges().into_iter().collect::<std::collections::BTreeSet<_>>(), oracle[2]);
}

#[test]
fn twenty_document_synthetic_counts_match_oracle() {
    let spec = SyntheticSpec {
        n_clusters: 4,
        docs_per_cluster: 5,
        dim: 8,
        seed: 2,
        ..Default::default()
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let cfg = ThresholdConfig::default();
    let graph = build_graph(&corpus, &cfg).unwrap();
    let oracle = brute_force_edges(&corpus, &cfg);
    assert_eq!(graph.edge_counts(), oracle.clone().map(|s| s.len()));
    assert_eq!(graph_edges(&graph), oracle);
}

#[test]
fn random_fifteen_node_views_match_inputs() {
    let mut rng = seeded(21);
    let nbs: [Vec<Vec<usize>>; 3] = std::array::from_fn(|_| common::random_neighbors(15, 0.3, &mut rng));
    let adjs = Relation::ALL.map(|r| RelationAdjacency::from_edges(r, 15, &common::edge_list(&nbs[r.index()])).unwrap());
    let graph = MultiRelationalTextGraph::new((0..15).map(|i| format!("n{i}")).collect(), adjs.clone()).unwrap();
    for view in separate(&graph) {
        let r = view.relation.index();
        for i in 0..15 {
            for j in 0..15 {
                assert_eq!(view.adjacency.has_edge(i, j), nbs[r][i].contains(&j));
            }
        }
        assert_eq!(view.adjacency, &adjs[r]);
    }
}

fn threshold_strategy() -> impl Strategy<Value = ThresholdConfig> {
    (-0.5f64..0.95, -0.5f64..0.95, -0.5f64..0.95, 0usize..6, 0usize..8).prop_map(|(t, e, k, ge, gk)| {
        ThresholdConfig {
            rho_t: t,
            rho_e: e,
            rho_k: k,
            gamma_e: ge,
            gamma_k: gk,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_equals_brute_force(seed in any::<u64>(), n in 1usize..16, cfg in threshold_strategy()) {
        let corpus = random_corpus(n, 5, &mut seeded(seed));
        let graph = build_graph(&corpus, &cfg).unwrap();
        prop_assert_eq!(graph_edges(&graph), brute_force_edges(&corpus, &cfg));
    }

    #[test]
    fn adjacencies_are_symmetric_and_irreflexive(seed in any::<u64>(), n in 1usize..16, cfg in threshold_strategy()) {
        let corpus = random_corpus(n, 5, &mut seeded(seed));
        let graph = build_graph(&corpus, &cfg).unwrap();
        for adj in graph.adjacencies() {
            for i in 0..n {
                prop_assert!(!adj.has_edge(i, i));
                for j in 0..n {
                    prop_assert_eq!(adj.has_edge(i, j), adj.has_edge(j, i));
                }
            }
        }
    }

    #[test]
    fn raising_thresholds_never_adds_edges(seed in any::<u64>(), cfg in threshold_strategy(), dr in 0.0f64..0.3, dg in 0usize..3) {
        let corpus = random_corpus(12, 5, &mut seeded(seed));
        let low = build_graph(&corpus, &cfg).unwrap();
        let raised = ThresholdConfig {
            rho_t: (cfg.rho_t + dr).min(1.0),
            rho_e: (cfg.rho_e + dr).min(1.0),
            rho_k: (cfg.rho_k + dr).min(1.0),
            gamma_e: cfg.gamma_e + dg,
            gamma_k: cfg.gamma_k + dg,
        };
        let high = build_graph(&corpus, &raised).unwrap();
        for r in Relation::ALL {
            for (i, j) in high.adjacency(r).edges() {
                prop_assert!(low.adjacency(r).has_edge(i, j));
            }
        }
    }
}
