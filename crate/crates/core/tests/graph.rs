use areal_sir::{AdjacencyGraph, Error};
use proptest::prelude::*;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{:05}", 45001 + 2 * i)).collect()
}

/// A random connected graph: a random tree plus extra random edges, some duplicated or reversed.
fn random_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..40).prop_flat_map(|n| {
        let parents = (1..n).map(|i| 0..i).collect::<Vec<_>>();
        let extra = prop::collection::vec((0..n, 0..n), 0..3 * n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            (n, edges)
        })
    })
}

fn build(n: usize, edges: &[(usize, usize)]) -> AdjacencyGraph {
    let ids = ids(n);
    let named: Vec<(String, String)> = edges.iter().map(|&(a, b)| (ids[a].clone(), ids[b].clone())).collect();
    AdjacencyGraph::build(&named, &ids).unwrap()
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_and_irreflexive((n, edges) in random_edges()) {
        let g = build(n, &edges);
        let mut m = vec![vec![0u8; n]; n];
        for i in 0..n {
            prop_assert!(g.n_neighbors(i) >= 1);
            prop_assert!(g.neighbors(i).windows(2).all(|w| w[0] < w[1]));
            for &k in g.neighbors(i) {
                m[i][k] = 1;
            }
        }
        for i in 0..n {
            prop_assert_eq!(m[i][i], 0);
            for k in 0..n {
                prop_assert_eq!(m[i][k], m[k][i]);
            }
        }
        prop_assert_eq!(g.n_components(), 1);
    }

    #[test]
    fn lag_sums_count_each_edge_from_both_ends((n, edges) in random_edges(), counts in prop::collection::vec(0u32..10_000, 40)) {
        let g = build(n, &edges);
        let y: Vec<f64> = counts[..n].iter().map(|&c| c as f64).collect();
        let total: f64 = (0..n).map(|i| g.neighbor_lag_sum(&y, i).unwrap()).sum();
        let by_edges: f64 = g.edges().map(|(a, b)| y[a] + y[b]).sum();
        prop_assert_eq!(total, by_edges);
        let by_degree: f64 = (0..n).map(|k| g.n_neighbors(k) as f64 * y[k]).sum();
        prop_assert_eq!(total, by_degree);
    }

    #[test]
    fn lag_sums_are_permutation_equivariant((n, edges) in random_edges(), seed in any::<u64>()) {
        let g = build(n, &edges);
        // perm[new] = old
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let old_ids = ids(n);
        let new_ids: Vec<String> = perm.iter().map(|&o| old_ids[o].clone()).collect();
        let named: Vec<(String, String)> = edges.iter().map(|&(a, b)| (old_ids[a].clone(), old_ids[b].clone())).collect();
        let h = AdjacencyGraph::build(&named, &new_ids).unwrap();
        let y: Vec<f64> = (0..n).map(|i| (i * i % 17) as f64).collect();
        let y_new: Vec<f64> = perm.iter().map(|&o| y[o]).collect();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(h.neighbor_lag_sum(&y_new, new).unwrap(), g.neighbor_lag_sum(&y, old).unwrap());
        }
    }
}

#[test]
fn lag_sum_examples() {
    let path = AdjacencyGraph::build(&[("A", "B"), ("B", "C")], &["A".into(), "B".into(), "C".into()]).unwrap();
    assert_eq!(path.neighbor_lag_sum(&[5.0, 7.0, 11.0], 1).unwrap(), 16.0);
    assert_eq!(path.neighbor_lag_sum(&[0.0; 3], 2).unwrap(), 0.0);
    assert!(matches!(path.neighbor_lag_sum(&[0.0; 3], 3), Err(Error::IndexOutOfRange { .. })));
    let ids = ids(4);
    let cycle = AdjacencyGraph::build(&[(&ids[0], &ids[1]), (&ids[1], &ids[2]), (&ids[2], &ids[3]), (&ids[3], &ids[0])], &ids).unwrap();
    assert_eq!(cycle.neighbors(0), &[1, 3]);
    assert_eq!(cycle.neighbor_lag_sum(&[1.0, 2.0, 3.0, 4.0], 0).unwrap(), 6.0);
}

#[test]
fn build_errors() {
    let abc: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
    assert!(matches!(AdjacencyGraph::build(&[("A", "B")], &abc), Err(Error::IslandArea(id)) if id == "C"));
    assert!(matches!(AdjacencyGraph::build(&[("A", "D"), ("B", "C")], &abc), Err(Error::UnknownAreaId(id)) if id == "D"));
    assert!(matches!(AdjacencyGraph::build(&[("A", "A"), ("B", "C")], &abc), Err(Error::SelfLoop(_))));
    let dup = AdjacencyGraph::build(&[("A", "B"), ("B", "A")], &abc[..2]).unwrap();
    assert_eq!((dup.neighbors(0), dup.neighbors(1)), (&[1][..], &[0][..]));
}

#[test]
fn csv_round_trip() {
    let ids = ids(6);
    let edges: Vec<(String, String)> = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]
        .map(|(a, b)| (ids[a].clone(), ids[b].clone()))
        .to_vec();
    let g = AdjacencyGraph::build(&edges, &ids).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adjacency.csv");
    g.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("fips_a,fips_b\n"));
    assert_eq!(AdjacencyGraph::from_csv(&path, &ids).unwrap(), g);
}
