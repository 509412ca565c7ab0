use proptest::prelude::*;
use tsqr_core::tree::{build_tree_over, domain_groups};
use tsqr_core::{build_tree, groups_from_topology, inter_cluster_edges, load_topology, Error, Topology, TreeShape};

const SHAPES: [TreeShape; 3] = [TreeShape::Flat, TreeShape::Binary, TreeShape::Hierarchical];

#[test]
fn three_single_domain_sites() {
    let t = build_tree(&Topology::uniform(3, 1).unwrap(), TreeShape::Hierarchical);
    assert_eq!(inter_cluster_edges(&t), 2);
}

#[test]
fn hierarchical_uses_c_minus_one_inter_edges() {
    for c in 1..=8 {
        for d in 1..=9 {
            let t = build_tree(&Topology::uniform(c, d).unwrap(), TreeShape::Hierarchical);
            assert_eq!(t.inter_cluster_edges(), c - 1, "c={c} d={d}");
            assert_eq!(t.intra_cluster_edges(), c * (d - 1), "c={c} d={d}");
        }
    }
}

#[test]
fn interleaved_ranks_worst_case() {
    let topo = Topology::uniform(2, 2).unwrap();
    let round_robin = topo.clone().with_placement(vec![0, 1, 0, 1]).unwrap();
    let worst = topo.with_placement(vec![0, 1, 1, 0]).unwrap();
    assert_eq!(build_tree(&round_robin, TreeShape::Binary).inter_cluster_edges(), 2);
    assert_eq!(build_tree(&worst, TreeShape::Binary).inter_cluster_edges(), 3);
    assert_eq!(build_tree(&worst, TreeShape::Hierarchical).inter_cluster_edges(), 1);
}

#[test]
fn flat_single_cluster_has_no_inter_edges() {
    let t = build_tree(&Topology::uniform(1, 6).unwrap(), TreeShape::Flat);
    assert_eq!(t.inter_cluster_edges(), 0);
}

#[test]
fn groups() {
    let g = groups_from_topology(&Topology::uniform(2, 2).unwrap());
    assert_eq!(g[0].members, vec![0, 1]);
    assert_eq!(g[1].members, vec![2, 3]);
    assert_eq!(groups_from_topology(&Topology::uniform(1, 5).unwrap()).len(), 1);
    let grid = groups_from_topology(&Topology::grid5000());
    assert_eq!(grid.len(), 4);
    assert!(grid.iter().all(|g| g.members.len() == 64));
}

#[test]
fn grid5000_preset_values() {
    let t = Topology::preset("grid5000").unwrap();
    let orsay_toulouse = t.cluster_link(0, 1);
    assert!((orsay_toulouse.latency - 7.97e-3).abs() < 1e-15);
    let orsay = t.cluster_link(0, 0);
    assert!((orsay.latency - 0.07e-3).abs() < 1e-18);
    assert!((orsay.bandwidth - 890e6 / 8.0).abs() < 1e-6);
}

#[test]
fn topology_files() {
    let one = load_topology("cluster a domains=3 latency=1e-5 bandwidth=1e9\n").unwrap();
    assert_eq!(one.cluster_count(), 1);
    assert_eq!(one.flop_rate(0).unwrap(), 1.0);

    let neg = load_topology("cluster a domains=3 latency=-1 bandwidth=1e9\n");
    assert!(matches!(neg, Err(Error::Parse { line: 1, .. })));

    let asym = "cluster a domains=1 latency=1 bandwidth=1\n\
                cluster b domains=1 latency=1 bandwidth=1\n\
                link a b latency=2 bandwidth=1\n\
                link b a latency=3 bandwidth=1\n";
    assert!(matches!(load_topology(asym), Err(Error::Parse { line: 4, .. })));
}

#[test]
fn subsets_and_groups() {
    let topo = Topology::uniform(2, 4).unwrap();
    let t = build_tree_over(&topo, &[5, 1, 6], TreeShape::Hierarchical).unwrap();
    assert_eq!(t.leaf_count(), 3);
    assert_eq!(t.inter_cluster_edges(), 1);
    assert_eq!(domain_groups(&topo, 2).unwrap(), vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
}

proptest! {
    #[test]
    fn tree_shape_invariants(c in 1usize..6, d in 1usize..12, shape_ix in 0usize..3) {
        let topo = Topology::uniform(c, d).unwrap();
        let shape = SHAPES[shape_ix];
        let t = build_tree(&topo, shape);
        let p = c * d;
        prop_assert_eq!(t.leaf_count(), p);
        prop_assert_eq!(t.internal_count(), p - 1);
        let mut leaves = t.leaf_domains();
        leaves.sort_unstable();
        prop_assert_eq!(leaves, (0..p).collect::<Vec<_>>());
        prop_assert!(t.inter_cluster_edges() >= c - 1);
        prop_assert_eq!(&t, &build_tree(&topo, shape));
    }

    #[test]
    fn hierarchical_is_minimal_for_any_placement(seed in any::<u64>(), c in 2usize..5, d in 1usize..5) {
        // Shuffle placement deterministically from the seed.
        let p = c * d;
        let mut placement: Vec<usize> = (0..p).map(|i| i / d).collect();
        let mut s = seed;
        for i in (1..p).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            placement.swap(i, (s >> 33) as usize % (i + 1));
        }
        let topo = Topology::uniform(c, d).unwrap().with_placement(placement).unwrap();
        prop_assert_eq!(build_tree(&topo, TreeShape::Hierarchical).inter_cluster_edges(), c - 1);
        prop_assert!(build_tree(&topo, TreeShape::Binary).inter_cluster_edges() >= c - 1);
    }
}
