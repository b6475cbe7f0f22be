//! Statistical checks on generated graphs and partition quality.

use entropart::datagen::generate;
use entropart::partition::{coarsen, partition, WeightedGraph};
use entropart::{EdgeWeights, GenSpec, PartitionerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec(seed: u64) -> GenSpec {
    GenSpec {
        num_nodes: 6000,
        feature_dim: 8,
        seed,
        ..GenSpec::default()
    }
}

#[test]
fn generated_homophily_matches_target() {
    for seed in 0..3 {
        let s = spec(seed);
        let ds = generate(&s).unwrap();
        let g = &ds.graph;
        let same = g
            .edges()
            .filter(|&(u, v)| ds.labels.class_of(u) == ds.labels.class_of(v))
            .count();
        let h = same as f64 / g.num_edges() as f64;
        assert!((h - s.homophily).abs() <= 0.05, "seed {seed}: homophily {h}");
    }
}

#[test]
fn generated_class_frequencies_match_target() {
    for seed in 0..3 {
        let s = spec(seed);
        let ds = generate(&s).unwrap();
        let mut counts = vec![0usize; s.num_classes];
        for v in 0..s.num_nodes as u32 {
            counts[ds.labels.class_of(v) as usize] += 1;
        }
        for (c, &target) in s.class_proportions.iter().enumerate() {
            let got = counts[c] as f64 / s.num_nodes as f64;
            assert!((got - target).abs() <= 0.02, "seed {seed} class {c}: {got} vs {target}");
        }
    }
}

#[test]
fn generated_average_degree_is_close() {
    let s = spec(7);
    let ds = generate(&s).unwrap();
    let avg = ds.graph.num_edges() as f64 / s.num_nodes as f64;
    assert!((avg - s.avg_degree).abs() / s.avg_degree < 0.1, "avg degree {avg}");
}

#[test]
fn coarsening_terminates_within_forty_levels() {
    let ds = generate(&GenSpec {
        num_nodes: 10_000,
        feature_dim: 4,
        ..GenSpec::default()
    })
    .unwrap();
    let base = WeightedGraph::from_graph(&ds.graph, &EdgeWeights::unit(&ds.graph));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cur = base;
    let mut levels = 0;
    while cur.num_nodes() > 100 {
        let next = coarsen(&cur, None, &mut rng).graph;
        levels += 1;
        assert!(levels <= 40, "still {} nodes after 40 levels", next.num_nodes());
        if next.num_nodes() == cur.num_nodes() {
            break;
        }
        assert_eq!(next.total_node_weight(), 10_000);
        cur = next;
    }
}

#[test]
fn planted_communities_stay_together() {
    for seed in 0..5 {
        let s = GenSpec {
            num_nodes: 2000,
            num_classes: 4,
            class_proportions: vec![0.25; 4],
            homophily: 0.95,
            avg_degree: 10.0,
            feature_dim: 4,
            seed,
            ..GenSpec::default()
        };
        let ds = generate(&s).unwrap();
        let cfg = PartitionerConfig {
            num_parts: 4,
            seed,
            ..PartitionerConfig::default()
        };
        let a = partition(&ds.graph, &EdgeWeights::unit(&ds.graph), &cfg).unwrap();
        // nodes sharing the majority part of their community
        let mut table = [[0usize; 4]; 4];
        for v in 0..s.num_nodes as u32 {
            table[ds.labels.class_of(v) as usize][a.part(v) as usize] += 1;
        }
        let together: usize = table.iter().map(|row| *row.iter().max().unwrap()).sum();
        let frac = together as f64 / s.num_nodes as f64;
        assert!(frac >= 0.9, "seed {seed}: only {frac:.3} co-partitioned");
    }
}
