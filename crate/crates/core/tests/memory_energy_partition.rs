use std::collections::BTreeMap;

use grow_core::energy::{energy_from_counters, EnergyCoefficients, EnergyCounters};
use grow_core::ingest::{generate_graph, generate_graph_with_labels, SyntheticGraphSpec};
use grow_core::memory::{DramConfig, MemRequest, MemoryModel, TrafficClass, LINE_BYTES};
use grow_core::partition::{
    balance_cap, build_hdn_lists, edge_cut, intra_cluster_fraction, partition_graph, relabel, HdnRanking, Partition,
};
use grow_core::CsrMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn request() -> impl Strategy<Value = (u64, u64, u64)> {
    // (address, bytes, issue gap)
    (0u64..1 << 20, 1u64..2048, 0u64..300)
}

fn completions(reqs: &[(u64, u64, u64)], bw: f64) -> (Vec<u64>, MemoryModel) {
    let mut mem = MemoryModel::new(DramConfig::default().with_bandwidth(bw)).unwrap();
    let mut issue = 0;
    let done = reqs
        .iter()
        .map(|&(addr, bytes, gap)| {
            issue += gap;
            mem.issue_read(MemRequest::new(TrafficClass::MissFetch, addr, bytes, issue)).unwrap()
        })
        .collect();
    (done, mem)
}

proptest! {
    #[test]
    fn doubling_bandwidth_never_delays_a_request(
        reqs in prop::collection::vec(request(), 1..60),
        bw in 0.5f64..256.0,
    ) {
        let (slow, _) = completions(&reqs, bw);
        let (fast, _) = completions(&reqs, 2.0 * bw);
        for (s, f) in slow.iter().zip(&fast) {
            prop_assert!(f <= s);
        }
    }

    #[test]
    fn channel_completes_in_issue_order_and_conserves_bytes(
        reqs in prop::collection::vec(request(), 1..60),
        bw in 0.5f64..256.0,
    ) {
        let (done, mem) = completions(&reqs, bw);
        prop_assert!(done.windows(2).all(|w| w[0] <= w[1]));
        let fetched: u64 = reqs
            .iter()
            .map(|&(addr, bytes, _)| MemoryModel::fetched_bytes(&MemRequest::new(TrafficClass::MissFetch, addr, bytes, 0)))
            .sum();
        let s = mem.stats();
        prop_assert_eq!(s.bytes_read, fetched);
        prop_assert_eq!(s.bytes_read, s.lines_read * LINE_BYTES);
        prop_assert!(s.effectual_bytes <= s.bytes_read);
        prop_assert!(s.is_consistent());
    }

    #[test]
    fn energy_components_scale_linearly(
        mac_ops in 0u64..1 << 40,
        sram_bytes in 0u64..1 << 40,
        dram_bytes in 0u64..1 << 40,
        cycles in 0u64..1 << 40,
        c in 0.0f64..100.0,
    ) {
        let counters = EnergyCounters { mac_ops, sram_bytes, dram_bytes, cycles };
        let base = EnergyCoefficients::default();
        let e = energy_from_counters(counters, &base);
        prop_assert!(e.is_exact_sum());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);

        let scaled = |f: &dyn Fn(&mut EnergyCoefficients)| {
            let mut k = base;
            f(&mut k);
            energy_from_counters(counters, &k)
        };
        let m = scaled(&|k| k.pj_per_mac *= c);
        prop_assert!(close(m.dynamic_mac_pj, c * e.dynamic_mac_pj));
        prop_assert_eq!(m.dynamic_dram_pj, e.dynamic_dram_pj);
        let s = scaled(&|k| k.pj_per_sram_byte *= c);
        prop_assert!(close(s.dynamic_sram_pj, c * e.dynamic_sram_pj));
        let d = scaled(&|k| k.pj_per_dram_byte *= c);
        prop_assert!(close(d.dynamic_dram_pj, c * e.dynamic_dram_pj));
        let l = scaled(&|k| k.leakage_watts *= c);
        prop_assert!(close(l.static_pj, c * e.static_pj));
        prop_assert!(m.is_exact_sum() && s.is_exact_sum() && d.is_exact_sum() && l.is_exact_sum());
    }

    #[test]
    fn relabeling_keeps_structure(n in 2usize..250, deg in 0.0f64..6.0, k in 1usize..8, seed in any::<u64>()) {
        let a = generate_graph(&SyntheticGraphSpec::power_law(n, deg.min((n - 1) as f64), seed)).unwrap();
        let p = partition_graph(&a, k.min(n), seed).unwrap();
        let r = relabel(&a, &p).unwrap();
        prop_assert_eq!(r.nnz(), a.nnz());
        prop_assert!(r.is_symmetric());
        prop_assert_eq!(degree_multiset(&r), degree_multiset(&a));
        prop_assert_eq!(component_sizes(&r), component_sizes(&a));
        for (i, j, v) in a.entries() {
            prop_assert_eq!(r.get(p.permutation()[i], p.permutation()[j]), Some(v));
        }
        let cap = balance_cap(n, p.num_clusters());
        prop_assert!(p.cluster_sizes().iter().all(|&s| s >= 1 && s <= cap));
    }

    #[test]
    fn hdn_lists_are_top_degree_nodes_of_each_cluster(
        n in 2usize..250, deg in 0.0f64..6.0, k in 1usize..6, entries in 0usize..40,
        global in any::<bool>(), seed in any::<u64>(),
    ) {
        let a = generate_graph(&SyntheticGraphSpec::power_law(n, deg.min((n - 1) as f64), seed)).unwrap();
        let p = partition_graph(&a, k.min(n), seed).unwrap();
        let r = relabel(&a, &p).unwrap();
        let ranking = if global { HdnRanking::Global } else { HdnRanking::InCluster };
        let hdn = build_hdn_lists(&r, &p, entries, ranking).unwrap();
        hdn.validate(&p).unwrap();
        for (c, &(s, e)) in p.cluster_bounds().iter().enumerate() {
            // Oracle: stable sort of the cluster's nodes by descending degree.
            let mut nodes: Vec<usize> = (s..e).collect();
            let degree = |i: usize| {
                r.row(i).filter(|&(j, _)| global || (s..e).contains(&j)).count()
            };
            nodes.sort_by_key(|&i| std::cmp::Reverse(degree(i)));
            nodes.truncate(entries);
            prop_assert_eq!(hdn.list(c), &nodes[..]);
        }
    }
}

fn degree_multiset(a: &CsrMatrix) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for r in 0..a.num_rows() {
        *m.entry(a.row_nnz(r)).or_insert(0) += 1;
    }
    m
}

fn component_sizes(a: &CsrMatrix) -> Vec<usize> {
    let n = a.num_rows();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for (u, _) in a.row(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable();
    sizes
}

#[test]
fn partition_cuts_fewer_edges_than_random_balanced_labels() {
    let mut wins = 0;
    for seed in 0..20u64 {
        let a = generate_graph(&SyntheticGraphSpec::power_law(600, 6.0, seed)).unwrap();
        let k = 8;
        let p = partition_graph(&a, k, seed).unwrap();
        let mut labels: Vec<usize> = (0..600).map(|i| i % k).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
        let random = Partition::from_labels(&labels);
        if edge_cut(&a, &p) <= edge_cut(&a, &random) {
            wins += 1;
        }
    }
    assert_eq!(wins, 20);
}

#[test]
fn partition_recovers_planted_blocks() {
    let spec = SyntheticGraphSpec::sbm(1200, 10.0, 6, 20.0, 3);
    let (a, blocks) = generate_graph_with_labels(&spec).unwrap();
    let p = partition_graph(&a, 6, 3).unwrap();
    // A shuffled labeling has roughly 1/k of the non-zeros inside clusters.
    let mut order: Vec<usize> = (0..1200).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let unrelated = Partition::from_labels(&order.iter().map(|&i| i % 6).collect::<Vec<_>>());
    let planted = intra_cluster_fraction(&a, &Partition::from_labels(&blocks));
    let found = intra_cluster_fraction(&a, &p);
    assert!(found >= 0.8, "intra-cluster fraction {found}");
    assert!(found > intra_cluster_fraction(&a, &unrelated));
    assert!(found >= 0.95 * planted, "{found} vs planted {planted}");
}

#[test]
fn partitioning_is_deterministic() {
    let a = generate_graph(&SyntheticGraphSpec::sbm(900, 8.0, 3, 20.0, 1)).unwrap();
    assert_eq!(partition_graph(&a, 3, 42).unwrap(), partition_graph(&a, 3, 42).unwrap());
}
