use std::collections::BTreeSet;

use proptest::prelude::*;

use decay_core::corpus::{
    check_corpus, gnp, path, random_network, with_random_ties, with_tie, EdgeTriple,
};
use decay_core::dynamics::cohort_gain;
use decay_core::expectation::{
    expected_edge_loss_horizon, expected_edge_loss_one_step, expected_leavers, realized_edge_loss,
};
use decay_core::io::{
    format_edge_list, load_edge_list, load_trace, parse_edge_list, persist_trace, write_edge_list,
};
use decay_core::montecarlo::ensemble;
use decay_core::optimize::{greedy_maximize, lazy_marginals, objective_value};
use decay_core::{
    build_network, is_decaying, simulate, step, DecayingNetwork, InitialProbability, LeaveSampler,
    NodeId, Objective, SimulationConfig,
};

fn set(ids: impl IntoIterator<Item = usize>) -> BTreeSet<NodeId> {
    ids.into_iter().map(NodeId::from).collect()
}

/// Cohort objective written directly from its definition.
fn cohort_oracle(net: &DecayingNetwork, a: &BTreeSet<NodeId>) -> f64 {
    let mut total = 0.0;
    for w in net.alive_nodes() {
        let nbrs: Vec<(NodeId, f64)> = net.alive_neighbors(w).collect();
        let left: Vec<&(NodeId, f64)> = nbrs.iter().filter(|(u, _)| a.contains(u)).collect();
        if left.is_empty() {
            continue;
        }
        let xi = left.len() as f64 / nbrs.len() as f64;
        let keep: f64 = left
            .iter()
            .map(|(u, d)| (1.0 - net.leave_prob(*u)) * (1.0 - d))
            .product();
        total += 1.0 - (1.0 - xi) * keep;
    }
    total
}

fn unit() -> impl Strategy<Value = f64> {
    (1u32..=1000).prop_map(|x| x as f64 / 1000.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gain_grows_with_probability_and_tie(
        cohort in prop::collection::vec((unit(), unit()), 1..6),
        extra_deg in 0usize..5,
        i in 0usize..6,
        bump in unit(),
    ) {
        let deg = cohort.len() + extra_deg;
        let i = i % cohort.len();
        let (base, _) = cohort_gain(deg, cohort.iter().copied());
        prop_assert!((0.0..=1.0).contains(&base));
        let mut hi_pi = cohort.clone();
        hi_pi[i].0 = (hi_pi[i].0 + bump).min(1.0);
        let mut hi_delta = cohort.clone();
        hi_delta[i].1 = (hi_delta[i].1 + bump).min(1.0);
        prop_assert!(cohort_gain(deg, hi_pi).0 >= base - 1e-15);
        prop_assert!(cohort_gain(deg, hi_delta).0 >= base - 1e-15);
        // one more leaver out of the same neighbourhood never lowers the gain
        if extra_deg > 0 {
            let mut more = cohort.clone();
            more.push((bump, bump));
            prop_assert!(cohort_gain(deg, more).0 >= base - 1e-15);
        }
    }

    #[test]
    fn edge_list_round_trip(n in 3usize..30, p in 0.1f64..0.9, seed in any::<u64>()) {
        let edges = with_random_ties(&gnp(n, p, seed), seed);
        let text = format_edge_list(&edges);
        let back = parse_edge_list(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, edges);
    }

    #[test]
    fn relabelling_preserves_predictions(n in 4usize..12, seed in any::<u64>(), shift in 1usize..11) {
        let net = random_network(n, 0.4, seed).unwrap();
        let size = net.node_count();
        let perm = |i: usize| (i + shift) % size;
        let edges: Vec<EdgeTriple> = net
            .initial_edges()
            .map(|e| (NodeId::from(perm(e.u.index())), NodeId::from(perm(e.v.index())), e.tie_strength))
            .collect();
        let mut pi = vec![0.0; size];
        for (id, s) in net.nodes() {
            pi[perm(id.index())] = s.initial_prob;
        }
        let moved = build_network(edges, &InitialProbability::Explicit(pi)).unwrap();
        prop_assert!((expected_leavers(&net) - expected_leavers(&moved)).abs() < 1e-12);
        prop_assert!((expected_edge_loss_one_step(&net) - expected_edge_loss_one_step(&moved)).abs() < 1e-12);
        let a = set([0, 1]);
        let b: BTreeSet<NodeId> = a.iter().map(|u| NodeId::from(perm(u.index()))).collect();
        let fa = objective_value(&net, &a, Objective::Cohort).unwrap();
        let fb = objective_value(&moved, &b, Objective::Cohort).unwrap();
        prop_assert!((fa - fb).abs() < 1e-12);
        let ha = expected_edge_loss_horizon(&net, 3).unwrap();
        let hb = expected_edge_loss_horizon(&moved, 3).unwrap();
        for (x, y) in ha.expected_edge_loss.iter().zip(&hb.expected_edge_loss) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn disjoint_union_adds_expected_leavers(n in 3usize..10, m in 3usize..10, seed in any::<u64>()) {
        let a = random_network(n, 0.5, seed).unwrap();
        let b = random_network(m, 0.5, seed ^ 1).unwrap();
        let off = a.node_count() as u32;
        let mut edges: Vec<EdgeTriple> = a.initial_edges().map(|e| (e.u, e.v, e.tie_strength)).collect();
        edges.extend(b.initial_edges().map(|e| (NodeId(e.u.0 + off), NodeId(e.v.0 + off), e.tie_strength)));
        let pi: Vec<f64> = a.nodes().chain(b.nodes()).map(|(_, s)| s.initial_prob).collect();
        let joint = build_network(edges, &InitialProbability::Explicit(pi)).unwrap();
        prop_assert!((expected_leavers(&joint) - expected_leavers(&a) - expected_leavers(&b)).abs() < 1e-12);
        prop_assert!(
            (expected_edge_loss_one_step(&joint) - expected_edge_loss_one_step(&a) - expected_edge_loss_one_step(&b)).abs()
                < 1e-12
        );
    }
}

#[test]
fn cohort_objective_matches_definition_and_is_monotone_submodular() {
    let corpus: Vec<DecayingNetwork> = check_corpus(11)
        .unwrap()
        .into_iter()
        .filter(|n| n.node_count() <= 7)
        .collect();
    assert!(corpus.len() >= 10);
    for net in &corpus {
        let n = net.node_count();
        let f: Vec<f64> = (0u32..1 << n)
            .map(|mask| {
                let a = set((0..n).filter(|i| mask >> i & 1 == 1));
                let value = objective_value(net, &a, Objective::Cohort).unwrap();
                assert!((value - cohort_oracle(net, &a)).abs() < 1e-12);
                value
            })
            .collect();
        for a in 0usize..1 << n {
            for v in (0..n).filter(|v| a >> v & 1 == 0) {
                let gain_a = f[a | 1 << v] - f[a];
                assert!(gain_a >= -1e-12, "not monotone");
                // every superset b of a without v
                let free = !a & !(1 << v) & ((1 << n) - 1);
                let mut sub = free;
                loop {
                    let b = a | sub;
                    let gain_b = f[b | 1 << v] - f[b];
                    assert!(
                        gain_a >= gain_b - 1e-12,
                        "not submodular: a={a:b} b={b:b} v={v}"
                    );
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & free;
                }
            }
        }
    }
}

#[test]
fn lazy_and_naive_greedy_agree_on_500_graphs() {
    for seed in 0..500u64 {
        let net = random_network(6 + (seed % 15) as usize, 0.3, seed).unwrap();
        let k = 1 + (seed % 4) as usize;
        let naive = greedy_maximize(&net, k).unwrap();
        let lazy = lazy_marginals(&net, k).unwrap();
        assert_eq!(naive.picks, lazy.picks, "seed {seed}");
        assert!((naive.objective - lazy.objective).abs() < 1e-12);
        assert!(lazy.evaluations <= naive.evaluations);
    }
}

#[test]
fn traces_decay_and_edge_loss_identity_holds() {
    for seed in 0..1000u64 {
        let mut net = random_network(5 + (seed % 40) as usize, 0.2, seed).unwrap();
        let sampler = LeaveSampler::new(seed);
        let mut series = Vec::new();
        while net.alive_count() > 0 && net.time() < 200 {
            let before = net.clone();
            let rec = step(&mut net, &sampler, &BTreeSet::new()).unwrap();
            assert_eq!(
                realized_edge_loss(&rec, &before).unwrap(),
                rec.removed_edges.len()
            );
            series.push(net.alive_count());
        }
        assert!(is_decaying(net.history()), "seed {seed}");
        assert!(series.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn persisted_traces_reload_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    for seed in 0..100u64 {
        let net = random_network(4 + (seed % 20) as usize, 0.3, seed).unwrap();
        let trace = simulate(&net, &SimulationConfig::new(seed, 30)).unwrap();
        let dir = tmp.path().join(seed.to_string());
        let manifest = persist_trace(&trace, &dir, None, &seed).unwrap();
        let back = load_trace(&dir).unwrap();
        assert_eq!(back, trace, "seed {seed}");
        let again = persist_trace(&back, tmp.path().join("again"), None, &seed).unwrap();
        assert_eq!(again, manifest);
    }
}

#[test]
fn large_edge_list_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    // a ring of 10^5 edges with varied tie strengths
    let n = 100_000u32;
    let edges: Vec<EdgeTriple> = (0..n)
        .map(|i| {
            (
                NodeId(i),
                NodeId((i + 1) % n),
                ((i % 997) + 1) as f64 / 997.0,
            )
        })
        .collect();
    let p = tmp.path().join("ring.txt");
    write_edge_list(&edges, &p).unwrap();
    assert_eq!(load_edge_list(&p).unwrap(), edges);
}

#[test]
fn horizon_projection_tracks_sampling_on_a_path() {
    let net = build_network(with_tie(&path(4), 0.5), &InitialProbability::Constant(0.3)).unwrap();
    let report = expected_edge_loss_horizon(&net, 3).unwrap();
    let mut cfg = SimulationConfig::new(20_240_601, 3);
    cfg.stop_when_empty = false;
    let mc = ensemble(&net, &cfg, 100_000).unwrap();
    for j in 0..3 {
        let (e, m) = (report.expected_edge_loss[j], mc.edge_loss[j].mean);
        assert!(
            (e - m).abs() <= 0.05 * m,
            "edges step {}: {e} vs {m}",
            j + 1
        );
        let (e, m) = (report.expected_node_loss[j], mc.node_loss[j].mean);
        assert!(
            (e - m).abs() <= 0.05 * m,
            "nodes step {}: {e} vs {m}",
            j + 1
        );
    }
    assert_eq!(
        report.expected_edge_loss[0],
        expected_edge_loss_one_step(&net)
    );
}
