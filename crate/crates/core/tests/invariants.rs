use decoplan::analysis::{almost_sure_verdict, build_global_chain, first_stable_step, wilson, Witness};
use decoplan::composition::Composition;
use decoplan::graph::{enumerate_simple_cycles, sample_lasso, Graph, Vertex};
use decoplan::objectives::{decompose, mask, satisfies_lasso, to_parity, winning_region, Objective};
use decoplan::policies::{cobuchi_convention_policy, MemDist, ObservationClass, Policy, RandomWalkPolicy, TablePolicy};
use decoplan::prob::{one, ratio};
use decoplan::scheduler::SchedulerSpec;
use decoplan::shield::{build_shield, max_permissive};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::sync::Arc;

fn graph_from(n: usize, masks: &[u32], init: usize) -> Graph {
    let labels = (0..n).map(|i| format!("u{i}")).collect();
    let succ = masks.iter().map(|&m| (0..n).filter(|&v| m >> v & 1 == 1).collect()).collect();
    Graph::from_successors(labels, succ, init % n).unwrap()
}

prop_compose! {
    fn arb_graph()(n in 1usize..=5)(masks in proptest::collection::vec(1u32..(1 << n), n), init in 0..n, n in Just(n)) -> Graph {
        graph_from(n, &masks, init)
    }
}

prop_compose! {
    fn arb_graph_and_set()(g in arb_graph())(bits in proptest::collection::vec(any::<bool>(), g.n()), g in Just(g)) -> (Graph, Vec<Vertex>) {
        let set = (0..g.n()).filter(|&v| bits[v]).collect();
        (g, set)
    }
}

fn random_comp(g: &Graph, seed: u64, agents: usize) -> Composition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pols: Vec<Arc<dyn Policy>> = (0..agents)
        .map(|i| {
            let class = if i % 2 == 0 { ObservationClass::PathAware } else { ObservationClass::ScheduledAware };
            Arc::new(TablePolicy::random(g, 2, class, &mut rng)) as Arc<dyn Policy>
        })
        .collect();
    let sched = SchedulerSpec::Uniform { n: None }.resolve(agents).unwrap();
    Composition::new(g.clone(), pols, sched, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn graph_successors_sorted_and_valid(g in arb_graph()) {
        prop_assert!(g.init() < g.n());
        for v in g.vertices() {
            let s = g.succ(v);
            prop_assert!(!s.is_empty());
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|&w| w < g.n()));
        }
        let back = Graph::from_json_str(&g.to_json_string()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn sampled_lassos_are_well_formed(g in arb_graph(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in enumerate_simple_cycles(&g, &[], 64).unwrap_or_default() {
            let reachable = g.can_reach(&mask(g.n(), &c))[g.init()];
            let sampled = sample_lasso(&g, g.init(), &c, &mut rng);
            prop_assert_eq!(sampled.is_ok(), reachable);
            let Ok(l) = sampled else { continue };
            prop_assert!(l.check(&g, true).is_ok());
            prop_assert_eq!(l.first(), g.init());
            prop_assert!(l.stem.iter().all(|v| !l.cycle.contains(v)));
        }
    }

    #[test]
    fn buchi_and_cobuchi_agree_with_their_parity_form((g, set) in arb_graph_and_set(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g.n();
        for o in [Objective::Buchi { accepting: set.clone() }, Objective::CoBuchi { bad: set.clone() }] {
            let p = Objective::Parity { colours: to_parity(&o, n).unwrap() };
            prop_assert_eq!(winning_region(&g, &o).unwrap(), winning_region(&g, &p).unwrap());
            for c in enumerate_simple_cycles(&g, &[], 64).unwrap_or_default() {
                let Ok(l) = sample_lasso(&g, g.init(), &c, &mut rng) else { continue };
                prop_assert_eq!(satisfies_lasso(&o, &l), satisfies_lasso(&p, &l));
            }
        }
    }

    #[test]
    fn live_part_is_liveness((g, set) in arb_graph_and_set()) {
        let objectives = [
            Objective::Reachability { targets: set.clone() },
            Objective::Safety { safe: set.clone() },
            Objective::Buchi { accepting: set.clone() },
            Objective::CoBuchi { bad: set.clone() },
        ];
        for o in objectives {
            let d = decompose(&g, &o).unwrap();
            prop_assert_eq!(&d.winning, &winning_region(&g, &o).unwrap());
            prop_assert!(winning_region(&g, &d.live_part).unwrap().iter().all(|&w| w), "{:?}", d.live_part);
        }
    }

    #[test]
    fn max_permissive_stays_in_region((g, set) in arb_graph_and_set()) {
        for o in [Objective::Safety { safe: set.clone() }, Objective::CoBuchi { bad: set.clone() }] {
            let Ok(mp) = max_permissive(&g, &o) else { continue };
            for v in g.vertices() {
                prop_assert!(mp.chi(v).iter().all(|w| g.succ(v).contains(w)));
                if mp.region[v] {
                    prop_assert!(!mp.chi(v).is_empty());
                    prop_assert!(mp.chi(v).iter().all(|&w| mp.region[w]));
                }
            }
        }
    }

    #[test]
    fn shield_region_is_closed((g, set) in arb_graph_and_set()) {
        let objs = [Objective::Safety { safe: set.clone() }, Objective::Safety { safe: (0..g.n()).collect() }];
        if let Ok(s) = build_shield(&g, &objs) {
            prop_assert!(s.region[g.init()]);
            for v in s.restricted.vertices() {
                prop_assert!(!s.restricted.succ(v).is_empty());
            }
            for v in g.vertices().filter(|&v| s.region[v]) {
                prop_assert!(!s.allowed(v).is_empty());
            }
        }
    }

    #[test]
    fn weighted_fairness_epsilon(weights in proptest::collection::vec(1u64..20, 1..5)) {
        let s = SchedulerSpec::WeightedFair { weights: weights.clone() }.resolve(weights.len()).unwrap();
        let total: u64 = weights.iter().sum();
        prop_assert_eq!(s.fairness_epsilon(), Some(ratio(*weights.iter().min().unwrap(), total)));
        prop_assert_eq!(s.distribution(0).total(), one());
    }

    #[test]
    fn deterministic_schedulers_are_dirac(n in 1usize..5, seq in proptest::collection::vec(1usize..5, 1..7)) {
        let rr = SchedulerSpec::RoundRobin { order: None }.resolve(n).unwrap();
        for p in 0..rr.phases() {
            prop_assert!(rr.distribution(p).as_dirac().is_some());
        }
        let max = *seq.iter().max().unwrap();
        let sc = SchedulerSpec::Scripted { seq }.resolve(max).unwrap();
        for p in 0..sc.phases() {
            prop_assert!(sc.distribution(p).as_dirac().is_some());
        }
    }

    #[test]
    fn table_policies_are_distributions(g in arb_graph(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = TablePolicy::random(&g, 3, ObservationClass::ScheduledAware, &mut rng);
        prop_assert_eq!(p.initial_memory(g.init()).to_dist().total(), one());
        for m in p.memory_states().unwrap() {
            for v in g.vertices() {
                let d = p.propose(m, v);
                prop_assert_eq!(d.total(), one());
                prop_assert!(d.support().all(|w| g.succ(v).contains(w)));
            }
        }
    }

    #[test]
    fn traces_chain_and_respect_observations(g in arb_graph(), seed in any::<u64>(), agents in 1usize..4) {
        let comp = random_comp(&g, seed, agents);
        let t = comp.run(60);
        let mut at = g.init();
        for s in &t.steps {
            prop_assert_eq!(s.vertex_before, at);
            prop_assert!(g.has_edge(s.vertex_before, s.vertex_after));
            prop_assert!(s.overridden || s.vertex_after == s.proposals[s.scheduled]);
            at = s.vertex_after;
        }
        let path = t.path();
        for i in 0..agents {
            for class in [ObservationClass::PathAware, ObservationClass::ScheduledAware, ObservationClass::FullHistoryAware] {
                let o = t.observation(i, class);
                prop_assert_eq!(o.signal.len(), path.len() - 1);
                prop_assert_eq!(o.own_choices.len(), path.len() - 1);
                prop_assert_eq!(&o.path, &path);
            }
            let o = t.observation(i, ObservationClass::ScheduledAware);
            for (k, s) in t.steps.iter().enumerate() {
                if s.scheduled == i {
                    prop_assert_eq!(o.own_choices[k], Some(path[k + 1]));
                }
            }
        }
    }

    #[test]
    fn chains_are_stochastic_and_reachable(g in arb_graph(), seed in any::<u64>(), agents in 1usize..3) {
        let comp = random_comp(&g, seed, agents);
        let chain = build_global_chain(&comp, 50_000).unwrap();
        prop_assert!(chain.is_row_stochastic());
        let mut seen = vec![false; chain.n_nodes()];
        seen[chain.init] = true;
        let mut q = VecDeque::from([chain.init]);
        while let Some(u) = q.pop_front() {
            for &(w, _) in &chain.rows[u] {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back(w);
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn witness_bscc_fails_its_objective((g, set) in arb_graph_and_set(), seed in any::<u64>()) {
        let comp = random_comp(&g, seed, 2);
        let chain = build_global_chain(&comp, 50_000).unwrap();
        let objs = vec![Objective::Buchi { accepting: set.clone() }, Objective::CoBuchi { bad: set.clone() }];
        let v = almost_sure_verdict(&chain, &objs, g.n(), &|x| x);
        for (i, o) in v.per_objective.iter().enumerate() {
            if let Some(Witness::Bscc { index }) = o.witness {
                prop_assert!(!v.bsccs[index].accepts[i]);
            }
        }
    }

    #[test]
    fn cobuchi_memories_avoid_bad_cycles((g, set) in arb_graph_and_set(), seed in any::<u64>()) {
        let Ok(p) = cobuchi_convention_policy(&g, &set, seed) else { return Ok(()) };
        let bad = mask(g.n(), &set);
        for m in p.memory_states().unwrap() {
            let (stem, cycle) = p.lasso_of(m);
            if let Some(c) = cycle {
                prop_assert!(c.iter().all(|&v| !bad[v]));
            }
            let mut seen = stem.to_vec();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), stem.len());
        }
    }

    #[test]
    fn wilson_interval_brackets_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
        let s = (trials as f64 * frac) as u64;
        let e = wilson(s, trials);
        prop_assert!(0.0 <= e.lower && e.lower <= e.estimate + 1e-12);
        prop_assert!(e.estimate <= e.upper + 1e-12 && e.upper <= 1.0 + 1e-12);
    }

    #[test]
    fn periodic_constant_paths_stabilise_immediately(period in 1usize..5, w in 5usize..10) {
        let path: Vec<Vertex> = (0..6 * w).map(|t| t % period).collect();
        let digests = vec![7u64; path.len()];
        prop_assert_eq!(first_stable_step(&path, &digests, w), Some(0));
    }
}

#[test]
fn mixture_of_shared_distributions_sums_to_one() {
    let g = graph_from(3, &[0b111, 0b001, 0b010], 0);
    let p = RandomWalkPolicy::new(&g);
    let d = MemDist::mixture(vec![(ratio(1, 3), p.initial_memory(0)), (ratio(2, 3), p.initial_memory(1))]);
    assert_eq!(d.to_dist().total(), one());
}
