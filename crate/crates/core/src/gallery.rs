//! Built-in experiment instances with stored expected outcomes.

use crate::analysis::{ConsensusMode, Predicate};
use crate::experiment::{Expected, ExpectedOutcome, ExperimentConfig, GraphSource, Mode, PolicySpec, ShieldMode, WitnessSpec};
use crate::graph::Graph;
use crate::objectives::Objective;
use crate::scheduler::SchedulerSpec;
use ExpectedOutcome::{AlmostSure, Violated};

/// Hexagon l, t1, t2, r, b2, b1 with self-loops at l and r.
pub fn hexagon(init: &str) -> Graph {
    let l = ["l", "t1", "t2", "r", "b2", "b1"];
    let mut e = vec![("l", "l"), ("r", "r")];
    for i in 0..6 {
        e.push((l[i], l[(i + 1) % 6]));
        e.push((l[(i + 1) % 6], l[i]));
    }
    Graph::from_labels(&l, &e, init).expect("hexagon")
}

/// Two branches v → a_i → b_i → v, with dwelling self-loops at a_i and a shortcut a_i → v.
pub fn two_branch() -> Graph {
    Graph::from_labels(
        &["v", "a1", "a2", "b1", "b2"],
        &[
            ("v", "a1"),
            ("v", "a2"),
            ("a1", "a1"),
            ("a1", "b1"),
            ("a1", "v"),
            ("a2", "a2"),
            ("a2", "b2"),
            ("a2", "v"),
            ("b1", "v"),
            ("b2", "v"),
        ],
        "v",
    )
    .expect("two-branch")
}

pub fn three_vertex() -> Graph {
    Graph::from_labels(&["v", "a1", "a2"], &[("v", "a1"), ("v", "a2"), ("a1", "v"), ("a2", "v"), ("v", "v")], "v").expect("three-vertex")
}

pub fn four_vertex() -> Graph {
    Graph::from_labels(
        &["v0", "v1", "v11", "v12"],
        &[("v0", "v0"), ("v0", "v1"), ("v1", "v11"), ("v1", "v12"), ("v11", "v0"), ("v12", "v0")],
        "v0",
    )
    .expect("four-vertex")
}

fn base(name: &str, description: &str, graph: Graph, objectives: Vec<Objective>, policies: Vec<PolicySpec>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        description: description.into(),
        graph: GraphSource::Inline(graph),
        objectives,
        policies,
        scheduler: SchedulerSpec::Uniform { n: None },
        shield: ShieldMode::None,
        mode: Mode::Both,
        horizon: 1_000,
        trials: 100,
        seed: None,
        state_cap: crate::analysis::DEFAULT_STATE_CAP,
        predicate: None,
        consensus: None,
        convergence_window: None,
        expected: None,
    }
}

fn expect(summary: &str, verdict: &[ExpectedOutcome]) -> Expected {
    Expected { summary: summary.into(), verdict: Some(verdict.to_vec()), ..Expected::default() }
}

fn visits(sets: &[(usize, u64)]) -> Predicate {
    Predicate::AllOf { all: sets.iter().map(|&(v, k)| Predicate::BuchiVisits { set: vec![v], k }).collect() }
}

/// All gallery instances in listing order.
pub fn all() -> Vec<ExperimentConfig> {
    let reach = vec![Objective::Reachability { targets: vec![0] }, Objective::Reachability { targets: vec![3] }];
    let sp = vec![PolicySpec::ShortestPath { targets: None }, PolicySpec::ShortestPath { targets: None }];
    let hex_buchi = vec![Objective::Buchi { accepting: vec![0] }, Objective::Buchi { accepting: vec![3] }];
    let cob = |bad: Vec<usize>| Objective::CoBuchi { bad };
    let cob_spec = |seed| PolicySpec::CobuchiConvention { bad: None, seed };
    let parity_spec = || PolicySpec::ParityConvention { colours: None, witness: None, cap: None };
    let shield_pair = vec![Objective::Safety { safe: vec![0, 2] }, Objective::Buchi { accepting: vec![2] }];
    let shield_policies = vec![PolicySpec::RandomWalk, PolicySpec::BuchiConvention { accepting: None }];

    let mut out = Vec::new();

    let mut c = base(
        "fig1a-reach-det",
        "Shortest-path reachability pair on the hexagon under round robin: the agents undo each other between t1 and t2",
        hexagon("t2"),
        reach.clone(),
        sp.clone(),
    );
    c.scheduler = SchedulerSpec::RoundRobin { order: None };
    c.horizon = 50;
    c.expected = Some(Expected { trace_within: Some(vec![1, 2]), ..expect("neither target is reached", &[Violated, Violated]) });
    out.push(c);

    let mut c = base("fig1a-reach-uniform", "Same reachability pair under the uniform scheduler", hexagon("t2"), reach, sp);
    c.predicate = Some(Predicate::AllOf { all: vec![Predicate::Reach { set: vec![0] }, Predicate::Reach { set: vec![3] }] });
    c.trials = 200;
    c.expected = Some(Expected { estimate_at_least: Some(0.99), ..expect("both targets almost surely", &[AlmostSure, AlmostSure]) });
    out.push(c);

    let mut c = base(
        "fig1b-expdwell",
        "Exponential-dwell Büchi pair on the two-branch graph: dwell lengths outgrow the scheduler",
        two_branch(),
        vec![Objective::Buchi { accepting: vec![3] }, Objective::Buchi { accepting: vec![4] }],
        vec![PolicySpec::ExpDwell { growth: 2, max_exponent: 20 }, PolicySpec::ExpDwell { growth: 2, max_exponent: 20 }],
    );
    c.mode = Mode::Simulate;
    c.horizon = 10_000;
    c.trials = 1_000;
    c.predicate = Some(visits(&[(3, 3), (4, 3)]));
    c.expected = Some(Expected { summary: "not almost-sure".into(), estimate_at_most: Some(0.9), ..Expected::default() });
    out.push(c);

    let mut c = base(
        "fig2-detfail",
        "Deterministic pair defeated by the round-robin schedule it was built against",
        three_vertex(),
        vec![Objective::Reachability { targets: vec![1] }, Objective::Reachability { targets: vec![2] }],
        vec![PolicySpec::DetDefeat, PolicySpec::DetDefeat],
    );
    c.scheduler = SchedulerSpec::RoundRobin { order: None };
    c.horizon = 50;
    c.expected = Some(Expected { trace_within: Some(vec![0]), ..expect("path stays at v forever", &[Violated, Violated]) });
    out.push(c);

    let mut c = base(
        "fig2-shield",
        "Safety G ¬a1 and Büchi a2 with a random walker, composed behind the shield",
        three_vertex(),
        shield_pair.clone(),
        shield_policies.clone(),
    );
    c.shield = ShieldMode::Shielded;
    c.horizon = 10_000;
    c.predicate = Some(Predicate::AlwaysIn { set: vec![0, 2] });
    c.expected = Some(Expected {
        estimate_at_least: Some(1.0),
        trace_within: Some(vec![0, 2]),
        ..expect("both objectives almost surely", &[AlmostSure, AlmostSure])
    });
    out.push(c);

    let mut c = base("fig2-unshielded", "Same pair without the shield", three_vertex(), shield_pair, shield_policies);
    c.predicate = Some(Predicate::AlwaysIn { set: vec![0, 2] });
    c.expected = Some(expect("the random walker reaches a1", &[Violated, AlmostSure]));
    out.push(c);

    let mut c = base(
        "fig3-counterexample",
        "Memoryless co-Büchi pair whose mixture visits both bad vertices infinitely often",
        four_vertex(),
        vec![cob(vec![2]), cob(vec![3])],
        vec![PolicySpec::MemorylessCounterexample, PolicySpec::MemorylessCounterexample],
    );
    c.mode = Mode::Exact;
    c.expected = Some(expect("no memoryless convention exists", &[Violated, Violated]));
    out.push(c);

    let mut c = base(
        "fig1a-buchi",
        "Büchi convention pair (shortest path to the accepting set) on the hexagon",
        hexagon("t2"),
        hex_buchi.clone(),
        vec![PolicySpec::BuchiConvention { accepting: None }, PolicySpec::BuchiConvention { accepting: None }],
    );
    c.trials = 1_000;
    c.predicate = Some(visits(&[(0, 20), (3, 20)]));
    c.expected = Some(Expected { estimate_at_least: Some(0.99), ..expect("both almost surely", &[AlmostSure, AlmostSure]) });
    out.push(c);

    let mut c = base(
        "fig1a-cobuchi",
        "Co-Büchi convention pair from t1: bad sets V∖{l} and V∖{l, r}",
        hexagon("t1"),
        vec![cob(vec![1, 2, 3, 4, 5]), cob(vec![1, 2, 4, 5])],
        vec![cob_spec(1), cob_spec(2)],
    );
    c.horizon = 10_000;
    c.consensus = Some(ConsensusMode::Cobuchi);
    c.predicate = Some(Predicate::Stabilized { w: 12 });
    c.convergence_window = Some(12);
    c.expected = Some(Expected { estimate_at_least: Some(0.99), ..expect("both almost surely", &[AlmostSure, AlmostSure]) });
    out.push(c);

    let mut c = base(
        "fig1a-cobuchi-3",
        "Co-Büchi convention with a third agent sharing the second agent's bad set",
        hexagon("t1"),
        vec![cob(vec![1, 2, 3, 4, 5]), cob(vec![1, 2, 4, 5]), cob(vec![1, 2, 4, 5])],
        vec![cob_spec(1), cob_spec(2), cob_spec(3)],
    );
    c.horizon = 2_000;
    c.consensus = Some(ConsensusMode::Cobuchi);
    c.predicate = Some(Predicate::Stabilized { w: 12 });
    c.convergence_window = Some(12);
    c.expected = Some(expect("all three almost surely", &[AlmostSure, AlmostSure, AlmostSure]));
    out.push(c);

    let mut c = base(
        "fig1b-parity",
        "Parity convention pair for Büchi b1 and Büchi b2 on the two-branch graph",
        two_branch(),
        vec![Objective::Buchi { accepting: vec![3] }, Objective::Buchi { accepting: vec![4] }],
        vec![parity_spec(), parity_spec()],
    );
    c.horizon = 2_000;
    c.consensus = Some(ConsensusMode::Parity);
    c.predicate = Some(visits(&[(3, 20), (4, 20)]));
    c.expected = Some(Expected { estimate_at_least: Some(0.99), ..expect("both almost surely", &[AlmostSure, AlmostSure]) });
    out.push(c);

    let safe: Vec<usize> = vec![0, 1, 2, 3, 4];
    let mut c = base(
        "fig1a-parity",
        "GF l ∧ G ¬b1 and GF r ∧ G ¬b1: shield restricts to the safe region, parity convention on the rest",
        hexagon("t2"),
        vec![
            Objective::Constrained { safe: safe.clone(), live: Box::new(hex_buchi[0].clone()) },
            Objective::Constrained { safe: safe.clone(), live: Box::new(hex_buchi[1].clone()) },
        ],
        vec![
            PolicySpec::ParityConvention {
                colours: None,
                witness: Some(WitnessSpec { stem: vec![], cycle: vec![2, 3, 2, 1, 0, 1] }),
                cap: None,
            };
            2
        ],
    );
    c.shield = ShieldMode::Restrict;
    c.horizon = 2_000;
    c.consensus = Some(ConsensusMode::Parity);
    c.predicate = Some(Predicate::AllOf { all: vec![visits(&[(0, 20), (3, 20)]), Predicate::AlwaysIn { set: safe }] });
    c.expected = Some(Expected { estimate_at_least: Some(0.99), ..expect("both almost surely", &[AlmostSure, AlmostSure]) });
    out.push(c);

    out
}

pub fn names() -> Vec<String> {
    all().into_iter().map(|c| c.name).collect()
}

pub fn instance(name: &str) -> Option<ExperimentConfig> {
    all().into_iter().find(|c| c.name == name)
}
