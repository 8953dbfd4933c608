//! Exact analysis of a composition through its global Markov chain.
//!
//! States are (memories, vertex, scheduler phase). Memory updates that draw
//! from a shared resample table are routed through relay nodes that fix one
//! agent's memory at a time, which keeps the edge count linear in the table
//! size instead of a product over agents.

mod estimate;

pub use estimate::*;

use crate::composition::{Composition, GlobalState};
use crate::graph::{tarjan, Vertex};
use crate::linalg::{solve_exact, solve_iterative, to_float_rows};
use crate::objectives::{mask, Objective};
use crate::policies::{MemDist, MemState, MemoryView};
use crate::prob::{one, to_f64, zero, Dist, Prob};
use serde::Serialize;
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_STATE_CAP: usize = 2_000_000;
pub const EXACT_SOLVE_LIMIT: usize = 2_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("global chain exceeds {cap} nodes")]
    StateCapExceeded { cap: usize },
    #[error("claim ({clause}) violated at chain node {state}")]
    ClaimViolated { state: usize, clause: String },
    #[error("agent {agent} memory has no {expected} view")]
    UnexpectedMemory { agent: usize, expected: &'static str },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Part {
    Fixed(MemState),
    Shared(u64),
    Explicit(Dist<MemState>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Key {
    State(GlobalState),
    Relay { vertex: Vertex, phase: usize, parts: Vec<Part> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChainNode {
    State(GlobalState),
    /// Intermediate node while joint memories are being drawn.
    Relay {
        vertex: Vertex,
        phase: usize,
    },
}

#[derive(Clone, Debug)]
pub struct GlobalChain {
    pub nodes: Vec<ChainNode>,
    pub rows: Vec<Vec<(usize, Prob)>>,
    pub init: usize,
    index: HashMap<GlobalState, usize>,
}

impl GlobalChain {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_states(&self) -> usize {
        self.index.len()
    }

    pub fn state(&self, node: usize) -> Option<&GlobalState> {
        match &self.nodes[node] {
            ChainNode::State(s) => Some(s),
            ChainNode::Relay { .. } => None,
        }
    }

    pub fn vertex(&self, node: usize) -> Vertex {
        match &self.nodes[node] {
            ChainNode::State(s) => s.vertex,
            ChainNode::Relay { vertex, .. } => *vertex,
        }
    }

    pub fn node_of(&self, state: &GlobalState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn states(&self) -> impl Iterator<Item = (usize, &GlobalState)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            ChainNode::State(s) => Some((i, s)),
            ChainNode::Relay { .. } => None,
        })
    }

    /// Exact check that every row is a probability distribution.
    pub fn is_row_stochastic(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|(_, p)| *p > zero()) && r.iter().fold(zero(), |a, (_, p)| a + p) == one())
    }

    /// Bottom strongly connected components, as sorted node lists.
    pub fn bsccs(&self) -> Vec<Vec<usize>> {
        let sccs = tarjan(self.n_nodes(), |v, i| self.rows[v].get(i).map(|e| e.0));
        let mut comp = vec![0usize; self.n_nodes()];
        for (c, s) in sccs.iter().enumerate() {
            for &v in s {
                comp[v] = c;
            }
        }
        let mut out: Vec<Vec<usize>> = sccs
            .into_iter()
            .enumerate()
            .filter(|(c, s)| s.iter().all(|&v| self.rows[v].iter().all(|(w, _)| comp[*w] == *c)))
            .map(|(_, mut s)| {
                s.sort_unstable();
                s
            })
            .collect();
        out.sort();
        out
    }

    fn reverse(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.n_nodes()];
        for (v, r) in self.rows.iter().enumerate() {
            for (w, _) in r {
                rev[*w].push(v);
            }
        }
        rev
    }

    /// Real states reachable in one step of the global process from `node`.
    pub fn state_successors(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![node];
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.rows[node].iter().map(|e| e.0).collect();
        while let Some(v) = stack.pop() {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            match self.nodes[v] {
                ChainNode::State(_) => out.push(v),
                ChainNode::Relay { .. } => stack.extend(self.rows[v].iter().map(|e| e.0)),
            }
        }
        out.sort_unstable();
        out
    }
}

struct Builder<'a> {
    comp: &'a Composition,
    cap: usize,
    ids: HashMap<Key, usize>,
    keys: Vec<Key>,
    shared: HashMap<(usize, u64), Arc<Dist<MemState>>>,
}

impl Builder<'_> {
    fn key(&mut self, vertex: Vertex, phase: usize, mems: Vec<MemDist>) -> Key {
        let parts: Vec<Part> = mems
            .into_iter()
            .enumerate()
            .map(|(i, md)| match md {
                MemDist::Dirac(m) => Part::Fixed(m),
                MemDist::Shared { key, dist } => match dist.as_dirac() {
                    Some(m) => Part::Fixed(*m),
                    None => {
                        self.shared.entry((i, key)).or_insert(dist);
                        Part::Shared(key)
                    }
                },
                MemDist::Explicit(d) => match d.as_dirac() {
                    Some(m) => Part::Fixed(*m),
                    None => Part::Explicit(d),
                },
            })
            .collect();
        normalise(vertex, phase, parts)
    }

    fn intern(&mut self, key: Key) -> Result<usize, AnalysisError> {
        if let Some(&i) = self.ids.get(&key) {
            return Ok(i);
        }
        if self.keys.len() >= self.cap {
            return Err(AnalysisError::StateCapExceeded { cap: self.cap });
        }
        let i = self.keys.len();
        self.ids.insert(key.clone(), i);
        self.keys.push(key);
        Ok(i)
    }

    fn row(&mut self, node: usize) -> Result<Vec<(usize, Prob)>, AnalysisError> {
        let mut out = Vec::new();
        match self.keys[node].clone() {
            Key::State(s) => {
                for term in self.comp.factored_step(&s) {
                    let k = self.key(term.vertex, term.phase, term.memories);
                    out.push((self.intern(k)?, term.prob));
                }
            }
            Key::Relay { vertex, phase, parts } => {
                let k = parts.iter().position(|p| !matches!(p, Part::Fixed(_))).expect("relay has an open part");
                let dist = match &parts[k] {
                    Part::Shared(key) => (*self.shared[&(k, *key)]).clone(),
                    Part::Explicit(d) => d.clone(),
                    Part::Fixed(_) => unreachable!(),
                };
                for (m, p) in dist.into_entries() {
                    let mut next = parts.clone();
                    next[k] = Part::Fixed(m);
                    let key = normalise(vertex, phase, next);
                    out.push((self.intern(key)?, p));
                }
            }
        }
        out.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, Prob)> = Vec::with_capacity(out.len());
        for (j, p) in out {
            match merged.last_mut() {
                Some((k, q)) if *k == j => *q += p,
                _ => merged.push((j, p)),
            }
        }
        Ok(merged)
    }
}

fn normalise(vertex: Vertex, phase: usize, parts: Vec<Part>) -> Key {
    if parts.iter().all(|p| matches!(p, Part::Fixed(_))) {
        let memories = parts
            .into_iter()
            .map(|p| match p {
                Part::Fixed(m) => m,
                _ => unreachable!(),
            })
            .collect();
        Key::State(GlobalState { memories, vertex, phase })
    } else {
        Key::Relay { vertex, phase, parts }
    }
}

/// Explores the chain reachable from the initial memories and vertex.
pub fn build_global_chain(comp: &Composition, state_cap: usize) -> Result<GlobalChain, AnalysisError> {
    let mut b = Builder { comp, cap: state_cap, ids: HashMap::new(), keys: Vec::new(), shared: HashMap::new() };
    let k0 = b.key(comp.graph.init(), 0, comp.initial_memory_dists());
    let init = b.intern(k0)?;
    let mut rows = Vec::new();
    let mut next = 0;
    while next < b.keys.len() {
        rows.push(b.row(next)?);
        next += 1;
    }
    let mut index = HashMap::new();
    let nodes = b
        .keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| match k {
            Key::State(s) => {
                index.insert(s.clone(), i);
                ChainNode::State(s)
            }
            Key::Relay { vertex, phase, .. } => ChainNode::Relay { vertex, phase },
        })
        .collect();
    Ok(GlobalChain { nodes, rows, init, index })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AlmostSure,
    ViolatedWithPositiveProbability,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A reachable BSCC that fails the objective.
    Bscc { index: usize },
    /// A reachable state outside the safe set.
    UnsafeState { node: usize, vertex: Vertex },
    /// A target-free BSCC reachable without visiting a target.
    TargetFreeBscc { index: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ObjectiveVerdict {
    pub kind: &'static str,
    pub outcome: Outcome,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BsccInfo {
    #[serde(skip)]
    pub nodes: Vec<usize>,
    pub states: usize,
    pub vertices: Vec<Vertex>,
    pub accepts: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub per_objective: Vec<ObjectiveVerdict>,
    pub bsccs: Vec<BsccInfo>,
}

impl Verdict {
    pub fn all_almost_sure(&self) -> bool {
        self.per_objective.iter().all(|o| o.outcome == Outcome::AlmostSure)
    }
}

/// Decides almost-sure satisfaction of each objective on the chain.
/// `projection` maps a chain vertex to the vertex space of the objectives, of size `n_vertices`.
pub fn almost_sure_verdict(
    chain: &GlobalChain,
    objectives: &[Objective],
    n_vertices: usize,
    projection: &dyn Fn(Vertex) -> Vertex,
) -> Verdict {
    let bsccs = chain.bsccs();
    let proj = |node: usize| projection(chain.vertex(node));
    let infs: Vec<Vec<bool>> = bsccs
        .iter()
        .map(|b| {
            let mut m = vec![false; n_vertices];
            for &v in b.iter().filter(|&&v| chain.state(v).is_some()) {
                m[proj(v)] = true;
            }
            m
        })
        .collect();
    let infos = bsccs
        .iter()
        .zip(&infs)
        .map(|(b, inf)| BsccInfo {
            nodes: b.clone(),
            states: b.iter().filter(|&&v| chain.state(v).is_some()).count(),
            vertices: (0..n_vertices).filter(|&v| inf[v]).collect(),
            accepts: objectives.iter().map(|o| o.accepts_sets(inf, inf)).collect(),
        })
        .collect();
    let per_objective = objectives
        .iter()
        .map(|o| {
            let witness = violation(chain, o, &bsccs, &infs, n_vertices, &proj);
            let outcome = if witness.is_some() { Outcome::ViolatedWithPositiveProbability } else { Outcome::AlmostSure };
            ObjectiveVerdict { kind: o.kind(), outcome, witness }
        })
        .collect();
    Verdict { per_objective, bsccs: infos }
}

fn violation(
    chain: &GlobalChain,
    objective: &Objective,
    bsccs: &[Vec<usize>],
    infs: &[Vec<bool>],
    n_vertices: usize,
    proj: &dyn Fn(usize) -> Vertex,
) -> Option<Witness> {
    match objective {
        Objective::Safety { safe } => unsafe_state(chain, &mask(n_vertices, safe), proj),
        Objective::Constrained { safe, live } => {
            unsafe_state(chain, &mask(n_vertices, safe), proj).or_else(|| violation(chain, live, bsccs, infs, n_vertices, proj))
        }
        Objective::Reachability { targets } => {
            let t = mask(n_vertices, targets);
            let hit = |v: usize| chain.state(v).is_some() && t[proj(v)];
            let mut seen = vec![false; chain.n_nodes()];
            let mut q = VecDeque::new();
            if !hit(chain.init) {
                seen[chain.init] = true;
                q.push_back(chain.init);
            }
            while let Some(v) = q.pop_front() {
                for (w, _) in &chain.rows[v] {
                    if !seen[*w] && !hit(*w) {
                        seen[*w] = true;
                        q.push_back(*w);
                    }
                }
            }
            bsccs.iter().position(|b| seen[b[0]] && !b.iter().any(|&v| hit(v))).map(|index| Witness::TargetFreeBscc { index })
        }
        _ => infs.iter().position(|inf| !objective.accepts_sets(inf, inf)).map(|index| Witness::Bscc { index }),
    }
}

fn unsafe_state(chain: &GlobalChain, safe: &[bool], proj: &dyn Fn(usize) -> Vertex) -> Option<Witness> {
    chain.states().find(|(i, _)| !safe[proj(*i)]).map(|(node, _)| Witness::UnsafeState { node, vertex: proj(node) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusMode {
    Cobuchi,
    Parity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConsensusReport {
    pub mode: ConsensusMode,
    pub states: usize,
    pub consensus_states: usize,
    pub bscc_states: usize,
    pub clauses_passed: Vec<String>,
}

fn views(comp: &Composition, s: &GlobalState) -> Vec<MemoryView> {
    comp.policies.iter().zip(&s.memories).map(|(p, &m)| p.memory_view(m)).collect()
}

fn cobuchi_sink(views: &[MemoryView], at: Vertex) -> Result<bool, AnalysisError> {
    let MemoryView::Lasso { remaining, cycle } = &views[0] else {
        return Err(AnalysisError::UnexpectedMemory { agent: 0, expected: "lasso" });
    };
    Ok(views.iter().all(|w| w == &views[0]) && remaining.is_empty() && cycle.contains(&at))
}

/// No conflicting vertex is reachable from `at` along edges some agent would take.
fn used_edges_consensus(views: &[MemoryView], at: Vertex, n: usize) -> Result<bool, AnalysisError> {
    let mut tuples = Vec::with_capacity(views.len());
    for (agent, v) in views.iter().enumerate() {
        match v {
            MemoryView::Tuple(t) => tuples.push(t),
            _ => return Err(AnalysisError::UnexpectedMemory { agent, expected: "tuple" }),
        }
    }
    let conflicting = |u: Vertex| (0..tuples.len()).any(|i| tuples.iter().any(|t| t[i][u] != tuples[i][i][u]));
    let mut seen = vec![false; n];
    seen[at] = true;
    let mut stack = vec![at];
    while let Some(u) = stack.pop() {
        if conflicting(u) {
            return Ok(false);
        }
        for (i, t) in tuples.iter().enumerate() {
            let w = t[i][u];
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    Ok(true)
}

/// Checks on the explicit chain that consensus is absorbing, always reachable,
/// and that BSCCs consist of settled consensus states.
pub fn check_consensus_claims(chain: &GlobalChain, comp: &Composition, mode: ConsensusMode) -> Result<ConsensusReport, AnalysisError> {
    let n = comp.graph.n();
    let mut consensus = vec![false; chain.n_nodes()];
    let mut settled = vec![false; chain.n_nodes()];
    for (i, s) in chain.states() {
        let vs = views(comp, s);
        match mode {
            ConsensusMode::Cobuchi => {
                consensus[i] = vs.iter().all(|w| w == &vs[0]);
                settled[i] = consensus[i] && cobuchi_sink(&vs, s.vertex)?;
            }
            ConsensusMode::Parity => {
                consensus[i] = used_edges_consensus(&vs, s.vertex, n)?;
                settled[i] = consensus[i];
            }
        }
    }
    for (i, _) in chain.states().filter(|(i, _)| consensus[*i]) {
        if chain.state_successors(i).iter().any(|&j| !consensus[j]) {
            return Err(AnalysisError::ClaimViolated { state: i, clause: "a".into() });
        }
    }
    let rev = chain.reverse();
    let mut reaches = consensus.clone();
    let mut q: VecDeque<usize> = (0..chain.n_nodes()).filter(|&i| consensus[i]).collect();
    while let Some(v) = q.pop_front() {
        for &u in &rev[v] {
            if !reaches[u] {
                reaches[u] = true;
                q.push_back(u);
            }
        }
    }
    if let Some((i, _)) = chain.states().find(|(i, _)| !reaches[*i]) {
        return Err(AnalysisError::ClaimViolated { state: i, clause: "b".into() });
    }
    let clause_c = match mode {
        ConsensusMode::Cobuchi => "c",
        ConsensusMode::Parity => "c'",
    };
    let mut bscc_states = 0;
    for b in chain.bsccs() {
        for &v in b.iter().filter(|&&v| chain.state(v).is_some()) {
            bscc_states += 1;
            if !settled[v] {
                return Err(AnalysisError::ClaimViolated { state: v, clause: clause_c.into() });
            }
        }
    }
    Ok(ConsensusReport {
        mode,
        states: chain.n_states(),
        consensus_states: consensus.iter().filter(|&&c| c).count(),
        bscc_states,
        clauses_passed: vec!["a".into(), "b".into(), clause_c.into()],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Absorption {
    pub value: f64,
    pub exact: Option<Prob>,
    pub residual: f64,
}

/// Probability of ending in one of the BSCCs flagged in `accept`.
pub fn absorption_probability(chain: &GlobalChain, bsccs: &[Vec<usize>], accept: &[bool]) -> Absorption {
    let mut target = vec![None; chain.n_nodes()];
    for (b, &ok) in bsccs.iter().zip(accept) {
        for &v in b {
            target[v] = Some(ok);
        }
    }
    if let Some(ok) = target[chain.init] {
        let p = if ok { one() } else { zero() };
        return Absorption { value: to_f64(&p), exact: Some(p), residual: 0.0 };
    }
    let transient: Vec<usize> = (0..chain.n_nodes()).filter(|&v| target[v].is_none()).collect();
    let mut pos = vec![usize::MAX; chain.n_nodes()];
    for (i, &v) in transient.iter().enumerate() {
        pos[v] = i;
    }
    let mut q = Vec::with_capacity(transient.len());
    let mut b = Vec::with_capacity(transient.len());
    for &v in &transient {
        let mut row = Vec::new();
        let mut acc = zero();
        for (w, p) in &chain.rows[v] {
            match target[*w] {
                None => row.push((pos[*w], p.clone())),
                Some(true) => acc += p,
                Some(false) => {}
            }
        }
        q.push(row);
        b.push(acc);
    }
    let i0 = pos[chain.init];
    if chain.n_nodes() <= EXACT_SOLVE_LIMIT {
        let rhs: Vec<Vec<Prob>> = b.iter().map(|x| vec![x.clone()]).collect();
        if let Some(x) = solve_exact(&q, &rhs) {
            let p = x[i0][0].clone();
            return Absorption { value: to_f64(&p), exact: Some(p), residual: 0.0 };
        }
    }
    let bf: Vec<f64> = b.iter().map(to_f64).collect();
    let (x, residual) = solve_iterative(&to_float_rows(&q), &bf, 1e-12, 1_000_000);
    Absorption { value: x[i0], exact: None, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::policies::{
        buchi_convention_policy, cobuchi_convention_policy, memoryless_cobuchi_counterexample, MemorylessPolicy, RandomWalkPolicy,
    };
    use crate::prob::ratio;
    use crate::scheduler::SchedulerSpec;

    fn fig3() -> Graph {
        Graph::from_labels(
            &["v0", "v1", "v11", "v12"],
            &[("v0", "v0"), ("v0", "v1"), ("v1", "v11"), ("v1", "v12"), ("v11", "v0"), ("v12", "v0")],
            "v0",
        )
        .unwrap()
    }

    fn hexagon(init: &str) -> Graph {
        let l = ["l", "t1", "t2", "r", "b2", "b1"];
        let mut e = vec![("l", "l"), ("r", "r")];
        for i in 0..6 {
            e.push((l[i], l[(i + 1) % 6]));
            e.push((l[(i + 1) % 6], l[i]));
        }
        Graph::from_labels(&l, &e, init).unwrap()
    }

    fn uniform(n: usize) -> crate::scheduler::Scheduler {
        SchedulerSpec::Uniform { n: None }.resolve(n).unwrap()
    }

    #[test]
    fn fig3_counterexample_chain() {
        let g = fig3();
        let [p1, p2] = memoryless_cobuchi_counterexample(&g).unwrap();
        let c = Composition::new(g.clone(), vec![Arc::new(p1), Arc::new(p2)], uniform(2), 0).unwrap();
        let chain = build_global_chain(&c, 100).unwrap();
        assert_eq!(chain.n_states(), 4);
        assert!(chain.is_row_stochastic());
        let objs = [Objective::CoBuchi { bad: vec![2] }, Objective::CoBuchi { bad: vec![3] }];
        let v = almost_sure_verdict(&chain, &objs, 4, &|x| x);
        assert!(v.per_objective.iter().all(|o| o.outcome == Outcome::ViolatedWithPositiveProbability));
        assert_eq!(v.bsccs.len(), 1);
        assert_eq!(v.bsccs[0].vertices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn solo_deterministic_chain_is_a_lasso() {
        let g = hexagon("t2");
        let p = buchi_convention_policy(&g, &[0]).unwrap();
        let c = Composition::new(g, vec![Arc::new(p)], uniform(1), 0).unwrap();
        let chain = build_global_chain(&c, 100).unwrap();
        assert!(chain.rows.iter().all(|r| r.len() == 1));
        assert!(chain.n_states() <= 6);
        let v = almost_sure_verdict(&chain, &[Objective::Buchi { accepting: vec![0] }], 6, &|x| x);
        assert!(v.all_almost_sure());
    }

    #[test]
    fn absorbing_safe_self_loop() {
        let g = Graph::from_labels(&["a"], &[("a", "a")], "a").unwrap();
        let p = MemorylessPolicy::new(&g, "x", vec![0]).unwrap();
        let c = Composition::new(g, vec![Arc::new(p)], uniform(1), 0).unwrap();
        let chain = build_global_chain(&c, 10).unwrap();
        let v = almost_sure_verdict(&chain, &[Objective::Safety { safe: vec![0] }], 1, &|x| x);
        assert!(v.all_almost_sure());
    }

    #[test]
    fn reachability_pruning() {
        let g = Graph::from_labels(&["s", "a", "b"], &[("s", "a"), ("s", "b"), ("a", "a"), ("b", "b")], "s").unwrap();
        let c = Composition::new(g.clone(), vec![Arc::new(RandomWalkPolicy::new(&g))], uniform(1), 0).unwrap();
        let chain = build_global_chain(&c, 10).unwrap();
        let objs = [Objective::Reachability { targets: vec![1] }, Objective::Reachability { targets: vec![1, 2] }];
        let v = almost_sure_verdict(&chain, &objs, 3, &|x| x);
        assert!(matches!(v.per_objective[0].witness, Some(Witness::TargetFreeBscc { .. })));
        assert_eq!(v.per_objective[1].outcome, Outcome::AlmostSure);
        let accept: Vec<bool> = v.bsccs.iter().map(|b| b.accepts[0]).collect();
        let a = absorption_probability(&chain, &chain.bsccs(), &accept);
        assert_eq!(a.exact, Some(ratio(1, 2)));
    }

    #[test]
    fn cobuchi_pair_consensus_claims() {
        let g = hexagon("t1");
        let p1 = cobuchi_convention_policy(&g, &[1, 2, 3, 4, 5], 0).unwrap();
        let p2 = cobuchi_convention_policy(&g, &[1, 2, 4, 5], 0).unwrap();
        let c = Composition::new(g, vec![Arc::new(p1), Arc::new(p2)], uniform(2), 0).unwrap();
        let chain = build_global_chain(&c, 100_000).unwrap();
        assert!(chain.is_row_stochastic());
        let report = check_consensus_claims(&chain, &c, ConsensusMode::Cobuchi).unwrap();
        assert!(report.consensus_states > 0 && report.consensus_states < report.states);
        let objs = [Objective::CoBuchi { bad: vec![1, 2, 3, 4, 5] }, Objective::CoBuchi { bad: vec![1, 2, 4, 5] }];
        assert!(almost_sure_verdict(&chain, &objs, 6, &|x| x).all_almost_sure());
    }

    #[test]
    fn state_cap_is_enforced() {
        let g = hexagon("t1");
        let p1 = cobuchi_convention_policy(&g, &[1, 2, 3, 4, 5], 0).unwrap();
        let p2 = cobuchi_convention_policy(&g, &[1, 2, 4, 5], 0).unwrap();
        let c = Composition::new(g, vec![Arc::new(p1), Arc::new(p2)], uniform(2), 0).unwrap();
        assert_eq!(build_global_chain(&c, 5).unwrap_err(), AnalysisError::StateCapExceeded { cap: 5 });
    }
}
