use super::{Increment, MemDist, MemState, MemoryView, ObservationClass, Policy, PolicyError, Signal, SimRng};
use crate::graph::{tarjan, Graph, Lasso, Vertex};
use crate::objectives::Colour;
use crate::prob::Dist;
use crate::scheduler::{Scheduler, SchedulerSpec};
use std::collections::VecDeque;
use std::sync::Arc;

/// One memoryless successor map per agent.
pub type Tuple = Vec<Vec<Vertex>>;

pub const DEFAULT_TUPLE_CAP: u128 = 1_000_000;

/// BSCCs of the chain on (vertex, scheduler phase) where agent j's map is applied
/// whenever j can be scheduled. With `from`, only BSCCs reachable from (from, 0).
fn tuple_bsccs(graph: &Graph, tuple: &Tuple, scheduler: &Scheduler, from: Option<Vertex>) -> Vec<Vec<Vertex>> {
    let phases = scheduler.phases();
    let n = graph.n() * phases;
    let support: Vec<Vec<usize>> = (0..phases).map(|p| scheduler.distribution(p).support().copied().collect()).collect();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let (v, p) = (s / phases, s % phases);
            let np = scheduler.next_phase(p);
            let mut out: Vec<usize> = support[p].iter().map(|&j| tuple[j][v] * phases + np).collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let reach = match from {
        Some(v0) => {
            let mut seen = vec![false; n];
            let mut q = VecDeque::from([v0 * phases]);
            seen[v0 * phases] = true;
            while let Some(s) = q.pop_front() {
                for &t in &succ[s] {
                    if !seen[t] {
                        seen[t] = true;
                        q.push_back(t);
                    }
                }
            }
            seen
        }
        None => vec![true; n],
    };
    let sccs = tarjan(n, |s, i| succ[s].get(i).copied());
    let mut comp = vec![0usize; n];
    for (ci, c) in sccs.iter().enumerate() {
        for &s in c {
            comp[s] = ci;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(ci, c)| reach[c[0]] && c.iter().all(|&s| succ[s].iter().all(|&t| comp[t] == *ci)))
        .map(|(_, c)| {
            let mut vs: Vec<Vertex> = c.iter().map(|&s| s / phases).collect();
            vs.sort_unstable();
            vs.dedup();
            vs
        })
        .collect()
}

fn even_top(colouring: &[Colour], vs: &[Vertex]) -> bool {
    vs.iter().map(|&v| colouring[v]).max().is_some_and(|c| c % 2 == 0)
}

/// Every BSCC reachable from the initial vertex has an even maximal colour.
pub fn check_tuple_good(graph: &Graph, tuple: &Tuple, scheduler: &Scheduler, colouring: &[Colour]) -> bool {
    tuple_bsccs(graph, tuple, scheduler, Some(graph.init())).iter().all(|b| even_top(colouring, b))
}

/// Every BSCC, from any start, has an even maximal colour.
pub fn tuple_good_everywhere(graph: &Graph, tuple: &Tuple, scheduler: &Scheduler, colouring: &[Colour]) -> bool {
    tuple_bsccs(graph, tuple, scheduler, None).iter().all(|b| even_top(colouring, b))
}

fn uniform(n_agents: usize) -> Scheduler {
    SchedulerSpec::Uniform { n: None }.resolve(n_agents).expect("positive agent count")
}

/// All memoryless successor maps, in lexicographic order.
fn all_maps(graph: &Graph) -> Vec<Vec<Vertex>> {
    let mut maps = vec![Vec::with_capacity(graph.n())];
    for v in graph.vertices() {
        maps = maps
            .into_iter()
            .flat_map(|m| {
                graph.succ(v).iter().map(move |&w| {
                    let mut m2 = m.clone();
                    m2.push(w);
                    m2
                })
            })
            .collect();
    }
    maps
}

pub fn tuple_space_size(graph: &Graph, n_agents: usize) -> u128 {
    let maps = graph.vertices().fold(1u128, |acc, v| acc.saturating_mul(graph.succ(v).len() as u128));
    (0..n_agents).fold(1u128, |acc, _| acc.saturating_mul(maps))
}

/// Tuples that are good from every start vertex under a fair scheduler, in lexicographic order.
pub fn enumerate_good_tuples(graph: &Graph, colouring: &[Colour], n_agents: usize, cap: u128) -> Result<Vec<Tuple>, PolicyError> {
    let size = tuple_space_size(graph, n_agents);
    if size > cap {
        return Err(PolicyError::TupleSpaceCapExceeded { size, cap });
    }
    let maps = all_maps(graph);
    let sched = uniform(n_agents);
    let mut digits = vec![0usize; n_agents];
    let mut out = Vec::new();
    loop {
        let tuple: Tuple = digits.iter().map(|&d| maps[d].clone()).collect();
        if tuple_good_everywhere(graph, &tuple, &sched, colouring) {
            out.push(tuple);
        }
        let mut i = n_agents;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < maps.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

fn loop_erase(walk: &[Vertex]) -> Vec<Vertex> {
    let mut path: Vec<Vertex> = Vec::new();
    for &v in walk {
        if let Some(pos) = path.iter().position(|&u| u == v) {
            path.truncate(pos + 1);
        } else {
            path.push(v);
        }
    }
    path
}

/// Builds a tuple whose mixture follows a witness path satisfying every colouring.
/// Segment i runs from the highest-κ_i vertex of the period to the highest-κ_{i+1}
/// vertex, loop-erased; agent i's map follows segment i first, then i+1, and so on.
/// Off-period vertices step toward the period along shortest paths.
pub fn construct_good_tuple(graph: &Graph, witness: &Lasso, colourings: &[Vec<Colour>]) -> Result<Tuple, PolicyError> {
    witness.check(graph, false).map_err(|e| PolicyError::WitnessInvalid(e.to_string()))?;
    let n_agents = colourings.len();
    if n_agents == 0 {
        return Err(PolicyError::WitnessInvalid("no colourings".into()));
    }
    let period = &witness.cycle;
    let len = period.len();
    let mut anchors = Vec::with_capacity(n_agents);
    for (i, k) in colourings.iter().enumerate() {
        if k.len() != graph.n() {
            return Err(PolicyError::WitnessInvalid(format!("colouring {i} has wrong length")));
        }
        if !even_top(k, period) {
            return Err(PolicyError::WitnessInvalid(format!("witness violates colouring {i}")));
        }
        let top = period.iter().map(|&v| k[v]).max().unwrap();
        anchors.push(period.iter().position(|&v| k[v] == top).unwrap());
    }
    let mut segments: Vec<Vec<Vertex>> = (0..n_agents)
        .map(|i| {
            let a = anchors[i];
            let b = anchors[(i + 1) % n_agents];
            let steps = (b + len - a) % len;
            let walk: Vec<Vertex> = (0..=steps).map(|s| period[(a + s) % len]).collect();
            loop_erase(&walk)
        })
        .collect();
    if segments.iter().all(|s| s.len() < 2) {
        let a = anchors[0];
        let mut walk: Vec<Vertex> = (0..len).map(|s| period[(a + s) % len]).collect();
        walk = loop_erase(&walk);
        walk.push(period[a]);
        segments = vec![walk; n_agents];
    }
    let mut on_period = vec![false; graph.n()];
    for s in &segments {
        for &v in s {
            on_period[v] = true;
        }
    }
    let dist = graph.distances_to(&on_period);
    let approach: Vec<Option<Vertex>> = graph
        .vertices()
        .map(|v| {
            if on_period[v] {
                return None;
            }
            graph.succ(v).iter().copied().filter(|&w| dist[w].is_some()).min_by_key(|&w| (dist[w], w))
        })
        .collect();
    let mut tuple = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let mut theta: Vec<Option<Vertex>> = approach.clone();
        for k in 0..n_agents {
            let seg = &segments[(i + k) % n_agents];
            for w in seg.windows(2) {
                if theta[w[0]].is_none() {
                    theta[w[0]] = Some(w[1]);
                }
            }
        }
        tuple.push(graph.vertices().map(|v| theta[v].unwrap_or_else(|| graph.succ(v)[0])).collect::<Vec<_>>());
    }
    let sched = uniform(n_agents);
    for (i, k) in colourings.iter().enumerate() {
        if !check_tuple_good(graph, &tuple, &sched, k) {
            return Err(PolicyError::ConstructionFailed { colouring: i });
        }
    }
    Ok(tuple)
}

/// Parity convention: memory is a full N-tuple of maps drawn from the agent's good list.
/// The agent proposes with its own map and resamples the whole tuple uniformly when the
/// scheduled agent's move disagrees with that agent's map in the current tuple.
#[derive(Debug)]
pub struct ParityConvention {
    own: usize,
    tuples: Vec<Tuple>,
    resample: Arc<Dist<MemState>>,
    digests: Vec<u64>,
}

pub fn parity_convention_policy(
    graph: &Graph,
    colouring: &[Colour],
    own: usize,
    n_agents: usize,
    witness: Option<&Lasso>,
    cap: u128,
) -> Result<ParityConvention, PolicyError> {
    if own >= n_agents {
        return Err(PolicyError::BadAgent { index: own, n: n_agents });
    }
    if colouring.len() != graph.n() {
        return Err(PolicyError::ShapeMismatch("colouring length differs from vertex count".into()));
    }
    let mut tuples = match enumerate_good_tuples(graph, colouring, n_agents, cap) {
        Ok(t) => t,
        Err(PolicyError::TupleSpaceCapExceeded { .. }) if witness.is_some() => Vec::new(),
        Err(e) => return Err(e),
    };
    if let Some(w) = witness {
        let seed = construct_good_tuple(graph, w, &vec![colouring.to_vec(); n_agents])?;
        if tuple_good_everywhere(graph, &seed, &uniform(n_agents), colouring) && !tuples.contains(&seed) {
            tuples.push(seed);
        }
    }
    if tuples.is_empty() {
        return Err(PolicyError::NoGoodTuple);
    }
    let resample = Arc::new(Dist::uniform((0..tuples.len() as u64).map(MemState)));
    let digests = tuples.iter().map(|t| MemoryView::Tuple(t.clone()).digest()).collect();
    Ok(ParityConvention { own, tuples, resample, digests })
}

impl ParityConvention {
    pub fn good_tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub fn tuple_of(&self, mem: MemState) -> &Tuple {
        &self.tuples[mem.0 as usize]
    }

    fn consistent(&self, mem: MemState, at: Vertex, inc: &Increment) -> bool {
        let t = &self.tuples[mem.0 as usize];
        match inc.signal {
            Signal::Agent(j) if j < t.len() => t[j][at] == inc.next,
            _ => t.iter().any(|theta| theta[at] == inc.next),
        }
    }
}

impl Policy for ParityConvention {
    fn name(&self) -> String {
        "parity_convention".into()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::FullHistoryAware
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Shared { key: 0, dist: self.resample.clone() }
    }
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex> {
        Dist::dirac(self.tuples[mem.0 as usize][self.own][at])
    }
    fn update(&self, mem: MemState, at: Vertex, inc: &Increment) -> MemDist {
        if self.consistent(mem, at, inc) {
            MemDist::Dirac(mem)
        } else {
            MemDist::Shared { key: 0, dist: self.resample.clone() }
        }
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some((0..self.tuples.len() as u64).map(MemState).collect())
    }
    fn memory_view(&self, mem: MemState) -> MemoryView {
        MemoryView::Tuple(self.tuples[mem.0 as usize].clone())
    }
    fn memory_digest(&self, mem: MemState) -> u64 {
        self.digests[mem.0 as usize]
    }
    fn own_index(&self) -> usize {
        self.own
    }
    fn sample_propose(&self, mem: MemState, at: Vertex, _rng: &mut SimRng) -> Vertex {
        self.tuples[mem.0 as usize][self.own][at]
    }
    fn sample_update(&self, mem: MemState, at: Vertex, inc: &Increment, rng: &mut SimRng) -> MemState {
        if self.consistent(mem, at, inc) {
            mem
        } else {
            MemState(rand::Rng::gen_range(rng, 0..self.tuples.len() as u64))
        }
    }
}
