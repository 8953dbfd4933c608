use super::{solo_increment, MemState, MemorylessPolicy, Policy, PolicyError};
use crate::graph::{is_strongly_connected, Graph, Vertex};
use crate::linalg::{solve_exact, solve_iterative, to_float_rows};
use crate::objectives::mask;
use crate::prob::{one, to_f64, Prob};
use std::collections::{HashMap, VecDeque};

pub const EXACT_HITTING_LIMIT: usize = 2000;

/// Memoryless policy stepping to a successor closest to `targets`; ties go to the lowest index.
/// On a target vertex it steps to the successor closest to the targets again.
pub fn shortest_path_policy(graph: &Graph, targets: &[Vertex]) -> Result<MemorylessPolicy, PolicyError> {
    let t = mask(graph.n(), targets);
    let dist = graph.distances_to(&t);
    let mut map = Vec::with_capacity(graph.n());
    for v in graph.vertices() {
        if dist[v].is_none() {
            return Err(PolicyError::Unreachable { vertex: v });
        }
        let best = graph.succ(v).iter().copied().min_by_key(|&u| (dist[u].unwrap_or(usize::MAX), u)).expect("deadlock-free");
        map.push(best);
    }
    MemorylessPolicy::new(graph, "shortest_path", map)
}

/// Convention policy for Büchi objectives on strongly connected graphs.
pub fn buchi_convention_policy(graph: &Graph, accepting: &[Vertex]) -> Result<MemorylessPolicy, PolicyError> {
    if accepting.is_empty() {
        return Err(PolicyError::EmptyAccepting);
    }
    if !is_strongly_connected(graph) {
        return Err(PolicyError::NotStronglyConnected);
    }
    let p = shortest_path_policy(graph, accepting)?;
    MemorylessPolicy::new(graph, "buchi_convention", p.map().to_vec())
}

/// Worst expected hitting time over all (memory, vertex) pairs when the policy moves alone.
#[derive(Clone, Debug, PartialEq)]
pub struct HittingBound {
    pub max_expected: f64,
    pub exact: Option<Prob>,
    pub worst: (MemState, Vertex),
}

/// Expected time τ = min{t ≥ 1 : v_t ∈ targets} under solo control, maximised over all
/// starting pairs. `Ok(None)` when some pair misses the targets with positive probability.
pub fn verify_bounded_hitting(
    graph: &Graph,
    policy: &dyn Policy,
    targets: &[Vertex],
    state_cap: usize,
) -> Result<Option<HittingBound>, PolicyError> {
    let t = mask(graph.n(), targets);
    let mems = policy.memory_states().ok_or(PolicyError::MemoryNotEnumerable)?;
    let mut index: HashMap<(MemState, Vertex), usize> = HashMap::new();
    let mut states: Vec<(MemState, Vertex)> = Vec::new();
    let mut queue = VecDeque::new();
    for &m in &mems {
        for v in graph.vertices() {
            index.insert((m, v), states.len());
            states.push((m, v));
            queue.push_back(states.len() - 1);
        }
    }
    let mut edges: Vec<Vec<(usize, Prob)>> = Vec::new();
    while let Some(s) = queue.pop_front() {
        let (m, v) = states[s];
        let mut row: HashMap<usize, Prob> = HashMap::new();
        for (u, pu) in policy.propose(m, v).entries() {
            for (m2, pm) in policy.update(m, v, &solo_increment(policy, *u)).to_dist().entries() {
                let key = (*m2, *u);
                let id = match index.get(&key) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= state_cap {
                            return Err(PolicyError::StateCapExceeded { cap: state_cap });
                        }
                        index.insert(key, states.len());
                        states.push(key);
                        queue.push_back(states.len() - 1);
                        states.len() - 1
                    }
                };
                *row.entry(id).or_insert_with(crate::prob::zero) += pu * pm;
            }
        }
        if edges.len() <= s {
            edges.resize(s + 1, Vec::new());
        }
        let mut row: Vec<_> = row.into_iter().collect();
        row.sort_by_key(|(j, _)| *j);
        edges[s] = row;
    }
    let n = states.len();
    edges.resize(n, Vec::new());
    let in_t = |s: usize| t[states[s].1];
    // states that hit the targets in ≥ 1 step with positive probability
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in edges.iter().enumerate() {
        for (j, _) in row {
            if !in_t(*j) {
                rev[*j].push(s);
            }
        }
    }
    let mut can_hit = vec![false; n];
    let mut work: VecDeque<usize> = VecDeque::new();
    for (s, row) in edges.iter().enumerate() {
        if row.iter().any(|(j, _)| in_t(*j)) {
            can_hit[s] = true;
            work.push_back(s);
        }
    }
    while let Some(s) = work.pop_front() {
        for &p in &rev[s] {
            if !can_hit[p] {
                can_hit[p] = true;
                work.push_back(p);
            }
        }
    }
    // any state that can drift (avoiding targets) into a hopeless state has infinite expectation
    if can_hit.iter().any(|&c| !c) {
        return Ok(None);
    }
    let q: Vec<Vec<(usize, Prob)>> = edges.iter().map(|row| row.iter().filter(|(j, _)| !in_t(*j)).cloned().collect()).collect();
    let (values, exact): (Vec<f64>, Option<Vec<Prob>>) = if n <= EXACT_HITTING_LIMIT {
        let b = vec![vec![one()]; n];
        let x = solve_exact(&q, &b).ok_or(PolicyError::StateCapExceeded { cap: n })?;
        let ex: Vec<Prob> = x.into_iter().map(|mut r| r.remove(0)).collect();
        (ex.iter().map(to_f64).collect(), Some(ex))
    } else {
        let (x, _) = solve_iterative(&to_float_rows(&q), &vec![1.0; n], 1e-12, 1_000_000);
        (x, None)
    };
    let limit = mems.len() * graph.n();
    let worst = (0..limit).max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a))).expect("non-empty");
    Ok(Some(HittingBound { max_expected: values[worst], exact: exact.map(|e| e[worst].clone()), worst: states[worst] }))
}
