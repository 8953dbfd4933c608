//! Finite directed graphs with dense vertex indices.
//!
//! Successor lists are sorted and duplicate-free, and every vertex has at
//! least one successor. Besides the graph type this module provides Tarjan
//! SCCs, Johnson's simple-cycle enumeration and shortest-stem lassos.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use thiserror::Error;

pub type Vertex = usize;

pub const DEFAULT_CYCLE_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("vertex {vertex} ({label}) has no successor")]
    Deadlock { vertex: Vertex, label: String },
    #[error("edge ({from}, {to}) references a vertex outside 0..{n}")]
    MalformedEdge { from: usize, to: usize, n: usize },
    #[error("initial vertex {init} outside 0..{n}")]
    BadInit { init: usize, n: usize },
    #[error("simple cycle enumeration exceeded the cap of {cap}")]
    CycleCapExceeded { cap: usize },
    #[error("cycle is not reachable from vertex {from}")]
    Unreachable { from: Vertex },
    #[error("invalid lasso: {0}")]
    InvalidLasso(String),
    #[error("invalid graph json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Graph {
    labels: Vec<String>,
    succ: Vec<Vec<Vertex>>,
    init: Vertex,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    vertices: Vec<String>,
    edges: Vec<[usize; 2]>,
    init: usize,
}

impl TryFrom<GraphJson> for Graph {
    type Error = GraphError;
    fn try_from(g: GraphJson) -> Result<Self, GraphError> {
        Graph::new(g.vertices, g.edges.iter().map(|e| (e[0], e[1])), g.init)
    }
}

impl From<Graph> for GraphJson {
    fn from(g: Graph) -> Self {
        GraphJson { edges: g.edges().map(|(a, b)| [a, b]).collect(), vertices: g.labels, init: g.init }
    }
}

impl Graph {
    /// Builds and validates a graph. Edges may come in any order and may repeat.
    pub fn new<I>(labels: Vec<String>, edges: I, init: Vertex) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (Vertex, Vertex)>,
    {
        let n = labels.len();
        let mut succ = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::MalformedEdge { from: a, to: b, n });
            }
            succ[a].push(b);
        }
        Self::from_successors(labels, succ, init)
    }

    pub fn from_successors(labels: Vec<String>, mut succ: Vec<Vec<Vertex>>, init: Vertex) -> Result<Self, GraphError> {
        let n = labels.len();
        if succ.len() != n {
            return Err(GraphError::Json(format!("{} labels but {} successor lists", n, succ.len())));
        }
        for (a, s) in succ.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if let Some(&b) = s.iter().find(|&&b| b >= n) {
                return Err(GraphError::MalformedEdge { from: a, to: b, n });
            }
        }
        let g = Graph { labels, succ, init };
        validate(&g)?;
        Ok(g)
    }

    /// Convenience constructor from labels and labelled edges.
    pub fn from_labels(labels: &[&str], edges: &[(&str, &str)], init: &str) -> Result<Self, GraphError> {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let idx = |s: &str| labels.iter().position(|l| l == s).ok_or_else(|| GraphError::Json(format!("unknown label {s}")));
        let mut es = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            es.push((idx(a)?, idx(b)?));
        }
        let init = idx(init)?;
        Graph::new(labels, es, init)
    }

    pub fn from_json_str(s: &str) -> Result<Self, GraphError> {
        serde_json::from_str(s).map_err(|e| GraphError::Json(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("graph serialisation")
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn init(&self) -> Vertex {
        self.init
    }

    pub fn with_init(&self, init: Vertex) -> Result<Self, GraphError> {
        if init >= self.n() {
            return Err(GraphError::BadInit { init, n: self.n() });
        }
        Ok(Graph { init, ..self.clone() })
    }

    pub fn succ(&self, v: Vertex) -> &[Vertex] {
        &self.succ[v]
    }

    pub fn has_edge(&self, a: Vertex, b: Vertex) -> bool {
        self.succ[a].binary_search(&b).is_ok()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: Vertex) -> &str {
        &self.labels[v]
    }

    pub fn index_of(&self, label: &str) -> Option<Vertex> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn vertices(&self) -> std::ops::Range<Vertex> {
        0..self.n()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.succ.iter().enumerate().flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn predecessors(&self) -> Vec<Vec<Vertex>> {
        let mut pred = vec![Vec::new(); self.n()];
        for (a, b) in self.edges() {
            pred[b].push(a);
        }
        pred
    }

    /// Induced subgraph on `keep`, returned with the map from new to old indices.
    /// Fails if the initial vertex is dropped or some kept vertex loses all successors.
    pub fn induced(&self, keep: &[bool]) -> Result<(Graph, Vec<Vertex>), GraphError> {
        let old_of: Vec<Vertex> = self.vertices().filter(|&v| keep[v]).collect();
        let mut new_of = vec![usize::MAX; self.n()];
        for (i, &v) in old_of.iter().enumerate() {
            new_of[v] = i;
        }
        if !keep[self.init] {
            return Err(GraphError::BadInit { init: self.init, n: old_of.len() });
        }
        let labels = old_of.iter().map(|&v| self.labels[v].clone()).collect();
        let succ = old_of.iter().map(|&v| self.succ[v].iter().filter(|&&w| keep[w]).map(|&w| new_of[w]).collect()).collect();
        let g = Graph::from_successors(labels, succ, new_of[self.init])?;
        Ok((g, old_of))
    }

    /// Vertices from which some vertex of `targets` is reachable in zero or more steps.
    pub fn can_reach(&self, targets: &[bool]) -> Vec<bool> {
        let pred = self.predecessors();
        let mut seen = targets.to_vec();
        let mut queue: VecDeque<Vertex> = self.vertices().filter(|&v| targets[v]).collect();
        while let Some(v) = queue.pop_front() {
            for &p in &pred[v] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// BFS distance from every vertex to the set `targets` (0 on targets).
    pub fn distances_to(&self, targets: &[bool]) -> Vec<Option<usize>> {
        let pred = self.predecessors();
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        for v in self.vertices().filter(|&v| targets[v]) {
            dist[v] = Some(0);
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &p in &pred[v] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }
}

pub fn validate(graph: &Graph) -> Result<(), GraphError> {
    if graph.n() == 0 {
        return Err(GraphError::Empty);
    }
    if graph.init >= graph.n() {
        return Err(GraphError::BadInit { init: graph.init, n: graph.n() });
    }
    if let Some(v) = graph.vertices().find(|&v| graph.succ[v].is_empty()) {
        return Err(GraphError::Deadlock { vertex: v, label: graph.labels[v].clone() });
    }
    Ok(())
}

pub fn is_strongly_connected(graph: &Graph) -> bool {
    scc_decompose(graph).len() == 1
}

/// SCCs in reverse topological order: sinks come first. Each block is sorted.
pub fn scc_decompose(graph: &Graph) -> Vec<Vec<Vertex>> {
    tarjan(graph.n(), |v, i| graph.succ[v].get(i).copied())
}

/// Iterative Tarjan over an implicit graph where `succ_at(v, i)` is the i-th successor of v.
pub fn tarjan<F>(n: usize, succ_at: F) -> Vec<Vec<usize>>
where
    F: Fn(usize, usize) -> Option<usize>,
{
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let mut next = 0usize;
    let mut out = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        frames.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = frames.last_mut() {
            if let Some(w) = succ_at(v, *i) {
                *i += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut block = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    block.push(w);
                    if w == v {
                        break;
                    }
                }
                block.sort_unstable();
                out.push(block);
            }
        }
    }
    out
}

/// All simple cycles avoiding `forbidden`, each rotated to start at its minimum vertex,
/// sorted lexicographically.
pub fn enumerate_simple_cycles(graph: &Graph, forbidden: &[Vertex], cap: usize) -> Result<Vec<Vec<Vertex>>, GraphError> {
    let n = graph.n();
    let mut allowed = vec![true; n];
    for &f in forbidden {
        if f < n {
            allowed[f] = false;
        }
    }
    let mut out = Vec::new();
    for s in 0..n {
        if !allowed[s] {
            continue;
        }
        let live = |v: usize| v >= s && allowed[v];
        let sub = tarjan(n, |v, i| {
            if !live(v) {
                return None;
            }
            graph.succ[v].iter().copied().filter(|&w| live(w)).nth(i)
        });
        let Some(block) = sub.into_iter().find(|b| b.contains(&s)) else { continue };
        let mut in_comp = vec![false; n];
        for &v in &block {
            in_comp[v] = true;
        }
        let mut j = Johnson {
            graph,
            start: s,
            in_comp: &in_comp,
            blocked: vec![false; n],
            b_sets: vec![Vec::new(); n],
            path: Vec::new(),
            out: &mut out,
            cap,
        };
        j.circuit(s)?;
    }
    out.sort();
    Ok(out)
}

struct Johnson<'a> {
    graph: &'a Graph,
    start: Vertex,
    in_comp: &'a [bool],
    blocked: Vec<bool>,
    b_sets: Vec<Vec<Vertex>>,
    path: Vec<Vertex>,
    out: &'a mut Vec<Vec<Vertex>>,
    cap: usize,
}

impl Johnson<'_> {
    fn circuit(&mut self, v: Vertex) -> Result<bool, GraphError> {
        let mut found = false;
        self.path.push(v);
        self.blocked[v] = true;
        for &w in self.graph.succ(v) {
            if !self.in_comp[w] {
                continue;
            }
            if w == self.start {
                if self.out.len() >= self.cap {
                    return Err(GraphError::CycleCapExceeded { cap: self.cap });
                }
                self.out.push(self.path.clone());
                found = true;
            } else if !self.blocked[w] && self.circuit(w)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in self.graph.succ(v) {
                if self.in_comp[w] && !self.b_sets[w].contains(&v) {
                    self.b_sets[w].push(v);
                }
            }
        }
        self.path.pop();
        Ok(found)
    }

    fn unblock(&mut self, u: Vertex) {
        let mut work = vec![u];
        while let Some(x) = work.pop() {
            if !self.blocked[x] {
                continue;
            }
            self.blocked[x] = false;
            work.extend(std::mem::take(&mut self.b_sets[x]));
        }
    }
}

/// Rotates a cycle so that it starts at its minimum vertex.
pub fn canonical_rotation(cycle: &[Vertex]) -> Vec<Vertex> {
    let Some(pos) = cycle.iter().enumerate().min_by_key(|(_, v)| **v).map(|(i, _)| i) else {
        return Vec::new();
    };
    cycle[pos..].iter().chain(&cycle[..pos]).copied().collect()
}

/// Checks that `cycle` is a closed walk in `graph`; with `simple` also that it repeats no vertex.
pub fn check_cycle(graph: &Graph, cycle: &[Vertex], simple: bool) -> Result<(), GraphError> {
    if cycle.is_empty() {
        return Err(GraphError::InvalidLasso("empty cycle".into()));
    }
    for (i, &a) in cycle.iter().enumerate() {
        if a >= graph.n() {
            return Err(GraphError::InvalidLasso(format!("vertex {a} out of range")));
        }
        let b = cycle[(i + 1) % cycle.len()];
        if b >= graph.n() || !graph.has_edge(a, b) {
            return Err(GraphError::InvalidLasso(format!("missing cycle edge ({a}, {b})")));
        }
    }
    if simple {
        let distinct: HashSet<_> = cycle.iter().collect();
        if distinct.len() != cycle.len() {
            return Err(GraphError::InvalidLasso("cycle repeats a vertex".into()));
        }
    }
    Ok(())
}

/// An ultimately periodic path `stem · cycle^ω`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lasso {
    pub stem: Vec<Vertex>,
    pub cycle: Vec<Vertex>,
}

impl Lasso {
    /// Validated lasso with a simple stem disjoint from a simple cycle.
    pub fn new(graph: &Graph, stem: Vec<Vertex>, cycle: Vec<Vertex>) -> Result<Self, GraphError> {
        let l = Lasso { stem, cycle };
        l.check(graph, true)?;
        Ok(l)
    }

    /// Lasso whose period is any closed walk (vertices may repeat).
    pub fn closed_walk(graph: &Graph, stem: Vec<Vertex>, cycle: Vec<Vertex>) -> Result<Self, GraphError> {
        let l = Lasso { stem, cycle };
        l.check(graph, false)?;
        Ok(l)
    }

    pub fn check(&self, graph: &Graph, simple: bool) -> Result<(), GraphError> {
        check_cycle(graph, &self.cycle, simple)?;
        for w in self.stem.windows(2) {
            if w[0] >= graph.n() || w[1] >= graph.n() || !graph.has_edge(w[0], w[1]) {
                return Err(GraphError::InvalidLasso(format!("missing stem edge ({}, {})", w[0], w[1])));
            }
        }
        if let Some(&last) = self.stem.last() {
            if last >= graph.n() || !graph.has_edge(last, self.cycle[0]) {
                return Err(GraphError::InvalidLasso("stem does not lead into the cycle".into()));
            }
        }
        if simple {
            let stem_set: HashSet<_> = self.stem.iter().collect();
            if stem_set.len() != self.stem.len() {
                return Err(GraphError::InvalidLasso("stem repeats a vertex".into()));
            }
            if self.cycle.iter().any(|v| stem_set.contains(v)) {
                return Err(GraphError::InvalidLasso("stem meets the cycle".into()));
            }
        }
        Ok(())
    }

    pub fn first(&self) -> Vertex {
        self.stem.first().copied().unwrap_or(self.cycle[0])
    }

    /// The infinite vertex sequence.
    pub fn walk(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.stem.iter().copied().chain(self.cycle.iter().copied().cycle())
    }
}

/// All shortest paths from `from` into the vertex set of `cycle`, each ending at its entry vertex.
pub fn shortest_stems(graph: &Graph, from: Vertex, cycle: &[Vertex]) -> Result<Vec<Vec<Vertex>>, GraphError> {
    let mut target = vec![false; graph.n()];
    for &c in cycle {
        target[c] = true;
    }
    let dist = graph.distances_to(&target);
    if dist[from].is_none() {
        return Err(GraphError::Unreachable { from });
    }
    let mut out = Vec::new();
    let mut path = vec![from];
    fn rec(g: &Graph, dist: &[Option<usize>], path: &mut Vec<Vertex>, out: &mut Vec<Vec<Vertex>>) {
        let v = *path.last().unwrap();
        let d = dist[v].unwrap();
        if d == 0 {
            out.push(path.clone());
            return;
        }
        for &w in g.succ(v) {
            if dist[w] == Some(d - 1) {
                path.push(w);
                rec(g, dist, path, out);
                path.pop();
            }
        }
    }
    rec(graph, &dist, &mut path, &mut out);
    Ok(out)
}

/// Lasso from `from` into a simple `cycle`, with a stem drawn uniformly among shortest stems.
pub fn sample_lasso<R: Rng + ?Sized>(graph: &Graph, from: Vertex, cycle: &[Vertex], rng: &mut R) -> Result<Lasso, GraphError> {
    check_cycle(graph, cycle, true)?;
    let mut target = vec![false; graph.n()];
    for &c in cycle {
        target[c] = true;
    }
    let dist = graph.distances_to(&target);
    if dist[from].is_none() {
        return Err(GraphError::Unreachable { from });
    }
    let mut order: Vec<Vertex> = graph.vertices().filter(|&v| dist[v].is_some()).collect();
    order.sort_by_key(|&v| dist[v]);
    let mut count = vec![0u128; graph.n()];
    for &v in &order {
        let d = dist[v].unwrap();
        count[v] = if d == 0 {
            1
        } else {
            graph.succ(v).iter().filter(|&&w| dist[w] == Some(d - 1)).map(|&w| count[w]).fold(0u128, u128::saturating_add)
        };
    }
    let mut stem = Vec::new();
    let mut v = from;
    while dist[v] != Some(0) {
        stem.push(v);
        let d = dist[v].unwrap();
        let mut pick = rng.gen_range(0..count[v]);
        let mut chosen = None;
        for &w in graph.succ(v) {
            if dist[w] == Some(d - 1) {
                if pick < count[w] {
                    chosen = Some(w);
                    break;
                }
                pick -= count[w];
            }
        }
        v = chosen.expect("path count consistent");
    }
    let pos = cycle.iter().position(|&c| c == v).expect("entry on cycle");
    let rotated = cycle[pos..].iter().chain(&cycle[..pos]).copied().collect();
    Ok(Lasso { stem, cycle: rotated })
}
