use super::{Increment, MemDist, MemState, MemoryView, ObservationClass, Policy, PolicyError, Signal, SimRng};
use crate::graph::{Graph, Vertex};
use crate::prob::{ratio, Dist};
use rand::Rng;

/// Deterministic memoryless policy given by a successor map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemorylessPolicy {
    name: String,
    map: Vec<Vertex>,
}

impl MemorylessPolicy {
    pub fn new(graph: &Graph, name: impl Into<String>, map: Vec<Vertex>) -> Result<Self, PolicyError> {
        if map.len() != graph.n() {
            return Err(PolicyError::ShapeMismatch(format!("map has {} entries for {} vertices", map.len(), graph.n())));
        }
        for (v, &t) in map.iter().enumerate() {
            if t >= graph.n() || !graph.has_edge(v, t) {
                return Err(PolicyError::NotASuccessor { vertex: v, target: t });
            }
        }
        Ok(MemorylessPolicy { name: name.into(), map })
    }

    pub fn map(&self) -> &[Vertex] {
        &self.map
    }
}

impl Policy for MemorylessPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::PathAware
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Dirac(MemState(0))
    }
    fn propose(&self, _mem: MemState, at: Vertex) -> Dist<Vertex> {
        Dist::dirac(self.map[at])
    }
    fn update(&self, mem: MemState, _at: Vertex, _inc: &Increment) -> MemDist {
        MemDist::Dirac(mem)
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some(vec![MemState(0)])
    }
    fn memory_view(&self, _mem: MemState) -> MemoryView {
        MemoryView::Unit
    }
    fn sample_initial(&self, _at: Vertex, _rng: &mut SimRng) -> MemState {
        MemState(0)
    }
    fn sample_propose(&self, _mem: MemState, at: Vertex, _rng: &mut SimRng) -> Vertex {
        self.map[at]
    }
    fn sample_update(&self, mem: MemState, _at: Vertex, _inc: &Increment, _rng: &mut SimRng) -> MemState {
        mem
    }
}

/// Memoryless policy proposing a uniformly random successor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomWalkPolicy {
    succ: Vec<Vec<Vertex>>,
}

impl RandomWalkPolicy {
    pub fn new(graph: &Graph) -> Self {
        RandomWalkPolicy { succ: graph.vertices().map(|v| graph.succ(v).to_vec()).collect() }
    }
}

impl Policy for RandomWalkPolicy {
    fn name(&self) -> String {
        "random_walk".into()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::PathAware
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Dirac(MemState(0))
    }
    fn propose(&self, _mem: MemState, at: Vertex) -> Dist<Vertex> {
        Dist::uniform(self.succ[at].iter().copied())
    }
    fn update(&self, mem: MemState, _at: Vertex, _inc: &Increment) -> MemDist {
        MemDist::Dirac(mem)
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some(vec![MemState(0)])
    }
    fn memory_view(&self, _mem: MemState) -> MemoryView {
        MemoryView::Unit
    }
    fn sample_propose(&self, _mem: MemState, at: Vertex, rng: &mut SimRng) -> Vertex {
        let s = &self.succ[at];
        s[rng.gen_range(0..s.len())]
    }
}

/// Cycles through `choices` on successive departures from `at`; elsewhere follows `otherwise`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlternatingPolicy {
    at: Vertex,
    choices: Vec<Vertex>,
    otherwise: Vec<Vertex>,
}

impl AlternatingPolicy {
    pub fn new(graph: &Graph, at: Vertex, choices: Vec<Vertex>, otherwise: Vec<Vertex>) -> Result<Self, PolicyError> {
        if at >= graph.n() || choices.is_empty() {
            return Err(PolicyError::ShapeMismatch("alternating policy needs a vertex and choices".into()));
        }
        for &c in &choices {
            if c >= graph.n() || !graph.has_edge(at, c) {
                return Err(PolicyError::NotASuccessor { vertex: at, target: c });
            }
        }
        MemorylessPolicy::new(graph, "", otherwise.clone())?;
        Ok(AlternatingPolicy { at, choices, otherwise })
    }
}

impl Policy for AlternatingPolicy {
    fn name(&self) -> String {
        "alternating".into()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::PathAware
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Dirac(MemState(0))
    }
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex> {
        if at == self.at {
            Dist::dirac(self.choices[mem.0 as usize % self.choices.len()])
        } else {
            Dist::dirac(self.otherwise[at])
        }
    }
    fn update(&self, mem: MemState, at: Vertex, _inc: &Increment) -> MemDist {
        if at == self.at {
            MemDist::Dirac(MemState((mem.0 + 1) % self.choices.len() as u64))
        } else {
            MemDist::Dirac(mem)
        }
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some((0..self.choices.len() as u64).map(MemState).collect())
    }
}

/// Explicit finite-state policy given by tables over (memory, vertex, observation).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TablePolicy {
    class: ObservationClass,
    n: usize,
    m: usize,
    init: Dist<MemState>,
    propose: Vec<Dist<Vertex>>,
    update: Vec<Dist<MemState>>,
}

impl TablePolicy {
    /// `propose[mem * n + v]`; `update[((mem * n + v) * n + next) * 2 + flag]`, where `flag`
    /// is 1 when a scheduled-aware policy was scheduled and 0 otherwise.
    pub fn new(
        graph: &Graph,
        class: ObservationClass,
        m: usize,
        init: Dist<MemState>,
        propose: Vec<Dist<Vertex>>,
        update: Vec<Dist<MemState>>,
    ) -> Result<Self, PolicyError> {
        let n = graph.n();
        if class == ObservationClass::FullHistoryAware {
            return Err(PolicyError::ShapeMismatch("table policies are path- or scheduled-aware".into()));
        }
        if propose.len() != m * n || update.len() != m * n * n * 2 {
            return Err(PolicyError::ShapeMismatch("table sizes do not match memory and vertex counts".into()));
        }
        for (i, d) in propose.iter().enumerate() {
            let v = i % n;
            if let Some(&t) = d.support().find(|&&t| !graph.has_edge(v, t)) {
                return Err(PolicyError::NotASuccessor { vertex: v, target: t });
            }
        }
        let bad_mem = |d: &Dist<MemState>| d.support().any(|s| s.0 as usize >= m);
        if bad_mem(&init) || update.iter().any(bad_mem) {
            return Err(PolicyError::ShapeMismatch("memory index out of range".into()));
        }
        Ok(TablePolicy { class, n, m, init, propose, update })
    }

    /// Random table policy with small integer weights, for testing.
    pub fn random<R: Rng>(graph: &Graph, m: usize, class: ObservationClass, rng: &mut R) -> Self {
        let n = graph.n();
        let weighted = |items: Vec<u64>, rng: &mut R| -> Dist<u64> {
            let k = rng.gen_range(1..=items.len().min(3));
            let mut pick = items;
            for i in 0..pick.len() {
                let j = rng.gen_range(i..pick.len());
                pick.swap(i, j);
            }
            pick.truncate(k);
            let ws: Vec<u64> = pick.iter().map(|_| rng.gen_range(1..=4)).collect();
            let total: u64 = ws.iter().sum();
            Dist::from_weights(pick.into_iter().zip(ws).map(|(x, w)| (x, ratio(w, total))))
        };
        let mems: Vec<u64> = (0..m as u64).collect();
        let init = weighted(mems.clone(), rng).map(|&x| MemState(x));
        let mut propose = Vec::with_capacity(m * n);
        for _ in 0..m {
            for v in 0..n {
                let s: Vec<u64> = graph.succ(v).iter().map(|&x| x as u64).collect();
                propose.push(weighted(s, rng).map(|&x| x as Vertex));
            }
        }
        let update = (0..m * n * n * 2).map(|_| weighted(mems.clone(), rng).map(|&x| MemState(x))).collect();
        TablePolicy { class, n, m, init, propose, update }
    }

    fn update_index(&self, mem: MemState, at: Vertex, inc: &Increment) -> usize {
        let flag = match (self.class, inc.signal) {
            (ObservationClass::ScheduledAware, Signal::Scheduled(true)) => 1,
            _ => 0,
        };
        ((mem.0 as usize * self.n + at) * self.n + inc.next) * 2 + flag
    }
}

impl Policy for TablePolicy {
    fn name(&self) -> String {
        "table".into()
    }
    fn observation_class(&self) -> ObservationClass {
        self.class
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Explicit(self.init.clone())
    }
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex> {
        self.propose[mem.0 as usize * self.n + at].clone()
    }
    fn update(&self, mem: MemState, at: Vertex, inc: &Increment) -> MemDist {
        MemDist::Explicit(self.update[self.update_index(mem, at, inc)].clone())
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some((0..self.m as u64).map(MemState).collect())
    }
    fn sample_propose(&self, mem: MemState, at: Vertex, rng: &mut SimRng) -> Vertex {
        self.propose[mem.0 as usize * self.n + at].sample(rng)
    }
    fn sample_update(&self, mem: MemState, at: Vertex, inc: &Increment, rng: &mut SimRng) -> MemState {
        self.update[self.update_index(mem, at, inc)].sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn fig2() -> Graph {
        Graph::from_labels(&["v", "a1", "a2"], &[("v", "a1"), ("v", "a2"), ("a1", "v"), ("a2", "v"), ("v", "v")], "v").unwrap()
    }

    #[test]
    fn memoryless_rejects_non_successor() {
        let g = fig2();
        assert_eq!(MemorylessPolicy::new(&g, "x", vec![0, 2, 0]).unwrap_err(), PolicyError::NotASuccessor { vertex: 1, target: 2 });
    }

    #[test]
    fn alternating_toggles_on_departure() {
        let g = fig2();
        let p = AlternatingPolicy::new(&g, 0, vec![1, 2], vec![0, 0, 0]).unwrap();
        let inc = Increment { next: 0, own: None, signal: Signal::None };
        let MemDist::Dirac(m1) = p.update(MemState(0), 0, &inc) else { panic!() };
        assert_eq!(p.propose(m1, 0), Dist::dirac(2));
        let MemDist::Dirac(m2) = p.update(m1, 0, &inc) else { panic!() };
        assert_eq!(p.propose(m2, 0), Dist::dirac(1));
    }

    #[test]
    fn random_table_policy_is_well_formed() {
        let g = fig2();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p = TablePolicy::random(&g, 3, ObservationClass::ScheduledAware, &mut rng);
        let again = TablePolicy::new(&g, p.class, p.m, p.init.clone(), p.propose.clone(), p.update.clone()).unwrap();
        assert_eq!(again, p);
        for d in &p.propose {
            assert_eq!(d.total(), crate::prob::one());
        }
    }
}
