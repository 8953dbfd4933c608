use super::{Increment, MemDist, MemState, MemoryView, ObservationClass, Policy, PolicyError, SimRng};
use crate::graph::{enumerate_simple_cycles, shortest_stems, Graph, Vertex, DEFAULT_CYCLE_CAP};
use crate::prob::{ratio, Dist};
use std::collections::HashMap;
use std::sync::Arc;

const LOST: u64 = 0;

/// Co-Büchi convention: memory is a lasso (remaining stem, good cycle). A disagreement
/// between the executed move and the agent's own proposal triggers a resample: a good
/// cycle reachable from the new vertex uniformly, then a uniform shortest stem into it.
#[derive(Debug)]
pub struct CoBuchiConvention {
    succ: Vec<Vec<Vertex>>,
    cycles: Vec<Vec<Vertex>>,
    cycle_next: Vec<Vec<Option<Vertex>>>,
    memories: Vec<(Vec<Vertex>, Option<usize>)>,
    advance: Vec<MemState>,
    resample: Vec<Arc<Dist<MemState>>>,
    digests: Vec<u64>,
    seed: u64,
}

pub fn cobuchi_convention_policy(graph: &Graph, bad: &[Vertex], seed: u64) -> Result<CoBuchiConvention, PolicyError> {
    let cycles = enumerate_simple_cycles(graph, bad, DEFAULT_CYCLE_CAP)?;
    if cycles.is_empty() {
        return Err(PolicyError::NoGoodCycle);
    }
    let n = graph.n();
    let cycle_next: Vec<Vec<Option<Vertex>>> = cycles
        .iter()
        .map(|c| {
            let mut nx = vec![None; n];
            for (i, &v) in c.iter().enumerate() {
                nx[v] = Some(c[(i + 1) % c.len()]);
            }
            nx
        })
        .collect();
    let mut memories: Vec<(Vec<Vertex>, Option<usize>)> = vec![(Vec::new(), None)];
    let mut ids: HashMap<(Vec<Vertex>, Option<usize>), u64> = HashMap::new();
    ids.insert((Vec::new(), None), LOST);
    let mut intern = |key: (Vec<Vertex>, Option<usize>), memories: &mut Vec<_>| -> u64 {
        *ids.entry(key.clone()).or_insert_with(|| {
            memories.push(key);
            (memories.len() - 1) as u64
        })
    };
    let mut resample = Vec::with_capacity(n);
    for u in graph.vertices() {
        let reachable: Vec<(usize, Vec<Vec<Vertex>>)> =
            cycles.iter().enumerate().filter_map(|(ci, c)| shortest_stems(graph, u, c).ok().map(|s| (ci, s))).collect();
        if reachable.is_empty() {
            resample.push(Arc::new(Dist::dirac(MemState(LOST))));
            continue;
        }
        let pc = ratio(1, reachable.len() as u64);
        let mut entries = Vec::new();
        for (ci, stems) in reachable {
            let ps = &pc * ratio(1, stems.len() as u64);
            for path in stems {
                // every suffix is a reachable memory; intern them all
                for k in (1..=path.len()).rev() {
                    intern((path[k..].to_vec(), Some(ci)), &mut memories);
                }
                let id = intern((path[1..].to_vec(), Some(ci)), &mut memories);
                entries.push((MemState(id), ps.clone()));
            }
        }
        resample.push(Arc::new(Dist::from_weights(entries)));
    }
    let advance: Vec<MemState> = memories
        .iter()
        .enumerate()
        .map(|(i, (rem, c))| match rem.split_first() {
            Some((_, rest)) => MemState(*ids.get(&(rest.to_vec(), *c)).expect("suffix interned")),
            None => MemState(i as u64),
        })
        .collect();
    let digests = memories
        .iter()
        .map(|(rem, c)| MemoryView::Lasso { remaining: rem.clone(), cycle: c.map(|ci| cycles[ci].clone()).unwrap_or_default() }.digest())
        .collect();
    Ok(CoBuchiConvention {
        succ: graph.vertices().map(|v| graph.succ(v).to_vec()).collect(),
        cycles,
        cycle_next,
        memories,
        advance,
        resample,
        digests,
        seed,
    })
}

impl CoBuchiConvention {
    pub fn good_cycles(&self) -> &[Vec<Vertex>] {
        &self.cycles
    }

    pub fn memory_count(&self) -> usize {
        self.memories.len()
    }

    /// Remaining stem and chosen cycle held in a memory word.
    pub fn lasso_of(&self, mem: MemState) -> (&[Vertex], Option<&[Vertex]>) {
        let (rem, c) = &self.memories[mem.0 as usize];
        (rem, c.map(|ci| self.cycles[ci].as_slice()))
    }

    /// The memory an agent holds when committed to `cycle` while standing on it.
    pub fn on_cycle_memory(&self, cycle: &[Vertex]) -> Option<MemState> {
        let ci = self.cycles.iter().position(|c| c == cycle)?;
        self.memories.iter().position(|(r, c)| r.is_empty() && *c == Some(ci)).map(|i| MemState(i as u64))
    }

    /// Whether the memory has finished its stem and the vertex lies on its cycle.
    pub fn is_settled(&self, mem: MemState, at: Vertex) -> bool {
        let (rem, c) = &self.memories[mem.0 as usize];
        rem.is_empty() && c.is_some_and(|ci| self.cycle_next[ci][at].is_some())
    }

    fn next(&self, mem: MemState, at: Vertex) -> Vertex {
        let (rem, c) = &self.memories[mem.0 as usize];
        let fallback = self.succ[at][0];
        match (rem.first(), c) {
            (Some(&w), _) if self.succ[at].binary_search(&w).is_ok() => w,
            (None, Some(ci)) => self.cycle_next[*ci][at].unwrap_or(fallback),
            _ => fallback,
        }
    }

    fn step(&self, mem: MemState, at: Vertex, inc: &Increment) -> Result<MemState, usize> {
        if inc.next == self.next(mem, at) {
            Ok(self.advance[mem.0 as usize])
        } else {
            Err(inc.next)
        }
    }
}

impl Policy for CoBuchiConvention {
    fn name(&self) -> String {
        "cobuchi_convention".into()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::ScheduledAware
    }
    fn initial_memory(&self, at: Vertex) -> MemDist {
        MemDist::Shared { key: at as u64, dist: self.resample[at].clone() }
    }
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex> {
        Dist::dirac(self.next(mem, at))
    }
    fn update(&self, mem: MemState, at: Vertex, inc: &Increment) -> MemDist {
        match self.step(mem, at, inc) {
            Ok(m) => MemDist::Dirac(m),
            Err(u) => MemDist::Shared { key: u as u64, dist: self.resample[u].clone() },
        }
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some((0..self.memories.len() as u64).map(MemState).collect())
    }
    fn memory_view(&self, mem: MemState) -> MemoryView {
        let (rem, c) = self.lasso_of(mem);
        MemoryView::Lasso { remaining: rem.to_vec(), cycle: c.map(<[Vertex]>::to_vec).unwrap_or_default() }
    }
    fn memory_digest(&self, mem: MemState) -> u64 {
        self.digests[mem.0 as usize]
    }
    fn rng_salt(&self) -> u64 {
        self.seed
    }
    fn sample_propose(&self, mem: MemState, at: Vertex, _rng: &mut SimRng) -> Vertex {
        self.next(mem, at)
    }
    fn sample_update(&self, mem: MemState, at: Vertex, inc: &Increment, rng: &mut SimRng) -> MemState {
        match self.step(mem, at, inc) {
            Ok(m) => m,
            Err(u) => self.resample[u].sample(rng),
        }
    }
}
