//! Policies that witness the failure modes of naive decoupling.

use super::{Increment, MemDist, MemState, MemoryView, MemorylessPolicy, ObservationClass, Policy, PolicyError, SimRng};
use crate::graph::{Graph, Vertex};
use crate::prob::Dist;
use crate::scheduler::Scheduler;
use std::collections::BTreeSet;

/// Checks that `graph` has exactly the given labelled edges; returns vertex indices in label order.
fn require_shape(graph: &Graph, labels: &[&str], edges: &[(&str, &str)], what: &str) -> Result<Vec<Vertex>, PolicyError> {
    let mismatch = || PolicyError::ShapeMismatch(format!("expected the {what} graph"));
    if graph.n() != labels.len() {
        return Err(mismatch());
    }
    let idx: Vec<Vertex> = labels.iter().map(|l| graph.index_of(l).ok_or_else(mismatch)).collect::<Result<_, _>>()?;
    let want: BTreeSet<(Vertex, Vertex)> = edges
        .iter()
        .map(|(a, b)| (idx[labels.iter().position(|l| l == a).unwrap()], idx[labels.iter().position(|l| l == b).unwrap()]))
        .collect();
    let have: BTreeSet<(Vertex, Vertex)> = graph.edges().collect();
    if want != have {
        return Err(mismatch());
    }
    Ok(idx)
}

const DWELL_BITS: u32 = 58;
const DWELL_MASK: u64 = (1 << DWELL_BITS) - 1;
const MAX_ENUMERATED: u64 = 1_000_000;

/// Exponential-dwell policy on the two-branch graph: after the n-th arrival at v it
/// heads to its own a-vertex and stays there for growth^n steps before exiting via b.
#[derive(Clone, Debug)]
pub struct ExpDwell {
    own: usize,
    v: Vertex,
    a: [Vertex; 2],
    b: [Vertex; 2],
    dwell: Vec<u64>,
}

pub fn exp_dwell_policy(graph: &Graph, own: usize, growth: u64, max_exponent: u32) -> Result<ExpDwell, PolicyError> {
    let idx = require_shape(
        graph,
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
        "two-branch",
    )?;
    if own > 1 {
        return Err(PolicyError::BadAgent { index: own, n: 2 });
    }
    if growth == 0 || max_exponent > 63 {
        return Err(PolicyError::ShapeMismatch("growth must be positive and max exponent at most 63".into()));
    }
    let dwell = (0..=max_exponent).map(|n| growth.checked_pow(n).map_or(DWELL_MASK, |x| x.min(DWELL_MASK))).collect();
    Ok(ExpDwell { own, v: idx[0], a: [idx[1], idx[2]], b: [idx[3], idx[4]], dwell })
}

impl ExpDwell {
    fn unpack(m: MemState) -> (usize, u64) {
        ((m.0 >> DWELL_BITS) as usize, m.0 & DWELL_MASK)
    }

    fn pack(n: usize, d: u64) -> MemState {
        MemState(((n as u64) << DWELL_BITS) | d.min(DWELL_MASK))
    }

    pub fn dwell_length(&self, attempt: usize) -> u64 {
        self.dwell[attempt.min(self.dwell.len() - 1)]
    }

    fn next(&self, m: MemState, at: Vertex) -> Vertex {
        let (n, d) = Self::unpack(m);
        let mine = self.a[self.own];
        if at == self.v {
            mine
        } else if at == mine {
            if d < self.dwell_length(n) {
                mine
            } else {
                self.b[self.own]
            }
        } else {
            self.v
        }
    }

    fn after(&self, m: MemState, at: Vertex, next: Vertex) -> MemState {
        let (n, d) = Self::unpack(m);
        if next == self.v {
            Self::pack((n + 1).min(self.dwell.len() - 1), 0)
        } else if next == at && at == self.a[self.own] {
            Self::pack(n, d + 1)
        } else {
            Self::pack(n, 0)
        }
    }
}

impl Policy for ExpDwell {
    fn name(&self) -> String {
        "exp_dwell".into()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::PathAware
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Dirac(Self::pack(0, 0))
    }
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex> {
        Dist::dirac(self.next(mem, at))
    }
    fn update(&self, mem: MemState, at: Vertex, inc: &Increment) -> MemDist {
        MemDist::Dirac(self.after(mem, at, inc.next))
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        let total: u64 = self.dwell.iter().map(|&l| l.saturating_add(1)).fold(0, u64::saturating_add);
        if total > MAX_ENUMERATED {
            return None;
        }
        Some(self.dwell.iter().enumerate().flat_map(|(n, &l)| (0..=l).map(move |d| Self::pack(n, d))).collect())
    }
    fn memory_view(&self, mem: MemState) -> MemoryView {
        MemoryView::Word(mem.0)
    }
    fn memory_digest(&self, mem: MemState) -> u64 {
        super::fnv1a(&mem.0.to_le_bytes())
    }
    fn sample_initial(&self, _at: Vertex, _rng: &mut SimRng) -> MemState {
        Self::pack(0, 0)
    }
    fn sample_propose(&self, mem: MemState, at: Vertex, _rng: &mut SimRng) -> Vertex {
        self.next(mem, at)
    }
    fn sample_update(&self, mem: MemState, at: Vertex, inc: &Increment, _rng: &mut SimRng) -> MemState {
        self.after(mem, at, inc.next)
    }
}

/// Deterministic pair for the three-vertex graph: at v agent i self-loops when the given
/// schedule picks i at this step and heads to a_i otherwise; from a_i it returns to v.
#[derive(Clone, Debug)]
pub struct DetDefeat {
    own: usize,
    v: Vertex,
    a: [Vertex; 2],
    seq: Vec<usize>,
}

pub fn det_defeat_policies(graph: &Graph, schedule: &Scheduler) -> Result<[DetDefeat; 2], PolicyError> {
    let idx = require_shape(graph, &["v", "a1", "a2"], &[("v", "a1"), ("v", "a2"), ("a1", "v"), ("a2", "v"), ("v", "v")], "three-vertex")?;
    if schedule.n_agents() != 2 {
        return Err(PolicyError::BadAgent { index: schedule.n_agents(), n: 2 });
    }
    let seq: Vec<usize> = (0..schedule.phases() as u64)
        .map(|t| schedule.agent_at(t).ok_or_else(|| PolicyError::ShapeMismatch("schedule must be deterministic".into())))
        .collect::<Result<_, _>>()?;
    let mk = |own| DetDefeat { own, v: idx[0], a: [idx[1], idx[2]], seq: seq.clone() };
    Ok([mk(0), mk(1)])
}

impl DetDefeat {
    fn next(&self, mem: MemState, at: Vertex) -> Vertex {
        if at != self.v || self.seq[mem.0 as usize] == self.own {
            self.v
        } else {
            self.a[self.own]
        }
    }
}

impl Policy for DetDefeat {
    fn name(&self) -> String {
        "det_defeat".into()
    }
    fn observation_class(&self) -> ObservationClass {
        ObservationClass::PathAware
    }
    fn initial_memory(&self, _at: Vertex) -> MemDist {
        MemDist::Dirac(MemState(0))
    }
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex> {
        Dist::dirac(self.next(mem, at))
    }
    fn update(&self, mem: MemState, _at: Vertex, _inc: &Increment) -> MemDist {
        MemDist::Dirac(MemState((mem.0 + 1) % self.seq.len() as u64))
    }
    fn memory_states(&self) -> Option<Vec<MemState>> {
        Some((0..self.seq.len() as u64).map(MemState).collect())
    }
    fn sample_propose(&self, mem: MemState, at: Vertex, _rng: &mut SimRng) -> Vertex {
        self.next(mem, at)
    }
}

/// Memoryless pair on the four-vertex graph: both go v0 → v1 and back to v0,
/// agent 1 picks v12 at v1 and agent 2 picks v11.
pub fn memoryless_cobuchi_counterexample(graph: &Graph) -> Result<[MemorylessPolicy; 2], PolicyError> {
    let idx = require_shape(
        graph,
        &["v0", "v1", "v11", "v12"],
        &[("v0", "v0"), ("v0", "v1"), ("v1", "v11"), ("v1", "v12"), ("v11", "v0"), ("v12", "v0")],
        "four-vertex",
    )?;
    let (v0, v1, v11, v12) = (idx[0], idx[1], idx[2], idx[3]);
    let mut m1 = vec![0; 4];
    m1[v0] = v1;
    m1[v1] = v12;
    m1[v11] = v0;
    m1[v12] = v0;
    let mut m2 = m1.clone();
    m2[v1] = v11;
    Ok([MemorylessPolicy::new(graph, "memoryless_cobuchi_1", m1)?, MemorylessPolicy::new(graph, "memoryless_cobuchi_2", m2)?])
}
