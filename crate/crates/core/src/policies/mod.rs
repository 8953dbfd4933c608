//! Finite-state stochastic policies.
//!
//! A policy owns an opaque memory word per agent. At every step it proposes a
//! successor of the current vertex and then updates its memory from what it
//! is allowed to observe: the next vertex, optionally its own proposal, and a
//! scheduling signal whose content depends on the observation class.
//!
//! The exact interface (`propose`, `update`) returns distributions and drives
//! the global chain; the `sample_*` methods drive simulation and must draw
//! from the same distributions.

mod basic;
mod buchi;
mod cobuchi;
mod counterexamples;
mod parity;

pub use basic::{AlternatingPolicy, MemorylessPolicy, RandomWalkPolicy, TablePolicy};
pub use buchi::{buchi_convention_policy, shortest_path_policy, verify_bounded_hitting, HittingBound};
pub use cobuchi::{cobuchi_convention_policy, CoBuchiConvention};
pub use counterexamples::{det_defeat_policies, exp_dwell_policy, memoryless_cobuchi_counterexample, DetDefeat, ExpDwell};
pub use parity::{
    check_tuple_good, construct_good_tuple, enumerate_good_tuples, parity_convention_policy, tuple_good_everywhere, ParityConvention,
    Tuple, DEFAULT_TUPLE_CAP,
};

use crate::graph::{GraphError, Vertex};
use crate::objectives::ObjectiveError;
use crate::prob::{Dist, Prob};
use crate::scheduler::SchedulerError;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::sync::Arc;
use thiserror::Error;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("graph does not have the required shape: {0}")]
    ShapeMismatch(String),
    #[error("target set is not reachable from vertex {vertex}")]
    Unreachable { vertex: Vertex },
    #[error("accepting set is empty")]
    EmptyAccepting,
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("no simple cycle avoids the bad set")]
    NoGoodCycle,
    #[error("no good tuple exists for this colouring")]
    NoGoodTuple,
    #[error("tuple space of size {size} exceeds the cap of {cap}")]
    TupleSpaceCapExceeded { size: u128, cap: u128 },
    #[error("witness is invalid: {0}")]
    WitnessInvalid(String),
    #[error("constructed tuple failed the goodness check for colouring {colouring}")]
    ConstructionFailed { colouring: usize },
    #[error("policy memory is not finitely enumerable")]
    MemoryNotEnumerable,
    #[error("product exceeds the state cap of {cap}")]
    StateCapExceeded { cap: usize },
    #[error("policy map sends vertex {vertex} to non-successor {target}")]
    NotASuccessor { vertex: Vertex, target: Vertex },
    #[error("agent index {index} out of range for {n} agents")]
    BadAgent { index: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemState(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationClass {
    PathAware,
    ScheduledAware,
    FullHistoryAware,
}

/// Scheduling information delivered with a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Signal {
    /// Path-aware: nothing beyond the path.
    None,
    /// Scheduled-aware: whether this agent was the scheduled one.
    Scheduled(bool),
    /// Full-history-aware: index of the scheduled agent.
    Agent(usize),
}

/// What a policy observes about one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Increment {
    pub next: Vertex,
    pub own: Option<Vertex>,
    pub signal: Signal,
}

impl Increment {
    pub fn for_class(class: ObservationClass, next: Vertex, own: Vertex, me: usize, scheduled: usize) -> Self {
        match class {
            ObservationClass::PathAware => Increment { next, own: None, signal: Signal::None },
            ObservationClass::ScheduledAware => Increment { next, own: Some(own), signal: Signal::Scheduled(me == scheduled) },
            ObservationClass::FullHistoryAware => Increment { next, own: Some(own), signal: Signal::Agent(scheduled) },
        }
    }
}

/// Distribution over next memories. Shared tables carry a key unique within the policy,
/// which lets the exact chain avoid expanding large resample distributions eagerly.
#[derive(Clone, Debug)]
pub enum MemDist {
    Dirac(MemState),
    Shared { key: u64, dist: Arc<Dist<MemState>> },
    Explicit(Dist<MemState>),
}

impl PartialEq for MemDist {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (MemDist::Dirac(a), MemDist::Dirac(b)) => a == b,
            (MemDist::Shared { key: a, .. }, MemDist::Shared { key: b, .. }) => a == b,
            (MemDist::Explicit(a), MemDist::Explicit(b)) => a == b,
            _ => self.to_dist() == other.to_dist(),
        }
    }
}

impl MemDist {
    pub fn to_dist(&self) -> Dist<MemState> {
        match self {
            MemDist::Dirac(m) => Dist::dirac(*m),
            MemDist::Shared { dist, .. } => (**dist).clone(),
            MemDist::Explicit(d) => d.clone(),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> MemState {
        match self {
            MemDist::Dirac(m) => *m,
            MemDist::Shared { dist, .. } => dist.sample(rng),
            MemDist::Explicit(d) => d.sample(rng),
        }
    }

    /// Convex combination; stays compact when every part is the same distribution.
    pub fn mixture(parts: Vec<(Prob, MemDist)>) -> MemDist {
        let same = parts.windows(2).all(|w| match (&w[0].1, &w[1].1) {
            (MemDist::Dirac(a), MemDist::Dirac(b)) => a == b,
            (MemDist::Shared { key: a, .. }, MemDist::Shared { key: b, .. }) => a == b,
            _ => false,
        });
        if same {
            if let Some((_, d)) = parts.into_iter().next() {
                return d;
            }
            unreachable!("mixture of nothing");
        }
        let mut acc = Vec::new();
        for (p, d) in parts {
            acc.extend(d.to_dist().scaled(&p));
        }
        MemDist::Explicit(Dist::from_weights(acc))
    }
}

/// Structured view of a memory word, used for digests and consensus checks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryView {
    Unit,
    Word(u64),
    Lasso { remaining: Vec<Vertex>, cycle: Vec<Vertex> },
    Tuple(Vec<Vec<Vertex>>),
}

impl MemoryView {
    pub fn digest(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("view serialisation").as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub trait Policy: Debug + Send + Sync {
    fn name(&self) -> String;
    fn observation_class(&self) -> ObservationClass;
    fn initial_memory(&self, at: Vertex) -> MemDist;
    fn propose(&self, mem: MemState, at: Vertex) -> Dist<Vertex>;
    fn update(&self, mem: MemState, at: Vertex, inc: &Increment) -> MemDist;

    /// Every memory word the policy can hold, when that set is small enough to list.
    fn memory_states(&self) -> Option<Vec<MemState>> {
        None
    }

    fn memory_view(&self, mem: MemState) -> MemoryView {
        MemoryView::Word(mem.0)
    }

    fn memory_digest(&self, mem: MemState) -> u64 {
        self.memory_view(mem).digest()
    }

    /// Index the policy uses for itself in full-history signals.
    fn own_index(&self) -> usize {
        0
    }

    /// Extra entropy mixed into this policy's random substream.
    fn rng_salt(&self) -> u64 {
        0
    }

    fn sample_initial(&self, at: Vertex, rng: &mut SimRng) -> MemState {
        self.initial_memory(at).sample(rng)
    }

    fn sample_propose(&self, mem: MemState, at: Vertex, rng: &mut SimRng) -> Vertex {
        self.propose(mem, at).sample(rng)
    }

    fn sample_update(&self, mem: MemState, at: Vertex, inc: &Increment, rng: &mut SimRng) -> MemState {
        self.update(mem, at, inc).sample(rng)
    }
}

/// The proposal distribution restricted to `allowed`, if it puts mass there.
pub fn restricted_proposal(policy: &dyn Policy, mem: MemState, at: Vertex, allowed: &[Vertex]) -> Option<Dist<Vertex>> {
    policy.propose(mem, at).condition(|v| allowed.contains(v))
}

/// The increment an agent sees when it moves alone.
pub fn solo_increment(policy: &dyn Policy, next: Vertex) -> Increment {
    let me = policy.own_index();
    Increment::for_class(policy.observation_class(), next, next, me, me)
}
