//! Runs N decoupled policies under a scheduler, optionally behind a shield.
//!
//! Each step every agent proposes, the scheduler picks one proposal, the
//! shield may replace it, and every agent updates its memory from its own
//! observation class. Randomness comes from per-role ChaCha substreams so a
//! run is a pure function of (composition, seed).

use crate::graph::{Graph, Vertex};
use crate::policies::{restricted_proposal, Increment, MemDist, MemState, ObservationClass, Policy, Signal, SimRng};
use crate::prob::{Dist, Prob};
use crate::scheduler::Scheduler;
use crate::shield::ShieldSetup;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompositionError {
    #[error("composition needs at least one agent")]
    NoAgents,
    #[error("{policies} policies but the scheduler is resolved for {scheduler} agents")]
    AgentCount { policies: usize, scheduler: usize },
    #[error("initial memory vector has {got} entries for {expected} agents")]
    InitialMemories { expected: usize, got: usize },
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent substream for a role: 0 is the scheduler, i + 1 is agent i.
pub fn role_rng(seed: u64, role: u64, salt: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed ^ splitmix64(salt));
    rng.set_stream(role);
    rng
}

/// Seed of the k-th Monte Carlo trial under a master seed.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ splitmix64(trial.wrapping_add(1)))
}

#[derive(Clone, Debug)]
pub struct Composition {
    pub graph: Graph,
    pub policies: Vec<Arc<dyn Policy>>,
    pub scheduler: Scheduler,
    pub shield: Option<Arc<ShieldSetup>>,
    pub seed: u64,
    pub initial_memories: Option<Vec<MemState>>,
}

/// Vertex, memories and scheduler phase.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalState {
    pub memories: Vec<MemState>,
    pub vertex: Vertex,
    pub phase: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub vertex_before: Vertex,
    pub proposals: Vec<Vertex>,
    pub scheduled: usize,
    pub vertex_after: Vertex,
    pub overridden: bool,
    pub memory_digest: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Trace {
    pub init: Vertex,
    pub initial_digest: Vec<u64>,
    pub steps: Vec<StepRecord>,
}

/// One agent's view of a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub path: Vec<Vertex>,
    pub signal: Vec<Signal>,
    pub own_choices: Vec<Option<Vertex>>,
}

impl Trace {
    pub fn path(&self) -> Vec<Vertex> {
        std::iter::once(self.init).chain(self.steps.iter().map(|s| s.vertex_after)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(init: Vertex, text: &str) -> Result<Trace, serde_json::Error> {
        let steps = text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Trace { init, initial_digest: Vec::new(), steps })
    }

    /// What agent `i` of the given class is entitled to see.
    pub fn observation(&self, i: usize, class: ObservationClass) -> Observation {
        let own = |s: &StepRecord| if s.scheduled == i { s.vertex_after } else { s.proposals[i] };
        let (signal, own_choices) = self
            .steps
            .iter()
            .map(|s| match class {
                ObservationClass::PathAware => (Signal::None, None),
                ObservationClass::ScheduledAware => (Signal::Scheduled(s.scheduled == i), Some(own(s))),
                ObservationClass::FullHistoryAware => (Signal::Agent(s.scheduled), Some(own(s))),
            })
            .unzip();
        Observation { path: self.path(), signal, own_choices }
    }
}

impl Composition {
    pub fn new(graph: Graph, policies: Vec<Arc<dyn Policy>>, scheduler: Scheduler, seed: u64) -> Result<Self, CompositionError> {
        if policies.is_empty() {
            return Err(CompositionError::NoAgents);
        }
        if policies.len() != scheduler.n_agents() {
            return Err(CompositionError::AgentCount { policies: policies.len(), scheduler: scheduler.n_agents() });
        }
        Ok(Composition { graph, policies, scheduler, shield: None, seed, initial_memories: None })
    }

    pub fn with_shield(mut self, shield: Arc<ShieldSetup>) -> Self {
        self.shield = Some(shield);
        self
    }

    pub fn with_initial_memories(mut self, mems: Vec<MemState>) -> Result<Self, CompositionError> {
        if mems.len() != self.policies.len() {
            return Err(CompositionError::InitialMemories { expected: self.policies.len(), got: mems.len() });
        }
        self.initial_memories = Some(mems);
        Ok(self)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Composition { seed, ..self.clone() }
    }

    pub fn n_agents(&self) -> usize {
        self.policies.len()
    }

    pub fn runner(&self, with_digests: bool) -> Runner<'_> {
        Runner::new(self, with_digests)
    }

    /// Simulates `horizon` steps from the initial vertex.
    pub fn run(&self, horizon: u64) -> Trace {
        let mut r = self.runner(true);
        let init = r.vertex;
        let initial_digest = r.digests();
        let mut steps = Vec::with_capacity(horizon as usize);
        for _ in 0..horizon {
            steps.push(r.step().clone());
        }
        Trace { init, initial_digest, steps }
    }

    /// Initial joint memory law, one factor per agent.
    pub fn initial_memory_dists(&self) -> Vec<MemDist> {
        match &self.initial_memories {
            Some(m) => m.iter().map(|&x| MemDist::Dirac(x)).collect(),
            None => self.policies.iter().map(|p| p.initial_memory(self.graph.init())).collect(),
        }
    }

    /// One-step law in factored form: each term fixes the executed vertex and gives
    /// an independent memory law per agent.
    pub fn factored_step(&self, state: &GlobalState) -> Vec<FactoredTerm> {
        let v = state.vertex;
        let np = self.scheduler.next_phase(state.phase);
        let props: Vec<Dist<Vertex>> = self.policies.iter().zip(&state.memories).map(|(p, &m)| p.propose(m, v)).collect();
        let mut terms = Vec::new();
        for (j, pj) in self.scheduler.distribution(state.phase).entries() {
            let j = *j;
            let executed = match &self.shield {
                Some(s) => s.shielded_distribution(v, &props[j]),
                None => props[j].clone(),
            };
            for (u, pu) in executed.entries() {
                let memories = self
                    .policies
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let class = p.observation_class();
                        let m = state.memories[i];
                        if i == j {
                            p.update(m, v, &Increment::for_class(class, *u, *u, i, j))
                        } else {
                            MemDist::mixture(
                                props[i]
                                    .entries()
                                    .iter()
                                    .map(|(w, pw)| (pw.clone(), p.update(m, v, &Increment::for_class(class, *u, *w, i, j))))
                                    .collect(),
                            )
                        }
                    })
                    .collect();
                terms.push(FactoredTerm { prob: pj * pu, vertex: *u, phase: np, memories });
            }
        }
        terms
    }
}

#[derive(Clone, Debug)]
pub struct FactoredTerm {
    pub prob: Prob,
    pub vertex: Vertex,
    pub phase: usize,
    pub memories: Vec<MemDist>,
}

/// Fully expanded one-step law of the global chain.
pub fn exact_step_distribution(comp: &Composition, state: &GlobalState) -> Dist<GlobalState> {
    let mut out: Vec<(GlobalState, Prob)> = Vec::new();
    for term in comp.factored_step(state) {
        let mut partial: Vec<(Vec<MemState>, Prob)> = vec![(Vec::new(), term.prob.clone())];
        for md in &term.memories {
            let d = md.to_dist();
            partial = partial
                .into_iter()
                .flat_map(|(ms, p)| {
                    d.entries().iter().map(move |(m, q)| {
                        let mut ms2 = ms.clone();
                        ms2.push(*m);
                        (ms2, &p * q)
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(|(memories, p)| (GlobalState { memories, vertex: term.vertex, phase: term.phase }, p)));
    }
    Dist::from_weights(out)
}

/// Streaming simulator; reuses one record buffer.
pub struct Runner<'a> {
    comp: &'a Composition,
    t: u64,
    vertex: Vertex,
    memories: Vec<MemState>,
    sched_rng: SimRng,
    rngs: Vec<SimRng>,
    record: StepRecord,
    with_digests: bool,
}

impl<'a> Runner<'a> {
    fn new(comp: &'a Composition, with_digests: bool) -> Self {
        let seed = comp.seed;
        let mut rngs: Vec<SimRng> = comp.policies.iter().enumerate().map(|(i, p)| role_rng(seed, i as u64 + 1, p.rng_salt())).collect();
        let v0 = comp.graph.init();
        let memories = match &comp.initial_memories {
            Some(m) => m.clone(),
            None => comp.policies.iter().zip(rngs.iter_mut()).map(|(p, r)| p.sample_initial(v0, r)).collect(),
        };
        let n = comp.n_agents();
        Runner {
            comp,
            t: 0,
            vertex: v0,
            memories,
            sched_rng: role_rng(seed, 0, 0),
            rngs,
            record: StepRecord {
                t: 0,
                vertex_before: v0,
                proposals: vec![0; n],
                scheduled: 0,
                vertex_after: v0,
                overridden: false,
                memory_digest: Vec::with_capacity(n),
            },
            with_digests,
        }
    }

    pub fn vertex(&self) -> Vertex {
        self.vertex
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn memories(&self) -> &[MemState] {
        &self.memories
    }

    pub fn state(&self) -> GlobalState {
        GlobalState { memories: self.memories.clone(), vertex: self.vertex, phase: self.comp.scheduler.phase_at(self.t) }
    }

    pub fn digests(&self) -> Vec<u64> {
        self.comp.policies.iter().zip(&self.memories).map(|(p, &m)| p.memory_digest(m)).collect()
    }

    pub fn step(&mut self) -> &StepRecord {
        let comp = self.comp;
        let v = self.vertex;
        let rec = &mut self.record;
        for (i, p) in comp.policies.iter().enumerate() {
            rec.proposals[i] = p.sample_propose(self.memories[i], v, &mut self.rngs[i]);
        }
        let j = comp.scheduler.next_agent(self.t, &mut self.sched_rng);
        let (u, overridden) = match &comp.shield {
            Some(s) => {
                let (pj, mj, rj) = (&comp.policies[j], self.memories[j], &mut self.rngs[j]);
                s.shielded_propose(v, rec.proposals[j], |a| restricted_proposal(pj.as_ref(), mj, v, a).map(|d| d.sample(rj)))
            }
            None => (rec.proposals[j], false),
        };
        for (i, p) in comp.policies.iter().enumerate() {
            let own = if i == j { u } else { rec.proposals[i] };
            let inc = Increment::for_class(p.observation_class(), u, own, i, j);
            self.memories[i] = p.sample_update(self.memories[i], v, &inc, &mut self.rngs[i]);
        }
        rec.t = self.t;
        rec.vertex_before = v;
        rec.scheduled = j;
        rec.vertex_after = u;
        rec.overridden = overridden;
        rec.memory_digest.clear();
        if self.with_digests {
            for (p, &m) in comp.policies.iter().zip(&self.memories) {
                rec.memory_digest.push(p.memory_digest(m));
            }
        }
        self.vertex = u;
        self.t += 1;
        &self.record
    }
}
