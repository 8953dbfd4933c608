//! Schedulers pick which agent's proposal is executed at each step.
//!
//! Agent indices in JSON (`order`, `seq`) are 1-based; everything in the
//! library is 0-based. Deterministic schedulers depend on time only through a
//! phase `t mod period`, which lets the exact chain stay finite.

use crate::prob::{ratio, Dist, Prob};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("scheduler is configured for {expected} agents but the composition has {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("scheduler references agent {index} (1-based) but there are {n} agents")]
    BadAgent { index: usize, n: usize },
    #[error("scheduler sequence is empty")]
    Empty,
    #[error("weights must be positive")]
    ZeroWeight,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SchedulerSpec {
    Uniform {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    #[serde(rename = "weighted")]
    WeightedFair {
        weights: Vec<u64>,
    },
    #[serde(rename = "roundrobin")]
    RoundRobin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<Vec<usize>>,
    },
    Scripted {
        seq: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Kind {
    Uniform,
    Weighted(Vec<u64>),
    Sequence(Vec<usize>),
}

/// A scheduler resolved against a concrete number of agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheduler {
    n: usize,
    kind: Kind,
    fair: bool,
}

impl SchedulerSpec {
    pub fn resolve(&self, n_agents: usize) -> Result<Scheduler, SchedulerError> {
        let check_n = |n: usize| {
            if n != n_agents {
                Err(SchedulerError::AgentCount { expected: n, got: n_agents })
            } else {
                Ok(())
            }
        };
        let one_based = |seq: &[usize]| -> Result<Vec<usize>, SchedulerError> {
            if seq.is_empty() {
                return Err(SchedulerError::Empty);
            }
            seq.iter()
                .map(|&i| if i == 0 || i > n_agents { Err(SchedulerError::BadAgent { index: i, n: n_agents }) } else { Ok(i - 1) })
                .collect()
        };
        if n_agents == 0 {
            return Err(SchedulerError::Empty);
        }
        let (kind, fair) = match self {
            SchedulerSpec::Uniform { n } => {
                if let Some(n) = n {
                    check_n(*n)?;
                }
                (Kind::Uniform, true)
            }
            SchedulerSpec::WeightedFair { weights } => {
                check_n(weights.len())?;
                if weights.contains(&0) {
                    return Err(SchedulerError::ZeroWeight);
                }
                (Kind::Weighted(weights.clone()), true)
            }
            SchedulerSpec::RoundRobin { order } => {
                let seq = match order {
                    Some(o) => one_based(o)?,
                    None => (0..n_agents).collect(),
                };
                (Kind::Sequence(seq), false)
            }
            SchedulerSpec::Scripted { seq } => (Kind::Sequence(one_based(seq)?), false),
        };
        Ok(Scheduler { n: n_agents, kind, fair })
    }
}

impl Scheduler {
    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn is_fair(&self) -> bool {
        self.fair
    }

    /// Number of distinct phases; 1 for history-independent schedulers.
    pub fn phases(&self) -> usize {
        match &self.kind {
            Kind::Sequence(s) => s.len(),
            _ => 1,
        }
    }

    pub fn phase_at(&self, t: u64) -> usize {
        (t % self.phases() as u64) as usize
    }

    pub fn next_phase(&self, phase: usize) -> usize {
        (phase + 1) % self.phases()
    }

    /// Exact next-agent distribution in a given phase.
    pub fn distribution(&self, phase: usize) -> Dist<usize> {
        match &self.kind {
            Kind::Uniform => Dist::uniform(0..self.n),
            Kind::Weighted(w) => {
                let total: u64 = w.iter().sum();
                Dist::from_weights(w.iter().enumerate().map(|(i, &x)| (i, ratio(x, total))))
            }
            Kind::Sequence(s) => Dist::dirac(s[phase]),
        }
    }

    /// The agent at step t for deterministic schedulers.
    pub fn agent_at(&self, t: u64) -> Option<usize> {
        match &self.kind {
            Kind::Sequence(s) => Some(s[self.phase_at(t)]),
            _ => None,
        }
    }

    /// Samples the agent scheduled after a history of length `t`.
    pub fn next_agent<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> usize {
        match &self.kind {
            Kind::Uniform => rng.gen_range(0..self.n),
            Kind::Weighted(w) => {
                let total: u64 = w.iter().sum();
                let mut x = rng.gen_range(0..total);
                for (i, &wi) in w.iter().enumerate() {
                    if x < wi {
                        return i;
                    }
                    x -= wi;
                }
                unreachable!("weights sum to total")
            }
            Kind::Sequence(s) => s[self.phase_at(t)],
        }
    }

    /// Lower bound on the per-step probability of any agent, for fair kinds.
    pub fn fairness_epsilon(&self) -> Option<Prob> {
        match &self.kind {
            Kind::Uniform => Some(ratio(1, self.n as u64)),
            Kind::Weighted(w) => Some(ratio(*w.iter().min()?, w.iter().sum())),
            Kind::Sequence(_) => None,
        }
    }
}
