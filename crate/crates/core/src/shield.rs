//! Safety shield built from the safety parts of the agents' objectives.
//!
//! Each agent's maximally permissive strategy allows exactly the successors
//! inside its safe winning region. The shield intersects these sets and,
//! when the scheduled proposal falls outside, asks the same policy again
//! restricted to the intersection.

use crate::graph::{Graph, GraphError, Vertex};
use crate::objectives::{decompose, safety_fixpoint, winning_region, Objective, ObjectiveError};
use crate::prob::Dist;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShieldError {
    #[error("agent {agent}'s safety requirement is unrealizable from the initial vertex")]
    UnrealizableFromInit { agent: usize },
    #[error("safe regions are not mutually closed from the initial vertex")]
    ClosureViolated,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Successors allowed by the maximally permissive safe strategy; empty outside the region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxPermissive {
    pub region: Vec<bool>,
    pub allow: Vec<Vec<Vertex>>,
}

impl MaxPermissive {
    pub fn chi(&self, v: Vertex) -> &[Vertex] {
        &self.allow[v]
    }
}

pub fn max_permissive(graph: &Graph, objective: &Objective) -> Result<MaxPermissive, ShieldError> {
    let d = decompose(graph, objective)?;
    let region = winning_region(graph, &d.safe_part)?;
    if !region[graph.init()] {
        return Err(ShieldError::UnrealizableFromInit { agent: 0 });
    }
    let allow = graph
        .vertices()
        .map(|v| if region[v] { graph.succ(v).iter().copied().filter(|&w| region[w]).collect() } else { Vec::new() })
        .collect();
    Ok(MaxPermissive { region, allow })
}

fn joint_region(graph: &Graph, objectives: &[Objective]) -> Result<Vec<bool>, ShieldError> {
    let mut w = vec![true; graph.n()];
    for o in objectives {
        let d = decompose(graph, o)?;
        for (x, y) in w.iter_mut().zip(&d.winning) {
            *x &= *y;
        }
    }
    Ok(w)
}

fn reachable_inside(graph: &Graph, inside: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; graph.n()];
    if !inside[graph.init()] {
        return seen;
    }
    seen[graph.init()] = true;
    let mut q = VecDeque::from([graph.init()]);
    while let Some(v) = q.pop_front() {
        for &w in graph.succ(v) {
            if inside[w] && !seen[w] {
                seen[w] = true;
                q.push_back(w);
            }
        }
    }
    seen
}

/// Sufficient check that the intersection of safe regions keeps a successor at every
/// vertex reachable inside it, and that each live part stays realizable there.
pub fn check_mutual_safety_closure(graph: &Graph, objectives: &[Objective]) -> Result<bool, ShieldError> {
    let w = joint_region(graph, objectives)?;
    if !w[graph.init()] {
        return Ok(false);
    }
    let reach = reachable_inside(graph, &w);
    for v in graph.vertices().filter(|&v| reach[v]) {
        if !graph.succ(v).iter().any(|&u| w[u]) {
            return Ok(false);
        }
    }
    for o in objectives {
        let live = decompose(graph, o)?.live_part;
        let lw = winning_region(graph, &live)?;
        if graph.vertices().any(|v| reach[v] && !lw[v]) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShieldSetup {
    pub chi: Vec<MaxPermissive>,
    pub region: Vec<bool>,
    allowed: Vec<Vec<Vertex>>,
    pub restricted: Graph,
    /// `old_of[i]` is the full-graph vertex of restricted vertex i.
    pub old_of: Vec<Vertex>,
    pub live_parts: Vec<Objective>,
}

pub fn build_shield(graph: &Graph, objectives: &[Objective]) -> Result<ShieldSetup, ShieldError> {
    let mut chi = Vec::with_capacity(objectives.len());
    for (i, o) in objectives.iter().enumerate() {
        chi.push(max_permissive(graph, o).map_err(|e| match e {
            ShieldError::UnrealizableFromInit { .. } => ShieldError::UnrealizableFromInit { agent: i },
            other => other,
        })?);
    }
    if !check_mutual_safety_closure(graph, objectives)? {
        return Err(ShieldError::ClosureViolated);
    }
    let region = safety_fixpoint(graph, joint_region(graph, objectives)?);
    let allowed = graph
        .vertices()
        .map(|v| {
            if region[v] {
                graph.succ(v).iter().copied().filter(|&w| region[w] && chi.iter().all(|c| c.allow[v].contains(&w))).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let (restricted, old_of) = graph.induced(&region)?;
    let live_parts = objectives.iter().map(|o| decompose(graph, o).map(|d| d.live_part)).collect::<Result<_, _>>()?;
    Ok(ShieldSetup { chi, region, allowed, restricted, old_of, live_parts })
}

impl ShieldSetup {
    /// Intersection of every agent's allowed successors at `v`.
    pub fn allowed(&self, v: Vertex) -> &[Vertex] {
        &self.allowed[v]
    }

    /// Executed vertex for a raw proposal, and whether the shield intervened.
    /// `requery` receives the allowed set and may return a replacement drawn from the policy.
    pub fn shielded_propose(&self, current: Vertex, raw: Vertex, requery: impl FnOnce(&[Vertex]) -> Option<Vertex>) -> (Vertex, bool) {
        let a = self.allowed(current);
        if a.is_empty() || a.contains(&raw) {
            return (raw, false);
        }
        let pick = requery(a).filter(|u| a.contains(u)).unwrap_or(a[0]);
        (pick, true)
    }

    /// Exact law of the executed vertex given the raw proposal law.
    pub fn shielded_distribution(&self, current: Vertex, raw: &Dist<Vertex>) -> Dist<Vertex> {
        let a = self.allowed(current);
        if a.is_empty() {
            return raw.clone();
        }
        let inside = |v: &Vertex| a.contains(v);
        let blocked = raw.entries().iter().filter(|(v, _)| !inside(v)).fold(crate::prob::zero(), |acc, (_, p)| acc + p);
        let kept: Vec<(Vertex, crate::prob::Prob)> = raw.entries().iter().filter(|(v, _)| inside(v)).cloned().collect();
        let fallback = match raw.condition(inside) {
            Some(c) => c,
            None => Dist::dirac(a[0]),
        };
        let mut entries = kept;
        entries.extend(fallback.scaled(&blocked));
        Dist::from_weights(entries)
    }
}
