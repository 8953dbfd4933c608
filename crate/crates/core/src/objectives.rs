//! Positional ω-regular objectives over graph vertices.
//!
//! Acceptance is evaluated on lassos, and one-player winning regions are
//! computed by fixpoints (safety), backward reachability (reachability) and
//! per-colour SCC search (Büchi, co-Büchi, parity).

use crate::graph::{tarjan, Graph, GraphError, Lasso, Vertex};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

pub type Colour = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObjectiveError {
    #[error("objective references vertex {vertex} outside 0..{n}")]
    VertexOutOfRange { vertex: Vertex, n: usize },
    #[error("colouring has {got} entries for {expected} vertices")]
    ColouringLength { expected: usize, got: usize },
    #[error("{kind} objective has no positional parity form")]
    NotDirectlyConvertible { kind: &'static str },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Objective {
    Reachability {
        targets: Vec<Vertex>,
    },
    Safety {
        safe: Vec<Vertex>,
    },
    Buchi {
        accepting: Vec<Vertex>,
    },
    #[serde(rename = "cobuchi")]
    CoBuchi {
        bad: Vec<Vertex>,
    },
    Parity {
        colours: Vec<Colour>,
    },
    /// Safety(safe) ∩ live.
    Constrained {
        safe: Vec<Vertex>,
        live: Box<Objective>,
    },
}

/// Split of an objective into a safety part and a liveness part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub winning: Vec<bool>,
    pub safe_part: Objective,
    pub live_part: Objective,
}

pub fn mask(n: usize, set: &[Vertex]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &v in set {
        if v < n {
            m[v] = true;
        }
    }
    m
}

pub fn members(m: &[bool]) -> Vec<Vertex> {
    m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

impl Objective {
    pub fn kind(&self) -> &'static str {
        match self {
            Objective::Reachability { .. } => "reachability",
            Objective::Safety { .. } => "safety",
            Objective::Buchi { .. } => "buchi",
            Objective::CoBuchi { .. } => "cobuchi",
            Objective::Parity { .. } => "parity",
            Objective::Constrained { .. } => "constrained",
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ObjectiveError> {
        let check = |set: &[Vertex]| match set.iter().find(|&&v| v >= n) {
            Some(&vertex) => Err(ObjectiveError::VertexOutOfRange { vertex, n }),
            None => Ok(()),
        };
        match self {
            Objective::Reachability { targets: s }
            | Objective::Safety { safe: s }
            | Objective::Buchi { accepting: s }
            | Objective::CoBuchi { bad: s } => check(s),
            Objective::Parity { colours } if colours.len() != n => Err(ObjectiveError::ColouringLength { expected: n, got: colours.len() }),
            Objective::Parity { .. } => Ok(()),
            Objective::Constrained { safe, live } => {
                check(safe)?;
                live.validate(n)
            }
        }
    }

    /// Same objective on an induced subgraph whose vertex i is `old_of[i]`.
    pub fn restrict(&self, old_of: &[Vertex]) -> Objective {
        let pick = |set: &[Vertex]| -> Vec<Vertex> { old_of.iter().enumerate().filter(|(_, o)| set.contains(o)).map(|(i, _)| i).collect() };
        match self {
            Objective::Reachability { targets } => Objective::Reachability { targets: pick(targets) },
            Objective::Safety { safe } => Objective::Safety { safe: pick(safe) },
            Objective::Buchi { accepting } => Objective::Buchi { accepting: pick(accepting) },
            Objective::CoBuchi { bad } => Objective::CoBuchi { bad: pick(bad) },
            Objective::Parity { colours } => Objective::Parity { colours: old_of.iter().map(|&o| colours[o]).collect() },
            Objective::Constrained { safe, live } => Objective::Constrained { safe: pick(safe), live: Box::new(live.restrict(old_of)) },
        }
    }

    /// Acceptance from the set of visited vertices and the set visited infinitely often.
    pub fn accepts_sets(&self, visited: &[bool], inf: &[bool]) -> bool {
        let any = |set: &[Vertex], m: &[bool]| set.iter().any(|&v| m[v]);
        match self {
            Objective::Reachability { targets } => any(targets, visited),
            Objective::Safety { safe } => subset(visited, safe),
            Objective::Buchi { accepting } => any(accepting, inf),
            Objective::CoBuchi { bad } => !any(bad, inf),
            Objective::Parity { colours } => {
                let top = inf.iter().enumerate().filter(|(_, &b)| b).map(|(v, _)| colours[v]).max();
                top.is_some_and(|c| c % 2 == 0)
            }
            Objective::Constrained { safe, live } => subset(visited, safe) && live.accepts_sets(visited, inf),
        }
    }
}

fn subset(m: &[bool], set: &[Vertex]) -> bool {
    let s = mask(m.len(), set);
    m.iter().zip(&s).all(|(&a, &b)| !a || b)
}

pub fn satisfies_lasso(objective: &Objective, lasso: &Lasso) -> bool {
    let n = lasso.stem.iter().chain(&lasso.cycle).copied().max().map_or(0, |m| m + 1);
    let n = n.max(max_vertex(objective) + 1);
    let mut visited = vec![false; n];
    let mut inf = vec![false; n];
    for &v in &lasso.stem {
        visited[v] = true;
    }
    for &v in &lasso.cycle {
        visited[v] = true;
        inf[v] = true;
    }
    objective.accepts_sets(&visited, &inf)
}

fn max_vertex(o: &Objective) -> usize {
    match o {
        Objective::Reachability { targets: s }
        | Objective::Safety { safe: s }
        | Objective::Buchi { accepting: s }
        | Objective::CoBuchi { bad: s } => s.iter().copied().max().unwrap_or(0),
        Objective::Parity { colours } => colours.len().saturating_sub(1),
        Objective::Constrained { safe, live } => safe.iter().copied().max().unwrap_or(0).max(max_vertex(live)),
    }
}

/// Positional parity colouring (max-even convention).
pub fn to_parity(objective: &Objective, n: usize) -> Result<Vec<Colour>, ObjectiveError> {
    match objective {
        Objective::Buchi { accepting } => Ok(mask(n, accepting).iter().map(|&a| if a { 2 } else { 1 }).collect()),
        Objective::CoBuchi { bad } => Ok(mask(n, bad).iter().map(|&b| if b { 1 } else { 0 }).collect()),
        Objective::Parity { colours } => {
            if colours.len() != n {
                return Err(ObjectiveError::ColouringLength { expected: n, got: colours.len() });
            }
            Ok(colours.clone())
        }
        other => Err(ObjectiveError::NotDirectlyConvertible { kind: other.kind() }),
    }
}

/// Vertices from which some infinite path satisfies the objective.
pub fn winning_region(graph: &Graph, objective: &Objective) -> Result<Vec<bool>, ObjectiveError> {
    objective.validate(graph.n())?;
    Ok(win_within(graph, &vec![true; graph.n()], objective))
}

/// Winning region for paths confined to `allowed`, which must be closed
/// (every allowed vertex has an allowed successor).
fn win_within(graph: &Graph, allowed: &[bool], objective: &Objective) -> Vec<bool> {
    let n = graph.n();
    match objective {
        Objective::Safety { safe } => {
            let s = mask(n, safe);
            let inside: Vec<bool> = (0..n).map(|v| allowed[v] && s[v]).collect();
            safety_fixpoint(graph, inside)
        }
        Objective::Reachability { targets } => {
            let t = mask(n, targets);
            let start: Vec<bool> = (0..n).map(|v| allowed[v] && t[v]).collect();
            backward_within(graph, allowed, start)
        }
        Objective::Constrained { safe, live } => {
            let s = mask(n, safe);
            let inside: Vec<bool> = (0..n).map(|v| allowed[v] && s[v]).collect();
            let closed = safety_fixpoint(graph, inside);
            win_within(graph, &closed, live)
        }
        parityish => {
            let colours = to_parity(parityish, n).expect("parity family");
            let good = good_cycle_vertices(graph, allowed, &colours);
            backward_within(graph, allowed, good)
        }
    }
}

/// Greatest set X ⊆ inside with every vertex of X having a successor in X.
pub fn safety_fixpoint(graph: &Graph, inside: Vec<bool>) -> Vec<bool> {
    let n = graph.n();
    let mut x = inside;
    let pred = graph.predecessors();
    let mut count: Vec<usize> = (0..n).map(|v| graph.succ(v).iter().filter(|&&w| x[w]).count()).collect();
    let mut queue: VecDeque<Vertex> = (0..n).filter(|&v| x[v] && count[v] == 0).collect();
    for &v in &queue {
        x[v] = false;
    }
    while let Some(v) = queue.pop_front() {
        for &p in &pred[v] {
            if x[p] {
                count[p] -= 1;
                if count[p] == 0 {
                    x[p] = false;
                    queue.push_back(p);
                }
            }
        }
    }
    x
}

fn backward_within(graph: &Graph, allowed: &[bool], start: Vec<bool>) -> Vec<bool> {
    let pred = graph.predecessors();
    let mut seen = start;
    let mut queue: VecDeque<Vertex> = (0..graph.n()).filter(|&v| seen[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &p in &pred[v] {
            if allowed[p] && !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}

/// Vertices lying on some cycle inside `allowed` whose maximal colour is even.
fn good_cycle_vertices(graph: &Graph, allowed: &[bool], colours: &[Colour]) -> Vec<bool> {
    let n = graph.n();
    let mut good = vec![false; n];
    let mut evens: Vec<Colour> = colours.iter().copied().filter(|c| c % 2 == 0).collect();
    evens.sort_unstable();
    evens.dedup();
    for c in evens {
        let live = |v: usize| allowed[v] && colours[v] <= c;
        let sccs = tarjan(n, |v, i| {
            if !live(v) {
                return None;
            }
            graph.succ(v).iter().copied().filter(|&w| live(w)).nth(i)
        });
        for block in sccs {
            if !live(block[0]) {
                continue;
            }
            let nontrivial = block.len() > 1 || graph.has_edge(block[0], block[0]);
            if nontrivial && block.iter().any(|&v| colours[v] == c) {
                for &v in &block {
                    good[v] = true;
                }
            }
        }
    }
    good
}

/// Smallest even colour strictly above every colour in `colours`.
pub fn fresh_even_top(colours: &[Colour]) -> Colour {
    let m = colours.iter().copied().max().unwrap_or(0);
    if m % 2 == 0 {
        m + 2
    } else {
        m + 1
    }
}

pub fn decompose(graph: &Graph, objective: &Objective) -> Result<Decomposition, ObjectiveError> {
    let winning = winning_region(graph, objective)?;
    let safe_part = Objective::Safety { safe: members(&winning) };
    let live_part = live_for(graph.n(), objective, &winning);
    Ok(Decomposition { winning, safe_part, live_part })
}

fn live_for(n: usize, objective: &Objective, w: &[bool]) -> Objective {
    match objective {
        Objective::Safety { .. } => Objective::Parity { colours: vec![0; n] },
        Objective::Reachability { targets } => {
            let mut t = mask(n, targets);
            for v in 0..n {
                t[v] |= !w[v];
            }
            Objective::Reachability { targets: members(&t) }
        }
        Objective::Constrained { live, .. } => live_for(n, live, w),
        parityish => {
            let base = to_parity(parityish, n).expect("parity family");
            let top = fresh_even_top(&base);
            Objective::Parity { colours: (0..n).map(|v| if w[v] { base[v] } else { top }).collect() }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hexagon() -> Graph {
        let l = ["l", "t1", "t2", "r", "b2", "b1"];
        let mut e = vec![("l", "l"), ("r", "r")];
        for i in 0..6 {
            e.push((l[i], l[(i + 1) % 6]));
            e.push((l[(i + 1) % 6], l[i]));
        }
        Graph::from_labels(&l, &e, "t2").unwrap()
    }

    fn fig3() -> Graph {
        Graph::from_labels(
            &["v0", "v1", "v11", "v12"],
            &[("v0", "v0"), ("v0", "v1"), ("v1", "v11"), ("v1", "v12"), ("v11", "v0"), ("v12", "v0")],
            "v0",
        )
        .unwrap()
    }

    #[test]
    fn buchi_on_hexagon_wins_everywhere() {
        let w = winning_region(&hexagon(), &Objective::Buchi { accepting: vec![0] }).unwrap();
        assert!(w.iter().all(|&b| b));
    }

    #[test]
    fn safety_with_no_safe_cycle_is_empty() {
        let g = Graph::from_labels(&["a", "b"], &[("a", "b"), ("b", "b")], "a").unwrap();
        let w = winning_region(&g, &Objective::Safety { safe: vec![0] }).unwrap();
        assert_eq!(w, vec![false, false]);
    }

    #[test]
    fn cobuchi_fig3_wins_everywhere() {
        let w = winning_region(&fig3(), &Objective::CoBuchi { bad: vec![2] }).unwrap();
        assert!(w.iter().all(|&b| b));
    }

    #[test]
    fn lasso_acceptance_on_fig3() {
        let g = fig3();
        let l = Lasso::new(&g, vec![], vec![0, 1, 3]).unwrap();
        assert!(satisfies_lasso(&Objective::CoBuchi { bad: vec![2] }, &l));
        assert!(!satisfies_lasso(&Objective::Buchi { accepting: vec![2] }, &l));
        assert!(satisfies_lasso(&Objective::Reachability { targets: vec![3] }, &l));
        assert!(satisfies_lasso(&Objective::Parity { colours: vec![0, 1, 3, 2] }, &l));
        assert!(!satisfies_lasso(&Objective::Parity { colours: vec![0, 3, 3, 2] }, &l));
    }

    #[test]
    fn parity_conversions() {
        assert_eq!(to_parity(&Objective::Buchi { accepting: vec![1] }, 3).unwrap(), vec![1, 2, 1]);
        assert_eq!(to_parity(&Objective::CoBuchi { bad: vec![1] }, 3).unwrap(), vec![0, 1, 0]);
        assert_eq!(
            to_parity(&Objective::Reachability { targets: vec![0] }, 3).unwrap_err(),
            ObjectiveError::NotDirectlyConvertible { kind: "reachability" }
        );
    }

    #[test]
    fn decompose_fig2_safety() {
        let g = Graph::from_labels(&["v", "a1", "a2"], &[("v", "a1"), ("v", "a2"), ("a1", "v"), ("a2", "v"), ("v", "v")], "v").unwrap();
        let d = decompose(&g, &Objective::Safety { safe: vec![0, 2] }).unwrap();
        assert_eq!(d.winning, vec![true, false, true]);
        assert_eq!(d.safe_part, Objective::Safety { safe: vec![0, 2] });
        // the live part accepts a lasso through a1
        let through_a1 = Lasso::new(&g, vec![], vec![0, 1]).unwrap();
        assert!(satisfies_lasso(&d.live_part, &through_a1));
    }

    #[test]
    fn decompose_gives_fresh_even_top_outside_winning() {
        let g = Graph::from_labels(&["a", "b"], &[("a", "b"), ("b", "b"), ("a", "a")], "a").unwrap();
        let d = decompose(&g, &Objective::Buchi { accepting: vec![0] }).unwrap();
        assert_eq!(d.winning, vec![true, false]);
        assert_eq!(d.live_part, Objective::Parity { colours: vec![2, 4] });
    }

    #[test]
    fn constrained_winning_region() {
        let g = hexagon();
        let o = Objective::Constrained { safe: vec![0, 1, 2, 3, 4], live: Box::new(Objective::Buchi { accepting: vec![3] }) };
        let w = winning_region(&g, &o).unwrap();
        assert_eq!(w, vec![true, true, true, true, true, false]);
        let d = decompose(&g, &o).unwrap();
        assert_eq!(d.live_part, Objective::Parity { colours: vec![1, 1, 1, 2, 1, 4] });
    }

    #[test]
    fn restrict_maps_indices() {
        let o = Objective::Buchi { accepting: vec![3, 5] };
        assert_eq!(o.restrict(&[0, 1, 2, 3, 4]), Objective::Buchi { accepting: vec![3] });
        let p = Objective::Parity { colours: vec![5, 6, 7] };
        assert_eq!(p.restrict(&[0, 2]), Objective::Parity { colours: vec![5, 7] });
    }

    #[test]
    fn json_shapes() {
        let o: Objective = serde_json::from_str(r#"{"kind":"buchi","accepting":[3]}"#).unwrap();
        assert_eq!(o, Objective::Buchi { accepting: vec![3] });
        let p: Objective = serde_json::from_str(r#"{"kind":"parity","colours":[0,1,2]}"#).unwrap();
        assert_eq!(p, Objective::Parity { colours: vec![0, 1, 2] });
        let c: Objective = serde_json::from_str(r#"{"kind":"cobuchi","bad":[1]}"#).unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"kind":"cobuchi","bad":[1]}"#);
    }
}
