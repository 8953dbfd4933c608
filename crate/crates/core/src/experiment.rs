//! Experiment configuration, construction and execution.

use crate::analysis::{
    almost_sure_verdict, build_global_chain, check_consensus_claims, convergence_time, monte_carlo_estimate, AnalysisError, ConsensusMode,
    ConsensusReport, ConvergenceSummary, Estimate, Outcome, Predicate, Verdict, DEFAULT_STATE_CAP,
};
use crate::composition::{Composition, CompositionError, Trace};
use crate::gallery;
use crate::graph::{Graph, GraphError, Lasso, Vertex};
use crate::objectives::{to_parity, Colour, Objective, ObjectiveError};
use crate::policies::{
    buchi_convention_policy, cobuchi_convention_policy, det_defeat_policies, exp_dwell_policy, memoryless_cobuchi_counterexample,
    parity_convention_policy, shortest_path_policy, AlternatingPolicy, MemorylessPolicy, Policy, PolicyError, RandomWalkPolicy,
    DEFAULT_TUPLE_CAP,
};
use crate::scheduler::{SchedulerError, SchedulerSpec};
use crate::shield::{build_shield, ShieldError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub const MAX_SWEEP_POINTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown gallery instance '{0}'")]
    UnknownGallery(String),
    #[error("{objectives} objectives but {policies} policies")]
    AgentCount { objectives: usize, policies: usize },
    #[error("agent {agent}: {message}")]
    PolicySpec { agent: usize, message: String },
    #[error("sweep grid has {points} points, limit is {limit}")]
    GridTooLarge { points: usize, limit: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    Gallery(String),
    Inline(Graph),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessSpec {
    #[serde(default)]
    pub stem: Vec<Vertex>,
    pub cycle: Vec<Vertex>,
}

/// Per-agent policy constructor. Omitted parameters default from the agent's objective.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Memoryless {
        map: Vec<Vertex>,
    },
    RandomWalk,
    ShortestPath {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        targets: Option<Vec<Vertex>>,
    },
    BuchiConvention {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        accepting: Option<Vec<Vertex>>,
    },
    CobuchiConvention {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bad: Option<Vec<Vertex>>,
        #[serde(default)]
        seed: u64,
    },
    ParityConvention {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        colours: Option<Vec<Colour>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        witness: Option<WitnessSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<u64>,
    },
    ExpDwell {
        #[serde(default = "default_growth")]
        growth: u64,
        #[serde(default = "default_max_exponent")]
        max_exponent: u32,
    },
    DetDefeat,
    MemorylessCounterexample,
    Alternating {
        at: Vertex,
        choices: Vec<Vertex>,
        otherwise: Vec<Vertex>,
    },
}

fn default_growth() -> u64 {
    2
}

fn default_max_exponent() -> u32 {
    20
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShieldMode {
    #[default]
    None,
    /// Runtime shield on the full graph.
    Shielded,
    /// Compose on the subgraph induced by the joint safe region.
    Restrict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Exact,
    #[default]
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutcome {
    AlmostSure,
    Violated,
}

impl ExpectedOutcome {
    pub fn matches(self, o: Outcome) -> bool {
        matches!(
            (self, o),
            (ExpectedOutcome::AlmostSure, Outcome::AlmostSure) | (ExpectedOutcome::Violated, Outcome::ViolatedWithPositiveProbability)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Vec<ExpectedOutcome>>,
    /// Lower bound on the point estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_at_least: Option<f64>,
    /// Upper bound on the upper confidence limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_at_most: Option<f64>,
    /// Every vertex of the recorded trace lies in this set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_within: Option<Vec<Vertex>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub graph: GraphSource,
    pub objectives: Vec<Objective>,
    pub policies: Vec<PolicySpec>,
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub shield: ShieldMode,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    /// Vertices refer to the full graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<ConsensusMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

fn default_horizon() -> u64 {
    1_000
}

fn default_trials() -> u64 {
    100
}

fn default_state_cap() -> usize {
    DEFAULT_STATE_CAP
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialisation")
    }

    pub fn resolve_graph(&self) -> Result<Graph, ExperimentError> {
        match &self.graph {
            GraphSource::Inline(g) => Ok(g.clone()),
            GraphSource::Gallery(name) => match gallery::instance(name) {
                Some(c) if !matches!(c.graph, GraphSource::Gallery(_)) => c.resolve_graph(),
                _ => Err(ExperimentError::UnknownGallery(name.clone())),
            },
        }
    }
}

/// A composition ready to run, with the objectives on the full graph.
#[derive(Clone, Debug)]
pub struct Built {
    pub full: Graph,
    pub objectives: Vec<Objective>,
    pub comp: Composition,
    /// Full-graph vertex of each composition vertex.
    pub old_of: Vec<Vertex>,
}

impl Built {
    pub fn verdict(&self, chain: &crate::analysis::GlobalChain) -> Verdict {
        let old = &self.old_of;
        almost_sure_verdict(chain, &self.objectives, self.full.n(), &|v| old[v])
    }
}

fn live_of(o: &Objective) -> &Objective {
    match o {
        Objective::Constrained { live, .. } => live_of(live),
        other => other,
    }
}

fn objective_set(o: &Objective, agent: usize, what: &str) -> Result<Vec<Vertex>, ExperimentError> {
    match live_of(o) {
        Objective::Reachability { targets } => Ok(targets.clone()),
        Objective::Buchi { accepting } => Ok(accepting.clone()),
        Objective::CoBuchi { bad } => Ok(bad.clone()),
        other => Err(ExperimentError::PolicySpec { agent, message: format!("cannot default {what} from a {} objective", other.kind()) }),
    }
}

fn to_local(old_of: &[Vertex], vs: &[Vertex], agent: usize) -> Result<Vec<Vertex>, ExperimentError> {
    vs.iter()
        .map(|v| {
            old_of
                .iter()
                .position(|o| o == v)
                .ok_or_else(|| ExperimentError::PolicySpec { agent, message: format!("vertex {v} lies outside the composition graph") })
        })
        .collect()
}

pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Built, ExperimentError> {
    let full = cfg.resolve_graph()?;
    let n_agents = cfg.policies.len();
    if cfg.objectives.len() != n_agents {
        return Err(ExperimentError::AgentCount { objectives: cfg.objectives.len(), policies: n_agents });
    }
    for o in &cfg.objectives {
        o.validate(full.n())?;
    }
    let scheduler = cfg.scheduler.resolve(n_agents)?;
    let (graph, old_of, shield) = match cfg.shield {
        ShieldMode::None => (full.clone(), full.vertices().collect::<Vec<_>>(), None),
        ShieldMode::Shielded => (full.clone(), full.vertices().collect(), Some(build_shield(&full, &cfg.objectives)?)),
        ShieldMode::Restrict => {
            let s = build_shield(&full, &cfg.objectives)?;
            (s.restricted.clone(), s.old_of.clone(), None)
        }
    };
    let local: Vec<Objective> = cfg.objectives.iter().map(|o| o.restrict(&old_of)).collect();
    let mut pair_cache: Option<Vec<Arc<dyn Policy>>> = None;
    let mut policies: Vec<Arc<dyn Policy>> = Vec::with_capacity(n_agents);
    for (i, spec) in cfg.policies.iter().enumerate() {
        let set = |what: &str, given: &Option<Vec<Vertex>>| -> Result<Vec<Vertex>, ExperimentError> {
            match given {
                Some(v) => to_local(&old_of, v, i),
                None => objective_set(&local[i], i, what),
            }
        };
        let p: Arc<dyn Policy> = match spec {
            PolicySpec::Memoryless { map } => {
                let local_map = old_of.iter().map(|&o| map.get(o).copied().unwrap_or(usize::MAX)).collect::<Vec<_>>();
                let local_map = to_local(&old_of, &local_map, i)?;
                Arc::new(MemorylessPolicy::new(&graph, format!("memoryless_{}", i + 1), local_map)?)
            }
            PolicySpec::RandomWalk => Arc::new(RandomWalkPolicy::new(&graph)),
            PolicySpec::ShortestPath { targets } => Arc::new(shortest_path_policy(&graph, &set("targets", targets)?)?),
            PolicySpec::BuchiConvention { accepting } => Arc::new(buchi_convention_policy(&graph, &set("accepting set", accepting)?)?),
            PolicySpec::CobuchiConvention { bad, seed } => Arc::new(cobuchi_convention_policy(&graph, &set("bad set", bad)?, *seed)?),
            PolicySpec::ParityConvention { colours, witness, cap } => {
                let k = match colours {
                    Some(c) => old_of.iter().map(|&o| c.get(o).copied().unwrap_or(0)).collect(),
                    None => to_parity(live_of(&local[i]), graph.n())?,
                };
                let w = match witness {
                    Some(w) => Some(
                        Lasso::closed_walk(&graph, to_local(&old_of, &w.stem, i)?, to_local(&old_of, &w.cycle, i)?)
                            .map_err(|e| ExperimentError::PolicySpec { agent: i, message: e.to_string() })?,
                    ),
                    None => None,
                };
                let cap = cap.map_or(DEFAULT_TUPLE_CAP, u128::from);
                Arc::new(parity_convention_policy(&graph, &k, i, n_agents, w.as_ref(), cap)?)
            }
            PolicySpec::ExpDwell { growth, max_exponent } => Arc::new(exp_dwell_policy(&graph, i, *growth, *max_exponent)?),
            PolicySpec::DetDefeat | PolicySpec::MemorylessCounterexample => {
                if n_agents != 2 {
                    return Err(ExperimentError::PolicySpec { agent: i, message: "this construction needs exactly two agents".into() });
                }
                let pair = match &pair_cache {
                    Some(p) => p.clone(),
                    None => {
                        let p: Vec<Arc<dyn Policy>> = if matches!(spec, PolicySpec::DetDefeat) {
                            det_defeat_policies(&graph, &scheduler)?.into_iter().map(|p| Arc::new(p) as Arc<dyn Policy>).collect()
                        } else {
                            memoryless_cobuchi_counterexample(&graph)?.into_iter().map(|p| Arc::new(p) as Arc<dyn Policy>).collect()
                        };
                        pair_cache = Some(p.clone());
                        p
                    }
                };
                pair[i].clone()
            }
            PolicySpec::Alternating { at, choices, otherwise } => {
                let at = to_local(&old_of, &[*at], i)?[0];
                let choices = to_local(&old_of, choices, i)?;
                let otherwise: Vec<Vertex> = old_of.iter().map(|&o| otherwise.get(o).copied().unwrap_or(usize::MAX)).collect();
                Arc::new(AlternatingPolicy::new(&graph, at, choices, to_local(&old_of, &otherwise, i)?)?)
            }
        };
        policies.push(p);
    }
    let mut comp = Composition::new(graph, policies, scheduler, seed)?;
    if let Some(s) = shield {
        comp = comp.with_shield(Arc::new(s));
    }
    Ok(Built { full, objectives: cfg.objectives.clone(), comp, old_of })
}

/// Maps a full-graph predicate onto the composition graph.
pub fn localise_predicate(p: &Predicate, old_of: &[Vertex]) -> Predicate {
    let pick = |set: &[Vertex]| -> Vec<Vertex> { old_of.iter().enumerate().filter(|(_, o)| set.contains(o)).map(|(i, _)| i).collect() };
    match p {
        Predicate::BuchiVisits { set, k } => Predicate::BuchiVisits { set: pick(set), k: *k },
        Predicate::CleanSuffix { set, w } => Predicate::CleanSuffix { set: pick(set), w: *w },
        Predicate::Stabilized { w } => Predicate::Stabilized { w: *w },
        Predicate::Reach { set } => Predicate::Reach { set: pick(set) },
        Predicate::AlwaysIn { set } => Predicate::AlwaysIn { set: pick(set) },
        Predicate::ParityWindow { colours, w } => Predicate::ParityWindow { colours: old_of.iter().map(|&o| colours[o]).collect(), w: *w },
        Predicate::AllOf { all } => Predicate::AllOf { all: all.iter().map(|q| localise_predicate(q, old_of)).collect() },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSummary {
    pub nodes: usize,
    pub states: usize,
    pub row_stochastic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSummary {
    pub horizon: u64,
    pub head: Vec<String>,
    pub visited: Vec<String>,
    pub overrides: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectationCheck {
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub agents: usize,
    pub vertices: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus: Option<ConsensusReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expectation: Option<ExpectationCheck>,
}

/// Everything a run produced, for the caller to persist.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Option<Trace>,
}

const HEAD_LEN: usize = 20;

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput, ExperimentError> {
    let built = build(cfg, seed)?;
    let label = |v: Vertex| built.full.label(built.old_of[v]).to_string();
    let mut report = RunReport {
        name: cfg.name.clone(),
        mode: cfg.mode,
        seed,
        agents: built.comp.n_agents(),
        vertices: built.full.n(),
        chain: None,
        verdict: None,
        consensus: None,
        trace: None,
        estimate: None,
        convergence: None,
        expectation: None,
    };
    if matches!(cfg.mode, Mode::Exact | Mode::Both) {
        let chain = build_global_chain(&built.comp, cfg.state_cap)?;
        report.chain = Some(ChainSummary { nodes: chain.n_nodes(), states: chain.n_states(), row_stochastic: chain.is_row_stochastic() });
        report.verdict = Some(built.verdict(&chain));
        if let Some(mode) = cfg.consensus {
            report.consensus = Some(check_consensus_claims(&chain, &built.comp, mode)?);
        }
    }
    let mut trace = None;
    if matches!(cfg.mode, Mode::Simulate | Mode::Both) {
        let t = built.comp.run(cfg.horizon);
        let path = t.path();
        let mut seen = vec![false; built.full.n()];
        for &v in &path {
            seen[built.old_of[v]] = true;
        }
        report.trace = Some(TraceSummary {
            horizon: cfg.horizon,
            head: path.iter().take(HEAD_LEN).map(|&v| label(v)).collect(),
            visited: built.full.vertices().filter(|&v| seen[v]).map(|v| built.full.label(v).to_string()).collect(),
            overrides: t.steps.iter().filter(|s| s.overridden).count() as u64,
        });
        if let Some(p) = &cfg.predicate {
            let local = localise_predicate(p, &built.old_of);
            report.estimate = Some(monte_carlo_estimate(&built.comp, cfg.horizon, cfg.trials.max(1), &local));
        }
        if let Some(w) = cfg.convergence_window {
            report.convergence = Some(convergence_time(&built.comp, cfg.trials.max(1), w, cfg.horizon));
        }
        trace = Some(t);
    }
    if let Some(exp) = &cfg.expected {
        report.expectation = Some(check_expected(exp, &report, trace.as_ref(), &built.old_of));
    }
    Ok(RunOutput { report, trace })
}

fn check_expected(exp: &Expected, report: &RunReport, trace: Option<&Trace>, old_of: &[Vertex]) -> ExpectationCheck {
    let mut failures = Vec::new();
    if let (Some(want), Some(v)) = (&exp.verdict, &report.verdict) {
        if want.len() != v.per_objective.len() {
            failures.push(format!("expected {} verdicts, got {}", want.len(), v.per_objective.len()));
        }
        for (i, (w, got)) in want.iter().zip(&v.per_objective).enumerate() {
            if !w.matches(got.outcome) {
                failures.push(format!("objective {}: expected {:?}, got {:?}", i + 1, w, got.outcome));
            }
        }
    }
    if let Some(e) = &report.estimate {
        if let Some(lo) = exp.estimate_at_least {
            if e.estimate < lo {
                failures.push(format!("estimate {:.4} below {lo}", e.estimate));
            }
        }
        if let Some(hi) = exp.estimate_at_most {
            if e.upper > hi {
                failures.push(format!("upper confidence bound {:.4} above {hi}", e.upper));
            }
        }
    }
    if let (Some(within), Some(t)) = (&exp.trace_within, trace) {
        if let Some(v) = t.path().into_iter().map(|v| old_of[v]).find(|v| !within.contains(v)) {
            failures.push(format!("trace visits vertex {v} outside the expected set"));
        }
    }
    ExpectationCheck { passed: failures.is_empty(), failures }
}

/// Grid of parameter overrides; the sweep runs the product of all non-empty axes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub agents: Vec<usize>,
    #[serde(default)]
    pub growth: Vec<u64>,
    #[serde(default)]
    pub weights: Vec<Vec<u64>>,
    #[serde(default)]
    pub window: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Point {
    agents: Option<usize>,
    growth: Option<u64>,
    weights: Option<Vec<u64>>,
    window: Option<usize>,
}

impl SweepGrid {
    fn is_empty(&self) -> bool {
        self.agents.is_empty() && self.growth.is_empty() && self.weights.is_empty() && self.window.is_empty()
    }

    pub fn size(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        [self.agents.len(), self.growth.len(), self.weights.len(), self.window.len()]
            .iter()
            .map(|&k| k.max(1))
            .fold(1usize, |a, k| a.saturating_mul(k))
    }

    fn points(&self) -> Vec<Point> {
        if self.is_empty() {
            return Vec::new();
        }
        fn axis<T: Clone>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().cloned().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for a in axis(&self.agents) {
            for g in axis(&self.growth) {
                for w in axis(&self.weights) {
                    for win in axis(&self.window) {
                        out.push(Point { agents: a, growth: g, weights: w.clone(), window: win });
                    }
                }
            }
        }
        out
    }
}

fn apply(cfg: &ExperimentConfig, p: &Point) -> Result<ExperimentConfig, ExperimentError> {
    let mut c = cfg.clone();
    if let Some(n) = p.agents {
        if n == 0 || c.policies.is_empty() {
            return Err(ExperimentError::Config("sweep needs at least one agent".into()));
        }
        while c.policies.len() < n {
            c.policies.push(c.policies.last().cloned().unwrap());
            c.objectives.push(c.objectives.last().cloned().unwrap());
        }
        c.policies.truncate(n);
        c.objectives.truncate(n);
        if let SchedulerSpec::Uniform { n: Some(_) } = c.scheduler {
            c.scheduler = SchedulerSpec::Uniform { n: Some(n) };
        }
    }
    if let Some(g) = p.growth {
        for spec in &mut c.policies {
            if let PolicySpec::ExpDwell { growth, .. } = spec {
                *growth = g;
            }
        }
    }
    if let Some(w) = &p.weights {
        c.scheduler = SchedulerSpec::WeightedFair { weights: w.clone() };
    }
    if let Some(w) = p.window {
        c.convergence_window = Some(w);
        if let Some(Predicate::Stabilized { .. }) = c.predicate {
            c.predicate = Some(Predicate::Stabilized { w });
        }
    }
    c.mode = Mode::Simulate;
    Ok(c)
}

pub const SWEEP_HEADER: [&str; 12] =
    ["agents", "growth", "weights", "window", "successes", "trials", "estimate", "lower", "upper", "conv_mean", "conv_median", "conv_p95"];

/// Runs every grid point with the same master seed and writes one CSV row per point.
pub fn run_sweep<W: std::io::Write>(cfg: &ExperimentConfig, grid: &SweepGrid, seed: u64, out: W) -> Result<usize, ExperimentError> {
    let size = grid.size();
    if size > MAX_SWEEP_POINTS {
        return Err(ExperimentError::GridTooLarge { points: size, limit: MAX_SWEEP_POINTS });
    }
    let io = |e: csv::Error| ExperimentError::Config(format!("csv output: {e}"));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(io)?;
    let points = grid.points();
    for p in &points {
        let c = apply(cfg, p)?;
        let built = build(&c, seed)?;
        let est = c
            .predicate
            .as_ref()
            .map(|pr| monte_carlo_estimate(&built.comp, c.horizon, c.trials.max(1), &localise_predicate(pr, &built.old_of)));
        let conv = c.convergence_window.map(|win| convergence_time(&built.comp, c.trials.max(1), win, c.horizon));
        let opt = |x: Option<String>| x.unwrap_or_default();
        w.write_record([
            built.comp.n_agents().to_string(),
            opt(p.growth.map(|g| g.to_string())),
            opt(p.weights.as_ref().map(|ws| ws.iter().map(u64::to_string).collect::<Vec<_>>().join(":"))),
            opt(c.convergence_window.map(|x| x.to_string())),
            opt(est.as_ref().map(|e| e.successes.to_string())),
            opt(est.as_ref().map(|e| e.trials.to_string())),
            opt(est.as_ref().map(|e| format!("{:.6}", e.estimate))),
            opt(est.as_ref().map(|e| format!("{:.6}", e.lower))),
            opt(est.as_ref().map(|e| format!("{:.6}", e.upper))),
            opt(conv.as_ref().map(|s| format!("{:.3}", s.mean))),
            opt(conv.as_ref().map(|s| format!("{:.1}", s.median))),
            opt(conv.as_ref().map(|s| format!("{:.1}", s.p95))),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ExperimentError::Config(format!("csv output: {e}")))?;
    Ok(points.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_writes_header_only() {
        let cfg = gallery::instance("fig3-counterexample").unwrap();
        let mut buf = Vec::new();
        assert_eq!(run_sweep(&cfg, &SweepGrid::default(), 1, &mut buf).unwrap(), 0);
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", SWEEP_HEADER.join(",")));
    }

    #[test]
    fn oversized_grid_rejected() {
        let cfg = gallery::instance("fig3-counterexample").unwrap();
        let grid = SweepGrid { agents: vec![2; 101], growth: vec![2; 100], ..Default::default() };
        assert!(matches!(run_sweep(&cfg, &grid, 1, Vec::new()), Err(ExperimentError::GridTooLarge { points: 10_100, .. })));
    }

    #[test]
    fn config_errors_carry_position() {
        let e = ExperimentConfig::from_json("{\n  \"graph\": 3\n}").unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
    }

    #[test]
    fn agent_count_mismatch() {
        let mut cfg = gallery::instance("fig3-counterexample").unwrap();
        cfg.objectives.pop();
        assert!(matches!(build(&cfg, 0), Err(ExperimentError::AgentCount { objectives: 1, policies: 2 })));
    }

    #[test]
    fn policy_defaults_come_from_objectives() {
        let cfg = gallery::instance("fig1a-buchi").unwrap();
        let b = build(&cfg, 0).unwrap();
        assert_eq!(b.comp.policies[0].propose(crate::policies::MemState(0), 2), crate::prob::Dist::dirac(1));
    }
}
