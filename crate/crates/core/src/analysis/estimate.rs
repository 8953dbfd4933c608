use crate::composition::{trial_seed, Composition, StepRecord};
use crate::graph::Vertex;
use crate::objectives::{mask, Colour};
use crate::policies::fnv1a;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// Finite-horizon success predicate evaluated on one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    /// At least `k` steps arrive in `set`.
    BuchiVisits {
        set: Vec<Vertex>,
        k: u64,
    },
    /// The last `w` vertices avoid `set`.
    CleanSuffix {
        set: Vec<Vertex>,
        w: usize,
    },
    /// Memory digests constant over the last `w` steps and the last `2w` vertices periodic with period at most `w`.
    Stabilized {
        w: usize,
    },
    Reach {
        set: Vec<Vertex>,
    },
    AlwaysIn {
        set: Vec<Vertex>,
    },
    /// The largest colour among the last `w` vertices is even.
    ParityWindow {
        colours: Vec<Colour>,
        w: usize,
    },
    AllOf {
        all: Vec<Predicate>,
    },
}

impl Predicate {
    fn leaves(&self) -> Vec<&Predicate> {
        match self {
            Predicate::AllOf { all } => all.iter().flat_map(Predicate::leaves).collect(),
            p => vec![p],
        }
    }

    pub fn needs_digests(&self) -> bool {
        self.leaves().iter().any(|p| matches!(p, Predicate::Stabilized { .. }))
    }

    fn needs_path(&self) -> bool {
        self.leaves()
            .iter()
            .any(|p| matches!(p, Predicate::Stabilized { .. } | Predicate::CleanSuffix { .. } | Predicate::ParityWindow { .. }))
    }

    /// Evaluates on a complete path and per-step combined memory digests.
    pub fn holds(&self, path: &[Vertex], digests: &[u64]) -> bool {
        let mut e = Evaluator::new(self, path[0]);
        for &v in &path[1..] {
            e.visit(v);
        }
        e.finish(path, digests)
    }
}

enum Leaf {
    Count { set: Vec<bool>, k: u64, count: u64 },
    Reach { set: Vec<bool>, hit: bool },
    Always { set: Vec<bool>, ok: bool },
    Tail(Predicate),
}

struct Evaluator {
    leaves: Vec<Leaf>,
}

fn member(set: &[bool], v: Vertex) -> bool {
    set.get(v).copied().unwrap_or(false)
}

fn set_mask(set: &[Vertex]) -> Vec<bool> {
    mask(set.iter().max().map_or(0, |m| m + 1), set)
}

impl Evaluator {
    fn new(pred: &Predicate, init: Vertex) -> Self {
        let leaves = pred
            .leaves()
            .into_iter()
            .map(|p| match p {
                Predicate::BuchiVisits { set, k } => Leaf::Count { set: set_mask(set), k: *k, count: 0 },
                Predicate::Reach { set } => {
                    let set = set_mask(set);
                    Leaf::Reach { hit: member(&set, init), set }
                }
                Predicate::AlwaysIn { set } => {
                    let set = set_mask(set);
                    Leaf::Always { ok: member(&set, init), set }
                }
                other => Leaf::Tail(other.clone()),
            })
            .collect();
        Evaluator { leaves }
    }

    fn visit(&mut self, v: Vertex) {
        for l in &mut self.leaves {
            match l {
                Leaf::Count { set, count, .. } if member(set, v) => *count += 1,
                Leaf::Reach { set, hit } if member(set, v) => *hit = true,
                Leaf::Always { set, ok } if !member(set, v) => *ok = false,
                _ => {}
            }
        }
    }

    /// Outcome already fixed regardless of the remaining steps.
    fn decided(&self) -> Option<bool> {
        let mut all_true = true;
        for l in &self.leaves {
            match l {
                Leaf::Always { ok: false, .. } => return Some(false),
                Leaf::Count { k, count, .. } if count >= k => {}
                Leaf::Reach { hit: true, .. } => {}
                _ => all_true = false,
            }
        }
        all_true.then_some(true)
    }

    fn finish(&self, path: &[Vertex], digests: &[u64]) -> bool {
        self.leaves.iter().all(|l| match l {
            Leaf::Count { k, count, .. } => count >= k,
            Leaf::Reach { hit, .. } => *hit,
            Leaf::Always { ok, .. } => *ok,
            Leaf::Tail(p) => tail_holds(p, path, digests),
        })
    }
}

fn tail_holds(p: &Predicate, path: &[Vertex], digests: &[u64]) -> bool {
    match p {
        Predicate::CleanSuffix { set, w } => {
            let s = set_mask(set);
            path.len() >= *w && path[path.len() - w..].iter().all(|&v| !member(&s, v))
        }
        Predicate::ParityWindow { colours, w } => {
            path.len() >= *w && path[path.len() - w..].iter().map(|&v| colours[v]).max().is_some_and(|c| c % 2 == 0)
        }
        Predicate::Stabilized { w } => {
            let w = *w;
            if w == 0 || digests.len() < w || path.len() < 2 * w {
                return false;
            }
            let d = &digests[digests.len() - w..];
            let tail = &path[path.len() - 2 * w..];
            d.iter().all(|x| *x == d[0]) && (1..=w).any(|q| (0..tail.len() - q).all(|i| tail[i] == tail[i + q]))
        }
        _ => unreachable!("leaf handled incrementally"),
    }
}

fn combined_digest(rec: &StepRecord) -> u64 {
    let bytes: Vec<u8> = rec.memory_digest.iter().flat_map(|d| d.to_le_bytes()).collect();
    fnv1a(&bytes)
}

/// Runs one trial and reports whether the predicate held.
pub fn run_trial(comp: &Composition, horizon: u64, pred: &Predicate) -> bool {
    let digests_wanted = pred.needs_digests();
    let path_wanted = pred.needs_path();
    let mut r = comp.runner(digests_wanted);
    let mut eval = Evaluator::new(pred, r.vertex());
    let mut path = vec![r.vertex()];
    let mut digests = Vec::new();
    for _ in 0..horizon {
        if let Some(b) = eval.decided() {
            return b;
        }
        let rec = r.step();
        eval.visit(rec.vertex_after);
        if path_wanted {
            path.push(rec.vertex_after);
        }
        if digests_wanted {
            digests.push(combined_digest(rec));
        }
    }
    eval.finish(&path, &digests)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at 95%.
pub fn wilson(successes: u64, trials: u64) -> Estimate {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Estimate { successes, trials, estimate: p, lower: (centre - half).max(0.0), upper: (centre + half).min(1.0) }
}

/// Independent seeded trials; trial k uses a seed derived from the composition seed and k.
pub fn monte_carlo_estimate(comp: &Composition, horizon: u64, trials: u64, pred: &Predicate) -> Estimate {
    assert!(trials >= 1, "at least one trial");
    let successes = (0..trials).filter(|&k| run_trial(&comp.with_seed(trial_seed(comp.seed, k)), horizon, pred)).count();
    wilson(successes as u64, trials)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceSample {
    pub trial: u64,
    pub first_stable_step: u64,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub window: usize,
    pub horizon: u64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub censored: u64,
    #[serde(skip)]
    pub samples: Vec<ConvergenceSample>,
}

/// `path[t]` and `digests[t]` describe time t.
/// First step from which digests stay constant and the path is periodic with period at most `w`.
/// Returns `None` if that suffix is shorter than `2w`.
pub fn first_stable_step(path: &[Vertex], digests: &[u64], w: usize) -> Option<u64> {
    let h = digests.len();
    let mem_from = (1..h).rev().find(|&t| digests[t] != digests[t - 1]).unwrap_or(0);
    let mut best: Option<usize> = None;
    for q in 1..=w.min(path.len().saturating_sub(1)) {
        let mut start = 0;
        for i in (0..path.len() - q).rev() {
            if path[i] != path[i + q] {
                start = i + 1;
                break;
            }
        }
        let s = start.max(mem_from);
        best = Some(best.map_or(s, |b| b.min(s)));
    }
    let s = best?;
    (path.len() - s >= 2 * w).then_some(s as u64)
}

/// Distribution of the stabilisation time over seeded trials of length `horizon`.
pub fn convergence_time(comp: &Composition, trials: u64, w: usize, horizon: u64) -> ConvergenceSummary {
    let mut samples = Vec::with_capacity(trials as usize);
    for k in 0..trials {
        let c = comp.with_seed(trial_seed(comp.seed, k));
        let mut r = c.runner(true);
        let mut path = vec![r.vertex()];
        let init_digest = fnv1a(&r.digests().iter().flat_map(|d| d.to_le_bytes()).collect::<Vec<u8>>());
        let mut digests = vec![init_digest];
        for _ in 0..horizon {
            let rec = r.step();
            path.push(rec.vertex_after);
            digests.push(combined_digest(rec));
        }
        let sample = match first_stable_step(&path, &digests, w) {
            Some(s) => ConvergenceSample { trial: k, first_stable_step: s, censored: false },
            None => ConvergenceSample { trial: k, first_stable_step: horizon, censored: true },
        };
        samples.push(sample);
    }
    summarise(samples, w, horizon)
}

fn summarise(samples: Vec<ConvergenceSample>, window: usize, horizon: u64) -> ConvergenceSummary {
    let mut xs: Vec<u64> = samples.iter().map(|s| s.first_stable_step).collect();
    xs.sort_unstable();
    let n = xs.len();
    let (mean, median, p95) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let mean = xs.iter().sum::<u64>() as f64 / n as f64;
        let median = if n % 2 == 1 { xs[n / 2] as f64 } else { (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0 };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        (mean, median, xs[rank - 1] as f64)
    };
    let censored = samples.iter().filter(|s| s.censored).count() as u64;
    ConvergenceSummary { window, horizon, mean, median, p95, censored, samples }
}

pub fn write_convergence_csv<W: Write>(samples: &[ConvergenceSample], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["trial", "first_stable_step", "censored"])?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
