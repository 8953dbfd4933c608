use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use decoplan::analysis::{write_convergence_csv, Outcome};
use decoplan::experiment::{run_experiment, run_sweep, ExperimentConfig, Mode, RunReport, SweepGrid};
use decoplan::gallery;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_EXPECT_MISMATCH: u8 = 2;
const EXIT_STORED_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "decoplan", version, about = "Decoupled multi-agent planning for omega-regular objectives")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate and/or analyse one experiment.
    Run(RunArgs),
    /// Built-in instances.
    Gallery {
        #[command(subcommand)]
        cmd: GalleryCmd,
    },
    /// Run an experiment over a parameter grid and emit CSV.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum GalleryCmd {
    /// List instances with agent counts and expected outcomes.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Print an instance as a config file.
    Export {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// Gallery instance name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    gallery: Option<String>,
    /// Experiment config JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.gallery, &self.config) {
            (Some(name), _) => gallery::instance(name).with_context(|| format!("unknown gallery instance '{name}'")),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))
            }
            (None, None) => bail!("pass --gallery or --config"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Simulate,
    Exact,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExpectArg {
    AlmostSure,
    Violated,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, env = "DECOPLAN_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    state_cap: Option<usize>,
    /// Exit with status 2 unless every objective has this verdict.
    #[arg(long, value_enum)]
    expect: Option<ExpectArg>,
    /// Directory for report.json, trace.jsonl and convergence.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Grid JSON file; merged with the axis flags.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    agents: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    growth: Vec<u64>,
    /// Weight vectors such as 1:3, comma separated.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    window: Vec<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, env = "DECOPLAN_SEED")]
    seed: Option<u64>,
    /// CSV output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Gallery { cmd: GalleryCmd::List { json } } => cmd_gallery_list(json),
        Cmd::Gallery { cmd: GalleryCmd::Export { name, out } } => {
            let c = gallery::instance(&name).with_context(|| format!("unknown gallery instance '{name}'"))?;
            write_or_print(out.as_deref(), &format!("{}\n", c.to_json()))?;
            Ok(0)
        }
        Cmd::Sweep(args) => cmd_sweep(args),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gallery_list(json: bool) -> Result<u8> {
    let all = gallery::all();
    if json {
        let rows: Vec<serde_json::Value> = all
            .iter()
            .map(|c| {
                serde_json::json!({
                    "name": c.name,
                    "agents": c.policies.len(),
                    "mode": c.mode,
                    "expected": c.expected,
                    "description": c.description,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(0);
    }
    for c in &all {
        let exp = c.expected.as_ref().map_or(String::new(), |e| {
            let verdicts = e.verdict.as_ref().map_or(String::new(), |v| {
                let parts: Vec<&str> = v
                    .iter()
                    .map(|o| if *o == decoplan::experiment::ExpectedOutcome::AlmostSure { "almost-sure" } else { "violated" })
                    .collect();
                format!(" [{}]", parts.join(", "))
            });
            format!("{}{verdicts}", e.summary)
        });
        println!("{:<22} agents={} mode={:<8} expected: {exp}", c.name, c.policies.len(), mode_name(c.mode));
    }
    Ok(0)
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Simulate => "simulate",
        Mode::Exact => "exact",
        Mode::Both => "both",
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let mut cfg = args.source.load()?;
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Simulate => Mode::Simulate,
            ModeArg::Exact => Mode::Exact,
            ModeArg::Both => Mode::Both,
        };
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(c) = args.state_cap {
        cfg.state_cap = c;
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let output = run_experiment(&cfg, seed)?;
    let report = &output.report;
    print_summary(report);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.json"), format!("{}\n", serde_json::to_string_pretty(report)?))?;
        if let Some(t) = &output.trace {
            let mut f = std::io::BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?);
            t.write_jsonl(&mut f)?;
            f.flush()?;
        }
        if let Some(c) = &report.convergence {
            write_convergence_csv(&c.samples, fs::File::create(dir.join("convergence.csv"))?)?;
        }
    }
    if let Some(want) = args.expect {
        let Some(v) = &report.verdict else { bail!("--expect needs an exact verdict; use --mode exact or both") };
        let target = match want {
            ExpectArg::AlmostSure => Outcome::AlmostSure,
            ExpectArg::Violated => Outcome::ViolatedWithPositiveProbability,
        };
        if v.per_objective.iter().any(|o| o.outcome != target) {
            println!("expectation failed: not every objective has the requested verdict");
            return Ok(EXIT_EXPECT_MISMATCH);
        }
    }
    if report.expectation.as_ref().is_some_and(|e| !e.passed) {
        return Ok(EXIT_STORED_MISMATCH);
    }
    Ok(0)
}

fn print_summary(r: &RunReport) {
    println!("instance: {}  seed: {}  agents: {}", if r.name.is_empty() { "(config)" } else { &r.name }, r.seed, r.agents);
    if let Some(c) = &r.chain {
        println!("chain: {} states, {} nodes, row-stochastic: {}", c.states, c.nodes, c.row_stochastic);
    }
    if let Some(v) = &r.verdict {
        for (i, o) in v.per_objective.iter().enumerate() {
            let verdict = match o.outcome {
                Outcome::AlmostSure => "almost-sure",
                Outcome::ViolatedWithPositiveProbability => "violated",
            };
            println!("objective {} ({}): {verdict}", i + 1, o.kind);
        }
        println!("bsccs: {}", v.bsccs.len());
    }
    if let Some(c) = &r.consensus {
        println!("consensus claims passed: {} ({} consensus of {} states)", c.clauses_passed.join(", "), c.consensus_states, c.states);
    }
    if let Some(t) = &r.trace {
        println!("trace: {} steps, head {}", t.horizon, t.head.join(" "));
        println!("visited: {}  shield overrides: {}", t.visited.join(" "), t.overrides);
    }
    if let Some(e) = &r.estimate {
        println!("estimate: {:.4} [{:.4}, {:.4}] ({}/{})", e.estimate, e.lower, e.upper, e.successes, e.trials);
    }
    if let Some(c) = &r.convergence {
        println!("convergence (w={}): mean {:.2}, median {:.1}, p95 {:.1}, censored {}", c.window, c.mean, c.median, c.p95, c.censored);
    }
    if let Some(x) = &r.expectation {
        if x.passed {
            println!("stored expectation: ok");
        } else {
            for f in &x.failures {
                println!("stored expectation failed: {f}");
            }
        }
    }
}

fn parse_weights(s: &str) -> Result<Vec<u64>> {
    s.split(':').map(|w| w.trim().parse::<u64>().with_context(|| format!("bad weight vector '{s}'"))).collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let mut cfg = args.source.load()?;
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    let mut grid = match &args.grid {
        Some(p) => serde_json::from_str::<SweepGrid>(&fs::read_to_string(p)?).with_context(|| format!("in {}", p.display()))?,
        None => SweepGrid::default(),
    };
    grid.agents.extend(args.agents);
    grid.growth.extend(args.growth);
    for w in &args.weights {
        grid.weights.push(parse_weights(w)?);
    }
    grid.window.extend(args.window);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let mut buf = Vec::new();
    let rows = run_sweep(&cfg, &grid, seed, &mut buf)?;
    write_or_print(args.out.as_deref(), std::str::from_utf8(&buf)?)?;
    if args.out.is_some() {
        println!("{rows} grid points written");
    }
    Ok(0)
}
