use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use tidemem_core::EngineConfig;
use tidemem_harness::oracle::{self, Item};
use tidemem_harness::regret::{self, GREEDY_BOUND};
use tidemem_harness::{
    load_stream, replay, save_stream, write_outputs, ReplayOptions, SynthConfig,
};

#[derive(Parser)]
#[command(
    name = "tidemem",
    version,
    about = "Replay and experiment tooling for the tidemem engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a JSON-lines stream and write report.json and latency.csv.
    Replay {
        stream: PathBuf,
        /// Engine config JSON; missing keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write per-step audit records to audit.jsonl.
        #[arg(long)]
        audit: bool,
        /// Subtract remote-plugin time from latencies.
        #[arg(long)]
        exclude_io: bool,
        /// Flush the sensing buffer before answering each probe.
        #[arg(long)]
        flush_on_probe: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic stream.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        turns: u64,
        #[arg(long, default_value_t = 6)]
        topics: usize,
        #[arg(long, default_value_t = 0.02)]
        probe_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a knapsack instance exactly and compare engine eviction.
    Oracle {
        /// JSON file (or inline JSON) with `[[utility, cost], ...]` or
        /// `[{"utility": u, "cost": c}, ...]`.
        #[arg(long)]
        items: String,
        #[arg(long)]
        capacity: u64,
    },
    /// Greedy-versus-optimum regret over an audit log.
    Regret {
        #[arg(long)]
        audit: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        sample_every: usize,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ItemSpec {
    Pair(f64, u64),
    Named(Item),
}

fn parse_items(arg: &str) -> anyhow::Result<Vec<Item>> {
    let text = if arg.trim_start().starts_with('[') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("cannot read {arg}"))?
    };
    let specs: Vec<ItemSpec> = serde_json::from_str(&text).context("items must be a JSON array")?;
    Ok(specs
        .into_iter()
        .map(|s| match s {
            ItemSpec::Pair(u, c) => Item::new(u, c),
            ItemSpec::Named(i) => i,
        })
        .collect())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Replay {
            stream,
            config,
            audit,
            exclude_io,
            flush_on_probe,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("cannot read {}", path.display()))?;
                    EngineConfig::from_json(&text)?
                }
                None => EngineConfig::default(),
            };
            cfg.audit |= audit;
            cfg.flush_on_probe |= flush_on_probe;
            let events = load_stream(&stream)?;
            let result = replay(&events, cfg, ReplayOptions { exclude_io })?;
            write_outputs(&out, &result)?;
            let a = &result.report.aggregates;
            writeln!(
                stdout,
                "turns {} probes {} kem {} evidence {} violations {} max cost {}/{}",
                a.turns,
                a.probes,
                fmt_rate(a.kem_rate),
                fmt_rate(a.evidence_recall),
                a.budget_violations,
                a.max_total_cost,
                result.report.budget
            )?;
            if a.budget_violations > 0 {
                anyhow::bail!("{} budget violations", a.budget_violations);
            }
        }
        Command::Synth {
            seed,
            turns,
            topics,
            probe_rate,
            out,
        } => {
            anyhow::ensure!(turns >= 1, "--turns must be at least 1");
            anyhow::ensure!(topics >= 1, "--topics must be at least 1");
            anyhow::ensure!(
                (0.0..=1.0).contains(&probe_rate),
                "--probe-rate must lie in [0, 1]"
            );
            let s = tidemem_harness::generate(&SynthConfig {
                seed,
                turns,
                topics,
                probe_rate,
                ..SynthConfig::default()
            });
            save_stream(&out, &s.events)
                .with_context(|| format!("cannot write {}", out.display()))?;
            writeln!(
                stdout,
                "{} events, {} probes -> {}",
                s.events.len(),
                s.probes.len(),
                out.display()
            )?;
        }
        Command::Oracle { items, capacity } => {
            let items = parse_items(&items)?;
            let r = if items.iter().all(|i| i.cost > 0) {
                serde_json::to_value(regret::compare(&items, capacity)?)?
            } else {
                serde_json::to_value(oracle::solve(&items, capacity)?)?
            };
            writeln!(stdout, "{}", serde_json::to_string_pretty(&r)?)?;
        }
        Command::Regret {
            audit,
            gamma,
            sample_every,
        } => {
            let records = regret::load_audit(&audit)?;
            let r = regret::regret_from_audit(&records, gamma, sample_every)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&r)?)?;
            if r.below_bound > 0 {
                eprintln!(
                    "{} step(s) retained less than {GREEDY_BOUND:.4} of OPT",
                    r.below_bound
                );
            }
        }
    }
    Ok(())
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        if e.downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
        {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
