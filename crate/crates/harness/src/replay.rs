//! Runs an engine over a stream and collects per-turn and per-probe rows.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use tidemem_core::types::contains_token_sequence;
use tidemem_core::{AuditRecord, Engine, EngineConfig, StreamEvent};

use crate::metrics::{kem, Aggregates, EventKind, MetricsReport, ProbeRow, TurnRow};

#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayOptions {
    /// Report engine time with remote-plugin round-trips subtracted.
    pub exclude_io: bool,
}

pub struct ReplayOutput {
    pub report: MetricsReport,
    pub turns: Vec<TurnRow>,
    pub audit: Vec<AuditRecord>,
    pub engine: Engine,
}

/// Builds an engine from `config` and replays `events` through it.
pub fn replay(
    events: &[StreamEvent],
    config: EngineConfig,
    opts: ReplayOptions,
) -> anyhow::Result<ReplayOutput> {
    let engine = Engine::new(config)?;
    replay_with(engine, events, opts)
}

pub fn replay_with(
    mut engine: Engine,
    events: &[StreamEvent],
    opts: ReplayOptions,
) -> anyhow::Result<ReplayOutput> {
    let budget = engine.config().params.t_max;
    let texts: BTreeMap<u64, &str> = events
        .iter()
        .filter_map(|ev| match ev {
            StreamEvent::Utterance(u) => Some((u.turn, u.text.as_str())),
            StreamEvent::Probe(_) => None,
        })
        .collect();
    let mut turns = Vec::with_capacity(events.len());
    let mut probes = Vec::new();

    for ev in events {
        let out = engine.on_event(ev)?;
        let elapsed = if opts.exclude_io {
            out.engine_time()
        } else {
            out.elapsed
        };
        let ms = elapsed.as_secs_f64() * 1e3;
        let kind = match ev {
            StreamEvent::Utterance(_) => EventKind::Utterance,
            StreamEvent::Probe(p) => {
                let a = out.answer.as_ref().context("probe produced no answer")?;
                let context = a.context.text();
                let evidence_in_context = (!p.evidence_turns.is_empty()).then(|| {
                    p.evidence_turns.iter().any(|t| {
                        texts
                            .get(t)
                            .is_some_and(|text| contains_token_sequence(&context, text))
                    })
                });
                probes.push(ProbeRow {
                    turn: p.turn,
                    question: p.question.clone(),
                    answer: a.text.clone(),
                    kem: kem(&a.text, &p.keywords),
                    evidence_in_context,
                    keywords_in_context: kem(&context, &p.keywords),
                    latency_ms: ms,
                });
                EventKind::Probe
            }
        };
        turns.push(TurnRow {
            turn: out.turn,
            kind,
            update_ms: ms,
            work: out.work,
            total_cost: engine.hierarchy().total_cost(),
            nodes: engine.hierarchy().len(),
            flushed: out.step.is_some(),
        });
    }
    engine.finish()?;

    let mut aggregates = Aggregates::from_rows(&probes, &turns, budget);
    if engine.hierarchy().total_cost() > budget {
        aggregates.budget_violations += 1;
    }
    let report = MetricsReport {
        budget,
        aggregates,
        engine_stats: engine.state().stats.clone(),
        probes,
    };
    let audit = engine.take_audit();
    Ok(ReplayOutput {
        report,
        turns,
        audit,
        engine,
    })
}

/// Writes `report.json`, `latency.csv` and, when records exist,
/// `audit.jsonl` into `dir`.
pub fn write_outputs(dir: &Path, out: &ReplayOutput) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let report = serde_json::to_string_pretty(&out.report)?;
    fs::write(dir.join("report.json"), report + "\n")?;

    let mut csv = csv::Writer::from_path(dir.join("latency.csv"))?;
    for row in &out.turns {
        csv.serialize(row)?;
    }
    csv.flush()?;

    if !out.audit.is_empty() {
        let mut w = BufWriter::new(File::create(dir.join("audit.jsonl"))?);
        for r in &out.audit {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}
