//! The engine facade: consumes stream events, drives perception,
//! distillation and optimization, answers probes and snapshots its state.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::distillation::{distill, PendingNodes};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::optimizer::{self, StepReport};
use crate::perception::{SemanticBlock, SensingBuffer};
use crate::plugins::{Embedder, Generator, Plugins, Transcriber, TripletExtractor};
use crate::retrieval::{self, ContextBundle, EvidencePath};
use crate::types::{Probe, StreamEvent, Utterance};

/// Version tag written into every snapshot document.
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub utterances: u64,
    pub probes: u64,
    pub blocks: u64,
    pub mounted_amus: u64,
    pub duplicate_touches: u64,
    pub pruned: u64,
    pub merges: u64,
    pub cascaded: u64,
    pub distill_failures: u64,
    pub dropped_blocks: u64,
}

/// A block whose distillation failed once and will be retried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryBlock {
    pub block: SemanticBlock,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineState {
    pub buffer: SensingBuffer,
    pub pending: VecDeque<PendingNodes>,
    pub retry: VecDeque<RetryBlock>,
    pub hierarchy: Hierarchy,
    /// Last turn processed.
    pub clock: Option<u64>,
    pub stats: Stats,
}

impl EngineState {
    fn new(cfg: &EngineConfig) -> Self {
        Self {
            buffer: SensingBuffer::new(&cfg.buffer),
            pending: VecDeque::new(),
            retry: VecDeque::new(),
            hierarchy: Hierarchy::new(cfg.params.t_max),
            clock: None,
            stats: Stats::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditRecord {
    Step(StepReport),
    DistillFailure {
        turn: u64,
        span: (u64, u64),
        error: String,
        dropped: bool,
    },
    Probe {
        turn: u64,
        question: String,
        answer: String,
        amu_ids: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub turn: u64,
    pub text: String,
    pub context: ContextBundle,
    pub latency_ms: f64,
}

/// What one [`Engine::on_event`] call did.
#[derive(Debug, Clone)]
pub struct EventOutcome {
    pub turn: u64,
    pub answer: Option<Answer>,
    pub step: Option<StepReport>,
    /// Nodes examined by hierarchy scans during this event.
    pub work: u64,
    pub elapsed: Duration,
    /// Portion of `elapsed` spent inside remote plugin calls.
    pub io: Duration,
}

impl EventOutcome {
    /// Wall time minus remote-plugin time.
    pub fn engine_time(&self) -> Duration {
        self.elapsed.saturating_sub(self.io)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    config: EngineConfig,
    state: EngineState,
}

pub struct Engine {
    config: EngineConfig,
    plugins: Plugins,
    state: EngineState,
    audit: Vec<AuditRecord>,
}

impl Engine {
    /// Builds an engine with the plugins described by `config`.
    pub fn new(config: EngineConfig) -> Result<Self> {
        let plugins = Plugins::from_config(&config)?;
        Self::with_plugins(config, plugins)
    }

    pub fn with_plugins(config: EngineConfig, plugins: Plugins) -> Result<Self> {
        config.validate()?;
        plugins.check_dimension(config.dimension)?;
        let state = EngineState::new(&config);
        Ok(Self {
            config,
            plugins,
            state,
            audit: Vec::new(),
        })
    }

    pub fn from_config_json(text: &str) -> Result<Self> {
        Self::new(EngineConfig::from_json(text)?)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn config_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.config)?)
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.state.hierarchy
    }

    pub fn plugins(&self) -> &Plugins {
        &self.plugins
    }

    pub fn clock(&self) -> Option<u64> {
        self.state.clock
    }

    /// Drains the audit records collected so far.
    pub fn take_audit(&mut self) -> Vec<AuditRecord> {
        std::mem::take(&mut self.audit)
    }

    pub fn set_embedder(&mut self, embedder: Box<dyn Embedder>) -> Result<()> {
        if embedder.dimension() != self.config.dimension {
            return Err(Error::Config(format!(
                "embedder dimension {} does not match engine dimension {}",
                embedder.dimension(),
                self.config.dimension
            )));
        }
        self.plugins.embedder = embedder;
        Ok(())
    }

    pub fn set_generator(&mut self, generator: Box<dyn Generator>) {
        self.plugins.generator = generator;
    }

    pub fn set_extractor(&mut self, extractor: Box<dyn TripletExtractor>) {
        self.plugins.extractor = extractor;
    }

    pub fn set_transcriber(&mut self, transcriber: Box<dyn Transcriber>) {
        self.plugins.transcriber = transcriber;
    }

    /// Processes one stream event. On error the turn is attached and the
    /// clock does not advance.
    pub fn on_event(&mut self, ev: &StreamEvent) -> Result<EventOutcome> {
        let started = Instant::now();
        let io_before = self.plugins.io_clock().total();
        let visits_before = self.state.hierarchy.visits();
        let turn = ev.turn();
        if let Some(clock) = self.state.clock {
            if turn <= clock {
                return Err(Error::Precondition(format!(
                    "turn {turn} does not follow turn {clock}"
                ))
                .at_turn(turn));
            }
        }

        let (answer, step) = match ev {
            StreamEvent::Utterance(u) => (None, self.on_utterance(u).map_err(|e| e.at_turn(turn))?),
            StreamEvent::Probe(p) => {
                let (a, s) = self.on_probe(p, started).map_err(|e| e.at_turn(turn))?;
                (Some(a), s)
            }
        };
        self.state.clock = Some(turn);
        Ok(EventOutcome {
            turn,
            answer,
            step,
            work: self.state.hierarchy.visits() - visits_before,
            elapsed: started.elapsed(),
            io: self.plugins.io_clock().total().saturating_sub(io_before),
        })
    }

    fn on_utterance(&mut self, u: &Utterance) -> Result<Option<StepReport>> {
        let text = self.plugins.transcriber.transcribe(&u.text)?;
        if text.trim().is_empty() {
            return Err(Error::Precondition("utterance text is empty".into()));
        }
        let turn = u.turn;
        let u = Utterance { text, ..u.clone() };
        let block = self.state.buffer.ingest(
            u,
            self.plugins.embedder.as_ref(),
            self.config.params.tau_drift,
        )?;
        self.state.stats.utterances += 1;
        match block {
            Some(block) => {
                self.distill_block(block, turn);
                self.optimize(turn).map(Some)
            }
            None => Ok(None),
        }
    }

    /// Distills `block` (after any block awaiting a retry) into the pending
    /// queue. A first failure queues the block for one more attempt; a
    /// second one drops it.
    fn distill_block(&mut self, block: SemanticBlock, turn: u64) {
        let retries: Vec<RetryBlock> = self.state.retry.drain(..).collect();
        for r in retries {
            self.try_distill(r.block, turn, true);
        }
        self.try_distill(block, turn, false);
    }

    fn try_distill(&mut self, block: SemanticBlock, turn: u64, is_retry: bool) {
        match distill(&block, &self.plugins, &self.config.plugins.scene_keywords) {
            Ok(p) => {
                self.state.stats.blocks += 1;
                self.state.pending.push_back(p);
            }
            Err(e) => {
                self.state.stats.distill_failures += 1;
                log::warn!(
                    "distillation of turns {}..={} failed: {e}",
                    block.span.0,
                    block.span.1
                );
                if self.config.audit {
                    self.audit.push(AuditRecord::DistillFailure {
                        turn,
                        span: block.span,
                        error: e.to_string(),
                        dropped: is_retry,
                    });
                }
                if is_retry {
                    self.state.stats.dropped_blocks += 1;
                } else {
                    self.state.retry.push_back(RetryBlock {
                        block,
                        error: e.to_string(),
                    });
                }
            }
        }
    }

    fn optimize(&mut self, turn: u64) -> Result<StepReport> {
        let report = optimizer::step(
            &mut self.state.hierarchy,
            &mut self.state.pending,
            turn,
            &self.config.params,
            &self.config.pass_order,
            self.config.audit,
        )?;
        let stats = &mut self.state.stats;
        for a in &report.admissions {
            stats.mounted_amus += a.mounted.len() as u64;
            stats.duplicate_touches += a.touched.len() as u64;
        }
        stats.pruned += report.prune.pruned_ids.len() as u64;
        stats.merges += report.prune.merged_pairs.len() as u64;
        stats.cascaded += report.prune.cascaded_ids.len() as u64;
        if self.config.audit {
            self.audit.push(AuditRecord::Step(report.clone()));
        }
        Ok(report)
    }

    fn on_probe(&mut self, p: &Probe, started: Instant) -> Result<(Answer, Option<StepReport>)> {
        p.check_no_look_ahead()?;
        if p.question.trim().is_empty() {
            return Err(Error::Precondition("probe question is empty".into()));
        }
        let query = self.plugins.embedder.embed(&p.question)?;

        let flushed = if self.config.flush_on_probe {
            match self.state.buffer.force_flush()? {
                Some(block) => {
                    self.distill_block(block, p.turn);
                    true
                }
                None => false,
            }
        } else {
            false
        };

        let paths = retrieval::search_readonly(
            &self.state.hierarchy,
            &query,
            p.turn,
            &self.config.params,
            &self.config.retrieval,
        )?;
        let bundle = retrieval::assemble_context(
            self.state.buffer.visible(),
            self.state.pending.iter(),
            paths,
        );
        let text = retrieval::answer(p, &bundle, self.plugins.generator.as_ref())?;
        retrieval::touch_paths(&mut self.state.hierarchy, &bundle.long_term, p.turn)?;
        self.state.stats.probes += 1;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;

        if self.config.audit {
            self.audit.push(AuditRecord::Probe {
                turn: p.turn,
                question: p.question.clone(),
                answer: text.clone(),
                amu_ids: bundle.long_term.iter().map(|x| x.amu_id.0).collect(),
            });
        }
        let step = if flushed || !self.state.pending.is_empty() {
            Some(self.optimize(p.turn)?)
        } else {
            None
        };
        Ok((
            Answer {
                turn: p.turn,
                text,
                context: bundle,
                latency_ms,
            },
            step,
        ))
    }

    /// Flushes the sensing buffer at stream end and runs a final step.
    pub fn finish(&mut self) -> Result<Option<StepReport>> {
        let turn = self.state.clock.unwrap_or(0);
        match self.state.buffer.force_flush()? {
            Some(block) => {
                self.distill_block(block, turn);
                self.optimize(turn).map(Some).map_err(|e| e.at_turn(turn))
            }
            None => Ok(None),
        }
    }

    /// Read-only retrieval at the current clock; touches nothing.
    pub fn search(&self, question: &str) -> Result<Vec<EvidencePath>> {
        let query = self.plugins.embedder.embed(question)?;
        retrieval::search_readonly(
            &self.state.hierarchy,
            &query,
            self.state.clock.unwrap_or(0),
            &self.config.params,
            &self.config.retrieval,
        )
    }

    /// Parses one JSON stream event and feeds it. Returns the answer as a
    /// JSON document for probes.
    pub fn feed_json(&mut self, event_json: &str) -> Result<Option<String>> {
        let ev: StreamEvent = serde_json::from_str(event_json)?;
        let out = self.on_event(&ev)?;
        out.answer
            .map(|a| serde_json::to_string(&a).map_err(Error::from))
            .transpose()
    }

    /// Full engine state and configuration as a JSON document.
    pub fn snapshot(&self) -> Result<String> {
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            state: self.state.clone(),
        };
        Ok(serde_json::to_string(&snap)?)
    }

    /// Rebuilds an engine from [`Engine::snapshot`] output with the given
    /// plugins.
    pub fn restore(snapshot: &str, plugins: Plugins) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(snapshot)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        snap.state
            .hierarchy
            .check_integrity()
            .map_err(|e| Error::Snapshot(e.to_string()))?;
        let mut engine = Self::with_plugins(snap.config, plugins)?;
        engine.state = snap.state;
        Ok(engine)
    }

    /// [`Engine::restore`] with the plugins named in the snapshot's config.
    pub fn restore_default(snapshot: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(snapshot)?;
        let plugins = Plugins::from_config(&snap.config)?;
        Self::restore(snapshot, plugins)
    }
}
