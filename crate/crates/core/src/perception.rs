//! Short-term sensing buffer: accumulates utterances and cuts the stream
//! into semantic blocks at drift boundaries or when full.
//!
//! After each flush the trailing entries of the flushed block (up to a
//! token budget) stay behind as leading context. They steer the next drift
//! comparison and show up in the short-term context, but they are never
//! emitted a second time.

use serde::{Deserialize, Serialize};

use crate::config::BufferConfig;
use crate::error::{Error, Result};
use crate::hierarchy::token_cost;
use crate::plugins::Embedder;
use crate::types::{Embedding, Utterance};

/// Cosine between consecutive units. Without a previous unit the result
/// is 1.0, so the first utterance never opens a boundary.
pub fn drift(current: &Embedding, previous: Option<&Embedding>) -> Result<f64> {
    match previous {
        None => Ok(1.0),
        Some(prev) => current.cosine(prev),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub utterance: Utterance,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticBlock {
    pub utterances: Vec<Utterance>,
    pub span: (u64, u64),
    pub block_embedding: Embedding,
}

impl SemanticBlock {
    fn from_entries(entries: Vec<BufferEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Precondition("empty semantic block".into()))?
            .utterance
            .turn;
        let last = entries.last().expect("non-empty").utterance.turn;
        let block_embedding = Embedding::centroid(entries.iter().map(|e| &e.embedding))?;
        Ok(Self {
            utterances: entries.into_iter().map(|e| e.utterance).collect(),
            span: (first, last),
            block_embedding,
        })
    }

    /// Speaker-tagged utterances joined by single spaces.
    pub fn text(&self) -> String {
        self.utterances
            .iter()
            .map(Utterance::composite)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for u in &self.utterances {
            if !out.contains(&u.speaker) {
                out.push(u.speaker.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingBuffer {
    entries: Vec<BufferEntry>,
    /// Context carried over from the previous block; never re-emitted.
    leading: Vec<BufferEntry>,
    prev_embedding: Option<Embedding>,
    capacity: usize,
    leading_window_tokens: u64,
}

impl SensingBuffer {
    pub fn new(cfg: &BufferConfig) -> Self {
        Self {
            entries: Vec::new(),
            leading: Vec::new(),
            prev_embedding: None,
            capacity: cfg.capacity.max(1),
            leading_window_tokens: cfg.leading_window_tokens,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Fresh (not yet emitted) entries.
    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn leading(&self) -> &[BufferEntry] {
        &self.leading
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prev_embedding(&self) -> Option<&Embedding> {
        self.prev_embedding.as_ref()
    }

    /// Leading context followed by fresh entries, oldest first.
    pub fn visible(&self) -> impl Iterator<Item = &BufferEntry> + '_ {
        self.leading.iter().chain(self.entries.iter())
    }

    fn last_turn(&self) -> Option<u64> {
        self.entries
            .last()
            .or(self.leading.last())
            .map(|e| e.utterance.turn)
    }

    /// Buffers `u` and returns a block when a drift boundary or the
    /// capacity limit is hit. On embedder failure the buffer is unchanged.
    pub fn ingest(
        &mut self,
        u: Utterance,
        embedder: &dyn Embedder,
        tau_drift: f64,
    ) -> Result<Option<SemanticBlock>> {
        if let Some(last) = self.last_turn() {
            if u.turn <= last {
                return Err(Error::Precondition(format!(
                    "turn {} does not follow buffered turn {last}",
                    u.turn
                )));
            }
        }
        let v = embedder.embed(&u.composite())?;
        let psi = drift(&v, self.prev_embedding.as_ref())?;

        let mut emitted = None;
        if psi < tau_drift && !self.entries.is_empty() {
            emitted = self.flush()?;
        }
        self.prev_embedding = Some(v.clone());
        self.entries.push(BufferEntry {
            utterance: u,
            embedding: v,
        });
        if emitted.is_none() && self.entries.len() >= self.capacity {
            emitted = self.flush()?;
        }
        Ok(emitted)
    }

    /// Empties the fresh entries into a block; `None` when there are none.
    pub fn force_flush(&mut self) -> Result<Option<SemanticBlock>> {
        self.flush()
    }

    fn flush(&mut self) -> Result<Option<SemanticBlock>> {
        if self.entries.is_empty() {
            return Ok(None);
        }
        let entries = std::mem::take(&mut self.entries);

        let mut kept = Vec::new();
        let mut tokens = 0u64;
        for e in entries.iter().rev() {
            let cost = token_cost(&e.utterance.composite());
            if tokens + cost > self.leading_window_tokens {
                break;
            }
            tokens += cost;
            kept.push(e.clone());
        }
        kept.reverse();
        self.leading = kept;

        SemanticBlock::from_entries(entries).map(Some)
    }
}
