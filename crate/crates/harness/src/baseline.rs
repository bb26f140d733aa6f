//! A memory-less contrast system that keeps the whole transcript and
//! re-reads all of it on every turn.

use std::time::{Duration, Instant};

use tidemem_core::plugins::{Generator, StubGenerator};
use tidemem_core::{token_cost, ContextBundle, StreamEvent};

#[derive(Debug, Default)]
pub struct NaiveBaseline {
    history: Vec<String>,
    generator: StubGenerator,
    /// Token count of the last full-context rebuild.
    pub context_tokens: u64,
}

impl NaiveBaseline {
    pub fn new() -> Self {
        Self::default()
    }

    fn rebuild_context(&mut self) -> String {
        let context = self.history.join("\n");
        self.context_tokens = token_cost(&context);
        context
    }

    /// Feeds one event; probes are answered from the full transcript.
    pub fn on_event(&mut self, ev: &StreamEvent) -> (Option<String>, Duration) {
        let started = Instant::now();
        let answer = match ev {
            StreamEvent::Utterance(u) => {
                self.history.push(u.composite());
                self.rebuild_context();
                None
            }
            StreamEvent::Probe(p) => {
                self.rebuild_context();
                let bundle = ContextBundle {
                    short_term: self.history.clone(),
                    ..ContextBundle::default()
                };
                let text = self
                    .generator
                    .generate(&bundle.prompt(&p.question))
                    .unwrap_or_default();
                Some(text.trim().to_string())
            }
        };
        (answer, started.elapsed())
    }
}

/// Per-utterance update times in milliseconds, keyed by turn.
pub fn run_baseline(events: &[StreamEvent]) -> Vec<(u64, f64)> {
    let mut b = NaiveBaseline::new();
    let mut out = Vec::new();
    for ev in events {
        let (_, d) = b.on_event(ev);
        if matches!(ev, StreamEvent::Utterance(_)) {
            out.push((ev.turn(), d.as_secs_f64() * 1e3));
        }
    }
    out
}
