//! Model-boundary plugins: embedder, generator, triplet extractor and
//! transcriber. Each role has a deterministic stub and a JSON-over-HTTP
//! client; [`callable`] adapts plain closures for embedding hosts.
//!
//! Remote wire protocol (all requests are `POST`, all responses JSON):
//!
//! | role        | request body                                        | response body                       |
//! |-------------|-----------------------------------------------------|-------------------------------------|
//! | embed       | `{"texts": [str, ...]}`                             | `{"vectors": [[f64, ...], ...]}`    |
//! | generate    | `{"model": str, "prompt": str}`                     | `{"text": str}`                     |
//! | transcribe  | raw audio bytes (`application/octet-stream`)        | `{"text": str}`                     |
//! | extract     | `{"utterances": [{"turn","speaker","text"}, ...]}`  | `{"triplets": [{"subject","relation","object","source_turn"}, ...]}` |

pub mod callable;
pub mod remote;
pub mod stub;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::config::{EngineConfig, PluginKind};
use crate::distillation::Triplet;
use crate::error::{Error, Result};
use crate::types::{Embedding, Utterance};

pub use callable::{EchoGenerator, FnEmbedder, FnGenerator};
pub use remote::{RemoteEmbedder, RemoteExtractor, RemoteGenerator, RemoteTranscriber};
pub use stub::{
    CapitalizedPhraseExtractor, HashedTrigramEmbedder, PassthroughTranscriber, StubGenerator,
};

pub trait Embedder: Send {
    fn dimension(&self) -> usize;

    /// Returns a unit-norm vector of length [`Embedder::dimension`].
    fn embed(&self, text: &str) -> Result<Embedding>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

pub trait Generator: Send {
    fn generate(&self, prompt: &str) -> Result<String>;
}

pub trait TripletExtractor: Send {
    fn extract(&self, utterances: &[Utterance]) -> Result<Vec<Triplet>>;
}

pub trait Transcriber: Send {
    /// Turns an utterance payload (text or audio reference) into text.
    fn transcribe(&self, input: &str) -> Result<String>;
}

/// Accumulated wall time spent inside remote plugin calls.
#[derive(Debug, Clone, Default)]
pub struct IoClock(Arc<AtomicU64>);

impl IoClock {
    pub fn add(&self, d: Duration) {
        self.0
            .fetch_add(d.as_nanos().min(u64::MAX as u128) as u64, Ordering::Relaxed);
    }

    pub fn total(&self) -> Duration {
        Duration::from_nanos(self.0.load(Ordering::Relaxed))
    }
}

/// The full plugin set an engine runs with.
pub struct Plugins {
    pub embedder: Box<dyn Embedder>,
    pub generator: Box<dyn Generator>,
    pub extractor: Box<dyn TripletExtractor>,
    pub transcriber: Box<dyn Transcriber>,
    io: IoClock,
}

impl Plugins {
    pub fn new(
        embedder: Box<dyn Embedder>,
        generator: Box<dyn Generator>,
        extractor: Box<dyn TripletExtractor>,
        transcriber: Box<dyn Transcriber>,
    ) -> Self {
        Self {
            embedder,
            generator,
            extractor,
            transcriber,
            io: IoClock::default(),
        }
    }

    /// All-stub plugin set with the default scene keyword table.
    pub fn stub(dimension: usize) -> Self {
        Self::new(
            Box::new(HashedTrigramEmbedder::new(dimension)),
            Box::new(StubGenerator::default()),
            Box::new(CapitalizedPhraseExtractor),
            Box::new(PassthroughTranscriber),
        )
    }

    pub fn from_config(cfg: &EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.plugins;
        let io = IoClock::default();
        let embedder: Box<dyn Embedder> = match p.embedder.kind {
            PluginKind::Stub => Box::new(HashedTrigramEmbedder::new(cfg.dimension)),
            PluginKind::Remote => {
                Box::new(RemoteEmbedder::new(&p.embedder, cfg.dimension, io.clone())?)
            }
        };
        let generator: Box<dyn Generator> = match p.generator.kind {
            PluginKind::Stub => Box::new(StubGenerator::new(p.scene_keywords.clone())),
            PluginKind::Remote => Box::new(RemoteGenerator::new(&p.generator, io.clone())?),
        };
        let extractor: Box<dyn TripletExtractor> = match p.extractor.kind {
            PluginKind::Stub => Box::new(CapitalizedPhraseExtractor),
            PluginKind::Remote => Box::new(RemoteExtractor::new(&p.extractor, io.clone())?),
        };
        let transcriber: Box<dyn Transcriber> = match p.transcriber.kind {
            PluginKind::Stub => Box::new(PassthroughTranscriber),
            PluginKind::Remote => Box::new(RemoteTranscriber::new(&p.transcriber, io.clone())?),
        };
        let mut plugins = Self::new(embedder, generator, extractor, transcriber);
        plugins.io = io;
        Ok(plugins)
    }

    /// Shares `clock` with plugins that report their I/O time.
    pub fn with_io_clock(mut self, clock: IoClock) -> Self {
        self.io = clock;
        self
    }

    pub fn io_clock(&self) -> &IoClock {
        &self.io
    }

    /// Rejects an embedder whose dimension differs from the engine's.
    pub fn check_dimension(&self, dimension: usize) -> Result<()> {
        if self.embedder.dimension() != dimension {
            return Err(Error::Config(format!(
                "embedder dimension {} does not match engine dimension {dimension}",
                self.embedder.dimension()
            )));
        }
        Ok(())
    }
}
