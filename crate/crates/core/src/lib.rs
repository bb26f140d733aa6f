//! Bounded-state hierarchical memory for unbounded dialogue streams.
//!
//! Utterances enter a short-term sensing buffer that cuts the stream into
//! semantic blocks. Each block is distilled into an event summary, a scene
//! category and entity-level atomic memory units (AMUs), which are mounted
//! into a Scene > Event > AMU forest. The forest is held under a hard token
//! budget by evicting the nodes with the least utility per token, where
//! utility mixes access frequency and recency. Probes are answered from the
//! buffer, the not-yet-mounted blocks and a top-down search of the forest.
//!
//! ```
//! use tidemem_core::{Engine, EngineConfig, Probe, StreamEvent, Utterance};
//!
//! let mut engine = Engine::new(EngineConfig { dimension: 64, ..Default::default() }).unwrap();
//! engine
//!     .on_event(&StreamEvent::Utterance(Utterance::new(1, "Sheldon", "I met Amy Farrah Fowler")))
//!     .unwrap();
//! let out = engine.on_event(&StreamEvent::Probe(Probe::new(2, "who did Sheldon meet?"))).unwrap();
//! assert!(out.answer.is_some());
//! ```

pub mod config;
pub mod distillation;
pub mod engine;
pub mod error;
pub mod hierarchy;
pub mod optimizer;
pub mod perception;
pub mod plugins;
pub mod prompts;
pub mod retrieval;
pub mod types;

pub use config::{
    BufferConfig, EngineConfig, Pass, PluginConfig, PluginKind, PluginsConfig, RetrievalParams,
    UtilityParams,
};
pub use distillation::{AmuCandidate, PendingNodes, Triplet};
pub use engine::{Answer, AuditRecord, Engine, EngineState, EventOutcome, Stats};
pub use error::{Error, Result};
pub use hierarchy::{token_cost, Hierarchy, Level, MemoryNode, NewNode, NodeId, Relation};
pub use optimizer::{utility, ItemRecord, PruneReport, StepReport};
pub use perception::{SemanticBlock, SensingBuffer};
pub use plugins::Plugins;
pub use retrieval::{ContextBundle, EvidencePath};
pub use types::{Embedding, Probe, StreamEvent, Utterance};
