//! Experiment tooling around the tidemem engine: stream files, seeded
//! synthetic streams, replay with metrics, a naive contrast baseline and
//! knapsack oracles for checking greedy eviction.

pub mod baseline;
pub mod bench;
pub mod metrics;
pub mod oracle;
pub mod regret;
pub mod replay;
pub mod stream;
pub mod synth;

pub use metrics::{MetricsReport, ProbeRow, TurnRow};
pub use replay::{replay, replay_with, write_outputs, ReplayOptions, ReplayOutput};
pub use stream::{load_stream, parse_stream, save_stream, StreamError};
pub use synth::{generate, SynthConfig, SynthStream};
