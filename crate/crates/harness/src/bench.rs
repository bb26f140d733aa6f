//! Per-turn update-time measurement with the turn order decoupled from
//! wall-clock order.
//!
//! One pass over the stream records a snapshot where each chunk's untimed
//! lead-in begins. Each round then restores the chunks in a shuffled order
//! and times every event of the chunk. A turn's latency is the median over rounds, so
//! slow drift of the host (frequency scaling, noisy neighbours) spreads
//! over all stream positions instead of lining up with the turn index.

use anyhow::Context;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tidemem_core::{Engine, EngineConfig, StreamEvent};

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub chunk_len: usize,
    /// Untimed events replayed after a restore before timing starts.
    pub lead_in: usize,
    pub rounds: usize,
    pub seed: u64,
    pub exclude_io: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            chunk_len: 1000,
            lead_in: 200,
            rounds: 3,
            seed: 1,
            exclude_io: true,
        }
    }
}

/// `(turn, median update ms)` for every utterance in `events`.
pub fn update_latencies(
    events: &[StreamEvent],
    config: &EngineConfig,
    opts: BenchOptions,
) -> anyhow::Result<Vec<(u64, f64)>> {
    anyhow::ensure!(opts.chunk_len > 0 && opts.rounds > 0, "empty benchmark");
    let starts: Vec<usize> = (0..events.len()).step_by(opts.chunk_len).collect();
    let lead_start = |c: usize| starts[c].saturating_sub(opts.lead_in);
    let mut snapshots = Vec::with_capacity(starts.len());
    let mut engine = Engine::new(config.clone())?;
    for (i, ev) in events.iter().enumerate() {
        while snapshots.len() < starts.len() && i == lead_start(snapshots.len()) {
            snapshots.push(engine.snapshot()?);
        }
        engine.on_event(ev)?;
    }

    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(opts.rounds); events.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..starts.len()).collect();
    for _ in 0..opts.rounds {
        order.shuffle(&mut rng);
        for &c in &order {
            let mut e = Engine::restore_default(&snapshots[c]).context("restoring checkpoint")?;
            for ev in &events[lead_start(c)..starts[c]] {
                e.on_event(ev)?;
            }
            let end = (starts[c] + opts.chunk_len).min(events.len());
            for (i, ev) in events[starts[c]..end].iter().enumerate() {
                let out = e.on_event(ev)?;
                let d = if opts.exclude_io {
                    out.engine_time()
                } else {
                    out.elapsed
                };
                samples[starts[c] + i].push(d.as_secs_f64() * 1e3);
            }
        }
    }

    Ok(events
        .iter()
        .zip(samples)
        .filter(|(ev, _)| matches!(ev, StreamEvent::Utterance(_)))
        .map(|(ev, mut s)| {
            s.sort_by(f64::total_cmp);
            (ev.turn(), s[s.len() / 2])
        })
        .collect())
}

/// Means of consecutive, equally sized batches; a trailing partial batch is
/// dropped. The x value of a batch is its middle turn.
pub fn batch_means(samples: &[(u64, f64)], size: usize) -> Vec<(u64, f64)> {
    samples
        .chunks(size.max(1))
        .filter(|c| c.len() == size.max(1))
        .map(|c| {
            (
                c[c.len() / 2].0,
                c.iter().map(|s| s.1).sum::<f64>() / c.len() as f64,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tidemem_core::Utterance;

    #[test]
    fn one_sample_per_utterance() {
        let events: Vec<StreamEvent> = (1..=25)
            .map(|t| StreamEvent::Utterance(Utterance::new(t, "A", format!("word{t} again"))))
            .collect();
        let cfg = EngineConfig {
            dimension: 64,
            ..EngineConfig::default()
        };
        let opts = BenchOptions {
            chunk_len: 7,
            rounds: 2,
            ..BenchOptions::default()
        };
        let lat = update_latencies(&events, &cfg, opts).unwrap();
        assert_eq!(lat.len(), 25);
        assert_eq!(lat[24].0, 25);
        assert!(lat.iter().all(|s| s.1 >= 0.0));
    }

    #[test]
    fn batch_means_drop_partial_tail() {
        let s: Vec<(u64, f64)> = (0..25).map(|i| (i, i as f64)).collect();
        let b = batch_means(&s, 10);
        assert_eq!(b, vec![(5, 4.5), (15, 14.5)]);
    }
}
