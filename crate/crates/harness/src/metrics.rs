//! Per-probe and per-turn rows plus the aggregates computed from them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use tidemem_core::types::contains_token_sequence;
use tidemem_core::Stats;

/// All keywords occur in `answer` as whole-token sequences, ignoring case.
/// `None` when the probe carries no keywords.
pub fn kem(answer: &str, keywords: &[String]) -> Option<bool> {
    if keywords.is_empty() {
        return None;
    }
    Some(keywords.iter().all(|k| contains_token_sequence(answer, k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub turn: u64,
    pub question: String,
    pub answer: String,
    pub kem: Option<bool>,
    /// Some evidence utterance appears verbatim (token-wise) in the context.
    pub evidence_in_context: Option<bool>,
    /// Every keyword appears in the context.
    pub keywords_in_context: Option<bool>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Utterance,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRow {
    pub turn: u64,
    pub kind: EventKind,
    pub update_ms: f64,
    pub work: u64,
    pub total_cost: u64,
    pub nodes: usize,
    pub flushed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: percentile(&s, 50.0),
            p95: percentile(&s, 95.0),
            p99: percentile(&s, 99.0),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileStats {
    pub index: usize,
    pub first_turn: u64,
    pub last_turn: u64,
    pub latency: LatencyStats,
}

/// Splits `(turn, value)` samples into ten contiguous chunks by position.
pub fn deciles(samples: &[(u64, f64)]) -> Vec<DecileStats> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    (0..10)
        .filter_map(|i| {
            let (lo, hi) = (i * n / 10, (i + 1) * n / 10);
            if lo == hi {
                return None;
            }
            let chunk = &samples[lo..hi];
            let values: Vec<f64> = chunk.iter().map(|s| s.1).collect();
            Some(DecileStats {
                index: i,
                first_turn: chunk[0].0,
                last_turn: chunk[chunk.len() - 1].0,
                latency: LatencyStats::from_samples(&values),
            })
        })
        .collect()
}

/// Ordinary least-squares fit of value against turn, with a one-sided
/// t-test of `slope > 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlopeTest {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub std_err: f64,
    pub t: f64,
    /// P(T >= t) under the null of zero slope.
    pub p_value: f64,
}

impl SlopeTest {
    pub fn fit(samples: &[(u64, f64)]) -> Self {
        let n = samples.len();
        if n < 3 {
            return Self {
                n,
                p_value: 1.0,
                ..Self::default()
            };
        }
        let nf = n as f64;
        let mx = samples.iter().map(|s| s.0 as f64).sum::<f64>() / nf;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / nf;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for &(x, y) in samples {
            let dx = x as f64 - mx;
            sxx += dx * dx;
            sxy += dx * (y - my);
        }
        if sxx == 0.0 {
            return Self {
                n,
                intercept: my,
                p_value: 1.0,
                ..Self::default()
            };
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = samples
            .iter()
            .map(|&(x, y)| {
                let r = y - (intercept + slope * x as f64);
                r * r
            })
            .sum();
        let std_err = (sse / (nf - 2.0) / sxx).sqrt();
        let (t, p_value) = if std_err == 0.0 {
            let t = if slope > 0.0 { f64::INFINITY } else { 0.0 };
            (t, if slope > 0.0 { 0.0 } else { 1.0 })
        } else {
            let t = slope / std_err;
            let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("n >= 3");
            (t, 1.0 - dist.cdf(t))
        };
        Self {
            n,
            slope,
            intercept,
            std_err,
            t,
            p_value,
        }
    }

    pub fn significantly_positive(&self, alpha: f64) -> bool {
        self.slope > 0.0 && self.p_value < alpha
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub turns: usize,
    pub probes: usize,
    pub kem_rate: Option<f64>,
    pub evidence_recall: Option<f64>,
    pub keyword_recall: Option<f64>,
    pub probe_latency: LatencyStats,
    pub update_latency: LatencyStats,
    pub update_deciles: Vec<DecileStats>,
    pub update_slope: SlopeTest,
    pub budget_violations: usize,
    pub max_total_cost: u64,
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for f in flags.flatten() {
        n += 1;
        hits += usize::from(f);
    }
    (n > 0).then(|| hits as f64 / n as f64)
}

impl Aggregates {
    pub fn from_rows(probes: &[ProbeRow], turns: &[TurnRow], budget: u64) -> Self {
        let updates: Vec<(u64, f64)> = turns
            .iter()
            .filter(|t| t.kind == EventKind::Utterance)
            .map(|t| (t.turn, t.update_ms))
            .collect();
        let update_values: Vec<f64> = updates.iter().map(|u| u.1).collect();
        let probe_values: Vec<f64> = probes.iter().map(|p| p.latency_ms).collect();
        Self {
            turns: turns.len(),
            probes: probes.len(),
            kem_rate: rate(probes.iter().map(|p| p.kem)),
            evidence_recall: rate(probes.iter().map(|p| p.evidence_in_context)),
            keyword_recall: rate(probes.iter().map(|p| p.keywords_in_context)),
            probe_latency: LatencyStats::from_samples(&probe_values),
            update_latency: LatencyStats::from_samples(&update_values),
            update_deciles: deciles(&updates),
            update_slope: SlopeTest::fit(&updates),
            budget_violations: turns.iter().filter(|t| t.total_cost > budget).count(),
            max_total_cost: turns.iter().map(|t| t.total_cost).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub budget: u64,
    pub aggregates: Aggregates,
    pub engine_stats: Stats,
    pub probes: Vec<ProbeRow>,
}

impl MetricsReport {
    /// Copy with every wall-clock field zeroed, for byte comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for p in &mut r.probes {
            p.latency_ms = 0.0;
        }
        r.aggregates.probe_latency = LatencyStats::default();
        r.aggregates.update_latency = LatencyStats::default();
        r.aggregates.update_deciles.clear();
        r.aggregates.update_slope = SlopeTest::default();
        r
    }
}
