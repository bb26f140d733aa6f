//! Stream-facing domain types: utterances, probes and embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One speaker turn from the input stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub turn: u64,
    pub speaker: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl Utterance {
    pub fn new(turn: u64, speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            turn,
            speaker: speaker.into(),
            text: text.into(),
            wall_time: None,
        }
    }

    /// The speaker-tagged unit that gets embedded and distilled.
    pub fn composite(&self) -> String {
        format!("{}: {}", self.speaker, self.text)
    }
}

/// An ad-hoc question injected into the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub turn: u64,
    pub question: String,
    #[serde(default, rename = "answer", skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub evidence_turns: Vec<u64>,
}

impl Probe {
    pub fn new(turn: u64, question: impl Into<String>) -> Self {
        Self {
            turn,
            question: question.into(),
            gold_answer: None,
            keywords: Vec::new(),
            evidence_turns: Vec::new(),
        }
    }

    /// Every evidence turn must strictly precede the probe.
    pub fn check_no_look_ahead(&self) -> Result<()> {
        match self.evidence_turns.iter().find(|&&t| t >= self.turn) {
            Some(t) => Err(Error::Precondition(format!(
                "probe at turn {} cites evidence turn {t} which is not in the past",
                self.turn
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StreamEvent {
    Utterance(Utterance),
    Probe(Probe),
}

impl StreamEvent {
    pub fn turn(&self) -> u64 {
        match self {
            StreamEvent::Utterance(u) => u.turn,
            StreamEvent::Probe(p) => p.turn,
        }
    }
}

/// Dense vector representation of a text unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    unit: bool,
}

impl Embedding {
    /// Wraps raw values without normalizing them.
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            unit: false,
        }
    }

    /// L2-normalizes `values`. Fails on a zero or non-finite vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Precondition(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self { values, unit: true })
    }

    /// Keeps `values` as-is when already unit-norm (within 1e-9), otherwise
    /// normalizes.
    pub fn unit_or_normalized(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() <= 1e-9 {
            Ok(Self { values, unit: true })
        } else {
            Self::normalized(values)
        }
    }

    /// Renormalized mean of several embeddings of equal dimension.
    pub fn centroid<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Result<Self> {
        let mut acc: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for e in items {
            if acc.is_empty() {
                acc = vec![0.0; e.dim()];
            } else if acc.len() != e.dim() {
                return Err(Error::Config(format!(
                    "dimension mismatch: {} vs {}",
                    acc.len(),
                    e.dim()
                )));
            }
            acc.iter_mut().zip(&e.values).for_each(|(a, v)| *a += v);
            n += 1;
        }
        if n == 0 {
            return Err(Error::Precondition("centroid of no embeddings".into()));
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Self::normalized(acc)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity. A zero vector has similarity 0 with everything.
    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Config(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.cosine_unchecked(other))
    }

    pub(crate) fn cosine_unchecked(&self, other: &Embedding) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        let denom = if self.unit && other.unit {
            1.0
        } else {
            self.norm() * other.norm()
        };
        if denom == 0.0 {
            0.0
        } else {
            (dot / denom).clamp(-1.0, 1.0)
        }
    }
}

/// Lowercased alphanumeric word tokens; used for keyword matching.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// True when the word tokens of `needle` occur contiguously in `haystack`
/// (case-insensitive, punctuation-insensitive).
pub fn contains_token_sequence(haystack: &str, needle: &str) -> bool {
    let needle = word_tokens(needle);
    if needle.is_empty() {
        return false;
    }
    let hay = word_tokens(haystack);
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}
