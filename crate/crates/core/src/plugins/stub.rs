//! Deterministic stand-ins for the model plugins.
//!
//! The rules here are fixed (rule set v1); tests freeze outputs derived
//! from them, so any change is a breaking change.

use crate::config::default_scene_keywords;
use crate::distillation::Triplet;
use crate::error::{Error, Result};
use crate::plugins::{Embedder, Generator, Transcriber, TripletExtractor};
use crate::prompts::{self, PromptKind};
use crate::types::{word_tokens, Embedding, Utterance};

/// Event summaries from the stub keep this many leading tokens.
pub const STUB_SUMMARY_TOKENS: usize = 8;
pub const FALLBACK_SCENE: &str = "General Chat";
pub const UNKNOWN_ANSWER: &str = "unknown";

/// Bag of hashed character trigrams, L2-normalized.
///
/// Text is trimmed and lowercased, split into alphanumeric words, and each
/// word padded with one space on both sides before taking trigrams.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dim: usize,
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashedTrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(Error::plugin("stub-embedder", "cannot embed empty text"));
        }
        let mut words = word_tokens(trimmed);
        if words.is_empty() {
            words.push(trimmed.to_lowercase());
        }
        let mut counts = vec![0.0f64; self.dim];
        let mut buf = [0u8; 16];
        for word in &words {
            let padded: Vec<char> = std::iter::once(' ')
                .chain(word.chars())
                .chain(std::iter::once(' '))
                .collect();
            for tri in padded.windows(3) {
                let mut len = 0;
                for c in tri {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                let bucket = (fnv1a(&buf[..len]) % self.dim as u64) as usize;
                counts[bucket] += 1.0;
            }
        }
        Embedding::normalized(counts)
    }
}

/// First [`STUB_SUMMARY_TOKENS`] whitespace tokens of `text`.
pub fn stub_event_summary(text: &str) -> String {
    text.split_whitespace()
        .take(STUB_SUMMARY_TOKENS)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Keyword-table scene lookup: the first rule whose keyword tokens occur
/// contiguously in the event's tokens wins; otherwise [`FALLBACK_SCENE`].
pub fn stub_scene(event: &str, table: &[(String, String)]) -> String {
    let tokens = word_tokens(event);
    table
        .iter()
        .find(|(kw, _)| {
            let kw = word_tokens(kw);
            !kw.is_empty() && tokens.windows(kw.len()).any(|w| w == kw.as_slice())
        })
        .map(|(_, scene)| scene.clone())
        .unwrap_or_else(|| FALLBACK_SCENE.to_string())
}

/// Routes by template header: event summary, scene classification or QA.
#[derive(Debug, Clone)]
pub struct StubGenerator {
    scene_keywords: Vec<(String, String)>,
}

impl Default for StubGenerator {
    fn default() -> Self {
        Self::new(default_scene_keywords())
    }
}

impl StubGenerator {
    pub fn new(scene_keywords: Vec<(String, String)>) -> Self {
        Self { scene_keywords }
    }

    pub fn scene_keywords(&self) -> &[(String, String)] {
        &self.scene_keywords
    }

    fn answer(prompt: &str) -> String {
        let top_amu = prompts::qa_section(prompt, "Long-term Memory").and_then(|s| {
            s.lines()
                .find_map(|l| l.strip_prefix("- "))
                .filter(|a| !a.trim().is_empty())
        });
        if let Some(amu) = top_amu {
            return amu.to_string();
        }
        let recent = prompts::qa_section(prompt, "Short-term Memory").and_then(|s| {
            s.lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .map(|l| l.split_once(": ").map_or(l, |(_, text)| text))
        });
        recent.unwrap_or(UNKNOWN_ANSWER).to_string()
    }
}

impl Generator for StubGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        match PromptKind::detect(prompt) {
            Some(PromptKind::EventSummary) => Ok(stub_event_summary(
                prompts::line_after(prompt, "Event phrase: ").unwrap_or_default(),
            )),
            Some(PromptKind::SceneClassification) => Ok(stub_scene(
                prompts::line_after(prompt, "Event: ").unwrap_or_default(),
                &self.scene_keywords,
            )),
            Some(PromptKind::Qa) => Ok(Self::answer(prompt)),
            Some(PromptKind::QaNoContext) => Ok(UNKNOWN_ANSWER.to_string()),
            None => Err(Error::plugin(
                "stub-generator",
                "prompt does not start with a known template header",
            )),
        }
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "but", "can", "did", "do", "does", "for", "go", "good",
    "he", "hello", "her", "hey", "hi", "his", "how", "i", "i'd", "i'll", "i'm", "i've", "if", "in",
    "is", "it", "it's", "its", "just", "let's", "my", "no", "nope", "not", "now", "oh", "ok",
    "okay", "on", "or", "our", "really", "she", "so", "sure", "thanks", "that", "the", "then",
    "there", "these", "they", "this", "those", "to", "um", "uh", "we", "well", "what", "when",
    "where", "which", "who", "why", "wow", "yeah", "yes", "you", "your",
];

fn is_stopword(word: &str) -> bool {
    let w = word.to_lowercase().replace('\u{2019}', "'");
    STOPWORDS.contains(&w.as_str())
}

/// Maximal runs of capitalized words in `text`. A run breaks after a word
/// carrying trailing punctuation. A sentence-initial stopword is dropped
/// from the front of its run, and a lone stopword is never a phrase.
pub fn capitalized_phrases(text: &str) -> Vec<String> {
    let mut phrases = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let mut run_sentence_initial = false;
    let mut sentence_start = true;

    let mut close = |run: &mut Vec<&str>, initial: bool| {
        if run.is_empty() {
            return;
        }
        let mut words: &[&str] = run;
        if initial && is_stopword(words[0]) {
            words = &words[1..];
        }
        let keep = match words.len() {
            0 => false,
            1 => !is_stopword(words[0]),
            _ => true,
        };
        if keep {
            phrases.push(words.join(" "));
        }
        run.clear();
    };

    for raw in text.split_whitespace() {
        let core = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let capitalized = core.chars().next().is_some_and(char::is_uppercase);
        if capitalized {
            if run.is_empty() {
                run_sentence_initial = sentence_start;
            }
            run.push(core);
        } else {
            close(&mut run, run_sentence_initial);
        }
        if raw.chars().last().is_some_and(|c| !c.is_alphanumeric()) {
            close(&mut run, run_sentence_initial);
        }
        sentence_start = raw.ends_with(['.', '!', '?']);
    }
    close(&mut run, run_sentence_initial);
    phrases
}

/// Emits `(speaker, "mentions", phrase)` for each capitalized phrase.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapitalizedPhraseExtractor;

impl TripletExtractor for CapitalizedPhraseExtractor {
    fn extract(&self, utterances: &[Utterance]) -> Result<Vec<Triplet>> {
        let mut out = Vec::new();
        for u in utterances {
            let speaker = u.speaker.trim();
            if speaker.is_empty() {
                continue;
            }
            for phrase in capitalized_phrases(&u.text) {
                out.push(Triplet {
                    subject: speaker.to_string(),
                    relation: "mentions".to_string(),
                    object: phrase,
                    source_turn: u.turn,
                });
            }
        }
        Ok(out)
    }
}

/// Text input is already a transcript.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassthroughTranscriber;

impl Transcriber for PassthroughTranscriber {
    fn transcribe(&self, input: &str) -> Result<String> {
        Ok(input.to_string())
    }
}
