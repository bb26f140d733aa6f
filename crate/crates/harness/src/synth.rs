//! Seeded synthetic streams with planted entities and probes about them.
//!
//! The stream walks through topic segments. Utterances are lowercase topic
//! chatter; some carry a capitalized two-word pseudo-name ("entity"). Each topic has
//! a few recurring entities that come back again and again, while other
//! mentions introduce a fresh entity that is never repeated. Probes ask
//! about an entity already mentioned and list every earlier mention as
//! evidence.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tidemem_core::{Probe, StreamEvent, Utterance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub turns: u64,
    pub topics: usize,
    /// Probability that a turn is a probe.
    pub probe_rate: f64,
    /// Probability that an utterance mentions an entity.
    pub mention_rate: f64,
    /// Share of mentions that go to a topic's recurring entities.
    pub recurring_share: f64,
    pub recurring_per_topic: usize,
    pub segment_len: (u64, u64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            turns: 1000,
            topics: 6,
            probe_rate: 0.02,
            mention_rate: 0.5,
            recurring_share: 0.5,
            recurring_per_topic: 3,
            segment_len: (15, 40),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEntity {
    pub name: String,
    pub topic: usize,
    pub recurring: bool,
    pub mention_turns: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub turn: u64,
    pub entity: String,
    /// Mentions of the entity before the probe.
    pub prior_mentions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStream {
    pub events: Vec<StreamEvent>,
    pub entities: Vec<PlantedEntity>,
    pub probes: Vec<ProbeMeta>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnpqrstvwxz";
const VOWELS: &[u8] = b"aeiouy";

const SPEAKERS: [&str; 6] = ["Penny", "Leonard", "Sheldon", "Howard", "Raj", "Bernadette"];

const TOPIC_WORDS: [&[&str]; 8] = [
    &[
        "tire", "highway", "engine", "garage", "brakes", "mechanic", "fuel", "traffic",
    ],
    &[
        "physics", "lecture", "equation", "homework", "exam", "thesis", "lab", "grant",
    ],
    &[
        "dinner", "recipe", "oven", "pasta", "kitchen", "spices", "dessert", "bakery",
    ],
    &[
        "concert", "guitar", "album", "singer", "drums", "playlist", "chorus", "tour",
    ],
    &[
        "comic",
        "store",
        "issue",
        "villain",
        "costume",
        "collection",
        "sketch",
        "hero",
    ],
    &[
        "hospital", "doctor", "shift", "patient", "nurse", "surgery", "clinic", "pharmacy",
    ],
    &[
        "apartment",
        "rent",
        "landlord",
        "elevator",
        "laundry",
        "roommate",
        "couch",
        "lease",
    ],
    &[
        "rocket",
        "satellite",
        "orbit",
        "launch",
        "telescope",
        "module",
        "payload",
        "station",
    ],
];

const FILLER: [&str; 10] = [
    "so", "the", "was", "really", "about", "again", "today", "with", "that", "still",
];

const FACTS: [&str; 6] = [
    "fixed",
    "mentioned",
    "brought",
    "called about",
    "complained about",
    "asked about",
];

struct Gen {
    rng: ChaCha8Rng,
    used_names: BTreeSet<String>,
}

impl Gen {
    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.rng.random_range(0..items.len())]
    }

    /// Alternating consonants and vowels, 5 to 8 letters, capitalized.
    fn word(&mut self) -> String {
        let n = self.rng.random_range(5..=8);
        let mut w = String::with_capacity(n);
        for i in 0..n {
            let set = if i % 2 == 0 { CONSONANTS } else { VOWELS };
            let c = char::from(*self.pick(set));
            w.push(if i == 0 { c.to_ascii_uppercase() } else { c });
        }
        w
    }

    fn fresh_name(&mut self) -> String {
        loop {
            let name = format!("{} {}", self.word(), self.word());
            if self.used_names.insert(name.clone()) {
                return name;
            }
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> SynthStream {
    assert!(cfg.turns >= 1, "a stream needs at least one turn");
    assert!(cfg.topics >= 1, "a stream needs at least one topic");
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        used_names: BTreeSet::new(),
    };

    let mut entities: Vec<PlantedEntity> = Vec::new();
    let mut recurring: Vec<Vec<usize>> = Vec::new();
    for topic in 0..cfg.topics {
        let mut ids = Vec::new();
        for _ in 0..cfg.recurring_per_topic {
            ids.push(entities.len());
            entities.push(PlantedEntity {
                name: g.fresh_name(),
                topic,
                recurring: true,
                mention_turns: Vec::new(),
            });
        }
        recurring.push(ids);
    }

    let mut events = Vec::new();
    let mut probes = Vec::new();
    let mut topic = 0usize;
    let mut segment_left = 0u64;
    for turn in 1..=cfg.turns {
        let mentioned: Vec<usize> = (0..entities.len())
            .filter(|&i| !entities[i].mention_turns.is_empty())
            .collect();
        if !mentioned.is_empty() && g.rng.random_bool(cfg.probe_rate) {
            let e = &entities[*g.pick(&mentioned)];
            let mut probe = Probe::new(turn, format!("who is {}?", e.name));
            probe.gold_answer = Some(e.name.clone());
            probe.keywords = vec![e.name.clone()];
            probe.evidence_turns = e.mention_turns.clone();
            probes.push(ProbeMeta {
                turn,
                entity: e.name.clone(),
                prior_mentions: e.mention_turns.len(),
            });
            events.push(StreamEvent::Probe(probe));
            continue;
        }

        if segment_left == 0 {
            topic = g.rng.random_range(0..cfg.topics);
            segment_left = g.rng.random_range(cfg.segment_len.0..=cfg.segment_len.1);
        }
        segment_left -= 1;

        let words = TOPIC_WORDS[topic % TOPIC_WORDS.len()];
        let mut text = format!(
            "{} {} {} {}",
            g.pick(words),
            g.pick(&FILLER),
            g.pick(words),
            g.pick(words)
        );
        if g.rng.random_bool(cfg.mention_rate) {
            let idx = if !recurring[topic].is_empty() && g.rng.random_bool(cfg.recurring_share) {
                *g.pick(&recurring[topic])
            } else {
                entities.push(PlantedEntity {
                    name: g.fresh_name(),
                    topic,
                    recurring: false,
                    mention_turns: Vec::new(),
                });
                entities.len() - 1
            };
            let fact = *g.pick(&FACTS);
            let object = *g.pick(words);
            text = format!("{text} and {} {fact} the {object}", entities[idx].name);
            entities[idx].mention_turns.push(turn);
        }
        let speaker = *g.pick(&SPEAKERS);
        events.push(StreamEvent::Utterance(Utterance::new(turn, speaker, text)));
    }

    SynthStream {
        events,
        entities,
        probes,
    }
}
