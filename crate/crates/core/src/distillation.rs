//! Turns a semantic block into pending hierarchy material: an event
//! summary, a scene category and AMU candidates built from relational
//! triplets. Nothing here touches the hierarchy; mounting is the
//! optimizer's job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, Level, NodeId};
use crate::perception::SemanticBlock;
use crate::plugins::stub::{stub_event_summary, stub_scene};
use crate::plugins::{Generator, Plugins, TripletExtractor};
use crate::prompts;
use crate::types::Embedding;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub source_turn: u64,
}

impl Triplet {
    fn is_valid(&self) -> bool {
        [&self.subject, &self.relation, &self.object]
            .iter()
            .all(|s| !s.trim().is_empty())
    }
}

/// Relation from one candidate to another candidate of the same block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRelation {
    pub relation: String,
    /// Index of the peer in [`PendingNodes::amu_candidates`].
    pub peer: usize,
    pub outgoing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmuCandidate {
    pub label: String,
    pub embedding: Embedding,
    pub relations: Vec<CandidateRelation>,
    pub source_turn: u64,
}

/// Distilled but not yet mounted block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingNodes {
    pub event_label: String,
    pub event_embedding: Embedding,
    pub scene_label: String,
    pub scene_embedding: Embedding,
    pub amu_candidates: Vec<AmuCandidate>,
    pub block_span: (u64, u64),
    pub admitted: bool,
}

impl PendingNodes {
    /// One-line rendering used in the pending section of the QA context.
    pub fn summary(&self) -> String {
        let mut amus: Vec<&str> = Vec::new();
        for c in &self.amu_candidates {
            if !amus.contains(&c.label.as_str()) {
                amus.push(&c.label);
            }
        }
        let mut line = format!(
            "{} > {}",
            prompts::single_line(&self.scene_label),
            prompts::single_line(&self.event_label)
        );
        if !amus.is_empty() {
            line.push_str(": ");
            line.push_str(&prompts::single_line(&amus.join(", ")));
        }
        line
    }
}

pub fn summarize_event(block: &SemanticBlock, generator: &dyn Generator) -> Result<String> {
    if block.utterances.is_empty() {
        return Err(Error::Precondition(
            "cannot summarize an empty block".into(),
        ));
    }
    let text = block.text();
    let prompt = prompts::event_prompt(&block.speakers(), &text);
    let out = generator.generate(&prompt)?;
    let out = out.trim();
    if out.is_empty() {
        log::warn!(
            "empty event summary for block {:?}; using the stub rule",
            block.span
        );
        return Ok(stub_event_summary(&prompts::single_line(&text)));
    }
    Ok(out.to_string())
}

pub fn classify_scene(
    event_label: &str,
    generator: &dyn Generator,
    keyword_table: &[(String, String)],
) -> Result<String> {
    if event_label.trim().is_empty() {
        return Err(Error::Precondition("event label is empty".into()));
    }
    let out = generator.generate(&prompts::scene_prompt(event_label))?;
    let out = out.trim();
    if out.is_empty() {
        log::warn!("empty scene label for `{event_label}`; using the stub rule");
        return Ok(stub_scene(event_label, keyword_table));
    }
    Ok(out.to_string())
}

/// Extracts triplets, dropping any with an empty component.
pub fn extract_triplets(
    block: &SemanticBlock,
    extractor: &dyn TripletExtractor,
) -> Result<Vec<Triplet>> {
    if block.utterances.is_empty() {
        return Err(Error::Precondition(
            "cannot extract from an empty block".into(),
        ));
    }
    let mut triplets = extractor.extract(&block.utterances)?;
    let before = triplets.len();
    triplets.retain(Triplet::is_valid);
    if triplets.len() != before {
        log::warn!("dropped {} malformed triplet(s)", before - triplets.len());
    }
    Ok(triplets)
}

/// Closest existing AMU by cosine, ties to the smaller id.
pub fn nearest_amu(candidate: &Embedding, h: &Hierarchy) -> Option<(NodeId, f64)> {
    let mut best: Option<(NodeId, f64)> = None;
    let mut seen = 0;
    for node in h.level_iter(Level::Amu) {
        seen += 1;
        let c = candidate.cosine_unchecked(&node.embedding);
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((node.id, c));
        }
    }
    h.note_visits(seen);
    best
}

/// True iff every existing AMU has cosine strictly below `theta_concept`.
pub fn novelty_check(candidate: &Embedding, h: &Hierarchy, theta_concept: f64) -> bool {
    nearest_amu(candidate, h).is_none_or(|(_, c)| c < theta_concept)
}

/// Runs summarization, classification and extraction over one block.
pub fn distill(
    block: &SemanticBlock,
    plugins: &Plugins,
    keyword_table: &[(String, String)],
) -> Result<PendingNodes> {
    let event_label = summarize_event(block, plugins.generator.as_ref())?;
    let scene_label = classify_scene(&event_label, plugins.generator.as_ref(), keyword_table)?;
    let triplets = extract_triplets(block, plugins.extractor.as_ref())?;

    let mut texts = vec![event_label.clone(), scene_label.clone()];
    for t in &triplets {
        texts.push(t.subject.trim().to_string());
        texts.push(t.object.trim().to_string());
    }
    let mut embeddings = plugins.embedder.embed_batch(&texts)?.into_iter();
    let event_embedding = embeddings.next().expect("event embedding");
    let scene_embedding = embeddings.next().expect("scene embedding");

    let mut amu_candidates = Vec::with_capacity(triplets.len() * 2);
    for t in &triplets {
        let s = amu_candidates.len();
        let o = s + 1;
        amu_candidates.push(AmuCandidate {
            label: t.subject.trim().to_string(),
            embedding: embeddings.next().expect("subject embedding"),
            relations: vec![CandidateRelation {
                relation: t.relation.clone(),
                peer: o,
                outgoing: true,
            }],
            source_turn: t.source_turn,
        });
        amu_candidates.push(AmuCandidate {
            label: t.object.trim().to_string(),
            embedding: embeddings.next().expect("object embedding"),
            relations: vec![CandidateRelation {
                relation: t.relation.clone(),
                peer: s,
                outgoing: false,
            }],
            source_turn: t.source_turn,
        });
    }

    Ok(PendingNodes {
        event_label,
        event_embedding,
        scene_label,
        scene_embedding,
        amu_candidates,
        block_span: block.span,
        admitted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BufferConfig;
    use crate::hierarchy::NewNode;
    use crate::perception::SensingBuffer;
    use crate::plugins::{Embedder, FnGenerator, HashedTrigramEmbedder, StubGenerator};
    use crate::types::Utterance;
    use proptest::prelude::*;

    fn block(utts: &[(&str, &str)]) -> SemanticBlock {
        let e = HashedTrigramEmbedder::new(64);
        let mut b = SensingBuffer::new(&BufferConfig {
            capacity: 100,
            leading_window_tokens: 0,
        });
        for (i, (s, t)) in utts.iter().enumerate() {
            b.ingest(Utterance::new(i as u64 + 1, *s, *t), &e, -1.0)
                .unwrap();
        }
        b.force_flush().unwrap().unwrap()
    }

    #[test]
    fn stub_event_summary_takes_eight_tokens() {
        let b = block(&[("Penny", "my tire blew out"), ("Leonard", "are you ok")]);
        let g = StubGenerator::default();
        assert_eq!(
            summarize_event(&b, &g).unwrap(),
            "Penny: my tire blew out Leonard: are you"
        );
    }

    #[test]
    fn short_block_summary_is_the_utterance() {
        let b = block(&[("Amy", "hello there")]);
        assert_eq!(
            summarize_event(&b, &StubGenerator::default()).unwrap(),
            "Amy: hello there"
        );
    }

    #[test]
    fn empty_generator_output_falls_back() {
        let b = block(&[("Penny", "my tire blew out"), ("Leonard", "are you ok")]);
        let g = FnGenerator::new(|_| Ok("  ".into()));
        assert_eq!(
            summarize_event(&b, &g).unwrap(),
            "Penny: my tire blew out Leonard: are you"
        );
        let table = vec![("tire".to_string(), "Travel".to_string())];
        assert_eq!(
            classify_scene("a tire story", &g, &table).unwrap(),
            "Travel"
        );
    }

    #[test]
    fn scene_classification_examples() {
        let g = StubGenerator::new(vec![("physics".into(), "Learning Session".into())]);
        assert_eq!(
            classify_scene("discussing the physics homework", &g, &[]).unwrap(),
            "Learning Session"
        );
        assert_eq!(
            classify_scene("walking the dog", &g, &[]).unwrap(),
            "General Chat"
        );
        assert!(matches!(
            classify_scene("  ", &g, &[]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn novelty_examples() {
        let e = HashedTrigramEmbedder::new(64);
        let mut h = Hierarchy::new(100);
        let v = e.embed("Amy Farrah Fowler").unwrap();
        assert!(novelty_check(&v, &h, 0.85));

        let s = h
            .insert_node(NewNode::new(Level::Scene, "s", v.clone(), 0), None)
            .unwrap();
        let ev = h
            .insert_node(NewNode::new(Level::Event, "e", v.clone(), 0), Some(s))
            .unwrap();
        h.insert_node(NewNode::new(Level::Amu, "a", v.clone(), 0), Some(ev))
            .unwrap();
        assert!(!novelty_check(&v, &h, 0.85));
        // Equality with the threshold is not novel.
        assert!(!novelty_check(&v, &h, 1.0));
    }

    #[test]
    fn distill_builds_subject_and_object_candidates() {
        let b = block(&[("Sheldon", "I met Amy Farrah Fowler")]);
        let plugins = Plugins::stub(64);
        let p = distill(&b, &plugins, &[]).unwrap();
        assert_eq!(p.amu_candidates.len(), 2);
        assert_eq!(p.amu_candidates[0].label, "Sheldon");
        assert_eq!(p.amu_candidates[1].label, "Amy Farrah Fowler");
        assert_eq!(p.amu_candidates[0].relations[0].relation, "mentions");
        assert_eq!(p.amu_candidates[0].relations[0].peer, 1);
        assert_eq!(p.amu_candidates[1].relations[0].peer, 0);
        assert!(!p.admitted);
        assert_eq!(p.block_span, (1, 1));
    }

    #[test]
    fn distill_without_triplets() {
        let b = block(&[("ross", "nothing much happened")]);
        let p = distill(&b, &Plugins::stub(64), &[]).unwrap();
        assert!(p.amu_candidates.is_empty());
        assert!(!p.event_label.is_empty());
        assert_eq!(p.scene_label, "General Chat");
    }

    #[test]
    fn distill_is_deterministic() {
        let b = block(&[
            ("Sheldon", "I met Amy Farrah Fowler"),
            ("Penny", "at the Cheesecake Factory"),
        ]);
        let a = serde_json::to_string(&distill(&b, &Plugins::stub(64), &[]).unwrap()).unwrap();
        let c = serde_json::to_string(&distill(&b, &Plugins::stub(64), &[]).unwrap()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn generator_error_propagates() {
        let b = block(&[("A", "hi")]);
        let mut plugins = Plugins::stub(64);
        plugins.generator = Box::new(FnGenerator::new(|_| Err(Error::plugin("gen", "down"))));
        assert!(matches!(
            distill(&b, &plugins, &[]),
            Err(Error::Plugin { .. })
        ));
    }

    proptest! {
        #[test]
        fn novelty_rejection_is_monotone(
            cand in proptest::collection::vec(-1.0f64..1.0, 4),
            base in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 0..6),
            extra in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 0..6),
        ) {
            let norm = |v: Vec<f64>| Embedding::normalized(v).ok();
            let Some(cand) = norm(cand) else { return Ok(()); };
            let root = Embedding::normalized(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
            let mut h = Hierarchy::new(1000);
            let s = h.insert_node(NewNode::new(Level::Scene, "s", root.clone(), 0), None).unwrap();
            let ev = h.insert_node(NewNode::new(Level::Event, "e", root, 0), Some(s)).unwrap();
            for v in base.into_iter().filter_map(norm) {
                h.insert_node(NewNode::new(Level::Amu, "a", v, 0), Some(ev)).unwrap();
            }
            let rejected = !novelty_check(&cand, &h, 0.85);
            for v in extra.into_iter().filter_map(norm) {
                h.insert_node(NewNode::new(Level::Amu, "a", v, 0), Some(ev)).unwrap();
            }
            if rejected {
                prop_assert!(!novelty_check(&cand, &h, 0.85));
            }
        }
    }
}
