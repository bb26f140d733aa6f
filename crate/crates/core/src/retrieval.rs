//! Top-down retrieval over the hierarchy and context assembly for probes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::{RetrievalParams, UtilityParams};
use crate::distillation::PendingNodes;
use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, Level, MemoryNode, NodeId};
use crate::optimizer::node_utility;
use crate::perception::BufferEntry;
use crate::plugins::Generator;
use crate::prompts;
use crate::types::{Embedding, Probe};

/// Composite relevance of an AMU: cosine times utility.
pub fn score(cosine: f64, utility: f64) -> f64 {
    cosine * utility
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePath {
    pub scene_id: NodeId,
    pub scene_label: String,
    pub event_id: NodeId,
    pub event_label: String,
    pub amu_id: NodeId,
    pub amu_label: String,
    /// `relation peer` strings, outgoing relations first.
    pub relations: Vec<String>,
    pub cosine: f64,
    pub utility: f64,
    pub score: f64,
}

fn ranked<'a>(
    nodes: impl Iterator<Item = &'a MemoryNode>,
    query: &Embedding,
    k: usize,
    h: &Hierarchy,
) -> Vec<&'a MemoryNode> {
    let mut scored: Vec<(f64, &MemoryNode)> = nodes
        .map(|n| (query.cosine_unchecked(&n.embedding), n))
        .collect();
    h.note_visits(scored.len());
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    scored.truncate(k);
    scored.into_iter().map(|(_, n)| n).collect()
}

fn relation_strings(node: &MemoryNode) -> Vec<String> {
    let mut out: Vec<String> = node
        .relations
        .iter()
        .filter(|r| r.outgoing)
        .map(|r| format!("{} {}", r.relation, r.peer_label))
        .collect();
    out.extend(
        node.relations
            .iter()
            .filter(|r| !r.outgoing)
            .map(|r| format!("{} by {}", r.relation, r.peer_label)),
    );
    out
}

/// Ranks scenes and then events by cosine, filters their AMUs by
/// `min_sim` and returns the best paths by score. Does not touch anything.
pub fn search_readonly(
    h: &Hierarchy,
    query: &Embedding,
    now: u64,
    p: &UtilityParams,
    rp: &RetrievalParams,
) -> Result<Vec<EvidencePath>> {
    if let Some(n) = h.nodes().next() {
        if n.embedding.dim() != query.dim() {
            return Err(Error::Config(format!(
                "query dimension {} does not match hierarchy dimension {}",
                query.dim(),
                n.embedding.dim()
            )));
        }
    }
    let mut paths = Vec::new();
    for scene in ranked(h.roots(), query, rp.k_scene, h) {
        for event in ranked(h.children(scene.id)?, query, rp.k_event, h) {
            let mut local = Vec::new();
            for amu in h.children(event.id)? {
                h.note_visits(1);
                let cosine = query.cosine_unchecked(&amu.embedding);
                if cosine < rp.min_sim {
                    continue;
                }
                let utility = node_utility(amu, now, p);
                local.push(EvidencePath {
                    scene_id: scene.id,
                    scene_label: scene.label.clone(),
                    event_id: event.id,
                    event_label: event.label.clone(),
                    amu_id: amu.id,
                    amu_label: amu.label.clone(),
                    relations: relation_strings(amu),
                    cosine,
                    utility,
                    score: score(cosine, utility),
                });
            }
            if rp.per_event_top_k {
                sort_paths(&mut local);
                local.truncate(rp.k_amu);
            }
            paths.extend(local);
        }
    }
    sort_paths(&mut paths);
    if !rp.per_event_top_k {
        paths.truncate(rp.k_amu);
    }
    Ok(paths)
}

fn sort_paths(paths: &mut [EvidencePath]) {
    paths.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.cosine.total_cmp(&a.cosine))
            .then(a.amu_id.cmp(&b.amu_id))
    });
}

/// Touches every distinct node on the given paths.
pub fn touch_paths(h: &mut Hierarchy, paths: &[EvidencePath], now: u64) -> Result<()> {
    let mut ids = BTreeSet::new();
    for path in paths {
        ids.extend([path.scene_id, path.event_id, path.amu_id]);
    }
    for id in ids {
        h.touch(id, now)?;
    }
    Ok(())
}

/// [`search_readonly`] followed by [`touch_paths`].
pub fn search(
    h: &mut Hierarchy,
    query: &Embedding,
    now: u64,
    p: &UtilityParams,
    rp: &RetrievalParams,
) -> Result<Vec<EvidencePath>> {
    let paths = search_readonly(h, query, now, p, rp)?;
    touch_paths(h, &paths, now)?;
    Ok(paths)
}

/// Validates that every path still names a live scene > event > AMU chain.
pub fn check_paths(h: &Hierarchy, paths: &[EvidencePath]) -> Result<()> {
    for path in paths {
        let amu = h.get(path.amu_id)?;
        let event = h.get(path.event_id)?;
        let ok = amu.level == Level::Amu
            && amu.parent == Some(path.event_id)
            && event.parent == Some(path.scene_id);
        if !ok {
            return Err(Error::Structural(format!(
                "path to {} is not a valid chain",
                path.amu_id
            )));
        }
    }
    Ok(())
}

/// The unified context handed to the answer generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub short_term: Vec<String>,
    pub pending: Vec<String>,
    pub long_term: Vec<EvidencePath>,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.short_term.is_empty() && self.pending.is_empty() && self.long_term.is_empty()
    }

    pub fn short_term_section(&self) -> String {
        self.short_term
            .iter()
            .map(|l| format!("\n{}", prompts::single_line(l)))
            .collect()
    }

    pub fn pending_section(&self) -> String {
        self.pending
            .iter()
            .map(|l| format!("\n- {}", prompts::single_line(l)))
            .collect()
    }

    /// `**scene > event**` headers in order of their best path, each
    /// followed by its AMU bullets in score order.
    pub fn long_term_section(&self) -> String {
        let mut groups: Vec<(NodeId, Vec<&EvidencePath>)> = Vec::new();
        for path in &self.long_term {
            match groups.iter_mut().find(|(ev, _)| *ev == path.event_id) {
                Some((_, members)) => members.push(path),
                None => groups.push((path.event_id, vec![path])),
            }
        }
        let mut out = String::new();
        for (_, members) in groups {
            let head = members[0];
            out.push_str(&format!(
                "\n**{} > {}**",
                prompts::single_line(&head.scene_label),
                prompts::single_line(&head.event_label)
            ));
            for m in members {
                out.push_str(&format!("\n- {}", prompts::single_line(&m.amu_label)));
                if !m.relations.is_empty() {
                    out.push_str(&format!(
                        "\n  relations: {}",
                        prompts::single_line(&m.relations.join("; "))
                    ));
                }
            }
        }
        out
    }

    /// Full QA prompt for `question`.
    pub fn prompt(&self, question: &str) -> String {
        prompts::qa_prompt(
            question,
            &self.short_term_section(),
            &self.pending_section(),
            &self.long_term_section(),
        )
    }

    /// All three sections as one text, used for evidence checks.
    pub fn text(&self) -> String {
        format!(
            "{}\n{}\n{}",
            self.short_term_section(),
            self.pending_section(),
            self.long_term_section()
        )
    }
}

pub fn assemble_context<'a>(
    buffer: impl IntoIterator<Item = &'a BufferEntry>,
    pending: impl IntoIterator<Item = &'a PendingNodes>,
    paths: Vec<EvidencePath>,
) -> ContextBundle {
    ContextBundle {
        short_term: buffer
            .into_iter()
            .map(|e| e.utterance.composite())
            .collect(),
        pending: pending.into_iter().map(PendingNodes::summary).collect(),
        long_term: paths,
    }
}

pub fn answer(probe: &Probe, bundle: &ContextBundle, generator: &dyn Generator) -> Result<String> {
    if probe.question.trim().is_empty() {
        return Err(Error::Precondition("probe question is empty".into()));
    }
    let out = generator.generate(&bundle.prompt(&probe.question))?;
    Ok(out.trim().to_string())
}
