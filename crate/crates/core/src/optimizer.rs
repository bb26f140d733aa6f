//! Utility scoring, admission of distilled blocks and budget restoration.
//!
//! Budget restoration loops until the hierarchy fits in `t_max`. Each
//! iteration runs the configured passes: least-regret pruning evicts the
//! leaf with the smallest utility per token, semantic merging collapses
//! near-duplicate sibling AMUs, and cascading removes Events and Scenes
//! left without children.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::{Pass, UtilityParams};
use crate::distillation::{nearest_amu, PendingNodes};
use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, Level, MemoryNode, NewNode, NodeId, Relation};
use crate::types::Embedding;

/// `alpha * ln(freq + 1) + beta * exp(-(now - last_touch) / tau)`.
pub fn utility(freq: u64, last_touch: u64, now: u64, p: &UtilityParams) -> f64 {
    debug_assert!(now >= last_touch, "utility evaluated before last touch");
    let dt = now.saturating_sub(last_touch) as f64;
    p.alpha * (freq as f64).ln_1p() + p.beta * (-dt / p.tau).exp()
}

pub fn node_utility(node: &MemoryNode, now: u64, p: &UtilityParams) -> f64 {
    utility(node.freq, node.last_touch, now, p)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmitReport {
    pub scene: Option<NodeId>,
    pub scene_created: bool,
    pub event: Option<NodeId>,
    pub mounted: Vec<NodeId>,
    /// Existing AMUs touched because a candidate duplicated them.
    pub touched: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub a: NodeId,
    pub b: NodeId,
    pub into: NodeId,
}

/// Utility and cost of one node at the moment it was recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: NodeId,
    pub level: Level,
    pub utility: f64,
    pub cost: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub pruned_ids: Vec<NodeId>,
    pub merged_pairs: Vec<MergeRecord>,
    pub cascaded_ids: Vec<NodeId>,
    pub utility_before: f64,
    pub utility_after: f64,
    pub cost_before: u64,
    pub cost_after: u64,
    pub budget: u64,
    /// Set when the budget could only be met by removing every node.
    pub emptied: bool,
    /// Every node before restoration; recorded only on request.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items_before: Vec<ItemRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items_after: Vec<ItemRecord>,
}

impl PruneReport {
    pub fn is_noop(&self) -> bool {
        self.pruned_ids.is_empty() && self.merged_pairs.is_empty() && self.cascaded_ids.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub turn: u64,
    pub admissions: Vec<AdmitReport>,
    pub prune: PruneReport,
}

/// Scene a new block should join: a case-insensitive label match wins,
/// then the most similar scene at or above `theta_concept`.
fn resolve_scene(h: &Hierarchy, label: &str, emb: &Embedding, theta: f64) -> Option<NodeId> {
    let wanted = label.trim().to_lowercase();
    let mut by_cos: Option<(NodeId, f64)> = None;
    let mut seen = 0;
    for scene in h.roots() {
        seen += 1;
        if scene.label.trim().to_lowercase() == wanted {
            h.note_visits(seen);
            return Some(scene.id);
        }
        let c = emb.cosine_unchecked(&scene.embedding);
        if c >= theta && by_cos.is_none_or(|(_, b)| c > b) {
            by_cos = Some((scene.id, c));
        }
    }
    h.note_visits(seen);
    by_cos.map(|(id, _)| id)
}

/// Mounts one distilled block: resolves or creates its Scene, adds the
/// Event, then mounts each novel AMU candidate. A candidate failing the
/// novelty check touches its nearest existing AMU instead.
pub fn admit(
    h: &mut Hierarchy,
    pending: &mut PendingNodes,
    now: u64,
    p: &UtilityParams,
) -> Result<AdmitReport> {
    if pending.admitted {
        return Err(Error::Precondition("pending block already admitted".into()));
    }
    let mut report = AdmitReport::default();
    let scene = match resolve_scene(
        h,
        &pending.scene_label,
        &pending.scene_embedding,
        p.theta_concept,
    ) {
        Some(id) => {
            h.touch(id, now)?;
            id
        }
        None => {
            report.scene_created = true;
            h.insert_node(
                NewNode::new(
                    Level::Scene,
                    pending.scene_label.trim(),
                    pending.scene_embedding.clone(),
                    now,
                ),
                None,
            )?
        }
    };
    let event = h.insert_node(
        NewNode::new(
            Level::Event,
            pending.event_label.trim(),
            pending.event_embedding.clone(),
            now,
        ),
        Some(scene),
    )?;
    report.scene = Some(scene);
    report.event = Some(event);

    let mut resolved: Vec<NodeId> = Vec::with_capacity(pending.amu_candidates.len());
    for cand in &pending.amu_candidates {
        match nearest_amu(&cand.embedding, h) {
            Some((id, c)) if c >= p.theta_concept => {
                h.touch(id, now)?;
                if !report.touched.contains(&id) && !report.mounted.contains(&id) {
                    report.touched.push(id);
                }
                resolved.push(id);
            }
            _ => {
                let id = h.insert_node(
                    NewNode::new(Level::Amu, cand.label.clone(), cand.embedding.clone(), now),
                    Some(event),
                )?;
                report.mounted.push(id);
                resolved.push(id);
            }
        }
    }
    for (i, cand) in pending.amu_candidates.iter().enumerate() {
        for rel in cand.relations.iter().filter(|r| r.outgoing) {
            let (s, o) = (resolved[i], resolved[rel.peer]);
            if s != o {
                h.link(s, &rel.relation, o)?;
            }
        }
    }
    pending.admitted = true;
    Ok(report)
}

fn items(h: &Hierarchy, now: u64, util: &dyn Fn(&MemoryNode, u64) -> f64) -> Vec<ItemRecord> {
    h.nodes()
        .map(|n| ItemRecord {
            id: n.id,
            level: n.level,
            utility: util(n, now),
            cost: n.cost,
        })
        .collect()
}

fn total_utility(h: &Hierarchy, now: u64, util: &dyn Fn(&MemoryNode, u64) -> f64) -> f64 {
    h.nodes().map(|n| util(n, now)).sum()
}

/// Restores `t_max` using frequency/recency utilities.
pub fn enforce_budget(
    h: &mut Hierarchy,
    now: u64,
    p: &UtilityParams,
    order: &[Pass],
    record_items: bool,
) -> Result<PruneReport> {
    let util = |n: &MemoryNode, t: u64| node_utility(n, t, p);
    enforce_budget_with(h, now, p, order, record_items, &util)
}

/// Restores the budget with a caller-supplied utility function.
pub fn enforce_budget_with(
    h: &mut Hierarchy,
    now: u64,
    p: &UtilityParams,
    order: &[Pass],
    record_items: bool,
    util: &dyn Fn(&MemoryNode, u64) -> f64,
) -> Result<PruneReport> {
    h.set_budget(p.t_max);
    let mut report = PruneReport {
        cost_before: h.total_cost(),
        cost_after: h.total_cost(),
        budget: p.t_max,
        ..PruneReport::default()
    };
    if !h.over_budget() {
        return Ok(report);
    }
    report.utility_before = total_utility(h, now, util);
    if record_items {
        report.items_before = items(h, now, util);
    }

    // Pruning never creates a mergeable pair, so one merge pass to a
    // fixpoint per call is enough.
    let mut merged_once = false;
    while h.over_budget() {
        for pass in order {
            match pass {
                Pass::Prune => {
                    if h.over_budget() {
                        if let Some(victim) = least_regret(h, now, util) {
                            report.pruned_ids.extend(h.remove_subtree(victim)?);
                        }
                    }
                }
                Pass::Merge => {
                    if !merged_once {
                        merged_once = true;
                        report.merged_pairs.extend(merge_siblings(h, now, p, util)?);
                    }
                }
                Pass::Cascade => report.cascaded_ids.extend(cascade(h)?),
            }
        }
    }

    report.emptied = h.is_empty() && report.cost_before > 0;
    if report.emptied {
        log::warn!(
            "budget {} could not hold any node; hierarchy emptied",
            p.t_max
        );
    }
    report.cost_after = h.total_cost();
    report.utility_after = total_utility(h, now, util);
    if record_items {
        report.items_after = items(h, now, util);
    }
    Ok(report)
}

/// Leaf with minimum utility density. Ties go to the larger cost, then to
/// the smaller id.
fn least_regret(h: &Hierarchy, now: u64, util: &dyn Fn(&MemoryNode, u64) -> f64) -> Option<NodeId> {
    let mut best: Option<(f64, u64, NodeId)> = None;
    let mut seen = 0;
    for n in h.nodes() {
        seen += 1;
        if !n.children.is_empty() {
            continue;
        }
        let density = util(n, now) / n.cost as f64;
        let better = match best {
            None => true,
            Some((d, c, id)) => match density.total_cmp(&d) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => n.cost > c || (n.cost == c && n.id < id),
            },
        };
        if better {
            best = Some((density, n.cost, n.id));
        }
    }
    h.note_visits(seen);
    best.map(|(_, _, id)| id)
}

/// Merges sibling AMUs at or above `theta_sim` until no such pair remains.
/// Within an event the most similar pair goes first (ties to smaller ids).
pub fn merge_siblings(
    h: &mut Hierarchy,
    now: u64,
    p: &UtilityParams,
    util: &dyn Fn(&MemoryNode, u64) -> f64,
) -> Result<Vec<MergeRecord>> {
    let events: Vec<NodeId> = h.level_iter(Level::Event).map(|n| n.id).collect();
    h.note_visits(events.len());
    let mut out = Vec::new();
    for ev in events {
        while let Some((a, b)) = closest_pair(h, ev, p.theta_sim)? {
            let into = merge_pair(h, a, b, now, util)?;
            out.push(MergeRecord { a, b, into });
        }
    }
    Ok(out)
}

fn closest_pair(h: &Hierarchy, event: NodeId, theta: f64) -> Result<Option<(NodeId, NodeId)>> {
    let kids: Vec<&MemoryNode> = h.children(event)?.collect();
    h.note_visits(kids.len());
    let mut best: Option<(f64, NodeId, NodeId)> = None;
    for (i, a) in kids.iter().enumerate() {
        for b in &kids[i + 1..] {
            let c = a.embedding.cosine_unchecked(&b.embedding);
            if c >= theta && best.is_none_or(|(bc, _, _)| c > bc) {
                best = Some((c, a.id, b.id));
            }
        }
    }
    Ok(best.map(|(_, a, b)| (a, b)))
}

fn merge_pair(
    h: &mut Hierarchy,
    a: NodeId,
    b: NodeId,
    now: u64,
    util: &dyn Fn(&MemoryNode, u64) -> f64,
) -> Result<NodeId> {
    let na = h.get(a)?;
    let nb = h.get(b)?;
    let label = if util(nb, now) > util(na, now) {
        nb.label.clone()
    } else {
        na.label.clone()
    };
    let embedding = Embedding::centroid([&na.embedding, &nb.embedding])
        .or_else(|_| Ok::<_, Error>(na.embedding.clone()))?;
    let mut relations: Vec<Relation> = na.relations.clone();
    relations.extend(nb.relations.iter().cloned());
    let merged = NewNode {
        level: Level::Amu,
        label,
        embedding,
        cost: na.cost.max(nb.cost),
        freq: na.freq + nb.freq,
        last_touch: na.last_touch.max(nb.last_touch),
        relations,
    };
    h.replace_pair(a, b, merged)
}

/// Removes Events without AMUs, then Scenes without Events.
pub fn cascade(h: &mut Hierarchy) -> Result<Vec<NodeId>> {
    let mut removed = Vec::new();
    for level in [Level::Event, Level::Scene] {
        let empty: Vec<NodeId> = h
            .level_iter(level)
            .filter(|n| n.children.is_empty())
            .map(|n| n.id)
            .collect();
        h.note_visits(h.len());
        for id in empty {
            removed.extend(h.remove_subtree(id)?);
        }
    }
    Ok(removed)
}

/// Admits every pending block in arrival order, then restores the budget.
pub fn step(
    h: &mut Hierarchy,
    pending: &mut VecDeque<PendingNodes>,
    now: u64,
    p: &UtilityParams,
    order: &[Pass],
    record_items: bool,
) -> Result<StepReport> {
    let mut report = StepReport {
        turn: now,
        ..StepReport::default()
    };
    while let Some(mut block) = pending.pop_front() {
        report.admissions.push(admit(h, &mut block, now, p)?);
    }
    report.prune = enforce_budget(h, now, p, order, record_items)?;
    Ok(report)
}

/// Per-level node counts, handy for reports.
pub fn level_counts(h: &Hierarchy) -> BTreeMap<Level, usize> {
    let mut out = BTreeMap::new();
    for n in h.nodes() {
        *out.entry(n.level).or_insert(0) += 1;
    }
    out
}
