//! The Scene > Event > AMU forest and its token-budget accounting.
//!
//! Every node carries a token cost, and the hierarchy caches the sum of all
//! member costs so the optimizer can test the budget in O(1). Ids are
//! handed out monotonically and never reused.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Embedding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Amu,
    Event,
    Scene,
}

impl Level {
    /// Scene = 3, Event = 2, AMU = 1.
    pub fn rank(self) -> u8 {
        match self {
            Level::Amu => 1,
            Level::Event => 2,
            Level::Scene => 3,
        }
    }

    pub fn parent_level(self) -> Option<Level> {
        match self {
            Level::Amu => Some(Level::Event),
            Level::Event => Some(Level::Scene),
            Level::Scene => None,
        }
    }
}

/// A relation carried by an AMU, pointing at the peer entity of the triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub relation: String,
    pub peer: NodeId,
    pub peer_label: String,
    /// True on the subject side of a subject -> object triplet.
    pub outgoing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryNode {
    pub id: NodeId,
    pub level: Level,
    pub label: String,
    pub embedding: Embedding,
    pub cost: u64,
    pub freq: u64,
    pub last_touch: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<Relation>,
    pub parent: Option<NodeId>,
    #[serde(default)]
    pub children: BTreeSet<NodeId>,
}

/// Everything needed to create a node; the hierarchy assigns id and links.
#[derive(Debug, Clone)]
pub struct NewNode {
    pub level: Level,
    pub label: String,
    pub embedding: Embedding,
    pub cost: u64,
    pub freq: u64,
    pub last_touch: u64,
    pub relations: Vec<Relation>,
}

impl NewNode {
    /// Fresh node costed by its label: zero accesses, last touched `now`.
    pub fn new(level: Level, label: impl Into<String>, embedding: Embedding, now: u64) -> Self {
        let label = label.into();
        Self {
            level,
            cost: token_cost(&label),
            label,
            embedding,
            freq: 0,
            last_touch: now,
            relations: Vec::new(),
        }
    }

    pub fn with_cost(mut self, cost: u64) -> Self {
        self.cost = cost;
        self
    }
}

/// Whitespace-delimited token count, floored at 1.
pub fn token_cost(text: &str) -> u64 {
    (text.split_whitespace().count() as u64).max(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hierarchy {
    nodes: BTreeMap<NodeId, MemoryNode>,
    roots: BTreeSet<NodeId>,
    budget: u64,
    total_cost: u64,
    next_id: u64,
    /// Number of node examinations performed by scans (instrumentation).
    #[serde(skip)]
    visits: Cell<u64>,
}

impl Hierarchy {
    pub fn new(budget: u64) -> Self {
        Self {
            nodes: BTreeMap::new(),
            roots: BTreeSet::new(),
            budget,
            total_cost: 0,
            next_id: 1,
            visits: Cell::new(0),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    pub fn total_cost(&self) -> u64 {
        self.total_cost
    }

    pub fn over_budget(&self) -> bool {
        self.total_cost > self.budget
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Result<&MemoryNode> {
        self.nodes.get(&id).ok_or(Error::NotFound(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn roots(&self) -> impl Iterator<Item = &MemoryNode> + '_ {
        self.roots.iter().map(move |id| &self.nodes[id])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &MemoryNode> + '_ {
        self.nodes.values()
    }

    pub fn level_iter(&self, level: Level) -> impl Iterator<Item = &MemoryNode> + '_ {
        self.nodes.values().filter(move |n| n.level == level)
    }

    pub fn children(&self, id: NodeId) -> Result<impl Iterator<Item = &MemoryNode> + '_> {
        let node = self.get(id)?;
        Ok(node.children.iter().map(move |c| &self.nodes[c]))
    }

    /// Id the next insertion will receive.
    pub fn peek_next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn visits(&self) -> u64 {
        self.visits.get()
    }

    pub(crate) fn note_visits(&self, n: usize) {
        self.visits.set(self.visits.get() + n as u64);
    }

    pub fn insert_node(&mut self, node: NewNode, parent: Option<NodeId>) -> Result<NodeId> {
        if node.cost < 1 {
            return Err(Error::Precondition("node cost must be at least 1".into()));
        }
        match (node.level.parent_level(), parent) {
            (None, Some(p)) => {
                return Err(Error::Structural(format!(
                    "scene cannot have a parent (got {p})"
                )))
            }
            (Some(expected), None) => {
                return Err(Error::Structural(format!(
                    "{:?} node requires a {expected:?} parent",
                    node.level
                )))
            }
            (Some(expected), Some(p)) => {
                let parent_level = self.get(p)?.level;
                if parent_level != expected {
                    return Err(Error::Structural(format!(
                        "{:?} node cannot attach under {parent_level:?} {p}",
                        node.level
                    )));
                }
            }
            (None, None) => {}
        }

        let id = NodeId(self.next_id);
        self.next_id += 1;
        let stored = MemoryNode {
            id,
            level: node.level,
            label: node.label,
            embedding: node.embedding,
            cost: node.cost,
            freq: node.freq,
            last_touch: node.last_touch,
            relations: node.relations,
            parent,
            children: BTreeSet::new(),
        };
        self.total_cost += stored.cost;
        self.nodes.insert(id, stored);
        match parent {
            Some(p) => {
                self.nodes.get_mut(&p).expect("checked").children.insert(id);
            }
            None => {
                self.roots.insert(id);
            }
        }
        Ok(id)
    }

    /// Records one access: bumps the frequency and moves `last_touch` to `now`.
    pub fn touch(&mut self, id: NodeId, now: u64) -> Result<()> {
        let node = self.nodes.get_mut(&id).ok_or(Error::NotFound(id))?;
        if now < node.last_touch {
            return Err(Error::Precondition(format!(
                "touch of {id} at turn {now} precedes its last touch {}",
                node.last_touch
            )));
        }
        node.freq += 1;
        node.last_touch = now;
        Ok(())
    }

    /// Removes `id` and all its descendants, returning the removed ids in
    /// pre-order. Parents are never removed here.
    pub fn remove_subtree(&mut self, id: NodeId) -> Result<Vec<NodeId>> {
        let root = self.get(id)?;
        let parent = root.parent;

        let mut order = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            order.push(cur);
            let node = &self.nodes[&cur];
            stack.extend(node.children.iter().rev().copied());
        }

        let removed: BTreeSet<NodeId> = order.iter().copied().collect();
        for cur in &order {
            let node = self.nodes.remove(cur).expect("collected from live nodes");
            self.total_cost -= node.cost;
            self.roots.remove(cur);
            // A relation never outlives its peer.
            for rel in node.relations.iter().filter(|r| !removed.contains(&r.peer)) {
                if let Some(peer_node) = self.nodes.get_mut(&rel.peer) {
                    peer_node.relations.retain(|back| back.peer != *cur);
                }
            }
        }
        if let Some(p) = parent {
            if let Some(pn) = self.nodes.get_mut(&p) {
                pn.children.remove(&id);
            }
        }
        Ok(order)
    }

    /// Adds the mutual relation between two AMUs of one triplet.
    pub fn link(&mut self, subject: NodeId, relation: &str, object: NodeId) -> Result<()> {
        for id in [subject, object] {
            if self.get(id)?.level != Level::Amu {
                return Err(Error::Structural(format!(
                    "relations live on AMUs only ({id})"
                )));
            }
        }
        let subject_label = self.nodes[&subject].label.clone();
        let object_label = self.nodes[&object].label.clone();
        push_relation(
            self.nodes.get_mut(&subject).expect("checked"),
            Relation {
                relation: relation.to_string(),
                peer: object,
                peer_label: object_label,
                outgoing: true,
            },
        );
        push_relation(
            self.nodes.get_mut(&object).expect("checked"),
            Relation {
                relation: relation.to_string(),
                peer: subject,
                peer_label: subject_label,
                outgoing: false,
            },
        );
        Ok(())
    }

    /// Replaces two sibling AMUs with `merged`, re-pointing every relation
    /// that referenced either member at the new node.
    pub(crate) fn replace_pair(
        &mut self,
        a: NodeId,
        b: NodeId,
        mut merged: NewNode,
    ) -> Result<NodeId> {
        let parent = self.get(a)?.parent;
        if self.get(b)?.parent != parent {
            return Err(Error::Structural(format!("{a} and {b} are not siblings")));
        }
        let new_id = self.peek_next_id();
        // Self-references between the two members are dropped.
        merged.relations.retain(|r| r.peer != a && r.peer != b);
        let mut seen = Vec::with_capacity(merged.relations.len());
        merged.relations.retain(|r| {
            let fresh = !seen.contains(r);
            if fresh {
                seen.push(r.clone());
            }
            fresh
        });
        for rel in merged.relations.iter() {
            if let Some(pn) = self.nodes.get_mut(&rel.peer) {
                for back in pn.relations.iter_mut() {
                    if back.peer == a || back.peer == b {
                        back.peer = new_id;
                        back.peer_label = merged.label.clone();
                    }
                }
                dedup_relations(&mut pn.relations);
            }
        }
        self.nodes.get_mut(&a).expect("checked").relations.clear();
        self.nodes.get_mut(&b).expect("checked").relations.clear();
        self.remove_subtree(a)?;
        self.remove_subtree(b)?;
        let id = self.insert_node(merged, parent)?;
        debug_assert_eq!(id, new_id);
        Ok(id)
    }

    /// Sum of member costs computed from scratch.
    pub fn recompute_cost(&self) -> u64 {
        self.nodes.values().map(|n| n.cost).sum()
    }

    /// Verifies every structural and accounting invariant.
    pub fn check_integrity(&self) -> Result<()> {
        if self.recompute_cost() != self.total_cost {
            return Err(Error::Structural(format!(
                "cached cost {} != recomputed {}",
                self.total_cost,
                self.recompute_cost()
            )));
        }
        for node in self.nodes.values() {
            if node.cost < 1 {
                return Err(Error::Structural(format!("{} has zero cost", node.id)));
            }
            if node.id.0 >= self.next_id {
                return Err(Error::Structural(format!("{} beyond id counter", node.id)));
            }
            match (node.level.parent_level(), node.parent) {
                (None, None) => {
                    if !self.roots.contains(&node.id) {
                        return Err(Error::Structural(format!("scene {} not a root", node.id)));
                    }
                }
                (Some(expected), Some(p)) => {
                    let parent = self.nodes.get(&p).ok_or_else(|| {
                        Error::Structural(format!("{} has dangling parent", node.id))
                    })?;
                    if parent.level != expected || !parent.children.contains(&node.id) {
                        return Err(Error::Structural(format!(
                            "{} not linked correctly under {p}",
                            node.id
                        )));
                    }
                }
                _ => {
                    return Err(Error::Structural(format!(
                        "{} has an invalid parent for its level",
                        node.id
                    )))
                }
            }
            for child in &node.children {
                let c = self
                    .nodes
                    .get(child)
                    .ok_or_else(|| Error::Structural(format!("{} has dangling child", node.id)))?;
                if c.parent != Some(node.id) || c.level.rank() + 1 != node.level.rank() {
                    return Err(Error::Structural(format!(
                        "child {child} of {} has wrong level or back-link",
                        node.id
                    )));
                }
            }
            for rel in &node.relations {
                if self.nodes.get(&rel.peer).map(|p| p.level) != Some(Level::Amu) {
                    return Err(Error::Structural(format!(
                        "{} relates to missing AMU {}",
                        node.id, rel.peer
                    )));
                }
            }
            if node.level != Level::Amu && !node.relations.is_empty() {
                return Err(Error::Structural(format!("{} carries relations", node.id)));
            }
        }
        for root in &self.roots {
            match self.nodes.get(root) {
                Some(n) if n.level == Level::Scene => {}
                _ => return Err(Error::Structural(format!("bad root {root}"))),
            }
        }
        Ok(())
    }
}

fn dedup_relations(rels: &mut Vec<Relation>) {
    let mut out: Vec<Relation> = Vec::with_capacity(rels.len());
    for r in rels.drain(..) {
        if !out.contains(&r) {
            out.push(r);
        }
    }
    *rels = out;
}

fn push_relation(node: &mut MemoryNode, rel: Relation) {
    if !node.relations.contains(&rel) {
        node.relations.push(rel);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb() -> Embedding {
        Embedding::normalized(vec![1.0, 0.0]).unwrap()
    }

    fn node(level: Level, cost: u64) -> NewNode {
        NewNode::new(level, "x", emb(), 0).with_cost(cost)
    }

    /// Scene -> 2 events -> 3 AMUs, each cost 1.
    fn small_tree(h: &mut Hierarchy) -> (NodeId, [NodeId; 2], [NodeId; 3]) {
        let s = h.insert_node(node(Level::Scene, 1), None).unwrap();
        let e1 = h.insert_node(node(Level::Event, 1), Some(s)).unwrap();
        let e2 = h.insert_node(node(Level::Event, 1), Some(s)).unwrap();
        let a1 = h.insert_node(node(Level::Amu, 1), Some(e1)).unwrap();
        let a2 = h.insert_node(node(Level::Amu, 1), Some(e1)).unwrap();
        let a3 = h.insert_node(node(Level::Amu, 1), Some(e2)).unwrap();
        (s, [e1, e2], [a1, a2, a3])
    }

    #[test]
    fn token_cost_examples() {
        assert_eq!(token_cost("tire blowout on highway"), 4);
        assert_eq!(token_cost(""), 1);
        assert_eq!(token_cost("a  b"), 2);
    }

    #[test]
    fn first_scene_becomes_root() {
        let mut h = Hierarchy::new(100);
        let id = h.insert_node(node(Level::Scene, 3), None).unwrap();
        assert_eq!(h.roots().map(|n| n.id).collect::<Vec<_>>(), vec![id]);
        assert_eq!(h.total_cost(), 3);
    }

    #[test]
    fn amu_under_scene_is_structural_error() {
        let mut h = Hierarchy::new(100);
        let s = h.insert_node(node(Level::Scene, 3), None).unwrap();
        let err = h.insert_node(node(Level::Amu, 1), Some(s)).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn event_cost_adds_up() {
        let mut h = Hierarchy::new(100);
        let s = h.insert_node(node(Level::Scene, 3), None).unwrap();
        h.insert_node(node(Level::Event, 2), Some(s)).unwrap();
        assert_eq!(h.total_cost(), 5);
    }

    #[test]
    fn unknown_parent_is_not_found() {
        let mut h = Hierarchy::new(100);
        let err = h
            .insert_node(node(Level::Event, 1), Some(NodeId(42)))
            .unwrap_err();
        assert!(matches!(err, Error::NotFound(NodeId(42))));
    }

    #[test]
    fn scene_with_parent_rejected() {
        let mut h = Hierarchy::new(100);
        let s = h.insert_node(node(Level::Scene, 1), None).unwrap();
        assert!(matches!(
            h.insert_node(node(Level::Scene, 1), Some(s)),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn touch_semantics() {
        let mut h = Hierarchy::new(100);
        let s = h.insert_node(node(Level::Scene, 1), None).unwrap();
        h.touch(s, 7).unwrap();
        let n = h.get(s).unwrap();
        assert_eq!((n.freq, n.last_touch), (1, 7));

        h.touch(s, 9).unwrap();
        h.touch(s, 9).unwrap();
        let n = h.get(s).unwrap();
        assert_eq!((n.freq, n.last_touch), (3, 9));

        assert!(matches!(h.touch(s, 8), Err(Error::Precondition(_))));
        assert!(matches!(h.touch(NodeId(99), 10), Err(Error::NotFound(_))));
    }

    #[test]
    fn remove_leaf_keeps_siblings() {
        let mut h = Hierarchy::new(100);
        let (_, [e1, _], [a1, a2, _]) = small_tree(&mut h);
        let before = h.total_cost();
        assert_eq!(h.remove_subtree(a1).unwrap(), vec![a1]);
        assert_eq!(h.total_cost(), before - 1);
        let kids: Vec<_> = h.children(e1).unwrap().map(|n| n.id).collect();
        assert_eq!(kids, vec![a2]);
    }

    #[test]
    fn remove_scene_returns_whole_subtree() {
        let mut h = Hierarchy::new(100);
        let (s, _, _) = small_tree(&mut h);
        assert_eq!(h.remove_subtree(s).unwrap().len(), 6);
        assert!(h.is_empty());
        assert_eq!(h.total_cost(), 0);
    }

    #[test]
    fn removing_last_amu_does_not_cascade() {
        let mut h = Hierarchy::new(100);
        let (_, [_, e2], [_, _, a3]) = small_tree(&mut h);
        h.remove_subtree(a3).unwrap();
        assert!(h.contains(e2));
        assert_eq!(h.children(e2).unwrap().count(), 0);
        h.check_integrity().unwrap();
    }

    #[test]
    fn ids_never_reused() {
        let mut h = Hierarchy::new(100);
        let s = h.insert_node(node(Level::Scene, 1), None).unwrap();
        h.remove_subtree(s).unwrap();
        let s2 = h.insert_node(node(Level::Scene, 1), None).unwrap();
        assert!(s2 > s);
    }

    #[test]
    fn removal_clears_peer_links() {
        let mut h = Hierarchy::new(100);
        let (_, _, [a1, a2, _]) = small_tree(&mut h);
        h.link(a1, "mentions", a2).unwrap();
        assert_eq!(h.get(a2).unwrap().relations[0].peer, a1);
        h.remove_subtree(a1).unwrap();
        assert!(h.get(a2).unwrap().relations.is_empty());
        h.check_integrity().unwrap();
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert {
            parent_pick: usize,
            level: u8,
            cost: u64,
        },
        Remove {
            pick: usize,
        },
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            3 => (any::<usize>(), 1u8..=3, 1u64..6)
                .prop_map(|(parent_pick, level, cost)| Op::Insert { parent_pick, level, cost }),
            1 => any::<usize>().prop_map(|pick| Op::Remove { pick }),
        ]
    }

    proptest! {
        #[test]
        fn cached_cost_matches_recount(ops in proptest::collection::vec(op(), 0..80)) {
            let mut h = Hierarchy::new(1000);
            for op in ops {
                let ids: Vec<NodeId> = h.nodes().map(|n| n.id).collect();
                match op {
                    Op::Insert { parent_pick, level, cost } => {
                        let level = match level { 1 => Level::Amu, 2 => Level::Event, _ => Level::Scene };
                        let parent = match level.parent_level() {
                            None => None,
                            Some(pl) => {
                                let cands: Vec<NodeId> = h.level_iter(pl).map(|n| n.id).collect();
                                if cands.is_empty() { continue; }
                                Some(cands[parent_pick % cands.len()])
                            }
                        };
                        h.insert_node(node(level, cost), parent).unwrap();
                    }
                    Op::Remove { pick } => {
                        if ids.is_empty() { continue; }
                        h.remove_subtree(ids[pick % ids.len()]).unwrap();
                    }
                }
                prop_assert_eq!(h.recompute_cost(), h.total_cost());
                prop_assert!(h.check_integrity().is_ok());
            }
        }
    }
}
