//! Domain types and the in-memory multi-level graph store.
//!
//! A [`KgTree`] holds every accepted triple keyed by its normalized
//! `(head, relation, tail)` key, plus one [`NodeRecord`] per entity tracking
//! whether it is still waiting to be expanded (`growing`), was cut off by the
//! pruner (`pruned`) or has already been expanded (`expanded`).

use std::fmt;
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Case-fold, trim and collapse internal whitespace.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entity {
    surface: String,
    normalized: String,
}

impl Entity {
    pub fn new(surface: &str) -> Result<Self> {
        let surface = surface.trim();
        if surface.is_empty() {
            return Err(Error::EmptyEntity);
        }
        Ok(Entity {
            surface: surface.to_string(),
            normalized: normalize(surface),
        })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

/// A bare `(head, relation, tail)` record without provenance, as found in
/// open KG files, example segments and parsed LLM output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl RawTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        RawTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    pub fn key(&self) -> TripleKey {
        TripleKey::new(&self.head, &self.relation, &self.tail)
    }
}

/// Dedup key: normalized head, relation and tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleKey {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl TripleKey {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        TripleKey {
            head: normalize(head),
            relation: normalize(relation),
            tail: normalize(tail),
        }
    }
}

impl fmt::Display for TripleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} | {} | {})", self.head, self.relation, self.tail)
    }
}

/// One accepted fact together with the expansion that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub head: Entity,
    pub relation: String,
    pub tail: Entity,
    /// Construction level, starting at 1 for triples headed by a root.
    pub level: u32,
    /// The frontier entity whose expansion induced this triple.
    pub source_entity: Entity,
    /// Generation attempt (0 = first prompt, 1.. = regenerations).
    pub round: u32,
}

impl Triple {
    pub fn new(head: &str, relation: &str, tail: &str, level: u32, source_entity: Entity, round: u32) -> Result<Self> {
        let relation = relation.trim();
        if relation.is_empty() {
            return Err(Error::MalformedTriple("empty relation".into()));
        }
        if level == 0 {
            return Err(Error::MalformedTriple("level must be >= 1".into()));
        }
        let head = Entity::new(head).map_err(|_| Error::MalformedTriple("empty head".into()))?;
        let tail = Entity::new(tail).map_err(|_| Error::MalformedTriple("empty tail".into()))?;
        Ok(Triple {
            head,
            relation: relation.to_string(),
            tail,
            level,
            source_entity,
            round,
        })
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            head: self.head.normalized.clone(),
            relation: normalize(&self.relation),
            tail: self.tail.normalized.clone(),
        }
    }

    pub fn raw(&self) -> RawTriple {
        RawTriple::new(self.head.surface(), &self.relation, self.tail.surface())
    }

    fn validate(&self) -> Result<()> {
        if self.head.surface.trim().is_empty() || self.tail.surface.trim().is_empty() {
            return Err(Error::MalformedTriple("empty head or tail".into()));
        }
        if self.relation.trim().is_empty() {
            return Err(Error::MalformedTriple("empty relation".into()));
        }
        if self.level == 0 {
            return Err(Error::MalformedTriple("level must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Growing,
    Pruned,
    Expanded,
}

impl NodeStatus {
    fn can_become(self, next: NodeStatus) -> bool {
        use NodeStatus::*;
        matches!((self, next), (Growing, _) | (Pruned, Pruned) | (Expanded, Expanded))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeStatus::Growing => "growing",
            NodeStatus::Pruned => "pruned",
            NodeStatus::Expanded => "expanded",
        }
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub entity: Entity,
    pub status: NodeStatus,
    /// Level of the first triple in which this entity appeared as a tail.
    /// `None` for roots and for entities only ever seen as heads.
    pub tail_level: Option<u32>,
    /// Set when the entity was expanded but produced no verified triples.
    pub expanded_empty: bool,
}

/// The multi-level graph under construction.
///
/// Mutation goes through `&mut self`; share it across threads behind a lock
/// if several writers exist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KgTree {
    triples: IndexMap<TripleKey, Triple>,
    nodes: IndexMap<String, NodeRecord>,
    roots: Vec<Entity>,
    max_level_reached: u32,
}

impl KgTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_level_reached(&self) -> u32 {
        self.max_level_reached
    }

    pub fn roots(&self) -> &[Entity] {
        &self.roots
    }

    /// Triples in insertion order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values()
    }

    /// Nodes in registration order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    pub fn node(&self, normalized: &str) -> Option<&NodeRecord> {
        self.nodes.get(normalized)
    }

    pub fn status(&self, e: &Entity) -> Option<NodeStatus> {
        self.nodes.get(e.normalized()).map(|n| n.status)
    }

    pub fn contains_key(&self, key: &TripleKey) -> bool {
        self.triples.contains_key(key)
    }

    /// Register a root entity as `growing`. Returns false if it was already known.
    pub fn add_root(&mut self, e: Entity) -> bool {
        if self.nodes.contains_key(e.normalized()) {
            return false;
        }
        self.nodes.insert(
            e.normalized.clone(),
            NodeRecord {
                entity: e.clone(),
                status: NodeStatus::Growing,
                tail_level: None,
                expanded_empty: false,
            },
        );
        self.roots.push(e);
        true
    }

    /// Store `t` unless its dedup key is already present.
    ///
    /// New tails are registered as `growing`; the head becomes `expanded`
    /// when it is the entity whose expansion produced the triple.
    pub fn insert_triple(&mut self, t: Triple) -> Result<bool> {
        t.validate()?;
        let key = t.key();
        if self.triples.contains_key(&key) {
            return Ok(false);
        }

        let head_is_source = t.head.normalized == t.source_entity.normalized;
        match self.nodes.get_mut(t.head.normalized()) {
            Some(node) => {
                if head_is_source && node.status == NodeStatus::Growing {
                    node.status = NodeStatus::Expanded;
                }
            }
            None => {
                self.nodes.insert(
                    t.head.normalized.clone(),
                    NodeRecord {
                        entity: t.head.clone(),
                        status: if head_is_source {
                            NodeStatus::Expanded
                        } else {
                            NodeStatus::Growing
                        },
                        tail_level: None,
                        expanded_empty: false,
                    },
                );
            }
        }
        if !self.nodes.contains_key(t.tail.normalized()) {
            self.nodes.insert(
                t.tail.normalized.clone(),
                NodeRecord {
                    entity: t.tail.clone(),
                    status: NodeStatus::Growing,
                    tail_level: Some(t.level),
                    expanded_empty: false,
                },
            );
        }

        self.max_level_reached = self.max_level_reached.max(t.level);
        self.triples.insert(key, t);
        Ok(true)
    }

    /// Growing entities that first appeared as tails at exactly `level`,
    /// in registration order.
    pub fn frontier(&self, level: u32) -> Vec<Entity> {
        self.nodes
            .values()
            .filter(|n| n.status == NodeStatus::Growing && n.tail_level == Some(level))
            .map(|n| n.entity.clone())
            .collect()
    }

    pub fn mark_status(&mut self, e: &Entity, status: NodeStatus) -> Result<()> {
        let node = self
            .nodes
            .get_mut(e.normalized())
            .ok_or_else(|| Error::UnknownEntity(e.surface().to_string()))?;
        if !node.status.can_become(status) {
            return Err(Error::IllegalTransition {
                entity: e.surface().to_string(),
                from: node.status,
                to: status,
            });
        }
        node.status = status;
        Ok(())
    }

    /// Mark `e` expanded with no verified triples so it is never retried.
    pub fn mark_expanded_empty(&mut self, e: &Entity) -> Result<()> {
        self.mark_status(e, NodeStatus::Expanded)?;
        if let Some(node) = self.nodes.get_mut(e.normalized()) {
            node.expanded_empty = true;
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<SnapshotRecord> {
        self.triples
            .values()
            .map(|t| SnapshotRecord {
                head: t.head.surface().to_string(),
                relation: t.relation.clone(),
                tail: t.tail.surface().to_string(),
                level: t.level,
                source_entity: t.source_entity.surface().to_string(),
                round: t.round,
                head_status: self.nodes[t.head.normalized()].status,
                tail_status: self.nodes[t.tail.normalized()].status,
            })
            .collect()
    }

    /// Rebuild a tree from snapshot records, trusting the recorded statuses.
    pub fn from_records(records: impl IntoIterator<Item = SnapshotRecord>) -> Result<Self> {
        let mut tree = KgTree::new();
        let mut statuses = Vec::new();
        let mut tail_seen = std::collections::HashSet::new();
        for r in records {
            let source =
                Entity::new(&r.source_entity).map_err(|_| Error::MalformedTriple("empty source entity".into()))?;
            let t = Triple::new(&r.head, &r.relation, &r.tail, r.level, source, r.round)?;
            tail_seen.insert(t.tail.normalized.clone());
            statuses.push((t.head.normalized.clone(), r.head_status));
            statuses.push((t.tail.normalized.clone(), r.tail_status));
            tree.insert_triple(t)?;
        }
        for (norm, status) in statuses {
            if let Some(node) = tree.nodes.get_mut(&norm) {
                node.status = status;
            }
        }
        tree.roots = tree
            .nodes
            .values()
            .filter(|n| !tail_seen.contains(n.entity.normalized()))
            .map(|n| n.entity.clone())
            .collect();
        Ok(tree)
    }

    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.to_records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read_snapshot<R: BufRead>(input: R, origin: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SnapshotRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
            records.push(record);
        }
        KgTree::from_records(records)
    }

    pub fn load_snapshot(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_snapshot(std::io::BufReader::new(file), &path.display().to_string())
    }
}

/// One snapshot line. Field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub level: u32,
    pub source_entity: String,
    pub round: u32,
    pub head_status: NodeStatus,
    pub tail_status: NodeStatus,
}
