//! RadGraph-style JSON, accepted and emitted:
//!
//! ```json
//! {"text": "small left pleural effusion",
//!  "entities": {"1": {"tokens": "pleural effusion", "label": "OBS-DP",
//!                     "start_ix": 2, "end_ix": 3,
//!                     "relations": [["located_at", "2"]]}, ...}}
//! ```
//!
//! Relations live on their head entity as `[label, tail_id]` pairs. Emitted
//! ids are `"1".."n"` in entity order. On input, ids are ordered
//! numerically when they are all integers and lexically otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Entity, EntityGraph, GraphError, Relation};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDocument {
    pub text: String,
    pub entities: BTreeMap<String, RawEntity>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEntity {
    pub tokens: String,
    pub label: String,
    pub start_ix: usize,
    pub end_ix: usize,
    #[serde(default)]
    pub relations: Vec<(String, String)>,
}

impl TryFrom<RawDocument> for EntityGraph {
    type Error = GraphError;

    fn try_from(doc: RawDocument) -> Result<Self, Self::Error> {
        let mut ids: Vec<&String> = doc.entities.keys().collect();
        if ids.iter().all(|id| id.parse::<u64>().is_ok()) {
            ids.sort_by_key(|id| id.parse::<u64>().unwrap_or(u64::MAX));
        }
        let index: BTreeMap<&str, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

        let mut entities = Vec::with_capacity(ids.len());
        let mut relations = Vec::new();
        for (head, id) in ids.iter().enumerate() {
            let raw = &doc.entities[*id];
            entities.push(Entity {
                tokens: raw.tokens.clone(),
                label: raw.label.parse()?,
                start_ix: raw.start_ix,
                end_ix: raw.end_ix,
            });
            for (label, tail_id) in &raw.relations {
                let label = label.parse()?;
                let tail = *index.get(tail_id.as_str()).ok_or_else(|| {
                    GraphError::Schema(format!(
                        "entity {id:?} relates to missing entity {tail_id:?}"
                    ))
                })?;
                relations.push(Relation { head, tail, label });
            }
        }
        EntityGraph::new(doc.text, entities, relations)
    }
}

impl From<EntityGraph> for RawDocument {
    fn from(graph: EntityGraph) -> Self {
        let id = |i: usize| (i + 1).to_string();
        let entities = graph
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let relations = graph
                    .relations()
                    .iter()
                    .filter(|r| r.head == i)
                    .map(|r| (r.label.as_str().to_string(), id(r.tail)))
                    .collect();
                let raw = RawEntity {
                    tokens: e.tokens.clone(),
                    label: e.label.as_str().to_string(),
                    start_ix: e.start_ix,
                    end_ix: e.end_ix,
                    relations,
                };
                (id(i), raw)
            })
            .collect();
        RawDocument { text: graph.source_text, entities }
    }
}

/// Parses a RadGraph-style JSON document. Missing fields and dangling
/// references are [`GraphError::Schema`]; unrecognized entity or relation
/// labels are [`GraphError::UnknownLabel`].
pub fn parse_radgraph_json(bytes: &[u8]) -> Result<EntityGraph, GraphError> {
    let doc: RawDocument =
        serde_json::from_slice(bytes).map_err(|e| GraphError::Schema(e.to_string()))?;
    EntityGraph::try_from(doc)
}

pub fn to_radgraph_json(graph: &EntityGraph) -> String {
    serde_json::to_string_pretty(&RawDocument::from(graph.clone()))
        .expect("graph documents always serialize")
}
