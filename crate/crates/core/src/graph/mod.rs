//! Entity-relation graphs over clinical text.
//!
//! Entities are labeled spans (observations with a certainty, or anatomy);
//! relations are typed, directed edges between them. Graphs come either from
//! the rule-based extractor in [`extract`] or from RadGraph-format JSON
//! produced elsewhere ([`radgraph`]).

mod extract;
mod lexicon;
pub mod radgraph;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_graph;
pub use lexicon::{Lexicon, TermClass};
pub(crate) use lexicon::{segment, Unit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("sentence is empty after normalization")]
    EmptySentence,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityLabel {
    /// Observation, definitely present.
    #[serde(rename = "OBS-DP")]
    ObsPresent,
    /// Observation, definitely absent.
    #[serde(rename = "OBS-DA")]
    ObsAbsent,
    /// Observation, uncertain.
    #[serde(rename = "OBS-U")]
    ObsUncertain,
    /// Anatomy, present.
    #[serde(rename = "ANAT-DP")]
    AnatPresent,
}

impl EntityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::ObsPresent => "OBS-DP",
            EntityLabel::ObsAbsent => "OBS-DA",
            EntityLabel::ObsUncertain => "OBS-U",
            EntityLabel::AnatPresent => "ANAT-DP",
        }
    }
}

impl FromStr for EntityLabel {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OBS-DP" => Ok(EntityLabel::ObsPresent),
            "OBS-DA" => Ok(EntityLabel::ObsAbsent),
            "OBS-U" => Ok(EntityLabel::ObsUncertain),
            "ANAT-DP" => Ok(EntityLabel::AnatPresent),
            other => Err(GraphError::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    Modify,
    LocatedAt,
    SuggestiveOf,
}

impl RelationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Modify => "modify",
            RelationLabel::LocatedAt => "located_at",
            RelationLabel::SuggestiveOf => "suggestive_of",
        }
    }
}

impl FromStr for RelationLabel {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modify" => Ok(RelationLabel::Modify),
            "located_at" => Ok(RelationLabel::LocatedAt),
            "suggestive_of" => Ok(RelationLabel::SuggestiveOf),
            other => Err(GraphError::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled span of normalized words; `start_ix..=end_ix` index the words
/// of the graph's source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub tokens: String,
    pub label: EntityLabel,
    pub start_ix: usize,
    pub end_ix: usize,
}

/// Directed edge between two entities of the same graph, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub head: usize,
    pub tail: usize,
    pub label: RelationLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "radgraph::RawDocument", into = "radgraph::RawDocument")]
pub struct EntityGraph {
    pub source_text: String,
    pub entities: Vec<Entity>,
    relations: Vec<Relation>,
}

impl EntityGraph {
    /// Builds a graph, checking span uniqueness and relation endpoints.
    /// Relations are kept sorted and deduplicated.
    pub fn new(
        source_text: impl Into<String>,
        entities: Vec<Entity>,
        mut relations: Vec<Relation>,
    ) -> Result<Self, GraphError> {
        for (i, e) in entities.iter().enumerate() {
            if e.start_ix > e.end_ix {
                return Err(GraphError::Schema(format!(
                    "entity {i}: start_ix {} > end_ix {}",
                    e.start_ix, e.end_ix
                )));
            }
            if entities[..i]
                .iter()
                .any(|o| o.start_ix == e.start_ix && o.end_ix == e.end_ix)
            {
                return Err(GraphError::Schema(format!(
                    "entity {i}: duplicate span [{}, {}]",
                    e.start_ix, e.end_ix
                )));
            }
        }
        for r in &relations {
            if r.head >= entities.len() || r.tail >= entities.len() {
                return Err(GraphError::Schema(format!(
                    "relation {} -> {} references a missing entity",
                    r.head, r.tail
                )));
            }
            if r.head == r.tail {
                return Err(GraphError::Schema(format!("relation loops on entity {}", r.head)));
            }
        }
        relations.sort();
        relations.dedup();
        Ok(EntityGraph { source_text: source_text.into(), entities, relations })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Number of word positions this graph spans: the larger of the source
    /// text's word count and one past the last entity index.
    fn word_extent(&self) -> usize {
        let text_words = self.source_text.split_whitespace().count();
        let span_words = self.entities.iter().map(|e| e.end_ix + 1).max().unwrap_or(0);
        text_words.max(span_words)
    }
}

/// Unions per-sentence graphs into one. Entity and word indices are shifted
/// so spans stay unique; duplicate mentions are kept.
pub fn merge_graphs(graphs: &[EntityGraph]) -> EntityGraph {
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    let mut texts = Vec::with_capacity(graphs.len());
    let mut word_offset = 0;
    for g in graphs {
        let entity_offset = entities.len();
        entities.extend(g.entities.iter().map(|e| Entity {
            start_ix: e.start_ix + word_offset,
            end_ix: e.end_ix + word_offset,
            ..e.clone()
        }));
        relations.extend(g.relations.iter().map(|r| Relation {
            head: r.head + entity_offset,
            tail: r.tail + entity_offset,
            label: r.label,
        }));
        texts.push(g.source_text.as_str());
        word_offset += g.word_extent();
    }
    EntityGraph::new(texts.join("\n"), entities, relations)
        .expect("rebased union of valid graphs is valid")
}
