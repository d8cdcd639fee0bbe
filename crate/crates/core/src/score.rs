//! RadGraph-F1 between a prompt and a generated report.
//!
//! Report sentences without a bounding box are dropped, the rest are run
//! through the extractor, and the merged graph's tuple set is compared with
//! the tuple set of the prompt's ground-truth graph.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{extract_graph, merge_graphs, EntityGraph, EntityLabel, GraphError, Lexicon, RelationLabel};
use crate::prompt::{assertion_to_graph, ClinicalAssertion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("report schema error: {0}")]
    Schema(String),
    #[error("sentence {sentence}: invalid box: {reason}")]
    InvalidBox { sentence: usize, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Fractional image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    fn check(&self) -> Result<(), String> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!("coordinates {coords:?} outside [0, 1]"));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(format!("empty box {coords:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedSentence {
    pub text: String,
    /// `null`, missing and `[]` all mean "not grounded".
    #[serde(default, deserialize_with = "null_as_empty")]
    pub boxes: Vec<BoundingBox>,
}

fn null_as_empty<'de, D>(d: D) -> Result<Vec<BoundingBox>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Ok(Option::<Vec<BoundingBox>>::deserialize(d)?.unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundedReport {
    pub sentences: Vec<GroundedSentence>,
}

impl GroundedReport {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ScoreError> {
        let report: GroundedReport =
            serde_json::from_slice(bytes).map_err(|e| ScoreError::Schema(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ScoreError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        for (i, s) in self.sentences.iter().enumerate() {
            for b in &s.boxes {
                b.check().map_err(|reason| ScoreError::InvalidBox { sentence: i, reason })?;
            }
        }
        Ok(())
    }
}

/// Sentences that carry at least one box, in report order. With `filter`
/// off every sentence is kept, for report generators without grounding.
pub fn filter_grounded(report: &GroundedReport, filter: bool) -> Vec<String> {
    report
        .sentences
        .iter()
        .filter(|s| !filter || !s.boxes.is_empty())
        .map(|s| s.text.clone())
        .collect()
}

pub type EntityTuple = (String, EntityLabel);
pub type RelationTuple = (EntityTuple, RelationLabel, EntityTuple);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TupleSet {
    pub entity_tuples: BTreeSet<EntityTuple>,
    pub relation_tuples: BTreeSet<RelationTuple>,
}

impl TupleSet {
    pub fn len(&self) -> usize {
        self.entity_tuples.len() + self.relation_tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Entity tuples are `(normalized tokens, label)`; relation tuples pair the
/// endpoint tuples. Repeated mentions collapse.
pub fn tuple_set(g: &EntityGraph, lex: &Lexicon) -> TupleSet {
    let entity: Vec<EntityTuple> = g
        .entities
        .iter()
        .map(|e| (lex.normalize_term(&e.tokens), e.label))
        .collect();
    TupleSet {
        entity_tuples: entity.iter().cloned().collect(),
        relation_tuples: g
            .relations()
            .iter()
            .map(|r| (entity[r.head].clone(), r.label, entity[r.tail].clone()))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Breakdown {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub entity_f1: f64,
    pub relation_f1: f64,
    /// Both tuple sets were empty; `f1` is the vacuous 1.0.
    pub degenerate: bool,
}

/// Precision, recall and F1 from set sizes. Both empty scores 1.0, exactly
/// one empty scores 0.0.
fn prf(overlap: usize, pred: usize, gt: usize) -> (f64, f64, f64) {
    match (pred, gt) {
        (0, 0) => (1.0, 1.0, 1.0),
        (0, _) | (_, 0) => (0.0, 0.0, 0.0),
        _ => {
            let p = overlap as f64 / pred as f64;
            let r = overlap as f64 / gt as f64;
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f1)
        }
    }
}

/// RadGraph-F1. The headline precision, recall and `f1` treat entity and
/// relation tuples as one set; `entity_f1` and `relation_f1` score each
/// level on its own.
pub fn radgraph_f1(pred: &TupleSet, gt: &TupleSet) -> F1Breakdown {
    let entity_overlap = pred.entity_tuples.intersection(&gt.entity_tuples).count();
    let relation_overlap = pred.relation_tuples.intersection(&gt.relation_tuples).count();
    let (precision, recall, f1) = prf(entity_overlap + relation_overlap, pred.len(), gt.len());
    let (_, _, entity_f1) = prf(entity_overlap, pred.entity_tuples.len(), gt.entity_tuples.len());
    let (_, _, relation_f1) =
        prf(relation_overlap, pred.relation_tuples.len(), gt.relation_tuples.len());
    F1Breakdown {
        precision,
        recall,
        f1,
        entity_f1,
        relation_f1,
        degenerate: pred.is_empty() && gt.is_empty(),
    }
}

/// Where the predicted graph comes from.
#[derive(Debug, Clone)]
pub enum Prediction<'a> {
    Report { report: &'a GroundedReport, filter: bool },
    /// An externally produced graph; extraction is skipped.
    Graph(&'a EntityGraph),
}

/// Per-sample score with the intermediate graphs kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub f1: F1Breakdown,
    pub retained_sentences: Vec<String>,
    pub pred_graph: EntityGraph,
    pub gt_graph: EntityGraph,
}

pub fn score_sample(
    prompt: &ClinicalAssertion,
    prediction: Prediction<'_>,
    lex: &Lexicon,
) -> Result<SampleScore, ScoreError> {
    let gt_graph = assertion_to_graph(prompt, lex);
    let (retained_sentences, pred_graph) = match prediction {
        Prediction::Report { report, filter } => {
            let sentences = filter_grounded(report, filter);
            let graphs = sentences
                .iter()
                .map(|s| extract_graph(s, lex))
                .collect::<Result<Vec<_>, _>>()?;
            (sentences, merge_graphs(&graphs))
        }
        Prediction::Graph(g) => (Vec::new(), g.clone()),
    };
    let f1 = radgraph_f1(&tuple_set(&pred_graph, lex), &tuple_set(&gt_graph, lex));
    Ok(SampleScore { f1, retained_sentences, pred_graph, gt_graph })
}
