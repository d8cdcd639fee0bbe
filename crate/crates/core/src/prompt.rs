//! The constrained prompt template: `{severity} {location} pathology`.
//!
//! Templates expand into [`ClinicalAssertion`]s, free-text prompts parse
//! back into them, and each assertion has a fixed ground-truth entity graph.
//! All vocabularies come from the shared [`Lexicon`]; unknown tokens are
//! refused rather than guessed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    segment, Entity, EntityGraph, EntityLabel, Lexicon, Relation, RelationLabel, TermClass,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("no known pathology in prompt {0:?}")]
    UnknownPathology(String),
    #[error("prompt {0:?} names more than one pathology")]
    AmbiguousPrompt(String),
    #[error("unexpected token {token:?} in prompt {prompt:?}")]
    UnknownToken { token: String, prompt: String },
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

/// One template line: a pathology with its severity and location options.
/// An empty `locations` list means the template has no location slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub pathology: String,
    #[serde(rename = "severities")]
    pub severity_options: Vec<String>,
    #[serde(rename = "locations", default)]
    pub location_options: Vec<Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    templates: Vec<PromptTemplate>,
}

impl PromptTemplate {
    fn new(pathology: &str, severities: &[&str], locations: &[&str]) -> Self {
        PromptTemplate {
            pathology: pathology.to_string(),
            severity_options: severities.iter().map(|s| s.to_string()).collect(),
            location_options: locations
                .iter()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        }
    }

    pub fn combinations(&self) -> usize {
        self.severity_options.len() * self.location_options.len().max(1)
    }

    pub fn validate(&self, lex: &Lexicon) -> Result<(), PromptError> {
        let bad = |msg: String| Err(PromptError::InvalidTemplate(msg));
        if !lex.observations.contains_key(&self.pathology) {
            return bad(format!("pathology {:?} is not in the lexicon", self.pathology));
        }
        if self.severity_options.is_empty() {
            return bad(format!("{}: no severity options", self.pathology));
        }
        for s in &self.severity_options {
            if !lex.modifiers.contains(s) {
                return bad(format!("{}: unknown severity {s:?}", self.pathology));
            }
        }
        for loc in &self.location_options {
            if loc.is_empty() || location_phrases(loc, lex).is_none() {
                return bad(format!("{}: unknown location {:?}", self.pathology, loc.join(" ")));
            }
        }
        Ok(())
    }
}

/// The four templates used for the chest X-ray study, in study order.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    vec![
        PromptTemplate::new("cardiomegaly", &["mild", "moderate", "severe"], &[]),
        PromptTemplate::new("pleural effusion", &["small", "moderate"], &["left", "right"]),
        PromptTemplate::new(
            "opacification",
            &["small", "moderate"],
            &[
                "left",
                "right",
                "left upper lobe",
                "left lower lobe",
                "right upper lobe",
                "right lower lobe",
            ],
        ),
        PromptTemplate::new(
            "pneumothorax",
            &["small", "moderate", "large"],
            &["left", "right", "left apical", "right apical"],
        ),
    ]
}

/// Reads `{"templates": [{"pathology", "severities", "locations"}]}` and
/// validates every template against `lex`.
pub fn load_templates(path: &Path, lex: &Lexicon) -> Result<Vec<PromptTemplate>, PromptError> {
    let bytes = std::fs::read(path)
        .map_err(|e| PromptError::InvalidTemplate(format!("{}: {e}", path.display())))?;
    let file: TemplateFile = serde_json::from_slice(&bytes)
        .map_err(|e| PromptError::InvalidTemplate(e.to_string()))?;
    for t in &file.templates {
        t.validate(lex)?;
    }
    Ok(file.templates)
}

/// Parsed prompt. `raw_text` is always the space-joined
/// `severity location pathology` rendering with absent slots omitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClinicalAssertion {
    pub pathology: String,
    pub severity: Option<String>,
    pub location: Option<Vec<String>>,
    pub raw_text: String,
}

impl ClinicalAssertion {
    pub fn new(pathology: &str, severity: Option<&str>, location: Option<&[String]>) -> Self {
        let mut parts: Vec<&str> = Vec::new();
        parts.extend(severity);
        if let Some(loc) = location {
            parts.extend(loc.iter().map(String::as_str));
        }
        parts.push(pathology);
        ClinicalAssertion {
            pathology: pathology.to_string(),
            severity: severity.map(str::to_string),
            location: location.map(<[String]>::to_vec),
            raw_text: parts.join(" "),
        }
    }
}

/// Cartesian expansion: template order, then severity, then location.
pub fn expand_templates(templates: &[PromptTemplate]) -> Vec<ClinicalAssertion> {
    let mut out = Vec::with_capacity(templates.iter().map(PromptTemplate::combinations).sum());
    for t in templates {
        for severity in &t.severity_options {
            if t.location_options.is_empty() {
                out.push(ClinicalAssertion::new(&t.pathology, Some(severity), None));
            }
            for loc in &t.location_options {
                out.push(ClinicalAssertion::new(&t.pathology, Some(severity), Some(loc)));
            }
        }
    }
    out
}

/// Lowercase, collapse whitespace, strip trailing punctuation.
pub fn normalize_prompt(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Parses a prompt of the template shape back into an assertion.
///
/// The pathology is found by longest match against the lexicon's
/// observations; the words before it must be an optional severity followed
/// by location words that segment into anatomy terms.
pub fn parse_prompt(text: &str, lex: &Lexicon) -> Result<ClinicalAssertion, PromptError> {
    let normalized = normalize_prompt(text);
    let words: Vec<String> = normalized.split(' ').filter(|w| !w.is_empty()).map(str::to_string).collect();
    let units = segment(&words, &vec![false; words.len()], lex);
    let pathologies: Vec<usize> = units
        .iter()
        .enumerate()
        .filter(|(_, u)| u.class == Some(TermClass::Observation))
        .map(|(i, _)| i)
        .collect();
    let pathology_unit = match pathologies.as_slice() {
        [] => return Err(PromptError::UnknownPathology(normalized)),
        [one] => *one,
        _ => return Err(PromptError::AmbiguousPrompt(normalized)),
    };
    let unknown = |i: usize| PromptError::UnknownToken {
        token: words[i].clone(),
        prompt: normalized.clone(),
    };
    if let Some(trailing) = units.get(pathology_unit + 1) {
        return Err(unknown(trailing.start));
    }
    let p = units[pathology_unit];
    let pathology = words[p.start..=p.end].join(" ");

    let mut prefix = &units[..pathology_unit];
    let mut severity = None;
    if let Some(first) = prefix.first().filter(|u| u.class == Some(TermClass::Modifier)) {
        severity = Some(words[first.start..=first.end].join(" "));
        prefix = &prefix[1..];
    }
    if let Some(bad) = prefix.iter().find(|u| u.class != Some(TermClass::Anatomy)) {
        return Err(unknown(bad.start));
    }
    let location: Option<Vec<String>> = prefix.first().map(|first| {
        let last = prefix.last().expect("non-empty");
        words[first.start..=last.end].to_vec()
    });

    let assertion = ClinicalAssertion::new(&pathology, severity.as_deref(), location.as_deref());
    debug_assert_eq!(assertion.raw_text, normalized);
    Ok(assertion)
}

/// Splits a location token sequence into anatomy terms, or `None` if some
/// word is not part of an anatomy term.
fn location_phrases(tokens: &[String], lex: &Lexicon) -> Option<Vec<(usize, usize)>> {
    segment(tokens, &vec![false; tokens.len()], lex)
        .into_iter()
        .map(|u| (u.class == Some(TermClass::Anatomy)).then_some((u.start, u.end)))
        .collect()
}

/// Ground-truth graph for a prompt: the pathology as an `OBS-DP` entity, the
/// severity as an `OBS-DP` entity that modifies it, and one `ANAT-DP` entity
/// per anatomy term of the location, each a `located_at` target of the
/// pathology. Word indices follow `raw_text`.
pub fn assertion_to_graph(a: &ClinicalAssertion, lex: &Lexicon) -> EntityGraph {
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    let mut pos = 0;
    let severity_ix = a.severity.as_ref().map(|s| {
        let n = s.split_whitespace().count();
        entities.push(Entity {
            tokens: s.clone(),
            label: EntityLabel::ObsPresent,
            start_ix: pos,
            end_ix: pos + n - 1,
        });
        pos += n;
        entities.len() - 1
    });
    let mut anatomy_ixs = Vec::new();
    if let Some(loc) = &a.location {
        let phrases = location_phrases(loc, lex)
            .unwrap_or_else(|| (0..loc.len()).map(|i| (i, i)).collect());
        for (start, end) in phrases {
            anatomy_ixs.push(entities.len());
            entities.push(Entity {
                tokens: loc[start..=end].join(" "),
                label: EntityLabel::AnatPresent,
                start_ix: pos + start,
                end_ix: pos + end,
            });
        }
        pos += loc.len();
    }
    let n = a.pathology.split_whitespace().count();
    let pathology_ix = entities.len();
    entities.push(Entity {
        tokens: a.pathology.clone(),
        label: EntityLabel::ObsPresent,
        start_ix: pos,
        end_ix: pos + n - 1,
    });
    if let Some(head) = severity_ix {
        relations.push(Relation { head, tail: pathology_ix, label: RelationLabel::Modify });
    }
    for tail in anatomy_ixs {
        relations.push(Relation { head: pathology_ix, tail, label: RelationLabel::LocatedAt });
    }
    EntityGraph::new(a.raw_text.clone(), entities, relations)
        .expect("slot-wise construction yields disjoint spans")
}
