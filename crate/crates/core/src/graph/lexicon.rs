use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Plural forms that do not reduce to their lemma by dropping a trailing `s`.
const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("opacities", "opacity"),
    ("lucencies", "lucency"),
    ("atelectases", "atelectasis"),
];

/// Terms the rule-based extractor and the prompt grammar know about.
///
/// All terms are lowercase; multi-word terms are stored space-joined.
/// `observations` and `anatomy` map a surface term to its canonical form,
/// and every canonical form maps to itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub observations: BTreeMap<String, String>,
    pub modifiers: BTreeSet<String>,
    pub anatomy: BTreeMap<String, String>,
    pub negation_cues: BTreeSet<String>,
    pub uncertainty_cues: BTreeSet<String>,
    /// Applied by [`Lexicon::normalize_term`] only when non-empty.
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
}

/// Which lexicon group a matched phrase belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermClass {
    Observation,
    Modifier,
    Anatomy,
    Negation,
    Uncertainty,
}

impl Lexicon {
    /// The shipped lexicon: the four template pathologies plus common chest
    /// X-ray findings, severity/size terms, laterality and lobe anatomy, and
    /// the usual negation and hedging cues. Synonyms are empty.
    pub fn builtin() -> Self {
        fn identity(terms: &[&str]) -> BTreeMap<String, String> {
            terms
                .iter()
                .map(|t| (t.to_string(), t.to_string()))
                .collect()
        }
        fn set(terms: &[&str]) -> BTreeSet<String> {
            terms.iter().map(|t| t.to_string()).collect()
        }
        Lexicon {
            observations: identity(&[
                "cardiomegaly",
                "pleural effusion",
                "effusion",
                "opacification",
                "opacity",
                "pneumothorax",
                "atelectasis",
                "consolidation",
                "edema",
            ]),
            modifiers: set(&["mild", "moderate", "severe", "small", "large", "trace"]),
            anatomy: identity(&[
                "left",
                "right",
                "upper lobe",
                "lower lobe",
                "apical",
                "basal",
                "bilateral",
            ]),
            negation_cues: set(&["no", "without", "absent", "clear of", "negative for"]),
            uncertainty_cues: set(&["possible", "may represent", "cannot exclude"]),
            synonyms: BTreeMap::new(),
        }
    }

    /// Synonym table enabled by the `synonyms` run option.
    pub fn default_synonyms() -> BTreeMap<String, String> {
        [
            ("opacity", "opacification"),
            ("effusion", "pleural effusion"),
            ("enlarged heart", "cardiomegaly"),
            ("enlarged cardiac silhouette", "cardiomegaly"),
            ("pulmonary edema", "edema"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    /// Builtin lexicon with [`Lexicon::default_synonyms`] switched on.
    pub fn builtin_with_synonyms() -> Self {
        let mut lex = Self::builtin();
        lex.synonyms = Self::default_synonyms();
        lex
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, GraphError> {
        let lex: Lexicon =
            serde_json::from_slice(bytes).map_err(|e| GraphError::Schema(e.to_string()))?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let bytes = std::fs::read(path)
            .map_err(|e| GraphError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// Checks casing, canonical fixed points and that the entity-bearing
    /// groups and cue groups do not share a term.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: String| Err(GraphError::InvalidLexicon(msg));
        let all_terms = self
            .observations
            .iter()
            .chain(self.anatomy.iter())
            .chain(self.synonyms.iter())
            .flat_map(|(k, v)| [k, v])
            .chain(self.modifiers.iter())
            .chain(self.negation_cues.iter())
            .chain(self.uncertainty_cues.iter());
        for term in all_terms {
            if term.trim().is_empty() {
                return bad("empty term".into());
            }
            if term != &term.to_lowercase() {
                return bad(format!("term {term:?} is not lowercase"));
            }
            if term.split_whitespace().collect::<Vec<_>>().join(" ") != *term {
                return bad(format!("term {term:?} is not space-joined"));
            }
        }
        for (group, map) in [("observations", &self.observations), ("anatomy", &self.anatomy)] {
            for (term, canon) in map {
                if map.get(canon) != Some(canon) {
                    return bad(format!(
                        "{group}: canonical form {canon:?} of {term:?} does not map to itself"
                    ));
                }
            }
        }
        for (term, target) in &self.synonyms {
            if term != target && self.synonyms.get(target).is_some_and(|t| t != target) {
                return bad(format!("synonym chain through {target:?}"));
            }
        }
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let groups: [(&str, Box<dyn Iterator<Item = &String>>); 5] = [
            ("observations", Box::new(self.observations.keys())),
            ("modifiers", Box::new(self.modifiers.iter())),
            ("anatomy", Box::new(self.anatomy.keys())),
            ("negation_cues", Box::new(self.negation_cues.iter())),
            ("uncertainty_cues", Box::new(self.uncertainty_cues.iter())),
        ];
        for (group, terms) in groups {
            for term in terms {
                if let Some(other) = seen.insert(term.as_str(), group) {
                    return bad(format!("{term:?} appears in both {other} and {group}"));
                }
            }
        }
        Ok(())
    }

    /// Every single word that occurs in some lexicon term.
    fn vocabulary_words(&self) -> BTreeSet<&str> {
        self.observations
            .iter()
            .chain(self.anatomy.iter())
            .chain(self.synonyms.iter())
            .flat_map(|(k, v)| [k.as_str(), v.as_str()])
            .chain(self.modifiers.iter().map(String::as_str))
            .chain(self.negation_cues.iter().map(String::as_str))
            .chain(self.uncertainty_cues.iter().map(String::as_str))
            .flat_map(str::split_whitespace)
            .collect()
    }

    /// Lowercases one word, strips punctuation, and reduces known plural
    /// forms to their lemma. Returns an empty string for pure punctuation.
    pub fn normalize_word(&self, raw: &str) -> String {
        let word: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric() || *c == '-')
            .flat_map(char::to_lowercase)
            .collect();
        let word = word.trim_matches('-').to_string();
        if let Some((_, lemma)) = IRREGULAR_PLURALS.iter().find(|(p, _)| *p == word) {
            return lemma.to_string();
        }
        if word.len() > 3 && word.ends_with('s') {
            let vocab = self.vocabulary_words();
            if !vocab.contains(word.as_str()) && vocab.contains(&word[..word.len() - 1]) {
                return word[..word.len() - 1].to_string();
            }
        }
        word
    }

    /// Normalizes a (possibly multi-word) term to the form compared by the
    /// score: per-word normalization, then the synonym table when it is
    /// non-empty, then the canonical form of observations and anatomy.
    pub fn normalize_term(&self, raw: &str) -> String {
        let mut term = raw
            .split_whitespace()
            .map(|w| self.normalize_word(w))
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if let Some(target) = self.synonyms.get(&term) {
            term = target.clone();
        }
        if let Some(canon) = self.observations.get(&term).or_else(|| self.anatomy.get(&term)) {
            term = canon.clone();
        }
        term
    }

    /// All terms with their class, as word sequences, for phrase matching.
    pub(crate) fn phrases(&self) -> Vec<(Vec<String>, TermClass)> {
        let split = |t: &String| t.split_whitespace().map(str::to_string).collect();
        let mut out: Vec<(Vec<String>, TermClass)> = Vec::new();
        out.extend(self.observations.keys().map(|t| (split(t), TermClass::Observation)));
        out.extend(self.modifiers.iter().map(|t| (split(t), TermClass::Modifier)));
        out.extend(self.anatomy.keys().map(|t| (split(t), TermClass::Anatomy)));
        out.extend(self.negation_cues.iter().map(|t| (split(t), TermClass::Negation)));
        out.extend(self.uncertainty_cues.iter().map(|t| (split(t), TermClass::Uncertainty)));
        if !self.synonyms.is_empty() {
            // Synonym surface forms are recognized with the class of their target.
            for (term, target) in &self.synonyms {
                let class = if self.observations.contains_key(target) {
                    TermClass::Observation
                } else if self.anatomy.contains_key(target) {
                    TermClass::Anatomy
                } else if self.modifiers.contains(target) {
                    TermClass::Modifier
                } else {
                    continue;
                };
                let words = split(term);
                if !out.iter().any(|(w, _)| *w == words) {
                    out.push((words, class));
                }
            }
        }
        out
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

/// One unit of a longest-match segmentation: either a lexicon phrase or a
/// single unmatched word. `start..=end` are word indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Unit {
    pub start: usize,
    pub end: usize,
    pub class: Option<TermClass>,
}

/// Greedy longest-match segmentation of `words`. A phrase never crosses a
/// position where `breaks[i]` is true (a clause boundary after word `i`).
pub(crate) fn segment(words: &[String], breaks: &[bool], lex: &Lexicon) -> Vec<Unit> {
    let phrases = lex.phrases();
    let mut units = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let mut best: Option<(usize, TermClass)> = None;
        for (phrase, class) in &phrases {
            let n = phrase.len();
            if n == 0 || i + n > words.len() || best.is_some_and(|(len, _)| len >= n) {
                continue;
            }
            if breaks[i..i + n - 1].iter().any(|b| *b) {
                continue;
            }
            if words[i..i + n].iter().zip(phrase).all(|(w, p)| w == p) {
                best = Some((n, *class));
            }
        }
        match best {
            Some((n, class)) => {
                units.push(Unit { start: i, end: i + n - 1, class: Some(class) });
                i += n;
            }
            None => {
                units.push(Unit { start: i, end: i, class: None });
                i += 1;
            }
        }
    }
    units
}
