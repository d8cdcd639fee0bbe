use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agreement::TauVariant;
use crate::graph::Lexicon;
use crate::prompt::{parse_prompt, ClinicalAssertion};

/// How images are grouped before pairwise MS-SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsSsimGrouping {
    #[default]
    Finding,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub filter_grounded: bool,
    pub synonyms: bool,
    pub tau_variant: TauVariant,
    /// Hide the finding label from rating tasks.
    pub blind: bool,
    pub msssim_grouping: MsSsimGrouping,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            filter_grounded: true,
            synonyms: false,
            tau_variant: TauVariant::B,
            blind: false,
            msssim_grouping: MsSsimGrouping::Finding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub id: String,
    pub prompt: String,
    pub finding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_graph_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    /// `file` or `file#row`, see [`crate::metrics::load_embedding_ref`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub img_embedding_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txt_embedding_ref: Option<String>,
}

/// A validated evaluation manifest. Relative paths resolve against the
/// directory of the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub samples: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_embeddings_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings_path: Option<PathBuf>,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(skip)]
    base_dir: PathBuf,
    #[serde(skip)]
    lexicon: Lexicon,
    #[serde(skip)]
    assertions: Vec<ClinicalAssertion>,
}

impl RunManifest {
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// The lexicon in effect, synonyms included when enabled.
    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Parsed prompt of each sample, parallel to `samples`.
    pub fn assertions(&self) -> &[ClinicalAssertion] {
        &self.assertions
    }

    pub fn sample(&self, id: &str) -> Option<(usize, &SampleSpec)> {
        self.samples.iter().enumerate().find(|(_, s)| s.id == id)
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&bytes, &base)
}

/// Parses and validates a manifest: unique ids, at most one of
/// `report_path`/`pred_graph_path`, prompts inside the vocabulary and
/// findings equal to the parsed pathology.
pub fn parse_manifest(bytes: &[u8], base_dir: &Path) -> Result<RunManifest, HarnessError> {
    let mut m: RunManifest =
        serde_json::from_slice(bytes).map_err(|e| HarnessError::Schema(e.to_string()))?;
    m.base_dir = base_dir.to_path_buf();

    let mut lexicon = match &m.lexicon_path {
        Some(p) => Lexicon::load(&m.resolve(p))?,
        None => Lexicon::builtin(),
    };
    if m.options.synonyms && lexicon.synonyms.is_empty() {
        lexicon.synonyms = Lexicon::default_synonyms();
        lexicon.validate()?;
    } else if !m.options.synonyms {
        lexicon.synonyms.clear();
    }

    let mut seen = HashSet::new();
    let mut assertions = Vec::with_capacity(m.samples.len());
    for s in &mut m.samples {
        if s.id.is_empty() {
            return Err(HarnessError::Schema("empty sample id".into()));
        }
        if !seen.insert(s.id.clone()) {
            return Err(HarnessError::DuplicateId(s.id.clone()));
        }
        if s.report_path.is_some() && s.pred_graph_path.is_some() {
            return Err(HarnessError::Schema(format!(
                "sample {:?}: report_path and pred_graph_path are mutually exclusive",
                s.id
            )));
        }
        let assertion = parse_prompt(&s.prompt, &lexicon)
            .map_err(|source| HarnessError::Prompt { id: s.id.clone(), source })?;
        s.finding = s.finding.trim().to_lowercase();
        if s.finding != assertion.pathology {
            return Err(HarnessError::Schema(format!(
                "sample {:?}: finding {:?} does not match prompt pathology {:?}",
                s.id, s.finding, assertion.pathology
            )));
        }
        assertions.push(assertion);
    }
    m.lexicon = lexicon;
    m.assertions = assertions;
    Ok(m)
}
