//! Clinical-semantic alignment scoring for text-conditioned medical image
//! generation.
//!
//! A prompt such as `"moderate right pleural effusion"` and the grounded
//! report produced for a synthetic image are both turned into
//! entity-relation graphs; the overlap of their tuple sets (RadGraph-F1) is
//! the alignment score. Baseline image metrics (MS-SSIM, Fréchet distance,
//! cosine alignment) and expert-agreement statistics (Kendall's τ) sit
//! alongside so a full comparison table can be produced from files on disk.
//!
//! Module map:
//!
//! - [`prompt`]: the constrained prompt template, its expansion and parsing.
//! - [`graph`]: entity-relation graphs, the lexicon, rule-based extraction
//!   and RadGraph-format JSON.
//! - [`score`]: grounded-sentence filtering and RadGraph-F1.
//! - [`metrics`]: MS-SSIM, Fréchet distance, cosine alignment.
//! - [`agreement`]: expert ratings, per-finding aggregation, Kendall's τ.
//! - [`harness`]: manifests, evaluation runs, report emission, rating logs.

pub mod agreement;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod prompt;
pub mod score;

pub use graph::{Entity, EntityGraph, EntityLabel, Lexicon, Relation, RelationLabel};
pub use prompt::ClinicalAssertion;
pub use score::{F1Breakdown, GroundedReport, TupleSet};
