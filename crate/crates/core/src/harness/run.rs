use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HarnessError, MsSsimGrouping, RunManifest, SampleSpec, ScoreAudit, ScoreRecord};
use crate::agreement::{
    aggregate_by_finding, expert_means, load_ratings, per_sample_tau, rank_consistency,
    AggregateRow, RankConsistency, TauVariant, METRIC_ALIGNMENT, METRIC_EXPERT, METRIC_F1,
};
use crate::graph::radgraph::parse_radgraph_json;
use crate::metrics::{
    cosine_alignment, frechet_distance, gaussian_stats, load_embedding_ref, load_embeddings,
    load_image, mean_std_of, pairwise_scores, EmbeddingVec, GrayImage,
};
use crate::prompt::ClinicalAssertion;
use crate::score::{score_sample, GroundedReport, Prediction};

pub const METRIC_FID: &str = "fid";
pub const METRIC_MS_SSIM: &str = "ms_ssim";

/// A failure confined to one sample (or one finding, for group metrics).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleError {
    /// Sample id, or `finding:<name>` for per-finding metrics.
    pub subject: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub samples: usize,
    /// Samples with at least one metric.
    pub scored: usize,
    /// Samples where some stage failed.
    pub failed: usize,
    /// Samples with no scoreable inputs.
    pub skipped: usize,
    pub errors: Vec<SampleError>,
    /// The rating log ended in a torn line, which was ignored.
    #[serde(default)]
    pub ratings_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub records: Vec<ScoreRecord>,
    pub aggregates: Vec<AggregateRow>,
    /// Per-image τ against the expert means, by metric. Absent without
    /// ratings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<BTreeMap<String, f64>>,
    pub tau_variant: TauVariant,
    /// Finding-order agreement with the expert column, by metric.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rank_consistency: BTreeMap<String, RankConsistency>,
    pub summary: RunSummary,
}

impl RunResults {
    pub fn is_partial(&self) -> bool {
        !self.summary.errors.is_empty()
    }

    pub fn rows_for(&self, metric: &str) -> Vec<AggregateRow> {
        self.aggregates.iter().filter(|r| r.metric_name == metric).cloned().collect()
    }
}

struct SampleOutcome {
    record: ScoreRecord,
    errors: Vec<SampleError>,
    image: Option<GrayImage>,
    img_embedding: Option<EmbeddingVec>,
}

fn score_one(m: &RunManifest, spec: &SampleSpec, assertion: &ClinicalAssertion) -> SampleOutcome {
    let mut record = ScoreRecord::new(&spec.id, &spec.finding, &assertion.raw_text);
    let mut errors = Vec::new();
    let mut fail = |stage: &str, message: String| {
        errors.push(SampleError { subject: spec.id.clone(), stage: stage.into(), message });
    };
    let base = m.base_dir();
    let lex = m.lexicon();

    let mut note = |role: &str, value: String| {
        record.provenance.insert(role.into(), value);
    };
    if let Some(p) = &spec.report_path {
        note("report_path", p.display().to_string());
    }
    if let Some(p) = &spec.pred_graph_path {
        note("pred_graph_path", p.display().to_string());
    }
    if let Some(p) = &spec.image_path {
        note("image_path", p.display().to_string());
    }
    if let Some(r) = &spec.img_embedding_ref {
        note("img_embedding_ref", r.clone());
    }
    if let Some(r) = &spec.txt_embedding_ref {
        note("txt_embedding_ref", r.clone());
    }

    let scored = if let Some(p) = &spec.report_path {
        Some(GroundedReport::load(&m.resolve(p)).map_err(|e| e.to_string()).and_then(|report| {
            let prediction = Prediction::Report { report: &report, filter: m.options.filter_grounded };
            score_sample(assertion, prediction, lex).map_err(|e| e.to_string())
        }))
    } else if let Some(p) = &spec.pred_graph_path {
        let path = m.resolve(p);
        Some(
            std::fs::read(&path)
                .map_err(|e| format!("{}: {e}", path.display()))
                .and_then(|b| parse_radgraph_json(&b).map_err(|e| e.to_string()))
                .and_then(|g| score_sample(assertion, Prediction::Graph(&g), lex).map_err(|e| e.to_string())),
        )
    } else {
        None
    };
    match scored {
        Some(Ok(s)) => {
            record.f1_breakdown = Some(s.f1);
            record.audit = Some(ScoreAudit {
                retained_sentences: s.retained_sentences,
                pred_graph: s.pred_graph,
                gt_graph: s.gt_graph,
            });
        }
        Some(Err(e)) => fail("radgraph_f1", e),
        None => {}
    }

    let img_embedding = spec.img_embedding_ref.as_ref().and_then(|r| {
        load_embedding_ref(r, base).map_err(|e| fail("img_embedding", e.to_string())).ok()
    });
    if let (Some(img), Some(txt_ref)) = (&img_embedding, &spec.txt_embedding_ref) {
        match load_embedding_ref(txt_ref, base).and_then(|txt| cosine_alignment(img, &txt)) {
            Ok(a) => record.alignment = Some(a),
            Err(e) => fail("alignment", e.to_string()),
        }
    }

    let image = spec.image_path.as_ref().and_then(|p| {
        load_image(&m.resolve(p)).map_err(|e| fail("image", e.to_string())).ok()
    });

    if let Some(first) = errors.first() {
        record
            .provenance
            .insert("error".into(), format!("{}: {}", first.stage, first.message));
    }
    SampleOutcome { record, errors, image, img_embedding }
}

fn findings_in_order(m: &RunManifest) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in &m.samples {
        if !out.contains(&s.finding) {
            out.push(s.finding.clone());
        }
    }
    out
}

/// Scores every sample, then aggregates per finding: RadGraph-F1,
/// alignment and expert means, pairwise MS-SSIM over the images, and the
/// Fréchet distance of each finding's image embeddings to the reference
/// set. Per-image τ is computed when ratings are available.
///
/// Sample failures are recorded and never abort the run; only manifest-level
/// problems (unreadable ratings, ratings for unknown samples) are errors.
pub fn run_evaluation(m: &RunManifest) -> Result<RunResults, HarnessError> {
    let outcomes: Vec<SampleOutcome> = m
        .samples
        .par_iter()
        .zip(m.assertions().par_iter())
        .map(|(spec, a)| score_one(m, spec, a))
        .collect();

    let mut summary = RunSummary { samples: m.samples.len(), ..Default::default() };
    let mut records: Vec<ScoreRecord> = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        summary.errors.extend(o.errors.iter().cloned());
        records.push(o.record.clone());
    }

    let ratings = match &m.ratings_path {
        Some(p) => {
            let log = load_ratings(&m.resolve(p))?;
            summary.ratings_truncated = log.truncated_tail;
            log.latest()
        }
        None => Vec::new(),
    };
    let experts = expert_means(&records, &ratings)?;
    for r in &mut records {
        if let Some(e) = experts.get(&r.sample_id) {
            r.expert_mean = Some(*e);
        }
    }

    let findings = findings_in_order(m);
    let mut aggregates = Vec::new();
    let per_sample = aggregate_by_finding(&records, &[])?;
    for finding in &findings {
        if let Some(row) = fid_row(m, finding, &outcomes, &mut summary.errors) {
            aggregates.push(row);
        }
        if let Some(row) = ms_ssim_row(m, finding, &outcomes, &mut summary.errors) {
            aggregates.push(row);
        }
        aggregates.extend(per_sample.iter().filter(|r| &r.finding == finding).cloned());
    }

    let variant = m.options.tau_variant;
    let mut tau = None;
    let mut consistency = BTreeMap::new();
    if !experts.is_empty() {
        let mut taus = BTreeMap::new();
        type Getter = fn(&ScoreRecord) -> Option<f64>;
        let metrics: [(&str, Getter); 2] = [
            (METRIC_F1, |r| r.f1_breakdown.map(|f| f.f1)),
            (METRIC_ALIGNMENT, |r| r.alignment),
        ];
        for (name, get) in metrics {
            match per_sample_tau(&records, &experts, get, variant) {
                Some(Ok(t)) => {
                    taus.insert(name.to_string(), t);
                }
                Some(Err(e)) => summary.errors.push(SampleError {
                    subject: "run".into(),
                    stage: format!("tau:{name}"),
                    message: e.to_string(),
                }),
                None => {}
            }
        }
        tau = Some(taus);

        let expert_rows: Vec<AggregateRow> =
            aggregates.iter().filter(|r| r.metric_name == METRIC_EXPERT).cloned().collect();
        for name in [METRIC_F1, METRIC_ALIGNMENT] {
            let rows: Vec<AggregateRow> =
                aggregates.iter().filter(|r| r.metric_name == name).cloned().collect();
            if rows.len() < 2 || rows.len() != expert_rows.len() {
                continue;
            }
            if let Ok(rc) = rank_consistency(&rows, &expert_rows) {
                consistency.insert(name.to_string(), rc);
            }
        }
    }

    let failed: std::collections::HashSet<&str> = summary
        .errors
        .iter()
        .map(|e| e.subject.as_str())
        .collect();
    summary.failed = m.samples.iter().filter(|s| failed.contains(s.id.as_str())).count();
    records.retain(|r| r.has_metric() || r.error().is_some());
    summary.scored = records.iter().filter(|r| r.has_metric()).count();
    summary.skipped = summary.samples - records.len();

    Ok(RunResults {
        records,
        aggregates,
        tau,
        tau_variant: variant,
        rank_consistency: consistency,
        summary,
    })
}

fn fid_row(
    m: &RunManifest,
    finding: &str,
    outcomes: &[SampleOutcome],
    errors: &mut Vec<SampleError>,
) -> Option<AggregateRow> {
    let reference = m.reference_embeddings_path.as_ref()?;
    let synth: Vec<EmbeddingVec> = outcomes
        .iter()
        .filter(|o| o.record.finding == finding)
        .filter_map(|o| o.img_embedding.clone())
        .collect();
    if synth.is_empty() {
        return None;
    }
    let result = load_embeddings(&m.resolve(reference))
        .and_then(|real| gaussian_stats(&real))
        .and_then(|real| frechet_distance(&real, &gaussian_stats(&synth)?));
    match result {
        Ok(d) => Some(AggregateRow {
            finding: finding.to_string(),
            metric_name: METRIC_FID.into(),
            mean: d,
            std: 0.0,
            n: synth.len(),
        }),
        Err(e) => {
            errors.push(SampleError {
                subject: format!("finding:{finding}"),
                stage: METRIC_FID.into(),
                message: e.to_string(),
            });
            None
        }
    }
}

fn ms_ssim_row(
    m: &RunManifest,
    finding: &str,
    outcomes: &[SampleOutcome],
    errors: &mut Vec<SampleError>,
) -> Option<AggregateRow> {
    let mut groups: Vec<(String, Vec<GrayImage>)> = Vec::new();
    for o in outcomes.iter().filter(|o| o.record.finding == finding) {
        let Some(img) = &o.image else { continue };
        let key = match m.options.msssim_grouping {
            MsSsimGrouping::Finding => finding.to_string(),
            MsSsimGrouping::Prompt => o.record.prompt.clone(),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, imgs)) => imgs.push(img.clone()),
            None => groups.push((key, vec![img.clone()])),
        }
    }
    let mut scores = Vec::new();
    for (_, imgs) in &groups {
        match pairwise_scores(imgs) {
            Ok(s) => scores.extend(s),
            Err(e) => {
                errors.push(SampleError {
                    subject: format!("finding:{finding}"),
                    stage: METRIC_MS_SSIM.into(),
                    message: e.to_string(),
                });
                return None;
            }
        }
    }
    if scores.is_empty() {
        return None;
    }
    let (mean, std) = mean_std_of(&scores);
    Some(AggregateRow {
        finding: finding.to_string(),
        metric_name: METRIC_MS_SSIM.into(),
        mean,
        std,
        n: scores.len(),
    })
}
