//! Expert ratings and metric validation statistics.
//!
//! Ratings are on a 0/1/2 scale (no / some / strong alignment). Metrics are
//! validated against them with Kendall's τ, per image, and by comparing
//! per-finding rank orderings.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ScoreRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("all values tied in one variable")]
    DegenerateInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("rating refers to unknown sample {0:?}")]
    UnknownSampleId(String),
    #[error("finding sets differ: {0:?} vs {1:?}")]
    FindingSetMismatch(Vec<String>, Vec<String>),
    #[error("invalid rating: {0}")]
    InvalidRating(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauVariant {
    A,
    #[default]
    B,
}

/// Kendall's τ_b (tie-corrected).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, AgreementError> {
    kendall_tau(x, y, TauVariant::B)
}

/// Kendall's τ in O(n log n): pairs are sorted by `(x, y)` and discordant
/// pairs are counted as merge-sort exchanges on `y`.
///
/// τ_b = (C − D) / √((n₀ − n₁)(n₀ − n₂)), τ_a = (C − D) / n₀, where n₁ and
/// n₂ count pairs tied in x and in y.
pub fn kendall_tau(x: &[f64], y: &[f64], variant: TauVariant) -> Result<f64, AgreementError> {
    if x.len() != y.len() {
        return Err(AgreementError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(AgreementError::TooShort(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AgreementError::NonFinite);
    }
    let cmp = |a: f64, b: f64| a.partial_cmp(&b).expect("finite");
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));

    let tied_pairs = |runs: &mut dyn Iterator<Item = u64>| runs.map(|t| t * (t - 1) / 2).sum::<u64>();
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let x_ties = tied_pairs(&mut run_lengths(&pairs, |a, b| a.0 == b.0));
    let joint_ties = tied_pairs(&mut run_lengths(&pairs, |a, b| a == b));

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);
    let y_ties = tied_pairs(&mut run_lengths(&ys, |a, b| a == b));

    let numerator =
        n0 as i128 - x_ties as i128 - y_ties as i128 + joint_ties as i128 - 2 * discordant as i128;
    if x_ties == n0 || y_ties == n0 {
        return Err(AgreementError::DegenerateInput);
    }
    let tau = match variant {
        TauVariant::A => numerator as f64 / n0 as f64,
        TauVariant::B => {
            numerator as f64 / (((n0 - x_ties) as f64) * ((n0 - y_ties) as f64)).sqrt()
        }
    };
    Ok(tau.clamp(-1.0, 1.0))
}

fn run_lengths<'a, T>(
    items: &'a [T],
    same: impl Fn(&T, &T) -> bool + 'a,
) -> impl Iterator<Item = u64> + 'a {
    let mut i = 0;
    std::iter::from_fn(move || {
        if i >= items.len() {
            return None;
        }
        let start = i;
        i += 1;
        while i < items.len() && same(&items[start], &items[i]) {
            i += 1;
        }
        Some((i - start) as u64)
    })
}

/// Sorts `v` ascending, returning the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// One expert judgement of prompt-image alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRating")]
pub struct ExpertRating {
    pub sample_id: String,
    pub score: u8,
    pub rater_id: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Deserialize)]
struct RawRating {
    sample_id: String,
    score: i64,
    rater_id: String,
    timestamp: DateTime<Utc>,
}

impl TryFrom<RawRating> for ExpertRating {
    type Error = AgreementError;

    fn try_from(raw: RawRating) -> Result<Self, Self::Error> {
        ExpertRating::new(raw.sample_id, raw.score, raw.rater_id, raw.timestamp)
    }
}

impl ExpertRating {
    pub fn new(
        sample_id: impl Into<String>,
        score: i64,
        rater_id: impl Into<String>,
        timestamp: DateTime<Utc>,
    ) -> Result<Self, AgreementError> {
        let sample_id = sample_id.into();
        let rater_id = rater_id.into();
        if !(0..=2).contains(&score) {
            return Err(AgreementError::InvalidRating(format!("score {score} not in {{0, 1, 2}}")));
        }
        if sample_id.is_empty() {
            return Err(AgreementError::InvalidRating("empty sample_id".into()));
        }
        if rater_id.is_empty() {
            return Err(AgreementError::InvalidRating("empty rater_id".into()));
        }
        Ok(ExpertRating { sample_id, score: score as u8, rater_id, timestamp })
    }
}

/// Result of reading a JSONL rating log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingLog {
    /// Every complete line, in file order.
    pub ratings: Vec<ExpertRating>,
    /// The file ended in an unterminated line that did not parse; it was
    /// skipped.
    pub truncated_tail: bool,
}

impl RatingLog {
    /// Latest rating per `(sample_id, rater_id)`; later lines win ties.
    pub fn latest(&self) -> Vec<ExpertRating> {
        latest_ratings(&self.ratings)
    }
}

pub fn latest_ratings(ratings: &[ExpertRating]) -> Vec<ExpertRating> {
    let mut latest: BTreeMap<(&str, &str), &ExpertRating> = BTreeMap::new();
    for r in ratings {
        let key = (r.sample_id.as_str(), r.rater_id.as_str());
        if latest.get(&key).is_none_or(|prev| prev.timestamp <= r.timestamp) {
            latest.insert(key, r);
        }
    }
    let mut out: Vec<ExpertRating> = latest.into_values().cloned().collect();
    out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.sample_id.cmp(&b.sample_id)));
    out
}

/// Reads a JSONL rating log. A malformed final line without a trailing
/// newline is treated as a torn write and skipped; any other malformed
/// line is an error.
pub fn read_rating_log(bytes: &[u8]) -> Result<RatingLog, AgreementError> {
    let mut log = RatingLog::default();
    let ends_cleanly = bytes.is_empty() || bytes.ends_with(b"\n");
    let lines: Vec<_> = bytes.lines().collect::<Result<_, _>>().map_err(|e| {
        AgreementError::InvalidRating(format!("rating log is not UTF-8: {e}"))
    })?;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ExpertRating>(line) {
            Ok(r) => log.ratings.push(r),
            Err(_) if i == last && !ends_cleanly => log.truncated_tail = true,
            Err(e) => {
                return Err(AgreementError::InvalidRating(format!("line {}: {e}", i + 1)));
            }
        }
    }
    Ok(log)
}

pub fn load_ratings(path: &Path) -> Result<RatingLog, AgreementError> {
    let bytes = std::fs::read(path)
        .map_err(|e| AgreementError::InvalidRating(format!("{}: {e}", path.display())))?;
    read_rating_log(&bytes)
}

/// `finding × metric` summary cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub finding: String,
    pub metric_name: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

pub const METRIC_F1: &str = "radgraph_f1";
pub const METRIC_ALIGNMENT: &str = "alignment";
pub const METRIC_EXPERT: &str = "expert";

/// Mean expert score per sample: latest rating per rater, averaged over
/// raters. Ratings for samples not in `records` are an error.
pub fn expert_means(
    records: &[ScoreRecord],
    ratings: &[ExpertRating],
) -> Result<HashMap<String, f64>, AgreementError> {
    let known: std::collections::HashSet<&str> =
        records.iter().map(|r| r.sample_id.as_str()).collect();
    let mut sums: HashMap<String, (f64, usize)> = HashMap::new();
    for r in latest_ratings(ratings) {
        if !known.contains(r.sample_id.as_str()) {
            return Err(AgreementError::UnknownSampleId(r.sample_id));
        }
        let e = sums.entry(r.sample_id).or_default();
        e.0 += r.score as f64;
        e.1 += 1;
    }
    let mut means: HashMap<String, f64> =
        sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();
    for rec in records {
        if let Some(m) = rec.expert_mean {
            means.entry(rec.sample_id.clone()).or_insert(m);
        }
    }
    Ok(means)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    crate::metrics::mean_std_of(values)
}

/// Per `(finding, metric)` mean and population std of RadGraph-F1,
/// alignment and expert score. Findings keep their first-seen order.
pub fn aggregate_by_finding(
    records: &[ScoreRecord],
    ratings: &[ExpertRating],
) -> Result<Vec<AggregateRow>, AgreementError> {
    let experts = expert_means(records, ratings)?;
    let mut findings: Vec<&str> = Vec::new();
    for r in records {
        if !findings.contains(&r.finding.as_str()) {
            findings.push(&r.finding);
        }
    }
    type Extractor<'a> = Box<dyn Fn(&ScoreRecord) -> Option<f64> + 'a>;
    let extractors: [(&str, Extractor); 3] = [
        (METRIC_ALIGNMENT, Box::new(|r| r.alignment)),
        (METRIC_F1, Box::new(|r| r.f1_breakdown.map(|f| f.f1))),
        (METRIC_EXPERT, Box::new(|r| experts.get(&r.sample_id).copied())),
    ];
    let mut rows = Vec::new();
    for finding in findings {
        for (metric, get) in &extractors {
            let values: Vec<f64> =
                records.iter().filter(|r| r.finding == finding).filter_map(get).collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&values);
            rows.push(AggregateRow {
                finding: finding.to_string(),
                metric_name: metric.to_string(),
                mean,
                std,
                n: values.len(),
            });
        }
    }
    Ok(rows)
}

/// Whether two per-finding tables rank the findings identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConsistency {
    pub consistent: bool,
    pub tau: f64,
}

/// Compares the finding orderings (by descending mean) of two single-metric
/// tables and reports τ_b over the finding-level means.
pub fn rank_consistency(
    rows_a: &[AggregateRow],
    rows_b: &[AggregateRow],
) -> Result<RankConsistency, AgreementError> {
    let by_finding = |rows: &[AggregateRow]| -> BTreeMap<String, f64> {
        rows.iter().map(|r| (r.finding.clone(), r.mean)).collect()
    };
    let (a, b) = (by_finding(rows_a), by_finding(rows_b));
    if !a.keys().eq(b.keys()) || a.len() != rows_a.len() || b.len() != rows_b.len() {
        return Err(AgreementError::FindingSetMismatch(
            rows_a.iter().map(|r| r.finding.clone()).collect(),
            rows_b.iter().map(|r| r.finding.clone()).collect(),
        ));
    }
    let order = |m: &BTreeMap<String, f64>| -> Vec<String> {
        let mut v: Vec<(&String, f64)> = m.iter().map(|(k, v)| (k, *v)).collect();
        v.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(y.0)));
        v.into_iter().map(|(k, _)| k.clone()).collect()
    };
    let xs: Vec<f64> = a.values().copied().collect();
    let ys: Vec<f64> = b.values().copied().collect();
    Ok(RankConsistency { consistent: order(&a) == order(&b), tau: kendall_tau_b(&xs, &ys)? })
}

/// Per-image τ between a metric and the expert means, over samples that
/// have both. `None` when fewer than two such samples exist.
pub fn per_sample_tau(
    records: &[ScoreRecord],
    experts: &HashMap<String, f64>,
    metric: impl Fn(&ScoreRecord) -> Option<f64>,
    variant: TauVariant,
) -> Option<Result<f64, AgreementError>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((metric(r)?, *experts.get(&r.sample_id)?)))
        .unzip();
    (xs.len() >= 2).then(|| kendall_tau(&xs, &ys, variant))
}
