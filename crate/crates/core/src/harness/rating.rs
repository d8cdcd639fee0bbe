//! State behind the expert rating service: the task queue per rater and
//! the append-only JSONL rating log.
//!
//! The log is the single source of truth. Every accepted rating is one
//! line; re-rating a sample appends another line and the latest one wins
//! when ratings are read back.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::canonical::canonical_json_compact;
use super::RunManifest;
use crate::agreement::{read_rating_log, ExpertRating};

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("score {0} is not one of 0, 1, 2")]
    InvalidScore(i64),
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("{0}")]
    Setup(String),
    #[error("rating log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub done: usize,
    pub total: usize,
}

/// Payload of `GET /api/tasks/next`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingTask {
    pub sample_id: String,
    pub prompt_text: String,
    /// Omitted in blind mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finding: Option<String>,
    pub image_url: String,
    pub position: Position,
}

/// Body of `POST /api/ratings`. The server stamps the time when
/// `timestamp` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub sample_id: String,
    pub score: i64,
    pub rater_id: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

/// Payload of `GET /api/progress`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    /// Lines in the rating log.
    pub logged: usize,
    /// Distinct samples rated, per rater.
    pub raters: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<usize>,
}

#[derive(Debug, Clone)]
struct TaskSample {
    id: String,
    prompt: String,
    finding: String,
    image_path: PathBuf,
}

/// Rating queue plus its log. Not internally synchronized; the service
/// holds it behind a single lock so all appends are serialized.
#[derive(Debug)]
pub struct RatingBook {
    samples: Vec<TaskSample>,
    blind: bool,
    log: File,
    ratings: Vec<ExpertRating>,
    repaired_tail: bool,
}

impl RatingBook {
    /// Opens (or creates) the rating log for a manifest whose samples all
    /// have an image. A torn final line left by a crash is cut off before
    /// new lines are appended.
    pub fn open(manifest: &RunManifest, log_path: &Path, blind: bool) -> Result<Self, RatingError> {
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for (s, a) in manifest.samples.iter().zip(manifest.assertions()) {
            let image = s.image_path.as_ref().ok_or_else(|| {
                RatingError::Setup(format!("sample {:?} has no image_path", s.id))
            })?;
            samples.push(TaskSample {
                id: s.id.clone(),
                prompt: a.raw_text.clone(),
                finding: s.finding.clone(),
                image_path: manifest.resolve(image),
            });
        }

        let repaired_tail = repair_tail(log_path)?;
        let bytes = match std::fs::read(log_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let parsed = read_rating_log(&bytes).map_err(|e| RatingError::Setup(e.to_string()))?;
        let log = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(RatingBook { samples, blind, log, ratings: parsed.ratings, repaired_tail })
    }

    /// Whether opening the log cut off a torn final line.
    pub fn repaired_tail(&self) -> bool {
        self.repaired_tail
    }

    pub fn ratings(&self) -> &[ExpertRating] {
        &self.ratings
    }

    fn rated_by(&self, rater: &str) -> BTreeSet<&str> {
        self.ratings
            .iter()
            .filter(|r| r.rater_id == rater)
            .map(|r| r.sample_id.as_str())
            .filter(|id| self.samples.iter().any(|s| s.id == *id))
            .collect()
    }

    /// First sample in manifest order the rater has not rated yet.
    pub fn next_task(&self, rater: &str) -> Option<RatingTask> {
        let done = self.rated_by(rater);
        let sample = self.samples.iter().find(|s| !done.contains(s.id.as_str()))?;
        Some(RatingTask {
            sample_id: sample.id.clone(),
            prompt_text: sample.prompt.clone(),
            finding: (!self.blind).then(|| sample.finding.clone()),
            image_url: format!("/api/image/{}", sample.id),
            position: Position { done: done.len(), total: self.samples.len() },
        })
    }

    pub fn progress(&self, rater: Option<&str>) -> Progress {
        let mut raters = BTreeMap::new();
        for r in &self.ratings {
            raters.entry(r.rater_id.clone()).or_insert(0);
        }
        for (name, count) in raters.iter_mut() {
            *count = self.rated_by(name).len();
        }
        Progress {
            total: self.samples.len(),
            logged: self.ratings.len(),
            raters,
            rater: rater.map(str::to_string),
            done: rater.map(|r| self.rated_by(r).len()),
        }
    }

    /// Validates and appends one rating; the line is flushed to disk before
    /// this returns.
    pub fn submit(&mut self, sub: RatingSubmission) -> Result<ExpertRating, RatingError> {
        if !(0..=2).contains(&sub.score) {
            return Err(RatingError::InvalidScore(sub.score));
        }
        if !self.samples.iter().any(|s| s.id == sub.sample_id) {
            return Err(RatingError::UnknownSample(sub.sample_id));
        }
        let rating = ExpertRating::new(
            sub.sample_id,
            sub.score,
            sub.rater_id,
            sub.timestamp.unwrap_or_else(Utc::now),
        )
        .map_err(|e| RatingError::Invalid(e.to_string()))?;
        let mut line = canonical_json_compact(&rating);
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.sync_data()?;
        self.ratings.push(rating.clone());
        Ok(rating)
    }

    /// Image file and content type for a sample.
    pub fn image(&self, sample_id: &str) -> Option<(&Path, &'static str)> {
        let s = self.samples.iter().find(|s| s.id == sample_id)?;
        let ext = s.image_path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let content_type = match ext.to_ascii_lowercase().as_str() {
            "png" => "image/png",
            "pgm" | "pnm" => "image/x-portable-graymap",
            "jpg" | "jpeg" => "image/jpeg",
            _ => "application/octet-stream",
        };
        Some((&s.image_path, content_type))
    }
}

/// Makes the log end in a newline: a parseable unterminated last line gets
/// its newline, anything else after the last newline is truncated. Returns
/// whether bytes were dropped.
fn repair_tail(path: &Path) -> Result<bool, std::io::Error> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(e),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(false);
    }
    let cut = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let tail = &bytes[cut..];
    if serde_json::from_slice::<ExpertRating>(tail).is_ok() {
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.write_all(b"\n")?;
        file.sync_data()?;
        Ok(false)
    } else {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(cut as u64)?;
        file.sync_data()?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_manifest;

    fn manifest(dir: &Path, blind: bool) -> RunManifest {
        let json = format!(
            r#"{{"samples":[
                {{"id":"s1","prompt":"severe cardiomegaly","finding":"cardiomegaly","image_path":"a.png"}},
                {{"id":"s2","prompt":"small left pneumothorax","finding":"pneumothorax","image_path":"b.pgm"}}],
               "options":{{"blind":{blind}}}}}"#
        );
        parse_manifest(json.as_bytes(), dir).unwrap()
    }

    fn submit(book: &mut RatingBook, id: &str, score: i64) -> Result<ExpertRating, RatingError> {
        book.submit(RatingSubmission {
            sample_id: id.into(),
            score,
            rater_id: "r1".into(),
            timestamp: None,
        })
    }

    #[test]
    fn task_loop_until_exhausted() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("r.jsonl");
        let mut book = RatingBook::open(&manifest(dir.path(), false), &log, false).unwrap();
        let t = book.next_task("r1").unwrap();
        assert_eq!(t.sample_id, "s1");
        assert_eq!(t.finding.as_deref(), Some("cardiomegaly"));
        assert_eq!(t.position, Position { done: 0, total: 2 });
        submit(&mut book, "s1", 2).unwrap();
        assert_eq!(book.next_task("r1").unwrap().sample_id, "s2");
        assert_eq!(book.next_task("r2").unwrap().sample_id, "s1");
        submit(&mut book, "s2", 0).unwrap();
        assert!(book.next_task("r1").is_none());
        assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);
        assert_eq!(book.progress(Some("r1")).done, Some(2));
    }

    #[test]
    fn blind_mode_hides_finding() {
        let dir = tempfile::tempdir().unwrap();
        let book = RatingBook::open(&manifest(dir.path(), true), &dir.path().join("r.jsonl"), true)
            .unwrap();
        let json = serde_json::to_value(book.next_task("r1").unwrap()).unwrap();
        assert!(json.get("finding").is_none());
    }

    #[test]
    fn rejects_bad_submissions() {
        let dir = tempfile::tempdir().unwrap();
        let mut book =
            RatingBook::open(&manifest(dir.path(), false), &dir.path().join("r.jsonl"), false).unwrap();
        assert!(matches!(submit(&mut book, "s1", 3), Err(RatingError::InvalidScore(3))));
        assert!(matches!(submit(&mut book, "zz", 1), Err(RatingError::UnknownSample(_))));
        assert!(book.ratings().is_empty());
    }

    #[test]
    fn duplicate_posts_are_all_logged() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("r.jsonl");
        let mut book = RatingBook::open(&manifest(dir.path(), false), &log, false).unwrap();
        submit(&mut book, "s1", 0).unwrap();
        submit(&mut book, "s1", 2).unwrap();
        assert_eq!(book.progress(None).logged, 2);
        assert_eq!(book.progress(Some("r1")).done, Some(1));
        let latest = read_rating_log(&std::fs::read(&log).unwrap()).unwrap().latest();
        assert_eq!(latest.len(), 1);
        assert_eq!(latest[0].score, 2);
    }

    #[test]
    fn torn_tail_is_cut_and_log_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("r.jsonl");
        {
            let mut book = RatingBook::open(&manifest(dir.path(), false), &log, false).unwrap();
            submit(&mut book, "s1", 1).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(br#"{"sample_id":"s2","sc"#).unwrap();
        drop(f);

        let mut book = RatingBook::open(&manifest(dir.path(), false), &log, false).unwrap();
        assert!(book.repaired_tail());
        assert_eq!(book.ratings().len(), 1);
        submit(&mut book, "s2", 2).unwrap();
        let reread = read_rating_log(&std::fs::read(&log).unwrap()).unwrap();
        assert_eq!(reread.ratings.len(), 2);
        assert!(!reread.truncated_tail);
    }

    #[test]
    fn requires_images() {
        let dir = tempfile::tempdir().unwrap();
        let m = parse_manifest(
            br#"{"samples":[{"id":"s1","prompt":"severe cardiomegaly","finding":"cardiomegaly"}]}"#,
            dir.path(),
        )
        .unwrap();
        assert!(matches!(
            RatingBook::open(&m, &dir.path().join("r.jsonl"), false),
            Err(RatingError::Setup(_))
        ));
    }

    #[test]
    fn image_content_types() {
        let dir = tempfile::tempdir().unwrap();
        let book =
            RatingBook::open(&manifest(dir.path(), false), &dir.path().join("r.jsonl"), false).unwrap();
        assert_eq!(book.image("s1").unwrap().1, "image/png");
        assert_eq!(book.image("s2").unwrap().1, "image/x-portable-graymap");
        assert!(book.image("zz").is_none());
    }
}
