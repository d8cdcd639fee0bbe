//! `cseval`: prompt expansion, graph extraction, scoring, baseline metrics,
//! agreement statistics, full evaluation runs and the rating service.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 run finished with
//! per-sample failures.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cseval_core::agreement::{
    aggregate_by_finding, expert_means, load_ratings, per_sample_tau,
    rank_consistency, AggregateRow, TauVariant, METRIC_ALIGNMENT, METRIC_EXPERT, METRIC_F1,
};
use cseval_core::graph::radgraph::{parse_radgraph_json, to_radgraph_json};
use cseval_core::graph::{extract_graph, merge_graphs};
use cseval_core::harness::rating::RatingBook;
use cseval_core::harness::{
    canonical_json, emit_report, exit_code, load_manifest, read_score_records, run_evaluation,
    write_score_records, ReportFormat, ScoreRecord,
};
use cseval_core::metrics::{
    cosine_alignment, frechet_distance, gaussian_stats, load_embeddings, load_image,
    pairwise_ms_ssim, GrayImage,
};
use cseval_core::prompt::{builtin_templates, expand_templates, load_templates, parse_prompt};
use cseval_core::score::{score_sample, GroundedReport, Prediction};
use cseval_core::Lexicon;
use serde_json::json;

#[derive(Parser)]
#[command(name = "cseval", version, about = "Clinical-semantic alignment evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct LexiconArgs {
    /// Lexicon JSON replacing the built-in one.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Map synonyms (e.g. "opacity") to canonical terms before matching.
    #[arg(long)]
    synonyms: bool,
}

#[derive(Subcommand)]
enum Command {
    /// List the prompts of the template grammar.
    Prompts {
        /// Print every expanded prompt, one per line.
        #[arg(long)]
        expand: bool,
        /// Template JSON replacing the built-in templates.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[command(flatten)]
        lex: LexiconArgs,
    },
    /// Extract an entity-relation graph from report text.
    Extract {
        #[arg(long)]
        text: String,
        #[command(flatten)]
        lex: LexiconArgs,
    },
    /// RadGraph-F1 of one prompt against a grounded report or a graph.
    Score {
        #[arg(long)]
        prompt: String,
        /// Grounded report JSON.
        #[arg(long, conflicts_with = "pred_graph", required_unless_present = "pred_graph")]
        report: Option<PathBuf>,
        /// RadGraph-format graph JSON; extraction is skipped.
        #[arg(long)]
        pred_graph: Option<PathBuf>,
        /// Score every sentence, boxed or not.
        #[arg(long)]
        no_filter: bool,
        /// Also print the retained sentences and both graphs.
        #[arg(long)]
        audit: bool,
        #[command(flatten)]
        lex: LexiconArgs,
    },
    /// Baseline image and embedding metrics.
    Metrics {
        #[command(subcommand)]
        metric: MetricCommand,
    },
    /// Kendall's τ and finding-order agreement between a metric and experts.
    Agree {
        /// Score records (JSONL) as written by `run`.
        #[arg(long)]
        scores: PathBuf,
        /// Rating log (JSONL).
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, value_enum)]
        metric: AgreeMetric,
        #[arg(long, value_enum, default_value = "b")]
        tau: TauArg,
    },
    /// Evaluate a manifest and write results, records and a report.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "md", value_parser = parse_format)]
        format: ReportFormat,
        /// Rating log overriding the manifest's `ratings_path`.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Serve the expert rating API.
    Rate {
        #[arg(long)]
        manifest: PathBuf,
        /// Rating log to append to; created if missing.
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Hide the finding label from raters.
        #[arg(long)]
        blind: bool,
        /// Built rating UI to serve at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MetricCommand {
    /// Fréchet distance between two embedding sets.
    Fid {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
    },
    /// Pairwise MS-SSIM within groups of images.
    Msssim {
        /// Images forming one group.
        #[arg(long, num_args = 2.., conflicts_with = "dir", required_unless_present = "dir")]
        images: Vec<PathBuf>,
        /// Directory of images named `<prompt words>_<NN>.png`, e.g.
        /// `small_left_pneumothorax_03.png`.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// How `--dir` images are grouped.
        #[arg(long, value_enum, default_value = "finding", requires = "dir")]
        group_by: GroupBy,
        #[command(flatten)]
        lex: LexiconArgs,
    },
    /// Row-wise cosine similarity of image and text embeddings.
    Align {
        #[arg(long, alias = "img")]
        img_emb: PathBuf,
        #[arg(long, alias = "txt")]
        txt_emb: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    Finding,
    Prompt,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgreeMetric {
    F1,
    Align,
}

#[derive(Clone, Copy, ValueEnum)]
enum TauArg {
    A,
    B,
}

impl From<TauArg> for TauVariant {
    fn from(t: TauArg) -> Self {
        match t {
            TauArg::A => TauVariant::A,
            TauArg::B => TauVariant::B,
        }
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

/// An error with the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

fn data_err(e: impl Display) -> Failure {
    Failure { code: exit_code::DATA, message: e.to_string() }
}

fn usage_err(e: impl Display) -> Failure {
    Failure { code: exit_code::USAGE, message: e.to_string() }
}

type CliResult = Result<i32, Failure>;

fn lexicon(args: &LexiconArgs) -> Result<Lexicon, Failure> {
    let mut lex = match &args.lexicon {
        Some(p) => Lexicon::load(p).map_err(data_err)?,
        None => Lexicon::builtin(),
    };
    if args.synonyms {
        if lex.synonyms.is_empty() {
            lex.synonyms = Lexicon::default_synonyms();
        }
    } else {
        lex.synonyms.clear();
    }
    lex.validate().map_err(data_err)?;
    Ok(lex)
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

/// Splits report text at sentence-final punctuation followed by whitespace.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let at_break = matches!(c, '.' | '!' | '?')
            && chars.get(k + 1).is_none_or(|(_, next)| next.is_whitespace());
        if at_break {
            out.push(text[start..i + c.len_utf8()].trim());
            start = i + c.len_utf8();
        }
    }
    out.push(text[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

fn cmd_prompts(expand: bool, templates: Option<&Path>, lex: &LexiconArgs) -> CliResult {
    let lex = lexicon(lex)?;
    let templates = match templates {
        Some(p) => load_templates(p, &lex).map_err(data_err)?,
        None => builtin_templates(),
    };
    if expand {
        for a in expand_templates(&templates) {
            println!("{}", a.raw_text);
        }
    } else {
        print!("{}", canonical_json(&templates));
    }
    Ok(exit_code::SUCCESS)
}

fn cmd_extract(text: &str, lex: &LexiconArgs) -> CliResult {
    let lex = lexicon(lex)?;
    let graphs = split_sentences(text)
        .into_iter()
        .map(|s| extract_graph(s, &lex))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data_err)?;
    if graphs.is_empty() {
        return Err(data_err("no text to extract from"));
    }
    println!("{}", to_radgraph_json(&merge_graphs(&graphs)));
    Ok(exit_code::SUCCESS)
}

fn cmd_score(
    prompt: &str,
    report: Option<&Path>,
    pred_graph: Option<&Path>,
    no_filter: bool,
    audit: bool,
    lex: &LexiconArgs,
) -> CliResult {
    let lex = lexicon(lex)?;
    let assertion = parse_prompt(prompt, &lex).map_err(data_err)?;
    let scored = match (report, pred_graph) {
        (Some(p), None) => {
            let report = GroundedReport::from_json(&read(p)?).map_err(data_err)?;
            score_sample(&assertion, Prediction::Report { report: &report, filter: !no_filter }, &lex)
        }
        (None, Some(p)) => {
            let graph = parse_radgraph_json(&read(p)?).map_err(data_err)?;
            score_sample(&assertion, Prediction::Graph(&graph), &lex)
        }
        _ => return Err(usage_err("give exactly one of --report and --pred-graph")),
    }
    .map_err(data_err)?;
    if audit {
        print!("{}", canonical_json(&scored));
    } else {
        print!("{}", canonical_json(&scored.f1));
    }
    Ok(exit_code::SUCCESS)
}

/// File stem with a trailing `_<digits>` removed: `cardio_03` -> `cardio`.
fn stem_key(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match stem.rsplit_once('_') {
        Some((head, tail)) if !head.is_empty() && !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => {
            head.to_string()
        }
        _ => stem,
    }
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "pnm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Group of an image under `--dir`: its prompt (underscores read as
/// spaces), or that prompt's pathology.
fn group_key(path: &Path, by: GroupBy, lex: &Lexicon) -> Result<String, Failure> {
    let prompt = stem_key(path).replace('_', " ");
    let parsed = parse_prompt(&prompt, lex).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    Ok(match by {
        GroupBy::Finding => parsed.pathology,
        GroupBy::Prompt => parsed.raw_text,
    })
}

fn cmd_metrics(metric: &MetricCommand) -> CliResult {
    let value = match metric {
        MetricCommand::Fid { real, synth } => {
            let real = gaussian_stats(&load_embeddings(real).map_err(data_err)?).map_err(data_err)?;
            let synth = gaussian_stats(&load_embeddings(synth).map_err(data_err)?).map_err(data_err)?;
            let d = frechet_distance(&real, &synth).map_err(data_err)?;
            json!({"fid": d, "n_real": real.n(), "n_synth": synth.n(), "dim": real.dim()})
        }
        MetricCommand::Msssim { images, dir, group_by, lex } => {
            let lex = lexicon(lex)?;
            let paths = match dir {
                Some(d) => image_files(d)?,
                None => images.clone(),
            };
            let mut groups: BTreeMap<String, Vec<GrayImage>> = BTreeMap::new();
            for p in &paths {
                let key = match dir {
                    Some(_) => group_key(p, *group_by, &lex)?,
                    None => "images".to_string(),
                };
                groups.entry(key).or_default().push(load_image(p).map_err(data_err)?);
            }
            let mut out = BTreeMap::new();
            for (key, imgs) in &groups {
                let s = pairwise_ms_ssim(imgs).map_err(|e| data_err(format!("group {key:?}: {e}")))?;
                out.insert(key.clone(), s);
            }
            serde_json::to_value(out).expect("summaries serialize")
        }
        MetricCommand::Align { img_emb, txt_emb } => {
            let imgs = load_embeddings(img_emb).map_err(data_err)?;
            let txts = load_embeddings(txt_emb).map_err(data_err)?;
            if imgs.len() != txts.len() {
                return Err(data_err(format!("{} image rows but {} text rows", imgs.len(), txts.len())));
            }
            let scores = imgs
                .iter()
                .zip(&txts)
                .map(|(i, t)| cosine_alignment(i, t))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(data_err)?;
            if scores.is_empty() {
                return Err(data_err("no embeddings"));
            }
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            json!({"mean": mean, "scores": scores})
        }
    };
    print!("{}", canonical_json(&value));
    Ok(exit_code::SUCCESS)
}

fn cmd_agree(scores: &Path, ratings: &Path, metric: AgreeMetric, tau: TauArg) -> CliResult {
    let records: Vec<ScoreRecord> = read_score_records(&read(scores)?).map_err(data_err)?;
    let log = load_ratings(ratings).map_err(data_err)?;
    let ratings = log.latest();
    let experts = expert_means(&records, &ratings).map_err(data_err)?;
    let (name, get): (&str, fn(&ScoreRecord) -> Option<f64>) = match metric {
        AgreeMetric::F1 => (METRIC_F1, |r| r.f1_breakdown.map(|f| f.f1)),
        AgreeMetric::Align => (METRIC_ALIGNMENT, |r| r.alignment),
    };
    let variant = TauVariant::from(tau);
    let n = records.iter().filter(|r| get(r).is_some() && experts.contains_key(&r.sample_id)).count();
    let tau_value = match per_sample_tau(&records, &experts, get, variant) {
        Some(t) => t.map_err(data_err)?,
        None => return Err(data_err(format!("need at least two rated samples with {name}, found {n}"))),
    };

    let rows = aggregate_by_finding(&records, &ratings).map_err(data_err)?;
    let pick = |m: &str| -> Vec<AggregateRow> { rows.iter().filter(|r| r.metric_name == m).cloned().collect() };
    let (metric_rows, expert_rows) = (pick(name), pick(METRIC_EXPERT));
    let consistency = if metric_rows.len() >= 2 && metric_rows.len() == expert_rows.len() {
        rank_consistency(&metric_rows, &expert_rows).ok()
    } else {
        None
    };

    let value = json!({
        "metric": name,
        "tau_variant": variant,
        "tau": tau_value,
        "n": n,
        "rank_consistency": consistency,
        "aggregates": rows,
        "ratings_truncated": log.truncated_tail,
    });
    print!("{}", canonical_json(&value));
    Ok(exit_code::SUCCESS)
}

fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(p).map_err(|e| data_err(format!("{}: {e}", p.display())))
}

fn cmd_run(manifest: &Path, out: &Path, format: ReportFormat, ratings: Option<&Path>) -> CliResult {
    let mut m = load_manifest(manifest).map_err(data_err)?;
    if let Some(r) = ratings {
        m.ratings_path = Some(absolute(r)?);
    }
    let results = run_evaluation(&m).map_err(data_err)?;
    let report = emit_report(&results, format).map_err(data_err)?;
    std::fs::create_dir_all(out).map_err(|e| data_err(format!("{}: {e}", out.display())))?;
    write(&out.join("results.json"), canonical_json(&results).as_bytes())?;
    write(&out.join("records.jsonl"), write_score_records(&results.records).as_bytes())?;
    write(&out.join(format!("report.{}", format.extension())), &report)?;
    print!("{}", String::from_utf8_lossy(&report));

    let s = &results.summary;
    eprintln!(
        "{} samples: {} scored, {} failed, {} skipped; wrote {}",
        s.samples,
        s.scored,
        s.failed,
        s.skipped,
        out.display()
    );
    if s.ratings_truncated {
        eprintln!("warning: rating log ends in a torn line, which was ignored");
    }
    for e in &s.errors {
        eprintln!("error: {} [{}]: {}", e.subject, e.stage, e.message);
    }
    Ok(if results.is_partial() { exit_code::PARTIAL } else { exit_code::SUCCESS })
}

fn cmd_rate(
    manifest: &Path,
    ratings: &Path,
    host: &str,
    port: u16,
    blind: bool,
    assets: Option<PathBuf>,
) -> CliResult {
    let m = load_manifest(manifest).map_err(data_err)?;
    let book = RatingBook::open(&m, ratings, blind || m.options.blind).map_err(data_err)?;
    if book.repaired_tail() {
        eprintln!("warning: cut a torn final line from {}", ratings.display());
    }
    let app = cseval_rating::router(book, assets);
    let runtime = tokio::runtime::Runtime::new().map_err(data_err)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| data_err(format!("bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(data_err)?;
        eprintln!("rating service on http://{addr}/");
        cseval_rating::serve(listener, app).await.map_err(data_err)
    })?;
    Ok(exit_code::SUCCESS)
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Prompts { expand, templates, lex } => cmd_prompts(expand, templates.as_deref(), &lex),
        Command::Extract { text, lex } => cmd_extract(&text, &lex),
        Command::Score { prompt, report, pred_graph, no_filter, audit, lex } => {
            cmd_score(&prompt, report.as_deref(), pred_graph.as_deref(), no_filter, audit, &lex)
        }
        Command::Metrics { metric } => cmd_metrics(&metric),
        Command::Agree { scores, ratings, metric, tau } => cmd_agree(&scores, &ratings, metric, tau),
        Command::Run { manifest, out, format, ratings } => {
            cmd_run(&manifest, &out, format, ratings.as_deref())
        }
        Command::Rate { manifest, ratings, port, host, blind, assets } => {
            cmd_rate(&manifest, &ratings, &host, port, blind, assets)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit_code::USAGE as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
