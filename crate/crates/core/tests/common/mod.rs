#![allow(dead_code)]

use std::path::PathBuf;

use cseval_core::graph::{Entity, EntityGraph, EntityLabel, Relation, RelationLabel};
use cseval_core::metrics::GrayImage;
use cseval_core::score::{EntityTuple, RelationTuple, TupleSet};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::Rng;

pub fn fixture(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(path)
}

const WORDS: [&str; 6] = ["effusion", "left", "small", "heart", "lobe", "opacity"];
const ENTITY_LABELS: [EntityLabel; 4] = [
    EntityLabel::ObsPresent,
    EntityLabel::ObsAbsent,
    EntityLabel::ObsUncertain,
    EntityLabel::AnatPresent,
];
const RELATION_LABELS: [RelationLabel; 3] =
    [RelationLabel::Modify, RelationLabel::LocatedAt, RelationLabel::SuggestiveOf];

fn entity_tuple(rng: &mut StdRng) -> EntityTuple {
    (
        WORDS[rng.random_range(0..WORDS.len())].to_string(),
        ENTITY_LABELS[rng.random_range(0..ENTITY_LABELS.len())],
    )
}

/// Random tuple set with at most `max` tuples in total, drawn from a small
/// vocabulary so overlaps are common.
pub fn random_tuple_set(rng: &mut StdRng, max: usize) -> TupleSet {
    let mut set = TupleSet::default();
    let target = rng.random_range(0..=max);
    let mut attempts = 0;
    while set.len() < target && attempts < 100 {
        attempts += 1;
        if rng.random_bool(0.5) {
            set.entity_tuples.insert(entity_tuple(rng));
        } else {
            let rel: RelationTuple = (
                entity_tuple(rng),
                RELATION_LABELS[rng.random_range(0..RELATION_LABELS.len())],
                entity_tuple(rng),
            );
            set.relation_tuples.insert(rel);
        }
    }
    set
}

/// F1 by pairwise comparison of every tuple, without set operations.
pub fn brute_force_f1(pred: &TupleSet, gt: &TupleSet) -> f64 {
    let mut overlap = 0usize;
    for a in &pred.entity_tuples {
        for b in &gt.entity_tuples {
            if a == b {
                overlap += 1;
            }
        }
    }
    for a in &pred.relation_tuples {
        for b in &gt.relation_tuples {
            if a == b {
                overlap += 1;
            }
        }
    }
    let (np, ng) = (pred.len(), gt.len());
    if np == 0 && ng == 0 {
        return 1.0;
    }
    if np == 0 || ng == 0 || overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / np as f64;
    let r = overlap as f64 / ng as f64;
    2.0 * p * r / (p + r)
}

/// Kendall τ by explicit pair enumeration.
pub fn brute_force_tau(x: &[f64], y: &[f64], tie_corrected: bool) -> f64 {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx * dy > 0.0 {
                c += 1;
            } else if dx * dy < 0.0 {
                d += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    if tie_corrected {
        (c - d) as f64 / ((n0 - tx as f64) * (n0 - ty as f64)).sqrt()
    } else {
        (c - d) as f64 / n0
    }
}

/// Random valid graph: disjoint one- or two-word spans over a random sentence,
/// plus relations between distinct entities.
pub fn random_graph(rng: &mut StdRng) -> EntityGraph {
    let n_words = rng.random_range(1..=10);
    let words: Vec<&str> = (0..n_words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let mut entities = Vec::new();
    let mut ix = 0;
    while ix < n_words {
        let len = rng.random_range(1..=2).min(n_words - ix);
        if rng.random_bool(0.7) {
            entities.push(Entity {
                tokens: words[ix..ix + len].join(" "),
                label: ENTITY_LABELS[rng.random_range(0..ENTITY_LABELS.len())],
                start_ix: ix,
                end_ix: ix + len - 1,
            });
        }
        ix += len;
    }
    let mut relations = Vec::new();
    if entities.len() >= 2 {
        for _ in 0..rng.random_range(0..=entities.len()) {
            let head = rng.random_range(0..entities.len());
            let tail = rng.random_range(0..entities.len());
            if head != tail {
                relations.push(Relation {
                    head,
                    tail,
                    label: RELATION_LABELS[rng.random_range(0..RELATION_LABELS.len())],
                });
            }
        }
    }
    EntityGraph::new(words.join(" "), entities, relations).expect("generated graph is valid")
}

pub fn random_image(rng: &mut StdRng, width: usize, height: usize) -> GrayImage {
    let pixels = (0..width * height).map(|_| rng.random::<f64>()).collect();
    GrayImage::new(width, height, pixels).expect("valid image")
}

/// Random PSD matrix `A Aᵀ` with rank at most `rank`.
pub fn random_psd(rng: &mut StdRng, dim: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, rank, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}
