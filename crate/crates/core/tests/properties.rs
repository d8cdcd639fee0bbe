mod common;

use std::collections::BTreeSet;

use approx::assert_relative_eq;
use cseval_core::agreement::{kendall_tau, TauVariant};
use cseval_core::graph::radgraph::{parse_radgraph_json, to_radgraph_json};
use cseval_core::graph::extract_graph;
use cseval_core::metrics::{cosine_alignment, frechet_distance, EmbeddingVec, GaussianStats};
use cseval_core::prompt::{assertion_to_graph, builtin_templates, expand_templates};
use cseval_core::score::{radgraph_f1, tuple_set};
use cseval_core::Lexicon;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::{brute_force_f1, brute_force_tau, random_graph, random_psd, random_tuple_set};

fn rng_from(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

proptest! {
    #[test]
    fn f1_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let a = random_tuple_set(&mut rng, 10);
        let b = random_tuple_set(&mut rng, 10);
        let ab = radgraph_f1(&a, &b);
        let ba = radgraph_f1(&b, &a);
        prop_assert_eq!(ab.f1, ba.f1);
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert!((0.0..=1.0).contains(&ab.f1));
        prop_assert!((ab.f1 - brute_force_f1(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn f1_grows_when_a_shared_tuple_is_added(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let mut a = random_tuple_set(&mut rng, 8);
        let mut b = random_tuple_set(&mut rng, 8);
        let before = radgraph_f1(&a, &b).f1;
        let shared = ("shared-term".to_string(), cseval_core::EntityLabel::ObsPresent);
        a.entity_tuples.insert(shared.clone());
        b.entity_tuples.insert(shared);
        prop_assert!(radgraph_f1(&a, &b).f1 >= before - 1e-15);
    }

    #[test]
    fn tau_matches_pair_enumeration(
        pairs in prop::collection::vec((0u8..6, 0u8..6), 2..40)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let constant = |v: &[f64]| v.iter().all(|e| *e == v[0]);
        prop_assume!(!constant(&x) && !constant(&y));
        let b = kendall_tau(&x, &y, TauVariant::B).unwrap();
        let a = kendall_tau(&x, &y, TauVariant::A).unwrap();
        prop_assert!((b - brute_force_tau(&x, &y, true)).abs() < 1e-12);
        prop_assert!((a - brute_force_tau(&x, &y, false)).abs() < 1e-12);
        prop_assert!(a.abs() <= b.abs() + 1e-12);
    }

    #[test]
    fn tau_is_invariant_under_monotone_maps(
        xs in prop::collection::vec(-50i32..50, 2..30),
        ys in prop::collection::vec(-50i32..50, 2..30),
    ) {
        let n = xs.len().min(ys.len());
        let x: Vec<f64> = xs[..n].iter().map(|v| *v as f64).collect();
        let y: Vec<f64> = ys[..n].iter().map(|v| *v as f64).collect();
        let Ok(tau) = kendall_tau(&x, &y, TauVariant::B) else { return Ok(()) };
        let ex: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert_eq!(kendall_tau(&ex, &y, TauVariant::B).unwrap(), tau);
        prop_assert_eq!(kendall_tau(&x, &neg, TauVariant::B).unwrap(), -tau);
        prop_assert_eq!(kendall_tau(&y, &x, TauVariant::B).unwrap(), tau);
    }

    #[test]
    fn graph_json_round_trips(seed in any::<u64>()) {
        let g = random_graph(&mut rng_from(seed));
        let json = to_radgraph_json(&g);
        prop_assert_eq!(parse_radgraph_json(json.as_bytes()).unwrap(), g);
    }

    #[test]
    fn extraction_is_deterministic_and_total(text in "[a-z ,.;]{1,80}") {
        let lex = Lexicon::builtin();
        let first = extract_graph(&text, &lex);
        let second = extract_graph(&text, &lex);
        prop_assert_eq!(first.is_ok(), second.is_ok());
        if let (Ok(a), Ok(b)) = (first, second) {
            prop_assert_eq!(to_radgraph_json(&a), to_radgraph_json(&b));
        }
    }

    #[test]
    fn extraction_finds_every_prompt_term(
        idx in 0usize..31,
        filler in prop::sample::select(vec!["", "there is a ", "findings: ", "the study shows "]),
    ) {
        let lex = Lexicon::builtin();
        let assertion = &expand_templates(&builtin_templates())[idx];
        let gt = tuple_set(&assertion_to_graph(assertion, &lex), &lex);
        let text = format!("{filler}{}.", assertion.raw_text);
        let pred = tuple_set(&extract_graph(&text, &lex).unwrap(), &lex);
        prop_assert_eq!(radgraph_f1(&pred, &gt).f1, 1.0, "{}", text);
    }

    #[test]
    fn fid_is_symmetric_and_scales_quadratically(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let mut rng = rng_from(seed);
        let dim = 6;
        let stats = |mean: DVector<f64>, cov: DMatrix<f64>| GaussianStats::new(mean, cov, 50).unwrap();
        let (c1, c2) = (random_psd(&mut rng, dim, 4), random_psd(&mut rng, dim, dim));
        let m1 = DVector::from_fn(dim, |i, _| i as f64 * 0.3);
        let m2 = DVector::from_fn(dim, |i, _| 1.0 - i as f64 * 0.1);
        let a = stats(m1.clone(), c1.clone());
        let b = stats(m2.clone(), c2.clone());
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab));

        let s2 = scale * scale;
        let scaled = frechet_distance(&stats(m1 * scale, c1 * s2), &stats(m2 * scale, c2 * s2)).unwrap();
        prop_assert!((scaled - s2 * ab).abs() <= 1e-7 * (1.0 + s2 * ab));
    }

    #[test]
    fn cosine_ignores_positive_scale(
        v in prop::collection::vec(-5.0f64..5.0, 3..12),
        k in 0.01f64..100.0,
    ) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let w: Vec<f64> = v.iter().rev().map(|x| x + 0.5).collect();
        prop_assume!(w.iter().any(|x| x.abs() > 1e-3));
        let a = EmbeddingVec::new(v.clone()).unwrap();
        let b = EmbeddingVec::new(w.clone()).unwrap();
        let scaled = EmbeddingVec::new(v.iter().map(|x| x * k).collect()).unwrap();
        let base = cosine_alignment(&a, &b).unwrap();
        prop_assert!((cosine_alignment(&scaled, &b).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
        prop_assert!((cosine_alignment(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn prompt_graphs_are_pairwise_distinct() {
    let lex = Lexicon::builtin();
    let sets: Vec<_> = expand_templates(&builtin_templates())
        .iter()
        .map(|a| format!("{:?}", tuple_set(&assertion_to_graph(a, &lex), &lex)))
        .collect();
    let unique: BTreeSet<&String> = sets.iter().collect();
    assert_eq!(unique.len(), 31);
}

#[test]
fn prompt_vs_prompt_f1_is_one_only_on_the_diagonal() {
    let lex = Lexicon::builtin();
    let assertions = expand_templates(&builtin_templates());
    let sets: Vec<_> =
        assertions.iter().map(|a| tuple_set(&assertion_to_graph(a, &lex), &lex)).collect();
    for (i, a) in sets.iter().enumerate() {
        for (j, b) in sets.iter().enumerate() {
            let f1 = radgraph_f1(a, b).f1;
            if i == j {
                assert_eq!(f1, 1.0);
            } else {
                assert!(f1 < 1.0, "{} vs {}", assertions[i].raw_text, assertions[j].raw_text);
            }
        }
    }
}

#[test]
fn diagonal_fid_matches_closed_form() {
    let s1 = [1.0, 4.0, 0.25, 9.0];
    let s2 = [4.0, 1.0, 0.25, 1.0];
    let a = GaussianStats::new(
        DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(s1.to_vec())),
        10,
    )
    .unwrap();
    let b = GaussianStats::new(
        DVector::from_vec(vec![1.0, 1.0, 0.0, 2.0]),
        DMatrix::from_diagonal(&DVector::from_vec(s2.to_vec())),
        10,
    )
    .unwrap();
    // (1-2)² + (2-1)² + 0 + (3-1)² plus ‖Δμ‖² = 1 + 4.
    assert_relative_eq!(frechet_distance(&a, &b).unwrap(), 11.0, max_relative = 1e-12);
}
