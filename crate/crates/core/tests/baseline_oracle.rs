//! Independent oracle for the gestalt ratio: a brute-force implementation
//! recomputes every value, and a frozen table pins agreement with the
//! widely used reference implementation of Ratcliff/Obershelp matching.

mod common;

use common::oracle_gestalt_ratio as oracle_ratio;
use tinymatch_core::baseline::{gestalt_ratio, StringSimConfig, StringSimMatcher};
use tinymatch_core::{MatchLabel, Matcher, Record};

/// Values produced by the standard library difflib implementation
/// (`SequenceMatcher(None, a, b).ratio()`, junk heuristics disabled),
/// frozen here as the compatibility contract.
const REFERENCE: &[(&str, &str, f64)] = &[
    ("alexandre", "aleksander", 0.7368421052631579),
    ("ab", "bc", 0.5),
    ("aabbcc", "abccba", 0.6666666666666666),
    ("abcbdab", "bdcaba", 0.46153846153846156),
    ("banana", "ananas", 0.8333333333333334),
    ("context", "contact", 0.7142857142857143),
    (
        "Apple iPhone 12 Pro 128GB",
        "Apple iPhone 12 Pro Max 128 GB",
        0.9090909090909091,
    ),
    (
        "Sony WH-1000XM4 Wireless",
        "Sony WH1000XM4 wireless headphones",
        0.7586206896551724,
    ),
    (
        "The Big Lebowski, 1998, Joel Coen",
        "Big Lebowski (1998) - J. Coen",
        0.7741935483870968,
    ),
    ("aaaa", "aa", 0.6666666666666666),
    ("xyxyx", "yxyxy", 0.8),
    ("N/A, N/A, 2011", "David Guetta, , 2011", 0.47058823529411764),
    ("café", "cafe", 0.75),
    ("héllo wörld", "hello world", 0.8181818181818182),
    ("résumé", "resume", 0.6666666666666666),
];

#[test]
fn frozen_reference_values_hold() {
    for &(a, b, expected) in REFERENCE {
        let got = gestalt_ratio(a, b);
        assert!(
            (got - expected).abs() < 1e-12,
            "{a:?} vs {b:?}: got {got}, reference {expected}"
        );
        let oracle = oracle_ratio(a, b);
        assert!(
            (oracle - expected).abs() < 1e-12,
            "{a:?} vs {b:?}: oracle {oracle} disagrees with reference {expected}"
        );
    }
}

fn lcg(state: &mut u64) -> u64 {
    *state = state
        .wrapping_mul(6_364_136_223_846_793_005)
        .wrapping_add(1_442_695_040_888_963_407);
    *state >> 33
}

fn random_string(state: &mut u64, alphabet: &[char], max_len: usize) -> String {
    let len = lcg(state) as usize % (max_len + 1);
    (0..len)
        .map(|_| alphabet[lcg(state) as usize % alphabet.len()])
        .collect()
}

#[test]
fn production_matches_oracle_on_1000_random_pairs() {
    // Tiny alphabets force repeated characters and tie-heavy block choices;
    // the multi-byte entries exercise the char (not byte) domain.
    let alphabets: [&[char]; 3] = [&['a', 'b'], &['a', 'b', 'c', ' '], &['é', '✓', 'a', '0']];
    let mut state = 0x5eed_cafe_u64;
    for case in 0..1000 {
        let alphabet = alphabets[case % alphabets.len()];
        let a = random_string(&mut state, alphabet, 24);
        let b = random_string(&mut state, alphabet, 24);
        let got = gestalt_ratio(&a, &b);
        let want = oracle_ratio(&a, &b);
        assert!(
            (got - want).abs() < 1e-12,
            "case {case}: {a:?} vs {b:?}: production {got}, oracle {want}"
        );
    }
}

#[test]
fn matcher_scores_equal_oracle_on_joined_records() {
    let m = StringSimMatcher::new(StringSimConfig::default());
    let pairs = [
        (
            Record::from_strs(&["iPhone 12", "128GB"]),
            Record::from_strs(&["iPhone 12 Pro", "128 GB"]),
        ),
        (
            Record {
                values: vec![Some("David Guetta".into()), None, Some("2011".into())],
            },
            Record {
                values: vec![None, None, Some("2011".into())],
            },
        ),
    ];
    let preds = m.predict(&pairs).unwrap();
    for ((l, r), pred) in pairs.iter().zip(&preds) {
        let want = oracle_ratio(&m.render(l), &m.render(r));
        assert!((pred.score - want).abs() < 1e-12);
        let want_label = if want > 0.5 {
            MatchLabel::Match
        } else {
            MatchLabel::NonMatch
        };
        assert_eq!(pred.label, want_label);
    }
}
