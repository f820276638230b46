//! Shared helpers for integration tests: synthetic dataset generation, a
//! deterministic fabricated difficulty-report provider, and the corpus
//! invariant checker reused by the property suite and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;

use tinymatch_core::corpus::{
    build_corpus_with, AttributeMode, CorpusError, CorpusSample, FilterProvider, FineTuneCorpus,
    GenerationConfig, Granularity, PHASE_ATTRIBUTE, PHASE_RECORD,
};
use tinymatch_core::filter::{train_hash, ClassifierSummary, FilterReport};
use tinymatch_core::serialize::{serialize_record_pair, SerializationVariant};
use tinymatch_core::{LabeledPair, MatchLabel, PairDataset, Record};

/// Longest common contiguous block of `a[alo..ahi]` and `b[blo..bhi]` by
/// exhaustive scan over every starting pair. Ties go to the smallest start
/// in `a`, then the smallest start in `b` — the same selection rule the
/// production code implements with its run-length table.
fn oracle_longest_block(
    a: &[char],
    b: &[char],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut bi, mut bj, mut bk) = (alo, blo, 0usize);
    for i in alo..ahi {
        for j in blo..bhi {
            let mut k = 0;
            while i + k < ahi && j + k < bhi && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > bk {
                (bi, bj, bk) = (i, j, k);
            }
        }
    }
    (bi, bj, bk)
}

fn oracle_matched(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> usize {
    if alo >= ahi || blo >= bhi {
        return 0;
    }
    let (i, j, k) = oracle_longest_block(a, b, alo, ahi, blo, bhi);
    if k == 0 {
        return 0;
    }
    k + oracle_matched(a, b, alo, i, blo, j) + oracle_matched(a, b, i + k, ahi, j + k, bhi)
}

/// Brute-force reimplementation of the gestalt ratio, independent of the
/// production run-length algorithm.
pub fn oracle_gestalt_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let t = a.len() + b.len();
    if t == 0 {
        return 1.0;
    }
    2.0 * oracle_matched(&a, &b, 0, a.len(), 0, b.len()) as f64 / t as f64
}

/// Small deterministic generator so tests need no external RNG crate.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n.max(1)
    }

    /// True with probability `percent`/100.
    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }
}

/// Random fixed-length word over `alphabet`, stepping the caller's LCG state.
pub fn word(state: &mut u64, alphabet: &[char], len: usize) -> String {
    (0..len)
        .map(|_| {
            *state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            alphabet[(*state >> 33) as usize % alphabet.len()]
        })
        .collect()
}

/// Corpus where positives are byte-identical records and negatives pair a
/// lowercase record with a digits-only record: exact string equality
/// determines every label, so a correctly wired trainer must reach
/// near-perfect validation F1. Also returns the positive record pairs for
/// prediction-side checks.
pub fn separable_corpus(
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> (FineTuneCorpus, Vec<(Record, Record)>) {
    let letters: Vec<char> = ('a'..='z').collect();
    let digits: Vec<char> = ('0'..='9').collect();
    let mut state = seed | 1;
    let variant = SerializationVariant::default();
    let mut samples = Vec::new();
    let mut positive_pairs = Vec::new();
    for label in [MatchLabel::Match, MatchLabel::NonMatch] {
        let n = if label == MatchLabel::Match { n_pos } else { n_neg };
        for _ in 0..n {
            let left = Record::from_strs(&[
                &word(&mut state, &letters, 8),
                &word(&mut state, &letters, 5),
            ]);
            let right = if label == MatchLabel::Match {
                left.clone()
            } else {
                Record::from_strs(&[
                    &word(&mut state, &digits, 8),
                    &word(&mut state, &digits, 5),
                ])
            };
            let text = serialize_record_pair(&left.values, &right.values, &variant).unwrap();
            if label == MatchLabel::Match {
                positive_pairs.push((left, right));
            }
            samples.push(CorpusSample {
                text,
                label,
                granularity: Granularity::Record,
                flipped: false,
                source: "synthetic".to_string(),
                phase: PHASE_RECORD,
            });
        }
    }
    let config = GenerationConfig {
        attribute_mode: AttributeMode::Off,
        seed,
        ..GenerationConfig::default()
    };
    let corpus = FineTuneCorpus {
        samples,
        config,
        excluded_target: "held-out".to_string(),
        variant,
        transfer_datasets: vec!["synthetic".to_string()],
        record_stats: Default::default(),
        attribute_stats: Default::default(),
    };
    (corpus, positive_pairs)
}

fn value(rng: &mut TestRng) -> Option<String> {
    if rng.chance(15) {
        return None;
    }
    let len = 3 + rng.below(6) as usize;
    Some(
        (0..len)
            .map(|_| char::from(b'a' + rng.below(26) as u8))
            .collect(),
    )
}

/// A dataset with `rows` train pairs over `n_attrs` attributes, roughly
/// `pos_percent`% of them positive. Schemas are drawn from a shared pool so
/// attribute-level pooling crosses dataset boundaries.
pub fn synth_dataset(name: &str, rows: usize, n_attrs: usize, pos_percent: u64, rng: &mut TestRng) -> PairDataset {
    const POOL: [&str; 5] = ["title", "brand", "price", "year", "venue"];
    let attributes: Vec<String> = (0..n_attrs).map(|i| POOL[i % POOL.len()].to_string()).collect();
    let mut train = Vec::new();
    for _ in 0..rows {
        let left = Record {
            values: (0..n_attrs).map(|_| value(rng)).collect(),
        };
        let positive = rng.chance(pos_percent);
        let right = if positive {
            left.clone()
        } else {
            Record {
                values: (0..n_attrs).map(|_| value(rng)).collect(),
            }
        };
        train.push(LabeledPair {
            left,
            right,
            label: if positive {
                MatchLabel::Match
            } else {
                MatchLabel::NonMatch
            },
        });
    }
    PairDataset {
        name: name.to_string(),
        domain: "synthetic".to_string(),
        attributes,
        train,
        valid: Vec::new(),
        test: Vec::new(),
    }
}

/// Hands out difficulty reports from a fixed, precomputed partition of each
/// dataset's positives, so corpus generation needs no classifier fitting and
/// repeated builds see identical reports.
pub struct PlannedFilter {
    /// dataset name -> (wrong positive indices, correct positive indices)
    pub partitions: BTreeMap<String, (Vec<usize>, Vec<usize>)>,
}

impl PlannedFilter {
    /// Randomly partition each dataset's positive train indices.
    pub fn plan(datasets: &[PairDataset], rng: &mut TestRng) -> Self {
        let mut partitions = BTreeMap::new();
        for d in datasets {
            let mut wrong = Vec::new();
            let mut correct = Vec::new();
            for (i, p) in d.train.iter().enumerate() {
                if p.label.is_match() {
                    if rng.chance(30) {
                        wrong.push(i);
                    } else {
                        correct.push(i);
                    }
                }
            }
            partitions.insert(d.name.clone(), (wrong, correct));
        }
        PlannedFilter { partitions }
    }
}

impl FilterProvider for PlannedFilter {
    fn report(&mut self, dataset: &PairDataset) -> Result<FilterReport, CorpusError> {
        let (wrong, correct) = self
            .partitions
            .get(&dataset.name)
            .cloned()
            .unwrap_or_default();
        Ok(FilterReport {
            dataset: dataset.name.clone(),
            train_hash: train_hash(dataset),
            wrong,
            correct,
            classifier: ClassifierSummary {
                backend: "planned".to_string(),
                max_depth: 0,
                learning_rate: 0.0,
                rounds: 0,
                train_accuracy: 1.0,
                candidates_evaluated: 0,
            },
        })
    }
}

/// Assert every generation invariant of `corpus` against its inputs.
pub fn check_corpus_invariants(
    datasets: &[PairDataset],
    target: &str,
    cfg: &GenerationConfig,
    partitions: &BTreeMap<String, (Vec<usize>, Vec<usize>)>,
    corpus: &FineTuneCorpus,
) {
    let transfer: Vec<&PairDataset> = datasets.iter().filter(|d| d.name != target).collect();
    let flip_factor = if cfg.enable_flip { 2 } else { 1 };

    // Purity: nothing in the corpus may come from the excluded target.
    assert_eq!(corpus.excluded_target, target);
    assert!(corpus.samples.iter().all(|s| s.source != target));
    let names: Vec<&str> = corpus.transfer_datasets.iter().map(|s| s.as_str()).collect();
    assert!(!names.contains(&target));
    assert_eq!(names.len(), transfer.len());

    // Record-level budgets per dataset.
    for d in &transfer {
        let stats = corpus
            .record_stats
            .get(&d.name)
            .unwrap_or_else(|| panic!("missing record stats for {}", d.name));
        let pos_avail = d.train.iter().filter(|p| p.label.is_match()).count();
        let neg_avail = d.train.len() - pos_avail;
        assert_eq!(stats.train_pairs, d.train.len());
        assert!(stats.retained_pairs <= cfg.n_r, "retained pre-flip pairs within budget");
        assert_eq!(stats.samples, stats.retained_pairs * flip_factor);
        let from_dataset = corpus.samples.iter().filter(|s| s.source == d.name && s.granularity == Granularity::Record).count();
        assert_eq!(from_dataset, stats.samples);
        if d.train.len() <= cfg.n_r {
            assert!(!stats.filtered);
            assert_eq!(stats.retained_pairs, d.train.len());
            assert_eq!(stats.positives, pos_avail);
            assert_eq!(stats.negatives, neg_avail);
        } else {
            assert!(stats.filtered);
            let n_plus = pos_avail.min(cfg.n_r / 3);
            assert_eq!(stats.positives, n_plus);
            assert_eq!(stats.negatives, (2 * n_plus).min(neg_avail));
            if neg_avail >= 2 * n_plus {
                assert_eq!(stats.negatives, 2 * stats.positives, "exact 2:1 ratio");
            }
            assert_eq!(stats.retained_pairs, stats.positives + stats.negatives);
            if cfg.enable_automl_filter {
                let (wrong, _) = &partitions[&d.name];
                assert_eq!(stats.wrong_used, wrong.len().min(n_plus));
            } else {
                assert_eq!(stats.wrong_used, 0);
            }
        }
    }

    // Flip closure: with flips on, every record sample pairs with an adjacent
    // twin (unflipped then flipped, same source and label); with flips off, no
    // flipped samples exist. Attribute samples are never flipped.
    let records: Vec<_> = corpus
        .samples
        .iter()
        .filter(|s| s.granularity == Granularity::Record)
        .collect();
    if cfg.enable_flip {
        assert_eq!(records.len() % 2, 0);
        // Twins stay adjacent in the full stream, not just among records.
        let mut i = 0;
        while i < corpus.samples.len() {
            let s = &corpus.samples[i];
            if s.granularity == Granularity::Record {
                assert!(!s.flipped, "record blocks start with the unflipped side");
                let t = &corpus.samples[i + 1];
                assert_eq!(t.granularity, Granularity::Record);
                assert!(t.flipped);
                assert_eq!(t.source, s.source);
                assert_eq!(t.label, s.label);
                i += 2;
            } else {
                assert!(!s.flipped);
                i += 1;
            }
        }
    } else {
        assert!(corpus.samples.iter().all(|s| !s.flipped));
    }

    // Attribute-level balance: recompute each attribute's pooled pair counts
    // (both-missing pairs dropped) and check the emitted totals.
    let mut expected: BTreeMap<String, usize> = BTreeMap::new();
    if cfg.attribute_mode != AttributeMode::Off {
        let mut pools: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for d in &transfer {
            for pair in &d.train {
                for (i, attr) in d.attributes.iter().enumerate() {
                    let l = pair.left.values.get(i).cloned().flatten();
                    let r = pair.right.values.get(i).cloned().flatten();
                    if l.is_none() && r.is_none() {
                        continue;
                    }
                    let entry = pools.entry(attr.trim().to_ascii_lowercase()).or_default();
                    if pair.label.is_match() {
                        entry.0 += 1;
                    } else {
                        entry.1 += 1;
                    }
                }
            }
        }
        for (attr, (pos, neg)) in pools {
            let mut per_class = pos.min(neg);
            if 2 * per_class > cfg.n_a {
                per_class = cfg.n_a / 2;
            }
            if per_class > 0 {
                expected.insert(attr, 2 * per_class);
            }
        }
    }
    assert_eq!(corpus.attribute_stats, expected);
    for &count in corpus.attribute_stats.values() {
        assert_eq!(count % 2, 0, "attribute samples are class-balanced");
        assert!(count <= cfg.n_a, "attribute budget respected");
    }
    let attr_samples: Vec<_> = corpus
        .samples
        .iter()
        .filter(|s| s.granularity == Granularity::Attribute)
        .collect();
    assert_eq!(
        attr_samples.len(),
        corpus.attribute_stats.values().sum::<usize>()
    );
    let attr_pos = attr_samples.iter().filter(|s| s.label.is_match()).count();
    assert_eq!(2 * attr_pos, attr_samples.len(), "global attribute balance");

    // Phase tags and sequential ordering.
    for s in &corpus.samples {
        let want = match s.granularity {
            Granularity::Record => PHASE_RECORD,
            Granularity::Attribute => PHASE_ATTRIBUTE,
        };
        assert_eq!(s.phase, want);
    }
    match cfg.attribute_mode {
        AttributeMode::Off => assert!(attr_samples.is_empty()),
        AttributeMode::Sequential => {
            let first_record = corpus
                .samples
                .iter()
                .position(|s| s.granularity == Granularity::Record)
                .unwrap_or(corpus.samples.len());
            assert!(
                corpus.samples[first_record..]
                    .iter()
                    .all(|s| s.granularity == Granularity::Record),
                "attribute phase strictly precedes the record phase"
            );
        }
        AttributeMode::Mix => {}
    }
}

/// One randomized property-suite iteration: generate datasets and a config
/// from `case_seed`, build the corpus, and check every invariant. Returns
/// true if the build succeeded (vs. hitting an expected validation error).
pub fn corpus_property_case(case_seed: u64) -> bool {
    let mut rng = TestRng(case_seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let n_datasets = 2 + rng.below(3) as usize;
    let mut datasets = Vec::new();
    for i in 0..n_datasets {
        let rows = match rng.below(4) {
            0 => rng.below(8) as usize,          // tiny, often below n_r
            1 => 20 + rng.below(30) as usize,    // mid
            _ => 40 + rng.below(60) as usize,    // large, usually above n_r
        };
        let n_attrs = 1 + rng.below(3) as usize;
        let pos_percent = match rng.below(10) {
            0 => 0, // exercises the no-positives error
            1 | 2 => 10,
            3 | 4 | 5 => 35,
            6 | 7 => 60,
            _ => 90, // exercises negative shortage
        };
        datasets.push(synth_dataset(
            &format!("ds{i}"),
            rows,
            n_attrs,
            pos_percent,
            &mut rng,
        ));
    }
    let target = "ds0";
    let cfg = GenerationConfig {
        n_r: 3 + rng.below(58) as usize,
        n_a: rng.below(40) as usize,
        seed: rng.next(),
        enable_automl_filter: rng.chance(70),
        enable_flip: rng.chance(70),
        attribute_mode: match rng.below(3) {
            0 => AttributeMode::Mix,
            1 => AttributeMode::Sequential,
            _ => AttributeMode::Off,
        },
    };
    let filter = PlannedFilter::plan(&datasets, &mut rng);
    let partitions = filter.partitions.clone();
    let variant = SerializationVariant::default();
    let mut provider = filter;
    match build_corpus_with(&datasets, target, &cfg, &variant, &mut provider) {
        Ok(corpus) => {
            check_corpus_invariants(&datasets, target, &cfg, &partitions, &corpus);
            true
        }
        Err(CorpusError::NoPositives { dataset, .. }) => {
            let d = datasets.iter().find(|d| d.name == dataset).unwrap();
            assert!(d.train.len() > cfg.n_r);
            assert!(d.train.iter().all(|p| !p.label.is_match()));
            false
        }
        Err(e) => panic!("unexpected generation error: {e}"),
    }
}
