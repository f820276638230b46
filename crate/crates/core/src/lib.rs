//! Zero-shot entity matching on tabular records.
//!
//! The pipeline turns labeled record pairs from several source datasets into a
//! natural-language fine-tuning corpus, fine-tunes a small language model on
//! that corpus, and evaluates the result on a dataset the model never saw.
//! Alongside the model path there is a character-similarity baseline, a
//! difficulty filter used during corpus construction, and throughput/cost
//! accounting for deployment decisions.
//!
//! Modules:
//! - [`data`]: record/pair types, dataset directory I/O, validation
//! - [`serialize`]: record pairs rendered as question prompts
//! - [`filter`]: gradient-boosted difficulty split of training positives
//! - [`corpus`]: record- and attribute-level corpus generation
//! - [`model`]: tokenizer, transformer matcher, fine-tuning, checkpoints
//! - [`baseline`]: gestalt string-similarity matcher
//! - [`eval`]: zero-shot evaluation, test downsampling, aggregation
//! - [`perf`]: batch-size search, throughput measurement, cost estimates

pub mod baseline;
pub mod corpus;
pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod model;
pub mod perf;
pub mod serialize;

pub use baseline::{gestalt_ratio, StringSimConfig, StringSimMatcher};
pub use corpus::{
    build_corpus, gen_attributelevel, gen_recordlevel, split_validation, CorpusError,
    CorpusSample, FineTuneCorpus, GenerationConfig, Granularity,
};
pub use data::{
    dataset_stats, load_dataset, load_dataset_with, write_dataset, DataError, DatasetStats,
    LabeledPair, LoadOptions, MatchLabel, PairDataset, Record,
};
pub use error::{ErrorClass, Fallible};
pub use eval::{aggregate, downsample_test, evaluate_zero_shot, EvalConfig, EvalError, EvalReport, EvalSummary};
pub use filter::{split_positives, train_difficulty_classifier, DifficultyClassifier, FilterError, FilterOptions, FilterReport};
pub use model::{
    finetune, predict_pairs, swap_base_model, LossCurve, Matcher, MatcherModel, MatchPrediction,
    ModelConfig, ModelError, TrainConfig, TrainPhase, TrainReport,
};
pub use perf::{
    compare_pricing, estimate_cost, find_max_batch_size, measure_throughput, BatchSearchReport,
    CostEstimate, PerfError, PricingEntry, PricingTable, ThroughputReport,
};
pub use serialize::{
    render_training_dump, serialize_attribute_pair, serialize_record_pair,
    serialize_record_pair_named, AttributeMarker, Enclosure, QuestionPosition, SerializeError,
    SerializationVariant, MISSING_VALUE_TOKEN, QUESTION,
};
