//! The command implementations behind the clap surface. Each resolves its
//! effective config (flag > config-file section > default), does the work
//! through the core crate, prints a JSON result, and writes a run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use tinymatch_core::baseline::{StringSimConfig, StringSimMatcher};
use tinymatch_core::corpus::{
    build_corpus_with, read_corpus, write_corpus, AttributeMode, CachingFilter, FilterProvider,
    FreshFilter, GenerationConfig,
};
use tinymatch_core::data::{
    dataset_stats, load_dataset, load_dataset_with, LoadOptions, PairDataset,
};
use tinymatch_core::eval::{evaluate_zero_shot, EvalConfig};
use tinymatch_core::model::{
    finetune_with, swap_base_model, BatchSize, Matcher, MatcherModel, TrainConfig,
};
use tinymatch_core::perf::{
    estimate_cost as core_estimate_cost, compare_pricing, find_max_batch_size_bounded,
    measure_throughput, synthetic_prompts, PricingTable, DEFAULT_BATCH_CEILING,
    DEFAULT_TIMED_BATCHES,
};
use tinymatch_core::serialize::SerializationVariant;

use crate::manifest::{manifest_path, ManifestBuilder};
use crate::rows::load_pair_rows;
use crate::{
    BaselineArgs, BenchArgs, CliError, CostArgs, EvalArgs, GenCorpusArgs, IngestArgs,
    PredictArgs, TrainArgs,
};

/// Flag > config-file key > default.
fn pick<T: DeserializeOwned>(
    flag: Option<T>,
    section: Option<&Value>,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match section.and_then(|s| s.get(key)) {
        Some(raw) => serde_json::from_value(raw.clone())
            .map_err(|e| CliError::validation(format!("config file key `{key}`: {e}"))),
        None => Ok(default),
    }
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializes"));
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).expect("serializes");
    fs::write(path, body).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Load every subdirectory of `dir` that contains a manifest.json, sorted by
/// directory name for deterministic ordering.
fn load_dataset_dirs(dir: &Path) -> Result<Vec<(PathBuf, PairDataset)>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no dataset subdirectories (each needs a manifest.json)",
            dir.display()
        )));
    }
    subdirs
        .into_iter()
        .map(|p| Ok((p.clone(), load_dataset(&p)?)))
        .collect()
}

pub fn ingest(args: IngestArgs) -> Result<(), CliError> {
    let mut run = ManifestBuilder::new("ingest");
    run.input_dataset_dir(&args.dir)?;
    let dataset = load_dataset_with(&args.dir, LoadOptions { strict: args.strict })?;
    let stats = dataset_stats(&dataset);
    if let Some(out) = &args.out {
        write_json(out, &stats)?;
        run.output(out);
    }
    print_json(&stats);
    run.config(serde_json::json!({
        "dir": args.dir.display().to_string(),
        "strict": args.strict,
    }));
    run.write(&manifest_path(args.manifest, args.out.as_deref()))
}

pub fn gen_corpus(args: GenCorpusArgs, section: Option<&Value>) -> Result<(), CliError> {
    let defaults = GenerationConfig::default();
    let cfg = GenerationConfig {
        n_r: pick(args.n_r, section, "n-r", defaults.n_r)?,
        n_a: pick(args.n_a, section, "n-a", defaults.n_a)?,
        seed: pick(args.seed, section, "seed", defaults.seed)?,
        enable_automl_filter: if args.no_automl {
            false
        } else {
            pick(None, section, "automl", defaults.enable_automl_filter)?
        },
        enable_flip: if args.no_flip {
            false
        } else {
            pick(None, section, "flip", defaults.enable_flip)?
        },
        attribute_mode: {
            let raw = pick(args.attr_mode, section, "attr-mode", "mix".to_string())?;
            match raw.as_str() {
                "mix" => AttributeMode::Mix,
                "sequential" => AttributeMode::Sequential,
                "off" => AttributeMode::Off,
                other => {
                    return Err(CliError::validation(format!(
                        "unknown attr-mode `{other}` (expected mix, sequential, off)"
                    )))
                }
            }
        },
    };
    let variant_str = pick(
        args.variant,
        section,
        "variant",
        SerializationVariant::default().to_string(),
    )?;
    let variant = SerializationVariant::from_str(&variant_str)?;

    let mut run = ManifestBuilder::new("gen-corpus");
    let loaded = load_dataset_dirs(&args.datasets)?;
    for (path, _) in &loaded {
        run.input_dataset_dir(path)?;
    }
    let datasets: Vec<PairDataset> = loaded.into_iter().map(|(_, d)| d).collect();

    let mut fresh;
    let mut caching;
    let filters: &mut dyn FilterProvider = match &args.cache_dir {
        Some(dir) => {
            caching = CachingFilter {
                dir: dir.clone(),
                options: Default::default(),
            };
            &mut caching
        }
        None => {
            fresh = FreshFilter::default();
            &mut fresh
        }
    };
    let corpus = build_corpus_with(&datasets, &args.target, &cfg, &variant, filters)?;
    write_corpus(&corpus, &args.out)?;
    println!(
        "{} samples ({} record-level datasets, target `{}` excluded) -> {}",
        corpus.samples.len(),
        corpus.transfer_datasets.len(),
        args.target,
        args.out.display()
    );

    run.seed(cfg.seed);
    run.config(serde_json::json!({
        "target": args.target,
        "generation": cfg,
        "variant": variant.to_string(),
        "cache_dir": args.cache_dir.as_ref().map(|d| d.display().to_string()),
    }));
    run.output(&args.out);
    run.write(&manifest_path(args.manifest, Some(&args.out)))
}

pub fn train(args: TrainArgs, section: Option<&Value>) -> Result<(), CliError> {
    let defaults = TrainConfig::default();
    let batch_size = {
        let raw = pick(args.batch_size, section, "batch-size", String::new())?;
        if raw.is_empty() {
            defaults.batch_size
        } else if raw == "auto" {
            BatchSize::Auto
        } else {
            match raw.parse::<usize>() {
                Ok(n) if n > 0 => BatchSize::Fixed(n),
                _ => {
                    return Err(CliError::validation(format!(
                        "batch-size must be a positive integer or `auto`, got `{raw}`"
                    )))
                }
            }
        }
    };
    let cfg = TrainConfig {
        learning_rate: pick(args.learning_rate, section, "learning-rate", defaults.learning_rate)?,
        weight_decay: pick(args.weight_decay, section, "weight-decay", defaults.weight_decay)?,
        max_epochs: pick(args.max_epochs, section, "max-epochs", defaults.max_epochs)?,
        patience: pick(args.patience, section, "patience", defaults.patience)?,
        improvement_epsilon: pick(
            args.improvement_epsilon,
            section,
            "improvement-epsilon",
            defaults.improvement_epsilon,
        )?,
        batch_size,
        max_sequence_length: pick(args.max_seq, section, "max-seq", defaults.max_sequence_length)?,
        validation_fraction: pick(
            args.validation_fraction,
            section,
            "validation-fraction",
            defaults.validation_fraction,
        )?,
        seed: pick(args.seed, section, "seed", defaults.seed)?,
    };
    let preset = pick(
        args.base_model,
        section,
        "base-model",
        tinymatch_core::model::DEFAULT_BASE_MODEL.to_string(),
    )?;

    let mut run = ManifestBuilder::new("train");
    run.input(&args.corpus)?;
    let corpus = read_corpus(&args.corpus)?;
    let scaffold = swap_base_model(&preset)?;
    let model = finetune_with(&corpus, &scaffold, &cfg)?;
    model.save_checkpoint(&args.out)?;

    let report = model.report.as_ref().expect("training produces a report");
    for phase in &report.phases {
        println!(
            "phase {}: best val F1 {:.4} at epoch {} ({} epochs run)",
            phase.name, phase.best_val_f1, phase.best_epoch, phase.epochs_run
        );
    }
    println!("checkpoint -> {}", args.out.display());

    run.seed(cfg.seed);
    run.config(serde_json::json!({ "base_model": preset, "train": cfg }));
    run.output(&args.out);
    run.write(&manifest_path(args.manifest, Some(&args.out)))
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let mut run = ManifestBuilder::new("predict");
    for name in ["config.json", "tokenizer.json", "provenance.json", "weights.safetensors"] {
        run.input(&args.model.join(name))?;
    }
    run.input(&args.input)?;

    let model = MatcherModel::load_checkpoint(&args.model)?;
    let rows = load_pair_rows(&args.input)?;
    let predictions = model.predict(&rows.pairs)?;

    let file = fs::File::create(&args.out)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for (i, p) in predictions.iter().enumerate() {
        let line = serde_json::json!({
            "index": i,
            "label": p.label,
            "score": p.score,
        });
        writeln!(w, "{line}").map_err(|e| CliError::runtime(format!("{}: {e}", args.out.display())))?;
    }
    w.flush()
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out.display())))?;
    println!("{} predictions -> {}", predictions.len(), args.out.display());

    // When every input row carries a gold label, report agreement.
    if !rows.labels.is_empty() && rows.labels.iter().all(Option::is_some) {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (pred, gold) in predictions.iter().zip(&rows.labels) {
            match (pred.label.is_match(), gold.unwrap().is_match()) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let (p, r, f1) = tinymatch_core::eval::prf_from_counts(tp, fp, fn_);
        println!("gold labels present: P {p:.4} R {r:.4} F1 {f1:.4}");
    }

    run.config(serde_json::json!({
        "model": args.model.display().to_string(),
        "input": args.input.display().to_string(),
        "attributes": rows.attributes,
    }));
    run.output(&args.out);
    run.write(&manifest_path(args.manifest, Some(&args.out)))
}

fn eval_with_matcher(
    run: &mut ManifestBuilder,
    datasets_dir: &Path,
    target: &str,
    matcher: &dyn Matcher,
    cfg: &EvalConfig,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let loaded = load_dataset_dirs(datasets_dir)?;
    for (path, dataset) in &loaded {
        if dataset.name == target {
            run.input_dataset_dir(path)?;
        }
    }
    let datasets: Vec<PairDataset> = loaded.into_iter().map(|(_, d)| d).collect();
    let report = evaluate_zero_shot(&datasets, target, matcher, cfg)?;
    if let Some(out) = out {
        write_json(out, &report)?;
        run.output(out);
    }
    print_json(&report);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let mut run = ManifestBuilder::new("eval");
    for name in ["config.json", "tokenizer.json", "provenance.json", "weights.safetensors"] {
        run.input(&args.model.join(name))?;
    }
    let model = MatcherModel::load_checkpoint(&args.model)?;
    let cfg = EvalConfig {
        downsample: !args.no_downsample,
        seed: args.seed.unwrap_or(EvalConfig::default().seed),
        pair_override: None,
    };
    eval_with_matcher(
        &mut run,
        &args.datasets,
        &args.target,
        &model,
        &cfg,
        args.out.as_deref(),
    )?;
    run.seed(cfg.seed);
    run.config(serde_json::json!({
        "target": args.target,
        "model": args.model.display().to_string(),
        "downsample": cfg.downsample,
    }));
    run.write(&manifest_path(args.manifest, args.out.as_deref()))
}

pub fn baseline_stringsim(args: BaselineArgs) -> Result<(), CliError> {
    let mut run = ManifestBuilder::new("baseline-stringsim");
    let sim_cfg = StringSimConfig {
        threshold: args.threshold.unwrap_or(StringSimConfig::default().threshold),
        ..StringSimConfig::default()
    };
    let matcher = StringSimMatcher::new(sim_cfg.clone());
    let cfg = EvalConfig {
        downsample: !args.no_downsample,
        seed: args.seed.unwrap_or(EvalConfig::default().seed),
        pair_override: None,
    };
    eval_with_matcher(
        &mut run,
        &args.datasets,
        &args.target,
        &matcher,
        &cfg,
        args.out.as_deref(),
    )?;
    run.seed(cfg.seed);
    run.config(serde_json::json!({
        "target": args.target,
        "threshold": sim_cfg.threshold,
        "downsample": cfg.downsample,
    }));
    run.write(&manifest_path(args.manifest, args.out.as_deref()))
}

#[derive(Serialize)]
struct BenchOutput {
    search: tinymatch_core::perf::BatchSearchReport,
    throughput: tinymatch_core::perf::ThroughputReport,
}

pub fn bench_throughput(args: BenchArgs, section: Option<&Value>) -> Result<(), CliError> {
    let batches = pick(args.batches, section, "batches", DEFAULT_TIMED_BATCHES)?;
    let ceiling = pick(args.ceiling, section, "ceiling", DEFAULT_BATCH_CEILING)?;
    let n_prompts = pick(args.prompts, section, "prompts", 256)?;
    let prompt_len = pick(args.prompt_len, section, "prompt-len", 160)?;
    let seed = pick(args.seed, section, "seed", 42u64)?;

    let mut run = ManifestBuilder::new("bench-throughput");
    let model;
    let baseline;
    let matcher: &dyn Matcher = match (&args.model, args.baseline) {
        (Some(dir), false) => {
            for name in ["config.json", "tokenizer.json", "provenance.json", "weights.safetensors"] {
                run.input(&dir.join(name))?;
            }
            model = MatcherModel::load_checkpoint(dir)?;
            &model
        }
        (None, true) => {
            baseline = StringSimMatcher::default();
            &baseline
        }
        _ => {
            return Err(CliError::validation(
                "pass exactly one of --model <DIR> or --baseline",
            ))
        }
    };

    let prompts = synthetic_prompts(n_prompts, prompt_len, seed);
    let search = find_max_batch_size_bounded(matcher, &prompts[0], ceiling)?;
    let throughput = measure_throughput(matcher, &prompts, search.max_batch_size, batches)?;
    let output = BenchOutput { search, throughput };
    if let Some(out) = &args.out {
        write_json(out, &output)?;
        run.output(out);
    }
    print_json(&output);

    run.seed(seed);
    run.config(serde_json::json!({
        "batches": batches,
        "ceiling": ceiling,
        "prompts": n_prompts,
        "prompt_len": prompt_len,
        "matcher": output.throughput.model_id,
    }));
    run.write(&manifest_path(args.manifest, args.out.as_deref()))
}

#[derive(Serialize)]
struct CostOutput {
    estimate: tinymatch_core::perf::CostEstimate,
    display: String,
    comparison: Vec<tinymatch_core::perf::PricingRow>,
}

pub fn estimate_cost(args: CostArgs, section: Option<&Value>) -> Result<(), CliError> {
    let mut run = ManifestBuilder::new("estimate-cost");
    let (throughput, factor_from_report) = match (&args.throughput, &args.report) {
        (Some(t), None) => (*t, None),
        (None, Some(path)) => {
            run.input(path)?;
            let raw = fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            // Accept both a bare throughput report and bench-throughput output.
            let value: Value = serde_json::from_str(&raw)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            let report = value.get("throughput").unwrap_or(&value);
            let t = report
                .get("tokens_per_second")
                .and_then(Value::as_f64)
                .ok_or_else(|| {
                    CliError::validation(format!(
                        "{}: no tokens_per_second field",
                        path.display()
                    ))
                })?;
            (t, report.get("extrapolation_factor").and_then(Value::as_f64))
        }
        _ => {
            return Err(CliError::validation(
                "pass exactly one of --throughput or --report",
            ))
        }
    };
    let hourly_price = match args.hourly_price {
        Some(p) => p,
        None => pick(None, section, "hourly-price", f64::NAN)?,
    };
    if hourly_price.is_nan() {
        return Err(CliError::validation("--hourly-price is required"));
    }
    // Default factor 2: measured throughput is extrapolated to a reference
    // machine with twice the accelerators, inference being embarrassingly
    // parallel.
    let factor = pick(
        args.extrapolation_factor,
        section,
        "extrapolation-factor",
        factor_from_report.unwrap_or(2.0),
    )?;
    let name = args.name.unwrap_or_else(|| "self-hosted".to_string());

    let pricing = match &args.pricing_config {
        Some(path) => {
            run.input(path)?;
            PricingTable::from_file(path)?
        }
        None => PricingTable::builtin(),
    };

    let estimate = core_estimate_cost(throughput, hourly_price, factor)?;
    let comparison = compare_pricing(&[(name.clone(), estimate.clone())], &pricing);
    let output = CostOutput {
        display: format!("{} per 1K tokens", estimate.display_cost()),
        estimate,
        comparison,
    };
    if let Some(out) = &args.out {
        write_json(out, &output)?;
        run.output(out);
    }
    println!("{} per 1K tokens", output.estimate.display_cost());
    for row in &output.comparison {
        println!(
            "  {:<24} ${:.7}  ({})",
            row.name, row.dollars_per_1k_tokens, row.scenario
        );
    }

    run.config(serde_json::json!({
        "tokens_per_second": throughput,
        "hourly_price": hourly_price,
        "extrapolation_factor": factor,
        "pricing": pricing.version,
        "name": name,
    }));
    run.write(&manifest_path(args.manifest, args.out.as_deref()))
}
