//! Command-line entry point wiring configuration, stages, and reports.
//!
//! Configuration sources merge in precedence order: flags, then the optional
//! TOML config file, then environment variables, then built-in defaults.
//! Exit codes follow the conventional sysexits values (64 usage, 65 data,
//! 66 missing input, 74 i/o) plus 2 for partially failed runs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::backend::{
    BackendClient, CompletionCache, GenerationConfig, HttpTransport, MockScript, MockTransport,
    RetryPolicy,
};
use crate::corpus::{
    align, load_ground_truth, AnnotationTable, Corpus, CorpusError, CorpusFormat, FeatureSchema,
};
use crate::fixtures;
use crate::metrics::{evaluate_run, MetricTable};
use crate::pipeline::{
    run_full, run_translation_stage, save_manifests, PipelineError, PredictionSet, RunInputs,
    RunVariant, VariantComparison,
};
use crate::promptkit::{ExemplarSet, PromptError};
use crate::report::{sanitize_label, write_reports, ReportError};

pub const EX_OK: i32 = 0;
pub const EX_PARTIAL: i32 = 2;
pub const EX_USAGE: i32 = 64;
pub const EX_DATAERR: i32 = 65;
pub const EX_NOINPUT: i32 = 66;
pub const EX_IOERR: i32 = 74;

pub const ENV_BACKEND_URL: &str = "CLINEX_BACKEND_URL";
pub const ENV_BACKEND_TOKEN: &str = "CLINEX_BACKEND_TOKEN";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("missing input: {0}")]
    MissingSnapshot(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EX_USAGE,
            CliError::Data(_) => EX_DATAERR,
            CliError::MissingSnapshot(_) => EX_NOINPUT,
            CliError::Io(_) => EX_IOERR,
        }
    }
}

fn classify_corpus(e: CorpusError) -> CliError {
    match e {
        CorpusError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn classify_prompt(e: PromptError) -> CliError {
    match e {
        PromptError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn classify_pipeline(e: PipelineError) -> CliError {
    match e {
        PipelineError::Io { .. } => CliError::Io(e.to_string()),
        PipelineError::Corpus(inner) => classify_corpus(inner),
        PipelineError::Prompt(inner) => classify_prompt(inner),
        other => CliError::Data(other.to_string()),
    }
}

fn classify_report(e: ReportError) -> CliError {
    match e {
        ReportError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "clinex",
    version,
    about = "Batch extraction of 13 binary clinical features from call transcripts via few-shot prompting, with imbalance-aware evaluation",
    subcommand_negates_reqs = true
)]
struct Cli {
    /// Write the bundled synthetic demo corpus, ground truth, mock script,
    /// schema, and exemplars into DIR, then exit
    #[arg(long, value_name = "DIR", global = true)]
    seed_fixtures: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Translate a persian corpus to english (one transcript per input)
    Translate(CommonArgs),
    /// Extract features for the requested variants, writing stage snapshots
    Extract(CommonArgs),
    /// Score extraction snapshots against ground truth
    Evaluate(CommonArgs),
    /// Render report artifacts from evaluation outputs
    Report(CommonArgs),
    /// Full pipeline: stages, evaluation, and reports in one go
    Run(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// TOML config file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Transcript corpus (JSONL by default)
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Corpus file format: jsonl or csv
    #[arg(long, value_name = "FMT")]
    corpus_format: Option<String>,
    /// Ground-truth CSV (header: id plus the 13 canonical feature ids)
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Feature schema JSON; defaults to the built-in schema
    #[arg(long, value_name = "FILE")]
    schema: Option<PathBuf>,
    /// Few-shot exemplars JSON; defaults to the built-in set
    #[arg(long, value_name = "FILE")]
    exemplars: Option<PathBuf>,
    /// Run variant (repeatable): translated_english or direct_persian
    #[arg(long = "variant", value_name = "VARIANT")]
    variants: Vec<String>,
    /// Extraction model identifier sent to the backend
    #[arg(long, value_name = "ID")]
    model_id: Option<String>,
    /// Translator model identifier; defaults to the extraction model
    #[arg(long, value_name = "ID")]
    translation_model_id: Option<String>,
    /// Inference endpoint base URL (chat-completions contract); mutually
    /// exclusive with --mock-script
    #[arg(long, value_name = "URL")]
    backend_url: Option<String>,
    /// Deterministic mock backend script; mutually exclusive with
    /// --backend-url
    #[arg(long, value_name = "FILE")]
    mock_script: Option<PathBuf>,
    /// Maximum in-flight requests per stage
    #[arg(long, value_name = "N")]
    parallelism: Option<usize>,
    /// Completion cache directory; reruns resume via cache hits
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Output directory for snapshots and reports
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Initial retry backoff in milliseconds (default 1000)
    #[arg(long, value_name = "MS")]
    retry_backoff_ms: Option<u64>,
    /// Override the translation-stage temperature (default 0.3)
    #[arg(long, value_name = "T")]
    translation_temperature: Option<f64>,
    /// Override the translation-stage token limit (default 2048)
    #[arg(long, value_name = "N")]
    translation_max_new_tokens: Option<u32>,
    /// Override the extraction-stage token limit (default 512)
    #[arg(long, value_name = "N")]
    extraction_max_new_tokens: Option<u32>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    corpus_format: Option<String>,
    truth: Option<PathBuf>,
    schema: Option<PathBuf>,
    exemplars: Option<PathBuf>,
    variants: Option<Vec<String>>,
    model_id: Option<String>,
    translation_model_id: Option<String>,
    backend_url: Option<String>,
    mock_script: Option<PathBuf>,
    parallelism: Option<usize>,
    cache_dir: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    retry_backoff_ms: Option<u64>,
    translation_temperature: Option<f64>,
    translation_max_new_tokens: Option<u32>,
    extraction_max_new_tokens: Option<u32>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub corpus_format: CorpusFormat,
    pub truth: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub variants: Vec<RunVariant>,
    pub model_id: String,
    pub translation_model_id: Option<String>,
    pub backend_url: Option<String>,
    pub backend_token: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub parallelism: usize,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub retry_backoff_ms: u64,
    pub translation_temperature: f64,
    pub translation_max_new_tokens: u32,
    pub extraction_max_new_tokens: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            corpus_format: CorpusFormat::Jsonl,
            truth: None,
            schema: None,
            exemplars: None,
            variants: vec![RunVariant::TranslatedEnglish],
            model_id: String::new(),
            translation_model_id: None,
            backend_url: None,
            backend_token: None,
            mock_script: None,
            parallelism: 1,
            cache_dir: None,
            out_dir: PathBuf::from("clinex-out"),
            retry_backoff_ms: 1000,
            translation_temperature: 0.3,
            translation_max_new_tokens: 2048,
            extraction_max_new_tokens: 512,
        }
    }
}

impl RunConfig {
    fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("config {}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };

        let defaults = RunConfig::default();
        let variants = match args
            .variants
            .is_empty()
            .then(|| file.variants.clone())
            .flatten()
        {
            Some(from_file) => parse_variants(&from_file)?,
            None if args.variants.is_empty() => defaults.variants.clone(),
            None => parse_variants(&args.variants)?,
        };

        let corpus_format = match args
            .corpus_format
            .clone()
            .or(file.corpus_format)
            .as_deref()
        {
            None | Some("jsonl") => CorpusFormat::Jsonl,
            Some("csv") => CorpusFormat::Csv,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "unknown corpus format {other:?}; expected jsonl or csv"
                )))
            }
        };

        let backend_url = args
            .backend_url
            .clone()
            .or(file.backend_url)
            .or_else(|| std::env::var(ENV_BACKEND_URL).ok().filter(|s| !s.is_empty()));
        let mock_script = args.mock_script.clone().or(file.mock_script);
        let model_id = args
            .model_id
            .clone()
            .or(file.model_id)
            .unwrap_or_else(|| if mock_script.is_some() { "mock".into() } else { String::new() });

        Ok(RunConfig {
            corpus: args.corpus.clone().or(file.corpus),
            corpus_format,
            truth: args.truth.clone().or(file.truth),
            schema: args.schema.clone().or(file.schema),
            exemplars: args.exemplars.clone().or(file.exemplars),
            variants,
            model_id,
            translation_model_id: args.translation_model_id.clone().or(file.translation_model_id),
            backend_url,
            backend_token: std::env::var(ENV_BACKEND_TOKEN).ok().filter(|s| !s.is_empty()),
            mock_script,
            parallelism: args.parallelism.or(file.parallelism).unwrap_or(defaults.parallelism).max(1),
            cache_dir: args.cache_dir.clone().or(file.cache_dir),
            out_dir: args.out_dir.clone().or(file.out_dir).unwrap_or(defaults.out_dir),
            retry_backoff_ms: args
                .retry_backoff_ms
                .or(file.retry_backoff_ms)
                .unwrap_or(defaults.retry_backoff_ms),
            translation_temperature: args
                .translation_temperature
                .or(file.translation_temperature)
                .unwrap_or(defaults.translation_temperature),
            translation_max_new_tokens: args
                .translation_max_new_tokens
                .or(file.translation_max_new_tokens)
                .unwrap_or(defaults.translation_max_new_tokens),
            extraction_max_new_tokens: args
                .extraction_max_new_tokens
                .or(file.extraction_max_new_tokens)
                .unwrap_or(defaults.extraction_max_new_tokens),
        })
    }

    fn require_corpus(&self) -> Result<&Path, CliError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::Usage("--corpus is required".into()))
    }

    fn require_truth(&self) -> Result<&Path, CliError> {
        self.truth
            .as_deref()
            .ok_or_else(|| CliError::Usage("--truth is required".into()))
    }

    fn load_schema(&self) -> Result<FeatureSchema, CliError> {
        match &self.schema {
            Some(path) => FeatureSchema::load(path).map_err(classify_corpus),
            None => Ok(fixtures::default_schema()),
        }
    }

    fn load_exemplars(&self) -> Result<ExemplarSet, CliError> {
        match &self.exemplars {
            Some(path) => ExemplarSet::load(path).map_err(classify_prompt),
            None => Ok(fixtures::default_exemplars()),
        }
    }

    fn load_corpus(&self) -> Result<Corpus, CliError> {
        Corpus::load(self.require_corpus()?, self.corpus_format).map_err(classify_corpus)
    }

    fn load_truth(&self, schema: &FeatureSchema) -> Result<AnnotationTable, CliError> {
        load_ground_truth(self.require_truth()?, schema).map_err(classify_corpus)
    }

    /// Builds the backend client. Exactly one of the mock script and the
    /// endpoint URL must be configured.
    fn build_client(&self, schema: &FeatureSchema) -> Result<BackendClient, CliError> {
        let transport: Box<dyn crate::backend::Transport> =
            match (&self.mock_script, &self.backend_url) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage(
                        "--mock-script and --backend-url are mutually exclusive".into(),
                    ))
                }
                (None, None) => {
                    return Err(CliError::Usage(format!(
                        "a backend is required: pass --backend-url (or set {ENV_BACKEND_URL}) or --mock-script"
                    )))
                }
                (Some(script_path), None) => {
                    let script = MockScript::load(script_path)
                        .map_err(|e| CliError::Io(format!("{}: {e}", script_path.display())))?;
                    Box::new(MockTransport::new(script, schema.clone()))
                }
                (None, Some(url)) => {
                    if self.model_id.is_empty() {
                        return Err(CliError::Usage(
                            "--model-id is required with --backend-url".into(),
                        ));
                    }
                    Box::new(HttpTransport::new(url, self.backend_token.clone()))
                }
            };
        let mut client = BackendClient::new(transport).with_retry(RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(self.retry_backoff_ms),
        });
        if let Some(dir) = &self.cache_dir {
            let cache = CompletionCache::open(dir)
                .map_err(|e| CliError::Io(format!("cache {}: {e}", dir.display())))?;
            client = client.with_cache(cache);
        }
        Ok(client)
    }

    fn translation_config(&self) -> GenerationConfig {
        let model = self
            .translation_model_id
            .clone()
            .unwrap_or_else(|| self.model_id.clone());
        GenerationConfig {
            model_id: model,
            temperature: self.translation_temperature,
            max_new_tokens: self.translation_max_new_tokens,
            sampling_enabled: true,
        }
    }

    fn extraction_config(&self) -> GenerationConfig {
        GenerationConfig {
            model_id: self.model_id.clone(),
            temperature: 0.0,
            max_new_tokens: self.extraction_max_new_tokens,
            sampling_enabled: false,
        }
    }

    fn extraction_snapshot_path(&self, variant: RunVariant) -> PathBuf {
        self.out_dir.join(format!("extraction_{}.jsonl", variant.as_str()))
    }
}

fn parse_variants(raw: &[String]) -> Result<Vec<RunVariant>, CliError> {
    let mut variants = Vec::new();
    for s in raw {
        let v = RunVariant::parse(s).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown variant {s:?}; expected translated_english or direct_persian"
            ))
        })?;
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    Ok(variants)
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `translate`: persian corpus in, english corpus JSONL out. Exit 0 on full
/// success, 2 when any item failed (partial output still written).
pub fn cmd_translate(config: &RunConfig) -> Result<i32, CliError> {
    let schema = config.load_schema()?;
    let corpus = config.load_corpus()?;
    let client = config.build_client(&schema)?;
    ensure_out_dir(&config.out_dir)?;

    let (translated, report) = run_translation_stage(
        &corpus,
        &client,
        &config.translation_config(),
        config.parallelism,
    )
    .map_err(classify_pipeline)?;

    let out_path = config.out_dir.join("translation.jsonl");
    translated.save_jsonl(&out_path).map_err(classify_corpus)?;
    eprintln!(
        "translated {} transcripts to {} ({} failed)",
        report.items,
        out_path.display(),
        report.failed_ids.len()
    );
    for id in &report.failed_ids {
        eprintln!("translation failed: {id}");
    }
    Ok(if report.failed_ids.is_empty() { EX_OK } else { EX_PARTIAL })
}

/// `extract`: runs the extraction stage per variant over a corpus that
/// already matches each variant's language, writing stage snapshots, raw
/// completions, and the run manifest.
pub fn cmd_extract(config: &RunConfig) -> Result<i32, CliError> {
    let schema = config.load_schema()?;
    let exemplars = config.load_exemplars()?;
    let corpus = config.load_corpus()?;
    let client = config.build_client(&schema)?;
    ensure_out_dir(&config.out_dir)?;
    ensure_out_dir(&config.out_dir.join("completions"))?;

    let mut manifests = Vec::new();
    let mut any_failed = false;
    for &variant in &config.variants {
        let translation_config = config.translation_config();
        let extraction_config = config.extraction_config();
        let mut manifest = crate::pipeline::RunManifest::new(
            variant,
            (variant == RunVariant::TranslatedEnglish).then_some(&translation_config),
            &extraction_config,
            &corpus.digest(),
            &schema.digest(),
            &exemplars.digest(),
        );
        let model_label = format!("{} ({})", config.model_id, variant.label_suffix());
        let (predictions, report) = crate::pipeline::run_extraction_stage(
            &corpus,
            variant,
            &exemplars,
            &schema,
            &client,
            &extraction_config,
            config.parallelism,
            &manifest.run_id,
            &model_label,
        )
        .map_err(classify_pipeline)?;
        manifest.mark_stage("extraction", report.items, report.failed_ids.len() as u64);
        any_failed |= !report.failed_ids.is_empty();

        predictions
            .save(&config.extraction_snapshot_path(variant))
            .map_err(classify_pipeline)?;
        write_text(
            &config
                .out_dir
                .join("completions")
                .join(format!("{}.jsonl", variant.as_str())),
            &predictions.completions_jsonl(),
        )?;
        manifests.push(manifest);
    }
    save_manifests(&manifests, &config.out_dir.join("run.json")).map_err(classify_pipeline)?;
    Ok(if any_failed { EX_PARTIAL } else { EX_OK })
}

fn load_snapshot(config: &RunConfig, variant: RunVariant) -> Result<PredictionSet, CliError> {
    let path = config.extraction_snapshot_path(variant);
    if !path.exists() {
        return Err(CliError::MissingSnapshot(path.display().to_string()));
    }
    PredictionSet::load(&path).map_err(classify_pipeline)
}

fn evaluate_snapshot(
    set: &PredictionSet,
    truth: &AnnotationTable,
    schema: &FeatureSchema,
) -> Result<MetricTable, CliError> {
    if set.schema_digest != schema.digest() {
        return Err(CliError::Data(format!(
            "snapshot for {} was produced with a different schema",
            set.model_label
        )));
    }
    let annotated: Vec<_> = set
        .records
        .iter()
        .filter(|r| truth.get(&r.transcript_id).is_some())
        .map(|r| r.binary.clone())
        .collect();
    if annotated.is_empty() {
        return Err(CliError::Data(
            "no snapshot transcript has a ground-truth row".into(),
        ));
    }
    evaluate_run(&annotated, truth, schema, &set.model_label)
        .map_err(|e| CliError::Data(e.to_string()))
}

/// `evaluate`: consumes extraction snapshots and ground truth, writing
/// metrics_<model>.csv and metrics_<model>.json per variant.
pub fn cmd_evaluate(config: &RunConfig) -> Result<i32, CliError> {
    let schema = config.load_schema()?;
    let truth = config.load_truth(&schema)?;
    ensure_out_dir(&config.out_dir)?;

    for &variant in &config.variants {
        let set = load_snapshot(config, variant)?;
        let table = evaluate_snapshot(&set, &truth, &schema)?;
        let label = sanitize_label(&table.model_label);
        write_text(&config.out_dir.join(format!("metrics_{label}.csv")), &table.to_csv())?;
        write_text(&config.out_dir.join(format!("metrics_{label}.json")), &table.to_json())?;
    }
    Ok(EX_OK)
}

/// `report`: renders the report bundle from previously written snapshots
/// and metric tables.
pub fn cmd_report(config: &RunConfig) -> Result<i32, CliError> {
    let schema = config.load_schema()?;
    ensure_out_dir(&config.out_dir)?;

    let mut sets = Vec::new();
    let mut tables = Vec::new();
    for &variant in &config.variants {
        let set = load_snapshot(config, variant)?;
        let metrics_path = config
            .out_dir
            .join(format!("metrics_{}.json", sanitize_label(&set.model_label)));
        if !metrics_path.exists() {
            return Err(CliError::MissingSnapshot(metrics_path.display().to_string()));
        }
        let json = fs::read_to_string(&metrics_path)
            .map_err(|e| CliError::Io(format!("{}: {e}", metrics_path.display())))?;
        let table = MetricTable::from_json_str(&json)
            .map_err(|e| CliError::Data(format!("{}: {e}", metrics_path.display())))?;
        sets.push(set);
        tables.push(table);
    }

    let table_refs: Vec<&MetricTable> = tables.iter().collect();
    let set_refs: Vec<&PredictionSet> = sets.iter().collect();
    write_reports(&config.out_dir, &schema, &table_refs, &set_refs).map_err(classify_report)?;
    write_comparison_if_both(config, &tables)?;
    Ok(EX_OK)
}

fn write_comparison_if_both(config: &RunConfig, tables: &[MetricTable]) -> Result<(), CliError> {
    let english = tables.iter().find(|t| t.model_label.ends_with("(English)"));
    let persian = tables.iter().find(|t| t.model_label.ends_with("(Persian)"));
    if let (Some(e), Some(p)) = (english, persian) {
        let comparison = VariantComparison::build(e, p);
        write_text(&config.out_dir.join("comparison.csv"), &comparison.to_csv())?;
    }
    Ok(())
}

/// Outcome of a full `run`, surfaced for scripting and tests.
#[derive(Debug)]
pub struct RunSummary {
    pub exit_code: i32,
    /// Network (or mock) attempts issued; zero on a fully warm cache.
    pub backend_calls: u64,
    pub metric_labels: Vec<String>,
}

/// `run`: chains translation, extraction, evaluation, and reporting for the
/// requested variants. A failing variant is reported and skipped without
/// aborting the others.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let schema = config.load_schema()?;
    let exemplars = config.load_exemplars()?;
    let corpus = config.load_corpus()?;
    let truth = config.load_truth(&schema)?;
    let client = config.build_client(&schema)?;
    ensure_out_dir(&config.out_dir)?;
    ensure_out_dir(&config.out_dir.join("completions"))?;

    // surface coverage gaps early; evaluation runs on the intersection
    let aligned = align(&corpus, &truth).map_err(classify_corpus)?;
    if !aligned.coverage.unannotated.is_empty() {
        eprintln!(
            "warning: {} transcripts lack ground-truth rows",
            aligned.coverage.unannotated.len()
        );
    }
    if !aligned.coverage.orphan_annotations.is_empty() {
        eprintln!(
            "warning: {} ground-truth rows lack transcripts",
            aligned.coverage.orphan_annotations.len()
        );
    }

    let inputs = RunInputs {
        corpus: &corpus,
        truth: &truth,
        schema: &schema,
        exemplars: &exemplars,
        translation_config: config.translation_config(),
        extraction_config: config.extraction_config(),
        parallelism: config.parallelism,
    };
    let outcome = run_full(&inputs, &config.variants, &client);

    let mut manifests = Vec::new();
    let mut tables = Vec::new();
    let mut sets = Vec::new();
    let mut any_item_failed = false;
    let mut any_variant_failed = false;

    for run in &outcome.variants {
        match &run.result {
            Ok(v) => {
                if let Some(translated) = &v.translated {
                    translated
                        .save_jsonl(&config.out_dir.join("translation.jsonl"))
                        .map_err(classify_corpus)?;
                }
                v.predictions
                    .save(&config.extraction_snapshot_path(run.variant))
                    .map_err(classify_pipeline)?;
                write_text(
                    &config
                        .out_dir
                        .join("completions")
                        .join(format!("{}.jsonl", run.variant.as_str())),
                    &v.predictions.completions_jsonl(),
                )?;
                let label = sanitize_label(&v.metrics.model_label);
                write_text(
                    &config.out_dir.join(format!("metrics_{label}.csv")),
                    &v.metrics.to_csv(),
                )?;
                write_text(
                    &config.out_dir.join(format!("metrics_{label}.json")),
                    &v.metrics.to_json(),
                )?;
                any_item_failed |= !v.extraction_report.failed_ids.is_empty();
                if let Some(report) = &v.translation_report {
                    any_item_failed |= !report.failed_ids.is_empty();
                }
                manifests.push(v.manifest.clone());
                tables.push(v.metrics.clone());
                sets.push(v.predictions.clone());
            }
            Err(e) => {
                any_variant_failed = true;
                eprintln!("variant {} failed: {e}", run.variant);
            }
        }
    }

    if tables.is_empty() {
        return Err(CliError::Data("every requested variant failed".into()));
    }

    save_manifests(&manifests, &config.out_dir.join("run.json")).map_err(classify_pipeline)?;
    let table_refs: Vec<&MetricTable> = tables.iter().collect();
    let set_refs: Vec<&PredictionSet> = sets.iter().collect();
    write_reports(&config.out_dir, &schema, &table_refs, &set_refs).map_err(classify_report)?;
    if let Some(comparison) = &outcome.comparison {
        write_text(&config.out_dir.join("comparison.csv"), &comparison.to_csv())?;
    }

    for table in &tables {
        if let Some(summary) = table.summary_for(crate::metrics::MetricKind::MacroF1) {
            eprintln!(
                "{}: macro-F1 {} over {} transcripts ({} with missing fields)",
                table.model_label,
                crate::metrics::fmt_summary(summary),
                table.evaluated_transcripts,
                table.transcript_any_missing
            );
        }
    }

    Ok(RunSummary {
        exit_code: if any_variant_failed || any_item_failed {
            EX_PARTIAL
        } else {
            EX_OK
        },
        backend_calls: client.network_attempt_count(),
        metric_labels: tables.iter().map(|t| t.model_label.clone()).collect(),
    })
}

/// Parses arguments and dispatches. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EX_OK,
                _ => EX_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };

    if let Some(dir) = &cli.seed_fixtures {
        return match fixtures::write_fixtures(dir) {
            Ok(()) => {
                eprintln!("wrote demo fixtures to {}", dir.display());
                EX_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EX_IOERR
            }
        };
    }

    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (translate, extract, evaluate, report, run)");
        eprintln!("run with --help for usage");
        return EX_USAGE;
    };

    let result = match &command {
        Command::Translate(args) => RunConfig::resolve(args).and_then(|c| cmd_translate(&c)),
        Command::Extract(args) => RunConfig::resolve(args).and_then(|c| cmd_extract(&c)),
        Command::Evaluate(args) => RunConfig::resolve(args).and_then(|c| cmd_evaluate(&c)),
        Command::Report(args) => RunConfig::resolve(args).and_then(|c| cmd_report(&c)),
        Command::Run(args) => {
            RunConfig::resolve(args).and_then(|c| cmd_run(&c).map(|summary| summary.exit_code))
        }
    };

    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing_rejects_unknown_names() {
        assert!(parse_variants(&["translated_english".into()]).is_ok());
        assert!(parse_variants(&["klingon".into()]).is_err());
    }

    #[test]
    fn mutual_exclusivity_is_enforced() {
        let schema = fixtures::default_schema();
        let mut config = RunConfig {
            mock_script: Some(PathBuf::from("x.json")),
            backend_url: Some("http://localhost".into()),
            ..RunConfig::default()
        };
        assert!(matches!(
            config.build_client(&schema),
            Err(CliError::Usage(_))
        ));
        config.backend_url = None;
        config.mock_script = None;
        assert!(matches!(
            config.build_client(&schema),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn config_file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.toml");
        fs::write(
            &config_path,
            "model_id = \"from-file\"\nparallelism = 7\nout_dir = \"file-out\"\n",
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(config_path),
            model_id: Some("from-flag".into()),
            ..CommonArgs::default()
        };
        let resolved = RunConfig::resolve(&args).unwrap();
        assert_eq!(resolved.model_id, "from-flag");
        assert_eq!(resolved.parallelism, 7);
        assert_eq!(resolved.out_dir, PathBuf::from("file-out"));
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.toml");
        fs::write(&config_path, "definitely_not_a_key = 1\n").unwrap();
        let args = CommonArgs {
            config: Some(config_path),
            ..CommonArgs::default()
        };
        assert!(matches!(RunConfig::resolve(&args), Err(CliError::Usage(_))));
    }
}
