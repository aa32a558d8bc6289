//! Orchestration of the two-step procedure: translation stage, then
//! extraction stage, per run variant, with deterministic manifests and
//! JSONL snapshots. Stage outputs are persisted so that evaluation re-runs
//! never require re-inference.

use std::fmt;
use std::fs;
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendClient, BackendStatus, GenerationConfig};
use crate::corpus::{Corpus, CorpusError, FeatureSchema, Language, Transcript};
use crate::metrics::{evaluate_run, MetricTable, MetricsError};
use crate::parser::{
    parse_output, resolve_missing, BinaryFeatureVector, NoteKind, ParseNote, TriStateFeatureVector,
};
use crate::promptkit::{
    render_extraction_prompt, render_translation_prompt, ExemplarSet, PromptBundle, PromptError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus error: {0}")]
    Corpus(#[from] CorpusError),
    #[error("prompt error: {0}")]
    Prompt(#[from] PromptError),
    #[error("metrics error: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{stage} stage expects a {expected} corpus")]
    WrongCorpusLanguage { stage: &'static str, expected: Language },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed snapshot {path}: {reason}")]
    MalformedSnapshot { path: String, reason: String },
}

/// Text marker carried by transcripts whose translation failed. Retained,
/// not dropped: the extraction stage recognizes the marker and yields an
/// all-Missing vector so missing statistics reflect pipeline failures.
pub const TRANSLATION_FAILED_MARKER: &str = "<<translation failed>>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVariant {
    TranslatedEnglish,
    DirectPersian,
}

impl RunVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RunVariant::TranslatedEnglish => "translated_english",
            RunVariant::DirectPersian => "direct_persian",
        }
    }

    /// Language of the extraction prompt and of the corpus this variant
    /// consumes.
    pub fn prompt_language(self) -> Language {
        match self {
            RunVariant::TranslatedEnglish => Language::English,
            RunVariant::DirectPersian => Language::Persian,
        }
    }

    /// Column-label suffix used in reports.
    pub fn label_suffix(self) -> &'static str {
        match self {
            RunVariant::TranslatedEnglish => "English",
            RunVariant::DirectPersian => "Persian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "translated_english" => Some(RunVariant::TranslatedEnglish),
            "direct_persian" => Some(RunVariant::DirectPersian),
            _ => None,
        }
    }
}

impl fmt::Display for RunVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: String,
    pub completed: bool,
    pub items: u64,
    pub failed: u64,
}

/// Reproducibility record for one variant run. The run id is a digest over
/// configs and input digests; wall-clock fields are excluded so manifests of
/// reproduced runs compare equal by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub variant: RunVariant,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_config: Option<GenerationConfig>,
    pub extraction_config: GenerationConfig,
    pub corpus_digest: String,
    pub schema_digest: String,
    pub exemplar_digest: String,
    pub stages: Vec<StageMarker>,
    pub created_at: String,
}

impl RunManifest {
    pub fn new(
        variant: RunVariant,
        translation_config: Option<&GenerationConfig>,
        extraction_config: &GenerationConfig,
        corpus_digest: &str,
        schema_digest: &str,
        exemplar_digest: &str,
    ) -> Self {
        let mut hasher = Sha256::new();
        for part in [
            variant.as_str(),
            &extraction_config.model_id,
            &translation_config.map(|c| c.digest()).unwrap_or_default(),
            &extraction_config.digest(),
            corpus_digest,
            schema_digest,
            exemplar_digest,
        ] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        let run_id = hex::encode(&hasher.finalize()[..8]);
        RunManifest {
            run_id,
            variant,
            model_id: extraction_config.model_id.clone(),
            translation_config: translation_config.cloned(),
            extraction_config: extraction_config.clone(),
            corpus_digest: corpus_digest.to_string(),
            schema_digest: schema_digest.to_string(),
            exemplar_digest: exemplar_digest.to_string(),
            stages: Vec::new(),
            created_at: Utc::now().to_rfc3339(),
        }
    }

    pub fn mark_stage(&mut self, stage: &str, items: u64, failed: u64) {
        self.stages.push(StageMarker {
            stage: stage.to_string(),
            completed: true,
            items,
            failed,
        });
    }
}

/// Writes `run.json` listing one manifest per executed variant.
pub fn save_manifests(manifests: &[RunManifest], path: &Path) -> Result<(), PipelineError> {
    #[derive(Serialize)]
    struct RunFile<'a> {
        runs: &'a [RunManifest],
    }
    let json = serde_json::to_string_pretty(&RunFile { runs: manifests }).expect("manifest serializes");
    fs::write(path, json).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Completion retained for audit. Latency and attempt counts are transient
/// (they vary between cold and warm runs) and deliberately not persisted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCompletion {
    pub transcript_id: String,
    pub backend_status: BackendStatus,
    pub raw_text: String,
}

/// Everything retained per transcript: the raw completion, the tri-state
/// parse, and the resolved binary vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub transcript_id: String,
    pub completion: StoredCompletion,
    pub tri_state: TriStateFeatureVector,
    pub binary: BinaryFeatureVector,
}

/// All predictions of one variant run, ordered by transcript id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub run_id: String,
    pub model_label: String,
    pub variant: RunVariant,
    pub schema_digest: String,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    pub fn binary_vectors(&self) -> Vec<BinaryFeatureVector> {
        self.records.iter().map(|r| r.binary.clone()).collect()
    }

    /// Field-granular missing counts, one per schema feature.
    pub fn field_missing_counts(&self, feature_count: usize) -> Vec<u64> {
        let mut counts = vec![0u64; feature_count];
        for record in &self.records {
            for (f, &missing) in record.binary.missing_mask.iter().enumerate() {
                if missing {
                    counts[f] += 1;
                }
            }
        }
        counts
    }

    /// Transcript-granular missing count: records with ≥1 missing field.
    pub fn transcript_any_missing(&self) -> u64 {
        self.records.iter().filter(|r| r.binary.any_missing()).count() as u64
    }

    /// Snapshot format: a meta line, then one record per line.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Meta<'a> {
            run_id: &'a str,
            model_label: &'a str,
            variant: RunVariant,
            schema_digest: &'a str,
            records: usize,
        }
        let mut out = serde_json::to_string(&Meta {
            run_id: &self.run_id,
            model_label: &self.model_label,
            variant: self.variant,
            schema_digest: &self.schema_digest,
            records: self.records.len(),
        })
        .expect("meta serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(path, self.to_jsonl()).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_jsonl_str(content: &str, path: &str) -> Result<Self, PipelineError> {
        #[derive(Deserialize)]
        struct Meta {
            run_id: String,
            model_label: String,
            variant: RunVariant,
            schema_digest: String,
            records: usize,
        }
        let mut lines = content.lines();
        let meta_line = lines.next().ok_or_else(|| PipelineError::MalformedSnapshot {
            path: path.to_string(),
            reason: "empty snapshot".into(),
        })?;
        let meta: Meta =
            serde_json::from_str(meta_line).map_err(|e| PipelineError::MalformedSnapshot {
                path: path.to_string(),
                reason: format!("meta line: {e}"),
            })?;
        let mut records = Vec::with_capacity(meta.records);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: PredictionRecord =
                serde_json::from_str(line).map_err(|e| PipelineError::MalformedSnapshot {
                    path: path.to_string(),
                    reason: format!("record {}: {e}", i + 1),
                })?;
            records.push(record);
        }
        if records.len() != meta.records {
            return Err(PipelineError::MalformedSnapshot {
                path: path.to_string(),
                reason: format!("expected {} records, found {}", meta.records, records.len()),
            });
        }
        Ok(PredictionSet {
            run_id: meta.run_id,
            model_label: meta.model_label,
            variant: meta.variant,
            schema_digest: meta.schema_digest,
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_str(&content, &path.display().to_string())
    }

    /// Raw completions as their own JSONL audit file.
    pub fn completions_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(&record.completion).expect("completion serializes"));
            out.push('\n');
        }
        out
    }
}

/// Per-stage outcome counts for manifests and exit codes.
#[derive(Debug, Clone, Default)]
pub struct StageReport {
    pub items: u64,
    pub failed_ids: Vec<String>,
}

/// Translates a persian corpus to english, one transcript per input, ids
/// stable, `source_id` linking back. Failed translations become marker-text
/// transcripts and are reported, not dropped.
pub fn run_translation_stage(
    corpus: &Corpus,
    client: &BackendClient,
    config: &GenerationConfig,
    parallelism: usize,
) -> Result<(Corpus, StageReport), PipelineError> {
    if !corpus.uniform_language(Language::Persian) {
        return Err(PipelineError::WrongCorpusLanguage {
            stage: "translation",
            expected: Language::Persian,
        });
    }
    let mut items = Vec::with_capacity(corpus.len());
    for t in corpus.transcripts() {
        items.push((t.id.clone(), render_translation_prompt(t)?));
    }
    let outputs = client.batch_complete(&items, config, parallelism);

    let mut report = StageReport {
        items: corpus.len() as u64,
        failed_ids: Vec::new(),
    };
    let mut translated = Vec::with_capacity(corpus.len());
    for (t, output) in corpus.transcripts().iter().zip(&outputs) {
        let text = output.raw_text.trim();
        let text = if output.is_ok() && !text.is_empty() {
            text.to_string()
        } else {
            report.failed_ids.push(t.id.clone());
            TRANSLATION_FAILED_MARKER.to_string()
        };
        translated.push(
            Transcript {
                id: t.id.clone(),
                language: Language::English,
                text,
                source_id: Some(t.id.clone()),
            }
            .normalized(),
        );
    }
    Ok((Corpus::from_transcripts(translated)?, report))
}

/// Extracts features for every transcript: render prompt → complete → parse
/// → resolve. Per-item failures (and marker-text transcripts) yield
/// all-Missing tri-state vectors with diagnostics; raw completions are
/// retained for audit.
#[allow(clippy::too_many_arguments)]
pub fn run_extraction_stage(
    corpus: &Corpus,
    variant: RunVariant,
    exemplars: &ExemplarSet,
    schema: &FeatureSchema,
    client: &BackendClient,
    config: &GenerationConfig,
    parallelism: usize,
    run_id: &str,
    model_label: &str,
) -> Result<(PredictionSet, StageReport), PipelineError> {
    let language = variant.prompt_language();
    if !corpus.uniform_language(language) {
        return Err(PipelineError::WrongCorpusLanguage {
            stage: "extraction",
            expected: language,
        });
    }

    let mut skipped: Vec<&Transcript> = Vec::new();
    let mut items: Vec<(String, PromptBundle)> = Vec::new();
    let mut item_ids: Vec<&Transcript> = Vec::new();
    for t in corpus.transcripts() {
        if t.text == TRANSLATION_FAILED_MARKER {
            skipped.push(t);
        } else {
            items.push((
                t.id.clone(),
                render_extraction_prompt(&t.text, language, exemplars, schema)?,
            ));
            item_ids.push(t);
        }
    }

    let outputs = client.batch_complete(&items, config, parallelism);

    let mut report = StageReport {
        items: corpus.len() as u64,
        failed_ids: Vec::new(),
    };
    let mut records = Vec::with_capacity(corpus.len());

    for t in &skipped {
        report.failed_ids.push(t.id.clone());
        let tri = TriStateFeatureVector::all_missing(schema)
            .with_transcript_id(&t.id)
            .with_note(ParseNote {
                kind: NoteKind::TranslationFailed,
                line_no: 0,
                excerpt: String::new(),
            });
        let binary = resolve_missing(&tri);
        records.push(PredictionRecord {
            transcript_id: t.id.clone(),
            completion: StoredCompletion {
                transcript_id: t.id.clone(),
                backend_status: BackendStatus::FailedAfterRetries,
                raw_text: String::new(),
            },
            tri_state: tri,
            binary,
        });
    }

    for (t, output) in item_ids.iter().zip(&outputs) {
        let tri = if output.is_ok() {
            parse_output(&output.raw_text, language, schema).with_transcript_id(&t.id)
        } else {
            report.failed_ids.push(t.id.clone());
            TriStateFeatureVector::all_missing(schema)
                .with_transcript_id(&t.id)
                .with_note(ParseNote {
                    kind: NoteKind::BackendFailure,
                    line_no: 0,
                    excerpt: output.error.clone().unwrap_or_default(),
                })
        };
        let binary = resolve_missing(&tri);
        records.push(PredictionRecord {
            transcript_id: t.id.clone(),
            completion: StoredCompletion {
                transcript_id: t.id.clone(),
                backend_status: output.backend_status,
                raw_text: output.raw_text.clone(),
            },
            tri_state: tri,
            binary,
        });
    }

    records.sort_by(|a, b| a.transcript_id.cmp(&b.transcript_id));
    report.failed_ids.sort();

    Ok((
        PredictionSet {
            run_id: run_id.to_string(),
            model_label: model_label.to_string(),
            variant,
            schema_digest: schema.digest(),
            records,
        },
        report,
    ))
}

/// Per-feature macro-F1 and missing-count deltas between the two variants
/// (english minus persian).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub feature_id: String,
    pub macro_f1_english: Option<f64>,
    pub macro_f1_persian: Option<f64>,
    pub macro_f1_delta: Option<f64>,
    pub missing_english: u64,
    pub missing_persian: u64,
    pub missing_delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub rows: Vec<ComparisonRow>,
}

impl VariantComparison {
    pub fn build(english: &MetricTable, persian: &MetricTable) -> Self {
        let rows = english
            .rows
            .iter()
            .zip(&persian.rows)
            .map(|(e, p)| {
                let macro_f1_english = e.macro_f1.value;
                let macro_f1_persian = p.macro_f1.value;
                ComparisonRow {
                    feature_id: e.feature_id.clone(),
                    macro_f1_english,
                    macro_f1_persian,
                    macro_f1_delta: match (macro_f1_english, macro_f1_persian) {
                        (Some(a), Some(b)) => Some(a - b),
                        _ => None,
                    },
                    missing_english: e.missing_fields,
                    missing_persian: p.missing_fields,
                    missing_delta: e.missing_fields as i64 - p.missing_fields as i64,
                }
            })
            .collect();
        VariantComparison { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "feature",
                "macro_f1_english",
                "macro_f1_persian",
                "macro_f1_delta",
                "missing_english",
                "missing_persian",
                "missing_delta",
            ])
            .expect("csv write");
        for row in &self.rows {
            writer
                .write_record([
                    row.feature_id.clone(),
                    crate::metrics::fmt3(row.macro_f1_english, ""),
                    crate::metrics::fmt3(row.macro_f1_persian, ""),
                    crate::metrics::fmt3(row.macro_f1_delta, ""),
                    row.missing_english.to_string(),
                    row.missing_persian.to_string(),
                    row.missing_delta.to_string(),
                ])
                .expect("csv write");
        }
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
    }
}

/// Everything produced for one variant.
#[derive(Debug)]
pub struct VariantOutcome {
    pub manifest: RunManifest,
    pub translated: Option<Corpus>,
    pub translation_report: Option<StageReport>,
    pub extraction_report: StageReport,
    pub predictions: PredictionSet,
    pub metrics: MetricTable,
}

#[derive(Debug)]
pub struct VariantRun {
    pub variant: RunVariant,
    pub result: Result<VariantOutcome, PipelineError>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub variants: Vec<VariantRun>,
    /// Present when both variants were requested and both succeeded.
    pub comparison: Option<VariantComparison>,
}

impl RunOutcome {
    pub fn outcome_for(&self, variant: RunVariant) -> Option<&VariantOutcome> {
        self.variants
            .iter()
            .find(|v| v.variant == variant)
            .and_then(|v| v.result.as_ref().ok())
    }
}

/// Inputs shared by every variant of a full run.
pub struct RunInputs<'a> {
    pub corpus: &'a Corpus,
    pub truth: &'a crate::corpus::AnnotationTable,
    pub schema: &'a FeatureSchema,
    pub exemplars: &'a ExemplarSet,
    pub translation_config: GenerationConfig,
    pub extraction_config: GenerationConfig,
    pub parallelism: usize,
}

fn run_variant(
    inputs: &RunInputs<'_>,
    variant: RunVariant,
    client: &BackendClient,
) -> Result<VariantOutcome, PipelineError> {
    let translation_config = match variant {
        RunVariant::TranslatedEnglish => Some(&inputs.translation_config),
        RunVariant::DirectPersian => None,
    };
    let mut manifest = RunManifest::new(
        variant,
        translation_config,
        &inputs.extraction_config,
        &inputs.corpus.digest(),
        &inputs.schema.digest(),
        &inputs.exemplars.digest(),
    );
    let model_label = format!(
        "{} ({})",
        inputs.extraction_config.model_id,
        variant.label_suffix()
    );

    let (working_corpus, translated, translation_report) = match variant {
        RunVariant::TranslatedEnglish => {
            let (translated, report) = run_translation_stage(
                inputs.corpus,
                client,
                &inputs.translation_config,
                inputs.parallelism,
            )?;
            manifest.mark_stage("translation", report.items, report.failed_ids.len() as u64);
            (translated.clone(), Some(translated), Some(report))
        }
        RunVariant::DirectPersian => (inputs.corpus.clone(), None, None),
    };

    let (predictions, extraction_report) = run_extraction_stage(
        &working_corpus,
        variant,
        inputs.exemplars,
        inputs.schema,
        client,
        &inputs.extraction_config,
        inputs.parallelism,
        &manifest.run_id,
        &model_label,
    )?;
    manifest.mark_stage(
        "extraction",
        extraction_report.items,
        extraction_report.failed_ids.len() as u64,
    );

    // evaluate only the annotated subset; coverage gaps are corpus-level
    // findings, not evaluation errors
    let annotated: Vec<BinaryFeatureVector> = predictions
        .records
        .iter()
        .filter(|r| inputs.truth.get(&r.transcript_id).is_some())
        .map(|r| r.binary.clone())
        .collect();
    let metrics = evaluate_run(&annotated, inputs.truth, inputs.schema, &model_label)?;
    manifest.mark_stage("evaluation", annotated.len() as u64, 0);

    Ok(VariantOutcome {
        manifest,
        translated,
        translation_report,
        extraction_report,
        predictions,
        metrics,
    })
}

/// Executes the requested variants and, when both succeed, the side-by-side
/// bilingual comparison. A failing variant never aborts the other.
pub fn run_full(
    inputs: &RunInputs<'_>,
    variants: &[RunVariant],
    client: &BackendClient,
) -> RunOutcome {
    let mut runs = Vec::with_capacity(variants.len());
    for &variant in variants {
        runs.push(VariantRun {
            variant,
            result: run_variant(inputs, variant, client),
        });
    }
    let comparison = match (
        runs.iter()
            .find(|r| r.variant == RunVariant::TranslatedEnglish)
            .and_then(|r| r.result.as_ref().ok()),
        runs.iter()
            .find(|r| r.variant == RunVariant::DirectPersian)
            .and_then(|r| r.result.as_ref().ok()),
    ) {
        (Some(english), Some(persian)) => Some(VariantComparison::build(
            &english.metrics,
            &persian.metrics,
        )),
        _ => None,
    };
    RunOutcome {
        variants: runs,
        comparison,
    }
}
