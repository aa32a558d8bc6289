//! Transcript corpora, the clinical feature schema, and ground-truth tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Number of clinical features extracted per transcript.
pub const FEATURE_COUNT: usize = 13;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate transcript id {0:?}")]
    DuplicateId(String),
    #[error("corpus contains no records")]
    EmptyCorpus,
    #[error("transcript {id:?}: source_id {source_id:?} does not reference a persian transcript")]
    DanglingSourceId { id: String, source_id: String },
    #[error("unknown column {0:?} in ground-truth header")]
    UnknownColumn(String),
    #[error("missing column {0:?} in ground-truth header")]
    MissingColumn(String),
    #[error("non-boolean cell at row {row}, column {column:?}: {value:?}")]
    NonBooleanCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("corpus and annotations share no transcript ids")]
    EmptyIntersection,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Transcript language tag. Doubles as the prompt/template variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Persian,
    English,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Persian => "persian",
            Language::English => "english",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One call record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub language: Language,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl Transcript {
    /// Applies NFC normalization to the text. No other mutation.
    pub fn normalized(mut self) -> Self {
        self.text = nfc(&self.text);
        self
    }
}

/// NFC-normalize a string; Persian text has multiple encodings of identical
/// glyph sequences. Already-normalized input (the common case) is copied
/// without recomposition.
pub fn nfc(s: &str) -> String {
    match unicode_normalization::is_nfc_quick(s.chars()) {
        unicode_normalization::IsNormalized::Yes => s.to_string(),
        _ => s.nfc().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

/// An ordered, id-unique collection of transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    transcripts: Vec<Transcript>,
}

impl Corpus {
    /// Validates uniqueness, non-empty text, and source_id references.
    ///
    /// A `source_id` equal to the transcript's own id marks an in-place
    /// translation (the translated corpus keeps the original ids so that
    /// ground-truth alignment survives the translation stage). Any other
    /// `source_id` must point at a persian transcript in the same corpus.
    pub fn from_transcripts(transcripts: Vec<Transcript>) -> Result<Self, CorpusError> {
        if transcripts.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut seen: HashMap<&str, &Transcript> = HashMap::new();
        for t in &transcripts {
            if t.text.trim().is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line: 0,
                    reason: format!("transcript {:?} has empty text", t.id),
                });
            }
            if seen.insert(t.id.as_str(), t).is_some() {
                return Err(CorpusError::DuplicateId(t.id.clone()));
            }
        }
        for t in &transcripts {
            if t.language == Language::English {
                if let Some(src) = &t.source_id {
                    if src == &t.id {
                        continue;
                    }
                    match seen.get(src.as_str()) {
                        Some(orig) if orig.language == Language::Persian => {}
                        _ => {
                            return Err(CorpusError::DanglingSourceId {
                                id: t.id.clone(),
                                source_id: src.clone(),
                            })
                        }
                    }
                }
            }
        }
        Ok(Corpus { transcripts })
    }

    pub fn load(path: &Path, format: CorpusFormat) -> Result<Self, CorpusError> {
        match format {
            CorpusFormat::Jsonl => Self::load_jsonl(path),
            CorpusFormat::Csv => Self::load_csv(path),
        }
    }

    /// Loads the canonical interchange format: one JSON object per line with
    /// keys `id`, `language`, `text`, optional `source_id`.
    pub fn load_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let file = fs::File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut transcripts = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transcript =
                serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if t.text.trim().is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line: line_no,
                    reason: format!("transcript {:?} has empty text", t.id),
                });
            }
            transcripts.push(t.normalized());
        }
        Self::from_transcripts(transcripts)
    }

    /// Loads a tabular corpus with header `id,language,text,source_id`.
    pub fn load_csv(path: &Path) -> Result<Self, CorpusError> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (id_col, lang_col, text_col) = match (col("id"), col("language"), col("text")) {
            (Some(i), Some(l), Some(t)) => (i, l, t),
            (None, _, _) => return Err(CorpusError::MissingColumn("id".into())),
            (_, None, _) => return Err(CorpusError::MissingColumn("language".into())),
            (_, _, None) => return Err(CorpusError::MissingColumn("text".into())),
        };
        let source_col = col("source_id");
        let mut transcripts = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line_no = idx + 2; // header is line 1
            let record = record?;
            let get = |c: usize| record.get(c).unwrap_or("").to_string();
            let language = match get(lang_col).as_str() {
                "persian" => Language::Persian,
                "english" => Language::English,
                other => {
                    return Err(CorpusError::MalformedRecord {
                        line: line_no,
                        reason: format!("unknown language {other:?}"),
                    })
                }
            };
            let source_id = source_col.map(|c| get(c)).filter(|s| !s.is_empty());
            let t = Transcript {
                id: get(id_col),
                language,
                text: get(text_col),
                source_id,
            };
            if t.text.trim().is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line: line_no,
                    reason: format!("transcript {:?} has empty text", t.id),
                });
            }
            transcripts.push(t.normalized());
        }
        Self::from_transcripts(transcripts)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.transcripts {
            out.push_str(&serde_json::to_string(t).expect("transcript serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn len(&self) -> usize {
        self.transcripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.id == id)
    }

    /// True when every transcript carries the given language tag.
    pub fn uniform_language(&self, language: Language) -> bool {
        self.transcripts.iter().all(|t| t.language == language)
    }

    /// Content digest over the canonical JSONL serialization.
    pub fn digest(&self) -> String {
        hex_sha256(self.to_jsonl().as_bytes())
    }
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One of the 13 clinical features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub canonical_id: String,
    pub display_name: String,
    /// Exact label string expected in model output, per language variant.
    /// An `english` entry is mandatory; other variants fall back to it.
    pub template_labels: BTreeMap<Language, String>,
    /// Additional label spellings accepted by the output parser.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl FeatureDef {
    pub fn label_for(&self, variant: Language) -> &str {
        self.template_labels
            .get(&variant)
            .or_else(|| self.template_labels.get(&Language::English))
            .expect("schema validated: english label present")
    }
}

/// Ordered registry of the 13 clinical features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn from_features(features: Vec<FeatureDef>) -> Result<Self, CorpusError> {
        if features.len() != FEATURE_COUNT {
            return Err(CorpusError::InvalidSchema(format!(
                "expected {FEATURE_COUNT} features, got {}",
                features.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for f in &features {
            if !ids.insert(f.canonical_id.clone()) {
                return Err(CorpusError::InvalidSchema(format!(
                    "duplicate canonical_id {:?}",
                    f.canonical_id
                )));
            }
            if !f.template_labels.contains_key(&Language::English) {
                return Err(CorpusError::InvalidSchema(format!(
                    "feature {:?} lacks an english template label",
                    f.canonical_id
                )));
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn from_json_str(json: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct SchemaFile {
            features: Vec<FeatureDef>,
        }
        let parsed: SchemaFile =
            serde_json::from_str(json).map_err(|e| CorpusError::InvalidSchema(e.to_string()))?;
        Self::from_features(parsed.features)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let json = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&json)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_ids(&self) -> Vec<String> {
        self.features.iter().map(|f| f.canonical_id.clone()).collect()
    }

    pub fn index_of(&self, canonical_id: &str) -> Option<usize> {
        self.features.iter().position(|f| f.canonical_id == canonical_id)
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        hex_sha256(json.as_bytes())
    }
}

/// Ground-truth annotations keyed by transcript id, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTable {
    pub rows: BTreeMap<String, Vec<bool>>,
    pub schema_digest: String,
}

impl AnnotationTable {
    pub fn new(rows: BTreeMap<String, Vec<bool>>, schema: &FeatureSchema) -> Self {
        debug_assert!(rows.values().all(|v| v.len() == schema.len()));
        AnnotationTable {
            rows,
            schema_digest: schema.digest(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Vec<bool>> {
        self.rows.get(id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Loads a ground-truth CSV whose header is `id` plus the 13 canonical
/// feature ids (any column order). Cells must be "True" or "False",
/// case-insensitively; anything else is an error, since curated ground truth
/// should never need coercion.
pub fn load_ground_truth(
    path: &Path,
    schema: &FeatureSchema,
) -> Result<AnnotationTable, CorpusError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut id_col = None;
    let mut feature_cols: Vec<Option<usize>> = vec![None; schema.len()];
    for (col, name) in headers.iter().enumerate() {
        if name == "id" {
            id_col = Some(col);
        } else if let Some(f) = schema.index_of(name) {
            feature_cols[f] = Some(col);
        } else {
            return Err(CorpusError::UnknownColumn(name.to_string()));
        }
    }
    let id_col = id_col.ok_or_else(|| CorpusError::MissingColumn("id".into()))?;
    let feature_cols: Vec<usize> = feature_cols
        .into_iter()
        .enumerate()
        .map(|(f, col)| {
            col.ok_or_else(|| CorpusError::MissingColumn(schema.features[f].canonical_id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1;
        let record = record?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let mut values = Vec::with_capacity(schema.len());
        for (f, &col) in feature_cols.iter().enumerate() {
            let raw = record.get(col).unwrap_or("");
            match parse_bool_cell(raw) {
                Some(v) => values.push(v),
                None => {
                    return Err(CorpusError::NonBooleanCell {
                        row: row_no,
                        column: schema.features[f].canonical_id.clone(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        if rows.insert(id.clone(), values).is_some() {
            return Err(CorpusError::DuplicateId(id));
        }
    }
    Ok(AnnotationTable::new(rows, schema))
}

fn parse_bool_cell(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Set differences surfaced by [`align`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    /// Transcript ids with no ground-truth row.
    pub unannotated: Vec<String>,
    /// Ground-truth ids with no transcript.
    pub orphan_annotations: Vec<String>,
}

/// Corpus joined with its ground truth, sorted by transcript id.
#[derive(Debug, Clone)]
pub struct AlignedDataset {
    pub pairs: Vec<(Transcript, Vec<bool>)>,
    pub coverage: Coverage,
}

/// Intersects a corpus with an annotation table. Deterministic output
/// ordering (sorted by transcript id) regardless of input order.
pub fn align(corpus: &Corpus, annotations: &AnnotationTable) -> Result<AlignedDataset, CorpusError> {
    let mut pairs: Vec<(Transcript, Vec<bool>)> = Vec::new();
    let mut unannotated = Vec::new();
    for t in corpus.transcripts() {
        match annotations.get(&t.id) {
            Some(truth) => pairs.push((t.clone(), truth.clone())),
            None => unannotated.push(t.id.clone()),
        }
    }
    let mut orphan_annotations: Vec<String> = annotations
        .rows
        .keys()
        .filter(|id| corpus.get(id).is_none())
        .cloned()
        .collect();
    if pairs.is_empty() {
        return Err(CorpusError::EmptyIntersection);
    }
    pairs.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    unannotated.sort();
    orphan_annotations.sort();
    Ok(AlignedDataset {
        pairs,
        coverage: Coverage {
            unannotated,
            orphan_annotations,
        },
    })
}
