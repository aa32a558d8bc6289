//! Extraction of the 13 tri-state feature values from raw model completions.
//!
//! Parsing is total: any string, including the empty string, yields a
//! vector. Failure modes appear as `Missing` entries plus diagnostics, never
//! as errors. Labels are matched case-insensitively after NFC normalization
//! and whitespace collapsing, so template lines survive the usual model
//! mangling (re-capitalization, stray spacing, colon variants).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{nfc, FeatureSchema, Language};

/// Per-feature parse result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    True,
    False,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    /// Non-empty line that does not match any template field.
    UnmatchedLine,
    /// A field restated with the same valid value.
    DuplicateField,
    /// A field restated with a different valid value; the first wins.
    ConflictingValue,
    /// A matched label whose value is not True/False.
    InvalidValue,
    /// The backend gave up on this transcript; no completion to parse.
    BackendFailure,
    /// The translation stage failed upstream; extraction was skipped.
    TranslationFailed,
}

/// One parse diagnostic, serializable to JSONL for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseNote {
    pub kind: NoteKind,
    /// 1-based line number in the completion; 0 when not line-scoped.
    pub line_no: usize,
    pub excerpt: String,
}

/// Parse result for one transcript: 13 tri-state values in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriStateFeatureVector {
    pub transcript_id: String,
    pub values: Vec<TriState>,
    pub diagnostics: Vec<ParseNote>,
}

impl TriStateFeatureVector {
    pub fn all_missing(schema: &FeatureSchema) -> Self {
        TriStateFeatureVector {
            transcript_id: String::new(),
            values: vec![TriState::Missing; schema.len()],
            diagnostics: Vec::new(),
        }
    }

    pub fn with_transcript_id(mut self, id: &str) -> Self {
        self.transcript_id = id.to_string();
        self
    }

    pub fn with_note(mut self, note: ParseNote) -> Self {
        self.diagnostics.push(note);
        self
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| **v == TriState::Missing).count()
    }
}

/// Binary predictions after the Missing→False policy. `missing_mask[i]`
/// records which entries were resolved from Missing; `values[i]` is false
/// wherever the mask is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryFeatureVector {
    pub transcript_id: String,
    pub values: Vec<bool>,
    pub missing_mask: Vec<bool>,
}

impl BinaryFeatureVector {
    pub fn any_missing(&self) -> bool {
        self.missing_mask.iter().any(|&m| m)
    }
}

/// Accepted key/value separators: ASCII colon plus fullwidth, small-form,
/// and ratio colon variants seen in model output.
const SEPARATORS: [char; 4] = [':', '\u{FF1A}', '\u{FE55}', '\u{2236}'];

const EXCERPT_MAX_CHARS: usize = 80;

fn excerpt(line: &str) -> String {
    let trimmed = line.trim();
    if trimmed.chars().count() <= EXCERPT_MAX_CHARS {
        trimmed.to_string()
    } else {
        trimmed.chars().take(EXCERPT_MAX_CHARS).collect()
    }
}

/// Lowercase, NFC-normalized, with whitespace runs collapsed to one space.
fn normalize_key(s: &str) -> String {
    let normalized = nfc(s).to_lowercase();
    let mut out = String::with_capacity(normalized.len());
    let mut in_space = true; // leading whitespace is dropped
    for ch in normalized.chars() {
        if ch.is_whitespace() {
            if !in_space {
                out.push(' ');
                in_space = true;
            }
        } else {
            out.push(ch);
            in_space = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

fn parse_value(raw: &str) -> Option<bool> {
    match normalize_key(raw).as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Normalized label → feature index, over every template label, display
/// name, and alias in the schema. Recognizing all variants' labels keeps the
/// parser robust to models answering in the other language's field names.
struct LabelIndex {
    entries: HashMap<String, usize>,
}

impl LabelIndex {
    fn build(schema: &FeatureSchema) -> Self {
        let mut entries = HashMap::new();
        for (idx, feature) in schema.features.iter().enumerate() {
            for label in feature.template_labels.values() {
                entries.insert(normalize_key(label), idx);
            }
            entries.insert(normalize_key(&feature.display_name), idx);
            for alias in &feature.aliases {
                entries.insert(normalize_key(alias), idx);
            }
        }
        LabelIndex { entries }
    }

    fn lookup(&self, normalized: &str) -> Option<usize> {
        self.entries.get(normalized).copied()
    }
}

/// Parsing runs per transcript over the whole corpus with the same schema,
/// so the index is memoized by schema digest.
fn label_index_for(schema: &FeatureSchema) -> Arc<LabelIndex> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<LabelIndex>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("label index cache");
    guard
        .entry(schema.digest())
        .or_insert_with(|| Arc::new(LabelIndex::build(schema)))
        .clone()
}

/// Scans a completion for `<label> <separator> <value>` lines and assembles
/// the tri-state vector. The first valid occurrence of a field wins; lines
/// outside the template are ignored with a diagnostic; fields never seen
/// stay Missing.
pub fn parse_output(raw_text: &str, _variant: Language, schema: &FeatureSchema) -> TriStateFeatureVector {
    let index = label_index_for(schema);
    let mut values = vec![TriState::Missing; schema.len()];
    let mut seen = vec![false; schema.len()];
    let mut diagnostics = Vec::new();

    for (line_idx, raw_line) in raw_text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }

        let split = line
            .char_indices()
            .find(|(_, ch)| SEPARATORS.contains(ch))
            .map(|(pos, ch)| (pos, ch.len_utf8()));
        let Some((sep_pos, sep_len)) = split else {
            diagnostics.push(ParseNote {
                kind: NoteKind::UnmatchedLine,
                line_no,
                excerpt: excerpt(line),
            });
            continue;
        };

        let label = normalize_key(&line[..sep_pos]);
        let Some(feature_idx) = index.lookup(&label) else {
            diagnostics.push(ParseNote {
                kind: NoteKind::UnmatchedLine,
                line_no,
                excerpt: excerpt(line),
            });
            continue;
        };

        let Some(value) = parse_value(&line[sep_pos + sep_len..]) else {
            diagnostics.push(ParseNote {
                kind: NoteKind::InvalidValue,
                line_no,
                excerpt: excerpt(line),
            });
            continue;
        };

        if !seen[feature_idx] {
            seen[feature_idx] = true;
            values[feature_idx] = if value { TriState::True } else { TriState::False };
        } else {
            let prior = values[feature_idx] == TriState::True;
            diagnostics.push(ParseNote {
                kind: if prior == value {
                    NoteKind::DuplicateField
                } else {
                    NoteKind::ConflictingValue
                },
                line_no,
                excerpt: excerpt(line),
            });
        }
    }

    TriStateFeatureVector {
        transcript_id: String::new(),
        values,
        diagnostics,
    }
}

/// Applies the Missing→False policy: True→true, False→false, Missing→false
/// with the mask bit set. The mask popcount always equals the number of
/// Missing inputs.
pub fn resolve_missing(tri: &TriStateFeatureVector) -> BinaryFeatureVector {
    let mut values = Vec::with_capacity(tri.values.len());
    let mut missing_mask = Vec::with_capacity(tri.values.len());
    for v in &tri.values {
        match v {
            TriState::True => {
                values.push(true);
                missing_mask.push(false);
            }
            TriState::False => {
                values.push(false);
                missing_mask.push(false);
            }
            TriState::Missing => {
                values.push(false);
                missing_mask.push(true);
            }
        }
    }
    BinaryFeatureVector {
        transcript_id: tri.transcript_id.clone(),
        values,
        missing_mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::promptkit::render_output_template;
    use proptest::prelude::*;

    fn schema() -> FeatureSchema {
        fixtures::default_schema()
    }

    #[test]
    fn well_formed_template_parses_clean() {
        let s = schema();
        let rendered = render_output_template(&[false; 13], Language::English, &s);
        let parsed = parse_output(&rendered, Language::English, &s);
        assert_eq!(parsed.values, vec![TriState::False; 13]);
        assert!(parsed.diagnostics.is_empty());
    }

    #[test]
    fn preamble_line_is_ignored_with_diagnostic() {
        let s = schema();
        let rendered = render_output_template(&[true; 13], Language::English, &s);
        let with_preamble = format!("Sure, here is the extraction:\n{rendered}");
        let parsed = parse_output(&with_preamble, Language::English, &s);
        assert_eq!(parsed.values, vec![TriState::True; 13]);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].kind, NoteKind::UnmatchedLine);
        assert_eq!(parsed.diagnostics[0].line_no, 1);
    }

    #[test]
    fn empty_string_is_all_missing() {
        let s = schema();
        let parsed = parse_output("", Language::English, &s);
        assert_eq!(parsed.values, vec![TriState::Missing; 13]);
        assert_eq!(parsed.missing_count(), 13);
    }

    #[test]
    fn first_valid_occurrence_wins() {
        let s = schema();
        let parsed = parse_output("Pain: TRUE\nPain: False", Language::English, &s);
        let pain = s.index_of("pain").unwrap();
        assert_eq!(parsed.values[pain], TriState::True);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].kind, NoteKind::ConflictingValue);
    }

    #[test]
    fn duplicate_with_same_value_is_flagged() {
        let s = schema();
        let parsed = parse_output("Fever: true\nfever: True", Language::English, &s);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].kind, NoteKind::DuplicateField);
    }

    #[test]
    fn invalid_value_leaves_field_missing_until_valid_line() {
        let s = schema();
        let pain = s.index_of("pain").unwrap();
        let parsed = parse_output("Pain: maybe", Language::English, &s);
        assert_eq!(parsed.values[pain], TriState::Missing);
        assert_eq!(parsed.diagnostics[0].kind, NoteKind::InvalidValue);

        // a later valid line still sets the field
        let parsed = parse_output("Pain: maybe\nPain: False", Language::English, &s);
        assert_eq!(parsed.values[pain], TriState::False);
    }

    #[test]
    fn value_synonyms_are_rejected() {
        let s = schema();
        let pain = s.index_of("pain").unwrap();
        for bad in ["yes", "no", "1", "0", "True."] {
            let parsed = parse_output(&format!("Pain: {bad}"), Language::English, &s);
            assert_eq!(parsed.values[pain], TriState::Missing, "value {bad:?}");
        }
    }

    #[test]
    fn colon_variants_are_accepted() {
        let s = schema();
        let pain = s.index_of("pain").unwrap();
        for sep in [":", "\u{FF1A}", "\u{FE55}", "\u{2236}"] {
            let parsed = parse_output(&format!("Pain{sep} True"), Language::English, &s);
            assert_eq!(parsed.values[pain], TriState::True, "separator {sep:?}");
        }
    }

    #[test]
    fn display_name_alias_is_recognized() {
        let s = schema();
        let idx = s.index_of("doctor_visit_request").unwrap();
        let parsed = parse_output("Doctor's visit request: True", Language::English, &s);
        assert_eq!(parsed.values[idx], TriState::True);
        let parsed = parse_output("Patient-requested visits: True", Language::English, &s);
        assert_eq!(parsed.values[idx], TriState::True);
    }

    #[test]
    fn persian_labels_parse_with_whitespace_noise() {
        let s = schema();
        let fever = s.index_of("fever").unwrap();
        let parsed = parse_output("  تب   :  True ", Language::Persian, &s);
        assert_eq!(parsed.values[fever], TriState::True);
    }

    #[test]
    fn line_permutation_does_not_change_vector() {
        let s = schema();
        let mut labels = [false; 13];
        labels[2] = true;
        labels[7] = true;
        let rendered = render_output_template(&labels, Language::English, &s);
        let mut lines: Vec<&str> = rendered.lines().collect();
        lines.reverse();
        let permuted = lines.join("\n");
        let a = parse_output(&rendered, Language::English, &s);
        let b = parse_output(&permuted, Language::English, &s);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn resolve_missing_examples() {
        let s = schema();
        let mut tri = TriStateFeatureVector::all_missing(&s);
        tri.values.fill(TriState::False);
        tri.values[0] = TriState::True;
        tri.values[1] = TriState::Missing;
        let binary = resolve_missing(&tri);
        assert!(binary.values[0]);
        assert!(!binary.values[1]);
        assert_eq!(binary.missing_mask.iter().filter(|&&m| m).count(), 1);

        let all_missing = TriStateFeatureVector::all_missing(&s);
        let binary = resolve_missing(&all_missing);
        assert!(binary.values.iter().all(|&v| !v));
        assert_eq!(binary.missing_mask.iter().filter(|&&m| m).count(), 13);

        tri.values.fill(TriState::True);
        let binary = resolve_missing(&tri);
        assert!(binary.values.iter().all(|&v| v));
        assert!(!binary.any_missing());
    }

    proptest! {
        #[test]
        fn parse_is_total_on_arbitrary_input(input in "\\PC*") {
            let parsed = parse_output(&input, Language::English, &schema());
            prop_assert_eq!(parsed.values.len(), 13);
        }

        #[test]
        fn mask_popcount_equals_missing_count(states in prop::collection::vec(0u8..3, 13)) {
            let tri = TriStateFeatureVector {
                transcript_id: "t".into(),
                values: states.iter().map(|v| match v {
                    0 => TriState::True,
                    1 => TriState::False,
                    _ => TriState::Missing,
                }).collect(),
                diagnostics: Vec::new(),
            };
            let binary = resolve_missing(&tri);
            let mask_count = binary.missing_mask.iter().filter(|&&m| m).count();
            prop_assert_eq!(mask_count, tri.missing_count());
            for (v, m) in binary.values.iter().zip(&binary.missing_mask) {
                if *m {
                    prop_assert!(!v, "resolved-missing entries must be false");
                }
            }
            prop_assert_eq!(tri.values.len(), binary.values.len());
        }
    }
}
