//! Bundled defaults (schema, exemplars) and the synthetic demo corpus.
//!
//! The fixture corpus is generated, not stored: 50 short persian call notes
//! assembled deterministically from a per-feature phrase bank, with a few
//! ground-truth cells flipped so that evaluation metrics are non-trivial.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use crate::backend::MockScript;
use crate::corpus::{AnnotationTable, Corpus, FeatureSchema, Language, Transcript};
use crate::promptkit::ExemplarSet;

pub const DEFAULT_SCHEMA_JSON: &str = include_str!("../data/default_schema.json");
pub const DEFAULT_EXEMPLARS_JSON: &str = include_str!("../data/default_exemplars.json");

/// The built-in 13-feature schema.
pub fn default_schema() -> FeatureSchema {
    static SCHEMA: OnceLock<FeatureSchema> = OnceLock::new();
    SCHEMA
        .get_or_init(|| FeatureSchema::from_json_str(DEFAULT_SCHEMA_JSON).expect("embedded schema is valid"))
        .clone()
}

/// The built-in three-per-variant exemplar set.
pub fn default_exemplars() -> ExemplarSet {
    static EXEMPLARS: OnceLock<ExemplarSet> = OnceLock::new();
    EXEMPLARS
        .get_or_init(|| {
            ExemplarSet::from_json_str(DEFAULT_EXEMPLARS_JSON).expect("embedded exemplars are valid")
        })
        .clone()
}

/// One keyword per feature that flips the mock backend to True, plus an
/// english synonym for english-language corpora.
const KEYWORDS: [(&str, [&str; 2]); 13] = [
    ("doctor_visit_request", ["ویزیت", "visit"]),
    ("psychological_complaints", ["اضطراب", "anxiety"]),
    ("sleep_disorders", ["خواب", "sleep"]),
    ("loss_of_appetite", ["اشتها", "appetite"]),
    ("seizures", ["تشنج", "seizure"]),
    ("weakness_fatigue", ["خستگی", "weak"]),
    ("decreased_consciousness", ["هوشیاری", "drowsy"]),
    ("fever", ["تب", "fever"]),
    ("respiratory_complaints", ["نفس", "breath"]),
    ("insurance_cost_issues", ["بیمه", "insurance"]),
    ("urinary_tract_issues", ["ادرار", "urinary"]),
    ("pain", ["درد", "pain"]),
    ("gastrointestinal_issues", ["گوارش", "nausea"]),
];

/// Symptom phrase per feature; each contains exactly its own feature's
/// keyword and no other's.
const PHRASES: [&str; 13] = [
    "خانواده تقاضای ویزیت پزشک در منزل دارند.",
    "بیمار دچار اضطراب شدید شده است.",
    "شب‌ها خواب راحت ندارد.",
    "چند روز است اشتهای خود را از دست داده.",
    "دیشب دو بار تشنج کرده است.",
    "احساس ضعف و خستگی شدید می‌کند.",
    "سطح هوشیاری او کاهش یافته است.",
    "از دیروز تب بالا دارد.",
    "موقع راه رفتن دچار تنگی نفس می‌شود.",
    "درباره پوشش بیمه و هزینه داروها سوال دارد.",
    "هنگام دفع ادرار مشکل دارد.",
    "از درد شدید در ناحیه شکم شکایت می‌کند.",
    "مشکلات گوارشی و حالت تهوع دارد.",
];

const OPENERS: [&str; 5] = [
    "سلام، وقت بخیر.",
    "با مرکز تماس گرفته و می‌گوید حال بیمار خوب نیست.",
    "همراه بیمار تماس گرفته است.",
    "دختر بیمار تماس گرفته و نگران است.",
    "پرستار بیمار گزارش می‌دهد.",
];

const CLOSERS: [&str; 4] = [
    "راهنمایی لازم ارائه شد.",
    "قرار شد پیگیری شود.",
    "توصیه‌های لازم داده شد.",
    "مورد برای بررسی ثبت شد.",
];

pub const FIXTURE_CORPUS_SIZE: usize = 50;

fn mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^= x >> 31;
    x
}

/// Features mentioned in fixture record `i` (one to three of them).
fn fixture_features(i: usize) -> Vec<usize> {
    let h = mix(i as u64 ^ 0x5851F42D4C957F2D);
    let mut features = vec![(h % 13) as usize];
    if (h >> 16) % 3 == 0 {
        features.push(((h >> 8) % 13) as usize);
    }
    if (h >> 32) % 5 == 0 {
        features.push(((h >> 24) % 13) as usize);
    }
    features.sort_unstable();
    features.dedup();
    features
}

/// Ground-truth flips for record `i`: roughly half the records carry one or
/// two annotation cells that disagree with their text, in both directions
/// (false negatives and false positives for a text-faithful predictor).
fn fixture_flips(i: usize) -> Vec<usize> {
    let h = mix(i as u64 ^ 0x5851F42D4C957F2D);
    let mut flips = Vec::new();
    if (h >> 40) % 2 == 0 {
        flips.push(((h >> 44) % 13) as usize);
    }
    if (h >> 48) % 4 == 0 {
        flips.push(((h >> 52) % 13) as usize);
    }
    flips.dedup();
    flips
}

fn fixture_text(i: usize) -> String {
    let mut parts = vec![OPENERS[i % OPENERS.len()].to_string()];
    for f in fixture_features(i) {
        parts.push(PHRASES[f].to_string());
    }
    parts.push(CLOSERS[(i / 7) % CLOSERS.len()].to_string());
    parts.join(" ")
}

/// The 50-record synthetic persian corpus.
pub fn fixture_corpus() -> Corpus {
    let transcripts = (0..FIXTURE_CORPUS_SIZE)
        .map(|i| {
            Transcript {
                id: format!("c{i:03}"),
                language: Language::Persian,
                text: fixture_text(i),
                source_id: None,
            }
            .normalized()
        })
        .collect();
    Corpus::from_transcripts(transcripts).expect("fixture corpus is valid")
}

/// Ground truth for the fixture corpus: the features each text mentions,
/// with the deterministic flips applied.
pub fn fixture_truth() -> AnnotationTable {
    let schema = default_schema();
    let mut rows = BTreeMap::new();
    for i in 0..FIXTURE_CORPUS_SIZE {
        let mut values = vec![false; schema.len()];
        for f in fixture_features(i) {
            values[f] = true;
        }
        for f in fixture_flips(i) {
            values[f] = !values[f];
        }
        rows.insert(format!("c{i:03}"), values);
    }
    AnnotationTable::new(rows, &schema)
}

/// Keyword rules matching the phrase bank; no scripted completions.
pub fn fixture_mock_script() -> MockScript {
    MockScript {
        scripted: BTreeMap::new(),
        keywords: KEYWORDS
            .iter()
            .map(|(id, words)| (id.to_string(), words.iter().map(|w| w.to_string()).collect()))
            .collect(),
    }
}

pub fn fixture_truth_csv() -> String {
    let schema = default_schema();
    let truth = fixture_truth();
    let mut out = format!("id,{}\n", schema.feature_ids().join(","));
    for (id, values) in &truth.rows {
        let cells: Vec<&str> = values.iter().map(|&v| if v { "True" } else { "False" }).collect();
        out.push_str(&format!("{id},{}\n", cells.join(",")));
    }
    out
}

/// Writes the full demo bundle (corpus, truth, mock script, schema,
/// exemplars) into `dir`.
pub fn write_fixtures(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("corpus.jsonl"), fixture_corpus().to_jsonl())?;
    fs::write(dir.join("truth.csv"), fixture_truth_csv())?;
    fixture_mock_script().save(&dir.join("mock_script.json"))?;
    fs::write(dir.join("schema.json"), DEFAULT_SCHEMA_JSON)?;
    fs::write(dir.join("exemplars.json"), DEFAULT_EXEMPLARS_JSON)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::nfc;

    #[test]
    fn embedded_defaults_parse() {
        let schema = default_schema();
        assert_eq!(schema.len(), 13);
        let exemplars = default_exemplars();
        assert_eq!(exemplars.english.len(), 3);
        assert_eq!(exemplars.persian.len(), 3);
    }

    #[test]
    fn phrase_bank_keywords_do_not_collide() {
        // every fixture text must trip exactly the keywords of the features
        // it was built from, otherwise the mock oracle drifts
        let script = fixture_mock_script();
        let schema = default_schema();
        for i in 0..FIXTURE_CORPUS_SIZE {
            let text = nfc(&fixture_text(i)).to_lowercase();
            let expected = fixture_features(i);
            for (f, feature) in schema.features.iter().enumerate() {
                let hit = script.keywords[&feature.canonical_id]
                    .iter()
                    .any(|w| text.contains(&nfc(w).to_lowercase()));
                assert_eq!(
                    hit,
                    expected.contains(&f),
                    "record {i}, feature {} ({text})",
                    feature.canonical_id
                );
            }
        }
    }

    #[test]
    fn exemplar_texts_match_their_labels_under_keyword_rules() {
        let script = fixture_mock_script();
        let schema = default_schema();
        let exemplars = default_exemplars();
        for ex in exemplars.english.iter().chain(&exemplars.persian) {
            let text = nfc(&ex.text).to_lowercase();
            for (f, feature) in schema.features.iter().enumerate() {
                let hit = script.keywords[&feature.canonical_id]
                    .iter()
                    .any(|w| text.contains(&nfc(w).to_lowercase()));
                assert_eq!(hit, ex.labels[f], "feature {} in {:?}", feature.canonical_id, ex.text);
            }
        }
    }

    #[test]
    fn truth_flips_create_disagreement() {
        let flipped: Vec<usize> = (0..FIXTURE_CORPUS_SIZE)
            .filter(|&i| !fixture_flips(i).is_empty())
            .collect();
        assert!(flipped.len() >= 10, "enough records must disagree with their text");
        assert!(flipped.len() <= 40, "most cells still agree");
    }

    #[test]
    fn write_fixtures_emits_all_files() {
        let dir = tempfile::tempdir().unwrap();
        write_fixtures(dir.path()).unwrap();
        for name in [
            "corpus.jsonl",
            "truth.csv",
            "mock_script.json",
            "schema.json",
            "exemplars.json",
        ] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let corpus = Corpus::load_jsonl(&dir.path().join("corpus.jsonl")).unwrap();
        assert_eq!(corpus.len(), FIXTURE_CORPUS_SIZE);
        let schema = FeatureSchema::load(&dir.path().join("schema.json")).unwrap();
        let truth = crate::corpus::load_ground_truth(&dir.path().join("truth.csv"), &schema).unwrap();
        assert_eq!(truth.len(), FIXTURE_CORPUS_SIZE);
    }
}
