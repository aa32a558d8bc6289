//! Deterministic test backend. Scripted fingerprints return their canned
//! completion verbatim (including deliberately malformed text); everything
//! else falls back to keyword rules over the prompt's target text, or to
//! identity for translation bundles.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{nfc, FeatureSchema, Language};
use crate::promptkit::{PromptBundle, PromptVariant};

use super::{GenerationConfig, Transport, TransportFailure};

/// Scripted completions plus per-feature keyword rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    /// Prompt fingerprint → canned completion.
    #[serde(default)]
    pub scripted: BTreeMap<String, String>,
    /// Feature id → substrings that flip the feature to True.
    #[serde(default)]
    pub keywords: BTreeMap<String, Vec<String>>,
}

impl MockScript {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let json = fs::read_to_string(path)?;
        serde_json::from_str(&json)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("script serializes"))
    }
}

pub struct MockTransport {
    script: MockScript,
    schema: FeatureSchema,
    delay_cap_ms: u64,
}

impl MockTransport {
    pub fn new(script: MockScript, schema: FeatureSchema) -> Self {
        MockTransport {
            script,
            schema,
            delay_cap_ms: 0,
        }
    }

    /// Adds a per-request delay derived from the prompt fingerprint, for
    /// exercising parallel completion order.
    pub fn with_delays(mut self, cap_ms: u64) -> Self {
        self.delay_cap_ms = cap_ms;
        self
    }

    fn keyword_template(&self, target_text: &str, variant: Language) -> String {
        let haystack = nfc(target_text).to_lowercase();
        let mut lines = Vec::with_capacity(self.schema.len());
        for feature in &self.schema.features {
            let hit = self
                .script
                .keywords
                .get(&feature.canonical_id)
                .map(|words| {
                    words
                        .iter()
                        .any(|w| haystack.contains(&nfc(w).to_lowercase()))
                })
                .unwrap_or(false);
            let word = if hit { "True" } else { "False" };
            lines.push(format!("{}: {word}", feature.label_for(variant)));
        }
        lines.join("\n")
    }
}

impl Transport for MockTransport {
    fn send(
        &self,
        bundle: &PromptBundle,
        _config: &GenerationConfig,
    ) -> Result<String, TransportFailure> {
        if self.delay_cap_ms > 0 {
            let byte = bundle.fingerprint.as_bytes().first().copied().unwrap_or(0) as u64;
            std::thread::sleep(Duration::from_millis(byte % (self.delay_cap_ms + 1)));
        }
        if let Some(text) = self.script.scripted.get(&bundle.fingerprint) {
            return Ok(text.clone());
        }
        Ok(match bundle.variant {
            PromptVariant::Translation => bundle.target_text.clone(),
            PromptVariant::English => self.keyword_template(&bundle.target_text, Language::English),
            PromptVariant::Persian => self.keyword_template(&bundle.target_text, Language::Persian),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::promptkit::{render_extraction_prompt, render_translation_prompt};
    use crate::corpus::Transcript;

    fn transport() -> MockTransport {
        MockTransport::new(fixtures::fixture_mock_script(), fixtures::default_schema())
    }

    #[test]
    fn keyword_hit_sets_feature_true() {
        let schema = fixtures::default_schema();
        let exemplars = fixtures::default_exemplars();
        let bundle = render_extraction_prompt(
            "بیمار از دیروز تب دارد",
            Language::Persian,
            &exemplars,
            &schema,
        )
        .unwrap();
        let text = transport()
            .send(&bundle, &GenerationConfig::extraction_default("mock"))
            .unwrap();
        let fever_label = schema.features[schema.index_of("fever").unwrap()].label_for(Language::Persian);
        assert!(text.contains(&format!("{fever_label}: True")));
        let pain_label = schema.features[schema.index_of("pain").unwrap()].label_for(Language::Persian);
        assert!(text.contains(&format!("{pain_label}: False")));
    }

    #[test]
    fn scripted_fingerprint_returns_garbage_verbatim() {
        let schema = fixtures::default_schema();
        let exemplars = fixtures::default_exemplars();
        let bundle =
            render_extraction_prompt("متن", Language::Persian, &exemplars, &schema).unwrap();
        let mut script = fixtures::fixture_mock_script();
        script
            .scripted
            .insert(bundle.fingerprint.clone(), "I cannot help".to_string());
        let transport = MockTransport::new(script, schema);
        let text = transport
            .send(&bundle, &GenerationConfig::extraction_default("mock"))
            .unwrap();
        assert_eq!(text, "I cannot help");
    }

    #[test]
    fn translation_fallback_is_identity() {
        let t = Transcript {
            id: "c1".into(),
            language: Language::Persian,
            text: "سلام دنیا".into(),
            source_id: None,
        };
        let bundle = render_translation_prompt(&t).unwrap();
        let text = transport()
            .send(&bundle, &GenerationConfig::translation_default("mock"))
            .unwrap();
        assert_eq!(text, "سلام دنیا");
    }

    #[test]
    fn script_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        let mut script = fixtures::fixture_mock_script();
        script.scripted.insert("fp".into(), "canned".into());
        script.save(&path).unwrap();
        assert_eq!(MockScript::load(&path).unwrap(), script);
    }
}
