//! Deterministic rendering of translation prompts, few-shot extraction
//! prompts (english and persian variants), and the 13-field binary output
//! template. Rendering is a pure function of its inputs: no timestamps, no
//! randomness, no environment dependence.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{FeatureSchema, Language, Transcript};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("transcript {id:?} is already {language}, expected persian")]
    WrongLanguage { id: String, language: Language },
    #[error("no exemplars available for the {0} variant")]
    MissingExemplars(Language),
    #[error("invalid exemplar set: {0}")]
    InvalidExemplars(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Instruction line sent to the translator model, followed by a newline and
/// the transcript text.
pub const TRANSLATION_INSTRUCTION: &str = "Translate the following text from Persian to English:";

/// System prompt for the english extraction variant.
pub const SYSTEM_PROMPT_ENGLISH: &str = "You are an expert in data extraction specializing in medical information. You are provided with clinical data about patients with cancer who require palliative care. Your task is to read the patient's condition and extract ONLY complications strictly into the predefined format below.\n\n1. Output exactly the same structure and order of fields.\n2. Fill each field with True or False only.\n3. Do not infer or assume any information that is not explicitly stated.\n4. Do not output any text outside the provided template.";

/// System prompt for the persian extraction variant. This is a
/// project-authored localization; field values stay True/False in both
/// variants.
pub const SYSTEM_PROMPT_PERSIAN: &str = "شما یک متخصص استخراج داده در حوزه اطلاعات پزشکی هستید. داده‌های بالینی مربوط به بیماران مبتلا به سرطان که نیازمند مراقبت تسکینی هستند در اختیار شما قرار می‌گیرد. وظیفه شما این است که شرح حال بیمار را بخوانید و فقط عوارض را دقیقاً در قالب از پیش تعریف‌شده زیر استخراج کنید.\n\n۱. ساختار و ترتیب فیلدها را دقیقاً مانند قالب خروجی دهید.\n۲. هر فیلد را فقط با True یا False پر کنید.\n۳. هیچ اطلاعاتی را که صریحاً بیان نشده است حدس نزنید.\n۴. هیچ متنی خارج از قالب ارائه‌شده خروجی ندهید.";

/// Which kind of request a bundle encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    English,
    Persian,
    Translation,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::English => "english",
            PromptVariant::Persian => "persian",
            PromptVariant::Translation => "translation",
        }
    }
}

impl From<Language> for PromptVariant {
    fn from(lang: Language) -> Self {
        match lang {
            Language::English => PromptVariant::English,
            Language::Persian => PromptVariant::Persian,
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully rendered request: system content, user content, and a content
/// fingerprint used as the completion-cache key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub variant: PromptVariant,
    /// SHA-256 over (variant, system, user); equal fields imply equal
    /// fingerprints.
    pub fingerprint: String,
    /// The transcript text the prompt asks about. Derivable from `user`;
    /// carried separately so deterministic test backends need not re-parse
    /// the rendered prompt. Not part of the fingerprint.
    pub target_text: String,
}

impl PromptBundle {
    pub fn new(system: String, user: String, variant: PromptVariant, target_text: String) -> Self {
        let fingerprint = fingerprint(variant, &system, &user);
        PromptBundle {
            system,
            user,
            variant,
            fingerprint,
            target_text,
        }
    }
}

/// Content hash of a prompt. Components are length-prefixed so that
/// (system, user) boundaries cannot alias.
pub fn fingerprint(variant: PromptVariant, system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [variant.as_str(), system, user] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// One worked input/output example embedded in extraction prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub labels: Vec<bool>,
}

/// Per-variant few-shot examples, three per variant by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub english: Vec<Exemplar>,
    pub persian: Vec<Exemplar>,
}

impl ExemplarSet {
    pub fn from_json_str(json: &str) -> Result<Self, PromptError> {
        let set: ExemplarSet =
            serde_json::from_str(json).map_err(|e| PromptError::InvalidExemplars(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let json = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&json)
    }

    fn validate(&self) -> Result<(), PromptError> {
        for (name, list) in [("english", &self.english), ("persian", &self.persian)] {
            for (i, ex) in list.iter().enumerate() {
                if ex.labels.len() != crate::corpus::FEATURE_COUNT {
                    return Err(PromptError::InvalidExemplars(format!(
                        "{name} exemplar {i} has {} labels, expected {}",
                        ex.labels.len(),
                        crate::corpus::FEATURE_COUNT
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn for_variant(&self, variant: Language) -> Result<&[Exemplar], PromptError> {
        let list = match variant {
            Language::English => &self.english,
            Language::Persian => &self.persian,
        };
        if list.is_empty() {
            return Err(PromptError::MissingExemplars(variant));
        }
        Ok(list)
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("exemplars serialize");
        crate::corpus::hex_sha256(json.as_bytes())
    }
}

/// Renders the translation request for a persian transcript: the verbatim
/// instruction line, a newline, then the transcript text. System content is
/// empty.
pub fn render_translation_prompt(transcript: &Transcript) -> Result<PromptBundle, PromptError> {
    if transcript.language != Language::Persian {
        return Err(PromptError::WrongLanguage {
            id: transcript.id.clone(),
            language: transcript.language,
        });
    }
    let user = format!("{TRANSLATION_INSTRUCTION}\n{}", transcript.text);
    Ok(PromptBundle::new(
        String::new(),
        user,
        PromptVariant::Translation,
        transcript.text.clone(),
    ))
}

/// Renders the 13-line binary output template: one `<label>: True|False`
/// line per feature, in schema order.
pub fn render_output_template(labels: &[bool], variant: Language, schema: &FeatureSchema) -> String {
    assert_eq!(labels.len(), schema.len(), "label vector length mismatch");
    let mut lines = Vec::with_capacity(schema.len());
    for (feature, &value) in schema.features.iter().zip(labels) {
        let word = if value { "True" } else { "False" };
        lines.push(format!("{}: {word}", feature.label_for(variant)));
    }
    lines.join("\n")
}

struct Scaffold {
    example: &'static str,
    input: &'static str,
    output: &'static str,
    task: &'static str,
}

const SCAFFOLD_ENGLISH: Scaffold = Scaffold {
    example: "Example",
    input: "Input:",
    output: "Output:",
    task: "Now extract the features from the following input.",
};

const SCAFFOLD_PERSIAN: Scaffold = Scaffold {
    example: "مثال",
    input: "ورودی:",
    output: "خروجی:",
    task: "اکنون ویژگی‌ها را از ورودی زیر استخراج کنید.",
};

/// Renders the few-shot extraction prompt for a target text. The system
/// content carries the role and the four formatting constraints; the user
/// content embeds the worked exemplars (input text plus rendered template)
/// followed by the target text and a trailing output cue.
pub fn render_extraction_prompt(
    text: &str,
    variant: Language,
    exemplars: &ExemplarSet,
    schema: &FeatureSchema,
) -> Result<PromptBundle, PromptError> {
    let examples = exemplars.for_variant(variant)?;
    let (system, scaffold) = match variant {
        Language::English => (SYSTEM_PROMPT_ENGLISH, SCAFFOLD_ENGLISH),
        Language::Persian => (SYSTEM_PROMPT_PERSIAN, SCAFFOLD_PERSIAN),
    };

    let mut user = String::new();
    for (i, ex) in examples.iter().enumerate() {
        user.push_str(&format!(
            "{} {}:\n{}\n{}\n{}\n{}\n\n",
            scaffold.example,
            i + 1,
            scaffold.input,
            ex.text,
            scaffold.output,
            render_output_template(&ex.labels, variant, schema),
        ));
    }
    user.push_str(&format!(
        "{}\n{}\n{}\n{}",
        scaffold.task, scaffold.input, text, scaffold.output
    ));

    Ok(PromptBundle::new(
        system.to_string(),
        user,
        variant.into(),
        text.to_string(),
    ))
}
