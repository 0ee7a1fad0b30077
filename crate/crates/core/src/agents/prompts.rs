//! Prompt templates for LLM backends.
//!
//! Templates live as plain-text assets with `{{slot}}` placeholders and a
//! manifest declaring each template's required slots; both are embedded at
//! compile time so binaries are self-contained. Rendering is single-pass:
//! substituted values are inserted verbatim and never re-expanded.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

use crate::emotion::Emotion;
use crate::hmm::StrategicMode;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template `{template}` has no value for slot `{name}`")]
    MissingSlot { template: &'static str, name: String },
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum PromptId {
    EmotionDetection,
    CreditorNegotiation,
    CreditorStrategyMode,
    DebtorPersona,
    StateDetection,
    EmotionConfig,
    StrategyImpl,
}

impl PromptId {
    pub const ALL: [PromptId; 7] = [
        PromptId::EmotionDetection,
        PromptId::CreditorNegotiation,
        PromptId::CreditorStrategyMode,
        PromptId::DebtorPersona,
        PromptId::StateDetection,
        PromptId::EmotionConfig,
        PromptId::StrategyImpl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptId::EmotionDetection => "emotion_detection",
            PromptId::CreditorNegotiation => "creditor_negotiation",
            PromptId::CreditorStrategyMode => "creditor_strategy_mode",
            PromptId::DebtorPersona => "debtor_persona",
            PromptId::StateDetection => "state_detection",
            PromptId::EmotionConfig => "emotion_config",
            PromptId::StrategyImpl => "strategy_impl",
        }
    }
}

pub struct PromptTemplate {
    pub id: PromptId,
    pub text: &'static str,
    /// Slots the manifest declares for this template.
    pub slots: Vec<String>,
}

const MANIFEST: &str = include_str!("../../assets/prompts/manifest.json");

fn embedded_text(id: PromptId) -> &'static str {
    match id {
        PromptId::EmotionDetection => include_str!("../../assets/prompts/emotion_detection.txt"),
        PromptId::CreditorNegotiation => {
            include_str!("../../assets/prompts/creditor_negotiation.txt")
        }
        PromptId::CreditorStrategyMode => {
            include_str!("../../assets/prompts/creditor_strategy_mode.txt")
        }
        PromptId::DebtorPersona => include_str!("../../assets/prompts/debtor_persona.txt"),
        PromptId::StateDetection => include_str!("../../assets/prompts/state_detection.txt"),
        PromptId::EmotionConfig => include_str!("../../assets/prompts/emotion_config.txt"),
        PromptId::StrategyImpl => include_str!("../../assets/prompts/strategy_impl.txt"),
    }
}

#[derive(Deserialize)]
struct ManifestDoc {
    templates: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    id: String,
    #[allow(dead_code)]
    file: String,
    slots: Vec<String>,
}

fn registry() -> &'static Vec<PromptTemplate> {
    static REGISTRY: OnceLock<Vec<PromptTemplate>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let doc: ManifestDoc =
            serde_json::from_str(MANIFEST).expect("embedded prompt manifest is valid JSON");
        PromptId::ALL
            .into_iter()
            .map(|id| {
                let entry = doc
                    .templates
                    .iter()
                    .find(|e| e.id == id.as_str())
                    .unwrap_or_else(|| panic!("manifest missing template `{}`", id.as_str()));
                PromptTemplate {
                    id,
                    text: embedded_text(id),
                    slots: entry.slots.clone(),
                }
            })
            .collect()
    })
}

pub fn template(id: PromptId) -> &'static PromptTemplate {
    registry()
        .iter()
        .find(|t| t.id == id)
        .expect("registry covers every PromptId")
}

/// Renders `t` by substituting every `{{name}}` placeholder from `slots`.
/// Unknown placeholders fail by name; extra map entries are ignored.
pub fn render(t: &PromptTemplate, slots: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(t.text.len());
    let mut rest = t.text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            // unterminated braces are literal text
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        match slots.get(name) {
            Some(value) => out.push_str(value),
            None => {
                return Err(TemplateError::MissingSlot {
                    template: t.id.as_str(),
                    name: name.to_string(),
                })
            }
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Stance directive text for the creditor strategy-mode template.
pub fn mode_directive(mode: StrategicMode) -> &'static str {
    match mode {
        StrategicMode::Cooperative => {
            "Build rapport: acknowledge the debtor's constraints, emphasize the \
             shared interest in closing the account, and present your offer as a \
             joint solution."
        }
        StrategicMode::Confrontational => {
            "Hold firm boundaries: restate the obligation plainly, decline to \
             reward pressure tactics, and make clear which terms are not moving."
        }
        StrategicMode::Distressed => {
            "Convey controlled urgency: be candid that the account's status is \
             serious, show empathy for hardship, and steer toward a concrete \
             schedule now rather than later."
        }
        StrategicMode::Strategic => {
            "Stay measured and flexible: probe for what the debtor actually \
             values, trade small concessions for commitment, and keep options \
             open without revealing your reservation point."
        }
    }
}

/// Per-emotion expression guideline for the emotion-config template.
pub fn emotion_guideline(e: Emotion) -> &'static str {
    match e {
        Emotion::Joy => "Sound genuinely encouraged by the progress; mark agreement warmly.",
        Emotion::Sadness => "Sound regretful about the situation without assigning blame.",
        Emotion::Anger => "Sound firm and displeased; keep it professional, never abusive.",
        Emotion::Fear => "Voice concern about where the account is heading if unresolved.",
        Emotion::Disgust => "Signal that the current proposal is not a serious basis to continue.",
        Emotion::Surprise => "React to the unexpected turn and ask the debtor to clarify.",
        Emotion::Neutral => "Keep an even, procedural tone focused on the numbers.",
    }
}
