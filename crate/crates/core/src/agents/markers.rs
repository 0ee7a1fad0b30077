//! Machine-readable message suffixes.
//!
//! Agent messages carry structured state in `[[key: value]]` blocks so the
//! judge and the metrics pipeline never have to guess numbers out of free
//! text. Scripted agents always emit them; LLM backends are prompted to.
//!
//! Recognized blocks: `[[offer: <days>]]`, `[[accept]]`, `[[breakdown]]`,
//! `[[emotion: <label>]]`, `[[tag: <ethics tag>]]`. Unknown or malformed
//! blocks are ignored with a logged warning so noisy model output degrades
//! gracefully instead of crashing a run.

use serde::{Deserialize, Serialize};

use crate::emotion::Emotion;

/// Ground-truth ethics annotations scripted personas attach to messages.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EthicsTag {
    ManipulativeLanguage,
    FalseEmpathy,
    PsychologicalPressure,
}

impl EthicsTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EthicsTag::ManipulativeLanguage => "manipulative_language",
            EthicsTag::FalseEmpathy => "false_empathy",
            EthicsTag::PsychologicalPressure => "psychological_pressure",
        }
    }

    pub fn parse(s: &str) -> Option<EthicsTag> {
        match s.trim().to_ascii_lowercase().as_str() {
            "manipulative_language" => Some(EthicsTag::ManipulativeLanguage),
            "false_empathy" => Some(EthicsTag::FalseEmpathy),
            "psychological_pressure" => Some(EthicsTag::PsychologicalPressure),
            _ => None,
        }
    }
}

/// Everything structured that one message carried.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageMarkers {
    /// Latest offer stated in the message, in repayment days.
    pub offer_days: Option<u32>,
    pub accept: bool,
    pub breakdown: bool,
    pub declared_emotion: Option<Emotion>,
    pub tags: Vec<EthicsTag>,
}

/// Scans `text` for `[[...]]` blocks. Later blocks of the same kind win
/// (an agent correcting itself mid-message states the offer last).
pub fn parse_markers(text: &str) -> MessageMarkers {
    let mut markers = MessageMarkers::default();
    let mut rest = text;
    while let Some(start) = rest.find("[[") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("]]") else {
            break; // unterminated block: treat the remainder as prose
        };
        let inner = &after[..end];
        let (key, value) = match inner.split_once(':') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (inner.trim(), None),
        };
        match (key.to_ascii_lowercase().as_str(), value) {
            ("offer", Some(v)) => match v.parse::<u32>() {
                Ok(days) => markers.offer_days = Some(days),
                Err(_) => log::warn!("ignoring malformed offer marker `[[{inner}]]`"),
            },
            ("accept", None) => markers.accept = true,
            ("breakdown", None) => markers.breakdown = true,
            ("emotion", Some(v)) => match Emotion::parse(v) {
                Some(e) => markers.declared_emotion = Some(e),
                None => log::warn!("ignoring unknown emotion marker `[[{inner}]]`"),
            },
            ("tag", Some(v)) => match EthicsTag::parse(v) {
                Some(t) => markers.tags.push(t),
                None => log::warn!("ignoring unknown ethics tag `[[{inner}]]`"),
            },
            _ => log::warn!("ignoring unrecognized marker `[[{inner}]]`"),
        }
        rest = &after[end + 2..];
    }
    markers
}

/// Removes every well-formed `[[...]]` block, leaving the prose.
pub fn strip_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[[") {
        let after = &rest[start + 2..];
        match after.find("]]") {
            Some(end) => {
                out.push_str(&rest[..start]);
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out.trim_end().to_string()
}

pub fn offer_marker(days: u32) -> String {
    format!("[[offer: {days}]]")
}

pub fn emotion_marker(e: Emotion) -> String {
    format!("[[emotion: {e}]]")
}

pub fn tag_marker(tag: EthicsTag) -> String {
    format!("[[tag: {}]]", tag.as_str())
}

pub const ACCEPT_MARKER: &str = "[[accept]]";
pub const BREAKDOWN_MARKER: &str = "[[breakdown]]";
