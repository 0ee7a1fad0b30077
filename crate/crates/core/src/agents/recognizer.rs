//! Deterministic emotion recognition.
//!
//! Scripted agents declare their emotion in a structured marker, which
//! short-circuits recognition. For unmarked text a documented keyword
//! lexicon applies, with resistance and defensive phrasing mapped to anger
//! ahead of every other class.

use crate::agents::{markers, AgentError, EmotionRecognizer};
use crate::emotion::Emotion;
use crate::sim::DialogueTurn;

/// Checked in priority order; anger first so defiance outranks co-occurring
/// worry or apology phrases.
const LEXICON: &[(Emotion, &[&str])] = &[
    (
        Emotion::Anger,
        &[
            "refuse",
            "won't pay",
            "will not pay",
            "can't make me",
            "cannot make me",
            "unacceptable",
            "outrageous",
            "how dare",
            "stop harassing",
            "wasting my time",
            "not another cent",
        ],
    ),
    (
        Emotion::Fear,
        &[
            "afraid",
            "scared",
            "terrified",
            "worried",
            "we lose everything",
            "keeps me up at night",
            "anxious",
        ],
    ),
    (
        Emotion::Sadness,
        &[
            "struggling",
            "hard times",
            "weighs on",
            "heartbreaking",
            "we've lost",
            "everything we have",
            "i'm sorry to say",
        ],
    ),
    (
        Emotion::Disgust,
        &[
            "disgust",
            "insulting",
            "beneath",
            "offensive",
            "off-putting",
            "not serious",
        ],
    ),
    (
        Emotion::Joy,
        &[
            "glad",
            "great news",
            "thank you",
            "happy to",
            "wonderful",
            "relieved",
        ],
    ),
    (
        Emotion::Surprise,
        &[
            "didn't expect",
            "did not expect",
            "surprised",
            "unexpected",
            "can't believe",
            "cannot believe",
        ],
    ),
];

/// Lexicon lookup on unmarked text; neutral when nothing fires.
pub fn lexicon_emotion(text: &str) -> Emotion {
    let lowered = text.to_ascii_lowercase();
    for (emotion, keywords) in LEXICON {
        if keywords.iter().any(|k| lowered.contains(k)) {
            return *emotion;
        }
    }
    Emotion::Neutral
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RuleBasedRecognizer;

impl EmotionRecognizer for RuleBasedRecognizer {
    fn recognize(
        &self,
        utterance: &str,
        _context: &[DialogueTurn],
    ) -> Result<Emotion, AgentError> {
        if let Some(declared) = markers::parse_markers(utterance).declared_emotion {
            return Ok(declared);
        }
        Ok(lexicon_emotion(utterance))
    }
}
