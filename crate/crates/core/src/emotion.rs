//! Emotion alphabet shared by every layer of the simulator.
//!
//! Seven discrete emotions cover both sides of a negotiation. Each emotion
//! carries a valence class: the four negative emotions drive escalation
//! handling, everything else counts as non-negative.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete emotion label attached to a single utterance.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Joy,
    Sadness,
    Anger,
    Fear,
    Disgust,
    Surprise,
    Neutral,
}

impl Emotion {
    /// Every emotion, in canonical declaration order.
    pub const ALL: [Emotion; 7] = [
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    pub const COUNT: usize = 7;

    /// Stable index into 7-wide tables.
    pub fn index(self) -> usize {
        match self {
            Emotion::Joy => 0,
            Emotion::Sadness => 1,
            Emotion::Anger => 2,
            Emotion::Fear => 3,
            Emotion::Disgust => 4,
            Emotion::Surprise => 5,
            Emotion::Neutral => 6,
        }
    }

    pub fn from_index(i: usize) -> Option<Emotion> {
        Emotion::ALL.get(i).copied()
    }

    /// Canonical lowercase label used in every serialized format.
    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }

    /// Parses a label, tolerating surrounding whitespace and any casing.
    pub fn parse(s: &str) -> Option<Emotion> {
        let s = s.trim();
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
    }

    pub fn valence(self) -> ValenceClass {
        match self {
            Emotion::Sadness | Emotion::Anger | Emotion::Fear | Emotion::Disgust => {
                ValenceClass::Negative
            }
            Emotion::Joy | Emotion::Surprise | Emotion::Neutral => ValenceClass::NonNegative,
        }
    }

    pub fn is_negative(self) -> bool {
        self.valence() == ValenceClass::Negative
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coarse valence partition of the emotion alphabet.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValenceClass {
    Negative,
    NonNegative,
}

impl ValenceClass {
    pub const ALL: [ValenceClass; 2] = [ValenceClass::Negative, ValenceClass::NonNegative];

    pub fn index(self) -> usize {
        match self {
            ValenceClass::Negative => 0,
            ValenceClass::NonNegative => 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HistoryError {
    #[error("turn {attempted} does not follow last recorded turn {last}; turn indices must strictly increase")]
    NonIncreasingTurn { last: u32, attempted: u32 },
    #[error("history window must be at least 1")]
    ZeroWindow,
}

/// Sliding window of `(turn, emotion)` observations for one speaker.
///
/// Holds at most `window` entries; pushing past capacity evicts the oldest.
/// Turn indices must strictly increase so replays cannot double-record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionHistory {
    window: usize,
    entries: VecDeque<(u32, Emotion)>,
}

impl EmotionHistory {
    pub fn new(window: usize) -> Result<EmotionHistory, HistoryError> {
        if window == 0 {
            return Err(HistoryError::ZeroWindow);
        }
        Ok(EmotionHistory {
            window,
            entries: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records the emotion observed on `turn`, evicting the oldest entry once
    /// the window is full.
    pub fn push(&mut self, turn: u32, emotion: Emotion) -> Result<(), HistoryError> {
        if let Some(&(last, _)) = self.entries.back() {
            if turn <= last {
                return Err(HistoryError::NonIncreasingTurn {
                    last,
                    attempted: turn,
                });
            }
        }
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back((turn, emotion));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Emotion)> + '_ {
        self.entries.iter().copied()
    }

    pub fn last(&self) -> Option<(u32, Emotion)> {
        self.entries.back().copied()
    }

    /// The most recent `min(n, len)` emotions, oldest first.
    pub fn recent(&self, n: usize) -> Vec<Emotion> {
        let take = n.min(self.entries.len());
        self.entries
            .iter()
            .skip(self.entries.len() - take)
            .map(|&(_, e)| e)
            .collect()
    }
}
