//! Agent backends: the interfaces the negotiation loop talks to, plus the
//! deterministic scripted implementations and the HTTP chat-completion
//! client for hosted or local language models.

pub mod judge;
pub mod llm;
pub mod markers;
pub mod prompts;
pub mod recognizer;
pub mod scripted;

use thiserror::Error;

use crate::emotion::Emotion;
use crate::hmm::StrategicMode;
use crate::policy::PolicyBranch;
use crate::scenario::Scenario;
use crate::sim::{DialogueTurn, NegotiationState};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("bad generation request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Template(#[from] prompts::TemplateError),
}

/// What the emotion policy decided for the creditor's reply this turn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CreditorDirective {
    pub emotion: Emotion,
    pub branch: PolicyBranch,
    /// Dominant strategic mode under the updated belief; present only when
    /// the model branch fired.
    pub mode: Option<StrategicMode>,
}

/// Context handed to an agent backend for one message.
pub struct GenerateRequest<'a> {
    pub scenario: &'a Scenario,
    /// Fully completed turns so far.
    pub prior_turns: &'a [DialogueTurn],
    pub turn: u32,
    /// The debtor message of the in-progress turn; present for creditor calls.
    pub current_debtor_msg: Option<&'a str>,
    /// Present for creditor calls.
    pub directive: Option<CreditorDirective>,
}

/// Message generator for either side of the table.
pub trait AgentBackend: Send + Sync {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<String, AgentError>;
}

/// Context handed to the judge after both sides spoke on a turn.
pub struct JudgeContext<'a> {
    pub scenario: &'a Scenario,
    pub prior_turns: &'a [DialogueTurn],
    pub turn: u32,
    pub debtor_msg: &'a str,
    pub creditor_msg: &'a str,
}

/// Phase classifier; output restricted to the five negotiation phases.
pub trait JudgeBackend: Send + Sync {
    fn classify(&self, ctx: &JudgeContext<'_>) -> Result<NegotiationState, AgentError>;
}

/// Maps an utterance to one of the seven emotion labels.
pub trait EmotionRecognizer: Send + Sync {
    fn recognize(
        &self,
        utterance: &str,
        context: &[DialogueTurn],
    ) -> Result<Emotion, AgentError>;
}

/// The creditor's standing offer from the debtor's point of view: the latest
/// structured creditor offer, or the scenario's opening demand before any
/// creditor message carried one.
pub fn standing_creditor_offer(scenario: &Scenario, prior_turns: &[DialogueTurn]) -> u32 {
    prior_turns
        .iter()
        .rev()
        .find_map(|t| t.creditor_offer_days)
        .unwrap_or(scenario.creditor_initial_days)
}

/// The debtor's latest structured offer across prior turns and, when given,
/// the in-progress turn's debtor message.
pub fn latest_debtor_offer(
    prior_turns: &[DialogueTurn],
    current_debtor_msg: Option<&str>,
) -> Option<u32> {
    current_debtor_msg
        .and_then(|msg| markers::parse_markers(msg).offer_days)
        .or_else(|| prior_turns.iter().rev().find_map(|t| t.debtor_offer_days))
}

/// Plain-text rendering of the most recent `limit` turns, for prompts.
pub fn render_history(turns: &[DialogueTurn], limit: usize) -> String {
    let start = turns.len().saturating_sub(limit);
    let mut out = String::new();
    for turn in &turns[start..] {
        out.push_str(&format!(
            "turn {} debtor: {}\nturn {} creditor: {}\n",
            turn.index, turn.debtor_msg, turn.index, turn.creditor_msg
        ));
    }
    if out.is_empty() {
        out.push_str("(no prior exchange)\n");
    }
    out
}
