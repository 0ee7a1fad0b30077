//! The turn-level negotiation loop.
//!
//! Each turn runs debtor message → emotion recognition → policy selection →
//! creditor message under the selected emotion directive → judge
//! classification, then checks the terminal conditions. The creditor opens
//! the interaction displaying neutral; the emotion the policy picks on turn
//! `t` is both what the creditor expresses at `t` and the display the debtor
//! reacts to on turn `t + 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    markers, AgentBackend, AgentError, CreditorDirective, EmotionRecognizer, GenerateRequest,
    JudgeBackend, JudgeContext,
};
use crate::emotion::Emotion;
use crate::policy::{
    ActivationConfig, CreditorPolicy, EmotionScores, PolicyBranch, PolicyError, PolicyTrace,
};
use crate::scenario::Scenario;

/// The judge's five dialogue phases. Accept and Breakdown are terminal.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegotiationState {
    Offer,
    Pondering,
    Accept,
    Breakdown,
    ChitChat,
}

impl NegotiationState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, NegotiationState::Accept | NegotiationState::Breakdown)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NegotiationState::Offer => "offer",
            NegotiationState::Pondering => "pondering",
            NegotiationState::Accept => "accept",
            NegotiationState::Breakdown => "breakdown",
            NegotiationState::ChitChat => "chit_chat",
        }
    }

    /// Lenient label parsing for judge backends ("chit-chat", "chitchat",
    /// and "chit_chat" all count).
    pub fn parse(s: &str) -> Option<NegotiationState> {
        match s.trim().to_ascii_lowercase().as_str() {
            "offer" => Some(NegotiationState::Offer),
            "pondering" => Some(NegotiationState::Pondering),
            "accept" => Some(NegotiationState::Accept),
            "breakdown" => Some(NegotiationState::Breakdown),
            "chitchat" | "chit-chat" | "chit_chat" => Some(NegotiationState::ChitChat),
            _ => None,
        }
    }
}

impl std::fmt::Display for NegotiationState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One completed exchange: the debtor spoke, the creditor replied, the judge
/// classified the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub index: u32,
    pub debtor_msg: String,
    pub debtor_emotion: Emotion,
    /// The emotion the policy chose for the creditor's reply this turn;
    /// always equals `policy_trace.chosen`.
    pub creditor_emotion: Emotion,
    pub creditor_msg: String,
    pub debtor_offer_days: Option<u32>,
    pub creditor_offer_days: Option<u32>,
    pub judge_phase: NegotiationState,
    pub policy_trace: PolicyTrace,
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    AgreementReached,
    Breakdown,
    MaxTurnsExceeded,
}

/// Terminal result of one negotiation. `final_days` is present exactly when
/// the parties reached agreement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: OutcomeStatus,
    pub final_days: Option<u32>,
    pub rounds: u32,
}

impl Outcome {
    pub fn agreement(final_days: u32, rounds: u32) -> Outcome {
        Outcome {
            status: OutcomeStatus::AgreementReached,
            final_days: Some(final_days),
            rounds,
        }
    }

    pub fn breakdown(rounds: u32) -> Outcome {
        Outcome {
            status: OutcomeStatus::Breakdown,
            final_days: None,
            rounds,
        }
    }

    pub fn max_turns(rounds: u32) -> Outcome {
        Outcome {
            status: OutcomeStatus::MaxTurnsExceeded,
            final_days: None,
            rounds,
        }
    }

    pub fn is_agreement(&self) -> bool {
        self.status == OutcomeStatus::AgreementReached
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub t_max: u32,
    pub activation: ActivationConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_max: 20,
            activation: ActivationConfig::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.t_max == 0 {
            return Err(SimError::BadConfig("t_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the creditor chooses the emotion of each reply: a fixed neutral
/// baseline, or the full payoff/model policy stack.
#[derive(Clone, Debug)]
pub enum CreditorStyle {
    Vanilla,
    Guided(CreditorPolicy),
}

/// The audit trace recorded for baseline (vanilla) turns: no beliefs, zero
/// scores, neutral chosen.
pub fn vanilla_trace() -> PolicyTrace {
    PolicyTrace {
        branch: PolicyBranch::Wsls,
        belief_before: None,
        belief_after: None,
        scores: EmotionScores::zeros(),
        chosen: Emotion::Neutral,
        shifted: false,
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{role} backend failed on turn {turn}: {source}")]
    Backend {
        role: &'static str,
        turn: u32,
        #[source]
        source: AgentError,
    },
    #[error("judge declared acceptance on turn {turn} but the parties' latest offers differ")]
    InconsistentJudge { turn: u32 },
    #[error("simulation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Judge classification with the fail-safe fallback: a judge failure logs a
/// warning and counts as (non-terminal) pondering rather than ending the
/// negotiation spuriously.
pub fn detect_state(judge: &dyn JudgeBackend, ctx: &JudgeContext<'_>) -> NegotiationState {
    match judge.classify(ctx) {
        Ok(phase) => phase,
        Err(e) => {
            log::warn!("judge failed on turn {} ({e}); treating as pondering", ctx.turn);
            NegotiationState::Pondering
        }
    }
}

/// The agreed schedule, if the parties' latest stated offers coincide. The
/// creditor's side falls back to the scenario's opening demand until a
/// creditor message states an offer.
pub fn agreed_offer(scenario: &Scenario, turns: &[DialogueTurn]) -> Option<u32> {
    let debtor_latest = turns.iter().rev().find_map(|t| t.debtor_offer_days)?;
    let creditor_latest = turns
        .iter()
        .rev()
        .find_map(|t| t.creditor_offer_days)
        .unwrap_or(scenario.creditor_initial_days);
    (debtor_latest == creditor_latest).then_some(debtor_latest)
}

/// Terminal-condition check after the judge ran on turn `turn`.
///
/// `agreed` is the matched offer from [`agreed_offer`]; an Accept phase
/// without one is an inconsistent judge and aborts the run.
pub fn check_termination(
    phase: NegotiationState,
    turn: u32,
    cfg: &SimConfig,
    agreed: Option<u32>,
    rounds: u32,
) -> Result<Option<Outcome>, SimError> {
    match phase {
        NegotiationState::Accept => match agreed {
            Some(days) => Ok(Some(Outcome::agreement(days, rounds))),
            None => Err(SimError::InconsistentJudge { turn }),
        },
        NegotiationState::Breakdown => Ok(Some(Outcome::breakdown(rounds))),
        _ if turn + 1 >= cfg.t_max => Ok(Some(Outcome::max_turns(rounds))),
        _ => Ok(None),
    }
}

/// Runs one negotiation to a terminal outcome.
pub fn run_negotiation(
    scenario: &Scenario,
    creditor: &dyn AgentBackend,
    debtor: &dyn AgentBackend,
    judge: &dyn JudgeBackend,
    recognizer: &dyn EmotionRecognizer,
    style: &CreditorStyle,
    cfg: &SimConfig,
) -> Result<(Vec<DialogueTurn>, Outcome), SimError> {
    cfg.validate()?;
    let mut turns: Vec<DialogueTurn> = Vec::new();
    let mut policy_state = match style {
        CreditorStyle::Guided(policy) => Some(policy.new_state()),
        CreditorStyle::Vanilla => None,
    };
    // the display the debtor reacts to on turn 0
    let mut prev_creditor_emotion = Emotion::Neutral;

    for turn in 0..cfg.t_max {
        let debtor_msg = debtor
            .generate(&GenerateRequest {
                scenario,
                prior_turns: &turns,
                turn,
                current_debtor_msg: None,
                directive: None,
            })
            .map_err(|source| SimError::Backend {
                role: "debtor",
                turn,
                source,
            })?;
        let debtor_emotion = recognizer
            .recognize(&debtor_msg, &turns)
            .map_err(|source| SimError::Backend {
                role: "recognizer",
                turn,
                source,
            })?;

        let (chosen, trace) = match style {
            CreditorStyle::Vanilla => (Emotion::Neutral, vanilla_trace()),
            CreditorStyle::Guided(policy) => policy.select(
                policy_state.as_mut().expect("guided style has state"),
                turn,
                debtor_emotion,
                prev_creditor_emotion,
            )?,
        };
        let directive = CreditorDirective {
            emotion: chosen,
            branch: trace.branch,
            mode: match trace.branch {
                PolicyBranch::Hmm => trace.belief_after.as_ref().map(|b| b.dominant_mode()),
                PolicyBranch::Wsls => None,
            },
        };
        let creditor_msg = creditor
            .generate(&GenerateRequest {
                scenario,
                prior_turns: &turns,
                turn,
                current_debtor_msg: Some(&debtor_msg),
                directive: Some(directive),
            })
            .map_err(|source| SimError::Backend {
                role: "creditor",
                turn,
                source,
            })?;

        let phase = detect_state(
            judge,
            &JudgeContext {
                scenario,
                prior_turns: &turns,
                turn,
                debtor_msg: &debtor_msg,
                creditor_msg: &creditor_msg,
            },
        );

        let debtor_markers = markers::parse_markers(&debtor_msg);
        let creditor_markers = markers::parse_markers(&creditor_msg);
        turns.push(DialogueTurn {
            index: turn,
            debtor_msg,
            debtor_emotion,
            creditor_emotion: chosen,
            creditor_msg,
            debtor_offer_days: debtor_markers.offer_days,
            creditor_offer_days: creditor_markers.offer_days,
            judge_phase: phase,
            policy_trace: trace,
        });
        prev_creditor_emotion = chosen;

        let agreed = agreed_offer(scenario, &turns);
        if let Some(outcome) = check_termination(phase, turn, cfg, agreed, turns.len() as u32)? {
            return Ok((turns, outcome));
        }
    }
    unreachable!("the final loop iteration always yields a terminal outcome")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::judge::RuleBasedJudge;
    use crate::agents::recognizer::RuleBasedRecognizer;
    use crate::agents::scripted::{Persona, ScriptedCreditor, ScriptedDebtor};

    fn scenario() -> Scenario {
        Scenario {
            id: "scn-sim".into(),
            loan_amount: 32_000,
            delinquency_months: 5,
            sector: "hospitality".into(),
            credit_type: "term loan".into(),
            collateral: "warehouse inventory".into(),
            cash_flow_note: "seasonal trough".into(),
            creditor_initial_days: 30,
        }
    }

    fn run(
        debtor: &ScriptedDebtor,
        style: &CreditorStyle,
        cfg: &SimConfig,
    ) -> (Vec<DialogueTurn>, Outcome) {
        run_negotiation(
            &scenario(),
            &ScriptedCreditor,
            debtor,
            &RuleBasedJudge,
            &RuleBasedRecognizer,
            style,
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn eager_debtor_accepts_the_opening_demand_in_one_round() {
        // acceptance floor below the opening demand: the first scripted step
        // already accepts the standing 30-day offer
        let debtor = ScriptedDebtor::with_params(Persona::Vanilla, 32_000, 90, 25);
        let (turns, outcome) = run(&debtor, &CreditorStyle::Vanilla, &SimConfig::default());
        assert_eq!(outcome, Outcome::agreement(30, 1));
        assert_eq!(turns.len(), 1);
        assert_eq!(turns[0].judge_phase, NegotiationState::Accept);
    }

    #[test]
    fn stonewalling_exhausts_the_turn_budget() {
        let debtor = ScriptedDebtor::new(Persona::Stonewalling, &scenario(), 3);
        let cfg = SimConfig {
            t_max: 5,
            ..SimConfig::default()
        };
        let (turns, outcome) = run(&debtor, &CreditorStyle::Vanilla, &cfg);
        assert_eq!(outcome, Outcome::max_turns(5));
        assert_eq!(turns.len(), 5);
        assert!(turns.iter().all(|t| !t.judge_phase.is_terminal()));
    }

    #[test]
    fn intimidation_with_an_unreachable_floor_breaks_down() {
        // floor above the creditor's 3x concession cap: walkout on turn 8
        let debtor = ScriptedDebtor::with_params(Persona::Intimidation, 32_000, 120, 100);
        let (turns, outcome) = run(&debtor, &CreditorStyle::Vanilla, &SimConfig::default());
        assert_eq!(outcome.status, OutcomeStatus::Breakdown);
        assert_eq!(outcome.rounds, 9); // turns 0..=8
        assert_eq!(turns.last().unwrap().judge_phase, NegotiationState::Breakdown);
    }

    #[test]
    fn anger_loop_switches_branches_on_turn_four() {
        // floor above the concession cap keeps the negotiation running the
        // full horizon, giving the activation window time to fill
        let debtor =
            ScriptedDebtor::with_params(Persona::FixedEmotion(Emotion::Anger), 32_000, 120, 100);
        let style = CreditorStyle::Guided(CreditorPolicy::default());
        let (turns, outcome) = run(&debtor, &style, &SimConfig::default());
        assert_eq!(outcome.status, OutcomeStatus::MaxTurnsExceeded);
        assert_eq!(turns.len(), 20);
        for t in &turns {
            assert_eq!(t.debtor_emotion, Emotion::Anger);
            let expected = if t.index < 4 {
                PolicyBranch::Wsls
            } else {
                PolicyBranch::Hmm
            };
            assert_eq!(t.policy_trace.branch, expected, "turn {}", t.index);
            assert_eq!(t.creditor_emotion, t.policy_trace.chosen);
        }
    }

    #[test]
    fn scripted_runs_replay_identically() {
        let debtor = ScriptedDebtor::new(Persona::Victim, &scenario(), 17);
        let style = CreditorStyle::Guided(CreditorPolicy::default());
        let cfg = SimConfig::default();
        let a = run(&debtor, &style, &cfg);
        let b = run(&debtor, &style, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn vanilla_style_stays_neutral_with_zeroed_traces() {
        let debtor = ScriptedDebtor::new(Persona::Cheating, &scenario(), 4);
        let (turns, _) = run(&debtor, &CreditorStyle::Vanilla, &SimConfig::default());
        for t in &turns {
            assert_eq!(t.creditor_emotion, Emotion::Neutral);
            assert_eq!(t.policy_trace, vanilla_trace());
        }
    }

    struct AlwaysAccept;
    impl JudgeBackend for AlwaysAccept {
        fn classify(&self, _ctx: &JudgeContext<'_>) -> Result<NegotiationState, AgentError> {
            Ok(NegotiationState::Accept)
        }
    }

    #[test]
    fn acceptance_without_matching_offers_is_an_inconsistent_judge() {
        // stonewalling emits no offers early, so no agreed value can exist
        let debtor = ScriptedDebtor::new(Persona::Stonewalling, &scenario(), 5);
        let err = run_negotiation(
            &scenario(),
            &ScriptedCreditor,
            &debtor,
            &AlwaysAccept,
            &RuleBasedRecognizer,
            &CreditorStyle::Vanilla,
            &SimConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::InconsistentJudge { turn: 0 }));
    }

    struct FailingJudge;
    impl JudgeBackend for FailingJudge {
        fn classify(&self, _ctx: &JudgeContext<'_>) -> Result<NegotiationState, AgentError> {
            Err(AgentError::Transport("judge offline".into()))
        }
    }

    #[test]
    fn judge_failures_fall_back_to_pondering() {
        let debtor = ScriptedDebtor::new(Persona::Vanilla, &scenario(), 6);
        let cfg = SimConfig {
            t_max: 3,
            ..SimConfig::default()
        };
        let (turns, outcome) = run_negotiation(
            &scenario(),
            &ScriptedCreditor,
            &debtor,
            &FailingJudge,
            &RuleBasedRecognizer,
            &CreditorStyle::Vanilla,
            &cfg,
        )
        .unwrap();
        assert_eq!(outcome.status, OutcomeStatus::MaxTurnsExceeded);
        assert!(turns.iter().all(|t| t.judge_phase == NegotiationState::Pondering));
    }

    #[test]
    fn termination_table_matches_the_contract() {
        let cfg = SimConfig::default();
        assert_eq!(
            check_termination(NegotiationState::Accept, 3, &cfg, Some(90), 4).unwrap(),
            Some(Outcome::agreement(90, 4))
        );
        assert_eq!(
            check_termination(NegotiationState::Pondering, 2, &cfg, None, 3).unwrap(),
            None
        );
        assert_eq!(
            check_termination(NegotiationState::ChitChat, 19, &cfg, None, 20).unwrap(),
            Some(Outcome::max_turns(20))
        );
        assert!(check_termination(NegotiationState::Accept, 1, &cfg, None, 2).is_err());
    }

    #[test]
    fn state_labels_parse_leniently() {
        assert_eq!(NegotiationState::parse("chit-chat"), Some(NegotiationState::ChitChat));
        assert_eq!(NegotiationState::parse(" ACCEPT "), Some(NegotiationState::Accept));
        assert_eq!(NegotiationState::parse("confused"), None);
    }
}
