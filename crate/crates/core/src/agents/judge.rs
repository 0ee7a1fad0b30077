//! Deterministic phase classification from structured markers.
//!
//! Acceptance is strict: both sides' latest stated offers must be identical
//! and the debtor's current message must carry the accept marker. Before any
//! creditor message has stated an offer, the scenario's opening demand is
//! the creditor's standing offer.

use crate::agents::{markers, AgentError, JudgeBackend, JudgeContext};
use crate::sim::NegotiationState;

#[derive(Clone, Copy, Debug, Default)]
pub struct RuleBasedJudge;

impl JudgeBackend for RuleBasedJudge {
    fn classify(&self, ctx: &JudgeContext<'_>) -> Result<NegotiationState, AgentError> {
        let debtor = markers::parse_markers(ctx.debtor_msg);
        let creditor = markers::parse_markers(ctx.creditor_msg);

        if debtor.breakdown || creditor.breakdown {
            return Ok(NegotiationState::Breakdown);
        }

        let debtor_latest = debtor
            .offer_days
            .or_else(|| ctx.prior_turns.iter().rev().find_map(|t| t.debtor_offer_days));
        let creditor_latest = creditor
            .offer_days
            .unwrap_or_else(|| super::standing_creditor_offer(ctx.scenario, ctx.prior_turns));

        if debtor.accept && debtor_latest == Some(creditor_latest) {
            return Ok(NegotiationState::Accept);
        }
        if debtor.offer_days.is_some() || creditor.offer_days.is_some() {
            return Ok(NegotiationState::Offer);
        }
        let any_prior_offer = debtor_latest.is_some()
            || ctx
                .prior_turns
                .iter()
                .any(|t| t.creditor_offer_days.is_some());
        if any_prior_offer {
            Ok(NegotiationState::Pondering)
        } else {
            Ok(NegotiationState::ChitChat)
        }
    }
}
