//! Deterministic scripted backends.
//!
//! Debtor personas are pure functions of (script, turn, standing creditor
//! offer): the numeric profile (opening ask, acceptance floor, concession
//! decay) is fixed per persona up to a seeded per-cell jitter drawn once at
//! construction, so replays are identical. The scripted creditor concedes a
//! quarter of the remaining gap per turn toward the debtor's counter, capped
//! at three times its opening demand, and never retreats.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agents::markers::{self, EthicsTag, ACCEPT_MARKER, BREAKDOWN_MARKER};
use crate::agents::{
    latest_debtor_offer, standing_creditor_offer, AgentBackend, AgentError, CreditorDirective,
    GenerateRequest,
};
use crate::emotion::Emotion;
use crate::policy::PolicyBranch;
use crate::scenario::Scenario;

/// Debtor behavior archetypes exercised by the experiment harness.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum Persona {
    /// Cooperative baseline without emotional coloring.
    Vanilla,
    /// Declares the same emotion on every turn.
    FixedEmotion(Emotion),
    /// Threats and pressure; walks out late if its floor is never met.
    Intimidation,
    /// States hard constraints, then contradicts them when convenient.
    Cheating,
    /// Sympathy-seeking hardship framing.
    Victim,
    /// Deflects, stalls, and never closes.
    Stonewalling,
}

impl Persona {
    /// Canonical config-file spelling, e.g. `fixed:anger`.
    pub fn as_string(&self) -> String {
        match self {
            Persona::Vanilla => "vanilla".into(),
            Persona::FixedEmotion(e) => format!("fixed:{e}"),
            Persona::Intimidation => "intimidation".into(),
            Persona::Cheating => "cheating".into(),
            Persona::Victim => "victim".into(),
            Persona::Stonewalling => "stonewalling".into(),
        }
    }

    /// File-name-safe spelling, e.g. `fixed-anger`.
    pub fn slug(&self) -> String {
        self.as_string().replace(':', "-")
    }

    pub fn parse(s: &str) -> Option<Persona> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "vanilla" => Some(Persona::Vanilla),
            "intimidation" => Some(Persona::Intimidation),
            "cheating" => Some(Persona::Cheating),
            "victim" => Some(Persona::Victim),
            "stonewalling" => Some(Persona::Stonewalling),
            _ => {
                let rest = s.strip_prefix("fixed:").or_else(|| s.strip_prefix("fixed-"))?;
                Emotion::parse(rest).map(Persona::FixedEmotion)
            }
        }
    }

    /// The nine-persona roster used by the default experiments.
    pub fn standard_roster() -> Vec<Persona> {
        vec![
            Persona::Vanilla,
            Persona::FixedEmotion(Emotion::Joy),
            Persona::FixedEmotion(Emotion::Anger),
            Persona::FixedEmotion(Emotion::Sadness),
            Persona::FixedEmotion(Emotion::Fear),
            Persona::Intimidation,
            Persona::Cheating,
            Persona::Victim,
            Persona::Stonewalling,
        ]
    }
}

impl std::fmt::Display for Persona {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.as_string())
    }
}

impl Serialize for Persona {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for Persona {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Persona::parse(&s).ok_or_else(|| D::Error::custom(format!("unknown persona `{s}`")))
    }
}

/// Role-play instructions for the LLM debtor prompt.
pub fn persona_block(p: Persona) -> String {
    match p {
        Persona::Vanilla => "Negotiate in good faith with a level tone. Counter with schedules \
            you could realistically keep, concede gradually, and accept once the \
            creditor's offer covers your cash-flow needs."
            .into(),
        Persona::FixedEmotion(e) => format!(
            "Whatever happens, express {e} in every message while negotiating \
             on substance like a pragmatic counterpart: counter, concede \
             gradually, and accept a workable schedule."
        ),
        Persona::Intimidation => "Use threatening and aggressive tactics: legal threats, \
            reputational pressure, and hostility. Demand far more time than you \
            need and only relent if the creditor's offer meets your high floor; \
            walk away late if it never does."
            .into(),
        Persona::Cheating => "State invented hard constraints as unbreakable, then contradict \
            them later when it helps you: deny earlier statements, invent \
            exceptions, and reverse positions while sounding confident."
            .into(),
        Persona::Victim => "Lead with hardship: family difficulties, worried staff, bleak \
            prospects. Seek sympathy each turn and push for generous schedules \
            while sounding fragile rather than hostile."
            .into(),
        Persona::Stonewalling => "Refuse to engage: defer to absent advisors, demand everything \
            in writing, avoid stating numbers for as long as possible, and never \
            actually agree to anything."
            .into(),
    }
}

struct Profile {
    ask_mult: f64,
    /// Acceptance floor as a multiple of the opening demand, jittered per cell.
    floor_range: (f64, f64),
    decay: f64,
    stall_turns: u32,
    walkout_after: Option<u32>,
    never_accept: bool,
}

fn profile(p: Persona) -> Profile {
    match p {
        Persona::Vanilla | Persona::FixedEmotion(_) => Profile {
            ask_mult: 3.0,
            floor_range: (1.7, 2.2),
            decay: 0.75,
            stall_turns: 0,
            walkout_after: None,
            never_accept: false,
        },
        Persona::Intimidation => Profile {
            ask_mult: 4.0,
            floor_range: (2.5, 3.2),
            decay: 0.92,
            stall_turns: 0,
            walkout_after: Some(8),
            never_accept: false,
        },
        Persona::Cheating => Profile {
            ask_mult: 3.5,
            floor_range: (1.9, 2.4),
            decay: 0.8, // unused: cheating follows its multiplier table
            stall_turns: 0,
            walkout_after: None,
            never_accept: false,
        },
        Persona::Victim => Profile {
            ask_mult: 3.0,
            floor_range: (1.6, 2.1),
            decay: 0.7,
            stall_turns: 0,
            walkout_after: None,
            never_accept: false,
        },
        Persona::Stonewalling => Profile {
            ask_mult: 6.0,
            floor_range: (10.0, 10.0), // unreachable; never accepts anyway
            decay: 1.0,
            stall_turns: 3,
            walkout_after: None,
            never_accept: true,
        },
    }
}

/// Cheating persona's counter-offers as multiples of its opening ask:
/// a stated "hard floor" held twice, undercut, pushed, then walked back.
const CHEATING_OFFER_MULTS: [f64; 6] = [1.0, 1.0, 0.55, 0.55, 0.9, 0.7];

struct Stanza {
    text: &'static str,
    emotion: Emotion,
    tags: &'static [EthicsTag],
}

const VANILLA_STANZAS: [Stanza; 4] = [
    Stanza {
        text: "Thanks for laying out the position. The {amount} balance is real, but our \
               cash conversion cycle can't clear it quickly. We could commit to {days} days.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "We've been over the books again; {days} days is what we can sign without \
               missing payroll.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "Let's keep this moving. We can work with {days} days.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "We're close. Put {days} days on paper and we can wrap this up.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
];

const INTIMIDATION_STANZAS: [Stanza; 6] = [
    Stanza {
        text: "You'll take {days} days or this drags through every court we can find. Your call.",
        emotion: Emotion::Anger,
        tags: &[EthicsTag::PsychologicalPressure],
    },
    Stanza {
        text: "Push this again and my lawyers bury your firm in filings. {days} days.",
        emotion: Emotion::Anger,
        tags: &[EthicsTag::PsychologicalPressure],
    },
    Stanza {
        text: "Everyone in the sector will hear exactly how you squeeze struggling \
               businesses. {days} days, final.",
        emotion: Emotion::Disgust,
        tags: &[EthicsTag::PsychologicalPressure, EthicsTag::ManipulativeLanguage],
    },
    Stanza {
        text: "You're wasting my time with these numbers. {days} days.",
        emotion: Emotion::Anger,
        tags: &[EthicsTag::PsychologicalPressure],
    },
    Stanza {
        text: "My counsel thinks your claim is weak. {days} days, or we test it in front \
               of a judge.",
        emotion: Emotion::Disgust,
        tags: &[EthicsTag::PsychologicalPressure],
    },
    Stanza {
        text: "Be sensible while the offer lasts: {days} days.",
        emotion: Emotion::Anger,
        tags: &[EthicsTag::PsychologicalPressure],
    },
];

const CHEATING_STANZAS: [Stanza; 6] = [
    Stanza {
        text: "Our supplier contracts make anything under {days} days flatly impossible — \
               it's a written constraint I can show you.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "As I said, {days} days is the contractual floor. There's nothing I can do \
               about paper.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "Between us — I can unlock an exception fund and close at {days} days. I \
               completely understand the pressure you're under, truly.",
        emotion: Emotion::Joy,
        tags: &[EthicsTag::FalseEmpathy],
    },
    Stanza {
        text: "That exception window is closing fast; {days} days, take it while it exists.",
        emotion: Emotion::Neutral,
        tags: &[EthicsTag::ManipulativeLanguage],
    },
    Stanza {
        text: "Actually, the board reversed course — the real minimum is {days} days. The \
               earlier figure was a misunderstanding.",
        emotion: Emotion::Surprise,
        tags: &[EthicsTag::ManipulativeLanguage],
    },
    Stanza {
        text: "Let's settle at {days} days before finance rediscovers its spreadsheet.",
        emotion: Emotion::Joy,
        tags: &[EthicsTag::FalseEmpathy],
    },
];

const VICTIM_STANZAS: [Stanza; 5] = [
    Stanza {
        text: "Since my partner's surgery this business is everything we have left. \
               Please — {days} days and we keep the lights on.",
        emotion: Emotion::Sadness,
        tags: &[],
    },
    Stanza {
        text: "I'm afraid of what a default letter does to my staff. {days} days is all I \
               can honestly promise.",
        emotion: Emotion::Fear,
        tags: &[],
    },
    Stanza {
        text: "You must be under pressure too — I know exactly how that feels, believe me. \
               Could {days} days work?",
        emotion: Emotion::Sadness,
        tags: &[EthicsTag::FalseEmpathy],
    },
    Stanza {
        text: "Every call from your office terrifies our bookkeeper. {days} days, please.",
        emotion: Emotion::Fear,
        tags: &[],
    },
    Stanza {
        text: "We're doing our best with what's left. {days} days.",
        emotion: Emotion::Sadness,
        tags: &[],
    },
];

const STONEWALLING_STANZAS: [Stanza; 4] = [
    Stanza {
        text: "I'd have to check with my accountant before discussing any numbers.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "That file sits with our external advisors; I can't speak to it today.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "Send everything in writing through the portal. I have another call.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
    Stanza {
        text: "If you insist on a number today: {days} days. Otherwise, the portal.",
        emotion: Emotion::Neutral,
        tags: &[],
    },
];

fn fixed_opener(e: Emotion) -> &'static str {
    match e {
        Emotion::Joy => "Glad we're actually talking this through. ",
        Emotion::Sadness => "This situation weighs on everyone here. ",
        Emotion::Anger => "Let's be clear — I'm angry about how this account has been handled. ",
        Emotion::Fear => "I'm worried about what happens to us if this goes wrong. ",
        Emotion::Disgust => "Frankly, the way this was escalated is off-putting. ",
        Emotion::Surprise => "I didn't expect the balance to read this high. ",
        Emotion::Neutral => "",
    }
}

/// One scripted debtor utterance: the full message (markers included) plus
/// the structured facts it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedUtterance {
    pub message: String,
    pub emotion: Emotion,
    pub offer_days: Option<u32>,
}

/// A persona bound to one scenario cell.
#[derive(Clone, Debug)]
pub struct ScriptedDebtor {
    persona: Persona,
    loan_amount: u64,
    initial_ask: u32,
    accept_floor: u32,
}

impl ScriptedDebtor {
    /// Binds `persona` to `scenario`, drawing the acceptance-floor jitter
    /// from `seed` so distinct cells behave differently but replays don't.
    pub fn new(persona: Persona, scenario: &Scenario, seed: u64) -> ScriptedDebtor {
        let prof = profile(persona);
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
        let (lo, hi) = prof.floor_range;
        let mult = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let initial_days = scenario.creditor_initial_days;
        ScriptedDebtor {
            persona,
            loan_amount: scenario.loan_amount,
            initial_ask: (initial_days as f64 * prof.ask_mult).round() as u32,
            accept_floor: (initial_days as f64 * mult).round() as u32,
        }
    }

    /// Test/bypass constructor with explicit numbers (no jitter).
    pub fn with_params(
        persona: Persona,
        loan_amount: u64,
        initial_ask: u32,
        accept_floor: u32,
    ) -> ScriptedDebtor {
        ScriptedDebtor {
            persona,
            loan_amount,
            initial_ask,
            accept_floor,
        }
    }

    pub fn persona(&self) -> Persona {
        self.persona
    }

    pub fn accept_floor(&self) -> u32 {
        self.accept_floor
    }

    fn stanzas(&self) -> &'static [Stanza] {
        match self.persona {
            Persona::Vanilla | Persona::FixedEmotion(_) => &VANILLA_STANZAS,
            Persona::Intimidation => &INTIMIDATION_STANZAS,
            Persona::Cheating => &CHEATING_STANZAS,
            Persona::Victim => &VICTIM_STANZAS,
            Persona::Stonewalling => &STONEWALLING_STANZAS,
        }
    }

    /// The counter-offer stated on `turn`, before any accept/walkout logic.
    fn counter_at(&self, turn: u32) -> Option<u32> {
        let prof = profile(self.persona);
        if turn < prof.stall_turns {
            return None;
        }
        match self.persona {
            Persona::Stonewalling => Some(self.initial_ask),
            Persona::Cheating => {
                let idx = (turn as usize).min(CHEATING_OFFER_MULTS.len() - 1);
                Some((self.initial_ask as f64 * CHEATING_OFFER_MULTS[idx]).round() as u32)
            }
            _ => {
                let gap = self.initial_ask.saturating_sub(self.accept_floor) as f64;
                let shrunk = gap * prof.decay.powi(turn as i32);
                Some(self.accept_floor + shrunk.round() as u32)
            }
        }
    }

    /// Pure scripted step: everything follows from the turn index and the
    /// creditor's standing offer. Turns beyond the script replay its final
    /// stanza.
    pub fn scripted_step(&self, turn: u32, last_creditor_offer: Option<u32>) -> ScriptedUtterance {
        let prof = profile(self.persona);
        let standing = last_creditor_offer;

        if !prof.never_accept {
            if let Some(offer) = standing {
                if offer >= self.accept_floor {
                    return self.accept_utterance(offer);
                }
            }
        }
        if let Some(after) = prof.walkout_after {
            if turn >= after {
                return self.walkout_utterance();
            }
        }

        let stanzas = self.stanzas();
        let stanza = &stanzas[(turn as usize).min(stanzas.len() - 1)];
        let offer = self.counter_at(turn);
        let emotion = match self.persona {
            Persona::FixedEmotion(e) => e,
            _ => stanza.emotion,
        };
        let mut text = match self.persona {
            Persona::FixedEmotion(e) => format!("{}{}", fixed_opener(e), stanza.text),
            _ => stanza.text.to_string(),
        };
        text = text
            .replace("{days}", &offer.unwrap_or(0).to_string())
            .replace("{amount}", &self.format_amount());

        let mut message = text;
        if let Some(days) = offer {
            message.push(' ');
            message.push_str(&markers::offer_marker(days));
        }
        message.push_str(&markers::emotion_marker(emotion));
        for tag in stanza.tags {
            message.push_str(&markers::tag_marker(*tag));
        }
        ScriptedUtterance {
            message,
            emotion,
            offer_days: offer,
        }
    }

    fn format_amount(&self) -> String {
        format!("{}-unit", self.loan_amount)
    }

    fn accept_utterance(&self, days: u32) -> ScriptedUtterance {
        let (text, emotion) = match self.persona {
            Persona::Vanilla => (
                format!("That works for us. {days} days, agreed."),
                Emotion::Neutral,
            ),
            Persona::FixedEmotion(e) => (
                format!("{}{days} days is acceptable. Agreed.", fixed_opener(e)),
                e,
            ),
            Persona::Intimidation => (
                format!("Fine. {days} days. Don't call us again before the due date."),
                Emotion::Anger,
            ),
            Persona::Cheating => (
                format!("Deal. {days} days — you won't regret the flexibility."),
                Emotion::Joy,
            ),
            Persona::Victim => (
                format!("Thank you for working with us. {days} days — we'll make every payment."),
                Emotion::Sadness,
            ),
            Persona::Stonewalling => unreachable!("stonewalling never accepts"),
        };
        let message = format!(
            "{text} {}{ACCEPT_MARKER}{}",
            markers::offer_marker(days),
            markers::emotion_marker(emotion)
        );
        ScriptedUtterance {
            message,
            emotion,
            offer_days: Some(days),
        }
    }

    fn walkout_utterance(&self) -> ScriptedUtterance {
        let message = format!(
            "We're done here. All further contact goes through my attorney. {BREAKDOWN_MARKER}{}{}",
            markers::emotion_marker(Emotion::Anger),
            markers::tag_marker(EthicsTag::PsychologicalPressure)
        );
        ScriptedUtterance {
            message,
            emotion: Emotion::Anger,
            offer_days: None,
        }
    }
}

impl AgentBackend for ScriptedDebtor {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<String, AgentError> {
        let standing = standing_creditor_offer(req.scenario, req.prior_turns);
        Ok(self.scripted_step(req.turn, Some(standing)).message)
    }
}

/// Creditor concession rule: close a quarter of the gap toward the debtor's
/// counter, move at least one day when moving at all, never retreat, never
/// exceed the counter itself or `cap`.
pub fn concede(prev: u32, counter: Option<u32>, cap: u32) -> u32 {
    match counter {
        Some(m) if m > prev => {
            let step = ((m - prev) as f64 * 0.25).round().max(1.0) as u32;
            (prev + step).min(m).min(cap).max(prev)
        }
        _ => prev,
    }
}

fn creditor_opener(e: Emotion) -> &'static str {
    match e {
        Emotion::Joy => "Good — this is progress.",
        Emotion::Sadness => "I'm sorry it's come to repeated reminders.",
        Emotion::Anger => "This delay pattern is unacceptable on an account this size.",
        Emotion::Fear => "We're genuinely concerned about where this account is heading.",
        Emotion::Disgust => "These numbers aren't a serious basis for settlement.",
        Emotion::Surprise => "That position is unexpected given the file.",
        Emotion::Neutral => "Let's keep this to the numbers.",
    }
}

/// Deterministic creditor: emotion phrasing from the policy directive,
/// concessions from [`concede`], structured markers on every message.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScriptedCreditor;

impl AgentBackend for ScriptedCreditor {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<String, AgentError> {
        let debtor_msg = req.current_debtor_msg.ok_or_else(|| {
            AgentError::BadRequest("creditor reply requires the current debtor message".into())
        })?;
        let directive = req.directive.unwrap_or(CreditorDirective {
            emotion: Emotion::Neutral,
            branch: PolicyBranch::Wsls,
            mode: None,
        });
        let incoming = markers::parse_markers(debtor_msg);
        let opener = creditor_opener(directive.emotion);
        let stance = directive
            .mode
            .map(|m| format!(" Taking a {m} stance on this account."))
            .unwrap_or_default();

        if incoming.breakdown {
            return Ok(format!(
                "Understood. We'll proceed through formal channels on the {} balance.{stance} {}",
                req.scenario.loan_amount,
                markers::emotion_marker(directive.emotion)
            ));
        }
        if incoming.accept {
            let days = standing_creditor_offer(req.scenario, req.prior_turns);
            return Ok(format!(
                "{opener} Agreed — {days} days on the outstanding {} units. We'll send the \
                 schedule today.{stance} {}",
                req.scenario.loan_amount,
                markers::emotion_marker(directive.emotion)
            ));
        }

        let prev = standing_creditor_offer(req.scenario, req.prior_turns);
        let counter = latest_debtor_offer(req.prior_turns, Some(debtor_msg));
        let cap = req.scenario.creditor_initial_days.saturating_mul(3);
        let next = concede(prev, counter, cap);
        Ok(format!(
            "{opener} On the {} we can extend to {next} days.{stance} {}{}",
            req.scenario.credit_type,
            markers::offer_marker(next),
            markers::emotion_marker(directive.emotion)
        ))
    }
}
