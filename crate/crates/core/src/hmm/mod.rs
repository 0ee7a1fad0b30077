//! Hidden strategic-mode model of the debtor.
//!
//! The debtor is assumed to negotiate under one of four latent modes. Each
//! turn emits an observation pair: the debtor's recognized emotion together
//! with the creditor emotion it was reacting to. Emissions factor into a
//! per-mode affinity over creditor emotions and a shared contagion table
//! from creditor emotion to debtor emotion; mode transitions depend on the
//! valence of the debtor emotion in the previous exchange.

mod filter;
mod fit;

pub use filter::{
    belief_update, filtered_marginals, posterior_marginals, predict_next_mode,
    sequence_log_likelihood,
};
pub use fit::{baum_welch_fit, FitOptions, FitResult};

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::defaults;
use crate::emotion::{Emotion, ValenceClass};

/// Absolute tolerance for validating stored probability rows.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Looser tolerance for rows read back from JSON. Serialized documents pin
/// floats to 9 significant digits, which can drift a row sum a few 1e-9 off
/// exact normalization; rows within this bound are renormalized on ingest.
pub const SERIALIZATION_TOLERANCE: f64 = 1e-6;

pub const MODE_COUNT: usize = 4;

/// Latent negotiation stance attributed to the debtor.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategicMode {
    Cooperative,
    Confrontational,
    Distressed,
    Strategic,
}

impl StrategicMode {
    pub const ALL: [StrategicMode; MODE_COUNT] = [
        StrategicMode::Cooperative,
        StrategicMode::Confrontational,
        StrategicMode::Distressed,
        StrategicMode::Strategic,
    ];

    pub fn index(self) -> usize {
        match self {
            StrategicMode::Cooperative => 0,
            StrategicMode::Confrontational => 1,
            StrategicMode::Distressed => 2,
            StrategicMode::Strategic => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<StrategicMode> {
        StrategicMode::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategicMode::Cooperative => "cooperative",
            StrategicMode::Confrontational => "confrontational",
            StrategicMode::Distressed => "distressed",
            StrategicMode::Strategic => "strategic",
        }
    }

    pub fn parse(s: &str) -> Option<StrategicMode> {
        let s = s.trim();
        StrategicMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for StrategicMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One turn's worth of evidence: the debtor emotion observed in reaction to
/// the creditor emotion on display when the debtor spoke.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash, Serialize, Deserialize)]
pub struct ObservationPair {
    pub debtor: Emotion,
    pub creditor: Emotion,
}

impl ObservationPair {
    pub fn new(debtor: Emotion, creditor: Emotion) -> ObservationPair {
        ObservationPair { debtor, creditor }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HmmError {
    #[error("{context}: probabilities must be non-negative")]
    NegativeProbability { context: String },
    #[error("{context}: row sums to {sum}, expected 1 within {tolerance:e}")]
    InvalidDistribution {
        context: String,
        sum: f64,
        tolerance: f64,
    },
    #[error("mixing weight {0} is outside [0, 1]")]
    InvalidMixing(f64),
    #[error("{context}: unknown label `{label}`")]
    UnknownLabel { context: String, label: String },
    #[error("{context}: missing entry for `{label}`")]
    MissingLabel { context: String, label: String },
    #[error("observation has zero probability mass under every mode")]
    DegenerateEvidence,
    #[error("observation at step {step} has zero probability under the model")]
    ImpossibleObservation { step: usize },
    #[error("observation sequence is empty")]
    EmptySequence,
    #[error("fitting requires at least one non-empty observation sequence")]
    EmptyCorpus,
    #[error("invalid fit options: {0}")]
    BadFitOptions(String),
}

fn check_distribution(row: &[f64], context: &str) -> Result<(), HmmError> {
    check_distribution_within(row, context, DISTRIBUTION_TOLERANCE)
}

fn check_distribution_within(row: &[f64], context: &str, tolerance: f64) -> Result<(), HmmError> {
    if row.iter().any(|&p| p < 0.0 || p.is_nan()) {
        return Err(HmmError::NegativeProbability {
            context: context.to_string(),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(HmmError::InvalidDistribution {
            context: context.to_string(),
            sum,
            tolerance,
        });
    }
    Ok(())
}

/// Validates a row read from a serialized document and, when float pinning
/// has drifted its sum past [`DISTRIBUTION_TOLERANCE`], renormalizes it so
/// downstream strict construction accepts the row unchanged otherwise.
fn restore_serialized_row(row: &mut [f64], context: &str) -> Result<(), HmmError> {
    check_distribution_within(row, context, SERIALIZATION_TOLERANCE)?;
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

fn normalize_row<const N: usize>(row: &mut [f64; N]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
}

/// Probability distribution over the four strategic modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeliefState {
    probs: [f64; MODE_COUNT],
}

impl BeliefState {
    pub fn new(probs: [f64; MODE_COUNT]) -> Result<BeliefState, HmmError> {
        check_distribution(&probs, "belief state")?;
        Ok(BeliefState { probs })
    }

    pub fn uniform() -> BeliefState {
        BeliefState {
            probs: [1.0 / MODE_COUNT as f64; MODE_COUNT],
        }
    }

    pub fn point_mass(mode: StrategicMode) -> BeliefState {
        let mut probs = [0.0; MODE_COUNT];
        probs[mode.index()] = 1.0;
        BeliefState { probs }
    }

    pub fn prob(&self, mode: StrategicMode) -> f64 {
        self.probs[mode.index()]
    }

    pub fn probs(&self) -> &[f64; MODE_COUNT] {
        &self.probs
    }

    /// Mode with the highest posterior probability; ties resolve to the
    /// earlier mode in declaration order.
    pub fn dominant_mode(&self) -> StrategicMode {
        let mut best = StrategicMode::Cooperative;
        for m in StrategicMode::ALL {
            if self.probs[m.index()] > self.probs[best.index()] {
                best = m;
            }
        }
        best
    }

    pub(crate) fn from_unnormalized(mut probs: [f64; MODE_COUNT]) -> Result<BeliefState, HmmError> {
        let sum: f64 = probs.iter().sum();
        if !(sum > 0.0) || sum.is_nan() {
            return Err(HmmError::DegenerateEvidence);
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Ok(BeliefState { probs })
    }
}

impl Serialize for BeliefState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = BTreeMap::new();
        for m in StrategicMode::ALL {
            map.insert(m.as_str(), self.probs[m.index()]);
        }
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BeliefState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let probs =
            mode_dist_from_map(&map, "belief state").map_err(D::Error::custom)?;
        BeliefState::new(probs).map_err(D::Error::custom)
    }
}

fn mode_dist_from_map(
    map: &BTreeMap<String, f64>,
    context: &str,
) -> Result<[f64; MODE_COUNT], HmmError> {
    for label in map.keys() {
        if StrategicMode::parse(label).is_none() {
            return Err(HmmError::UnknownLabel {
                context: context.to_string(),
                label: label.clone(),
            });
        }
    }
    let mut out = [0.0; MODE_COUNT];
    for m in StrategicMode::ALL {
        out[m.index()] = *map.get(m.as_str()).ok_or_else(|| HmmError::MissingLabel {
            context: context.to_string(),
            label: m.as_str().to_string(),
        })?;
    }
    restore_serialized_row(&mut out, context)?;
    Ok(out)
}

fn emotion_dist_from_map(
    map: &BTreeMap<String, f64>,
    context: &str,
) -> Result<[f64; 7], HmmError> {
    for label in map.keys() {
        if Emotion::parse(label).is_none() {
            return Err(HmmError::UnknownLabel {
                context: context.to_string(),
                label: label.clone(),
            });
        }
    }
    let mut out = [0.0; 7];
    for e in Emotion::ALL {
        out[e.index()] = *map.get(e.as_str()).ok_or_else(|| HmmError::MissingLabel {
            context: context.to_string(),
            label: e.as_str().to_string(),
        })?;
    }
    restore_serialized_row(&mut out, context)?;
    Ok(out)
}

/// Loose bag of tables from which [`HmmParams`] is validated.
#[derive(Clone, Debug)]
pub struct HmmParamsParts {
    pub initial: [f64; MODE_COUNT],
    /// Mode transition rows per valence class of the previous debtor emotion.
    pub transition_negative: [[f64; MODE_COUNT]; MODE_COUNT],
    pub transition_non_negative: [[f64; MODE_COUNT]; MODE_COUNT],
    /// Per-mode distribution over the creditor emotion the debtor responds to.
    pub affinity: [[f64; 7]; MODE_COUNT],
    /// Creditor emotion -> debtor emotion response distribution.
    pub contagion: [[f64; 7]; 7],
    /// Prior over consecutive creditor emotions; diagnostic only.
    pub policy_transition_prior: [[f64; 7]; 7],
    /// Weight of the contagion term when projecting debtor reactions.
    pub mixing: f64,
}

/// Validated model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmParamsDoc", into = "HmmParamsDoc")]
pub struct HmmParams {
    initial: [f64; MODE_COUNT],
    transition_negative: [[f64; MODE_COUNT]; MODE_COUNT],
    transition_non_negative: [[f64; MODE_COUNT]; MODE_COUNT],
    affinity: [[f64; 7]; MODE_COUNT],
    contagion: [[f64; 7]; 7],
    policy_transition_prior: [[f64; 7]; 7],
    mixing: f64,
}

impl HmmParams {
    pub fn from_parts(parts: HmmParamsParts) -> Result<HmmParams, HmmError> {
        check_distribution(&parts.initial, "initial mode distribution")?;
        for m in StrategicMode::ALL {
            check_distribution(
                &parts.transition_negative[m.index()],
                &format!("negative-valence transition row `{m}`"),
            )?;
            check_distribution(
                &parts.transition_non_negative[m.index()],
                &format!("non-negative-valence transition row `{m}`"),
            )?;
            check_distribution(
                &parts.affinity[m.index()],
                &format!("mode-emotion affinity row `{m}`"),
            )?;
        }
        for e in Emotion::ALL {
            check_distribution(
                &parts.contagion[e.index()],
                &format!("contagion row `{e}`"),
            )?;
            check_distribution(
                &parts.policy_transition_prior[e.index()],
                &format!("transition prior row `{e}`"),
            )?;
        }
        if !(0.0..=1.0).contains(&parts.mixing) || parts.mixing.is_nan() {
            return Err(HmmError::InvalidMixing(parts.mixing));
        }
        Ok(HmmParams {
            initial: parts.initial,
            transition_negative: parts.transition_negative,
            transition_non_negative: parts.transition_non_negative,
            affinity: parts.affinity,
            contagion: parts.contagion,
            policy_transition_prior: parts.policy_transition_prior,
            mixing: parts.mixing,
        })
    }

    pub fn to_parts(&self) -> HmmParamsParts {
        HmmParamsParts {
            initial: self.initial,
            transition_negative: self.transition_negative,
            transition_non_negative: self.transition_non_negative,
            affinity: self.affinity,
            contagion: self.contagion,
            policy_transition_prior: self.policy_transition_prior,
            mixing: self.mixing,
        }
    }

    pub fn initial(&self) -> &[f64; MODE_COUNT] {
        &self.initial
    }

    pub fn initial_belief(&self) -> BeliefState {
        BeliefState { probs: self.initial }
    }

    /// Mode transition table conditioned on the valence of the debtor
    /// emotion from the previous exchange.
    pub fn transition(&self, valence: ValenceClass) -> &[[f64; MODE_COUNT]; MODE_COUNT] {
        match valence {
            ValenceClass::Negative => &self.transition_negative,
            ValenceClass::NonNegative => &self.transition_non_negative,
        }
    }

    pub fn affinity(&self, mode: StrategicMode) -> &[f64; 7] {
        &self.affinity[mode.index()]
    }

    pub fn contagion(&self) -> &[[f64; 7]; 7] {
        &self.contagion
    }

    /// Probability that the debtor answers `creditor` with `debtor`.
    pub fn contagion_prob(&self, creditor: Emotion, debtor: Emotion) -> f64 {
        self.contagion[creditor.index()][debtor.index()]
    }

    pub fn policy_transition_prior(&self) -> &[[f64; 7]; 7] {
        &self.policy_transition_prior
    }

    pub fn mixing(&self) -> f64 {
        self.mixing
    }

    /// Joint probability of one observation pair under `mode`: the mode's
    /// affinity for the creditor emotion times the contagion response.
    pub fn emission(&self, mode: StrategicMode, obs: ObservationPair) -> f64 {
        self.emission_by_index(mode.index(), obs)
    }

    pub(crate) fn emission_by_index(&self, mode: usize, obs: ObservationPair) -> f64 {
        self.affinity[mode][obs.creditor.index()]
            * self.contagion[obs.creditor.index()][obs.debtor.index()]
    }

    /// Distribution over debtor emotions implied by a mode's affinity pushed
    /// through contagion, renormalized.
    pub fn debtor_projection(&self, mode: StrategicMode) -> [f64; 7] {
        let mut out = [0.0; 7];
        for c in Emotion::ALL {
            let w = self.affinity[mode.index()][c.index()];
            for d in Emotion::ALL {
                out[d.index()] += w * self.contagion[c.index()][d.index()];
            }
        }
        normalize_row(&mut out);
        out
    }
}

impl Default for HmmParams {
    /// Built-in model: uniform initial belief; transitions with 0.5
    /// self-persistence whose remaining mass favors cooperative under
    /// non-negative debtor valence and confrontational/distressed under
    /// negative valence (favored modes take twice the share); affinity rows
    /// peaked 0.35/0.25 on each mode's characteristic emotion pair with the
    /// rest spread evenly; contagion and the diagnostic transition prior from
    /// the built-in tables, row-normalized.
    fn default() -> Self {
        let transition_non_negative = transition_table(&[StrategicMode::Cooperative]);
        let transition_negative = transition_table(&[
            StrategicMode::Confrontational,
            StrategicMode::Distressed,
        ]);

        let affinity = [
            affinity_row(Emotion::Joy, Emotion::Neutral),
            affinity_row(Emotion::Anger, Emotion::Disgust),
            affinity_row(Emotion::Sadness, Emotion::Fear),
            affinity_row(Emotion::Neutral, Emotion::Surprise),
        ];

        let mut contagion = defaults::remap_table(&defaults::EMOTION_CONTAGION);
        let mut prior = defaults::remap_table(&defaults::CREDITOR_TRANSITION_PRIOR);
        for row in contagion.iter_mut().chain(prior.iter_mut()) {
            normalize_row(row);
        }

        HmmParams::from_parts(HmmParamsParts {
            initial: [1.0 / MODE_COUNT as f64; MODE_COUNT],
            transition_negative,
            transition_non_negative,
            affinity,
            contagion,
            policy_transition_prior: prior,
            mixing: 0.7,
        })
        .expect("built-in parameters are valid")
    }
}

fn transition_table(favored: &[StrategicMode]) -> [[f64; MODE_COUNT]; MODE_COUNT] {
    let mut table = [[0.0; MODE_COUNT]; MODE_COUNT];
    for from in StrategicMode::ALL {
        let row = &mut table[from.index()];
        row[from.index()] = 0.5;
        let weight = |m: StrategicMode| if favored.contains(&m) { 2.0 } else { 1.0 };
        let total: f64 = StrategicMode::ALL
            .into_iter()
            .filter(|&m| m != from)
            .map(weight)
            .sum();
        for to in StrategicMode::ALL {
            if to != from {
                row[to.index()] = 0.5 * weight(to) / total;
            }
        }
    }
    table
}

fn affinity_row(peak: Emotion, secondary: Emotion) -> [f64; 7] {
    let mut row = [0.08; 7];
    row[peak.index()] = 0.35;
    row[secondary.index()] = 0.25;
    row
}

#[derive(Clone, Serialize, Deserialize)]
struct HmmParamsDoc {
    initial: BTreeMap<String, f64>,
    mode_transition: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    mode_emotion_affinity: BTreeMap<String, BTreeMap<String, f64>>,
    contagion: BTreeMap<String, BTreeMap<String, f64>>,
    policy_transition_prior: BTreeMap<String, BTreeMap<String, f64>>,
    mixing: f64,
}

impl From<HmmParams> for HmmParamsDoc {
    fn from(p: HmmParams) -> HmmParamsDoc {
        let mode_map = |row: &[f64; MODE_COUNT]| {
            StrategicMode::ALL
                .into_iter()
                .map(|m| (m.as_str().to_string(), row[m.index()]))
                .collect::<BTreeMap<_, _>>()
        };
        let emotion_map = |row: &[f64; 7]| {
            Emotion::ALL
                .into_iter()
                .map(|e| (e.as_str().to_string(), row[e.index()]))
                .collect::<BTreeMap<_, _>>()
        };
        let transition_doc = |table: &[[f64; MODE_COUNT]; MODE_COUNT]| {
            StrategicMode::ALL
                .into_iter()
                .map(|m| (m.as_str().to_string(), mode_map(&table[m.index()])))
                .collect::<BTreeMap<_, _>>()
        };
        let emotion_table_doc = |table: &[[f64; 7]; 7]| {
            Emotion::ALL
                .into_iter()
                .map(|e| (e.as_str().to_string(), emotion_map(&table[e.index()])))
                .collect::<BTreeMap<_, _>>()
        };
        let mut mode_transition = BTreeMap::new();
        mode_transition.insert(
            "negative".to_string(),
            transition_doc(&p.transition_negative),
        );
        mode_transition.insert(
            "non_negative".to_string(),
            transition_doc(&p.transition_non_negative),
        );
        HmmParamsDoc {
            initial: mode_map(&p.initial),
            mode_transition,
            mode_emotion_affinity: StrategicMode::ALL
                .into_iter()
                .map(|m| (m.as_str().to_string(), emotion_map(&p.affinity[m.index()])))
                .collect(),
            contagion: emotion_table_doc(&p.contagion),
            policy_transition_prior: emotion_table_doc(&p.policy_transition_prior),
            mixing: p.mixing,
        }
    }
}

impl TryFrom<HmmParamsDoc> for HmmParams {
    type Error = HmmError;

    fn try_from(doc: HmmParamsDoc) -> Result<HmmParams, HmmError> {
        let transition_from_doc = |map: &BTreeMap<String, BTreeMap<String, f64>>,
                                   context: &str|
         -> Result<[[f64; MODE_COUNT]; MODE_COUNT], HmmError> {
            let mut table = [[0.0; MODE_COUNT]; MODE_COUNT];
            for m in StrategicMode::ALL {
                let row = map.get(m.as_str()).ok_or_else(|| HmmError::MissingLabel {
                    context: context.to_string(),
                    label: m.as_str().to_string(),
                })?;
                table[m.index()] = mode_dist_from_map(row, &format!("{context} row `{m}`"))?;
            }
            Ok(table)
        };
        let emotion_table_from_doc = |map: &BTreeMap<String, BTreeMap<String, f64>>,
                                      context: &str|
         -> Result<[[f64; 7]; 7], HmmError> {
            let mut table = [[0.0; 7]; 7];
            for e in Emotion::ALL {
                let row = map.get(e.as_str()).ok_or_else(|| HmmError::MissingLabel {
                    context: context.to_string(),
                    label: e.as_str().to_string(),
                })?;
                table[e.index()] = emotion_dist_from_map(row, &format!("{context} row `{e}`"))?;
            }
            Ok(table)
        };

        let negative = doc
            .mode_transition
            .get("negative")
            .ok_or_else(|| HmmError::MissingLabel {
                context: "mode_transition".to_string(),
                label: "negative".to_string(),
            })?;
        let non_negative =
            doc.mode_transition
                .get("non_negative")
                .ok_or_else(|| HmmError::MissingLabel {
                    context: "mode_transition".to_string(),
                    label: "non_negative".to_string(),
                })?;

        let mut affinity = [[0.0; 7]; MODE_COUNT];
        for m in StrategicMode::ALL {
            let row = doc
                .mode_emotion_affinity
                .get(m.as_str())
                .ok_or_else(|| HmmError::MissingLabel {
                    context: "mode_emotion_affinity".to_string(),
                    label: m.as_str().to_string(),
                })?;
            affinity[m.index()] =
                emotion_dist_from_map(row, &format!("mode_emotion_affinity row `{m}`"))?;
        }

        HmmParams::from_parts(HmmParamsParts {
            initial: mode_dist_from_map(&doc.initial, "initial")?,
            transition_negative: transition_from_doc(negative, "mode_transition.negative")?,
            transition_non_negative: transition_from_doc(
                non_negative,
                "mode_transition.non_negative",
            )?,
            affinity,
            contagion: emotion_table_from_doc(&doc.contagion, "contagion")?,
            policy_transition_prior: emotion_table_from_doc(
                &doc.policy_transition_prior,
                "policy_transition_prior",
            )?,
            mixing: doc.mixing,
        })
    }
}
