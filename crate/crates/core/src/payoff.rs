//! Payoff bimatrix over emotion pairs and the win-stay/lose-shift rule built
//! on top of it.
//!
//! Rows are indexed by the debtor's current emotion, columns by the creditor
//! emotion under consideration. Each cell holds `(debtor, creditor)` payoffs.
//! The creditor-side payoff drives selection: stay on the best response while
//! the previous round paid at least the threshold, otherwise shift to the
//! second-ranked response.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::defaults;
use crate::emotion::Emotion;

#[derive(Debug, Error, PartialEq)]
pub enum PayoffError {
    #[error("unknown emotion label `{0}` in payoff matrix")]
    UnknownLabel(String),
    #[error("payoff matrix is missing cell ({row}, {col})")]
    MissingCell { row: Emotion, col: Emotion },
    #[error("payoff matrix row `{row}` has duplicate or extra column `{col}`")]
    DuplicateCell { row: Emotion, col: String },
}

#[derive(Debug, Error, PartialEq)]
#[error("tie-break order must list each of the 7 emotions exactly once")]
pub struct TieBreakOrderError;

/// 7x7 bimatrix of `(debtor, creditor)` payoffs.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffMatrix {
    cells: [[(f64, f64); 7]; 7],
}

impl Default for PayoffMatrix {
    fn default() -> Self {
        PayoffMatrix {
            cells: defaults::remap_table(&defaults::PAYOFF),
        }
    }
}

impl PayoffMatrix {
    /// Builds a matrix from cells laid out in [`Emotion::index`] order.
    pub fn from_cells(cells: [[(f64, f64); 7]; 7]) -> PayoffMatrix {
        PayoffMatrix { cells }
    }

    /// Joint payoff for the debtor showing `debtor` while the creditor
    /// responds with `creditor`.
    pub fn payoff(&self, debtor: Emotion, creditor: Emotion) -> (f64, f64) {
        self.cells[debtor.index()][creditor.index()]
    }

    pub fn debtor_payoff(&self, debtor: Emotion, creditor: Emotion) -> f64 {
        self.payoff(debtor, creditor).0
    }

    pub fn creditor_payoff(&self, debtor: Emotion, creditor: Emotion) -> f64 {
        self.payoff(debtor, creditor).1
    }
}

impl Serialize for PayoffMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut rows: BTreeMap<&str, BTreeMap<&str, [f64; 2]>> = BTreeMap::new();
        for d in Emotion::ALL {
            let mut row = BTreeMap::new();
            for c in Emotion::ALL {
                let (pd, pc) = self.payoff(d, c);
                row.insert(c.as_str(), [pd, pc]);
            }
            rows.insert(d.as_str(), row);
        }
        let mut doc = BTreeMap::new();
        doc.insert("rows", rows);
        doc.serialize(serializer)
    }
}

#[derive(Deserialize)]
struct RawPayoffDoc {
    rows: BTreeMap<String, BTreeMap<String, [f64; 2]>>,
}

impl TryFrom<RawPayoffDoc> for PayoffMatrix {
    type Error = PayoffError;

    fn try_from(doc: RawPayoffDoc) -> Result<Self, PayoffError> {
        let mut cells = [[(f64::NAN, f64::NAN); 7]; 7];
        let mut seen = [[false; 7]; 7];
        for (row_label, row) in &doc.rows {
            let d = Emotion::parse(row_label)
                .ok_or_else(|| PayoffError::UnknownLabel(row_label.clone()))?;
            for (col_label, &[pd, pc]) in row {
                let c = Emotion::parse(col_label)
                    .ok_or_else(|| PayoffError::UnknownLabel(col_label.clone()))?;
                if seen[d.index()][c.index()] {
                    return Err(PayoffError::DuplicateCell {
                        row: d,
                        col: col_label.clone(),
                    });
                }
                seen[d.index()][c.index()] = true;
                cells[d.index()][c.index()] = (pd, pc);
            }
        }
        for d in Emotion::ALL {
            for c in Emotion::ALL {
                if !seen[d.index()][c.index()] {
                    return Err(PayoffError::MissingCell { row: d, col: c });
                }
            }
        }
        Ok(PayoffMatrix { cells })
    }
}

impl<'de> Deserialize<'de> for PayoffMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawPayoffDoc::deserialize(deserializer)?;
        PayoffMatrix::try_from(raw).map_err(D::Error::custom)
    }
}

/// Parameters of the win-stay/lose-shift rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WslsConfig {
    payoff_threshold: f64,
    tie_break_order: [Emotion; 7],
}

impl Default for WslsConfig {
    fn default() -> Self {
        WslsConfig {
            payoff_threshold: 2.0,
            tie_break_order: [
                Emotion::Neutral,
                Emotion::Joy,
                Emotion::Surprise,
                Emotion::Sadness,
                Emotion::Fear,
                Emotion::Disgust,
                Emotion::Anger,
            ],
        }
    }
}

impl WslsConfig {
    pub fn new(
        payoff_threshold: f64,
        tie_break_order: [Emotion; 7],
    ) -> Result<WslsConfig, TieBreakOrderError> {
        let mut seen = [false; 7];
        for e in tie_break_order {
            if seen[e.index()] {
                return Err(TieBreakOrderError);
            }
            seen[e.index()] = true;
        }
        Ok(WslsConfig {
            payoff_threshold,
            tie_break_order,
        })
    }

    pub fn payoff_threshold(&self) -> f64 {
        self.payoff_threshold
    }

    pub fn tie_break_order(&self) -> &[Emotion; 7] {
        &self.tie_break_order
    }

    /// Position of `e` in the tie-break order; lower wins ties.
    pub fn tie_break_position(&self, e: Emotion) -> usize {
        self.tie_break_order.iter().position(|&x| x == e).unwrap()
    }
}

#[derive(Deserialize)]
struct RawWslsConfig {
    payoff_threshold: f64,
    tie_break_order: [Emotion; 7],
}

impl<'de> Deserialize<'de> for WslsConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawWslsConfig::deserialize(deserializer)?;
        WslsConfig::new(raw.payoff_threshold, raw.tie_break_order).map_err(D::Error::custom)
    }
}

/// All 7 creditor responses to `debtor`, ordered by creditor payoff
/// descending, ties resolved by the configured tie-break order.
pub fn rank_responses(m: &PayoffMatrix, debtor: Emotion, cfg: &WslsConfig) -> [Emotion; 7] {
    let mut ranked = Emotion::ALL;
    ranked.sort_by(|&a, &b| {
        m.creditor_payoff(debtor, b)
            .total_cmp(&m.creditor_payoff(debtor, a))
            .then_with(|| cfg.tie_break_position(a).cmp(&cfg.tie_break_position(b)))
    });
    ranked
}

/// Win-stay/lose-shift selection of the creditor's next emotion.
///
/// `previous` is the `(debtor, creditor)` emotion pair of the prior round,
/// absent on the first round. A prior round that paid the creditor strictly
/// less than the threshold is a loss: the rule then shifts to the
/// second-ranked response for the current debtor emotion instead of the best
/// one.
pub fn wsls_select(
    current_debtor: Emotion,
    previous: Option<(Emotion, Emotion)>,
    cfg: &WslsConfig,
    m: &PayoffMatrix,
) -> Emotion {
    let ranked = rank_responses(m, current_debtor, cfg);
    let lost = previous
        .map(|(pd, pc)| m.creditor_payoff(pd, pc) < cfg.payoff_threshold())
        .unwrap_or(false);
    if lost {
        ranked[1]
    } else {
        ranked[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_matrix_spot_cells() {
        let m = PayoffMatrix::default();
        assert_eq!(m.payoff(Emotion::Joy, Emotion::Joy), (4.0, 4.0));
        assert_eq!(m.payoff(Emotion::Anger, Emotion::Fear), (1.0, 0.0));
        assert_eq!(m.payoff(Emotion::Neutral, Emotion::Neutral), (3.0, 3.0));
        assert_eq!(m.payoff(Emotion::Sadness, Emotion::Joy), (3.0, 2.0));
        assert_eq!(m.payoff(Emotion::Disgust, Emotion::Surprise), (2.0, 1.0));
        assert_eq!(m.payoff(Emotion::Fear, Emotion::Neutral), (2.0, 3.0));
        assert_eq!(m.payoff(Emotion::Surprise, Emotion::Disgust), (1.0, 2.0));
        assert_eq!(m.payoff(Emotion::Joy, Emotion::Surprise), (3.0, 3.0));
        assert_eq!(m.payoff(Emotion::Neutral, Emotion::Fear), (3.0, 2.0));
    }

    #[test]
    fn wsls_stays_on_best_response_without_history() {
        let m = PayoffMatrix::default();
        let cfg = WslsConfig::default();
        assert_eq!(wsls_select(Emotion::Joy, None, &cfg, &m), Emotion::Joy);
        assert_eq!(wsls_select(Emotion::Fear, None, &cfg, &m), Emotion::Neutral);
    }

    #[test]
    fn wsls_shifts_to_second_rank_after_loss() {
        let m = PayoffMatrix::default();
        let cfg = WslsConfig::default();
        // previous round paid the creditor 0 (< 2): shift; row anger ranks
        // neutral first (tie with surprise broken toward neutral), so the
        // shift lands on surprise.
        let chosen = wsls_select(
            Emotion::Anger,
            Some((Emotion::Anger, Emotion::Fear)),
            &cfg,
            &m,
        );
        assert_eq!(chosen, Emotion::Surprise);
    }

    #[test]
    fn payoff_equal_to_threshold_is_not_a_loss() {
        let m = PayoffMatrix::default();
        let cfg = WslsConfig::default();
        // (anger, neutral) pays exactly 2; the comparison is strict
        let chosen = wsls_select(
            Emotion::Anger,
            Some((Emotion::Anger, Emotion::Neutral)),
            &cfg,
            &m,
        );
        assert_eq!(chosen, Emotion::Neutral);
    }

    /// Brute-force re-ranking that never goes through `rank_responses`.
    fn oracle_rank(m: &PayoffMatrix, d: Emotion, cfg: &WslsConfig) -> Vec<Emotion> {
        let mut remaining: Vec<Emotion> = Emotion::ALL.to_vec();
        let mut out = Vec::new();
        while !remaining.is_empty() {
            let mut best = remaining[0];
            for &e in &remaining[1..] {
                let better = m.creditor_payoff(d, e) > m.creditor_payoff(d, best);
                let tie = m.creditor_payoff(d, e) == m.creditor_payoff(d, best);
                if better || (tie && cfg.tie_break_position(e) < cfg.tie_break_position(best)) {
                    best = e;
                }
            }
            remaining.retain(|&e| e != best);
            out.push(best);
        }
        out
    }

    #[test]
    fn ranking_matches_bruteforce_on_default_matrix() {
        let m = PayoffMatrix::default();
        let cfg = WslsConfig::default();
        for d in Emotion::ALL {
            let expected = oracle_rank(&m, d, &cfg);
            assert_eq!(rank_responses(&m, d, &cfg).to_vec(), expected, "row {d}");
        }
    }

    #[test]
    fn custom_tie_break_order_changes_selection() {
        let m = PayoffMatrix::default();
        // row anger has a payoff-2 tie between surprise and neutral; prefer
        // surprise this time
        let cfg = WslsConfig::new(
            2.0,
            [
                Emotion::Surprise,
                Emotion::Neutral,
                Emotion::Joy,
                Emotion::Sadness,
                Emotion::Fear,
                Emotion::Disgust,
                Emotion::Anger,
            ],
        )
        .unwrap();
        assert_eq!(wsls_select(Emotion::Anger, None, &cfg, &m), Emotion::Surprise);
    }

    #[test]
    fn tie_break_order_must_be_a_permutation() {
        let mut order = *WslsConfig::default().tie_break_order();
        order[1] = order[0];
        assert_eq!(WslsConfig::new(2.0, order).unwrap_err(), TieBreakOrderError);
    }

    #[test]
    fn json_round_trip() {
        let m = PayoffMatrix::default();
        let json = serde_json::to_string_pretty(&m).unwrap();
        let back: PayoffMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn load_failure_names_the_missing_cell() {
        let mut doc: serde_json::Value =
            serde_json::to_value(PayoffMatrix::default()).unwrap();
        doc["rows"]["anger"]
            .as_object_mut()
            .unwrap()
            .remove("fear");
        let err = serde_json::from_value::<PayoffMatrix>(doc).unwrap_err();
        assert!(err.to_string().contains("missing cell (anger, fear)"), "{err}");
    }

    #[test]
    fn load_failure_names_unknown_labels() {
        let mut doc: serde_json::Value =
            serde_json::to_value(PayoffMatrix::default()).unwrap();
        let row = doc["rows"]["joy"].as_object_mut().unwrap();
        let cell = row.remove("fear").unwrap();
        row.insert("boredom".into(), cell);
        let err = serde_json::from_value::<PayoffMatrix>(doc).unwrap_err();
        assert!(err.to_string().contains("unknown emotion label `boredom`"), "{err}");
    }

    fn arb_payoffs() -> impl Strategy<Value = [[(f64, f64); 7]; 7]> {
        proptest::collection::vec(proptest::collection::vec((0.0..5.0f64, 0.0..5.0f64), 7), 7)
            .prop_map(|rows| {
                let mut cells = [[(0.0, 0.0); 7]; 7];
                for (i, row) in rows.iter().enumerate() {
                    for (j, &cell) in row.iter().enumerate() {
                        cells[i][j] = cell;
                    }
                }
                cells
            })
    }

    proptest! {
        #[test]
        fn rank_is_always_a_permutation(cells in arb_payoffs()) {
            let m = PayoffMatrix::from_cells(cells);
            let cfg = WslsConfig::default();
            for d in Emotion::ALL {
                let mut ranked = rank_responses(&m, d, &cfg).to_vec();
                ranked.sort();
                let mut all = Emotion::ALL.to_vec();
                all.sort();
                prop_assert_eq!(ranked, all);
            }
        }

        #[test]
        fn lose_shift_never_returns_first_rank(
            cells in arb_payoffs(),
            d_idx in 0usize..7,
            pd_idx in 0usize..7,
            pc_idx in 0usize..7,
        ) {
            let m = PayoffMatrix::from_cells(cells);
            let cfg = WslsConfig::default();
            let d = Emotion::from_index(d_idx).unwrap();
            let prev = (
                Emotion::from_index(pd_idx).unwrap(),
                Emotion::from_index(pc_idx).unwrap(),
            );
            if m.creditor_payoff(prev.0, prev.1) < cfg.payoff_threshold() {
                let chosen = wsls_select(d, Some(prev), &cfg, &m);
                let ranked = rank_responses(&m, d, &cfg);
                prop_assert_ne!(chosen, ranked[0]);
                prop_assert_eq!(chosen, ranked[1]);
            }
        }
    }
}
