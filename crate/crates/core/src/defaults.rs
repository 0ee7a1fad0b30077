//! Built-in default tables for the negotiation policies.
//!
//! The three 7x7 tables below are stored verbatim, in the row/column order
//! given by [`TABLE_EMOTION_ORDER`]. Two published rows do not sum to one
//! (`creditor_transition_prior` row `surprise` and `emotion_contagion` row
//! `disgust` both sum to 1.05); `dump-defaults` reproduces them untouched,
//! while the runtime model normalizes every row on construction. Keep any
//! edits to the raw tables in sync with the dump fixtures.

use crate::emotion::Emotion;

/// Row/column order used by the raw tables in this module.
pub const TABLE_EMOTION_ORDER: [Emotion; 7] = [
    Emotion::Joy,
    Emotion::Sadness,
    Emotion::Anger,
    Emotion::Fear,
    Emotion::Surprise,
    Emotion::Disgust,
    Emotion::Neutral,
];

/// Prior over the creditor's next expressed emotion given its current one.
/// Diagnostic only: the turn-level policies never sample from it.
#[rustfmt::skip]
pub const CREDITOR_TRANSITION_PRIOR: [[f64; 7]; 7] = [
    // to:  joy   sad   ang   fear  sur   dis   neu      from:
    [0.50, 0.10, 0.05, 0.05, 0.20, 0.05, 0.05], // joy
    [0.20, 0.40, 0.10, 0.10, 0.05, 0.10, 0.05], // sadness
    [0.10, 0.20, 0.40, 0.10, 0.05, 0.10, 0.05], // anger
    [0.10, 0.20, 0.10, 0.40, 0.05, 0.10, 0.05], // fear
    [0.30, 0.05, 0.05, 0.05, 0.50, 0.05, 0.05], // surprise
    [0.10, 0.20, 0.10, 0.10, 0.05, 0.40, 0.05], // disgust
    [0.20, 0.10, 0.05, 0.05, 0.20, 0.05, 0.35], // neutral
];

/// Emotion contagion: probability of the debtor's next emotion given the
/// emotion the creditor just expressed.
#[rustfmt::skip]
pub const EMOTION_CONTAGION: [[f64; 7]; 7] = [
    // deb:  joy   sad   ang   fear  sur   dis   neu      creditor:
    [0.60, 0.05, 0.05, 0.05, 0.10, 0.05, 0.10], // joy
    [0.05, 0.50, 0.20, 0.10, 0.05, 0.05, 0.05], // sadness
    [0.05, 0.20, 0.50, 0.10, 0.05, 0.05, 0.05], // anger
    [0.05, 0.20, 0.10, 0.50, 0.05, 0.05, 0.05], // fear
    [0.10, 0.05, 0.05, 0.05, 0.60, 0.05, 0.10], // surprise
    [0.05, 0.10, 0.20, 0.10, 0.05, 0.50, 0.05], // disgust
    [0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.40], // neutral
];

/// Per-turn payoff `(debtor, creditor)` for a debtor-emotion row meeting a
/// creditor-emotion column.
#[rustfmt::skip]
pub const PAYOFF: [[(f64, f64); 7]; 7] = [
    // creditor: joy     sadness   anger     fear      surprise  disgust   neutral
    [(4., 4.), (2., 3.), (1., 2.), (2., 1.), (3., 3.), (2., 2.), (3., 3.)], // joy
    [(3., 2.), (3., 3.), (1., 2.), (2., 1.), (2., 2.), (1., 1.), (2., 3.)], // sadness
    [(2., 1.), (2., 1.), (1., 1.), (1., 0.), (1., 2.), (0., 1.), (1., 2.)], // anger
    [(1., 2.), (1., 2.), (0., 1.), (2., 2.), (1., 2.), (0., 1.), (2., 3.)], // fear
    [(3., 3.), (2., 2.), (2., 1.), (2., 1.), (4., 4.), (1., 2.), (3., 3.)], // surprise
    [(2., 2.), (1., 1.), (1., 0.), (1., 0.), (2., 1.), (2., 2.), (2., 2.)], // disgust
    [(3., 3.), (2., 3.), (2., 1.), (3., 2.), (3., 3.), (2., 2.), (3., 3.)], // neutral
];

/// Remaps a raw 7x7 table from [`TABLE_EMOTION_ORDER`] into
/// [`Emotion::index`] order.
pub(crate) fn remap_table<T: Copy + Default>(raw: &[[T; 7]; 7]) -> [[T; 7]; 7] {
    let mut out = [[T::default(); 7]; 7];
    for (ri, row_emotion) in TABLE_EMOTION_ORDER.into_iter().enumerate() {
        for (ci, col_emotion) in TABLE_EMOTION_ORDER.into_iter().enumerate() {
            out[row_emotion.index()][col_emotion.index()] = raw[ri][ci];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remap_is_a_relabeling() {
        let prior = remap_table(&CREDITOR_TRANSITION_PRIOR);
        // spot-check cells across the table against the raw layout
        let at = |row: Emotion, col: Emotion| {
            let ri = TABLE_EMOTION_ORDER.iter().position(|&e| e == row).unwrap();
            let ci = TABLE_EMOTION_ORDER.iter().position(|&e| e == col).unwrap();
            CREDITOR_TRANSITION_PRIOR[ri][ci]
        };
        for row in Emotion::ALL {
            for col in Emotion::ALL {
                assert_eq!(prior[row.index()][col.index()], at(row, col));
            }
        }
        assert_eq!(prior[Emotion::Surprise.index()][Emotion::Joy.index()], 0.30);
        assert_eq!(prior[Emotion::Neutral.index()][Emotion::Neutral.index()], 0.35);
    }

    #[test]
    fn known_defective_rows_are_the_only_ones() {
        // Two published rows sum to 1.05; everything else must sum to 1.
        for (i, row) in CREDITOR_TRANSITION_PRIOR.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let expected = if TABLE_EMOTION_ORDER[i] == Emotion::Surprise { 1.05 } else { 1.0 };
            assert!((sum - expected).abs() < 1e-12, "prior row {i} sums to {sum}");
        }
        for (i, row) in EMOTION_CONTAGION.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let expected = if TABLE_EMOTION_ORDER[i] == Emotion::Disgust { 1.05 } else { 1.0 };
            assert!((sum - expected).abs() < 1e-12, "contagion row {i} sums to {sum}");
        }
    }
}
