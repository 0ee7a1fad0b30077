//! Bayesian filtering and smoothing over the strategic-mode chain.
//!
//! All recursions run with per-step normalization so that long sequences
//! stay in range; the sequence log-likelihood is the sum of the log
//! normalizers.

use super::{BeliefState, HmmError, HmmParams, ObservationPair, MODE_COUNT};

/// Per-sequence view of the model: one emission vector per step and the
/// transition table that connects each step to the next.
pub(crate) struct SeqModel {
    /// `emissions[t][i]` = probability of observation `t` under mode `i`.
    pub emissions: Vec<[f64; MODE_COUNT]>,
    /// `transitions[t]` links step `t` to `t + 1`; selected by the valence
    /// of the debtor emotion observed at step `t`. Length `T - 1`.
    pub transitions: Vec<[[f64; MODE_COUNT]; MODE_COUNT]>,
}

pub(crate) fn build_seq_model(p: &HmmParams, obs: &[ObservationPair]) -> SeqModel {
    let emissions = obs
        .iter()
        .map(|&o| {
            let mut row = [0.0; MODE_COUNT];
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = p.emission_by_index(i, o);
            }
            row
        })
        .collect();
    let transitions = obs
        .iter()
        .take(obs.len().saturating_sub(1))
        .map(|&o| *p.transition(o.debtor.valence()))
        .collect();
    SeqModel {
        emissions,
        transitions,
    }
}

pub(crate) struct ForwardPass {
    /// Normalized forward variables, one row per step.
    pub alphas: Vec<[f64; MODE_COUNT]>,
    /// Per-step normalizers; the log-likelihood is the sum of their logs.
    pub norms: Vec<f64>,
}

pub(crate) fn forward(
    initial: &[f64; MODE_COUNT],
    sm: &SeqModel,
) -> Result<ForwardPass, HmmError> {
    if sm.emissions.is_empty() {
        return Err(HmmError::EmptySequence);
    }
    let mut alphas = Vec::with_capacity(sm.emissions.len());
    let mut norms = Vec::with_capacity(sm.emissions.len());
    let mut prev = [0.0; MODE_COUNT];
    for (t, emis) in sm.emissions.iter().enumerate() {
        let mut alpha = [0.0; MODE_COUNT];
        for i in 0..MODE_COUNT {
            let mass = if t == 0 {
                initial[i]
            } else {
                let trans = &sm.transitions[t - 1];
                (0..MODE_COUNT).map(|j| prev[j] * trans[j][i]).sum()
            };
            alpha[i] = mass * emis[i];
        }
        let norm: f64 = alpha.iter().sum();
        if !(norm > 0.0) {
            return Err(HmmError::ImpossibleObservation { step: t });
        }
        for a in alpha.iter_mut() {
            *a /= norm;
        }
        norms.push(norm);
        alphas.push(alpha);
        prev = alpha;
    }
    Ok(ForwardPass { alphas, norms })
}

/// Scaled backward variables matching [`forward`]'s normalizers; the last
/// row is all ones.
pub(crate) fn backward(sm: &SeqModel, norms: &[f64]) -> Vec<[f64; MODE_COUNT]> {
    let t_len = sm.emissions.len();
    let mut betas = vec![[1.0; MODE_COUNT]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        let trans = &sm.transitions[t];
        let emis_next = &sm.emissions[t + 1];
        let beta_next = betas[t + 1];
        let mut row = [0.0; MODE_COUNT];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = (0..MODE_COUNT)
                .map(|j| trans[i][j] * emis_next[j] * beta_next[j])
                .sum::<f64>()
                / norms[t + 1];
        }
        betas[t] = row;
    }
    betas
}

/// One step of Bayesian belief filtering.
///
/// Propagates the belief through the mode transition selected by the valence
/// of the previous exchange's debtor emotion (skipped when there is no
/// previous exchange), then reweights by the emission probability of `obs`
/// and renormalizes. Evidence with zero mass under every mode yields
/// [`HmmError::DegenerateEvidence`]; callers that must make progress fall
/// back to a uniform belief.
pub fn belief_update(
    belief: &BeliefState,
    p: &HmmParams,
    prev_obs: Option<ObservationPair>,
    obs: ObservationPair,
) -> Result<BeliefState, HmmError> {
    let predicted = match prev_obs {
        Some(po) => apply_transition(p.transition(po.debtor.valence()), belief.probs()),
        None => *belief.probs(),
    };
    let mut post = [0.0; MODE_COUNT];
    for (i, slot) in post.iter_mut().enumerate() {
        *slot = predicted[i] * p.emission_by_index(i, obs);
    }
    BeliefState::from_unnormalized(post)
}

/// Distribution over the next mode given the current belief and the freshly
/// observed exchange.
pub fn predict_next_mode(
    belief: &BeliefState,
    p: &HmmParams,
    obs: ObservationPair,
) -> BeliefState {
    let probs = apply_transition(p.transition(obs.debtor.valence()), belief.probs());
    // rows are stochastic, so the propagated mass still sums to one
    BeliefState::new(probs).expect("transition of a valid belief is a valid belief")
}

fn apply_transition(
    trans: &[[f64; MODE_COUNT]; MODE_COUNT],
    probs: &[f64; MODE_COUNT],
) -> [f64; MODE_COUNT] {
    let mut out = [0.0; MODE_COUNT];
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = (0..MODE_COUNT).map(|i| probs[i] * trans[i][j]).sum();
    }
    out
}

/// Filtered mode marginals `P(S_t | o_1..o_t)` for every step.
pub fn filtered_marginals(
    p: &HmmParams,
    obs: &[ObservationPair],
) -> Result<Vec<BeliefState>, HmmError> {
    let sm = build_seq_model(p, obs);
    let fp = forward(p.initial(), &sm)?;
    Ok(fp
        .alphas
        .into_iter()
        .map(|row| BeliefState::from_unnormalized(row).expect("forward rows are normalized"))
        .collect())
}

/// Smoothed mode marginals `P(S_t | o_1..o_T)` for every step.
pub fn posterior_marginals(
    p: &HmmParams,
    obs: &[ObservationPair],
) -> Result<Vec<BeliefState>, HmmError> {
    let sm = build_seq_model(p, obs);
    let fp = forward(p.initial(), &sm)?;
    let betas = backward(&sm, &fp.norms);
    fp.alphas
        .iter()
        .zip(&betas)
        .map(|(a, b)| {
            let mut row = [0.0; MODE_COUNT];
            for i in 0..MODE_COUNT {
                row[i] = a[i] * b[i];
            }
            BeliefState::from_unnormalized(row)
        })
        .collect()
}

/// Log-probability of the full observation sequence under the model.
pub fn sequence_log_likelihood(
    p: &HmmParams,
    obs: &[ObservationPair],
) -> Result<f64, HmmError> {
    let sm = build_seq_model(p, obs);
    let fp = forward(p.initial(), &sm)?;
    Ok(fp.norms.iter().map(|n| n.ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::{Emotion, ValenceClass};
    use crate::hmm::{HmmParamsParts, StrategicMode};

    fn identity7() -> [[f64; 7]; 7] {
        let mut t = [[0.0; 7]; 7];
        for i in 0..7 {
            t[i][i] = 1.0;
        }
        t
    }

    fn identity4() -> [[f64; 4]; 4] {
        let mut t = [[0.0; 4]; 4];
        for i in 0..4 {
            t[i][i] = 1.0;
        }
        t
    }

    /// Two live modes (cooperative and confrontational) with opposed joy /
    /// neutral affinities; identity contagion and transitions; the remaining
    /// two modes carry no initial mass.
    fn two_mode_params() -> HmmParams {
        let mut affinity = [[0.0; 7]; 4];
        affinity[0][Emotion::Joy.index()] = 0.9;
        affinity[0][Emotion::Neutral.index()] = 0.1;
        affinity[1][Emotion::Joy.index()] = 0.1;
        affinity[1][Emotion::Neutral.index()] = 0.9;
        affinity[2] = [1.0 / 7.0; 7];
        affinity[3] = [1.0 / 7.0; 7];
        HmmParams::from_parts(HmmParamsParts {
            initial: [0.5, 0.5, 0.0, 0.0],
            transition_negative: identity4(),
            transition_non_negative: identity4(),
            affinity,
            contagion: identity7(),
            policy_transition_prior: identity7(),
            mixing: 0.7,
        })
        .unwrap()
    }

    #[test]
    fn first_update_reweights_by_emission() {
        let p = two_mode_params();
        let b = BeliefState::new([0.5, 0.5, 0.0, 0.0]).unwrap();
        let obs = ObservationPair::new(Emotion::Joy, Emotion::Joy);
        let updated = belief_update(&b, &p, None, obs).unwrap();
        let got = updated.probs();
        assert!((got[0] - 0.9).abs() < 1e-12, "{got:?}");
        assert!((got[1] - 0.1).abs() < 1e-12);
        assert_eq!(got[2], 0.0);
        assert_eq!(got[3], 0.0);
    }

    #[test]
    fn degenerate_evidence_is_an_error() {
        let p = two_mode_params();
        // all belief mass on the dead modes makes any joy/neutral evidence
        // impossible once filtered through the zero-affinity rows
        let b = BeliefState::new([0.0, 0.0, 1.0, 0.0]).unwrap();
        // identity contagion: joy row has zero mass on anger response
        let obs = ObservationPair::new(Emotion::Anger, Emotion::Joy);
        assert_eq!(
            belief_update(&b, &p, None, obs).unwrap_err(),
            HmmError::DegenerateEvidence
        );
    }

    #[test]
    fn update_uses_valence_selected_transition() {
        // transitions differ per valence: negative valence flips the two
        // live modes, non-negative keeps them
        let mut flip = identity4();
        flip.swap(0, 1);
        let base = two_mode_params();
        let mut parts = base.to_parts();
        parts.transition_negative = flip;
        let p = HmmParams::from_parts(parts).unwrap();

        let b = BeliefState::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        let prev_negative = ObservationPair::new(Emotion::Anger, Emotion::Joy);
        let prev_non_negative = ObservationPair::new(Emotion::Surprise, Emotion::Joy);
        let obs = ObservationPair::new(Emotion::Neutral, Emotion::Neutral);

        let after_negative = belief_update(&b, &p, Some(prev_negative), obs).unwrap();
        // flipped into confrontational, whose neutral affinity dominates
        assert!((after_negative.prob(StrategicMode::Confrontational) - 1.0).abs() < 1e-12);

        let after_non_negative = belief_update(&b, &p, Some(prev_non_negative), obs).unwrap();
        assert!((after_non_negative.prob(StrategicMode::Cooperative) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_next_mode_identity_and_point_mass() {
        let p = two_mode_params();
        let b = BeliefState::new([0.3, 0.7, 0.0, 0.0]).unwrap();
        let obs = ObservationPair::new(Emotion::Joy, Emotion::Joy);
        // identity transition returns the belief unchanged
        assert_eq!(predict_next_mode(&b, &p, obs).probs(), b.probs());

        // a point-mass belief returns the matching transition row
        let defaults = HmmParams::default();
        let b = BeliefState::point_mass(StrategicMode::Distressed);
        let neg_obs = ObservationPair::new(Emotion::Sadness, Emotion::Neutral);
        let predicted = predict_next_mode(&b, &defaults, neg_obs);
        let expected = &defaults.transition(ValenceClass::Negative)[StrategicMode::Distressed.index()];
        for m in StrategicMode::ALL {
            assert!((predicted.prob(m) - expected[m.index()]).abs() < 1e-15);
        }
    }

    #[test]
    fn predict_next_mode_doubly_stochastic_keeps_uniform() {
        let base = two_mode_params();
        let mut parts = base.to_parts();
        // a symmetric doubly stochastic table
        let t = [
            [0.4, 0.3, 0.2, 0.1],
            [0.3, 0.4, 0.1, 0.2],
            [0.2, 0.1, 0.4, 0.3],
            [0.1, 0.2, 0.3, 0.4],
        ];
        parts.transition_negative = t;
        parts.transition_non_negative = t;
        let p = HmmParams::from_parts(parts).unwrap();
        let predicted = predict_next_mode(
            &BeliefState::uniform(),
            &p,
            ObservationPair::new(Emotion::Joy, Emotion::Joy),
        );
        for &x in predicted.probs() {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_of_single_observation_weights_initial_by_emission() {
        let p = two_mode_params();
        let obs = [ObservationPair::new(Emotion::Joy, Emotion::Joy)];
        let post = posterior_marginals(&p, &obs).unwrap();
        assert_eq!(post.len(), 1);
        assert!((post[0].probs()[0] - 0.9).abs() < 1e-12);
        assert!((post[0].probs()[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_step_log_likelihood_is_log_mean_emission() {
        // uniform initial over 4 modes, every mode emits the observation
        // with probability p -> likelihood is exactly p
        let base = two_mode_params();
        let mut parts = base.to_parts();
        parts.initial = [0.25; 4];
        let mut affinity = [[0.0; 7]; 4];
        for row in affinity.iter_mut() {
            row[Emotion::Joy.index()] = 0.25;
            row[Emotion::Neutral.index()] = 0.75;
        }
        parts.affinity = affinity;
        let p = HmmParams::from_parts(parts).unwrap();
        let obs = [ObservationPair::new(Emotion::Joy, Emotion::Joy)];
        let ll = sequence_log_likelihood(&p, &obs).unwrap();
        assert!((ll - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let p = HmmParams::default();
        assert_eq!(
            sequence_log_likelihood(&p, &[]).unwrap_err(),
            HmmError::EmptySequence
        );
        assert_eq!(posterior_marginals(&p, &[]).unwrap_err(), HmmError::EmptySequence);
    }

    #[test]
    fn impossible_observation_reports_step() {
        let p = two_mode_params();
        let obs = [
            ObservationPair::new(Emotion::Joy, Emotion::Joy),
            // identity contagion assigns zero mass to a mismatched reply
            ObservationPair::new(Emotion::Fear, Emotion::Joy),
        ];
        assert_eq!(
            sequence_log_likelihood(&p, &obs).unwrap_err(),
            HmmError::ImpossibleObservation { step: 1 }
        );
    }

    #[test]
    fn posteriors_are_invariant_to_per_step_emission_scaling() {
        let p = HmmParams::default();
        let obs = vec![
            ObservationPair::new(Emotion::Anger, Emotion::Neutral),
            ObservationPair::new(Emotion::Sadness, Emotion::Surprise),
            ObservationPair::new(Emotion::Joy, Emotion::Joy),
            ObservationPair::new(Emotion::Fear, Emotion::Sadness),
        ];
        let reference = posterior_marginals(&p, &obs).unwrap();

        let mut sm = build_seq_model(&p, &obs);
        for x in sm.emissions[2].iter_mut() {
            *x *= 1e-7;
        }
        let fp = forward(p.initial(), &sm).unwrap();
        let betas = backward(&sm, &fp.norms);
        for (t, (a, b)) in fp.alphas.iter().zip(&betas).enumerate() {
            let mut row = [0.0; MODE_COUNT];
            for i in 0..MODE_COUNT {
                row[i] = a[i] * b[i];
            }
            let scaled = BeliefState::from_unnormalized(row).unwrap();
            for i in 0..MODE_COUNT {
                assert!(
                    (scaled.probs()[i] - reference[t].probs()[i]).abs() < 1e-12,
                    "step {t} mode {i}"
                );
            }
        }
    }

    #[test]
    fn filtered_tail_matches_chained_belief_updates() {
        let p = HmmParams::default();
        let obs = vec![
            ObservationPair::new(Emotion::Anger, Emotion::Neutral),
            ObservationPair::new(Emotion::Anger, Emotion::Surprise),
            ObservationPair::new(Emotion::Sadness, Emotion::Neutral),
        ];
        let filtered = filtered_marginals(&p, &obs).unwrap();
        let mut belief = p.initial_belief();
        let mut prev = None;
        for (t, &o) in obs.iter().enumerate() {
            belief = belief_update(&belief, &p, prev, o).unwrap();
            prev = Some(o);
            for i in 0..MODE_COUNT {
                assert!((belief.probs()[i] - filtered[t].probs()[i]).abs() < 1e-12);
            }
        }
    }
}
