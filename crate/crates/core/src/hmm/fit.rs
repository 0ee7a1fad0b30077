//! Maximum-likelihood estimation of the mode model via expectation
//! maximization over observed exchange sequences.

use crate::emotion::{Emotion, ValenceClass};

use super::filter::{backward, build_seq_model, forward};
use super::{HmmError, HmmParams, ObservationPair, MODE_COUNT};

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Upper bound on EM update steps.
    pub max_iters: usize,
    /// Stop once the total log-likelihood improves by less than this. An
    /// infinite tolerance therefore performs exactly one update step.
    pub tol: f64,
    /// Additive smoothing applied to every accumulator cell before row
    /// normalization.
    pub smoothing: f64,
    /// Re-estimate the contagion table as well. Off by default: contagion is
    /// treated as a fixed response model so that sparse corpora cannot wash
    /// it out.
    pub update_contagion: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 100,
            tol: 1e-6,
            smoothing: 0.01,
            update_contagion: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: HmmParams,
    /// Total corpus log-likelihood before each update step, plus one final
    /// entry for the returned parameters.
    pub log_likelihood_trace: Vec<f64>,
    /// Number of EM update steps applied.
    pub iterations: usize,
}

struct Accumulators {
    initial: [f64; MODE_COUNT],
    transition: [[[f64; MODE_COUNT]; MODE_COUNT]; 2],
    affinity: [[f64; 7]; MODE_COUNT],
    contagion: [[f64; 7]; 7],
}

impl Accumulators {
    fn zeros() -> Accumulators {
        Accumulators {
            initial: [0.0; MODE_COUNT],
            transition: [[[0.0; MODE_COUNT]; MODE_COUNT]; 2],
            affinity: [[0.0; 7]; MODE_COUNT],
            contagion: [[0.0; 7]; 7],
        }
    }
}

/// Fits initial, transition and affinity tables to the corpus by EM,
/// starting from `init`.
///
/// Observation probabilities factor into affinity and contagion; the
/// contagion factor does not depend on the latent mode, so with
/// `update_contagion` enabled its re-estimate reduces to the smoothed
/// empirical creditor-to-debtor response counts. The diagnostic transition
/// prior and the mixing weight are carried through unchanged.
pub fn baum_welch_fit(
    sequences: &[Vec<ObservationPair>],
    init: &HmmParams,
    opts: &FitOptions,
) -> Result<FitResult, HmmError> {
    if opts.max_iters == 0 {
        return Err(HmmError::BadFitOptions("max_iters must be at least 1".into()));
    }
    if !(opts.smoothing >= 0.0) || opts.smoothing.is_infinite() {
        return Err(HmmError::BadFitOptions(format!(
            "smoothing must be a finite non-negative value, got {}",
            opts.smoothing
        )));
    }
    if opts.tol.is_nan() {
        return Err(HmmError::BadFitOptions("tol must not be NaN".into()));
    }
    let corpus: Vec<&[ObservationPair]> = sequences
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.as_slice())
        .collect();
    if corpus.is_empty() {
        return Err(HmmError::EmptyCorpus);
    }

    let mut params = init.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (stats, ll) = expectation(&params, &corpus)?;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < opts.tol {
                break;
            }
        } else {
            trace.push(ll);
        }
        if iterations >= opts.max_iters {
            break;
        }
        params = maximize(&params, &stats, opts)?;
        iterations += 1;
    }

    Ok(FitResult {
        params,
        log_likelihood_trace: trace,
        iterations,
    })
}

fn expectation(
    params: &HmmParams,
    corpus: &[&[ObservationPair]],
) -> Result<(Accumulators, f64), HmmError> {
    let mut stats = Accumulators::zeros();
    let mut total_ll = 0.0;
    for seq in corpus {
        let sm = build_seq_model(params, seq);
        let fp = forward(params.initial(), &sm)?;
        let betas = backward(&sm, &fp.norms);
        total_ll += fp.norms.iter().map(|n| n.ln()).sum::<f64>();

        let gamma: Vec<[f64; MODE_COUNT]> = fp
            .alphas
            .iter()
            .zip(&betas)
            .map(|(a, b)| {
                let mut row = [0.0; MODE_COUNT];
                for i in 0..MODE_COUNT {
                    row[i] = a[i] * b[i];
                }
                let sum: f64 = row.iter().sum();
                for x in row.iter_mut() {
                    *x /= sum;
                }
                row
            })
            .collect();

        for i in 0..MODE_COUNT {
            stats.initial[i] += gamma[0][i];
        }
        for (t, o) in seq.iter().enumerate() {
            let c = o.creditor.index();
            for i in 0..MODE_COUNT {
                stats.affinity[i][c] += gamma[t][i];
            }
            // the contagion factor is mode-independent, so its expected
            // count is just the observed pair count
            stats.contagion[c][o.debtor.index()] += 1.0;
        }
        for t in 0..seq.len() - 1 {
            let v = seq[t].debtor.valence().index();
            let trans = &sm.transitions[t];
            let emis_next = &sm.emissions[t + 1];
            let mut xi = [[0.0; MODE_COUNT]; MODE_COUNT];
            let mut xi_sum = 0.0;
            for i in 0..MODE_COUNT {
                for j in 0..MODE_COUNT {
                    let x = fp.alphas[t][i] * trans[i][j] * emis_next[j] * betas[t + 1][j]
                        / fp.norms[t + 1];
                    xi[i][j] = x;
                    xi_sum += x;
                }
            }
            for i in 0..MODE_COUNT {
                for j in 0..MODE_COUNT {
                    stats.transition[v][i][j] += xi[i][j] / xi_sum;
                }
            }
        }
    }
    Ok((stats, total_ll))
}

fn maximize(
    params: &HmmParams,
    stats: &Accumulators,
    opts: &FitOptions,
) -> Result<HmmParams, HmmError> {
    let mut parts = params.to_parts();
    smooth_into(&mut parts.initial, &stats.initial, opts.smoothing);
    for i in 0..MODE_COUNT {
        smooth_into(
            &mut parts.transition_negative[i],
            &stats.transition[ValenceClass::Negative.index()][i],
            opts.smoothing,
        );
        smooth_into(
            &mut parts.transition_non_negative[i],
            &stats.transition[ValenceClass::NonNegative.index()][i],
            opts.smoothing,
        );
        smooth_into(&mut parts.affinity[i], &stats.affinity[i], opts.smoothing);
    }
    if opts.update_contagion {
        for c in Emotion::ALL {
            smooth_into(
                &mut parts.contagion[c.index()],
                &stats.contagion[c.index()],
                opts.smoothing,
            );
        }
    }
    HmmParams::from_parts(parts)
}

/// Replaces `row` with the normalized smoothed counts, keeping the existing
/// row when the counts carry no mass at all (possible only with zero
/// smoothing).
fn smooth_into<const N: usize>(row: &mut [f64; N], counts: &[f64; N], smoothing: f64) {
    let total: f64 = counts.iter().map(|c| c + smoothing).sum();
    if total > 0.0 {
        for (slot, c) in row.iter_mut().zip(counts) {
            *slot = (c + smoothing) / total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::StrategicMode;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn short_corpus() -> Vec<Vec<ObservationPair>> {
        let pair = |d: Emotion, c: Emotion| ObservationPair::new(d, c);
        vec![
            vec![
                pair(Emotion::Anger, Emotion::Neutral),
                pair(Emotion::Anger, Emotion::Surprise),
                pair(Emotion::Sadness, Emotion::Neutral),
                pair(Emotion::Neutral, Emotion::Joy),
            ],
            vec![
                pair(Emotion::Joy, Emotion::Joy),
                pair(Emotion::Neutral, Emotion::Neutral),
                pair(Emotion::Joy, Emotion::Surprise),
            ],
        ]
    }

    #[test]
    fn infinite_tolerance_runs_exactly_one_step() {
        let corpus = short_corpus();
        let opts = FitOptions {
            tol: f64::INFINITY,
            ..FitOptions::default()
        };
        let fit = baum_welch_fit(&corpus, &HmmParams::default(), &opts).unwrap();
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.log_likelihood_trace.len(), 2);
        assert_ne!(fit.params, HmmParams::default());
    }

    #[test]
    fn trace_is_monotone_without_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let corpus: Vec<Vec<ObservationPair>> = (0..6)
            .map(|_| {
                (0..12)
                    .map(|_| {
                        ObservationPair::new(
                            Emotion::ALL[rng.gen_range(0..7)],
                            Emotion::ALL[rng.gen_range(0..7)],
                        )
                    })
                    .collect()
            })
            .collect();
        let opts = FitOptions {
            max_iters: 15,
            tol: 0.0,
            smoothing: 0.0,
            update_contagion: true,
        };
        let fit = baum_welch_fit(&corpus, &HmmParams::default(), &opts).unwrap();
        for w in fit.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "trace decreased: {w:?}");
        }
    }

    #[test]
    fn length_one_sequences_leave_transitions_at_smoothed_prior() {
        let corpus = vec![
            vec![ObservationPair::new(Emotion::Anger, Emotion::Neutral)],
            vec![ObservationPair::new(Emotion::Joy, Emotion::Joy)],
        ];
        let opts = FitOptions {
            max_iters: 3,
            tol: f64::NEG_INFINITY, // never converge early
            smoothing: 0.01,
            update_contagion: false,
        };
        let fit = baum_welch_fit(&corpus, &HmmParams::default(), &opts).unwrap();
        // no transition evidence: smoothed zero counts normalize to uniform
        for v in [ValenceClass::Negative, ValenceClass::NonNegative] {
            for row in fit.params.transition(v) {
                for &x in row {
                    assert!((x - 0.25).abs() < 1e-12, "{row:?}");
                }
            }
        }

        // with zero smoothing the untouched rows are kept verbatim
        let opts0 = FitOptions { smoothing: 0.0, ..opts };
        let fit0 = baum_welch_fit(&corpus, &HmmParams::default(), &opts0).unwrap();
        assert_eq!(
            fit0.params.transition(ValenceClass::Negative),
            HmmParams::default().transition(ValenceClass::Negative)
        );
    }

    #[test]
    fn contagion_is_fixed_unless_unfrozen() {
        let corpus = short_corpus();
        let defaults = HmmParams::default();
        let frozen = baum_welch_fit(&corpus, &defaults, &FitOptions::default()).unwrap();
        assert_eq!(frozen.params.contagion(), defaults.contagion());
        assert_eq!(
            frozen.params.policy_transition_prior(),
            defaults.policy_transition_prior()
        );
        assert_eq!(frozen.params.mixing(), defaults.mixing());

        let opts = FitOptions {
            update_contagion: true,
            ..FitOptions::default()
        };
        let unfrozen = baum_welch_fit(&corpus, &defaults, &opts).unwrap();
        assert_ne!(unfrozen.params.contagion(), defaults.contagion());
    }

    #[test]
    fn affinity_moves_toward_observed_creditor_emotions() {
        // a corpus whose creditor side is always surprise should pull every
        // affinity row's surprise mass upward
        let corpus: Vec<Vec<ObservationPair>> = vec![(0..10)
            .map(|i| {
                ObservationPair::new(
                    if i % 2 == 0 { Emotion::Anger } else { Emotion::Sadness },
                    Emotion::Surprise,
                )
            })
            .collect()];
        let defaults = HmmParams::default();
        let fit = baum_welch_fit(&corpus, &defaults, &FitOptions::default()).unwrap();
        for m in StrategicMode::ALL {
            assert!(
                fit.params.affinity(m)[Emotion::Surprise.index()]
                    > defaults.affinity(m)[Emotion::Surprise.index()]
            );
        }
    }

    #[test]
    fn rejects_empty_corpus_and_bad_options() {
        let defaults = HmmParams::default();
        assert_eq!(
            baum_welch_fit(&[], &defaults, &FitOptions::default()).unwrap_err(),
            HmmError::EmptyCorpus
        );
        assert_eq!(
            baum_welch_fit(&[vec![]], &defaults, &FitOptions::default()).unwrap_err(),
            HmmError::EmptyCorpus
        );
        let opts = FitOptions { max_iters: 0, ..FitOptions::default() };
        assert!(matches!(
            baum_welch_fit(&short_corpus(), &defaults, &opts).unwrap_err(),
            HmmError::BadFitOptions(_)
        ));
        let opts = FitOptions { smoothing: -0.5, ..FitOptions::default() };
        assert!(matches!(
            baum_welch_fit(&short_corpus(), &defaults, &opts).unwrap_err(),
            HmmError::BadFitOptions(_)
        ));
    }
}
