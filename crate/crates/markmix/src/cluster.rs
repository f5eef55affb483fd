//! Modified k-means over Markov chains.
//!
//! Cluster centres are row-stochastic chains rather than data points:
//! random priors are drawn over the allowed edge set, each sequence is
//! assigned to the chain most likely to generate it, and each chain is
//! re-estimated from the empirical transition counts of its members. A run
//! converges when fewer than `convergence_fraction` of the sequences change
//! assignment between consecutive passes; `restarts` independent runs are
//! made and the one with the largest sum of log likelihoods wins.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    edge_allowed, log_likelihood_from_log_rows, Assignment, EncodedSequence, MarkovChain,
    State, ALL_STATES, NUM_STATES,
};
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// Default number of independent restarts.
pub const DEFAULT_RESTARTS: usize = 5;
/// Default convergence threshold on the reassigned fraction.
pub const DEFAULT_CONVERGENCE_FRACTION: f64 = 0.05;
/// Default iteration safety cap.
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
/// Default pseudocount added to every allowed edge at re-estimation.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

/// Knobs of the clustering engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub convergence_fraction: f64,
    pub max_iterations: usize,
    pub smoothing: f64,
    pub rng_seed: u64,
}

impl ClusterConfig {
    pub fn new(k: usize, rng_seed: u64) -> Self {
        ClusterConfig {
            k,
            restarts: DEFAULT_RESTARTS,
            convergence_fraction: DEFAULT_CONVERGENCE_FRACTION,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            smoothing: DEFAULT_SMOOTHING,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.convergence_fraction > 0.0 && self.convergence_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "convergence_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::InvalidConfig(
                "smoothing must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// An empty cluster replaced by a fresh random prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReseedEvent {
    pub iteration: usize,
    pub cluster: usize,
}

/// Diagnostics of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub sum_log_likelihood: f64,
    pub iterations_run: usize,
    pub unsupported_count: usize,
    pub reseed_count: usize,
}

/// A fitted clustering: k chains, per-sequence assignments, and run
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub config: ClusterConfig,
    pub chains: Vec<MarkovChain>,
    pub assignments: Vec<Assignment>,
    /// Sum of per-sequence log likelihoods under the assigned chains,
    /// over supported sequences.
    pub sum_log_likelihood: f64,
    pub iterations_run: usize,
    /// Reassigned fraction after each assignment pass (first entry is 1.0).
    pub reassignment_history: Vec<f64>,
    /// Objective after each assignment pass.
    pub log_likelihood_history: Vec<f64>,
    pub reseed_events: Vec<ReseedEvent>,
    pub unsupported_count: usize,
    /// Which restart produced this model.
    pub selected_restart: usize,
    /// One summary per restart, in restart order.
    pub restart_summaries: Vec<RestartSummary>,
}

impl ClusterModel {
    pub fn assignment_indices(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a.chain_index).collect()
    }
}

/// Draws a random prior: every allowed edge gets an independent Uniform(0,1)
/// draw and each non-End row is normalized to sum one. Disallowed edges are
/// exactly zero and allowed edges strictly positive.
pub fn random_prior<R: Rng>(rng: &mut R) -> MarkovChain {
    let mut rows = [[0.0; NUM_STATES]; NUM_STATES];
    for from in ALL_STATES {
        if from == State::End {
            continue;
        }
        let row = &mut rows[from.index()];
        let mut total = 0.0;
        for to in ALL_STATES {
            if edge_allowed(from, to) {
                let draw = loop {
                    let v: f64 = rng.random();
                    if v > 0.0 {
                        break v;
                    }
                };
                row[to.index()] = draw;
                total += draw;
            }
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    MarkovChain::from_rows_unvalidated(rows)
}

/// Assigns every sequence to its most likely chain (smallest index on
/// ties). Deterministic given the inputs; sequences are scored in parallel.
pub fn assign_step(seqs: &[EncodedSequence], chains: &[MarkovChain]) -> Result<Vec<Assignment>> {
    if chains.is_empty() {
        return Err(Error::EmptyChainList);
    }
    let log_rows: Vec<_> = chains.iter().map(|c| c.log_rows()).collect();
    let assignments = seqs
        .par_iter()
        .map(|seq| {
            let mut best = Assignment {
                chain_index: 0,
                log_likelihood: log_likelihood_from_log_rows(seq, &log_rows[0]),
            };
            for (i, lr) in log_rows.iter().enumerate().skip(1) {
                let ll = log_likelihood_from_log_rows(seq, lr);
                if ll > best.log_likelihood {
                    best = Assignment {
                        chain_index: i,
                        log_likelihood: ll,
                    };
                }
            }
            best
        })
        .collect();
    Ok(assignments)
}

/// Re-estimates each cluster's chain from the transition counts of its
/// sequences: counts plus `smoothing` on every allowed edge, rows
/// normalized. A cluster with no sequences is reseeded with a fresh random
/// prior (reported in the second return value); a row with zero total mass
/// becomes uniform over its allowed targets.
pub fn reestimate_step<R: Rng>(
    seqs: &[EncodedSequence],
    assignments: &[usize],
    k: usize,
    smoothing: f64,
    rng: &mut R,
) -> (Vec<MarkovChain>, Vec<usize>) {
    assert_eq!(seqs.len(), assignments.len());
    let mut counts = vec![[[0u64; NUM_STATES]; NUM_STATES]; k];
    let mut cluster_sizes = vec![0usize; k];
    for (seq, &a) in seqs.iter().zip(assignments) {
        cluster_sizes[a] += 1;
        let table = &mut counts[a];
        for pair in seq.states().windows(2) {
            table[pair[0].index()][pair[1].index()] += 1;
        }
    }
    let mut chains = Vec::with_capacity(k);
    let mut reseeded = Vec::new();
    for (j, table) in counts.iter().enumerate() {
        if cluster_sizes[j] == 0 {
            chains.push(random_prior(rng));
            reseeded.push(j);
            continue;
        }
        let mut rows = [[0.0; NUM_STATES]; NUM_STATES];
        for from in ALL_STATES {
            if from == State::End {
                continue;
            }
            let fi = from.index();
            let mut total = 0.0;
            for to in ALL_STATES {
                if edge_allowed(from, to) {
                    let mass = table[fi][to.index()] as f64 + smoothing;
                    rows[fi][to.index()] = mass;
                    total += mass;
                }
            }
            if total == 0.0 {
                let degree = crate::model::out_degree(from) as f64;
                for to in ALL_STATES {
                    if edge_allowed(from, to) {
                        rows[fi][to.index()] = 1.0 / degree;
                    }
                }
            } else {
                for p in rows[fi].iter_mut() {
                    *p /= total;
                }
            }
        }
        chains.push(MarkovChain::from_rows_unvalidated(rows));
    }
    (chains, reseeded)
}

fn reassigned_fraction(prev: &[Assignment], next: &[Assignment]) -> f64 {
    let changed = prev
        .iter()
        .zip(next)
        .filter(|(a, b)| a.chain_index != b.chain_index)
        .count();
    changed as f64 / prev.len() as f64
}

fn objective(assignments: &[Assignment]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut unsupported = 0;
    for a in assignments {
        if a.is_unsupported() {
            unsupported += 1;
        } else {
            sum += a.log_likelihood.value();
        }
    }
    (sum, unsupported)
}

/// Runs a single clustering pass from the given priors (the
/// `restarts = 1` path; `fit` wraps this per restart). The RNG is only
/// consumed when an empty cluster needs reseeding.
pub fn fit_from_priors<R: Rng>(
    seqs: &[EncodedSequence],
    priors: Vec<MarkovChain>,
    config: &ClusterConfig,
    rng: &mut R,
) -> Result<ClusterModel> {
    config.validate()?;
    if seqs.is_empty() {
        return Err(Error::NoSequences);
    }
    if priors.len() != config.k {
        return Err(Error::InvalidConfig(format!(
            "{} priors supplied for k = {}",
            priors.len(),
            config.k
        )));
    }
    let mut chains = priors;
    let mut reassignment_history = Vec::new();
    let mut log_likelihood_history = Vec::new();
    let mut reseed_events = Vec::new();
    let mut previous: Option<Vec<Assignment>> = None;
    let mut iterations_run = 0;
    loop {
        iterations_run += 1;
        let assignments = assign_step(seqs, &chains)?;
        let fraction = match &previous {
            None => 1.0,
            Some(prev) => reassigned_fraction(prev, &assignments),
        };
        reassignment_history.push(fraction);
        let (sum_ll, unsupported) = objective(&assignments);
        log_likelihood_history.push(sum_ll);
        previous = Some(assignments);
        if fraction < config.convergence_fraction || iterations_run >= config.max_iterations {
            let assignments = previous.unwrap();
            return Ok(ClusterModel {
                config: config.clone(),
                chains,
                assignments,
                sum_log_likelihood: sum_ll,
                iterations_run,
                reassignment_history,
                log_likelihood_history,
                reseed_events,
                unsupported_count: unsupported,
                selected_restart: 0,
                restart_summaries: Vec::new(),
            });
        }
        let indices: Vec<usize> = previous
            .as_ref()
            .unwrap()
            .iter()
            .map(|a| a.chain_index)
            .collect();
        let (new_chains, reseeded) =
            reestimate_step(seqs, &indices, config.k, config.smoothing, rng);
        reseed_events.extend(reseeded.into_iter().map(|cluster| ReseedEvent {
            iteration: iterations_run,
            cluster,
        }));
        chains = new_chains;
    }
}

/// Fits the mixture: `config.restarts` independent runs from fresh random
/// priors; the run with the largest sum of log likelihoods wins (earliest
/// restart on ties).
pub fn fit(seqs: &[EncodedSequence], config: &ClusterConfig) -> Result<ClusterModel> {
    config.validate()?;
    if seqs.is_empty() {
        return Err(Error::NoSequences);
    }
    let mut best: Option<ClusterModel> = None;
    let mut summaries = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let mut rng = stream(config.rng_seed, &[tag::RESTART, restart as u64]);
        let priors: Vec<MarkovChain> = (0..config.k).map(|_| random_prior(&mut rng)).collect();
        let model = fit_from_priors(seqs, priors, config, &mut rng)?;
        summaries.push(RestartSummary {
            restart,
            sum_log_likelihood: model.sum_log_likelihood,
            iterations_run: model.iterations_run,
            unsupported_count: model.unsupported_count,
            reseed_count: model.reseed_events.len(),
        });
        let better = match &best {
            None => true,
            Some(b) => model.sum_log_likelihood > b.sum_log_likelihood,
        };
        if better {
            let mut model = model;
            model.selected_restart = restart;
            best = Some(model);
        }
    }
    let mut model = best.unwrap();
    if summaries
        .iter()
        .all(|s| s.unsupported_count == seqs.len())
    {
        return Err(Error::AllUnsupported);
    }
    model.restart_summaries = summaries;
    Ok(model)
}

/// One entry of a k sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepPoint {
    pub k: usize,
    pub sum_log_likelihood: f64,
}

/// Fits once per requested k (each entry gets a seed derived from the base
/// seed and k, so duplicated k values give identical results) and returns
/// the best sums ordered by k.
pub fn k_sweep(
    seqs: &[EncodedSequence],
    k_values: &[usize],
    base: &ClusterConfig,
) -> Result<Vec<KSweepPoint>> {
    if k_values.is_empty() {
        return Err(Error::InvalidConfig("no k values supplied".into()));
    }
    let mut points = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let config = ClusterConfig {
            k,
            rng_seed: crate::rng::derive_seed(base.rng_seed, &[tag::SWEEP, k as u64]),
            ..base.clone()
        };
        let model = fit(seqs, &config)?;
        points.push(KSweepPoint {
            k,
            sum_log_likelihood: model.sum_log_likelihood,
        });
    }
    points.sort_by_key(|p| p.k);
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_likelihood, LogLikelihood};
    use crate::rng::stream;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(states: &[State]) -> EncodedSequence {
        let mut path = vec![State::Start];
        path.extend_from_slice(states);
        path.push(State::End);
        EncodedSequence::new(path, "s").unwrap()
    }

    #[test]
    fn random_prior_rows_are_stochastic_on_the_edge_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let chain = random_prior(&mut rng);
            for from in ALL_STATES {
                let sum: f64 = ALL_STATES.iter().map(|&to| chain.prob(from, to)).sum();
                if from == State::End {
                    assert_eq!(sum, 0.0);
                } else {
                    assert!((sum - 1.0).abs() <= 1e-9, "row {from} sums to {sum}");
                }
                for to in ALL_STATES {
                    let p = chain.prob(from, to);
                    if edge_allowed(from, to) {
                        assert!(p > 0.0);
                    } else {
                        assert_eq!(p, 0.0);
                    }
                }
            }
            assert!(MarkovChain::from_rows(*chain.rows()).is_ok());
        }
    }

    #[test]
    fn random_prior_same_seed_identical() {
        let a = random_prior(&mut ChaCha8Rng::seed_from_u64(42));
        let b = random_prior(&mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn assign_with_one_chain_is_all_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chains = vec![random_prior(&mut rng)];
        let seqs = vec![seq(&[State::Lesson]), seq(&[State::RightAnswer; 4])];
        let assignments = assign_step(&seqs, &chains).unwrap();
        assert!(assignments.iter().all(|a| a.chain_index == 0));
    }

    #[test]
    fn assign_follows_exclusive_support() {
        // Chain 2 walks S->L->E with certainty; chains 0 and 1 never leave
        // the question states, so the lesson path is unsupported there.
        let mut certain = [[0.0; NUM_STATES]; NUM_STATES];
        certain[State::Start.index()][State::Lesson.index()] = 1.0;
        for from in ALL_STATES {
            if from == State::End || from == State::Start {
                continue;
            }
            certain[from.index()][State::End.index()] = 1.0;
        }
        let on_path = MarkovChain::from_rows(certain).unwrap();

        let mut questions = [[0.0; NUM_STATES]; NUM_STATES];
        questions[State::Start.index()][State::RightAnswer.index()] = 1.0;
        for from in ALL_STATES {
            if from == State::End || from == State::Start {
                continue;
            }
            questions[from.index()][State::End.index()] = 1.0;
        }
        let off_path = MarkovChain::from_rows(questions).unwrap();

        let seqs = vec![seq(&[State::Lesson])];
        let assignments =
            assign_step(&seqs, &[off_path.clone(), off_path, on_path]).unwrap();
        assert_eq!(assignments[0].chain_index, 2);
        assert_eq!(assignments[0].log_likelihood.value(), 0.0);
    }

    #[test]
    fn assign_matches_per_sequence_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let chains = vec![random_prior(&mut rng), random_prior(&mut rng)];
        let seqs = vec![
            seq(&[State::Lesson, State::RightAnswer]),
            seq(&[State::WrongAnswerTopicChange; 3]),
            seq(&[State::RightAnswer, State::RightAnswerTopicChange, State::Lesson]),
        ];
        let assignments = assign_step(&seqs, &chains).unwrap();
        for (s, a) in seqs.iter().zip(&assignments) {
            // Oracle: compare both likelihoods directly.
            let ll0 = log_likelihood(s, &chains[0]);
            let ll1 = log_likelihood(s, &chains[1]);
            let expected = if ll1 > ll0 { 1 } else { 0 };
            assert_eq!(a.chain_index, expected);
        }
    }

    #[test]
    fn reestimate_matches_hand_counted_frequencies() {
        let seqs = vec![
            seq(&[State::RightAnswer, State::RightAnswer]),
            seq(&[State::RightAnswer]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (chains, reseeded) = reestimate_step(&seqs, &[0, 0], 1, 0.0, &mut rng);
        assert!(reseeded.is_empty());
        let c = &chains[0];
        assert_eq!(c.prob(State::Start, State::RightAnswer), 1.0);
        assert!((c.prob(State::RightAnswer, State::RightAnswer) - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.prob(State::RightAnswer, State::End) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn reestimate_gives_unvisited_rows_uniform_mass() {
        let seqs = vec![seq(&[State::Lesson])];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (chains, _) = reestimate_step(&seqs, &[0], 1, 0.0, &mut rng);
        let c = &chains[0];
        assert_eq!(c.prob(State::Start, State::Lesson), 1.0);
        assert_eq!(c.prob(State::Lesson, State::End), 1.0);
        // Unvisited action rows spread evenly over their 7 targets.
        assert!((c.prob(State::RightAnswer, State::End) - 1.0 / 7.0).abs() < 1e-15);
        assert!((c.prob(State::RightAnswer, State::Lesson) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(c.prob(State::RightAnswer, State::Start), 0.0);
    }

    #[test]
    fn empty_cluster_is_reseeded_and_flagged() {
        let seqs = vec![seq(&[State::Lesson]), seq(&[State::Lesson])];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (chains, reseeded) = reestimate_step(&seqs, &[0, 0], 2, 0.0, &mut rng);
        assert_eq!(reseeded, vec![1]);
        assert_eq!(chains.len(), 2);
        let expected = random_prior(&mut ChaCha8Rng::seed_from_u64(12));
        assert_eq!(chains[1], expected);
    }

    #[test]
    fn reestimate_smoothing_zero_reproduces_empirical_frequencies() {
        // Oracle: direct transition counting, independent of the engine.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let gen = random_prior(&mut rng);
            let seqs: Vec<EncodedSequence> = (0..8)
                .map(|i| crate::synth::sample_sequence(&gen, &mut rng, format!("s{i}")).unwrap())
                .collect();
            let assignments = vec![0; seqs.len()];
            let (chains, _) = reestimate_step(&seqs, &assignments, 1, 0.0, &mut rng);
            let mut counts = [[0u64; NUM_STATES]; NUM_STATES];
            for s in &seqs {
                for pair in s.states().windows(2) {
                    counts[pair[0].index()][pair[1].index()] += 1;
                }
            }
            for from in ALL_STATES {
                if from == State::End {
                    continue;
                }
                let row_total: u64 = counts[from.index()].iter().sum();
                for to in ALL_STATES {
                    let expected = if row_total == 0 {
                        if edge_allowed(from, to) {
                            1.0 / crate::model::out_degree(from) as f64
                        } else {
                            0.0
                        }
                    } else {
                        counts[from.index()][to.index()] as f64 / row_total as f64
                    };
                    assert!(
                        (chains[0].prob(from, to) - expected).abs() <= 1e-12,
                        "{from}->{to}"
                    );
                }
            }
        }
    }

    #[test]
    fn fit_recovers_disjoint_generators_perfectly() {
        // Generators with disjoint interior supports force the argmax.
        let mut lessons = [[0.0; NUM_STATES]; NUM_STATES];
        lessons[State::Start.index()][State::Lesson.index()] = 1.0;
        lessons[State::Lesson.index()][State::Lesson.index()] = 0.7;
        lessons[State::Lesson.index()][State::End.index()] = 0.3;
        for from in ALL_STATES {
            if from == State::End || from == State::Start || from == State::Lesson {
                continue;
            }
            lessons[from.index()][State::End.index()] = 1.0;
        }
        let gen_a = MarkovChain::from_rows(lessons).unwrap();

        let mut questions = [[0.0; NUM_STATES]; NUM_STATES];
        questions[State::Start.index()][State::RightAnswer.index()] = 1.0;
        questions[State::RightAnswer.index()][State::RightAnswer.index()] = 0.7;
        questions[State::RightAnswer.index()][State::End.index()] = 0.3;
        for from in ALL_STATES {
            if from == State::End || from == State::Start || from == State::RightAnswer {
                continue;
            }
            questions[from.index()][State::End.index()] = 1.0;
        }
        let gen_b = MarkovChain::from_rows(questions).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let mut seqs = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let g = i % 2;
            let chain = if g == 0 { &gen_a } else { &gen_b };
            seqs.push(crate::synth::sample_sequence(chain, &mut rng, format!("s{i}")).unwrap());
            truth.push(g);
        }
        let model = fit(&seqs, &ClusterConfig::new(2, 99)).unwrap();
        let report =
            crate::eval::average_purity(&model.assignment_indices(), &truth).unwrap();
        assert_eq!(report.average_purity, 1.0);
    }

    #[test]
    fn fit_with_one_cluster_matches_global_reestimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gen = random_prior(&mut rng);
        let seqs: Vec<EncodedSequence> = (0..50)
            .map(|i| crate::synth::sample_sequence(&gen, &mut rng, format!("s{i}")).unwrap())
            .collect();
        let config = ClusterConfig {
            smoothing: 0.0,
            ..ClusterConfig::new(1, 4)
        };
        let model = fit(&seqs, &config).unwrap();
        assert!(model.iterations_run <= 2);
        let (expected, _) = reestimate_step(
            &seqs,
            &vec![0; seqs.len()],
            1,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(model.chains[0], expected[0]);
    }

    #[test]
    fn fit_is_deterministic_given_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gens = [random_prior(&mut rng), random_prior(&mut rng)];
        let seqs: Vec<EncodedSequence> = (0..120)
            .map(|i| {
                crate::synth::sample_sequence(&gens[i % 2], &mut rng, format!("s{i}")).unwrap()
            })
            .collect();
        let config = ClusterConfig::new(3, 7);
        let a = fit(&seqs, &config).unwrap();
        let b = fit(&seqs, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn fit_objective_is_monotone_without_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(654);
        for trial in 0..10 {
            let gens: Vec<MarkovChain> = (0..3).map(|_| random_prior(&mut rng)).collect();
            let seqs: Vec<EncodedSequence> = (0..150)
                .map(|i| {
                    crate::synth::sample_sequence(&gens[i % 3], &mut rng, format!("s{i}"))
                        .unwrap()
                })
                .collect();
            let config = ClusterConfig {
                smoothing: 0.0,
                restarts: 1,
                ..ClusterConfig::new(2, trial)
            };
            let model = fit(&seqs, &config).unwrap();
            if !model.reseed_events.is_empty() {
                continue;
            }
            for pair in model.log_likelihood_history.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "{} -> {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn fit_selects_the_best_restart() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let gens = [random_prior(&mut rng), random_prior(&mut rng)];
        let seqs: Vec<EncodedSequence> = (0..100)
            .map(|i| {
                crate::synth::sample_sequence(&gens[i % 2], &mut rng, format!("s{i}")).unwrap()
            })
            .collect();
        let model = fit(&seqs, &ClusterConfig::new(2, 3)).unwrap();
        assert_eq!(model.restart_summaries.len(), DEFAULT_RESTARTS);
        for summary in &model.restart_summaries {
            assert!(model.sum_log_likelihood >= summary.sum_log_likelihood);
        }
        assert_eq!(
            model.sum_log_likelihood,
            model.restart_summaries[model.selected_restart].sum_log_likelihood
        );
    }

    #[test]
    fn permuting_input_order_only_permutes_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let gens = [random_prior(&mut rng), random_prior(&mut rng)];
        let seqs: Vec<EncodedSequence> = (0..80)
            .map(|i| {
                crate::synth::sample_sequence(&gens[i % 2], &mut rng, format!("s{i}")).unwrap()
            })
            .collect();
        let mut reversed = seqs.clone();
        reversed.reverse();
        let config = ClusterConfig::new(2, 5);
        let a = fit(&seqs, &config).unwrap();
        let b = fit(&reversed, &config).unwrap();
        assert_eq!(a.chains, b.chains);
        let mut b_assignments = b.assignments.clone();
        b_assignments.reverse();
        assert_eq!(a.assignments, b_assignments);
        assert!(
            (a.sum_log_likelihood - b.sum_log_likelihood).abs()
                <= 1e-9 * a.sum_log_likelihood.abs()
        );
    }

    #[test]
    fn every_iteration_produces_valid_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gens = [random_prior(&mut rng), random_prior(&mut rng)];
        let seqs: Vec<EncodedSequence> = (0..60)
            .map(|i| {
                crate::synth::sample_sequence(&gens[i % 2], &mut rng, format!("s{i}")).unwrap()
            })
            .collect();
        // Validity at every iteration is implied if it holds for every
        // reestimate output on arbitrary assignments.
        for trial in 0..10 {
            let assignments: Vec<usize> =
                (0..seqs.len()).map(|_| rng.random_range(0..3)).collect();
            let (chains, _) = reestimate_step(&seqs, &assignments, 3, [0.0, 1e-6][trial % 2], &mut rng);
            for chain in chains {
                assert!(MarkovChain::from_rows(*chain.rows()).is_ok());
            }
        }
    }

    #[test]
    fn all_unsupported_priors_error_out() {
        // A deterministic prior that never visits questions leaves these
        // sequences unsupported; with k-means they recover via counting, so
        // use max_iterations = 1 to freeze the degenerate state.
        let mut rows = [[0.0; NUM_STATES]; NUM_STATES];
        rows[State::Start.index()][State::Lesson.index()] = 1.0;
        for from in ALL_STATES {
            if from == State::End || from == State::Start {
                continue;
            }
            rows[from.index()][State::End.index()] = 1.0;
        }
        let prior = MarkovChain::from_rows(rows).unwrap();
        let seqs = vec![seq(&[State::RightAnswer, State::RightAnswer])];
        let config = ClusterConfig {
            max_iterations: 1,
            restarts: 1,
            ..ClusterConfig::new(1, 0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = fit_from_priors(&seqs, vec![prior], &config, &mut rng).unwrap();
        assert_eq!(model.unsupported_count, 1);
        assert_eq!(model.assignments[0].log_likelihood, LogLikelihood::UNSUPPORTED);
    }

    #[test]
    fn k_sweep_single_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gen = random_prior(&mut rng);
        let seqs: Vec<EncodedSequence> = (0..40)
            .map(|i| crate::synth::sample_sequence(&gen, &mut rng, format!("s{i}")).unwrap())
            .collect();
        let points = k_sweep(&seqs, &[2], &ClusterConfig::new(1, 9)).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].k, 2);
    }

    #[test]
    fn k_sweep_duplicate_k_gives_identical_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gen = random_prior(&mut rng);
        let seqs: Vec<EncodedSequence> = (0..40)
            .map(|i| crate::synth::sample_sequence(&gen, &mut rng, format!("s{i}")).unwrap())
            .collect();
        let points = k_sweep(&seqs, &[3, 2, 3], &ClusterConfig::new(1, 9)).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[0].k, 2);
        assert_eq!(points[1], points[2]);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut c = ClusterConfig::new(0, 1);
        assert!(c.validate().is_err());
        c.k = 2;
        c.convergence_fraction = 0.0;
        assert!(c.validate().is_err());
        c.convergence_fraction = 1.5;
        assert!(c.validate().is_err());
        c.convergence_fraction = 0.05;
        c.smoothing = -1.0;
        assert!(c.validate().is_err());
        c.smoothing = 0.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn restart_streams_are_stable() {
        // fit derives restart streams from (seed, restart); spot-check the
        // first prior of restart 0 equals a manual derivation.
        let mut rng = stream(123, &[tag::RESTART, 0]);
        let expected = random_prior(&mut rng);
        let seqs = vec![seq(&[State::Lesson])];
        let config = ClusterConfig {
            restarts: 1,
            max_iterations: 1,
            ..ClusterConfig::new(1, 123)
        };
        let model = fit(&seqs, &config).unwrap();
        // After one assignment pass the chains are still the priors.
        assert_eq!(model.chains[0], expected);
    }
}
