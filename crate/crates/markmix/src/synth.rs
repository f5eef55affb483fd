//! Synthetic corpora and the noisy-prior recovery experiment.
//!
//! Generator chains fix the probability of entering the end state so the
//! interior length is geometric with the requested mean; sequences are
//! sampled uniformly over the generators, labelled by their most likely
//! generator, and clustering is started from convex mixtures of the true
//! chains and a random chain to measure how purity degrades with prior
//! noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{fit_from_priors, random_prior, ClusterConfig};
use crate::eval::average_purity;
use crate::model::{
    most_likely_chain, EncodedSequence, MarkovChain, State, ALL_STATES, NUM_STATES,
};
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// Walks longer than this are treated as a pathological chain.
pub const MAX_WALK_STEPS: usize = 100_000;

/// Parameters of the synthetic harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Number of generator chains.
    pub k_true: usize,
    pub n_sequences: usize,
    /// Probability of entering End from every action state; the interior
    /// length is geometric with mean `1 / end_probability`.
    pub end_probability: f64,
    /// Prior noise level for single-cell runs; sweeps supply their own
    /// alphas.
    pub alpha: f64,
    pub repetitions: usize,
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            k_true: 6,
            n_sequences: 50_000,
            end_probability: 0.05,
            alpha: 0.0,
            repetitions: 10,
            rng_seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_true < 1 {
            return Err(Error::InvalidConfig("k_true must be at least 1".into()));
        }
        if self.n_sequences < 1 {
            return Err(Error::InvalidConfig(
                "n_sequences must be at least 1".into(),
            ));
        }
        if !(self.end_probability > 0.0 && self.end_probability < 1.0) {
            return Err(Error::InvalidConfig(
                "end_probability must lie in (0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig("alpha must lie in [0, 1]".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidConfig(
                "repetitions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A sampled sequence with its generator and its argmax label under the
/// true chains.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSequence {
    pub seq: EncodedSequence,
    pub generator_index: usize,
    pub label: usize,
}

/// Draws a generator chain: every action state enters End with exactly
/// `end_probability`, the rest of each action row is Uniform(0,1) mass
/// renormalized to `1 - end_probability` over the action targets, and the
/// Start row is normalized over the three plain action states.
pub fn random_generator_chain<R: Rng>(rng: &mut R, end_probability: f64) -> MarkovChain {
    assert!(
        end_probability > 0.0 && end_probability < 1.0,
        "end_probability must lie in (0, 1)"
    );
    let mut rows = [[0.0; NUM_STATES]; NUM_STATES];
    let start_targets = [State::Lesson, State::RightAnswer, State::WrongAnswer];
    let start_row = &mut rows[State::Start.index()];
    let mut total = 0.0;
    for to in start_targets {
        let draw = loop {
            let v: f64 = rng.random();
            if v > 0.0 {
                break v;
            }
        };
        start_row[to.index()] = draw;
        total += draw;
    }
    for to in start_targets {
        start_row[to.index()] /= total;
    }
    for from in ALL_STATES {
        if !from.is_action() {
            continue;
        }
        let row = &mut rows[from.index()];
        let mut total = 0.0;
        for to in ALL_STATES {
            if to.is_action() {
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
        let scale = (1.0 - end_probability) / total;
        for to in ALL_STATES {
            if to.is_action() {
                row[to.index()] *= scale;
            }
        }
        row[State::End.index()] = end_probability;
    }
    MarkovChain::from_rows_unvalidated(rows)
}

fn sample_next<R: Rng>(chain: &MarkovChain, from: State, rng: &mut R) -> State {
    let row = &chain.rows()[from.index()];
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = None;
    for to in ALL_STATES {
        let p = row[to.index()];
        if p > 0.0 {
            cum += p;
            last_positive = Some(to);
            if u < cum {
                return to;
            }
        }
    }
    // Row sums to 1 within rounding; u landed in the residual sliver.
    last_positive.expect("non-End row has positive mass")
}

/// Random walk from Start until End.
pub fn sample_sequence<R: Rng>(
    chain: &MarkovChain,
    rng: &mut R,
    session_id: impl Into<String>,
) -> Result<EncodedSequence> {
    let mut states = vec![State::Start];
    let mut current = State::Start;
    while current != State::End {
        if states.len() > MAX_WALK_STEPS {
            return Err(Error::PathologicalWalk(MAX_WALK_STEPS));
        }
        current = sample_next(chain, current, rng);
        states.push(current);
    }
    EncodedSequence::new(states, session_id)
}

/// Samples `n` sequences, each from a generator picked uniformly at random.
/// Returns `(sequence, generator_index)` pairs; session ids are
/// `synth-<i>`.
pub fn sample_corpus<R: Rng>(
    chains: &[MarkovChain],
    n: usize,
    rng: &mut R,
) -> Result<Vec<(EncodedSequence, usize)>> {
    if chains.is_empty() {
        return Err(Error::EmptyChainList);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = rng.random_range(0..chains.len());
        let seq = sample_sequence(&chains[g], rng, format!("synth-{i:06}"))?;
        out.push((seq, g));
    }
    Ok(out)
}

/// Labels every sampled sequence with its most likely chain among the true
/// chains; the generator index is carried through unchanged.
pub fn label_corpus(
    samples: &[(EncodedSequence, usize)],
    true_chains: &[MarkovChain],
) -> Result<Vec<LabelledSequence>> {
    samples
        .iter()
        .map(|(seq, generator_index)| {
            let assignment = most_likely_chain(seq, true_chains)?;
            Ok(LabelledSequence {
                seq: seq.clone(),
                generator_index: *generator_index,
                label: assignment.chain_index,
            })
        })
        .collect()
}

/// Entrywise convex combination `(1 - alpha) * true_chain + alpha * random`
/// with a freshly drawn random chain. Rows stay stochastic and disallowed
/// edges stay zero.
pub fn noisy_prior<R: Rng>(true_chain: &MarkovChain, rng: &mut R, alpha: f64) -> MarkovChain {
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    let random = random_prior(rng);
    let mut rows = [[0.0; NUM_STATES]; NUM_STATES];
    for i in 0..NUM_STATES {
        for j in 0..NUM_STATES {
            rows[i][j] = (1.0 - alpha) * true_chain.rows()[i][j] + alpha * random.rows()[i][j];
        }
    }
    MarkovChain::from_rows_unvalidated(rows)
}

/// One cell of the noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepRow {
    pub alpha: f64,
    pub repetition: usize,
    /// Average purity against the argmax labels.
    pub purity: f64,
    /// Average purity against the generator indices.
    pub purity_generator: f64,
    pub sum_log_likelihood: f64,
}

/// Per-alpha means over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepSummary {
    pub alpha: f64,
    pub mean_purity: f64,
    pub mean_purity_generator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub rows: Vec<NoiseSweepRow>,
    pub summary: Vec<NoiseSweepSummary>,
}

/// Runs the noisy-prior experiment: per repetition a fresh set of generator
/// chains and a fresh corpus; per alpha, clustering seeded with noisy
/// versions of the true chains (a single run, no restarts) and scored by
/// average purity. Each (repetition, alpha) cell owns an RNG stream derived
/// from the seed, so execution order cannot change results.
pub fn noise_sweep_experiment(config: &SyntheticConfig, alphas: &[f64]) -> Result<NoiseSweep> {
    config.validate()?;
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("no alphas supplied".into()));
    }
    for &alpha in alphas {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
    }
    let mut cells: Vec<Vec<NoiseSweepRow>> = vec![Vec::new(); alphas.len()];
    for rep in 0..config.repetitions {
        let mut corpus_rng = stream(config.rng_seed, &[tag::SYNTH_CORPUS, rep as u64]);
        let generators: Vec<MarkovChain> = (0..config.k_true)
            .map(|_| random_generator_chain(&mut corpus_rng, config.end_probability))
            .collect();
        let samples = sample_corpus(&generators, config.n_sequences, &mut corpus_rng)?;
        let labelled = label_corpus(&samples, &generators)?;
        let seqs: Vec<EncodedSequence> = samples.iter().map(|(s, _)| s.clone()).collect();
        let argmax_labels: Vec<usize> = labelled.iter().map(|l| l.label).collect();
        let generator_labels: Vec<usize> = labelled.iter().map(|l| l.generator_index).collect();
        for (ai, &alpha) in alphas.iter().enumerate() {
            let mut cell_rng = stream(config.rng_seed, &[tag::SYNTH_CELL, rep as u64, ai as u64]);
            let priors: Vec<MarkovChain> = generators
                .iter()
                .map(|g| noisy_prior(g, &mut cell_rng, alpha))
                .collect();
            let cluster_config = ClusterConfig {
                restarts: 1,
                ..ClusterConfig::new(config.k_true, config.rng_seed)
            };
            let model = fit_from_priors(&seqs, priors, &cluster_config, &mut cell_rng)?;
            let estimated = model.assignment_indices();
            let purity = average_purity(&estimated, &argmax_labels)?.average_purity;
            let purity_generator =
                average_purity(&estimated, &generator_labels)?.average_purity;
            cells[ai].push(NoiseSweepRow {
                alpha,
                repetition: rep,
                purity,
                purity_generator,
                sum_log_likelihood: model.sum_log_likelihood,
            });
        }
    }
    let mut rows = Vec::with_capacity(alphas.len() * config.repetitions);
    let mut summary = Vec::with_capacity(alphas.len());
    for (ai, cell) in cells.into_iter().enumerate() {
        let n = cell.len() as f64;
        summary.push(NoiseSweepSummary {
            alpha: alphas[ai],
            mean_purity: cell.iter().map(|r| r.purity).sum::<f64>() / n,
            mean_purity_generator: cell.iter().map(|r| r.purity_generator).sum::<f64>() / n,
        });
        rows.extend(cell);
    }
    Ok(NoiseSweep { rows, summary })
}
