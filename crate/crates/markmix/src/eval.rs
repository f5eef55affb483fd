//! Evaluation: average purity, sum of log likelihoods, the
//! interior-permutation baseline, per-chain statistics, and student
//! profiles.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{fit_from_priors, random_prior, ClusterConfig};
use crate::model::{log_likelihood, EncodedSequence, MarkovChain};
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// Purity of one estimated cluster: the largest fraction of its members
/// sharing a single true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPurity {
    pub cluster: usize,
    pub size: usize,
    pub best_overlap: usize,
    pub fraction: f64,
}

/// Average purity of a clustering against reference labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub per_cluster: Vec<ClusterPurity>,
    /// Unweighted mean of the per-cluster fractions.
    pub average_purity: f64,
    /// Size-weighted variant, as a robustness diagnostic.
    pub weighted_purity: f64,
    /// Number of nonempty estimated clusters.
    pub n_clusters: usize,
    /// Number of distinct true labels.
    pub k_true: usize,
}

/// Computes average purity: for each nonempty estimated cluster the largest
/// overlap fraction with a single true cluster, averaged unweighted over
/// the estimated clusters.
pub fn average_purity(estimated: &[usize], truth: &[usize]) -> Result<PurityReport> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch {
            estimated: estimated.len(),
            truth: truth.len(),
        });
    }
    if estimated.is_empty() {
        return Err(Error::NoSequences);
    }
    let mut overlaps: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&e, &t) in estimated.iter().zip(truth) {
        *overlaps.entry(e).or_default().entry(t).or_default() += 1;
    }
    let k_true = truth.iter().collect::<std::collections::BTreeSet<_>>().len();
    let total = estimated.len();
    let mut per_cluster = Vec::with_capacity(overlaps.len());
    let mut fraction_sum = 0.0;
    let mut best_sum = 0usize;
    for (cluster, counts) in &overlaps {
        let size: usize = counts.values().sum();
        let best_overlap = *counts.values().max().unwrap();
        let fraction = best_overlap as f64 / size as f64;
        fraction_sum += fraction;
        best_sum += best_overlap;
        per_cluster.push(ClusterPurity {
            cluster: *cluster,
            size,
            best_overlap,
            fraction,
        });
    }
    Ok(PurityReport {
        average_purity: fraction_sum / per_cluster.len() as f64,
        weighted_purity: best_sum as f64 / total as f64,
        n_clusters: per_cluster.len(),
        k_true,
        per_cluster,
    })
}

/// Sum of per-sequence log likelihoods under each sequence's assigned
/// chain, excluding sequences with probability zero under their assigned
/// chain.
pub fn corpus_log_likelihood(
    seqs: &[EncodedSequence],
    chains: &[MarkovChain],
    assignments: &[usize],
) -> Result<f64> {
    if seqs.len() != assignments.len() {
        return Err(Error::LengthMismatch {
            estimated: assignments.len(),
            truth: seqs.len(),
        });
    }
    if chains.is_empty() {
        return Err(Error::EmptyChainList);
    }
    let mut sum = 0.0;
    for (seq, &a) in seqs.iter().zip(assignments) {
        let chain = chains.get(a).ok_or_else(|| {
            Error::InvalidConfig(format!("assignment index {a} out of range for k = {}", chains.len()))
        })?;
        let ll = log_likelihood(seq, chain);
        if !ll.is_unsupported() {
            sum += ll.value();
        }
    }
    Ok(sum)
}

/// Uniformly random permutation of the interior states; Start and End stay
/// fixed and the interior multiset is preserved.
pub fn permute_interior<R: Rng>(seq: &EncodedSequence, rng: &mut R) -> EncodedSequence {
    let mut states = seq.states().to_vec();
    let len = states.len();
    states[1..len - 1].shuffle(rng);
    EncodedSequence::new(states, seq.source_session_id())
        .expect("permuting the interior preserves the path invariants")
}

/// One row of the permutation baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationPoint {
    pub k: usize,
    pub sum_log_likelihood_real: f64,
    pub sum_log_likelihood_permuted: f64,
}

/// Fits real and interior-permuted copies of the corpus for every k and
/// reports the best sum of log likelihoods of each side.
///
/// Per (k, restart) both sides share the prior stream and the permuted side
/// draws a fresh permutation, so the pipelines differ only in the corpus.
pub fn permutation_baseline(
    seqs: &[EncodedSequence],
    k_values: &[usize],
    config: &ClusterConfig,
) -> Result<Vec<PermutationPoint>> {
    config.validate()?;
    if seqs.is_empty() {
        return Err(Error::NoSequences);
    }
    if k_values.is_empty() {
        return Err(Error::InvalidConfig("no k values supplied".into()));
    }
    let mut points = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let run_config = ClusterConfig {
            k,
            restarts: 1,
            ..config.clone()
        };
        let mut best_real = f64::NEG_INFINITY;
        let mut best_permuted = f64::NEG_INFINITY;
        for restart in 0..config.restarts {
            // Both sides consume identical streams (priors, then any
            // reseeds), so an identity permutation gives identical runs.
            let coords = [tag::PERM_PRIORS, k as u64, restart as u64];
            let mut real_rng = stream(config.rng_seed, &coords);
            let priors: Vec<MarkovChain> =
                (0..k).map(|_| random_prior(&mut real_rng)).collect();
            let real = fit_from_priors(seqs, priors.clone(), &run_config, &mut real_rng)?;
            best_real = best_real.max(real.sum_log_likelihood);

            let mut shuffle_rng = stream(
                config.rng_seed,
                &[tag::PERM_SHUFFLE, k as u64, restart as u64],
            );
            let permuted: Vec<EncodedSequence> = seqs
                .iter()
                .map(|s| permute_interior(s, &mut shuffle_rng))
                .collect();
            let mut perm_rng = stream(config.rng_seed, &coords);
            let perm_priors: Vec<MarkovChain> =
                (0..k).map(|_| random_prior(&mut perm_rng)).collect();
            debug_assert_eq!(priors, perm_priors);
            let perm = fit_from_priors(&permuted, perm_priors, &run_config, &mut perm_rng)?;
            best_permuted = best_permuted.max(perm.sum_log_likelihood);
        }
        points.push(PermutationPoint {
            k,
            sum_log_likelihood_real: best_real,
            sum_log_likelihood_permuted: best_permuted,
        });
    }
    points.sort_by_key(|p| p.k);
    Ok(points)
}

/// Per-chain sequence count and mean interior length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    pub n_sequences: usize,
    /// Mean number of actions per assigned session (Start/End excluded);
    /// 0 for an empty chain.
    pub mean_length: f64,
}

/// Counts sequences and mean interior lengths per chain.
pub fn chain_stats(
    seqs: &[EncodedSequence],
    assignments: &[usize],
    k: usize,
) -> Result<Vec<ChainStats>> {
    if seqs.len() != assignments.len() {
        return Err(Error::LengthMismatch {
            estimated: assignments.len(),
            truth: seqs.len(),
        });
    }
    let mut counts = vec![0usize; k];
    let mut lengths = vec![0usize; k];
    for (seq, &a) in seqs.iter().zip(assignments) {
        if a >= k {
            return Err(Error::InvalidConfig(format!(
                "assignment index {a} out of range for k = {k}"
            )));
        }
        counts[a] += 1;
        lengths[a] += seq.interior().len();
    }
    Ok((0..k)
        .map(|chain| ChainStats {
            chain,
            n_sequences: counts[chain],
            mean_length: if counts[chain] == 0 {
                0.0
            } else {
                lengths[chain] as f64 / counts[chain] as f64
            },
        })
        .collect())
}

/// A student's distribution over the fitted chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub student_id: String,
    pub counts: Vec<u64>,
    pub distribution: Vec<f64>,
    /// Number of chains the student has at least one session in.
    pub support_size: usize,
}

/// Corpus-level moments of the profile support sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSummary {
    pub n_students: usize,
    pub mean_support: f64,
    pub stddev_support: f64,
}

/// Builds per-student normalized chain histograms from
/// `(student_id, chain_index)` pairs, plus the support-size moments.
/// Profiles are ordered by student id.
pub fn student_profiles(
    session_chains: &[(String, usize)],
    k: usize,
) -> Result<(Vec<StudentProfile>, SupportSummary)> {
    let mut per_student: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for (student, chain) in session_chains {
        if *chain >= k {
            return Err(Error::InvalidConfig(format!(
                "chain index {chain} out of range for k = {k}"
            )));
        }
        per_student.entry(student).or_insert_with(|| vec![0; k])[*chain] += 1;
    }
    let mut profiles = Vec::with_capacity(per_student.len());
    for (student_id, counts) in per_student {
        let total: u64 = counts.iter().sum();
        let distribution: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let support_size = counts.iter().filter(|&&c| c > 0).count();
        profiles.push(StudentProfile {
            student_id: student_id.to_string(),
            counts,
            distribution,
            support_size,
        });
    }
    let n = profiles.len();
    let summary = if n == 0 {
        SupportSummary {
            n_students: 0,
            mean_support: 0.0,
            stddev_support: 0.0,
        }
    } else {
        let mean = profiles.iter().map(|p| p.support_size as f64).sum::<f64>() / n as f64;
        let var = profiles
            .iter()
            .map(|p| (p.support_size as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        SupportSummary {
            n_students: n,
            mean_support: mean,
            stddev_support: var.sqrt(),
        }
    };
    Ok((profiles, summary))
}
