//! End-to-end library flow: raw log lines through sessionization, fitting,
//! evaluation, and export, plus the elbow-shape property of the k sweep.

use chrono::Duration;
use markmix::cluster::{fit, k_sweep, ClusterConfig};
use markmix::eval::{average_purity, chain_stats, corpus_log_likelihood, student_profiles};
use markmix::export::chain_to_dot;
use markmix::ingest::{corpus_stats, parse_events, sessionize};
use markmix::model::EncodedSequence;
use markmix::rng::stream;
use markmix::synth::{label_corpus, random_generator_chain, sample_corpus};

#[test]
fn raw_log_to_dot_export() {
    let mut log = String::new();
    // Two students, three sessions, mixed topics and outcomes.
    for (minute, line) in [
        "s1,2016-09-01T10:00:00Z,question,1,t1",
        "s1,2016-09-01T10:01:00Z,question,0,t1",
        "s1,2016-09-01T10:02:00Z,lesson,,t2",
        "s1,2016-09-01T11:00:00Z,question,1,t2",
        "s1,2016-09-01T11:01:00Z,question,1,t2",
        "s2,2016-09-01T10:00:00Z,lesson,,t3",
        "s2,2016-09-01T10:05:00Z,question,0,t3",
    ]
    .iter()
    .enumerate()
    {
        log.push_str(line);
        log.push('\n');
        let _ = minute;
    }
    let (events, report) = parse_events(log.as_bytes(), false).unwrap();
    assert_eq!(report.malformed, 0);
    let sessions = sessionize(events, Duration::minutes(15));
    assert_eq!(sessions.len(), 3);
    let stats = corpus_stats(&sessions);
    assert_eq!(stats.n_actions, 7);
    assert_eq!(stats.n_actions, stats.n_lessons + stats.n_correct + stats.n_wrong);

    let seqs: Vec<EncodedSequence> = sessions.iter().map(|s| s.encode().unwrap()).collect();
    let model = fit(&seqs, &ClusterConfig::new(2, 3)).unwrap();
    assert_eq!(model.assignments.len(), 3);

    let indices = model.assignment_indices();
    let stats = chain_stats(&seqs, &indices, 2).unwrap();
    assert_eq!(stats.iter().map(|s| s.n_sequences).sum::<usize>(), 3);

    let ll = corpus_log_likelihood(&seqs, &model.chains, &indices).unwrap();
    assert!((ll - model.sum_log_likelihood).abs() <= 1e-9 * ll.abs());

    let pairs: Vec<(String, usize)> = sessions
        .iter()
        .zip(&indices)
        .map(|(s, &c)| (s.student_id.clone(), c))
        .collect();
    let (profiles, summary) = student_profiles(&pairs, 2).unwrap();
    assert_eq!(profiles.len(), 2);
    assert_eq!(summary.n_students, 2);

    for (i, chain) in model.chains.iter().enumerate() {
        let dot = chain_to_dot(chain, &format!("chain_{i}"), 0.7).unwrap();
        assert!(dot.starts_with("digraph"));
    }
}

#[test]
fn recovered_clusters_match_truth_on_separated_generators() {
    let mut rng = stream(77, &[]);
    let generators: Vec<_> = (0..3)
        .map(|_| random_generator_chain(&mut rng, 0.05))
        .collect();
    let samples = sample_corpus(&generators, 2_000, &mut rng).unwrap();
    let labelled = label_corpus(&samples, &generators).unwrap();
    let seqs: Vec<EncodedSequence> = samples.iter().map(|(s, _)| s.clone()).collect();
    let labels: Vec<usize> = labelled.iter().map(|l| l.label).collect();

    let model = fit(&seqs, &ClusterConfig::new(3, 7)).unwrap();
    let purity = average_purity(&model.assignment_indices(), &labels)
        .unwrap()
        .average_purity;
    assert!(purity >= 0.9, "purity {purity}");
}

#[test]
fn best_sweep_log_likelihood_is_nondecreasing_in_k() {
    let mut rng = stream(2121, &[]);
    let generators: Vec<_> = (0..6)
        .map(|_| random_generator_chain(&mut rng, 0.05))
        .collect();
    let samples = sample_corpus(&generators, 3_000, &mut rng).unwrap();
    let seqs: Vec<EncodedSequence> = samples.into_iter().map(|(s, _)| s).collect();

    let k_values: Vec<usize> = (2..=10).collect();
    let points = k_sweep(&seqs, &k_values, &ClusterConfig::new(2, 31)).unwrap();
    assert_eq!(points.len(), 9);
    for pair in points.windows(2) {
        assert!(
            pair[1].sum_log_likelihood >= pair[0].sum_log_likelihood,
            "k={} -> k={}: {} -> {}",
            pair[0].k,
            pair[1].k,
            pair[0].sum_log_likelihood,
            pair[1].sum_log_likelihood
        );
    }
}
