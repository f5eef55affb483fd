//! The five subcommands. Each validates its flags first (usage errors),
//! then reads inputs (I/O and data errors), and only creates the output
//! directory once the computation succeeded, so failures leave no partial
//! output.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Duration;

use markmix::cluster::{fit, k_sweep, ClusterConfig};
use markmix::eval::{average_purity, chain_stats, permutation_baseline, student_profiles};
use markmix::export::chain_to_dot;
use markmix::ingest::{corpus_stats, parse_events, sessionize as split_sessions};
use markmix::io::{
    read_model, read_sessions, read_truth_labels, write_assignments, write_chain_stats,
    write_json, write_k_sweep, write_labels, write_length_histogram, write_model,
    write_noise_summary, write_noise_sweep, write_permutation, write_profiles, write_purity,
    write_sessions, ModelFile, SessionRecord,
};
use markmix::model::EncodedSequence;
use markmix::rng::{stream, tag};
use markmix::synth::{
    label_corpus, noise_sweep_experiment, random_generator_chain, sample_corpus, SyntheticConfig,
};

use crate::manifest::ManifestBuilder;
use crate::{
    CliError, ClusterArgs, EvalArgs, ExportDotArgs, SessionizeArgs, SynthArgs,
};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn ensure_out_dir(path: &str) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(path);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Parses an inclusive `A:B` range with A >= 1 and A <= B.
fn parse_k_range(text: &str) -> Result<Vec<usize>, CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("--k-range must look like A:B, got {text:?}")))?;
    let a: usize = a
        .parse()
        .map_err(|_| usage(format!("bad k-range start {a:?}")))?;
    let b: usize = b
        .parse()
        .map_err(|_| usage(format!("bad k-range end {b:?}")))?;
    if a < 1 || a > b {
        return Err(usage(format!("k-range {text:?} must satisfy 1 <= A <= B")));
    }
    Ok((a..=b).collect())
}

fn parse_alphas(text: &str) -> Result<Vec<f64>, CliError> {
    let mut alphas = Vec::new();
    for part in text.split(',') {
        let alpha: f64 = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad alpha {part:?}")))?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(usage(format!("alpha {alpha} outside [0, 1]")));
        }
        alphas.push(alpha);
    }
    if alphas.is_empty() {
        return Err(usage("--alphas must name at least one value"));
    }
    Ok(alphas)
}

pub fn sessionize(args: SessionizeArgs) -> Result<(), CliError> {
    if args.gap_minutes < 1 {
        return Err(usage("--gap-minutes must be at least 1"));
    }
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", args.input)))?;
    let (events, report) = parse_events(std::io::BufReader::new(file), args.has_header)?;
    let sessions = split_sessions(events, Duration::minutes(args.gap_minutes));
    let stats = corpus_stats(&sessions);
    let mut records = Vec::with_capacity(sessions.len());
    for session in &sessions {
        records.push(SessionRecord {
            student_id: session.student_id.clone(),
            seq: session.encode()?,
        });
    }

    let out_dir = ensure_out_dir(&args.out_dir)?;
    let sessions_path = out_dir.join("sessions.csv");
    let stats_path = out_dir.join("corpus_stats.json");
    let hist_path = out_dir.join("length_histogram.csv");
    write_sessions(&sessions_path, &records)?;
    write_json(&stats_path, &stats)?;
    write_length_histogram(&hist_path, &stats.length_histogram)?;

    let mut manifest = ManifestBuilder::new("sessionize");
    manifest
        .flag("gap-minutes", args.gap_minutes)
        .flag("has-header", args.has_header)
        .input(&args.input)
        .output(&sessions_path)
        .output(&stats_path)
        .output(&hist_path);
    manifest.write(&out_dir)?;
    eprintln!(
        "sessionize: {} events ({} malformed) -> {} sessions",
        report.parsed, report.malformed, stats.n_sequences
    );
    Ok(())
}

fn cluster_config_from(args: &ClusterArgs, k: usize) -> ClusterConfig {
    ClusterConfig {
        k,
        restarts: args.restarts,
        convergence_fraction: args.convergence_frac,
        max_iterations: args.max_iters,
        smoothing: args.smoothing,
        rng_seed: args.seed,
    }
}

pub fn cluster(args: ClusterArgs) -> Result<(), CliError> {
    enum Mode {
        Single(usize),
        Sweep(Vec<usize>),
    }
    let mode = match (args.k, &args.k_range) {
        (Some(k), None) => {
            if k < 1 {
                return Err(usage("--k must be at least 1"));
            }
            Mode::Single(k)
        }
        (None, Some(range)) => Mode::Sweep(parse_k_range(range)?),
        (None, None) => return Err(usage("one of --k or --k-range is required")),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let probe = cluster_config_from(&args, 1);
    probe.validate()?;

    let records = read_sessions(Path::new(&args.sessions))?;
    let seqs: Vec<EncodedSequence> = records.iter().map(|r| r.seq.clone()).collect();

    let mut manifest = ManifestBuilder::new("cluster");
    manifest
        .seed(args.seed)
        .flag("restarts", args.restarts)
        .flag("convergence-frac", args.convergence_frac)
        .flag("max-iters", args.max_iters)
        .flag("smoothing", args.smoothing)
        .flag("seed", args.seed)
        .input(&args.sessions);

    match mode {
        Mode::Single(k) => {
            let config = cluster_config_from(&args, k);
            let model = fit(&seqs, &config)?;
            let out_dir = ensure_out_dir(&args.out_dir)?;
            let model_path = out_dir.join("model.json");
            let assignments_path = out_dir.join("assignments.csv");
            write_model(&model_path, &ModelFile::from_model(&model))?;
            write_assignments(&assignments_path, &seqs, &model.assignments)?;
            manifest
                .flag("k", k)
                .output(&model_path)
                .output(&assignments_path);
            manifest.write(&out_dir)?;
            eprintln!(
                "cluster: k={k}, {} sequences, sum log likelihood {:.3}",
                seqs.len(),
                model.sum_log_likelihood
            );
        }
        Mode::Sweep(k_values) => {
            let config = cluster_config_from(&args, k_values[0]);
            let points = k_sweep(&seqs, &k_values, &config)?;
            let out_dir = ensure_out_dir(&args.out_dir)?;
            let sweep_path = out_dir.join("sweep.csv");
            write_k_sweep(&sweep_path, &points)?;
            manifest
                .flag("k-range", args.k_range.as_deref().unwrap_or_default())
                .output(&sweep_path);
            manifest.write(&out_dir)?;
            eprintln!("cluster: sweep over {} k values written", points.len());
        }
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let alphas = parse_alphas(&args.alphas)?;
    let config = SyntheticConfig {
        k_true: args.k_true,
        n_sequences: args.n,
        end_probability: args.end_prob,
        alpha: 0.0,
        repetitions: args.reps,
        rng_seed: args.seed,
    };
    config.validate()?;

    // The written corpus is repetition 0 of the sweep, so its labels match
    // the first sweep row's experiment exactly.
    let mut corpus_rng = stream(config.rng_seed, &[tag::SYNTH_CORPUS, 0]);
    let generators: Vec<_> = (0..config.k_true)
        .map(|_| random_generator_chain(&mut corpus_rng, config.end_probability))
        .collect();
    let samples = sample_corpus(&generators, config.n_sequences, &mut corpus_rng)?;
    let labelled = label_corpus(&samples, &generators)?;
    let records: Vec<SessionRecord> = labelled
        .iter()
        .map(|l| SessionRecord {
            student_id: format!("gen{}", l.generator_index),
            seq: l.seq.clone(),
        })
        .collect();
    let label_rows: Vec<(String, usize, usize)> = labelled
        .iter()
        .map(|l| {
            (
                l.seq.source_session_id().to_string(),
                l.label,
                l.generator_index,
            )
        })
        .collect();

    let sweep = noise_sweep_experiment(&config, &alphas)?;

    let out_dir = ensure_out_dir(&args.out_dir)?;
    let sessions_path = out_dir.join("sessions.csv");
    let labels_path = out_dir.join("labels.csv");
    let sweep_path = out_dir.join("noise_sweep.csv");
    let summary_path = out_dir.join("noise_sweep_summary.csv");
    write_sessions(&sessions_path, &records)?;
    write_labels(&labels_path, &label_rows)?;
    write_noise_sweep(&sweep_path, &sweep.rows)?;
    write_noise_summary(&summary_path, &sweep.summary)?;

    let mut manifest = ManifestBuilder::new("synth");
    manifest
        .seed(args.seed)
        .flag("k-true", args.k_true)
        .flag("n", args.n)
        .flag("end-prob", args.end_prob)
        .flag("alphas", &args.alphas)
        .flag("reps", args.reps)
        .flag("seed", args.seed)
        .output(&sessions_path)
        .output(&labels_path)
        .output(&sweep_path)
        .output(&summary_path);
    manifest.write(&out_dir)?;
    eprintln!(
        "synth: {} sequences from {} generators, {} sweep cells",
        args.n,
        args.k_true,
        sweep.rows.len()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let baseline_ks = if args.permutation_baseline {
        let range = args.k_range.as_deref().ok_or_else(|| {
            usage("--permutation-baseline requires --k-range")
        })?;
        Some(parse_k_range(range)?)
    } else {
        None
    };

    let model = read_model(Path::new(&args.model))?;
    let records = read_sessions(Path::new(&args.sessions))?;
    let seqs: Vec<EncodedSequence> = records.iter().map(|r| r.seq.clone()).collect();
    if seqs.is_empty() {
        return Err(CliError::Data("sessions file holds no sequences".into()));
    }

    let assignments = markmix::cluster::assign_step(&seqs, &model.chains)?;
    let indices: Vec<usize> = assignments.iter().map(|a| a.chain_index).collect();

    let mut manifest = ManifestBuilder::new("eval");
    manifest
        .seed(args.seed)
        .flag("profiles", args.profiles)
        .flag("permutation-baseline", args.permutation_baseline)
        .flag("restarts", args.restarts)
        .flag("convergence-frac", args.convergence_frac)
        .flag("max-iters", args.max_iters)
        .flag("smoothing", args.smoothing)
        .flag("seed", args.seed)
        .input(&args.model)
        .input(&args.sessions);

    let stats = chain_stats(&seqs, &indices, model.k)?;

    let profile_report = if args.profiles {
        let pairs: Vec<(String, usize)> = records
            .iter()
            .zip(&indices)
            .map(|(r, &chain)| (r.student_id.clone(), chain))
            .collect();
        Some(student_profiles(&pairs, model.k)?)
    } else {
        None
    };

    let purity_report = if let Some(truth_path) = &args.truth {
        let truth_labels = read_truth_labels(Path::new(truth_path))?;
        let by_session: std::collections::BTreeMap<&str, usize> = truth_labels
            .iter()
            .map(|(id, label)| (id.as_str(), *label))
            .collect();
        let mut truth = Vec::with_capacity(seqs.len());
        for seq in &seqs {
            let label = by_session
                .get(seq.source_session_id())
                .copied()
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "truth file has no label for session {:?}",
                        seq.source_session_id()
                    ))
                })?;
            truth.push(label);
        }
        Some(average_purity(&indices, &truth)?)
    } else {
        None
    };

    let baseline_points = if let Some(k_values) = baseline_ks {
        let config = ClusterConfig {
            k: k_values[0],
            restarts: args.restarts,
            convergence_fraction: args.convergence_frac,
            max_iterations: args.max_iters,
            smoothing: args.smoothing,
            rng_seed: args.seed,
        };
        Some(permutation_baseline(&seqs, &k_values, &config)?)
    } else {
        None
    };

    let out_dir = ensure_out_dir(&args.out_dir)?;
    let stats_csv = out_dir.join("chain_stats.csv");
    let stats_json = out_dir.join("chain_stats.json");
    write_chain_stats(&stats_csv, &stats_json, &stats)?;
    manifest.output(&stats_csv).output(&stats_json);

    if let Some((profiles, summary)) = &profile_report {
        let profiles_csv = out_dir.join("profiles.csv");
        let profiles_json = out_dir.join("profiles.json");
        write_profiles(&profiles_csv, &profiles_json, profiles, summary, model.k)?;
        manifest.output(&profiles_csv).output(&profiles_json);
    }

    if let Some(report) = &purity_report {
        let purity_csv = out_dir.join("purity.csv");
        let purity_json = out_dir.join("purity.json");
        write_purity(&purity_csv, &purity_json, report)?;
        manifest
            .input(args.truth.as_deref().unwrap_or_default())
            .output(&purity_csv)
            .output(&purity_json);
    }

    if let Some(points) = &baseline_points {
        let perm_csv = out_dir.join("permutation.csv");
        let perm_json = out_dir.join("permutation.json");
        write_permutation(&perm_csv, &perm_json, points)?;
        manifest
            .flag("k-range", args.k_range.as_deref().unwrap_or_default())
            .output(&perm_csv)
            .output(&perm_json);
    }

    manifest.write(&out_dir)?;
    eprintln!("eval: {} sequences against k={} model", seqs.len(), model.k);
    Ok(())
}

pub fn export_dot(args: ExportDotArgs) -> Result<(), CliError> {
    if !(args.coverage > 0.0 && args.coverage <= 1.0) {
        return Err(usage("--coverage must lie in (0, 1]"));
    }
    let model = read_model(Path::new(&args.model))?;
    let mut rendered = Vec::with_capacity(model.chains.len());
    for (i, chain) in model.chains.iter().enumerate() {
        let name = format!("chain_{i}");
        rendered.push((format!("{name}.dot"), chain_to_dot(chain, &name, args.coverage)?));
    }

    let out_dir = ensure_out_dir(&args.out_dir)?;
    let mut manifest = ManifestBuilder::new("export-dot");
    manifest.flag("coverage", args.coverage).input(&args.model);
    for (file_name, dot) in &rendered {
        let path = out_dir.join(file_name);
        fs::write(&path, dot)?;
        manifest.output(&path);
    }
    manifest.write(&out_dir)?;
    eprintln!("export-dot: {} chains written", rendered.len());
    Ok(())
}
