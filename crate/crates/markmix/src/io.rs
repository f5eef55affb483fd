//! Stable on-disk formats: encoded sessions, the model JSON document,
//! assignments, sweep tables, labels, and evaluation reports.
//!
//! Every format is deterministic: maps are ordered, field order is fixed by
//! the struct definitions, and floats use Rust's shortest round-trip
//! display form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterModel, KSweepPoint, ReseedEvent, RestartSummary};
use crate::eval::{ChainStats, PermutationPoint, PurityReport, StudentProfile, SupportSummary};
use crate::model::{
    allowed_edges, Assignment, EncodedSequence, MarkovChain, State, ALL_STATES,
};
use crate::synth::{NoiseSweepRow, NoiseSweepSummary};
use crate::{Error, Result};

/// Format marker in model files.
pub const MODEL_FORMAT: &str = "markmix-model";

/// One encoded session on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub student_id: String,
    pub seq: EncodedSequence,
}

#[derive(Serialize, Deserialize)]
struct SessionRow {
    session_id: String,
    student_id: String,
    /// Space-separated state labels, e.g. `S Qr Qw_c E`.
    states: String,
}

/// Writes encoded sessions as CSV (`session_id,student_id,states`).
pub fn write_sessions(path: &Path, records: &[SessionRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for record in records {
        let states = record
            .seq
            .states()
            .iter()
            .map(|s| s.label())
            .collect::<Vec<_>>()
            .join(" ");
        writer.serialize(SessionRow {
            session_id: record.seq.source_session_id().to_string(),
            student_id: record.student_id.clone(),
            states,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads encoded sessions, validating every path.
pub fn read_sessions(path: &Path) -> Result<Vec<SessionRecord>> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut records = Vec::new();
    for row in reader.deserialize() {
        let row: SessionRow = row?;
        let states = row
            .states
            .split_whitespace()
            .map(|label| {
                State::from_label(label)
                    .ok_or_else(|| Error::Format(format!("unknown state label {label:?}")))
            })
            .collect::<Result<Vec<State>>>()?;
        let seq = EncodedSequence::new(states, row.session_id)?;
        records.push(SessionRecord {
            student_id: row.student_id,
            seq,
        });
    }
    Ok(records)
}

/// Diagnostics block of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub selected_restart: usize,
    pub sum_log_likelihood: f64,
    pub iterations_run: usize,
    pub unsupported_count: usize,
    pub reassignment_history: Vec<f64>,
    pub log_likelihood_history: Vec<f64>,
    pub reseed_events: Vec<ReseedEvent>,
    pub restarts: Vec<RestartSummary>,
}

/// The model JSON document: k, config echo, the edge-set declaration, the
/// chains as 8x8 row-major arrays with state-label headers, and per-run
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: String,
    pub k: usize,
    pub state_labels: Vec<String>,
    pub edge_set: Vec<[String; 2]>,
    pub config: crate::cluster::ClusterConfig,
    pub chains: Vec<MarkovChain>,
    pub diagnostics: ModelDiagnostics,
}

impl ModelFile {
    pub fn from_model(model: &ClusterModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            k: model.config.k,
            state_labels: ALL_STATES.iter().map(|s| s.label().to_string()).collect(),
            edge_set: allowed_edges()
                .map(|(a, b)| [a.label().to_string(), b.label().to_string()])
                .collect(),
            config: model.config.clone(),
            chains: model.chains.clone(),
            diagnostics: ModelDiagnostics {
                selected_restart: model.selected_restart,
                sum_log_likelihood: model.sum_log_likelihood,
                iterations_run: model.iterations_run,
                unsupported_count: model.unsupported_count,
                reassignment_history: model.reassignment_history.clone(),
                log_likelihood_history: model.log_likelihood_history.clone(),
                reseed_events: model.reseed_events.clone(),
                restarts: model.restart_summaries.clone(),
            },
        }
    }

    /// Checks the format marker, the state labels against the canonical
    /// order, and the chain count.
    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "not a model file (format {:?})",
                self.format
            )));
        }
        let canonical: Vec<&str> = ALL_STATES.iter().map(|s| s.label()).collect();
        if self.state_labels != canonical {
            return Err(Error::Format(format!(
                "state labels {:?} do not match this tool's states {:?}",
                self.state_labels, canonical
            )));
        }
        if self.chains.len() != self.k {
            return Err(Error::Format(format!(
                "model declares k = {} but holds {} chains",
                self.k,
                self.chains.len()
            )));
        }
        Ok(())
    }
}

/// Serializes any report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_json(path, model)
}

/// Reads and validates a model file (chain invariants are checked during
/// deserialization).
pub fn read_model(path: &Path) -> Result<ModelFile> {
    let reader = BufReader::new(File::open(path)?);
    let model: ModelFile = serde_json::from_reader(reader)?;
    model.validate()?;
    Ok(model)
}

#[derive(Serialize)]
struct AssignmentRow<'a> {
    session_id: &'a str,
    chain_index: usize,
    log_likelihood: String,
}

/// Writes per-sequence assignments as CSV
/// (`session_id,chain_index,log_likelihood`); an unsupported sequence's
/// likelihood is written as `-inf`.
pub fn write_assignments(
    path: &Path,
    seqs: &[EncodedSequence],
    assignments: &[Assignment],
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for (seq, a) in seqs.iter().zip(assignments) {
        let ll = if a.is_unsupported() {
            "-inf".to_string()
        } else {
            format!("{}", a.log_likelihood.value())
        };
        writer.serialize(AssignmentRow {
            session_id: seq.source_session_id(),
            chain_index: a.chain_index,
            log_likelihood: ll,
        })?;
    }
    writer.flush()?;
    Ok(())
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_k_sweep(path: &Path, points: &[KSweepPoint]) -> Result<()> {
    write_csv_rows(path, points)
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    session_id: String,
    label: usize,
    generator_index: usize,
}

/// Writes synthetic truth labels (`session_id,label,generator_index`).
pub fn write_labels(path: &Path, rows: &[(String, usize, usize)]) -> Result<()> {
    let mapped: Vec<LabelRow> = rows
        .iter()
        .map(|(session_id, label, generator_index)| LabelRow {
            session_id: session_id.clone(),
            label: *label,
            generator_index: *generator_index,
        })
        .collect();
    write_csv_rows(path, &mapped)
}

#[derive(Deserialize)]
struct TruthRow {
    session_id: String,
    label: usize,
}

/// Reads truth labels from any CSV with `session_id` and `label` columns
/// (extra columns ignored).
pub fn read_truth_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut labels = Vec::new();
    for row in reader.deserialize() {
        let row: TruthRow = row?;
        labels.push((row.session_id, row.label));
    }
    Ok(labels)
}

pub fn write_noise_sweep(path: &Path, rows: &[NoiseSweepRow]) -> Result<()> {
    write_csv_rows(path, rows)
}

pub fn write_noise_summary(path: &Path, rows: &[NoiseSweepSummary]) -> Result<()> {
    write_csv_rows(path, rows)
}

#[derive(Serialize)]
struct PurityRow {
    cluster: usize,
    size: usize,
    best_overlap: usize,
    fraction: f64,
}

/// Purity report as CSV (one row per estimated cluster) plus JSON.
pub fn write_purity(csv_path: &Path, json_path: &Path, report: &PurityReport) -> Result<()> {
    let rows: Vec<PurityRow> = report
        .per_cluster
        .iter()
        .map(|c| PurityRow {
            cluster: c.cluster,
            size: c.size,
            best_overlap: c.best_overlap,
            fraction: c.fraction,
        })
        .collect();
    write_csv_rows(csv_path, &rows)?;
    write_json(json_path, report)
}

pub fn write_chain_stats(csv_path: &Path, json_path: &Path, stats: &[ChainStats]) -> Result<()> {
    write_csv_rows(csv_path, stats)?;
    write_json(json_path, &stats)
}

pub fn write_permutation(
    csv_path: &Path,
    json_path: &Path,
    points: &[PermutationPoint],
) -> Result<()> {
    write_csv_rows(csv_path, points)?;
    write_json(json_path, &points)
}

#[derive(Serialize)]
struct ProfileReport<'a> {
    summary: &'a SupportSummary,
    profiles: &'a [StudentProfile],
}

/// Profiles as CSV (`student_id,support_size,p_0..p_{k-1}`) plus a JSON
/// report with the support summary.
pub fn write_profiles(
    csv_path: &Path,
    json_path: &Path,
    profiles: &[StudentProfile],
    summary: &SupportSummary,
    k: usize,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
    let mut header = vec!["student_id".to_string(), "support_size".to_string()];
    header.extend((0..k).map(|i| format!("p_{i}")));
    writer.write_record(&header)?;
    for profile in profiles {
        let mut record = vec![profile.student_id.clone(), profile.support_size.to_string()];
        record.extend(profile.distribution.iter().map(|p| format!("{p}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    write_json(json_path, &ProfileReport { summary, profiles })
}

/// Histogram of session lengths as CSV (`length,count`).
pub fn write_length_histogram(
    path: &Path,
    histogram: &std::collections::BTreeMap<usize, u64>,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        length: usize,
        count: u64,
    }
    let rows: Vec<Row> = histogram
        .iter()
        .map(|(&length, &count)| Row { length, count })
        .collect();
    write_csv_rows(path, &rows)
}
