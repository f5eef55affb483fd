//! Event-log parsing, sessionization, and corpus statistics.
//!
//! Input is a line-oriented CSV of raw actions. Events are grouped per
//! student and split into sessions wherever the gap between consecutive
//! actions reaches the threshold (default 15 minutes; "less than 15
//! minutes" keeps a session together, so an exact 15:00 gap splits).

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{encode_session, Action, ActionKind, EncodedSequence};
use crate::{Error, Result};

/// Default session gap threshold in minutes.
pub const DEFAULT_GAP_MINUTES: i64 = 15;

/// One raw log record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionEvent {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub action: Action,
}

/// A maximal run of one student's events with consecutive gaps strictly
/// below the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub student_id: String,
    pub events: Vec<ActionEvent>,
    /// Per-student ordinal, 0-based.
    pub session_index: usize,
}

impl Session {
    /// Stable identifier: `<student_id>/<session_index>`.
    pub fn session_id(&self) -> String {
        format!("{}/{}", self.student_id, self.session_index)
    }

    pub fn encode(&self) -> Result<EncodedSequence> {
        encode_session(self.events.iter().map(|e| &e.action), self.session_id())
    }
}

/// Counter summary of a parse pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub total_records: usize,
    pub parsed: usize,
    pub malformed: usize,
}

/// Corpus-level statistics over sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sequences: u64,
    pub n_actions: u64,
    pub n_lessons: u64,
    pub n_correct: u64,
    pub n_wrong: u64,
    /// Session count keyed by actions per session.
    pub length_histogram: BTreeMap<usize, u64>,
    pub n_students: u64,
    pub sessions_per_student_mean: f64,
    pub sessions_per_student_stddev: f64,
}

fn parse_record(fields: &csv::StringRecord) -> std::result::Result<ActionEvent, String> {
    if fields.len() != 5 {
        return Err(format!("expected 5 columns, found {}", fields.len()));
    }
    let student_id = fields[0].to_string();
    if student_id.is_empty() {
        return Err("empty student id".into());
    }
    let timestamp = DateTime::parse_from_rfc3339(&fields[1])
        .map_err(|e| format!("bad timestamp: {e}"))?
        .with_timezone(&Utc);
    let kind = match &fields[2] {
        "lesson" => ActionKind::Lesson,
        "question" => ActionKind::Question,
        other => return Err(format!("unknown action kind {other:?}")),
    };
    let correct = match (&kind, &fields[3]) {
        (ActionKind::Lesson, "") => None,
        (ActionKind::Question, "1") => Some(true),
        (ActionKind::Question, "0") => Some(false),
        (ActionKind::Lesson, other) => {
            return Err(format!("lesson with correctness value {other:?}"))
        }
        (ActionKind::Question, other) => {
            return Err(format!("question with correctness value {other:?}"))
        }
    };
    let topic_id = fields[4].to_string();
    if topic_id.is_empty() {
        return Err("empty topic id".into());
    }
    Ok(ActionEvent {
        student_id,
        timestamp,
        action: Action {
            kind,
            correct,
            topic_id,
        },
    })
}

/// Parses events from the documented CSV format
/// (`student_id,timestamp,kind,correct,topic_id`).
///
/// Malformed lines are counted and skipped; an unreadable stream is fatal,
/// and so is a corpus where more than half of the lines are malformed.
pub fn parse_events(input: impl Read, has_header: bool) -> Result<(Vec<ActionEvent>, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(input);
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(Error::Csv(e));
                }
                report.total_records += 1;
                report.malformed += 1;
                continue;
            }
        };
        report.total_records += 1;
        match parse_record(&record) {
            Ok(event) => {
                report.parsed += 1;
                events.push(event);
            }
            Err(_) => report.malformed += 1,
        }
    }
    if report.total_records > 0 && report.malformed * 2 > report.total_records {
        return Err(Error::TooManyMalformed {
            malformed: report.malformed,
            total: report.total_records,
        });
    }
    Ok((events, report))
}

/// Splits events into sessions.
///
/// Events are grouped by student and stably sorted by timestamp (ties keep
/// input order); a new session starts whenever the gap to the previous
/// event reaches `gap`. Output is ordered by student id, then session
/// index.
pub fn sessionize(events: Vec<ActionEvent>, gap: Duration) -> Vec<Session> {
    let mut per_student: BTreeMap<String, Vec<ActionEvent>> = BTreeMap::new();
    for event in events {
        per_student
            .entry(event.student_id.clone())
            .or_default()
            .push(event);
    }
    let mut sessions = Vec::new();
    for (student_id, mut events) in per_student {
        events.sort_by_key(|e| e.timestamp);
        let mut session_index = 0;
        let mut current: Vec<ActionEvent> = Vec::new();
        for event in events {
            let split = current
                .last()
                .is_some_and(|prev| event.timestamp - prev.timestamp >= gap);
            if split {
                sessions.push(Session {
                    student_id: student_id.clone(),
                    events: std::mem::take(&mut current),
                    session_index,
                });
                session_index += 1;
            }
            current.push(event);
        }
        if !current.is_empty() {
            sessions.push(Session {
                student_id: student_id.clone(),
                events: current,
                session_index,
            });
        }
    }
    sessions
}

/// Aggregates corpus statistics over sessions.
pub fn corpus_stats(sessions: &[Session]) -> CorpusStats {
    let mut stats = CorpusStats {
        n_sequences: sessions.len() as u64,
        n_actions: 0,
        n_lessons: 0,
        n_correct: 0,
        n_wrong: 0,
        length_histogram: BTreeMap::new(),
        n_students: 0,
        sessions_per_student_mean: 0.0,
        sessions_per_student_stddev: 0.0,
    };
    let mut per_student: BTreeMap<&str, u64> = BTreeMap::new();
    for session in sessions {
        *per_student.entry(&session.student_id).or_default() += 1;
        *stats
            .length_histogram
            .entry(session.events.len())
            .or_default() += 1;
        for event in &session.events {
            stats.n_actions += 1;
            match (event.action.kind, event.action.correct) {
                (ActionKind::Lesson, _) => stats.n_lessons += 1,
                (ActionKind::Question, Some(true)) => stats.n_correct += 1,
                (ActionKind::Question, _) => stats.n_wrong += 1,
            }
        }
    }
    stats.n_students = per_student.len() as u64;
    if !per_student.is_empty() {
        let n = per_student.len() as f64;
        let mean = per_student.values().map(|&c| c as f64).sum::<f64>() / n;
        let var = per_student
            .values()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        stats.sessions_per_student_mean = mean;
        stats.sessions_per_student_stddev = var.sqrt();
    }
    stats
}
