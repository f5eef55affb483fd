//! The 8-state session model: states, sequence encoding, transition chains,
//! and log-likelihood computations.
//!
//! A session is a path `S -> a_1 -> ... -> a_n -> E` where each interior
//! state records the action kind (lesson / right answer / wrong answer) and
//! whether the action changed topic relative to the previous one. All
//! likelihoods are computed in log space; sessions run to hundreds of
//! actions and raw products underflow.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of states in the model.
pub const NUM_STATES: usize = 8;

/// One state of the session model.
///
/// Serialized labels follow the usual abbreviations: `S`, `L`, `Qr`, `Qw`,
/// `L_c`, `Qr_c`, `Qw_c`, `E`. The `_c` variants mark an action whose topic
/// differs from the previous action's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Start,
    Lesson,
    RightAnswer,
    WrongAnswer,
    LessonTopicChange,
    RightAnswerTopicChange,
    WrongAnswerTopicChange,
    End,
}

/// All states in canonical index order.
pub const ALL_STATES: [State; NUM_STATES] = [
    State::Start,
    State::Lesson,
    State::RightAnswer,
    State::WrongAnswer,
    State::LessonTopicChange,
    State::RightAnswerTopicChange,
    State::WrongAnswerTopicChange,
    State::End,
];

impl State {
    /// Canonical matrix index (Start = 0, End = 7).
    pub fn index(self) -> usize {
        match self {
            State::Start => 0,
            State::Lesson => 1,
            State::RightAnswer => 2,
            State::WrongAnswer => 3,
            State::LessonTopicChange => 4,
            State::RightAnswerTopicChange => 5,
            State::WrongAnswerTopicChange => 6,
            State::End => 7,
        }
    }

    pub fn from_index(i: usize) -> Option<State> {
        ALL_STATES.get(i).copied()
    }

    /// Display / file-format abbreviation.
    pub fn label(self) -> &'static str {
        match self {
            State::Start => "S",
            State::Lesson => "L",
            State::RightAnswer => "Qr",
            State::WrongAnswer => "Qw",
            State::LessonTopicChange => "L_c",
            State::RightAnswerTopicChange => "Qr_c",
            State::WrongAnswerTopicChange => "Qw_c",
            State::End => "E",
        }
    }

    pub fn from_label(s: &str) -> Option<State> {
        ALL_STATES.iter().copied().find(|st| st.label() == s)
    }

    /// True for the six interior states (not Start, not End).
    pub fn is_action(self) -> bool {
        !matches!(self, State::Start | State::End)
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Whether the model has a `from -> to` edge.
///
/// End is absorbing, Start has no incoming edges and no direct edge to End
/// (a session holds at least one action). Start reaches every action state;
/// every action state reaches every action state (self-loops included) and
/// End. 48 edges in total.
pub fn edge_allowed(from: State, to: State) -> bool {
    if to == State::Start || from == State::End {
        return false;
    }
    if from == State::Start {
        return to != State::End;
    }
    true
}

/// The allowed `(from, to)` pairs in canonical order.
pub fn allowed_edges() -> impl Iterator<Item = (State, State)> {
    ALL_STATES.iter().flat_map(|&from| {
        ALL_STATES
            .iter()
            .filter(move |&&to| edge_allowed(from, to))
            .map(move |&to| (from, to))
    })
}

/// Number of allowed outgoing edges from `from`.
pub fn out_degree(from: State) -> usize {
    ALL_STATES.iter().filter(|&&to| edge_allowed(from, to)).count()
}

/// Kind of a raw log action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Lesson,
    Question,
}

/// One action of a session, as needed for encoding: the kind, the
/// correctness flag (questions only), and the topic id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub correct: Option<bool>,
    pub topic_id: String,
}

/// A session rendered as a state path `S, ..., E`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    states: Vec<State>,
    source_session_id: String,
}

impl EncodedSequence {
    /// Builds a sequence, validating the path invariants: starts with
    /// Start, ends with End, neither appears in the interior, and there is
    /// at least one action state.
    pub fn new(states: Vec<State>, source_session_id: impl Into<String>) -> Result<Self> {
        if states.len() < 3 {
            return Err(Error::InvalidSequence(format!(
                "path has {} states, need at least 3",
                states.len()
            )));
        }
        if states[0] != State::Start {
            return Err(Error::InvalidSequence("path does not begin with S".into()));
        }
        if *states.last().unwrap() != State::End {
            return Err(Error::InvalidSequence("path does not end with E".into()));
        }
        if states[1..states.len() - 1]
            .iter()
            .any(|s| !s.is_action())
        {
            return Err(Error::InvalidSequence(
                "S or E appears in the interior of the path".into(),
            ));
        }
        Ok(EncodedSequence {
            states,
            source_session_id: source_session_id.into(),
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// Interior (action) states, excluding Start and End.
    pub fn interior(&self) -> &[State] {
        &self.states[1..self.states.len() - 1]
    }

    /// Number of transitions `m` (states minus one).
    pub fn transition_count(&self) -> usize {
        self.states.len() - 1
    }

    pub fn source_session_id(&self) -> &str {
        &self.source_session_id
    }
}

/// Encodes a session's actions into a state path.
///
/// The first action, or any action sharing the previous action's topic, maps
/// to `L`/`Qr`/`Qw`; an action with a different topic maps to the `_c`
/// variant. Empty sessions and questions without a correctness flag are
/// rejected.
pub fn encode_session<'a, I>(actions: I, session_id: impl Into<String>) -> Result<EncodedSequence>
where
    I: IntoIterator<Item = &'a Action>,
{
    let mut states = vec![State::Start];
    let mut prev_topic: Option<&str> = None;
    for (i, action) in actions.into_iter().enumerate() {
        let changed = prev_topic.is_some_and(|t| t != action.topic_id);
        let state = match (action.kind, action.correct, changed) {
            (ActionKind::Lesson, _, false) => State::Lesson,
            (ActionKind::Lesson, _, true) => State::LessonTopicChange,
            (ActionKind::Question, Some(true), false) => State::RightAnswer,
            (ActionKind::Question, Some(true), true) => State::RightAnswerTopicChange,
            (ActionKind::Question, Some(false), false) => State::WrongAnswer,
            (ActionKind::Question, Some(false), true) => State::WrongAnswerTopicChange,
            (ActionKind::Question, None, _) => return Err(Error::MalformedAction(i)),
        };
        states.push(state);
        prev_topic = Some(&action.topic_id);
    }
    if states.len() == 1 {
        return Err(Error::EmptySession);
    }
    states.push(State::End);
    EncodedSequence::new(states, session_id)
}

/// An 8x8 row-stochastic transition structure over the model states.
///
/// Invariants: the End row is all zeros, the Start column is all zeros,
/// `[Start][End]` is zero, every other row sums to 1 within 1e-9, and all
/// entries lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "[[f64; NUM_STATES]; NUM_STATES]")]
#[serde(try_from = "[[f64; NUM_STATES]; NUM_STATES]")]
pub struct MarkovChain {
    rows: [[f64; NUM_STATES]; NUM_STATES],
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl MarkovChain {
    /// Builds a chain from a row-major matrix, validating all invariants.
    pub fn from_rows(rows: [[f64; NUM_STATES]; NUM_STATES]) -> Result<Self> {
        let end = State::End.index();
        let start = State::Start.index();
        for (i, row) in rows.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidChain(format!(
                        "entry [{i}][{j}] = {p} is outside [0, 1]"
                    )));
                }
            }
            if row[start] != 0.0 {
                return Err(Error::InvalidChain(format!(
                    "row {i} has an incoming edge to S"
                )));
            }
            if i == end {
                if row.iter().any(|&p| p != 0.0) {
                    return Err(Error::InvalidChain("E row must be all zeros".into()));
                }
            } else {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidChain(format!(
                        "row {i} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        if rows[start][end] != 0.0 {
            return Err(Error::InvalidChain("S -> E must be zero".into()));
        }
        Ok(MarkovChain { rows })
    }

    /// Builds a chain without checking the invariants. For internal
    /// construction sites that hold them by build, and for raw test
    /// fixtures.
    pub fn from_rows_unvalidated(rows: [[f64; NUM_STATES]; NUM_STATES]) -> Self {
        MarkovChain { rows }
    }

    pub fn prob(&self, from: State, to: State) -> f64 {
        self.rows[from.index()][to.index()]
    }

    pub fn rows(&self) -> &[[f64; NUM_STATES]; NUM_STATES] {
        &self.rows
    }

    /// The matrix with entries replaced by their natural logs (0 maps to
    /// negative infinity). Computed once per chain in the assignment hot
    /// path.
    pub fn log_rows(&self) -> [[f64; NUM_STATES]; NUM_STATES] {
        let mut out = [[f64::NEG_INFINITY; NUM_STATES]; NUM_STATES];
        for i in 0..NUM_STATES {
            for j in 0..NUM_STATES {
                let p = self.rows[i][j];
                out[i][j] = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
            }
        }
        out
    }
}

impl From<MarkovChain> for [[f64; NUM_STATES]; NUM_STATES] {
    fn from(c: MarkovChain) -> Self {
        c.rows
    }
}

impl TryFrom<[[f64; NUM_STATES]; NUM_STATES]> for MarkovChain {
    type Error = Error;
    fn try_from(rows: [[f64; NUM_STATES]; NUM_STATES]) -> Result<Self> {
        MarkovChain::from_rows(rows)
    }
}

/// A log likelihood value: finite and non-positive, or the negative-infinity
/// sentinel for a path traversing a zero-probability transition.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogLikelihood(f64);

impl LogLikelihood {
    pub const UNSUPPORTED: LogLikelihood = LogLikelihood(f64::NEG_INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    /// True iff the path has probability zero under the chain.
    pub fn is_unsupported(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// Log probability of `seq` under `chain`: the sum of the logs of the
/// traversed transition probabilities, or the negative-infinity sentinel if
/// any of them is zero.
pub fn log_likelihood(seq: &EncodedSequence, chain: &MarkovChain) -> LogLikelihood {
    let mut total = 0.0;
    for pair in seq.states().windows(2) {
        let p = chain.prob(pair[0], pair[1]);
        if p == 0.0 {
            return LogLikelihood::UNSUPPORTED;
        }
        total += p.ln();
    }
    LogLikelihood(total)
}

pub(crate) fn log_likelihood_from_log_rows(
    seq: &EncodedSequence,
    log_rows: &[[f64; NUM_STATES]; NUM_STATES],
) -> LogLikelihood {
    let mut total = 0.0;
    for pair in seq.states().windows(2) {
        total += log_rows[pair[0].index()][pair[1].index()];
    }
    LogLikelihood(total)
}

/// The chain index a sequence is assigned to, with the likelihood that
/// decided it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub chain_index: usize,
    pub log_likelihood: LogLikelihood,
}

impl Assignment {
    /// True iff the sequence had probability zero under every chain.
    pub fn is_unsupported(&self) -> bool {
        self.log_likelihood.is_unsupported()
    }
}

/// Index of the chain most likely to generate `seq`, smallest index on
/// ties. If the sequence is unsupported under every chain the first index
/// is returned and the assignment's likelihood stays at the sentinel.
pub fn most_likely_chain(seq: &EncodedSequence, chains: &[MarkovChain]) -> Result<Assignment> {
    if chains.is_empty() {
        return Err(Error::EmptyChainList);
    }
    let mut best = Assignment {
        chain_index: 0,
        log_likelihood: log_likelihood(seq, &chains[0]),
    };
    for (i, chain) in chains.iter().enumerate().skip(1) {
        let ll = log_likelihood(seq, chain);
        if ll > best.log_likelihood {
            best = Assignment {
                chain_index: i,
                log_likelihood: ll,
            };
        }
    }
    Ok(best)
}
