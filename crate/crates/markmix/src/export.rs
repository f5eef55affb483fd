//! Graphviz export of fitted chains.
//!
//! For every non-End state the outgoing edges (excluding edges into End)
//! are sorted by probability descending and emitted until their cumulative
//! mass first reaches the coverage threshold. End is handled separately:
//! its incoming edges are sorted descending and emitted until the coverage
//! fraction of the total incoming mass is reached. Edge pen width is
//! proportional to the transition probability.

use crate::model::{MarkovChain, State, ALL_STATES};
use crate::{Error, Result};

/// An edge selected for drawing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotEdge {
    pub from: State,
    pub to: State,
    pub probability: f64,
}

fn sort_desc(edges: &mut [(State, f64)]) {
    // Ties break on the canonical state order so output is deterministic.
    edges.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(a.0.index().cmp(&b.0.index()))
    });
}

/// Applies the coverage rule and returns the edges to draw, grouped as
/// (per-source selections in canonical state order, then the incoming-End
/// selection).
pub fn selected_edges(chain: &MarkovChain, coverage: f64) -> Result<Vec<DotEdge>> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidConfig("coverage must lie in (0, 1]".into()));
    }
    let mut selected = Vec::new();
    for from in ALL_STATES {
        if from == State::End {
            continue;
        }
        let mut outgoing: Vec<(State, f64)> = ALL_STATES
            .iter()
            .filter(|&&to| to != State::End)
            .map(|&to| (to, chain.prob(from, to)))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        sort_desc(&mut outgoing);
        let mut cum = 0.0;
        for (to, p) in outgoing {
            selected.push(DotEdge {
                from,
                to,
                probability: p,
            });
            cum += p;
            if cum >= coverage {
                break;
            }
        }
    }
    let mut incoming: Vec<(State, f64)> = ALL_STATES
        .iter()
        .map(|&from| (from, chain.prob(from, State::End)))
        .filter(|&(_, p)| p > 0.0)
        .collect();
    sort_desc(&mut incoming);
    // Total summed in emission order so a coverage of 1.0 reaches it
    // exactly at the last edge.
    let total: f64 = incoming.iter().map(|&(_, p)| p).sum();
    let threshold = coverage * total;
    let mut cum = 0.0;
    for (from, p) in incoming {
        selected.push(DotEdge {
            from,
            to: State::End,
            probability: p,
        });
        cum += p;
        if cum >= threshold {
            break;
        }
    }
    Ok(selected)
}

/// Renders one chain as a DOT digraph.
pub fn chain_to_dot(chain: &MarkovChain, name: &str, coverage: f64) -> Result<String> {
    let edges = selected_edges(chain, coverage)?;
    let mut out = String::new();
    out.push_str(&format!("digraph \"{name}\" {{\n"));
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=circle, fontsize=12];\n");
    for state in ALL_STATES {
        out.push_str(&format!("  \"{}\";\n", state.label()));
    }
    for edge in edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [penwidth={:.2}, label=\"{:.3}\"];\n",
            edge.from.label(),
            edge.to.label(),
            (edge.probability * 6.0).max(0.1),
            edge.probability
        ));
    }
    out.push_str("}\n");
    Ok(out)
}
