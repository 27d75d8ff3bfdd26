//! Directed-graph reference model ("refgraph"): mine allowed transitions
//! from normal sequences, flag test logs whose event key is unseen or whose
//! key never follows any of its `h` predecessors. Event keys are normalized
//! message strings, standing in for a parser's event ids; this deliberately
//! reproduces the brittleness of exact-event baselines under evolution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::LogSequence;
use crate::embed::normalized_tokens;
use crate::{Error, Result};

/// Normalized-message identity of a log event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventKey(pub String);

impl EventKey {
    pub fn of(body: &str) -> EventKey {
        let toks: Vec<String> = normalized_tokens(body).into_iter().map(|t| t.0).collect();
        EventKey(toks.join(" "))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefGraph {
    pub nodes: BTreeSet<EventKey>,
    pub edges: BTreeMap<EventKey, BTreeSet<EventKey>>,
    pub lookahead: usize,
}

/// Add edges key(i) -> key(j) for all i < j <= i+h over every training
/// sequence.
pub fn build_graph(train: &[LogSequence], h: usize) -> Result<RefGraph> {
    if h == 0 {
        return Err(Error::Usage("lookahead h must be >= 1".into()));
    }
    if train.iter().all(|s| s.is_empty()) {
        return Err(Error::Data("empty training set for the reference graph".into()));
    }
    let mut nodes = BTreeSet::new();
    let mut edges: BTreeMap<EventKey, BTreeSet<EventKey>> = BTreeMap::new();
    for seq in train {
        let keys: Vec<EventKey> = seq.records.iter().map(|r| EventKey::of(&r.body)).collect();
        for k in &keys {
            nodes.insert(k.clone());
        }
        for i in 0..keys.len() {
            for j in (i + 1)..keys.len().min(i + h + 1) {
                edges
                    .entry(keys[i].clone())
                    .or_default()
                    .insert(keys[j].clone());
            }
        }
    }
    Ok(RefGraph {
        nodes,
        edges,
        lookahead: h,
    })
}

impl RefGraph {
    fn allows(&self, prev: &EventKey, cur: &EventKey) -> bool {
        self.edges.get(prev).is_some_and(|s| s.contains(cur))
    }

    /// Flagged (session_id, index) pairs for one sequence. A log is flagged
    /// when its key is not a node, or when no key among the previous `h`
    /// positions allows it as a successor. The first log of a session checks
    /// node membership only.
    pub fn classify(&self, seq: &LogSequence) -> Vec<(String, usize)> {
        let keys: Vec<EventKey> = seq.records.iter().map(|r| EventKey::of(&r.body)).collect();
        let mut flagged = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            let anomalous = if !self.nodes.contains(key) {
                true
            } else if i == 0 {
                false
            } else {
                let lo = i.saturating_sub(self.lookahead);
                !(lo..i).any(|p| self.allows(&keys[p], key))
            };
            if anomalous {
                flagged.push((seq.session_id.clone(), seq.records[i].index));
            }
        }
        flagged
    }

    /// Flagged set over a whole corpus.
    pub fn classify_corpus(&self, corpus: &[LogSequence]) -> BTreeSet<(String, usize)> {
        corpus.iter().flat_map(|s| self.classify(s)).collect()
    }
}
