//! Synthetic evolution injection: mutate individual messages (insert, delete
//! or replace a common word) or whole sessions (remove far-from-anomaly
//! messages, repeat a message, shuffle a short span) at a controlled ratio.
//! Every run is replayable from (corpus, kind, ratio, seed) and records a
//! manifest of what changed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LogSequence, Label};
use crate::embed::{ID_SENTINEL, NUM_SENTINEL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Events,
    Sequences,
}

impl std::str::FromStr for InjectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "events" => Ok(InjectionKind::Events),
            "sequences" | "seqs" => Ok(InjectionKind::Sequences),
            other => Err(Error::Usage(format!(
                "unknown injection kind {other:?} (expected events|sequences)"
            ))),
        }
    }
}

/// One applied (or skipped) mutation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub session: String,
    /// Message index for event mutations; unused (0) for session mutations.
    pub index: usize,
    pub mutation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub kind: InjectionKind,
    pub ratio: f64,
    pub seed: u64,
    pub manifest: Vec<ManifestEntry>,
}

impl InjectionPlan {
    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for entry in &self.manifest {
            let line = serde_json::to_string(entry).map_err(|e| Error::Internal(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Usage(format!("ratio must be in (0, 1], got {ratio}")));
    }
    Ok(())
}

/// Top-100 raw words by frequency whose normalized form is not a sentinel.
fn common_words(corpus: &[LogSequence]) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seq in corpus {
        for rec in &seq.records {
            for tok in crate::embed::tokenize(&rec.body) {
                let norm = crate::embed::normalize_token(&tok).0;
                if norm == NUM_SENTINEL || norm == ID_SENTINEL {
                    continue;
                }
                *counts.entry(tok.0).or_default() += 1;
            }
        }
    }
    let mut by_freq: Vec<(String, usize)> = counts.into_iter().collect();
    // descending count, lexicographic tiebreak (BTreeMap already sorted)
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    by_freq.into_iter().take(100).map(|(w, _)| w).collect()
}

fn split_words(body: &str) -> Vec<String> {
    body.split_whitespace().map(|s| s.to_string()).collect()
}

/// Mutate a ratio-sized sample of messages, one word-level edit each. Gold
/// labels never change.
pub fn inject_events(
    corpus: &[LogSequence],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LogSequence>, InjectionPlan)> {
    check_ratio(ratio)?;
    let pool = common_words(corpus);
    if pool.is_empty() {
        return Err(Error::Data("corpus has no usable words for injection".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<(usize, usize)> = Vec::new();
    for (si, seq) in corpus.iter().enumerate() {
        for ri in 0..seq.records.len() {
            positions.push((si, ri));
        }
    }
    let n_mutate = ((ratio * positions.len() as f64).round() as usize).min(positions.len());
    positions.shuffle(&mut rng);
    let mut targets: Vec<(usize, usize)> = positions[..n_mutate].to_vec();
    targets.sort_unstable();

    let mut out = corpus.to_vec();
    let mut manifest = Vec::with_capacity(n_mutate);
    for (si, ri) in targets {
        let rec = &mut out[si].records[ri];
        let mut words = split_words(&rec.body);
        let choice = rng.gen_range(0..3u8);
        let mutation = match choice {
            0 => {
                let word = pool[rng.gen_range(0..pool.len())].clone();
                let pos = rng.gen_range(0..=words.len());
                words.insert(pos, word.clone());
                format!("insert {word:?} at {pos}")
            }
            1 if words.len() > 1 => {
                let pos = rng.gen_range(0..words.len());
                let removed = words.remove(pos);
                format!("delete {removed:?} at {pos}")
            }
            _ => {
                let word = pool[rng.gen_range(0..pool.len())].clone();
                let pos = rng.gen_range(0..words.len());
                let old = std::mem::replace(&mut words[pos], word.clone());
                format!("replace {old:?} at {pos} with {word:?}")
            }
        };
        rec.body = words.join(" ");
        manifest.push(ManifestEntry {
            session: out[si].session_id.clone(),
            index: ri,
            mutation,
        });
    }
    Ok((
        out,
        InjectionPlan {
            kind: InjectionKind::Events,
            ratio,
            seed,
            manifest,
        },
    ))
}

/// Mutate a ratio-sized sample of sessions: remove unimportant messages,
/// repeat one message, or shuffle a short span. Indices are re-normalized to
/// stay consecutive and labels move with their messages.
pub fn inject_sequences(
    corpus: &[LogSequence],
    ratio: f64,
    seed: u64,
    context_radius: usize,
) -> Result<(Vec<LogSequence>, InjectionPlan)> {
    check_ratio(ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = corpus.len();
    let n_mutate = ((ratio * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut targets: Vec<usize> = order[..n_mutate].to_vec();
    targets.sort_unstable();

    let mut out = corpus.to_vec();
    let mut manifest = Vec::new();
    for si in targets {
        let session = out[si].session_id.clone();
        let entry = mutate_session(&mut out[si], &mut rng, context_radius);
        manifest.push(ManifestEntry {
            session,
            index: 0,
            mutation: entry,
        });
    }
    Ok((
        out,
        InjectionPlan {
            kind: InjectionKind::Sequences,
            ratio,
            seed,
            manifest,
        },
    ))
}

/// Indices of normal records farther than `radius` from every anomalous one.
fn removable_indices(seq: &LogSequence, radius: usize) -> Vec<usize> {
    let anomalous: Vec<usize> = seq
        .records
        .iter()
        .filter(|r| r.is_anomalous())
        .map(|r| r.index)
        .collect();
    (0..seq.records.len())
        .filter(|&i| {
            seq.records[i].label != Some(Label::Anomalous)
                && anomalous.iter().all(|&a| i.abs_diff(a) > radius)
        })
        .collect()
}

fn renumber(seq: &mut LogSequence) {
    for (i, r) in seq.records.iter_mut().enumerate() {
        r.index = i;
    }
}

fn mutate_session(seq: &mut LogSequence, rng: &mut ChaCha8Rng, radius: usize) -> String {
    // try mutations in a random order, falling back when one does not apply
    let mut kinds = vec![0u8, 1, 2];
    kinds.shuffle(rng);
    for kind in kinds {
        match kind {
            0 => {
                // remove up to 3 normal messages far from any anomaly
                let mut removable = removable_indices(seq, radius);
                if removable.is_empty() || seq.records.len() < 4 {
                    continue;
                }
                removable.shuffle(rng);
                let count = rng.gen_range(1..=3usize).min(removable.len());
                let mut chosen: Vec<usize> = removable[..count].to_vec();
                chosen.sort_unstable_by(|a, b| b.cmp(a));
                for i in &chosen {
                    seq.records.remove(*i);
                }
                renumber(seq);
                return format!("remove {count} at {chosen:?}");
            }
            1 => {
                // repeat one message 2-4 times in place
                if seq.records.is_empty() {
                    continue;
                }
                let pos = rng.gen_range(0..seq.records.len());
                let times = rng.gen_range(2..=4usize);
                let copy = seq.records[pos].clone();
                for _ in 0..times {
                    seq.records.insert(pos, copy.clone());
                }
                renumber(seq);
                return format!("repeat index {pos} x{times}");
            }
            _ => {
                // shuffle one contiguous span of <= 6 messages
                if seq.records.len() < 3 {
                    continue;
                }
                let span = rng.gen_range(3..=6usize).min(seq.records.len());
                let start = rng.gen_range(0..=seq.records.len() - span);
                seq.records[start..start + span].shuffle(rng);
                renumber(seq);
                return format!("shuffle span [{start}..{}]", start + span);
            }
        }
    }
    "skip (no applicable mutation)".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LogRecord;

    fn mk_corpus(sessions: usize, len: usize) -> Vec<LogSequence> {
        (0..sessions)
            .map(|s| LogSequence {
                session_id: format!("s{s:03}"),
                records: (0..len)
                    .map(|i| LogRecord {
                        session_id: format!("s{s:03}"),
                        index: i,
                        body: format!("worker processed batch item number{i} of queue alpha"),
                        label: if s % 5 == 0 && i == len / 2 {
                            Some(Label::Anomalous)
                        } else {
                            Some(Label::Normal)
                        },
                    })
                    .collect(),
            })
            .collect()
    }

    fn gold(corpus: &[LogSequence]) -> Vec<(String, String)> {
        // identify anomalies by body+session so index shifts don't matter
        let mut g: Vec<(String, String)> = corpus
            .iter()
            .flat_map(|s| s.records.iter())
            .filter(|r| r.is_anomalous())
            .map(|r| (r.session_id.clone(), r.body.clone()))
            .collect();
        g.sort();
        g
    }

    #[test]
    fn ratio_zero_rejected_ratio_one_mutates_all() {
        let corpus = mk_corpus(4, 10);
        assert!(inject_events(&corpus, 0.0, 1).is_err());
        let (_, plan) = inject_events(&corpus, 1.0, 1).unwrap();
        assert_eq!(plan.manifest.len(), 40);
    }

    #[test]
    fn event_count_matches_ratio_exactly() {
        let corpus = mk_corpus(100, 10); // 1000 messages
        let (mutated, plan) = inject_events(&corpus, 0.30, 7).unwrap();
        assert_eq!(plan.manifest.len(), 300);
        // exactly the manifest's messages differ
        let mut diff = 0;
        for (a, b) in corpus.iter().zip(&mutated) {
            for (ra, rb) in a.records.iter().zip(&b.records) {
                if ra.body != rb.body {
                    diff += 1;
                }
            }
        }
        // an edit can occasionally reproduce the original (replace with the
        // same word), so diff <= manifest length
        assert!(diff <= 300 && diff > 250, "diff = {diff}");
    }

    #[test]
    fn events_preserve_labels() {
        let corpus = mk_corpus(20, 10);
        let (mutated, _) = inject_events(&corpus, 0.5, 3).unwrap();
        for (a, b) in corpus.iter().zip(&mutated) {
            for (ra, rb) in a.records.iter().zip(&b.records) {
                assert_eq!(ra.label, rb.label);
            }
        }
    }

    #[test]
    fn events_replay_deterministic() {
        let corpus = mk_corpus(10, 8);
        let (m1, p1) = inject_events(&corpus, 0.25, 99).unwrap();
        let (m2, p2) = inject_events(&corpus, 0.25, 99).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(p1.manifest.len(), p2.manifest.len());
    }

    #[test]
    fn sequences_preserve_anomaly_count_and_indices() {
        let corpus = mk_corpus(40, 12);
        let before = gold(&corpus);
        let (mutated, plan) = inject_sequences(&corpus, 0.5, 11, 2).unwrap();
        assert_eq!(plan.manifest.len(), 20);
        assert_eq!(gold(&mutated), before);
        for seq in &mutated {
            for (i, r) in seq.records.iter().enumerate() {
                assert_eq!(r.index, i, "indices re-normalized");
            }
        }
    }

    #[test]
    fn removal_respects_anomaly_distance() {
        // audit: every removed message was farther than radius from anomalies
        let corpus = mk_corpus(50, 12);
        let radius = 2;
        let (mutated, plan) = inject_sequences(&corpus, 1.0, 5, radius).unwrap();
        for entry in plan.manifest.iter().filter(|e| e.mutation.starts_with("remove")) {
            let orig = corpus.iter().find(|s| s.session_id == entry.session).unwrap();
            let new = mutated.iter().find(|s| s.session_id == entry.session).unwrap();
            // brute-force distance check: removed bodies (by multiset diff)
            // must all have lived far from anomalies in the original
            let anomalies: Vec<usize> = orig
                .records
                .iter()
                .filter(|r| r.is_anomalous())
                .map(|r| r.index)
                .collect();
            let mut new_bodies: Vec<&str> =
                new.records.iter().map(|r| r.body.as_str()).collect();
            for r in &orig.records {
                if let Some(pos) = new_bodies.iter().position(|b| *b == r.body) {
                    new_bodies.remove(pos);
                } else {
                    assert!(
                        anomalies.iter().all(|&a| r.index.abs_diff(a) > radius),
                        "removed {:?} within radius of an anomaly",
                        r.body
                    );
                }
            }
        }
    }

    #[test]
    fn shuffle_keeps_multiset() {
        let corpus = mk_corpus(10, 6);
        let (mutated, _) = inject_sequences(&corpus, 1.0, 21, 2).unwrap();
        for (a, b) in corpus.iter().zip(&mutated) {
            let mut ba: Vec<&str> = a.records.iter().map(|r| r.body.as_str()).collect();
            let mut bb: Vec<&str> = b.records.iter().map(|r| r.body.as_str()).collect();
            ba.sort_unstable();
            bb.sort_unstable();
            // removal and repeat change counts; shuffle alone must not
            if a.records.len() == b.records.len() {
                assert_eq!(ba, bb);
            }
        }
    }
}
