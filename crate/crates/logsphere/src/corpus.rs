//! Corpus ingestion, session ordering, context windows and train/dev/test
//! splits.
//!
//! The on-disk format is JSON Lines, one record per line:
//! `{"session": string, "index": int, "body": string, "label": "normal"|"anomalous"}`
//! with `label` optional. The writer emits lines sorted by `(session, index)`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

/// One raw log message. Bodies are never parsed into templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(rename = "session")]
    pub session_id: String,
    pub index: usize,
    pub body: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl LogRecord {
    pub fn is_anomalous(&self) -> bool {
        self.label == Some(Label::Anomalous)
    }

    /// Identity of a log for set arithmetic in evaluation.
    pub fn id(&self) -> (String, usize) {
        (self.session_id.clone(), self.index)
    }
}

/// All records of one session, ordered by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSequence {
    pub session_id: String,
    pub records: Vec<LogRecord>,
}

impl LogSequence {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_anomaly(&self) -> bool {
        self.records.iter().any(|r| r.is_anomalous())
    }
}

/// A center log with its surrounding context. The context shrinks at
/// sequence boundaries and never contains the center itself.
#[derive(Debug, Clone)]
pub struct ContextWindow<'a> {
    pub center: &'a LogRecord,
    pub context: Vec<&'a LogRecord>,
    pub radius: usize,
}

/// Disjoint, exhaustive partition of a corpus at sequence granularity.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<LogSequence>,
    pub dev: Vec<LogSequence>,
    pub test: Vec<LogSequence>,
    pub seed: u64,
}

/// Load a JSON Lines corpus, grouping records into sequences by session id.
/// Sequences come back sorted by session id, records by index.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<LogSequence>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut sessions: BTreeMap<String, Vec<LogRecord>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            path: path.into(),
            line: lineno + 1,
            msg: format!("unreadable line (non-UTF-8?): {e}"),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.into(),
            line: lineno + 1,
            msg: format!("bad record: {e}"),
        })?;
        if rec.body.trim().is_empty() {
            return Err(Error::Malformed {
                path: path.into(),
                line: lineno + 1,
                msg: "empty body".into(),
            });
        }
        sessions.entry(rec.session_id.clone()).or_default().push(rec);
    }
    let mut out = Vec::with_capacity(sessions.len());
    for (session_id, mut records) in sessions {
        records.sort_by_key(|r| r.index);
        for (i, r) in records.iter().enumerate() {
            if r.index != i {
                let msg = if i > 0 && records[i - 1].index == r.index {
                    format!("duplicate index {} in session {session_id:?}", r.index)
                } else {
                    format!(
                        "gap in indices for session {session_id:?}: expected {i}, found {}",
                        r.index
                    )
                };
                return Err(Error::Data(msg));
            }
        }
        out.push(LogSequence {
            session_id,
            records,
        });
    }
    Ok(out)
}

/// Write a corpus in the canonical JSON Lines form, sorted by (session, index).
pub fn save_corpus(path: impl AsRef<Path>, corpus: &[LogSequence]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut seqs: Vec<&LogSequence> = corpus.iter().collect();
    seqs.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    for seq in seqs {
        for rec in &seq.records {
            let line = serde_json::to_string(rec).map_err(|e| Error::Internal(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Slice the context window around `center_index`: records at indices
/// `[center-radius, center+radius]` clipped to the sequence, center excluded.
pub fn window(seq: &LogSequence, center_index: usize, radius: usize) -> Result<ContextWindow<'_>> {
    if radius == 0 {
        return Err(Error::Usage("context radius must be >= 1".into()));
    }
    if center_index >= seq.records.len() {
        return Err(Error::Usage(format!(
            "center index {center_index} out of range for sequence of length {}",
            seq.records.len()
        )));
    }
    let lo = center_index.saturating_sub(radius);
    let hi = (center_index + radius).min(seq.records.len() - 1);
    let context = (lo..=hi)
        .filter(|&i| i != center_index)
        .map(|i| &seq.records[i])
        .collect();
    Ok(ContextWindow {
        center: &seq.records[center_index],
        context,
        radius,
    })
}

/// Deterministic split at sequence granularity. With `train_normal_only`,
/// sequences containing any anomalous-labeled record never land in train.
pub fn split(
    corpus: &[LogSequence],
    ratios: (f64, f64, f64),
    seed: u64,
    train_normal_only: bool,
) -> Result<Split> {
    let (rt, rd, re) = ratios;
    if rt <= 0.0 || rd <= 0.0 || re <= 0.0 || (rt + rd + re - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!(
            "split ratios must be positive and sum to 1, got ({rt}, {rd}, {re})"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Data("cannot split an empty corpus".into()));
    }
    let n = corpus.len();
    let n_train = (rt * n as f64).round() as usize;
    let n_dev = ((rd * n as f64).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let (train, rest): (Vec<usize>, Vec<usize>) = if train_normal_only {
        let normal: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| !corpus[i].has_anomaly())
            .collect();
        if normal.is_empty() {
            return Err(Error::Data(
                "train_normal_only set but every sequence contains an anomaly".into(),
            ));
        }
        let take = n_train.min(normal.len());
        let train: Vec<usize> = normal[..take].to_vec();
        let rest = order
            .iter()
            .copied()
            .filter(|i| !train.contains(i))
            .collect();
        (train, rest)
    } else {
        (order[..n_train].to_vec(), order[n_train..].to_vec())
    };

    let n_dev = n_dev.min(rest.len());
    let dev_idx = &rest[..n_dev];
    let test_idx = &rest[n_dev..];

    let pick = |idx: &[usize]| -> Vec<LogSequence> {
        let mut sorted: Vec<usize> = idx.to_vec();
        sorted.sort_unstable();
        sorted.into_iter().map(|i| corpus[i].clone()).collect()
    };
    Ok(Split {
        train: pick(&train),
        dev: pick(dev_idx),
        test: pick(test_idx),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(session: &str, index: usize, body: &str, label: Option<Label>) -> LogRecord {
        LogRecord {
            session_id: session.into(),
            index,
            body: body.into(),
            label,
        }
    }

    fn seq_of(session: &str, n: usize) -> LogSequence {
        LogSequence {
            session_id: session.into(),
            records: (0..n).map(|i| rec(session, i, &format!("msg {i}"), None)).collect(),
        }
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_groups_by_session() {
        let f = write_lines(&[
            r#"{"session":"b","index":0,"body":"x"}"#,
            r#"{"session":"a","index":1,"body":"y"}"#,
            r#"{"session":"a","index":0,"body":"z"}"#,
            r#"{"session":"a","index":2,"body":"w"}"#,
            r#"{"session":"b","index":1,"body":"v"}"#,
            r#"{"session":"b","index":2,"body":"u"}"#,
        ]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].session_id, "a");
        assert_eq!(corpus[0].len(), 3);
        assert_eq!(corpus[1].len(), 3);
        assert_eq!(corpus[0].records[0].body, "z");
    }

    #[test]
    fn load_rejects_index_gap() {
        let f = write_lines(&[
            r#"{"session":"a","index":0,"body":"x"}"#,
            r#"{"session":"a","index":1,"body":"y"}"#,
            r#"{"session":"a","index":3,"body":"z"}"#,
        ]);
        let err = load_corpus(f.path()).unwrap_err();
        assert!(err.to_string().contains("gap in indices"), "{err}");
    }

    #[test]
    fn load_rejects_duplicate_index() {
        let f = write_lines(&[
            r#"{"session":"a","index":0,"body":"x"}"#,
            r#"{"session":"a","index":0,"body":"y"}"#,
        ]);
        let err = load_corpus(f.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn load_reports_line_number_on_malformed() {
        let f = write_lines(&[r#"{"session":"a","index":0,"body":"x"}"#, "not json"]);
        let err = load_corpus(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn load_counts_gold_labels() {
        let mut lines = Vec::new();
        for i in 0..100 {
            let label = if i % 25 == 3 { r#","label":"anomalous""# } else { "" };
            lines.push(format!(
                r#"{{"session":"h","index":{i},"body":"m {i}"{label}}}"#
            ));
        }
        let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
        let f = write_lines(&refs);
        let corpus = load_corpus(f.path()).unwrap();
        let gold: usize = corpus
            .iter()
            .flat_map(|s| &s.records)
            .filter(|r| r.is_anomalous())
            .count();
        assert_eq!(gold, 4);
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let f = write_lines(&[
            r#"{"session":"a","index":0,"body":"x"}"#,
            r#"{"session":"a","index":1,"body":"y","label":"anomalous"}"#,
            r#"{"session":"b","index":0,"body":"z","label":"normal"}"#,
        ]);
        let corpus = load_corpus(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(out.path(), &corpus).unwrap();
        let bytes1 = std::fs::read(out.path()).unwrap();
        let corpus2 = load_corpus(out.path()).unwrap();
        let out2 = tempfile::NamedTempFile::new().unwrap();
        save_corpus(out2.path(), &corpus2).unwrap();
        assert_eq!(bytes1, std::fs::read(out2.path()).unwrap());
    }

    #[test]
    fn window_interior() {
        let s = seq_of("a", 10);
        let w = window(&s, 5, 2).unwrap();
        let idx: Vec<usize> = w.context.iter().map(|r| r.index).collect();
        assert_eq!(idx, vec![3, 4, 6, 7]);
    }

    #[test]
    fn window_boundary_shrinks() {
        let s = seq_of("a", 10);
        let w = window(&s, 0, 3).unwrap();
        let idx: Vec<usize> = w.context.iter().map(|r| r.index).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn window_degenerate_single_log() {
        let s = seq_of("a", 1);
        let w = window(&s, 0, 5).unwrap();
        assert!(w.context.is_empty());
    }

    #[test]
    fn window_center_out_of_range() {
        let s = seq_of("a", 3);
        assert!(window(&s, 3, 1).is_err());
    }

    #[test]
    fn split_8_1_1() {
        let corpus: Vec<LogSequence> = (0..10).map(|i| seq_of(&format!("s{i}"), 3)).collect();
        let sp = split(&corpus, (0.8, 0.1, 0.1), 7, false).unwrap();
        assert_eq!((sp.train.len(), sp.dev.len(), sp.test.len()), (8, 1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let corpus: Vec<LogSequence> = (0..10).map(|i| seq_of(&format!("s{i}"), 3)).collect();
        let a = split(&corpus, (0.8, 0.1, 0.1), 7, false).unwrap();
        let b = split(&corpus, (0.8, 0.1, 0.1), 7, false).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_excludes_anomalous_from_train() {
        let mut corpus: Vec<LogSequence> = (0..10).map(|i| seq_of(&format!("s{i}"), 3)).collect();
        for i in 0..3 {
            corpus[i].records[1].label = Some(Label::Anomalous);
        }
        let sp = split(&corpus, (0.8, 0.1, 0.1), 42, true).unwrap();
        assert!(sp.train.iter().all(|s| !s.has_anomaly()));
        // partition is disjoint and exhaustive
        let total = sp.train.len() + sp.dev.len() + sp.test.len();
        assert_eq!(total, 10);
        let mut ids: Vec<&str> = sp
            .train
            .iter()
            .chain(&sp.dev)
            .chain(&sp.test)
            .map(|s| s.session_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn split_rejects_all_anomalous() {
        let mut corpus: Vec<LogSequence> = (0..4).map(|i| seq_of(&format!("s{i}"), 2)).collect();
        for s in &mut corpus {
            s.records[0].label = Some(Label::Anomalous);
        }
        assert!(split(&corpus, (0.8, 0.1, 0.1), 1, true).is_err());
    }
}
