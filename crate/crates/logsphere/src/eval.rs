//! Per-log confusion counts, precision/recall/F1, and experiment grids
//! (train-on-A/test-on-B cells plus injection-ratio sweeps).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type LogId = (String, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any denominator was zero and the metric defaulted to 0.
    pub degenerate: bool,
}

/// Evaluation report for one experiment cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub universe_size: usize,
    pub predicted: usize,
    pub gold: usize,
    pub config: serde_json::Value,
    pub runtime_s: f64,
}

/// Set arithmetic on (session, index) identities.
pub fn confusion(
    pred: &BTreeSet<LogId>,
    gold: &BTreeSet<LogId>,
    universe: &BTreeSet<LogId>,
) -> Result<Confusion> {
    if let Some(x) = pred.iter().find(|p| !universe.contains(*p)) {
        return Err(Error::Data(format!("prediction {x:?} outside universe")));
    }
    if let Some(x) = gold.iter().find(|g| !universe.contains(*g)) {
        return Err(Error::Data(format!("gold label {x:?} outside universe")));
    }
    let tp = pred.intersection(gold).count();
    let fp = pred.len() - tp;
    let fn_ = gold.len() - tp;
    let tn = universe.len() - tp - fp - fn_;
    Ok(Confusion { tp, fp, fn_, tn })
}

/// Harmonic mean of precision and recall; 0 when the denominator vanishes.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// P = tp/(tp+fp), R = tp/(tp+fn), F1 their harmonic mean. Zero denominators
/// yield 0 with the `degenerate` flag set.
pub fn prf(c: &Confusion) -> Metrics {
    let mut degenerate = false;
    let precision = if c.tp + c.fp == 0 {
        degenerate = true;
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.tp + c.fn_ == 0 {
        degenerate = true;
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = f1_score(precision, recall);
    if precision + recall == 0.0 {
        degenerate = true;
    }
    Metrics {
        precision,
        recall,
        f1,
        degenerate,
    }
}

/// One row of an injection-sweep CSV.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub kind: String,
    pub ratio: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub runtime_s: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("kind,ratio,precision,recall,f1,runtime_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.3}\n",
            r.kind, r.ratio, r.precision, r.recall, r.f1, r.runtime_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[usize]) -> BTreeSet<LogId> {
        v.iter().map(|&i| ("s".to_string(), i)).collect()
    }

    #[test]
    fn perfect_prediction() {
        let universe = ids(&(0..100).collect::<Vec<_>>());
        let gold = ids(&[3, 17, 42, 99]);
        let c = confusion(&gold, &gold, &universe).unwrap();
        assert_eq!(
            c,
            Confusion {
                tp: 4,
                fp: 0,
                fn_: 0,
                tn: 96
            }
        );
    }

    #[test]
    fn empty_prediction() {
        let universe = ids(&(0..10).collect::<Vec<_>>());
        let gold = ids(&[1, 2]);
        let c = confusion(&BTreeSet::new(), &gold, &universe).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 2));
    }

    #[test]
    fn prediction_outside_universe_rejected() {
        let universe = ids(&[0, 1]);
        let pred = ids(&[5]);
        assert!(confusion(&pred, &BTreeSet::new(), &universe).is_err());
    }

    #[test]
    fn confusion_matches_per_log_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let universe: Vec<usize> = (0..200).collect();
            let pred: Vec<usize> = universe
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.2))
                .collect();
            let gold: Vec<usize> = universe
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.1))
                .collect();
            let c = confusion(&ids(&pred), &ids(&gold), &ids(&universe)).unwrap();
            // naive loop oracle
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for u in &universe {
                let p = pred.contains(u);
                let g = gold.contains(u);
                match (p, g) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            assert_eq!(c, Confusion { tp, fp, fn_, tn });
            assert_eq!(c.tp + c.fp + c.fn_ + c.tn, universe.len());
        }
    }

    #[test]
    fn table_style_f1_arithmetic() {
        let f1 = f1_score(0.770, 0.941);
        assert!((f1 - 0.847).abs() < 0.001, "{f1}");
    }

    #[test]
    fn degenerate_confusion_yields_zero_with_flag() {
        let m = prf(&Confusion {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 5,
        });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate);
    }

    #[test]
    fn harmonic_mean_of_equals() {
        assert!((f1_score(0.5, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let c = Confusion {
                tp: rng.gen_range(0..50),
                fp: rng.gen_range(0..50),
                fn_: rng.gen_range(0..50),
                tn: rng.gen_range(0..50),
            };
            let m = prf(&c);
            assert!(m.f1 <= 2.0 * m.precision + 1e-12);
            assert!(m.f1 <= 2.0 * m.recall + 1e-12);
            assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        }
    }
}
