//! End-to-end wiring: corpus -> embed -> reduce -> discriminator -> eval,
//! plus bundle management and the experiment grid.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::RefGraph;
use crate::bundle::ModelBundle;
use crate::config::PipelineConfig;
use crate::corpus::{self, LogSequence};
use crate::discriminator::{Classification, DiscriminatorModel, FeatWindow, TrainHyper};
use crate::embed::{self, RichRepr, VectorTable};
use crate::eval::{self, LogId, Report, SweepRow};
use crate::reduce::{self, AbstractRepr, ClusterParams};
use crate::synevol::{self, InjectionKind};
use crate::{Error, Result};

/// One line of the prediction JSONL stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub session: String,
    pub index: usize,
    pub abn_uni: f64,
    pub abn_local: f64,
    pub abn_total: f64,
    pub prediction: String,
}

impl Prediction {
    pub fn is_anomalous(&self) -> bool {
        self.prediction == "anomalous"
    }
}

/// Rich vectors for every record of every sequence, aligned by position.
fn embed_sequences(seqs: &[LogSequence], table: &VectorTable) -> Result<Vec<Vec<RichRepr>>> {
    seqs.iter()
        .map(|seq| {
            seq.records
                .iter()
                .map(|r| {
                    embed::embed_body(&r.body, table).map_err(|_| {
                        Error::Data(format!(
                            "log {}:{} has no embeddable tokens: {:?}",
                            r.session_id, r.index, r.body
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

fn bits_key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Fit the abstract-representation model on the deduplicated rich vectors
/// and map every log back through its unique point. Identical messages share
/// one point, so clustering cost scales with distinct messages, not corpus
/// size.
fn fit_abstract(
    rich: &[Vec<RichRepr>],
    params: ClusterParams,
) -> Result<(reduce::ClusterModel, Vec<Vec<AbstractRepr>>)> {
    let mut unique: Vec<RichRepr> = Vec::new();
    let mut index_of: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let mut mapping: Vec<Vec<usize>> = Vec::with_capacity(rich.len());
    for seq in rich {
        let mut row = Vec::with_capacity(seq.len());
        for r in seq {
            let key = bits_key(&r.vector);
            let idx = *index_of.entry(key).or_insert_with(|| {
                unique.push(r.clone());
                unique.len() - 1
            });
            row.push(idx);
        }
        mapping.push(row);
    }
    let (model, unique_abs) = reduce::abstract_for_training(&unique, params)?;
    let abs = mapping
        .into_iter()
        .map(|row| row.into_iter().map(|i| unique_abs[i].clone()).collect())
        .collect();
    Ok((model, abs))
}

/// Context windows as feature matrices; an empty context substitutes the
/// center's own abstract representation.
fn feature_windows(
    seqs: &[LogSequence],
    rich: &[Vec<RichRepr>],
    abs: &[Vec<AbstractRepr>],
    radius: usize,
) -> Vec<(LogId, FeatWindow)> {
    let mut out = Vec::new();
    for ((seq, rich_row), abs_row) in seqs.iter().zip(rich).zip(abs) {
        let n = seq.records.len();
        for i in 0..n {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n.saturating_sub(1));
            let mut ctx: Vec<Vec<f64>> = (lo..=hi)
                .filter(|&j| j != i)
                .map(|j| abs_row[j].vector.clone())
                .collect();
            if ctx.is_empty() {
                ctx.push(abs_row[i].vector.clone());
            }
            out.push((
                (seq.session_id.clone(), seq.records[i].index),
                FeatWindow {
                    rich: rich_row[i].vector.clone(),
                    ctx,
                },
            ));
        }
    }
    out
}

fn load_table(cfg: &PipelineConfig) -> Result<VectorTable> {
    match &cfg.vectors_path {
        Some(p) => {
            let t = embed::load_vectors(p, cfg.oov_seed)?;
            if t.dimension != cfg.d_rich {
                return Err(Error::Dimension {
                    expected: cfg.d_rich,
                    got: t.dimension,
                });
            }
            Ok(t)
        }
        None => Ok(VectorTable::empty(cfg.d_rich, cfg.oov_seed)),
    }
}

/// Train the full pipeline on the corpus's training split and write a model
/// bundle. Returns the bundle for in-process use.
pub fn cmd_train(cfg: &PipelineConfig, corpus_path: &Path, bundle_dir: &Path) -> Result<ModelBundle> {
    cfg.validate()?;
    let corpus = corpus::load_corpus(corpus_path)?;
    let split = corpus::split(&corpus, cfg.split_ratios(), cfg.seed, cfg.train_normal_only)?;
    if split.train.iter().any(|s| s.has_anomaly()) {
        return Err(Error::Data(
            "training split contains anomalous-labeled sequences; \
             set train_normal_only or clean the corpus"
                .into(),
        ));
    }
    train_on_sequences(cfg, &split.train)
        .and_then(|bundle| {
            bundle.save(bundle_dir)?;
            Ok(bundle)
        })
        .map_err(|e| match e {
            Error::Usage(m) => Error::Usage(format!("train: {m}")),
            other => other,
        })
}

/// Train on already-selected normal sequences (no further splitting).
pub fn train_on_sequences(cfg: &PipelineConfig, train: &[LogSequence]) -> Result<ModelBundle> {
    let table = load_table(cfg)?;
    let rich = embed_sequences(train, &table)?;
    let (cluster_model, abs) = fit_abstract(
        &rich,
        ClusterParams {
            d_abs: cfg.d_abs,
            min_cluster_size: cfg.min_cluster_size,
            min_samples: cfg.min_samples,
        },
    )?;
    let windows: Vec<FeatWindow> = feature_windows(train, &rich, &abs, cfg.context_radius)
        .into_iter()
        .map(|(_, w)| w)
        .collect();
    let mut disc = DiscriminatorModel::new(
        cfg.d_rich,
        cfg.d_abs,
        cfg.hidden_dim,
        cfg.out_dim,
        cfg.lambda,
        cfg.alpha,
        cfg.leak,
        cfg.seed,
    )?;
    disc.init_centers(&windows)?;
    disc.train(
        &windows,
        &TrainHyper {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            seed: cfg.seed,
        },
    )?;
    let k = cfg.effective_threshold_factor(cfg.version_tag.as_deref());
    disc.calibrate_threshold(&windows, k)?;
    Ok(ModelBundle::new(cfg, cluster_model, table, disc))
}

/// Score a corpus with a trained bundle. `test_tag` selects the intra/inter
/// threshold factor when the config left it open.
pub fn score_corpus(bundle: &ModelBundle, corpus: &[LogSequence]) -> Result<Vec<Prediction>> {
    let rich = embed_sequences(corpus, &bundle.table)?;
    // inference-time abstraction: project, then nearest centroid within tau
    let abs: Vec<Vec<AbstractRepr>> = rich
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| {
                    bundle
                        .clusters
                        .pca
                        .project(r)
                        .map(|v| bundle.clusters.abstract_of(v))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut preds = Vec::new();
    for ((session, index), w) in feature_windows(corpus, &rich, &abs, bundle.meta.context_radius) {
        let s = bundle.disc.abn_score(&w.rich, &w.ctx)?;
        let cls = bundle.disc.classify(&s);
        preds.push(Prediction {
            session,
            index,
            abn_uni: s.abn_uni,
            abn_local: s.abn_local,
            abn_total: s.abn_total,
            prediction: match cls {
                Classification::AnomalousLog => "anomalous".to_string(),
                Classification::NormalLog => "normal".to_string(),
            },
        });
    }
    preds.sort_by(|a, b| a.session.cmp(&b.session).then(a.index.cmp(&b.index)));
    Ok(preds)
}

pub fn cmd_score(
    bundle_dir: &Path,
    corpus_path: &Path,
    out_path: &Path,
    threshold_factor: Option<f64>,
    test_tag: Option<&str>,
) -> Result<()> {
    let mut bundle = ModelBundle::load(bundle_dir)?;
    retarget_threshold(&mut bundle, threshold_factor, test_tag);
    let corpus = corpus::load_corpus(corpus_path)?;
    let preds = score_corpus(&bundle, &corpus)?;
    write_predictions(out_path, &preds)
}

/// Re-derive D from the stored R when the caller asks for a different factor
/// or scores a different software version.
fn retarget_threshold(bundle: &mut ModelBundle, factor: Option<f64>, test_tag: Option<&str>) {
    let k = match factor {
        Some(k) => k,
        None => match (&bundle.meta.version_tag, test_tag) {
            (Some(a), Some(b)) if a != b => crate::config::INTER_THRESHOLD_FACTOR,
            _ => bundle.meta.threshold_factor,
        },
    };
    bundle.disc.threshold_factor = k;
    bundle.disc.threshold = k * bundle.disc.radius_train;
    bundle.meta.threshold_factor = k;
    bundle.meta.threshold = bundle.disc.threshold;
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in preds {
        let line = serde_json::to_string(p).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.into(),
            line: lineno + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn gold_set(corpus: &[LogSequence]) -> BTreeSet<LogId> {
    corpus
        .iter()
        .flat_map(|s| s.records.iter())
        .filter(|r| r.is_anomalous())
        .map(|r| r.id())
        .collect()
}

pub fn universe_set(corpus: &[LogSequence]) -> BTreeSet<LogId> {
    corpus
        .iter()
        .flat_map(|s| s.records.iter())
        .map(|r| r.id())
        .collect()
}

/// Compare a predicted anomalous-log set against gold labels over the whole
/// corpus.
pub fn evaluate(
    pred: &BTreeSet<LogId>,
    corpus: &[LogSequence],
    config_snapshot: serde_json::Value,
    runtime_s: f64,
) -> Result<Report> {
    let universe = universe_set(corpus);
    let gold = gold_set(corpus);
    if gold.is_empty() {
        return Err(Error::Data(
            "corpus has no gold anomaly labels; metrics are undefined".into(),
        ));
    }
    let c = eval::confusion(pred, &gold, &universe)?;
    let m = eval::prf(&c);
    Ok(Report {
        confusion: c,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        degenerate: m.degenerate,
        universe_size: universe.len(),
        predicted: pred.len(),
        gold: gold.len(),
        config: config_snapshot,
        runtime_s,
    })
}

pub fn cmd_eval(predictions_path: &Path, corpus_path: &Path, out_path: Option<&Path>) -> Result<Report> {
    let start = Instant::now();
    let corpus = corpus::load_corpus(corpus_path)?;
    let preds = read_predictions(predictions_path)?;
    let pred_set: BTreeSet<LogId> = preds
        .iter()
        .filter(|p| p.is_anomalous())
        .map(|p| (p.session.clone(), p.index))
        .collect();
    let snapshot = serde_json::json!({
        "predictions": predictions_path.display().to_string(),
        "corpus": corpus_path.display().to_string(),
    });
    let report = evaluate(&pred_set, &corpus, snapshot, start.elapsed().as_secs_f64())?;
    if let Some(out) = out_path {
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(out, json).map_err(|e| Error::io(out, e))?;
    }
    Ok(report)
}

/// What does the scoring in an experiment cell.
pub enum Scorer<'a> {
    Hypersphere(&'a ModelBundle),
    RefGraph(&'a RefGraph),
}

impl Scorer<'_> {
    pub fn predict(&self, corpus: &[LogSequence]) -> Result<BTreeSet<LogId>> {
        match self {
            Scorer::Hypersphere(bundle) => Ok(score_corpus(bundle, corpus)?
                .into_iter()
                .filter(|p| p.is_anomalous())
                .map(|p| (p.session, p.index))
                .collect()),
            Scorer::RefGraph(graph) => Ok(graph.classify_corpus(corpus)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOpts {
    pub kinds: Vec<InjectionKind>,
    /// Ratios to sweep; 0 means "no injection".
    pub ratios: Vec<f64>,
    pub seed: u64,
    pub context_radius: usize,
}

impl Default for SweepOpts {
    fn default() -> Self {
        SweepOpts {
            kinds: vec![InjectionKind::Events, InjectionKind::Sequences],
            ratios: vec![0.0, 0.05, 0.10, 0.15, 0.25, 0.30],
            seed: 1,
            context_radius: 5,
        }
    }
}

/// Injection-ratio sweep: for each (kind, ratio) cell, mutate the test
/// corpus, score it, and record P/R/F1.
pub fn run_sweep(
    scorer: &Scorer,
    test_corpus: &[LogSequence],
    opts: &SweepOpts,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for kind in &opts.kinds {
        for (ri, &ratio) in opts.ratios.iter().enumerate() {
            let start = Instant::now();
            let mutated;
            let corpus: &[LogSequence] = if ratio == 0.0 {
                test_corpus
            } else {
                let cell_seed = opts
                    .seed
                    .wrapping_mul(1000)
                    .wrapping_add(ri as u64)
                    .wrapping_add(match kind {
                        InjectionKind::Events => 0,
                        InjectionKind::Sequences => 500,
                    });
                mutated = match kind {
                    InjectionKind::Events => synevol::inject_events(test_corpus, ratio, cell_seed)?.0,
                    InjectionKind::Sequences => {
                        synevol::inject_sequences(test_corpus, ratio, cell_seed, opts.context_radius)?.0
                    }
                };
                &mutated
            };
            let pred = scorer.predict(corpus)?;
            let universe = universe_set(corpus);
            let gold = gold_set(corpus);
            let c = eval::confusion(&pred, &gold, &universe)?;
            let m = eval::prf(&c);
            rows.push(SweepRow {
                kind: match kind {
                    InjectionKind::Events => "events".to_string(),
                    InjectionKind::Sequences => "seqs".to_string(),
                },
                ratio,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                runtime_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

/// Per-cluster listing of the member logs nearest the centroid, for manual
/// case-study inspection of what each cluster groups together.
pub fn cmd_inspect(bundle_dir: &Path, corpus_path: &Path, top: usize) -> Result<String> {
    let bundle = ModelBundle::load(bundle_dir)?;
    let corpus = corpus::load_corpus(corpus_path)?;
    let mut per_cluster: std::collections::BTreeMap<i32, Vec<(f64, String)>> = Default::default();
    for seq in &corpus {
        for rec in &seq.records {
            let rich = embed::embed_body(&rec.body, &bundle.table)?;
            let reduced = bundle.clusters.pca.project(&rich)?;
            let a = bundle.clusters.abstract_of(reduced.clone());
            if let Some(id) = a.cluster_id {
                let d = reduced
                    .iter()
                    .zip(&a.vector)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                per_cluster.entry(id).or_default().push((d, rec.body.clone()));
            }
        }
    }
    let mut out = String::new();
    for (id, mut members) in per_cluster {
        members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        members.dedup_by(|a, b| a.1 == b.1);
        out.push_str(&format!("cluster {id} ({} logs)\n", members.len()));
        for (d, body) in members.into_iter().take(top) {
            out.push_str(&format!("  {d:8.4}  {body}\n"));
        }
    }
    Ok(out)
}
