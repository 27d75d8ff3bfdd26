use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use logsphere::config::PipelineConfig;
use logsphere::corpus;
use logsphere::eval::sweep_csv;
use logsphere::fixtures::{generate_corpus, SynthOpts};
use logsphere::pipeline::{self, Scorer, SweepOpts};
use logsphere::synevol::{self, InjectionKind};
use logsphere::{Error, Result};

/// Anomalous-log localization for evolving software logs.
#[derive(Parser)]
#[command(name = "logsphere", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    context_radius: Option<usize>,
    #[arg(long)]
    threshold_factor: Option<f64>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    version_tag: Option<String>,
    /// Allow anomalous-labeled sequences into the training split.
    #[arg(long)]
    allow_anomalous_train: bool,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(r) = self.context_radius {
            cfg.context_radius = r;
        }
        if let Some(k) = self.threshold_factor {
            cfg.threshold_factor = Some(k);
        }
        if let Some(v) = &self.vectors {
            cfg.vectors_path = Some(v.clone());
        }
        if let Some(t) = &self.version_tag {
            cfg.version_tag = Some(t.clone());
        }
        if self.allow_anomalous_train {
            cfg.train_normal_only = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on the corpus's normal split and write a model bundle.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a corpus with a trained bundle, emitting prediction JSONL.
    Score {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the threshold factor k in D = k*R.
        #[arg(long)]
        threshold_factor: Option<f64>,
        /// Version tag of the scored corpus (picks 0.6 when it differs from
        /// the training tag).
        #[arg(long)]
        test_tag: Option<String>,
    },
    /// Evaluate predictions against gold labels, or run an injection sweep.
    Eval {
        #[arg(long, required_unless_present = "sweep")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        /// Report JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the injection-ratio sweep instead of a single report.
        #[arg(long)]
        sweep: bool,
        #[arg(long, required_if_eq("sweep", "true"))]
        bundle: Option<PathBuf>,
        /// CSV output for the sweep.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "1")]
        sweep_seed: u64,
    },
    /// Inject synthetic evolution into a corpus.
    Inject {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value = "1")]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "5")]
        context_radius: usize,
    },
    /// Run the directed-graph reference baseline.
    Baseline {
        #[arg(long)]
        train_corpus: PathBuf,
        #[arg(long)]
        test_corpus: PathBuf,
        #[arg(long, default_value = "3")]
        lookahead: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print each cluster's member logs nearest the centroid.
    Inspect {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "5")]
        top: usize,
    },
    /// Generate a synthetic labeled corpus.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "560")]
        sessions: usize,
        #[arg(long, default_value = "0.15")]
        anomaly_frac: f64,
        #[arg(long, default_value = "4242")]
        seed: u64,
        #[arg(long, default_value = "1")]
        version: u32,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            corpus,
            bundle,
            cfg,
        } => {
            let cfg = cfg.build()?;
            let b = pipeline::cmd_train(&cfg, &corpus, &bundle)?;
            eprintln!(
                "trained: R = {:.6}, D = {:.6} (k = {})",
                b.disc.radius_train, b.disc.threshold, b.disc.threshold_factor
            );
            Ok(())
        }
        Command::Score {
            bundle,
            corpus,
            out,
            threshold_factor,
            test_tag,
        } => pipeline::cmd_score(&bundle, &corpus, &out, threshold_factor, test_tag.as_deref()),
        Command::Eval {
            predictions,
            corpus,
            out,
            sweep,
            bundle,
            csv,
            sweep_seed,
        } => {
            if sweep {
                let bundle_dir = bundle
                    .ok_or_else(|| Error::Usage("--sweep requires --bundle".into()))?;
                let b = logsphere::bundle::ModelBundle::load(&bundle_dir)?;
                let test = corpus::load_corpus(&corpus)?;
                let opts = SweepOpts {
                    seed: sweep_seed,
                    context_radius: b.meta.context_radius,
                    ..Default::default()
                };
                let rows = pipeline::run_sweep(&Scorer::Hypersphere(&b), &test, &opts)?;
                let text = sweep_csv(&rows);
                match csv {
                    Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(p, e))?,
                    None => print!("{text}"),
                }
                Ok(())
            } else {
                let preds = predictions.unwrap();
                let report = pipeline::cmd_eval(&preds, &corpus, out.as_deref())?;
                println!(
                    "P = {:.4}  R = {:.4}  F1 = {:.4}  (tp={} fp={} fn={} tn={})",
                    report.precision,
                    report.recall,
                    report.f1,
                    report.confusion.tp,
                    report.confusion.fp,
                    report.confusion.fn_,
                    report.confusion.tn
                );
                Ok(())
            }
        }
        Command::Inject {
            corpus,
            kind,
            ratio,
            seed,
            out,
            context_radius,
        } => {
            let kind: InjectionKind = kind.parse()?;
            let input = corpus::load_corpus(&corpus)?;
            let (mutated, plan) = match kind {
                InjectionKind::Events => synevol::inject_events(&input, ratio, seed)?,
                InjectionKind::Sequences => {
                    synevol::inject_sequences(&input, ratio, seed, context_radius)?
                }
            };
            corpus::save_corpus(&out, &mutated)?;
            let manifest = out.with_extension("manifest.jsonl");
            plan.save_manifest(&manifest)?;
            eprintln!(
                "injected {} mutations; manifest at {}",
                plan.manifest.len(),
                manifest.display()
            );
            Ok(())
        }
        Command::Baseline {
            train_corpus,
            test_corpus,
            lookahead,
            out,
            cfg,
        } => {
            let cfg = cfg.build()?;
            let train = corpus::load_corpus(&train_corpus)?;
            let split = corpus::split(&train, cfg.split_ratios(), cfg.seed, true)?;
            let graph = logsphere::baseline::build_graph(&split.train, lookahead)?;
            let test = corpus::load_corpus(&test_corpus)?;
            let start = std::time::Instant::now();
            let pred = graph.classify_corpus(&test);
            let snapshot = serde_json::json!({
                "baseline": "refgraph",
                "lookahead": lookahead,
                "train_corpus": train_corpus.display().to_string(),
                "test_corpus": test_corpus.display().to_string(),
            });
            let report =
                pipeline::evaluate(&pred, &test, snapshot, start.elapsed().as_secs_f64())?;
            println!(
                "refgraph: P = {:.4}  R = {:.4}  F1 = {:.4}",
                report.precision, report.recall, report.f1
            );
            if let Some(p) = out {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Internal(e.to_string()))?;
                std::fs::write(&p, json).map_err(|e| Error::io(p, e))?;
            }
            Ok(())
        }
        Command::Inspect {
            bundle,
            corpus,
            top,
        } => {
            print!("{}", pipeline::cmd_inspect(&bundle, &corpus, top)?);
            Ok(())
        }
        Command::Gen {
            out,
            sessions,
            anomaly_frac,
            seed,
            version,
        } => {
            let corpus = generate_corpus(&SynthOpts {
                sessions,
                anomaly_session_frac: anomaly_frac,
                seed,
                version,
            });
            corpus::save_corpus(&out, &corpus)?;
            let total: usize = corpus.iter().map(|s| s.len()).sum();
            eprintln!("wrote {} sessions / {} logs to {}", corpus.len(), total, out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
