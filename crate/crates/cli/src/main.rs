use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use replybank_cli::pipeline::{self, PipelineConfig};
use replybank_cli::stages::{self, write_json, EvalOptions};
use replybank_cli::{exit_code, metrics, synth, Invalid};
use replybank_core::classifier::{unique_per_100, Calibration, TrainConfig};
use replybank_core::corpus::ContextConfig;
use replybank_core::encode::EncoderSpec;
use replybank_core::responsebank::{class_id_mapping, ResponseBank};
use replybank_core::simcluster::DEFAULT_THRESHOLD;
use replybank_service::ServiceConfig;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "replybank", version, about = "Mine reply classes from conversations and suggest replies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a corpus and write the frequent-response table.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest-neighbour candidate pairs over one or more encoders.
    Candidates {
        #[arg(long)]
        responses: PathBuf,
        /// Comma separated: tfidf, wordvec:PATH, wordvec-tfidf:PATH.
        #[arg(long, value_delimiter = ',', default_value = "tfidf")]
        encoders: Vec<EncoderSpec>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity for candidate pairs (token Jaccard unless --external).
    Score {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete-linkage clustering of the scored pairs.
    Cluster {
        /// Defaults to responses.tsv beside the pairs file.
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        /// Pair scores; token Jaccard is used when omitted.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Bank(BankCommand),
    /// Train a reply classifier on labeled examples.
    Train(TrainArgs),
    /// Accuracy, opt-out curve and diversity of a trained model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Training examples, for the majority-class baseline.
        #[arg(long)]
        train_examples: Option<PathBuf>,
        #[arg(long = "optout-curve")]
        optout_curve: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        curve_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Metrics(MetricsCommand),
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

#[derive(Subcommand)]
enum BankCommand {
    /// One class per cluster.
    Auto {
        #[arg(long)]
        clusters: PathBuf,
        /// Defaults to responses.tsv beside the clusters file.
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labeled (context, class) examples from a corpus.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Defaults to responses.tsv beside the bank file.
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        turns: usize,
        #[arg(long, default_value_t = 304)]
        tokens: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a bank from a merge-session decision log.
    Replay {
        #[arg(long)]
        clusters: PathBuf,
        /// Defaults to responses.tsv beside the clusters file.
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        decisions: PathBuf,
        /// Bank the session started from; empty when omitted.
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map class ids of an old bank onto a rebuilt one.
    Map {
        #[arg(long)]
        old: PathBuf,
        #[arg(long)]
        new: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    examples: PathBuf,
    /// Held-out examples for calibrating the opt-out threshold.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    t: f64,
    /// Coverage target for the threshold; mean confidence when omitted.
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Mean distinct suggestions per 100 draws; one suggestion per line.
    #[command(name = "unique-per-100")]
    UniquePer100 {
        #[arg(long)]
        suggestions: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pairwise precision, recall and F1 of clusters against ground truth.
    ClusterF1 {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Generate a corpus plus a `.truth.json` sidecar.
    Gen {
        #[arg(long, default_value_t = 20)]
        classes: usize,
        #[arg(long, default_value_t = 2000)]
        conversations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "REPLYBANK_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "REPLYBANK_BANK")]
    bank: PathBuf,
    #[arg(long, env = "REPLYBANK_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "REPLYBANK_RESPONSES")]
    responses: Option<PathBuf>,
    #[arg(long, env = "REPLYBANK_CLUSTERS")]
    clusters: Option<PathBuf>,
    #[arg(long, env = "REPLYBANK_CORPUS")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "REPLYBANK_DECISION_LOG_DIR")]
    decision_log_dir: Option<PathBuf>,
    /// Overrides the threshold stored in the model.
    #[arg(long, env = "REPLYBANK_THRESHOLD")]
    threshold: Option<f64>,
    #[arg(long, env = "REPLYBANK_MAX_TOKENS", default_value_t = 304)]
    max_tokens: usize,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run all stages, skipping those whose outputs are still fresh.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// TOML config; defaults apply to anything left out.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        workdir: PathBuf,
    },
    /// Print the default config.
    DefaultConfig,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn responses_or_sibling(responses: Option<PathBuf>, beside: &Path) -> PathBuf {
    responses.unwrap_or_else(|| beside.with_file_name("responses.tsv"))
}

fn truth_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".truth.json");
    PathBuf::from(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus, out } => print_json(&stages::ingest(&corpus, &out)?),
        Command::Candidates {
            responses,
            encoders,
            k,
            out,
        } => {
            let n = stages::candidates(&responses, &encoders, k, &out)?;
            tracing::info!(pairs = n, "candidate pairs written");
            Ok(())
        }
        Command::Score {
            responses,
            pairs,
            external,
            out,
        } => {
            stages::score_pairs(&responses, &pairs, external.as_deref(), &out)?;
            Ok(())
        }
        Command::Cluster {
            responses,
            pairs,
            scores,
            threshold,
            out,
        } => {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(Invalid(format!("threshold {threshold} outside (0, 1)")).into());
            }
            let responses = responses_or_sibling(responses, &pairs);
            let clusters = stages::cluster(&responses, &pairs, scores.as_deref(), threshold, &out)?;
            tracing::info!(clusters = clusters.len(), "clusters written");
            Ok(())
        }
        Command::Bank(cmd) => bank(cmd),
        Command::Train(a) => {
            let cfg = TrainConfig {
                batch_size: a.batch,
                learning_rate: a.lr,
                epochs: a.epochs,
                seed: a.seed,
                t: a.t,
            };
            let mode = a.coverage.map_or(Calibration::Mean, Calibration::Coverage);
            print_json(&stages::train(&a.examples, a.calibration.as_deref(), &a.bank, &cfg, mode, &a.out)?)
        }
        Command::Eval {
            model,
            examples,
            bank,
            train_examples,
            optout_curve,
            curve_steps,
            seed,
            out,
        } => {
            let report = stages::eval(
                &model,
                &examples,
                &EvalOptions {
                    bank: bank.as_deref(),
                    train_examples: train_examples.as_deref(),
                    curve: optout_curve.as_deref(),
                    curve_steps,
                    unique_samples: 1000,
                    seed,
                },
            )?;
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            print_json(&report)
        }
        Command::Metrics(MetricsCommand::UniquePer100 {
            suggestions,
            samples,
            seed,
        }) => {
            let text = std::fs::read_to_string(&suggestions)
                .with_context(|| format!("reading {}", suggestions.display()))?;
            let lines: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
            println!("{}", unique_per_100(&lines, samples, seed)?);
            Ok(())
        }
        Command::Metrics(MetricsCommand::ClusterF1 {
            clusters,
            responses,
            truth,
        }) => {
            let truth: synth::Truth = stages::read_json(&truth)?;
            let scores = metrics::pairwise_f1(
                &stages::load_clusters(&clusters)?,
                &stages::load_responses(&responses)?,
                &truth.labels(),
            );
            print_json(&scores)
        }
        Command::Synth(SynthCommand::Gen {
            classes,
            conversations,
            seed,
            out,
            truth,
        }) => {
            let (convs, t) =
                synth::generate(classes, conversations, seed).map_err(|e| Invalid(format!("{e:#}")))?;
            stages::write_atomic(&out, |w| synth::write_corpus(w, &convs))?;
            write_json(&truth.unwrap_or_else(|| truth_path(&out)), &t)
        }
        Command::Serve(a) => {
            let cfg = ServiceConfig {
                listen: a.listen,
                bank: a.bank,
                model: a.model,
                responses: a.responses,
                clusters: a.clusters,
                corpus: a.corpus,
                decision_log_dir: a.decision_log_dir,
                threshold_override: a.threshold,
                max_tokens: a.max_tokens,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(replybank_service::serve(cfg)).map_err(|e| anyhow::anyhow!(e))
        }
        Command::Pipeline(PipelineCommand::DefaultConfig) => {
            print!("{}", pipeline::default_config_toml());
            Ok(())
        }
        Command::Pipeline(PipelineCommand::Run { corpus, config, workdir }) => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            let report = pipeline::run(&corpus, &cfg, &workdir)?;
            for (stage, ran) in &report.stages {
                eprintln!("{stage:<10} {}", if *ran { "ran" } else { "fresh" });
            }
            print_json(&report.eval)
        }
    }
}

fn bank(cmd: BankCommand) -> Result<()> {
    match cmd {
        BankCommand::Auto { clusters, responses, out } => {
            let b = stages::bank_auto(&clusters, &responses_or_sibling(responses, &clusters), &out)?;
            tracing::info!(classes = b.len(), "bank written");
        }
        BankCommand::Extract {
            corpus,
            bank,
            responses,
            turns,
            tokens,
            out,
        } => {
            let ctx = ContextConfig {
                max_turns: turns,
                max_tokens: tokens,
            };
            let responses = responses_or_sibling(responses, &bank);
            print_json(&stages::extract(&corpus, &bank, &responses, ctx, &out)?)?;
        }
        BankCommand::Replay {
            clusters,
            responses,
            decisions,
            start,
            out,
        } => {
            let responses = responses_or_sibling(responses, &clusters);
            let b = stages::bank_replay(&clusters, &responses, start.as_deref(), &decisions, &out)?;
            tracing::info!(classes = b.len(), version = b.version, "bank written");
        }
        BankCommand::Map { old, new, out } => {
            let mapping: Vec<serde_json::Value> = class_id_mapping(&ResponseBank::load(&old)?, &ResponseBank::load(&new)?)
                .into_iter()
                .map(|(o, n)| serde_json::json!({"oldClassId": o, "newClassId": n}))
                .collect();
            write_json(&out, &mapping)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
