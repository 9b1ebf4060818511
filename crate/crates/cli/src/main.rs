use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsner::trainer::RunConfig;
use dsner::ErrorKind;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "dsner", version, about = "Distantly supervised span-based NER")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Annotate a corpus by gazetteer matching and write it as CoNLL.
    Label {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Conll)]
        format: InputFormat,
        /// Tab-separated `surface<TAB>type` lines.
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token-level inaccurate/incomplete rates of distant labels against gold.
    AnalyzeNoise {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        distant: PathBuf,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive a noisy distant layer from a gold corpus.
    InjectNoise {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
        /// Per-type drop-rate factor, e.g. `ORG=2`. Repeatable.
        #[arg(long = "drop-multiplier", value_parser = parse_multiplier)]
        drop_multipliers: Vec<(String, f64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a gold-annotated synthetic corpus with four entity types.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on a distantly labeled CoNLL corpus.
    Train {
        /// Distantly labeled training corpus.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Gold-labeled corpus for model selection.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Directory for the checkpoint, metrics and effective config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Cache the training entities' representations for neighbour voting.
    BuildDatastore {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entity-level precision, recall and F1 against a gold corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        datastore: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Decode entities in raw text, one whitespace-tokenized sentence per line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Text)]
        format: InputFormat,
        #[arg(long)]
        datastore: Option<PathBuf>,
        /// JSON lines output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Conll,
    Text,
}

/// Config file plus per-key overrides.
#[derive(Args, Debug, Default, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyperparameter preset: bc5cdr, conll2003, ontonotes, webpage or ec.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_span_len: Option<usize>,
    /// Memory window.
    #[arg(long = "G")]
    window: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    alpha_prime: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `separate` or `ce`.
    #[arg(long)]
    objective: Option<String>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) -> dsner::Result<()> {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            lr => cfg.train.lr,
            batch_size => cfg.train.batch_size,
            epochs => cfg.train.epochs,
            max_span_len => cfg.train.max_span_len,
            seed => cfg.train.seed,
            window => cfg.memory.window,
            lambda => cfg.memory.lambda,
            epsilon => cfg.mixup.epsilon,
            alpha_prime => cfg.mixup.alpha_prime,
            alpha => cfg.loss.alpha,
            gamma => cfg.loss.gamma,
            tau => cfg.loss.tau,
            p => cfg.loss.p,
            q => cfg.loss.q,
            eta => cfg.loss.eta,
            mu => cfg.knn.mu,
            k => cfg.knn.k,
        }
        if let Some(obj) = &self.objective {
            cfg.train.objective = match obj.as_str() {
                "separate" => dsner::trainer::Objective::Separate,
                "ce" => dsner::trainer::Objective::Ce,
                other => return Err(dsner::Error::Config(format!("unknown objective {other:?}"))),
            };
        }
        cfg.validate()
    }
}

fn parse_multiplier(s: &str) -> Result<(String, f64), String> {
    let (ty, factor) = s
        .split_once('=')
        .ok_or_else(|| format!("expected TYPE=FACTOR, got {s:?}"))?;
    let factor: f64 = factor.parse().map_err(|e| format!("{factor:?}: {e}"))?;
    Ok((ty.to_string(), factor))
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 3,
        ErrorKind::Config => 4,
        ErrorKind::Data | ErrorKind::Model => 5,
    }
}

fn report(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind().as_str(), &e.to_string());
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
