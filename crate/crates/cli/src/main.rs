//! `socialrec`: prepare data, train, evaluate and export attention traces.
//!
//! Exit codes: 0 success, 1 validation, parse or I/O error, 2 training
//! divergence.

mod commands;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use socialrec_core::data::Split;
use socialrec_core::error::{Error, Result};

use run_config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "socialrec",
    version,
    about = "Social recommender: data prep, training, evaluation",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse raw files, split, and build the item correlative graph.
    #[command(args_override_self = true)]
    Prepare,
    /// Train on a prepared workdir.
    #[command(args_override_self = true)]
    Train,
    /// Score a checkpoint on one split.
    #[command(args_override_self = true)]
    Evaluate {
        #[arg(long, default_value = "test")]
        split: String,
        /// Defaults to `<workdir>/best.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the attention weights of one (user, item) prediction.
    #[command(args_override_self = true)]
    ExportAttention {
        #[arg(long)]
        user: usize,
        #[arg(long)]
        item: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `<workdir>/attention_u<user>_i<item>.tsv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Shared flags. Each config key has a flag of the same name; flags win over
/// the config file.
#[derive(Args, Debug, Default)]
struct Opts {
    /// `key<TAB>value` config file. `evaluate` and `export-attention` fall
    /// back to `<workdir>/effective_config.tsv`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<String>,
    /// Overwrite a non-empty workdir in `prepare`.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true, alias = "interactions_path")]
    interactions: Option<String>,
    #[arg(long, global = true, alias = "social_path")]
    social: Option<String>,
    /// Comma-separated rating values, `implicit`, or `auto`.
    #[arg(long, global = true, alias = "rating_scale")]
    rating_scale: Option<String>,

    /// rating | ranking
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// full | w/o_LSTM | w/o_ATT | w/o_SN | w/o_CN | w/o_SC
    #[arg(long, global = true)]
    ablation: Option<String>,
    /// Embedding width.
    #[arg(long = "d", global = true, alias = "dim")]
    d: Option<String>,
    #[arg(long, global = true, alias = "batch_size")]
    batch_size: Option<String>,
    #[arg(long, global = true, alias = "learning_rate")]
    learning_rate: Option<String>,
    #[arg(long, global = true, alias = "max_seq_len")]
    max_seq_len: Option<String>,
    #[arg(long, global = true, alias = "neighbor_sample")]
    neighbor_sample: Option<String>,
    #[arg(long, global = true, alias = "corr_k")]
    corr_k: Option<String>,
    /// A rate in [0, 1), or `auto` for the mode default.
    #[arg(long, global = true, alias = "dropout_rate")]
    dropout_rate: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    patience: Option<String>,
    #[arg(long, global = true, alias = "use_lstm")]
    use_lstm: Option<String>,
    #[arg(long, global = true, alias = "use_att")]
    use_att: Option<String>,
    #[arg(long, global = true, alias = "use_social")]
    use_social: Option<String>,
    #[arg(long, global = true, alias = "use_correlative")]
    use_correlative: Option<String>,
    /// Comma-separated cutoffs, e.g. `10,20`.
    #[arg(long = "eval-K", global = true, alias = "eval_K")]
    eval_k: Option<String>,
    #[arg(long, global = true, alias = "n_negatives")]
    n_negatives: Option<String>,
    #[arg(long, global = true, alias = "lstm_layers")]
    lstm_layers: Option<String>,
    #[arg(long, global = true)]
    shards: Option<String>,
}

impl Opts {
    /// `(key, value)` for every flag given, in application order.
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let pairs: [(&'static str, &Option<String>); 24] = [
            ("workdir", &self.workdir),
            ("interactions_path", &self.interactions),
            ("social_path", &self.social),
            ("rating_scale", &self.rating_scale),
            ("mode", &self.mode),
            ("seed", &self.seed),
            ("ablation", &self.ablation),
            ("use_lstm", &self.use_lstm),
            ("use_att", &self.use_att),
            ("use_social", &self.use_social),
            ("use_correlative", &self.use_correlative),
            ("d", &self.d),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("max_seq_len", &self.max_seq_len),
            ("neighbor_sample", &self.neighbor_sample),
            ("corr_k", &self.corr_k),
            ("dropout_rate", &self.dropout_rate),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("eval_K", &self.eval_k),
            ("n_negatives", &self.n_negatives),
            ("lstm_layers", &self.lstm_layers),
            ("shards", &self.shards),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    fn resolve(&self, fallback_to_workdir: bool) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        if let Some(w) = &self.workdir {
            rc.workdir = PathBuf::from(w);
        }
        let saved = rc.workdir.join(commands::EFFECTIVE_CONFIG_FILE);
        match &self.config {
            Some(path) => rc.apply_file(path)?,
            None if fallback_to_workdir && saved.is_file() => rc.apply_file(&saved)?,
            None => {}
        }
        for (k, v) in self.overrides() {
            rc.set(k, v)?;
        }
        Ok(rc)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare => commands::prepare(&cli.opts.resolve(false)?, cli.opts.force),
        Command::Train => commands::train(&cli.opts.resolve(false)?),
        Command::Evaluate { split, checkpoint } => {
            let split: Split = split.parse()?;
            commands::evaluate_cmd(&cli.opts.resolve(true)?, checkpoint.as_deref(), split)
        }
        Command::ExportAttention {
            user,
            item,
            checkpoint,
            out,
        } => commands::export_attention_cmd(
            &cli.opts.resolve(true)?,
            checkpoint.as_deref(),
            user,
            item,
            out.as_deref(),
        )
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Divergence { .. } => 2,
                _ => 1,
            })
        }
    }
}
