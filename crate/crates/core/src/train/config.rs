use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{DEFAULT_CORR_K, DEFAULT_NEIGHBOR_SAMPLE};
use crate::model::{AblationConfig, ForwardConfig, Mode, ModelDims};

pub const DEFAULT_DROPOUT_RATING: f64 = 0.5;
pub const DEFAULT_DROPOUT_RANKING: f64 = 0.4;

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Embedding width.
    pub dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_seq_len: usize,
    pub neighbor_sample: usize,
    pub corr_k: usize,
    /// `None` selects the mode default.
    pub dropout_rate: Option<f64>,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub ablation: AblationConfig,
    pub eval_k: Vec<usize>,
    pub n_negatives: usize,
    pub lstm_layers: usize,
    /// Number of gradient shards per batch, computed in parallel and summed
    /// before the optimizer step.
    pub shards: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(Mode::Rating)
    }
}

impl TrainConfig {
    pub fn new(mode: Mode) -> Self {
        TrainConfig {
            mode,
            dim: 128,
            batch_size: 256,
            learning_rate: 0.001,
            max_seq_len: 30,
            neighbor_sample: DEFAULT_NEIGHBOR_SAMPLE,
            corr_k: DEFAULT_CORR_K,
            dropout_rate: None,
            epochs: 30,
            patience: 5,
            seed: 0,
            ablation: AblationConfig::FULL,
            eval_k: vec![10, 20],
            n_negatives: 100,
            lstm_layers: 1,
            shards: 1,
        }
    }

    pub fn dropout(&self) -> f64 {
        self.dropout_rate.unwrap_or(match self.mode {
            Mode::Rating => DEFAULT_DROPOUT_RATING,
            Mode::Ranking => DEFAULT_DROPOUT_RANKING,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.dim),
            ("batch_size", self.batch_size),
            ("max_seq_len", self.max_seq_len),
            ("neighbor_sample", self.neighbor_sample),
            ("corr_k", self.corr_k),
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("n_negatives", self.n_negatives),
            ("lstm_layers", self.lstm_layers),
            ("shards", self.shards),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("{k} must be positive")));
        }
        if self.dim < 2 {
            return Err(Error::Validation("d must be at least 2".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        let p = self.dropout();
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Validation(format!("dropout_rate {p} not in [0, 1)")));
        }
        if self.eval_k.is_empty() || self.eval_k.contains(&0) {
            return Err(Error::Validation(
                "eval_K must be a non-empty list of positive integers".into(),
            ));
        }
        self.ablation.validate()
    }

    pub fn dims(&self, n_users: usize, n_items: usize, n_ratings: usize) -> ModelDims {
        ModelDims {
            n_users,
            n_items,
            n_ratings,
            dim: self.dim,
            lstm_layers: self.lstm_layers,
        }
    }

    pub fn forward_config(&self, training: bool) -> ForwardConfig {
        ForwardConfig {
            mode: self.mode,
            ablation: self.ablation,
            max_seq_len: self.max_seq_len,
            neighbor_sample: self.neighbor_sample,
            dropout_rate: self.dropout(),
            training,
            record_trace: false,
        }
    }

    /// Every key this config understands.
    pub const KEYS: [&'static str; 20] = [
        "mode",
        "d",
        "batch_size",
        "learning_rate",
        "max_seq_len",
        "neighbor_sample",
        "corr_k",
        "dropout_rate",
        "epochs",
        "patience",
        "seed",
        "ablation",
        "use_lstm",
        "use_att",
        "use_social",
        "use_correlative",
        "eval_K",
        "n_negatives",
        "lstm_layers",
        "shards",
    ];

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Validation(format!("bad value '{v}' for {key}")))
        }
        match key {
            "mode" => self.mode = value.trim().parse()?,
            "d" => self.dim = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "max_seq_len" => self.max_seq_len = num(key, value)?,
            "neighbor_sample" => self.neighbor_sample = num(key, value)?,
            "corr_k" => self.corr_k = num(key, value)?,
            "dropout_rate" => {
                self.dropout_rate = match value.trim() {
                    "" | "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "epochs" => self.epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            // "custom" leaves the flags to the use_* keys
            "ablation" if value.trim() == "custom" => {}
            "ablation" => self.ablation = value.trim().parse()?,
            "use_lstm" => self.ablation.use_lstm = num(key, value)?,
            "use_att" => self.ablation.use_att = num(key, value)?,
            "use_social" => self.ablation.use_social = num(key, value)?,
            "use_correlative" => self.ablation.use_correlative = num(key, value)?,
            "eval_K" => {
                self.eval_k = value
                    .split(',')
                    .map(|k| num(key, k))
                    .collect::<Result<_>>()?
            }
            "n_negatives" => self.n_negatives = num(key, value)?,
            "lstm_layers" => self.lstm_layers = num(key, value)?,
            "shards" => self.shards = num(key, value)?,
            other => {
                return Err(Error::Validation(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// `key<TAB>value` lines with every default resolved.
    pub fn to_kv(&self) -> String {
        let a = &self.ablation;
        let k: Vec<String> = self.eval_k.iter().map(usize::to_string).collect();
        let mut s = String::new();
        let mut line = |key: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{key}\t{v}");
        };
        line("mode", &self.mode);
        line("d", &self.dim);
        line("batch_size", &self.batch_size);
        line("learning_rate", &self.learning_rate);
        line("max_seq_len", &self.max_seq_len);
        line("neighbor_sample", &self.neighbor_sample);
        line("corr_k", &self.corr_k);
        line("dropout_rate", &self.dropout());
        line("epochs", &self.epochs);
        line("patience", &self.patience);
        line("seed", &self.seed);
        line("ablation", &a.name().unwrap_or("custom"));
        line("use_lstm", &a.use_lstm);
        line("use_att", &a.use_att);
        line("use_social", &a.use_social);
        line("use_correlative", &a.use_correlative);
        line("eval_K", &k.join(","));
        line("n_negatives", &self.n_negatives);
        line("lstm_layers", &self.lstm_layers);
        line("shards", &self.shards);
        s
    }
}
