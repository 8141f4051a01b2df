//! The recommendation network.
//!
//! Per target `(user, item, time)`: interaction embeddings of the pre-`time`
//! history feed an LSTM (dynamic representation) and an edge-aware attention
//! (static representation); their Hadamard product is the interactional
//! representation. The same pathway runs for sampled social neighbours of the
//! user and correlated neighbours of the item, which are pooled by a second
//! attention (relational representation). Both are fused by a perceptron per
//! side and a three-layer head produces the score.

pub mod blocks;
mod checkpoint;
mod forward;
mod params;
mod trace;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use forward::{forward, ForwardConfig, ForwardOutput, Graphs, Target};
pub use params::{Attention, Linear, Lstm, LstmLayer, Mlp, ModelDims, ModelParams};
pub use trace::{export_attention, AttentionBlock, AttentionTrace, TargetTrace};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

/// Rating regression (MSE) or click-probability ranking (cross-entropy).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Rating,
    Ranking,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rating => "rating",
            Mode::Ranking => "ranking",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rating" => Ok(Mode::Rating),
            "ranking" => Ok(Mode::Ranking),
            other => Err(Error::Validation(format!(
                "unknown mode '{other}' (expected rating or ranking)"
            ))),
        }
    }
}

/// Switches for the model variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationConfig {
    pub use_lstm: bool,
    pub use_att: bool,
    pub use_social: bool,
    pub use_correlative: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

impl AblationConfig {
    pub const FULL: AblationConfig = AblationConfig {
        use_lstm: true,
        use_att: true,
        use_social: true,
        use_correlative: true,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.use_lstm && !self.use_att {
            return Err(Error::Validation(
                "at least one of the LSTM and attention pathways must be enabled".into(),
            ));
        }
        Ok(())
    }

    /// Canonical variant name, if the flags match one.
    pub fn name(&self) -> Option<&'static str> {
        ABLATION_NAMES
            .iter()
            .find(|(_, cfg)| cfg == self)
            .map(|(n, _)| *n)
    }
}

const ABLATION_NAMES: [(&str, AblationConfig); 6] = [
    ("full", AblationConfig::FULL),
    (
        "w/o_LSTM",
        AblationConfig {
            use_lstm: false,
            ..AblationConfig::FULL
        },
    ),
    (
        "w/o_ATT",
        AblationConfig {
            use_att: false,
            ..AblationConfig::FULL
        },
    ),
    (
        "w/o_SN",
        AblationConfig {
            use_social: false,
            ..AblationConfig::FULL
        },
    ),
    (
        "w/o_CN",
        AblationConfig {
            use_correlative: false,
            ..AblationConfig::FULL
        },
    ),
    (
        "w/o_SC",
        AblationConfig {
            use_social: false,
            use_correlative: false,
            ..AblationConfig::FULL
        },
    ),
];

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ABLATION_NAMES
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(s))
            .map(|(_, c)| *c)
            .ok_or_else(|| {
                let names: Vec<&str> = ABLATION_NAMES.iter().map(|(n, _)| *n).collect();
                Error::Validation(format!(
                    "unknown ablation '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}
