use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use socialrec_core::data::RatingScale;
use socialrec_core::error::{Error, Result};
use socialrec_core::train::TrainConfig;

/// Everything a command needs: the training hyperparameters plus file
/// locations.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub interactions_path: Option<PathBuf>,
    pub social_path: Option<PathBuf>,
    pub workdir: PathBuf,
    /// `None` picks five-star for rating mode and implicit for ranking.
    pub rating_scale: Option<RatingScale>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            interactions_path: None,
            social_path: None,
            workdir: PathBuf::from("."),
            rating_scale: None,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "interactions_path" => self.interactions_path = path(),
            "social_path" => self.social_path = path(),
            "workdir" => self.workdir = PathBuf::from(v),
            "rating_scale" => {
                self.rating_scale = match v {
                    "" | "auto" => None,
                    "implicit" => Some(RatingScale::implicit()),
                    _ => Some(v.parse()?),
                }
            }
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    /// Apply a `key<TAB>value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected key<TAB>value".into()))?;
            self.set(k.trim(), v)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn scale(&self) -> RatingScale {
        self.rating_scale
            .clone()
            .unwrap_or_else(|| match self.train.mode {
                socialrec_core::model::Mode::Rating => RatingScale::five_star(),
                socialrec_core::model::Mode::Ranking => RatingScale::implicit(),
            })
    }

    /// The effective config, every default resolved. Feeding it back through
    /// [`RunConfig::apply_file`] reproduces the run.
    pub fn to_kv(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut s = String::new();
        let _ = writeln!(s, "interactions_path\t{}", opt(&self.interactions_path));
        let _ = writeln!(s, "social_path\t{}", opt(&self.social_path));
        let _ = writeln!(s, "workdir\t{}", self.workdir.display());
        let _ = writeln!(s, "rating_scale\t{}", self.scale());
        s.push_str(&self.train.to_kv());
        s
    }
}
