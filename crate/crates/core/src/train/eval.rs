use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use super::metrics::{mae, mrr_at, ndcg_at, rmse, target_rank};
use super::{stream_rng, TrainConfig, TAG_EVAL};
use crate::data::{read_kv, write_file, Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::CorrelativeGraph;
use crate::model::{forward, Graphs, Mode, ModelParams, Target};
use crate::tensor::Tape;

pub const REPORT_FILE: &str = "report.tsv";
pub const LOSS_CURVE_FILE: &str = "loss_curve.tsv";
pub const TIMING_FILE: &str = "timing.tsv";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation RMSE (rating) or NDCG@10 (ranking).
    pub val_metric: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub events: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingOutcome {
    /// 1-based rank of the true item, one per evaluated event.
    pub ranks: Vec<usize>,
    /// Events dropped because the user had interacted with every item.
    pub skipped: usize,
}

fn split_tag(split: Split) -> u64 {
    split as u64
}

fn check_dims(params: &ModelParams, dataset: &Dataset) -> Result<()> {
    let d = &params.dims;
    if d.n_users != dataset.n_users
        || d.n_items != dataset.n_items
        || d.n_ratings != dataset.rating_scale.len()
    {
        return Err(Error::Validation(format!(
            "model was built for {} users / {} items / {} rating levels, dataset has {} / {} / {}",
            d.n_users,
            d.n_items,
            d.n_ratings,
            dataset.n_users,
            dataset.n_items,
            dataset.rating_scale.len()
        )));
    }
    Ok(())
}

/// RMSE and MAE of scale-clamped predictions on `split`.
pub fn evaluate_rating(
    params: &ModelParams,
    dataset: &Dataset,
    corr: &CorrelativeGraph,
    cfg: &TrainConfig,
    split: Split,
) -> Result<RatingMetrics> {
    check_dims(params, dataset)?;
    let records = dataset.records(split);
    if records.is_empty() {
        return Err(Error::Domain(format!("{split} split is empty")));
    }
    let graphs = Graphs::new(dataset, corr);
    let mut fcfg = cfg.forward_config(false);
    fcfg.mode = Mode::Rating;
    let (lo, hi) = (dataset.rating_scale.min(), dataset.rating_scale.max());
    let chunks: Vec<Vec<f64>> = records
        .par_chunks(cfg.batch_size)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = stream_rng(cfg.seed, &[TAG_EVAL, split_tag(split), c as u64]);
            let targets: Vec<Target> = chunk
                .iter()
                .map(|r| Target {
                    user: r.user,
                    item: r.item,
                    time: r.timestamp,
                })
                .collect();
            let mut tape = Tape::new();
            let out = forward(&mut tape, params, &graphs, &targets, &fcfg, &mut rng)?;
            Ok(tape
                .value(out.predictions)
                .data()
                .iter()
                .map(|p| p.clamp(lo, hi))
                .collect())
        })
        .collect::<Result<_>>()?;
    let pred: Vec<f64> = chunks.into_iter().flatten().collect();
    let truth: Vec<f64> = records.iter().map(|r| r.rating as f64).collect();
    Ok(RatingMetrics {
        rmse: rmse(&pred, &truth)?,
        mae: mae(&pred, &truth)?,
        events: pred.len(),
    })
}

/// Rank of each true item among itself and up to `n_negatives` items the
/// user never interacted with (in any split), sampled uniformly.
pub fn evaluate_ranking(
    params: &ModelParams,
    dataset: &Dataset,
    corr: &CorrelativeGraph,
    cfg: &TrainConfig,
    split: Split,
) -> Result<RankingOutcome> {
    check_dims(params, dataset)?;
    let records = dataset.records(split);
    if records.is_empty() {
        return Err(Error::Domain(format!("{split} split is empty")));
    }
    let graphs = Graphs::new(dataset, corr);
    let mut fcfg = cfg.forward_config(false);
    fcfg.mode = Mode::Ranking;
    let events_per_chunk = (cfg.batch_size / (cfg.n_negatives + 1)).max(1);
    let chunks: Vec<(Vec<usize>, usize)> = records
        .par_chunks(events_per_chunk)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = stream_rng(cfg.seed, &[TAG_EVAL, split_tag(split), c as u64]);
            let mut targets = Vec::new();
            let mut groups = Vec::new();
            let mut skipped = 0;
            for r in chunk {
                let mut seen = vec![false; dataset.n_items];
                for &j in &dataset.user_items[r.user] {
                    seen[j] = true;
                }
                let pool: Vec<usize> = (0..dataset.n_items).filter(|&j| !seen[j]).collect();
                if pool.is_empty() {
                    skipped += 1;
                    continue;
                }
                let start = targets.len();
                let at = |item| Target {
                    user: r.user,
                    item,
                    time: r.timestamp,
                };
                targets.push(at(r.item));
                let n = cfg.n_negatives.min(pool.len());
                for i in index::sample(&mut rng, pool.len(), n) {
                    targets.push(at(pool[i]));
                }
                groups.push(start..targets.len());
            }
            if targets.is_empty() {
                return Ok((Vec::new(), skipped));
            }
            let mut tape = Tape::new();
            let out = forward(&mut tape, params, &graphs, &targets, &fcfg, &mut rng)?;
            let scores = tape.value(out.predictions).data();
            let items: Vec<usize> = targets.iter().map(|t| t.item).collect();
            let ranks = groups
                .into_iter()
                .map(|g| target_rank(&scores[g.clone()], &items[g], 0))
                .collect();
            Ok((ranks, skipped))
        })
        .collect::<Result<_>>()?;
    let mut out = RankingOutcome {
        ranks: Vec::new(),
        skipped: 0,
    };
    for (r, s) in chunks {
        out.ranks.extend(r);
        out.skipped += s;
    }
    if out.ranks.is_empty() {
        return Err(Error::Domain(format!(
            "no {split} event could be ranked ({} skipped)",
            out.skipped
        )));
    }
    Ok(out)
}

/// Metrics of one evaluation, plus the training history when available.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mode: Mode,
    pub split: Split,
    /// `(name, value)` in report order, e.g. `RMSE`, `MAE`, `MRR@10`, `NDCG@10`.
    pub metrics: Vec<(String, f64)>,
    pub events: usize,
    pub skipped: usize,
    pub protocol: Option<String>,
    pub loss_curve: Vec<EpochRecord>,
    pub epoch_seconds: Vec<f64>,
}

/// Evaluate `split` in the config's mode.
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    corr: &CorrelativeGraph,
    cfg: &TrainConfig,
    split: Split,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        mode: cfg.mode,
        split,
        metrics: Vec::new(),
        events: 0,
        skipped: 0,
        protocol: None,
        loss_curve: Vec::new(),
        epoch_seconds: Vec::new(),
    };
    match cfg.mode {
        Mode::Rating => {
            let m = evaluate_rating(params, dataset, corr, cfg, split)?;
            report.metrics = vec![("RMSE".into(), m.rmse), ("MAE".into(), m.mae)];
            report.events = m.events;
        }
        Mode::Ranking => {
            let o = evaluate_ranking(params, dataset, corr, cfg, split)?;
            for &k in &cfg.eval_k {
                report
                    .metrics
                    .push((format!("MRR@{k}"), mrr_at(&o.ranks, k)?));
            }
            for &k in &cfg.eval_k {
                report
                    .metrics
                    .push((format!("NDCG@{k}"), ndcg_at(&o.ranks, k)?));
            }
            report.events = o.ranks.len();
            report.skipped = o.skipped;
            report.protocol = Some(format!(
                "1 positive + {} negatives sampled uniformly from items the user never \
                 interacted with; ties ranked by ascending item id",
                cfg.n_negatives
            ));
        }
    }
    Ok(report)
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|m| m.1)
    }

    /// `metric<TAB>value` lines under a `#` header.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# mode\t{}", self.mode);
        let _ = writeln!(s, "# split\t{}", self.split);
        if let Some(p) = &self.protocol {
            let _ = writeln!(s, "# protocol\t{p}");
        }
        let _ = writeln!(s, "events\t{}", self.events);
        if self.mode == Mode::Ranking {
            let _ = writeln!(s, "skipped\t{}", self.skipped);
        }
        for (name, v) in &self.metrics {
            let _ = writeln!(s, "{name}\t{v}");
        }
        s
    }

    pub fn loss_curve_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_metric\n");
        for r in &self.loss_curve {
            let _ = writeln!(s, "{}\t{}\t{}", r.epoch, r.train_loss, r.val_metric);
        }
        s
    }

    pub fn timing_tsv(&self) -> String {
        let mut s = String::from("epoch\tseconds\n");
        for (i, t) in self.epoch_seconds.iter().enumerate() {
            let _ = writeln!(s, "{}\t{t:.3}", i + 1);
        }
        s
    }

    pub fn write_report(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_tsv().as_bytes())
    }

    /// Write `report.tsv`, `loss_curve.tsv` and `timing.tsv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        self.write_report(&dir.join(REPORT_FILE))?;
        write_file(&dir.join(LOSS_CURVE_FILE), self.loss_curve_tsv().as_bytes())?;
        write_file(&dir.join(TIMING_FILE), self.timing_tsv().as_bytes())
    }
}

/// Parse a report file into `metric → value`.
pub fn read_report(path: &Path) -> Result<HashMap<String, f64>> {
    read_kv(path)?
        .into_iter()
        .map(|(k, v)| {
            let x = v.parse().map_err(|_| {
                Error::Validation(format!(
                    "{}: '{k}' has non-numeric value '{v}'",
                    path.display()
                ))
            })?;
            Ok((k, x))
        })
        .collect()
}
