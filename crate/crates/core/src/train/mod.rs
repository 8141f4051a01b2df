//! Losses, the training loop, evaluation and run reports.

mod config;
mod eval;
pub mod metrics;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{TrainConfig, DEFAULT_DROPOUT_RANKING, DEFAULT_DROPOUT_RATING};
pub use eval::{
    evaluate, evaluate_ranking, evaluate_rating, read_report, EpochRecord, EvalReport,
    RankingOutcome, RatingMetrics, LOSS_CURVE_FILE, REPORT_FILE, TIMING_FILE,
};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::CorrelativeGraph;
use crate::model::{forward, Graphs, Mode, ModelParams, Target};
use crate::tensor::{Gradients, Rmsprop, Tape, Tensor, Var};

/// `(1 / 2N) · Σ (r̂ − r)²` over a `[N × 1]` (or `[N]`) prediction tensor.
pub fn mse_loss(tape: &mut Tape, pred: Var, targets: &[f64]) -> Result<Var> {
    let shape = tape.value(pred).shape().to_vec();
    let n = tape.value(pred).numel();
    if n == 0 || targets.is_empty() {
        return Err(Error::Domain("squared error over an empty set".into()));
    }
    if n != targets.len() {
        return Err(Error::dim("mse_loss", &shape, &[targets.len()]));
    }
    let t = tape.constant(Tensor::new(shape, targets.to_vec())?);
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / (2.0 * n as f64)))
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
pub fn bce_loss(tape: &mut Tape, prob: Var, labels: &[f64]) -> Result<Var> {
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain(format!("label {y} is not 0 or 1")));
    }
    tape.bce(prob, labels)
}

/// An independent generator for `(seed, tags)`; every random decision of a
/// run draws from one of these so results do not depend on execution order.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut h = mix(seed);
    for &t in tags {
        h = mix(h ^ mix(t));
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_SHUFFLE: u64 = 2;
pub(crate) const TAG_NEGATIVES: u64 = 3;
pub(crate) const TAG_BATCH: u64 = 4;
pub(crate) const TAG_EVAL: u64 = 5;

pub struct TrainOutput {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    pub loss_curve: Vec<EpochRecord>,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val: f64,
    pub epoch_seconds: Vec<f64>,
}

/// Fresh parameters for `dataset` under `cfg`.
pub fn init_params(dataset: &Dataset, cfg: &TrainConfig) -> Result<ModelParams> {
    let dims = cfg.dims(dataset.n_users, dataset.n_items, dataset.rating_scale.len());
    ModelParams::new(dims, &mut stream_rng(cfg.seed, &[TAG_INIT]))
}

pub fn train(dataset: &Dataset, corr: &CorrelativeGraph, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(dataset, corr, cfg, |_| {})
}

/// Train from freshly initialised parameters, calling `on_epoch` after each
/// epoch's validation.
pub fn train_with(
    dataset: &Dataset,
    corr: &CorrelativeGraph,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    let params = init_params(dataset, cfg)?;
    train_from(params, dataset, corr, cfg, on_epoch)
}

/// One labelled training example.
#[derive(Clone, Copy)]
struct Example {
    target: Target,
    label: f64,
}

fn positives(dataset: &Dataset, mode: Mode) -> Vec<Example> {
    dataset
        .records(Split::Train)
        .into_iter()
        .map(|r| Example {
            target: Target {
                user: r.user,
                item: r.item,
                time: r.timestamp,
            },
            label: match mode {
                Mode::Rating => r.rating as f64,
                Mode::Ranking => 1.0,
            },
        })
        .collect()
}

/// Items each user has no training interaction with, as a sorted list.
fn training_complements(dataset: &Dataset) -> Vec<Vec<usize>> {
    dataset
        .user_seqs
        .iter()
        .map(|seq| {
            let mut seen = vec![false; dataset.n_items];
            for e in seq {
                seen[e.other] = true;
            }
            (0..dataset.n_items).filter(|&j| !seen[j]).collect()
        })
        .collect()
}

pub fn train_from(
    mut params: ModelParams,
    dataset: &Dataset,
    corr: &CorrelativeGraph,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let expected = cfg.dims(dataset.n_users, dataset.n_items, dataset.rating_scale.len());
    if params.dims != expected {
        return Err(Error::Validation(format!(
            "parameters have dims {:?}, dataset and config need {expected:?}",
            params.dims
        )));
    }
    let graphs = Graphs::new(dataset, corr);
    let pos = positives(dataset, cfg.mode);
    if pos.is_empty() {
        return Err(Error::Domain("training split is empty".into()));
    }
    let complements = match cfg.mode {
        Mode::Ranking => training_complements(dataset),
        Mode::Rating => Vec::new(),
    };
    let fcfg = cfg.forward_config(true);
    let mut opt = Rmsprop::new(&params.store, cfg.learning_rate);

    let mut curve = Vec::new();
    let mut seconds = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..pos.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut neg_rng = stream_rng(cfg.seed, &[TAG_NEGATIVES, epoch as u64]);

        let mut total = 0.0;
        let mut count = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch: Vec<Example> = Vec::with_capacity(2 * chunk.len());
            for &i in chunk {
                let ex = pos[i];
                batch.push(ex);
                if cfg.mode == Mode::Ranking {
                    let pool = &complements[ex.target.user];
                    if !pool.is_empty() {
                        let item = pool[neg_rng.gen_range(0..pool.len())];
                        batch.push(Example {
                            target: Target { item, ..ex.target },
                            label: 0.0,
                        });
                    }
                }
            }
            let n = batch.len();
            let per_shard = n.div_ceil(cfg.shards);
            let shards: Vec<(f64, Tape, Gradients)> = batch
                .par_chunks(per_shard)
                .enumerate()
                .map(|(s, shard)| {
                    let mut rng =
                        stream_rng(cfg.seed, &[TAG_BATCH, epoch as u64, b as u64, s as u64]);
                    let mut tape = Tape::new();
                    let targets: Vec<Target> = shard.iter().map(|e| e.target).collect();
                    let labels: Vec<f64> = shard.iter().map(|e| e.label).collect();
                    let out = forward(&mut tape, &params, &graphs, &targets, &fcfg, &mut rng)?;
                    let loss = match cfg.mode {
                        Mode::Rating => mse_loss(&mut tape, out.predictions, &labels)?,
                        Mode::Ranking => bce_loss(&mut tape, out.predictions, &labels)?,
                    };
                    let loss = tape.scale(loss, shard.len() as f64 / n as f64);
                    let grads = tape.backward(loss)?;
                    Ok((tape.item(loss), tape, grads))
                })
                .collect::<Result<_>>()?;
            let loss: f64 = shards.iter().map(|s| s.0).sum();
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            params.store.zero_grad();
            for (_, tape, grads) in &shards {
                params.store.accumulate(tape, grads);
            }
            opt.step(&mut params.store)?;
            total += loss * n as f64;
            count += n;
        }
        let train_loss = total / count as f64;

        let val = validation_metric(&params, dataset, corr, cfg)?;
        seconds.push(start.elapsed().as_secs_f64());
        let record = EpochRecord {
            epoch,
            train_loss,
            val_metric: val,
        };
        on_epoch(&record);
        curve.push(record);

        let improved = match &best {
            None => !val.is_nan(),
            Some((b, _, _)) => match cfg.mode {
                Mode::Rating => val < *b,
                Mode::Ranking => val > *b,
            },
        };
        if improved {
            best = Some((val, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_val, best_epoch, params) = match best {
        Some(b) => b,
        None => (f64::NAN, curve.len(), params),
    };
    Ok(TrainOutput {
        params,
        loss_curve: curve,
        best_epoch,
        best_val,
        epoch_seconds: seconds,
    })
}

/// Model-selection metric on the validation split: RMSE (rating, lower is
/// better) or NDCG@10 (ranking, higher is better).
pub fn validation_metric(
    params: &ModelParams,
    dataset: &Dataset,
    corr: &CorrelativeGraph,
    cfg: &TrainConfig,
) -> Result<f64> {
    match cfg.mode {
        Mode::Rating => Ok(evaluate_rating(params, dataset, corr, cfg, Split::Val)?.rmse),
        Mode::Ranking => {
            let out = evaluate_ranking(params, dataset, corr, cfg, Split::Val)?;
            metrics::ndcg_at(&out.ranks, 10)
        }
    }
}
