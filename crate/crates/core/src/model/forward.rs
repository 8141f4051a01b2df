use std::collections::HashMap;

use rand::Rng;

use super::blocks::{
    dynamic_rep, interaction_embedding, interactional_rep, latent_factor, predict, relational_agg,
    static_rep,
};
use super::trace::{AttentionBlock, AttentionTrace, TargetTrace};
use super::{AblationConfig, Mode, ModelParams, Side};
use crate::data::{consumable, Dataset, SeqEvent};
use crate::error::{Error, Result};
use crate::graph::{sample_neighbors, CorrelativeGraph};
use crate::tensor::{Tape, Tensor, Var};

/// One prediction target: the model sees only events strictly before `time`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub user: usize,
    pub item: usize,
    pub time: i64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardConfig {
    pub mode: Mode,
    pub ablation: AblationConfig,
    pub max_seq_len: usize,
    pub neighbor_sample: usize,
    pub dropout_rate: f64,
    pub training: bool,
    pub record_trace: bool,
}

/// Read-only structure the forward pass consumes.
#[derive(Clone, Copy, Debug)]
pub struct Graphs<'a> {
    pub user_seqs: &'a [Vec<SeqEvent>],
    pub item_seqs: &'a [Vec<SeqEvent>],
    pub social: &'a [Vec<usize>],
    pub corr: &'a CorrelativeGraph,
}

impl<'a> Graphs<'a> {
    pub fn new(dataset: &'a Dataset, corr: &'a CorrelativeGraph) -> Self {
        Graphs {
            user_seqs: &dataset.user_seqs,
            item_seqs: &dataset.item_seqs,
            social: &dataset.social_adj,
            corr,
        }
    }
}

pub struct ForwardOutput {
    /// `[B × 1]`: scores (rating mode) or probabilities (ranking mode).
    pub predictions: Var,
    pub trace: AttentionTrace,
}

/// `(entity, time)` pairs in first-seen order. Every distinct pair is
/// computed once per pass and shared by all targets that refer to it.
#[derive(Default)]
struct Instances {
    keys: Vec<(usize, i64)>,
    index: HashMap<(usize, i64), usize>,
}

impl Instances {
    fn insert(&mut self, key: (usize, i64)) -> usize {
        if let Some(&r) = self.index.get(&key) {
            return r;
        }
        self.keys.push(key);
        self.index.insert(key, self.keys.len() - 1);
        self.keys.len() - 1
    }
}

/// Relational neighbourhoods: one group per distinct target instance.
#[derive(Default)]
struct Groups {
    centers: Vec<usize>,
    members: Vec<usize>,
    offsets: Vec<usize>,
    of_instance: HashMap<usize, usize>,
}

impl Groups {
    fn new() -> Self {
        Groups {
            offsets: vec![0],
            ..Default::default()
        }
    }

    fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

struct SidePass {
    reps: Var,
    offsets: Vec<usize>,
    counterparts: Vec<usize>,
    static_weights: Option<Var>,
}

fn side_pass(
    tape: &mut Tape,
    params: &ModelParams,
    side: Side,
    seqs: &[Vec<SeqEvent>],
    instances: &[(usize, i64)],
    cfg: &ForwardConfig,
) -> Result<SidePass> {
    let d = params.dim();
    let mut offsets = Vec::with_capacity(instances.len() + 1);
    offsets.push(0);
    let mut ratings = Vec::new();
    let mut counterparts = Vec::new();
    for &(id, time) in instances {
        let seq = seqs
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("{side:?} {id} has no sequence")))?;
        for e in consumable(seq, time, cfg.max_seq_len) {
            ratings.push(e.rating_idx);
            counterparts.push(e.other);
        }
        offsets.push(ratings.len());
    }
    let edges = if ratings.is_empty() {
        tape.constant(Tensor::zeros(vec![0, d]))
    } else {
        interaction_embedding(tape, params, side, &ratings, &counterparts)?
    };
    let dynamic = if cfg.ablation.use_lstm {
        let lstm = match side {
            Side::User => &params.lstm_u,
            Side::Item => &params.lstm_v,
        };
        Some(dynamic_rep(tape, &params.store, lstm, edges, &offsets)?)
    } else {
        None
    };
    let (static_, static_weights) = if cfg.ablation.use_att {
        let table = match side {
            Side::User => params.user_emb,
            Side::Item => params.item_emb,
        };
        let table = tape.param(&params.store, table);
        let ids: Vec<usize> = instances.iter().map(|k| k.0).collect();
        let centers = tape.gather_rows(table, &ids)?;
        let pooled = static_rep(tape, params, side, centers, edges, &offsets)?;
        (Some(pooled.out), pooled.weights)
    } else {
        (None, None)
    };
    let reps = interactional_rep(tape, dynamic, static_, &cfg.ablation)?;
    Ok(SidePass {
        reps,
        offsets,
        counterparts,
        static_weights,
    })
}

fn relational_pass(
    tape: &mut Tape,
    params: &ModelParams,
    side: Side,
    groups: &Groups,
    reps: Var,
    cfg: &ForwardConfig,
) -> Result<(Var, Option<Var>)> {
    let d = params.dim();
    let table = match side {
        Side::User => params.user_emb,
        Side::Item => params.item_emb,
    };
    let table = tape.param(&params.store, table);
    let centers = tape.gather_rows(table, &groups.centers)?;
    let neighbors = if groups.members.is_empty() {
        tape.constant(Tensor::zeros(vec![0, d]))
    } else {
        tape.gather_rows(reps, &groups.members)?
    };
    let pooled = relational_agg(
        tape,
        params,
        side,
        centers,
        neighbors,
        groups.offsets(),
        &cfg.ablation,
    )?;
    Ok((pooled.out, pooled.weights))
}

/// Forward pass for a batch of targets, recorded on `tape`.
///
/// `rng` drives neighbour sampling and (in training) dropout; the same seed
/// and inputs reproduce the same outputs bit for bit.
pub fn forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &ModelParams,
    graphs: &Graphs<'_>,
    targets: &[Target],
    cfg: &ForwardConfig,
    rng: &mut R,
) -> Result<ForwardOutput> {
    cfg.ablation.validate()?;
    let (n_users, n_items) = (params.dims.n_users, params.dims.n_items);
    if let Some(t) = targets
        .iter()
        .find(|t| t.user >= n_users || t.item >= n_items)
    {
        return Err(Error::Lookup(format!(
            "target (user {}, item {}) outside users 0..{} / items 0..{}",
            t.user, t.item, n_users, n_items
        )));
    }

    let mut users = Instances::default();
    let mut items = Instances::default();
    let mut social = Groups::new();
    let mut corr = Groups::new();
    let mut user_rows = Vec::with_capacity(targets.len());
    let mut item_rows = Vec::with_capacity(targets.len());
    let mut social_of = Vec::with_capacity(targets.len());
    let mut corr_of = Vec::with_capacity(targets.len());

    for t in targets {
        let ur = users.insert((t.user, t.time));
        user_rows.push(ur);
        let g = match social.of_instance.get(&ur) {
            Some(&g) => g,
            None => {
                if cfg.ablation.use_social {
                    let friends =
                        sample_neighbors(&graphs.social[t.user], cfg.neighbor_sample, rng);
                    for o in friends {
                        let r = users.insert((o, t.time));
                        social.members.push(r);
                    }
                }
                social.centers.push(t.user);
                social.offsets.push(social.members.len());
                let g = social.centers.len() - 1;
                social.of_instance.insert(ur, g);
                g
            }
        };
        social_of.push(g);

        let ir = items.insert((t.item, t.time));
        item_rows.push(ir);
        let g = match corr.of_instance.get(&ir) {
            Some(&g) => g,
            None => {
                if cfg.ablation.use_correlative {
                    let all: Vec<usize> = graphs.corr.neighbors(t.item).collect();
                    let mut picked = sample_neighbors(&all, cfg.neighbor_sample, rng);
                    picked.sort_unstable();
                    for k in picked {
                        let r = items.insert((k, t.time));
                        corr.members.push(r);
                    }
                }
                corr.centers.push(t.item);
                corr.offsets.push(corr.members.len());
                let g = corr.centers.len() - 1;
                corr.of_instance.insert(ir, g);
                g
            }
        };
        corr_of.push(g);
    }

    let up = side_pass(tape, params, Side::User, graphs.user_seqs, &users.keys, cfg)?;
    let ip = side_pass(tape, params, Side::Item, graphs.item_seqs, &items.keys, cfg)?;
    let (user_rel, social_w) = relational_pass(tape, params, Side::User, &social, up.reps, cfg)?;
    let (item_rel, corr_w) = relational_pass(tape, params, Side::Item, &corr, ip.reps, cfg)?;

    let h_i = tape.gather_rows(up.reps, &user_rows)?;
    let h_un = tape.gather_rows(user_rel, &social_of)?;
    let h_a = tape.gather_rows(ip.reps, &item_rows)?;
    let h_vn = tape.gather_rows(item_rel, &corr_of)?;
    let rate = cfg.dropout_rate;
    let h_i = tape.dropout(h_i, rate, cfg.training, rng)?;
    let h_un = tape.dropout(h_un, rate, cfg.training, rng)?;
    let h_a = tape.dropout(h_a, rate, cfg.training, rng)?;
    let h_vn = tape.dropout(h_vn, rate, cfg.training, rng)?;
    let h_u = latent_factor(tape, params, Side::User, h_i, h_un)?;
    let h_v = latent_factor(tape, params, Side::Item, h_a, h_vn)?;
    let predictions = predict(tape, params, h_u, h_v, cfg.mode)?;

    let mut trace = AttentionTrace::default();
    if cfg.record_trace {
        let weights = |w: Option<Var>| w.map(|v| tape.value(v).data().to_vec());
        let (uw, iw, sw, cw) = (
            weights(up.static_weights),
            weights(ip.static_weights),
            weights(social_w),
            weights(corr_w),
        );
        let segment =
            |w: &Option<Vec<f64>>, offsets: &[usize], row: usize, ids: &dyn Fn(usize) -> usize| {
                w.as_ref().map(|w| {
                    (offsets[row]..offsets[row + 1])
                        .map(|e| (ids(e), w[e]))
                        .collect::<Vec<_>>()
                })
            };
        for (b, t) in targets.iter().enumerate() {
            let mut blocks = Vec::new();
            let parts = [
                (
                    AttentionBlock::UserItem,
                    segment(&uw, &up.offsets, user_rows[b], &|e| up.counterparts[e]),
                ),
                (
                    AttentionBlock::ItemUser,
                    segment(&iw, &ip.offsets, item_rows[b], &|e| ip.counterparts[e]),
                ),
                (
                    AttentionBlock::Social,
                    segment(&sw, social.offsets(), social_of[b], &|e| {
                        users.keys[social.members[e]].0
                    }),
                ),
                (
                    AttentionBlock::Correlative,
                    segment(&cw, corr.offsets(), corr_of[b], &|e| {
                        items.keys[corr.members[e]].0
                    }),
                ),
            ];
            for (block, w) in parts {
                if let Some(w) = w.filter(|w| !w.is_empty()) {
                    blocks.push((block, w));
                }
            }
            trace.targets.push(TargetTrace {
                user: t.user,
                item: t.item,
                blocks,
            });
        }
    }

    Ok(ForwardOutput { predictions, trace })
}
