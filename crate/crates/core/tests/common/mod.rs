//! Plain-loop reference arithmetic used as independent oracles: model blocks,
//! the item correlative graph and the ranking/rating metrics.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socialrec_core::data::{InteractionRecord, SeqEvent, Split};
use socialrec_core::graph::CorrelativeGraph;
use socialrec_core::model::{forward, AblationConfig, ForwardConfig, Mode, Target};
use socialrec_core::tensor::Tape;
use socialrec_core::train::mse_loss;

use socialrec_core::model::{Attention, Linear, Lstm, Mlp, ModelParams};
use socialrec_core::tensor::ParamStore;

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x · W + b` with W stored row-major `[in × out]`.
pub fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    assert_eq!(w.len(), x.len() * out);
    (0..out)
        .map(|j| b[j] + (0..x.len()).map(|i| x[i] * w[i * out + j]).sum::<f64>())
        .collect()
}

pub fn lin(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    affine(x, store.get(l.w).data(), store.get(l.b).data())
}

pub fn mlp(store: &ParamStore, net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, l) in net.layers.iter().enumerate() {
        h = lin(store, l, &h);
        if i + 1 < net.layers.len() {
            h = h.into_iter().map(relu).collect();
        }
    }
    h
}

pub fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Final hidden state of a (possibly stacked) LSTM over `seq`, zero start.
pub fn lstm(store: &ParamStore, net: &Lstm, seq: &[Vec<f64>]) -> Vec<f64> {
    let d = net.hidden;
    if seq.is_empty() {
        return vec![0.0; d];
    }
    let mut inputs: Vec<Vec<f64>> = seq.to_vec();
    for layer in &net.layers {
        let w_ih = store.get(layer.w_ih).data();
        let w_hh = store.get(layer.w_hh).data();
        let b = store.get(layer.b).data();
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut outs = Vec::new();
        for x in &inputs {
            let zx = affine(x, w_ih, &vec![0.0; 4 * d]);
            let zh = affine(&h, w_hh, &vec![0.0; 4 * d]);
            let z: Vec<f64> = (0..4 * d).map(|k| zx[k] + zh[k] + b[k]).collect();
            for k in 0..d {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[d + k]);
                let g = z[2 * d + k].tanh();
                let o = sigmoid(z[3 * d + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            outs.push(h.clone());
        }
        inputs = outs;
    }
    inputs.pop().unwrap()
}

/// Attention pooling: returns (output, weights).
pub fn attention(
    store: &ParamStore,
    att: &Attention,
    center: &[f64],
    edges: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let d = center.len();
    if edges.is_empty() {
        return (vec![0.0; d], vec![]);
    }
    let scores: Vec<f64> = edges
        .iter()
        .map(|e| {
            let h: Vec<f64> = lin(store, &att.score_hidden, &cat(center, e))
                .into_iter()
                .map(relu)
                .collect();
            lin(store, &att.score_out, &h)[0]
        })
        .collect();
    let exps: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let z: f64 = exps.iter().sum();
    let w: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let mut pooled = vec![0.0; d];
    for (e, a) in edges.iter().zip(&w) {
        for k in 0..d {
            pooled[k] += a * e[k];
        }
    }
    let out = lin(store, &att.output, &pooled)
        .into_iter()
        .map(relu)
        .collect();
    (out, w)
}

pub fn row(store: &ParamStore, id: socialrec_core::tensor::ParamId, r: usize) -> Vec<f64> {
    store.get(id).row(r).to_vec()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

pub fn params_for(
    n_users: usize,
    n_items: usize,
    n_ratings: usize,
    dim: usize,
    seed: u64,
) -> ModelParams {
    use rand::SeedableRng;
    let dims = socialrec_core::model::ModelDims {
        n_users,
        n_items,
        n_ratings,
        dim,
        lstm_layers: 1,
    };
    ModelParams::new(dims, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Owned graph structure for building `Graphs` in tests.
pub struct World {
    pub user_seqs: Vec<Vec<socialrec_core::data::SeqEvent>>,
    pub item_seqs: Vec<Vec<socialrec_core::data::SeqEvent>>,
    pub social: Vec<Vec<usize>>,
    pub corr: socialrec_core::graph::CorrelativeGraph,
}

impl World {
    pub fn graphs(&self) -> socialrec_core::model::Graphs<'_> {
        socialrec_core::model::Graphs {
            user_seqs: &self.user_seqs,
            item_seqs: &self.item_seqs,
            social: &self.social,
            corr: &self.corr,
        }
    }
}

/// Interactional representation of one entity at time `tau`, in plain loops.
pub fn reference_interactional(
    p: &ModelParams,
    user_side: bool,
    world: &World,
    id: usize,
    tau: i64,
    max_len: usize,
    ablation: &socialrec_core::model::AblationConfig,
) -> Vec<f64> {
    let s = &p.store;
    let (seq, net, lstm_net, att, center, other) = if user_side {
        (
            &world.user_seqs[id],
            &p.mlp_uv,
            &p.lstm_u,
            &p.att_uv,
            p.user_emb,
            p.item_emb,
        )
    } else {
        (
            &world.item_seqs[id],
            &p.mlp_vu,
            &p.lstm_v,
            &p.att_vu,
            p.item_emb,
            p.user_emb,
        )
    };
    let events = socialrec_core::data::consumable(seq, tau, max_len);
    let xs: Vec<Vec<f64>> = events
        .iter()
        .map(|e| {
            mlp(
                s,
                net,
                &cat(&row(s, p.rating_emb, e.rating_idx), &row(s, other, e.other)),
            )
        })
        .collect();
    let dynamic = ablation.use_lstm.then(|| lstm(s, lstm_net, &xs));
    let stat = ablation
        .use_att
        .then(|| attention(s, att, &row(s, center, id), &xs).0);
    match (dynamic, stat) {
        (Some(a), Some(b)) => hadamard(&a, &b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!(),
    }
}

/// Full prediction for `(u, v, tau)` in evaluation mode, assuming every
/// neighbourhood fits in the sample cap.
pub fn reference_predict(
    p: &ModelParams,
    world: &World,
    u: usize,
    v: usize,
    tau: i64,
    cfg: &socialrec_core::model::ForwardConfig,
) -> f64 {
    let s = &p.store;
    let a = &cfg.ablation;
    let d = p.dim();
    let rep = |user: bool, id: usize| {
        reference_interactional(p, user, world, id, tau, cfg.max_seq_len, a)
    };
    let h_i = rep(true, u);
    let h_a = rep(false, v);
    let h_un = if a.use_social {
        let reps: Vec<Vec<f64>> = world.social[u].iter().map(|&o| rep(true, o)).collect();
        attention(s, &p.att_uu, &row(s, p.user_emb, u), &reps).0
    } else {
        vec![0.0; d]
    };
    let h_vn = if a.use_correlative {
        let mut ks: Vec<usize> = world.corr.neighbors(v).collect();
        ks.sort_unstable();
        let reps: Vec<Vec<f64>> = ks.iter().map(|&k| rep(false, k)).collect();
        attention(s, &p.att_vv, &row(s, p.item_emb, v), &reps).0
    } else {
        vec![0.0; d]
    };
    let h_u = mlp(s, &p.mlp_u, &cat(&h_i, &h_un));
    let h_v = mlp(s, &p.mlp_v, &cat(&h_a, &h_vn));
    let y = mlp(s, &p.head, &cat(&h_u, &h_v))[0];
    match cfg.mode {
        socialrec_core::model::Mode::Rating => y,
        socialrec_core::model::Mode::Ranking => sigmoid(y),
    }
}

/// `n_events` random events with random split labels.
pub fn random_events<R: Rng>(
    rng: &mut R,
    n_users: usize,
    n_items: usize,
    n_events: usize,
) -> (Vec<InteractionRecord>, Vec<Split>) {
    let splits = [
        Split::Train,
        Split::Train,
        Split::Train,
        Split::Val,
        Split::Test,
    ];
    (0..n_events)
        .map(|_| {
            let r = InteractionRecord {
                user: rng.gen_range(0..n_users),
                item: rng.gen_range(0..n_items),
                rating: rng.gen_range(1..=5),
                timestamp: rng.gen_range(0..1000),
            };
            (r, splits[rng.gen_range(0..splits.len())])
        })
        .unzip()
}

/// `[user][item]` ratings from training events, the latest event per pair
/// winning (file order breaks timestamp ties).
pub fn dense_training_matrix(
    records: &[InteractionRecord],
    split: &[Split],
    n_users: usize,
    n_items: usize,
) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n_items]; n_users];
    let mut when = vec![vec![None; n_items]; n_users];
    for (i, (r, s)) in records.iter().zip(split).enumerate() {
        if *s != Split::Train {
            continue;
        }
        let key = (r.timestamp, i);
        if when[r.user][r.item].is_none_or(|w| key > w) {
            when[r.user][r.item] = Some(key);
            m[r.user][r.item] = r.rating as f64;
        }
    }
    m
}

/// All-pairs cosine over dense columns; per item the top `k` positive
/// similarities, descending, ties by ascending id.
pub fn brute_force_corr(dense: &[Vec<f64>], n_items: usize, k: usize) -> Vec<Vec<(usize, f64)>> {
    let col = |j: usize| -> Vec<f64> { dense.iter().map(|row| row[j]).collect() };
    let cols: Vec<Vec<f64>> = (0..n_items).map(col).collect();
    let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..n_items)
        .map(|a| {
            let mut out = Vec::new();
            for b in 0..n_items {
                let den = norm(&cols[a]) * norm(&cols[b]);
                if b == a || den == 0.0 {
                    continue;
                }
                let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                if dot / den > 0.0 {
                    out.push((b, dot / den));
                }
            }
            out.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            out.truncate(k);
            out
        })
        .collect()
}

/// 1-based position of `pos` after sorting every candidate by score
/// descending, then id ascending.
pub fn rank_by_sorting(scores: &[f64], items: &[usize], pos: usize) -> usize {
    let mut order: Vec<(f64, usize, usize)> = scores
        .iter()
        .zip(items)
        .enumerate()
        .map(|(i, (s, id))| (*s, *id, i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    order.iter().position(|e| e.2 == pos).unwrap() + 1
}

pub fn mrr_oracle(ranks: &[usize], k: usize) -> f64 {
    ranks
        .iter()
        .map(|&r| if r <= k { 1.0 / r as f64 } else { 0.0 })
        .sum::<f64>()
        / ranks.len() as f64
}

pub fn ndcg_oracle(ranks: &[usize], k: usize) -> f64 {
    ranks
        .iter()
        .map(|&r| {
            if r <= k {
                1.0 / ((r + 1) as f64).log2()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / ranks.len() as f64
}

pub fn rmse_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len() as f64;
    (pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt()
}

pub fn mae_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64
}

pub fn ev(other: usize, rating_idx: usize, timestamp: i64) -> SeqEvent {
    SeqEvent {
        other,
        rating_idx,
        timestamp,
    }
}

pub fn eval_cfg(mode: Mode, ablation: AblationConfig) -> ForwardConfig {
    ForwardConfig {
        mode,
        ablation,
        max_seq_len: 30,
        neighbor_sample: 30,
        dropout_rate: 0.5,
        training: false,
        record_trace: false,
    }
}

pub fn predictions(
    p: &ModelParams,
    w: &World,
    targets: &[Target],
    cfg: &ForwardConfig,
    seed: u64,
) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = forward(&mut tape, p, &w.graphs(), targets, cfg, &mut rng).unwrap();
    tape.value(out.predictions).data().to_vec()
}

/// Random world: every sequence is built from one event list so user and
/// item sequences agree.
pub fn random_world(n_users: usize, n_items: usize, n_events: usize, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_seqs = vec![Vec::new(); n_users];
    let mut item_seqs = vec![Vec::new(); n_items];
    for t in 0..n_events as i64 {
        let (u, v, r) = (
            rng.gen_range(0..n_users),
            rng.gen_range(0..n_items),
            rng.gen_range(0..5),
        );
        user_seqs[u].push(ev(v, r, t));
        item_seqs[v].push(ev(u, r, t));
    }
    let mut social = vec![Vec::new(); n_users];
    for u in 0..n_users {
        for o in u + 1..n_users {
            if rng.gen_bool(0.4) {
                social[u].push(o);
                social[o].push(u);
            }
        }
    }
    for l in &mut social {
        l.sort_unstable();
    }
    let mut corr = CorrelativeGraph::empty(n_items, 3);
    for j in 0..n_items {
        let mut others: Vec<usize> = (0..n_items).filter(|&k| k != j).collect();
        others.shuffle(&mut rng);
        corr.adj[j] = others.into_iter().take(3).map(|k| (k, rng.gen())).collect();
    }
    World {
        user_seqs,
        item_seqs,
        social,
        corr,
    }
}

/// Max `|autodiff − central difference| / max(1, |fd|)` over every scalar
/// parameter of the rating loss at d=4.
pub fn full_loss_gradient_error(n_users: usize, n_items: usize, events: usize, seed: u64) -> f64 {
    let w = random_world(n_users, n_items, events, seed);
    let mut p = params_for(n_users, n_items, 5, 4, seed + 1);
    // Zero biases put zero-fallback rows exactly on the ReLU kink, where a
    // central difference sees half the slope. Move them off it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let biases: Vec<_> = p
        .store
        .ids()
        .filter(|&id| p.store.name(id).ends_with(".b"))
        .collect();
    for id in biases {
        for x in p.store.get_mut(id).data_mut() {
            *x += rng.gen_range(-0.1..0.1);
        }
    }
    let cfg = eval_cfg(Mode::Rating, AblationConfig::FULL);
    let targets: Vec<Target> = (0..n_users)
        .map(|u| Target {
            user: u,
            item: (u * 2) % n_items,
            time: events as i64 - 5,
        })
        .collect();
    let labels: Vec<f64> = (0..n_users)
        .map(|u| [4.0, 2.0, 5.0, 1.0, 3.0][u % 5])
        .collect();
    let loss_of = |p: &ModelParams| {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&mut tape, p, &w.graphs(), &targets, &cfg, &mut rng).unwrap();
        let l = mse_loss(&mut tape, out.predictions, &labels).unwrap();
        (tape.item(l), tape, l)
    };
    let (_, tape, l) = loss_of(&p);
    let grads = tape.backward(l).unwrap();
    p.store.zero_grad();
    p.store.accumulate(&tape, &grads);
    let analytic: Vec<Vec<f64>> = p
        .store
        .ids()
        .map(|id| p.store.get(id).grad.clone().unwrap())
        .collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = p.store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for i in 0..p.store.get(id).numel() {
            let orig = p.store.get(id).data()[i];
            p.store.get_mut(id).data_mut()[i] = orig + eps;
            let up = loss_of(&p).0;
            p.store.get_mut(id).data_mut()[i] = orig - eps;
            let down = loss_of(&p).0;
            p.store.get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let err = (analytic[k][i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}
