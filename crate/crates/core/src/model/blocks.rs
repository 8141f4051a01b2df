//! Building blocks of the network, each operating on a batch of rows.
//!
//! Variable-length sets (an entity's interaction edges, a target's
//! neighbours) are passed as a flat `[N × d]` tensor plus segment offsets:
//! segment `s` owns rows `offsets[s]..offsets[s + 1]`.

use std::cmp::Reverse;

use super::params::{Attention, Linear, Lstm, Mlp, ModelParams};
use super::{AblationConfig, Mode, Side};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

pub fn linear(tape: &mut Tape, store: &ParamStore, layer: &Linear, x: Var) -> Result<Var> {
    let w = tape.param(store, layer.w);
    let b = tape.param(store, layer.b);
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

/// ReLU between layers, linear output.
pub fn mlp(tape: &mut Tape, store: &ParamStore, net: &Mlp, x: Var) -> Result<Var> {
    let mut h = x;
    for (i, layer) in net.layers.iter().enumerate() {
        h = linear(tape, store, layer, h)?;
        if i + 1 < net.layers.len() {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn zeros(tape: &mut Tape, rows: usize, d: usize) -> Var {
    tape.constant(Tensor::zeros(vec![rows, d]))
}

/// Interaction embeddings for a batch of edges.
///
/// User side: `mlp_uv([e_r, q_item])`. Item side: `mlp_vu([e_r, p_user])`.
pub fn interaction_embedding(
    tape: &mut Tape,
    params: &ModelParams,
    side: Side,
    rating_idx: &[usize],
    counterpart: &[usize],
) -> Result<Var> {
    if rating_idx.len() != counterpart.len() {
        return Err(Error::dim(
            "interaction_embedding",
            &[rating_idx.len()],
            &[counterpart.len()],
        ));
    }
    let store = &params.store;
    let e_table = tape.param(store, params.rating_emb);
    let e = tape.gather_rows(e_table, rating_idx)?;
    let (table, net) = match side {
        Side::User => (params.item_emb, &params.mlp_uv),
        Side::Item => (params.user_emb, &params.mlp_vu),
    };
    let table = tape.param(store, table);
    let other = tape.gather_rows(table, counterpart)?;
    let x = tape.concat(e, other)?;
    mlp(tape, store, net, x)
}

/// Final LSTM hidden state of every sequence in a batch.
///
/// `inputs` holds all sequences back to back in chronological order;
/// sequence `k` is rows `offsets[k]..offsets[k+1]`. Sequences are aligned at
/// their last step and sorted longest first, so at every step the running
/// sequences form a prefix of the batch and only those rows are computed.
/// Empty sequences yield a zero vector.
pub fn dynamic_rep(
    tape: &mut Tape,
    store: &ParamStore,
    lstm: &Lstm,
    inputs: Var,
    offsets: &[usize],
) -> Result<Var> {
    let d = lstm.hidden;
    let k = offsets.len().saturating_sub(1);
    let lens: Vec<usize> = offsets.windows(2).map(|w| w[1] - w[0]).collect();
    let steps = lens.iter().copied().max().unwrap_or(0);
    if steps == 0 {
        return Ok(zeros(tape, k, d));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| Reverse(lens[i]));
    let mut inverse = vec![0; k];
    for (pos, &i) in order.iter().enumerate() {
        inverse[i] = pos;
    }
    // active[t]: number of sequences running at step t
    let active: Vec<usize> = (0..steps)
        .map(|t| lens.iter().filter(|&&l| l >= steps - t).count())
        .collect();

    let mut below: Vec<Var> = Vec::new();
    for (layer_no, layer) in lstm.layers.iter().enumerate() {
        let w_ih = tape.param(store, layer.w_ih);
        let w_hh = tape.param(store, layer.w_hh);
        let bias = tape.param(store, layer.b);
        let projected = if layer_no == 0 {
            Some(tape.matmul(inputs, w_ih)?)
        } else {
            None
        };
        let mut state: Option<(Var, Var)> = None;
        let mut prev_active = 0;
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let a = active[t];
            let mut gates = match projected {
                Some(p) => {
                    let rows: Vec<usize> = order[..a]
                        .iter()
                        .map(|&i| offsets[i] + t + lens[i] - steps)
                        .collect();
                    tape.gather_rows(p, &rows)?
                }
                None => tape.matmul(below[t], w_ih)?,
            };
            let mut c_prev = None;
            if let Some((h, c)) = state {
                let (h, c) = if a > prev_active {
                    (
                        tape.pad_rows(h, a - prev_active)?,
                        tape.pad_rows(c, a - prev_active)?,
                    )
                } else {
                    (h, c)
                };
                let hh = tape.matmul(h, w_hh)?;
                gates = tape.add(gates, hh)?;
                c_prev = Some(c);
            }
            gates = tape.add_bias(gates, bias)?;
            let gi = tape.slice_cols(gates, 0, d)?;
            let gf = tape.slice_cols(gates, d, d)?;
            let gg = tape.slice_cols(gates, 2 * d, d)?;
            let go = tape.slice_cols(gates, 3 * d, d)?;
            let i = tape.sigmoid(gi);
            let f = tape.sigmoid(gf);
            let g = tape.tanh(gg);
            let o = tape.sigmoid(go);
            let ig = tape.mul(i, g)?;
            let c = match c_prev {
                Some(cp) => {
                    let fc = tape.mul(f, cp)?;
                    tape.add(fc, ig)?
                }
                None => ig,
            };
            let tc = tape.tanh(c);
            let h = tape.mul(o, tc)?;
            state = Some((h, c));
            prev_active = a;
            outs.push(h);
        }
        below = outs;
    }
    let last = below[steps - 1];
    let running = active[steps - 1];
    let full = if running < k {
        tape.pad_rows(last, k - running)?
    } else {
        last
    };
    tape.gather_rows(full, &inverse)
}

/// Output of an attention pooling: one row per segment plus the weight of
/// every edge (absent when there were no edges at all).
#[derive(Clone, Copy, Debug)]
pub struct Pooled {
    pub out: Var,
    pub weights: Option<Var>,
}

/// Edge-aware attention pooling, one output row per segment:
/// `s_e = W₂·relu(W₁·[c, e] + b₁) + b₂`, `α = softmax(s)` within the
/// segment, `out = relu(W₀·Σ α_e e + b₀)`. Empty segments output zeros.
pub fn attention_pool(
    tape: &mut Tape,
    store: &ParamStore,
    att: &Attention,
    centers: Var,
    edges: Var,
    offsets: &[usize],
) -> Result<Pooled> {
    let k = offsets.len().saturating_sub(1);
    let n = offsets.last().copied().unwrap_or(0);
    let d = tape.value(centers).cols();
    if tape.value(centers).rows() != k {
        return Err(Error::dim(
            "attention_pool",
            tape.value(centers).shape(),
            &[k],
        ));
    }
    if n == 0 {
        return Ok(Pooled {
            out: zeros(tape, k, d),
            weights: None,
        });
    }
    let seg_of_edge: Vec<usize> = offsets
        .windows(2)
        .enumerate()
        .flat_map(|(s, w)| std::iter::repeat_n(s, w[1] - w[0]))
        .collect();
    let c = tape.gather_rows(centers, &seg_of_edge)?;
    let z = tape.concat(c, edges)?;
    let h = linear(tape, store, &att.score_hidden, z)?;
    let h = tape.relu(h);
    let scores = linear(tape, store, &att.score_out, h)?;
    let alpha = tape.segment_softmax(scores, offsets)?;
    let pooled = tape.segment_weighted_sum(alpha, edges, offsets)?;
    let out = linear(tape, store, &att.output, pooled)?;
    let mut out = tape.relu(out);
    if offsets.windows(2).any(|w| w[0] == w[1]) {
        let mask: Vec<f64> = offsets
            .windows(2)
            .map(|w| if w[1] > w[0] { 1.0 } else { 0.0 })
            .collect();
        out = tape.mask_rows(out, &mask)?;
    }
    Ok(Pooled {
        out,
        weights: Some(alpha),
    })
}

/// Long-term static representation of each entity from its interaction edges.
pub fn static_rep(
    tape: &mut Tape,
    params: &ModelParams,
    side: Side,
    centers: Var,
    edges: Var,
    offsets: &[usize],
) -> Result<Pooled> {
    let att = match side {
        Side::User => &params.att_uv,
        Side::Item => &params.att_vu,
    };
    attention_pool(tape, &params.store, att, centers, edges, offsets)
}

/// Hadamard fusion of the dynamic and static representations; with one
/// pathway ablated the other is returned unchanged.
pub fn interactional_rep(
    tape: &mut Tape,
    dynamic: Option<Var>,
    static_: Option<Var>,
    ablation: &AblationConfig,
) -> Result<Var> {
    match (ablation.use_lstm, ablation.use_att, dynamic, static_) {
        (true, true, Some(d), Some(s)) => tape.mul(d, s),
        (false, true, _, Some(s)) => Ok(s),
        (true, false, Some(d), _) => Ok(d),
        _ => Err(Error::Validation(
            "interactional representation needs the enabled pathway's input".into(),
        )),
    }
}

/// Relational influence from social (user side) or correlative (item side)
/// neighbours. A side disabled by the ablation returns zeros.
pub fn relational_agg(
    tape: &mut Tape,
    params: &ModelParams,
    side: Side,
    centers: Var,
    neighbor_reps: Var,
    offsets: &[usize],
    ablation: &AblationConfig,
) -> Result<Pooled> {
    let (enabled, att) = match side {
        Side::User => (ablation.use_social, &params.att_uu),
        Side::Item => (ablation.use_correlative, &params.att_vv),
    };
    if !enabled {
        let k = offsets.len().saturating_sub(1);
        return Ok(Pooled {
            out: zeros(tape, k, params.dim()),
            weights: None,
        });
    }
    attention_pool(tape, &params.store, att, centers, neighbor_reps, offsets)
}

/// `g([interactional, relational])` for users (`mlp_u`) or items (`mlp_v`).
pub fn latent_factor(
    tape: &mut Tape,
    params: &ModelParams,
    side: Side,
    interactional: Var,
    relational: Var,
) -> Result<Var> {
    let x = tape.concat(interactional, relational)?;
    let net = match side {
        Side::User => &params.mlp_u,
        Side::Item => &params.mlp_v,
    };
    mlp(tape, &params.store, net, x)
}

/// Head output per row: a raw score in rating mode, a sigmoid probability in
/// ranking mode.
pub fn predict(
    tape: &mut Tape,
    params: &ModelParams,
    h_user: Var,
    h_item: Var,
    mode: Mode,
) -> Result<Var> {
    let x = tape.concat(h_user, h_item)?;
    let y = mlp(tape, &params.store, &params.head, x)?;
    Ok(match mode {
        Mode::Rating => y,
        Mode::Ranking => tape.sigmoid(y),
    })
}
