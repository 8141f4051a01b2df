mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socialrec_core::model::blocks::{
    attention_pool, dynamic_rep, interaction_embedding, interactional_rep, latent_factor, predict,
    relational_agg, static_rep,
};
use socialrec_core::model::{AblationConfig, Mode, ModelDims, ModelParams, Side};
use socialrec_core::tensor::{Tape, Tensor};

fn mat(rows: &[Vec<f64>]) -> Tensor {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Tensor::matrix(&refs).unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn interaction_embedding_zero_network() {
    let mut p = params_for(1, 1, 1, 2, 0);
    p.fill("mlp_uv", 0.0);
    let mut t = Tape::new();
    let x = interaction_embedding(&mut t, &p, Side::User, &[0], &[0]).unwrap();
    assert_eq!(t.value(x).data(), &[0.0, 0.0]);
}

#[test]
fn interaction_embedding_hand_computed() {
    let mut p = params_for(1, 1, 1, 2, 0);
    p.set("rating_emb", &[1.0, 0.0]).unwrap();
    p.set("item_emb", &[0.0, 1.0]).unwrap();
    p.set("mlp_uv.0.w", &[0.5, -1.0, 2.0, 0.3, 1.0, 1.0, -0.5, 0.25])
        .unwrap();
    p.set("mlp_uv.0.b", &[0.1, -0.2]).unwrap();
    p.set("mlp_uv.1.w", &[1.0, 2.0, -1.0, 0.5]).unwrap();
    p.set("mlp_uv.1.b", &[0.0, 0.3]).unwrap();
    // input [1,0,0,1] picks rows 0 and 3: [0, -0.75] + b = [0.1, -0.95] → relu [0.1, 0]
    // second layer: 0.1·[1, 2] + [0, 0.3] = [0.1, 0.5]
    let mut t = Tape::new();
    let x = interaction_embedding(&mut t, &p, Side::User, &[0], &[0]).unwrap();
    assert!(close(t.value(x).data(), &[0.1, 0.5], 1e-15));
    let oracle = mlp(&p.store, &p.mlp_uv, &[1.0, 0.0, 0.0, 1.0]);
    assert!(close(t.value(x).data(), &oracle, 1e-15));
}

#[test]
fn interaction_embedding_shape_and_item_side() {
    let p = params_for(3, 4, 5, 128, 1);
    let mut t = Tape::new();
    let x = interaction_embedding(&mut t, &p, Side::User, &[4], &[3]).unwrap();
    assert_eq!(t.value(x).shape(), &[1, 128]);

    let y = interaction_embedding(&mut t, &p, Side::Item, &[2, 0], &[1, 2]).unwrap();
    for (r, (&ri, &u)) in [2usize, 0].iter().zip(&[1usize, 2]).enumerate() {
        let oracle = mlp(
            &p.store,
            &p.mlp_vu,
            &cat(
                &row(&p.store, p.rating_emb, ri),
                &row(&p.store, p.user_emb, u),
            ),
        );
        assert!(close(t.value(y).row(r), &oracle, 1e-12));
    }
    assert!(interaction_embedding(&mut t, &p, Side::User, &[5], &[0]).is_err());
}

#[test]
fn dynamic_rep_empty_and_zero_weights() {
    let mut p = params_for(1, 1, 1, 3, 2);
    let mut t = Tape::new();
    let none = t.constant(Tensor::zeros(vec![0, 3]));
    let h = dynamic_rep(&mut t, &p.store, &p.lstm_u, none, &[0, 0]).unwrap();
    assert_eq!(t.value(h).data(), &[0.0; 3]);

    p.fill("lstm_u", 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = t.constant(mat(&random_rows(&mut rng, 4, 3)));
    let h = dynamic_rep(&mut t, &p.store, &p.lstm_u, x, &[0, 4]).unwrap();
    assert_eq!(t.value(h).data(), &[0.0; 3]);
}

#[test]
fn dynamic_rep_single_cell_hand_computed() {
    let mut p = params_for(1, 1, 1, 2, 0);
    // gate order i, f, g, o; columns 0..8 = [i0 i1 f0 f1 g0 g1 o0 o1]
    p.set(
        "lstm_u.0.w_ih",
        &[
            0.5, -0.5, 0.1, 0.2, 1.0, -1.0, 0.3, 0.0, //
            0.25, 0.75, -0.1, 0.4, 0.5, 0.5, -0.2, 1.0,
        ],
    )
    .unwrap();
    p.set("lstm_u.0.b", &[0.0, 0.1, 1.0, 1.0, 0.0, -0.1, 0.2, 0.0])
        .unwrap();
    let x = [1.0, 2.0];
    // z_k = x0·W[0][k] + x1·W[1][k] + b_k
    let z = [
        1.0 * 0.5 + 2.0 * 0.25,
        1.0 * -0.5 + 2.0 * 0.75 + 0.1,
        1.0 * 0.1 + 2.0 * -0.1 + 1.0,
        1.0 * 0.2 + 2.0 * 0.4 + 1.0,
        1.0 * 1.0 + 2.0 * 0.5,
        -1.0 + 2.0 * 0.5 - 0.1,
        1.0 * 0.3 + 2.0 * -0.2 + 0.2,
        1.0 * 0.0 + 2.0 * 1.0,
    ];
    let expected: Vec<f64> = (0..2)
        .map(|k| {
            let c = sigmoid(z[k]) * z[4 + k].tanh();
            sigmoid(z[6 + k]) * c.tanh()
        })
        .collect();
    let mut t = Tape::new();
    let xv = t.constant(mat(&[x.to_vec()]));
    let h = dynamic_rep(&mut t, &p.store, &p.lstm_u, xv, &[0, 1]).unwrap();
    assert!(close(t.value(h).data(), &expected, 1e-15));
}

#[test]
fn dynamic_rep_batched_matches_per_sequence_reference() {
    for layers in [1, 2, 3] {
        let dims = ModelDims {
            n_users: 1,
            n_items: 1,
            n_ratings: 1,
            dim: 4,
            lstm_layers: layers,
        };
        let p = ModelParams::new(dims, &mut ChaCha8Rng::seed_from_u64(layers as u64)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40 + layers as u64);
        let lens = [3usize, 0, 5, 1, 5, 2];
        let seqs: Vec<Vec<Vec<f64>>> = lens.iter().map(|&l| random_rows(&mut rng, l, 4)).collect();
        let flat: Vec<Vec<f64>> = seqs.iter().flatten().cloned().collect();
        let mut offsets = vec![0];
        for l in lens {
            offsets.push(offsets.last().unwrap() + l);
        }
        let mut t = Tape::new();
        let x = t.constant(mat(&flat));
        let h = dynamic_rep(&mut t, &p.store, &p.lstm_u, x, &offsets).unwrap();
        assert_eq!(t.value(h).shape(), &[lens.len(), 4]);
        for (k, seq) in seqs.iter().enumerate() {
            let oracle = lstm(&p.store, &p.lstm_u, seq);
            assert!(
                close(t.value(h).row(k), &oracle, 1e-12),
                "layers {layers} seq {k}"
            );
        }
    }
}

#[test]
fn dynamic_rep_is_order_sensitive() {
    let p = params_for(1, 1, 1, 4, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let seq = random_rows(&mut rng, 4, 4);
    let mut rev = seq.clone();
    rev.reverse();
    let mut t = Tape::new();
    let a = t.constant(mat(&seq));
    let b = t.constant(mat(&rev));
    let ha = dynamic_rep(&mut t, &p.store, &p.lstm_u, a, &[0, 4]).unwrap();
    let hb = dynamic_rep(&mut t, &p.store, &p.lstm_u, b, &[0, 4]).unwrap();
    let diff: f64 = t
        .value(ha)
        .data()
        .iter()
        .zip(t.value(hb).data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(diff > 1e-6, "{diff}");
}

#[test]
fn static_rep_single_and_repeated_edges() {
    let p = params_for(1, 1, 1, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let center = random_rows(&mut rng, 1, 3);
    let edge = random_rows(&mut rng, 1, 3);

    let mut t = Tape::new();
    let c = t.constant(mat(&center));
    let e = t.constant(mat(&edge));
    let single = static_rep(&mut t, &p, Side::User, c, e, &[0, 1]).unwrap();
    assert_eq!(t.value(single.weights.unwrap()).data(), &[1.0]);
    let expected: Vec<f64> = lin(&p.store, &p.att_uv.output, &edge[0])
        .into_iter()
        .map(relu)
        .collect();
    assert!(close(t.value(single.out).data(), &expected, 1e-15));

    let five = t.constant(mat(&vec![edge[0].clone(); 5]));
    let rep = static_rep(&mut t, &p, Side::User, c, five, &[0, 5]).unwrap();
    assert!(close(
        t.value(rep.out).data(),
        t.value(single.out).data(),
        1e-15
    ));
}

#[test]
fn static_rep_two_edges_hand_computed() {
    let mut p = params_for(1, 1, 1, 2, 0);
    p.set(
        "att_vu.score1.w",
        &[1.0, 0.0, 0.0, 1.0, 0.5, -0.5, 1.0, 2.0],
    )
    .unwrap();
    p.set("att_vu.score1.b", &[0.0, 0.1]).unwrap();
    p.set("att_vu.score2.w", &[1.0, -1.0]).unwrap();
    p.set("att_vu.score2.b", &[0.3]).unwrap();
    p.set("att_vu.out.w", &[1.0, 0.5, -0.5, 1.0]).unwrap();
    p.set("att_vu.out.b", &[0.0, 0.1]).unwrap();
    let center = [1.0, -1.0];
    let e1 = [0.5, 1.0];
    let e2 = [-1.0, 0.25];
    // score hidden: [c0 + 0.5 e0 + e1, c1 - 0.5 e0 + 2 e1] + [0, 0.1]
    let hidden = |e: &[f64; 2]| {
        [
            relu(center[0] + 0.5 * e[0] + e[1]),
            relu(center[1] - 0.5 * e[0] + 2.0 * e[1] + 0.1),
        ]
    };
    let score = |e: &[f64; 2]| {
        let h = hidden(e);
        h[0] - h[1] + 0.3
    };
    let (s1, s2) = (score(&e1), score(&e2));
    let a1 = s1.exp() / (s1.exp() + s2.exp());
    let a2 = 1.0 - a1;
    let pooled = [a1 * e1[0] + a2 * e2[0], a1 * e1[1] + a2 * e2[1]];
    let expected = [
        relu(pooled[0] - 0.5 * pooled[1]),
        relu(0.5 * pooled[0] + pooled[1] + 0.1),
    ];

    let mut t = Tape::new();
    let c = t.constant(mat(&[center.to_vec()]));
    let e = t.constant(mat(&[e1.to_vec(), e2.to_vec()]));
    let out = static_rep(&mut t, &p, Side::Item, c, e, &[0, 2]).unwrap();
    assert!(close(t.value(out.out).data(), &expected, 1e-15));
    assert!(close(
        t.value(out.weights.unwrap()).data(),
        &[a1, a2],
        1e-15
    ));
}

#[test]
fn static_rep_is_permutation_invariant() {
    let p = params_for(1, 1, 1, 4, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let center = random_rows(&mut rng, 1, 4);
    let edges = random_rows(&mut rng, 6, 4);
    let mut t = Tape::new();
    let c = t.constant(mat(&center));
    let e = t.constant(mat(&edges));
    let base = static_rep(&mut t, &p, Side::User, c, e, &[0, 6]).unwrap();
    let base = t.value(base.out).data().to_vec();
    for _ in 0..10 {
        let mut shuffled = edges.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let e = t.constant(mat(&shuffled));
        let o = static_rep(&mut t, &p, Side::User, c, e, &[0, 6]).unwrap();
        assert!(close(t.value(o.out).data(), &base, 1e-12));
    }
}

#[test]
fn attention_pool_batched_matches_reference() {
    let p = params_for(1, 1, 1, 3, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let centers = random_rows(&mut rng, 3, 3);
    let edges = random_rows(&mut rng, 5, 3);
    let offsets = [0, 2, 2, 5];
    let mut t = Tape::new();
    let c = t.constant(mat(&centers));
    let e = t.constant(mat(&edges));
    let out = attention_pool(&mut t, &p.store, &p.att_uu, c, e, &offsets).unwrap();
    for s in 0..3 {
        let (oracle, _) = attention(
            &p.store,
            &p.att_uu,
            &centers[s],
            &edges[offsets[s]..offsets[s + 1]],
        );
        assert!(close(t.value(out.out).row(s), &oracle, 1e-12));
    }
    assert_eq!(t.value(out.out).row(1), &[0.0; 3]);
}

#[test]
fn interactional_rep_examples() {
    let mut t = Tape::new();
    let d = t.constant(Tensor::vector(vec![1.0, 2.0]));
    let s = t.constant(Tensor::vector(vec![3.0, 4.0]));
    let ones = t.constant(Tensor::vector(vec![1.0, 1.0]));
    let full = AblationConfig::FULL;
    let h = interactional_rep(&mut t, Some(d), Some(s), &full).unwrap();
    assert_eq!(t.value(h).data(), &[3.0, 8.0]);
    let h = interactional_rep(&mut t, Some(d), Some(ones), &full).unwrap();
    assert_eq!(t.value(h).data(), &[1.0, 2.0]);

    let no_lstm: AblationConfig = "w/o_LSTM".parse().unwrap();
    assert_eq!(
        interactional_rep(&mut t, Some(d), Some(s), &no_lstm).unwrap(),
        s
    );
    let no_att: AblationConfig = "w/o_ATT".parse().unwrap();
    assert_eq!(
        interactional_rep(&mut t, Some(d), Some(s), &no_att).unwrap(),
        d
    );

    let short = t.constant(Tensor::vector(vec![1.0]));
    assert!(interactional_rep(&mut t, Some(d), Some(short), &full).is_err());
}

#[test]
fn relational_agg_examples() {
    let p = params_for(1, 1, 1, 2, 30);
    let mut t = Tape::new();
    let c = t.constant(mat(&[vec![0.3, -0.2]]));
    let n1 = t.constant(mat(&[vec![0.7, 0.1]]));
    let no_sn: AblationConfig = "w/o_SN".parse().unwrap();
    let off = relational_agg(&mut t, &p, Side::User, c, n1, &[0, 1], &no_sn).unwrap();
    assert_eq!(t.value(off.out).data(), &[0.0, 0.0]);
    assert!(off.weights.is_none());

    let full = AblationConfig::FULL;
    let one = relational_agg(&mut t, &p, Side::User, c, n1, &[0, 1], &full).unwrap();
    let expected: Vec<f64> = lin(&p.store, &p.att_uu.output, &[0.7, 0.1])
        .into_iter()
        .map(relu)
        .collect();
    assert!(close(t.value(one.out).data(), &expected, 1e-15));

    let two = t.constant(mat(&[vec![0.7, 0.1], vec![-0.4, 0.9]]));
    let out = relational_agg(&mut t, &p, Side::Item, c, two, &[0, 2], &full).unwrap();
    let (oracle, w) = attention(
        &p.store,
        &p.att_vv,
        &[0.3, -0.2],
        &[vec![0.7, 0.1], vec![-0.4, 0.9]],
    );
    assert!(close(t.value(out.out).data(), &oracle, 1e-15));
    assert!(close(t.value(out.weights.unwrap()).data(), &w, 1e-15));
}

#[test]
fn latent_factor_examples() {
    let mut p = params_for(1, 1, 1, 2, 31);
    let mut t = Tape::new();
    let hi = t.constant(mat(&[vec![0.5, -1.0]]));
    let hn = t.constant(mat(&[vec![2.0, 0.25]]));
    let h = latent_factor(&mut t, &p, Side::User, hi, hn).unwrap();
    assert_eq!(t.value(h).shape(), &[1, 2]);
    let oracle = mlp(&p.store, &p.mlp_u, &[0.5, -1.0, 2.0, 0.25]);
    assert!(close(t.value(h).data(), &oracle, 1e-15));

    p.fill("mlp_v", 0.0);
    let h = latent_factor(&mut t, &p, Side::Item, hi, hn).unwrap();
    assert_eq!(t.value(h).data(), &[0.0, 0.0]);
}

#[test]
fn predict_examples() {
    let mut p = params_for(1, 1, 1, 2, 32);
    let mut t = Tape::new();
    let hu = t.constant(mat(&[vec![0.5, -1.0]]));
    let hv = t.constant(mat(&[vec![1.5, 0.5]]));
    let y = predict(&mut t, &p, hu, hv, Mode::Rating).unwrap();
    let oracle = mlp(&p.store, &p.head, &[0.5, -1.0, 1.5, 0.5]);
    assert!(close(t.value(y).data(), &oracle, 1e-15));

    p.fill("head", 0.0);
    let y = predict(&mut t, &p, hu, hv, Mode::Rating).unwrap();
    assert_eq!(t.value(y).data(), &[0.0]);
    let y = predict(&mut t, &p, hu, hv, Mode::Ranking).unwrap();
    assert_eq!(t.value(y).data(), &[0.5]);
}
