use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Sizes that fully determine the parameter layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub dim: usize,
    pub lstm_layers: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Validation(format!(
                "embedding width {} must be at least 2",
                self.dim
            )));
        }
        if self.lstm_layers == 0 {
            return Err(Error::Validation("lstm_layers must be at least 1".into()));
        }
        if self.n_users == 0 || self.n_items == 0 || self.n_ratings == 0 {
            return Err(Error::Validation(
                "model needs at least one user, item and rating".into(),
            ));
        }
        Ok(())
    }
}

/// `x · w + b` with `w: [in × out]`, `b: [out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

/// Perceptron with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// One LSTM layer. Gate blocks along the `4·hidden` axis are ordered
/// input, forget, candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lstm {
    pub hidden: usize,
    pub layers: Vec<LstmLayer>,
}

/// Edge-aware attention: a two-layer score network over
/// `[center, edge]` and an output transform applied to the pooled edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attention {
    pub score_hidden: Linear,
    pub score_out: Linear,
    pub output: Linear,
}

/// Every learnable tensor of the model, registered once in `store`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
    pub dims: ModelDims,
    pub user_emb: ParamId,
    pub item_emb: ParamId,
    pub rating_emb: ParamId,
    pub mlp_uv: Mlp,
    pub mlp_vu: Mlp,
    pub lstm_u: Lstm,
    pub lstm_v: Lstm,
    pub att_uv: Attention,
    pub att_vu: Attention,
    pub att_uu: Attention,
    pub att_vv: Attention,
    pub mlp_u: Mlp,
    pub mlp_v: Mlp,
    pub head: Mlp,
}

struct Builder<'r, R: Rng + ?Sized> {
    store: ParamStore,
    rng: &'r mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn uniform(&mut self, name: String, shape: Vec<usize>, b: f64) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-b..=b)).collect();
        self.store
            .add(name, Tensor::new(shape, data).expect("shape matches data"))
    }

    fn embedding(&mut self, name: &str, rows: usize, d: usize) -> ParamId {
        self.uniform(name.into(), vec![rows, d], 1.0 / (d as f64).sqrt())
    }

    /// `[fan_in × fan_out]`, uniform in `±√(6 / fan_in)`.
    fn weight(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        self.uniform(name, vec![fan_in, fan_out], (6.0 / fan_in as f64).sqrt())
    }

    fn bias(&mut self, name: String, len: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(vec![len]))
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.weight(format!("{name}.w"), fan_in, fan_out),
            b: self.bias(format!("{name}.b"), fan_out),
        }
    }

    fn mlp(&mut self, name: &str, sizes: &[usize]) -> Mlp {
        Mlp {
            layers: sizes
                .windows(2)
                .enumerate()
                .map(|(i, w)| self.linear(&format!("{name}.{i}"), w[0], w[1]))
                .collect(),
        }
    }

    fn lstm(&mut self, name: &str, d: usize, layers: usize) -> Lstm {
        let layers = (0..layers)
            .map(|l| {
                let w_ih = self.weight(format!("{name}.{l}.w_ih"), d, 4 * d);
                let w_hh = self.weight(format!("{name}.{l}.w_hh"), d, 4 * d);
                let mut bias = vec![0.0; 4 * d];
                bias[d..2 * d].iter_mut().for_each(|v| *v = 1.0);
                let b = self
                    .store
                    .add(format!("{name}.{l}.b"), Tensor::vector(bias));
                LstmLayer { w_ih, w_hh, b }
            })
            .collect();
        Lstm { hidden: d, layers }
    }

    fn attention(&mut self, name: &str, d: usize) -> Attention {
        Attention {
            score_hidden: self.linear(&format!("{name}.score1"), 2 * d, d),
            score_out: self.linear(&format!("{name}.score2"), d, 1),
            output: self.linear(&format!("{name}.out"), d, d),
        }
    }
}

impl ModelParams {
    /// Embeddings uniform in `±1/√d`, weight matrices uniform in
    /// `±√(6 / fan_in)`, biases zero, LSTM forget-gate bias 1.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let d = dims.dim;
        let mut b = Builder {
            store: ParamStore::new(),
            rng,
        };
        let user_emb = b.embedding("user_emb", dims.n_users, d);
        let item_emb = b.embedding("item_emb", dims.n_items, d);
        let rating_emb = b.embedding("rating_emb", dims.n_ratings, d);
        let mlp_uv = b.mlp("mlp_uv", &[2 * d, d, d]);
        let mlp_vu = b.mlp("mlp_vu", &[2 * d, d, d]);
        let lstm_u = b.lstm("lstm_u", d, dims.lstm_layers);
        let lstm_v = b.lstm("lstm_v", d, dims.lstm_layers);
        let att_uv = b.attention("att_uv", d);
        let att_vu = b.attention("att_vu", d);
        let att_uu = b.attention("att_uu", d);
        let att_vv = b.attention("att_vv", d);
        let mlp_u = b.mlp("mlp_u", &[2 * d, d, d]);
        let mlp_v = b.mlp("mlp_v", &[2 * d, d, d]);
        let head = b.mlp("head", &[2 * d, d, (d / 2).max(1), 1]);
        Ok(ModelParams {
            store: b.store,
            dims,
            user_emb,
            item_emb,
            rating_emb,
            mlp_uv,
            mlp_vu,
            lstm_u,
            lstm_v,
            att_uv,
            att_vu,
            att_uu,
            att_vv,
            mlp_u,
            mlp_v,
            head,
        })
    }

    pub fn dim(&self) -> usize {
        self.dims.dim
    }

    /// Set every tensor whose name starts with `prefix` to a constant.
    pub fn fill(&mut self, prefix: &str, value: f64) {
        let ids: Vec<ParamId> = self
            .store
            .ids()
            .filter(|&id| self.store.name(id).starts_with(prefix))
            .collect();
        for id in ids {
            self.store
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = value);
        }
    }

    /// Overwrite one named tensor's values.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let id = self
            .store
            .find(name)
            .ok_or_else(|| Error::Lookup(format!("no parameter named {name}")))?;
        let t = self.store.get_mut(id);
        if t.numel() != values.len() {
            return Err(Error::Shape(format!(
                "{name} holds {} values, {} given",
                t.numel(),
                values.len()
            )));
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }
}
