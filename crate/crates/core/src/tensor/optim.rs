use super::ParamStore;
use crate::error::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Running average of squared gradients for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct RmspropState {
    pub cache: Vec<f64>,
    pub decay: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl RmspropState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        RmspropState {
            cache: vec![0.0; len],
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            learning_rate,
        }
    }
}

/// One RMSprop update of `param` in place:
/// `cache ← decay·cache + (1−decay)·g²`, `param ← param − lr·g / (√cache + ε)`.
pub fn rmsprop_update(param: &mut [f64], grad: &[f64], state: &mut RmspropState) -> Result<()> {
    if param.len() != grad.len() || grad.len() != state.cache.len() {
        return Err(Error::dim(
            "rmsprop_step",
            &[param.len(), grad.len()],
            &[state.cache.len()],
        ));
    }
    let (decay, eps, lr) = (state.decay, state.epsilon, state.learning_rate);
    for ((p, &g), c) in param.iter_mut().zip(grad).zip(state.cache.iter_mut()) {
        *c = decay * *c + (1.0 - decay) * g * g;
        *p -= lr * g / (c.sqrt() + eps);
    }
    Ok(())
}

/// RMSprop over every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Rmsprop {
    states: Vec<RmspropState>,
}

impl Rmsprop {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        Rmsprop {
            states: store
                .iter()
                .map(|(_, t)| RmspropState::new(t.numel(), learning_rate))
                .collect(),
        }
    }

    pub fn states(&self) -> &[RmspropState] {
        &self.states
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.states.iter_mut().for_each(|s| s.learning_rate = lr);
    }

    /// Apply one step using the gradients stored on each parameter.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.states.len() {
            return Err(Error::dim(
                "rmsprop_step",
                &[store.len()],
                &[self.states.len()],
            ));
        }
        for (id, state) in store
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(&mut self.states)
        {
            let t = store.get_mut(id);
            let grad = t.grad.take().unwrap_or_else(|| vec![0.0; t.numel()]);
            let res = rmsprop_update(t.data_mut(), &grad, state);
            t.grad = Some(grad);
            res?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_leaves_params_and_decays_cache() {
        let mut p = vec![1.0, -2.0];
        let mut s = RmspropState::new(2, 0.001);
        s.cache = vec![1.0, 4.0];
        rmsprop_update(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.cache, vec![0.9, 3.6]);
    }

    #[test]
    fn single_step_hand_oracle() {
        let mut p = vec![0.0];
        let mut s = RmspropState::new(1, 0.001);
        rmsprop_update(&mut p, &[1.0], &mut s).unwrap();
        let expected = -0.001 / (0.1f64.sqrt() + 1e-8);
        assert!((expected + 0.0031623).abs() < 1e-7);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn second_identical_step_is_smaller() {
        let mut p = vec![0.0];
        let mut s = RmspropState::new(1, 0.001);
        rmsprop_update(&mut p, &[1.0], &mut s).unwrap();
        let first = p[0].abs();
        let before = p[0];
        rmsprop_update(&mut p, &[1.0], &mut s).unwrap();
        let second = (p[0] - before).abs();
        assert!(second < first);
    }

    #[test]
    fn mismatched_lengths_error() {
        let mut p = vec![0.0; 2];
        let mut s = RmspropState::new(3, 0.001);
        assert!(rmsprop_update(&mut p, &[0.0, 0.0], &mut s).is_err());
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![0.123, -4.5, 1e-300]));
        store.get_mut(id).grad = Some(vec![3.0, -1.0, 7.0]);
        let before = store.get(id).data().to_vec();
        let mut opt = Rmsprop::new(&store, 0.0);
        opt.step(&mut store).unwrap();
        let after = store.get(id).data();
        assert!(before
            .iter()
            .zip(after)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
