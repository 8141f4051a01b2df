use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compare reverse-mode gradients of a scalar function against central
/// differences. Returns `max_i |autodiff_i − fd_i| / max(1, |fd_i|)`.
///
/// `f` receives a fresh tape and the recorded input and must return a
/// scalar node.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Domain(format!(
            "finite-difference step {eps} must be positive"
        )));
    }
    let eval = |data: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let input = Tensor::new(x.shape().to_vec(), data.to_vec())?;
        let v = tape.leaf(input);
        let out = f(&mut tape, v)?;
        if !tape.value(out).is_scalar() {
            return Err(Error::Shape(format!(
                "grad_check needs a scalar function, got shape {:?}",
                tape.value(out).shape()
            )));
        }
        Ok(tape.item(out))
    };

    let mut tape = Tape::new();
    let v = tape.leaf(x.clone().with_grad());
    let out = f(&mut tape, v)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(v)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let mut worst: f64 = 0.0;
    let mut probe = x.data().to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = eval(&probe)?;
        probe[i] = orig - eps;
        let minus = eval(&probe)?;
        probe[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}
