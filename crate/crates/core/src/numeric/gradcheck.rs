//! Finite-difference verification of tape gradients.

use crate::error::Result;
use crate::numeric::tensor::Tensor;

/// Step size for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error floor so that all-zero gradients compare cleanly.
pub const REL_FLOOR: f64 = 1e-8;

/// Central-difference gradient of `f` w.r.t. every entry of every parameter.
pub fn numeric_grads<F>(f: &F, params: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut g = Tensor::zeros(params[pi].shape());
        for j in 0..params[pi].numel() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + step;
            let fp = f(&work)?;
            work[pi].data_mut()[j] = orig - step;
            let fm = f(&work)?;
            work[pi].data_mut()[j] = orig;
            g.data_mut()[j] = (fp - fm) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Relative error between two gradients for one parameter tensor:
/// ‖a − n‖ / max(‖a‖, ‖n‖, floor), with L2 norms.
pub fn rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (a, n) in analytic.data().iter().zip(numeric.data()) {
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(REL_FLOOR)
}

/// Max over parameter tensors of the analytic-vs-numeric relative error.
///
/// `f` evaluates the scalar loss at the given parameter values; `analytic`
/// comes from [`Tape::backward`](crate::numeric::Tape::backward). A missing
/// analytic gradient is treated as zero (unreached parameter).
pub fn grad_check<F>(f: &F, params: &[Tensor], analytic: &[Option<Tensor>]) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let numeric = numeric_grads(f, params, FD_STEP)?;
    let mut worst = 0.0f64;
    for (i, n) in numeric.iter().enumerate() {
        let zero;
        let a = match &analytic[i] {
            Some(a) => a,
            None => {
                zero = Tensor::zeros(params[i].shape());
                &zero
            }
        };
        worst = worst.max(rel_error(a, n));
    }
    Ok(worst)
}

/// Convenience: run `f` once to get analytic grads via the tape, then check.
///
/// `build` constructs the loss on a fresh tape given parameter *nodes* in
/// the same order as `params`.
pub fn grad_check_fn<B>(build: &B, params: &[Tensor]) -> Result<f64>
where
    B: Fn(&mut crate::numeric::Tape, &[crate::numeric::NodeId]) -> Result<crate::numeric::NodeId>,
{
    use crate::numeric::Tape;
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<_> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        tape.value(loss).item()
    };
    let mut tape = Tape::new();
    let ids: Vec<_> = params.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Option<Tensor>> = ids.iter().map(|id| grads.wrt(*id).cloned()).collect();
    grad_check(&eval, params, &analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{NodeId, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_loss_error_below_1e9() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = Tensor::randn(&[5], 1.0, &mut rng);
        let build = |tape: &mut Tape, ids: &[NodeId]| -> crate::error::Result<NodeId> {
            let sq = tape.mul(ids[0], ids[0])?;
            let s = tape.sum(sq);
            Ok(tape.scale(s, 0.5))
        };
        let err = grad_check_fn(&build, &[p]).unwrap();
        assert!(err < 1e-9, "relative error {}", err);
    }
}
