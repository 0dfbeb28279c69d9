//! Central-difference gradient checking.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms: central
/// differences at eps=1e-5 carry ~1e-11 of roundoff on an O(1) loss, more
/// once the loss sums a few hundred terms.
pub const DENOM_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar graph against central
/// differences and returns the largest relative error over every parameter
/// element.
///
/// `build` receives a fresh tape and one leaf per entry of `params` (in
/// order) and must return the scalar loss. It has to be deterministic.
pub fn grad_check<F>(params: &[Tensor], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("grad_check", "eps must be positive"));
    }
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = values.iter().map(|t| tape.leaf(t)).collect();
        let loss = build(&mut tape, &leaves)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite("loss during finite differences".into()));
        }
        Ok(v)
    };

    let leaves_with_grad: Vec<Tensor> = params.iter().map(|t| t.clone().with_grad()).collect();
    let mut tape = Tape::new();
    let leaves: Vec<Var> = leaves_with_grad.iter().map(|t| tape.leaf(t)).collect();
    let loss = build(&mut tape, &leaves)?;
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut probe = leaves_with_grad;
    for (p, &leaf) in leaves.iter().enumerate() {
        let analytic = grads.dense(leaf);
        for (i, &a) in analytic.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("analytic gradient of parameter {p}")));
            }
            let orig = probe[p].data()[i];
            probe[p].data_mut()[i] = orig + eps;
            let up = evaluate(&probe)?;
            probe[p].data_mut()[i] = orig - eps;
            let down = evaluate(&probe)?;
            probe[p].data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(DENOM_FLOOR);
            if rel > 1e-4 {
                log::debug!("grad_check: param {p}[{i}] analytic {a:e} fd {fd:e} rel {rel:e}");
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_tight() {
        let p = Tensor::new(vec![3], vec![0.3, -1.2, 2.0]).unwrap();
        let err = grad_check(&[p], 1e-5, |tape, v| {
            let sq = tape.square(v[0])?;
            tape.mean(sq)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn sigmoid_chain() {
        let p = Tensor::new(vec![4], vec![0.1, -0.7, 1.3, 0.0]).unwrap();
        let err = grad_check(&[p], 1e-5, |tape, v| {
            let a = tape.sigmoid(v[0])?;
            let b = tape.sigmoid(a)?;
            let c = tape.tanh(b)?;
            tape.mean(c)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn rms_norm_rows() {
        let p = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.2, -0.3]).unwrap();
        let target = vec![1.0, 0.0, -1.0, 0.5, 0.5, 2.0];
        let err = grad_check(&[p], 1e-5, |tape, v| {
            let y = tape.rms_norm(v[0])?;
            let t = tape.constant(vec![2, 3], target.clone())?;
            let w = tape.mul(y, t)?;
            let c = tape.tanh(w)?;
            tape.mean(c)
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn no_parameters_is_vacuous() {
        let err = grad_check(&[], 1e-5, |tape, _| tape.constant(vec![1], vec![3.0])).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_finite_is_an_error() {
        let p = Tensor::new(vec![1], vec![1.0]).unwrap();
        let res = grad_check(&[p], 1e-5, |tape, v| {
            let big = tape.scale_by(v[0], f64::INFINITY)?;
            tape.mean(big)
        });
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
