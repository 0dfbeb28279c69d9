//! First-order optimizers operating in place on [`Tensor`] parameters.

use std::f64::consts::PI;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const ADAM_EPS: f64 = 1e-8;

/// Moment accumulators for a fixed, ordered list of parameters.
///
/// Adam uses both `first` and `second`; SGD keeps its momentum buffer in
/// `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    pub fn for_params<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            second: first.clone(),
            first,
            step: 0,
        }
    }

    fn check(&self, params: &[&mut Tensor]) -> Result<()> {
        let sized = self.first.len() == params.len()
            && self.first.iter().zip(params).all(|(m, p)| m.len() == p.len());
        if !sized {
            return Err(Error::invalid("optimizer", "state does not match parameter list"));
        }
        Ok(())
    }
}

fn grad_of<'a>(p: &'a Tensor, index: usize) -> Result<&'a [f64]> {
    p.grad()
        .ok_or_else(|| Error::MissingGrad(format!("#{} (shape {:?})", index, p.shape())))
}

/// One Adam update with L2 weight decay folded into the gradient.
pub fn adam_step(
    params: &mut [&mut Tensor],
    state: &mut OptimState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
) -> Result<()> {
    state.check(params)?;
    for (i, p) in params.iter().enumerate() {
        grad_of(p, i)?;
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let grad = p.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let g = grad[j] + weight_decay * *w;
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// One SGD update with heavy-ball momentum and L2 weight decay.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    state: &mut OptimState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    state.check(params)?;
    for (i, p) in params.iter().enumerate() {
        grad_of(p, i)?;
    }
    let first_step = state.step == 0;
    state.step += 1;
    for (i, p) in params.iter_mut().enumerate() {
        let grad = p.grad().expect("checked above").to_vec();
        let buf = &mut state.first[i];
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let g = grad[j] + weight_decay * *w;
            buf[j] = if first_step { g } else { momentum * buf[j] + g };
            *w -= lr * buf[j];
        }
    }
    Ok(())
}

/// Cosine annealing from `base` at epoch 0 to `floor` at `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base: f64,
    pub floor: f64,
    pub total_epochs: usize,
}

impl CosineSchedule {
    pub fn new(base: f64, total_epochs: usize) -> Self {
        Self {
            base,
            floor: 0.0,
            total_epochs,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.total_epochs == 0 {
            return self.base;
        }
        let progress = epoch.min(self.total_epochs) as f64 / self.total_epochs as f64;
        self.floor + 0.5 * (self.base - self.floor) * (1.0 + (PI * progress).cos())
    }
}
