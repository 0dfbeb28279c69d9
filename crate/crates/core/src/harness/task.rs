use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{stream_rng, Split};

pub const CLASSES: usize = 4;
const MAX_ATTEMPTS: u64 = 10;

/// Fixed random maps behind the labels: `y = argmax R (x + ε g(x))` with
/// `g(x) = W2 tanh(W1 x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    pub seed: u64,
    pub residual_scale: f64,
    pub readout: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub dim: usize,
    pub hidden: usize,
}

impl Teacher {
    fn sample(dim: usize, residual_scale: f64, seed: u64, rng: &mut impl Rng) -> Self {
        let hidden = 2 * dim;
        let draw = |n: usize, std: f64, rng: &mut dyn rand::RngCore| -> Vec<f64> {
            let normal = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| normal.sample(rng)).collect()
        };
        let readout = draw(CLASSES * dim, (1.0 / dim as f64).sqrt(), rng);
        // tanh of a unit-variance pre-activation has second moment ≈ 0.39;
        // scale W2 so g(x) has roughly unit variance per coordinate.
        let w1 = draw(hidden * dim, (1.0 / dim as f64).sqrt(), rng);
        let w2 = draw(dim * hidden, (1.0 / (0.39 * hidden as f64)).sqrt(), rng);
        Self {
            seed,
            residual_scale,
            readout,
            w1,
            w2,
            dim,
            hidden,
        }
    }

    /// The residual map g(x).
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = (0..self.hidden)
            .map(|i| dot(&self.w1[i * self.dim..(i + 1) * self.dim], x).tanh())
            .collect();
        (0..self.dim)
            .map(|i| dot(&self.w2[i * self.hidden..(i + 1) * self.hidden], &h))
            .collect()
    }

    pub fn scores(&self, x: &[f64], residual_scale: f64) -> Vec<f64> {
        let g = self.residual(x);
        let z: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + residual_scale * b).collect();
        (0..CLASSES)
            .map(|c| dot(&self.readout[c * self.dim..(c + 1) * self.dim], &z))
            .collect()
    }

    pub fn label(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x, self.residual_scale))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b })
}

/// Classification data whose labels are mostly a linear function of the
/// input, plus a small learned-only residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub teacher: Teacher,
}

impl SyntheticTask {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        CLASSES
    }

    /// Disjoint halves: the first `n_train` rows and the rest.
    pub fn split(&self, n_train: usize) -> Result<(Split, Split)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::Config(format!(
                "n_train must lie in 1..{}, got {}",
                self.len(),
                n_train
            )));
        }
        let cut = n_train * self.dim;
        Ok((
            Split::new(self.inputs[..cut].to_vec(), self.labels[..n_train].to_vec(), self.dim)?,
            Split::new(self.inputs[cut..].to_vec(), self.labels[n_train..].to_vec(), self.dim)?,
        ))
    }

    pub fn halves(&self) -> Result<(Split, Split)> {
        self.split(self.len() / 2)
    }
}

/// Inputs `x ~ N(0, I_d)`, labels `argmax R (x + ε g(x))` over four classes.
///
/// A teacher that gives every row the same label is redrawn with the next
/// seed, at most ten times.
pub fn make_residual_task(dim: usize, n: usize, residual_scale: f64, seed: u64) -> Result<SyntheticTask> {
    if dim < 4 {
        return Err(Error::Config(format!("task dim must be at least 4, got {dim}")));
    }
    if n < 256 {
        return Err(Error::Config(format!("task needs at least 256 rows, got {n}")));
    }
    if !(0.0..1.0).contains(&residual_scale) {
        return Err(Error::Config(format!("residual_scale must lie in [0, 1), got {residual_scale}")));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        let mut rng = stream_rng(s, 7);
        let teacher = Teacher::sample(dim, residual_scale, s, &mut rng);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let inputs: Vec<f64> = (0..n * dim).map(|_| normal.sample(&mut rng)).collect();
        let labels: Vec<usize> = inputs.chunks(dim).map(|x| teacher.label(x)).collect();
        if labels.iter().any(|&l| l != labels[0]) {
            return Ok(SyntheticTask {
                inputs,
                labels,
                dim,
                teacher,
            });
        }
        log::warn!("teacher seed {s} gives constant labels; redrawing");
    }
    Err(Error::Infeasible(format!(
        "no non-degenerate teacher within {MAX_ATTEMPTS} seeds from {seed}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = make_residual_task(8, 300, 0.15, 4).unwrap();
        let b = make_residual_task(8, 300, 0.15, 4).unwrap();
        assert_eq!(a, b);
        let c = make_residual_task(8, 300, 0.15, 5).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn zero_residual_is_linear_in_x() {
        let t = make_residual_task(8, 400, 0.0, 1).unwrap();
        for (x, &y) in t.inputs.chunks(8).zip(&t.labels) {
            let lin: Vec<f64> = (0..CLASSES).map(|c| dot(&t.teacher.readout[c * 8..(c + 1) * 8], x)).collect();
            assert_eq!(argmax(&lin), y);
        }
    }

    #[test]
    fn residual_changes_some_labels_but_not_most() {
        let t = make_residual_task(16, 2000, 0.15, 3).unwrap();
        let flipped = t
            .inputs
            .chunks(16)
            .zip(&t.labels)
            .filter(|(x, &y)| argmax(&t.teacher.scores(x, 0.0)) != y)
            .count();
        assert!(flipped > 0 && flipped < 2000 / 4, "{flipped}");
    }

    #[test]
    fn all_classes_present() {
        let t = make_residual_task(16, 512, 0.15, 0).unwrap();
        for c in 0..CLASSES {
            assert!(t.labels.contains(&c));
        }
    }

    #[test]
    fn splits_are_disjoint_halves() {
        let t = make_residual_task(4, 256, 0.1, 2).unwrap();
        let (a, b) = t.halves().unwrap();
        assert_eq!(a.len() + b.len(), 256);
        assert_eq!(a.row(0), &t.inputs[..4]);
        assert_eq!(b.row(0), &t.inputs[128 * 4..129 * 4]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_residual_task(3, 300, 0.1, 0).is_err());
        assert!(make_residual_task(8, 100, 0.1, 0).is_err());
        assert!(make_residual_task(8, 300, 1.5, 0).is_err());
    }
}
