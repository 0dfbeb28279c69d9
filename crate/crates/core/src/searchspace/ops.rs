//! Candidate operations placed on every supernet edge.
//!
//! Convolutions are replaced by dense or banded linear maps; what matters is
//! that `skip` is parameter-free and identity while the other parametric
//! kinds must learn their mapping.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// The seven candidate kinds, in column order of the architecture matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    /// Coordinate-wise max over adjacent coordinates.
    MaxSmooth,
    /// Fixed average over adjacent coordinates.
    AvgSmooth,
    /// Identity.
    Skip,
    /// `tanh(W x)` with `W: d×d`.
    LinSmall,
    /// `tanh(W2 tanh(W1 x))` through a `2d` hidden layer.
    LinLarge,
    /// `tanh((M⊙W) x)` with a dilated band mask of offsets `{-2, 0, 2}`.
    DilSmall,
    /// Same with offsets `{-4, -2, 0, 2, 4}`.
    DilLarge,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::MaxSmooth,
        OpKind::AvgSmooth,
        OpKind::Skip,
        OpKind::LinSmall,
        OpKind::LinLarge,
        OpKind::DilSmall,
        OpKind::DilLarge,
    ];

    /// Name used in genotype strings, CSV exports and configs.
    pub fn name(self) -> &'static str {
        match self {
            OpKind::MaxSmooth => "max_pool_3x3",
            OpKind::AvgSmooth => "avg_pool_3x3",
            OpKind::Skip => "skip_connect",
            OpKind::LinSmall => "sep_conv_3x3",
            OpKind::LinLarge => "sep_conv_5x5",
            OpKind::DilSmall => "dil_conv_3x3",
            OpKind::DilLarge => "dil_conv_5x5",
        }
    }

    /// Short descriptive alias accepted by the parser.
    pub fn alias(self) -> &'static str {
        match self {
            OpKind::MaxSmooth => "max_smooth",
            OpKind::AvgSmooth => "avg_smooth",
            OpKind::Skip => "skip",
            OpKind::LinSmall => "lin_small",
            OpKind::LinLarge => "lin_large",
            OpKind::DilSmall => "dil_small",
            OpKind::DilLarge => "dil_large",
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            OpKind::LinSmall | OpKind::LinLarge | OpKind::DilSmall | OpKind::DilLarge
        )
    }

    fn band_offsets(self) -> &'static [isize] {
        match self {
            OpKind::DilSmall => &[-2, 0, 2],
            OpKind::DilLarge => &[-4, -2, 0, 2, 4],
            _ => &[],
        }
    }

    /// Trainable scalars of this kind at feature width `dim`.
    pub fn param_count(self, dim: usize) -> usize {
        match self {
            OpKind::LinSmall => dim * dim,
            OpKind::LinLarge => 4 * dim * dim,
            OpKind::DilSmall | OpKind::DilLarge => band_mask(dim, self.band_offsets())
                .iter()
                .filter(|&&m| m != 0.0)
                .count(),
            _ => 0,
        }
    }

    pub fn valid_names() -> String {
        OpKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for OpKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for OpKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s || k.alias() == s)
            .ok_or_else(|| Error::UnknownOp {
                name: s.to_string(),
                valid: OpKind::valid_names(),
            })
    }
}

fn band_mask(dim: usize, offsets: &[isize]) -> Vec<f64> {
    let mut mask = vec![0.0; dim * dim];
    for i in 0..dim {
        for &o in offsets {
            let j = i as isize + o;
            if j >= 0 && (j as usize) < dim {
                mask[i * dim + j as usize] = 1.0;
            }
        }
    }
    mask
}

/// `dim×dim` matrix averaging each coordinate with its in-range neighbours.
pub(crate) fn smoothing_matrix(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(dim - 1);
        let w = 1.0 / (hi - lo + 1) as f64;
        for j in lo..=hi {
            m[i * dim + j] = w;
        }
    }
    m
}

/// `(dim/2)×dim` matrix averaging coordinate pairs.
pub(crate) fn halving_matrix(dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut m = vec![0.0; half * dim];
    for i in 0..half {
        m[i * dim + 2 * i] = 0.5;
        m[i * dim + 2 * i + 1] = 0.5;
    }
    m
}

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data)
        .expect("shape matches data")
        .with_grad()
}

/// One candidate operation on one edge, owning its trainable tensors.
#[derive(Debug, Clone)]
pub struct CandidateOp {
    kind: OpKind,
    dim: usize,
    params: Vec<Tensor>,
}

impl CandidateOp {
    pub fn new(kind: OpKind, dim: usize, rng: &mut impl Rng) -> Self {
        let params = match kind {
            OpKind::LinSmall => vec![gaussian_matrix(dim, dim, 1.0 / (dim as f64).sqrt(), rng)],
            OpKind::LinLarge => vec![
                gaussian_matrix(2 * dim, dim, 1.0 / (dim as f64).sqrt(), rng),
                gaussian_matrix(dim, 2 * dim, 1.0 / (2.0 * dim as f64).sqrt(), rng),
            ],
            OpKind::DilSmall | OpKind::DilLarge => {
                let fan_in = kind.band_offsets().len() as f64;
                let mut w = gaussian_matrix(dim, dim, 1.0 / fan_in.sqrt(), rng);
                let mask = band_mask(dim, kind.band_offsets());
                for (v, m) in w.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                vec![w]
            }
            OpKind::MaxSmooth | OpKind::AvgSmooth | OpKind::Skip => Vec::new(),
        };
        Self { kind, dim, params }
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Applies the op to `x` (shape `[.., dim]`). `leaves` are this op's
    /// parameters already recorded on `tape`, in `params()` order.
    pub fn forward(&self, tape: &mut Tape, x: Var, leaves: &[Var]) -> Result<Var> {
        if leaves.len() != self.params.len() {
            return Err(Error::invalid(
                "candidate_op",
                format!("{} expects {} parameter leaves, got {}", self.kind, self.params.len(), leaves.len()),
            ));
        }
        let d = self.dim;
        let y = match self.kind {
            OpKind::Skip => return Ok(x),
            OpKind::MaxSmooth => tape.window_max(x, 1),
            OpKind::AvgSmooth => {
                let m = tape.constant(vec![d, d], smoothing_matrix(d))?;
                tape.matvec(m, x)
            }
            OpKind::LinSmall => {
                let h = tape.matvec(leaves[0], x)?;
                tape.tanh(h)
            }
            OpKind::LinLarge => {
                let h = tape.matvec(leaves[0], x)?;
                let h = tape.tanh(h)?;
                let h = tape.matvec(leaves[1], h)?;
                tape.tanh(h)
            }
            OpKind::DilSmall | OpKind::DilLarge => {
                let mask = tape.constant(vec![d, d], band_mask(d, self.kind.band_offsets()))?;
                let w = tape.mul(leaves[0], mask)?;
                let h = tape.matvec(w, x)?;
                tape.tanh(h)
            }
        }?;
        // Skip stays the raw identity; everything else is rescaled.
        tape.rms_norm(y)
    }
}
