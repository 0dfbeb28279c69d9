//! Architecture weights α and their relaxations.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::OpKind;
use super::spec::{Space, SupernetSpec};
use super::topology::{CellType, CELL_EDGES};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxMode {
    /// Per-edge softmax: weights compete for a unit budget.
    #[serde(rename = "softmax")]
    SoftmaxExclusive,
    /// Per-entry sigmoid: every op is gated independently.
    #[serde(rename = "sigmoid")]
    SigmoidCollaborative,
}

impl RelaxMode {
    pub fn name(self) -> &'static str {
        match self {
            RelaxMode::SoftmaxExclusive => "softmax",
            RelaxMode::SigmoidCollaborative => "sigmoid",
        }
    }

    /// Relaxed weights of one α row.
    pub fn relax(self, row: &[f64]) -> Vec<f64> {
        match self {
            RelaxMode::SoftmaxExclusive => {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|a| (a - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            }
            RelaxMode::SigmoidCollaborative => row.iter().map(|&a| sigmoid(a)).collect(),
        }
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    let a = a.clamp(-crate::autodiff::SIGMOID_CLAMP, crate::autodiff::SIGMOID_CLAMP);
    1.0 / (1.0 + (-a).exp())
}

/// Which part of the supernet an α matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Normal,
    Reduce,
    Chain,
}

impl GroupKind {
    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Normal => "normal",
            GroupKind::Reduce => "reduce",
            GroupKind::Chain => "chain",
        }
    }

    pub fn from_cell(cell: CellType) -> Self {
        match cell {
            CellType::Normal => GroupKind::Normal,
            CellType::Reduce => GroupKind::Reduce,
        }
    }
}

/// One α matrix: a row per edge (or layer), a column per op.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGroup {
    pub kind: GroupKind,
    rows: Vec<Tensor>,
    /// Transient perturbation added to the stored α in the forward pass.
    noise: Vec<Vec<f64>>,
}

impl AlphaGroup {
    fn zeros(kind: GroupKind, n_rows: usize, n_ops: usize) -> Self {
        Self {
            kind,
            rows: (0..n_rows).map(|_| Tensor::zeros(vec![n_ops]).with_grad()).collect(),
            noise: vec![vec![0.0; n_ops]; n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.rows[r].data()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.iter().map(|t| t.data())
    }

    /// Stored α plus the current noise offset.
    pub fn effective_row(&self, r: usize) -> Vec<f64> {
        self.rows[r].data().iter().zip(&self.noise[r]).map(|(a, n)| a + n).collect()
    }

    pub fn noise_row(&self, r: usize) -> &[f64] {
        &self.noise[r]
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }
}

/// All architecture weights of a supernet together with the relaxation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchParams {
    pub mode: RelaxMode,
    pub opset: Vec<OpKind>,
    groups: Vec<AlphaGroup>,
}

impl ArchParams {
    /// All α = 0: uniform softmax, σ = 0.5.
    pub fn zeros(spec: &SupernetSpec, mode: RelaxMode) -> Self {
        let n_ops = spec.opset.len();
        let groups = match spec.space {
            Space::S1 => {
                let types = spec.cell_types();
                [CellType::Normal, CellType::Reduce]
                    .into_iter()
                    .filter(|t| types.contains(t))
                    .map(|t| AlphaGroup::zeros(GroupKind::from_cell(t), CELL_EDGES, n_ops))
                    .collect()
            }
            Space::S2 => vec![AlphaGroup::zeros(GroupKind::Chain, spec.layers, n_ops)],
        };
        Self {
            mode,
            opset: spec.opset.clone(),
            groups,
        }
    }

    /// Builds from explicit matrices, e.g. loaded from disk.
    pub fn from_matrices(
        mode: RelaxMode,
        opset: Vec<OpKind>,
        matrices: Vec<(GroupKind, Vec<Vec<f64>>)>,
    ) -> Result<Self> {
        let n_ops = opset.len();
        let mut groups = Vec::new();
        for (kind, m) in matrices {
            let mut g = AlphaGroup::zeros(kind, m.len(), n_ops);
            for (r, row) in m.into_iter().enumerate() {
                if row.len() != n_ops {
                    return Err(Error::Config(format!(
                        "{} row {} has {} entries, expected {}",
                        kind.name(),
                        r,
                        row.len(),
                        n_ops
                    )));
                }
                g.rows[r].data_mut().copy_from_slice(&row);
            }
            groups.push(g);
        }
        Ok(Self { mode, opset, groups })
    }

    pub fn groups(&self) -> &[AlphaGroup] {
        &self.groups
    }

    pub fn group(&self, kind: GroupKind) -> Option<&AlphaGroup> {
        self.groups.iter().find(|g| g.kind == kind)
    }

    pub fn group_index(&self, kind: GroupKind) -> Option<usize> {
        self.groups.iter().position(|g| g.kind == kind)
    }

    pub fn n_ops(&self) -> usize {
        self.opset.len()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.n_rows() * self.n_ops()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn skip_column(&self) -> Option<usize> {
        self.opset.iter().position(|&k| k == OpKind::Skip)
    }

    pub fn set(&mut self, group: usize, row: usize, op: usize, value: f64) {
        self.groups[group].rows[row].data_mut()[op] = value;
    }

    pub fn set_row(&mut self, group: usize, row: usize, values: &[f64]) {
        self.groups[group].rows[row].data_mut().copy_from_slice(values);
    }

    /// Row tensors in group-major order, for the optimizer.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.groups.iter_mut().flat_map(|g| g.rows.iter_mut()).collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.groups.iter().flat_map(|g| g.rows.iter()).collect()
    }

    /// Relaxed weights (softmax or sigmoid of the stored α, without noise)
    /// per group.
    pub fn relaxed(&self) -> Vec<Vec<Vec<f64>>> {
        self.groups
            .iter()
            .map(|g| g.rows().map(|r| self.mode.relax(r)).collect())
            .collect()
    }

    /// Every stored α value in group-major, row-major order.
    pub fn flat(&self) -> Vec<f64> {
        self.groups.iter().flat_map(|g| g.rows().flat_map(|r| r.iter().copied())).collect()
    }

    pub fn clear_noise(&mut self) {
        for g in &mut self.groups {
            for row in &mut g.noise {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

/// Cosine decay factor: 1 at epoch 0, 0 at `total_epochs`.
pub fn noise_decay(epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return 0.0;
    }
    0.5 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos())
}

/// Resamples the transient Gaussian perturbation on the skip α of every
/// row (or on every α when `all_ops` is set), scaled by the cosine decay.
///
/// The stored α is untouched; the forward pass reads `α + noise` as a leaf
/// so the gradient is taken at the perturbed point.
pub fn inject_skip_noise(
    arch: &mut ArchParams,
    epoch: usize,
    total_epochs: usize,
    sigma0: f64,
    all_ops: bool,
    rng: &mut impl Rng,
) -> Result<()> {
    if arch.mode != RelaxMode::SoftmaxExclusive {
        return Err(Error::Config("skip noise applies to softmax mode only".into()));
    }
    if epoch > total_epochs {
        return Err(Error::Config(format!(
            "noise epoch {epoch} beyond horizon {total_epochs}"
        )));
    }
    if !(sigma0 >= 0.0) {
        return Err(Error::Config("noise sigma must be non-negative".into()));
    }
    let scale = noise_decay(epoch, total_epochs) * sigma0;
    let skip = arch.skip_column();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for g in &mut arch.groups {
        for row in &mut g.noise {
            for (c, v) in row.iter_mut().enumerate() {
                *v = if all_ops || Some(c) == skip {
                    scale * normal.sample(rng)
                } else {
                    0.0
                };
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_init_is_fair() {
        let arch = ArchParams::zeros(&SupernetSpec::s1(), RelaxMode::SigmoidCollaborative);
        assert_eq!(arch.groups().len(), 2);
        assert!(arch.relaxed().iter().flatten().flatten().all(|&w| w == 0.5));
        let arch = ArchParams::zeros(&SupernetSpec::s1(), RelaxMode::SoftmaxExclusive);
        for w in arch.relaxed().iter().flatten().flatten() {
            assert!((w - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_raise_lowers_others() {
        let row = [0.3, -0.2, 0.1, 0.0, 0.7, -1.0, 0.4];
        let base = RelaxMode::SoftmaxExclusive.relax(&row);
        let mut bumped = row;
        bumped[2] += 0.05;
        let after = RelaxMode::SoftmaxExclusive.relax(&bumped);
        for i in 0..7 {
            if i == 2 {
                assert!(after[i] > base[i]);
            } else {
                assert!(after[i] < base[i]);
            }
        }
    }

    #[test]
    fn noise_endpoint_leaves_alpha_unchanged() {
        let mut arch = ArchParams::zeros(&SupernetSpec::s1(), RelaxMode::SoftmaxExclusive);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        inject_skip_noise(&mut arch, 50, 50, 1.0, false, &mut rng).unwrap();
        let g = &arch.groups()[0];
        assert!((0..g.n_rows()).all(|r| g.effective_row(r).iter().all(|&v| v.abs() < 1e-15)));
        assert!(inject_skip_noise(&mut arch, 51, 50, 1.0, false, &mut rng).is_err());
    }

    #[test]
    fn noise_touches_only_skip_column() {
        let mut arch = ArchParams::zeros(&SupernetSpec::s1(), RelaxMode::SoftmaxExclusive);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        inject_skip_noise(&mut arch, 0, 50, 1.0, false, &mut rng).unwrap();
        let skip = arch.skip_column().unwrap();
        for g in arch.groups() {
            for r in 0..g.n_rows() {
                for (c, v) in g.noise_row(r).iter().enumerate() {
                    assert_eq!(*v != 0.0, c == skip);
                }
            }
        }
        let mut fair = ArchParams::zeros(&SupernetSpec::s1(), RelaxMode::SigmoidCollaborative);
        assert!(inject_skip_noise(&mut fair, 0, 50, 1.0, false, &mut rng).is_err());
    }
}
