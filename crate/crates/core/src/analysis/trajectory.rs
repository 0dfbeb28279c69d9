use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::LossReport;
use crate::searchspace::{ArchParams, GroupKind, OpKind, RelaxMode};

/// Relaxed weights of every group at one epoch: `groups[g][row][op]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub groups: Vec<Vec<Vec<f64>>>,
}

impl Snapshot {
    pub fn from_arch(epoch: usize, arch: &ArchParams) -> Self {
        Self {
            epoch,
            groups: arch.relaxed(),
        }
    }

    fn shape(&self) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .map(|g| (g.len(), g.first().map_or(0, Vec::len)))
            .collect()
    }

    /// Every relaxed weight, group-major.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.groups.iter().flatten().flatten().copied()
    }
}

/// Per-epoch record of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: RelaxMode,
    pub opset: Vec<OpKind>,
    pub kinds: Vec<GroupKind>,
    pub snapshots: Vec<Snapshot>,
    pub reports: Vec<LossReport>,
}

impl Trajectory {
    pub fn new(mode: RelaxMode, opset: Vec<OpKind>, kinds: Vec<GroupKind>) -> Self {
        Self {
            mode,
            opset,
            kinds,
            snapshots: Vec::new(),
            reports: Vec::new(),
        }
    }

    pub fn for_arch(arch: &ArchParams) -> Self {
        Self::new(arch.mode, arch.opset.clone(), arch.groups().iter().map(|g| g.kind).collect())
    }

    pub fn push(&mut self, snapshot: Snapshot) -> Result<()> {
        if snapshot.groups.len() != self.kinds.len() {
            return Err(Error::invalid("trajectory", "group count differs from trajectory"));
        }
        if let Some(last) = self.snapshots.last() {
            if snapshot.epoch <= last.epoch {
                return Err(Error::invalid(
                    "trajectory",
                    format!("epoch {} after {}", snapshot.epoch, last.epoch),
                ));
            }
            if snapshot.shape() != last.shape() {
                return Err(Error::invalid("trajectory", "snapshot shape changed"));
            }
        }
        if snapshot.groups.iter().flatten().any(|r| r.len() != self.opset.len()) {
            return Err(Error::invalid("trajectory", "row width differs from op set"));
        }
        if self.mode == RelaxMode::SoftmaxExclusive {
            for row in snapshot.groups.iter().flatten() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("trajectory", format!("softmax row sums to {s}")));
                }
            }
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn op_column(&self, kind: OpKind) -> Option<usize> {
        self.opset.iter().position(|&k| k == kind)
    }

    /// Weight of one (group, row, op) across all snapshots.
    pub fn series(&self, group: usize, row: usize, op: usize) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.groups[group][row][op]).collect()
    }

    /// Per-snapshot rows of one (group, row).
    pub fn row_series(&self, group: usize, row: usize) -> Vec<Vec<f64>> {
        self.snapshots.iter().map(|s| s.groups[group][row].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::SupernetSpec;

    #[test]
    fn epochs_must_increase() {
        let arch = ArchParams::zeros(&SupernetSpec::s2(), RelaxMode::SoftmaxExclusive);
        let mut t = Trajectory::for_arch(&arch);
        t.push(Snapshot::from_arch(0, &arch)).unwrap();
        assert!(t.push(Snapshot::from_arch(0, &arch)).is_err());
        t.push(Snapshot::from_arch(3, &arch)).unwrap();
        assert_eq!(t.series(0, 0, 0).len(), 2);
    }

    #[test]
    fn rejects_unnormalised_softmax_rows() {
        let arch = ArchParams::zeros(&SupernetSpec::s2(), RelaxMode::SoftmaxExclusive);
        let mut t = Trajectory::for_arch(&arch);
        let mut s = Snapshot::from_arch(0, &arch);
        s.groups[0][2][1] += 0.01;
        assert!(t.push(s).is_err());
    }
}
