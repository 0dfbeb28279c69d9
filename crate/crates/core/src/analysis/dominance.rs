use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trajectory::{Snapshot, Trajectory};
use crate::derivation::{argmax, top};
use crate::error::{Error, Result};
use crate::searchspace::{CellTopology, CellType, OpKind, RelaxMode, CELL_EDGES, INTERMEDIATE_NODES};

/// How a dominant op is recognised in a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceRule {
    /// The argmax op of the two strongest incoming edges of every node.
    PerNodeTop2,
    /// The argmax op of every row.
    PerLayerTop1,
    /// Every op whose σ exceeds the threshold.
    SigmaThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCount {
    pub epoch: usize,
    pub skip_dominant: usize,
    pub per_op: BTreeMap<OpKind, usize>,
}

impl DominanceCount {
    pub fn total(&self) -> usize {
        self.per_op.values().sum()
    }

    pub fn get(&self, kind: OpKind) -> usize {
        self.per_op.get(&kind).copied().unwrap_or(0)
    }

    /// The op dominant most often and its count; ties go to the earlier op.
    pub fn most_common(&self) -> Option<(OpKind, usize)> {
        self.per_op
            .iter()
            .fold(None, |best: Option<(OpKind, usize)>, (&k, &c)| match best {
                Some((_, b)) if b >= c => best,
                _ => Some((k, c)),
            })
    }
}

/// Counts dominant ops of a snapshot under `rule`.
///
/// `threshold` is required by, and only used for, the σ rule.
pub fn count_dominant(
    snapshot: &Snapshot,
    mode: RelaxMode,
    opset: &[OpKind],
    threshold: Option<f64>,
    rule: DominanceRule,
) -> Result<DominanceCount> {
    let mut winners: Vec<usize> = Vec::new();
    match rule {
        DominanceRule::SigmaThreshold => {
            if mode != RelaxMode::SigmoidCollaborative {
                return Err(Error::Config("sigma_threshold counting requires the sigmoid relaxation".into()));
            }
            let t = threshold.ok_or_else(|| Error::Config("sigma_threshold counting needs a threshold".into()))?;
            for row in snapshot.groups.iter().flatten() {
                winners.extend(row.iter().enumerate().filter(|(_, &z)| z > t).map(|(i, _)| i));
            }
        }
        DominanceRule::PerLayerTop1 => {
            for row in snapshot.groups.iter().flatten() {
                if !row.is_empty() {
                    winners.push(argmax(row));
                }
            }
        }
        DominanceRule::PerNodeTop2 => {
            let topo = CellTopology::new(CellType::Normal);
            for g in &snapshot.groups {
                if g.len() != CELL_EDGES {
                    return Err(Error::Config(format!(
                        "per_node_top2 needs {CELL_EDGES}-edge cell groups, got {} rows",
                        g.len()
                    )));
                }
                for j in 0..INTERMEDIATE_NODES {
                    let scored = topo.incoming(j).map(|e| (e, g[e][argmax(&g[e])])).collect();
                    winners.extend(top(scored, 2).into_iter().map(|(e, _)| argmax(&g[e])));
                }
            }
        }
    }
    let mut per_op = BTreeMap::new();
    for w in winners {
        let kind = *opset
            .get(w)
            .ok_or_else(|| Error::Config(format!("snapshot column {w} outside op set")))?;
        *per_op.entry(kind).or_insert(0) += 1;
    }
    Ok(DominanceCount {
        epoch: snapshot.epoch,
        skip_dominant: per_op.get(&OpKind::Skip).copied().unwrap_or(0),
        per_op,
    })
}

/// The natural rule for a relaxation: top-2 per node (or argmax per layer)
/// under softmax, σ above `threshold` under sigmoid.
pub fn default_rule(mode: RelaxMode, chain: bool) -> DominanceRule {
    match (mode, chain) {
        (RelaxMode::SigmoidCollaborative, _) => DominanceRule::SigmaThreshold,
        (RelaxMode::SoftmaxExclusive, true) => DominanceRule::PerLayerTop1,
        (RelaxMode::SoftmaxExclusive, false) => DominanceRule::PerNodeTop2,
    }
}

/// Dominance counts of every snapshot.
pub fn dominance_over_time(
    traj: &Trajectory,
    threshold: Option<f64>,
    rule: DominanceRule,
) -> Result<Vec<DominanceCount>> {
    traj.snapshots
        .iter()
        .map(|s| count_dominant(s, traj.mode, &traj.opset, threshold, rule))
        .collect()
}

/// Index of the first recorded step from which `col` holds the row maximum
/// (ties included) at every later step. Series shorter than three steps
/// have no boundary.
pub fn boundary_epoch(rows: &[Vec<f64>], col: usize) -> Option<usize> {
    if rows.len() < 3 {
        return None;
    }
    let is_max = |r: &Vec<f64>| r.get(col).is_some_and(|&v| r.iter().all(|&o| v >= o));
    let mut boundary = None;
    for (t, r) in rows.iter().enumerate().rev() {
        if !is_max(r) {
            break;
        }
        boundary = Some(t);
    }
    boundary
}

/// Boundary epoch of skip on every row: `(group, row, epoch)`.
pub fn skip_boundaries(traj: &Trajectory) -> Vec<(usize, usize, Option<usize>)> {
    let Some(skip) = traj.op_column(OpKind::Skip) else {
        return Vec::new();
    };
    let Some(first) = traj.snapshots.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (g, rows) in first.groups.iter().enumerate() {
        for r in 0..rows.len() {
            let t = boundary_epoch(&traj.row_series(g, r), skip).map(|i| traj.snapshots[i].epoch);
            out.push((g, r, t));
        }
    }
    out
}

/// Epoch at which an op of one row dropped below `level` for good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extinction {
    pub op: OpKind,
    pub epoch: usize,
}

/// Weight under which an op counts as extinct in the domino report.
pub const EXTINCTION_LEVEL: f64 = 0.05;

/// Ops of `(group, row)` in the order they went extinct. An op is extinct
/// from the first recorded epoch after which its weight stays below
/// `level`; ops still above it at the end are omitted.
pub fn extinction_order(traj: &Trajectory, group: usize, row: usize, level: f64) -> Vec<Extinction> {
    let rows = traj.row_series(group, row);
    let mut out: Vec<Extinction> = Vec::new();
    for (c, &op) in traj.opset.iter().enumerate() {
        let mut since = None;
        for (t, r) in rows.iter().enumerate().rev() {
            if r[c] >= level {
                break;
            }
            since = Some(t);
        }
        if let Some(t) = since {
            out.push(Extinction {
                op,
                epoch: traj.snapshots[t].epoch,
            });
        }
    }
    out.sort_by_key(|e| e.epoch);
    out
}
