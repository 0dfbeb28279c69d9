use serde::{Deserialize, Serialize};

use super::genotype::{ChainGenotype, Encoding, Gene, Genotype, FIRST_NODE};
use crate::error::{Error, Result};
use crate::searchspace::{ArchParams, CellTopology, CellType, GroupKind, OpKind, RelaxMode, CELL_EDGES, INTERMEDIATE_NODES};

/// σ cut-off for the threshold rule, strictly inside (0.5, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SigmaThreshold(f64);

impl SigmaThreshold {
    /// Cell spaces.
    pub const CELL: SigmaThreshold = SigmaThreshold(0.85);
    /// Chain spaces.
    pub const CHAIN: SigmaThreshold = SigmaThreshold(0.8);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.5 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("σ threshold must lie in (0.5, 1), got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SigmaThreshold {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SigmaThreshold> for f64 {
    fn from(t: SigmaThreshold) -> f64 {
        t.0
    }
}

/// How the threshold rule ranks competing edges into one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRank {
    /// σ of the edge's best op.
    #[default]
    BestOp,
    /// Sum of σ over the edge's ops above the threshold.
    SumOps,
}

fn check_matrix(alpha: &[Vec<f64>], rows: Option<usize>, opset: &[OpKind]) -> Result<()> {
    if let Some(r) = rows {
        if alpha.len() != r {
            return Err(Error::invalid("derive", format!("expected {r} rows, got {}", alpha.len())));
        }
    }
    if opset.is_empty() {
        return Err(Error::invalid("derive", "empty op set"));
    }
    if let Some(row) = alpha.iter().find(|r| r.len() != opset.len()) {
        return Err(Error::invalid(
            "derive",
            format!("row of {} entries for {} ops", row.len(), opset.len()),
        ));
    }
    if alpha.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("architecture weights".into()));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b })
}

/// Top `n` of `scored` by descending score, ties to the lowest index.
pub(crate) fn top(mut scored: Vec<(usize, f64)>, n: usize) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

/// Argmax rule: per node, the two incoming edges whose best op has the
/// highest softmax weight, each carrying its argmax op.
pub fn derive_darts_cell(alpha: &[Vec<f64>], opset: &[OpKind]) -> Result<Vec<Gene>> {
    check_matrix(alpha, Some(CELL_EDGES), opset)?;
    let topo = CellTopology::new(CellType::Normal);
    let weights: Vec<Vec<f64>> = alpha.iter().map(|r| RelaxMode::SoftmaxExclusive.relax(r)).collect();
    let mut genes = Vec::with_capacity(2 * INTERMEDIATE_NODES);
    for j in 0..INTERMEDIATE_NODES {
        let scored = topo
            .incoming(j)
            .map(|e| (e, weights[e][argmax(&weights[e])]))
            .collect();
        for (e, _) in top(scored, 2) {
            let (_, k) = topo.edges()[e];
            genes.push(Gene::new(opset[argmax(&weights[e])], j + FIRST_NODE, k));
        }
    }
    Ok(genes)
}

/// Threshold rule: keep ops with σ(α) above the threshold, the best one per
/// edge, and at most two edges per node. Nodes may end up with no inputs.
pub fn derive_fair_cell(
    alpha: &[Vec<f64>],
    opset: &[OpKind],
    threshold: SigmaThreshold,
    rank: EdgeRank,
) -> Result<Vec<Gene>> {
    check_matrix(alpha, Some(CELL_EDGES), opset)?;
    let topo = CellTopology::new(CellType::Normal);
    let t = threshold.value();
    let gates: Vec<Vec<f64>> = alpha.iter().map(|r| RelaxMode::SigmoidCollaborative.relax(r)).collect();
    let mut genes = Vec::new();
    for j in 0..INTERMEDIATE_NODES {
        let mut scored = Vec::new();
        for e in topo.incoming(j) {
            let best = argmax(&gates[e]);
            if gates[e][best] <= t {
                continue;
            }
            let score = match rank {
                EdgeRank::BestOp => gates[e][best],
                EdgeRank::SumOps => gates[e].iter().filter(|&&z| z > t).sum(),
            };
            scored.push((e, score));
        }
        for (e, _) in top(scored, 2) {
            let (_, k) = topo.edges()[e];
            genes.push(Gene::new(opset[argmax(&gates[e])], j + FIRST_NODE, k));
        }
    }
    Ok(genes)
}

fn cell_alpha(arch: &ArchParams, kind: GroupKind) -> Option<Vec<Vec<f64>>> {
    arch.group(kind).map(|g| g.matrix())
}

/// Argmax rule on both cells of a softmax-mode architecture.
pub fn derive_darts(arch: &ArchParams) -> Result<Genotype> {
    let normal = match cell_alpha(arch, GroupKind::Normal) {
        Some(m) => derive_darts_cell(&m, &arch.opset)?,
        None => return Err(Error::Config("no normal-cell α".into())),
    };
    let reduce = match cell_alpha(arch, GroupKind::Reduce) {
        Some(m) => derive_darts_cell(&m, &arch.opset)?,
        None => Vec::new(),
    };
    let encoding = if reduce.is_empty() { Encoding::Triple } else { Encoding::Pair };
    Genotype::new(normal, reduce, encoding)
}

/// Threshold rule on both cells of a sigmoid-mode architecture.
pub fn derive_fair(arch: &ArchParams, threshold: SigmaThreshold, rank: EdgeRank) -> Result<Genotype> {
    let normal = match cell_alpha(arch, GroupKind::Normal) {
        Some(m) => derive_fair_cell(&m, &arch.opset, threshold, rank)?,
        None => return Err(Error::Config("no normal-cell α".into())),
    };
    let reduce = match cell_alpha(arch, GroupKind::Reduce) {
        Some(m) => derive_fair_cell(&m, &arch.opset, threshold, rank)?,
        None => Vec::new(),
    };
    let g = Genotype::new(normal, reduce, Encoding::Triple)?;
    if g.is_degenerate() {
        log::warn!("derived genotype leaves some intermediate nodes without inputs");
    }
    Ok(g)
}

/// Per layer, ops with σ above the threshold, at most the two highest.
pub fn derive_chain(alpha: &[Vec<f64>], opset: &[OpKind], threshold: SigmaThreshold) -> Result<ChainGenotype> {
    check_matrix(alpha, None, opset)?;
    let t = threshold.value();
    let layers = alpha
        .iter()
        .map(|row| {
            let gates = RelaxMode::SigmoidCollaborative.relax(row);
            let scored = gates.iter().copied().enumerate().filter(|&(_, z)| z > t).collect();
            top(scored, 2).into_iter().map(|(k, _)| opset[k]).collect()
        })
        .collect();
    let g = ChainGenotype { layers };
    if g.layers.iter().any(Vec::is_empty) {
        log::warn!("derived chain has layers with no op above the threshold");
    }
    Ok(g)
}

/// Per layer, the single argmax op (softmax-mode chains).
pub fn derive_chain_argmax(alpha: &[Vec<f64>], opset: &[OpKind]) -> Result<ChainGenotype> {
    check_matrix(alpha, None, opset)?;
    Ok(ChainGenotype {
        layers: alpha.iter().map(|r| vec![opset[argmax(r)]]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::edge_pair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_alpha(rng: &mut ChaCha8Rng, rows: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..7).map(|_| rng.random_range(-scale..scale)).collect())
            .collect()
    }

    #[test]
    fn darts_all_equal_tie_break() {
        let genes = derive_darts_cell(&vec![vec![0.0; 7]; 14], &OpKind::ALL).unwrap();
        for j in 0..4 {
            assert_eq!(genes[2 * j], Gene::new(OpKind::ALL[0], j + 2, 0));
            assert_eq!(genes[2 * j + 1], Gene::new(OpKind::ALL[0], j + 2, 1));
        }
    }

    #[test]
    fn darts_unique_maximum() {
        let mut a = vec![vec![0.0; 7]; 14];
        // node 3 (edges 2..5): prefer (3,2) with op 4 and (3,0) with op 6
        a[4][4] = 5.0;
        a[2][6] = 3.0;
        let genes = derive_darts_cell(&a, &OpKind::ALL).unwrap();
        assert_eq!(genes[2], Gene::new(OpKind::ALL[4], 3, 2));
        assert_eq!(genes[3], Gene::new(OpKind::ALL[6], 3, 0));
    }

    #[test]
    fn darts_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_alpha(&mut rng, 14, 2.0);
        let mut b = a.clone();
        b[5].iter_mut().for_each(|v| *v += 7.5);
        assert_eq!(
            derive_darts_cell(&a, &OpKind::ALL).unwrap(),
            derive_darts_cell(&b, &OpKind::ALL).unwrap()
        );
    }

    #[test]
    fn wrong_shape() {
        assert!(derive_darts_cell(&vec![vec![0.0; 7]; 13], &OpKind::ALL).is_err());
        assert!(derive_darts_cell(&vec![vec![0.0; 6]; 14], &OpKind::ALL).is_err());
        assert!(derive_fair_cell(&vec![vec![0.0; 7]; 3], &OpKind::ALL, SigmaThreshold::CELL, EdgeRank::BestOp).is_err());
    }

    #[test]
    fn fair_below_threshold_is_empty() {
        let genes =
            derive_fair_cell(&vec![vec![1.0; 7]; 14], &OpKind::ALL, SigmaThreshold::CELL, EdgeRank::BestOp).unwrap();
        assert!(genes.is_empty());
    }

    #[test]
    fn fair_single_edge() {
        let logit = |z: f64| (z / (1.0 - z)).ln();
        let mut a = vec![vec![-5.0; 7]; 14];
        a[9][0] = logit(0.9);
        a[9][1] = logit(0.2);
        let genes = derive_fair_cell(&a, &OpKind::ALL, SigmaThreshold::CELL, EdgeRank::BestOp).unwrap();
        let (j, k) = edge_pair(9).unwrap();
        assert_eq!(genes, vec![Gene::new(OpKind::ALL[0], j + 2, k)]);
    }

    #[test]
    fn fair_threshold_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a = random_alpha(&mut rng, 14, 4.0);
            let lo = derive_fair_cell(&a, &OpKind::ALL, SigmaThreshold::new(0.7).unwrap(), EdgeRank::BestOp).unwrap();
            let hi = derive_fair_cell(&a, &OpKind::ALL, SigmaThreshold::new(0.95).unwrap(), EdgeRank::BestOp).unwrap();
            for g in &hi {
                assert!(lo.contains(g), "{g:?} appears only at the higher threshold");
            }
            assert!(hi.len() <= lo.len());
        }
    }

    #[test]
    fn sum_rank_can_differ_from_best_op() {
        let logit = |z: f64| (z / (1.0 - z)).ln();
        let mut a = vec![vec![-9.0; 7]; 14];
        // node 2 has edges 0 and 1 only, so add a third competitor via node 3
        // (edges 2, 3, 4): edge 2 has one very strong op, edges 3 and 4 have
        // three moderately strong ones.
        a[2][0] = logit(0.99);
        for o in 0..3 {
            a[3][o] = logit(0.9);
            a[4][o] = logit(0.9);
        }
        let best = derive_fair_cell(&a, &OpKind::ALL, SigmaThreshold::CELL, EdgeRank::BestOp).unwrap();
        let sum = derive_fair_cell(&a, &OpKind::ALL, SigmaThreshold::CELL, EdgeRank::SumOps).unwrap();
        assert!(best.iter().any(|g| g.edge().unwrap() == 2));
        assert!(!sum.iter().any(|g| g.edge().unwrap() == 2));
    }

    #[test]
    fn chain_rules() {
        let logit = |z: f64| (z / (1.0 - z)).ln();
        let t = SigmaThreshold::new(0.75).unwrap();
        let mut layer = vec![-9.0; 7];
        layer[2] = logit(0.8);
        layer[3] = logit(0.9);
        let g = derive_chain(&[layer], &OpKind::ALL, t).unwrap();
        assert_eq!(g.layers[0], vec![OpKind::ALL[3], OpKind::Skip]);
        assert!(!g.is_removed(0));

        let mut layer = vec![-9.0; 7];
        layer[2] = logit(0.9);
        let g = derive_chain(&[layer], &OpKind::ALL, t).unwrap();
        assert!(g.is_removed(0));

        let g = derive_chain(&[vec![5.0; 7]], &OpKind::ALL, t).unwrap();
        assert_eq!(g.layers[0], vec![OpKind::ALL[0], OpKind::ALL[1]]);
    }

    #[test]
    fn threshold_bounds() {
        assert!(SigmaThreshold::new(0.5).is_err());
        assert!(SigmaThreshold::new(1.0).is_err());
        assert_eq!(SigmaThreshold::new(0.85).unwrap(), SigmaThreshold::CELL);
    }
}
