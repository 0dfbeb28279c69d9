use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intermediate nodes per DAG cell.
pub const INTERMEDIATE_NODES: usize = 4;
/// Edges per DAG cell: node `j` receives one edge from each of the `j + 2`
/// earlier nodes.
pub const CELL_EDGES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Normal,
    Reduce,
}

impl CellType {
    pub fn name(self) -> &'static str {
        match self {
            CellType::Normal => "normal",
            CellType::Reduce => "reduce",
        }
    }
}

/// Edge id for intermediate node `j` (0-based over intermediates) fed by
/// node `k` (0 and 1 are the two cell inputs, `k ≥ 2` is intermediate
/// `k - 2`).
pub fn edge_index(j: usize, k: usize) -> Result<usize> {
    if j >= INTERMEDIATE_NODES || k >= j + 2 {
        return Err(Error::InvalidEdge { j, k });
    }
    // Node j owns edges [start, start + j + 2) with start = Σ_{i<j} (i + 2).
    Ok(j * (j + 3) / 2 + k)
}

/// Inverse of [`edge_index`].
pub fn edge_pair(edge: usize) -> Result<(usize, usize)> {
    let mut start = 0;
    for j in 0..INTERMEDIATE_NODES {
        let width = j + 2;
        if edge < start + width {
            return Ok((j, edge - start));
        }
        start += width;
    }
    Err(Error::InvalidEdge { j: edge, k: usize::MAX })
}

/// The 7-node DAG cell: two inputs, four intermediates, concatenated output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTopology {
    pub cell_type: CellType,
    edges: Vec<(usize, usize)>,
}

impl CellTopology {
    pub fn new(cell_type: CellType) -> Self {
        let edges = (0..CELL_EDGES)
            .map(|e| edge_pair(e).expect("edge in range"))
            .collect();
        Self { cell_type, edges }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        INTERMEDIATE_NODES + 3
    }

    /// Edge ids entering intermediate node `j`, in source order.
    pub fn incoming(&self, j: usize) -> std::ops::Range<usize> {
        let start = j * (j + 3) / 2;
        start..start + j + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let table = [
            (0, 0),
            (0, 1),
            (1, 0),
            (1, 1),
            (1, 2),
            (2, 0),
            (2, 1),
            (2, 2),
            (2, 3),
            (3, 0),
            (3, 1),
            (3, 2),
            (3, 3),
            (3, 4),
        ];
        for (e, &(j, k)) in table.iter().enumerate() {
            assert_eq!(edge_index(j, k).unwrap(), e);
            assert_eq!(edge_pair(e).unwrap(), (j, k));
        }
        assert!(edge_index(0, 2).is_err());
        assert!(edge_index(4, 0).is_err());
        assert!(edge_pair(14).is_err());
    }

    #[test]
    fn incoming_covers_all_earlier_nodes() {
        let t = CellTopology::new(CellType::Normal);
        for j in 0..INTERMEDIATE_NODES {
            let sources: Vec<usize> = t.incoming(j).map(|e| t.edges()[e].1).collect();
            assert_eq!(sources, (0..j + 2).collect::<Vec<_>>());
        }
    }
}
