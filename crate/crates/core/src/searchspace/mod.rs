//! Desk-scale search spaces: the stacked DAG cell space and the chain space,
//! with the relaxed mixed-edge forward pass under both relaxations.

mod arch;
mod ops;
mod spec;
mod supernet;
mod topology;

pub use arch::{inject_skip_noise, noise_decay, AlphaGroup, ArchParams, GroupKind, RelaxMode};
pub use ops::{CandidateOp, OpKind};
pub use spec::{Space, SupernetSpec};
pub use supernet::{mixed_edge, node_aggregate, Cell, ForwardPass, Supernet, Trainable};
pub use topology::{edge_index, edge_pair, CellTopology, CellType, CELL_EDGES, INTERMEDIATE_NODES};


