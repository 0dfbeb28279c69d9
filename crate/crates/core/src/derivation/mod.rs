//! Discretization of relaxed weights into genotypes, the genotype string
//! grammar, and random genotype sampling.

mod genotype;
mod rules;
mod sampler;

pub use crate::searchspace::{edge_index, edge_pair};
pub use genotype::{canonical, parse_genotype, CellGenotype, ChainGenotype, Encoding, Gene, Genotype, FIRST_NODE};
pub use rules::{
    derive_chain, derive_chain_argmax, derive_darts, derive_darts_cell, derive_fair, derive_fair_cell, EdgeRank,
    SigmaThreshold,
};
pub(crate) use rules::{argmax, top};
pub use sampler::{param_floor_quantile, random_genotype, GenotypeSampler, MAX_REJECTIONS, TOY_DIM};
