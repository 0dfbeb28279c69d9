use serde::{Deserialize, Serialize};

use super::ops::OpKind;
use super::topology::CellType;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Stacked DAG cells.
    S1,
    /// Single-branch chain of mixed layers.
    S2,
}

fn default_cells() -> usize {
    3
}

fn default_layers() -> usize {
    8
}

fn default_feature_dim() -> usize {
    16
}

fn default_opset() -> Vec<OpKind> {
    OpKind::ALL.to_vec()
}

/// Supernet shape. Serialized as a flat key-value block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupernetSpec {
    pub space: Space,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_opset")]
    pub opset: Vec<OpKind>,
}

impl SupernetSpec {
    pub fn s1() -> Self {
        Self {
            space: Space::S1,
            cells: default_cells(),
            layers: default_layers(),
            feature_dim: default_feature_dim(),
            opset: default_opset(),
        }
    }

    pub fn s2() -> Self {
        Self {
            space: Space::S2,
            ..Self::s1()
        }
    }

    /// Same spec with `kind` dropped from the op set.
    pub fn without(mut self, kind: OpKind) -> Self {
        self.opset.retain(|&k| k != kind);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.opset.is_empty() {
            return Err(Error::Config("opset must not be empty".into()));
        }
        let mut seen = self.opset.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.opset.len() {
            return Err(Error::Config("opset contains duplicates".into()));
        }
        if self.feature_dim < 4 || self.feature_dim % 2 != 0 {
            return Err(Error::Config("feature_dim must be even and at least 4".into()));
        }
        match self.space {
            Space::S1 if self.cells == 0 => Err(Error::Config("cells must be positive".into())),
            Space::S2 if self.layers == 0 => Err(Error::Config("layers must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Cell types in stacking order; every third cell is a reduction.
    pub fn cell_types(&self) -> Vec<CellType> {
        (0..self.cells)
            .map(|i| if (i + 1) % 3 == 0 { CellType::Reduce } else { CellType::Normal })
            .collect()
    }

    pub fn to_config_block(&self) -> String {
        toml::to_string(self).expect("spec is always representable")
    }

    pub fn from_config_block(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_block_round_trip() {
        let spec = SupernetSpec::s1().without(OpKind::Skip);
        let text = spec.to_config_block();
        assert!(text.contains("space = \"s1\""), "{text}");
        assert_eq!(SupernetSpec::from_config_block(&text).unwrap(), spec);
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let spec = SupernetSpec::from_config_block("space = \"s2\"\nlayers = 4\n").unwrap();
        assert_eq!(spec.layers, 4);
        assert_eq!(spec.feature_dim, 16);
        assert_eq!(spec.opset.len(), 7);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(SupernetSpec::from_config_block("space = \"s1\"\nwidth = 3\n").is_err());
        assert!(SupernetSpec::from_config_block("space = \"s1\"\nopset = [\"conv\"]\n").is_err());
    }

    #[test]
    fn two_normal_one_reduction() {
        assert_eq!(
            SupernetSpec::s1().cell_types(),
            vec![CellType::Normal, CellType::Normal, CellType::Reduce]
        );
    }
}
