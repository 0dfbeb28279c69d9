use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::searchspace::{edge_index, OpKind, INTERMEDIATE_NODES};

/// Index of the first intermediate node in genotype strings.
pub const FIRST_NODE: usize = 2;

/// One chosen op: `op` on the edge from node `source` into node `node`.
/// Nodes 0 and 1 are the cell inputs; intermediates are 2..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gene {
    pub op: OpKind,
    pub node: usize,
    pub source: usize,
}

impl Gene {
    pub fn new(op: OpKind, node: usize, source: usize) -> Self {
        Self { op, node, source }
    }

    /// Edge id in the 14-edge cell.
    pub fn edge(&self) -> Result<usize> {
        if self.node < FIRST_NODE {
            return Err(Error::InvalidEdge {
                j: self.node,
                k: self.source,
            });
        }
        edge_index(self.node - FIRST_NODE, self.source).map_err(|_| Error::InvalidEdge {
            j: self.node,
            k: self.source,
        })
    }
}

/// How a genotype string spells its entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// `('op', j, k)`
    Triple,
    /// `('op', k)`, two entries per node in node order.
    Pair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellGenotype {
    pub genes: Vec<Gene>,
    pub concat: Range<usize>,
}

impl CellGenotype {
    pub fn new(genes: Vec<Gene>) -> Self {
        Self {
            genes,
            concat: FIRST_NODE..FIRST_NODE + INTERMEDIATE_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut per_node = [0usize; INTERMEDIATE_NODES];
        for (i, g) in self.genes.iter().enumerate() {
            g.edge()?;
            per_node[g.node - FIRST_NODE] += 1;
            if self.genes[..i].iter().any(|h| h.node == g.node && h.source == g.source) {
                return Err(Error::Config(format!("edge ({}, {}) chosen twice", g.node, g.source)));
            }
        }
        if let Some(j) = per_node.iter().position(|&c| c > 2) {
            return Err(Error::Config(format!("node {} has more than two inputs", j + FIRST_NODE)));
        }
        Ok(())
    }

    pub fn count(&self, op: OpKind) -> usize {
        self.genes.iter().filter(|g| g.op == op).count()
    }

    /// Intermediate nodes with at least one chosen input.
    pub fn active_nodes(&self) -> usize {
        (FIRST_NODE..FIRST_NODE + INTERMEDIATE_NODES)
            .filter(|&j| self.genes.iter().any(|g| g.node == j))
            .count()
    }

    /// Representable in pair form: exactly two entries per node, nodes ascending.
    pub fn is_pair_form(&self) -> bool {
        self.genes.len() == 2 * INTERMEDIATE_NODES
            && self
                .genes
                .iter()
                .enumerate()
                .all(|(i, g)| g.node == FIRST_NODE + i / 2)
    }

    /// Trainable scalars of the chosen ops; edges leaving the cell inputs of
    /// a reduction cell run at `input_dim`, everything else at `node_dim`.
    pub fn param_count(&self, input_dim: usize, node_dim: usize) -> usize {
        self.genes
            .iter()
            .map(|g| g.op.param_count(if g.source < 2 { input_dim } else { node_dim }))
            .sum()
    }
}

/// A discrete cell architecture: a normal and a reduction cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genotype {
    pub normal: CellGenotype,
    pub reduce: CellGenotype,
    pub encoding: Encoding,
}

impl Genotype {
    pub fn new(normal: Vec<Gene>, reduce: Vec<Gene>, encoding: Encoding) -> Result<Self> {
        let g = Self {
            normal: CellGenotype::new(normal),
            reduce: CellGenotype::new(reduce),
            encoding,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.normal.validate()?;
        self.reduce.validate()?;
        if self.encoding == Encoding::Pair && !(self.normal.is_pair_form() && self.reduce.is_pair_form()) {
            return Err(Error::Config(
                "pair encoding needs exactly two entries per node in node order".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> [&CellGenotype; 2] {
        [&self.normal, &self.reduce]
    }

    /// Empty or partially connected cells, legal but worth flagging.
    pub fn is_degenerate(&self) -> bool {
        self.cells().iter().any(|c| c.active_nodes() < INTERMEDIATE_NODES)
    }

    /// Toy size: chosen-op scalars with the normal cell at `dim` and the
    /// reduction cell halving `dim`.
    pub fn param_count(&self, dim: usize) -> usize {
        self.normal.param_count(dim, dim) + self.reduce.param_count(dim, dim / 2)
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |f: &mut fmt::Formatter<'_>, c: &CellGenotype| -> fmt::Result {
            f.write_str("[")?;
            for (i, g) in c.genes.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                match self.encoding {
                    Encoding::Triple => write!(f, "('{}', {}, {})", g.op, g.node, g.source)?,
                    Encoding::Pair => write!(f, "('{}', {})", g.op, g.source)?,
                }
            }
            f.write_str("]")
        };
        f.write_str("Genotype(normal=")?;
        cell(f, &self.normal)?;
        write!(
            f,
            ", normal_concat=range({}, {}), reduce=",
            self.normal.concat.start, self.normal.concat.end
        )?;
        cell(f, &self.reduce)?;
        write!(
            f,
            ", reduce_concat=range({}, {}))",
            self.reduce.concat.start, self.reduce.concat.end
        )
    }
}

/// Whitespace collapsed to single spaces and `\_` unescaped, so table
/// strings copied from typeset sources compare against [`Genotype::serialize`].
pub fn canonical(s: &str) -> String {
    s.replace("\\_", "_").split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> Result<()> {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            self.err(format!("expected `{token}`"))
        }
    }

    fn try_eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    /// `key=` with `\_` accepted for underscores.
    fn key(&mut self, key: &str) -> Result<()> {
        self.skip_ws();
        let start = self.pos;
        for c in key.chars() {
            let ok = if c == '_' {
                self.try_eat_raw("\\_") || self.try_eat_raw("_")
            } else {
                self.try_eat_raw(c.encode_utf8(&mut [0; 4]))
            };
            if !ok {
                self.pos = start;
                return self.err(format!("expected `{key}=`"));
            }
        }
        self.eat("=")
    }

    fn try_eat_raw(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<usize> {
        self.skip_ws();
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return self.err("expected an integer");
        }
        let value = self.rest()[..digits].parse().or_else(|_| self.err("integer out of range"))?;
        self.pos += digits;
        Ok(value)
    }

    fn op(&mut self) -> Result<OpKind> {
        self.eat("'")?;
        let start = self.pos;
        let len = match self.rest().find('\'') {
            Some(n) => n,
            None => return self.err("unterminated op name"),
        };
        let name = self.rest()[..len].replace("\\_", "_");
        let kind = name.parse::<OpKind>().map_err(|e| match e {
            Error::UnknownOp { name, valid } => Error::Parse {
                offset: start,
                message: format!("unknown operation '{name}', expected one of: {valid}"),
            },
            other => other,
        })?;
        self.pos += len + 1;
        Ok(kind)
    }

    /// Entries as (op, first int, optional second int).
    fn list(&mut self) -> Result<Vec<(usize, OpKind, usize, Option<usize>)>> {
        self.eat("[")?;
        let mut out = Vec::new();
        if self.try_eat("]") {
            return Ok(out);
        }
        loop {
            self.skip_ws();
            let at = self.pos;
            self.eat("(")?;
            let op = self.op()?;
            self.eat(",")?;
            let a = self.int()?;
            let b = if self.try_eat(",") { Some(self.int()?) } else { None };
            self.eat(")")?;
            out.push((at, op, a, b));
            if self.try_eat("]") {
                return Ok(out);
            }
            self.eat(",")?;
        }
    }

    fn range(&mut self) -> Result<Range<usize>> {
        self.eat("range")?;
        self.eat("(")?;
        let a = self.int()?;
        self.eat(",")?;
        let b = self.int()?;
        self.eat(")")?;
        Ok(a..b)
    }
}

fn build_cell(
    entries: Vec<(usize, OpKind, usize, Option<usize>)>,
    encoding: Encoding,
    list_start: usize,
) -> Result<Vec<Gene>> {
    if encoding == Encoding::Pair && entries.len() != 2 * INTERMEDIATE_NODES {
        return Err(Error::Parse {
            offset: list_start,
            message: format!(
                "pair format needs {} entries, found {}",
                2 * INTERMEDIATE_NODES,
                entries.len()
            ),
        });
    }
    let mut genes = Vec::with_capacity(entries.len());
    for (i, (at, op, a, b)) in entries.into_iter().enumerate() {
        let gene = match (encoding, b) {
            (Encoding::Triple, Some(k)) => Gene::new(op, a, k),
            (Encoding::Pair, None) => Gene::new(op, FIRST_NODE + i / 2, a),
            _ => {
                return Err(Error::Parse {
                    offset: at,
                    message: "pair and triple entries mixed".into(),
                })
            }
        };
        if gene.edge().is_err() {
            return Err(Error::Parse {
                offset: at,
                message: format!("invalid edge ({}, {})", gene.node, gene.source),
            });
        }
        genes.push(gene);
    }
    Ok(genes)
}

/// Parses `Genotype(normal=[...], normal_concat=range(a, b), reduce=[...],
/// reduce_concat=range(a, b))` with pair or triple entries.
pub fn parse_genotype(s: &str) -> Result<Genotype> {
    let mut p = Parser { src: s, pos: 0 };
    p.eat("Genotype")?;
    p.eat("(")?;
    p.key("normal")?;
    p.skip_ws();
    let normal_at = p.pos;
    let normal = p.list()?;
    p.eat(",")?;
    p.key("normal_concat")?;
    let normal_concat = p.range()?;
    p.eat(",")?;
    p.key("reduce")?;
    p.skip_ws();
    let reduce_at = p.pos;
    let reduce = p.list()?;
    p.eat(",")?;
    p.key("reduce_concat")?;
    let reduce_concat = p.range()?;
    p.eat(")")?;
    p.skip_ws();
    if !p.rest().is_empty() {
        return p.err("trailing characters");
    }

    let first = normal.iter().chain(&reduce).next();
    let encoding = match first {
        Some((_, _, _, None)) => Encoding::Pair,
        _ => Encoding::Triple,
    };
    let g = Genotype {
        normal: CellGenotype {
            genes: build_cell(normal, encoding, normal_at)?,
            concat: normal_concat,
        },
        reduce: CellGenotype {
            genes: build_cell(reduce, encoding, reduce_at)?,
            concat: reduce_concat,
        },
        encoding,
    };
    g.validate().map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    Ok(g)
}

/// Chain architecture: the chosen ops of every layer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ChainGenotype {
    pub layers: Vec<Vec<OpKind>>,
}

impl ChainGenotype {
    pub fn validate(&self) -> Result<()> {
        for (l, ops) in self.layers.iter().enumerate() {
            if ops.len() > 2 {
                return Err(Error::Config(format!("layer {l} has {} ops, at most 2 allowed", ops.len())));
            }
            if ops.len() == 2 && ops[0] == ops[1] {
                return Err(Error::Config(format!("layer {l} repeats {}", ops[0])));
            }
        }
        Ok(())
    }

    /// A layer whose only surviving op is skip.
    pub fn is_removed(&self, layer: usize) -> bool {
        self.layers[layer] == [OpKind::Skip]
    }

    pub fn removed_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&l| self.is_removed(l)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("op names serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s).map_err(|e| Error::Parse {
            offset: e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        g.validate()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAIR_B: &str = "Genotype(normal=[('sep_conv_3x3', 2, 0), ('sep_conv_3x3', 2, 1), ('sep_conv_3x3', 3, 1), ('dil_conv_3x3', 4, 0), ('sep_conv_5x5', 4, 1), ('dil_conv_5x5', 5, 1)], normal_concat=range(2, 6), reduce=[('skip_connect', 2, 0), ('dil_conv_3x3', 2, 1), ('skip_connect', 3, 0), ('dil_conv_3x3', 3, 1), ('max_pool_3x3', 4, 0), ('sep_conv_3x3', 4, 1), ('skip_connect', 5, 2), ('max_pool_3x3', 5, 0)], reduce_concat=range(2, 6))";

    #[test]
    fn triple_format() {
        let g = parse_genotype(FAIR_B).unwrap();
        assert_eq!(g.encoding, Encoding::Triple);
        assert_eq!(g.normal.genes[0], Gene::new(OpKind::LinSmall, 2, 0));
        assert_eq!(g.normal.genes[1], Gene::new(OpKind::LinSmall, 2, 1));
        assert_eq!(g.reduce.count(OpKind::Skip), 3);
        assert_eq!(g.serialize(), FAIR_B);
    }

    #[test]
    fn pair_format_assigns_nodes_positionally() {
        let s = "Genotype(normal=[('max_pool_3x3', 0), ('max_pool_3x3', 1), ('avg_pool_3x3', 0), ('dil_conv_5x5', 2), ('skip_connect', 1), ('max_pool_3x3', 0), ('skip_connect', 3), ('avg_pool_3x3', 1)], normal_concat=range(2, 6), reduce=[('max_pool_3x3', 0), ('max_pool_3x3', 1), ('avg_pool_3x3', 0), ('dil_conv_5x5', 2), ('skip_connect', 1), ('max_pool_3x3', 0), ('skip_connect', 3), ('avg_pool_3x3', 1)], reduce_concat=range(2, 6))";
        let g = parse_genotype(s).unwrap();
        assert_eq!(g.encoding, Encoding::Pair);
        assert_eq!(g.normal.genes[0], Gene::new(OpKind::MaxSmooth, 2, 0));
        assert_eq!(g.normal.genes[1], Gene::new(OpKind::MaxSmooth, 2, 1));
        assert_eq!(g.normal.genes[7].node, 5);
        assert_eq!(g.serialize(), s);
    }

    #[test]
    fn latex_escapes_and_line_breaks() {
        let raw = "Genotype(normal=[('sep\\_conv\\_3x3', 2, 0)], normal\\_concat=range(2, 6), \n\t\t reduce=[], reduce\\_concat=range(2, 6))";
        let g = parse_genotype(raw).unwrap();
        assert_eq!(g.serialize(), canonical(raw));
        assert!(g.is_degenerate());
    }

    #[test]
    fn errors_carry_offsets() {
        let bad = FAIR_B.replace("('sep_conv_3x3', 2, 1)", "('sep_conv_3x3', 2 1)");
        match parse_genotype(&bad) {
            Err(Error::Parse { offset, .. }) => assert!(bad[offset..].starts_with("1)")),
            other => panic!("{other:?}"),
        }
        let unknown = FAIR_B.replacen("sep_conv_3x3", "conv_7x7", 1);
        match parse_genotype(&unknown) {
            Err(Error::Parse { offset, message }) => {
                assert!(unknown[offset..].starts_with("conv_7x7"));
                assert!(message.contains("skip_connect"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_genotype("Genotype(normal=[").is_err());
        assert!(parse_genotype(&format!("{FAIR_B} x")).is_err());
    }

    #[test]
    fn structural_errors() {
        // source must precede the node
        let s = FAIR_B.replace("('sep_conv_3x3', 3, 1)", "('sep_conv_3x3', 3, 3)");
        assert!(parse_genotype(&s).is_err());
        // three inputs into node 2
        let s = FAIR_B.replace("('sep_conv_3x3', 3, 1)", "('sep_conv_3x3', 2, 1)");
        assert!(parse_genotype(&s).is_err());
        // mixed forms
        let s = FAIR_B.replace("('sep_conv_3x3', 3, 1)", "('sep_conv_3x3', 1)");
        assert!(parse_genotype(&s).is_err());
    }

    #[test]
    fn chain_json() {
        let g = ChainGenotype {
            layers: vec![vec![OpKind::Skip], vec![OpKind::LinSmall, OpKind::Skip], vec![]],
        };
        let s = g.to_json();
        assert_eq!(s, r#"[["skip_connect"],["sep_conv_3x3","skip_connect"],[]]"#);
        assert_eq!(ChainGenotype::from_json(&s).unwrap(), g);
        assert_eq!(g.removed_layers(), vec![0]);
        assert!(ChainGenotype::from_json(r#"[["a"]]"#).is_err());
    }
}
