//! The relaxed supernet and its forward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{ArchParams, GroupKind, RelaxMode};
use super::ops::{halving_matrix, CandidateOp, OpKind};
use super::spec::{Space, SupernetSpec};
use super::topology::{CellTopology, CellType, INTERMEDIATE_NODES};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Weighted sum of the candidate outputs on one edge.
///
/// `alpha_row` is the edge's α row recorded on the tape; its relaxation
/// depends on `mode`.
pub fn mixed_edge(tape: &mut Tape, op_outputs: &[Var], alpha_row: Var, mode: RelaxMode) -> Result<Var> {
    let width = tape.value(alpha_row).len();
    if op_outputs.len() != width {
        return Err(Error::invalid(
            "mixed_edge",
            format!("{} op outputs for an α row of {}", op_outputs.len(), width),
        ));
    }
    let weights = match mode {
        RelaxMode::SoftmaxExclusive => tape.softmax(alpha_row)?,
        RelaxMode::SigmoidCollaborative => tape.sigmoid(alpha_row)?,
    };
    let mut terms = Vec::with_capacity(width);
    for (k, &out) in op_outputs.iter().enumerate() {
        let w = tape.pick(weights, k)?;
        terms.push(tape.scale(out, w)?);
    }
    tape.sum_all(&terms)
}

/// Elementwise sum of the incoming edge outputs of a node.
pub fn node_aggregate(tape: &mut Tape, incoming: &[Var]) -> Result<Var> {
    if incoming.is_empty() {
        return Err(Error::invalid("node_aggregate", "no incoming edges"));
    }
    tape.sum_all(incoming)
}

/// Hands out parameter leaves in the fixed traversal order.
struct Leaves<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> Leaves<'a> {
    fn take(&mut self, n: usize) -> &'a [Var] {
        let s = &self.vars[self.pos..self.pos + n];
        self.pos += n;
        s
    }
}

#[derive(Debug, Clone)]
struct Edge {
    ops: Vec<CandidateOp>,
    /// Ops run at the input width and are halved afterwards.
    halve: bool,
}

impl Edge {
    fn param_count(&self) -> usize {
        self.ops.iter().map(|o| o.params().len()).sum()
    }

    fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        alpha_row: Var,
        mode: RelaxMode,
        halver: Option<Var>,
        leaves: &mut Leaves,
    ) -> Result<Var> {
        let mut outs = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let own = leaves.take(op.params().len());
            let mut y = op.forward(tape, x, own)?;
            if self.halve {
                let h = halver.expect("halving edges carry a projection");
                y = tape.matvec(h, y)?;
            }
            outs.push(y);
        }
        mixed_edge(tape, &outs, alpha_row, mode)
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("positive std");
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| normal.sample(rng)).collect())
        .expect("shape matches data")
        .with_grad()
}

/// One instantiated DAG cell with its own op weights.
#[derive(Debug, Clone)]
pub struct Cell {
    pub topology: CellTopology,
    /// Width of the intermediate nodes.
    pub node_dim: usize,
    /// Width the inputs are brought to before the edges.
    pub input_dim: usize,
    pre: [Option<Tensor>; 2],
    edges: Vec<Edge>,
}

impl Cell {
    fn new(
        cell_type: CellType,
        in_dims: [usize; 2],
        width: usize,
        opset: &[OpKind],
        rng: &mut impl Rng,
    ) -> Self {
        let topology = CellTopology::new(cell_type);
        let reduce = cell_type == CellType::Reduce;
        let node_dim = if reduce { width / 2 } else { width };
        let pre = in_dims.map(|d| (d != width).then(|| gaussian(width, d, rng)));
        let edges = topology
            .edges()
            .iter()
            .map(|&(_, k)| {
                let halve = reduce && k < 2;
                let dim = if halve { width } else { node_dim };
                Edge {
                    ops: opset.iter().map(|&kind| CandidateOp::new(kind, dim, rng)).collect(),
                    halve,
                }
            })
            .collect();
        Self {
            topology,
            node_dim,
            input_dim: width,
            pre,
            edges,
        }
    }

    pub fn output_dim(&self) -> usize {
        INTERMEDIATE_NODES * self.node_dim
    }

    fn weights<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.extend(self.pre.iter().flatten());
        for e in &self.edges {
            for op in &e.ops {
                out.extend(op.params());
            }
        }
    }

    fn weights_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend(self.pre.iter_mut().flatten());
        for e in &mut self.edges {
            for op in &mut e.ops {
                out.extend(op.params_mut());
            }
        }
    }

    fn param_leaf_count(&self) -> usize {
        self.pre.iter().flatten().count() + self.edges.iter().map(Edge::param_count).sum::<usize>()
    }

    /// Runs the cell on its two inputs and returns the concatenation of the
    /// four intermediate nodes.
    fn forward(
        &self,
        tape: &mut Tape,
        inputs: [Var; 2],
        alpha_rows: &[Var],
        mode: RelaxMode,
        leaves: &mut Leaves,
    ) -> Result<Var> {
        if alpha_rows.len() != self.edges.len() {
            return Err(Error::invalid(
                "forward_cell",
                format!("{} α rows for {} edges", alpha_rows.len(), self.edges.len()),
            ));
        }
        let mut states = Vec::with_capacity(INTERMEDIATE_NODES + 2);
        for (x, pre) in inputs.into_iter().zip(&self.pre) {
            let s = match pre {
                Some(w) => {
                    if tape.shape(x).last() != Some(&w.shape()[1]) {
                        return Err(Error::ShapeMismatch {
                            primitive: "forward_cell",
                            left: w.shape().to_vec(),
                            right: tape.shape(x).to_vec(),
                        });
                    }
                    let w = leaves.take(1)[0];
                    let h = tape.matvec(w, x)?;
                    tape.rms_norm(h)?
                }
                None => x,
            };
            if tape.shape(s).last() != Some(&self.input_dim) {
                return Err(Error::ShapeMismatch {
                    primitive: "forward_cell",
                    left: vec![self.input_dim],
                    right: tape.shape(s).to_vec(),
                });
            }
            states.push(s);
        }
        let halver = if self.topology.cell_type == CellType::Reduce {
            Some(tape.constant(vec![self.node_dim, self.input_dim], halving_matrix(self.input_dim))?)
        } else {
            None
        };
        for j in 0..INTERMEDIATE_NODES {
            let mut incoming = Vec::with_capacity(j + 2);
            for e in self.topology.incoming(j) {
                let k = self.topology.edges()[e].1;
                let y = self.edges[e].forward(tape, states[k], alpha_rows[e], mode, halver, leaves)?;
                incoming.push(y);
            }
            states.push(node_aggregate(tape, &incoming)?);
        }
        tape.concat(&states[2..])
    }
}

#[derive(Debug, Clone)]
enum Body {
    Cells(Vec<Cell>),
    Chain(Vec<Edge>),
}

/// Result of one supernet forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    pub logits: Var,
    /// One leaf per tensor of [`Supernet::weights`], in that order.
    pub weight_leaves: Vec<Var>,
    /// One leaf per row of [`ArchParams::tensors`], in that order.
    pub alpha_leaves: Vec<Var>,
}

/// Which leaves of a forward pass are differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub weights: bool,
    pub alpha: bool,
}

impl Trainable {
    pub const WEIGHTS: Self = Self { weights: true, alpha: false };
    pub const ALPHA: Self = Self { weights: false, alpha: true };
    pub const BOTH: Self = Self { weights: true, alpha: true };
}

/// Over-parameterized network holding every candidate op on every edge.
#[derive(Debug, Clone)]
pub struct Supernet {
    spec: SupernetSpec,
    input_dim: usize,
    classes: usize,
    stem: Tensor,
    body: Body,
    classifier: Tensor,
}

impl Supernet {
    pub fn new(spec: &SupernetSpec, input_dim: usize, classes: usize, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let d = spec.feature_dim;
        let stem = gaussian(d, input_dim, rng);
        let (body, out_dim) = match spec.space {
            Space::S1 => {
                let mut cells = Vec::new();
                let mut dims = [d, d];
                let mut width = d;
                for cell_type in spec.cell_types() {
                    if cell_type == CellType::Reduce && width % 2 != 0 {
                        return Err(Error::Config(format!("cannot halve odd width {width}")));
                    }
                    let cell = Cell::new(cell_type, dims, width, &spec.opset, rng);
                    width = cell.node_dim;
                    dims = [dims[1], cell.output_dim()];
                    cells.push(cell);
                }
                (Body::Cells(cells), dims[1])
            }
            Space::S2 => {
                let layers = (0..spec.layers)
                    .map(|_| Edge {
                        ops: spec.opset.iter().map(|&k| CandidateOp::new(k, d, rng)).collect(),
                        halve: false,
                    })
                    .collect();
                (Body::Chain(layers), d)
            }
        };
        let classifier = gaussian(classes, out_dim, rng);
        Ok(Self {
            spec: spec.clone(),
            input_dim,
            classes,
            stem,
            body,
            classifier,
        })
    }

    pub fn spec(&self) -> &SupernetSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn cells(&self) -> &[Cell] {
        match &self.body {
            Body::Cells(c) => c,
            Body::Chain(_) => &[],
        }
    }

    /// Trainable network weights in a fixed order.
    pub fn weights(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.stem];
        match &self.body {
            Body::Cells(cells) => cells.iter().for_each(|c| c.weights(&mut out)),
            Body::Chain(layers) => {
                for e in layers {
                    for op in &e.ops {
                        out.extend(op.params());
                    }
                }
            }
        }
        out.push(&self.classifier);
        out
    }

    /// Same order as [`Supernet::weights`].
    pub fn weights_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.stem];
        match &mut self.body {
            Body::Cells(cells) => cells.iter_mut().for_each(|c| c.weights_mut(&mut out)),
            Body::Chain(layers) => {
                for e in layers {
                    for op in &mut e.ops {
                        out.extend(op.params_mut());
                    }
                }
            }
        }
        out.push(&mut self.classifier);
        out
    }

    pub fn n_weights(&self) -> usize {
        self.weights().iter().map(|t| t.len()).sum()
    }

    fn check_arch(&self, arch: &ArchParams) -> Result<()> {
        if arch.opset != self.spec.opset {
            return Err(Error::Config("architecture op set differs from the supernet".into()));
        }
        match &self.body {
            Body::Cells(cells) => {
                for c in cells {
                    let kind = GroupKind::from_cell(c.topology.cell_type);
                    let rows = arch.group(kind).map(|g| g.n_rows());
                    if rows != Some(c.topology.edges().len()) {
                        return Err(Error::Config(format!("missing or misshapen {} α", kind.name())));
                    }
                }
            }
            Body::Chain(layers) => {
                if arch.group(GroupKind::Chain).map(|g| g.n_rows()) != Some(layers.len()) {
                    return Err(Error::Config("chain α must have one row per layer".into()));
                }
            }
        }
        Ok(())
    }

    /// Records the forward pass on `x` (shape `[n, input_dim]`) and returns
    /// the logits `[n, classes]` plus the parameter leaves.
    pub fn forward(&self, tape: &mut Tape, x: Var, arch: &ArchParams, train: Trainable) -> Result<ForwardPass> {
        self.check_arch(arch)?;
        if tape.shape(x).last() != Some(&self.input_dim) {
            return Err(Error::ShapeMismatch {
                primitive: "supernet",
                left: vec![self.input_dim],
                right: tape.shape(x).to_vec(),
            });
        }
        let weight_leaves: Vec<Var> = self
            .weights()
            .into_iter()
            .map(|t| leaf_with(tape, t.shape().to_vec(), t.data().to_vec(), train.weights))
            .collect::<Result<_>>()?;
        let mut alpha_leaves = Vec::with_capacity(arch.len() / arch.n_ops().max(1));
        let mut group_rows: Vec<Vec<Var>> = Vec::new();
        for g in arch.groups() {
            let mut rows = Vec::with_capacity(g.n_rows());
            for r in 0..g.n_rows() {
                let v = leaf_with(tape, vec![arch.n_ops()], g.effective_row(r), train.alpha)?;
                rows.push(v);
                alpha_leaves.push(v);
            }
            group_rows.push(rows);
        }

        let logits = self.forward_from_leaves(tape, x, &weight_leaves, &group_rows, arch.mode)?;
        Ok(ForwardPass {
            logits,
            weight_leaves,
            alpha_leaves,
        })
    }

    /// Forward pass over leaves the caller already recorded: one per tensor
    /// of [`Supernet::weights`], and one α row leaf per edge (or layer) for
    /// each group in [`ArchParams::groups`] order.
    pub fn forward_from_leaves(
        &self,
        tape: &mut Tape,
        x: Var,
        weight_leaves: &[Var],
        group_rows: &[Vec<Var>],
        mode: RelaxMode,
    ) -> Result<Var> {
        if weight_leaves.len() != self.leaf_count() {
            return Err(Error::invalid(
                "supernet",
                format!("{} weight leaves for {} tensors", weight_leaves.len(), self.leaf_count()),
            ));
        }
        let mut leaves = Leaves {
            vars: weight_leaves,
            pos: 0,
        };
        let stem = leaves.take(1)[0];
        let s = tape.matvec(stem, x)?;
        let s = tape.rms_norm(s)?;
        let features = match &self.body {
            Body::Cells(cells) => {
                let (mut s0, mut s1) = (s, s);
                let mut kinds: Vec<CellType> = Vec::new();
                for c in cells {
                    if !kinds.contains(&c.topology.cell_type) {
                        kinds.push(c.topology.cell_type);
                    }
                }
                kinds.sort_by_key(|k| *k == CellType::Reduce);
                for cell in cells {
                    let g = kinds
                        .iter()
                        .position(|&k| k == cell.topology.cell_type)
                        .expect("collected above");
                    let rows = group_rows
                        .get(g)
                        .ok_or_else(|| Error::invalid("forward_cell", "missing α group"))?;
                    let out = cell.forward(tape, [s0, s1], rows, mode, &mut leaves)?;
                    s0 = s1;
                    s1 = out;
                }
                s1
            }
            Body::Chain(layers) => {
                let rows = group_rows
                    .first()
                    .filter(|r| r.len() == layers.len())
                    .ok_or_else(|| Error::invalid("forward_chain", "need one α row per layer"))?;
                let mut h = s;
                for (l, layer) in layers.iter().enumerate() {
                    h = layer.forward(tape, h, rows[l], mode, None, &mut leaves)?;
                }
                h
            }
        };
        let cls = leaves.take(1)[0];
        tape.matvec(cls, features)
    }

    /// Leaf count check used by tests: every tensor gets exactly one leaf.
    pub fn leaf_count(&self) -> usize {
        2 + match &self.body {
            Body::Cells(cells) => cells.iter().map(Cell::param_leaf_count).sum::<usize>(),
            Body::Chain(layers) => layers.iter().map(Edge::param_count).sum(),
        }
    }
}

fn leaf_with(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>, grad: bool) -> Result<Var> {
    if grad {
        tape.variable(shape, data)
    } else {
        tape.constant(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(tape: &mut Tape, n: usize, d: usize, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
        tape.constant(vec![n, d], data).unwrap()
    }

    #[test]
    fn mixed_edge_softmax_zero_is_mean() {
        let mut tape = Tape::new();
        let outs: Vec<Var> = (0..7)
            .map(|k| tape.constant(vec![2], vec![k as f64, -(k as f64) * 2.0]).unwrap())
            .collect();
        let alpha = tape.variable(vec![7], vec![0.0; 7]).unwrap();
        let y = mixed_edge(&mut tape, &outs, alpha, RelaxMode::SoftmaxExclusive).unwrap();
        let v = tape.value(y);
        assert!((v[0] - 3.0).abs() < 1e-14 && (v[1] + 6.0).abs() < 1e-14);
    }

    #[test]
    fn mixed_edge_sigmoid_zero_is_half_sum() {
        let mut tape = Tape::new();
        let outs: Vec<Var> = (0..7).map(|k| tape.constant(vec![1], vec![k as f64]).unwrap()).collect();
        let alpha = tape.variable(vec![7], vec![0.0; 7]).unwrap();
        let y = mixed_edge(&mut tape, &outs, alpha, RelaxMode::SigmoidCollaborative).unwrap();
        assert!((tape.scalar(y) - 0.5 * 21.0).abs() < 1e-14);
    }

    #[test]
    fn mixed_edge_length_mismatch() {
        let mut tape = Tape::new();
        let outs: Vec<Var> = (0..6).map(|_| tape.constant(vec![1], vec![1.0]).unwrap()).collect();
        let alpha = tape.variable(vec![7], vec![0.0; 7]).unwrap();
        assert!(mixed_edge(&mut tape, &outs, alpha, RelaxMode::SoftmaxExclusive).is_err());
    }

    #[test]
    fn ambiguous_edge_weighting() {
        // Log of the target weights reproduces them up to normalisation.
        let target = [0.174, 0.170, 0.176, 0.112, 0.116, 0.132, 0.118];
        let alpha: Vec<f64> = target.iter().map(|p: &f64| p.ln()).collect();
        let w = RelaxMode::SoftmaxExclusive.relax(&alpha);
        let total: f64 = target.iter().sum();
        for (a, b) in w.iter().zip(&target) {
            assert!((a - b / total).abs() < 1e-12);
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn node_aggregate_cases() {
        let mut tape = Tape::new();
        let v = tape.constant(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(node_aggregate(&mut tape, &[v]).unwrap(), v);
        let neg = tape.scale_by(v, -1.0).unwrap();
        let z = node_aggregate(&mut tape, &[v, neg]).unwrap();
        assert_eq!(tape.value(z), &[0.0, 0.0, 0.0]);
        assert!(node_aggregate(&mut tape, &[]).is_err());
    }

    #[test]
    fn s1_output_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = SupernetSpec::s1();
        let net = Supernet::new(&spec, 16, 4, &mut rng).unwrap();
        let dims: Vec<usize> = net.cells().iter().map(|c| c.output_dim()).collect();
        assert_eq!(dims, vec![64, 64, 32]);
        assert_eq!(net.leaf_count(), net.weights().len());
        let arch = ArchParams::zeros(&spec, RelaxMode::SoftmaxExclusive);
        let mut tape = Tape::new();
        let x = batch(&mut tape, 5, 16, 1);
        let fp = net.forward(&mut tape, x, &arch, Trainable::BOTH).unwrap();
        assert_eq!(tape.shape(fp.logits), &[5, 4]);
        assert_eq!(fp.alpha_leaves.len(), 28);
    }

    #[test]
    fn chain_sigmoid_saturation_selects_first_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spec = SupernetSpec::s2();
        spec.layers = 1;
        let net = Supernet::new(&spec, 16, 4, &mut rng).unwrap();
        let mut arch = ArchParams::zeros(&spec, RelaxMode::SigmoidCollaborative);
        let mut row = vec![-40.0; 7];
        row[0] = 40.0;
        arch.set_row(0, 0, &row);
        let mut tape = Tape::new();
        let x = batch(&mut tape, 3, 16, 5);
        let fp = net.forward(&mut tape, x, &arch, Trainable::BOTH).unwrap();
        // Manually: stem, then max-smooth alone, then the classifier.
        let stem = tape.leaf(net.weights()[0]);
        let s = tape.matvec(stem, x).unwrap();
        let s = tape.rms_norm(s).unwrap();
        let m = tape.window_max(s, 1).unwrap();
        let m = tape.rms_norm(m).unwrap();
        let cls = tape.leaf(net.weights().last().unwrap());
        let expect = tape.matvec(cls, m).unwrap();
        for (a, b) in tape.value(fp.logits).iter().zip(tape.value(expect)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn readout_check(spec: &SupernetSpec, mode: RelaxMode, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Supernet::new(spec, 4, 3, &mut rng).unwrap();
        let arch = ArchParams::zeros(spec, mode);
        // Sigmoid weights near 0.5 sum to ~3.5 per edge; centring α lower keeps
        // the loss O(1) so the differences are not swamped by roundoff.
        let centre = match mode {
            RelaxMode::SoftmaxExclusive => 0.0,
            RelaxMode::SigmoidCollaborative => -2.5,
        };
        let normal = Normal::new(centre, 0.5).unwrap();
        let rows: Vec<Tensor> = arch
            .tensors()
            .iter()
            .map(|t| Tensor::new(t.shape().to_vec(), (0..t.len()).map(|_| normal.sample(&mut rng)).collect()).unwrap())
            .collect();
        let sizes: Vec<usize> = arch.groups().iter().map(|g| g.n_rows()).collect();
        let weights: Vec<Tensor> = net.weights().into_iter().cloned().collect();
        let labels = [0usize, 2, 1];
        let build_rows = |tape: &mut Tape, v: &[Var]| -> Vec<Vec<Var>> {
            let mut out = Vec::new();
            let mut pos = 0;
            for &n in &sizes {
                out.push(v[pos..pos + n].to_vec());
                pos += n;
            }
            let _ = tape;
            out
        };
        let alpha_err = grad_check(&rows, 1e-5, |tape, v| {
            let x = batch(tape, 3, 4, 9);
            let w: Vec<Var> = weights.iter().map(|t| tape.leaf(&t.clone().with_grad())).collect();
            let groups = build_rows(tape, v);
            let logits = net.forward_from_leaves(tape, x, &w, &groups, mode)?;
            tape.cross_entropy(logits, &labels)
        })
        .unwrap();
        let alpha_const: Vec<Tensor> = rows.clone();
        let weight_err = grad_check(&weights, 1e-5, |tape, w| {
            let x = batch(tape, 3, 4, 9);
            let a: Vec<Var> = alpha_const.iter().map(|t| tape.leaf(t)).collect();
            let groups = build_rows(tape, &a);
            let logits = net.forward_from_leaves(tape, x, w, &groups, mode)?;
            tape.cross_entropy(logits, &labels)
        })
        .unwrap();
        (alpha_err, weight_err)
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let mut spec = SupernetSpec::s1();
        spec.cells = 3;
        spec.feature_dim = 4;
        let (a, w) = readout_check(&spec, RelaxMode::SoftmaxExclusive, 7);
        assert!(a < 1e-4 && w < 1e-4, "softmax: alpha {a}, weights {w}");
        let (a, w) = readout_check(&spec, RelaxMode::SigmoidCollaborative, 7);
        assert!(a < 1e-4 && w < 1e-4, "sigmoid: alpha {a}, weights {w}");
    }

    #[test]
    fn reduced_space_gradients_match_finite_differences() {
        let mut spec = SupernetSpec::s1().without(OpKind::Skip);
        spec.feature_dim = 4;
        let (a, w) = readout_check(&spec, RelaxMode::SoftmaxExclusive, 11);
        assert!(a < 1e-4 && w < 1e-4, "alpha {a}, weights {w}");
    }

    #[test]
    fn chain_gradients_match_finite_differences() {
        let mut spec = SupernetSpec::s2();
        spec.layers = 3;
        spec.feature_dim = 4;
        for mode in [RelaxMode::SoftmaxExclusive, RelaxMode::SigmoidCollaborative] {
            let (a, w) = readout_check(&spec, mode, 13);
            assert!(a < 1e-4 && w < 1e-4, "{mode:?}: alpha {a}, weights {w}");
        }
    }
}
