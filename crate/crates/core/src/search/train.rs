use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{NoiseSchedule, Optimization, SearchConfig};
use super::losses::alpha_objective;
use crate::analysis::{Snapshot, Trajectory};
use crate::autodiff::{adam_step, sgd_step, CosineSchedule, OptimState, Tape, Var};
use crate::error::{Error, Result};
use crate::searchspace::{inject_skip_noise, ArchParams, Supernet, SupernetSpec, Trainable};

/// Labelled rows `[n, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl Split {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 || inputs.len() != labels.len() * dim {
            return Err(Error::invalid(
                "split",
                format!("{} values for {} rows of width {}", inputs.len(), labels.len(), dim),
            ));
        }
        Ok(Self { inputs, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows at `idx`, flattened, with their labels.
    pub fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Epoch means of the losses seen during search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub zero_one_loss: f64,
    pub total_alpha_loss: f64,
}

#[derive(Default)]
struct Sums {
    train: f64,
    val: f64,
    zero_one: f64,
    total: f64,
    steps: usize,
}

impl Sums {
    fn report(&self, epoch: usize) -> LossReport {
        let n = self.steps.max(1) as f64;
        LossReport {
            epoch,
            train_loss: self.train / n,
            val_loss: self.val / n,
            zero_one_loss: self.zero_one / n,
            total_alpha_loss: self.total / n,
        }
    }
}

const DATA_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

/// Seeded RNG for one purpose of a run; streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Owns the supernet, α and optimizer state of one search run.
#[derive(Debug, Clone)]
pub struct Searcher {
    pub net: Supernet,
    pub arch: ArchParams,
    cfg: SearchConfig,
    w_state: OptimState,
    a_state: OptimState,
    data_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    val_cursor: usize,
    epoch: usize,
}

impl Searcher {
    pub fn new(spec: &SupernetSpec, cfg: &SearchConfig, input_dim: usize, classes: usize) -> Result<Self> {
        cfg.validate_steps()?;
        let net = Supernet::new(spec, input_dim, classes, &mut stream_rng(cfg.seed, INIT_STREAM))?;
        let arch = ArchParams::zeros(spec, cfg.mode);
        Ok(Self {
            w_state: OptimState::for_params(net.weights()),
            a_state: OptimState::for_params(arch.tensors()),
            net,
            arch,
            cfg: cfg.clone(),
            data_rng: stream_rng(cfg.seed, DATA_STREAM),
            noise_rng: stream_rng(cfg.seed, NOISE_STREAM),
            val_cursor: 0,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::from_arch(self.epoch, &self.arch)
    }

    fn w_lr(&self) -> f64 {
        CosineSchedule {
            base: self.cfg.w_lr,
            floor: self.cfg.w_lr_min.min(self.cfg.w_lr),
            total_epochs: self.cfg.epochs,
        }
        .lr_at(self.epoch)
    }

    fn shuffled_batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.data_rng);
        idx.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// Next validation batch, taken round-robin in a fixed order.
    fn val_batch(&mut self, val: &Split) -> Vec<usize> {
        let b = self.cfg.batch_size.min(val.len());
        let idx = (0..b).map(|i| (self.val_cursor + i) % val.len()).collect();
        self.val_cursor = (self.val_cursor + b) % val.len();
        idx
    }

    fn refresh_noise(&mut self) -> Result<()> {
        match self.cfg.noise {
            NoiseSchedule::Off => Ok(()),
            NoiseSchedule::SkipCosine {
                sigma0,
                horizon,
                all_ops,
            } => {
                if self.epoch > horizon {
                    self.arch.clear_noise();
                    return Ok(());
                }
                inject_skip_noise(&mut self.arch, self.epoch, horizon, sigma0, all_ops, &mut self.noise_rng)
            }
        }
    }

    fn check(&self, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Diverged { epoch: self.epoch })
        }
    }

    fn batch_input(tape: &mut Tape, data: &Split, idx: &[usize]) -> Result<(Var, Vec<usize>)> {
        let (x, labels) = data.gather(idx);
        Ok((tape.constant(vec![idx.len(), data.dim()], x)?, labels))
    }

    fn alpha_groups(&self, leaves: &[Var]) -> Vec<Vec<Var>> {
        let mut out = Vec::new();
        let mut pos = 0;
        for g in self.arch.groups() {
            out.push(leaves[pos..pos + g.n_rows()].to_vec());
            pos += g.n_rows();
        }
        out
    }

    /// One SGD step on the training loss with α frozen.
    fn weight_step(&mut self, data: &Split, idx: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let (x, labels) = Self::batch_input(&mut tape, data, idx)?;
        let fp = self.net.forward(&mut tape, x, &self.arch, Trainable::WEIGHTS)?;
        let loss = tape.cross_entropy(fp.logits, &labels)?;
        let value = self.check(tape.scalar(loss))?;
        let grads = tape.backward(loss)?;
        let lr = self.w_lr();
        let mut weights = self.net.weights_mut();
        for (w, &leaf) in weights.iter_mut().zip(&fp.weight_leaves) {
            grads.write_into(leaf, w)?;
        }
        sgd_step(&mut weights, &mut self.w_state, lr, self.cfg.w_momentum, self.cfg.w_decay)?;
        Ok(value)
    }

    /// One Adam step on the α objective with the weights frozen.
    fn alpha_step(&mut self, data: &Split, idx: &[usize]) -> Result<(f64, f64, f64)> {
        let mut tape = Tape::new();
        let (x, labels) = Self::batch_input(&mut tape, data, idx)?;
        let fp = self.net.forward(&mut tape, x, &self.arch, Trainable::ALPHA)?;
        let val = tape.cross_entropy(fp.logits, &labels)?;
        let groups = self.alpha_groups(&fp.alpha_leaves);
        let obj = alpha_objective(&mut tape, val, &groups, self.arch.mode, &self.cfg)?;
        let v = self.check(tape.scalar(val))?;
        let zo = obj.zero_one.map_or(0.0, |z| tape.scalar(z));
        let total = self.check(tape.scalar(obj.total))?;
        let grads = tape.backward(obj.total)?;
        let mut alphas = self.arch.tensors_mut();
        for (a, &leaf) in alphas.iter_mut().zip(&fp.alpha_leaves) {
            grads.write_into(leaf, a)?;
        }
        let [b1, b2] = self.cfg.alpha_betas;
        adam_step(&mut alphas, &mut self.a_state, self.cfg.alpha_lr, b1, b2, self.cfg.alpha_decay)?;
        Ok((v, zo, total))
    }

    /// First-order bi-level epoch: per batch pair, a weight step on `train`
    /// then an α step on the next `val` batch.
    pub fn bilevel_epoch(&mut self, train: &Split, val: &Split) -> Result<LossReport> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut sums = Sums::default();
        for batch in self.shuffled_batches(train.len()) {
            self.refresh_noise()?;
            sums.train += self.weight_step(train, &batch)?;
            let vb = self.val_batch(val);
            let (v, zo, total) = self.alpha_step(val, &vb)?;
            sums.val += v;
            sums.zero_one += zo;
            sums.total += total;
            sums.steps += 1;
        }
        self.arch.clear_noise();
        self.epoch += 1;
        Ok(sums.report(self.epoch))
    }

    /// Joint epoch: weights and α step together on the same batches.
    pub fn single_level_epoch(&mut self, data: &Split) -> Result<LossReport> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut sums = Sums::default();
        for batch in self.shuffled_batches(data.len()) {
            self.refresh_noise()?;
            let mut tape = Tape::new();
            let (x, labels) = Self::batch_input(&mut tape, data, &batch)?;
            let fp = self.net.forward(&mut tape, x, &self.arch, Trainable::BOTH)?;
            let ce = tape.cross_entropy(fp.logits, &labels)?;
            let groups = self.alpha_groups(&fp.alpha_leaves);
            let obj = alpha_objective(&mut tape, ce, &groups, self.arch.mode, &self.cfg)?;
            let v = self.check(tape.scalar(ce))?;
            let total = self.check(tape.scalar(obj.total))?;
            let zo = obj.zero_one.map_or(0.0, |z| tape.scalar(z));
            let grads = tape.backward(obj.total)?;

            let lr = self.w_lr();
            let mut weights = self.net.weights_mut();
            for (w, &leaf) in weights.iter_mut().zip(&fp.weight_leaves) {
                grads.write_into(leaf, w)?;
            }
            sgd_step(&mut weights, &mut self.w_state, lr, self.cfg.w_momentum, self.cfg.w_decay)?;
            let mut alphas = self.arch.tensors_mut();
            for (a, &leaf) in alphas.iter_mut().zip(&fp.alpha_leaves) {
                grads.write_into(leaf, a)?;
            }
            let [b1, b2] = self.cfg.alpha_betas;
            adam_step(&mut alphas, &mut self.a_state, self.cfg.alpha_lr, b1, b2, self.cfg.alpha_decay)?;

            sums.train += v;
            sums.val += v;
            sums.zero_one += zo;
            sums.total += total;
            sums.steps += 1;
        }
        self.arch.clear_noise();
        self.epoch += 1;
        Ok(sums.report(self.epoch))
    }

    /// Runs one epoch of the configured kind.
    pub fn run_epoch(&mut self, train: &Split, val: &Split) -> Result<LossReport> {
        match self.cfg.optimization {
            Optimization::Bilevel => self.bilevel_epoch(train, val),
            Optimization::SingleLevel => self.single_level_epoch(train),
        }
    }

    /// Classification accuracy of the relaxed supernet on `data`.
    pub fn accuracy(&self, data: &Split) -> Result<f64> {
        let mut tape = Tape::new();
        let idx: Vec<usize> = (0..data.len()).collect();
        let (x, labels) = Self::batch_input(&mut tape, data, &idx)?;
        let fp = self.net.forward(&mut tape, x, &self.arch, Trainable { weights: false, alpha: false })?;
        let logits = tape.value(fp.logits);
        let c = self.net.classes();
        let hits = labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| {
                let row = &logits[i * c..(i + 1) * c];
                let best = (0..c).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                best == y
            })
            .count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }
}

/// Output of a full search run.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub arch: ArchParams,
    pub trajectory: Trajectory,
    pub searcher: Searcher,
}

/// Runs `cfg.epochs` epochs, recording the relaxed weights before training
/// and after every epoch.
pub fn run_search(spec: &SupernetSpec, cfg: &SearchConfig, train: &Split, val: &Split, classes: usize) -> Result<SearchOutcome> {
    let mut searcher = Searcher::new(spec, cfg, train.dim(), classes)?;
    let mut trajectory = Trajectory::for_arch(&searcher.arch);
    trajectory.push(searcher.snapshot())?;
    for _ in 0..cfg.epochs {
        let report = searcher.run_epoch(train, val)?;
        log::debug!(
            "epoch {}: train {:.4} val {:.4} zero-one {:.4}",
            report.epoch,
            report.train_loss,
            report.val_loss,
            report.zero_one_loss
        );
        trajectory.reports.push(report);
        trajectory.push(searcher.snapshot())?;
    }
    Ok(SearchOutcome {
        arch: searcher.arch.clone(),
        trajectory,
        searcher,
    })
}
