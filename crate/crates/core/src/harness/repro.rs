use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{RunReport, RunResult, Runner};
use crate::analysis::{
    extinction_order, is_non_monotone, sigma_histogram, skip_boundaries, DominanceRule, Extinction, EXTINCTION_LEVEL,
};
use crate::error::{Error, Result};
use crate::search::{LossVariant, NoiseSchedule, SearchConfig};
use crate::searchspace::{GroupKind, OpKind, RelaxMode, Space, SupernetSpec};

/// Smallest σ swing that counts as a reversal.
pub const REVERSAL_TOL: f64 = 0.05;
/// Standard deviation of the skip noise at epoch 0.
pub const NOISE_SIGMA0: f64 = 1.0;

/// Desk-scale base for the scripted experiments: the cell space with the
/// default search, data and derivation settings.
pub fn repro_base() -> ExperimentConfig {
    ExperimentConfig::new("repro", SupernetSpec::s1(), SearchConfig::for_space(Space::S1))
}

fn variant(base: &ExperimentConfig, name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = base.clone();
    c.name = format!("{}_{name}", base.name);
    c.search.noise = NoiseSchedule::Off;
    edit(&mut c);
    c
}

/// Plain softmax search.
pub fn darts_variant(base: &ExperimentConfig) -> ExperimentConfig {
    variant(base, "darts", |c| {
        c.search.mode = RelaxMode::SoftmaxExclusive;
        c.search.loss_variant = LossVariant::None;
    })
}

/// Sigmoid search with the given auxiliary loss.
pub fn fair_variant(base: &ExperimentConfig, loss: LossVariant) -> ExperimentConfig {
    let tag = match loss {
        LossVariant::None => "fair_noaux",
        LossVariant::Squared => "fair",
        LossVariant::Absolute => "fair_abs",
    };
    variant(base, tag, |c| {
        c.search.mode = RelaxMode::SigmoidCollaborative;
        c.search.loss_variant = loss;
    })
}

/// Softmax search with cosine-decayed noise on skip α over the whole run.
pub fn noise_variant(base: &ExperimentConfig) -> ExperimentConfig {
    variant(base, "darts_noise", |c| {
        c.search.mode = RelaxMode::SoftmaxExclusive;
        c.search.loss_variant = LossVariant::None;
        c.search.noise = NoiseSchedule::SkipCosine {
            sigma0: NOISE_SIGMA0,
            horizon: c.search.epochs,
            all_ops: false,
        };
    })
}

/// Softmax search with the squared zero-one loss on the softmax weights.
pub fn darts_l01_variant(base: &ExperimentConfig) -> ExperimentConfig {
    variant(base, "darts_l01", |c| {
        c.search.mode = RelaxMode::SoftmaxExclusive;
        c.search.loss_variant = LossVariant::Squared;
    })
}

/// Softmax search with skip removed from the op set.
pub fn noskip_variant(base: &ExperimentConfig) -> ExperimentConfig {
    variant(base, "darts_noskip", |c| {
        c.search.mode = RelaxMode::SoftmaxExclusive;
        c.search.loss_variant = LossVariant::None;
        c.spec = c.spec.clone().without(OpKind::Skip);
    })
}

fn paired(
    runner: &mut Runner,
    base: &ExperimentConfig,
    a: &ExperimentConfig,
    b: &ExperimentConfig,
) -> Result<Vec<(u64, RunResult, RunResult)>> {
    base.seeds
        .iter()
        .map(|&s| Ok((s, runner.run(a, s)?, runner.run(b, s)?)))
        .collect()
}

fn count(rows: usize, hits: usize) -> String {
    format!("{hits}/{rows}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub seed: u64,
    pub darts_skip: usize,
    pub fair_skip: usize,
    pub fair_cells_parametric: bool,
    pub darts_genotype: String,
    pub fair_genotype: String,
}

/// Skip-dominant slots of softmax against sigmoid + zero-one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub rows: Vec<CollapseRow>,
}

impl CollapseReport {
    /// Seeds where softmax ends with strictly more skip-dominant slots.
    pub fn wins(&self) -> usize {
        self.rows.iter().filter(|r| r.darts_skip > r.fair_skip).count()
    }

    pub fn fair_parametric_everywhere(&self) -> bool {
        self.rows.iter().all(|r| r.fair_cells_parametric)
    }
}

pub fn repro_collapse(runner: &mut Runner, base: &ExperimentConfig) -> Result<CollapseReport> {
    let rows = paired(runner, base, &darts_variant(base), &fair_variant(base, LossVariant::Squared))?
        .into_iter()
        .map(|(seed, d, f)| CollapseRow {
            seed,
            darts_skip: d.report.skip_dominant,
            fair_skip: f.report.skip_dominant,
            fair_cells_parametric: f.derived.every_unit_parametric(),
            darts_genotype: d.report.genotype,
            fair_genotype: f.report.genotype,
        })
        .collect();
    Ok(CollapseReport { rows })
}

impl fmt::Display for CollapseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  softmax-skip  sigmoid-skip  sigmoid-parametric")?;
        for r in &self.rows {
            writeln!(f, "{:4}  {:12}  {:12}  {}", r.seed, r.darts_skip, r.fair_skip, r.fair_cells_parametric)?;
        }
        write!(f, "softmax > sigmoid on {} seeds", count(self.rows.len(), self.wins()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairfixRow {
    pub seed: u64,
    pub polarized_l01: f64,
    pub polarized_noaux: f64,
    pub discrepancy_l01: f64,
    pub discrepancy_noaux: f64,
    pub histogram_l01: Vec<usize>,
    pub histogram_noaux: Vec<usize>,
}

/// Final σ polarization with and without the zero-one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairfixReport {
    pub rows: Vec<FairfixRow>,
}

impl FairfixReport {
    pub fn discrepancy_reduced_everywhere(&self) -> bool {
        self.rows.iter().all(|r| r.discrepancy_l01 < r.discrepancy_noaux)
    }
}

pub const HISTOGRAM_BINS: usize = 10;

pub fn repro_fairfix(runner: &mut Runner, base: &ExperimentConfig) -> Result<FairfixReport> {
    let with = fair_variant(base, LossVariant::Squared);
    let without = fair_variant(base, LossVariant::None);
    let rows = paired(runner, base, &with, &without)?
        .into_iter()
        .map(|(seed, a, b)| {
            Ok(FairfixRow {
                seed,
                polarized_l01: a.report.polarized_fraction,
                polarized_noaux: b.report.polarized_fraction,
                discrepancy_l01: a.report.mean_discrepancy,
                discrepancy_noaux: b.report.mean_discrepancy,
                histogram_l01: sigma_histogram(&a.arch.flat(), HISTOGRAM_BINS)?,
                histogram_noaux: sigma_histogram(&b.arch.flat(), HISTOGRAM_BINS)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FairfixReport { rows })
}

impl fmt::Display for FairfixReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  polarized(l01)  polarized(none)  discrepancy(l01)  discrepancy(none)")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:4}  {:14.3}  {:15.3}  {:16.4}  {:17.4}",
                r.seed, r.polarized_l01, r.polarized_noaux, r.discrepancy_l01, r.discrepancy_noaux
            )?;
        }
        for r in &self.rows {
            writeln!(f, "seed {} σ histogram (l01):  {:?}", r.seed, r.histogram_l01)?;
        }
        write!(f, "discrepancy reduced on every seed: {}", self.discrepancy_reduced_everywhere())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLossRow {
    pub seed: u64,
    pub departure_squared: Option<usize>,
    pub departure_abs: Option<usize>,
    /// σ series under the squared loss that reverse by at least [`REVERSAL_TOL`].
    pub reversals_squared: usize,
}

impl ControlLossRow {
    /// Absolute loss departs strictly earlier; never departing counts as last.
    pub fn abs_earlier(&self) -> bool {
        match (self.departure_abs, self.departure_squared) {
            (Some(a), Some(s)) => a < s,
            (Some(_), None) => true,
            (None, _) => false,
        }
    }

    pub fn holds(&self) -> bool {
        self.abs_earlier() && self.reversals_squared > 0
    }
}

/// Squared against absolute zero-one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLossReport {
    pub rows: Vec<ControlLossRow>,
}

impl ControlLossReport {
    pub fn seeds_holding(&self) -> usize {
        self.rows.iter().filter(|r| r.holds()).count()
    }
}

fn reversals(run: &RunResult) -> usize {
    let t = &run.trajectory;
    let Some(first) = t.snapshots.first() else {
        return 0;
    };
    let mut n = 0;
    for (g, rows) in first.groups.iter().enumerate() {
        for r in 0..rows.len() {
            for o in 0..t.opset.len() {
                if is_non_monotone(&t.series(g, r, o), REVERSAL_TOL) {
                    n += 1;
                }
            }
        }
    }
    n
}

pub fn repro_loss(runner: &mut Runner, base: &ExperimentConfig) -> Result<ControlLossReport> {
    let sq = fair_variant(base, LossVariant::Squared);
    let abs = fair_variant(base, LossVariant::Absolute);
    let rows = paired(runner, base, &sq, &abs)?
        .into_iter()
        .map(|(seed, s, a)| ControlLossRow {
            seed,
            departure_squared: s.report.epochs_to_departure,
            departure_abs: a.report.epochs_to_departure,
            reversals_squared: reversals(&s),
        })
        .collect();
    Ok(ControlLossReport { rows })
}

impl fmt::Display for ControlLossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ep = |e: Option<usize>| e.map_or("never".to_string(), |e| e.to_string());
        writeln!(f, "seed  departure(squared)  departure(abs)  reversals(squared)")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:4}  {:>18}  {:>14}  {:18}",
                r.seed,
                ep(r.departure_squared),
                ep(r.departure_abs),
                r.reversals_squared
            )?;
        }
        write!(f, "absolute earlier with a reversal on {} seeds", count(self.rows.len(), self.seeds_holding()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipPairRow {
    pub seed: u64,
    pub vanilla_skip: usize,
    pub treated_skip: usize,
}

/// Skip-dominant slots of a treated softmax search against plain softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub rows: Vec<SkipPairRow>,
}

impl NoiseReport {
    /// Seeds where the noisy search ends with strictly fewer skip slots.
    pub fn wins(&self) -> usize {
        self.rows.iter().filter(|r| r.treated_skip < r.vanilla_skip).count()
    }
}

pub fn repro_noise(runner: &mut Runner, base: &ExperimentConfig) -> Result<NoiseReport> {
    let rows = paired(runner, base, &darts_variant(base), &noise_variant(base))?
        .into_iter()
        .map(|(seed, v, n)| SkipPairRow {
            seed,
            vanilla_skip: v.report.skip_dominant,
            treated_skip: n.report.skip_dominant,
        })
        .collect();
    Ok(NoiseReport { rows })
}

impl fmt::Display for NoiseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  vanilla-skip  noisy-skip")?;
        for r in &self.rows {
            writeln!(f, "{:4}  {:12}  {:10}", r.seed, r.vanilla_skip, r.treated_skip)?;
        }
        write!(f, "noisy < vanilla on {} seeds", count(self.rows.len(), self.wins()))
    }
}

/// Extinction sequence of one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeExtinctions {
    pub group: GroupKind,
    pub edge: usize,
    pub order: Vec<Extinction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominoRow {
    pub seed: u64,
    pub vanilla_skip: usize,
    pub l01_skip: usize,
    /// Edges where skip became the persistent maximum under the zero-one loss.
    pub l01_skip_boundaries: usize,
    pub extinctions: Vec<EdgeExtinctions>,
}

/// Softmax search with and without the zero-one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominoReport {
    pub rows: Vec<DominoRow>,
}

impl DominoReport {
    /// Seeds where the zero-one loss leaves at least as many skip slots.
    pub fn seeds_not_fewer(&self) -> usize {
        self.rows.iter().filter(|r| r.l01_skip >= r.vanilla_skip).count()
    }
}

pub fn repro_domino(runner: &mut Runner, base: &ExperimentConfig) -> Result<DominoReport> {
    let l01 = darts_l01_variant(base);
    if l01.search.w01 <= 0.0 {
        return Err(Error::Config("the domino study needs a positive w01".into()));
    }
    let rows = paired(runner, base, &darts_variant(base), &l01)?
        .into_iter()
        .map(|(seed, v, l)| {
            let t = &l.trajectory;
            let mut extinctions = Vec::new();
            for (g, &kind) in t.kinds.iter().enumerate() {
                let n = t.snapshots.first().map_or(0, |s| s.groups[g].len());
                for edge in 0..n {
                    extinctions.push(EdgeExtinctions {
                        group: kind,
                        edge,
                        order: extinction_order(t, g, edge, EXTINCTION_LEVEL),
                    });
                }
            }
            DominoRow {
                seed,
                vanilla_skip: v.report.skip_dominant,
                l01_skip: l.report.skip_dominant,
                l01_skip_boundaries: skip_boundaries(t).iter().filter(|b| b.2.is_some()).count(),
                extinctions,
            }
        })
        .collect();
    Ok(DominoReport { rows })
}

impl fmt::Display for DominoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  vanilla-skip  l01-skip  l01-skip-boundaries")?;
        for r in &self.rows {
            writeln!(f, "{:4}  {:12}  {:8}  {:19}", r.seed, r.vanilla_skip, r.l01_skip, r.l01_skip_boundaries)?;
        }
        if let Some(r) = self.rows.first() {
            writeln!(f, "extinction order, seed {}:", r.seed)?;
            for e in r.extinctions.iter().filter(|e| !e.order.is_empty()) {
                let seq: Vec<String> = e.order.iter().map(|x| format!("{}@{}", x.op, x.epoch)).collect();
                writeln!(f, "  {}:{} {}", e.group.name(), e.edge, seq.join(" "))?;
            }
        }
        write!(f, "l01 >= vanilla on {} seeds", count(self.rows.len(), self.seeds_not_fewer()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoskipRow {
    pub seed: u64,
    pub per_op: BTreeMap<OpKind, usize>,
    pub slots: usize,
    pub top_op: Option<OpKind>,
    pub top_share: f64,
}

/// Dominant ops of softmax search without skip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoskipReport {
    pub rule: DominanceRule,
    pub rows: Vec<NoskipRow>,
}

impl NoskipReport {
    pub fn max_share(&self) -> f64 {
        self.rows.iter().map(|r| r.top_share).fold(0.0, f64::max)
    }
}

pub fn repro_noskip(runner: &mut Runner, base: &ExperimentConfig) -> Result<NoskipReport> {
    let cfg = noskip_variant(base);
    let runs = runner.run_all(&ExperimentConfig {
        seeds: base.seeds.clone(),
        ..cfg
    })?;
    let rule = runs.first().map_or(DominanceRule::PerNodeTop2, |r| r.report.rule);
    let rows = runs
        .into_iter()
        .map(|r| {
            let d = r.report.dominance;
            let slots = d.total();
            let top = d.most_common();
            NoskipRow {
                seed: r.report.seed,
                top_op: top.map(|t| t.0),
                top_share: top.map_or(0.0, |t| t.1 as f64 / slots.max(1) as f64),
                slots,
                per_op: d.per_op,
            }
        })
        .collect();
    Ok(NoskipReport { rule, rows })
}

impl fmt::Display for NoskipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  slots  top-op          share  counts")?;
        for r in &self.rows {
            let counts: Vec<String> = r.per_op.iter().map(|(k, c)| format!("{}={c}", k.alias())).collect();
            writeln!(
                f,
                "{:4}  {:5}  {:14}  {:5.2}  {}",
                r.seed,
                r.slots,
                r.top_op.map_or("-", |k| k.name()),
                r.top_share,
                counts.join(" ")
            )?;
        }
        write!(f, "largest single-op share: {:.2}", self.max_share())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w01: f64,
    pub seed: u64,
    pub dominant: usize,
    pub skip_dominant: usize,
    pub polarized_fraction: f64,
}

/// Final σ-dominant op counts across zero-one weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn at(&self, w01: f64, seed: u64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.w01 == w01 && r.seed == seed)
    }
}

pub const MAX_SWEEP_W01: f64 = 16.0;

/// One sigmoid search with the squared loss per weight per seed; weight 0
/// is the plain sigmoid search.
pub fn sweep_w01(runner: &mut Runner, values: &[f64], base: &ExperimentConfig) -> Result<SweepReport> {
    if let Some(v) = values.iter().find(|v| !(0.0..=MAX_SWEEP_W01).contains(*v)) {
        return Err(Error::Config(format!("w01 value {v} outside [0, {MAX_SWEEP_W01}]")));
    }
    let mut rows = Vec::new();
    for &w in values {
        let cfg = variant(&fair_variant(base, LossVariant::Squared), &format!("w{w}"), |c| {
            c.search.w01 = w;
            if w == 0.0 {
                c.search.loss_variant = LossVariant::None;
            }
        });
        for &seed in &base.seeds {
            let r: RunReport = runner.run(&cfg, seed)?.report;
            rows.push(SweepRow {
                w01: w,
                seed,
                dominant: r.dominance.total(),
                skip_dominant: r.skip_dominant,
                polarized_fraction: r.polarized_fraction,
            });
        }
    }
    Ok(SweepReport { rows })
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "w01    seed  dominant  skip  polarized")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:5.1}  {:4}  {:8}  {:4}  {:9.3}",
                r.w01, r.seed, r.dominant, r.skip_dominant, r.polarized_fraction
            )?;
        }
        Ok(())
    }
}
