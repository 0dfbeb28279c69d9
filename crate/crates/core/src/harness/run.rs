use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DerivationConfig, ExperimentConfig};
use super::task::make_residual_task;
use crate::analysis::{
    count_dominant, default_rule, epochs_to_departure, export_trajectory, mean_discrepancy, polarized_fraction,
    DominanceCount, DominanceRule, Trajectory,
};
use crate::derivation::{derive_chain, derive_chain_argmax, derive_darts, derive_fair, ChainGenotype, Genotype};
use crate::error::{Error, Result};
use crate::search::{run_search, LossReport};
use crate::searchspace::{ArchParams, GroupKind, OpKind, RelaxMode, Space};

/// Band edge used for the polarized share in reports.
pub const POLAR_EDGE: f64 = 0.1;
/// Half-width of the band around ½ whose departure is timed in reports.
pub const DEPARTURE_HALF_WIDTH: f64 = 0.1;
/// Share of weights that must have departed.
pub const DEPARTURE_SHARE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMatrix {
    pub kind: GroupKind,
    pub alpha: Vec<Vec<f64>>,
}

/// Raw architecture weights on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFile {
    pub mode: RelaxMode,
    pub opset: Vec<OpKind>,
    pub groups: Vec<AlphaMatrix>,
}

impl AlphaFile {
    pub fn from_arch(arch: &ArchParams) -> Self {
        Self {
            mode: arch.mode,
            opset: arch.opset.clone(),
            groups: arch
                .groups()
                .iter()
                .map(|g| AlphaMatrix {
                    kind: g.kind,
                    alpha: g.matrix(),
                })
                .collect(),
        }
    }

    /// Rebuilds the weights, optionally reinterpreted under another relaxation.
    pub fn to_arch(&self, mode: Option<RelaxMode>) -> Result<ArchParams> {
        ArchParams::from_matrices(
            mode.unwrap_or(self.mode),
            self.opset.clone(),
            self.groups.iter().map(|g| (g.kind, g.alpha.clone())).collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            offset: e.column().saturating_sub(1),
            message: format!("{}: {e}", path.display()),
        })
    }
}

/// A derived architecture of either space.
#[derive(Debug, Clone, PartialEq)]
pub enum Derived {
    Cell(Genotype),
    Chain(ChainGenotype),
}

impl Derived {
    pub fn text(&self) -> String {
        match self {
            Derived::Cell(g) => g.serialize(),
            Derived::Chain(c) => c.to_json(),
        }
    }

    /// Chosen slots holding `kind`.
    pub fn count(&self, kind: OpKind) -> usize {
        match self {
            Derived::Cell(g) => g.normal.count(kind) + g.reduce.count(kind),
            Derived::Chain(c) => c.layers.iter().flatten().filter(|&&k| k == kind).count(),
        }
    }

    /// True when every cell (or every layer) keeps a parametric op other
    /// than skip.
    pub fn every_unit_parametric(&self) -> bool {
        match self {
            Derived::Cell(g) => g
                .cells()
                .iter()
                .all(|c| c.genes.iter().any(|gene| gene.op.is_parametric())),
            Derived::Chain(c) => c.layers.iter().all(|l| l.iter().any(|k| k.is_parametric())),
        }
    }
}

/// Discretizes with the rule matching the relaxation and space.
pub fn derive(arch: &ArchParams, cfg: &DerivationConfig) -> Result<Derived> {
    let chain = arch.group(GroupKind::Chain);
    match (arch.mode, chain) {
        (RelaxMode::SoftmaxExclusive, None) => derive_darts(arch).map(Derived::Cell),
        (RelaxMode::SigmoidCollaborative, None) => {
            derive_fair(arch, cfg.threshold()?, cfg.edge_rank).map(Derived::Cell)
        }
        (RelaxMode::SoftmaxExclusive, Some(g)) => derive_chain_argmax(&g.matrix(), &arch.opset).map(Derived::Chain),
        (RelaxMode::SigmoidCollaborative, Some(g)) => {
            derive_chain(&g.matrix(), &arch.opset, cfg.threshold()?).map(Derived::Chain)
        }
    }
}

/// Summary of one seed of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    pub mode: RelaxMode,
    pub epochs: usize,
    pub final_losses: Option<LossReport>,
    pub val_accuracy: f64,
    pub rule: DominanceRule,
    pub dominance: DominanceCount,
    pub skip_dominant: usize,
    pub polarized_fraction: f64,
    pub mean_discrepancy: f64,
    pub epochs_to_departure: Option<usize>,
    pub genotype: String,
    pub genotype_skips: usize,
}

/// Everything one seed produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub arch: ArchParams,
    pub derived: Derived,
}

/// Dominance under the natural rule of the relaxation.
pub fn final_dominance(traj: &Trajectory, cfg: &DerivationConfig) -> Result<(DominanceRule, DominanceCount)> {
    let last = traj
        .last()
        .ok_or_else(|| Error::Config("empty trajectory".into()))?;
    let chain = traj.kinds.contains(&GroupKind::Chain);
    let rule = default_rule(traj.mode, chain);
    let count = count_dominant(last, traj.mode, &traj.opset, Some(cfg.dominance_threshold), rule)?;
    Ok((rule, count))
}

/// Searches one seed and summarizes it. Nothing is written.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    let d = &cfg.data;
    let task = make_residual_task(d.dim, d.n_train + d.n_val, d.residual_scale, d.teacher_seed.wrapping_add(seed))?;
    let (train, val) = task.split(d.n_train)?;
    let search = cfg.search_for(seed);
    let out = run_search(&cfg.spec, &search, &train, &val, task.classes())?;
    let derived = derive(&out.arch, &cfg.derivation)?;
    let (rule, dominance) = final_dominance(&out.trajectory, &cfg.derivation)?;
    let last = out.trajectory.last().expect("search records the initial snapshot");
    let values: Vec<f64> = last.values().collect();
    let report = RunReport {
        experiment: cfg.name.clone(),
        seed,
        mode: search.mode,
        epochs: search.epochs,
        final_losses: out.trajectory.reports.last().copied(),
        val_accuracy: out.searcher.accuracy(&val)?,
        rule,
        skip_dominant: dominance.skip_dominant,
        dominance,
        polarized_fraction: polarized_fraction(&values, POLAR_EDGE),
        mean_discrepancy: mean_discrepancy(last, search.mode)?,
        epochs_to_departure: epochs_to_departure(&out.trajectory, DEPARTURE_HALF_WIDTH, DEPARTURE_SHARE),
        genotype: derived.text(),
        genotype_skips: derived.count(OpKind::Skip),
    };
    log::info!(
        "{} seed {}: skip-dominant {}, val acc {:.3}",
        cfg.name,
        seed,
        report.skip_dominant,
        report.val_accuracy
    );
    Ok(RunResult {
        report,
        trajectory: out.trajectory,
        arch: out.arch,
        derived,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `trajectory.csv`, `final_alpha.json`, `genotype.txt` and
/// `report.json` into `dir`.
pub fn write_run(dir: &Path, run: &RunResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    export_trajectory(&run.trajectory, &dir.join("trajectory.csv"))?;
    let alpha = serde_json::to_string_pretty(&AlphaFile::from_arch(&run.arch)).expect("α serializes");
    write(&dir.join("final_alpha.json"), &alpha)?;
    write(&dir.join("genotype.txt"), &format!("{}\n", run.derived.text()))?;
    let report = serde_json::to_string_pretty(&run.report).expect("report serializes");
    write(&dir.join("report.json"), &report)
}

/// Runs experiments seed by seed, reusing identical runs and optionally
/// writing artifacts under `<root>/<experiment>/<seed>/`.
#[derive(Debug, Default)]
pub struct Runner {
    root: Option<PathBuf>,
    cache: HashMap<(String, u64), RunResult>,
}

impl Runner {
    pub fn new(root: Option<PathBuf>) -> Self {
        Self {
            root,
            cache: HashMap::new(),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn key(cfg: &ExperimentConfig, seed: u64) -> (String, u64) {
        let anon = ExperimentConfig {
            name: String::new(),
            seeds: Vec::new(),
            output: PathBuf::new(),
            ..cfg.clone()
        };
        (anon.to_text(), seed)
    }

    pub fn run(&mut self, cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
        let key = Self::key(cfg, seed);
        let mut run = match self.cache.get(&key) {
            Some(r) => r.clone(),
            None => {
                let r = run_seed(cfg, seed)?;
                self.cache.insert(key, r.clone());
                r
            }
        };
        run.report.experiment = cfg.name.clone();
        if let Some(root) = &self.root {
            let dir = root.join(&cfg.name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write(&dir.join("config.toml"), &cfg.to_text())?;
            write_run(&dir.join(seed.to_string()), &run)?;
        }
        Ok(run)
    }

    /// Every seed of the config.
    pub fn run_all(&mut self, cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
        cfg.seeds.iter().map(|&s| self.run(cfg, s)).collect()
    }
}

/// Space of an α file's groups.
pub fn space_of(alpha: &AlphaFile) -> Space {
    if alpha.groups.iter().any(|g| g.kind == GroupKind::Chain) {
        Space::S2
    } else {
        Space::S1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::SearchConfig;
    use crate::searchspace::SupernetSpec;

    fn tiny(mode: RelaxMode) -> ExperimentConfig {
        let search = match mode {
            RelaxMode::SoftmaxExclusive => SearchConfig::darts(Space::S2),
            RelaxMode::SigmoidCollaborative => SearchConfig::fair(Space::S2),
        };
        let mut spec = SupernetSpec::s2();
        spec.layers = 2;
        spec.feature_dim = 4;
        let mut c = ExperimentConfig::new("tiny", spec, search);
        c.search.epochs = 2;
        c.search.batch_size = 64;
        c.data.dim = 4;
        c.data.n_train = 128;
        c.data.n_val = 128;
        c
    }

    #[test]
    fn alpha_file_round_trip() {
        let mut arch = ArchParams::zeros(&SupernetSpec::s1(), RelaxMode::SigmoidCollaborative);
        arch.set(1, 4, 3, -2.25);
        let f = AlphaFile::from_arch(&arch);
        let text = serde_json::to_string(&f).unwrap();
        let back: AlphaFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_arch(None).unwrap().flat(), arch.flat());
        assert_eq!(space_of(&back), Space::S1);
    }

    #[test]
    fn runs_are_deterministic_and_cached() {
        let c = tiny(RelaxMode::SigmoidCollaborative);
        let a = run_seed(&c, 3).unwrap();
        let b = run_seed(&c, 3).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.arch.flat(), b.arch.flat());
        let mut runner = Runner::new(None);
        let first = runner.run(&c, 3).unwrap();
        let renamed = ExperimentConfig {
            name: "other".into(),
            ..c.clone()
        };
        let second = runner.run(&renamed, 3).unwrap();
        assert_eq!(second.report.experiment, "other");
        assert_eq!(first.arch.flat(), second.arch.flat());
        assert_eq!(runner.cache.len(), 1);
    }

    #[test]
    fn artifacts_layout() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny(RelaxMode::SoftmaxExclusive);
        let mut runner = Runner::new(Some(dir.path().to_path_buf()));
        runner.run(&c, 0).unwrap();
        let seed_dir = dir.path().join("tiny").join("0");
        for f in ["trajectory.csv", "final_alpha.json", "genotype.txt", "report.json"] {
            assert!(seed_dir.join(f).is_file(), "{f}");
        }
        let cfg = ExperimentConfig::load(&dir.path().join("tiny").join("config.toml")).unwrap();
        assert_eq!(cfg, c);
        let alpha = AlphaFile::load(&seed_dir.join("final_alpha.json")).unwrap();
        assert_eq!(alpha.mode, RelaxMode::SoftmaxExclusive);
    }
}
