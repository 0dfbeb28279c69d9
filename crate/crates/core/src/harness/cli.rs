//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 for user errors (bad flags, configs, inputs),
//! 2 for failures during a run.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::config::ExperimentConfig;
use super::repro::*;
use super::run::{derive, AlphaFile, Runner};
use crate::analysis::{
    dominance_over_time, default_rule, histogram, mean_discrepancy, parse_trajectory_csv, skip_boundaries,
    DominanceCount, Trajectory,
};
use crate::derivation::{param_floor_quantile, EdgeRank, GenotypeSampler};
use crate::error::{Error, Result};
use crate::search::stream_rng;
use crate::searchspace::{GroupKind, OpKind, RelaxMode};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "FAIRDARTS_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Softmax,
    Sigmoid,
    /// Alias of sigmoid.
    Fair,
    /// Alias of softmax.
    Darts,
}

impl From<ModeArg> for RelaxMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Softmax | ModeArg::Darts => RelaxMode::SoftmaxExclusive,
            ModeArg::Sigmoid | ModeArg::Fair => RelaxMode::SigmoidCollaborative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankArg {
    BestOp,
    SumOps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReproName {
    /// Skip-dominant slots, softmax against sigmoid + zero-one loss.
    Collapse,
    /// σ polarization and discrepancy with and without the zero-one loss.
    Fairfix,
    /// Squared against absolute zero-one loss.
    Loss,
    /// Softmax with decaying noise on skip α.
    Noise,
    /// Softmax with the zero-one loss, and the extinction order of ops.
    Domino,
    /// Softmax with skip removed.
    Noskip,
}

/// Desk-scale differentiable architecture search.
///
/// Config files are TOML with a top-level `name`, `seeds`, `output` and the
/// sections [spec] (space, cells, layers, feature_dim, opset), [search]
/// (mode, epochs, batch_size, w_lr, w_lr_min, w_momentum, w_decay, alpha_lr,
/// alpha_decay, alpha_betas, w01, loss_variant, zero_one_scope,
/// optimization, noise, seed), [data] (dim, n_train, n_val, teacher_seed,
/// residual_scale) and [derivation] (sigma_threshold, dominance_threshold,
/// edge_rank, skip_cap, param_floor). Unknown keys are errors.
#[derive(Debug, Parser)]
#[command(name = "fairdarts", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct OutArgs {
    /// Output root; overrides $FAIRDARTS_OUT and the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct BaseArgs {
    /// Experiment config; the built-in cell-space defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Search epochs, replacing the config's.
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search every seed of a config and write its artifacts.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Derive a genotype from a final_alpha.json.
    Derive {
        #[arg(long)]
        alpha: PathBuf,
        /// Relaxation to interpret α under; defaults to the file's.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// σ threshold of the sigmoid rule (0.85 for cells, 0.8 for chains).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value = "best-op")]
        edge_rank: RankArg,
        /// Write the genotype here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dominance, discrepancy and histogram report of a trajectory CSV.
    Analyze {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// σ above which an op is dominant (sigmoid mode).
        #[arg(long, default_value_t = 0.75)]
        threshold: f64,
        #[arg(long, default_value_t = HISTOGRAM_BINS)]
        bins: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Random cell genotypes under a skip cap and parameter floor.
    Sample {
        /// Skip cap per cell.
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Minimum toy parameter count.
        #[arg(long, conflicts_with = "floor_quantile")]
        floor: Option<f64>,
        /// Floor taken as this quantile of unconstrained samples, e.g. 0.6.
        #[arg(long)]
        floor_quantile: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sigmoid search across zero-one weights.
    Sweep {
        /// Comma-separated weights in [0, 16].
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0])]
        values: Vec<f64>,
        #[command(flatten)]
        base: BaseArgs,
    },
    /// Run a scripted experiment end to end.
    Repro {
        #[arg(value_enum)]
        name: ReproName,
        #[command(flatten)]
        base: BaseArgs,
    },
}

fn out_root(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.clone())
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

fn base_config(args: &BaseArgs, name: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig {
            name: name.to_string(),
            ..repro_base()
        },
    };
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(e) = args.epochs {
        cfg.search.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `<root>/<name>/<what>.json`; one file per scripted experiment.
fn write_summary(root: &Path, name: &str, what: &str, value: &impl Serialize) -> Result<()> {
    let dir = root.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("{what}.json"));
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[derive(Serialize)]
struct Analysis {
    mode: RelaxMode,
    epochs: Vec<usize>,
    dominance: Vec<DominanceCount>,
    final_discrepancy: f64,
    final_histogram: Vec<usize>,
    skip_boundaries: Vec<(usize, usize, Option<usize>)>,
}

/// Group kinds and ops in order of first appearance in the CSV.
fn csv_layout(text: &str) -> Result<(Vec<GroupKind>, Vec<OpKind>)> {
    let mut kinds = Vec::new();
    let mut ops = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                offset: i,
                message: format!("expected 5 fields, got {}", f.len()),
            });
        }
        let kind = match f[1] {
            "normal" => GroupKind::Normal,
            "reduce" => GroupKind::Reduce,
            "chain" => GroupKind::Chain,
            other => {
                return Err(Error::Parse {
                    offset: i,
                    message: format!("unknown group '{other}'"),
                })
            }
        };
        let op: OpKind = f[3].parse()?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
        if !ops.contains(&op) {
            ops.push(op);
        }
    }
    let order: BTreeSet<OpKind> = ops.iter().copied().collect();
    Ok((kinds, order.into_iter().collect()))
}

fn analyze(path: &Path, mode: RelaxMode, threshold: f64, bins: usize) -> Result<Analysis> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (kinds, opset) = csv_layout(&text)?;
    let mut traj = Trajectory::new(mode, opset, kinds);
    for s in parse_trajectory_csv(&text, &traj.kinds, &traj.opset)? {
        traj.push(s)?;
    }
    let last = traj
        .last()
        .ok_or_else(|| Error::Config(format!("{}: trajectory has no snapshots", path.display())))?;
    let rule = default_rule(mode, traj.kinds.contains(&GroupKind::Chain));
    Ok(Analysis {
        mode,
        epochs: traj.snapshots.iter().map(|s| s.epoch).collect(),
        dominance: dominance_over_time(&traj, Some(threshold), rule)?,
        final_discrepancy: mean_discrepancy(last, mode)?,
        final_histogram: histogram(last.values(), bins)?,
        skip_boundaries: skip_boundaries(&traj),
    })
}

fn repro(name: ReproName, runner: &mut Runner, base: &ExperimentConfig) -> Result<String> {
    let root = runner.root().map(Path::to_path_buf);
    let what = format!("{name:?}").to_lowercase();
    macro_rules! go {
        ($f:ident) => {{
            let r = $f(runner, base)?;
            if let Some(root) = &root {
                write_summary(root, &base.name, &what, &r)?;
            }
            r.to_string()
        }};
    }
    Ok(match name {
        ReproName::Collapse => go!(repro_collapse),
        ReproName::Fairfix => go!(repro_fairfix),
        ReproName::Loss => go!(repro_loss),
        ReproName::Noise => go!(repro_noise),
        ReproName::Domino => go!(repro_domino),
        ReproName::Noskip => go!(repro_noskip),
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let root = out_root(out.out, &cfg);
            let mut runner = Runner::new(Some(root.clone()));
            for run in runner.run_all(&cfg)? {
                let r = &run.report;
                println!(
                    "{} seed {}: skip-dominant {} val-acc {:.3} -> {}",
                    cfg.name,
                    r.seed,
                    r.skip_dominant,
                    r.val_accuracy,
                    root.join(&cfg.name).join(r.seed.to_string()).display()
                );
            }
            Ok(())
        }
        Command::Derive {
            alpha,
            mode,
            threshold,
            edge_rank,
            output,
        } => {
            let file = AlphaFile::load(&alpha)?;
            let arch = file.to_arch(mode.map(RelaxMode::from))?;
            let mut d = match super::run::space_of(&file) {
                crate::searchspace::Space::S1 => super::config::DerivationConfig::default(),
                crate::searchspace::Space::S2 => super::config::DerivationConfig {
                    sigma_threshold: crate::derivation::SigmaThreshold::CHAIN.value(),
                    ..Default::default()
                },
            };
            if let Some(t) = threshold {
                d.sigma_threshold = t;
            }
            d.edge_rank = match edge_rank {
                RankArg::BestOp => EdgeRank::BestOp,
                RankArg::SumOps => EdgeRank::SumOps,
            };
            emit(&format!("{}\n", derive(&arch, &d)?.text()), output.as_deref())
        }
        Command::Analyze {
            trajectory,
            mode,
            threshold,
            bins,
            output,
        } => {
            let a = analyze(&trajectory, mode.into(), threshold, bins)?;
            emit(
                &serde_json::to_string_pretty(&a).expect("analysis serializes"),
                output.as_deref(),
            )
        }
        Command::Sample {
            m,
            count,
            floor,
            floor_quantile,
            seed,
        } => {
            let floor = match floor_quantile {
                Some(q) => Some(param_floor_quantile(m, q, 1000, seed)?),
                None => floor,
            };
            let sampler = GenotypeSampler::new(m, floor);
            let mut rng = stream_rng(seed, 0);
            for _ in 0..count {
                println!("{}", sampler.sample(&mut rng)?.serialize());
            }
            Ok(())
        }
        Command::Sweep { values, base } => {
            let cfg = base_config(&base, "sweep")?;
            let root = out_root(base.out.out, &cfg);
            let mut runner = Runner::new(Some(root.clone()));
            let r = sweep_w01(&mut runner, &values, &cfg)?;
            write_summary(&root, &cfg.name, "sweep", &r)?;
            println!("{r}");
            Ok(())
        }
        Command::Repro { name, base } => {
            let label = format!("{name:?}").to_lowercase();
            let cfg = base_config(&base, &label)?;
            let root = out_root(base.out.out, &cfg);
            let mut runner = Runner::new(Some(root));
            println!("{}", repro(name, &mut runner, &cfg)?);
            Ok(())
        }
    }
}

fn is_user_error(e: &Error) -> bool {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::UnknownOp { .. } | Error::InvalidEdge { .. } => true,
        Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
        _ => false,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_user_error(&e) {
                1
            } else {
                2
            }
        }
    }
}
