//! Command implementations behind the `aggrodyn` binary.
//!
//! Each command reads its inputs, writes every output file, and returns
//! the computed value so callers (and tests) can inspect it without
//! re-reading files.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_corpus, synthesize_corpus, validate_corpus, Channel, Corpus};
use crate::fmt::fixed6;
use crate::meanfield::{
    controlled_equilibrium, project, ControlPolicy, EquilibriumReport, ModelParams, Regime,
    Trajectory, DEFAULT_N_PER_STEP,
};
use crate::montecarlo::{simulate, EnsembleTrajectory, SimConfig};
use crate::stats::{
    association_matrix, estimate_channel, marginal_distribution, AssociationMatrix,
    ChannelEstimate, MarginalReport,
};
use crate::svg::{heatmap, Band, LineChart, Series};

pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "aggrodyn",
    version,
    about = "Aggressive-comment dynamics under moderation strategies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate model parameters for one aggression channel from a corpus.
    Estimate {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        channel: Channel,
        #[arg(long)]
        out: PathBuf,
    },
    /// Marginal shares and pairwise association of the classifier labels.
    Analyze {
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Mean-field trajectory and equilibrium for a scenario.
    Project {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Monte Carlo ensemble for a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Controlled equilibria over a grid of injection/deletion budgets.
    Sweep {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_PER_STEP)]
        n: u64,
        /// `start..end:step` (inclusive) or a single value.
        #[arg(long, default_value = "0")]
        add: Grid,
        #[arg(long, default_value = "0")]
        delete: Grid,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labelled corpus from parameters.
    Synth {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = DEFAULT_N_PER_STEP as usize)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        x0: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value = "opponent")]
        channel: Channel,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate {
            corpus,
            channel,
            out,
        } => cmd_estimate(&corpus, channel, &out).map(drop),
        Command::Analyze {
            corpus,
            out_dir,
            svg,
        } => cmd_analyze(&corpus, &out_dir, svg).map(drop),
        Command::Project { scenario } => {
            let r = cmd_project(&scenario)?;
            println!(
                "x_star={} floor={} regime={}",
                fixed6(r.x_star),
                fixed6(r.floor),
                r.regime.name()
            );
            Ok(())
        }
        Command::Simulate { scenario } => {
            let e = cmd_simulate(&scenario)?;
            if let Some(last) = e.steps.last() {
                println!(
                    "terminal mean_x_raw={} std={}",
                    fixed6(last.mean_x_raw),
                    fixed6(last.std_x_raw)
                );
            }
            Ok(())
        }
        Command::Sweep {
            params,
            n,
            add,
            delete,
            out,
        } => cmd_sweep(&params, n, &add, &delete, &out).map(drop),
        Command::Synth {
            params,
            horizon,
            n,
            x0,
            seed,
            channel,
            out,
        } => cmd_synth(&params, horizon, n, x0, seed, channel, &out).map(drop),
    }
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_corpus(file).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_params(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelParams::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// `params.json` -> `params.details.json`.
pub fn details_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.details.json"))
}

pub fn cmd_estimate(corpus: &Path, channel: Channel, out: &Path) -> Result<ChannelEstimate> {
    let c = read_corpus(corpus)?;
    let est = estimate_channel(&c, channel)?;
    write(out, est.params.to_json() + "\n")?;
    write(
        &details_path(out),
        serde_json::to_string_pretty(&est)? + "\n",
    )?;
    Ok(est)
}

pub struct AnalyzeOutputs {
    pub marginals: MarginalReport,
    pub association: AssociationMatrix,
}

pub fn cmd_analyze(corpus: &Path, out_dir: &Path, svg: bool) -> Result<AnalyzeOutputs> {
    let c = read_corpus(corpus)?;
    let marginals = marginal_distribution(&c)?;
    let association = association_matrix(&c);
    let validation = validate_corpus(&c);

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(
        &out_dir.join("marginals.csv"),
        csv_bytes(|b| marginals.write_csv(b))?,
    )?;
    write(&out_dir.join("marginals.json"), marginals.to_json() + "\n")?;
    write(
        &out_dir.join("association.csv"),
        csv_bytes(|b| association.write_csv(b))?,
    )?;
    write(
        &out_dir.join("association_pairs.csv"),
        csv_bytes(|b| association.write_pairs_csv(b))?,
    )?;
    write(
        &out_dir.join("association.json"),
        association.to_json() + "\n",
    )?;
    write(
        &out_dir.join("validation.json"),
        serde_json::to_string_pretty(&validation)? + "\n",
    )?;
    if svg {
        write(
            &out_dir.join("association.svg"),
            heatmap(
                "Pairwise association (Cramér's V)",
                &association.features,
                &association.values,
                &association.degenerate,
            ),
        )?;
    }
    Ok(AnalyzeOutputs {
        marginals,
        association,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSource {
    Inline(ModelParams),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub params: ParamsSource,
    pub policy: ControlPolicy,
    pub sim: SimConfig,
    /// Output directory, relative to the scenario file.
    pub outputs: PathBuf,
    #[serde(default)]
    pub emit_svg: bool,
    /// Also write one CSV per replication when simulating.
    #[serde(default)]
    pub emit_replications: bool,
}

/// A scenario with its parameters and output directory resolved.
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub params: ModelParams,
    pub out_dir: PathBuf,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario: Scenario =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        scenario.schema == SCENARIO_SCHEMA,
        "unsupported scenario schema {} (expected {SCENARIO_SCHEMA})",
        scenario.schema
    );
    let base = path.parent().unwrap_or(Path::new("."));
    let params = match &scenario.params {
        ParamsSource::Inline(p) => {
            p.validate()?;
            *p
        }
        ParamsSource::Path(p) => read_params(&base.join(p))?,
    };
    scenario.policy.validate()?;
    let out_dir = base.join(&scenario.outputs);
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    Ok(LoadedScenario {
        scenario,
        params,
        out_dir,
    })
}

fn trajectory_chart(title: &str, t: &Trajectory) -> LineChart {
    let series = |name: &str, f: fn(&crate::meanfield::TrajectoryPoint) -> f64| Series {
        name: name.into(),
        points: t.points.iter().map(|p| (p.step as f64, f(p))).collect(),
    };
    LineChart {
        title: title.into(),
        x_label: "step (days)".into(),
        y_label: "aggressive fraction".into(),
        series: vec![series("x_raw", |p| p.x_raw), series("x_pool", |p| p.x_pool)],
        band: None,
    }
}

pub fn cmd_project(scenario: &Path) -> Result<EquilibriumReport> {
    let s = load_scenario(scenario)?;
    let policy = s.scenario.policy;
    let traj = project(
        s.scenario.sim.x0,
        &s.params,
        &policy,
        s.scenario.sim.horizon,
    )?;
    let report = controlled_equilibrium(&s.params, &policy)?;
    write(
        &s.out_dir.join("trajectory.csv"),
        csv_bytes(|b| traj.write_csv(b))?,
    )?;
    write(
        &s.out_dir.join("equilibrium.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    if s.scenario.emit_svg {
        let title = format!("Mean-field projection, x* = {:.4}", report.x_star);
        write(
            &s.out_dir.join("trajectory.svg"),
            trajectory_chart(&title, &traj).render(),
        )?;
    }
    Ok(report)
}

pub fn cmd_simulate(scenario: &Path) -> Result<EnsembleTrajectory> {
    let s = load_scenario(scenario)?;
    let ensemble = simulate(&s.params, &s.scenario.policy, &s.scenario.sim)?;
    write(
        &s.out_dir.join("ensemble.csv"),
        csv_bytes(|b| ensemble.write_csv(b))?,
    )?;
    if s.scenario.emit_replications {
        for (i, t) in ensemble.replications.iter().enumerate() {
            write(
                &s.out_dir
                    .join("replications")
                    .join(format!("rep_{i:04}.csv")),
                csv_bytes(|b| t.write_csv(b))?,
            )?;
        }
    }
    if s.scenario.emit_svg {
        let chart = LineChart {
            title: format!(
                "Monte Carlo ensemble ({} replications)",
                s.scenario.sim.replications
            ),
            x_label: "step (days)".into(),
            y_label: "aggressive fraction".into(),
            series: vec![
                Series {
                    name: "mean_x_raw".into(),
                    points: ensemble
                        .steps
                        .iter()
                        .map(|e| (e.step as f64, e.mean_x_raw))
                        .collect(),
                },
                Series {
                    name: "mean_x_pool".into(),
                    points: ensemble
                        .steps
                        .iter()
                        .map(|e| (e.step as f64, e.mean_x_pool))
                        .collect(),
                },
            ],
            band: Some(Band {
                name: "mean_x_raw ± std".into(),
                points: ensemble
                    .steps
                    .iter()
                    .map(|e| {
                        (
                            e.step as f64,
                            e.mean_x_raw - e.std_x_raw,
                            e.mean_x_raw + e.std_x_raw,
                        )
                    })
                    .collect(),
            }),
        };
        write(&s.out_dir.join("ensemble.svg"), chart.render())?;
    }
    Ok(ensemble)
}

/// Inclusive integer range `start..end:step`, or a single value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<u64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}"));
        let Some((start, rest)) = s.split_once("..") else {
            return Ok(Grid(vec![num(s)?]));
        };
        let (end, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let (start, end, step) = (num(start)?, num(end)?, num(step)?);
        if step == 0 {
            return Err("grid step must be positive".into());
        }
        if end < start {
            return Err(format!("grid end {end} is below start {start}"));
        }
        Ok(Grid((start..=end).step_by(step as usize).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub add: u64,
    pub delete: u64,
    pub x_star: f64,
    pub floor: f64,
    pub regime: Regime,
}

pub fn sweep(params: &ModelParams, n: u64, add: &Grid, delete: &Grid) -> Result<Vec<SweepRow>> {
    ensure!(n > 0, "n must be positive");
    ensure!(!add.0.is_empty() && !delete.0.is_empty(), "empty grid");
    if let Some(&d) = delete.0.iter().find(|&&d| d > n) {
        bail!("delete budget {d} exceeds n = {n}");
    }
    let mut rows = Vec::with_capacity(add.0.len() * delete.0.len());
    for &a in &add.0 {
        for &d in &delete.0 {
            let policy = ControlPolicy {
                n_per_step: n,
                add_per_step: a,
                delete_per_step: d,
            };
            let r = controlled_equilibrium(params, &policy)?;
            rows.push(SweepRow {
                add: a,
                delete: d,
                x_star: r.x_star,
                floor: r.floor,
                regime: r.regime,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["add", "delete", "x_star", "floor", "regime"])?;
    for r in rows {
        w.write_record([
            r.add.to_string(),
            r.delete.to_string(),
            fixed6(r.x_star),
            fixed6(r.floor),
            r.regime.name().to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn cmd_sweep(
    params: &Path,
    n: u64,
    add: &Grid,
    delete: &Grid,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    let p = read_params(params)?;
    let rows = sweep(&p, n, add, delete)?;
    write(out, write_sweep_csv(&rows)?)?;
    Ok(rows)
}

pub fn cmd_synth(
    params: &Path,
    horizon: usize,
    n: usize,
    x0: f64,
    seed: u64,
    channel: Channel,
    out: &Path,
) -> Result<Corpus> {
    let p = read_params(params)?;
    let corpus = synthesize_corpus(&p, horizon, n, x0, seed, channel)?;
    write(out, corpus.to_csv_string())?;
    Ok(corpus)
}
