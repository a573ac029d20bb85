use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use rucoord::config::{ExperimentConfig, GameSource};
use rucoord::output::{to_json12, to_json12_pretty};
use rucoord::probes::{cube_reports, probe_theorem3_with};
use rucoord::runner::{env_workers, map_replications};
use rucoord::{experiment::Setup, run_experiment_with};
use rucoord_core::contagion::build_delta_wave;
use rucoord_core::dynamics::{enumerate_equilibria, ENUMERATE_MAX};
use rucoord_core::game::Tie;
use rucoord_core::network::LatticeSpec;
use rucoord_core::Network64 as Network;
use rucoord_core::stepfn::FixedPointKind;

#[derive(Parser)]
#[command(name = "rucoord", version, about = "Coordination games with random utility on networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximizers of the RU objective of a game.
    RuDominant { game: PathBuf },
    /// Fixed points of P and their strong stability.
    FixedPoints {
        game: PathBuf,
        /// Stability radius.
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
    },
    /// Build and verify a contagion wave.
    Wave {
        game: PathBuf,
        #[arg(long)]
        eta: f64,
    },
    /// Run an experiment and write its report files.
    Simulate {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads, overriding SIM_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Lattice against complete graph, cube reports and good sets.
    LatticeAnalyze {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List every equilibrium of small networks.
    Enumerate {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print a generated network as an edge list.
    Graph {
        #[command(subcommand)]
        kind: GraphKind,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GraphKind {
    Complete { n: usize },
    Copies { n: usize, k: usize },
    Lattice { side: usize, density: usize },
}

#[derive(Serialize)]
struct FixedPointRow {
    x: f64,
    kind: FixedPointKind,
    strongly_stable: bool,
}

#[derive(Serialize)]
struct EquilibriumRow {
    replication_id: u64,
    tie: &'static str,
    actions: String,
    weighted: f64,
    unweighted: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::RuDominant { game } => {
            let dist = GameSource::load(&game)?.build()?;
            println!("{}", to_json12(&dist.p.ru_dominant()));
        }
        Command::FixedPoints { game, eta } => {
            let p = GameSource::load(&game)?.build()?.p;
            let rows = p
                .fixed_points()
                .into_iter()
                .map(|f| {
                    Ok(FixedPointRow {
                        x: f.x,
                        kind: f.kind,
                        strongly_stable: p.is_strongly_stable(f.x, 0.0, eta)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            println!("{}", to_json12(&rows));
        }
        Command::Wave { game, eta } => {
            let p = GameSource::load(&game)?.build()?.p;
            let wave = build_delta_wave(&p, eta)?;
            println!("{}", to_json12_pretty(&wave));
        }
        Command::Simulate { config, out, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.output = out;
            }
            let report = run_experiment_with(&cfg, workers.or_else(env_workers))?;
            println!("{}", to_json12_pretty(&report.aggregate));
        }
        Command::LatticeAnalyze { config, out, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let workers = workers.or_else(env_workers);
            let report = probe_theorem3_with(&cfg, workers)?;
            let out = out.or(cfg.output.clone());
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("theorem3.json"), to_json12_pretty(&report) + "\n")?;
                if cfg.lattice.is_some() {
                    for (r, cubes) in cube_reports(&cfg, workers)?.iter().enumerate() {
                        fs::write(dir.join(format!("cubes_{r}.csv")), cubes.to_csv())?;
                    }
                }
            }
            let mut summary = serde_json::to_value(&report)?;
            if let Some(map) = summary.as_object_mut() {
                map.remove("records");
            }
            println!("{}", to_json12_pretty(&summary));
        }
        Command::Enumerate { config, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = Setup::new(&cfg)?;
            let g = &setup.network;
            if g.len() > ENUMERATE_MAX {
                bail!("enumerate needs n <= {ENUMERATE_MAX}, network has {}", g.len());
            }
            let rows = map_replications(cfg.replications, workers.or_else(env_workers), |r| {
                let shocks = setup.shocks(r)?;
                let mut rows = Vec::new();
                for (tie, name) in [(Tie::Upper, "upper"), (Tie::Lower, "lower")] {
                    for a in enumerate_equilibria(g, &shocks, tie)? {
                        rows.push(EquilibriumRow {
                            replication_id: r,
                            tie: name,
                            actions: a.values().iter().map(|&v| if v > 0.5 { '1' } else { '0' }).collect(),
                            weighted: g.weighted_average(&a)?,
                            unweighted: a.unweighted_average()?,
                        });
                    }
                }
                Ok(rows)
            })?;
            let text: String = rows.iter().flatten().map(|r| to_json12(r) + "\n").collect();
            if let Some(dir) = &cfg.output {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("equilibria.jsonl"), &text)?;
            }
            print!("{text}");
        }
        Command::Graph { kind, out } => {
            let g = match kind {
                GraphKind::Complete { n } => Network::complete_graph(n)?,
                GraphKind::Copies { n, k } => Network::complete_graph(n)?.disjoint_copies(k)?,
                GraphKind::Lattice { side, density } => Network::lattice(LatticeSpec::new(side, density)?)?,
            };
            emit(&g.to_edge_list(), out.as_deref())?;
        }
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
