//! One replication: sample shocks, run the configured equilibrium probes and
//! summarize what was found.

use serde::{Deserialize, Serialize};

use rucoord_core::dynamics::{
    audit_main_bound, enumerate_equilibria, sandwich, BestResponse, Direction, initial_profile,
};
use rucoord_core::game::{best_response, sample_shocks_replication, ShockProfile, ThresholdDist, Tie};
use rucoord_core::network::{Network, Profile};
use rucoord_core::StepFn;

use crate::config::{ExperimentConfig, Probe};
use crate::probes::{self, Aggregate};
use crate::runner::{env_workers, map_replications};
use crate::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    /// Degree-weighted.
    pub weighted: f64,
    pub unweighted: f64,
}

impl Averages {
    pub fn of(g: &Network, a: &Profile) -> Result<Self> {
        Ok(Averages {
            weighted: g.weighted_average(a)?,
            unweighted: a.unweighted_average()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeededLocal {
    /// Fixed point the agents first best-respond to.
    pub x: f64,
    pub averages: Averages,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuPath {
    pub x_star: f64,
    pub averages: Averages,
    /// `|Av(a) - x*|` for the degree-weighted average.
    pub distance: f64,
    pub upper_flips: usize,
    pub lower_flips: usize,
    pub bound: BoundSummary,
}

/// Per-copy averages on a union of complete graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyAverages {
    pub largest: Vec<f64>,
    pub smallest_upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication_id: u64,
    pub seed: u64,
    pub nodes: usize,
    /// Largest equilibrium (indifferent agents play 1).
    pub largest: Option<Averages>,
    /// Smallest equilibrium (indifferent agents play 0).
    pub smallest: Option<Averages>,
    /// Smallest equilibrium among those where indifferent agents play 1.
    pub smallest_upper: Option<Averages>,
    pub enumerated: Option<Vec<Averages>>,
    pub seeded_local: Vec<SeededLocal>,
    pub ru_path: Option<RuPath>,
    pub copies: Option<CopyAverages>,
}

impl ReplicationResult {
    /// Weighted averages of every equilibrium this replication found.
    pub fn found_averages(&self) -> Vec<f64> {
        let mut out: Vec<f64> = [self.largest, self.smallest, self.smallest_upper]
            .into_iter()
            .flatten()
            .map(|a| a.weighted)
            .collect();
        if let Some(e) = &self.enumerated {
            out.extend(e.iter().map(|a| a.weighted));
        }
        out.extend(self.seeded_local.iter().map(|s| s.averages.weighted));
        if let Some(r) = &self.ru_path {
            out.push(r.averages.weighted);
        }
        out
    }
}

/// Shared per-experiment state.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub dist: ThresholdDist,
    pub network: Network,
    /// Interior fixed points that are strongly stable within `eta`.
    pub stable_points: Vec<f64>,
    /// Strict RU-dominant outcome, when the RU path is requested.
    pub x_star: Option<f64>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let dist = cfg.game.build()?;
        let network = cfg.network.build()?;
        if cfg.has(Probe::Enumerate) && network.len() > rucoord_core::dynamics::ENUMERATE_MAX {
            return Err(HarnessError::Config(format!(
                "enumerate probe needs n <= {}, network has {}",
                rucoord_core::dynamics::ENUMERATE_MAX,
                network.len()
            )));
        }
        let stable_points = stable_points(&dist.p, cfg.eta)?;
        let x_star = if cfg.has(Probe::RuPath) {
            let dom = dist.p.ru_dominant();
            if !dom.strict {
                return Err(HarnessError::Probe(format!(
                    "RU path needs a strict RU-dominant outcome, maximizers {:?}",
                    dom.maximizers
                )));
            }
            Some(dom.lowest())
        } else {
            None
        };
        Ok(Setup {
            cfg: cfg.clone(),
            dist,
            network,
            stable_points,
            x_star,
        })
    }

    pub fn shocks(&self, replication: u64) -> Result<ShockProfile> {
        Ok(sample_shocks_replication(
            &self.dist,
            self.network.len(),
            self.cfg.seed,
            replication,
        )?)
    }
}

/// Fixed points in `(0, 1)` that are strongly stable with slope 0 on radius `eta`.
pub fn stable_points(p: &StepFn, eta: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for fp in p.fixed_points() {
        if fp.x > 0.0 && fp.x < 1.0 && p.is_strongly_stable(fp.x, 0.0, eta)? {
            out.push(fp.x);
        }
    }
    Ok(out)
}

/// Run every configured probe on replication `replication`.
pub fn replicate(setup: &Setup, replication: u64) -> Result<ReplicationResult> {
    let g = &setup.network;
    let cfg = &setup.cfg;
    let shocks = setup.shocks(replication)?;
    let n = g.len();
    let br = BestResponse::new(g, &shocks);

    let mut rec = ReplicationResult {
        replication_id: replication,
        seed: cfg.seed,
        nodes: n,
        largest: None,
        smallest: None,
        smallest_upper: None,
        enumerated: None,
        seeded_local: Vec::new(),
        ru_path: None,
        copies: None,
    };

    if cfg.has(Probe::Extremal) {
        let ones = Profile::from_actions(&vec![1; n]);
        let zeros = Profile::from_actions(&vec![0; n]);
        let largest = br.run(&ones, Direction::Down, Tie::Upper)?.final_profile;
        let smallest = br.run(&zeros, Direction::Up, Tie::Lower)?.final_profile;
        let smallest_upper = br.run(&zeros, Direction::Up, Tie::Upper)?.final_profile;
        rec.largest = Some(Averages::of(g, &largest)?);
        rec.smallest = Some(Averages::of(g, &smallest)?);
        rec.smallest_upper = Some(Averages::of(g, &smallest_upper)?);
        if let Some((block, count)) = g.blocks().filter(|&(_, c)| c > 1) {
            let per_copy = |a: &Profile| -> Vec<f64> {
                a.values()
                    .chunks(block)
                    .map(|c| c.iter().sum::<f64>() / block as f64)
                    .collect()
            };
            debug_assert_eq!(count * block, n);
            rec.copies = Some(CopyAverages {
                largest: per_copy(&largest),
                smallest_upper: per_copy(&smallest_upper),
            });
        }
    }

    if cfg.has(Probe::Enumerate) {
        let all = enumerate_equilibria(g, &shocks, Tie::Upper)?;
        rec.enumerated = Some(all.iter().map(|a| Averages::of(g, a)).collect::<Result<_>>()?);
    }

    if cfg.has(Probe::SeededLocal) {
        for &x in &setup.stable_points {
            let a0: Vec<u8> = shocks
                .thresholds
                .iter()
                .map(|&t| best_response(t, x, Tie::Upper))
                .collect();
            let sw = sandwich(g, &shocks, &Profile::from_actions(&a0), None)?;
            rec.seeded_local.push(SeededLocal {
                x,
                averages: Averages::of(g, sw.equilibrium())?,
            });
        }
    }

    if let Some(x_star) = setup.x_star {
        let p = &setup.dist.p;
        let a0 = initial_profile(p, x_star, &shocks, cfg.seed)?;
        let sw = sandwich(g, &shocks, &a0, None)?;
        let audit = audit_main_bound(g, &shocks, p, x_star, &sw.upper)?;
        let averages = Averages::of(g, sw.equilibrium())?;
        rec.ru_path = Some(RuPath {
            x_star,
            averages,
            distance: (averages.weighted - x_star).abs(),
            upper_flips: sw.upper.flips(),
            lower_flips: sw.lower.flips(),
            bound: BoundSummary {
                lhs: audit.lhs,
                rhs: audit.rhs(),
                satisfied: audit.satisfied,
            },
        });
    }
    Ok(rec)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub records: Vec<ReplicationResult>,
    pub aggregate: Aggregate,
}

/// [`run_experiment_with`] using the `SIM_WORKERS` worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(cfg, env_workers())
}

/// All replications, ordered by replication id, plus the theorem-level
/// summaries the configured probes support. Outputs are written when the
/// config names an output directory.
pub fn run_experiment_with(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    let setup = Setup::new(cfg)?;
    let records = map_replications(cfg.replications, workers, |r| replicate(&setup, r))?;
    let aggregate = probes::aggregate(&setup, &records);
    let report = ExperimentReport { records, aggregate };
    if let Some(dir) = &cfg.output {
        crate::output::write_report(&report, dir)?;
    }
    Ok(report)
}
