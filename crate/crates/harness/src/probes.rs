//! Theorem-level summaries over replications. The checks are reported as
//! data; judging them is left to the caller.

use serde::Serialize;

use rucoord_core::contagion::build_delta_wave;
use rucoord_core::dynamics::{BestResponse, Direction};
use rucoord_core::game::{ShockProfile, Tie};
use rucoord_core::lattice::{
    domination_check, good_set_search, partition, CubeReport, Domination, GoodSet,
};
use rucoord_core::network::{Network, Profile};
use rucoord_core::StepFn;

use crate::config::{ExperimentConfig, NetworkSource, Probe};
use crate::experiment::{replicate, ReplicationResult, Setup};
use crate::runner::{env_workers, map_replications};
use crate::{HarnessError, Result};

const Z95: f64 = 1.959963984540054;

/// Wilson score interval at 95%.
pub fn wilson(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointHits {
    pub x: f64,
    pub hits: u64,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl PointHits {
    fn new(x: f64, hits: u64, n: u64) -> Self {
        let (ci_low, ci_high) = wilson(hits, n);
        PointHits {
            x,
            hits,
            frequency: hits as f64 / n as f64,
            ci_low,
            ci_high,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub eta: f64,
    pub replications: u64,
    pub fineness: f64,
    /// Fineness above `eta`: the network is too coarse for the asymptotics.
    pub coarse: bool,
    pub fixed_points: Vec<PointHits>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem2Report {
    pub eta: f64,
    pub replications: u64,
    pub x_min: f64,
    pub x_max: f64,
    /// Largest equilibrium average above `x_max + eta`.
    pub escapes_high: u64,
    /// Smallest upper-equilibrium average below `x_min - eta`.
    pub escapes_low: u64,
    pub escapes_either: u64,
    pub frequency_high: f64,
    pub frequency_low: f64,
    pub frequency_either: f64,
    /// Same as `escapes_low` for the smallest equilibrium with indifferent agents at 0.
    pub escapes_low_lower_tie: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem4Report {
    pub eta: f64,
    pub replications: u64,
    pub x_star: f64,
    pub within_eta: u64,
    pub frequency: f64,
    pub unweighted_within_eta: u64,
    pub bound_satisfied: u64,
    /// Distance quantiles at 5, 25, 50, 75 and 95%.
    pub distance_quantiles: [f64; 5],
    /// `w(g)`, the degree imbalance guarding the unweighted averages.
    pub imbalance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub eta: f64,
    pub replications: u64,
    pub copies: usize,
    pub targets: Vec<PointHits>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub theorem1: Option<Theorem1Report>,
    pub theorem2: Option<Theorem2Report>,
    pub theorem4: Option<Theorem4Report>,
    pub corollary: Option<CorollaryReport>,
}

/// Summaries supported by the probes the records carry.
pub fn aggregate(setup: &Setup, records: &[ReplicationResult]) -> Aggregate {
    let cfg = &setup.cfg;
    let extremal = cfg.has(Probe::Extremal);
    Aggregate {
        theorem1: (extremal || cfg.has(Probe::SeededLocal)).then(|| theorem1(setup, records)),
        theorem2: extremal.then(|| theorem2(setup, records)),
        theorem4: setup.x_star.map(|x| theorem4(setup, x, records)),
        corollary: (extremal && records.iter().all(|r| r.copies.is_some()))
            .then(|| corollary(cfg.eta, records, &default_targets())),
    }
}

/// Strongly stable fixed points, boundary included.
fn all_stable_points(p: &StepFn, eta: f64) -> Vec<f64> {
    p.fixed_points()
        .into_iter()
        .map(|f| f.x)
        .filter(|&x| p.is_strongly_stable(x, 0.0, eta).unwrap_or(false))
        .collect()
}

fn theorem1(setup: &Setup, records: &[ReplicationResult]) -> Theorem1Report {
    let eta = setup.cfg.eta;
    let n = records.len() as u64;
    let fineness = setup.network.fineness();
    let fixed_points = all_stable_points(&setup.dist.p, eta)
        .into_iter()
        .map(|x| {
            let hits = records
                .iter()
                .filter(|r| r.found_averages().iter().any(|&a| (a - x).abs() <= eta))
                .count() as u64;
            PointHits::new(x, hits, n)
        })
        .collect();
    Theorem1Report {
        eta,
        replications: n,
        fineness,
        coarse: fineness > eta,
        fixed_points,
    }
}

fn theorem2(setup: &Setup, records: &[ReplicationResult]) -> Theorem2Report {
    let eta = setup.cfg.eta;
    let (x_min, x_max) = setup.dist.p.extreme_fixed_points();
    let mut high = 0;
    let mut low = 0;
    let mut either = 0;
    let mut low_lower = 0;
    for r in records {
        let h = r.largest.is_some_and(|a| a.weighted > x_max + eta);
        let l = r.smallest_upper.is_some_and(|a| a.weighted < x_min - eta);
        high += h as u64;
        low += l as u64;
        either += (h || l) as u64;
        low_lower += r.smallest.is_some_and(|a| a.weighted < x_min - eta) as u64;
    }
    let n = records.len() as u64;
    let f = |k: u64| k as f64 / n as f64;
    Theorem2Report {
        eta,
        replications: n,
        x_min,
        x_max,
        escapes_high: high,
        escapes_low: low,
        escapes_either: either,
        frequency_high: f(high),
        frequency_low: f(low),
        frequency_either: f(either),
        escapes_low_lower_tie: low_lower,
    }
}

fn theorem4(setup: &Setup, x_star: f64, records: &[ReplicationResult]) -> Theorem4Report {
    let eta = setup.cfg.eta;
    let paths: Vec<_> = records.iter().filter_map(|r| r.ru_path.as_ref()).collect();
    let mut d: Vec<f64> = paths.iter().map(|p| p.distance).collect();
    d.sort_by(f64::total_cmp);
    let within = paths.iter().filter(|p| p.distance <= eta).count() as u64;
    let n = records.len() as u64;
    Theorem4Report {
        eta,
        replications: n,
        x_star,
        within_eta: within,
        frequency: within as f64 / n as f64,
        unweighted_within_eta: paths
            .iter()
            .filter(|p| (p.averages.unweighted - x_star).abs() <= eta)
            .count() as u64,
        bound_satisfied: paths.iter().filter(|p| p.bound.satisfied).count() as u64,
        distance_quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&d, q)),
        imbalance: setup.network.imbalance(),
    }
}

pub fn default_targets() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Averages reachable by switching copies one at a time from their smallest
/// to their largest equilibrium. Every such mix is an equilibrium of the union.
pub fn mixed_averages(smallest: &[f64], largest: &[f64]) -> Vec<f64> {
    let k = smallest.len() as f64;
    let mut sum: f64 = smallest.iter().sum();
    let mut out = vec![sum / k];
    for (lo, hi) in smallest.iter().zip(largest) {
        sum += hi - lo;
        out.push(sum / k);
    }
    out
}

fn corollary(eta: f64, records: &[ReplicationResult], targets: &[f64]) -> CorollaryReport {
    let n = records.len() as u64;
    let mixes: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let c = r.copies.as_ref().expect("copy averages");
            mixed_averages(&c.smallest_upper, &c.largest)
        })
        .collect();
    let targets = targets
        .iter()
        .map(|&t| {
            let hits = mixes
                .iter()
                .filter(|m| m.iter().any(|&a| (a - t).abs() <= eta))
                .count() as u64;
            PointHits::new(t, hits, n)
        })
        .collect();
    CorollaryReport {
        eta,
        replications: n,
        copies: records.first().and_then(|r| r.copies.as_ref()).map_or(0, |c| c.largest.len()),
        targets,
    }
}

fn run_records(cfg: &ExperimentConfig, probes: &[Probe]) -> Result<(Setup, Vec<ReplicationResult>)> {
    let mut cfg = cfg.clone();
    for p in probes {
        if !cfg.has(*p) {
            cfg.probes.push(*p);
        }
    }
    let setup = Setup::new(&cfg)?;
    let records = map_replications(cfg.replications, env_workers(), |r| replicate(&setup, r))?;
    Ok((setup, records))
}

/// How often each strongly stable fixed point lies within `eta` of a found
/// equilibrium average.
pub fn probe_theorem1(cfg: &ExperimentConfig) -> Result<Theorem1Report> {
    let mut probes = vec![Probe::Extremal, Probe::SeededLocal];
    if cfg.network.nodes().is_some_and(|n| n <= rucoord_core::dynamics::ENUMERATE_MAX) {
        probes.push(Probe::Enumerate);
    }
    let (setup, records) = run_records(cfg, &probes)?;
    Ok(theorem1(&setup, &records))
}

/// How often the extremal equilibrium averages leave `[x_min - eta, x_max + eta]`.
pub fn probe_theorem2(cfg: &ExperimentConfig) -> Result<Theorem2Report> {
    let (setup, records) = run_records(cfg, &[Probe::Extremal])?;
    Ok(theorem2(&setup, &records))
}

/// Distance of the sandwich equilibrium from `x*`, with the bound audit.
pub fn probe_theorem4(cfg: &ExperimentConfig) -> Result<(Theorem4Report, Vec<ReplicationResult>)> {
    let (setup, records) = run_records(cfg, &[Probe::RuPath])?;
    let x_star = setup.x_star.expect("RU path configured");
    Ok((theorem4(&setup, x_star, &records), records))
}

/// Targets in `targets` approximated by mixing per-copy extremal equilibria.
pub fn probe_corollary(cfg: &ExperimentConfig, targets: &[f64]) -> Result<CorollaryReport> {
    if !matches!(cfg.network, NetworkSource::Copies { .. }) {
        return Err(HarnessError::Config("corollary probe needs a copies network".into()));
    }
    let (_, records) = run_records(cfg, &[Probe::Extremal])?;
    Ok(corollary(cfg.eta, &records, targets))
}

/// Largest and smallest equilibria with indifferent agents playing 1.
fn upper_extremal(g: &Network, shocks: &ShockProfile) -> Result<(Profile, Profile)> {
    let br = BestResponse::new(g, shocks);
    let n = g.len();
    let hi = br.run(&Profile::from_actions(&vec![1; n]), Direction::Down, Tie::Upper)?;
    let lo = br.run(&Profile::from_actions(&vec![0; n]), Direction::Up, Tie::Upper)?;
    Ok((hi.final_profile, lo.final_profile))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem3Record {
    pub replication_id: u64,
    pub lattice_largest: f64,
    pub lattice_smallest: f64,
    pub complete_largest: f64,
    pub complete_smallest: f64,
    pub bad_fraction: Option<f64>,
    pub good_set: Option<GoodSet>,
    pub domination: Option<Domination>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem3Report {
    pub eta: f64,
    pub replications: u64,
    pub x_star: f64,
    pub x_star_strict: bool,
    pub lattice_median_distance: f64,
    pub complete_median_distance: f64,
    /// Lattice largest-equilibrium median strictly closer to `x*`.
    pub lattice_closer: bool,
    pub lattice_median_dispersion: f64,
    pub complete_median_dispersion: f64,
    pub wave_exists: bool,
    pub good_sets_found: u64,
    pub mean_bad_fraction: Option<f64>,
    /// `2 exp(-2 b^2 gamma^2)`, the per-cube bad probability bound.
    pub dkw_bound: Option<f64>,
    pub records: Vec<Theorem3Record>,
}

/// Extremal equilibria on the lattice against the complete graph of the same
/// size with the same shocks, plus cube analysis when configured.
pub fn probe_theorem3(cfg: &ExperimentConfig) -> Result<Theorem3Report> {
    probe_theorem3_with(cfg, env_workers())
}

pub fn probe_theorem3_with(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Theorem3Report> {
    let NetworkSource::Lattice { .. } = cfg.network else {
        return Err(HarnessError::Config("theorem 3 probe needs a lattice network".into()));
    };
    let mut cfg = cfg.clone();
    cfg.probes = vec![Probe::Extremal];
    let setup = Setup::new(&cfg)?;
    let lattice = &setup.network;
    let spec = lattice.lattice_spec().expect("lattice network");
    let complete = Network::complete_graph(lattice.len())?;
    let p = &setup.dist.p;
    let dom = p.ru_dominant();
    let x_star = dom.lowest();
    let wave = build_delta_wave(p, cfg.eta).ok();
    let part = cfg
        .lattice
        .map(|l| partition(spec, l.b, l.big).map(|part| (l, part)))
        .transpose()?;

    let records = map_replications(cfg.replications, workers, |r| {
        let shocks = setup.shocks(r)?;
        let (lh, ll) = upper_extremal(lattice, &shocks)?;
        let (ch, cl) = upper_extremal(&complete, &shocks)?;
        let mut rec = Theorem3Record {
            replication_id: r,
            lattice_largest: lattice.weighted_average(&lh)?,
            lattice_smallest: lattice.weighted_average(&ll)?,
            complete_largest: complete.weighted_average(&ch)?,
            complete_smallest: complete.weighted_average(&cl)?,
            bad_fraction: None,
            good_set: None,
            domination: None,
        };
        if let Some((l, part)) = &part {
            let gs = good_set_search(part, &shocks, p, l.gamma, l.radius)?;
            rec.bad_fraction = Some(gs.bad.iter().filter(|&&b| b).count() as f64 / gs.bad.len() as f64);
            if let (true, Some(w)) = (gs.found, &wave) {
                rec.domination = Some(domination_check(part, &lh, w, &gs.w, l.radius, l.rho)?);
            }
            rec.good_set = Some(gs);
        }
        Ok(rec)
    })?;

    let dist = |f: fn(&Theorem3Record) -> f64| -> Vec<f64> {
        records.iter().map(|r| (f(r) - x_star).abs()).collect()
    };
    let lattice_median_distance = median(&dist(|r| r.lattice_largest));
    let complete_median_distance = median(&dist(|r| r.complete_largest));
    let spread = |f: fn(&Theorem3Record) -> f64| -> f64 { median(&records.iter().map(f).collect::<Vec<_>>()) };
    let bad: Vec<f64> = records.iter().filter_map(|r| r.bad_fraction).collect();
    Ok(Theorem3Report {
        eta: cfg.eta,
        replications: cfg.replications,
        x_star,
        x_star_strict: dom.strict,
        lattice_median_distance,
        complete_median_distance,
        lattice_closer: lattice_median_distance < complete_median_distance,
        lattice_median_dispersion: spread(|r| r.lattice_largest - r.lattice_smallest),
        complete_median_dispersion: spread(|r| r.complete_largest - r.complete_smallest),
        wave_exists: wave.is_some(),
        good_sets_found: records
            .iter()
            .filter(|r| r.good_set.as_ref().is_some_and(|g| g.found))
            .count() as u64,
        mean_bad_fraction: (!bad.is_empty()).then(|| bad.iter().sum::<f64>() / bad.len() as f64),
        dkw_bound: part
            .as_ref()
            .map(|(l, part)| 2.0 * (-2.0 * (part.small_side() as f64).powi(2) * l.gamma * l.gamma).exp()),
        records,
    })
}

/// Cube report of the largest lattice equilibrium for every replication.
pub fn cube_reports(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<CubeReport>> {
    let Some(l) = cfg.lattice else {
        return Err(HarnessError::Config("cube reports need a lattice section".into()));
    };
    let mut cfg = cfg.clone();
    cfg.probes = vec![Probe::Extremal];
    let setup = Setup::new(&cfg)?;
    let Some(spec) = setup.network.lattice_spec() else {
        return Err(HarnessError::Config("cube reports need a lattice network".into()));
    };
    let part = partition(spec, l.b, l.big)?;
    map_replications(cfg.replications, workers, |r| {
        let shocks = setup.shocks(r)?;
        let (largest, _) = upper_extremal(&setup.network, &shocks)?;
        Ok(CubeReport::new(&part, &shocks, &setup.dist.p, &largest, l.gamma)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson(50, 100);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
        let (lo, hi) = wilson(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-4);
    }

    #[test]
    fn quantile_examples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn mixing_walks_from_smallest_to_largest() {
        let m = mixed_averages(&[0.1, 0.1, 0.2, 0.0], &[0.9, 0.8, 0.9, 1.0]);
        assert_eq!(m.len(), 5);
        assert!((m[0] - 0.1).abs() < 1e-12);
        assert!((m[4] - 0.9).abs() < 1e-12);
        assert!(m.windows(2).all(|w| w[1] >= w[0]));
    }
}
