//! Threshold distributions, shock sampling and best responses.
//!
//! A random-utility game enters the simulation only through `P`, the
//! probability that an agent's best-response threshold is at most `x`. Each
//! agent's shock is summarized by that threshold `t_i`: action 1 is a best
//! response exactly when the neighborhood fraction playing 1 reaches `t_i`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::stepfn::{step_approximate, Direction, StepFn};

/// CDF of the additive payoff shock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShockCdf {
    Uniform { lo: f64, hi: f64 },
    Logistic { loc: f64, scale: f64 },
    Normal { mean: f64, sd: f64 },
}

impl ShockCdf {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShockCdf::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            ShockCdf::Logistic { loc, scale } => loc.is_finite() && scale > 0.0 && scale.is_finite(),
            ShockCdf::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "shock distribution parameter",
                value: f64::NAN,
                domain: "finite location, positive scale",
            })
        }
    }

    pub fn cdf(&self, e: f64) -> f64 {
        match *self {
            ShockCdf::Uniform { lo, hi } => ((e - lo) / (hi - lo)).clamp(0.0, 1.0),
            ShockCdf::Logistic { loc, scale } => 1.0 / (1.0 + (-(e - loc) / scale).exp()),
            ShockCdf::Normal { mean, sd } => Normal::new(mean, sd).map_or(f64::NAN, |n| n.cdf(e)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Additive {
        alpha: f64,
        lambda: f64,
        shock: ShockCdf,
        max_step: f64,
    },
}

/// Law of the best-response threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDist {
    pub p: StepFn,
    pub provenance: Provenance,
}

impl ThresholdDist {
    pub fn direct(p: StepFn) -> Self {
        ThresholdDist {
            p,
            provenance: Provenance::Direct,
        }
    }
}

/// `P(x) = Prob(alpha - lambda * eps <= x)` for `eps ~ shock`, before discretization.
pub fn additive_p(alpha: f64, lambda: f64, shock: &ShockCdf, x: f64) -> f64 {
    (1.0 - shock.cdf((alpha - x) / lambda)).clamp(0.0, 1.0)
}

/// Threshold law of the additive model with threshold `beta(eps) = alpha - lambda * eps`,
/// discretized by a midpoint staircase with steps of at most `max_step`.
pub fn additive_game(alpha: f64, lambda: f64, shock: ShockCdf, max_step: f64) -> Result<ThresholdDist> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            what: "alpha",
            value: alpha,
            domain: "(0, 1)",
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain {
            what: "lambda",
            value: lambda,
            domain: "(0, inf)",
        });
    }
    shock.validate()?;
    let p = step_approximate(|x| additive_p(alpha, lambda, &shock, x), max_step, Direction::Midpoint)?;
    Ok(ThresholdDist {
        p,
        provenance: Provenance::Additive {
            alpha,
            lambda,
            shock,
            max_step,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tie {
    /// Indifferent agents play 1.
    Upper,
    /// Indifferent agents play 0.
    Lower,
}

#[inline]
pub fn best_response(t: f64, beta: f64, tie: Tie) -> u8 {
    let one = match tie {
        Tie::Upper => t <= beta,
        Tie::Lower => t < beta,
    };
    one as u8
}

/// Canonical utility of `action` at neighborhood fraction `x` for an agent whose
/// uniform draw is `eps`: `x - P^-1(eps)` for action 1, 0 for action 0.
pub fn canonical_payoff(x: f64, eps: f64, p: &StepFn, action: u8) -> f64 {
    if action == 0 {
        0.0
    } else {
        x - p.inverse_clamped(eps)
    }
}

/// Per-agent thresholds `t_i = P^-1(u_i)` with their uniform draws.
#[derive(Clone, Debug, PartialEq)]
pub struct ShockProfile {
    pub thresholds: Vec<f64>,
    pub uniforms: Vec<f64>,
    pub seed: u64,
    pub replication: u64,
}

#[derive(Serialize, Deserialize)]
struct ShockRow {
    agent_id: usize,
    #[serde(with = "ext_float")]
    u: f64,
    #[serde(with = "ext_float")]
    t: f64,
}

#[derive(Serialize, Deserialize)]
struct ShockTable {
    seed: u64,
    replication: u64,
    agents: Vec<ShockRow>,
}

impl ShockProfile {
    /// Wrap explicit thresholds; `+inf` marks agents for whom action 0 is dominant.
    /// Uniform draws are recorded as NaN.
    pub fn from_thresholds(thresholds: Vec<f64>) -> Result<Self> {
        if let Some(&t) = thresholds.iter().find(|t| t.is_nan()) {
            return Err(Error::Domain {
                what: "threshold",
                value: t,
                domain: "extended reals",
            });
        }
        Ok(ShockProfile {
            uniforms: vec![f64::NAN; thresholds.len()],
            thresholds,
            seed: 0,
            replication: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// JSON table of `(agent_id, u, t)` rows with infinities written as `"inf"`.
    pub fn to_json(&self) -> String {
        let table = ShockTable {
            seed: self.seed,
            replication: self.replication,
            agents: self
                .thresholds
                .iter()
                .zip(&self.uniforms)
                .enumerate()
                .map(|(agent_id, (&t, &u))| ShockRow { agent_id, u, t })
                .collect(),
        };
        serde_json::to_string(&table).expect("shock table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let table: ShockTable = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let mut agents = table.agents;
        agents.sort_by_key(|r| r.agent_id);
        if agents.iter().enumerate().any(|(i, r)| r.agent_id != i) {
            return Err(Error::Parse {
                line: 0,
                msg: "agent ids must be 0..n".into(),
            });
        }
        Ok(ShockProfile {
            thresholds: agents.iter().map(|r| r.t).collect(),
            uniforms: agents.iter().map(|r| r.u).collect(),
            seed: table.seed,
            replication: table.replication,
        })
    }
}

mod ext_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Null(()) => Ok(f64::NAN),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad number {t:?}"))),
            },
        }
    }
}

/// i.i.d. thresholds for `n` agents, replication 0.
pub fn sample_shocks(dist: &ThresholdDist, n: usize, seed: u64) -> Result<ShockProfile> {
    sample_shocks_replication(dist, n, seed, 0)
}

/// i.i.d. thresholds drawn from the `replication`-th shock stream of `seed`.
pub fn sample_shocks_replication(
    dist: &ThresholdDist,
    n: usize,
    seed: u64,
    replication: u64,
) -> Result<ShockProfile> {
    if n == 0 {
        return Err(Error::Empty("population"));
    }
    let mut r = rng::stream(seed, Purpose::Shocks, replication);
    let uniforms: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let thresholds = uniforms
        .iter()
        .map(|&u| dist.p.inverse(u))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShockProfile {
        thresholds,
        uniforms,
        seed,
        replication,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNIFORM: ShockCdf = ShockCdf::Uniform { lo: -0.5, hi: 0.5 };

    #[test]
    fn best_response_examples() {
        assert_eq!(best_response(0.5, 0.5, Tie::Upper), 1);
        assert_eq!(best_response(0.5, 0.5, Tie::Lower), 0);
        assert_eq!(best_response(f64::INFINITY, 1.0, Tie::Upper), 0);
        assert_eq!(best_response(f64::INFINITY, 1.0, Tie::Lower), 0);
        assert_eq!(best_response(0.0, 0.0, Tie::Upper), 1);
    }

    #[test]
    fn payoff_of_action_zero_vanishes() {
        let p = StepFn::new(0.2, vec![(0.5, 0.8)]).unwrap();
        assert_eq!(canonical_payoff(0.3, 0.7, &p, 0), 0.0);
        let diag = step_approximate(|x| x, 1.0 / 64.0, Direction::Midpoint).unwrap();
        assert!(canonical_payoff(0.5, 0.5, &diag, 1).abs() <= 1.0 / 64.0);
    }

    #[test]
    fn payoff_sign_matches_best_response() {
        let p = StepFn::new(0.1, vec![(0.3, 0.4), (0.6, 0.7), (0.8, 0.85)]).unwrap();
        let mut r = rng::stream(11, Purpose::Instance, 0);
        for _ in 0..1000 {
            let x: f64 = r.random();
            let eps: f64 = r.random();
            let t = p.inverse(eps).unwrap();
            let br = best_response(t, x, Tie::Upper);
            assert_eq!(br == 1, canonical_payoff(x, eps, &p, 1) >= 0.0, "x={x} eps={eps}");
        }
    }

    #[test]
    fn additive_uniform_is_diagonal() {
        let d = additive_game(0.5, 1.0, UNIFORM, 1.0 / 256.0).unwrap();
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            assert!((d.p.eval(x).unwrap() - x).abs() <= 1.0 / 256.0 + 1e-12);
        }
    }

    #[test]
    fn additive_closed_form_matches_monte_carlo() {
        // P(x) = Prob(alpha - lambda * eps <= x) against an empirical CDF of 1e5 draws.
        let (alpha, lambda) = (0.6, 0.3);
        let mut r = rng::stream(5, Purpose::Instance, 0);
        let mut betas: Vec<f64> = (0..100_000).map(|_| alpha - lambda * (r.random::<f64>() - 0.5)).collect();
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let emp = betas.partition_point(|&b| b <= x) as f64 / betas.len() as f64;
            assert!((emp - additive_p(alpha, lambda, &UNIFORM, x)).abs() < 0.01, "x={x}");
        }
    }

    #[test]
    fn additive_game_matches_formula_on_grid() {
        for shock in [
            UNIFORM,
            ShockCdf::Logistic { loc: 0.0, scale: 0.2 },
            ShockCdf::Normal { mean: 0.0, sd: 0.3 },
        ] {
            let d = additive_game(0.4, 0.5, shock, 0.01).unwrap();
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                let exact = additive_p(0.4, 0.5, &shock, x);
                assert!((d.p.eval(x).unwrap() - exact).abs() <= 0.01 + 1e-3, "{shock:?} x={x}");
            }
        }
    }

    #[test]
    fn additive_rejects_bad_parameters() {
        assert!(additive_game(0.5, 0.0, UNIFORM, 0.01).is_err());
        assert!(additive_game(1.2, 1.0, UNIFORM, 0.01).is_err());
        assert!(additive_game(0.5, 1.0, ShockCdf::Uniform { lo: 1.0, hi: 0.0 }, 0.01).is_err());
    }

    #[test]
    fn small_lambda_picks_risk_dominant_action() {
        let d = additive_game(0.6, 0.02, UNIFORM, 1e-3).unwrap();
        let x = d.p.ru_dominant().highest();
        assert!(x <= 0.05);
        // P^-1 is close to alpha away from the ends.
        for y in [0.1, 0.5, 0.9] {
            assert!((d.p.inverse(y).unwrap() - 0.6).abs() < 0.02);
        }
    }

    #[test]
    fn smaller_lambda_crosses_nearer_alpha() {
        let nearest = |shock, lambda| {
            let d = additive_game(0.3, lambda, shock, 1e-3).unwrap();
            d.p.fixed_points().iter().map(|f| (f.x - 0.3).abs()).fold(f64::MAX, f64::min)
        };
        assert!(nearest(UNIFORM, 0.1) <= nearest(UNIFORM, 2.0) + 2e-3);
        let skewed = ShockCdf::Uniform { lo: -0.2, hi: 0.8 };
        assert!(nearest(skewed, 0.1) < nearest(skewed, 0.5));
    }

    #[test]
    fn degenerate_samples() {
        let one = ThresholdDist::direct(StepFn::constant(1.0).unwrap());
        assert!(sample_shocks(&one, 50, 1).unwrap().thresholds.iter().all(|&t| t == 0.0));
        let zero = ThresholdDist::direct(StepFn::constant(0.0).unwrap());
        let s = sample_shocks(&zero, 50, 1).unwrap();
        // u = 0 exactly has probability 2^-53.
        assert!(s.thresholds.iter().all(|&t| t == f64::INFINITY));
    }

    #[test]
    fn two_level_sample_frequencies() {
        let dist = ThresholdDist::direct(StepFn::new(0.2, vec![(0.5, 0.8)]).unwrap());
        let s = sample_shocks(&dist, 100_000, 42).unwrap();
        let n = s.len() as f64;
        let f = |pred: &dyn Fn(f64) -> bool| s.thresholds.iter().filter(|&&t| pred(t)).count() as f64 / n;
        assert!((f(&|t| t == 0.0) - 0.2).abs() < 0.005);
        assert!((f(&|t| t == 0.5) - 0.6).abs() < 0.005);
        assert!((f(&|t| t.is_infinite()) - 0.2).abs() < 0.005);
    }

    #[test]
    fn sampling_is_reproducible_and_consistent() {
        let dist = ThresholdDist::direct(StepFn::new(0.1, vec![(0.3, 0.5), (0.9, 0.95)]).unwrap());
        let a = sample_shocks_replication(&dist, 1000, 9, 3).unwrap();
        let b = sample_shocks_replication(&dist, 1000, 9, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_shocks_replication(&dist, 1000, 9, 4).unwrap();
        assert_ne!(a.thresholds, c.thresholds);
        for (&t, &u) in a.thresholds.iter().zip(&a.uniforms) {
            assert_eq!(t, dist.p.inverse(u).unwrap());
            if u > dist.p.value_at_one() {
                assert_eq!(t, f64::INFINITY);
            }
        }
        // A longer population extends rather than reshuffles the draws.
        let d = sample_shocks_replication(&dist, 1500, 9, 3).unwrap();
        assert_eq!(&d.thresholds[..1000], &a.thresholds[..]);
    }

    #[test]
    fn dkw_bound_over_seeds() {
        // Sup distance between the empirical threshold CDF and P stays under the
        // 95% DKW radius in at least 90 of 100 seeds.
        let dist = ThresholdDist::direct(StepFn::new(0.05, vec![(0.2, 0.3), (0.5, 0.6), (0.7, 0.9)]).unwrap());
        let n = 2000;
        let radius = 1.36 / (n as f64).sqrt();
        let mut ok = 0;
        for seed in 0..100 {
            let s = sample_shocks(&dist, n, seed).unwrap();
            let mut t = s.thresholds.clone();
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Both CDFs are step functions jumping only at 0, 0.2, 0.5, 0.7.
            let ks = [0.0, 0.2, 0.5, 0.7, 1.0]
                .iter()
                .map(|&x| (t.partition_point(|&v| v <= x) as f64 / n as f64 - dist.p.eval(x).unwrap()).abs())
                .fold(0.0, f64::max);
            ok += (ks <= radius) as usize;
        }
        assert!(ok >= 90, "{ok}");
    }

    #[test]
    fn shock_table_round_trip() {
        let mut s = ShockProfile::from_thresholds(vec![0.25, f64::INFINITY, 0.0]).unwrap();
        s.uniforms = vec![0.1, 0.99, 0.0];
        let text = s.to_json();
        assert!(text.contains(r#""t":"inf""#));
        assert_eq!(ShockProfile::from_json(&text).unwrap(), s);
        let nan = ShockProfile::from_thresholds(vec![0.5]).unwrap();
        let back = ShockProfile::from_json(&nan.to_json()).unwrap();
        assert!(back.uniforms[0].is_nan());
    }

    proptest! {
        #[test]
        fn best_response_monotone(t in 0.0..1.0f64, b1 in 0.0..=1.0f64, b2 in 0.0..=1.0f64, t2 in 0.0..1.0f64) {
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            for tie in [Tie::Upper, Tie::Lower] {
                prop_assert!(best_response(t, lo, tie) <= best_response(t, hi, tie));
                let (tl, th) = if t <= t2 { (t, t2) } else { (t2, t) };
                prop_assert!(best_response(th, b1, tie) <= best_response(tl, b1, tie));
            }
        }
    }
}
