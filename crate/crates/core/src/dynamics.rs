//! Asynchronous best-response dynamics, equilibria and capacity functionals.
//!
//! Dynamics revise one agent per step, always the lowest-indexed agent that
//! wants to move. Upward dynamics only flip 0 -> 1 and downward dynamics only
//! 1 -> 0, so neighborhood fractions move monotonically and an agent that
//! becomes eligible stays eligible until it flips.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{best_response, ShockProfile, Tie};
use crate::network::{block_beta, Network, Profile};
use crate::rng::{self, Purpose};
use crate::stepfn::StepFn;

/// Thresholds this close to the incrementally maintained fraction trigger an
/// exact recomputation before deciding.
const NEAR_TIE: f64 = 1e-9;

/// Largest population [`enumerate_equilibria`] accepts.
pub const ENUMERATE_MAX: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    FixedPoint,
    StepLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub agent: usize,
    pub beta_before: f64,
    /// `F0` of the profile before the flip.
    #[serde(rename = "F0")]
    pub capacity_simple: f64,
    /// `F` of the expected-action profile before the flip, when `P` was supplied.
    #[serde(rename = "F")]
    pub capacity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsTrace {
    pub direction: Direction,
    pub tie: Tie,
    pub steps: Vec<Step>,
    pub initial_profile: Profile,
    pub final_profile: Profile,
    pub stop_reason: StopReason,
    pub final_capacity_simple: f64,
    pub final_capacity: Option<f64>,
}

impl DynamicsTrace {
    pub fn flips(&self) -> usize {
        self.steps.len()
    }

    /// One JSON object per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step serializes"));
            out.push('\n');
        }
        out
    }
}

/// Configures and runs best-response dynamics on one shock realization.
pub struct BestResponse<'a> {
    g: &'a Network,
    shocks: &'a ShockProfile,
    p: Option<&'a StepFn>,
    step_limit: Option<usize>,
}

impl<'a> BestResponse<'a> {
    pub fn new(g: &'a Network, shocks: &'a ShockProfile) -> Self {
        BestResponse {
            g,
            shocks,
            p: None,
            step_limit: None,
        }
    }

    /// Also track the capacity `F` of expected actions `p_i = P(beta_i)`.
    pub fn with_expected_action(mut self, p: &'a StepFn) -> Self {
        self.p = Some(p);
        self
    }

    /// Maximum number of flips; defaults to `4n`.
    pub fn step_limit(mut self, limit: usize) -> Self {
        self.step_limit = Some(limit);
        self
    }

    /// Flip 0 -> 1 whenever the upper-tie best response is 1.
    pub fn upper(&self, a0: &Profile) -> Result<DynamicsTrace> {
        self.run(a0, Direction::Up, Tie::Upper)
    }

    /// Flip 1 -> 0 whenever the lower-tie best response is 0.
    pub fn lower(&self, a0: &Profile) -> Result<DynamicsTrace> {
        self.run(a0, Direction::Down, Tie::Lower)
    }

    pub fn run(&self, a0: &Profile, direction: Direction, tie: Tie) -> Result<DynamicsTrace> {
        let n = self.g.len();
        check_sizes(self.g, self.shocks)?;
        if a0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a0.len(),
            });
        }
        let actions = a0.actions()?;
        let limit = self.step_limit.unwrap_or(4 * n);
        let mut e = Engine::new(self.g, &self.shocks.thresholds, actions, direction, tie, self.p);
        let mut steps = Vec::new();
        let mut stop_reason = StopReason::FixedPoint;
        while let Some(k) = e.next_candidate() {
            if steps.len() >= limit {
                stop_reason = StopReason::StepLimit;
                break;
            }
            steps.push(Step {
                t: steps.len(),
                agent: k,
                beta_before: e.exact_beta(k),
                capacity_simple: e.f0,
                capacity: e.cap,
            });
            e.flip(k);
        }
        Ok(DynamicsTrace {
            direction,
            tie,
            steps,
            initial_profile: a0.clone(),
            final_profile: Profile::from_actions(&e.a),
            stop_reason,
            final_capacity_simple: e.f0,
            final_capacity: e.cap,
        })
    }
}

fn check_sizes(g: &Network, shocks: &ShockProfile) -> Result<()> {
    if shocks.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: shocks.len(),
        });
    }
    Ok(())
}

/// Candidate bookkeeping for the implicit complete blocks: inside a block all
/// agents currently playing the "from" action share one neighborhood fraction,
/// so they become eligible in threshold order.
struct BlockQueue {
    order: Vec<usize>,
    /// Start of each block's slice in `order`, plus a final end.
    start: Vec<usize>,
    next: Vec<usize>,
}

struct Engine<'a> {
    g: &'a Network,
    t: &'a [f64],
    a: Vec<u8>,
    direction: Direction,
    tie: Tie,
    /// `sum_j g_ij a_j` for sparse storage.
    ones: Vec<f64>,
    /// Number of ones per block for block storage.
    block_ones: Vec<usize>,
    block: usize,
    queue: Option<BlockQueue>,
    candidates: BTreeSet<usize>,
    since_audit: usize,
    f0: f64,
    p: Option<&'a StepFn>,
    pvals: Vec<f64>,
    cap: Option<f64>,
    mark: Vec<bool>,
}

impl<'a> Engine<'a> {
    fn new(
        g: &'a Network,
        t: &'a [f64],
        a: Vec<u8>,
        direction: Direction,
        tie: Tie,
        p: Option<&'a StepFn>,
    ) -> Self {
        let n = g.len();
        let (block, count) = g.blocks().unwrap_or((0, 0));
        let mut e = Engine {
            g,
            t,
            a,
            direction,
            tie,
            ones: Vec::new(),
            block_ones: Vec::new(),
            block,
            queue: None,
            candidates: BTreeSet::new(),
            since_audit: 0,
            f0: 0.0,
            p,
            pvals: Vec::new(),
            cap: None,
            mark: Vec::new(),
        };
        if block > 0 {
            e.block_ones = e.a.chunks(block).map(|c| c.iter().map(|&x| x as usize).sum()).collect();
            let mut order = Vec::new();
            let mut start = Vec::with_capacity(count + 1);
            let from = e.from_action();
            for b in 0..count {
                start.push(order.len());
                let mut members: Vec<usize> = (b * block..(b + 1) * block).filter(|&i| e.a[i] == from).collect();
                match direction {
                    Direction::Up => members.sort_by(|&i, &j| t[i].total_cmp(&t[j]).then(i.cmp(&j))),
                    Direction::Down => members.sort_by(|&i, &j| t[j].total_cmp(&t[i]).then(i.cmp(&j))),
                }
                order.extend(members);
            }
            start.push(order.len());
            e.queue = Some(BlockQueue {
                next: start[..count].to_vec(),
                order,
                start,
            });
            for b in 0..count {
                e.advance_block(b);
            }
        } else {
            e.ones = (0..n)
                .map(|i| {
                    g.neighbors(i)
                        .fold(0.0, |acc, (j, w)| if e.a[j] == 1 { acc + w } else { acc })
                })
                .collect();
            for i in 0..n {
                if e.eligible(i) {
                    e.candidates.insert(i);
                }
            }
        }
        e.f0 = capacity_simple_actions(g, &e.a);
        if let Some(p) = p {
            e.pvals = (0..n).map(|i| p.eval_clamped(e.exact_beta(i))).collect();
            e.cap = Some(capacity_values(g, &e.pvals));
            e.mark = vec![false; n];
        }
        e
    }

    fn from_action(&self) -> u8 {
        match self.direction {
            Direction::Up => 0,
            Direction::Down => 1,
        }
    }

    fn target(&self) -> u8 {
        1 - self.from_action()
    }

    fn exact_beta(&self, i: usize) -> f64 {
        if self.block > 0 {
            let b = i / self.block;
            block_beta(self.block_ones[b] - self.a[i] as usize, self.block)
        } else {
            self.g.pure_beta(i, &self.a)
        }
    }

    fn beta(&self, i: usize) -> f64 {
        if self.block > 0 {
            return self.exact_beta(i);
        }
        let b = self.ones[i] / self.g.degree(i);
        if (self.t[i] - b).abs() < NEAR_TIE {
            self.exact_beta(i)
        } else {
            b
        }
    }

    fn eligible(&self, i: usize) -> bool {
        self.a[i] == self.from_action() && best_response(self.t[i], self.beta(i), self.tie) == self.target()
    }

    /// Push every agent of block `b` that has become eligible.
    fn advance_block(&mut self, b: usize) {
        let from = self.from_action();
        let target = self.target();
        let others = match self.direction {
            Direction::Up => self.block_ones[b],
            Direction::Down => self.block_ones[b].saturating_sub(1),
        };
        let beta: f64 = block_beta(others, self.block);
        let q = self.queue.as_mut().unwrap();
        while q.next[b] < q.start[b + 1] {
            let i = q.order[q.next[b]];
            debug_assert_eq!(self.a[i], from);
            if best_response(self.t[i], beta, self.tie) != target {
                break;
            }
            self.candidates.insert(i);
            q.next[b] += 1;
        }
    }

    fn next_candidate(&mut self) -> Option<usize> {
        self.candidates.first().copied()
    }

    fn flip(&mut self, k: usize) {
        self.candidates.remove(&k);
        let up = self.direction == Direction::Up;
        let gk = self.g.degree(k);
        let ones_k = self.exact_beta(k) * gk;
        self.f0 += if up { gk - 2.0 * ones_k } else { 2.0 * ones_k - gk };
        self.a[k] = self.target();

        if self.block > 0 {
            let b = k / self.block;
            if up {
                self.block_ones[b] += 1;
            } else {
                self.block_ones[b] -= 1;
            }
            self.advance_block(b);
            if let Some(p) = self.p {
                let range = b * self.block..(b + 1) * self.block;
                let before = block_capacity(&self.pvals[range.clone()]);
                for i in range.clone() {
                    self.pvals[i] = p.eval_clamped(self.exact_beta(i));
                }
                let after = block_capacity(&self.pvals[range]);
                self.cap = self.cap.map(|c| c + after - before);
            }
            return;
        }

        let g = self.g;
        for (j, w) in g.neighbors(k) {
            if up {
                self.ones[j] += w;
            } else {
                self.ones[j] -= w;
            }
        }
        self.since_audit += 1;
        if self.since_audit >= g.len() {
            self.since_audit = 0;
            for i in 0..g.len() {
                self.ones[i] = g.pure_beta(i, &self.a) * g.degree(i);
            }
        }
        for (j, _) in g.neighbors(k) {
            if self.eligible(j) {
                self.candidates.insert(j);
            }
        }
        if let Some(p) = self.p {
            let changed: Vec<usize> = g.neighbors(k).map(|e| e.0).collect();
            let before = self.local_capacity(&changed);
            for &j in &changed {
                self.pvals[j] = p.eval_clamped(self.exact_beta(j));
            }
            let after = self.local_capacity(&changed);
            self.cap = self.cap.map(|c| c + after - before);
        }
    }

    /// Capacity carried by edges with at least one endpoint in `set`.
    fn local_capacity(&mut self, set: &[usize]) -> f64 {
        for &j in set {
            self.mark[j] = true;
        }
        let mut s = 0.0;
        for &j in set {
            for (l, w) in self.g.neighbors(j) {
                let d = self.pvals[j] - self.pvals[l];
                let share = if self.mark[l] { 0.5 } else { 1.0 };
                s += share * w * d * d;
            }
        }
        for &j in set {
            self.mark[j] = false;
        }
        s
    }
}

/// `N sum p^2 - (sum p)^2`: the capacity of one complete block.
fn block_capacity(p: &[f64]) -> f64 {
    let s: f64 = p.iter().sum();
    let s2: f64 = p.iter().map(|x| x * x).sum();
    (p.len() as f64 * s2 - s * s).max(0.0)
}

pub fn upper_dynamics(
    g: &Network,
    shocks: &ShockProfile,
    a0: &Profile,
    step_limit: Option<usize>,
) -> Result<DynamicsTrace> {
    let mut br = BestResponse::new(g, shocks);
    if let Some(l) = step_limit {
        br = br.step_limit(l);
    }
    br.upper(a0)
}

pub fn lower_dynamics(
    g: &Network,
    shocks: &ShockProfile,
    a0: &Profile,
    step_limit: Option<usize>,
) -> Result<DynamicsTrace> {
    let mut br = BestResponse::new(g, shocks);
    if let Some(l) = step_limit {
        br = br.step_limit(l);
    }
    br.lower(a0)
}

/// Same limit as the min-index dynamics, reached by revising a uniformly random
/// eligible agent each step. Exists to test order independence.
pub fn random_order_dynamics(
    g: &Network,
    shocks: &ShockProfile,
    a0: &Profile,
    direction: Direction,
    tie: Tie,
    seed: u64,
) -> Result<Profile> {
    check_sizes(g, shocks)?;
    let mut a = a0.actions()?;
    let (from, to) = match direction {
        Direction::Up => (0u8, 1u8),
        Direction::Down => (1, 0),
    };
    let mut r = rng::stream(seed, Purpose::Instance, 0);
    loop {
        let elig: Vec<usize> = (0..g.len())
            .filter(|&i| a[i] == from && best_response(shocks.thresholds[i], g.pure_beta(i, &a), tie) == to)
            .collect();
        if elig.is_empty() {
            return Ok(Profile::from_actions(&a));
        }
        a[elig[r.random_range(0..elig.len())]] = to;
    }
}

/// Whether every agent plays its best response under `tie`.
pub fn is_equilibrium(g: &Network, shocks: &ShockProfile, a: &Profile, tie: Tie) -> Result<bool> {
    check_sizes(g, shocks)?;
    let acts = a.actions()?;
    if acts.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: acts.len(),
        });
    }
    Ok(is_equilibrium_actions(g, &shocks.thresholds, &acts, tie))
}

fn is_equilibrium_actions(g: &Network, t: &[f64], a: &[u8], tie: Tie) -> bool {
    if let Some((block, _)) = g.blocks() {
        return a.chunks(block).zip(t.chunks(block)).all(|(ab, tb)| {
            let s: usize = ab.iter().map(|&x| x as usize).sum();
            ab.iter()
                .zip(tb)
                .all(|(&x, &ti)| best_response(ti, block_beta(s - x as usize, block), tie) == x)
        });
    }
    (0..g.len()).all(|i| best_response(t[i], g.pure_beta(i, a), tie) == a[i])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extremal {
    /// Largest equilibrium under the upper tie rule.
    pub largest: Profile,
    /// Smallest equilibrium under the lower tie rule.
    pub smallest: Profile,
}

/// Largest and smallest equilibria by monotone iteration from all-ones and all-zeros.
pub fn extremal_equilibria(g: &Network, shocks: &ShockProfile) -> Result<Extremal> {
    let n = g.len();
    let br = BestResponse::new(g, shocks);
    let largest = br.run(&Profile::from_actions(&vec![1; n]), Direction::Down, Tie::Upper)?;
    let smallest = br.run(&Profile::from_actions(&vec![0; n]), Direction::Up, Tie::Lower)?;
    Ok(Extremal {
        largest: largest.final_profile,
        smallest: smallest.final_profile,
    })
}

/// Every pure equilibrium under `tie`, in increasing order of the bit pattern
/// with agent 0 as the lowest bit.
pub fn enumerate_equilibria(g: &Network, shocks: &ShockProfile, tie: Tie) -> Result<Vec<Profile>> {
    let n = g.len();
    if n > ENUMERATE_MAX {
        return Err(Error::TooLarge {
            n,
            max: ENUMERATE_MAX,
        });
    }
    check_sizes(g, shocks)?;
    let mut out = Vec::new();
    let mut a = vec![0u8; n];
    for mask in 0u32..(1u32 << n) {
        for (i, x) in a.iter_mut().enumerate() {
            *x = ((mask >> i) & 1) as u8;
        }
        if is_equilibrium_actions(g, &shocks.thresholds, &a, tie) {
            out.push(Profile::from_actions(&a));
        }
    }
    Ok(out)
}

/// `F0(a)`: total weight of links from agents playing 1 to agents playing 0.
pub fn capacity_simple(g: &Network, a: &Profile) -> Result<f64> {
    if a.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: a.len(),
        });
    }
    Ok(capacity_simple_actions(g, &a.actions()?))
}

fn capacity_simple_actions(g: &Network, a: &[u8]) -> f64 {
    if let Some((block, _)) = g.blocks() {
        return a
            .chunks(block)
            .map(|c| {
                let k = c.iter().map(|&x| x as usize).sum::<usize>();
                (k * (block - k)) as f64
            })
            .sum();
    }
    (0..g.len())
        .filter(|&i| a[i] == 1)
        .map(|i| g.neighbors(i).filter(|&(j, _)| a[j] == 0).map(|e| e.1).sum::<f64>())
        .sum()
}

/// `F(p) = 1/2 sum_ij g_ij (p_i - p_j)^2`.
pub fn capacity(g: &Network, p: &Profile) -> Result<f64> {
    if p.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: p.len(),
        });
    }
    Ok(capacity_values(g, p.values()))
}

fn capacity_values(g: &Network, p: &[f64]) -> f64 {
    if let Some((block, _)) = g.blocks() {
        return p.chunks(block).map(block_capacity).sum();
    }
    g.edges().map(|(i, j, w)| w * (p[i] - p[j]) * (p[i] - p[j])).sum()
}

/// Starting profile for the dynamics toward `x_star`: agents with threshold
/// below `x_star` play 1, above play 0, and agents exactly at `x_star` play 1
/// with the probability that makes every expected action equal `x_star`.
pub fn initial_profile(p: &StepFn, x_star: f64, shocks: &ShockProfile, seed: u64) -> Result<Profile> {
    if !(0.0..=1.0).contains(&x_star) {
        return Err(Error::Domain {
            what: "x_star",
            value: x_star,
            domain: "[0, 1]",
        });
    }
    let left = p.left_limit(x_star);
    if left > x_star + 1e-12 {
        return Err(Error::InitialProfile {
            x_star,
            left_limit: left,
        });
    }
    let at = p.eval_clamped(x_star);
    let mass = at - left;
    let prob = if mass > 0.0 {
        ((at - x_star) / mass).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut r = rng::stream(seed, Purpose::TieBreak, shocks.replication);
    let a: Vec<u8> = shocks
        .thresholds
        .iter()
        .map(|&t| {
            let y = (r.random::<f64>() < prob) as u8;
            if t < x_star {
                1
            } else if t > x_star {
                0
            } else {
                y
            }
        })
        .collect();
    Ok(Profile::from_actions(&a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sandwich {
    pub upper: DynamicsTrace,
    pub lower: DynamicsTrace,
}

impl Sandwich {
    pub fn equilibrium(&self) -> &Profile {
        &self.lower.final_profile
    }
}

/// Upper dynamics from `a0`, then lower dynamics from where they stop.
pub fn sandwich(g: &Network, shocks: &ShockProfile, a0: &Profile, p: Option<&StepFn>) -> Result<Sandwich> {
    let mut br = BestResponse::new(g, shocks);
    if let Some(p) = p {
        br = br.with_expected_action(p);
    }
    let upper = br.upper(a0)?;
    let lower = br.lower(&upper.final_profile)?;
    Ok(Sandwich { upper, lower })
}

/// Terms of the deterministic bound
/// `2 sum g_i L(p_i^{T+1}) <= F(p^0) + A + 2 sum g_i |beta_i^0 - x*| + 2 d(g) sum g_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub lhs: f64,
    pub capacity0: f64,
    pub cross_term_a: f64,
    pub beta_deviation: f64,
    pub fineness_term: f64,
    pub satisfied: bool,
}

impl BoundAudit {
    pub fn rhs(&self) -> f64 {
        self.capacity0 + self.cross_term_a + self.beta_deviation + self.fineness_term
    }
}

fn replay_mismatch(msg: String) -> Error {
    Error::TraceMismatch(msg)
}

fn check_trace(g: &Network, shocks: &ShockProfile, trace: &DynamicsTrace) -> Result<Vec<u8>> {
    check_sizes(g, shocks)?;
    if trace.direction != Direction::Up {
        return Err(replay_mismatch("expected an upward trace".into()));
    }
    if trace.initial_profile.len() != g.len() {
        return Err(replay_mismatch(format!(
            "profile has {} agents, network {}",
            trace.initial_profile.len(),
            g.len()
        )));
    }
    trace.initial_profile.actions()
}

/// Replay an upper-dynamics trace and evaluate every term of the bound.
pub fn audit_main_bound(
    g: &Network,
    shocks: &ShockProfile,
    p: &StepFn,
    x_star: f64,
    trace: &DynamicsTrace,
) -> Result<BoundAudit> {
    let n = g.len();
    let mut a = check_trace(g, shocks, trace)?;
    let mut ones: Vec<f64> = (0..n).map(|i| g.pure_beta(i, &a) * g.degree(i)).collect();
    let beta0: Vec<f64> = (0..n).map(|i| ones[i] / g.degree(i)).collect();
    let mut pv: Vec<f64> = beta0.iter().map(|&b| p.eval_clamped(b)).collect();

    let capacity0 = capacity_values(g, &pv);
    let beta_deviation = 2.0 * (0..n).map(|i| g.degree(i) * (beta0[i] - x_star).abs()).sum::<f64>();
    let fineness_term = 2.0 * g.fineness() * g.total_degree();

    let blocks = g.blocks();
    // S_i = sum_j g_ij (a_j - p_j) for every i in `set`.
    let slack = |set: &[usize], a: &[u8], pv: &[f64]| -> Vec<f64> {
        match blocks {
            Some((block, _)) => {
                let b = set[0] / block;
                let total: f64 = (b * block..(b + 1) * block).map(|j| a[j] as f64 - pv[j]).sum();
                set.iter().map(|&i| total - (a[i] as f64 - pv[i])).collect()
            }
            None => set
                .iter()
                .map(|&i| g.neighbors(i).map(|(j, w)| w * (a[j] as f64 - pv[j])).sum())
                .collect(),
        }
    };

    let mut cross = 0.0;
    for (s, step) in trace.steps.iter().enumerate() {
        let k = step.agent;
        if k >= n || a[k] != 0 {
            return Err(replay_mismatch(format!("step {s} flips agent {k} which does not play 0")));
        }
        let bk = g.pure_beta(k, &a);
        if (bk - step.beta_before).abs() > 1e-9 {
            return Err(replay_mismatch(format!(
                "step {s}: recorded beta {} but replay gives {bk}",
                step.beta_before
            )));
        }
        let affected: Vec<usize> = g.neighbors(k).map(|e| e.0).collect();
        let before = slack(&affected, &a, &pv);
        let p_old: Vec<f64> = affected.iter().map(|&i| pv[i]).collect();
        a[k] = 1;
        for (j, w) in g.neighbors(k) {
            ones[j] += w;
        }
        for &i in &affected {
            let b = if blocks.is_some() { g.pure_beta(i, &a) } else { ones[i] / g.degree(i) };
            pv[i] = p.eval_clamped(b);
        }
        let after = slack(&affected, &a, &pv);
        for (idx, &i) in affected.iter().enumerate() {
            cross += (pv[i] - p_old[idx]) * (before[idx] + after[idx]);
        }
    }
    if Profile::from_actions(&a) != trace.final_profile {
        return Err(replay_mismatch("replayed profile differs from the recorded final profile".into()));
    }
    // Recompute the final expected actions exactly rather than trusting the running sums.
    let mut lhs = 0.0;
    for i in 0..n {
        let pi = p.eval_clamped(g.pure_beta(i, &a));
        lhs += g.degree(i) * p.loss(x_star, pi)?;
    }
    lhs *= 2.0;
    let mut audit = BoundAudit {
        lhs,
        capacity0,
        cross_term_a: cross,
        beta_deviation,
        fineness_term,
        satisfied: false,
    };
    audit.satisfied = audit.lhs <= audit.rhs() + 1e-9;
    Ok(audit)
}

/// With every threshold equal to `alpha`, each upward flip of agent `i` must
/// lower `F0` by at least `(2 alpha - 1) g_i`.
pub fn capacity_decrement_check(g: &Network, shocks: &ShockProfile, trace: &DynamicsTrace) -> Result<bool> {
    let alpha = *shocks.thresholds.first().ok_or(Error::Empty("shock profile"))?;
    if let Some((agent, &value)) = shocks
        .thresholds
        .iter()
        .enumerate()
        .find(|&(_, &t)| t != alpha || !t.is_finite())
    {
        return Err(Error::NonConstantThresholds {
            agent,
            value,
            expected: alpha,
        });
    }
    let mut a = check_trace(g, shocks, trace)?;
    for (s, step) in trace.steps.iter().enumerate() {
        let k = step.agent;
        if k >= g.len() || a[k] != 0 {
            return Err(replay_mismatch(format!("step {s} flips agent {k} which does not play 0")));
        }
        let gk = g.degree(k);
        let ones = g.pure_beta(k, &a) * gk;
        let delta = (gk - ones) - ones;
        if delta > (1.0 - 2.0 * alpha) * gk + 1e-12 * gk {
            return Ok(false);
        }
        a[k] = 1;
    }
    Ok(true)
}
