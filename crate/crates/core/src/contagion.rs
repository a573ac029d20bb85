//! Contagion waves on a line of locations.
//!
//! Agents at location `x` put weight `f(y - x)` on agents at locations up to
//! `y`, where `f` is a balanced front: increasing, `f(-1) = 0` and
//! `f(x) + f(-x) = 1`. A step strategy with actions `a_0 < ... < a_{L+1}` and
//! thresholds `0 = v_0 < ... < v_L` gives location `x` the average action
//! `F(x|v) = a_0 + sum_k (1 - f(v_k - x)) (a_{k+1} - a_k)`.
//!
//! The lens and front functions are generic over [`Scalar`]; the solver and
//! wave construction run in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stepfn::{step_approximate, Direction, StepFn};

/// Resolution of the `b_l` bisection: results lie on a dyadic grid of this spacing.
pub const BISECTION_TOL: f64 = 1.0 / (1u64 << 34) as f64;

pub const MAX_WAVE_ITERATIONS: usize = 200_000;

/// Largest number of interior steps [`build_delta_wave`] will solve for.
pub const MAX_WAVE_STEPS: usize = 400;

/// Halvings tried for each of the three tolerances in [`build_delta_wave`].
const MAX_HALVINGS: usize = 30;

/// Area of the intersection of two discs with radii `r1 <= 1 <= r2` whose
/// centres are `d` apart, divided by the area of the unit disc.
pub fn lens_f0<T: Scalar>(d: T, r1: T, r2: T) -> Result<T> {
    let one = T::one();
    let zero = T::zero();
    let bad = |what, v: T, domain| Error::Domain {
        what,
        value: v.to_f64().unwrap_or(f64::NAN),
        domain,
    };
    if !(d >= zero) || !d.is_finite() {
        return Err(bad("d", d, "[0, inf)"));
    }
    if !(r1 > zero && r1 <= one) {
        return Err(bad("r1", r1, "(0, 1]"));
    }
    if !(r2 >= one) || !r2.is_finite() {
        return Err(bad("r2", r2, "[1, inf)"));
    }
    if d >= r1 + r2 {
        return Ok(zero);
    }
    if d <= r2 - r1 {
        return Ok(r1 * r1);
    }
    let two = T::lit(2.0);
    let c1 = ((d * d + r1 * r1 - r2 * r2) / (two * d * r1)).max(-one).min(one);
    let c2 = ((d * d + r2 * r2 - r1 * r1) / (two * d * r2)).max(-one).min(one);
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(zero);
    let area = r1 * r1 * c1.acos() + r2 * r2 * c2.acos() - k.sqrt() / two;
    Ok((area / T::PI()).max(zero).min(r1 * r1))
}

/// The unit-disc segment of height `1 + x`, divided by `pi`: the share of a
/// unit neighborhood lying left of a straight front at signed distance `x`.
pub fn front_f<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x <= -one {
        return T::zero();
    }
    if x >= one {
        return one;
    }
    ((-x).acos() + x * (one - x * x).sqrt()) / T::PI()
}

/// `F(x|v)` for thresholds `v` (with `v_0 = 0`, nondecreasing, gaps at most 1)
/// and steps `a` with `a.len() == v.len() + 1`.
pub fn wave_value<T: Scalar, F: Fn(T) -> T>(x: T, v: &[T], a: &[T], f: F) -> Result<T> {
    check_thresholds(v)?;
    if a.len() != v.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: v.len() + 1,
            got: a.len(),
        });
    }
    let mut s = a[0];
    for k in 0..v.len() {
        s = s + (T::one() - f(v[k] - x)) * (a[k + 1] - a[k]);
    }
    Ok(s)
}

fn check_thresholds<T: Scalar>(v: &[T]) -> Result<()> {
    if v.first() != Some(&T::zero()) {
        return Err(Error::InvalidWave("thresholds must start at v_0 = 0".into()));
    }
    let slack = T::point_tol();
    for w in v.windows(2) {
        if !(w[1] >= w[0]) || w[1] > w[0] + T::one() + slack {
            return Err(Error::InvalidWave(format!(
                "thresholds {} -> {} are not nondecreasing with gap <= 1",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `F(x|v)` restricted to the thresholds within distance 1 of `x`; valid for
/// any balanced `f`.
fn wave_value_window(x: f64, v: &[f64], a: &[f64], f: &dyn Fn(f64) -> f64) -> f64 {
    let lo = v.partition_point(|&vk| vk <= x - 1.0);
    let hi = v.partition_point(|&vk| vk < x + 1.0);
    let mut s = a[lo];
    for k in lo..hi {
        s += (1.0 - f(v[k] - x)) * (a[k + 1] - a[k]);
    }
    s
}

/// A step function `Q` seen from one of its values: steps `a_0 < ... < a_{L+1} = 1`
/// and `levels[l] = Q^-1(a_{l+1})`, the inverse on `(a_l, a_{l+1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSteps {
    steps: Vec<f64>,
    levels: Vec<f64>,
}

impl WaveSteps {
    pub fn new(steps: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if steps.len() < 2 {
            return Err(Error::InvalidWave("need at least two steps".into()));
        }
        if levels.len() != steps.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: steps.len() - 1,
                got: levels.len(),
            });
        }
        if !(steps[0] >= 0.0) || *steps.last().unwrap() != 1.0 {
            return Err(Error::InvalidWave("steps must start in [0, 1) and end at 1".into()));
        }
        if steps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidWave("steps must be strictly increasing".into()));
        }
        if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidWave("levels must be finite and strictly increasing".into()));
        }
        Ok(WaveSteps { steps, levels })
    }

    /// Steps of `q` above `a0`, with every level lowered by `shift`
    /// (the inverse of `x -> q(x + shift)`). Needs `q(1) = 1`.
    pub fn from_stepfn(q: &StepFn, a0: f64, shift: f64) -> Result<Self> {
        if q.value_at_one() != 1.0 {
            return Err(Error::InvalidWave(format!("Q(1) = {} has no top step at 1", q.value_at_one())));
        }
        let mut steps = vec![a0];
        for (_, v) in q.plateaus() {
            if v > *steps.last().unwrap() {
                steps.push(v);
            }
        }
        let levels = steps[1..].iter().map(|&a| q.inverse(a).map(|x| x - shift)).collect::<Result<Vec<_>>>()?;
        WaveSteps::new(steps, levels)
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of interior steps `L`.
    pub fn interior(&self) -> usize {
        self.steps.len() - 2
    }

    /// `int_{a_0}^{a} (Q^-1(x) - x) dx`.
    pub fn ru_integral(&self, a: f64) -> f64 {
        let s = &self.steps;
        let mut acc = 0.0;
        for l in 0..self.levels.len() {
            let hi = s[l + 1].min(a);
            if hi <= s[l] {
                break;
            }
            acc += self.levels[l] * (hi - s[l]) - (hi * hi - s[l] * s[l]) / 2.0;
        }
        acc
    }

    /// Check that the integral above is positive for every `a > a_0`.
    ///
    /// The integrand is linear on each step, so the integral is concave there
    /// and its minimum sits at a step value; midpoints are checked as well.
    pub fn check_precondition(&self) -> Result<()> {
        let a0 = self.steps[0];
        if !(self.levels[0] > a0) {
            return Err(Error::WavePrecondition {
                a: a0,
                integral: 0.0,
            });
        }
        for w in self.steps.windows(2) {
            for a in [(w[0] + w[1]) / 2.0, w[1]] {
                let integral = self.ru_integral(a);
                if !(integral > 0.0) {
                    return Err(Error::WavePrecondition { a, integral });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSolution {
    pub steps: Vec<f64>,
    pub levels: Vec<f64>,
    /// `v_0 = 0 < v_1 < ... < v_L`.
    pub thresholds: Vec<f64>,
    /// `levels[l] - F(v_l|v)` for `l = 1..=L`.
    pub residuals: Vec<f64>,
    /// Evaluations of `b*` used.
    pub iterations: usize,
    /// Levels `l` that `F` never reaches (`b_l = inf`), so that `v_l = v_{l-1} + 1`.
    pub unreached: Vec<usize>,
}

impl WaveSolution {
    pub fn value(&self, x: f64) -> f64 {
        wave_value_window(x, &self.thresholds, &self.steps, &front_f::<f64>)
    }

    pub fn min_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One application of `b*`: `b*_l(v) = min(b_l(v), v_{l-1} + 1)` with
/// `b_l(v) = inf{x >= 0 : F(x|v) >= levels[l]}`.
///
/// `b_l` is taken as the largest point of a fixed dyadic grid (spacing
/// [`BISECTION_TOL`]) where `F` is still below the level, which keeps the map
/// exactly monotone in `v`.
pub fn b_star(steps: &WaveSteps, f: &dyn Fn(f64) -> f64, v: &[f64]) -> Vec<f64> {
    b_star_hinted(steps, f, v, &vec![0.0; v.len()]).0
}

/// [`b_star`] with lower brackets: `hint[l]` must be a grid point with
/// `F(hint[l]|v) < levels[l]`, or 0. Returns `b*(v)` and brackets valid for
/// any `v' >= v`.
fn b_star_hinted(steps: &WaveSteps, f: &dyn Fn(f64) -> f64, v: &[f64], hint: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = &steps.steps;
    let h = BISECTION_TOL;
    let value = |x: f64| wave_value_window(x, v, a, f);
    let mut out = vec![0.0; v.len()];
    let mut lower = vec![0.0; v.len()];
    for l in 1..v.len() {
        let level = steps.levels[l];
        let cap = v[l - 1] + 1.0;
        if value(0.0) >= level {
            continue;
        }
        let mut lo = hint[l];
        let mut step = h * 256.0;
        let mut hi = lo + step;
        // Gallop until the level is bracketed or the cap is passed.
        while lo < cap && value(hi) < level {
            lo = hi;
            step *= 2.0;
            hi = lo + step;
        }
        if lo < cap {
            while hi - lo > h {
                let mid = lo + (hi - lo) / 2.0;
                if value(mid) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        out[l] = lo.min(cap);
        lower[l] = lo;
    }
    (out, lower)
}

/// Largest point of `V` below `w`, on the bisection grid and not below `v`.
fn project_up(v: &[f64], w: &[f64]) -> Vec<f64> {
    let h = BISECTION_TOL;
    let mut out = vec![0.0; w.len()];
    for l in 1..w.len() {
        let x = ((w[l] / h).floor() * h).min(out[l - 1] + 1.0);
        out[l] = x.max(v[l]);
    }
    out
}

/// Find a fixed point of `b*` by monotone iteration from the zero vector,
/// stopping once successive iterates differ by less than `tol` in the max norm.
///
/// Every few steps the iterate is extrapolated along its last move; the jump
/// is kept only if the new point `w` still satisfies `w <= b*(w)`, so the
/// sequence stays nondecreasing and still converges to a fixed point.
pub fn solve_wave(steps: &WaveSteps, f: &dyn Fn(f64) -> f64, tol: f64) -> Result<WaveSolution> {
    steps.check_precondition()?;
    let n = steps.interior() + 1;
    let mut v = vec![0.0; n];
    let (mut next, mut hint) = b_star_hinted(steps, f, &v, &v);
    let mut evaluations = 1;
    let mut change = f64::INFINITY;
    for it in 1..=MAX_WAVE_ITERATIONS {
        let last = change;
        change = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if change < tol {
            return finish(steps, f, next, evaluations);
        }
        let prev = std::mem::replace(&mut v, next);
        let mut accepted = None;
        // Geometric tail estimate from the observed contraction rate.
        let rate = change / last;
        if it % 3 == 0 && rate < 1.0 {
            let t = (rate / (1.0 - rate)).clamp(1.0, 1e4);
            for t in [t, t / 4.0] {
                let target: Vec<f64> = v.iter().zip(&prev).map(|(x, y)| x + t * (x - y)).collect();
                let w = project_up(&v, &target);
                let (bw, bh) = b_star_hinted(steps, f, &w, &hint);
                evaluations += 1;
                if bw.iter().zip(&w).all(|(x, y)| x >= y) {
                    accepted = Some((w, bw, bh));
                    break;
                }
            }
        }
        match accepted {
            Some((w, bw, bh)) => {
                v = w;
                next = bw;
                hint = bh;
            }
            None => {
                let (bv, bh) = b_star_hinted(steps, f, &v, &hint);
                evaluations += 1;
                next = bv;
                hint = bh;
            }
        }
    }
    Err(Error::WaveNoConvergence {
        iterations: MAX_WAVE_ITERATIONS,
        delta: change,
    })
}

fn finish(steps: &WaveSteps, f: &dyn Fn(f64) -> f64, v: Vec<f64>, evaluations: usize) -> Result<WaveSolution> {
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NoWave(format!("thresholds not strictly increasing: {v:?}")));
    }
    let a = &steps.steps;
    let top = wave_value_window(v[v.len() - 1] + 1.0, &v, a, f);
    let unreached = (1..v.len()).filter(|&l| steps.levels[l] > top).collect();
    let residuals = (1..v.len())
        .map(|l| steps.levels[l] - wave_value_window(v[l], &v, a, f))
        .collect();
    Ok(WaveSolution {
        steps: steps.steps.clone(),
        levels: steps.levels.clone(),
        thresholds: v,
        residuals,
        iterations: evaluations,
        unreached,
    })
}

/// A step function on the whole line: `values[0]` on `(-inf, breaks[0]]`,
/// `values[1]` on `(breaks[0], breaks[1])`, then `values[k]` on
/// `[breaks[k-1], breaks[k])`, with the last value from the last break on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineStep {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl LineStep {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.breaks[0] {
            return self.values[0];
        }
        self.values[self.breaks.partition_point(|&b| b <= x)]
    }
}

/// Grid audit of the wave inequality `sigma(x - delta) >= delta + P(delta + F(x|v))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveAudit {
    pub grid_points: usize,
    pub spacing: f64,
    pub min_residual: f64,
    pub argmin: f64,
    /// Grid points falling in `x < delta`, `delta <= x < v_L + delta` and `x >= v_L + delta`.
    pub branch_checks: [usize; 3],
    /// Smallest residual at the right end of each piece of `sigma(. - delta)`,
    /// where the right-hand side is largest.
    pub piece_min_residual: f64,
}

impl WaveAudit {
    pub fn passed(&self) -> bool {
        self.min_residual >= 0.0 && self.piece_min_residual >= 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContagionWave {
    pub x_star: f64,
    pub a_star: f64,
    pub delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Number of interior steps.
    pub l: usize,
    pub sigma: LineStep,
    pub q: StepFn,
    pub solution: WaveSolution,
    pub audit: WaveAudit,
}

impl ContagionWave {
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    /// Location of the last step, where `sigma` reaches 1.
    pub fn reach(&self) -> f64 {
        *self.sigma.breaks.last().unwrap()
    }
}

/// Residual of the wave inequality at `x`.
pub fn wave_residual(p: &StepFn, sigma: &LineStep, sol: &WaveSolution, delta: f64, x: f64) -> f64 {
    let y = delta + sol.value(x);
    sigma.eval(x - delta) - delta - p.eval_clamped(y)
}

/// Audit the wave inequality on a grid of spacing at most `delta / 4` over
/// `[-2, v_L + 2]`, plus the supremum of the right-hand side on every piece.
pub fn audit_wave(p: &StepFn, sigma: &LineStep, sol: &WaveSolution, delta: f64) -> WaveAudit {
    let piece_min_residual = piece_check(p, sigma, sol, delta);
    let v_l = *sol.thresholds.last().unwrap();
    let (lo, hi) = (-2.0, v_l + 2.0);
    let cells = ((hi - lo) / (delta / 4.0)).ceil().max(1.0) as usize;
    let spacing = (hi - lo) / cells as f64;
    let mut audit = WaveAudit {
        grid_points: cells + 1,
        spacing,
        min_residual: f64::INFINITY,
        argmin: lo,
        branch_checks: [0; 3],
        piece_min_residual,
    };
    for j in 0..=cells {
        let x = lo + j as f64 * spacing;
        let branch = if x < delta {
            0
        } else if x < v_l + delta {
            1
        } else {
            2
        };
        audit.branch_checks[branch] += 1;
        let r = wave_residual(p, sigma, sol, delta, x);
        if r < audit.min_residual {
            audit.min_residual = r;
            audit.argmin = x;
        }
    }
    audit
}

fn piece_check(p: &StepFn, sigma: &LineStep, sol: &WaveSolution, delta: f64) -> f64 {
    audit_wave_pieces(p, sigma, sol, delta).1
}

/// The right-hand side is nondecreasing in x, so on the piece ending at
/// `v_k + delta` its supremum is the value there (the first piece is closed)
/// or the left limit. Returns the worst piece end and its residual.
fn audit_wave_pieces(p: &StepFn, sigma: &LineStep, sol: &WaveSolution, delta: f64) -> (f64, f64) {
    let mut worst = (f64::INFINITY, 1.0 - delta - p.value_at_one());
    for (k, &vk) in sol.thresholds.iter().enumerate() {
        let end = vk + delta;
        let y = delta + sol.value(end);
        let pv = if y > 1.0 {
            p.value_at_one()
        } else if k == 0 {
            p.eval_clamped(y)
        } else {
            p.left_limit(y)
        };
        let r = sigma.values[k] - delta - pv;
        if r < worst.1 {
            worst = (end, r);
        }
    }
    worst
}

/// Construct a delta-contagion wave for `p` whose base action is within `eta`
/// of the strictly RU-dominant point.
pub fn build_delta_wave(p: &StepFn, eta: f64) -> Result<ContagionWave> {
    if !(eta > 0.0) {
        return Err(Error::Domain {
            what: "eta",
            value: eta,
            domain: "(0, inf)",
        });
    }
    let top = p.value_at_one();
    if !(top < 1.0) {
        return Err(Error::NoWave(format!("P(1) = {top} must be below 1")));
    }
    let dom = p.ru_dominant();
    if !dom.strict {
        return Err(Error::NoWave(format!("RU-dominant point is not unique: {:?}", dom.maximizers)));
    }
    let x_star = dom.lowest();

    let mut failure = Error::NoWave("no admissible delta1".into());
    let mut delta1 = eta;
    for _ in 0..MAX_HALVINGS {
        delta1 /= 2.0;
        if delta1 >= (1.0 - top) / 2.0 {
            continue;
        }
        let approx = step_approximate(|x: f64| p.eval_clamped(x) + delta1, delta1 / 4.0, Direction::Above)?;
        let mut q_steps = approx.steps().to_vec();
        q_steps.push((1.0, 1.0));
        let q = StepFn::new(approx.base(), q_steps)?;
        let a_star = q.ru_dominant().highest();
        if a_star > x_star + eta {
            continue;
        }
        let interior = q.plateaus().iter().filter(|pl| pl.1 > a_star && pl.1 < 1.0).count();
        if interior > MAX_WAVE_STEPS {
            return Err(Error::NoWave(format!(
                "delta1 = {delta1} needs {interior} steps, more than {MAX_WAVE_STEPS}"
            )));
        }

        let mut delta2 = delta1 / 2.0;
        let mut steps = None;
        for _ in 0..MAX_HALVINGS {
            let s = WaveSteps::from_stepfn(&q, a_star, delta2)?;
            match s.check_precondition() {
                Ok(()) => {
                    steps = Some(s);
                    break;
                }
                Err(e) => {
                    failure = e;
                    delta2 /= 2.0;
                }
            }
        }
        let Some(steps) = steps else { continue };
        let solution = match solve_wave(&steps, &front_f::<f64>, 1e-12) {
            Ok(s) => s,
            Err(e) => {
                failure = e;
                continue;
            }
        };

        let v = &solution.thresholds;
        let mut values = vec![a_star];
        values.extend_from_slice(&steps.steps()[1..]);
        let sigma = LineStep {
            breaks: v.clone(),
            values,
        };
        let min_gap = v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let mut delta = (delta2 / 2.0).min(min_gap);
        for _ in 0..MAX_HALVINGS {
            if piece_check(p, &sigma, &solution, delta) >= 0.0 {
                let audit = audit_wave(p, &sigma, &solution, delta);
                if audit.passed() {
                    return Ok(ContagionWave {
                        x_star,
                        a_star,
                        delta,
                        delta1,
                        delta2,
                        l: steps.interior(),
                        sigma,
                        q,
                        solution,
                        audit,
                    });
                }
                failure = Error::WaveViolation {
                    x: audit.argmin,
                    residual: audit.min_residual,
                };
            } else {
                let audit = audit_wave_pieces(p, &sigma, &solution, delta);
                failure = Error::WaveViolation {
                    x: audit.0,
                    residual: audit.1,
                };
            }
            delta /= 2.0;
        }
    }
    Err(failure)
}
