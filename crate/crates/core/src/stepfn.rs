//! Monotone right-continuous step functions on `[0, 1]`.
//!
//! A [`StepFn`] holds a base value on `[0, x_1)` and a list of steps
//! `(x_k, v_k)` meaning the function equals `v_k` on `[x_k, x_{k+1})`. The last
//! plateau is closed at 1. Its generalized inverse `P^-1(y) = inf{x : P(x) >= y}`
//! is again a step function (of `y`), which is what makes the integrals below
//! exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Value substituted for `P^-1(y) = +inf` when integrating.
pub const SENTINEL: f64 = 2.0;

/// Default number of grid cells used by [`step_approximate`].
pub const DEFAULT_GRID: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "StepFnRepr<T>",
    into = "StepFnRepr<T>",
    bound = "T: Scalar"
)]
pub struct StepFn<T: Scalar = f64> {
    base: T,
    steps: Vec<(T, T)>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct StepFnRepr<T> {
    base: T,
    steps: Vec<(T, T)>,
}

impl<T: Scalar> TryFrom<StepFnRepr<T>> for StepFn<T> {
    type Error = Error;

    fn try_from(r: StepFnRepr<T>) -> Result<Self> {
        StepFn::new(r.base, r.steps)
    }
}

impl<T: Scalar> From<StepFn<T>> for StepFnRepr<T> {
    fn from(p: StepFn<T>) -> Self {
        StepFnRepr {
            base: p.base,
            steps: p.steps,
        }
    }
}

/// Kind of a point returned by [`StepFn::fixed_points`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointKind {
    /// `P(x) = x`.
    Exact,
    /// `P(x-) < x <= P(x)`: the graph jumps over the diagonal at `x`.
    JumpCrossing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FixedPoint<T: Scalar = f64> {
    pub x: T,
    pub kind: FixedPointKind,
}

/// Global maximizers of the RU objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RuDominance<T: Scalar = f64> {
    /// Sorted, with maximizers closer than the point tolerance merged.
    pub maximizers: Vec<T>,
    pub strict: bool,
    pub value: T,
}

impl<T: Scalar> RuDominance<T> {
    pub fn lowest(&self) -> T {
        self.maximizers[0]
    }

    pub fn highest(&self) -> T {
        *self.maximizers.last().unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Above,
    Below,
    /// Nearest level to the cell midpoint; neither dominating nor dominated.
    Midpoint,
}

fn domain<T: Scalar>(what: &'static str, v: T) -> Error {
    Error::Domain {
        what,
        value: v.to_f64().unwrap_or(f64::NAN),
        domain: "[0, 1]",
    }
}

fn in_unit<T: Scalar>(v: T) -> bool {
    v >= T::zero() && v <= T::one()
}

impl<T: Scalar> StepFn<T> {
    /// Build from a base value and `(x_k, v_k)` steps.
    ///
    /// The `x_k` must be strictly increasing in `[0, 1]` and the values weakly
    /// increasing (starting from `base`) in `[0, 1]`. Steps are stored as given.
    pub fn new(base: T, steps: Vec<(T, T)>) -> Result<Self> {
        if !in_unit(base) {
            return Err(Error::InvalidStepFn(format!("base value {base} outside [0, 1]")));
        }
        let mut prev_x: Option<T> = None;
        let mut prev_v = base;
        for &(x, v) in &steps {
            if !in_unit(x) || !in_unit(v) {
                return Err(Error::InvalidStepFn(format!("step ({x}, {v}) outside [0, 1]^2")));
            }
            if let Some(px) = prev_x {
                if x <= px {
                    return Err(Error::InvalidStepFn(format!(
                        "breakpoints not strictly increasing at {x}"
                    )));
                }
            }
            // Base is irrelevant when the first step starts at 0.
            let skip = prev_x.is_none() && x == T::zero();
            if !skip && v < prev_v {
                return Err(Error::InvalidStepFn(format!("values decrease at x = {x}")));
            }
            prev_x = Some(x);
            prev_v = v;
        }
        Ok(StepFn { base, steps })
    }

    pub fn constant(c: T) -> Result<Self> {
        Self::new(c, Vec::new())
    }

    pub fn base(&self) -> T {
        self.base
    }

    pub fn steps(&self) -> &[(T, T)] {
        &self.steps
    }

    /// `(start, value)` of every maximal interval the function is defined on,
    /// starting with `(0, P(0))`.
    pub fn plateaus(&self) -> Vec<(T, T)> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        match self.steps.first() {
            Some(&(x, _)) if x == T::zero() => {}
            _ => out.push((T::zero(), self.base)),
        }
        out.extend(self.steps.iter().copied());
        out
    }

    /// Plateau ends: `plateaus()[k]` covers `[start_k, end_k)`, the last one `[start, 1]`.
    fn plateau_ends(plateaus: &[(T, T)]) -> impl Iterator<Item = T> + '_ {
        plateaus
            .iter()
            .skip(1)
            .map(|p| p.0)
            .chain(std::iter::once(T::one()))
    }

    pub fn eval(&self, x: T) -> Result<T> {
        if !in_unit(x) {
            return Err(domain("x", x));
        }
        Ok(self.eval_clamped(x))
    }

    /// Evaluate at `x` clamped into `[0, 1]`.
    pub fn eval_clamped(&self, x: T) -> T {
        let x = x.max(T::zero()).min(T::one());
        let k = self.steps.partition_point(|s| s.0 <= x);
        if k == 0 {
            self.base
        } else {
            self.steps[k - 1].1
        }
    }

    /// `P(x-)`; equals `P(0)` at `x = 0`.
    pub fn left_limit(&self, x: T) -> T {
        let x = x.max(T::zero()).min(T::one());
        if x == T::zero() {
            return self.eval_clamped(x);
        }
        let k = self.steps.partition_point(|s| s.0 < x);
        if k == 0 {
            self.base
        } else {
            self.steps[k - 1].1
        }
    }

    pub fn value_at_one(&self) -> T {
        self.steps.last().map_or(self.base, |s| s.1)
    }

    pub fn value_at_zero(&self) -> T {
        self.eval_clamped(T::zero())
    }

    /// `inf{x : P(x) >= y}`, or `+inf` when `y > P(1)`.
    pub fn inverse(&self, y: T) -> Result<T> {
        if !in_unit(y) {
            return Err(domain("y", y));
        }
        Ok(self.inverse_unchecked(y))
    }

    fn inverse_unchecked(&self, y: T) -> T {
        if y <= self.value_at_zero() {
            return T::zero();
        }
        // First step reaching y; values are sorted so binary search applies.
        let k = self.steps.partition_point(|s| s.1 < y);
        if k == self.steps.len() {
            T::infinity()
        } else {
            self.steps[k].0
        }
    }

    /// [`inverse`](Self::inverse) with `+inf` replaced by [`SENTINEL`].
    pub fn inverse_clamped(&self, y: T) -> T {
        let v = self.inverse_unchecked(y.max(T::zero()).min(T::one()));
        if v.is_infinite() {
            T::lit(SENTINEL)
        } else {
            v
        }
    }

    /// `int_0^x P^-1(y) dy` with the sentinel clamp, computed exactly.
    pub fn inverse_integral(&self, x: T) -> T {
        let x = x.max(T::zero()).min(T::one());
        let plateaus = self.plateaus();
        // P^-1 = 0 on [0, P(0)], then the start of plateau k on (v_{k-1}, v_k].
        let mut acc = T::zero();
        let mut prev = plateaus[0].1;
        if x <= prev {
            return acc;
        }
        for &(s, v) in &plateaus[1..] {
            if v > prev {
                let hi = v.min(x);
                acc = acc + s * (hi - prev);
                if x <= v {
                    return acc;
                }
                prev = v;
            }
        }
        acc + T::lit(SENTINEL) * (x - prev)
    }

    /// `int_0^x (y - P^-1(y)) dy`, evaluated exactly.
    pub fn ru_objective(&self, x: T) -> Result<T> {
        if !in_unit(x) {
            return Err(domain("x", x));
        }
        Ok(self.ru_objective_unchecked(x))
    }

    fn ru_objective_unchecked(&self, x: T) -> T {
        x * x / T::lit(2.0) - self.inverse_integral(x)
    }

    /// Global maximizers of [`ru_objective`](Self::ru_objective) over `[0, 1]`.
    ///
    /// The objective is convex on each interval where `P^-1` is constant, so
    /// every maximum sits at an endpoint: 0, 1 or a value of `P`.
    pub fn ru_dominant(&self) -> RuDominance<T> {
        let mut cands: Vec<T> = vec![T::zero(), T::one(), self.base];
        cands.extend(self.steps.iter().map(|s| s.1));
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cands.dedup();

        let vals: Vec<T> = cands.iter().map(|&c| self.ru_objective_unchecked(c)).collect();
        let best = vals.iter().copied().fold(T::neg_infinity(), T::max);
        let tol = T::value_tol();
        let mut maximizers: Vec<T> = Vec::new();
        for (&c, &v) in cands.iter().zip(&vals) {
            if v >= best - tol {
                match maximizers.last() {
                    Some(&m) if c - m < T::point_tol() => {}
                    _ => maximizers.push(c),
                }
            }
        }
        RuDominance {
            strict: maximizers.len() == 1,
            maximizers,
            value: best,
        }
    }

    /// `L(x) = int_{x*}^{x} (P^-1(y) - y) dy` with the sentinel clamp.
    pub fn loss(&self, x_star: T, x: T) -> Result<T> {
        if !in_unit(x_star) {
            return Err(domain("x_star", x_star));
        }
        if !in_unit(x) {
            return Err(domain("x", x));
        }
        let two = T::lit(2.0);
        Ok(self.inverse_integral(x) - self.inverse_integral(x_star) - (x * x - x_star * x_star) / two)
    }

    /// Exact fixed points and jump crossings, sorted by `x`.
    pub fn fixed_points(&self) -> Vec<FixedPoint<T>> {
        let plateaus = self.plateaus();
        let ends: Vec<T> = Self::plateau_ends(&plateaus).collect();
        let last = plateaus.len() - 1;
        let mut out = Vec::new();
        for (k, (&(s, v), &e)) in plateaus.iter().zip(&ends).enumerate() {
            if k > 0 {
                let left = plateaus[k - 1].1;
                if left < s && s <= v && v != s {
                    out.push(FixedPoint {
                        x: s,
                        kind: FixedPointKind::JumpCrossing,
                    });
                }
            }
            let inside = if k == last { s <= v && v <= e } else { s <= v && v < e };
            if inside {
                out.push(FixedPoint {
                    x: v,
                    kind: FixedPointKind::Exact,
                });
            }
        }
        out.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        out
    }

    /// Smallest and largest point returned by [`fixed_points`](Self::fixed_points).
    pub fn extreme_fixed_points(&self) -> (T, T) {
        let fp = self.fixed_points();
        (fp[0].x, fp[fp.len() - 1].x)
    }

    /// Whether `P(y) >= P(x) + gamma (y - x)` for `y` in `[x - radius, x]` and
    /// `P(y) <= P(x) + gamma (y - x)` for `y` in `[x, x + radius]`.
    ///
    /// `x` must be within the point tolerance of a fixed point.
    pub fn is_strongly_stable(&self, x: T, gamma: T, radius: T) -> Result<bool> {
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(Error::Domain {
                what: "gamma",
                value: gamma.to_f64().unwrap_or(f64::NAN),
                domain: "[0, 1)",
            });
        }
        if !(radius > T::zero()) {
            return Err(Error::Domain {
                what: "radius",
                value: radius.to_f64().unwrap_or(f64::NAN),
                domain: "(0, inf)",
            });
        }
        let x = self
            .fixed_points()
            .into_iter()
            .map(|f| f.x)
            .find(|f| (*f - x).abs() <= T::point_tol())
            .ok_or(Error::NotAFixedPoint {
                x: x.to_f64().unwrap_or(f64::NAN),
            })?;
        let px = self.eval_clamped(x);
        let lo = (x - radius).max(T::zero());
        let hi = (x + radius).min(T::one());
        let plateaus = self.plateaus();
        let last = plateaus.len() - 1;
        for (k, (&(s, v), e)) in plateaus.iter().zip(Self::plateau_ends(&plateaus)).enumerate() {
            // Below x the bound is tightest at the right end of the overlap.
            if s <= x && e > lo && v < px + gamma * (e.min(x) - x) {
                return Ok(false);
            }
            // Above x it is tightest at the left end.
            if s <= hi && (e > x || k == last) && v > px + gamma * (s.max(x) - x) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest absolute value difference between consecutive plateaus.
    pub fn max_step(&self) -> T {
        let p = self.plateaus();
        p.windows(2).map(|w| w[1].1 - w[0].1).fold(T::zero(), T::max)
    }

    /// `P + delta`, capped at 1.
    pub fn shifted_up(&self, delta: T) -> Self {
        let one = T::one();
        StepFn {
            base: (self.base + delta).min(one),
            steps: self.steps.iter().map(|&(x, v)| (x, (v + delta).min(one))).collect(),
        }
    }

    /// Same function with `f64` storage.
    pub fn to_f64(&self) -> StepFn<f64> {
        StepFn {
            base: self.base.to_f64().unwrap(),
            steps: self
                .steps
                .iter()
                .map(|&(x, v)| (x.to_f64().unwrap(), v.to_f64().unwrap()))
                .collect(),
        }
    }
}

impl StepFn<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("step function serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Approximate a nondecreasing `f: [0, 1] -> [0, 1]` by a step function with
/// consecutive value gaps of at most `max_step`.
///
/// `Above` dominates `f` pointwise, `Below` is dominated by it. Breakpoints lie
/// on a dyadic grid of [`DEFAULT_GRID`] cells.
pub fn step_approximate<T, F>(f: F, max_step: T, direction: Direction) -> Result<StepFn<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    step_approximate_on_grid(f, max_step, direction, DEFAULT_GRID)
}

pub fn step_approximate_on_grid<T, F>(
    f: F,
    max_step: T,
    direction: Direction,
    grid: usize,
) -> Result<StepFn<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if !(max_step > T::zero()) {
        return Err(Error::Domain {
            what: "max_step",
            value: max_step.to_f64().unwrap_or(f64::NAN),
            domain: "(0, inf)",
        });
    }
    if grid == 0 {
        return Err(Error::Empty("grid"));
    }
    let g = T::from_usize(grid).unwrap();
    let node = |j: usize| T::from_usize(j).unwrap() / g;

    // Samples at the 2*grid+1 half-cell points, checked for range and order.
    let mut samples = Vec::with_capacity(2 * grid + 1);
    let two_g = g + g;
    let slack = T::lit(1e-12);
    let mut running = T::neg_infinity();
    for j in 0..=2 * grid {
        let x = T::from_usize(j).unwrap() / two_g;
        let y = f(x);
        if !(y >= T::zero() - slack && y <= T::one() + slack) {
            return Err(Error::Domain {
                what: "f(x)",
                value: y.to_f64().unwrap_or(f64::NAN),
                domain: "[0, 1]",
            });
        }
        if y < running - slack {
            return Err(Error::NotMonotone {
                x: x.to_f64().unwrap_or(f64::NAN),
            });
        }
        // Rounding wiggles below the slack are ironed out.
        running = running.max(y.max(T::zero()).min(T::one()));
        samples.push(running);
    }
    let at = |j: usize| samples[2 * j];
    let mid = |j: usize| samples[2 * j + 1];
    let f0 = samples[0];
    let f1 = samples[2 * grid];
    if f1 - f0 <= T::zero() {
        return StepFn::constant(f0);
    }

    let s = max_step;
    let eps = T::lit(1e-9);
    let level_up = |y: T| {
        let k = ((y - f0) / s - eps).ceil().max(T::zero());
        (f0 + k * s).max(y).min(f1)
    };
    let level_down = |y: T| {
        let k = ((y - f0) / s + eps).floor().max(T::zero());
        (f0 + k * s).min(y).max(f0)
    };
    let level_near = |y: T| {
        let k = ((y - f0) / s).round().max(T::zero());
        (f0 + k * s).min(f1)
    };

    let mut cells: Vec<T> = (0..grid)
        .map(|j| match direction {
            Direction::Above => level_up(at(j + 1)),
            Direction::Below => level_down(at(j)),
            Direction::Midpoint => level_near(mid(j)),
        })
        .collect();

    match direction {
        Direction::Above | Direction::Midpoint => {
            for j in (0..grid - 1).rev() {
                cells[j] = cells[j].max(cells[j + 1] - s);
            }
        }
        Direction::Below => {
            for j in 1..grid {
                cells[j] = cells[j].min(cells[j - 1] + s);
            }
        }
    }

    let base = cells[0];
    let mut steps = Vec::new();
    let mut prev = base;
    for (j, &c) in cells.iter().enumerate().skip(1) {
        if c != prev {
            steps.push((node(j), c));
            prev = c;
        }
    }
    StepFn::new(base, steps)
}
