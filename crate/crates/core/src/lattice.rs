//! Cube decomposition of torus lattices and the per-cube audits used to
//! reason about contagion: empirical threshold CDFs, bad and extraordinary
//! cubes, clean-cube components, good sets and wave domination.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;

use crate::contagion::ContagionWave;
use crate::error::{Error, Result};
use crate::game::ShockProfile;
use crate::network::{LatticeSpec, Profile};
use crate::numfmt::g12;
use crate::stepfn::StepFn;

/// Packed small- or large-cube index `cube_x * per_side + cube_y`.
pub type CubeId = usize;

/// Default constant in the cube best-response residual.
pub const DEFAULT_D: f64 = 4.0;

/// Small cubes of side `b` nested in large cubes of side `B` on an `M x M` torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CubePartition {
    spec: LatticeSpec,
    b: usize,
    big: usize,
}

pub fn partition(spec: LatticeSpec, b: usize, big: usize) -> Result<CubePartition> {
    CubePartition::new(spec, b, big)
}

impl CubePartition {
    pub fn new(spec: LatticeSpec, b: usize, big: usize) -> Result<Self> {
        if b == 0 || big == 0 {
            return Err(Error::InvalidPartition("cube sides must be positive".into()));
        }
        if big % b != 0 || spec.side % big != 0 {
            return Err(Error::InvalidPartition(format!(
                "need b | B | M, got b = {b}, B = {big}, M = {}",
                spec.side
            )));
        }
        Ok(CubePartition { spec, b, big })
    }

    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    /// Small-cube side `b` in nodes.
    pub fn small_side(&self) -> usize {
        self.b
    }

    /// Large-cube side `B` in nodes.
    pub fn large_side(&self) -> usize {
        self.big
    }

    /// Small cubes per large-cube side, `k = B / b`.
    pub fn k(&self) -> usize {
        self.big / self.b
    }

    /// Large cubes per torus side, `K = M / B`.
    pub fn big_k(&self) -> usize {
        self.spec.side / self.big
    }

    /// Small cubes per torus side, `M / b`.
    pub fn per_side(&self) -> usize {
        self.spec.side / self.b
    }

    pub fn small_count(&self) -> usize {
        self.per_side() * self.per_side()
    }

    pub fn large_count(&self) -> usize {
        self.big_k() * self.big_k()
    }

    pub fn small_coords(&self, c: CubeId) -> (usize, usize) {
        (c / self.per_side(), c % self.per_side())
    }

    pub fn small_id(&self, cx: usize, cy: usize) -> CubeId {
        cx * self.per_side() + cy
    }

    pub fn large_coords(&self, c: CubeId) -> (usize, usize) {
        (c / self.big_k(), c % self.big_k())
    }

    pub fn small_cube_of(&self, i: usize) -> CubeId {
        let (r, c) = self.spec.coords(i);
        self.small_id(r / self.b, c / self.b)
    }

    pub fn large_cube_of(&self, i: usize) -> CubeId {
        let (r, c) = self.spec.coords(i);
        r / self.big * self.big_k() + c / self.big
    }

    pub fn large_of_small(&self, c: CubeId) -> CubeId {
        let (cx, cy) = self.small_coords(c);
        let k = self.k();
        cx / k * self.big_k() + cy / k
    }

    /// Nodes of small cube `c`, row-major.
    pub fn small_nodes(&self, c: CubeId) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.small_coords(c);
        self.square(cx * self.b, cy * self.b, self.b)
    }

    pub fn large_nodes(&self, c: CubeId) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.large_coords(c);
        self.square(cx * self.big, cy * self.big, self.big)
    }

    /// Small cubes inside large cube `c`, row-major.
    pub fn small_in_large(&self, c: CubeId) -> Vec<CubeId> {
        let (lx, ly) = self.large_coords(c);
        let k = self.k();
        (0..k)
            .flat_map(|dx| (0..k).map(move |dy| (lx * k + dx, ly * k + dy)))
            .map(|(x, y)| self.small_id(x, y))
            .collect()
    }

    fn square(&self, r0: usize, c0: usize, side: usize) -> impl Iterator<Item = usize> + '_ {
        (r0..r0 + side).flat_map(move |r| (c0..c0 + side).map(move |c| self.spec.node(r, c)))
    }

    fn check_small(&self, c: CubeId) -> Result<()> {
        if c >= self.small_count() {
            return Err(Error::InvalidPartition(format!(
                "cube id {c} out of range (have {})",
                self.small_count()
            )));
        }
        Ok(())
    }

    fn check_nodes(&self, n: usize) -> Result<()> {
        if n != self.spec.nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.nodes(),
                got: n,
            });
        }
        Ok(())
    }

    /// Torus 4-neighbors of small cube `c`, without duplicates.
    pub fn small_neighbors(&self, c: CubeId) -> Vec<CubeId> {
        let (x, y) = self.small_coords(c);
        grid_neighbors(x, y, self.per_side())
            .into_iter()
            .map(|(x, y)| self.small_id(x, y))
            .collect()
    }

    /// Torus 4-neighbors of large cube `c`, without duplicates.
    pub fn large_neighbors(&self, c: CubeId) -> Vec<CubeId> {
        let (x, y) = self.large_coords(c);
        let kk = self.big_k();
        grid_neighbors(x, y, kk)
            .into_iter()
            .map(|(x, y)| x * kk + y)
            .collect()
    }

    /// Hop distance `d^b` between small cubes on the cube torus.
    pub fn hop_distance(&self, c: CubeId, d: CubeId) -> usize {
        let n = self.per_side();
        let (ax, ay) = self.small_coords(c);
        let (bx, by) = self.small_coords(d);
        cyc(ax, bx, n) + cyc(ay, by, n)
    }

    /// Nodes between two cube rows `delta` cube steps apart (0 when equal).
    fn axis_gap(&self, delta: usize) -> usize {
        let delta = delta.min(self.per_side() - delta);
        if delta == 0 {
            0
        } else {
            (delta - 1) * self.b + 1
        }
    }

    /// Smallest torus distance between a node of `c` and a node of `d`.
    pub fn cube_distance(&self, c: CubeId, d: CubeId) -> f64 {
        let n = self.per_side();
        let (ax, ay) = self.small_coords(c);
        let (bx, by) = self.small_coords(d);
        let gx = self.axis_gap(cyc(ax, bx, n)) as f64;
        let gy = self.axis_gap(cyc(ay, by, n)) as f64;
        (gx * gx + gy * gy).sqrt() / self.spec.density as f64
    }

    /// `d(c, S)` for every small cube, `+inf` when `S` is empty.
    ///
    /// The metric is separable, so two passes of `O(n^3)` replace the
    /// all-pairs scan.
    pub fn set_distances(&self, set: &[bool]) -> Vec<f64> {
        let n = self.per_side();
        assert_eq!(set.len(), n * n, "set mask length");
        let sq: Vec<f64> = (0..n)
            .map(|d| {
                let g = self.axis_gap(d) as f64;
                g * g
            })
            .collect();
        // h[sx][cy] = min over members (sx, sy) of gap(cy - sy)^2.
        let mut h = vec![f64::INFINITY; n * n];
        for sx in 0..n {
            let members: Vec<usize> = (0..n).filter(|&sy| set[sx * n + sy]).collect();
            if members.is_empty() {
                continue;
            }
            for cy in 0..n {
                h[sx * n + cy] = members
                    .iter()
                    .map(|&sy| sq[cyc(cy, sy, n)])
                    .fold(f64::INFINITY, f64::min);
            }
        }
        let m = self.spec.density as f64;
        let mut out = vec![f64::INFINITY; n * n];
        for cx in 0..n {
            for cy in 0..n {
                let best = (0..n)
                    .map(|sx| sq[cyc(cx, sx, n)] + h[sx * n + cy])
                    .fold(f64::INFINITY, f64::min);
                out[cx * n + cy] = best.sqrt() / m;
            }
        }
        out
    }
}

fn cyc(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

fn grid_neighbors(x: usize, y: usize, n: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(4);
    if n < 2 {
        return out;
    }
    for p in [
        ((x + n - 1) % n, y),
        ((x + 1) % n, y),
        (x, (y + n - 1) % n),
        (x, (y + 1) % n),
    ] {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// `P_c(x) = (1/|c|) #{i in c : t_i < x}`.
pub fn cube_empirical_cdf(
    part: &CubePartition,
    shocks: &ShockProfile,
    c: CubeId,
    x: f64,
) -> Result<f64> {
    part.check_small(c)?;
    part.check_nodes(shocks.len())?;
    let below = part
        .small_nodes(c)
        .filter(|&i| shocks.thresholds[i] < x)
        .count();
    Ok(below as f64 / (part.b * part.b) as f64)
}

/// `sup_{x in [0, 1]} (P_c(x) - P(x))` for one cube.
///
/// Both sides are step functions, so the sup is attained at, or just to the
/// right of, a cube threshold, a breakpoint of `P`, or an endpoint.
pub fn cube_cdf_excess(
    part: &CubePartition,
    shocks: &ShockProfile,
    p: &StepFn,
    c: CubeId,
) -> Result<f64> {
    part.check_small(c)?;
    part.check_nodes(shocks.len())?;
    let mut t: Vec<f64> = part.small_nodes(c).map(|i| shocks.thresholds[i]).collect();
    t.sort_by(f64::total_cmp);
    Ok(sorted_excess(&t, p))
}

fn sorted_excess(t: &[f64], p: &StepFn) -> f64 {
    let n = t.len() as f64;
    let lt = |x: f64| t.partition_point(|&v| v < x) as f64 / n;
    let le = |x: f64| t.partition_point(|&v| v <= x) as f64 / n;
    let mut best = f64::NEG_INFINITY;
    let candidates = [0.0, 1.0]
        .into_iter()
        .chain(t.iter().copied().filter(|v| (0.0..=1.0).contains(v)))
        .chain(p.steps().iter().map(|s| s.0));
    for x in candidates {
        let px = p.eval_clamped(x);
        best = best.max(lt(x) - px);
        if x < 1.0 {
            best = best.max(le(x) - px);
        }
    }
    best
}

/// Cubes with `P_c(x) > P(x) + gamma` for some `x in [0, 1]`.
pub fn classify_bad(
    part: &CubePartition,
    shocks: &ShockProfile,
    p: &StepFn,
    gamma: f64,
) -> Result<Vec<bool>> {
    if !(gamma > 0.0) {
        return Err(Error::Domain {
            what: "gamma",
            value: gamma,
            domain: "(0, inf)",
        });
    }
    part.check_nodes(shocks.len())?;
    let mut t = Vec::with_capacity(part.b * part.b);
    Ok((0..part.small_count())
        .map(|c| {
            t.clear();
            t.extend(part.small_nodes(c).map(|i| shocks.thresholds[i]));
            t.sort_by(f64::total_cmp);
            sorted_excess(&t, p) > gamma
        })
        .collect())
}

/// Cubes in which every agent has action 0 strictly dominant (threshold above 1).
pub fn extraordinary_cubes(part: &CubePartition, shocks: &ShockProfile) -> Result<Vec<bool>> {
    part.check_nodes(shocks.len())?;
    Ok((0..part.small_count())
        .map(|c| part.small_nodes(c).all(|i| shocks.thresholds[i] > 1.0))
        .collect())
}

/// `a(c)`, the mean of `x` over each small cube.
pub fn cube_means(part: &CubePartition, x: &[f64]) -> Result<Vec<f64>> {
    part.check_nodes(x.len())?;
    let size = (part.b * part.b) as f64;
    Ok((0..part.small_count())
        .map(|c| part.small_nodes(c).map(|i| x[i]).sum::<f64>() / size)
        .collect())
}

/// Neighborhood fractions on the unit-weight `(M, m)` lattice without
/// materializing its edges: each disc is summed row by row from prefix sums.
pub fn lattice_beta(spec: LatticeSpec, a: &[f64]) -> Result<Vec<f64>> {
    let side = spec.side;
    if a.len() != spec.nodes() {
        return Err(Error::DimensionMismatch {
            expected: spec.nodes(),
            got: a.len(),
        });
    }
    let m = spec.density as i64;
    let half: Vec<usize> = (-m..=m)
        .map(|k| {
            let mut w = ((m * m - k * k) as f64).sqrt() as i64;
            while w * w > m * m - k * k {
                w -= 1;
            }
            while (w + 1) * (w + 1) <= m * m - k * k {
                w += 1;
            }
            w as usize
        })
        .collect();
    let degree = half.iter().map(|w| 2 * w + 1).sum::<usize>() - 1;
    // Prefix sums over each row written twice to absorb the wrap.
    let mut pre = vec![0.0; side * (2 * side + 1)];
    for r in 0..side {
        let row = &mut pre[r * (2 * side + 1)..(r + 1) * (2 * side + 1)];
        for c in 0..2 * side {
            row[c + 1] = row[c] + a[r * side + c % side];
        }
    }
    let mut out = Vec::with_capacity(a.len());
    for r in 0..side {
        for c in 0..side {
            let mut s = -a[r * side + c];
            for (k, &w) in (-m..=m).zip(&half) {
                let rr = (r as i64 + k).rem_euclid(side as i64) as usize;
                let start = (c + side - w) % side;
                let row = &pre[rr * (2 * side + 1)..];
                s += row[start + 2 * w + 1] - row[start];
            }
            out.push((s / degree as f64).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Largest `|beta(i) - beta(c)|` over cubes `c` and nodes `i` in `c`.
pub fn belief_spread(part: &CubePartition, beta: &[f64]) -> Result<f64> {
    let means = cube_means(part, beta)?;
    Ok((0..part.small_count())
        .flat_map(|c| part.small_nodes(c).map(move |i| (c, i)))
        .map(|(c, i)| (beta[i] - means[c]).abs())
        .fold(0.0, f64::max))
}

/// Connected components of a masked torus grid, largest first, ties by
/// smallest member.
fn grid_components(mask: &[bool], n: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut comps = Vec::new();
    for s in 0..mask.len() {
        if !mask[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for (x, y) in grid_neighbors(u / n, u % n, n) {
                let v = x * n + y;
                if mask[v] && !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// Number of 4-connected components of a small-cube mask.
pub fn small_components(part: &CubePartition, mask: &[bool]) -> usize {
    grid_components(mask, part.per_side()).len()
}

/// Large cubes containing no bad small cube.
pub fn clean_large_cubes(part: &CubePartition, bad: &[bool]) -> Vec<bool> {
    let mut clean = vec![true; part.large_count()];
    for (c, _) in bad.iter().enumerate().filter(|(_, &b)| b) {
        clean[part.large_of_small(c)] = false;
    }
    clean
}

/// Largest 4-connected component of a large-cube mask.
pub fn largest_large_component(part: &CubePartition, mask: &[bool]) -> Vec<CubeId> {
    grid_components(mask, part.big_k())
        .into_iter()
        .next()
        .unwrap_or_default()
}

/// Small cubes of `∪U` whose distance to every node outside `∪U` exceeds `r`.
pub fn r_interior(part: &CubePartition, u: &[CubeId], r: f64) -> Vec<bool> {
    let mut inside = vec![false; part.small_count()];
    for &c in u {
        for s in part.small_in_large(c) {
            inside[s] = true;
        }
    }
    let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
    let dist = part.set_distances(&outside);
    inside
        .iter()
        .zip(&dist)
        .map(|(&i, &d)| i && d > r)
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GoodSetConditions {
    /// `W` covers at least a `1 - gamma` fraction of the nodes.
    pub a: bool,
    /// `W` is connected in the small-cube grid.
    pub b: bool,
    /// Every bad cube is at distance at least `R` from `W`.
    pub c: bool,
    /// Some cube of `W` has only extraordinary cubes within `R`.
    pub d: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodSet {
    pub found: bool,
    #[serde(rename = "W_size")]
    pub w_size: usize,
    pub seed_cube: Option<CubeId>,
    pub conditions: GoodSetConditions,
    #[serde(skip)]
    pub w: Vec<CubeId>,
    /// Large cubes of the clean component `U`.
    #[serde(skip)]
    pub component: Vec<CubeId>,
    #[serde(skip)]
    pub bad: Vec<bool>,
}

impl GoodSet {
    /// `(W, c0)` when every condition holds.
    pub fn into_option(self) -> Option<(Vec<CubeId>, CubeId)> {
        match (self.found, self.seed_cube) {
            (true, Some(c0)) => Some((self.w, c0)),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("good set serializes")
    }
}

/// Build `W` from the largest clean component and audit the four good-set
/// conditions directly.
pub fn good_set_search(
    part: &CubePartition,
    shocks: &ShockProfile,
    p: &StepFn,
    gamma: f64,
    r: f64,
) -> Result<GoodSet> {
    let bad = classify_bad(part, shocks, p, gamma)?;
    let extra = extraordinary_cubes(part, shocks)?;
    let component = largest_large_component(part, &clean_large_cubes(part, &bad));
    let w_mask = r_interior(part, &component, r);
    let w: Vec<CubeId> = (0..w_mask.len()).filter(|&c| w_mask[c]).collect();

    let m2 = part.spec.nodes() as f64;
    let a = (w.len() * part.b * part.b) as f64 >= (1.0 - gamma) * m2;
    let b = !w.is_empty() && small_components(part, &w_mask) == 1;
    let c = if w.is_empty() {
        true
    } else {
        let dist = part.set_distances(&w_mask);
        bad.iter().zip(&dist).all(|(&bd, &d)| !bd || d >= r)
    };
    let not_extra: Vec<bool> = extra.iter().map(|&e| !e).collect();
    let reach = part.set_distances(&not_extra);
    let seed_cube = w.iter().copied().find(|&c0| reach[c0] > r);
    let conditions = GoodSetConditions {
        a,
        b,
        c,
        d: seed_cube.is_some(),
    };
    Ok(GoodSet {
        found: a && b && c && seed_cube.is_some(),
        w_size: w.len(),
        seed_cube,
        conditions,
        w,
        component,
        bad,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Domination {
    pub dominated: bool,
    pub violating: Option<CubeId>,
    /// Smallest `sigma(d(c, W) - R) + rho - a(c)` over cubes.
    pub min_slack: f64,
}

/// Whether `a(c) <= sigma(d(c, W) - R) + rho` holds for every small cube.
pub fn domination_check(
    part: &CubePartition,
    a: &Profile,
    wave: &ContagionWave,
    w: &[CubeId],
    r: f64,
    rho: f64,
) -> Result<Domination> {
    domination_check_with(part, a, |x| wave.sigma(x), w, r, rho)
}

/// [`domination_check`] against an arbitrary nondecreasing `sigma`.
pub fn domination_check_with(
    part: &CubePartition,
    a: &Profile,
    sigma: impl Fn(f64) -> f64,
    w: &[CubeId],
    r: f64,
    rho: f64,
) -> Result<Domination> {
    let means = cube_means(part, a.values())?;
    let mut mask = vec![false; part.small_count()];
    for &c in w {
        part.check_small(c)?;
        mask[c] = true;
    }
    let dist = part.set_distances(&mask);
    let mut out = Domination {
        dominated: true,
        violating: None,
        min_slack: f64::INFINITY,
    };
    for (c, (&ac, &d)) in means.iter().zip(&dist).enumerate() {
        let bound = if d.is_infinite() { 1.0 } else { sigma(d - r) };
        let slack = bound + rho - ac;
        out.min_slack = out.min_slack.min(slack);
        if slack < 0.0 && out.dominated {
            out.dominated = false;
            out.violating = Some(c);
        }
    }
    Ok(out)
}

/// `gamma + P(beta(c) + D rho) - a(c)` per good cube, `None` on bad cubes.
///
/// Neighborhood fractions are those of the unit-weight lattice of the partition.
pub fn cube_best_response_gap(
    part: &CubePartition,
    shocks: &ShockProfile,
    p: &StepFn,
    a: &Profile,
    gamma: f64,
    rho: f64,
    d: f64,
) -> Result<Vec<Option<f64>>> {
    let bad = classify_bad(part, shocks, p, gamma)?;
    let beta = lattice_beta(part.spec, a.values())?;
    let ac = cube_means(part, a.values())?;
    let bc = cube_means(part, &beta)?;
    Ok((0..part.small_count())
        .map(|c| (!bad[c]).then(|| gamma + p.eval_clamped(bc[c] + d * rho) - ac[c]))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CubeRow {
    pub cube_x: usize,
    pub cube_y: usize,
    pub a_c: f64,
    pub beta_c: f64,
    /// `sup_x (P_c(x) - P(x))`.
    pub cdf_excess: f64,
    pub bad: bool,
    pub extraordinary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubeReport {
    pub gamma: f64,
    pub rows: Vec<CubeRow>,
}

impl CubeReport {
    pub fn new(
        part: &CubePartition,
        shocks: &ShockProfile,
        p: &StepFn,
        a: &Profile,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Domain {
                what: "gamma",
                value: gamma,
                domain: "(0, inf)",
            });
        }
        let extra = extraordinary_cubes(part, shocks)?;
        let beta = lattice_beta(part.spec, a.values())?;
        let ac = cube_means(part, a.values())?;
        let bc = cube_means(part, &beta)?;
        let rows = (0..part.small_count())
            .map(|c| {
                let (cube_x, cube_y) = part.small_coords(c);
                let cdf_excess = cube_cdf_excess(part, shocks, p, c)?;
                Ok(CubeRow {
                    cube_x,
                    cube_y,
                    a_c: ac[c].clamp(0.0, 1.0),
                    beta_c: bc[c].clamp(0.0, 1.0),
                    cdf_excess,
                    bad: cdf_excess > gamma,
                    extraordinary: extra[c],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CubeReport { gamma, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cube_x,cube_y,a_c,beta_c,bad,extraordinary\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.cube_x,
                r.cube_y,
                g12(r.a_c),
                g12(r.beta_c),
                r.bad,
                r.extraordinary
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::extremal_equilibria;
    use crate::game::{sample_shocks, sample_shocks_replication, ThresholdDist};
    use crate::network::Network;
    use crate::stepfn::{step_approximate, Direction};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(side: usize, density: usize) -> LatticeSpec {
        LatticeSpec::new(side, density).unwrap()
    }

    fn shocks(t: Vec<f64>) -> ShockProfile {
        ShockProfile::from_thresholds(t).unwrap()
    }

    /// 0 below 1/2, 1 from 1/2 on.
    fn jump_half() -> StepFn {
        StepFn::new(0.0, vec![(0.5, 1.0)]).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = partition(spec(12, 1), 3, 6).unwrap();
        assert_eq!(p.small_count(), 16);
        assert_eq!(p.large_count(), 4);
        assert_eq!(p.k(), 2);
        assert_eq!(p.big_k(), 2);
        for c in 0..16 {
            assert_eq!(p.small_nodes(c).count(), 9);
        }
        for c in 0..4 {
            assert_eq!(p.large_nodes(c).count(), 36);
            assert_eq!(p.small_in_large(c).len(), 4);
        }
        let single = partition(spec(6, 2), 6, 6).unwrap();
        assert_eq!(single.small_count(), 1);
        assert_eq!(single.small_nodes(0).count(), 36);
        assert!(single.small_neighbors(0).is_empty());
    }

    #[test]
    fn partition_rejects_bad_divisibility() {
        assert!(partition(spec(12, 1), 4, 6).is_err());
        assert!(partition(spec(12, 1), 5, 10).is_err());
        assert!(partition(spec(12, 1), 0, 6).is_err());
    }

    #[test]
    fn cube_neighbors_follow_the_torus() {
        let p = partition(spec(12, 1), 3, 6).unwrap();
        let mut nb = p.small_neighbors(p.small_id(0, 0));
        nb.sort_unstable();
        assert_eq!(nb, vec![1, 3, 4, 12]);
        // Two cubes per side: left and right neighbors coincide.
        let q = partition(spec(12, 1), 6, 6).unwrap();
        assert_eq!(q.small_neighbors(0).len(), 2);
        assert_eq!(p.hop_distance(p.small_id(0, 0), p.small_id(3, 2)), 3);
    }

    #[test]
    fn empirical_cdf_examples() {
        let p = partition(spec(6, 1), 3, 3).unwrap();
        let inf = shocks(vec![f64::INFINITY; 36]);
        for x in [0.0, 0.5, 1.0] {
            assert_eq!(cube_empirical_cdf(&p, &inf, 0, x).unwrap(), 0.0);
        }
        let zero = shocks(vec![0.0; 36]);
        assert_eq!(cube_empirical_cdf(&p, &zero, 2, 0.0).unwrap(), 0.0);
        assert_eq!(cube_empirical_cdf(&p, &zero, 2, 1e-12).unwrap(), 1.0);
        assert!(cube_empirical_cdf(&p, &zero, 4, 0.5).is_err());

        let mut r = ChaCha8Rng::seed_from_u64(3);
        let t: Vec<f64> = (0..36).map(|_| (r.random_range(0..8) as f64) / 8.0).collect();
        let mixed = shocks(t.clone());
        for c in 0..4 {
            for k in 0..=8 {
                let x = k as f64 / 8.0;
                let (cx, cy) = p.small_coords(c);
                let mut count = 0;
                for row in 3 * cx..3 * cx + 3 {
                    for col in 3 * cy..3 * cy + 3 {
                        count += (t[row * 6 + col] < x) as usize;
                    }
                }
                assert_eq!(cube_empirical_cdf(&p, &mixed, c, x).unwrap(), count as f64 / 9.0);
            }
        }
    }

    #[test]
    fn classify_examples() {
        let part = partition(spec(6, 1), 3, 3).unwrap();
        let p = StepFn::new(0.2, vec![(0.5, 0.4)]).unwrap();
        assert_eq!(
            classify_bad(&part, &shocks(vec![f64::INFINITY; 36]), &p, 0.1).unwrap(),
            vec![false; 4]
        );
        // P(0.5) + gamma < 1 and every threshold at 0: bad just right of 0.
        assert_eq!(
            classify_bad(&part, &shocks(vec![0.0; 36]), &p, 0.1).unwrap(),
            vec![true; 4]
        );
        assert!(classify_bad(&part, &shocks(vec![0.0; 36]), &p, 0.0).is_err());
    }

    #[test]
    fn classify_matches_dense_grid() {
        // Thresholds and breakpoints on a 1/64 grid, so the midpoints of a
        // 1/128 grid see every one-sided limit.
        let part = partition(spec(40, 1), 4, 40).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let k = r.random_range(1..5);
            let mut xs: Vec<usize> = (0..k).map(|_| r.random_range(1..64)).collect();
            xs.sort_unstable();
            xs.dedup();
            let mut vs: Vec<f64> = (0..=xs.len()).map(|_| r.random_range(0.0..1.0)).collect();
            vs.sort_by(f64::total_cmp);
            let p = StepFn::new(
                vs[0],
                xs.iter().map(|&x| x as f64 / 64.0).zip(vs[1..].iter().copied()).collect(),
            )
            .unwrap();
            let t: Vec<f64> = (0..1600)
                .map(|_| match r.random_range(0..10) {
                    0 => f64::INFINITY,
                    _ => r.random_range(0..=64) as f64 / 64.0,
                })
                .collect();
            let sh = shocks(t.clone());
            let gamma = r.random_range(0.05..0.4);
            let flags = classify_bad(&part, &sh, &p, gamma).unwrap();
            for c in 0..part.small_count() {
                let ts: Vec<f64> = part.small_nodes(c).map(|i| t[i]).collect();
                let sup = (0..=128)
                    .map(|j| {
                        let x = j as f64 / 128.0;
                        let below = ts.iter().filter(|&&v| v < x).count() as f64 / 16.0;
                        below - p.eval_clamped(x)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(flags[c], sup > gamma, "cube {c}, sup {sup}, gamma {gamma}");
                let ex = cube_cdf_excess(&part, &sh, &p, c).unwrap();
                assert!((ex - sup).abs() < 1e-12);
                checked += 1;
            }
        }
    }

    #[test]
    fn bad_frequency_respects_dkw() {
        let p = step_approximate(|x: f64| x, 0.05, Direction::Below).unwrap();
        let dist = ThresholdDist::direct(p.clone());
        let part = partition(spec(400, 1), 40, 400).unwrap();
        let gamma = 0.2;
        let mut bad = 0;
        let mut cubes = 0;
        for rep in 0..100 {
            let sh = sample_shocks_replication(&dist, part.spec().nodes(), 5, rep).unwrap();
            let flags = classify_bad(&part, &sh, &p, gamma).unwrap();
            bad += flags.iter().filter(|&&b| b).count();
            cubes += flags.len();
        }
        assert_eq!(cubes, 10_000);
        let bound = 2.0 * (-2.0 * 1600.0 * gamma * gamma).exp();
        assert!(bad as f64 / cubes as f64 <= bound, "{bad} bad cubes");
    }

    #[test]
    fn extraordinary_examples() {
        let part = partition(spec(6, 1), 3, 3).unwrap();
        let mut t = vec![f64::INFINITY; 36];
        assert_eq!(extraordinary_cubes(&part, &shocks(t.clone())).unwrap(), vec![true; 4]);
        t[part.spec().node(4, 1)] = 0.5;
        assert_eq!(
            extraordinary_cubes(&part, &shocks(t)).unwrap(),
            vec![true, true, false, true]
        );
    }

    #[test]
    fn extraordinary_frequency_is_binomial() {
        // P(0) = 0.1 and P(1) = 0.3; an agent is extraordinary with
        // probability 1 - P(1), so a 2 x 2 cube with 0.7^4.
        let p = StepFn::new(0.1, vec![(0.5, 0.3)]).unwrap();
        let part = partition(spec(200, 1), 2, 200).unwrap();
        let sh = sample_shocks(&ThresholdDist::direct(p), part.spec().nodes(), 21).unwrap();
        let flags = extraordinary_cubes(&part, &sh).unwrap();
        let n = flags.len() as f64;
        let freq = flags.iter().filter(|&&e| e).count() as f64 / n;
        let q = 0.7f64.powi(4);
        let sd = (q * (1.0 - q) / n).sqrt();
        assert!((freq - q).abs() <= 3.0 * sd, "freq {freq} vs {q}");
    }

    fn node_brute_distance(part: &CubePartition, c: CubeId, d: CubeId) -> f64 {
        let s = part.spec();
        part.small_nodes(c)
            .flat_map(|i| part.small_nodes(d).map(move |j| s.distance(i, j)))
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn partition_covers_every_node_once(
            b in 1usize..4, kf in 1usize..4, kk in 1usize..4, m in 1usize..3,
        ) {
            let big = b * kf;
            let side = big * kk;
            prop_assume!(side >= 3 * m);
            let part = partition(spec(side, m), b, big).unwrap();
            let mut small = vec![0usize; side * side];
            for c in 0..part.small_count() {
                prop_assert_eq!(part.small_nodes(c).count(), b * b);
                for i in part.small_nodes(c) {
                    small[i] += 1;
                    prop_assert_eq!(part.small_cube_of(i), c);
                    prop_assert_eq!(part.large_cube_of(i), part.large_of_small(c));
                }
            }
            prop_assert!(small.iter().all(|&k| k == 1));
            let mut large = vec![0usize; side * side];
            for c in 0..part.large_count() {
                for i in part.large_nodes(c) {
                    large[i] += 1;
                }
            }
            prop_assert!(large.iter().all(|&k| k == 1));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cube_distance_is_node_minimum(
            b in 1usize..4, n in 1usize..6, m in 1usize..3, c in 0usize..1000, d in 0usize..1000,
        ) {
            let side = b * n;
            prop_assume!(side >= 3 * m);
            let part = partition(spec(side, m), b, side).unwrap();
            let (c, d) = (c % part.small_count(), d % part.small_count());
            let want = node_brute_distance(&part, c, d);
            prop_assert!((part.cube_distance(c, d) - want).abs() < 1e-12);
        }

        #[test]
        fn set_distances_match_pairwise(
            b in 1usize..4, n in 1usize..7, m in 1usize..3, seed in any::<u64>(),
        ) {
            let side = b * n;
            prop_assume!(side >= 3 * m);
            let part = partition(spec(side, m), b, side).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let set: Vec<bool> = (0..part.small_count()).map(|_| r.random_bool(0.2)).collect();
            let got = part.set_distances(&set);
            for c in 0..part.small_count() {
                let want = (0..part.small_count())
                    .filter(|&s| set[s])
                    .map(|s| part.cube_distance(c, s))
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(got[c] == want || (got[c] - want).abs() < 1e-12);
            }
        }

        #[test]
        fn lattice_beta_matches_network(
            m in 1usize..4, extra in 0usize..5, seed in any::<u64>(),
        ) {
            let s = spec(3 * m + extra, m);
            let g = Network::lattice(s).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..s.nodes()).map(|_| r.random_range(0.0..1.0)).collect();
            let want = g.neighborhood_fractions(&Profile::new(x.clone()).unwrap()).unwrap();
            let got = lattice_beta(s, &x).unwrap();
            for (a, b) in got.iter().zip(want.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beliefs_in_a_cube_are_close() {
        let s = spec(300, 100);
        let part = partition(s, 10, 30).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for k in 0..20 {
            let a: Vec<f64> = match k % 3 {
                0 => {
                    let q = r.random_range(0.0..1.0);
                    (0..s.nodes()).map(|_| r.random_bool(q) as u8 as f64).collect()
                }
                1 => {
                    // Random half-plane.
                    let th: f64 = r.random_range(0.0..std::f64::consts::TAU);
                    let off = r.random_range(-100.0..100.0);
                    (0..s.nodes())
                        .map(|i| {
                            let (row, col) = s.coords(i);
                            let v = (row as f64 - 150.0) * th.cos() + (col as f64 - 150.0) * th.sin();
                            (v > off) as u8 as f64
                        })
                        .collect()
                }
                _ => {
                    // Checkerboard of random blocks.
                    let w = r.random_range(1..40);
                    (0..s.nodes())
                        .map(|i| {
                            let (row, col) = s.coords(i);
                            ((row / w + col / w) % 2) as f64
                        })
                        .collect()
                }
            };
            let beta = lattice_beta(s, &a).unwrap();
            let spread = belief_spread(&part, &beta).unwrap();
            assert!(spread <= 0.3, "profile {k}: spread {spread}");
        }
    }

    #[test]
    fn r_interior_size_bound() {
        let part = partition(spec(48, 2), 2, 8).unwrap();
        let (k, kk) = (part.k() as f64, part.big_k() as f64);
        let (b, m) = (2.0, 2.0);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let q = r.random_range(0.2..1.0);
            let u: Vec<CubeId> = (0..part.large_count()).filter(|_| r.random_bool(q)).collect();
            let radius = r.random_range(0.0..k * b / m / 4.0);
            let w = r_interior(&part, &u, radius);
            let covered = w.iter().filter(|&&x| x).count() as f64 * b * b / (48.0 * 48.0);
            let bound = (u.len() as f64 / (kk * kk)) * (1.0 - 4.0 / k * (radius * m / b + 1.0));
            assert!(covered >= bound - 1e-12, "{covered} < {bound}");
        }
    }

    #[test]
    fn r_interior_of_connected_set_is_connected() {
        let part = partition(spec(60, 2), 2, 12).unwrap();
        let (k, b, m) = (part.k() as f64, 2.0, 2.0);
        let limit = b / m * (k / 2.0 - 1.0);
        let mut r = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            // Grow a random connected set of large cubes.
            let size = r.random_range(1..=part.large_count());
            let mut u = vec![r.random_range(0..part.large_count())];
            while u.len() < size {
                let from = u[r.random_range(0..u.len())];
                let nb = part.large_neighbors(from);
                let next = nb[r.random_range(0..nb.len())];
                if !u.contains(&next) {
                    u.push(next);
                }
            }
            let radius = r.random_range(0.0..limit);
            let w = r_interior(&part, &u, radius);
            assert!(w.iter().any(|&x| x));
            assert_eq!(small_components(&part, &w), 1, "U = {u:?}, R = {radius}");
        }
    }

    /// Thresholds 1/2 everywhere except one extraordinary large cube.
    fn planted(part: &CubePartition, extra_large: CubeId) -> Vec<f64> {
        let mut t = vec![0.5; part.spec().nodes()];
        for i in part.large_nodes(extra_large) {
            t[i] = f64::INFINITY;
        }
        t
    }

    #[test]
    fn good_set_without_bad_cubes() {
        let part = partition(spec(24, 2), 2, 8).unwrap();
        let sh = shocks(planted(&part, 0));
        let g = good_set_search(&part, &sh, &jump_half(), 0.1, 0.5).unwrap();
        assert!(g.found);
        assert_eq!(g.w_size, part.small_count());
        assert_eq!(g.conditions, GoodSetConditions { a: true, b: true, c: true, d: true });
        let c0 = g.seed_cube.unwrap();
        assert_eq!(part.large_of_small(c0), 0);
        assert_eq!(
            g.to_json(),
            format!(r#"{{"found":true,"W_size":144,"seed_cube":{c0},"conditions":{{"a":true,"b":true,"c":true,"d":true}}}}"#)
        );
        assert!(g.into_option().is_some());
    }

    #[test]
    fn good_set_avoids_planted_bad_cube() {
        let part = partition(spec(24, 2), 2, 8).unwrap();
        let mut t = planted(&part, 0);
        let centre = part.small_id(6, 6);
        for i in part.small_nodes(centre) {
            t[i] = 0.0;
        }
        let sh = shocks(t);
        let radius = 1.2;
        let g = good_set_search(&part, &sh, &jump_half(), 0.3, radius).unwrap();
        let bad: Vec<CubeId> = (0..part.small_count()).filter(|&c| g.bad[c]).collect();
        assert_eq!(bad, vec![centre]);
        assert_eq!(g.component.len(), 8);
        assert!(!g.component.contains(&part.large_of_small(centre)));
        for &c in &g.w {
            let d = node_brute_distance(&part, c, centre);
            assert!(d >= radius, "cube {c} at {d}");
        }
        assert!(g.conditions.c);
        assert!(g.found, "{:?}", g.conditions);
    }

    #[test]
    fn good_set_needs_an_extraordinary_seed() {
        let part = partition(spec(24, 2), 2, 8).unwrap();
        let sh = shocks(vec![0.5; 576]);
        let g = good_set_search(&part, &sh, &jump_half(), 0.1, 0.5).unwrap();
        assert!(!g.found);
        assert!(!g.conditions.d);
        assert!(g.seed_cube.is_none());
        assert!(g.into_option().is_none());
    }

    #[test]
    fn domination_examples() {
        let part = partition(spec(24, 2), 2, 8).unwrap();
        let (a_star, reach) = (0.3, 2.0);
        let sigma = |x: f64| if x < reach { a_star } else { 1.0 };
        let w: Vec<CubeId> = (0..part.small_count())
            .filter(|&c| part.small_coords(c).0 < 3)
            .collect();
        let mut mask = vec![false; part.small_count()];
        for &c in &w {
            mask[c] = true;
        }
        let dist = part.set_distances(&mask);
        let radius = 0.5;

        let zeros = Profile::constant(576, 0.0).unwrap();
        assert!(domination_check_with(&part, &zeros, sigma, &w, radius, 0.0).unwrap().dominated);

        // Everyone at 1: only cubes inside the wave reach can fail.
        let ones = Profile::constant(576, 1.0).unwrap();
        let d = domination_check_with(&part, &ones, sigma, &w, radius, 0.1).unwrap();
        assert!(!d.dominated);
        assert!(dist[d.violating.unwrap()] - radius < reach);

        // One full cube next to W under a wave that is a* there.
        let target = part.small_id(3, 5);
        let mut a = vec![0.0; 576];
        for i in part.small_nodes(target) {
            a[i] = 1.0;
        }
        let a = Profile::new(a).unwrap();
        let d = domination_check_with(&part, &a, sigma, &w, radius, 0.1).unwrap();
        assert_eq!(d.violating, Some(target));
        assert!((d.min_slack - (a_star + 0.1 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn domination_with_a_built_wave() {
        let p = StepFn::constant(0.05).unwrap();
        let wave = crate::contagion::build_delta_wave(&p, 0.1).unwrap();
        let part = partition(spec(24, 2), 2, 8).unwrap();
        let zeros = Profile::constant(576, 0.0).unwrap();
        let d = domination_check(&part, &zeros, &wave, &[0], 0.5, 0.0).unwrap();
        assert!(d.dominated);
        assert_eq!(d.violating, None);
    }

    #[test]
    fn best_response_gap_examples() {
        let part = partition(spec(24, 2), 2, 8).unwrap();
        let p = StepFn::new(0.1, vec![(0.5, 0.3)]).unwrap();
        let inf = shocks(vec![f64::INFINITY; 576]);
        let zeros = Profile::constant(576, 0.0).unwrap();
        let gaps = cube_best_response_gap(&part, &inf, &p, &zeros, 0.1, 0.05, DEFAULT_D).unwrap();
        assert!(gaps.iter().all(|g| g.is_some_and(|v| v >= 0.0)));

        let mut t = vec![f64::INFINITY; 576];
        for i in part.small_nodes(7) {
            t[i] = 0.0;
        }
        let gaps = cube_best_response_gap(&part, &shocks(t), &p, &zeros, 0.1, 0.05, DEFAULT_D).unwrap();
        assert!(gaps[7].is_none());
        assert_eq!(gaps.iter().filter(|g| g.is_none()).count(), 1);
    }

    /// Largest equilibrium by synchronous best responses from all ones.
    fn largest_equilibrium(s: LatticeSpec, t: &[f64]) -> Vec<f64> {
        let mut a = vec![1.0; s.nodes()];
        loop {
            let beta = lattice_beta(s, &a).unwrap();
            let next: Vec<f64> = t.iter().zip(&beta).map(|(&ti, &bi)| (ti <= bi) as u8 as f64).collect();
            if next == a {
                return a;
            }
            a = next;
        }
    }

    #[test]
    fn best_response_gap_on_dense_lattice() {
        let s = spec(150, 50);
        let part = partition(s, 15, 75).unwrap();
        let p = StepFn::new(0.1, vec![(0.3, 0.4), (0.6, 0.7), (0.8, 0.9)]).unwrap();
        let sh = sample_shocks(&ThresholdDist::direct(p.clone()), s.nodes(), 2).unwrap();
        let a = largest_equilibrium(s, &sh.thresholds);
        let a = Profile::new(a).unwrap();
        let gaps = cube_best_response_gap(&part, &sh, &p, &a, 0.1, 0.02, DEFAULT_D).unwrap();
        let good: Vec<f64> = gaps.iter().flatten().copied().collect();
        assert!(!good.is_empty());
        assert!(good.iter().all(|&g| g >= 0.0), "{good:?}");
    }

    #[test]
    fn report_marks_extraordinary_cubes_inactive() {
        let s = spec(24, 2);
        let g = Network::lattice(s).unwrap();
        let part = partition(s, 2, 8).unwrap();
        let p = StepFn::new(0.1, vec![(0.5, 0.6)]).unwrap();
        let mut t = sample_shocks(&ThresholdDist::direct(p.clone()), 576, 9).unwrap().thresholds;
        for i in part.small_nodes(0) {
            t[i] = f64::INFINITY;
        }
        let sh = shocks(t);
        let eq = extremal_equilibria(&g, &sh).unwrap();
        let report = CubeReport::new(&part, &sh, &p, &eq.largest, 0.2).unwrap();
        assert!(report.rows[0].extraordinary);
        for row in &report.rows {
            assert!((0.0..=1.0).contains(&row.a_c) && (0.0..=1.0).contains(&row.beta_c));
            if row.extraordinary {
                assert_eq!(row.a_c, 0.0);
            }
        }
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("cube_x,cube_y,a_c,beta_c,bad,extraordinary"));
        assert_eq!(lines.count(), 144);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0,0,"));
    }
}
