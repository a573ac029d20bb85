//! Weighted undirected networks, generators and neighborhood statistics.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(M, m)` torus lattice: `M x M` nodes at spacing `1/m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub side: usize,
    pub density: usize,
}

impl LatticeSpec {
    pub fn new(side: usize, density: usize) -> Result<Self> {
        if density == 0 || side < 3 * density {
            return Err(Error::InvalidNetwork(format!(
                "lattice needs M >= 3m >= 3, got M = {side}, m = {density}"
            )));
        }
        Ok(LatticeSpec { side, density })
    }

    pub fn nodes(&self) -> usize {
        self.side * self.side
    }

    /// Side length of the torus in distance units.
    pub fn torus_length(&self) -> f64 {
        self.side as f64 / self.density as f64
    }

    /// `(row, col)` of node `i`.
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.side, i % self.side)
    }

    #[inline]
    pub fn node(&self, row: usize, col: usize) -> usize {
        row * self.side + col
    }

    /// Minimal wrap-around difference between two coordinates.
    #[inline]
    pub fn residue(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b) % self.side;
        d.min(self.side - d)
    }

    /// Torus Euclidean distance between nodes, in units of `1/m` spacing.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (ri, ci) = self.coords(i);
        let (rj, cj) = self.coords(j);
        let dr = self.residue(ri, rj) as f64;
        let dc = self.residue(ci, cj) as f64;
        (dr * dr + dc * dc).sqrt() / self.density as f64
    }

    /// Offsets `(k, l) != 0` with `k^2 + l^2 <= m^2`, row-major.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let m = self.density as i64;
        let mut out = Vec::new();
        for k in -m..=m {
            for l in -m..=m {
                if (k, l) != (0, 0) && k * k + l * l <= m * m {
                    out.push((k, l));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage<T> {
    Sparse {
        offsets: Vec<usize>,
        targets: Vec<u32>,
        weights: Vec<T>,
    },
    /// `count` disjoint complete graphs on `block` consecutive nodes, unit weights.
    Blocks { block: usize, count: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f64> {
    n: usize,
    storage: Storage<T>,
    degrees: Vec<T>,
    total_degree: T,
    sum_sq_degree: T,
    lattice: Option<LatticeSpec>,
}

pub enum Neighbors<'a, T> {
    Sparse(std::iter::Zip<std::slice::Iter<'a, u32>, std::slice::Iter<'a, T>>),
    Block {
        next: usize,
        end: usize,
        skip: usize,
    },
}

impl<T: Scalar> Iterator for Neighbors<'_, T> {
    type Item = (usize, T);

    #[inline]
    fn next(&mut self) -> Option<(usize, T)> {
        match self {
            Neighbors::Sparse(it) => it.next().map(|(&j, &w)| (j as usize, w)),
            Neighbors::Block { next, end, skip } => {
                if *next == *skip {
                    *next += 1;
                }
                if *next >= *end {
                    return None;
                }
                let j = *next;
                *next += 1;
                Some((j, T::one()))
            }
        }
    }
}

impl<T: Scalar> Network<T> {
    fn with_storage(n: usize, storage: Storage<T>, lattice: Option<LatticeSpec>) -> Self {
        let degrees: Vec<T> = match &storage {
            Storage::Sparse {
                offsets, weights, ..
            } => (0..n)
                .map(|i| {
                    weights[offsets[i]..offsets[i + 1]]
                        .iter()
                        .fold(T::zero(), |a, &w| a + w)
                })
                .collect(),
            Storage::Blocks { block, .. } => vec![T::from_usize(block - 1).unwrap(); n],
        };
        let total_degree = degrees.iter().fold(T::zero(), |a, &g| a + g);
        let sum_sq_degree = degrees.iter().fold(T::zero(), |a, &g| a + g * g);
        Network {
            n,
            storage,
            degrees,
            total_degree,
            sum_sq_degree,
            lattice,
        }
    }

    /// Unit weights between every pair of `n >= 2` nodes.
    pub fn complete_graph(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidNetwork(format!("complete graph needs n >= 2, got {n}")));
        }
        Ok(Self::with_storage(n, Storage::Blocks { block: n, count: 1 }, None))
    }

    /// Block-diagonal union of `k >= 1` copies.
    pub fn disjoint_copies(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidNetwork("need at least one copy".into()));
        }
        let storage = match &self.storage {
            Storage::Blocks { block, count } => Storage::Blocks {
                block: *block,
                count: count * k,
            },
            Storage::Sparse {
                offsets,
                targets,
                weights,
            } => {
                if self.n * k > u32::MAX as usize {
                    return Err(Error::InvalidNetwork("too many nodes".into()));
                }
                let mut o = Vec::with_capacity(self.n * k + 1);
                let mut t = Vec::with_capacity(targets.len() * k);
                let mut w = Vec::with_capacity(weights.len() * k);
                o.push(0);
                for c in 0..k {
                    let shift = (c * self.n) as u32;
                    t.extend(targets.iter().map(|&j| j + shift));
                    w.extend_from_slice(weights);
                    let base = c * targets.len();
                    o.extend(offsets[1..].iter().map(|&x| x + base));
                }
                Storage::Sparse {
                    offsets: o,
                    targets: t,
                    weights: w,
                }
            }
        };
        let lattice = if k == 1 { self.lattice } else { None };
        Ok(Self::with_storage(self.n * k, storage, lattice))
    }

    /// Unit weights between nodes at torus distance at most 1.
    pub fn lattice(spec: LatticeSpec) -> Result<Self> {
        let spec = LatticeSpec::new(spec.side, spec.density)?;
        let n = spec.nodes();
        if n > u32::MAX as usize {
            return Err(Error::InvalidNetwork("lattice too large".into()));
        }
        let m = spec.side as i64;
        let offs = spec.offsets();
        let d = offs.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(n * d);
        let mut row = Vec::with_capacity(d);
        offsets.push(0);
        for i in 0..n {
            let (r, c) = spec.coords(i);
            row.clear();
            row.extend(offs.iter().map(|&(k, l)| {
                let rr = (r as i64 + k).rem_euclid(m) as usize;
                let cc = (c as i64 + l).rem_euclid(m) as usize;
                spec.node(rr, cc) as u32
            }));
            row.sort_unstable();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        let weights = vec![T::one(); targets.len()];
        Ok(Self::with_storage(
            n,
            Storage::Sparse {
                offsets,
                targets,
                weights,
            },
            Some(spec),
        ))
    }

    /// Build from undirected edges listed once each. Zero weights are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("network"));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidNetwork("too many nodes".into()));
        }
        let mut adj: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidNetwork(format!("edge ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::InvalidNetwork(format!("self-loop at {i}")));
            }
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::InvalidNetwork(format!("bad weight {w} on ({i}, {j})")));
            }
            if w == T::zero() {
                continue;
            }
            adj[i].push((j as u32, w));
            adj[j].push((i as u32, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (i, row) in adj.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidNetwork(format!("duplicate edge at node {i}")));
            }
            if row.is_empty() {
                return Err(Error::InvalidNetwork(format!("node {i} has zero degree")));
            }
            targets.extend(row.iter().map(|e| e.0));
            weights.extend(row.iter().map(|e| e.1));
            offsets.push(targets.len());
        }
        Ok(Self::with_storage(
            n,
            Storage::Sparse {
                offsets,
                targets,
                weights,
            },
            None,
        ))
    }

    /// Node 0 joined to `leaves` leaves with unit weights.
    pub fn star(leaves: usize) -> Result<Self> {
        let edges: Vec<_> = (1..=leaves).map(|j| (0, j, T::one())).collect();
        Self::from_edges(leaves + 1, &edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn degree(&self, i: usize) -> T {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    pub fn total_degree(&self) -> T {
        self.total_degree
    }

    pub fn sum_sq_degree(&self) -> T {
        self.sum_sq_degree
    }

    pub fn lattice_spec(&self) -> Option<LatticeSpec> {
        self.lattice
    }

    /// `(block, count)` when the network is a union of complete graphs stored implicitly.
    pub fn blocks(&self) -> Option<(usize, usize)> {
        match self.storage {
            Storage::Blocks { block, count } => Some((block, count)),
            Storage::Sparse { .. } => None,
        }
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> Neighbors<'_, T> {
        match &self.storage {
            Storage::Sparse {
                offsets,
                targets,
                weights,
            } => {
                let r = offsets[i]..offsets[i + 1];
                Neighbors::Sparse(targets[r.clone()].iter().zip(weights[r].iter()))
            }
            Storage::Blocks { block, .. } => {
                let start = i / block * block;
                Neighbors::Block {
                    next: start,
                    end: start + block,
                    skip: i,
                }
            }
        }
    }

    /// Number of neighbors of `i`.
    pub fn neighbor_count(&self, i: usize) -> usize {
        match &self.storage {
            Storage::Sparse { offsets, .. } => offsets[i + 1] - offsets[i],
            Storage::Blocks { block, .. } => block - 1,
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        if i == j {
            return T::zero();
        }
        match &self.storage {
            Storage::Sparse {
                offsets,
                targets,
                weights,
            } => {
                let r = offsets[i]..offsets[i + 1];
                match targets[r.clone()].binary_search(&(j as u32)) {
                    Ok(k) => weights[r.start + k],
                    Err(_) => T::zero(),
                }
            }
            Storage::Blocks { block, .. } => {
                if i / block == j / block {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Every edge once, as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// `d(g) = max g_ij / g_i`.
    pub fn fineness(&self) -> T {
        match &self.storage {
            Storage::Blocks { block, .. } => T::one() / T::from_usize(block - 1).unwrap(),
            Storage::Sparse {
                offsets, weights, ..
            } => (0..self.n)
                .map(|i| {
                    let wmax = weights[offsets[i]..offsets[i + 1]]
                        .iter()
                        .copied()
                        .fold(T::zero(), T::max);
                    wmax / self.degrees[i]
                })
                .fold(T::zero(), T::max),
        }
    }

    /// `w(g) = max g_i / min g_i`.
    pub fn imbalance(&self) -> T {
        let max = self.degrees.iter().copied().fold(T::zero(), T::max);
        let min = self.degrees.iter().copied().fold(T::infinity(), T::min);
        max / min
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got,
            });
        }
        Ok(())
    }

    /// `sum_j g_ij x_j` accumulated in neighbor order.
    #[inline]
    pub fn neighbor_sum(&self, i: usize, x: &[T]) -> T {
        self.neighbors(i).fold(T::zero(), |acc, (j, w)| acc + w * x[j])
    }

    /// `beta_i^a = (1/g_i) sum_j g_ij a_j` for a pure profile given as 0/1 bytes.
    ///
    /// This is the reference evaluation every equilibrium test compares against.
    pub fn pure_beta(&self, i: usize, a: &[u8]) -> T {
        match &self.storage {
            Storage::Blocks { block, .. } => {
                let start = i / block * block;
                let ones = a[start..start + block].iter().filter(|&&x| x == 1).count() - a[i] as usize;
                block_beta(ones, *block)
            }
            Storage::Sparse { .. } => {
                let s = self
                    .neighbors(i)
                    .fold(T::zero(), |acc, (j, w)| if a[j] == 1 { acc + w } else { acc });
                s / self.degrees[i]
            }
        }
    }

    /// `beta^a`, the neighborhood fraction profile.
    pub fn neighborhood_fractions(&self, a: &Profile<T>) -> Result<Profile<T>> {
        self.check_len(a.len())?;
        let x = a.values();
        let out = match &self.storage {
            Storage::Blocks { block, .. } => {
                let denom = T::from_usize(block - 1).unwrap();
                let mut out = Vec::with_capacity(self.n);
                for chunk in x.chunks(*block) {
                    let s = chunk.iter().fold(T::zero(), |acc, &v| acc + v);
                    out.extend(chunk.iter().map(|&v| clamp01((s - v) / denom)));
                }
                out
            }
            Storage::Sparse { .. } => (0..self.n)
                .map(|i| clamp01(self.neighbor_sum(i, x) / self.degrees[i]))
                .collect(),
        };
        Ok(Profile(out))
    }

    /// Degree-weighted average `Av(a)`.
    pub fn weighted_average(&self, a: &Profile<T>) -> Result<T> {
        self.check_len(a.len())?;
        let s = self
            .degrees
            .iter()
            .zip(a.values())
            .fold(T::zero(), |acc, (&g, &v)| acc + g * v);
        Ok(clamp01(s / self.total_degree))
    }

    /// Weighted distance `sqrt(sum g_i^2 (beta^u_i - beta^v_i)^2 / sum g_i^2)`
    /// between the neighborhood profiles of `u` and `v`.
    pub fn profile_metric(&self, u: &Profile<T>, v: &Profile<T>) -> Result<T> {
        let bu = self.neighborhood_fractions(u)?;
        let bv = self.neighborhood_fractions(v)?;
        let s = self
            .degrees
            .iter()
            .zip(bu.values().iter().zip(bv.values()))
            .fold(T::zero(), |acc, (&g, (&x, &y))| {
                let d = x - y;
                acc + g * g * d * d
            });
        Ok((s / self.sum_sq_degree).sqrt())
    }

    /// Connected component label of every node and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        if let Storage::Blocks { block, count } = self.storage {
            return ((0..self.n).map(|i| i / block).collect(), count);
        }
        let mut label = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            queue.push_back(s);
            while let Some(i) = queue.pop_front() {
                for (j, _) in self.neighbors(i) {
                    if label[j] == usize::MAX {
                        label[j] = count;
                        queue.push_back(j);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    /// Edge-list text: a header `n <count>` followed by `i j w` lines.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for (i, j, w) in self.edges() {
            let _ = writeln!(s, "{i} {j} {w}");
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Empty("edge list"))?;
        let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["n", c] => c.parse().map_err(|_| Error::Parse {
                line: hl,
                msg: format!("bad node count {c:?}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: hl,
                    msg: "expected header `n <count>`".into(),
                })
            }
        };
        let mut edges = Vec::new();
        for (ln, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: ln,
                    msg: "expected `i j w`".into(),
                });
            }
            let bad = |what: &str| Error::Parse {
                line: ln,
                msg: format!("bad {what}"),
            };
            let i: usize = f[0].parse().map_err(|_| bad("node"))?;
            let j: usize = f[1].parse().map_err(|_| bad("node"))?;
            let w: f64 = f[2].parse().map_err(|_| bad("weight"))?;
            edges.push((i, j, T::from_f64(w).ok_or_else(|| bad("weight"))?));
        }
        Self::from_edges(n, &edges)
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

/// `beta` of an agent in a complete block seeing `ones` neighbors play 1.
#[inline]
pub fn block_beta<T: Scalar>(ones: usize, block: usize) -> T {
    T::from_usize(ones).unwrap() / T::from_usize(block - 1).unwrap()
}

fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// Per-agent actions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct Profile<T: Scalar = f64>(Vec<T>);

impl<T: Scalar> Profile<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Domain {
                what: "action",
                value: v.to_f64().unwrap_or(f64::NAN),
                domain: "[0, 1]",
            });
        }
        Ok(Profile(values))
    }

    pub fn constant(n: usize, c: T) -> Result<Self> {
        Self::new(vec![c; n])
    }

    /// Pure profile from 0/1 actions.
    pub fn from_actions(a: &[u8]) -> Self {
        Profile(a.iter().map(|&x| if x == 0 { T::zero() } else { T::one() }).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_pure(&self) -> bool {
        self.0.iter().all(|&v| v == T::zero() || v == T::one())
    }

    /// The 0/1 actions of a pure profile.
    pub fn actions(&self) -> Result<Vec<u8>> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == T::zero() {
                    Ok(0)
                } else if v == T::one() {
                    Ok(1)
                } else {
                    Err(Error::NotPure {
                        agent: i,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    })
                }
            })
            .collect()
    }

    /// Arithmetic mean of the actions.
    pub fn unweighted_average(&self) -> Result<T> {
        if self.0.is_empty() {
            return Err(Error::Empty("profile"));
        }
        let s = self.0.iter().fold(T::zero(), |a, &v| a + v);
        Ok(clamp01(s / T::from_usize(self.0.len()).unwrap()))
    }
}

/// Smallest `eta` such that every point of `a` is within `eta` of `b`.
pub fn eta_inclusion<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("set"));
    }
    Ok(a.iter()
        .map(|&x| b.iter().map(|&y| (x - y).abs()).fold(T::infinity(), T::min))
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prof(v: &[f64]) -> Profile {
        Profile::new(v.to_vec()).unwrap()
    }

    /// Connected random graph on `n` nodes: a path plus random extra edges.
    fn arb_graph() -> impl Strategy<Value = Network> {
        (2usize..9).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(0.1..3.0f64, n - 1),
                prop::collection::vec((0..n, 0..n, 0.1..3.0f64), 0..12),
            )
                .prop_map(|(n, path, extra)| {
                    let mut edges: Vec<(usize, usize, f64)> =
                        path.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
                    for (i, j, w) in extra {
                        let (i, j) = (i.min(j), i.max(j));
                        if i != j && !edges.iter().any(|e| e.0 == i && e.1 == j) {
                            edges.push((i, j, w));
                        }
                    }
                    Network::from_edges(n, &edges).unwrap()
                })
        })
    }

    fn arb_graph_and_profiles(k: usize) -> impl Strategy<Value = (Network, Vec<Profile>)> {
        arb_graph().prop_flat_map(move |g| {
            let n = g.len();
            (
                Just(g),
                prop::collection::vec(prop::collection::vec(0.0..=1.0f64, n), k)
                    .prop_map(|vs| vs.into_iter().map(|v| Profile::new(v).unwrap()).collect()),
            )
        })
    }

    #[test]
    fn complete_graph_examples() {
        let g = Network::<f64>::complete_graph(3).unwrap();
        assert_eq!(g.degrees(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.fineness(), 0.5);
        assert!((Network::<f64>::complete_graph(101).unwrap().fineness() - 0.01).abs() < 1e-15);
        let g2 = Network::<f64>::complete_graph(2).unwrap();
        assert_eq!(g2.fineness(), 1.0);
        assert_eq!(g2.edges().count(), 1);
        assert_eq!(g.imbalance(), 1.0);
        assert!(Network::<f64>::complete_graph(1).is_err());
    }

    #[test]
    fn copies_of_complete_graph() {
        let g = Network::<f64>::complete_graph(4).unwrap().disjoint_copies(3).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.components().1, 3);
        assert!(g.degrees().iter().all(|&d| d == 3.0));
        let g1 = Network::<f64>::complete_graph(4).unwrap();
        assert_eq!(g1.disjoint_copies(1).unwrap(), g1);
    }

    #[test]
    fn lattice_degrees() {
        for (side, m, deg) in [(10, 2, 12.0), (9, 1, 4.0), (20, 3, 28.0), (30, 5, 80.0)] {
            let g = Network::<f64>::lattice(LatticeSpec { side, density: m }).unwrap();
            assert!(g.degrees().iter().all(|&d| d == deg), "M={side} m={m}");
            assert_eq!(g.imbalance(), 1.0);
            assert!((g.fineness() - 1.0 / deg).abs() < 1e-15);
            for (i, j, _) in g.edges() {
                assert_eq!(g.weight(j, i), 1.0);
                assert!(g.lattice_spec().unwrap().distance(i, j) <= 1.0);
            }
        }
        assert!(Network::<f64>::lattice(LatticeSpec { side: 5, density: 2 }).is_err());
    }

    #[test]
    fn lattice_neighbors_are_exactly_the_unit_ball() {
        let spec = LatticeSpec::new(12, 2).unwrap();
        let g = Network::<f64>::lattice(spec).unwrap();
        for i in [0, 5, 77, 143] {
            let mut want: Vec<usize> = (0..spec.nodes())
                .filter(|&j| j != i && spec.distance(i, j) <= 1.0)
                .collect();
            want.sort();
            let got: Vec<usize> = g.neighbors(i).map(|e| e.0).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn star_statistics() {
        let g = Network::<f64>::star(3).unwrap();
        assert_eq!(g.fineness(), 1.0);
        assert_eq!(g.imbalance(), 3.0);
        let a = prof(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.weighted_average(&a).unwrap(), 0.5);
    }

    #[test]
    fn neighborhood_fraction_examples() {
        let g = Network::<f64>::complete_graph(2).unwrap();
        let b = g.neighborhood_fractions(&prof(&[1.0, 0.0])).unwrap();
        assert_eq!(b.values(), &[0.0, 1.0]);
        let g = Network::<f64>::complete_graph(4).unwrap();
        let b = g.neighborhood_fractions(&prof(&[1.0, 1.0, 0.0, 0.0])).unwrap();
        let want = [1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        for (x, y) in b.values().iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
        let c = g.neighborhood_fractions(&Profile::constant(4, 0.3).unwrap()).unwrap();
        assert!(c.values().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert!(g.neighborhood_fractions(&prof(&[1.0])).is_err());
    }

    #[test]
    fn unweighted_average_examples() {
        assert_eq!(prof(&[1.0, 0.0]).unweighted_average().unwrap(), 0.5);
        assert!(prof(&[]).unweighted_average().is_err());
        let g = Network::<f64>::complete_graph(5).unwrap();
        let a = prof(&[0.1, 0.9, 0.3, 0.0, 1.0]);
        assert!((g.weighted_average(&a).unwrap() - a.unweighted_average().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn metric_examples() {
        let g = Network::<f64>::lattice(LatticeSpec::new(9, 1).unwrap()).unwrap();
        let one = Profile::constant(81, 1.0).unwrap();
        let zero = Profile::constant(81, 0.0).unwrap();
        assert_eq!(g.profile_metric(&one, &one).unwrap(), 0.0);
        assert_eq!(g.profile_metric(&one, &zero).unwrap(), 1.0);
    }

    #[test]
    fn eta_inclusion_examples() {
        assert_eq!(eta_inclusion(&[0.2, 0.5], &[0.5, 0.2, 0.9]).unwrap(), 0.0);
        assert_eq!(eta_inclusion(&[0.0, 1.0], &[0.5]).unwrap(), 0.5);
        let brute = [0.1f64, 0.9]
            .iter()
            .map(|x| [0.2f64, 0.85].iter().map(|y| (x - y).abs()).fold(f64::MAX, f64::min))
            .fold(0.0, f64::max);
        assert!((eta_inclusion(&[0.1, 0.9], &[0.2, 0.85]).unwrap() - brute).abs() < 1e-15);
        assert!((brute - 0.1).abs() < 1e-12);
        assert!(eta_inclusion::<f64>(&[], &[0.1]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Network::<f64>::from_edges(4, &[(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.25), (0, 3, 0.1)]).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("n 4\n"));
        assert_eq!(Network::<f64>::from_edge_list(&text).unwrap(), g);
        let dir = std::env::temp_dir().join(format!("rucoord-edges-{}", std::process::id()));
        g.write_edge_list(&dir).unwrap();
        assert_eq!(Network::<f64>::read_edge_list(&dir).unwrap(), g);
        let _ = std::fs::remove_file(dir);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Network::<f64>::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(Network::<f64>::from_edges(2, &[(0, 1, -1.0)]).is_err());
        assert!(Network::<f64>::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).is_err());
        assert!(Network::<f64>::from_edges(3, &[(0, 1, 1.0)]).is_err());
        assert!(Network::<f64>::from_edge_list("n 2\n0 1\n").is_err());
        assert!(Network::<f64>::from_edge_list("m 2\n").is_err());
    }

    #[test]
    fn single_precision_statistics() {
        let g = Network::<f32>::lattice(LatticeSpec::new(10, 2).unwrap()).unwrap();
        assert_eq!(g.fineness(), 1.0f32 / 12.0);
        let a = Profile::<f32>::constant(100, 0.25).unwrap();
        assert!((g.weighted_average(&a).unwrap() - 0.25).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn cached_aggregates((g, _) in arb_graph_and_profiles(0)) {
            let mut total = 0.0;
            let mut sq = 0.0;
            for i in 0..g.len() {
                let d: f64 = g.neighbors(i).map(|e| e.1).sum();
                prop_assert!((d - g.degree(i)).abs() <= 1e-12 * d);
                total += d;
                sq += d * d;
            }
            prop_assert!((total - g.total_degree()).abs() <= 1e-12 * total);
            prop_assert!((sq - g.sum_sq_degree()).abs() <= 1e-12 * sq);
            for (i, j, w) in g.edges() {
                prop_assert_eq!(g.weight(j, i), w);
            }
        }

        #[test]
        fn averages_identity((g, ps) in arb_graph_and_profiles(1)) {
            let b = g.neighborhood_fractions(&ps[0]).unwrap();
            let lhs = g.weighted_average(&ps[0]).unwrap();
            let rhs = g.weighted_average(&b).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn copies_keep_statistics((g, _) in arb_graph_and_profiles(0), k in 1usize..4) {
            let c = g.disjoint_copies(k).unwrap();
            prop_assert_eq!(c.len(), g.len() * k);
            prop_assert_eq!(c.imbalance(), g.imbalance());
            prop_assert_eq!(c.fineness(), g.fineness());
        }

        #[test]
        fn metric_axioms((g, ps) in arb_graph_and_profiles(3)) {
            let d = |a: &Profile, b: &Profile| g.profile_metric(a, b).unwrap();
            let (u, v, w) = (&ps[0], &ps[1], &ps[2]);
            prop_assert!(d(u, v) >= 0.0);
            prop_assert!((d(u, v) - d(v, u)).abs() < 1e-12);
            prop_assert!(d(u, w) <= d(u, v) + d(v, w) + 1e-12);
            prop_assert!(d(u, u) == 0.0);
        }

        #[test]
        fn average_gap_bounded_by_metric((g, ps) in arb_graph_and_profiles(2)) {
            let gap = (g.weighted_average(&ps[0]).unwrap() - g.weighted_average(&ps[1]).unwrap()).abs();
            let bound = g.imbalance().sqrt() * g.profile_metric(&ps[0], &ps[1]).unwrap();
            prop_assert!(gap <= bound + 1e-12);
        }

        #[test]
        fn lipschitz_response((g, ps) in arb_graph_and_profiles(2), gamma in 0.0..0.95f64, c in 0.0..0.05f64) {
            // Staircase of gamma * x + c: averages of P(a) move no more than averages of a.
            let p = crate::stepfn::step_approximate_on_grid(
                |x: f64| gamma * x + c, 1e-3, crate::stepfn::Direction::Below, 1 << 12).unwrap();
            let map = |a: &Profile| Profile::new(a.values().iter().map(|&x| p.eval(x).unwrap()).collect()).unwrap();
            let lhs = (g.weighted_average(&map(&ps[0])).unwrap() - g.weighted_average(&map(&ps[1])).unwrap()).abs();
            let rhs = (g.weighted_average(&ps[0]).unwrap() - g.weighted_average(&ps[1]).unwrap()).abs();
            prop_assert!(lhs <= rhs + 2e-3);
        }
    }
}
