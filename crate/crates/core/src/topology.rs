//! Undirected simple graphs and well-connectedness diagnostics.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adj: Vec<Vec<usize>>,
}

impl Topology {
    pub fn empty(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    /// Builds from an edge list, dropping self-loops and duplicates.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        Self { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    pub fn with_edge(&self, u: usize, v: usize) -> Self {
        let mut g = self.clone();
        if u != v && !g.has_edge(u, v) {
            let pu = g.adj[u].binary_search(&v).unwrap_err();
            g.adj[u].insert(pu, v);
            let pv = g.adj[v].binary_search(&u).unwrap_err();
            g.adj[v].insert(pv, u);
        }
        g
    }

    /// No self-loops, no repeated neighbours, symmetric adjacency.
    pub fn is_simple(&self) -> bool {
        self.adj.iter().enumerate().all(|(u, a)| {
            a.windows(2).all(|w| w[0] < w[1]) && a.iter().all(|&v| v != u && v < self.n() && self.has_edge(v, u))
        })
    }

    /// `u v` per line, 1-indexed, each edge once.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, a) in self.adj.iter().enumerate() {
            for &v in a.iter().filter(|&&v| v > u) {
                let _ = writeln!(out, "{} {}", u + 1, v + 1);
            }
        }
        out
    }
}

pub fn gen_clique(n: usize) -> Topology {
    Topology { adj: (0..n).map(|u| (0..n).filter(|&v| v != u).collect()).collect() }
}

pub fn gen_ring(n: usize) -> Topology {
    if n < 2 {
        return Topology::empty(n);
    }
    Topology::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// m×m torus.
pub fn gen_toric_grid(m: usize) -> Topology {
    let n = m * m;
    let id = |r: usize, c: usize| (r % m) * m + (c % m);
    let mut edges = Vec::with_capacity(2 * n);
    for r in 0..m {
        for c in 0..m {
            edges.push((id(r, c), id(r, c + 1)));
            edges.push((id(r, c), id(r + 1, c)));
        }
    }
    Topology::from_edges(n, edges)
}

/// Erdős–Rényi G(n, p), generated with geometric skips over the pair sequence.
pub fn gen_errg<R: RngCore + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Topology> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("edge probability must lie in [0,1], got {p}"));
    }
    if p == 0.0 || n < 2 {
        return Ok(Topology::empty(n));
    }
    if p == 1.0 {
        return Ok(gen_clique(n));
    }
    let lq = (1.0 - p).ln();
    let mut edges = Vec::new();
    let (mut v, mut w): (usize, i64) = (1, -1);
    while v < n {
        let u: f64 = rng.random();
        w += 1 + ((1.0 - u).ln() / lq).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((v, w as usize));
        }
    }
    Ok(Topology::from_edges(n, edges))
}

/// Uniform half-edge pairing, then erase self-loops and repeated edges.
pub fn gen_erased_regular<R: RngCore + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Topology> {
    if (n * d) % 2 == 1 {
        return invalid(format!("N*d must be even, got N={n} d={d}"));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    stubs.shuffle(rng);
    Ok(Topology::from_edges(n, stubs.chunks_exact(2).map(|c| (c[0], c[1]))))
}

fn torus_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = (a.0 - b.0).abs();
    let dy = (a.1 - b.1).abs();
    let dx = dx.min(1.0 - dx);
    let dy = dy.min(1.0 - dy);
    (dx * dx + dy * dy).sqrt()
}

/// Random geometric graph on the unit torus with the given points.
pub fn rgg_from_points(points: &[(f64, f64)], r: f64) -> Topology {
    let n = points.len();
    let cells = ((1.0 / r).floor() as usize).clamp(1, 1024);
    let cell_of = |x: f64| ((x * cells as f64) as usize).min(cells - 1);
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    for (i, &(x, y)) in points.iter().enumerate() {
        grid[cell_of(x) * cells + cell_of(y)].push(i);
    }
    let mut edges = Vec::new();
    let span: Vec<usize> = if cells < 3 { (0..cells).collect() } else { vec![cells - 1, 0, 1] };
    for (i, &(x, y)) in points.iter().enumerate() {
        let (cx, cy) = (cell_of(x), cell_of(y));
        for &ox in &span {
            for &oy in &span {
                let (gx, gy) = if cells < 3 { (ox, oy) } else { ((cx + ox) % cells, (cy + oy) % cells) };
                for &j in &grid[gx * cells + gy] {
                    if j > i && torus_dist(points[i], points[j]) < r {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    Topology::from_edges(n, edges)
}

pub fn gen_rgg<R: RngCore + ?Sized>(n: usize, r: f64, rng: &mut R) -> Result<Topology> {
    if !(r > 0.0 && r <= 0.5) {
        return invalid(format!("radius must lie in (0, 0.5], got {r}"));
    }
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    Ok(rgg_from_points(&pts, r))
}

/// Complete bipartite graph with parts ⌈cN⌉ and N-⌈cN⌉.
pub fn gen_complete_bipartite(n: usize, c: f64) -> Result<Topology> {
    if !(c > 0.0 && c < 0.5) {
        return invalid(format!("c must lie in (0, 1/2), got {c}"));
    }
    let a = (c * n as f64).ceil() as usize;
    let mut edges = Vec::with_capacity(a * (n - a));
    for u in 0..a {
        for v in a..n {
            edges.push((u, v));
        }
    }
    Ok(Topology::from_edges(n, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisScale {
    /// |U| ≥ εN
    Linear,
    /// |U| ≥ ε√N
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisMode {
    Exact,
    /// Max over `k` random subsets: a lower bound on the exact value.
    Sampled(usize),
}

pub const EXACT_DIS_MAX_N: usize = 24;

fn dis_size(n: usize, eps: f64, scale: DisScale) -> usize {
    let base = match scale {
        DisScale::Linear => n as f64,
        DisScale::Sqrt => (n as f64).sqrt(),
    };
    ((eps * base).ceil().max(1.0) as usize).min(n)
}

/// Largest number of vertices left uncovered by the closed neighbourhood of
/// a large subset. Uncovered counts only shrink as U grows, so it suffices
/// to scan subsets of exactly the minimum admissible size.
pub fn dis<R: RngCore + ?Sized>(g: &Topology, eps: f64, scale: DisScale, mode: DisMode, rng: &mut R) -> Result<usize> {
    let n = g.n();
    if !(eps > 0.0) {
        return invalid("epsilon must be positive");
    }
    if n == 0 {
        return Ok(0);
    }
    let t = dis_size(n, eps, scale);
    match mode {
        DisMode::Exact => {
            if n > EXACT_DIS_MAX_N {
                return Err(Error::SizeLimit(format!("exact dis limited to N <= {EXACT_DIS_MAX_N}, got {n}")));
            }
            let closed: Vec<u32> =
                (0..n).map(|v| g.neighbors(v).iter().fold(1u32 << v, |m, &u| m | (1 << u))).collect();
            let limit: u64 = 1 << n;
            let mut best = 0;
            let mut set: u64 = (1 << t) - 1;
            while set < limit {
                let mut cover = 0u32;
                let mut bits = set;
                while bits != 0 {
                    let v = bits.trailing_zeros() as usize;
                    cover |= closed[v];
                    bits &= bits - 1;
                }
                best = best.max(n - cover.count_ones() as usize);
                // next subset with the same popcount
                let c = set & set.wrapping_neg();
                let r = set + c;
                set = (((r ^ set) >> 2) / c) | r;
            }
            Ok(best)
        }
        DisMode::Sampled(k) => {
            let mut best = 0;
            let mut covered = vec![false; n];
            for _ in 0..k {
                covered.iter_mut().for_each(|c| *c = false);
                for v in rand::seq::index::sample(rng, n, t) {
                    covered[v] = true;
                    for &u in g.neighbors(v) {
                        covered[u] = true;
                    }
                }
                best = best.max(covered.iter().filter(|&&c| !c).count());
            }
            Ok(best)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub d_min: usize,
    pub d_max: usize,
    /// max_i |Σ_{j∈N(i)} 1/D_j − 1|
    pub reg_gap: f64,
}

pub fn degree_regularity(g: &Topology) -> DegreeStats {
    let n = g.n();
    let d_min = (0..n).map(|v| g.degree(v)).min().unwrap_or(0);
    let d_max = (0..n).map(|v| g.degree(v)).max().unwrap_or(0);
    let reg_gap = (0..n)
        .map(|i| {
            let s: f64 = g.neighbors(i).iter().map(|&j| 1.0 / g.degree(j) as f64).sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max);
    DegreeStats { d_min, d_max, reg_gap }
}
