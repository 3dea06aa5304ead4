//! Robust neighbourhoods, robust-expander certification, Hamilton path search
//! and short connecting paths.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{words_for, Graph, VertexSet};

pub const DEFAULT_BUDGET: u64 = 10_000_000;
const SAMPLE_SEED: u64 = 0x5eed_0b57;
const SAMPLES: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonError {
    #[error("no Hamilton path ({}, {nodes} nodes)", if *exhausted { "search exhausted" } else { "budget hit" })]
    NotFound { exhausted: bool, nodes: u64 },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("no perfect matching")]
    NoMatching,
    #[error("endpoints are disconnected")]
    Disconnected,
    #[error("shortest path has length {len} > {bound}")]
    TooLong { len: usize, bound: usize },
}

impl HamiltonError {
    pub fn budget_hit(&self) -> bool {
        matches!(self, HamiltonError::NotFound { exhausted: false, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustParams {
    pub nu: f64,
    pub tau: f64,
}

impl RobustParams {
    pub fn new(nu: f64, tau: f64) -> Option<Self> {
        (0.0 < nu && nu <= tau && tau < 1.0).then_some(RobustParams { nu, tau })
    }
}

/// Ordered vertex list; consecutive vertices adjacent in the host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathResult {
    pub vertices: Vec<usize>,
}

impl PathResult {
    pub fn len_edges(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn verify(&self, g: &Graph) -> Result<(), String> {
        let mut seen = VertexSet::new(g.n());
        for &v in &self.vertices {
            if v >= g.n() || !seen.insert(v) {
                return Err(format!("vertex {v} repeated or out of range"));
            }
        }
        for w in self.vertices.windows(2) {
            if !g.has_edge(w[0], w[1]) {
                return Err(format!("{}-{} is not an edge", w[0], w[1]));
            }
        }
        Ok(())
    }

    pub fn set(&self, n: usize) -> VertexSet {
        VertexSet::from_iter(n, self.vertices.iter().copied())
    }
}

fn threshold(nu: f64, n: usize) -> usize {
    (nu * n as f64 - 1e-9).ceil().max(0.0) as usize
}

/// { v : |N(v) ∩ S| ≥ νn }.
pub fn robust_neighborhood(g: &Graph, s: &VertexSet, nu: f64) -> VertexSet {
    let k = threshold(nu, g.n());
    VertexSet::from_iter(g.n(), (0..g.n()).filter(|&v| g.degree_into(v, s) >= k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustVerdict {
    pub expander: bool,
    pub violator: Option<VertexSet>,
    pub exhaustive: bool,
    pub checked: usize,
}

fn size_range(n: usize, tau: f64) -> (usize, usize) {
    let lo = (tau * n as f64 - 1e-9).ceil() as usize;
    let hi = ((1.0 - tau) * n as f64 + 1e-9).floor() as usize;
    (lo.max(1), hi)
}

/// Deficit |S| + νn − |RN(S)| if S violates expansion.
pub fn expansion_deficit(g: &Graph, s: &VertexSet, p: RobustParams) -> Option<f64> {
    let rn = robust_neighborhood(g, s, p.nu).len() as f64;
    let need = s.len() as f64 + p.nu * g.n() as f64;
    (rn + 1e-9 < need).then_some(need - rn)
}

/// Exhaustive when n ≤ 18; otherwise seeded samples (random sets and BFS balls).
/// A reported violator has the largest deficit among those seen, ties to the
/// first found.
pub fn robust_expander_check(g: &Graph, p: RobustParams) -> RobustVerdict {
    let n = g.n();
    let (lo, hi) = size_range(n, p.tau);
    let mut best: Option<(f64, VertexSet)> = None;
    let mut checked = 0;
    let consider = |s: VertexSet, best: &mut Option<(f64, VertexSet)>| {
        if let Some(d) = expansion_deficit(g, &s, p) {
            if best.as_ref().map_or(true, |(b, _)| d > *b + 1e-12) {
                *best = Some((d, s));
            }
        }
    };
    let exhaustive = n <= 18;
    if exhaustive {
        let k = threshold(p.nu, n) as u32;
        let nb: Vec<u32> = (0..n).map(|v| g.neighbor_iter(v).fold(0u32, |m, u| m | 1 << u)).collect();
        let need_extra = p.nu * n as f64;
        let mut best_mask: Option<(f64, u32)> = None;
        for mask in 0u32..(1u32 << n) {
            let sz = mask.count_ones() as usize;
            if sz < lo || sz > hi {
                continue;
            }
            checked += 1;
            let rn = nb.iter().filter(|&&m| (m & mask).count_ones() >= k).count() as f64;
            let need = sz as f64 + need_extra;
            if rn + 1e-9 < need {
                let d = need - rn;
                if best_mask.map_or(true, |(b, _)| d > b + 1e-12) {
                    best_mask = Some((d, mask));
                }
            }
        }
        best = best_mask.map(|(d, m)| (d, VertexSet::from_iter(n, (0..n).filter(|&v| m >> v & 1 == 1))));
    } else if lo <= hi {
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        for i in 0..SAMPLES {
            let size = rng.gen_range(lo..=hi);
            let s = if i % 2 == 0 {
                let mut verts: Vec<usize> = (0..n).collect();
                for j in 0..size {
                    let r = rng.gen_range(j..n);
                    verts.swap(j, r);
                }
                VertexSet::from_iter(n, verts[..size].iter().copied())
            } else {
                bfs_ball(g, rng.gen_range(0..n), size)
            };
            checked += 1;
            consider(s, &mut best);
        }
    }
    RobustVerdict { expander: best.is_none(), violator: best.map(|(_, s)| s), exhaustive, checked }
}

fn bfs_ball(g: &Graph, root: usize, size: usize) -> VertexSet {
    let n = g.n();
    let mut s = VertexSet::new(n);
    let mut q = VecDeque::from([root]);
    s.insert(root);
    while s.len() < size {
        match q.pop_front() {
            Some(v) => {
                for u in g.neighbor_iter(v) {
                    if s.len() < size && s.insert(u) {
                        q.push_back(u);
                    }
                }
            }
            None => {
                // Disconnected: continue from the least vertex outside.
                let r = s.complement().first().expect("size ≤ n");
                s.insert(r);
                q.push_back(r);
            }
        }
    }
    s
}

/// Backtracking Hamilton path engine over bitset adjacency; directed when
/// `inn` differs from `out`.
struct Engine {
    w: usize,
    out: Vec<Vec<u64>>,
    inn: Vec<Vec<u64>>,
    directed: bool,
    budget: u64,
    nodes: u64,
}

fn bit(s: &[u64], v: usize) -> bool {
    s[v / 64] >> (v % 64) & 1 == 1
}

fn set_bit(s: &mut [u64], v: usize, on: bool) {
    if on {
        s[v / 64] |= 1 << (v % 64);
    } else {
        s[v / 64] &= !(1 << (v % 64));
    }
}

fn and_pop(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as usize).sum()
}

fn ones(s: &[u64]) -> impl Iterator<Item = usize> + '_ {
    s.iter().enumerate().flat_map(|(i, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                None
            } else {
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(i * 64 + b)
            }
        })
    })
}

impl Engine {
    fn undirected(g: &Graph, budget: u64) -> Self {
        let n = g.n();
        let out: Vec<Vec<u64>> = (0..n).map(|v| g.row(v).to_vec()).collect();
        Engine { w: words_for(n), inn: out.clone(), out, directed: false, budget, nodes: 0 }
    }

    fn directed(n: usize, arcs: &[(usize, usize)], budget: u64) -> Self {
        let w = words_for(n);
        let mut out = vec![vec![0u64; w]; n];
        let mut inn = vec![vec![0u64; w]; n];
        for &(a, b) in arcs {
            set_bit(&mut out[a], b, true);
            set_bit(&mut inn[b], a, true);
        }
        Engine { w, out, inn, directed: true, budget, nodes: 0 }
    }

    fn run(&mut self, x: usize, y: usize, allowed: &[u64]) -> Result<Vec<usize>, HamiltonError> {
        let mut unv = allowed.to_vec();
        set_bit(&mut unv, x, false);
        let mut path = vec![x];
        match self.dfs(x, y, &mut unv, &mut path) {
            Some(true) => Ok(path),
            Some(false) => Err(HamiltonError::NotFound { exhausted: true, nodes: self.nodes }),
            None => Err(HamiltonError::NotFound { exhausted: false, nodes: self.nodes }),
        }
    }

    /// None when the budget runs out.
    fn dfs(&mut self, cur: usize, y: usize, unv: &mut Vec<u64>, path: &mut Vec<usize>) -> Option<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return None;
        }
        let remaining: usize = unv.iter().map(|w| w.count_ones() as usize).sum();
        if remaining == 1 {
            if bit(&self.out[cur], y) {
                path.push(y);
                return Some(true);
            }
            return Some(false);
        }
        if !self.feasible(cur, y, unv) {
            return Some(false);
        }
        let mut cands: Vec<(usize, usize)> = ones(&self.out[cur])
            .filter(|&v| v != y && bit(unv, v))
            .map(|v| (and_pop(&self.out[v], unv), v))
            .collect();
        cands.sort();
        for (_, v) in cands {
            set_bit(unv, v, false);
            path.push(v);
            match self.dfs(v, y, unv, path) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            path.pop();
            set_bit(unv, v, true);
        }
        Some(false)
    }

    /// Degree and connectivity pruning on the unvisited vertices plus `cur`.
    fn feasible(&self, cur: usize, y: usize, unv: &[u64]) -> bool {
        let mut avail = unv.to_vec();
        set_bit(&mut avail, cur, true);
        for v in ones(unv) {
            let pred = and_pop(&self.inn[v], &avail);
            if v == y {
                if pred == 0 {
                    return false;
                }
                continue;
            }
            let succ = and_pop(&self.out[v], unv);
            if pred == 0 || succ == 0 || (!self.directed && pred < 2) {
                return false;
            }
        }
        // Weak connectivity of avail.
        let mut seen = vec![0u64; self.w];
        set_bit(&mut seen, cur, true);
        let mut stack = vec![cur];
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for i in 0..self.w {
                let mut fresh = (self.out[v][i] | self.inn[v][i]) & avail[i] & !seen[i];
                seen[i] |= fresh;
                while fresh != 0 {
                    let b = fresh.trailing_zeros() as usize;
                    fresh &= fresh - 1;
                    stack.push(i * 64 + b);
                    count += 1;
                }
            }
        }
        count == avail.iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }
}

/// Hamilton path of G[allowed] from x to y.
pub fn hamilton_path_within(
    g: &Graph,
    x: usize,
    y: usize,
    allowed: &VertexSet,
    budget: u64,
) -> Result<PathResult, HamiltonError> {
    if x == y {
        return Err(HamiltonError::Precondition("x = y".into()));
    }
    if !allowed.contains(x) || !allowed.contains(y) {
        return Err(HamiltonError::Precondition("endpoint outside the allowed set".into()));
    }
    let sub = g.restrict(allowed);
    if let Some((a, b)) = sub.two_coloring(allowed) {
        if sub.is_connected_on(allowed) {
            if a.len() != b.len() {
                return Err(HamiltonError::Precondition(format!("bipartite sides {} and {} differ", a.len(), b.len())));
            }
            if a.contains(x) == a.contains(y) {
                return Err(HamiltonError::Precondition("ends on the same side".into()));
            }
        }
    }
    let mut e = Engine::undirected(&sub, budget);
    let vertices = e.run(x, y, allowed.words())?;
    let p = PathResult { vertices };
    p.verify(g).map_err(|m| HamiltonError::Precondition(format!("engine produced an invalid path: {m}")))?;
    Ok(p)
}

/// Hamilton path of G \ W with ends x and y.
pub fn hamilton_path(g: &Graph, x: usize, y: usize, w: &VertexSet, budget: u64) -> Result<PathResult, HamiltonError> {
    if w.contains(x) || w.contains(y) {
        return Err(HamiltonError::Precondition("endpoint in W".into()));
    }
    hamilton_path_within(g, x, y, &w.complement(), budget)
}

/// Hamilton cycle of G[allowed], listed from its least vertex.
pub fn hamilton_cycle_within(g: &Graph, allowed: &VertexSet, budget: u64) -> Result<PathResult, HamiltonError> {
    let x = allowed.first().ok_or_else(|| HamiltonError::Precondition("empty vertex set".into()))?;
    if allowed.len() < 3 {
        return Err(HamiltonError::NotFound { exhausted: true, nodes: 0 });
    }
    let mut last = Err(HamiltonError::NotFound { exhausted: true, nodes: 0 });
    let mut spent = 0;
    for y in g.neighbor_iter(x).filter(|&y| allowed.contains(y)).collect::<Vec<_>>() {
        let mut sub = g.clone();
        sub.remove_edge(x, y);
        match hamilton_path_within(&sub, x, y, allowed, budget.saturating_sub(spent)) {
            Ok(p) => return Ok(p),
            Err(HamiltonError::NotFound { exhausted, nodes }) => {
                spent += nodes;
                last = Err(HamiltonError::NotFound { exhausted, nodes: spent });
                if !exhausted {
                    return last;
                }
            }
            Err(HamiltonError::Precondition(_)) => {}
            Err(e) => return Err(e),
        }
    }
    last
}

/// Hamilton path of D on 0..t from `from` to `to`.
pub fn directed_hamilton_path(
    t: usize,
    arcs: &[(usize, usize)],
    from: usize,
    to: usize,
    budget: u64,
) -> Result<Vec<usize>, HamiltonError> {
    if t == 1 {
        return Ok(vec![from]);
    }
    if from == to {
        return Err(HamiltonError::Precondition("from = to".into()));
    }
    let mut e = Engine::directed(t, arcs, budget);
    let mut all = vec![0u64; words_for(t)];
    for v in 0..t {
        set_bit(&mut all, v, true);
    }
    e.run(from, to, &all)
}

/// Hamilton x–y path of a balanced bipartite graph via a perfect matching
/// a_i b_i (a_1 = x, b_t = y) and the auxiliary digraph v_i → v_j iff
/// b_i a_j ∈ E. Perfect matchings of G − xy are enumerated until D has a
/// Hamilton path v_1 → v_t, which makes the reduction exact.
pub fn bipartite_hamilton_via_matching(g: &Graph, x: usize, y: usize, budget: u64) -> Result<PathResult, HamiltonError> {
    let all = g.vertices();
    let (mut a, mut b) = g
        .two_coloring(&all)
        .ok_or_else(|| HamiltonError::Precondition("graph is not bipartite".into()))?;
    if !g.is_connected_on(&all) {
        return Err(HamiltonError::NotFound { exhausted: true, nodes: 0 });
    }
    if !a.contains(x) {
        std::mem::swap(&mut a, &mut b);
    }
    if a.len() != b.len() {
        return Err(HamiltonError::Precondition("sides differ in size".into()));
    }
    if !b.contains(y) {
        return Err(HamiltonError::Precondition("x and y on the same side".into()));
    }
    let t = a.len();
    if t == 1 {
        return Ok(PathResult { vertices: vec![x, y] });
    }
    let mut h = g.clone();
    h.remove_edge(x, y);
    let al = a.to_vec();
    let mut en = MatchingEnum { h: &h, al: &al, used: VertexSet::new(g.n()), mate: vec![usize::MAX; g.n()], nodes: 0 };
    let mut result: Result<PathResult, HamiltonError> = Err(HamiltonError::NoMatching);
    let mut any = false;
    let mut spent = 0u64;
    en.each(0, &mut |mate: &[usize]| {
        any = true;
        // Order: a_1 = x, a_t = mate of y.
        let at = mate[y];
        let mut order: Vec<usize> = vec![x];
        order.extend(al.iter().copied().filter(|&v| v != x && v != at));
        order.push(at);
        let idx = |v: usize| order.iter().position(|&u| u == v).expect("A-vertex");
        let mut arcs = Vec::new();
        for i in 0..t {
            let bi = mate[order[i]];
            for aj in h.neighbor_iter(bi) {
                let j = idx(aj);
                if j != i {
                    arcs.push((i, j));
                }
            }
        }
        match directed_hamilton_path(t, &arcs, 0, t - 1, budget.saturating_sub(spent)) {
            Ok(vp) => {
                let mut vs = Vec::with_capacity(2 * t);
                for i in vp {
                    vs.push(order[i]);
                    vs.push(mate[order[i]]);
                }
                result = Ok(PathResult { vertices: vs });
                false
            }
            Err(HamiltonError::NotFound { exhausted, nodes }) => {
                spent += nodes;
                result = Err(HamiltonError::NotFound { exhausted, nodes: spent });
                exhausted && spent < budget
            }
            Err(e) => {
                result = Err(e);
                false
            }
        }
    });
    if !any {
        return Err(HamiltonError::NoMatching);
    }
    if let Ok(p) = &result {
        p.verify(g).map_err(|m| HamiltonError::Precondition(format!("translated path invalid: {m}")))?;
        if p.vertices.len() != g.n() || p.vertices[0] != x || *p.vertices.last().expect("nonempty") != y {
            return Err(HamiltonError::Precondition("translated path is not Hamilton x-y".into()));
        }
    }
    result
}

struct MatchingEnum<'a> {
    h: &'a Graph,
    al: &'a [usize],
    used: VertexSet,
    mate: Vec<usize>,
    nodes: u64,
}

impl MatchingEnum<'_> {
    /// Calls `f` on each perfect matching (mate array) until it returns false.
    fn each(&mut self, i: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        self.nodes += 1;
        if i == self.al.len() {
            return f(&self.mate);
        }
        let a = self.al[i];
        for b in self.h.neighbor_iter(a).collect::<Vec<_>>() {
            if self.used.contains(b) {
                continue;
            }
            self.used.insert(b);
            self.mate[a] = b;
            self.mate[b] = a;
            let go_on = self.each(i + 1, f);
            self.used.remove(b);
            self.mate[a] = usize::MAX;
            self.mate[b] = usize::MAX;
            if !go_on {
                return false;
            }
        }
        true
    }
}

/// Shortest p–q path in G[Z \ W] (only X–Y edges when sides are given),
/// required to have length at most ceil(15/δ).
pub fn robust_short_path(
    g: &Graph,
    z: &VertexSet,
    bip: Option<(&VertexSet, &VertexSet)>,
    p: usize,
    q: usize,
    w: &VertexSet,
    delta: f64,
) -> Result<PathResult, HamiltonError> {
    let allowed = z.difference(w);
    if !allowed.contains(p) || !allowed.contains(q) {
        return Err(HamiltonError::Precondition("endpoint outside Z \\ W".into()));
    }
    let n = g.n();
    let mut parent = vec![usize::MAX; n];
    parent[p] = p;
    let mut queue = VecDeque::from([p]);
    while let Some(v) = queue.pop_front() {
        if v == q {
            break;
        }
        for u in g.neighbor_iter(v) {
            if !allowed.contains(u) || parent[u] != usize::MAX {
                continue;
            }
            if let Some((x, _)) = bip {
                if x.contains(u) == x.contains(v) {
                    continue;
                }
            }
            parent[u] = v;
            queue.push_back(u);
        }
    }
    if parent[q] == usize::MAX {
        return Err(HamiltonError::Disconnected);
    }
    let mut vs = vec![q];
    let mut c = q;
    while c != p {
        c = parent[c];
        vs.push(c);
    }
    vs.reverse();
    let bound = (15.0 / delta).ceil() as usize;
    let path = PathResult { vertices: vs };
    if path.len_edges() > bound {
        return Err(HamiltonError::TooLong { len: path.len_edges(), bound });
    }
    Ok(path)
}
