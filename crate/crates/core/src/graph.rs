//! Dense simple graphs with bit-row adjacency.
//!
//! Every count used downstream (degrees into a set, edges between two sets,
//! cut sizes) is a sum of population counts over `u64` words.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("n*d = {n}*{d} is odd, no {d}-regular graph on {n} vertices")]
    Parity { n: usize, d: usize },
    #[error("degree {d} is not below vertex count {n}")]
    Infeasible { n: usize, d: usize },
    #[error("degenerate cut: one side is empty")]
    DegenerateCut,
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("self-loop at vertex {0}")]
    Loop(usize),
    #[error("duplicate edge {0}-{1}")]
    Duplicate(usize, usize),
    #[error("vertex {v} out of range for n = {n}")]
    OutOfRange { v: usize, n: usize },
}

pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

/// A subset of `0..n` stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VertexSet {
    n: usize,
    words: Vec<u64>,
}

impl VertexSet {
    pub fn new(n: usize) -> Self {
        VertexSet { n, words: vec![0; words_for(n)] }
    }

    pub fn full(n: usize) -> Self {
        let mut s = VertexSet::new(n);
        for v in 0..n {
            s.insert(v);
        }
        s
    }

    pub fn from_iter<I: IntoIterator<Item = usize>>(n: usize, it: I) -> Self {
        let mut s = VertexSet::new(n);
        for v in it {
            s.insert(v);
        }
        s
    }

    pub fn from_words(n: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), words_for(n));
        let mut s = VertexSet { n, words };
        s.mask_tail();
        s
    }

    fn mask_tail(&mut self) {
        let r = self.n % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    /// Size of the ground set `0..n`.
    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn insert(&mut self, v: usize) -> bool {
        assert!(v < self.n, "vertex {v} out of range {}", self.n);
        let (w, b) = (v / 64, v % 64);
        let had = self.words[w] >> b & 1 == 1;
        self.words[w] |= 1 << b;
        !had
    }

    pub fn remove(&mut self, v: usize) -> bool {
        if v >= self.n {
            return false;
        }
        let (w, b) = (v / 64, v % 64);
        let had = self.words[w] >> b & 1 == 1;
        self.words[w] &= !(1 << b);
        had
    }

    #[inline]
    pub fn contains(&self, v: usize) -> bool {
        v < self.n && self.words[v / 64] >> (v % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| BitIter { w, base: i * 64 })
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &VertexSet) -> VertexSet {
        let mut s = self.clone();
        s.intersect_with(other);
        s
    }

    pub fn difference(&self, other: &VertexSet) -> VertexSet {
        let mut s = self.clone();
        s.difference_with(other);
        s
    }

    pub fn union_with(&mut self, other: &VertexSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn intersect_with(&mut self, other: &VertexSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    pub fn difference_with(&mut self, other: &VertexSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !*b;
        }
    }

    pub fn complement(&self) -> VertexSet {
        let mut s = VertexSet { n: self.n, words: self.words.iter().map(|w| !w).collect() };
        s.mask_tail();
        s
    }

    pub fn intersection_len(&self, other: &VertexSet) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }
}

struct BitIter {
    w: u64,
    base: usize,
}

impl Iterator for BitIter {
    type Item = usize;
    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.w == 0 {
            return None;
        }
        let b = self.w.trailing_zeros() as usize;
        self.w &= self.w - 1;
        Some(self.base + b)
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for VertexSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

#[inline]
pub(crate) fn and_count(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as usize).sum()
}

/// Undirected simple graph on `0..n`.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    wpr: usize,
    rows: Vec<u64>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, m={})", self.n, self.edge_count())
    }
}

impl Graph {
    pub fn new(n: usize) -> Self {
        let wpr = words_for(n);
        Graph { n, wpr, rows: vec![0; n * wpr] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Graph::new(n);
        for &(u, v) in edges {
            g.check_vertex(u)?;
            g.check_vertex(v)?;
            if u == v {
                return Err(GraphError::Loop(u));
            }
            if !g.add_edge(u, v) {
                return Err(GraphError::Duplicate(u.min(v), u.max(v)));
            }
        }
        Ok(g)
    }

    fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.n {
            Err(GraphError::OutOfRange { v, n: self.n })
        } else {
            Ok(())
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> VertexSet {
        VertexSet::full(self.n)
    }

    pub fn empty_set(&self) -> VertexSet {
        VertexSet::new(self.n)
    }

    #[inline]
    pub fn row(&self, v: usize) -> &[u64] {
        &self.rows[v * self.wpr..(v + 1) * self.wpr]
    }

    /// Adds `uv`; returns false if it was already present. Panics on loops.
    pub fn add_edge(&mut self, u: usize, v: usize) -> bool {
        assert!(u != v, "self-loop at {u}");
        assert!(u < self.n && v < self.n);
        if self.has_edge(u, v) {
            return false;
        }
        self.rows[u * self.wpr + v / 64] |= 1 << (v % 64);
        self.rows[v * self.wpr + u / 64] |= 1 << (u % 64);
        true
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) -> bool {
        if !self.has_edge(u, v) {
            return false;
        }
        self.rows[u * self.wpr + v / 64] &= !(1 << (v % 64));
        self.rows[v * self.wpr + u / 64] &= !(1 << (u % 64));
        true
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.rows[u * self.wpr + v / 64] >> (v % 64) & 1 == 1
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row(v).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// d(v, S): neighbours of `v` inside `s`.
    #[inline]
    pub fn degree_into(&self, v: usize, s: &VertexSet) -> usize {
        and_count(self.row(v), s.words())
    }

    pub fn neighbors(&self, v: usize) -> VertexSet {
        VertexSet::from_words(self.n, self.row(v).to_vec())
    }

    pub fn neighbor_iter(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(v).iter().enumerate().flat_map(|(i, &w)| BitIter { w, base: i * 64 })
    }

    /// Common neighbourhood of all vertices in `set`, restricted to `within`.
    pub fn common_neighbors<'a, I: IntoIterator<Item = &'a usize>>(&self, set: I, within: &VertexSet) -> VertexSet {
        let mut c = within.clone();
        for &v in set {
            for (a, b) in c.words.iter_mut().zip(self.row(v)) {
                *a &= *b;
            }
        }
        c
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).sum::<usize>() / 2
    }

    /// All edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in self.neighbor_iter(u) {
                if v > u {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Number of ordered pairs `(x, y) ∈ X × Y` that are edges. For disjoint
    /// sets this is e(X, Y); for `X = Y` it is 2e(X).
    pub fn pair_count(&self, x: &VertexSet, y: &VertexSet) -> usize {
        x.iter().map(|v| self.degree_into(v, y)).sum()
    }

    /// e(X, Y) for disjoint sets.
    pub fn e_between(&self, x: &VertexSet, y: &VertexSet) -> usize {
        debug_assert!(x.is_disjoint(y));
        self.pair_count(x, y)
    }

    /// e(X): edges with both ends in `x`.
    pub fn e_within(&self, x: &VertexSet) -> usize {
        self.pair_count(x, x) / 2
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).min().unwrap_or(0)
    }

    /// Maximum of d(v, S) over v ∈ S.
    pub fn max_degree_in(&self, s: &VertexSet) -> usize {
        s.iter().map(|v| self.degree_into(v, s)).max().unwrap_or(0)
    }

    pub fn min_degree_in(&self, s: &VertexSet) -> usize {
        s.iter().map(|v| self.degree_into(v, s)).min().unwrap_or(0)
    }

    /// `Some(d)` if every vertex has degree `d`.
    pub fn regular_degree(&self) -> Option<usize> {
        if self.n == 0 {
            return Some(0);
        }
        let d = self.degree(0);
        (1..self.n).all(|v| self.degree(v) == d).then_some(d)
    }

    /// Subgraph on the same vertex ids keeping only edges inside `s`.
    pub fn restrict(&self, s: &VertexSet) -> Graph {
        let mut g = Graph::new(self.n);
        for v in s.iter() {
            let r = &mut g.rows[v * self.wpr..(v + 1) * self.wpr];
            for (dst, (a, b)) in r.iter_mut().zip(self.row(v).iter().zip(s.words())) {
                *dst = a & b;
            }
        }
        g
    }

    /// Induced subgraph relabelled to `0..|s|`; also returns the old ids.
    pub fn induced(&self, s: &VertexSet) -> (Graph, Vec<usize>) {
        let ids = s.to_vec();
        let mut pos = vec![usize::MAX; self.n];
        for (i, &v) in ids.iter().enumerate() {
            pos[v] = i;
        }
        let mut g = Graph::new(ids.len());
        for (i, &v) in ids.iter().enumerate() {
            for u in self.neighbor_iter(v) {
                let j = pos[u];
                if j != usize::MAX && j > i {
                    g.add_edge(i, j);
                }
            }
        }
        (g, ids)
    }

    /// Connected components of G[s], each as a vertex set, ordered by least vertex.
    pub fn components(&self, s: &VertexSet) -> Vec<VertexSet> {
        let mut left = s.clone();
        let mut out = Vec::new();
        while let Some(r) = left.first() {
            let comp = self.reach(r, &left);
            left.difference_with(&comp);
            out.push(comp);
        }
        out
    }

    /// Vertices of `allowed` reachable from `r` inside G[allowed].
    pub fn reach(&self, r: usize, allowed: &VertexSet) -> VertexSet {
        let mut seen = VertexSet::new(self.n);
        seen.insert(r);
        let mut frontier = seen.clone();
        loop {
            let mut next = VertexSet::new(self.n);
            for v in frontier.iter() {
                for (a, b) in next.words.iter_mut().zip(self.row(v)) {
                    *a |= *b;
                }
            }
            next.intersect_with(allowed);
            next.difference_with(&seen);
            if next.is_empty() {
                return seen;
            }
            seen.union_with(&next);
            frontier = next;
        }
    }

    pub fn is_connected_on(&self, s: &VertexSet) -> bool {
        match s.first() {
            None => true,
            Some(r) => self.reach(r, s).len() == s.len(),
        }
    }

    /// A proper 2-colouring of G[s] if one exists.
    pub fn two_coloring(&self, s: &VertexSet) -> Option<(VertexSet, VertexSet)> {
        let mut side = vec![u8::MAX; self.n];
        let mut x = VertexSet::new(self.n);
        let mut y = VertexSet::new(self.n);
        for r in s.iter() {
            if side[r] != u8::MAX {
                continue;
            }
            side[r] = 0;
            x.insert(r);
            let mut q = VecDeque::from([r]);
            while let Some(v) = q.pop_front() {
                for u in self.neighbor_iter(v) {
                    if !s.contains(u) {
                        continue;
                    }
                    if side[u] == u8::MAX {
                        side[u] = 1 - side[v];
                        if side[u] == 0 { x.insert(u) } else { y.insert(u) };
                        q.push_back(u);
                    } else if side[u] == side[v] {
                        return None;
                    }
                }
            }
        }
        Some((x, y))
    }

    /// Shortest path from `s` to `t` whose vertices all lie in `allowed`
    /// (which must contain both ends).
    pub fn shortest_path(&self, s: usize, t: usize, allowed: &VertexSet) -> Option<Vec<usize>> {
        if !allowed.contains(s) || !allowed.contains(t) {
            return None;
        }
        let mut parent = vec![usize::MAX; self.n];
        parent[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            if v == t {
                let mut path = vec![t];
                let mut c = t;
                while c != s {
                    c = parent[c];
                    path.push(c);
                }
                path.reverse();
                return Some(path);
            }
            for u in self.neighbor_iter(v) {
                if allowed.contains(u) && parent[u] == usize::MAX {
                    parent[u] = v;
                    q.push_back(u);
                }
            }
        }
        None
    }

    /// Complement graph.
    pub fn complement(&self) -> Graph {
        let mut g = Graph::new(self.n);
        for u in 0..self.n {
            for v in u + 1..self.n {
                if !self.has_edge(u, v) {
                    g.add_edge(u, v);
                }
            }
        }
        g
    }
}

/// Cut statistics for {S, ∁S}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutStats {
    pub cross_edges: usize,
    pub sparsity: f64,
    pub side: usize,
    pub other: usize,
}

impl CutStats {
    /// cross ≤ alpha·|S|·|∁S|.
    pub fn is_sparse(&self, alpha: f64) -> bool {
        self.cross_edges as f64 <= alpha * (self.side * self.other) as f64
    }
}

pub fn cut_stats(g: &Graph, s: &VertexSet) -> Result<CutStats, GraphError> {
    let k = s.len();
    if k == 0 || k == g.n() {
        return Err(GraphError::DegenerateCut);
    }
    let comp = s.complement();
    let cross = g.e_between(s, &comp);
    let other = g.n() - k;
    Ok(CutStats { cross_edges: cross, sparsity: cross as f64 / (k * other) as f64, side: k, other })
}

/// e(X) + e(∁X): edges that must go for {X, ∁X} to be a bipartition.
pub fn bipartite_distance(g: &Graph, x: &VertexSet) -> usize {
    g.e_within(x) + g.e_within(&x.complement())
}

/// Random simple d-regular graph on n vertices.
///
/// Configuration model with up to 100 restarts; the pairing with the fewest
/// loops and multi-edges is then repaired by double-edge switches. Degrees
/// above n/2 are produced as complements of the (n−1−d)-regular case.
pub fn gen_regular(n: usize, d: usize, seed: u64) -> Result<Graph, GraphError> {
    if d >= n {
        return Err(GraphError::Infeasible { n, d });
    }
    if (n * d) % 2 == 1 {
        return Err(GraphError::Parity { n, d });
    }
    if 2 * d > n {
        return Ok(gen_regular(n, n - 1 - d, seed)?.complement());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if d == 0 {
        return Ok(Graph::new(n));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut best: Option<(usize, Vec<(usize, usize)>)> = None;
    for _ in 0..100 {
        stubs.shuffle(&mut rng);
        let pairs: Vec<(usize, usize)> = stubs.chunks(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect();
        let defects = pairing_defects(n, &pairs);
        if best.as_ref().is_none_or(|(b, _)| defects < *b) {
            best = Some((defects, pairs));
        }
        if defects == 0 {
            break;
        }
    }
    let (_, mut pairs) = best.expect("at least one pairing");
    repair_pairing(n, &mut pairs, &mut rng);
    let g = Graph::from_edges(n, &pairs).expect("repaired pairing is simple");
    debug_assert_eq!(g.regular_degree(), Some(d));
    Ok(g)
}

fn pairing_defects(n: usize, pairs: &[(usize, usize)]) -> usize {
    let mut mult = vec![0u16; n * n];
    let mut bad = 0;
    for &(u, v) in pairs {
        if u == v {
            bad += 1;
        } else {
            if mult[u * n + v] > 0 {
                bad += 1;
            }
            mult[u * n + v] += 1;
        }
    }
    bad
}

fn repair_pairing(n: usize, pairs: &mut [(usize, usize)], rng: &mut ChaCha8Rng) {
    let key = |u: usize, v: usize| u.min(v) * n + u.max(v);
    let mut mult = vec![0u16; n * n];
    for &(u, v) in pairs.iter() {
        mult[key(u, v)] += 1;
    }
    let m = pairs.len();
    loop {
        let bad: Vec<usize> =
            (0..m).filter(|&i| pairs[i].0 == pairs[i].1 || mult[key(pairs[i].0, pairs[i].1)] > 1).collect();
        if bad.is_empty() {
            return;
        }
        for &i in &bad {
            let (a, b) = pairs[i];
            if a != b && mult[key(a, b)] <= 1 {
                continue;
            }
            for _ in 0..10 * m {
                let j = rng.gen_range(0..m);
                if j == i {
                    continue;
                }
                let (mut c, mut e) = pairs[j];
                if rng.gen_bool(0.5) {
                    std::mem::swap(&mut c, &mut e);
                }
                if a == c || b == e || key(a, c) == key(b, e) {
                    continue;
                }
                if mult[key(a, c)] > 0 || mult[key(b, e)] > 0 {
                    continue;
                }
                mult[key(a, b)] -= 1;
                mult[key(c, e)] -= 1;
                mult[key(a, c)] += 1;
                mult[key(b, e)] += 1;
                pairs[i] = (a.min(c), a.max(c));
                pairs[j] = (b.min(e), b.max(e));
                break;
            }
        }
    }
}

/// Disjoint union of `copies` cliques of order `k`.
pub fn gen_clique_union(copies: usize, k: usize) -> Graph {
    assert!(copies >= 1 && k >= 2);
    let mut g = Graph::new(copies * k);
    for c in 0..copies {
        for i in 0..k {
            for j in i + 1..k {
                g.add_edge(c * k + i, c * k + j);
            }
        }
    }
    g
}

/// K_{a,b} with sides `0..a` and `a..a+b`.
pub fn gen_complete_bipartite(a: usize, b: usize) -> Graph {
    assert!(a >= 1 && b >= 1);
    let mut g = Graph::new(a + b);
    for u in 0..a {
        for v in a..a + b {
            g.add_edge(u, v);
        }
    }
    g
}

pub fn gen_cycle(n: usize) -> Graph {
    assert!(n >= 3);
    let mut g = Graph::new(n);
    for v in 0..n {
        g.add_edge(v, (v + 1) % n);
    }
    g
}

pub fn gen_complete(n: usize) -> Graph {
    let mut g = Graph::new(n);
    for u in 0..n {
        for v in u + 1..n {
            g.add_edge(u, v);
        }
    }
    g
}

/// Random d-regular bipartite graph with sides `0..h` and `h..2h`, built
/// from a bipartite configuration model and repaired by side-preserving switches.
pub fn gen_bipartite_regular(h: usize, d: usize, seed: u64) -> Result<Graph, GraphError> {
    if d > h {
        return Err(GraphError::Infeasible { n: h, d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut right: Vec<usize> = (0..h).flat_map(|v| std::iter::repeat_n(h + v, d)).collect();
    right.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> =
        (0..h).flat_map(|v| std::iter::repeat_n(v, d)).zip(right).collect();
    let n = 2 * h;
    let mut mult = vec![0u16; n * n];
    for &(u, v) in &pairs {
        mult[u * n + v] += 1;
    }
    let m = pairs.len();
    loop {
        let bad: Vec<usize> = (0..m).filter(|&i| mult[pairs[i].0 * n + pairs[i].1] > 1).collect();
        if bad.is_empty() {
            break;
        }
        for &i in &bad {
            let (a, b) = pairs[i];
            if mult[a * n + b] <= 1 {
                continue;
            }
            for _ in 0..10 * m {
                let j = rng.gen_range(0..m);
                let (c, e) = pairs[j];
                if a == c || b == e || mult[a * n + e] > 0 || mult[c * n + b] > 0 {
                    continue;
                }
                mult[a * n + b] -= 1;
                mult[c * n + e] -= 1;
                mult[a * n + e] += 1;
                mult[c * n + b] += 1;
                pairs[i] = (a, e);
                pairs[j] = (c, b);
                break;
            }
        }
    }
    Ok(Graph::from_edges(n, &pairs).expect("repaired bipartite pairing is simple"))
}

/// `blocks` disjoint random d-regular graphs on `size` vertices each, then
/// `switches` cross switches: edges `aa'` (block i) and `bb'` (block j) become
/// `ab` and `a'b'`. Degrees are preserved, so the result is d-regular with
/// 2·`switches` cross edges (fewer if a switch finds no eligible pair).
pub fn gen_coupled_blocks(blocks: usize, size: usize, d: usize, switches: usize, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = blocks * size;
    let mut g = Graph::new(n);
    for b in 0..blocks {
        let h = gen_regular(size, d, seed.wrapping_mul(31).wrapping_add(b as u64))?;
        for (u, v) in h.edges() {
            g.add_edge(b * size + u, b * size + v);
        }
    }
    if blocks < 2 {
        return Ok(g);
    }
    let block_of = |v: usize| v / size;
    for _ in 0..switches {
        for _ in 0..1000 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if block_of(a) == block_of(b) || g.has_edge(a, b) {
                continue;
            }
            let na: Vec<usize> = g.neighbor_iter(a).filter(|&x| block_of(x) == block_of(a)).collect();
            let nb: Vec<usize> = g.neighbor_iter(b).filter(|&x| block_of(x) == block_of(b)).collect();
            if na.is_empty() || nb.is_empty() {
                continue;
            }
            let a2 = na[rng.gen_range(0..na.len())];
            let b2 = nb[rng.gen_range(0..nb.len())];
            if g.has_edge(a2, b2) {
                continue;
            }
            g.remove_edge(a, a2);
            g.remove_edge(b, b2);
            g.add_edge(a, b);
            g.add_edge(a2, b2);
            break;
        }
    }
    Ok(g)
}

/// Parse the edge-list format: first line "n m", then m lines "u v".
pub fn read_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or(GraphError::Parse { line: 1, msg: "missing header".into() })?;
    let nums = parse_pair(header, hl + 1)?;
    let (n, m) = nums;
    let mut g = Graph::new(n);
    let mut count = 0;
    for (i, l) in lines {
        let (u, v) = parse_pair(l, i + 1)?;
        g.check_vertex(u)?;
        g.check_vertex(v)?;
        if u == v {
            return Err(GraphError::Loop(u));
        }
        if !g.add_edge(u, v) {
            return Err(GraphError::Duplicate(u.min(v), u.max(v)));
        }
        count += 1;
    }
    if count != m {
        return Err(GraphError::Parse { line: 1, msg: format!("header declares {m} edges, found {count}") });
    }
    Ok(g)
}

fn parse_pair(l: &str, line: usize) -> Result<(usize, usize), GraphError> {
    let mut it = l.split_whitespace();
    let mut next = || -> Result<usize, GraphError> {
        it.next()
            .ok_or(GraphError::Parse { line, msg: "expected two integers".into() })?
            .parse()
            .map_err(|e| GraphError::Parse { line, msg: format!("{e}") })
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(GraphError::Parse { line, msg: "trailing tokens".into() });
    }
    Ok((a, b))
}

pub fn write_edge_list(g: &Graph) -> String {
    let edges = g.edges();
    let mut s = format!("{} {}\n", g.n(), edges.len());
    for (u, v) in edges {
        s.push_str(&format!("{u} {v}\n"));
    }
    s
}
