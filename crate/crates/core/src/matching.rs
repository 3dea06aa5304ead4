//! Fractional matchings, rounding to perfect 2-matchings, the 2-lift, and
//! maximum matchings (blossom for general graphs, augmenting paths for
//! bipartite ones).

use std::collections::{BTreeMap, VecDeque};

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, VertexSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("graph is not regular")]
    NotRegular,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no perfect matching: {note}")]
    NoPerfectMatching { violator: Option<Vec<usize>>, deficit: usize, note: String },
    #[error("odd number of vertices ({0})")]
    OddOrder(usize),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("no perfect fractional matching; Hall violator {0:?}")]
    NoFractional(Vec<usize>),
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Edge weights in [0, 1] as exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalMatching {
    pub n: usize,
    pub w: BTreeMap<(usize, usize), Rational64>,
    pub perfect: bool,
}

impl FractionalMatching {
    pub fn weight(&self, u: usize, v: usize) -> Rational64 {
        self.w.get(&key(u, v)).copied().unwrap_or_else(Rational64::zero)
    }

    pub fn vertex_sums(&self) -> Vec<Rational64> {
        let mut s = vec![Rational64::zero(); self.n];
        for (&(u, v), &x) in &self.w {
            s[u] += x;
            s[v] += x;
        }
        s
    }

    /// Checks weights in [0,1] on edges of `g` and every vertex sum equal to 1.
    pub fn check_perfect(&self, g: &Graph) -> Result<(), String> {
        for (&(u, v), &x) in &self.w {
            if !g.has_edge(u, v) {
                return Err(format!("weighted pair {u}-{v} is not an edge"));
            }
            if x < Rational64::zero() || x > Rational64::one() {
                return Err(format!("weight {x} on {u}-{v} outside [0,1]"));
            }
        }
        for (v, s) in self.vertex_sums().into_iter().enumerate() {
            if s != Rational64::one() {
                return Err(format!("vertex {v} has weight sum {s}"));
            }
        }
        Ok(())
    }

    fn fractional_count(&self) -> usize {
        self.w.values().filter(|x| !x.is_zero() && !x.is_one()).count()
    }
}

/// Vertex-disjoint edges and odd cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TwoMatching {
    pub edges: Vec<(usize, usize)>,
    pub odd_cycles: Vec<Vec<usize>>,
}

impl TwoMatching {
    /// Structural check against `g`; returns the covered vertex count.
    pub fn verify(&self, g: &Graph) -> Result<usize, String> {
        let mut seen = VertexSet::new(g.n());
        let mut mark = |v: usize| -> Result<(), String> {
            if v >= g.n() || !seen.insert(v) {
                Err(format!("vertex {v} repeated or out of range"))
            } else {
                Ok(())
            }
        };
        for &(u, v) in &self.edges {
            if !g.has_edge(u, v) {
                return Err(format!("{u}-{v} is not an edge"));
            }
            mark(u)?;
            mark(v)?;
        }
        for c in &self.odd_cycles {
            if c.len() < 3 || c.len() % 2 == 0 {
                return Err(format!("cycle {c:?} is not odd of length >= 3"));
            }
            for i in 0..c.len() {
                if !g.has_edge(c[i], c[(i + 1) % c.len()]) {
                    return Err(format!("cycle {c:?} misses edge {}-{}", c[i], c[(i + 1) % c.len()]));
                }
                mark(c[i])?;
            }
        }
        Ok(seen.len())
    }

    pub fn is_perfect(&self, g: &Graph) -> bool {
        self.verify(g).map(|k| k == g.n()).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Matching {
    pub edges: Vec<(usize, usize)>,
}

impl Matching {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges of `g`, pairwise disjoint; returns the covered set.
    pub fn verify(&self, g: &Graph) -> Result<VertexSet, String> {
        let mut seen = VertexSet::new(g.n());
        for &(u, v) in &self.edges {
            if !g.has_edge(u, v) {
                return Err(format!("{u}-{v} is not an edge"));
            }
            if !seen.insert(u) || !seen.insert(v) {
                return Err(format!("edge {u}-{v} reuses a vertex"));
            }
        }
        Ok(seen)
    }

    pub fn mate_of(&self, n: usize) -> Vec<Option<usize>> {
        let mut m = vec![None; n];
        for &(u, v) in &self.edges {
            m[u] = Some(v);
            m[v] = Some(u);
        }
        m
    }
}

/// w ≡ 1/d on a d-regular graph.
pub fn uniform_fractional_matching(g: &Graph) -> Result<FractionalMatching, MatchingError> {
    let d = g.regular_degree().filter(|&d| d >= 1).ok_or(MatchingError::NotRegular)?;
    let x = Rational64::new(1, d as i64);
    let w = g.edges().into_iter().map(|e| (e, x)).collect();
    let mut f = FractionalMatching { n: g.n(), w, perfect: false };
    f.check_perfect(g).map_err(MatchingError::Invariant)?;
    f.perfect = true;
    Ok(f)
}

/// Outcome of the double-cover route.
#[derive(Debug, Clone, PartialEq)]
pub enum Fractional {
    Perfect(FractionalMatching),
    /// S with |N(S)| < |S|.
    Infeasible(Vec<usize>),
}

/// A half-integral perfect fractional matching from a perfect matching of the
/// bipartite double cover, or a Hall violator.
pub fn perfect_fractional_matching(g: &Graph) -> Fractional {
    let n = g.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|v| g.neighbor_iter(v).collect()).collect();
    let (ml, _) = kuhn(n, n, &adj);
    if let Some(s) = hall_from_matching(n, &adj, &ml) {
        return Fractional::Infeasible(s);
    }
    let half = Rational64::new(1, 2);
    let mut w: BTreeMap<(usize, usize), Rational64> = BTreeMap::new();
    for (u, m) in ml.iter().enumerate() {
        let v = m.expect("double cover matching is perfect");
        *w.entry(key(u, v)).or_insert_with(Rational64::zero) += half;
    }
    let f = FractionalMatching { n, w, perfect: true };
    debug_assert!(f.check_perfect(g).is_ok());
    Fractional::Perfect(f)
}

/// Maximum bipartite matching by augmenting paths; `adj[l]` lists right ids.
pub(crate) fn kuhn(nl: usize, nr: usize, adj: &[Vec<usize>]) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut ml = vec![None; nl];
    let mut mr: Vec<Option<usize>> = vec![None; nr];
    for l in 0..nl {
        for &r in &adj[l] {
            if mr[r].is_none() {
                mr[r] = Some(l);
                ml[l] = Some(r);
                break;
            }
        }
    }
    for l in 0..nl {
        if ml[l].is_some() {
            continue;
        }
        let mut seen = vec![false; nr];
        augment(l, adj, &mut ml, &mut mr, &mut seen);
    }
    (ml, mr)
}

fn augment(l: usize, adj: &[Vec<usize>], ml: &mut [Option<usize>], mr: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    // Iterative DFS over alternating paths.
    let mut stack: Vec<(usize, usize)> = vec![(l, 0)];
    let mut via: Vec<usize> = Vec::new();
    while let Some(&mut (u, ref mut i)) = stack.last_mut() {
        if *i >= adj[u].len() {
            stack.pop();
            via.pop();
            continue;
        }
        let r = adj[u][*i];
        *i += 1;
        if seen[r] {
            continue;
        }
        seen[r] = true;
        via.push(r);
        match mr[r] {
            None => {
                for (k, &(lu, _)) in stack.iter().enumerate() {
                    let rr = via[k];
                    ml[lu] = Some(rr);
                    mr[rr] = Some(lu);
                }
                return true;
            }
            Some(next) => stack.push((next, 0)),
        }
    }
    false
}

/// Left set reachable by alternating paths from a free left vertex.
fn hall_from_matching(nl: usize, adj: &[Vec<usize>], ml: &[Option<usize>]) -> Option<Vec<usize>> {
    let free = (0..nl).find(|&l| ml[l].is_none())?;
    let mut mr: BTreeMap<usize, usize> = BTreeMap::new();
    for (l, m) in ml.iter().enumerate() {
        if let Some(r) = m {
            mr.insert(*r, l);
        }
    }
    let mut in_s = vec![false; nl];
    in_s[free] = true;
    let mut q = VecDeque::from([free]);
    let mut seen_r = std::collections::BTreeSet::new();
    while let Some(l) = q.pop_front() {
        for &r in &adj[l] {
            if seen_r.insert(r) {
                let nxt = *mr.get(&r).expect("maximum matching: reachable right vertex is matched");
                if !in_s[nxt] {
                    in_s[nxt] = true;
                    q.push_back(nxt);
                }
            }
        }
    }
    Some((0..nl).filter(|&l| in_s[l]).collect())
}

/// S ⊆ A with |N(S) ∩ B| < |S|, if A cannot be saturated into B.
pub fn hall_violator(g: &Graph, a: &VertexSet, b: &VertexSet) -> Option<VertexSet> {
    let al = a.to_vec();
    let bl = b.to_vec();
    let mut pos = vec![usize::MAX; g.n()];
    for (i, &v) in bl.iter().enumerate() {
        pos[v] = i;
    }
    let adj: Vec<Vec<usize>> =
        al.iter().map(|&u| g.neighbor_iter(u).filter(|&v| b.contains(v)).map(|v| pos[v]).collect()).collect();
    let (ml, _) = kuhn(al.len(), bl.len(), &adj);
    let s = hall_from_matching(al.len(), &adj, &ml)?;
    Some(VertexSet::from_iter(g.n(), s.into_iter().map(|i| al[i])))
}

/// Rounds a perfect fractional matching to a perfect
/// 2-matching, re-verifying perfection after every reweighting.
pub fn round_fractional_to_two_matching(g: &Graph, w: &FractionalMatching) -> Result<TwoMatching, MatchingError> {
    Rounding::new(g, w)?.run()
}

/// One reweighting step, recorded for inspection.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundingStep {
    EvenCycle { cycle: Vec<usize>, x: Rational64 },
    CyclePathCycle { c1: Vec<usize>, path: Vec<usize>, c2: Vec<usize>, x: Rational64 },
}

pub struct Rounding<'a> {
    g: &'a Graph,
    pub w: FractionalMatching,
    pub steps: Vec<RoundingStep>,
}

impl<'a> Rounding<'a> {
    pub fn new(g: &'a Graph, w: &FractionalMatching) -> Result<Self, MatchingError> {
        w.check_perfect(g).map_err(MatchingError::Invariant)?;
        let mut w = w.clone();
        w.w.retain(|_, x| !x.is_zero());
        Ok(Rounding { g, w, steps: Vec::new() })
    }

    pub fn run(mut self) -> Result<TwoMatching, MatchingError> {
        while self.advance()? {}
        self.finish()
    }

    /// One reweighting step; false once every fractional component is an
    /// odd cycle.
    pub fn advance(&mut self) -> Result<bool, MatchingError> {
        let n = self.g.n();
        let before = self.w.fractional_count();
        let frac = self.fractional_graph()?;
        let mut with_frac = VertexSet::new(n);
        for v in 0..n {
            if frac.degree(v) > 0 {
                with_frac.insert(v);
            }
        }
        let Some(comp) = frac.components(&with_frac).into_iter().find(|c| !self.is_odd_cycle(&frac, c)) else {
            return Ok(false);
        };
        self.step(&frac, &comp)?;
        self.w.check_perfect(self.g).map_err(MatchingError::Invariant)?;
        let after = self.w.fractional_count();
        if after >= before {
            return Err(MatchingError::Invariant(format!("fractional edge count {before} -> {after} did not drop")));
        }
        Ok(true)
    }

    /// Graph of edges with weight strictly between 0 and 1; checks that every
    /// weight-1 edge is isolated in the support.
    fn fractional_graph(&self) -> Result<Graph, MatchingError> {
        let n = self.g.n();
        let mut fg = Graph::new(n);
        let mut support_deg = vec![0usize; n];
        for (&(u, v), x) in &self.w.w {
            support_deg[u] += 1;
            support_deg[v] += 1;
            if !x.is_one() {
                fg.add_edge(u, v);
            }
        }
        for (&(u, v), x) in &self.w.w {
            if x.is_one() && (support_deg[u] != 1 || support_deg[v] != 1) {
                return Err(MatchingError::Invariant(format!("weight-1 edge {u}-{v} is not isolated")));
            }
        }
        for v in 0..n {
            if fg.degree(v) == 1 {
                return Err(MatchingError::Invariant(format!("vertex {v} has exactly one fractional edge")));
            }
        }
        Ok(fg)
    }

    fn is_odd_cycle(&self, fg: &Graph, comp: &VertexSet) -> bool {
        let k = comp.len();
        k % 2 == 1 && comp.iter().all(|v| fg.degree(v) == 2)
    }

    fn step(&mut self, fg: &Graph, comp: &VertexSet) -> Result<(), MatchingError> {
        let blocks = blocks_of(fg, comp);
        for b in &blocks {
            if b.edges.len() > b.vertices.len() {
                let cyc = even_cycle_in_block(fg, b)?;
                return self.apply_even(cyc);
            }
            if b.edges.len() == b.vertices.len() && b.vertices.len() % 2 == 0 {
                let cyc = cycle_order(&b.edges);
                return self.apply_even(cyc);
            }
        }
        let mut odd: Vec<&Block> = blocks.iter().filter(|b| b.edges.len() == b.vertices.len()).collect();
        odd.sort_by_key(|b| b.vertices.iter().min().copied());
        if odd.len() < 2 {
            return Err(MatchingError::Invariant("component without even cycle has fewer than two odd cycles".into()));
        }
        let (c1, c2) = (odd[0], odd[1]);
        let s1 = VertexSet::from_iter(fg.n(), c1.vertices.iter().copied());
        let s2 = VertexSet::from_iter(fg.n(), c2.vertices.iter().copied());
        let path = multi_source_path(fg, comp, &s1, &s2)
            .ok_or_else(|| MatchingError::Invariant("odd cycles in one component are not connected".into()))?;
        let c1o = rotate_to(cycle_order(&c1.edges), path[0]);
        let c2o = rotate_to(cycle_order(&c2.edges), *path.last().expect("nonempty path"));
        self.apply_cycle_path_cycle(c1o, path, c2o)
    }

    fn apply_even(&mut self, cyc: Vec<usize>) -> Result<(), MatchingError> {
        let k = cyc.len();
        let coeffs: Vec<((usize, usize), i64)> =
            (0..k).map(|i| (key(cyc[i], cyc[(i + 1) % k]), if i % 2 == 0 { 1 } else { -1 })).collect();
        let x = self.apply(&coeffs)?;
        self.steps.push(RoundingStep::EvenCycle { cycle: cyc, x });
        Ok(())
    }

    fn apply_cycle_path_cycle(&mut self, c1: Vec<usize>, path: Vec<usize>, c2: Vec<usize>) -> Result<(), MatchingError> {
        let mut coeffs: Vec<((usize, usize), i64)> = Vec::new();
        // C1 = v_1..v_{2s+1}: edges v_{2i-1}v_{2i} (1-based, cyclic) decrease, v_{2i}v_{2i+1} increase.
        let k1 = c1.len();
        for i in 0..k1 {
            let sign = if i % 2 == 0 { -1 } else { 1 };
            coeffs.push((key(c1[i], c1[(i + 1) % k1]), sign));
        }
        let plen = path.len() - 1;
        for i in 0..plen {
            coeffs.push((key(path[i], path[i + 1]), if i % 2 == 0 { 2 } else { -2 }));
        }
        let k2 = c2.len();
        let first = if plen % 2 == 1 { -1 } else { 1 };
        for i in 0..k2 {
            let sign = if i % 2 == 0 { first } else { -first };
            coeffs.push((key(c2[i], c2[(i + 1) % k2]), sign));
        }
        let x = self.apply(&coeffs)?;
        self.steps.push(RoundingStep::CyclePathCycle { c1, path, c2, x });
        Ok(())
    }

    /// Adds coeff·x to each edge with x maximal subject to [0, 1].
    fn apply(&mut self, coeffs: &[((usize, usize), i64)]) -> Result<Rational64, MatchingError> {
        let mut x: Option<Rational64> = None;
        for &(e, c) in coeffs {
            let w = self.w.w.get(&e).copied().unwrap_or_else(Rational64::zero);
            let slack = if c > 0 { (Rational64::one() - w) / c } else { w / (-c) };
            x = Some(match x {
                None => slack,
                Some(y) => y.min(slack),
            });
        }
        let x = x.ok_or_else(|| MatchingError::Invariant("empty reweighting".into()))?;
        if x <= Rational64::zero() {
            return Err(MatchingError::Invariant("reweighting touches an integral edge".into()));
        }
        for &(e, c) in coeffs {
            *self.w.w.entry(e).or_insert_with(Rational64::zero) += x * c;
        }
        self.w.w.retain(|_, y| !y.is_zero());
        Ok(x)
    }

    /// The 2-matching left when no step applies.
    pub fn finish(&self) -> Result<TwoMatching, MatchingError> {
        let fg = self.fractional_graph()?;
        let mut edges: Vec<(usize, usize)> = self.w.w.iter().filter(|(_, x)| x.is_one()).map(|(&e, _)| e).collect();
        edges.sort();
        let mut with_frac = VertexSet::new(fg.n());
        for v in 0..fg.n() {
            if fg.degree(v) > 0 {
                with_frac.insert(v);
            }
        }
        let mut odd_cycles = Vec::new();
        for comp in fg.components(&with_frac) {
            if !self.is_odd_cycle(&fg, &comp) {
                return Err(MatchingError::Invariant("rounding ended with a non-cycle component".into()));
            }
            let es: Vec<(usize, usize)> =
                fg.edges().into_iter().filter(|&(u, _)| comp.contains(u)).collect();
            odd_cycles.push(cycle_order(&es));
        }
        let tm = TwoMatching { edges, odd_cycles };
        if !tm.is_perfect(self.g) {
            return Err(MatchingError::Invariant("rounded 2-matching is not perfect".into()));
        }
        Ok(tm)
    }
}

#[derive(Debug)]
struct Block {
    vertices: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

/// Biconnected components of fg[comp] (Tarjan, edge stack).
fn blocks_of(fg: &Graph, comp: &VertexSet) -> Vec<Block> {
    let n = fg.n();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    let mut estack: Vec<(usize, usize)> = Vec::new();
    let mut blocks = Vec::new();
    let root = comp.first().expect("nonempty component");
    // (vertex, parent, neighbour list, next index)
    let mut stack: Vec<(usize, usize, Vec<usize>, usize)> = Vec::new();
    disc[root] = timer;
    low[root] = timer;
    timer += 1;
    stack.push((root, usize::MAX, fg.neighbor_iter(root).collect(), 0));
    while !stack.is_empty() {
        let top = stack.len() - 1;
        let (v, parent) = (stack[top].0, stack[top].1);
        if stack[top].3 < stack[top].2.len() {
            let u = stack[top].2[stack[top].3];
            stack[top].3 += 1;
            if disc[u] == usize::MAX {
                estack.push((v, u));
                disc[u] = timer;
                low[u] = timer;
                timer += 1;
                stack.push((u, v, fg.neighbor_iter(u).collect(), 0));
            } else if u != parent && disc[u] < disc[v] {
                estack.push((v, u));
                low[v] = low[v].min(disc[u]);
            }
        } else {
            stack.pop();
            if let Some(p) = stack.last() {
                let p = p.0;
                low[p] = low[p].min(low[v]);
                if low[v] >= disc[p] {
                    let mut edges = Vec::new();
                    while let Some(e) = estack.pop() {
                        edges.push(key(e.0, e.1));
                        if e == (p, v) {
                            break;
                        }
                    }
                    let mut vs: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
                    vs.sort();
                    vs.dedup();
                    edges.sort();
                    blocks.push(Block { vertices: vs, edges });
                }
            }
        }
    }
    blocks
}

/// Vertex order of a cycle given by its edge list, starting at its least vertex.
fn cycle_order(edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let start = *adj.keys().next().expect("cycle has vertices");
    let mut order = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    loop {
        let nb = &adj[&cur];
        let next = if nb[0] != prev { nb[0] } else { nb[1] };
        if next == start {
            break;
        }
        order.push(next);
        prev = cur;
        cur = next;
    }
    order
}

fn rotate_to(mut c: Vec<usize>, v: usize) -> Vec<usize> {
    let i = c.iter().position(|&x| x == v).expect("path end lies on cycle");
    c.rotate_left(i);
    c
}

/// Shortest path from some vertex of `a` to some vertex of `b` inside `comp`.
fn multi_source_path(fg: &Graph, comp: &VertexSet, a: &VertexSet, b: &VertexSet) -> Option<Vec<usize>> {
    let n = fg.n();
    let mut parent = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for v in a.iter() {
        parent[v] = v;
        q.push_back(v);
    }
    while let Some(v) = q.pop_front() {
        if b.contains(v) {
            let mut path = vec![v];
            let mut c = v;
            while parent[c] != c {
                c = parent[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        for u in fg.neighbor_iter(v) {
            if comp.contains(u) && parent[u] == usize::MAX {
                parent[u] = v;
                q.push_back(u);
            }
        }
    }
    None
}

/// An even cycle inside a 2-connected block with more edges than vertices:
/// a cycle plus an ear gives three internally disjoint paths between two
/// vertices, two of which have equal parity.
fn even_cycle_in_block(fg: &Graph, b: &Block) -> Result<Vec<usize>, MatchingError> {
    let n = fg.n();
    let inb = VertexSet::from_iter(n, b.vertices.iter().copied());
    let mut bg = Graph::new(n);
    for &(u, v) in &b.edges {
        bg.add_edge(u, v);
    }
    let (a0, b0) = b.edges[0];
    bg.remove_edge(a0, b0);
    let p = bg.shortest_path(a0, b0, &inb).ok_or_else(|| MatchingError::Invariant("block edge on no cycle".into()))?;
    bg.add_edge(a0, b0);
    let cyc = p;
    let k = cyc.len();
    let on_c = VertexSet::from_iter(n, cyc.iter().copied());
    let pos: BTreeMap<usize, usize> = cyc.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let in_cycle_edge = |u: usize, v: usize| -> bool {
        match (pos.get(&u), pos.get(&v)) {
            (Some(&i), Some(&j)) => (i + 1) % k == j || (j + 1) % k == i,
            _ => false,
        }
    };
    let mut ear: Option<Vec<usize>> = b
        .edges
        .iter()
        .find(|&&(u, v)| on_c.contains(u) && on_c.contains(v) && !in_cycle_edge(u, v))
        .map(|&(u, v)| vec![u, v]);
    if ear.is_none() {
        let off = inb.difference(&on_c);
        'search: for &u in &cyc {
            for x in bg.neighbor_iter(u).filter(|&x| off.contains(x)) {
                let mut parent = vec![usize::MAX; n];
                parent[x] = x;
                let mut q = VecDeque::from([x]);
                while let Some(z) = q.pop_front() {
                    for c in bg.neighbor_iter(z) {
                        if on_c.contains(c) && c != u {
                            let mut path = vec![c, z];
                            let mut y = z;
                            while parent[y] != y {
                                y = parent[y];
                                path.push(y);
                            }
                            path.push(u);
                            path.reverse();
                            ear = Some(path);
                            break 'search;
                        }
                        if off.contains(c) && parent[c] == usize::MAX {
                            parent[c] = z;
                            q.push_back(c);
                        }
                    }
                }
            }
        }
    }
    let ear = ear.ok_or_else(|| MatchingError::Invariant("no ear in a block with surplus edges".into()))?;
    let (s, t) = (ear[0], *ear.last().expect("ear has ends"));
    let (i, j) = (pos[&s], pos[&t]);
    // Arc forward from s to t along the cycle, and the complementary arc.
    let fwd: Vec<usize> = (0..=((j + k - i) % k)).map(|d| cyc[(i + d) % k]).collect();
    let bwd: Vec<usize> = (0..=((i + k - j) % k)).map(|d| cyc[(i + k - d) % k]).collect();
    let le = ear.len() - 1;
    let (lf, lb) = (fwd.len() - 1, bwd.len() - 1);
    // Each candidate: walk s -> t along one path, then back along another.
    let join = |p1: &[usize], p2: &[usize]| -> Vec<usize> {
        let mut c: Vec<usize> = p1.to_vec();
        c.extend(p2.iter().rev().skip(1).take(p2.len() - 2));
        c
    };
    let cycle = if (lf + lb) % 2 == 0 {
        join(&fwd, &bwd)
    } else if (lf + le) % 2 == 0 {
        join(&fwd, &ear)
    } else {
        join(&bwd, &ear)
    };
    if cycle.len() % 2 != 0 || cycle.len() < 4 {
        return Err(MatchingError::Invariant("theta produced no even cycle".into()));
    }
    Ok(cycle)
}

/// Perfect 2-matching via the double cover and the rounding above.
pub fn perfect_two_matching(g: &Graph) -> Result<TwoMatching, MatchingError> {
    match perfect_fractional_matching(g) {
        Fractional::Perfect(w) => round_fractional_to_two_matching(g, &w),
        Fractional::Infeasible(s) => Err(MatchingError::NoFractional(s)),
    }
}

/// Lifted ids: reduced vertex i becomes 2i (i') and 2i+1 (i'').
pub fn lift_two_matching(m: usize, tm: &TwoMatching) -> Result<Matching, MatchingError> {
    let lo = |i: usize| 2 * i;
    let hi = |i: usize| 2 * i + 1;
    let mut edges = Vec::new();
    for &(i, j) in &tm.edges {
        edges.push((lo(i), hi(j)));
        edges.push((hi(i), lo(j)));
    }
    for c in &tm.odd_cycles {
        for k in 0..c.len() {
            edges.push((lo(c[k]), hi(c[(k + 1) % c.len()])));
        }
    }
    let mut seen = vec![false; 2 * m];
    for &(a, b) in &edges {
        for v in [a, b] {
            if v >= 2 * m || seen[v] {
                return Err(MatchingError::Invariant(format!("lifted vertex {v} repeated or out of range")));
            }
            seen[v] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(MatchingError::Invariant("lift is not perfect".into()));
    }
    Ok(Matching { edges })
}

/// The 2-lift Γ_ref of a reduced graph: i', i'' joined to j', j'' for every edge ij.
pub fn two_lift_graph(gamma: &Graph) -> Graph {
    let mut r = Graph::new(2 * gamma.n());
    for (i, j) in gamma.edges() {
        for a in [2 * i, 2 * i + 1] {
            for b in [2 * j, 2 * j + 1] {
                r.add_edge(a, b);
            }
        }
    }
    r
}

/// Maximum matching (blossom algorithm; bipartite inputs use augmenting paths).
pub fn max_matching(g: &Graph) -> Matching {
    let n = g.n();
    let mate = if let Some((x, _)) = g.two_coloring(&g.vertices()) {
        let xl = x.to_vec();
        let adj: Vec<Vec<usize>> = xl.iter().map(|&u| g.neighbor_iter(u).collect()).collect();
        let (ml, _) = kuhn(xl.len(), n, &adj);
        let mut mate = vec![None; n];
        for (i, m) in ml.iter().enumerate() {
            if let Some(v) = *m {
                mate[xl[i]] = Some(v);
                mate[v] = Some(xl[i]);
            }
        }
        mate
    } else {
        Blossom::new(g).solve()
    };
    let mut b = Blossom::with_mate(g, mate.clone());
    for v in 0..n {
        if b.mate[v].is_none() {
            assert!(b.find_path(v).is_none(), "augmenting path left after maximum matching");
        }
    }
    let edges = (0..n).filter_map(|v| mate[v].filter(|&u| u > v).map(|u| (v, u))).collect();
    Matching { edges }
}

struct Blossom<'a> {
    g: &'a Graph,
    mate: Vec<Option<usize>>,
    parent: Vec<Option<usize>>,
    base: Vec<usize>,
    used: Vec<bool>,
    blossom: Vec<bool>,
}

impl<'a> Blossom<'a> {
    fn new(g: &'a Graph) -> Self {
        Self::with_mate(g, vec![None; g.n()])
    }

    fn with_mate(g: &'a Graph, mate: Vec<Option<usize>>) -> Self {
        let n = g.n();
        Blossom { g, mate, parent: vec![None; n], base: (0..n).collect(), used: vec![false; n], blossom: vec![false; n] }
    }

    fn solve(mut self) -> Vec<Option<usize>> {
        let n = self.g.n();
        for v in 0..n {
            if self.mate[v].is_none() {
                if let Some(u) = self.g.neighbor_iter(v).find(|&u| self.mate[u].is_none()) {
                    self.mate[v] = Some(u);
                    self.mate[u] = Some(v);
                }
            }
        }
        for v in 0..n {
            if self.mate[v].is_none() {
                if let Some(mut u) = self.find_path(v) {
                    loop {
                        let pv = self.parent[u].expect("path vertex has parent");
                        let ppv = self.mate[pv];
                        self.mate[u] = Some(pv);
                        self.mate[pv] = Some(u);
                        match ppv {
                            Some(x) => u = x,
                            None => break,
                        }
                    }
                }
            }
        }
        self.mate
    }

    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        let mut used = vec![false; self.g.n()];
        loop {
            a = self.base[a];
            used[a] = true;
            match self.mate[a] {
                None => break,
                Some(m) => a = self.parent[m].expect("alternating tree"),
            }
        }
        loop {
            b = self.base[b];
            if used[b] {
                return b;
            }
            b = self.parent[self.mate[b].expect("tree vertex matched")].expect("alternating tree");
        }
    }

    fn mark_path(&mut self, mut v: usize, b: usize, mut child: usize) {
        while self.base[v] != b {
            let m = self.mate[v].expect("blossom vertex matched");
            self.blossom[self.base[v]] = true;
            self.blossom[self.base[m]] = true;
            self.parent[v] = Some(child);
            child = m;
            v = self.parent[m].expect("alternating tree");
        }
    }

    /// Returns the free endpoint of an augmenting path from `root`, leaving
    /// the path encoded in `parent`/`mate`.
    fn find_path(&mut self, root: usize) -> Option<usize> {
        let n = self.g.n();
        self.used = vec![false; n];
        self.parent = vec![None; n];
        self.base = (0..n).collect();
        self.used[root] = true;
        let mut q = VecDeque::from([root]);
        while let Some(v) = q.pop_front() {
            let nbrs: Vec<usize> = self.g.neighbor_iter(v).collect();
            for to in nbrs {
                if self.base[v] == self.base[to] || self.mate[v] == Some(to) {
                    continue;
                }
                if to == root || self.mate[to].is_some_and(|m| self.parent[m].is_some()) {
                    let cur = self.lca(v, to);
                    self.blossom = vec![false; n];
                    self.mark_path(v, cur, to);
                    self.mark_path(to, cur, v);
                    for i in 0..n {
                        if self.blossom[self.base[i]] {
                            self.base[i] = cur;
                            if !self.used[i] {
                                self.used[i] = true;
                                q.push_back(i);
                            }
                        }
                    }
                } else if self.parent[to].is_none() {
                    self.parent[to] = Some(v);
                    match self.mate[to] {
                        None => return Some(to),
                        Some(m) => {
                            self.used[m] = true;
                            q.push_back(m);
                        }
                    }
                }
            }
        }
        None
    }
}

/// Perfect matching of H − removed through the maximum-matching route.
pub fn template_matching(h: &Graph, removed: &VertexSet) -> Result<Matching, MatchingError> {
    let keep = removed.complement();
    if keep.len() % 2 == 1 {
        return Err(MatchingError::OddOrder(keep.len()));
    }
    let sub = h.restrict(&keep);
    let sides = sub.two_coloring(&keep);
    if let Some((x, y)) = &sides {
        if x.len() != y.len() && sub.edge_count() > 0 && sub.is_connected_on(&keep) {
            return Err(MatchingError::Precondition(format!("bipartite sides {} and {} differ", x.len(), y.len())));
        }
    }
    let m = max_matching(&sub);
    if 2 * m.len() == keep.len() {
        return Ok(m);
    }
    let deficit = keep.len() / 2 - m.len();
    let violator = sides.and_then(|(x, y)| {
        let (a, b) = if x.len() >= y.len() { (x, y) } else { (y, x) };
        hall_violator(&sub, &a, &b).map(|s| s.to_vec())
    });
    let note = match &violator {
        Some(s) => format!("Hall violator of size {}", s.len()),
        None => format!("maximum matching misses {deficit} edges"),
    };
    Err(MatchingError::NoPerfectMatching { violator, deficit, note })
}
