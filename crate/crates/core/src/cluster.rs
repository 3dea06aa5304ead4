//! Perfect K_{t,t}-packing of a single expander class: clusters, the random
//! five-way split, the three auxiliary collections and the final pair tiling.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decompose::{find_sparse_cut, max_cut_bipartition, ParamPack};
use crate::graph::{bipartite_distance, Graph, VertexSet};
use crate::hamilton::hamilton_cycle_within;
use crate::ktt::{
    disjoint_bicliques, eps_regular_test, find_biclique_quota, make_super_regular, perfect_ktt_tiling_bipartite,
    perfect_ktt_tiling_general, KttCopy, KttError, KttPacking, Tag,
};
use crate::matching::{lift_two_matching, perfect_two_matching, template_matching, Matching};

/// Node budget of one exact pair tiling inside a structured attempt.
pub const TILE_BUDGET: u64 = 200_000;

#[derive(Debug, Clone, Serialize)]
pub struct PairCheck {
    pub pair: (usize, usize),
    pub density: f64,
    pub max_gap: f64,
    pub regular: bool,
}

#[derive(Debug, Clone)]
pub struct ClusterSystem {
    pub v0: VertexSet,
    /// U_0..U_{2m−1}; matched pairs are (2k, 2k+1).
    pub clusters: Vec<VertexSet>,
    pub gprime: Graph,
    /// Adjacency of clusters (the 2-lift of the reduced graph).
    pub pair_graph: Graph,
    pub reduced: Graph,
    pub parent: Vec<usize>,
    pub matched_pairs: Vec<(usize, usize)>,
    pub bipartite: bool,
    pub pair_checks: Vec<PairCheck>,
}

impl ClusterSystem {
    pub fn cluster_size(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.len())
    }

    pub fn cluster_of(&self, v: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(v))
    }

    /// Partition, equal sizes and divisibility.
    pub fn validate(&self, class: &VertexSet, t: usize) -> Result<(), String> {
        let mut seen = self.v0.clone();
        for (i, c) in self.clusters.iter().enumerate() {
            if !seen.is_disjoint(c) {
                return Err(format!("cluster {i} overlaps"));
            }
            seen.union_with(c);
            if c.len() != self.cluster_size() {
                return Err(format!("cluster {i} has size {}", c.len()));
            }
        }
        if &seen != class {
            return Err("clusters and V_0 do not partition the class".into());
        }
        if self.cluster_size() % (2 * t) != 0 || self.v0.len() % (2 * t) != 0 {
            return Err("sizes not divisible by 2t".into());
        }
        for &(a, b) in &self.matched_pairs {
            if !self.pair_graph.has_edge(a, b) {
                return Err(format!("matched pair ({a},{b}) is not a reduced edge"));
            }
        }
        Ok(())
    }
}

/// Number m of reduced vertices and cluster size u: least |V_0| first, then
/// least m. Bipartite classes use m/2 reduced vertices per side.
pub fn choose_clusters(size: usize, bipartite: bool, t: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for m in 2..=8usize {
        let (u, v0) = if bipartite {
            if m % 2 == 1 {
                continue;
            }
            let h = size / 2;
            let u = h / m / (2 * t) * (2 * t);
            (u, size - 2 * m * u)
        } else {
            let u = size / (2 * m) / (2 * t) * (2 * t);
            (u, size - 2 * m * u)
        };
        if u == 0 {
            continue;
        }
        if best.map_or(true, |b| v0 < b.0) {
            best = Some((v0, m, u));
        }
    }
    best.map(|(_, m, u)| (m, u))
}

/// Seeded equal-size clustering with measured densities, a lifted perfect
/// 2-matching of the reduced graph, and super-regularized matched pairs.
pub fn build_cluster_system(
    g: &Graph,
    class: &VertexSet,
    sides: Option<&(VertexSet, VertexSet)>,
    t: usize,
    params: &ParamPack,
    seed: u64,
) -> Result<ClusterSystem, KttError> {
    let n = g.n();
    if class.len() % (2 * t) != 0 {
        return Err(KttError::Precondition(format!("class of size {} not divisible by {}", class.len(), 2 * t)));
    }
    let bip = sides.is_some();
    let (m, u) = choose_clusters(class.len(), bip, t)
        .ok_or_else(|| KttError::Validation(format!("class of size {} too small for clusters", class.len())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut v0 = VertexSet::new(n);
    let groups: Vec<Vec<usize>> = match sides {
        Some((x, y)) => vec![x.to_vec(), y.to_vec()],
        None => vec![class.to_vec()],
    };
    let per_group = m / groups.len();
    for mut gv in groups {
        gv.shuffle(&mut rng);
        for k in 0..per_group {
            parts.push(gv[2 * u * k..2 * u * (k + 1)].to_vec());
        }
        for &v in &gv[2 * u * per_group..] {
            v0.insert(v);
        }
    }
    let vsets: Vec<VertexSet> = parts.iter().map(|p| VertexSet::from_iter(n, p.iter().copied())).collect();
    let mut reduced = Graph::new(m);
    for i in 0..m {
        for j in i + 1..m {
            let d = g.e_between(&vsets[i], &vsets[j]) as f64 / (4 * u * u) as f64;
            if d >= params.mu {
                reduced.add_edge(i, j);
            }
        }
    }
    let tm = perfect_two_matching(&reduced).map_err(|e| KttError::Validation(format!("reduced graph: {e}")))?;
    let lifted = lift_two_matching(m, &tm).map_err(KttError::Matching)?;
    let half = |l: usize| -> VertexSet {
        let p = &parts[l / 2];
        let s = if l % 2 == 0 { &p[..u] } else { &p[u..] };
        VertexSet::from_iter(n, s.iter().copied())
    };
    let mut clusters = Vec::with_capacity(2 * m);
    let mut parent = Vec::with_capacity(2 * m);
    for &(p, q) in &lifted.edges {
        // Bipartite classes: the first cluster of each pair sits in X.
        let (p, q) = if bip && p / 2 >= m / 2 { (q, p) } else { (p, q) };
        clusters.push(half(p));
        clusters.push(half(q));
        parent.push(p / 2);
        parent.push(q / 2);
    }
    let mut pair_graph = Graph::new(2 * m);
    for a in 0..2 * m {
        for b in a + 1..2 * m {
            if reduced.has_edge(parent[a], parent[b]) {
                pair_graph.add_edge(a, b);
            }
        }
    }
    let mut owner = vec![usize::MAX; n];
    for (i, p) in parts.iter().enumerate() {
        for &v in p {
            owner[v] = i;
        }
    }
    let mut gprime = Graph::new(n);
    for (a, b) in g.edges() {
        let (i, j) = (owner[a], owner[b]);
        if i != usize::MAX && j != usize::MAX && i != j && reduced.has_edge(i, j) {
            gprime.add_edge(a, b);
        }
    }
    // Super-regularize, then equalize sizes and restore 2t-divisibility.
    let mut kept = clusters.clone();
    for k in 0..m {
        let (a, b) = (&clusters[2 * k], &clusters[2 * k + 1]);
        let (ra, rb) = make_super_regular(&gprime, a, b, params.eps_reg).map_err(|e| e.at("super-regularity"))?;
        kept[2 * k] = ra;
        kept[2 * k + 1] = rb;
    }
    let least = kept.iter().map(|c| c.len()).min().unwrap_or(0);
    let target = least / (2 * t) * (2 * t);
    if target == 0 {
        return Err(KttError::Validation("clusters emptied by super-regularization".into()));
    }
    for k in 0..2 * m {
        let partner = &kept[k ^ 1].clone();
        let mut order: Vec<usize> = kept[k].iter().collect();
        order.sort_by_key(|&v| (gprime.degree_into(v, partner), v));
        for &v in order.iter().take(kept[k].len() - target) {
            kept[k].remove(v);
        }
    }
    for k in 0..2 * m {
        for v in clusters[k].difference(&kept[k]).iter() {
            v0.insert(v);
        }
    }
    let clusters = kept;
    let mut pair_checks = Vec::new();
    for k in 0..m {
        let (a, b) = (&clusters[2 * k], &clusters[2 * k + 1]);
        let r = eps_regular_test(&gprime, a, b, params.eps_reg, seed ^ k as u64);
        pair_checks.push(PairCheck { pair: (2 * k, 2 * k + 1), density: r.density, max_gap: r.max_gap, regular: r.regular });
    }
    // G' loses every edge at a vertex moved to V_0.
    let inside = {
        let mut s = VertexSet::new(n);
        for c in &clusters {
            s.union_with(c);
        }
        s
    };
    let gprime = gprime.restrict(&inside);
    let sys = ClusterSystem {
        v0,
        clusters,
        gprime,
        pair_graph,
        reduced,
        parent,
        matched_pairs: (0..m).map(|k| (2 * k, 2 * k + 1)).collect(),
        bipartite: bip,
        pair_checks,
    };
    sys.validate(class, t).map_err(KttError::Validation)?;
    Ok(sys)
}

/// Integer part sizes: floors for parts 1–4, remainder to part 5.
pub fn split_sizes(u: usize, xi: f64, t: usize) -> [usize; 5] {
    let p1 = (xi * u as f64 + 1e-9).floor() as usize;
    let p3 = u / (2 * t);
    let p4 = 2 * u / 3;
    let used = 2 * p1 + p3 + p4;
    [p1, p1, p3, p4, u.saturating_sub(used)]
}

/// Smallest expected part-degree at which the concentration check applies:
/// below it the hypergeometric tail bound 2·exp(−ε²μ/3) exceeds 1/20.
pub fn concentration_floor(eps: f64) -> f64 {
    3.0 * 40f64.ln() / (eps * eps)
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitPlan {
    /// parts[i][j] is U_i^(j+1).
    pub parts: Vec<[VertexSet; 5]>,
    pub sizes: [usize; 5],
    pub draws: usize,
    /// Vertex–cluster–part triples the concentration check applied to.
    pub concentration_checked: usize,
    pub no_sparse_cut: bool,
    pub dichotomy: bool,
}

impl SplitPlan {
    pub fn union(&self, j: usize, n: usize) -> VertexSet {
        let mut s = VertexSet::new(n);
        for p in &self.parts {
            s.union_with(&p[j]);
        }
        s
    }
}

/// Seeded uniform five-way split of every cluster, re-drawn up to 50 times
/// until part degrees concentrate.
pub fn five_way_split(
    sys: &ClusterSystem,
    params: &ParamPack,
    t: usize,
    eps: f64,
    seed: u64,
) -> Result<SplitPlan, KttError> {
    let n = sys.gprime.n();
    let u = sys.cluster_size();
    let sizes = split_sizes(u, params.xi, t);
    if sizes.iter().sum::<usize>() != u || u < 2 * sizes[0] + sizes[2] + sizes[3] {
        return Err(KttError::Precondition(format!("cluster size {u} cannot hold the split")));
    }
    let floor = concentration_floor(eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class = sys.v0.clone();
    for c in &sys.clusters {
        class.union_with(c);
    }
    let mut last = None;
    for draw in 1..=50 {
        let mut parts = Vec::with_capacity(sys.clusters.len());
        for c in &sys.clusters {
            let mut vs = c.to_vec();
            vs.shuffle(&mut rng);
            let ps: [VertexSet; 5] = std::array::from_fn(|j| {
                let at: usize = sizes[..j].iter().sum();
                VertexSet::from_iter(n, vs[at..at + sizes[j]].iter().copied())
            });
            parts.push(ps);
        }
        let mut checked = 0;
        let mut bad = None;
        'scan: for v in class.iter() {
            for (i, c) in sys.clusters.iter().enumerate() {
                let dc = sys.gprime.degree_into(v, c) as f64;
                for j in 0..5 {
                    let mean = dc * sizes[j] as f64 / u as f64;
                    if mean < floor {
                        continue;
                    }
                    checked += 1;
                    let got = sys.gprime.degree_into(v, &parts[i][j]) as f64;
                    if (got - mean).abs() > eps * mean {
                        bad = Some(KttError::Concentration { vertex: v, cluster: i, part: j + 1 });
                        break 'scan;
                    }
                }
            }
        }
        if let Some(e) = bad {
            last = Some(e);
            continue;
        }
        let mut plan = SplitPlan { parts, sizes, draws: draw, concentration_checked: checked, no_sparse_cut: true, dichotomy: true };
        let u3 = plan.union(2, n);
        if u3.len() >= 2 {
            let (h, _) = sys.gprime.induced(&u3);
            plan.no_sparse_cut = find_sparse_cut(&h, params.zeta / 20.0).is_none();
            let h3 = sys.gprime.restrict(&u3);
            plan.dichotomy = if sys.bipartite {
                h3.two_coloring(&u3).is_some()
            } else {
                let (x, _) = max_cut_bipartition(&h3, &u3, seed);
                let need = params.gamma * (class.len() * class.len()) as f64 / (256 * t * t) as f64;
                bipartite_distance(&h3.restrict(&u3), &x) as f64 >= need
            };
        }
        return Ok(plan);
    }
    Err(last.expect("at least one draw"))
}

/// One copy per exceptional vertex v: t vertices of N(v) ∩ U^(1) against t−1
/// further vertices of U^(1), with v attached to the second side.
pub fn cover_exceptional(g: &Graph, v0: &VertexSet, u1: &VertexSet, t: usize) -> Result<KttPacking, KttError> {
    let mut avail = u1.clone();
    let mut out = KttPacking::new(t);
    let mut missed = Vec::new();
    for v in v0.iter() {
        let w = g.neighbors(v).intersection(&avail);
        match find_biclique_quota(g, &[(&w, t)], &avail, t - 1) {
            Some((a, mut b)) => {
                for &x in a.iter().chain(&b) {
                    avail.remove(x);
                }
                b.push(v);
                out.copies.push(KttCopy::new(g, a, b, Tag::K1)?);
            }
            None => missed.push(v),
        }
    }
    if !missed.is_empty() {
        return Err(KttError::Coverage(missed));
    }
    Ok(out)
}

/// Residues to be realized per cluster, with the sum conditions checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DivisibilityTarget {
    pub f: Vec<usize>,
}

impl DivisibilityTarget {
    pub fn new(f: Vec<usize>, t: usize, bipartite: bool) -> Result<Self, KttError> {
        if f.iter().any(|&x| x >= t) {
            return Err(KttError::Precondition("residue out of range".into()));
        }
        if f.iter().sum::<usize>() % t != 0 {
            return Err(KttError::Precondition("residues do not sum to 0 mod t".into()));
        }
        if bipartite && f.iter().step_by(2).sum::<usize>() % t != 0 {
            return Err(KttError::Precondition("X-side residues do not sum to 0 mod t".into()));
        }
        Ok(DivisibilityTarget { f })
    }
}

/// Shortest walk of even length from a to b; BFS over (cluster, parity).
pub fn even_walk(h: &Graph, a: usize, b: usize) -> Option<Vec<usize>> {
    let n = h.n();
    let mut prev = vec![[usize::MAX; 2]; n];
    let mut seen = vec![[false; 2]; n];
    seen[a][0] = true;
    let mut q = VecDeque::from([(a, 0usize)]);
    while let Some((v, p)) = q.pop_front() {
        if v == b && p == 0 && (v != a || prev[v][0] != usize::MAX || a == b) {
            let mut walk = vec![b];
            let (mut x, mut px) = (b, 0);
            while !(x == a && px == 0) {
                let y = prev[x][px];
                px ^= 1;
                x = y;
                walk.push(x);
            }
            walk.reverse();
            return Some(walk);
        }
        for w in h.neighbor_iter(v) {
            if !seen[w][p ^ 1] {
                seen[w][p ^ 1] = true;
                prev[w][p ^ 1] = v;
                q.push_back((w, p ^ 1));
            }
        }
    }
    None
}

/// Copies inside the pools U_i^(2) whose per-cluster counts realize f mod t.
pub fn fix_divisibility(
    g: &Graph,
    pair_graph: &Graph,
    pools: &[VertexSet],
    target: &DivisibilityTarget,
    t: usize,
    bipartite: bool,
) -> Result<KttPacking, KttError> {
    let mut f = target.f.clone();
    let mut avail: Vec<VertexSet> = pools.to_vec();
    let mut out = KttPacking::new(t);
    while let Some(a) = f.iter().position(|&x| x != 0) {
        let b = (a + 1..f.len())
            .find(|&b| f[b] != 0 && (!bipartite || b % 2 == a % 2))
            .ok_or_else(|| KttError::Precondition(format!("no partner for cluster {a}")))?;
        let walk = even_walk(pair_graph, a, b).ok_or(KttError::NoEvenWalk { a, b })?;
        let fa = f[a];
        for j in 0..walk.len() / 2 {
            let (p, mid, q) = (walk[2 * j], walk[2 * j + 1], walk[2 * j + 2]);
            let found = if p == q {
                find_biclique_quota(g, &[(&avail[p], t)], &avail[mid], t)
            } else {
                find_biclique_quota(g, &[(&avail[p], fa), (&avail[q], t - fa)], &avail[mid], t)
            };
            let (sa, sb) = found.ok_or_else(|| KttError::SearchExhausted(format!("walk step {p}-{mid}-{q}")))?;
            for &v in sa.iter() {
                let i = if avail[p].contains(v) { p } else { q };
                avail[i].remove(v);
            }
            for &v in &sb {
                avail[mid].remove(v);
            }
            out.copies.push(KttCopy::new(g, sa, sb, Tag::K2)?);
        }
        f[b] = (f[b] + fa) % t;
        f[a] = 0;
    }
    Ok(out)
}

/// Perfect matching of G'[keep] from alternate edges of a Hamilton cycle.
pub fn template_via_hamilton(g: &Graph, keep: &VertexSet, budget: u64) -> Result<Matching, KttError> {
    let c = hamilton_cycle_within(g, keep, budget).map_err(|e| KttError::SearchExhausted(e.to_string()))?;
    let vs = &c.vertices;
    if vs.len() % 2 == 1 {
        return Err(KttError::Precondition("odd template set".into()));
    }
    Ok(Matching { edges: (0..vs.len() / 2).map(|k| (vs[2 * k], vs[2 * k + 1])).collect() })
}

/// f(i, j) disjoint copies with A ⊆ U_i^(4), B ⊆ U_j^(4) for each counted pair.
pub fn build_template_ktt(
    g: &Graph,
    pools: &[VertexSet],
    counts: &BTreeMap<(usize, usize), usize>,
    t: usize,
    budget: u64,
) -> Result<KttPacking, KttError> {
    let mut avail = pools.to_vec();
    let mut out = KttPacking::new(t);
    for (&(i, j), &c) in counts {
        if c == 0 {
            continue;
        }
        let found = disjoint_bicliques(g, &avail[i], &avail[j], t, c, budget)
            .ok_or_else(|| KttError::SearchExhausted(format!("{c} copies between clusters {i} and {j}")))?;
        for (a, b) in found {
            for &v in &a {
                avail[i].remove(v);
            }
            for &v in &b {
                avail[j].remove(v);
            }
            out.copies.push(KttCopy::new(g, a, b, Tag::K3)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Empty,
    Structured,
    Direct,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpanderReport {
    pub route: Route,
    pub size: usize,
    pub dropped: Vec<usize>,
    pub attempts: usize,
    pub m: usize,
    pub cluster_size: usize,
    pub v0: usize,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub tiles: usize,
    pub regular_pairs: usize,
    pub pairs: usize,
    pub concentration_checked: usize,
    pub no_sparse_cut: bool,
    pub dichotomy: bool,
    /// Distinct failure messages of rejected attempts, first few.
    pub failures: Vec<String>,
}

impl ExpanderReport {
    fn new(size: usize, dropped: Vec<usize>) -> Self {
        ExpanderReport {
            route: Route::Empty,
            size,
            dropped,
            attempts: 0,
            m: 0,
            cluster_size: 0,
            v0: 0,
            k1: 0,
            k2: 0,
            k3: 0,
            tiles: 0,
            regular_pairs: 0,
            pairs: 0,
            concentration_checked: 0,
            no_sparse_cut: true,
            dichotomy: true,
            failures: Vec::new(),
        }
    }
}

/// Vertices removed to reach 2t-divisibility: lowest degree inside the
/// class first, the same number from each side of a bipartite class.
pub fn divisibility_drop(
    g: &Graph,
    class: &VertexSet,
    sides: Option<&(VertexSet, VertexSet)>,
    t: usize,
) -> Result<Vec<usize>, KttError> {
    let lowest = |s: &VertexSet, k: usize| -> Vec<usize> {
        let mut vs: Vec<usize> = s.iter().collect();
        vs.sort_by_key(|&v| (g.degree_into(v, class), v));
        vs.truncate(k);
        vs
    };
    match sides {
        None => Ok(lowest(class, class.len() % (2 * t))),
        Some((x, y)) => {
            if x.len() != y.len() || x.union(y) != *class || !x.is_disjoint(y) {
                return Err(KttError::Precondition(format!("sides {} and {} do not balance the class", x.len(), y.len())));
            }
            let k = x.len() % t;
            let mut d = lowest(x, k);
            d.extend(lowest(y, k));
            Ok(d)
        }
    }
}

/// One structured attempt.
fn structured_attempt(
    g: &Graph,
    class: &VertexSet,
    sides: Option<&(VertexSet, VertexSet)>,
    t: usize,
    params: &ParamPack,
    seed: u64,
    rep: &mut ExpanderReport,
) -> Result<KttPacking, KttError> {
    let n = g.n();
    let sys = build_cluster_system(g, class, sides, t, params, seed).map_err(|e| e.at("clusters"))?;
    rep.m = sys.reduced.n();
    rep.cluster_size = sys.cluster_size();
    rep.v0 = sys.v0.len();
    rep.pairs = sys.pair_checks.len();
    rep.regular_pairs = sys.pair_checks.iter().filter(|p| p.regular).count();
    let split = five_way_split(&sys, params, t, 0.5, seed.wrapping_mul(31).wrapping_add(7)).map_err(|e| e.at("split"))?;
    rep.concentration_checked = split.concentration_checked;
    rep.no_sparse_cut = split.no_sparse_cut;
    rep.dichotomy = split.dichotomy;
    let k1 = cover_exceptional(g, &sys.v0, &split.union(0, n), t).map_err(|e| e.at("exceptional cover"))?;
    let count_in = |p: &KttPacking, i: usize| p.copies.iter().flat_map(|c| c.vertices()).filter(|&v| sys.clusters[i].contains(v)).count();
    let k = sys.clusters.len();
    let f: Vec<usize> = (0..k).map(|i| (t - count_in(&k1, i) % t) % t).collect();
    let target = DivisibilityTarget::new(f, t, sys.bipartite).map_err(|e| e.at("divisibility target"))?;
    let pools2: Vec<VertexSet> = split.parts.iter().map(|p| p[1].clone()).collect();
    let k2 = fix_divisibility(g, &sys.pair_graph, &pools2, &target, t, sys.bipartite).map_err(|e| e.at("divisibility"))?;
    let mut keep = VertexSet::new(n);
    let mut u3_sizes = Vec::with_capacity(k);
    for i in 0..k {
        let used = count_in(&k1, i) + count_in(&k2, i);
        debug_assert_eq!(used % t, 0);
        let size = split.sizes[2]
            .checked_sub(used / t)
            .ok_or_else(|| KttError::Validation(format!("cluster {i}: U^(3) too small")).at("template"))?;
        for v in split.parts[i][2].iter().take(size) {
            keep.insert(v);
        }
        u3_sizes.push(size);
    }
    let tmpl = template_matching(&sys.gprime, &keep.complement()).map_err(|e| KttError::Matching(e).at("template"))?;
    let mut counts = BTreeMap::new();
    let owner = |v: usize| sys.cluster_of(v).expect("template vertex in a cluster");
    for &(a, b) in &tmpl.edges {
        let (i, j) = (owner(a), owner(b));
        *counts.entry((i.min(j), i.max(j))).or_insert(0usize) += 1;
    }
    let pools4: Vec<VertexSet> = split.parts.iter().map(|p| p[3].clone()).collect();
    let k3 = build_template_ktt(&sys.gprime, &pools4, &counts, t, TILE_BUDGET).map_err(|e| e.at("template copies"))?;
    let mut packing = KttPacking::new(t);
    packing.extend(k1);
    packing.extend(k2);
    let k3_use: Vec<usize> = (0..k).map(|i| count_in(&k3, i)).collect();
    packing.extend(k3);
    let used = packing.covered(n);
    let rest: Vec<VertexSet> = sys.clusters.iter().map(|c| c.difference(&used)).collect();
    for i in 0..k {
        if rest[i].len() != sys.cluster_size() / 2 || k3_use[i] != t * u3_sizes[i] {
            return Err(KttError::Validation(format!("cluster {i}: {} vertices left, expected {}", rest[i].len(), sys.cluster_size() / 2)).at("ledger"));
        }
    }
    for &(a, b) in &sys.matched_pairs {
        let tiles = perfect_ktt_tiling_bipartite(&sys.gprime, &rest[a], &rest[b], t, TILE_BUDGET).map_err(|e| e.at("pair tiling"))?;
        packing.extend(tiles);
    }
    rep.k1 = packing.count_tag(Tag::K1);
    rep.k2 = packing.count_tag(Tag::K2);
    rep.k3 = packing.count_tag(Tag::K3);
    rep.tiles = packing.count_tag(Tag::Tile);
    Ok(packing)
}

/// Near-perfect packing of one class: drop at most 2t−1 vertices, then try
/// seeded structured attempts and fall back to the exact direct tiler.
pub fn pack_expander(
    g: &Graph,
    class: &VertexSet,
    sides: Option<&(VertexSet, VertexSet)>,
    t: usize,
    params: &ParamPack,
    seed: u64,
) -> Result<(KttPacking, ExpanderReport), KttError> {
    let dropped = divisibility_drop(g, class, sides, t)?;
    let mut z = class.clone();
    for &v in &dropped {
        z.remove(v);
    }
    let sides_z = sides.map(|(x, y)| (x.difference(&VertexSet::from_iter(g.n(), dropped.iter().copied())), y.difference(&VertexSet::from_iter(g.n(), dropped.iter().copied()))));
    let mut rep = ExpanderReport::new(class.len(), dropped);
    if z.is_empty() {
        return Ok((KttPacking::new(t), rep));
    }
    let structured = choose_clusters(z.len(), sides_z.is_some(), t).is_some_and(|(_, u)| u >= 4 * t);
    if structured {
        for attempt in 0..params.split_attempts {
            rep.attempts = attempt + 1;
            let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt as u64);
            match structured_attempt(g, &z, sides_z.as_ref(), t, params, s, &mut rep) {
                Ok(p) => {
                    rep.route = Route::Structured;
                    return finish(g, class, p, rep, t);
                }
                Err(e) => {
                    let msg = e.to_string();
                    if rep.failures.len() < 8 && !rep.failures.contains(&msg) {
                        rep.failures.push(msg);
                    }
                }
            }
        }
    }
    let host = match &sides_z {
        Some((x, y)) => {
            let mut h = Graph::new(g.n());
            for (a, b) in g.edges() {
                if (x.contains(a) && y.contains(b)) || (x.contains(b) && y.contains(a)) {
                    h.add_edge(a, b);
                }
            }
            h
        }
        None => g.clone(),
    };
    let p = match &sides_z {
        Some((x, y)) => perfect_ktt_tiling_bipartite(&host, x, y, t, params.ham_budget),
        None => perfect_ktt_tiling_general(&host, &z, t, params.ham_budget),
    }
    .map_err(|e| e.at("direct tiling"))?;
    let copies = p.copies.into_iter().map(|mut c| {
        c.tag = Tag::Direct;
        c
    });
    rep.route = Route::Direct;
    finish(g, class, KttPacking { t, copies: copies.collect() }, rep, t)
}

fn finish(
    g: &Graph,
    class: &VertexSet,
    p: KttPacking,
    rep: ExpanderReport,
    t: usize,
) -> Result<(KttPacking, ExpanderReport), KttError> {
    let cov = p.verify(g).map_err(KttError::Validation)?;
    if !cov.is_subset(class) || class.len() - cov.len() > 2 * t - 1 {
        return Err(KttError::Validation(format!("{} vertices of the class uncovered", class.len() - cov.len())));
    }
    Ok((p, rep))
}
