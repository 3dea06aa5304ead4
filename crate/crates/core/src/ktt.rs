//! K_{t,t} copies and packings, biclique search, ε-regularity, and exact
//! tilers for bipartite pairs and small general graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, VertexSet};
use crate::matching::MatchingError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KttError {
    #[error("no K_{{t,t}} found")]
    NotFound,
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("pair too irregular: {removed} vertices below the degree floor, at most {allowed} allowed")]
    TooIrregular { removed: usize, allowed: usize },
    #[error("validation: {0}")]
    Validation(String),
    #[error("concentration fails at vertex {vertex}, cluster {cluster}, part {part}")]
    Concentration { vertex: usize, cluster: usize, part: usize },
    #[error("exceptional vertices left uncovered: {0:?}")]
    Coverage(Vec<usize>),
    #[error("no even walk between clusters {a} and {b}")]
    NoEvenWalk { a: usize, b: usize },
    #[error("search exhausted: {0}")]
    SearchExhausted(String),
    #[error("no perfect tiling ({})", if *exhausted { "search exhausted" } else { "budget hit" })]
    Infeasible { exhausted: bool },
    #[error("template matching: {0}")]
    Matching(MatchingError),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<KttError> },
}

impl KttError {
    pub fn at(self, stage: &'static str) -> KttError {
        KttError::Stage { stage, source: Box::new(self) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "K")]
    Balance,
    #[serde(rename = "K_1")]
    K1,
    #[serde(rename = "K_2")]
    K2,
    #[serde(rename = "K_3")]
    K3,
    #[serde(rename = "blow-up-tile")]
    Tile,
    #[serde(rename = "direct")]
    Direct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KttCopy {
    #[serde(rename = "A")]
    pub a: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<usize>,
    pub tag: Tag,
}

impl KttCopy {
    /// Builds a copy after checking all t² edges and distinctness.
    pub fn new(g: &Graph, mut a: Vec<usize>, mut b: Vec<usize>, tag: Tag) -> Result<Self, KttError> {
        a.sort_unstable();
        b.sort_unstable();
        let c = KttCopy { a, b, tag };
        c.check(g).map_err(KttError::Validation)?;
        Ok(c)
    }

    pub fn check(&self, g: &Graph) -> Result<(), String> {
        if self.a.len() != self.b.len() || self.a.is_empty() {
            return Err(format!("sides of sizes {} and {}", self.a.len(), self.b.len()));
        }
        let mut all: Vec<usize> = self.a.iter().chain(&self.b).copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) || all.last().is_some_and(|&v| v >= g.n()) {
            return Err(format!("copy {:?}|{:?} repeats or exceeds vertices", self.a, self.b));
        }
        for &x in &self.a {
            for &y in &self.b {
                if !g.has_edge(x, y) {
                    return Err(format!("copy {:?}|{:?} misses edge {x}-{y}", self.a, self.b));
                }
            }
        }
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.a.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.a.iter().chain(&self.b).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KttPacking {
    pub t: usize,
    pub copies: Vec<KttCopy>,
}

impl KttPacking {
    pub fn new(t: usize) -> Self {
        KttPacking { t, copies: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.copies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.copies.is_empty()
    }

    pub fn covered(&self, n: usize) -> VertexSet {
        VertexSet::from_iter(n, self.copies.iter().flat_map(|c| c.vertices()))
    }

    pub fn extend(&mut self, other: KttPacking) {
        self.copies.extend(other.copies);
    }

    /// Checks each copy against `g`, size t, and pairwise disjointness;
    /// returns the covered set.
    pub fn verify(&self, g: &Graph) -> Result<VertexSet, String> {
        let mut seen = VertexSet::new(g.n());
        for c in &self.copies {
            if c.t() != self.t {
                return Err(format!("copy {:?}|{:?} is not a K_{{{t},{t}}}", c.a, c.b, t = self.t));
            }
            c.check(g)?;
            for v in c.vertices() {
                if !seen.insert(v) {
                    return Err(format!("vertex {v} lies in two copies"));
                }
            }
        }
        Ok(seen)
    }

    pub fn count_tag(&self, tag: Tag) -> usize {
        self.copies.iter().filter(|c| c.tag == tag).count()
    }
}

/// B ⊆ `yb` of size `sb`, and A made of `quota` vertices from each pool, with
/// A complete to B. Pools are consumed in order; A avoids B. Y-vertices are
/// tried by descending degree into the pools, ties by id.
pub fn find_biclique_quota(
    g: &Graph,
    pools: &[(&VertexSet, usize)],
    yb: &VertexSet,
    sb: usize,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut union = VertexSet::new(g.n());
    for (p, _) in pools {
        union.union_with(p);
    }
    let mut ys: Vec<usize> = yb.iter().collect();
    ys.sort_by_key(|&y| (std::cmp::Reverse(g.degree_into(y, &union)), y));
    let mut chosen = Vec::with_capacity(sb);
    biclique_dfs(g, pools, &ys, 0, sb, &union, &mut chosen)
}

fn biclique_dfs(
    g: &Graph,
    pools: &[(&VertexSet, usize)],
    ys: &[usize],
    from: usize,
    sb: usize,
    common: &VertexSet,
    chosen: &mut Vec<usize>,
) -> Option<(Vec<usize>, Vec<usize>)> {
    if chosen.len() == sb {
        let mut avail = common.clone();
        for &b in chosen.iter() {
            avail.remove(b);
        }
        let mut a = Vec::new();
        for (p, q) in pools {
            let picks: Vec<usize> = avail.intersection(p).iter().take(*q).collect();
            if picks.len() < *q {
                return None;
            }
            for &v in &picks {
                avail.remove(v);
            }
            a.extend(picks);
        }
        return Some((a, chosen.clone()));
    }
    let need = sb - chosen.len();
    for i in from..ys.len() {
        if ys.len() - i < need {
            break;
        }
        let y = ys[i];
        let c = common.intersection(&g.neighbors(y));
        if pools.iter().any(|(p, q)| c.intersection_len(p) < *q) {
            continue;
        }
        chosen.push(y);
        if let Some(r) = biclique_dfs(g, pools, ys, i + 1, sb, &c, chosen) {
            return Some(r);
        }
        chosen.pop();
    }
    None
}

/// A K_{t,t} with A ⊆ X and B ⊆ Y (X, Y may overlap; the copy is disjoint).
pub fn find_ktt(g: &Graph, x: &VertexSet, y: &VertexSet, t: usize) -> Option<KttCopy> {
    let (a, b) = find_biclique_quota(g, &[(x, t)], y, t)?;
    Some(KttCopy::new(g, a, b, Tag::Balance).expect("search returns complete bicliques"))
}

/// Unbalanced Kővári–Sós–Turán search: every vertex of X must have at least
/// `floor` neighbours in Y (at least 1 when no floor is given).
pub fn find_ktt_unbalanced(
    g: &Graph,
    x: &VertexSet,
    y: &VertexSet,
    t: usize,
    floor: Option<usize>,
) -> Result<KttCopy, KttError> {
    if t == 0 {
        return Err(KttError::Precondition("t = 0".into()));
    }
    if !x.is_disjoint(y) {
        return Err(KttError::Precondition("X and Y overlap".into()));
    }
    let f = floor.unwrap_or(1).max(1);
    if let Some(v) = x.iter().find(|&v| g.degree_into(v, y) < f) {
        return Err(KttError::Precondition(format!(
            "vertex {v} has {} neighbours in Y, below the floor {f}",
            g.degree_into(v, y)
        )));
    }
    find_ktt(g, x, y, t).ok_or(KttError::NotFound)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityVerdict {
    pub regular: bool,
    pub density: f64,
    /// Largest deviation |d(X,Y) − d(A,B)| seen, with its witness.
    pub max_gap: f64,
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
    pub exhaustive: bool,
}

fn min_size(eps: f64, k: usize) -> usize {
    ((eps * k as f64) - 1e-9).ceil().max(1.0) as usize
}

/// ε-regularity of the pair (A, B). For each X the extreme Y of each size are
/// the top and bottom vertices of B by degree into X, so enumerating X alone
/// is exact; X is enumerated fully when |A|, |B| ≤ 14 and sampled otherwise.
pub fn eps_regular_test(g: &Graph, a: &VertexSet, b: &VertexSet, eps: f64, seed: u64) -> RegularityVerdict {
    let al = a.to_vec();
    let bl = b.to_vec();
    let (na, nb) = (al.len(), bl.len());
    let density = g.e_between(a, b) as f64 / (na * nb).max(1) as f64;
    let mut best = (0.0f64, None::<(Vec<usize>, Vec<usize>)>);
    let (ka, kb) = (min_size(eps, na), min_size(eps, nb));
    let probe = |xs: &[usize], best: &mut (f64, Option<(Vec<usize>, Vec<usize>)>)| {
        let xset = VertexSet::from_iter(g.n(), xs.iter().copied());
        let mut deg: Vec<(usize, usize)> = bl.iter().map(|&y| (g.degree_into(y, &xset), y)).collect();
        deg.sort_unstable();
        let total: usize = deg.iter().map(|p| p.0).sum();
        let mut low = 0usize;
        for k in 1..=nb {
            low += deg[k - 1].0;
            if k < kb {
                continue;
            }
            let high = total - deg[..nb - k].iter().map(|p| p.0).sum::<usize>();
            for (sum, lowside) in [(low, true), (high, false)] {
                let dxy = sum as f64 / (xs.len() * k) as f64;
                let gap = (dxy - density).abs();
                if gap > best.0 + 1e-12 {
                    let ys: Vec<usize> = if lowside {
                        deg[..k].iter().map(|p| p.1).collect()
                    } else {
                        deg[nb - k..].iter().map(|p| p.1).collect()
                    };
                    *best = (gap, Some((xs.to_vec(), ys)));
                }
            }
        }
    };
    let exhaustive = na <= 14 && nb <= 14;
    if na == 0 || nb == 0 {
        return RegularityVerdict { regular: true, density, max_gap: 0.0, witness: None, exhaustive: true };
    }
    if exhaustive {
        for mask in 1u32..(1u32 << na) {
            if (mask.count_ones() as usize) < ka {
                continue;
            }
            let xs: Vec<usize> = (0..na).filter(|&i| mask >> i & 1 == 1).map(|i| al[i]).collect();
            probe(&xs, &mut best);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = al.clone();
        for _ in 0..2000 {
            for j in 0..ka {
                let r = rng.gen_range(j..na);
                pool.swap(j, r);
            }
            let xs = pool[..ka].to_vec();
            probe(&xs, &mut best);
        }
    }
    let regular = best.0 < eps;
    RegularityVerdict { regular, density, max_gap: best.0, witness: if regular { None } else { best.1 }, exhaustive }
}

/// Removes low-degree vertices until every survivor has cross-degree above
/// (d − 2ε)·|opposite side|.
pub fn make_super_regular(
    g: &Graph,
    a: &VertexSet,
    b: &VertexSet,
    eps: f64,
) -> Result<(VertexSet, VertexSet), KttError> {
    if a.is_empty() || b.is_empty() {
        return Err(KttError::Precondition("empty side".into()));
    }
    let d = g.e_between(a, b) as f64 / (a.len() * b.len()) as f64;
    if d <= 2.0 * eps {
        return Err(KttError::Precondition(format!("density {d:.3} ≤ 2ε")));
    }
    let (mut ra, mut rb) = (a.clone(), b.clone());
    let allow_a = (eps * a.len() as f64 + 1e-9).floor() as usize;
    let allow_b = (eps * b.len() as f64 + 1e-9).floor() as usize;
    let floor_of = |opp: usize| (d - 2.0 * eps) * opp as f64;
    loop {
        let fa = floor_of(rb.len());
        let fb = floor_of(ra.len());
        let low_a: Vec<usize> = ra.iter().filter(|&v| g.degree_into(v, &rb) as f64 <= fa).collect();
        let low_b: Vec<usize> = rb.iter().filter(|&v| g.degree_into(v, &ra) as f64 <= fb).collect();
        if low_a.is_empty() && low_b.is_empty() {
            break;
        }
        for v in low_a {
            ra.remove(v);
        }
        for v in low_b {
            rb.remove(v);
        }
        let (da, db) = (a.len() - ra.len(), b.len() - rb.len());
        if da > allow_a || db > allow_b || ra.is_empty() || rb.is_empty() {
            return Err(KttError::TooIrregular { removed: da.max(db), allowed: allow_a.max(allow_b) });
        }
    }
    Ok((ra, rb))
}

/// Budgeted search state shared by the tilers.
struct Tiler<'g> {
    g: &'g Graph,
    t: usize,
    budget: u64,
    nodes: u64,
    tag: Tag,
}

fn subsets(items: &[usize], k: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, from: usize, cap: usize) {
    if out.len() >= cap {
        return;
    }
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in from..items.len() {
        if items.len() - i < k - cur.len() {
            break;
        }
        cur.push(items[i]);
        subsets(items, k, out, cur, i + 1, cap);
        cur.pop();
    }
}

const SUBSET_CAP: usize = 200_000;

impl Tiler<'_> {
    /// Copies containing `v` with `v` on the side drawn from `own`, the
    /// opposite side drawn from `opp`; opposite t-sets by descending common
    /// neighbourhood inside `own`.
    fn candidates(&self, v: usize, own: &VertexSet, opp: &VertexSet) -> Vec<(Vec<usize>, Vec<usize>)> {
        let t = self.t;
        let nv: Vec<usize> = self.g.neighbors(v).intersection(opp).iter().collect();
        let mut ts = Vec::new();
        subsets(&nv, t, &mut ts, &mut Vec::new(), 0, SUBSET_CAP);
        let mut scored: Vec<(usize, Vec<usize>, VertexSet)> = ts
            .into_iter()
            .filter_map(|tt| {
                let mut c = own.clone();
                c.remove(v);
                for &u in &tt {
                    c.intersect_with(&self.g.neighbors(u));
                }
                for &u in &tt {
                    c.remove(u);
                }
                (c.len() + 1 >= t).then(|| (c.len(), tt, c))
            })
            .collect();
        scored.sort_by(|x, y| y.0.cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
        let mut out = Vec::new();
        for (_, tt, c) in scored {
            let cl: Vec<usize> = c.iter().collect();
            let mut ss = Vec::new();
            subsets(&cl, t - 1, &mut ss, &mut Vec::new(), 0, SUBSET_CAP);
            for mut s in ss {
                s.push(v);
                out.push((s, tt.clone()));
            }
        }
        out
    }

    /// Bipartite pair: returns Some(found) or None on budget exhaustion.
    fn bip(&mut self, ra: &mut VertexSet, rb: &mut VertexSet, out: &mut Vec<KttCopy>) -> Option<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return None;
        }
        if ra.is_empty() && rb.is_empty() {
            return Some(true);
        }
        let mut pick: Option<(usize, usize, bool)> = None;
        for (side, own, opp) in [(true, &*ra, &*rb), (false, &*rb, &*ra)] {
            for v in own.iter() {
                let dg = self.g.degree_into(v, opp);
                if dg < self.t {
                    return Some(false);
                }
                if pick.map_or(true, |p| dg < p.0) {
                    pick = Some((dg, v, side));
                }
            }
        }
        let (_, v, in_a) = pick.expect("nonempty");
        let cands = if in_a { self.candidates(v, ra, rb) } else { self.candidates(v, rb, ra) };
        for (s, tt) in cands {
            let (a, b) = if in_a { (s, tt) } else { (tt, s) };
            for &x in &a {
                ra.remove(x);
            }
            for &y in &b {
                rb.remove(y);
            }
            out.push(KttCopy { a: a.clone(), b: b.clone(), tag: self.tag });
            match self.bip(ra, rb, out) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            out.pop();
            for &x in &a {
                ra.insert(x);
            }
            for &y in &b {
                rb.insert(y);
            }
        }
        Some(false)
    }

    /// General graph: the fail-first vertex goes to side A of its copy.
    fn general(&mut self, r: &mut VertexSet, out: &mut Vec<KttCopy>) -> Option<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return None;
        }
        if r.is_empty() {
            return Some(true);
        }
        let mut pick: Option<(usize, usize)> = None;
        for v in r.iter() {
            let dg = self.g.degree_into(v, r);
            if dg < self.t {
                return Some(false);
            }
            if pick.map_or(true, |p| dg < p.0) {
                pick = Some((dg, v));
            }
        }
        let v = pick.expect("nonempty").1;
        let own = r.clone();
        for (a, b) in self.candidates(v, &own, &own) {
            for x in a.iter().chain(&b) {
                r.remove(*x);
            }
            out.push(KttCopy { a: a.clone(), b: b.clone(), tag: self.tag });
            match self.general(r, out) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            out.pop();
            for x in a.iter().chain(&b) {
                r.insert(*x);
            }
        }
        Some(false)
    }
}

fn finish(g: &Graph, t: usize, mut copies: Vec<KttCopy>) -> Result<KttPacking, KttError> {
    for c in &mut copies {
        c.a.sort_unstable();
        c.b.sort_unstable();
    }
    let p = KttPacking { t, copies };
    p.verify(g).map_err(KttError::Validation)?;
    Ok(p)
}

/// Exact perfect K_{t,t}-tiling of G[A, B] (budgeted backtracking).
pub fn perfect_ktt_tiling_bipartite(
    g: &Graph,
    a: &VertexSet,
    b: &VertexSet,
    t: usize,
    budget: u64,
) -> Result<KttPacking, KttError> {
    if a.len() != b.len() || a.len() % t != 0 || !a.is_disjoint(b) {
        return Err(KttError::Precondition(format!("sides {} and {} for t = {t}", a.len(), b.len())));
    }
    let mut tl = Tiler { g, t, budget, nodes: 0, tag: Tag::Tile };
    let mut out = Vec::new();
    match tl.bip(&mut a.clone(), &mut b.clone(), &mut out) {
        Some(true) => finish(g, t, out),
        Some(false) => Err(KttError::Infeasible { exhausted: true }),
        None => Err(KttError::Infeasible { exhausted: false }),
    }
}

/// Exact perfect K_{t,t}-tiling of G[Z] (budgeted backtracking).
pub fn perfect_ktt_tiling_general(g: &Graph, z: &VertexSet, t: usize, budget: u64) -> Result<KttPacking, KttError> {
    if z.len() % (2 * t) != 0 {
        return Err(KttError::Precondition(format!("{} vertices, not divisible by {}", z.len(), 2 * t)));
    }
    let mut tl = Tiler { g, t, budget, nodes: 0, tag: Tag::Direct };
    let mut out = Vec::new();
    match tl.general(&mut z.clone(), &mut out) {
        Some(true) => finish(g, t, out),
        Some(false) => Err(KttError::Infeasible { exhausted: true }),
        None => Err(KttError::Infeasible { exhausted: false }),
    }
}

/// Up to `count` pairwise disjoint copies with A ⊆ X, B ⊆ Y, found greedily
/// with budgeted backtracking.
pub fn disjoint_bicliques(
    g: &Graph,
    x: &VertexSet,
    y: &VertexSet,
    t: usize,
    count: usize,
    budget: u64,
) -> Option<Vec<(Vec<usize>, Vec<usize>)>> {
    fn go(
        g: &Graph,
        x: &mut VertexSet,
        y: &mut VertexSet,
        t: usize,
        left: usize,
        nodes: &mut u64,
        budget: u64,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) -> bool {
        *nodes += 1;
        if left == 0 {
            return true;
        }
        if *nodes > budget || x.len() < t * left || y.len() < t * left {
            return false;
        }
        // Anchor at the least-degree usable vertex of X.
        let mut xs: Vec<usize> = x.iter().filter(|&v| g.degree_into(v, y) >= t).collect();
        xs.sort_by_key(|&v| (g.degree_into(v, y), v));
        for &v in xs.iter().take(4) {
            let ny = g.neighbors(v).intersection(y);
            let mut tried = 0;
            let mut yl: Vec<usize> = ny.iter().collect();
            yl.sort_by_key(|&u| (g.degree_into(u, x), u));
            let mut ts = Vec::new();
            subsets(&yl, t, &mut ts, &mut Vec::new(), 0, 64);
            for tt in ts {
                let mut c = x.clone();
                c.remove(v);
                for &u in &tt {
                    c.intersect_with(&g.neighbors(u));
                }
                if c.len() + 1 < t {
                    continue;
                }
                let mut cl: Vec<usize> = c.iter().collect();
                cl.sort_by_key(|&u| (g.degree_into(u, y), u));
                let mut a: Vec<usize> = cl.into_iter().take(t - 1).collect();
                a.push(v);
                for &u in &a {
                    x.remove(u);
                }
                for &u in &tt {
                    y.remove(u);
                }
                out.push((a.clone(), tt.clone()));
                if go(g, x, y, t, left - 1, nodes, budget, out) {
                    return true;
                }
                out.pop();
                for &u in &a {
                    x.insert(u);
                }
                for &u in &tt {
                    y.insert(u);
                }
                tried += 1;
                if tried >= 3 || *nodes > budget {
                    break;
                }
            }
            if *nodes > budget {
                return false;
            }
        }
        false
    }
    let mut out = Vec::new();
    let mut nodes = 0;
    go(g, &mut x.clone(), &mut y.clone(), t, count, &mut nodes, budget, &mut out).then_some(out)
}
