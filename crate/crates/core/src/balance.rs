//! Balancing the classes: the inter-class graph H, the vertex-moving
//! procedure, the balancing K_{t,t} collection and the final trim.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::decompose::{find_sparse_cut, max_cut_bipartition, Check, Decomposition, Label, ParamPack};
use crate::graph::{bipartite_distance, Graph, VertexSet};
use crate::ktt::{find_biclique_quota, KttCopy, KttPacking, Tag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("graph is not regular")]
    NotRegular,
    #[error("({property}) fails for class {class}: {detail}")]
    Invariant { property: &'static str, class: usize, detail: String },
    #[error("no sided partition of class {class} meets (G1)/(G2) after {tries} draws")]
    Partition { class: usize, tries: usize },
    #[error("balancing copies exhausted: {0}")]
    SearchExhausted(String),
    #[error("({property}) fails: {detail}")]
    Validation { property: &'static str, detail: String },
}

fn side_name(s: usize) -> &'static str {
    if s == 0 {
        "X"
    } else {
        "Y"
    }
}

/// One step of the vertex-moving procedure, with everything a replay needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoveStep {
    pub k: usize,
    pub v: usize,
    /// (class, side) left by v; side 0 is X.
    pub from: (usize, usize),
    /// (class, side) joined by v.
    pub to: (usize, usize),
    /// The edges E_{i,j}.
    pub removed: Vec<(usize, usize)>,
    /// H-edges between v and W_j, also removed.
    pub detached: Vec<(usize, usize)>,
    pub edges_after: usize,
}

impl MoveStep {
    pub fn trace_line(&self) -> String {
        format!(
            "step {}: v={} from ({},{}) to ({},{}) |E_ij|={} e(H)={}",
            self.k,
            self.v,
            self.from.0,
            side_name(self.from.1),
            self.to.0,
            side_name(self.to.1),
            self.removed.len(),
            self.edges_after
        )
    }
}

#[derive(Debug, Clone)]
pub struct BalanceState {
    pub d: usize,
    /// sides[i] = [X_i, Y_i].
    pub sides: Vec<[VertexSet; 2]>,
    pub labels: Vec<Label>,
    pub h: Graph,
    pub h_start: Graph,
    pub sides_start: Vec<[VertexSet; 2]>,
    pub steps: Vec<MoveStep>,
}

impl BalanceState {
    /// A state from explicit sides; H removes X_i–Y_i edges and the
    /// lexicographically lowest min(e(X_i), e(Y_i)) edges inside each side.
    pub fn from_sides(g: &Graph, d: usize, sides: Vec<[VertexSet; 2]>, labels: Vec<Label>) -> Self {
        let n = g.n();
        let mut h = g.clone();
        for [x, y] in &sides {
            for (a, b) in g.edges() {
                if (x.contains(a) && y.contains(b)) || (x.contains(b) && y.contains(a)) {
                    h.remove_edge(a, b);
                }
            }
            let k = g.e_within(x).min(g.e_within(y));
            for s in [x, y] {
                let within: Vec<(usize, usize)> = g.edges().into_iter().filter(|&(a, b)| s.contains(a) && s.contains(b)).collect();
                for &(a, b) in within.iter().take(k) {
                    h.remove_edge(a, b);
                }
            }
        }
        debug_assert_eq!(h.n(), n);
        BalanceState { d, h_start: h.clone(), sides_start: sides.clone(), sides, labels, h, steps: Vec::new() }
    }

    pub fn r(&self) -> usize {
        self.sides.len()
    }

    pub fn class(&self, i: usize) -> VertexSet {
        self.sides[i][0].union(&self.sides[i][1])
    }

    /// e_H(W, W') for two sides; a side paired with itself counts e_H(W).
    pub fn e_sides(&self, a: (usize, usize), b: (usize, usize)) -> usize {
        let (wa, wb) = (&self.sides[a.0][a.1], &self.sides[b.0][b.1]);
        if a == b {
            self.h.e_within(wa)
        } else {
            self.h.e_between(wa, wb)
        }
    }

    /// Left side of identity (H1) for class i, as an exact integer.
    pub fn h1_value(&self, i: usize) -> i64 {
        let z = self.class(i);
        let out = z.complement();
        let [x, y] = &self.sides[i];
        let ex = self.h.e_between(x, &out) as i64 - self.h.e_between(y, &out) as i64;
        let within = self.h.e_within(x) as i64 - self.h.e_within(y) as i64;
        ex + 2 * within - self.d as i64 * (x.len() as i64 - y.len() as i64)
    }

    pub fn h2_bound(&self, delta: f64) -> usize {
        let n = self.h.n() as f64;
        self.d.saturating_sub((delta * n / 3.0).floor() as usize)
    }

    /// (H1), (H1b) and (H2).
    pub fn check_invariants(&self, delta: f64) -> Result<(), BalanceError> {
        for i in 0..self.r() {
            let v = self.h1_value(i);
            if v != 0 {
                return Err(BalanceError::Invariant { property: "H1", class: i, detail: format!("identity evaluates to {v}") });
            }
            let cross = self.h.e_between(&self.sides[i][0], &self.sides[i][1]);
            if cross != 0 {
                return Err(BalanceError::Invariant { property: "H1b", class: i, detail: format!("{cross} X–Y edges in H") });
            }
        }
        let bound = self.h2_bound(delta);
        if let Some(v) = (0..self.h.n()).find(|&v| self.h.degree(v) > bound) {
            return Err(BalanceError::Invariant {
                property: "H2",
                class: self.class_of(v).unwrap_or(usize::MAX),
                detail: format!("vertex {v} has H-degree {} > {bound}", self.h.degree(v)),
            });
        }
        Ok(())
    }

    pub fn class_of(&self, v: usize) -> Option<usize> {
        (0..self.r()).find(|&i| self.sides[i][0].contains(v) || self.sides[i][1].contains(v))
    }

    pub fn trace(&self) -> Vec<String> {
        self.steps.iter().map(MoveStep::trace_line).collect()
    }

    pub fn moved(&self) -> usize {
        self.steps.len()
    }
}

/// Uniformly random balanced sides for a far class, re-drawn until
/// (G1) |e(X) − e(Y)| ≤ βn² and (G2) min cross-degree ≥ δn/3; after 50 draws
/// the best draw is improved by balancing swaps.
pub fn far_class_sides(g: &Graph, z: &VertexSet, params: &ParamPack, seed: u64, class: usize) -> Result<[VertexSet; 2], BalanceError> {
    let n = g.n() as f64;
    let g1 = params.beta * n * n;
    let g2 = params.delta * n / 3.0;
    let skew = |x: &VertexSet, y: &VertexSet| (g.e_within(x) as f64 - g.e_within(y) as f64).abs();
    let cross_ok = |x: &VertexSet, y: &VertexSet| {
        x.iter().all(|v| g.degree_into(v, y) as f64 >= g2) && y.iter().all(|v| g.degree_into(v, x) as f64 >= g2)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vs = z.to_vec();
    let mut best: Option<(f64, VertexSet, VertexSet)> = None;
    for _ in 0..50 {
        vs.shuffle(&mut rng);
        let x = VertexSet::from_iter(g.n(), vs[..vs.len() / 2].iter().copied());
        let y = z.difference(&x);
        if !cross_ok(&x, &y) {
            continue;
        }
        let s = skew(&x, &y);
        if s <= g1 {
            return Ok([x, y]);
        }
        if best.as_ref().map_or(true, |b| s < b.0) {
            best = Some((s, x, y));
        }
    }
    let (mut s, mut x, mut y) = best.ok_or(BalanceError::Partition { class, tries: 50 })?;
    // Swap pairs while the skew strictly drops and (G2) survives.
    'improve: while s > g1 {
        let (xl, yl) = (x.to_vec(), y.to_vec());
        for &a in &xl {
            for &b in &yl {
                let (mut x2, mut y2) = (x.clone(), y.clone());
                x2.remove(a);
                y2.remove(b);
                x2.insert(b);
                y2.insert(a);
                let s2 = skew(&x2, &y2);
                if s2 < s && cross_ok(&x2, &y2) {
                    (s, x, y) = (s2, x2, y2);
                    continue 'improve;
                }
            }
        }
        return Err(BalanceError::Partition { class, tries: 50 });
    }
    Ok([x, y])
}

/// H from G and the decomposition, with (H1)–(H3) asserted.
pub fn build_inter_class_graph(g: &Graph, dec: &Decomposition, seed: u64) -> Result<BalanceState, BalanceError> {
    let d = g.regular_degree().ok_or(BalanceError::NotRegular)?;
    let p = &dec.params;
    let mut sides = Vec::with_capacity(dec.r());
    for (i, z) in dec.classes.iter().enumerate() {
        let s = match &dec.sided[i] {
            Some((x, y)) => [x.clone(), y.clone()],
            None if z.len() < 2 => [z.clone(), VertexSet::new(g.n())],
            None => far_class_sides(g, z, p, seed ^ (i as u64).wrapping_mul(0x9E37), i)?,
        };
        sides.push(s);
    }
    let state = BalanceState::from_sides(g, d, sides, dec.labels.clone());
    state.check_invariants(p.delta)?;
    let n = g.n() as f64;
    let h3 = 2.0 * dec.r() as f64 * p.beta * n * n;
    if state.h.edge_count() as f64 > h3 {
        return Err(BalanceError::Invariant { property: "H3", class: 0, detail: format!("e(H) = {} > {h3}", state.h.edge_count()) });
    }
    Ok(state)
}

/// First qualifying (i, W_i, j, W_j, v) in lexicographic order.
fn next_move(st: &BalanceState, rho_n: f64) -> Option<((usize, usize), (usize, usize), usize)> {
    let r = st.r();
    for i in 0..r {
        for si in 0..2 {
            for j in 0..r {
                for sj in 0..2 {
                    let (a, b) = ((i, si), (j, sj));
                    if st.e_sides(a, b) < st.d {
                        continue;
                    }
                    let wj = &st.sides[j][sj];
                    for v in st.sides[i][si].iter() {
                        if st.h.degree_into(v, wj) as f64 >= rho_n {
                            return Some((a, b, v));
                        }
                    }
                }
            }
        }
    }
    None
}

/// Runs the vertex-moving loop to its fixpoint, re-checking (H1)–(H3) after
/// every step.
pub fn move_high_degree_vertices(mut st: BalanceState, params: &ParamPack) -> Result<BalanceState, BalanceError> {
    let n = st.h.n();
    let rho_n = params.rho * n as f64;
    let start_edges = st.h.edge_count();
    let start_max = st.h.max_degree();
    while let Some((a, b, v)) = next_move(&st, rho_n) {
        let dh = st.h.degree(v);
        let mut wi = st.sides[a.0][a.1].clone();
        let mut wj = st.sides[b.0][b.1].clone();
        wi.remove(v);
        wj.remove(v);
        let need = st.d - dh;
        let eligible: Vec<(usize, usize)> = st
            .h
            .edges()
            .into_iter()
            .filter(|&(x, y)| (wi.contains(x) && wj.contains(y)) || (wi.contains(y) && wj.contains(x)))
            .take(need)
            .collect();
        if eligible.len() < need {
            return Err(BalanceError::Invariant {
                property: "H5",
                class: a.0,
                detail: format!("only {} of {need} edges available for E_ij", eligible.len()),
            });
        }
        for &(x, y) in &eligible {
            st.h.remove_edge(x, y);
        }
        let detached: Vec<(usize, usize)> = st.h.neighbor_iter(v).filter(|&u| wj.contains(u)).map(|u| (v.min(u), v.max(u))).collect();
        for &(x, y) in &detached {
            st.h.remove_edge(x, y);
        }
        st.sides[a.0][a.1].remove(v);
        let to = (b.0, 1 - b.1);
        st.sides[to.0][to.1].insert(v);
        let k = st.steps.len() + 1;
        st.steps.push(MoveStep { k, v, from: a, to, removed: eligible, detached, edges_after: st.h.edge_count() });
        st.check_invariants(params.delta)?;
    }
    let steps = st.steps.len();
    if steps > 0 && steps * (st.d - start_max) > start_edges {
        return Err(BalanceError::Invariant {
            property: "M",
            class: 0,
            detail: format!("{steps} steps exceed e(H_start)/(d − Δ(H)) = {start_edges}/{}", st.d - start_max),
        });
    }
    let m_bound = 6.0 * st.r() as f64 * params.beta * n as f64 / params.delta;
    if steps as f64 > m_bound {
        return Err(BalanceError::Invariant { property: "M", class: 0, detail: format!("{steps} moves > {m_bound}") });
    }
    // (H5) holds because the loop condition failed everywhere.
    debug_assert!(next_move(&st, rho_n).is_none());
    Ok(st)
}

/// Pairs of sides (a ≤ b), their e_H, in increasing e_H then lexicographic.
fn side_pairs(st: &BalanceState) -> Vec<((usize, usize), (usize, usize), usize)> {
    let mut out = Vec::new();
    let all: Vec<(usize, usize)> = (0..st.r()).flat_map(|i| [(i, 0), (i, 1)]).collect();
    for (k, &a) in all.iter().enumerate() {
        for &b in &all[k..] {
            if a.0 == b.0 && a.1 != b.1 {
                continue;
            }
            out.push((a, b, st.e_sides(a, b)));
        }
    }
    out.sort_by_key(|&(a, b, f)| (f, a, b));
    out
}

/// Skew |W_ℓ ∩ V(K)| − |U_ℓ ∩ V(K)| of a copy for class ℓ with W on side s.
pub fn copy_skew(st: &BalanceState, c: &KttCopy, l: usize, s: usize) -> i64 {
    let (w, u) = (&st.sides[l][s], &st.sides[l][1 - s]);
    c.vertices().filter(|&v| w.contains(v)).count() as i64 - c.vertices().filter(|&v| u.contains(v)).count() as i64
}

/// For each pair of sides with e_H(W_i, W_j) ≥ T·d, exactly ⌊e_H/d⌋
/// disjoint copies: v ∈ W_i, t of its H-neighbours in W_j, and t−1 vertices
/// of U_j complete to them.
pub fn build_balancing_ktt_collection(g: &Graph, st: &BalanceState, t: usize, big_t: usize) -> Result<KttPacking, BalanceError> {
    let n = g.n();
    let mut used = VertexSet::new(n);
    let mut out = KttPacking::new(t);
    for (a, b, f) in side_pairs(st) {
        if f < big_t * st.d {
            continue;
        }
        let want = f / st.d;
        for made in 0..want {
            let mut found = None;
            // v on either end of the pair; the shape is symmetric.
            let ends = if a == b { vec![(a, b)] } else { vec![(a, b), (b, a)] };
            'search: for (p, q) in ends {
                let wq = st.sides[q.0][q.1].difference(&used);
                let uq = st.sides[q.0][1 - q.1].difference(&used);
                let mut cands: Vec<usize> = st.sides[p.0][p.1].difference(&used).iter().collect();
                cands.sort_by_key(|&v| (std::cmp::Reverse(st.h.degree_into(v, &wq)), v));
                for v in cands {
                    let mut av = st.h.neighbors(v).intersection(&wq);
                    av.remove(v);
                    if av.len() < t {
                        break;
                    }
                    if let Some((sa, mut sb)) = find_biclique_quota(g, &[(&av, t)], &uq, t - 1) {
                        sb.push(v);
                        found = Some((sa, sb));
                        break 'search;
                    }
                }
            }
            let (sa, sb) = found.ok_or_else(|| {
                BalanceError::SearchExhausted(format!("copy {} of {want} for sides {a:?}, {b:?}", made + 1))
            })?;
            let c = KttCopy::new(g, sa, sb, Tag::Balance).map_err(|e| BalanceError::SearchExhausted(e.to_string()))?;
            for l in [a, b] {
                let want_skew = if a.0 == b.0 { 2 } else { 1 };
                if copy_skew(st, &c, l.0, l.1) != want_skew {
                    return Err(BalanceError::Invariant { property: "copy skew", class: l.0, detail: format!("copy {:?}|{:?}", c.a, c.b) });
                }
            }
            for v in c.vertices() {
                used.insert(v);
            }
            out.copies.push(c);
        }
    }
    let slack = 8 * st.r() as i64 * big_t as i64;
    for i in 0..st.r() {
        let [x, y] = &st.sides[i];
        let lhs = used.intersection_len(x) as i64 - used.intersection_len(y) as i64;
        let rhs = x.len() as i64 - y.len() as i64;
        if (lhs - rhs).abs() > slack {
            return Err(BalanceError::Invariant { property: "side balance", class: i, detail: format!("{lhs} vs {rhs} ± {slack}") });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    #[serde(rename = "B1")]
    pub b1: Check,
    #[serde(rename = "B2")]
    pub b2: Vec<Check>,
    #[serde(rename = "B3")]
    pub b3: Vec<Check>,
    #[serde(rename = "B4")]
    pub b4: Vec<Check>,
    pub moves: usize,
    pub balancing_copies: usize,
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub classes: Vec<VertexSet>,
    pub sides: Vec<(VertexSet, VertexSet)>,
    /// Labels of the classes before balancing.
    pub labels: Vec<Label>,
    pub l: VertexSet,
    pub discarded: VertexSet,
    pub gprime: Graph,
    pub packing: KttPacking,
    pub report: BalanceReport,
}

/// Equal-size sides outside V(𝒦), discarding at most 8rT per side, and the
/// checked conclusions (B1)–(B4).
pub fn trim_to_balance(
    g: &Graph,
    st: &BalanceState,
    packing: KttPacking,
    params: &ParamPack,
) -> Result<Balanced, BalanceError> {
    let n = g.n();
    let r = st.r();
    let l = packing.covered(n);
    let cap = 8 * r * params.big_t;
    let mut discarded = VertexSet::new(n);
    let mut classes = Vec::with_capacity(r);
    let mut sides = Vec::with_capacity(r);
    for i in 0..r {
        let mut x = st.sides[i][0].difference(&l);
        let mut y = st.sides[i][1].difference(&l);
        let (big, small) = if x.len() >= y.len() { (&mut x, &y) } else { (&mut y, &x) };
        let k = big.len() - small.len();
        if k > cap {
            return Err(BalanceError::Validation { property: "side balance", detail: format!("class {i} needs {k} discards > 8rT = {cap}") });
        }
        let mut order: Vec<usize> = big.iter().collect();
        order.sort_by_key(|&v| (g.degree_into(v, small), v));
        for &v in order.iter().take(k) {
            big.remove(v);
            discarded.insert(v);
        }
        classes.push(x.union(&y));
        sides.push((x, y));
    }
    let mut gprime = g.clone();
    for i in 0..r {
        if st.labels[i] == Label::AlmostBipartite {
            for s in [&sides[i].0, &sides[i].1] {
                for (a, b) in g.edges() {
                    if s.contains(a) && s.contains(b) {
                        gprime.remove_edge(a, b);
                    }
                }
            }
        }
    }
    // Derived constants: η' = 144σ/ρ² (σ floored at β), ζ' = ρ/8, γ' = γ/4.
    let sigma = params.beta;
    let eta2 = 144.0 * sigma / (params.rho * params.rho);
    let zeta2 = params.rho / 8.0;
    let t = params.t as f64;
    let b1_bound = 64.0 * (r * r) as f64 * (t / params.c) * (std::f64::consts::E / (8.0 * zeta2)).powf(t);
    let b1 = Check { pass: discarded.len() as f64 <= b1_bound, measured: discarded.len() as f64, bound: b1_bound, note: "discarded vertices".into() };
    let d = st.d as f64;
    let mut b2 = Vec::new();
    let mut b3 = Vec::new();
    let mut b4 = Vec::new();
    for i in 0..r {
        let z = &classes[i];
        let zl = z.len() as f64;
        let avg = if z.is_empty() { d } else { 2.0 * gprime.e_within(z) as f64 / zl };
        let bound = d - eta2 * zl;
        b2.push(Check { pass: avg >= bound, measured: avg, bound, note: format!("class {i} average degree") });
        let sparse = if z.len() >= 2 { find_sparse_cut(&gprime.induced(z).0, zeta2).is_some() } else { false };
        b3.push(Check { pass: !sparse, measured: sparse as u8 as f64, bound: 0.0, note: format!("class {i} sparse cut at rho/8") });
        let (x, y) = &sides[i];
        if st.labels[i] == Label::AlmostBipartite {
            let within = gprime.e_within(x) + gprime.e_within(y);
            let ok = within == 0 && x.len() == y.len();
            b4.push(Check { pass: ok, measured: within as f64, bound: 0.0, note: format!("class {i} bipartite and balanced") });
        } else {
            let dist = if z.len() >= 2 {
                let (cx, _) = max_cut_bipartition(&gprime, z, i as u64);
                bipartite_distance(&gprime.restrict(z), &cx) as f64
            } else {
                0.0
            };
            let bound = params.gamma / 4.0 * zl * zl;
            b4.push(Check { pass: dist >= bound, measured: dist, bound, note: format!("class {i} distance from bipartite") });
        }
    }
    for (name, checks) in [("B2", &b2), ("B3", &b3), ("B4", &b4)] {
        if let Some(c) = checks.iter().find(|c| !c.pass) {
            return Err(BalanceError::Validation { property: name, detail: format!("{}: {} vs {}", c.note, c.measured, c.bound) });
        }
    }
    if !b1.pass {
        return Err(BalanceError::Validation { property: "B1", detail: format!("{} discarded > {}", b1.measured, b1.bound) });
    }
    let report = BalanceReport { b1, b2, b3, b4, moves: st.moved(), balancing_copies: packing.len() };
    Ok(Balanced { classes, sides, labels: st.labels.clone(), l, discarded, gprime, packing, report })
}

/// The whole balancing stage.
pub fn balance(g: &Graph, dec: &Decomposition, seed: u64) -> Result<(Balanced, BalanceState), BalanceError> {
    let st = build_inter_class_graph(g, dec, seed)?;
    let st = move_high_degree_vertices(st, &dec.params)?;
    let k = build_balancing_ktt_collection(g, &st, dec.params.t, dec.params.big_t)?;
    let b = trim_to_balance(g, &st, k, &dec.params)?;
    Ok((b, st))
}
