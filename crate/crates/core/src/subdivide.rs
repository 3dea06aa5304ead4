//! Perfect packings with subdivisions of a fixed pattern F: balancing paths,
//! a balanced pair of F-subdivisions per class, and absorption of the rest
//! through a Hamilton path.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::decompose::{expander_decompose, Check, DecomposeError, Decomposition, Label, ParamPack};
use crate::graph::{Graph, VertexSet};
use crate::hamilton::{hamilton_path_within, robust_short_path, HamiltonError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubdivError {
    #[error("pattern: {0}")]
    Pattern(String),
    #[error("graph is not regular")]
    NotRegular,
    #[error("class {class}: imbalance {imbalance} cannot be fixed: {detail}")]
    Budget { class: usize, imbalance: i64, detail: String },
    #[error("class {class}: no path for branch pair ({a}, {b})")]
    SearchExhausted { class: usize, a: usize, b: usize },
    #[error("class {class}: absorption failed: {source}")]
    Absorption { class: usize, source: HamiltonError },
    #[error("class {class}: {source}")]
    Path { class: usize, source: HamiltonError },
    #[error("({property}) fails for class {class}: {detail}")]
    Invariant { property: &'static str, class: usize, detail: String },
    #[error("invalid subdivision: {0}")]
    Invalid(String),
    #[error("decomposition: {0}")]
    Decompose(#[from] DecomposeError),
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<SubdivError> },
}

impl SubdivError {
    pub fn at(self, stage: &'static str) -> Self {
        SubdivError::Stage { stage, source: Box::new(self) }
    }
}

/// A pattern F: K_k, C_k or P_k by name (`k4`, `c5`, `p3`).
pub fn pattern_from_name(name: &str) -> Result<Graph, SubdivError> {
    let lower = name.to_ascii_lowercase();
    let (kind, num) = lower.split_at(1.min(lower.len()));
    let k: usize = num.parse().map_err(|_| SubdivError::Pattern(format!("cannot parse {name:?}")))?;
    let mut f = Graph::new(k);
    match kind {
        "k" if k >= 2 => {
            for a in 0..k {
                for b in a + 1..k {
                    f.add_edge(a, b);
                }
            }
        }
        "c" if k >= 3 => {
            for a in 0..k {
                f.add_edge(a, (a + 1) % k);
            }
        }
        "p" if k >= 2 => {
            for a in 0..k - 1 {
                f.add_edge(a, a + 1);
            }
        }
        _ => return Err(SubdivError::Pattern(format!("unknown pattern {name:?}"))),
    }
    if k > 8 {
        return Err(SubdivError::Pattern(format!("{name:?} has more than 8 vertices")));
    }
    Ok(f)
}

/// An F-subdivision: branch[u] is the image of F-vertex u, paths[e] the host
/// path of the e-th edge of F (in `F.edges()` order) from branch[a] to branch[b].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subdivision {
    #[serde(serialize_with = "branch_map")]
    pub branch: Vec<usize>,
    pub paths: Vec<Vec<usize>>,
}

fn branch_map<S: serde::Serializer>(b: &[usize], s: S) -> Result<S::Ok, S::Error> {
    let m: BTreeMap<usize, usize> = b.iter().copied().enumerate().collect();
    serde::Serialize::serialize(&m, s)
}

impl Subdivision {
    pub fn vertices(&self, n: usize) -> VertexSet {
        let mut s = VertexSet::from_iter(n, self.branch.iter().copied());
        for p in &self.paths {
            for &v in p {
                s.insert(v);
            }
        }
        s
    }

    /// Structural validity in g: paths follow edges, ends match, interiors
    /// are disjoint from each other and from the branch vertices.
    pub fn verify(&self, g: &Graph, f: &Graph) -> Result<(), String> {
        let n = g.n();
        if self.branch.len() != f.n() {
            return Err(format!("{} branch vertices for a pattern on {}", self.branch.len(), f.n()));
        }
        let mut seen = VertexSet::new(n);
        for &b in &self.branch {
            if b >= n || !seen.insert(b) {
                return Err(format!("branch vertex {b} repeated or out of range"));
            }
        }
        let fe = f.edges();
        if fe.len() != self.paths.len() {
            return Err(format!("{} paths for {} pattern edges", self.paths.len(), fe.len()));
        }
        for (&(a, b), p) in fe.iter().zip(&self.paths) {
            if p.len() < 2 || p[0] != self.branch[a] || p[p.len() - 1] != self.branch[b] {
                return Err(format!("path for pattern edge ({a}, {b}) has wrong ends"));
            }
            for w in p.windows(2) {
                if !g.has_edge(w[0], w[1]) {
                    return Err(format!("({}, {}) is not an edge", w[0], w[1]));
                }
            }
            for &v in &p[1..p.len() - 1] {
                if v >= n || !seen.insert(v) {
                    return Err(format!("interior vertex {v} reused"));
                }
            }
        }
        Ok(())
    }
}

/// Per class: sides (for almost-bipartite classes) and the working graph G'
/// without within-side edges.
#[derive(Debug, Clone)]
pub struct Frame {
    pub classes: Vec<VertexSet>,
    pub sides: Vec<Option<(VertexSet, VertexSet)>>,
    pub gprime: Graph,
}

impl Frame {
    pub fn new(g: &Graph, dec: &Decomposition) -> Self {
        let sides: Vec<Option<(VertexSet, VertexSet)>> = dec
            .classes
            .iter()
            .enumerate()
            .map(|(i, _)| if dec.labels[i] == Label::AlmostBipartite { dec.sided[i].clone() } else { None })
            .collect();
        let mut gprime = g.clone();
        for (a, b) in g.edges() {
            for (x, y) in sides.iter().flatten() {
                if (x.contains(a) && x.contains(b)) || (y.contains(a) && y.contains(b)) {
                    gprime.remove_edge(a, b);
                }
            }
        }
        Frame { classes: dec.classes.clone(), sides, gprime }
    }

    fn side_ref(&self, i: usize) -> Option<(&VertexSet, &VertexSet)> {
        self.sides[i].as_ref().map(|(x, y)| (x, y))
    }

    fn class_of(&self, v: usize) -> usize {
        self.classes.iter().position(|z| z.contains(v)).expect("vertex in some class")
    }
}

/// |X ∩ S| − |Y ∩ S|.
fn skew(sides: &(VertexSet, VertexSet), s: &VertexSet) -> i64 {
    s.intersection_len(&sides.0) as i64 - s.intersection_len(&sides.1) as i64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestReport {
    #[serde(rename = "P1")]
    pub p1: Check,
    pub imbalances: Vec<i64>,
}

/// Vertex-disjoint paths of G, each with both leaves in one class; for an
/// almost-bipartite class with |X| > |Y| the path carries |X| − |Y| edges
/// inside X joined by alternating connectors, leaves one in X and one in Y.
pub fn balancing_linear_forest(
    g: &Graph,
    frame: &Frame,
    params: &ParamPack,
) -> Result<(Vec<Vec<usize>>, ForestReport), SubdivError> {
    let n = g.n();
    let mut used = VertexSet::new(n);
    let mut forest = Vec::new();
    let mut imbalances = Vec::new();
    for i in 0..frame.classes.len() {
        let Some(sides) = &frame.sides[i] else {
            imbalances.push(0);
            continue;
        };
        let z = &frame.classes[i];
        let imb = skew(sides, z);
        imbalances.push(imb);
        if imb == 0 {
            continue;
        }
        let (big, small) = if imb > 0 { (&sides.0, &sides.1) } else { (&sides.1, &sides.0) };
        let k = imb.unsigned_abs() as usize;
        // k disjoint edges inside the larger side, greedily by lowest ids.
        let mut taken = used.clone();
        let mut pairs = Vec::with_capacity(k);
        for (a, b) in g.edges() {
            if pairs.len() == k {
                break;
            }
            if big.contains(a) && big.contains(b) && !taken.contains(a) && !taken.contains(b) {
                taken.insert(a);
                taken.insert(b);
                pairs.push((a, b));
            }
        }
        if pairs.len() < k {
            return Err(SubdivError::Budget { class: i, imbalance: imb, detail: format!("only {} disjoint edges inside the larger side", pairs.len()) });
        }
        let bip = Some((big, small));
        let mut path = vec![pairs[0].0, pairs[0].1];
        let mut block = taken.clone();
        for w in 1..=k {
            let from = *path.last().expect("nonempty");
            let target = if w < k {
                pairs[w].0
            } else {
                small
                    .iter()
                    .filter(|&y| !block.contains(y))
                    .max_by_key(|&y| (frame.gprime.degree_into(y, z), std::cmp::Reverse(y)))
                    .ok_or_else(|| SubdivError::Budget { class: i, imbalance: imb, detail: "smaller side exhausted".into() })?
            };
            let mut avoid = block.clone();
            avoid.remove(from);
            avoid.remove(target);
            let conn = robust_short_path(&frame.gprime, z, bip, from, target, &avoid, params.delta)
                .map_err(|e| SubdivError::Path { class: i, source: e })?;
            for &v in &conn.vertices[1..] {
                block.insert(v);
                path.push(v);
            }
            if w < k {
                path.push(pairs[w].1);
            }
        }
        for &v in &path {
            used.insert(v);
        }
        forest.push(path);
    }
    let size = used.len() as f64;
    let bound = params.xi * n as f64;
    let rep = ForestReport { p1: Check { pass: size <= bound, measured: size, bound, note: "|V(H)|".into() }, imbalances };
    check_forest(g, frame, &forest)?;
    Ok((forest, rep))
}

/// (P2)–(P4) on a forest given as vertex sequences.
pub fn check_forest(g: &Graph, frame: &Frame, forest: &[Vec<usize>]) -> Result<(), SubdivError> {
    let n = g.n();
    let mut all = VertexSet::new(n);
    for p in forest {
        if p.len() < 2 {
            return Err(SubdivError::Invariant { property: "P2", class: usize::MAX, detail: "isolated vertex".into() });
        }
        for w in p.windows(2) {
            if !g.has_edge(w[0], w[1]) {
                return Err(SubdivError::Invalid(format!("forest step ({}, {}) is not an edge", w[0], w[1])));
            }
        }
        for &v in p {
            if !all.insert(v) {
                return Err(SubdivError::Invalid(format!("forest paths share vertex {v}")));
            }
        }
    }
    for (i, z) in frame.classes.iter().enumerate() {
        let leaves: Vec<usize> = forest.iter().flat_map(|p| [p[0], p[p.len() - 1]]).filter(|&v| z.contains(v)).collect();
        if leaves.len() != 0 && leaves.len() != 2 {
            return Err(SubdivError::Invariant { property: "P3", class: i, detail: format!("{} leaves", leaves.len()) });
        }
        if let Some(s) = &frame.sides[i] {
            if leaves.len() == 2 && s.0.contains(leaves[0]) == s.0.contains(leaves[1]) {
                return Err(SubdivError::Invariant { property: "P3", class: i, detail: "both leaves on one side".into() });
            }
            let rest = z.difference(&all);
            if skew(s, &rest) != 0 {
                return Err(SubdivError::Invariant { property: "P4", class: i, detail: format!("skew {} outside the forest", skew(s, &rest)) });
            }
        }
    }
    Ok(())
}

/// The paths P_1, …, P_r; P_i has both leaves in Z_i.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSystem {
    pub paths: Vec<Vec<usize>>,
    /// Whether P_i is a spare edge rather than a forest component.
    pub spare: Vec<bool>,
}

impl PathSystem {
    pub fn union(&self, n: usize) -> VertexSet {
        VertexSet::from_iter(n, self.paths.iter().flatten().copied())
    }
}

/// Joins forest components whose leaves share a class by short paths in
/// G'[Z_i], then gives every class without a component a spare edge.
pub fn merge_to_paths(g: &Graph, frame: &Frame, forest: Vec<Vec<usize>>, params: &ParamPack) -> Result<PathSystem, SubdivError> {
    let n = g.n();
    let r = frame.classes.len();
    let mut comps = forest;
    for i in 0..r {
        let z = &frame.classes[i];
        let with_leaf: Vec<usize> = (0..comps.len())
            .filter(|&c| z.contains(comps[c][0]) || z.contains(*comps[c].last().expect("nonempty")))
            .collect();
        if with_leaf.len() != 2 {
            continue;
        }
        let (c1, c2) = (with_leaf[0], with_leaf[1]);
        let mut a = comps[c1].clone();
        let mut b = comps[c2].clone();
        if !z.contains(*a.last().expect("nonempty")) {
            a.reverse();
        }
        if !z.contains(b[0]) {
            b.reverse();
        }
        let (p, q) = (*a.last().expect("nonempty"), b[0]);
        let mut avoid = VertexSet::from_iter(n, comps.iter().flatten().copied());
        avoid.remove(p);
        avoid.remove(q);
        let l = robust_short_path(&frame.gprime, z, frame.side_ref(i), p, q, &avoid, params.delta)
            .map_err(|e| SubdivError::Path { class: i, source: e })?;
        a.extend_from_slice(&l.vertices[1..l.vertices.len() - 1]);
        a.extend(b);
        let (hi, lo) = (c1.max(c2), c1.min(c2));
        comps.remove(hi);
        comps[lo] = a;
    }
    let mut paths = vec![Vec::new(); r];
    let mut spare = vec![false; r];
    for c in comps {
        let i = frame.class_of(c[0]);
        if frame.class_of(*c.last().expect("nonempty")) != i || !paths[i].is_empty() {
            return Err(SubdivError::Invariant { property: "P'2", class: i, detail: "component leaves in different classes".into() });
        }
        paths[i] = c;
    }
    let used = VertexSet::from_iter(n, paths.iter().flatten().copied());
    let mut taken = used.clone();
    for i in 0..r {
        if !paths[i].is_empty() {
            continue;
        }
        let z = frame.classes[i].difference(&taken);
        let e = frame
            .gprime
            .edges()
            .into_iter()
            .find(|&(a, b)| z.contains(a) && z.contains(b))
            .ok_or_else(|| SubdivError::Invariant { property: "P'1", class: i, detail: "no spare edge in G'[Z_i]".into() })?;
        let e = match &frame.sides[i] {
            Some((x, _)) if !x.contains(e.0) => (e.1, e.0),
            _ => e,
        };
        taken.insert(e.0);
        taken.insert(e.1);
        paths[i] = vec![e.0, e.1];
        spare[i] = true;
    }
    let sys = PathSystem { paths, spare };
    check_paths(frame, &sys, n)?;
    Ok(sys)
}

/// (P'2) and (P'3).
pub fn check_paths(frame: &Frame, sys: &PathSystem, n: usize) -> Result<(), SubdivError> {
    let q = sys.union(n);
    if q.len() != sys.paths.iter().map(Vec::len).sum::<usize>() {
        return Err(SubdivError::Invalid("paths overlap".into()));
    }
    for (i, p) in sys.paths.iter().enumerate() {
        let z = &frame.classes[i];
        let (u, v) = (p[0], p[p.len() - 1]);
        if p.len() < 2 || !z.contains(u) || !z.contains(v) {
            return Err(SubdivError::Invariant { property: "P'2", class: i, detail: "leaf outside the class".into() });
        }
        if let Some(s) = &frame.sides[i] {
            if s.0.contains(u) == s.0.contains(v) {
                return Err(SubdivError::Invariant { property: "P'2", class: i, detail: "both leaves on one side".into() });
            }
            let k = skew(s, &z.difference(&q));
            if k != 0 {
                return Err(SubdivError::Invariant { property: "P'3", class: i, detail: format!("skew {k} outside Q") });
            }
        }
    }
    Ok(())
}

/// Branch vertices on `pool` by descending G'-degree into the class.
fn pick_branch(frame: &Frame, z: &VertexSet, pool: &VertexSet, k: usize, offset: usize) -> Option<Vec<usize>> {
    let mut vs: Vec<usize> = pool.iter().collect();
    if vs.len() < k {
        return None;
    }
    vs.sort_by_key(|&v| (std::cmp::Reverse(frame.gprime.degree_into(v, z)), v));
    let start = offset % (vs.len() - k + 1);
    Some(vs[start..start + k].to_vec())
}

/// Connects branch sets by internally disjoint short paths in G'[Z] avoiding
/// `blocked`; the i-th pattern edge of each set in turn.
fn connect(
    frame: &Frame,
    class: usize,
    f: &Graph,
    branches: &[Vec<usize>],
    blocked: &VertexSet,
    delta: f64,
) -> Result<Vec<Subdivision>, SubdivError> {
    let z = &frame.classes[class];
    let mut avoid = blocked.clone();
    for b in branches {
        for &v in b {
            avoid.insert(v);
        }
    }
    let mut out: Vec<Subdivision> = branches.iter().map(|b| Subdivision { branch: b.clone(), paths: Vec::new() }).collect();
    for (a, b) in f.edges() {
        for s in out.iter_mut() {
            let (p, q) = (s.branch[a], s.branch[b]);
            let mut av = avoid.clone();
            av.remove(p);
            av.remove(q);
            let path = robust_short_path(&frame.gprime, z, frame.side_ref(class), p, q, &av, delta)
                .map_err(|_| SubdivError::SearchExhausted { class, a: p, b: q })?;
            for &v in &path.vertices {
                avoid.insert(v);
            }
            s.paths.push(path.vertices);
        }
    }
    Ok(out)
}

const BRANCH_TRIES: usize = 20;

/// Two vertex-disjoint F-subdivisions in G'[Z_i] \ V(Q), branch vertices in
/// X_i and Y_i respectively for almost-bipartite classes.
pub fn subdivision_pair(
    frame: &Frame,
    class: usize,
    f: &Graph,
    q: &VertexSet,
    delta: f64,
) -> Result<(Subdivision, Subdivision), SubdivError> {
    let n = frame.gprime.n();
    let z = &frame.classes[class];
    let free = z.difference(q);
    let k = f.n();
    let mut last = SubdivError::Invariant { property: "pair size", class, detail: "class too small for two subdivisions".into() };
    for attempt in 0..BRANCH_TRIES {
        let (s1, s2) = match &frame.sides[class] {
            Some((x, y)) => match (pick_branch(frame, z, &free.intersection(x), k, attempt), pick_branch(frame, z, &free.intersection(y), k, attempt)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(last),
            },
            None => {
                let Some(all) = pick_branch(frame, z, &free, 2 * k, attempt) else { return Err(last) };
                (all[..k].to_vec(), all[k..].to_vec())
            }
        };
        match connect(frame, class, f, &[s1, s2], q, delta) {
            Ok(mut v) => {
                let b = v.pop().expect("two");
                let a = v.pop().expect("two");
                let bound = f.edge_count() as f64 * 15.0 / delta;
                for s in [&a, &b] {
                    let size = s.vertices(n).len() as f64;
                    if size > bound {
                        return Err(SubdivError::Invariant { property: "6.3", class, detail: format!("{size} vertices > {bound}") });
                    }
                }
                if let Some(sides) = &frame.sides[class] {
                    let both = a.vertices(n).union(&b.vertices(n));
                    if skew(sides, &both) != 0 {
                        return Err(SubdivError::Invariant { property: "pair size", class, detail: format!("skew {}", skew(sides, &both)) });
                    }
                }
                return Ok((a, b));
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Replaces the consecutive pair (x, y) of some path of `s` by `detour`,
/// which runs from x to y.
fn splice(s: &mut Subdivision, x: usize, y: usize, detour: &[usize]) {
    for p in s.paths.iter_mut() {
        for k in 0..p.len() - 1 {
            let (a, b) = (p[k], p[k + 1]);
            if (a, b) == (x, y) || (a, b) == (y, x) {
                let mut mid: Vec<usize> = detour[1..detour.len() - 1].to_vec();
                if (a, b) == (y, x) {
                    mid.reverse();
                }
                p.splice(k + 1..k + 1, mid);
                return;
            }
        }
    }
    unreachable!("spliced edge belongs to the subdivision");
}

/// The first F_i-edge (lexicographic) with x ∈ X, y ∈ Y when sided.
fn replaced_edge(s: &Subdivision, sides: Option<&(VertexSet, VertexSet)>) -> (usize, usize) {
    let mut edges: Vec<(usize, usize)> = s.paths.iter().flat_map(|p| p.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1])))).collect();
    edges.sort_unstable();
    let (a, b) = edges[0];
    match sides {
        Some((x, _)) if !x.contains(a) => (b, a),
        _ => (a, b),
    }
}

/// Absorbs P_i and every uncovered vertex of Z_i into F_i: the edge x_iy_i is
/// replaced by x_i Q'_i v_i P_i u_i Q_i y_i with Q'_i a Hamilton path of
/// G'[Z_i] \ W_i.
pub fn absorb(
    frame: &Frame,
    class: usize,
    fi: &Subdivision,
    fpi: &Subdivision,
    pi: &[usize],
    q: &VertexSet,
    params: &ParamPack,
) -> Result<Subdivision, SubdivError> {
    let n = frame.gprime.n();
    let z = &frame.classes[class];
    let sides = frame.sides[class].as_ref();
    let (x, y) = replaced_edge(fi, sides);
    let vf = fi.vertices(n);
    let vfp = fpi.vertices(n);
    let busy = q.union(&vf).union(&vfp);
    // Orientations of P_i: u ∈ X when sided, either end otherwise.
    let orients: Vec<(usize, usize)> = match sides {
        Some((xs, _)) if xs.contains(pi[0]) => vec![(pi[0], pi[pi.len() - 1])],
        Some(_) => vec![(pi[pi.len() - 1], pi[0])],
        None => vec![(pi[0], pi[pi.len() - 1]), (pi[pi.len() - 1], pi[0])],
    };
    let mut last = None;
    for (u, v) in orients {
        let mut avoid = busy.clone();
        avoid.remove(y);
        avoid.remove(u);
        let qi = match robust_short_path(&frame.gprime, z, frame.side_ref(class), y, u, &avoid, params.delta) {
            Ok(p) => p.vertices,
            Err(e) => {
                last = Some(SubdivError::Path { class, source: e });
                continue;
            }
        };
        let mut w = busy.union(&VertexSet::from_iter(n, qi.iter().copied())).intersection(z);
        w.remove(x);
        w.remove(v);
        if let Some(s) = sides {
            let allowed = z.difference(&w);
            if skew(s, &allowed) != 0 {
                return Err(SubdivError::Invariant { property: "W", class, detail: format!("|X \\ W| − |Y \\ W| = {}", skew(s, &allowed)) });
            }
        }
        let allowed = z.difference(&w);
        let ham = match hamilton_path_within(&frame.gprime, x, v, &allowed, params.ham_budget) {
            Ok(p) => p.vertices,
            Err(e) => {
                last = Some(SubdivError::Absorption { class, source: e });
                continue;
            }
        };
        // x … v, then P_i from v to u, then Q_i from u back to y.
        let mut detour = ham;
        let pv: Vec<usize> = if pi[0] == v { pi.to_vec() } else { pi.iter().rev().copied().collect() };
        detour.extend_from_slice(&pv[1..]);
        detour.extend(qi.iter().rev().skip(1).copied());
        let mut out = fi.clone();
        splice(&mut out, x, y, &detour);
        let covered = out.vertices(n).union(&vfp);
        let want = z.difference(q).union(&VertexSet::from_iter(n, pi.iter().copied()));
        if covered != want {
            return Err(SubdivError::Invariant { property: "cover", class, detail: "V(F''_i) ∪ V(F'_i) differs from (Z_i \\ V(Q)) ∪ V(P_i)".into() });
        }
        return Ok(out);
    }
    Err(last.expect("at least one orientation"))
}

/// A single subdivision spanning Z_i \ V(Q): one F-copy whose first edge is
/// replaced by a Hamilton path. Used when a class has no forest path and is
/// too small or too sparse for the paired route.
pub fn single_spanning(frame: &Frame, class: usize, f: &Graph, q: &VertexSet, params: &ParamPack) -> Result<Subdivision, SubdivError> {
    let n = frame.gprime.n();
    let z = &frame.classes[class];
    let free = z.difference(q);
    let mut last = SubdivError::Invariant { property: "6.3", class, detail: "class smaller than the pattern".into() };
    for attempt in 0..BRANCH_TRIES {
        let pool = match &frame.sides[class] {
            Some((xs, _)) => free.intersection(xs),
            None => free.clone(),
        };
        let Some(b) = pick_branch(frame, z, &pool, f.n(), attempt) else { return Err(last) };
        let s = match connect(frame, class, f, &[b], q, params.delta) {
            Ok(mut v) => v.pop().expect("one"),
            Err(e) => {
                last = e;
                continue;
            }
        };
        let (x, y) = replaced_edge(&s, frame.sides[class].as_ref());
        let mut allowed = free.difference(&s.vertices(n));
        allowed.insert(x);
        allowed.insert(y);
        let mut g2 = frame.gprime.clone();
        g2.remove_edge(x, y);
        match hamilton_path_within(&g2, x, y, &allowed, params.ham_budget) {
            Ok(p) => {
                let mut out = s;
                splice(&mut out, x, y, &p.vertices);
                return Ok(out);
            }
            Err(e) => last = SubdivError::Absorption { class, source: e },
        }
    }
    Err(last)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubdivisionPacking {
    #[serde(serialize_with = "pattern_edges")]
    pub pattern: Graph,
    pub subdivisions: Vec<Subdivision>,
}

fn pattern_edges<S: serde::Serializer>(f: &Graph, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&f.edges(), s)
}

impl SubdivisionPacking {
    /// Every subdivision valid in g and the vertex sets partition V(g).
    pub fn verify(&self, g: &Graph) -> Result<(), String> {
        let n = g.n();
        let mut seen = VertexSet::new(n);
        for (k, s) in self.subdivisions.iter().enumerate() {
            s.verify(g, &self.pattern).map_err(|e| format!("subdivision {k}: {e}"))?;
            let vs = s.vertices(n);
            if !seen.is_disjoint(&vs) {
                return Err(format!("subdivision {k} overlaps an earlier one"));
            }
            seen.union_with(&vs);
        }
        if seen.len() != n {
            return Err(format!("{} vertices uncovered", n - seen.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubdivReport {
    pub r: usize,
    pub labels: Vec<Label>,
    pub forest: ForestReport,
    /// Per class: "paired" or "single".
    pub routes: Vec<&'static str>,
}

/// Perfect TF-packing of a dense regular graph.
pub fn pack_subdivisions(g: &Graph, f: &Graph, params: &ParamPack) -> Result<(SubdivisionPacking, SubdivReport), SubdivError> {
    if f.edge_count() == 0 {
        return Err(SubdivError::Pattern("pattern has no edges".into()));
    }
    g.regular_degree().ok_or(SubdivError::NotRegular)?;
    let dec = expander_decompose(g, params).map_err(|e| SubdivError::from(e).at("decompose"))?;
    pack_subdivisions_with(g, f, &dec, params)
}

/// As `pack_subdivisions`, on a given decomposition.
pub fn pack_subdivisions_with(
    g: &Graph,
    f: &Graph,
    dec: &Decomposition,
    params: &ParamPack,
) -> Result<(SubdivisionPacking, SubdivReport), SubdivError> {
    let n = g.n();
    let frame = Frame::new(g, dec);
    let (forest, frep) = balancing_linear_forest(g, &frame, params).map_err(|e| e.at("linear forest"))?;
    let sys = merge_to_paths(g, &frame, forest, params).map_err(|e| e.at("merge"))?;
    let q = sys.union(n);
    let mut subdivisions = Vec::new();
    let mut routes = Vec::new();
    for i in 0..frame.classes.len() {
        let paired = subdivision_pair(&frame, i, f, &q, params.delta)
            .and_then(|(a, b)| absorb(&frame, i, &a, &b, &sys.paths[i], &q, params).map(|a2| (a2, b)));
        match paired {
            Ok((a2, b)) => {
                subdivisions.push(b);
                subdivisions.push(a2);
                routes.push("paired");
            }
            Err(e) if sys.spare[i] => {
                // A spare edge balances nothing; return it to the class.
                let mut q2 = q.clone();
                for &v in &sys.paths[i] {
                    q2.remove(v);
                }
                let s = single_spanning(&frame, i, f, &q2, params).map_err(|e2| {
                    SubdivError::Invariant { property: "absorb", class: i, detail: format!("paired: {e}; single: {e2}") }.at("absorb")
                })?;
                subdivisions.push(s);
                routes.push("single");
            }
            Err(e) => return Err(e.at("absorb")),
        }
    }
    let out = SubdivisionPacking { pattern: f.clone(), subdivisions };
    out.verify(g).map_err(|e| SubdivError::Invalid(e).at("verify"))?;
    let rep = SubdivReport { r: dec.r(), labels: dec.labels.clone(), forest: frep, routes };
    Ok((out, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_complete, gen_complete_bipartite};

    fn one_class(g: &Graph, sides: Option<(VertexSet, VertexSet)>) -> Decomposition {
        let label = if sides.is_some() { Label::AlmostBipartite } else { Label::FarFromBipartite };
        Decomposition::from_parts(g.n(), vec![g.vertices()], vec![sides], vec![label], ParamPack::default()).unwrap()
    }

    fn halves(n: usize, a: usize) -> (VertexSet, VertexSet) {
        (VertexSet::from_iter(n, 0..a), VertexSet::from_iter(n, a..n))
    }

    #[test]
    fn patterns() {
        assert_eq!(pattern_from_name("k4").unwrap().edge_count(), 6);
        assert_eq!(pattern_from_name("C5").unwrap().edge_count(), 5);
        assert_eq!(pattern_from_name("p3").unwrap().edge_count(), 2);
        assert!(pattern_from_name("k9").is_err());
        assert!(pattern_from_name("x3").is_err());
    }

    #[test]
    fn balanced_classes_give_empty_forest() {
        let g = gen_complete_bipartite(5, 5);
        let frame = Frame::new(&g, &one_class(&g, Some(halves(10, 5))));
        let (f, rep) = balancing_linear_forest(&g, &frame, &ParamPack::default()).unwrap();
        assert!(f.is_empty());
        assert_eq!(rep.imbalances, vec![0]);
        let sys = merge_to_paths(&g, &frame, f, &ParamPack::default()).unwrap();
        assert_eq!(sys.paths.len(), 1);
        assert_eq!(sys.paths[0].len(), 2);
        assert!(sys.spare[0]);
    }

    #[test]
    fn imbalance_two_gives_one_path() {
        // 8 + 6 sides with a perfect matching inside each side.
        let mut g = gen_complete_bipartite(8, 6);
        for a in (0..8).step_by(2) {
            g.add_edge(a, a + 1);
        }
        for a in (8..14).step_by(2) {
            g.add_edge(a, a + 1);
        }
        let frame = Frame::new(&g, &one_class(&g, Some(halves(14, 8))));
        let (f, _) = balancing_linear_forest(&g, &frame, &ParamPack::default()).unwrap();
        assert_eq!(f.len(), 1);
        let p = &f[0];
        let (x, y) = frame.sides[0].as_ref().unwrap();
        assert!(x.contains(p[0]) && y.contains(*p.last().unwrap()));
        let vs = VertexSet::from_iter(14, p.iter().copied());
        assert_eq!(vs.intersection_len(x) as i64 - vs.intersection_len(y) as i64, 2);
    }

    #[test]
    fn merging_two_components() {
        // Two K_{6,6} with cross edges 0–12 and 6–18.
        let mut g = Graph::new(24);
        for base in [0, 12] {
            for a in base..base + 6 {
                for b in base + 6..base + 12 {
                    g.add_edge(a, b);
                }
            }
        }
        g.add_edge(0, 12);
        g.add_edge(6, 18);
        let side = |a: std::ops::Range<usize>| VertexSet::from_iter(24, a);
        let dec = Decomposition::from_parts(
            24,
            vec![side(0..12), side(12..24)],
            vec![Some((side(0..6), side(6..12))), Some((side(12..18), side(18..24)))],
            vec![Label::AlmostBipartite; 2],
            ParamPack::default(),
        )
        .unwrap();
        let frame = Frame::new(&g, &dec);
        let forest = vec![vec![0, 12], vec![6, 18]];
        check_forest(&g, &frame, &forest).unwrap();
        let sys = merge_to_paths(&g, &frame, forest, &ParamPack::default()).unwrap();
        let p = &sys.paths[1];
        assert!(!sys.spare[1] && sys.spare[0]);
        assert_eq!((p[0], *p.last().unwrap()), (12, 18));
        let (x, y) = frame.sides[0].as_ref().unwrap();
        let vs = VertexSet::from_iter(24, p.iter().copied());
        assert_eq!(vs.intersection_len(x), vs.intersection_len(y));
    }

    #[test]
    fn pairs_in_complete_graphs() {
        let g = gen_complete(20);
        let frame = Frame::new(&g, &one_class(&g, None));
        let q = VertexSet::new(20);
        let k2 = pattern_from_name("k2").unwrap();
        let (a, b) = subdivision_pair(&frame, 0, &k2, &q, 0.1).unwrap();
        assert!(a.verify(&g, &k2).is_ok() && b.verify(&g, &k2).is_ok());
        assert_eq!(a.vertices(20).len() + b.vertices(20).len(), 4);
        let k3 = pattern_from_name("k3").unwrap();
        let (a, b) = subdivision_pair(&frame, 0, &k3, &q, 0.1).unwrap();
        assert!(a.paths.iter().all(|p| p.len() == 2));
        assert!(a.vertices(20).is_disjoint(&b.vertices(20)));
        assert!(b.verify(&g, &k3).is_ok());
    }

    #[test]
    fn k4_pair_in_k15_15_balances() {
        let g = gen_complete_bipartite(15, 15);
        let frame = Frame::new(&g, &one_class(&g, Some(halves(30, 15))));
        let k4 = pattern_from_name("k4").unwrap();
        let (a, b) = subdivision_pair(&frame, 0, &k4, &VertexSet::new(30), 0.1).unwrap();
        let (x, y) = frame.sides[0].as_ref().unwrap();
        let sk = |s: &Subdivision| {
            let v = s.vertices(30);
            v.intersection_len(x) as i64 - v.intersection_len(y) as i64
        };
        // |V(F)| − e(F) = −2 toward the branch side, opposite signs.
        assert_eq!(sk(&a), -2);
        assert_eq!(sk(&b), 2);
    }

    #[test]
    fn small_instances() {
        let p = ParamPack::default();
        let k3 = pattern_from_name("k3").unwrap();
        let g = gen_complete(7);
        let (pk, rep) = pack_subdivisions_with(&g, &k3, &one_class(&g, None), &p).unwrap();
        pk.verify(&g).unwrap();
        assert_eq!(rep.routes, vec!["single"]);
        let k2 = pattern_from_name("k2").unwrap();
        let g = gen_complete_bipartite(4, 4);
        let (pk, _) = pack_subdivisions_with(&g, &k2, &one_class(&g, Some(halves(8, 4))), &p).unwrap();
        pk.verify(&g).unwrap();
    }

    #[test]
    fn absorb_in_k9() {
        let g = gen_complete(9);
        let frame = Frame::new(&g, &one_class(&g, None));
        let p = ParamPack::default();
        let pi = vec![7, 8];
        let q = VertexSet::from_iter(9, pi.iter().copied());
        let k3 = pattern_from_name("k3").unwrap();
        let (a, b) = subdivision_pair(&frame, 0, &k3, &q, p.delta).unwrap();
        let a2 = absorb(&frame, 0, &a, &b, &pi, &q, &p).unwrap();
        a2.verify(&g, &k3).unwrap();
        assert_eq!(a2.vertices(9).union(&b.vertices(9)), g.vertices());
    }
}
