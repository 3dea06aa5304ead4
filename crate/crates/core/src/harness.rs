//! End-to-end K_{t,t}-packing and an independent verifier.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::balance::{balance, BalanceReport};
use crate::cluster::{pack_expander, ExpanderReport};
use crate::decompose::{expander_decompose, Label, ParamPack};
use crate::graph::Graph;
use crate::ktt::KttPacking;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub copies: usize,
    pub covered: usize,
    pub leftover: usize,
    pub errors: Vec<String>,
}

/// Checks every copy (sizes, t² edges) and pairwise disjointness from the
/// raw graph and packing alone.
pub fn verify_packing(g: &Graph, packing: &KttPacking, t: usize) -> Verdict {
    let n = g.n();
    let mut errors = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    if packing.t != t {
        errors.push(format!("packing declares t = {}, expected {t}", packing.t));
    }
    for (k, c) in packing.copies.iter().enumerate() {
        if c.a.len() != t || c.b.len() != t {
            errors.push(format!("copy {k}: sides of size {} and {}", c.a.len(), c.b.len()));
        }
        for &v in c.a.iter().chain(&c.b) {
            if v >= n {
                errors.push(format!("copy {k}: vertex {v} out of range"));
                continue;
            }
            match owner[v] {
                Some(j) => errors.push(format!("copies {j} and {k} share vertex {v}")),
                None => owner[v] = Some(k),
            }
        }
        for &a in &c.a {
            for &b in &c.b {
                if a < n && b < n && !g.has_edge(a, b) {
                    errors.push(format!("copy {k}: missing edge ({a}, {b})"));
                }
            }
        }
    }
    let covered = owner.iter().filter(|o| o.is_some()).count();
    Verdict { pass: errors.is_empty(), copies: packing.copies.len(), covered, leftover: n - covered, errors }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: &'static str,
    pub ok: bool,
    pub ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct PackingReport {
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub seed: u64,
    pub r: usize,
    pub labels: Vec<Label>,
    pub leftover: usize,
    pub bound: usize,
    pub discarded: usize,
    pub moves: usize,
    pub balancing_copies: usize,
    pub balance: Option<BalanceReport>,
    pub expanders: Vec<ExpanderReport>,
    pub stages: Vec<StageRecord>,
    pub verdict: Option<Verdict>,
    pub params: ParamPack,
}

#[derive(Debug, Error, Clone)]
pub enum HarnessError {
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String, report: Box<PackingReport> },
    #[error("verification: {}", .report.verdict.as_ref().map(|v| v.errors.join("; ")).unwrap_or_default())]
    Verification { report: Box<PackingReport> },
}

impl HarnessError {
    pub fn report(&self) -> &PackingReport {
        match self {
            HarnessError::Stage { report, .. } | HarnessError::Verification { report } => report,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            HarnessError::Stage { stage, .. } => stage,
            HarnessError::Verification { .. } => "verify",
        }
    }
}

struct Run {
    rep: PackingReport,
}

impl Run {
    fn time<T, E: std::fmt::Display>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T, E>) -> Result<T, HarnessError> {
        let t0 = Instant::now();
        let out = f();
        self.rep.stages.push(StageRecord { stage, ok: out.is_ok(), ms: t0.elapsed().as_millis() });
        out.map_err(|e| HarnessError::Stage { stage, message: e.to_string(), report: Box::new(self.rep.clone()) })
    }
}

/// Decompose, balance, pack each class, and add the balancing copies; the
/// leftover is recounted by `verify_packing` and held to r(2t−1) + discards.
pub fn pack_h(g: &Graph, t: usize, params: &ParamPack, seed: u64) -> Result<(KttPacking, PackingReport), HarnessError> {
    let params = ParamPack { t, ..params.clone() };
    let n = g.n();
    let mut run = Run {
        rep: PackingReport {
            n,
            d: g.max_degree(),
            t,
            seed,
            r: 0,
            labels: Vec::new(),
            leftover: n,
            bound: 0,
            discarded: 0,
            moves: 0,
            balancing_copies: 0,
            balance: None,
            expanders: Vec::new(),
            stages: Vec::new(),
            verdict: None,
            params: params.clone(),
        },
    };
    run.time("precondition", || g.regular_degree().map(|_| ()).ok_or("graph is not regular"))?;
    let dec = run.time("decompose", || expander_decompose(g, &params))?;
    run.rep.r = dec.r();
    run.rep.labels = dec.labels.clone();
    let (bal, st) = run.time("balance", || balance(g, &dec, seed))?;
    run.rep.moves = st.moved();
    run.rep.balancing_copies = bal.packing.len();
    run.rep.discarded = bal.discarded.len();
    run.rep.balance = Some(bal.report.clone());
    let mut packing = KttPacking::new(t);
    packing.extend(bal.packing.clone());
    let mut reports = Vec::new();
    let parts = run.time("expanders", || {
        let mut out = Vec::new();
        for i in 0..bal.classes.len() {
            let sides = (bal.labels[i] == Label::AlmostBipartite).then_some(&bal.sides[i]);
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let (p, rep) = pack_expander(&bal.gprime, &bal.classes[i], sides, t, &params, s).map_err(|e| format!("class {i}: {e}"))?;
            reports.push(rep);
            out.push(p);
        }
        Ok::<_, String>(out)
    });
    run.rep.expanders = reports;
    for p in parts? {
        packing.extend(p);
    }
    let verdict = verify_packing(g, &packing, t);
    run.rep.leftover = verdict.leftover;
    run.rep.bound = dec.r() * (2 * t - 1) + bal.discarded.len();
    let pass = verdict.pass;
    run.rep.verdict = Some(verdict);
    if !pass {
        return Err(HarnessError::Verification { report: Box::new(run.rep) });
    }
    if run.rep.leftover > run.rep.bound {
        let message = format!("leftover {} exceeds r(2t−1) + discards = {}", run.rep.leftover, run.rep.bound);
        return Err(HarnessError::Stage { stage: "bound", message, report: Box::new(run.rep) });
    }
    Ok((packing, run.rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_complete, gen_complete_bipartite};
    use crate::ktt::{KttCopy, Tag};

    #[test]
    fn verifier_examples() {
        let g = gen_complete(8);
        let c1 = KttCopy::new(&g, vec![0, 1], vec![2, 3], Tag::Direct).unwrap();
        let c2 = KttCopy::new(&g, vec![4, 5], vec![6, 7], Tag::Direct).unwrap();
        let ok = KttPacking { t: 2, copies: vec![c1.clone(), c2] };
        let v = verify_packing(&g, &ok, 2);
        assert!(v.pass);
        assert_eq!(v.leftover, 0);
        let c3 = KttCopy::new(&g, vec![3, 4], vec![5, 6], Tag::Direct).unwrap();
        let clash = KttPacking { t: 2, copies: vec![c1, c3] };
        let v = verify_packing(&g, &clash, 2);
        assert!(!v.pass);
        assert!(v.errors[0].contains("share vertex 3"), "{:?}", v.errors);
        let mut h = gen_complete(8);
        h.remove_edge(0, 2);
        let v = verify_packing(&h, &ok, 2);
        assert_eq!(v.errors, vec!["copy 0: missing edge (0, 2)".to_string()]);
    }

    #[test]
    fn complete_graphs() {
        let p = ParamPack::default();
        let (pk, rep) = pack_h(&gen_complete(8), 2, &p, 0).unwrap();
        assert_eq!(rep.leftover, 0);
        assert_eq!(pk.len(), 2);
        let (_, rep) = pack_h(&gen_complete_bipartite(6, 6), 2, &p, 0).unwrap();
        assert_eq!(rep.leftover, 0);
    }
}
