//! Instance families, seeded campaigns and the command handlers behind the
//! `tiler` binary.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tiling_core::decompose::ParamPack;
use tiling_core::graph::{gen_bipartite_regular, gen_clique_union, gen_regular, Graph};
use tiling_core::harness::{pack_h, HarnessError, PackingReport};
use tiling_core::subdivide::{pack_subdivisions, pattern_from_name};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Random d-regular graph on n vertices.
    Regular { n: usize, d: usize },
    /// `copies` disjoint copies of K_k.
    Cliques { copies: usize, k: usize },
    /// Random d-regular bipartite graph with sides of size h.
    Bipartite { h: usize, d: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Regular { .. } => "regular",
            Family::Cliques { .. } => "cliques",
            Family::Bipartite { .. } => "bipartite",
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Graph> {
        Ok(match *self {
            Family::Regular { n, d } => gen_regular(n, d, seed)?,
            Family::Cliques { copies, k } => gen_clique_union(copies, k),
            Family::Bipartite { h, d } => gen_bipartite_regular(h, d, seed)?,
        })
    }

    fn check(&self) -> Result<()> {
        match *self {
            Family::Regular { n, d } if d == 0 || d >= n || (n * d) % 2 == 1 => bail!("regular family needs 0 < d < n and nd even"),
            Family::Cliques { copies, k } if copies == 0 || k < 2 => bail!("cliques family needs copies ≥ 1 and k ≥ 2"),
            Family::Bipartite { h, d } if d == 0 || d > h => bail!("bipartite family needs 0 < d ≤ h"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub families: Vec<Family>,
    #[serde(default = "default_t")]
    pub t: usize,
    /// Subdivision pattern (`k4`, `c5`, ...); runs the subdivision pipeline instead.
    #[serde(default)]
    pub pattern: Option<String>,
    #[serde(default)]
    pub params: ParamPack,
    pub seeds: Vec<u64>,
    /// Record wall-clock milliseconds; off keeps the CSV byte-identical across runs.
    #[serde(default)]
    pub timings: bool,
}

fn default_t() -> usize {
    2
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if self.families.is_empty() {
            bail!("family list is empty");
        }
        if self.t == 0 {
            bail!("t must be at least 1");
        }
        for f in &self.families {
            f.check()?;
        }
        if let Some(p) = &self.pattern {
            pattern_from_name(p)?;
        }
        self.params.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub family: String,
    pub n: usize,
    pub d: usize,
    pub t: String,
    pub seed: u64,
    pub leftover: Option<usize>,
    pub stage: String,
    pub status: String,
    pub ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub row: CampaignRow,
    pub report: Option<PackingReport>,
    pub error: Option<String>,
}

fn run_one(cfg: &ExperimentConfig, fam: &Family, seed: u64) -> Outcome {
    let t0 = Instant::now();
    let mut row = CampaignRow {
        family: fam.name().into(),
        n: 0,
        d: 0,
        t: cfg.pattern.clone().unwrap_or_else(|| cfg.t.to_string()),
        seed,
        leftover: None,
        stage: "generate".into(),
        status: "stage_failed".into(),
        ms: 0,
    };
    let g = match fam.generate(seed) {
        Ok(g) => g,
        Err(e) => return Outcome { row, report: None, error: Some(e.to_string()) },
    };
    row.n = g.n();
    row.d = g.max_degree();
    let (report, error) = match &cfg.pattern {
        Some(p) => {
            let f = pattern_from_name(p).expect("validated pattern");
            match pack_subdivisions(&g, &f, &cfg.params) {
                Ok(_) => {
                    row.leftover = Some(0);
                    row.stage = "done".into();
                    row.status = "ok".into();
                    (None, None)
                }
                Err(e) => {
                    row.stage = "subdivide".into();
                    (None, Some(e.to_string()))
                }
            }
        }
        None => match pack_h(&g, cfg.t, &cfg.params, seed) {
            Ok((_, rep)) => {
                row.leftover = Some(rep.leftover);
                row.stage = "done".into();
                row.status = "ok".into();
                (Some(rep), None)
            }
            Err(e) => {
                row.stage = e.stage().into();
                row.status = match e {
                    HarnessError::Verification { .. } => "verification_failed".into(),
                    HarnessError::Stage { .. } => "stage_failed".into(),
                };
                if e.report().verdict.is_some() {
                    row.leftover = Some(e.report().leftover);
                }
                (Some(e.report().clone()), Some(e.to_string()))
            }
        },
    };
    if cfg.timings {
        row.ms = t0.elapsed().as_millis();
    }
    Outcome { row, report, error }
}

/// Runs every (family, seed) in parallel; results come back in config order.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<Vec<Outcome>> {
    cfg.validate()?;
    let jobs: Vec<(&Family, u64)> = cfg.families.iter().flat_map(|f| cfg.seeds.iter().map(move |&s| (f, s))).collect();
    Ok(jobs.par_iter().map(|&(f, s)| run_one(cfg, f, s)).collect())
}

pub fn write_csv(rows: &[CampaignRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Campaign exit code: stage failures dominate verification failures.
pub fn campaign_exit(outcomes: &[Outcome]) -> i32 {
    if outcomes.iter().any(|o| o.row.status == "stage_failed") {
        EXIT_STAGE
    } else if outcomes.iter().any(|o| o.row.status == "verification_failed") {
        EXIT_VERIFY
    } else {
        EXIT_OK
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"families": [{"family": "regular", "n": 40, "d": 20}, {"family": "cliques", "copies": 2, "k": 7}], "seeds": [1]}"#,
        )
        .unwrap();
        assert_eq!(cfg.t, 2);
        assert!(cfg.validate().is_ok());
        let bad = ExperimentConfig { seeds: vec![], ..cfg.clone() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { families: vec![Family::Regular { n: 9, d: 3 }], ..cfg };
        assert!(bad.validate().is_err());
    }
}
