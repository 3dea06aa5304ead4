use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use tiler::{campaign_exit, run_campaign, write_csv, ExperimentConfig, Family, EXIT_OK, EXIT_STAGE, EXIT_VERIFY};
use tiling_core::decompose::ParamPack;
use tiling_core::graph::{read_edge_list, write_edge_list, Graph};
use tiling_core::harness::{pack_h, verify_packing, HarnessError};
use tiling_core::ktt::KttPacking;
use tiling_core::subdivide::{pack_subdivisions, pattern_from_name};

#[derive(Parser)]
#[command(name = "tiler", about = "K_{t,t}-packings and subdivision packings of dense regular graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Near-perfect K_{t,t}-packing of a regular graph.
    Pack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        t: usize,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an instance as an edge list.
    Gen {
        #[arg(long)]
        family: String,
        /// Vertex count (regular, bipartite).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Number of cliques.
        #[arg(long)]
        copies: Option<usize>,
        /// Clique order.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perfect packing with subdivisions of a pattern.
    Subdiv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "k3")]
        pattern: String,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a K_{t,t}-packing against a graph.
    Verify {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        packing: PathBuf,
        /// Defaults to the packing's own t.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Seeded batch over instance families; writes JSON and CSV.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn load_graph(p: &PathBuf) -> Result<Graph> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(read_edge_list(&text)?)
}

fn load_params(p: &Option<PathBuf>) -> Result<ParamPack> {
    let params = match p {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => ParamPack::default(),
    };
    params.validate()?;
    Ok(params)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Pack { input, t, params, seed, out } => {
            let g = load_graph(&input)?;
            let params = load_params(&params)?;
            match pack_h(&g, t, &params, seed) {
                Ok((packing, report)) => {
                    emit(&out, &serde_json::to_string_pretty(&json!({ "report": report, "packing": packing }))?)?;
                    eprintln!("leftover {} (bound {})", report.leftover, report.bound);
                    Ok(EXIT_OK)
                }
                Err(e) => {
                    emit(&out, &serde_json::to_string_pretty(&json!({ "report": e.report(), "error": e.to_string() }))?)?;
                    eprintln!("{e}");
                    Ok(match e {
                        HarnessError::Verification { .. } => EXIT_VERIFY,
                        HarnessError::Stage { .. } => EXIT_STAGE,
                    })
                }
            }
        }
        Cmd::Gen { family, n, d, copies, k, seed, out } => {
            let need = |v: Option<usize>, name: &str| v.with_context(|| format!("--{name} is required for family {family}"));
            let fam = match family.as_str() {
                "regular" => Family::Regular { n: need(n, "n")?, d: need(d, "d")? },
                "cliques" => Family::Cliques { copies: need(copies, "copies")?, k: need(k, "k")? },
                "bipartite" => Family::Bipartite { h: need(n, "n")? / 2, d: need(d, "d")? },
                other => anyhow::bail!("unknown family {other:?}"),
            };
            emit(&out, write_edge_list(&fam.generate(seed)?).trim_end())?;
            Ok(EXIT_OK)
        }
        Cmd::Subdiv { input, pattern, params, out } => {
            let g = load_graph(&input)?;
            let params = load_params(&params)?;
            let f = pattern_from_name(&pattern)?;
            match pack_subdivisions(&g, &f, &params) {
                Ok((packing, report)) => {
                    emit(&out, &serde_json::to_string_pretty(&json!({ "report": report, "packing": packing }))?)?;
                    Ok(EXIT_OK)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(EXIT_STAGE)
                }
            }
        }
        Cmd::Verify { graph, packing, t } => {
            let g = load_graph(&graph)?;
            let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&packing)?)?;
            let body = raw.get("packing").cloned().unwrap_or(raw);
            let p: KttPacking = serde_json::from_value(body).context("parsing packing")?;
            let v = verify_packing(&g, &p, t.unwrap_or(p.t));
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(if v.pass { EXIT_OK } else { EXIT_VERIFY })
        }
        Cmd::Campaign { config, out_dir } => {
            let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&config)?).context("parsing config")?;
            let outcomes = run_campaign(&cfg)?;
            fs::create_dir_all(&out_dir)?;
            let rows: Vec<_> = outcomes.iter().map(|o| o.row.clone()).collect();
            write_csv(&rows, &out_dir.join("campaign.csv"))?;
            fs::write(out_dir.join("campaign.json"), serde_json::to_string_pretty(&outcomes)?)?;
            let ok = rows.iter().filter(|r| r.status == "ok").count();
            eprintln!("{ok}/{} instances ok", rows.len());
            Ok(campaign_exit(&outcomes))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
