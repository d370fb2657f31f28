//! `edln`: run scenarios and sweeps, check invariants, compare networks, solve for the closed form.
//!
//! Exit codes: 0 when every verdict passes, 1 when any verdict fails, 2 on an execution error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use edln_core::data::{DataModel, DataSpec};
use edln_core::experiments::{parse_axis, run_scenario, sweep, ScenarioConfig, ScenarioKind, ScenarioResult};
use edln_core::io::{load_network, read_json, save_network, write_json};
use edln_core::metrics::{pairwise_alignment_with, LayerSet, Probe};
use edln_core::theory::{closed_form_platonic, Architecture};

#[derive(Parser)]
#[command(name = "edln", version, about = "Embedded deep linear network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        /// Scenario name, e.g. platonic_closed_form.
        scenario: String,
        /// TOML config; every key is optional.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Run the Cartesian product of one or more parameter axes.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario name; overrides the config's `scenario` key.
        #[arg(long)]
        scenario: Option<String>,
        /// `path=v1,v2,...`, e.g. `train.weight_decay=0,1e-3,1e-2`; repeatable.
        #[arg(long)]
        axis: Vec<String>,
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// Concurrent runs (0 = one per core).
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Layer-by-layer alignment of two saved networks on probes drawn from a data model.
    Align {
        #[arg(long)]
        net_a: PathBuf,
        #[arg(long)]
        net_b: PathBuf,
        /// Data model JSON (as written by `gen-data`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "A")]
        tag_a: String,
        #[arg(long, default_value = "B")]
        tag_b: String,
        #[arg(long, default_value_t = 64)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Layers::Hidden)]
        layers: Layers,
        /// Write the score matrix as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form entropic minimum for a data model and depth.
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value = "A")]
        tag: String,
        /// Hidden width (default: max of input and output dimension).
        #[arg(long)]
        width: Option<usize>,
        /// Random embeddings with this condition number instead of identity ones.
        #[arg(long)]
        embedding_cond: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solution JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also save the network alone, loadable by `align`.
        #[arg(long)]
        net_out: Option<PathBuf>,
    },
    /// Generate a synthetic data model.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        input_dim: usize,
        #[arg(long, default_value_t = 6)]
        output_dim: usize,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long, default_value_t = 10.0)]
        cond_z: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Layers {
    Hidden,
    All,
}

fn load_config(path: Option<&Path>, scenario: Option<ScenarioKind>) -> Result<ScenarioConfig> {
    Ok(match path {
        Some(p) => ScenarioConfig::from_file(p, scenario).with_context(|| format!("reading config {}", p.display()))?,
        None => ScenarioConfig::from_toml_str("", scenario)?,
    })
}

fn print_result(r: &ScenarioResult) {
    println!("scenario {} [{}]: {}", r.scenario, r.config_hash, if r.verdict { "PASS" } else { "FAIL" });
    for m in &r.summary {
        println!("  {} = {:e}", m.name, m.value);
    }
    println!("  artifacts in {}", r.dir.display());
}

fn run_one(scenario: ScenarioKind, config: Option<&Path>, seed: Option<u64>, outdir: Option<PathBuf>) -> Result<bool> {
    let mut cfg = load_config(config, Some(scenario))?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(d) = outdir {
        cfg.outdir = d;
    }
    let r = run_scenario(&cfg)?;
    print_result(&r);
    Ok(r.verdict)
}

/// `Ok(true)`: every verdict passed; `Ok(false)`: some verdict failed.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario, config, seed, outdir } => run_one(scenario.parse()?, config.as_deref(), seed, outdir),
        Command::Verify { config, seed, outdir } => run_one(ScenarioKind::InvariantSuite, config.as_deref(), seed, outdir),
        Command::Sweep { config, scenario, axis, outdir, parallelism } => {
            let kind = scenario.map(|s| s.parse()).transpose()?;
            let mut cfg = load_config(config.as_deref(), kind)?;
            if let Some(d) = outdir {
                cfg.outdir = d;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            let axes = axis.iter().map(|a| parse_axis(a)).collect::<edln_core::Result<Vec<_>>>()?;
            let report = sweep(&cfg, &axes)?;
            for run in &report.runs {
                let label: Vec<String> = run.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
                match &run.outcome {
                    Ok(r) => println!("{} [{}]: {}", label.join(" "), r.config_hash, if r.verdict { "PASS" } else { "FAIL" }),
                    Err(e) => println!("{}: ERROR {e}", label.join(" ")),
                }
            }
            println!("table: {}", report.table.display());
            if report.any_error() {
                bail!("some sweep runs failed to execute");
            }
            Ok(report.all_pass())
        }
        Command::Align { net_a, net_b, data, tag_a, tag_b, probes, seed, layers, out } => {
            let a = load_network(&net_a).with_context(|| format!("loading {}", net_a.display()))?;
            let b = load_network(&net_b).with_context(|| format!("loading {}", net_b.display()))?;
            let dm: DataModel = read_json(&data).with_context(|| format!("loading {}", data.display()))?;
            dm.validate()?;
            let batch = dm.sample_batch(probes, &[&tag_a, &tag_b], seed)?;
            let set = match layers {
                Layers::Hidden => LayerSet::Hidden,
                Layers::All => LayerSet::HiddenAndOutput,
            };
            let m = pairwise_alignment_with(Probe::new(&a, &tag_a), Probe::new(&b, &tag_b), &batch, set)?;
            println!("alignment scores (rows: layers of a, columns: layers of b)");
            for (r, i) in m.layers_a.iter().enumerate() {
                let cells: Vec<String> = (0..m.layers_b.len()).map(|c| format!("{:.6}", m.scores[(r, c)])).collect();
                println!("  a{i}: {}", cells.join(" "));
            }
            println!("min alignment {:.12}, max {:.12}, min CKA {:.12}", m.min_score(), m.max_score(), m.min_cka());
            if let Some(p) = out {
                m.write_csv(&p)?;
            }
            Ok(true)
        }
        Command::Solve { data, depth, tag, width, embedding_cond, seed, out, net_out } => {
            if depth == 0 {
                bail!("depth must be at least 1");
            }
            let dm: DataModel = read_json(&data).with_context(|| format!("loading {}", data.display()))?;
            dm.validate()?;
            let w = width.unwrap_or(dm.input_dim.max(dm.output_dim));
            let hidden = vec![w; depth - 1];
            let arch = match embedding_cond {
                Some(c) => Architecture::random(dm.input_dim, &hidden, dm.output_dim, c, seed),
                None => Architecture::identity(dm.input_dim, &hidden, dm.output_dim),
            };
            let sol = closed_form_platonic(&dm, &tag, &arch, Some(seed))?;
            eprintln!("rank {}, singular values {:?}, predicted entropy {:e}", sol.rank, sol.svd.singular_values, sol.predicted_entropy);
            match out {
                Some(p) => write_json(&p, &sol)?,
                None => println!("{}", serde_json::to_string_pretty(&sol)?),
            }
            if let Some(p) = net_out {
                save_network(&p, &sol.network)?;
            }
            Ok(true)
        }
        Command::GenData { out, seed, input_dim, output_dim, rank, cond_z } => {
            let dm = DataModel::generate(&DataSpec { input_dim, output_dim, rank, cond_z, seed, ..DataSpec::default() })?;
            write_json(&out, &dm)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
