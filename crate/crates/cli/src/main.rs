// SPDX-License-Identifier: MIT
//! Command-line front end: graph and data ingestion, recovery and
//! completion runs, randomized verification, and DOT export.
//!
//! Exit codes: 0 success; 1 parse or configuration error; 2 contradiction
//! during recovery; 3 no valid orientation during completion; 4 one or
//! more verification trials failed.

mod dot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cibn_core::ci::{self, CiError, IndependenceSource, PartialIpg, SepsetTable};
use cibn_core::ci_to_bn::{self, OrientationError};
use cibn_core::graphfile::GraphDoc;
use cibn_core::indep::Dataset;
use cibn_core::latent;
use cibn_core::verify::{self, TrialConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_CONTRADICTION: u8 = 2;
const EXIT_NO_ORIENTATION: u8 = 3;
const EXIT_TRIAL_FAILURES: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cibn",
    about = "Causal structure discovery with latent variables",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover a partially oriented including path graph and complete it
    /// into a belief network.
    Discover(DiscoverArgs),
    /// Run randomized end-to-end verification trials.
    Verify(VerifyArgs),
    /// Project a DAG with hidden nodes onto its including path graph.
    Fhd(FhdArgs),
}

#[derive(Args)]
struct DiscoverArgs {
    /// Ground-truth DAG file; independence facts come from exact
    /// d-separation.
    #[arg(long, value_name = "GRAPHFILE", conflicts_with_all = ["data", "from_pipg"])]
    oracle: Option<PathBuf>,
    /// CSV of categorical samples; independence facts come from G-squared
    /// tests.
    #[arg(long, value_name = "CSV", conflicts_with = "from_pipg")]
    data: Option<PathBuf>,
    /// Debug path: skip recovery and complete the given partially oriented
    /// graph directly.
    #[arg(long, value_name = "GRAPHFILE")]
    from_pipg: Option<PathBuf>,
    /// Significance level for statistical tests.
    #[arg(long)]
    alpha: Option<f64>,
    /// Conditioning-set size cap for statistical tests.
    #[arg(long)]
    max_cond: Option<usize>,
    /// Optional key = value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the recovered partially oriented graph here.
    #[arg(long, value_name = "FILE")]
    out_pipg: Option<PathBuf>,
    /// Write the completed belief network here.
    #[arg(long, value_name = "FILE")]
    out_bn: Option<PathBuf>,
    /// Write a DOT rendering of the recovered graph here.
    #[arg(long, value_name = "FILE")]
    dot: Option<PathBuf>,
    /// Write one audit line per statistical independence decision here.
    #[arg(long, value_name = "FILE")]
    ci_log: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    n_observed: Option<usize>,
    #[arg(long)]
    n_hidden: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Conditioning-set cap for the equivalence sweep (default: unlimited).
    #[arg(long)]
    max_cond: Option<usize>,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Report destination.
    #[arg(long, value_name = "FILE", default_value = "trial-report.txt")]
    report: PathBuf,
    /// Directory for counterexample graph files of failing trials.
    #[arg(long, value_name = "DIR", default_value = ".")]
    cex_dir: PathBuf,
}

#[derive(Args)]
struct FhdArgs {
    #[arg(long = "in", value_name = "GRAPHFILE")]
    input: PathBuf,
    #[arg(long = "out", value_name = "GRAPHFILE")]
    output: PathBuf,
    /// Total-node ceiling for exhaustive path enumeration.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let code = match cli.command {
        Command::Discover(args) => cmd_discover(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Fhd(args) => cmd_fhd(args),
    };
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { exit, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(exit)
        }
    }
}

struct Failure {
    exit: u8,
    message: String,
}

fn usage_error(message: impl Into<String>) -> Failure {
    Failure {
        exit: EXIT_USAGE,
        message: message.into(),
    }
}

/// `key = value` lines; `#` comments and blank lines ignored. Flags take
/// precedence over file values, file values over built-in defaults.
#[derive(Default)]
struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
        let mut cfg = FileConfig::default();
        let Some(path) = path else {
            return Ok(cfg);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage_error(format!("cannot read {}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage_error(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    i + 1
                )));
            };
            cfg.values
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| usage_error(format!("config key {key} has invalid value {raw:?}"))),
        }
    }
}

fn read_graph_doc(path: &Path) -> Result<GraphDoc, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage_error(format!("cannot read {}: {e}", path.display())))?;
    GraphDoc::parse(&text).map_err(|e| usage_error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content)
        .map_err(|e| usage_error(format!("cannot write {}: {e}", path.display())))
}

fn cmd_discover(args: DiscoverArgs) -> Result<(), Failure> {
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let alpha = args.alpha.or(file_cfg.get::<f64>("alpha")?).unwrap_or(0.05);
    let max_cond = args.max_cond.or(file_cfg.get::<usize>("max_cond")?);

    // Debug path: completion only.
    if let Some(path) = &args.from_pipg {
        let doc = read_graph_doc(path)?;
        let graph = doc
            .to_mixed()
            .map_err(|e| usage_error(format!("{}: {e}", path.display())))?;
        let pipg = PartialIpg::new(graph, SepsetTable::new());
        if let Some(out) = &args.out_pipg {
            write_file(out, &GraphDoc::from_mixed(&pipg.graph).render())?;
        }
        if let Some(out) = &args.dot {
            write_file(out, &dot::render_mixed(&pipg.graph, "pipg"))?;
        }
        let bn = ci_to_bn::run_ci_to_bn(&pipg).map_err(orientation_failure)?;
        if let Some(out) = &args.out_bn {
            write_file(out, &GraphDoc::from_dag(&bn.dag).render())?;
        }
        println!(
            "completed {} edges into a belief network with {} auxiliary nodes",
            pipg.graph.edge_count(),
            bn.auxiliary.len()
        );
        return Ok(());
    }

    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage_error("alpha must lie strictly between 0 and 1"));
    }
    let src =
        match (&args.oracle, &args.data) {
            (Some(path), None) => {
                let dag = read_graph_doc(path)?
                    .to_dag()
                    .map_err(|e| usage_error(format!("{}: {e}", path.display())))?;
                IndependenceSource::oracle(dag)
                    .map_err(|e| usage_error(format!("{}: {e}", path.display())))?
            }
            (None, Some(path)) => {
                let data = Dataset::load_csv(path).map_err(|e| usage_error(e.to_string()))?;
                let src = IndependenceSource::statistical(data, alpha, max_cond);
                if args.ci_log.is_some() {
                    src.with_audit_log()
                } else {
                    src
                }
            }
            _ => return Err(usage_error(
                "pass exactly one of --oracle <graphfile>, --data <csv>, --from-pipg <graphfile>",
            )),
        };

    let pipg = ci::run_ci(&src).map_err(|e| match e {
        CiError::Contradiction { .. } => Failure {
            exit: EXIT_CONTRADICTION,
            message: format!("{e} (the independence information is not faithful to any graph)"),
        },
        other => usage_error(other.to_string()),
    })?;

    if let Some(out) = &args.out_pipg {
        write_file(out, &GraphDoc::from_mixed(&pipg.graph).render())?;
    }
    if let Some(out) = &args.dot {
        write_file(out, &dot::render_mixed(&pipg.graph, "pipg"))?;
    }
    if let Some(out) = &args.ci_log {
        let mut lines = src.audit_log().join("\n");
        lines.push('\n');
        write_file(out, &lines)?;
    }

    let bn = ci_to_bn::run_ci_to_bn(&pipg).map_err(orientation_failure)?;
    if let Some(out) = &args.out_bn {
        write_file(out, &GraphDoc::from_dag(&bn.dag).render())?;
    }
    println!(
        "recovered {} adjacencies ({} orientation events); belief network has {} nodes, {} auxiliary",
        pipg.graph.edge_count(),
        pipg.log.len(),
        bn.dag.node_count(),
        bn.auxiliary.len()
    );
    Ok(())
}

fn orientation_failure(e: OrientationError) -> Failure {
    match e {
        OrientationError::NoValidOrientation { .. } => Failure {
            exit: EXIT_NO_ORIENTATION,
            message: e.to_string(),
        },
        other => usage_error(other.to_string()),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let cfg = TrialConfig {
        n_observed: args.n_observed.or(file_cfg.get("n_observed")?).unwrap_or(5),
        n_hidden: args.n_hidden.or(file_cfg.get("n_hidden")?).unwrap_or(2),
        edge_probability: args.edge_prob.or(file_cfg.get("edge_prob")?).unwrap_or(0.3),
        seed: args.seed.or(file_cfg.get("seed")?).unwrap_or(0),
        trials: args.trials.or(file_cfg.get("trials")?).unwrap_or(100),
        max_condition_size: args.max_cond.or(file_cfg.get("max_cond")?),
    };
    let report = verify::run_trials(&cfg).map_err(|e| usage_error(e.to_string()))?;
    write_file(&args.report, &report.render())?;

    let mut failures = 0usize;
    for record in &report.records {
        if record.passed() {
            continue;
        }
        failures += 1;
        if let Some(replay) = &record.replay {
            std::fs::create_dir_all(&args.cex_dir).map_err(|e| {
                usage_error(format!("cannot create {}: {e}", args.cex_dir.display()))
            })?;
            let stem = format!("cex_seed{}_trial{}", cfg.seed, record.index);
            let mut truth_text = GraphDoc::from_dag(&replay.truth).render();
            if let Some(cex) = &record.counterexample {
                truth_text.push_str(&format!("# disagreement: {}\n", cex.render()));
            }
            if let Some(err) = &record.error {
                truth_text.push_str(&format!("# error: {err}\n"));
            }
            write_file(
                &args.cex_dir.join(format!("{stem}_truth.graph")),
                &truth_text,
            )?;
            if let Some(bn) = &replay.bn {
                write_file(
                    &args.cex_dir.join(format!("{stem}_bn.graph")),
                    &GraphDoc::from_dag(bn).render(),
                )?;
            }
        }
    }
    println!(
        "trials={} acyclic={} equivalent={} sound={} chain_free={} failures={failures}",
        report.records.len(),
        report.acyclic_ok(),
        report.equivalent_ok(),
        report.soundness_ok(),
        report.chain_free_ok(),
    );
    if failures > 0 {
        return Err(Failure {
            exit: EXIT_TRIAL_FAILURES,
            message: format!(
                "{failures} of {} trials failed; see {} and {}",
                report.records.len(),
                args.report.display(),
                args.cex_dir.display()
            ),
        });
    }
    Ok(())
}

fn cmd_fhd(args: FhdArgs) -> Result<(), Failure> {
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let budget = args
        .budget
        .or(file_cfg.get("node_budget")?)
        .unwrap_or(latent::DEFAULT_NODE_BUDGET);
    let dag = read_graph_doc(&args.input)?
        .to_dag()
        .map_err(|e| usage_error(format!("{}: {e}", args.input.display())))?;
    let projection =
        latent::including_path_graph_with(&dag, budget).map_err(|e| usage_error(e.to_string()))?;
    write_file(&args.output, &GraphDoc::from_mixed(&projection).render())?;
    println!(
        "projected {} nodes ({} hidden) onto {} observed nodes with {} edges",
        dag.node_count(),
        dag.hidden_nodes().len(),
        projection.node_count(),
        projection.edge_count()
    );
    Ok(())
}
