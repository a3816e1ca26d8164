//! `zscore` — operator entry point for the reputation pipeline.
//!
//! Stage order: gen → ingest → features → cluster → label → train → score
//! → attest → epoch → query / report. Every command reads and writes
//! declared artifacts under the workdir (`--workdir` or `ZSCORE_WORKDIR`).
//!
//! Exit status: 0 on success, 1 on validation failure, 2 on usage errors.

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use std::io::{BufRead, Write};
use std::path::PathBuf;
use zscore_core::ingest::Cohort;
use zscore_core::pipeline::{
    query_score, stage_attest, stage_cluster, stage_epoch, stage_features, stage_gen,
    stage_ingest, stage_label, stage_report, stage_score, stage_train, RunConfig, Workdir,
};
use zscore_core::quorum::QueryRequest;
use zscore_core::synth::{desk_spec, PopulationSpec};

#[derive(Parser)]
#[command(
    name = "zscore",
    version,
    about = "Onchain reputation pipeline: ingest event logs, mine behavior clusters, \
             train the scoring network, and publish Merkle-attested scores"
)]
struct Cli {
    /// Working directory for all pipeline artifacts.
    #[arg(long, global = true, env = "ZSCORE_WORKDIR", default_value = ".")]
    workdir: PathBuf,

    /// Run-configuration TOML; flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed propagated to every seeded stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population with ground truth.
    Gen {
        /// Population spec TOML; defaults to the desk-scale population.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the number of users of the default population.
        #[arg(long)]
        users: Option<usize>,
    },
    /// Parse event logs, classify volatility, split cohorts.
    Ingest {
        /// Input format of the event log.
        #[arg(long, value_parser = ["jsonl", "csv"])]
        format: Option<String>,
        /// Event log path (workdir-relative or absolute).
        #[arg(long)]
        events: Option<String>,
        /// Liquidation-threshold CSV path.
        #[arg(long)]
        thresholds: Option<String>,
        /// Wallet roster (adds event-less wallets); the generated
        /// ground_truth.csv works as-is.
        #[arg(long)]
        roster: Option<String>,
        /// Flip the volatility median split.
        #[arg(long)]
        invert_volatility: bool,
    },
    /// Extract behavioral features and fit per-cohort scaling.
    Features,
    /// Search clusterings with PSO and write labels.
    Cluster {
        #[arg(long, value_parser = ["liquidation", "non-liquidation"])]
        cohort: Option<String>,
        #[arg(long, value_parser = ["kmeans", "agglomerative", "dbscan"])]
        algorithm: Option<String>,
    },
    /// Assign score intervals to clusters via the rule policy.
    Label {
        #[arg(long, value_parser = ["liquidation", "non-liquidation"])]
        cohort: Option<String>,
        /// Rule policy TOML.
        #[arg(long)]
        policy: Option<String>,
        /// Manual interval overrides CSV (cluster_id,lower,upper).
        #[arg(long)]
        overrides: Option<String>,
    },
    /// Train the scoring network per cohort.
    Train {
        #[arg(long, value_parser = ["liquidation", "non-liquidation"])]
        cohort: Option<String>,
        /// Net configuration JSON.
        #[arg(long)]
        net_config: Option<String>,
    },
    /// Emit final scores for every wallet.
    Score,
    /// Commit scores to the Merkle store and print the sealed root.
    Attest {
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Run the validator quorum round and publish on success.
    Epoch {
        #[arg(long)]
        epoch: Option<u64>,
        /// Validator roster TOML; defaults to three honest validators.
        #[arg(long)]
        roster: Option<String>,
    },
    /// Serve a score with its proof, verified against the on-chain root.
    Query {
        #[arg(long, required_unless_present = "serve")]
        wallet: Option<String>,
        #[arg(long)]
        epoch: Option<u64>,
        /// Read JSONL requests {"wallet","epoch"} from stdin instead.
        #[arg(long)]
        serve: bool,
    },
    /// Score-distribution histograms (CSV + SVG) and summary.
    Report,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            std::process::exit(1);
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn cohorts_to_run(flag: &Option<String>) -> Result<Vec<Cohort>> {
    match flag {
        None => Ok(Cohort::BOTH.to_vec()),
        Some(name) => Ok(vec![name
            .parse::<Cohort>()
            .map_err(|e| anyhow!(e))?]),
    }
}

fn run(cli: Cli) -> Result<i32> {
    let workdir = Workdir::create(&cli.workdir)?;
    let mut config = load_config(&cli)?;

    match &cli.command {
        Command::Gen { spec, users } => {
            let mut population_spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading spec {}", path.display()))?;
                    PopulationSpec::from_toml_str(&text)?
                }
                None => desk_spec(users.unwrap_or(2_000), config.seed),
            };
            if let Some(n) = users {
                population_spec.n_users = *n;
            }
            if cli.seed.is_some() {
                population_spec.seed = config.seed;
            }
            let events = stage_gen(&workdir, &population_spec)?;
            println!(
                "gen: {} users, {events} events -> events.jsonl, thresholds.csv, ground_truth.csv",
                population_spec.n_users
            );
        }
        Command::Ingest {
            format,
            events,
            thresholds,
            roster,
            invert_volatility,
        } => {
            if let Some(format) = format {
                config.ingest.format = format.clone();
            }
            if *invert_volatility {
                config.ingest.invert_volatility = true;
            }
            if events.is_some() {
                config.paths.events = events.clone();
            }
            if thresholds.is_some() {
                config.paths.thresholds = thresholds.clone();
            }
            if roster.is_some() {
                config.paths.roster = roster.clone();
            }
            let summary = stage_ingest(&workdir, &config)?;
            println!(
                "ingest: {} events ({} rejected), {} wallets ({} liquidation cohort, {} dropped, {} anomalies)",
                summary.events,
                summary.rejects,
                summary.wallets,
                summary.liquidation_wallets,
                summary.dropped,
                summary.anomalies
            );
        }
        Command::Features => {
            let summary = stage_features(&workdir, &config)?;
            println!(
                "features: {} users ({} zero-interaction) -> features.csv",
                summary.users, summary.zero_interaction
            );
        }
        Command::Cluster { cohort, algorithm } => {
            if let Some(algorithm) = algorithm {
                config.cluster.algorithm = algorithm.clone();
            }
            for cohort in cohorts_to_run(cohort)? {
                let manifest = stage_cluster(&workdir, &config, cohort)?;
                println!(
                    "cluster[{}]: {} clusters, silhouette {:.4}, objective {:.4}, gate {}",
                    cohort,
                    manifest.n_clusters,
                    manifest.silhouette,
                    manifest.objective,
                    if manifest.gate_passed { "passed" } else { "BELOW GATE (best-found kept)" }
                );
                if let Some(sub) = &manifest.sub_split {
                    println!(
                        "cluster[{}]: split dominant cluster {} ({:.0}% of users) into {} sub-clusters, silhouette {:.4}",
                        cohort,
                        sub.parent_cluster,
                        sub.parent_share * 100.0,
                        sub.n_clusters,
                        sub.silhouette
                    );
                }
            }
        }
        Command::Label {
            cohort,
            policy,
            overrides,
        } => {
            if policy.is_some() {
                config.paths.policy = policy.clone();
            }
            if overrides.is_some() {
                config.paths.overrides = overrides.clone();
            }
            for cohort in cohorts_to_run(cohort)? {
                let summary = stage_label(&workdir, &config, cohort)?;
                println!(
                    "label[{}]: {} clusters -> intervals {}",
                    cohort,
                    summary.clusters,
                    summary
                        .intervals
                        .iter()
                        .map(|iv| format!("{}:[{},{}]", iv.cluster_id, iv.lower, iv.upper))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
        }
        Command::Train { cohort, net_config } => {
            if net_config.is_some() {
                config.paths.net_config = net_config.clone();
            }
            for cohort in cohorts_to_run(cohort)? {
                let report = stage_train(&workdir, &config, cohort)?;
                let best = report.final_val();
                println!(
                    "train[{}]: {} epochs (best {}), val bound {:.6}, dist {:.6}, coh {:.6}{}",
                    cohort,
                    report.epochs.len(),
                    report.best_epoch,
                    best.bound,
                    best.dist,
                    best.coh,
                    if report.stopped_early { ", early-stopped" } else { "" }
                );
            }
        }
        Command::Score => {
            let count = stage_score(&workdir, &config)?;
            println!("score: {count} wallets -> scores.jsonl");
        }
        Command::Attest { epoch } => {
            let epoch = epoch.unwrap_or(config.epoch);
            let root = stage_attest(&workdir, epoch)?;
            println!("attest[epoch {epoch}]: root {root}");
        }
        Command::Epoch { epoch, roster } => {
            if roster.is_some() {
                config.paths.validators = roster.clone();
            }
            let epoch = epoch.unwrap_or(config.epoch);
            let result = stage_epoch(&workdir, &config, epoch)?;
            println!(
                "epoch {}: {}/{} approvals, {}",
                epoch,
                result.approvals,
                result.total_validators,
                if result.published { "published" } else { "NOT published" }
            );
            if !result.published {
                return Ok(1);
            }
        }
        Command::Query {
            wallet,
            epoch,
            serve,
        } => {
            let epoch = epoch.unwrap_or(config.epoch);
            if *serve {
                return serve_queries(&workdir, epoch);
            }
            let wallet = wallet.as_deref().expect("clap enforces wallet");
            let response = query_score(&workdir, wallet, epoch)?;
            println!("{}", serde_json::to_string_pretty(&response)?);
            if !response.verified {
                return Ok(1);
            }
        }
        Command::Report => {
            let summary = stage_report(&workdir)?;
            println!(
                "report: {} users, mean score {:.1}, {} below 300, {} above 600 -> report/",
                summary.total_users, summary.mean_score, summary.below_300, summary.above_600
            );
        }
    }
    Ok(0)
}

/// Line-framed query service on stdin/stdout: one JSON request per line,
/// one JSON response per line. Errors come back as {"error": ...} lines.
fn serve_queries(workdir: &Workdir, default_epoch: u64) -> Result<i32> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(value) => {
                let request = QueryRequest {
                    wallet: value
                        .get("wallet")
                        .and_then(|w| w.as_str())
                        .unwrap_or_default()
                        .to_string(),
                    epoch: value.get("epoch").and_then(|e| e.as_u64()).unwrap_or(default_epoch),
                };
                match query_score(workdir, &request.wallet, request.epoch) {
                    Ok(response) => serde_json::to_value(&response)?,
                    Err(error) => serde_json::json!({ "error": error.to_string() }),
                }
            }
            Err(error) => serde_json::json!({ "error": format!("bad request: {error}") }),
        };
        writeln!(out, "{response}")?;
        out.flush()?;
    }
    Ok(0)
}
