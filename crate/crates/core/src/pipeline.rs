//! Stage orchestration over a working directory.
//!
//! Every stage reads and writes declared artifact files under one workdir,
//! hashes its inputs and outputs into `manifest.json` for provenance, and
//! is deterministic: unchanged inputs and seed reproduce identical bytes.
//! A lock file serializes writers per workdir.
//!
//! Artifact names (all relative to the workdir):
//!
//! ```text
//! events.jsonl           raw event log (input or generated)
//! thresholds.csv         liquidation thresholds (coin, chain, threshold)
//! ground_truth.csv       generator ground truth, doubles as wallet roster
//! population_spec.toml   the generator spec actually used
//! events.sorted.jsonl    canonical sorted events
//! rejects.jsonl          rows the parser refused, with reasons
//! anomalies.jsonl        position bookkeeping anomalies
//! volatility.json        per-coin thresholds and volatility classes
//! cohorts.json           wallet → cohort assignment plus dropped users
//! features.csv           unscaled feature matrix (schema-versioned)
//! scaling.<cohort>.json  per-cohort scaling parameters
//! clusters.<cohort>.json clustering run manifest
//! labels.<cohort>.csv    wallet → cluster id
//! profiles.<cohort>.json per-cluster statistics and rule flags
//! intervals.<cohort>.json assigned score intervals
//! net.<cohort>.bin       trained network parameters
//! train_report.<cohort>.json per-epoch losses
//! scores.jsonl           final scores, sorted by wallet
//! store/                 epoch-versioned Merkle score store
//! chain.jsonl            published-root log (append only)
//! epoch_report.<N>.json  quorum round report
//! report/                histograms (CSV + SVG) and summary
//! manifest.json          per-stage input/output hashes
//! ```

use crate::attest::{to_hex, ScoreStore, StoreError, ZScoreRecord};
use crate::cluster::{
    pso_search, split_dominant, ClusterAlgorithm, ClusterError, PsoConfig, SearchSpace,
};
use crate::features::{
    apply_scaling, extract_features, fit_scaling, read_feature_csv, read_scaling_json,
    write_feature_csv, write_scaling_json, FeatureError, ScalingParams, UserFeatureVector,
};
use crate::ingest::{
    build_histories, build_volatility_table, events_to_jsonl, parse_events, read_threshold_csv,
    split_cohorts, Cohort, CoinVolatilityTable, IngestError, LogFormat,
};
use crate::label::{
    apply_overrides, assign_intervals, label_users, profile_clusters, read_override_csv,
    validate_intervals, LabelError, LabeledDataset, RulePolicy, ScoreInterval,
};
use crate::net::{
    read_params, score_all, train, write_params, NetConfig, NetError, ScoredUser, TrainingReport,
};
use crate::quorum::{
    run_epoch, serve_score, ChainStub, QueryResponse, QuorumError, QuorumResult, ValidatorRoster,
    ValidatorSpec,
};
use crate::synth::{generate, PopulationSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

/// Liquidation-cohort cluster ids are offset by this in attested records
/// so the two cohorts' ids never collide.
pub const LIQUIDATION_CLUSTER_OFFSET: u32 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing artifact `{artifact}`: run `{stage}` first")]
    MissingArtifact { artifact: String, stage: String },
    #[error("workdir is locked by another command (remove {0} if stale)")]
    Locked(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Quorum(#[from] QuorumError),
    #[error("malformed artifact `{artifact}`: {detail}")]
    Malformed { artifact: String, detail: String },
}

fn malformed(artifact: &str, detail: impl ToString) -> PipelineError {
    PipelineError::Malformed {
        artifact: artifact.to_string(),
        detail: detail.to_string(),
    }
}

/// Per-cohort knobs. Defaults: cluster bounds [10, 50] with 30 particles
/// for the non-liquidation cohort, [5, 20] with 10 particles for the
/// liquidation cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSettings {
    pub k_lower: usize,
    pub k_upper: usize,
    pub particles: usize,
    pub batch_size: usize,
}

impl Default for CohortSettings {
    fn default() -> Self {
        CohortSettings {
            k_lower: 10,
            k_upper: 50,
            particles: 30,
            batch_size: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortTable {
    pub liquidation: CohortSettings,
    #[serde(rename = "non-liquidation")]
    pub non_liquidation: CohortSettings,
}

impl Default for CohortTable {
    fn default() -> Self {
        CohortTable {
            liquidation: CohortSettings {
                k_lower: 5,
                k_upper: 20,
                particles: 10,
                batch_size: 256,
            },
            non_liquidation: CohortSettings::default(),
        }
    }
}

impl CohortTable {
    pub fn get(&self, cohort: Cohort) -> &CohortSettings {
        match cohort {
            Cohort::Liquidation => &self.liquidation,
            Cohort::NonLiquidation => &self.non_liquidation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterStageSettings {
    pub algorithm: String,
    pub iterations: usize,
    pub gate: f64,
    pub dominance_threshold: f64,
}

impl Default for ClusterStageSettings {
    fn default() -> Self {
        ClusterStageSettings {
            algorithm: "kmeans".into(),
            iterations: 60,
            gate: crate::cluster::DEFAULT_SILHOUETTE_GATE,
            dominance_threshold: 0.6,
        }
    }
}

impl ClusterStageSettings {
    pub fn algorithm_enum(&self) -> Result<ClusterAlgorithm, PipelineError> {
        match self.algorithm.as_str() {
            "kmeans" => Ok(ClusterAlgorithm::KMeans),
            "agglomerative" => Ok(ClusterAlgorithm::Agglomerative),
            "dbscan" => Ok(ClusterAlgorithm::Dbscan),
            other => Err(malformed("config", format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub events: Option<String>,
    pub thresholds: Option<String>,
    pub roster: Option<String>,
    pub validators: Option<String>,
    pub policy: Option<String>,
    pub net_config: Option<String>,
    pub overrides: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    pub format: String,
    pub invert_volatility: bool,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings {
            format: "jsonl".into(),
            invert_volatility: false,
        }
    }
}

/// The whole run configuration (TOML). Every seeded stage derives its seed
/// from the one `seed` here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub epoch: u64,
    pub paths: PathsConfig,
    pub ingest: IngestSettings,
    pub cluster: ClusterStageSettings,
    pub cohort: CohortTable,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            epoch: 1,
            paths: PathsConfig::default(),
            ingest: IngestSettings::default(),
            cluster: ClusterStageSettings::default(),
            cohort: CohortTable::default(),
        }
    }
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            ..RunConfig::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| malformed("config", e))
    }
}

/// Stage-scoped seed derivation, so one run seed drives every stage
/// reproducibly without reuse across stages.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A working directory holding the pipeline artifacts.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl Workdir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Workdir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Exclusive writer lock; released when the guard drops.
    pub fn lock(&self) -> Result<LockGuard, PipelineError> {
        let path = self.path(".zscore.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn read(&self, name: &str, produced_by: &str) -> Result<String, PipelineError> {
        let path = self.path(name);
        if !path.exists() {
            return Err(PipelineError::MissingArtifact {
                artifact: name.to_string(),
                stage: produced_by.to_string(),
            });
        }
        Ok(fs::read_to_string(path)?)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        Ok(())
    }

    /// Record a stage's input/output hashes in the provenance manifest.
    fn record_stage(
        &self,
        stage: &str,
        seed: Option<u64>,
        inputs: &[&str],
        outputs: &[&str],
    ) -> Result<(), PipelineError> {
        let manifest_path = self.path("manifest.json");
        let mut manifest: BTreeMap<String, StageRecord> = if manifest_path.exists() {
            serde_json::from_str(&fs::read_to_string(&manifest_path)?)
                .map_err(|e| malformed("manifest.json", e))?
        } else {
            BTreeMap::new()
        };

        let hash_of = |name: &str| -> Result<Option<(String, String)>, PipelineError> {
            let path = self.path(name);
            if !path.exists() {
                return Ok(None);
            }
            if path.is_dir() {
                // A directory hashes as the digest of its sorted file bytes.
                let mut entries: Vec<PathBuf> = fs::read_dir(&path)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<Result<_, _>>()?;
                entries.sort();
                let mut hasher = Sha256::new();
                for entry in entries {
                    if entry.is_file() {
                        hasher.update(fs::read(&entry)?);
                    }
                }
                return Ok(Some((name.to_string(), hex_digest(hasher))));
            }
            let mut hasher = Sha256::new();
            hasher.update(fs::read(&path)?);
            Ok(Some((name.to_string(), hex_digest(hasher))))
        };

        let mut record = StageRecord {
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        for name in inputs {
            if let Some((k, v)) = hash_of(name)? {
                record.inputs.insert(k, v);
            }
        }
        for name in outputs {
            if let Some((k, v)) = hash_of(name)? {
                record.outputs.insert(k, v);
            }
        }
        manifest.insert(stage.to_string(), record);
        self.write(
            "manifest.json",
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
    }
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn cohort_file(prefix: &str, cohort: Cohort, extension: &str) -> String {
    format!("{prefix}.{}.{extension}", cohort.as_str())
}

// ---------------------------------------------------------------------
// Stage: gen
// ---------------------------------------------------------------------

pub fn stage_gen(workdir: &Workdir, spec: &PopulationSpec) -> Result<usize, PipelineError> {
    let _lock = workdir.lock()?;
    let population = generate(spec);
    workdir.write("events.jsonl", population.events_jsonl())?;
    workdir.write("thresholds.csv", population.thresholds_csv())?;
    workdir.write("ground_truth.csv", population.ground_truth_csv())?;
    workdir.write("population_spec.toml", spec.to_toml_string())?;
    workdir.record_stage(
        "gen",
        Some(spec.seed),
        &[],
        &["events.jsonl", "thresholds.csv", "ground_truth.csv", "population_spec.toml"],
    )?;
    Ok(population.events.len())
}

// ---------------------------------------------------------------------
// Stage: ingest
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub events: usize,
    pub rejects: usize,
    pub wallets: usize,
    pub liquidation_wallets: usize,
    pub dropped: usize,
    pub anomalies: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CohortsFile {
    liquidation: Vec<String>,
    non_liquidation: Vec<String>,
    dropped: Vec<DroppedEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DroppedEntry {
    wallet: String,
    reason: String,
}

pub fn stage_ingest(
    workdir: &Workdir,
    config: &RunConfig,
) -> Result<IngestSummary, PipelineError> {
    let _lock = workdir.lock()?;
    let events_name = config.paths.events.as_deref().unwrap_or("events.jsonl");
    let thresholds_name = config.paths.thresholds.as_deref().unwrap_or("thresholds.csv");

    let format = match config.ingest.format.as_str() {
        "jsonl" => LogFormat::Jsonl,
        "csv" => LogFormat::Csv,
        other => return Err(malformed("config", format!("unknown format `{other}`"))),
    };
    let events_text = workdir.read(events_name, "gen (or provide events)")?;
    let outcome = parse_events(BufReader::new(events_text.as_bytes()), format)?;

    let thresholds_text = workdir.read(thresholds_name, "gen (or provide thresholds)")?;
    let threshold_rows = read_threshold_csv(BufReader::new(thresholds_text.as_bytes()))?;
    let volatility = build_volatility_table(&threshold_rows, config.ingest.invert_volatility)?;

    let roster = match &config.paths.roster {
        Some(name) => Some(read_wallet_roster(workdir, name)?),
        None => None,
    };
    let histories = build_histories(&outcome.events, roster.as_deref());
    let anomalies = crate::ingest::reconstruct_positions(&outcome.events).anomalies;
    let split = split_cohorts(histories);

    let cohorts = CohortsFile {
        liquidation: split.liquidation.iter().map(|h| h.wallet.clone()).collect(),
        non_liquidation: split.non_liquidation.iter().map(|h| h.wallet.clone()).collect(),
        dropped: split
            .dropped
            .iter()
            .map(|d| DroppedEntry {
                wallet: d.wallet.clone(),
                reason: d.reason.clone(),
            })
            .collect(),
    };

    workdir.write("events.sorted.jsonl", events_to_jsonl(&outcome.events))?;
    let rejects_jsonl: String = outcome
        .rejects
        .iter()
        .map(|r| serde_json::to_string(r).expect("reject serializes") + "\n")
        .collect();
    workdir.write("rejects.jsonl", rejects_jsonl)?;
    let anomalies_jsonl: String = anomalies
        .iter()
        .map(|a| serde_json::to_string(a).expect("anomaly serializes") + "\n")
        .collect();
    workdir.write("anomalies.jsonl", anomalies_jsonl)?;
    workdir.write(
        "volatility.json",
        serde_json::to_string_pretty(&volatility).expect("table serializes"),
    )?;
    workdir.write(
        "cohorts.json",
        serde_json::to_string_pretty(&cohorts).expect("cohorts serialize"),
    )?;
    workdir.record_stage(
        "ingest",
        None,
        &[events_name, thresholds_name],
        &[
            "events.sorted.jsonl",
            "rejects.jsonl",
            "anomalies.jsonl",
            "volatility.json",
            "cohorts.json",
        ],
    )?;

    Ok(IngestSummary {
        events: outcome.events.len(),
        rejects: outcome.rejects.len(),
        wallets: cohorts.liquidation.len() + cohorts.non_liquidation.len(),
        liquidation_wallets: cohorts.liquidation.len(),
        dropped: cohorts.dropped.len(),
        anomalies: anomalies.len(),
    })
}

/// Wallet roster: either a CSV whose first column is `wallet` (the ground
/// truth file works as-is) or a plain one-wallet-per-line file.
fn read_wallet_roster(workdir: &Workdir, name: &str) -> Result<Vec<String>, PipelineError> {
    let text = workdir.read(name, "gen (or provide a roster)")?;
    let mut wallets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = line.split(',').next().unwrap_or("");
        if i == 0 && first == "wallet" {
            continue; // header
        }
        wallets.push(first.to_string());
    }
    Ok(wallets)
}

// ---------------------------------------------------------------------
// Stage: features
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FeatureSummary {
    pub users: usize,
    pub zero_interaction: usize,
}

pub fn stage_features(workdir: &Workdir, _config: &RunConfig) -> Result<FeatureSummary, PipelineError> {
    let _lock = workdir.lock()?;
    let events_text = workdir.read("events.sorted.jsonl", "ingest")?;
    let events = parse_events(BufReader::new(events_text.as_bytes()), LogFormat::Jsonl)?.events;
    let volatility: CoinVolatilityTable =
        serde_json::from_str(&workdir.read("volatility.json", "ingest")?)
            .map_err(|e| malformed("volatility.json", e))?;
    let cohorts = read_cohorts(workdir)?;

    let mut members: Vec<String> = cohorts.liquidation.clone();
    members.extend(cohorts.non_liquidation.clone());
    members.sort();
    let histories = build_histories(&events, Some(&members));

    // Only wallets assigned to a cohort are scored; dropped ones stay out.
    let vectors: Vec<UserFeatureVector> = histories
        .iter()
        .filter(|h| members.binary_search(&h.wallet).is_ok())
        .map(|h| extract_features(h, &volatility))
        .collect();

    let mut bytes = Vec::new();
    write_feature_csv(&mut bytes, &vectors)?;
    workdir.write("features.csv", bytes)?;

    for cohort in Cohort::BOTH {
        let wallets = match cohort {
            Cohort::Liquidation => &cohorts.liquidation,
            Cohort::NonLiquidation => &cohorts.non_liquidation,
        };
        let subset: Vec<UserFeatureVector> = vectors
            .iter()
            .filter(|v| wallets.binary_search(&v.wallet).is_ok())
            .cloned()
            .collect();
        if subset.len() < 2 {
            continue; // cohort too small to scale; later stages will say so
        }
        let params = fit_scaling(&subset)?;
        workdir.write(&cohort_file("scaling", cohort, "json"), write_scaling_json(&params))?;
    }

    workdir.record_stage(
        "features",
        None,
        &["events.sorted.jsonl", "volatility.json", "cohorts.json"],
        &[
            "features.csv",
            &cohort_file("scaling", Cohort::Liquidation, "json"),
            &cohort_file("scaling", Cohort::NonLiquidation, "json"),
        ],
    )?;

    Ok(FeatureSummary {
        users: vectors.len(),
        zero_interaction: vectors.iter().filter(|v| v.is_zero_interaction()).count(),
    })
}

fn read_cohorts(workdir: &Workdir) -> Result<CohortsFile, PipelineError> {
    let mut cohorts: CohortsFile =
        serde_json::from_str(&workdir.read("cohorts.json", "ingest")?)
            .map_err(|e| malformed("cohorts.json", e))?;
    cohorts.liquidation.sort();
    cohorts.non_liquidation.sort();
    Ok(cohorts)
}

/// A cohort's unscaled vectors, scaled matrix rows, and scaling params.
type CohortMatrix = (Vec<UserFeatureVector>, Vec<Vec<f64>>, ScalingParams);

/// Load one cohort's unscaled vectors and scaled matrix rows.
fn load_cohort_matrix(
    workdir: &Workdir,
    cohort: Cohort,
) -> Result<CohortMatrix, PipelineError> {
    let vectors = read_feature_csv(BufReader::new(
        workdir.read("features.csv", "features")?.as_bytes(),
    ))?;
    let cohorts = read_cohorts(workdir)?;
    let wallets = match cohort {
        Cohort::Liquidation => &cohorts.liquidation,
        Cohort::NonLiquidation => &cohorts.non_liquidation,
    };
    let subset: Vec<UserFeatureVector> = vectors
        .into_iter()
        .filter(|v| wallets.binary_search(&v.wallet).is_ok())
        .collect();
    if subset.is_empty() {
        // Populations without this cohort skip its scaling artifact.
        return Ok((Vec::new(), Vec::new(), ScalingParams { columns: Vec::new() }));
    }
    let params =
        read_scaling_json(&workdir.read(&cohort_file("scaling", cohort, "json"), "features")?)?;
    let scaled = apply_scaling(&subset, &params)?;
    Ok((subset, scaled.rows, params))
}

// ---------------------------------------------------------------------
// Stage: cluster
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterManifest {
    pub cohort: String,
    pub algorithm: String,
    pub params: crate::cluster::AlgorithmParams,
    pub seed: u64,
    pub silhouette: f64,
    pub objective: f64,
    pub n_clusters: usize,
    pub gate: f64,
    pub gate_passed: bool,
    pub evaluations: usize,
    pub cluster_sizes: BTreeMap<i64, usize>,
    pub sub_split: Option<SubSplitManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubSplitManifest {
    pub parent_cluster: i64,
    pub parent_share: f64,
    pub silhouette: f64,
    pub n_clusters: usize,
    pub objective: f64,
}

pub fn stage_cluster(
    workdir: &Workdir,
    config: &RunConfig,
    cohort: Cohort,
) -> Result<ClusterManifest, PipelineError> {
    let _lock = workdir.lock()?;
    let (vectors, rows, _) = load_cohort_matrix(workdir, cohort)?;
    if rows.len() < 2 {
        return Err(malformed(
            "features.csv",
            format!("cohort {cohort} has {} users; need at least 2", rows.len()),
        ));
    }

    let settings = config.cohort.get(cohort);
    let algorithm = config.cluster.algorithm_enum()?;
    let seed = derive_seed(config.seed, &format!("cluster/{cohort}"));

    let k_upper = settings.k_upper.min(rows.len());
    let k_lower = settings.k_lower.min(k_upper).max(2);
    let space = match algorithm {
        ClusterAlgorithm::Dbscan => {
            let spread = data_spread(&rows);
            SearchSpace::DbscanBox {
                eps: [spread * 0.01, spread * 0.5],
                min_samples: [2, 16],
            }
        }
        _ => SearchSpace::KRange {
            lower: k_lower,
            upper: k_upper,
        },
    };
    let pso = PsoConfig {
        iterations: config.cluster.iterations,
        ..PsoConfig::new(Vec::new(), settings.particles, seed)
    };
    let outcome = pso_search(&rows, algorithm, &space, &pso, Some(config.cluster.gate))?;
    let split = split_dominant(
        &rows,
        &outcome.best,
        config.cluster.dominance_threshold,
        &space,
        &pso,
        Some(config.cluster.gate),
    )?;
    let result = split.result;

    let labels_csv: String = std::iter::once("wallet,cluster_id\n".to_string())
        .chain(
            vectors
                .iter()
                .zip(&result.labels)
                .map(|(v, l)| format!("{},{l}\n", v.wallet)),
        )
        .collect();
    workdir.write(&cohort_file("labels", cohort, "csv"), labels_csv)?;

    let manifest = ClusterManifest {
        cohort: cohort.as_str().to_string(),
        algorithm: config.cluster.algorithm.clone(),
        params: result.params,
        seed,
        silhouette: result.silhouette,
        objective: result.objective,
        n_clusters: result.n_clusters,
        gate: outcome.gate,
        gate_passed: outcome.gate_passed,
        evaluations: outcome.evaluations,
        cluster_sizes: result.cluster_sizes(),
        sub_split: split.sub.map(|s| SubSplitManifest {
            parent_cluster: s.parent_cluster,
            parent_share: s.parent_share,
            silhouette: s.silhouette,
            n_clusters: s.n_clusters,
            objective: s.objective,
        }),
    };
    workdir.write(
        &cohort_file("clusters", cohort, "json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    workdir.record_stage(
        &format!("cluster/{cohort}"),
        Some(seed),
        &["features.csv", &cohort_file("scaling", cohort, "json")],
        &[
            &cohort_file("labels", cohort, "csv"),
            &cohort_file("clusters", cohort, "json"),
        ],
    )?;
    Ok(manifest)
}

fn data_spread(rows: &[Vec<f64>]) -> f64 {
    let dims = rows[0].len();
    let mut spread = 0.0f64;
    for j in 0..dims {
        let min = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        spread += (max - min).powi(2);
    }
    spread.sqrt().max(1e-9)
}

fn read_labels(workdir: &Workdir, cohort: Cohort) -> Result<BTreeMap<String, i64>, PipelineError> {
    let name = cohort_file("labels", cohort, "csv");
    let text = workdir.read(&name, "cluster")?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (wallet, label) = line
            .split_once(',')
            .ok_or_else(|| malformed(&name, format!("row {}: expected 2 fields", i + 1)))?;
        let label: i64 = label
            .trim()
            .parse()
            .map_err(|_| malformed(&name, format!("row {}: bad cluster id", i + 1)))?;
        map.insert(wallet.to_string(), label);
    }
    Ok(map)
}

// ---------------------------------------------------------------------
// Stage: label
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LabelSummary {
    pub cohort: String,
    pub clusters: usize,
    pub intervals: Vec<ScoreInterval>,
}

pub fn stage_label(
    workdir: &Workdir,
    config: &RunConfig,
    cohort: Cohort,
) -> Result<LabelSummary, PipelineError> {
    let _lock = workdir.lock()?;
    let (vectors, _, _) = load_cohort_matrix(workdir, cohort)?;
    let label_map = read_labels(workdir, cohort)?;
    let labels: Vec<i64> = vectors
        .iter()
        .map(|v| {
            label_map.get(&v.wallet).copied().ok_or_else(|| {
                malformed(
                    &cohort_file("labels", cohort, "csv"),
                    format!("no label for wallet {}", v.wallet),
                )
            })
        })
        .collect::<Result<_, _>>()?;

    let policy = match &config.paths.policy {
        Some(name) => RulePolicy::from_toml_str(&workdir.read(name, "provide the policy file")?)?,
        None => RulePolicy::default(),
    };

    let profiles = profile_clusters(&vectors, &labels);
    let mut intervals = assign_intervals(&profiles, &policy)?;
    if let Some(name) = &config.paths.overrides {
        let overrides = read_override_csv(BufReader::new(
            workdir.read(name, "provide overrides")?.as_bytes(),
        ))?;
        apply_overrides(&mut intervals, &overrides, &profiles, &policy)?;
    } else {
        validate_intervals(&intervals, &profiles, &policy)?;
    }

    workdir.write(
        &cohort_file("profiles", cohort, "json"),
        serde_json::to_string_pretty(&profiles).expect("profiles serialize"),
    )?;
    workdir.write(
        &cohort_file("intervals", cohort, "json"),
        serde_json::to_string_pretty(&intervals).expect("intervals serialize"),
    )?;
    workdir.record_stage(
        &format!("label/{cohort}"),
        None,
        &["features.csv", &cohort_file("labels", cohort, "csv")],
        &[
            &cohort_file("profiles", cohort, "json"),
            &cohort_file("intervals", cohort, "json"),
        ],
    )?;
    Ok(LabelSummary {
        cohort: cohort.as_str().to_string(),
        clusters: profiles.len(),
        intervals,
    })
}

/// Rebuild the labeled dataset for a cohort from its artifacts. A cohort
/// with no wallets yields an empty dataset without touching later-stage
/// artifacts.
pub fn load_labeled(workdir: &Workdir, cohort: Cohort) -> Result<LabeledDataset, PipelineError> {
    let (vectors, rows, params) = load_cohort_matrix(workdir, cohort)?;
    if vectors.is_empty() {
        return Ok(LabeledDataset::default());
    }
    let label_map = read_labels(workdir, cohort)?;
    let labels: Vec<i64> = vectors
        .iter()
        .map(|v| label_map.get(&v.wallet).copied().unwrap_or(0))
        .collect();
    let intervals: Vec<ScoreInterval> =
        serde_json::from_str(&workdir.read(&cohort_file("intervals", cohort, "json"), "label")?)
            .map_err(|e| malformed("intervals", e))?;
    let scaled = crate::features::ScaledMatrix {
        rows,
        scaling_params: params,
    };
    Ok(label_users(&vectors, &scaled, &labels, &intervals)?)
}

// ---------------------------------------------------------------------
// Stage: train
// ---------------------------------------------------------------------

pub fn stage_train(
    workdir: &Workdir,
    config: &RunConfig,
    cohort: Cohort,
) -> Result<TrainingReport, PipelineError> {
    let labeled = load_labeled(workdir, cohort)?;
    let _lock = workdir.lock()?;

    let mut net_config = match &config.paths.net_config {
        Some(name) => NetConfig::from_json_str(&workdir.read(name, "provide the net config")?)?,
        None => NetConfig {
            batch_size: config.cohort.get(cohort).batch_size,
            ..NetConfig::default()
        },
    };
    net_config.seed = derive_seed(config.seed, &format!("train/{cohort}"));

    let (params, report) = train(&labeled, &net_config)?;
    workdir.write(&cohort_file("net", cohort, "bin"), write_params(&params))?;
    workdir.write(
        &cohort_file("train_report", cohort, "json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    workdir.record_stage(
        &format!("train/{cohort}"),
        Some(net_config.seed),
        &[
            "features.csv",
            &cohort_file("labels", cohort, "csv"),
            &cohort_file("intervals", cohort, "json"),
        ],
        &[
            &cohort_file("net", cohort, "bin"),
            &cohort_file("train_report", cohort, "json"),
        ],
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------
// Stage: score
// ---------------------------------------------------------------------

/// One line of `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub wallet: String,
    pub zscore: u16,
    pub cohort: String,
    pub cluster_id: i64,
    pub feature_weights: Vec<f64>,
    pub closed_form_score: f64,
    pub pinned: bool,
}

pub fn stage_score(workdir: &Workdir, _config: &RunConfig) -> Result<usize, PipelineError> {
    let mut lines: Vec<ScoreLine> = Vec::new();
    for cohort in Cohort::BOTH {
        let labeled = load_labeled(workdir, cohort)?;
        if labeled.rows.is_empty() {
            continue;
        }
        let bytes = fs::read(workdir.path(&cohort_file("net", cohort, "bin"))).map_err(|_| {
            PipelineError::MissingArtifact {
                artifact: cohort_file("net", cohort, "bin"),
                stage: "train".into(),
            }
        })?;
        let params = read_params(&bytes)?;
        let scored: Vec<ScoredUser> = score_all(&params, &labeled)?;
        lines.extend(scored.into_iter().map(|s| ScoreLine {
            wallet: s.wallet,
            zscore: s.zscore,
            cohort: cohort.as_str().to_string(),
            cluster_id: s.cluster_id,
            feature_weights: s.feature_weights,
            closed_form_score: s.closed_form_score,
            pinned: s.pinned,
        }));
    }
    let _lock = workdir.lock()?;
    lines.sort_by(|a, b| a.wallet.cmp(&b.wallet));
    let jsonl: String = lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("line serializes") + "\n")
        .collect();
    workdir.write("scores.jsonl", jsonl)?;
    workdir.record_stage(
        "score",
        None,
        &[
            &cohort_file("net", Cohort::Liquidation, "bin"),
            &cohort_file("net", Cohort::NonLiquidation, "bin"),
        ],
        &["scores.jsonl"],
    )?;
    Ok(lines.len())
}

pub fn read_scores(workdir: &Workdir) -> Result<Vec<ScoreLine>, PipelineError> {
    let text = workdir.read("scores.jsonl", "score")?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| malformed("scores.jsonl", e)))
        .collect()
}

// ---------------------------------------------------------------------
// Stage: attest
// ---------------------------------------------------------------------

pub fn stage_attest(workdir: &Workdir, epoch: u64) -> Result<String, PipelineError> {
    let _lock = workdir.lock()?;
    let scores = read_scores(workdir)?;
    let records: Vec<ZScoreRecord> = scores
        .iter()
        .map(|line| ZScoreRecord {
            wallet: line.wallet.clone(),
            zscore: line.zscore,
            epoch,
            cluster_id: attested_cluster_id(&line.cohort, line.cluster_id),
        })
        .collect();
    let mut store = ScoreStore::open(workdir.path("store"))?;
    let root = store.put_scores(&records, epoch)?;
    workdir.record_stage(&format!("attest/{epoch}"), None, &["scores.jsonl"], &["store"])?;
    Ok(to_hex(&root))
}

fn attested_cluster_id(cohort: &str, cluster_id: i64) -> u32 {
    let base = cluster_id.max(0) as u32;
    if cohort == Cohort::Liquidation.as_str() {
        LIQUIDATION_CLUSTER_OFFSET + base
    } else {
        base
    }
}

// ---------------------------------------------------------------------
// Stage: epoch (quorum round)
// ---------------------------------------------------------------------

pub fn default_validators() -> ValidatorRoster {
    ValidatorRoster {
        validators: (0..3)
            .map(|i| ValidatorSpec::honest(i, 0.1, 1_000 + u64::from(i)))
            .collect(),
    }
}

pub fn load_chain(workdir: &Workdir) -> Result<ChainStub, PipelineError> {
    let path = workdir.path("chain.jsonl");
    if !path.exists() {
        return Ok(ChainStub::default());
    }
    ChainStub::from_jsonl(&fs::read_to_string(path)?).map_err(|e| malformed("chain.jsonl", e))
}

pub fn stage_epoch(
    workdir: &Workdir,
    config: &RunConfig,
    epoch: u64,
) -> Result<QuorumResult, PipelineError> {
    let _lock = workdir.lock()?;
    let roster = match &config.paths.validators {
        Some(name) => ValidatorRoster::from_toml_str(&workdir.read(name, "provide a roster")?)
            .map_err(|e| malformed("validators", e))?,
        None => default_validators(),
    };
    let mut store = ScoreStore::open(workdir.path("store"))?;
    let mut chain = load_chain(workdir)?;
    let result = run_epoch(&mut store, &roster.validators, &mut chain, epoch)?;
    workdir.write("chain.jsonl", chain.to_jsonl())?;
    workdir.write(
        &format!("epoch_report.{epoch}.json"),
        serde_json::to_string_pretty(&result).expect("result serializes"),
    )?;
    workdir.record_stage(
        &format!("epoch/{epoch}"),
        None,
        &["store"],
        &["chain.jsonl", &format!("epoch_report.{epoch}.json")],
    )?;
    Ok(result)
}

// ---------------------------------------------------------------------
// Query
// ---------------------------------------------------------------------

pub fn query_score(
    workdir: &Workdir,
    wallet: &str,
    epoch: u64,
) -> Result<QueryResponse, PipelineError> {
    let mut store = ScoreStore::open(workdir.path("store"))?;
    let chain = load_chain(workdir)?;
    Ok(serve_score(&mut store, &chain, wallet, epoch)?)
}

// ---------------------------------------------------------------------
// Stage: report
// ---------------------------------------------------------------------

pub const HISTOGRAM_BIN_WIDTH: u16 = 50;

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub total_users: usize,
    pub below_300: usize,
    pub above_600: usize,
    pub mean_score: f64,
    pub bins: Vec<(u16, u16, usize)>,
}

pub fn stage_report(workdir: &Workdir) -> Result<ReportSummary, PipelineError> {
    let _lock = workdir.lock()?;
    let scores = read_scores(workdir)?;

    let bins = histogram(scores.iter().map(|s| s.zscore));
    let below_300 = scores.iter().filter(|s| s.zscore < 300).count();
    let above_600 = scores.iter().filter(|s| s.zscore > 600).count();
    let mean_score =
        scores.iter().map(|s| f64::from(s.zscore)).sum::<f64>() / scores.len().max(1) as f64;

    let mut overall_csv = String::from("bin_lower,bin_upper,count\n");
    for (lo, hi, count) in &bins {
        overall_csv.push_str(&format!("{lo},{hi},{count}\n"));
    }
    workdir.write("report/histogram_overall.csv", overall_csv)?;
    workdir.write("report/histogram_overall.svg", bar_chart_svg("All users", &bins))?;

    // Per-cluster histograms, cohort-qualified.
    let mut by_cluster: BTreeMap<(String, i64), Vec<u16>> = BTreeMap::new();
    for line in &scores {
        by_cluster
            .entry((line.cohort.clone(), line.cluster_id))
            .or_default()
            .push(line.zscore);
    }
    let mut clusters_csv = String::from("cohort,cluster_id,bin_lower,bin_upper,count\n");
    let mut cluster_charts = Vec::new();
    for ((cohort, cluster), zs) in &by_cluster {
        let cluster_bins = histogram(zs.iter().copied());
        for (lo, hi, count) in &cluster_bins {
            clusters_csv.push_str(&format!("{cohort},{cluster},{lo},{hi},{count}\n"));
        }
        cluster_charts.push((format!("{cohort} / cluster {cluster}"), cluster_bins));
    }
    workdir.write("report/histogram_clusters.csv", clusters_csv)?;
    workdir.write(
        "report/histogram_clusters.svg",
        multi_chart_svg(&cluster_charts),
    )?;

    let summary = ReportSummary {
        total_users: scores.len(),
        below_300,
        above_600,
        mean_score,
        bins,
    };
    workdir.write(
        "report/summary.json",
        serde_json::to_string_pretty(&serde_json::json!({
            "total_users": summary.total_users,
            "below_300": summary.below_300,
            "above_600": summary.above_600,
            "mean_score": summary.mean_score,
        }))
        .expect("summary serializes"),
    )?;
    workdir.record_stage(
        "report",
        None,
        &["scores.jsonl"],
        &[
            "report/histogram_overall.csv",
            "report/histogram_overall.svg",
            "report/histogram_clusters.csv",
            "report/histogram_clusters.svg",
            "report/summary.json",
        ],
    )?;
    Ok(summary)
}

fn histogram(scores: impl Iterator<Item = u16>) -> Vec<(u16, u16, usize)> {
    let mut bins: Vec<(u16, u16, usize)> = Vec::new();
    let mut lo = 1u16;
    while lo <= 900 {
        let hi = (lo + HISTOGRAM_BIN_WIDTH - 1).min(900);
        bins.push((lo, hi, 0));
        lo = hi + 1;
    }
    for score in scores {
        let index = ((score.saturating_sub(1)) / HISTOGRAM_BIN_WIDTH) as usize;
        let index = index.min(bins.len() - 1);
        bins[index].2 += 1;
    }
    bins
}

fn bar_chart_svg(title: &str, bins: &[(u16, u16, usize)]) -> String {
    let width = 720.0;
    let height = 260.0;
    let margin = 40.0;
    let max_count = bins.iter().map(|b| b.2).max().unwrap_or(1).max(1) as f64;
    let bar_width = (width - 2.0 * margin) / bins.len() as f64;

    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    svg.push_str(&format!(
        r#"<text x="{margin}" y="18" font-family="monospace" font-size="13">{title}</text>"#
    ));
    for (i, (lo, _, count)) in bins.iter().enumerate() {
        let bar_height = (*count as f64 / max_count) * (height - 2.0 * margin);
        let x = margin + i as f64 * bar_width;
        let y = height - margin - bar_height;
        svg.push_str(&format!(
            r##"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{bar_height:.1}" fill="#4472a8"/>"##,
            bar_width * 0.9
        ));
        if i % 3 == 0 {
            svg.push_str(&format!(
                r#"<text x="{x:.1}" y="{:.1}" font-family="monospace" font-size="9">{lo}</text>"#,
                height - margin + 12.0
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

type HistogramBins = Vec<(u16, u16, usize)>;

fn multi_chart_svg(charts: &[(String, HistogramBins)]) -> String {
    let chart_height = 280.0;
    let total_height = chart_height * charts.len().max(1) as f64;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="720" height="{total_height}" viewBox="0 0 720 {total_height}">"#
    );
    for (i, (title, bins)) in charts.iter().enumerate() {
        let inner = bar_chart_svg(title, bins);
        // Re-wrap the chart body as a translated group.
        let body = inner
            .trim_start_matches(|c| c != '>')
            .trim_start_matches('>')
            .trim_end()
            .trim_end_matches("</svg>");
        svg.push_str(&format!(
            r#"<g transform="translate(0,{:.1})">{body}</g>"#,
            i as f64 * chart_height
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::desk_spec;

    fn tiny_config(seed: u64) -> RunConfig {
        let mut config = RunConfig::with_seed(seed);
        config.paths.roster = Some("ground_truth.csv".into());
        config.cohort.liquidation = CohortSettings {
            k_lower: 2,
            k_upper: 4,
            particles: 6,
            batch_size: 64,
        };
        config.cohort.non_liquidation = CohortSettings {
            k_lower: 3,
            k_upper: 6,
            particles: 8,
            batch_size: 256,
        };
        config.cluster.iterations = 15;
        config
    }

    fn small_net() -> NetConfig {
        NetConfig {
            max_epochs: 6,
            hidden_dim: 16,
            latent_dim: 8,
            embedding_dim: 8,
            head_width: 8,
            ..NetConfig::default()
        }
    }

    #[test]
    fn lock_excludes_second_writer() {
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();
        let guard = workdir.lock().unwrap();
        assert!(matches!(workdir.lock(), Err(PipelineError::Locked(_))));
        drop(guard);
        assert!(workdir.lock().is_ok());
    }

    #[test]
    fn missing_artifact_names_the_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();
        let err = stage_features(&workdir, &RunConfig::default()).unwrap_err();
        match err {
            PipelineError::MissingArtifact { artifact, stage } => {
                assert_eq!(artifact, "events.sorted.jsonl");
                assert!(stage.contains("ingest"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn small_pipeline_reaches_scores_attest_epoch_query() {
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();
        let mut config = tiny_config(5);

        stage_gen(&workdir, &desk_spec(160, 5)).unwrap();
        stage_ingest(&workdir, &config).unwrap();
        let features = stage_features(&workdir, &config).unwrap();
        assert!(features.zero_interaction > 0, "dormant wallets present");

        workdir.write("net.json", small_net().to_json_string()).unwrap();
        config.paths.net_config = Some("net.json".into());
        for cohort in Cohort::BOTH {
            stage_cluster(&workdir, &config, cohort).unwrap();
            stage_label(&workdir, &config, cohort).unwrap();
            stage_train(&workdir, &config, cohort).unwrap();
        }
        let scored = stage_score(&workdir, &config).unwrap();
        assert_eq!(scored, 160);

        let root = stage_attest(&workdir, 1).unwrap();
        assert_eq!(root.len(), 64);
        let result = stage_epoch(&workdir, &config, 1).unwrap();
        assert!(result.published);

        let scores = read_scores(&workdir).unwrap();
        let probe = &scores[3];
        let response = query_score(&workdir, &probe.wallet, 1).unwrap();
        assert!(response.verified);
        assert_eq!(response.zscore, probe.zscore);

        let report = stage_report(&workdir).unwrap();
        assert_eq!(report.total_users, 160);

        // Pinned wallets carry the entry score.
        let pinned: Vec<&ScoreLine> = scores.iter().filter(|s| s.pinned).collect();
        assert!(!pinned.is_empty());
        assert!(pinned.iter().all(|s| s.zscore == 100));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();
        let mut config = tiny_config(9);

        stage_gen(&workdir, &desk_spec(120, 9)).unwrap();
        stage_ingest(&workdir, &config).unwrap();
        stage_features(&workdir, &config).unwrap();
        workdir.write("net.json", small_net().to_json_string()).unwrap();
        config.paths.net_config = Some("net.json".into());
        for cohort in Cohort::BOTH {
            stage_cluster(&workdir, &config, cohort).unwrap();
            stage_label(&workdir, &config, cohort).unwrap();
            stage_train(&workdir, &config, cohort).unwrap();
        }
        stage_score(&workdir, &config).unwrap();

        let first: BTreeMap<String, Vec<u8>> = ["features.csv", "scores.jsonl", "manifest.json"]
            .iter()
            .map(|name| (name.to_string(), fs::read(workdir.path(name)).unwrap()))
            .collect();

        stage_ingest(&workdir, &config).unwrap();
        stage_features(&workdir, &config).unwrap();
        for cohort in Cohort::BOTH {
            stage_cluster(&workdir, &config, cohort).unwrap();
            stage_label(&workdir, &config, cohort).unwrap();
            stage_train(&workdir, &config, cohort).unwrap();
        }
        stage_score(&workdir, &config).unwrap();

        for (name, bytes) in first {
            assert_eq!(
                fs::read(workdir.path(&name)).unwrap(),
                bytes,
                "{name} changed across identical re-runs"
            );
        }
    }

    #[test]
    fn report_histograms_match_an_independent_recount() {
        use rand::{Rng, SeedableRng};
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();

        // Synthesize a scores file directly; the report stage only needs it.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let lines: Vec<ScoreLine> = (0..500)
            .map(|i| ScoreLine {
                wallet: format!("0x{i:04}"),
                zscore: rng.random_range(1..=900),
                cohort: "non-liquidation".into(),
                cluster_id: i64::from(i % 4),
                feature_weights: vec![],
                closed_form_score: 0.0,
                pinned: false,
            })
            .collect();
        let jsonl: String = lines
            .iter()
            .map(|l| serde_json::to_string(l).unwrap() + "\n")
            .collect();
        workdir.write("scores.jsonl", jsonl).unwrap();

        let summary = stage_report(&workdir).unwrap();

        // Recount every bin straight from the score list.
        let csv = fs::read_to_string(workdir.path("report/histogram_overall.csv")).unwrap();
        let mut total_from_csv = 0usize;
        for line in csv.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let (lo, hi): (u16, u16) = (cells[0].parse().unwrap(), cells[1].parse().unwrap());
            let count: usize = cells[2].parse().unwrap();
            let recount = lines.iter().filter(|s| (lo..=hi).contains(&s.zscore)).count();
            assert_eq!(count, recount, "bin [{lo},{hi}]");
            total_from_csv += count;
        }
        assert_eq!(total_from_csv, 500);
        assert_eq!(summary.total_users, 500);
        assert_eq!(
            summary.below_300,
            lines.iter().filter(|s| s.zscore < 300).count()
        );

        // Per-cluster CSV recounts as well.
        let clusters_csv =
            fs::read_to_string(workdir.path("report/histogram_clusters.csv")).unwrap();
        for line in clusters_csv.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let cluster: i64 = cells[1].parse().unwrap();
            let (lo, hi): (u16, u16) = (cells[2].parse().unwrap(), cells[3].parse().unwrap());
            let count: usize = cells[4].parse().unwrap();
            let recount = lines
                .iter()
                .filter(|s| s.cluster_id == cluster && (lo..=hi).contains(&s.zscore))
                .count();
            assert_eq!(count, recount, "cluster {cluster} bin [{lo},{hi}]");
        }
    }

    #[test]
    fn run_config_toml_parses() {
        let text = r#"
seed = 7
epoch = 2

[cohort.liquidation]
k_lower = 5
k_upper = 20
particles = 10

[cohort.non-liquidation]
k_lower = 10
k_upper = 50
particles = 30

[cluster]
algorithm = "kmeans"
"#;
        let config = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.cohort.liquidation.k_upper, 20);
        assert_eq!(config.cohort.non_liquidation.particles, 30);
        assert_eq!(config.cohort.non_liquidation.k_lower, 10);
    }

    #[test]
    fn roster_file_drives_the_quorum_outcome() {
        use crate::quorum::{ValidatorBehavior, ValidatorRoster, ValidatorSpec};
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();
        let mut config = tiny_config(33);

        stage_gen(&workdir, &desk_spec(100, 33)).unwrap();
        stage_ingest(&workdir, &config).unwrap();
        stage_features(&workdir, &config).unwrap();
        workdir.write("net.json", small_net().to_json_string()).unwrap();
        config.paths.net_config = Some("net.json".into());
        for cohort in Cohort::BOTH {
            stage_cluster(&workdir, &config, cohort).unwrap();
            stage_label(&workdir, &config, cohort).unwrap();
            stage_train(&workdir, &config, cohort).unwrap();
        }
        stage_score(&workdir, &config).unwrap();
        stage_attest(&workdir, 1).unwrap();

        // Two of three validators reject everything: 1 < ceil(2·3/3).
        let roster = ValidatorRoster {
            validators: vec![
                ValidatorSpec::honest(0, 0.5, 1),
                ValidatorSpec {
                    id: 1,
                    behavior: ValidatorBehavior::RejectAll,
                    sample_fraction: 0.5,
                    seed: 2,
                },
                ValidatorSpec {
                    id: 2,
                    behavior: ValidatorBehavior::RejectAll,
                    sample_fraction: 0.5,
                    seed: 3,
                },
            ],
        };
        workdir.write("validators.toml", roster.to_toml_string()).unwrap();
        config.paths.validators = Some("validators.toml".into());
        let result = stage_epoch(&workdir, &config, 1).unwrap();
        assert!(!result.published);
        assert_eq!(result.approvals, 1);
        // Quorum failure leaves the chain untouched and queries refused.
        assert!(load_chain(&workdir).unwrap().entries().is_empty());
        assert!(query_score(&workdir, "0x000000", 1).is_err());
    }

    #[test]
    fn populations_without_liquidations_still_score() {
        use crate::synth::PopulationSpec;
        let tmp = tempfile::tempdir().unwrap();
        let workdir = Workdir::create(tmp.path()).unwrap();
        let mut config = tiny_config(21);
        let spec = PopulationSpec {
            liquidated_fraction: 0.0,
            ..crate::synth::desk_spec(90, 21)
        };
        stage_gen(&workdir, &spec).unwrap();
        let summary = stage_ingest(&workdir, &config).unwrap();
        assert_eq!(summary.liquidation_wallets, 0);
        stage_features(&workdir, &config).unwrap();
        workdir.write("net.json", small_net().to_json_string()).unwrap();
        config.paths.net_config = Some("net.json".into());
        // Only the populated cohort is clustered and trained.
        stage_cluster(&workdir, &config, Cohort::NonLiquidation).unwrap();
        stage_label(&workdir, &config, Cohort::NonLiquidation).unwrap();
        stage_train(&workdir, &config, Cohort::NonLiquidation).unwrap();
        let scored = stage_score(&workdir, &config).unwrap();
        assert_eq!(scored, 90);
    }

    #[test]
    fn default_cohort_settings_use_production_bounds() {
        let config = RunConfig::default();
        assert_eq!(config.cohort.liquidation.k_lower, 5);
        assert_eq!(config.cohort.liquidation.k_upper, 20);
        assert_eq!(config.cohort.liquidation.particles, 10);
        assert_eq!(config.cohort.non_liquidation.k_lower, 10);
        assert_eq!(config.cohort.non_liquidation.k_upper, 50);
        assert_eq!(config.cohort.non_liquidation.particles, 30);
    }
}
