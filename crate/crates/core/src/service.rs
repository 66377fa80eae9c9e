//! HTTP facade for interactive re-ranking and typo simulation.
//!
//! Uploaded datasets are embedded and indexed once; `/rank` only re-runs the
//! morphological scoring stage against the stored index. Each dataset lives
//! in its own directory under the working directory (uploaded CSV, embedding
//! TSV, metadata) and is reloaded on startup.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::ann_index::{Index, IndexMode, IndexParams};
use crate::cost_model::{CostConfig, CostFile};
use crate::edit_engine::{align, PathSummary};
use crate::embedding::{HashEmbedder, MissingPolicy};
use crate::error::Error;
use crate::ingestion::{read_dataset_from, Collision, Dataset, NormalizationPolicy};
use crate::isec_core::{rank_with_index, PairScore, Ranking, ScoreFlag, Taxonomy};
use crate::perturb_sim::{
    check_trials, correlate, simulate_with_progress, ConfusionStats, TypoModel, ValidationReport,
};
use crate::report::{config_fingerprint, run_summary, RankedPair, RunSummary};

pub const DEFAULT_UPLOAD_LIMIT: usize = 50 * 1024 * 1024;
pub const DEFAULT_PER_PAGE: usize = 50;
pub const MAX_PER_PAGE: usize = 1000;

const UPLOAD_FILE: &str = "upload.csv";
const EMBEDDINGS_FILE: &str = "embeddings.tsv";
const META_FILE: &str = "meta.json";
const LAST_CONFIG_FILE: &str = "last_config.json";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub work_dir: PathBuf,
    pub max_upload_bytes: usize,
    /// Simulations above this many trials always run as background jobs.
    pub sync_trial_limit: u64,
}

impl ServiceConfig {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            work_dir: work_dir.into(),
            max_upload_bytes: DEFAULT_UPLOAD_LIMIT,
            sync_trial_limit: 50_000,
        }
    }
}

/// JSON error body: `{code, message, detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn unknown_dataset(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_dataset",
            format!("no dataset with id {id:?}"),
        )
    }

    /// Ingestion failures are client errors on upload.
    fn ingestion(err: Error) -> Self {
        match err {
            Error::Ingestion { row, message } => {
                Self::new(StatusCode::BAD_REQUEST, "ingestion_error", format!("row {row}: {message}"))
                    .with_detail(json!({ "row": row }))
            }
            Error::MissingColumn(col) => Self::new(
                StatusCode::BAD_REQUEST,
                "missing_column",
                format!("column `{col}` not found in header"),
            )
            .with_detail(json!({ "column": col })),
            other => Self::new(StatusCode::BAD_REQUEST, "ingestion_error", other.to_string()),
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        match err {
            Error::Validation(_)
            | Error::InvalidParams(_)
            | Error::Json(_)
            | Error::Parse(_)
            | Error::Domain(_) => Self::unprocessable(err.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "code": self.code,
            "message": self.message,
            "detail": self.detail,
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Options sent alongside the CSV upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub label_col: String,
    pub freq_col: Option<String>,
    pub policy: NormalizationPolicy,
    pub index: IndexParams,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            label_col: "label".to_string(),
            freq_col: None,
            policy: NormalizationPolicy::default(),
            index: IndexParams::default(),
        }
    }
}

impl IngestOptions {
    fn set(&mut self, key: &str, value: &str) -> ApiResult<()> {
        let bad = |what: &str| ApiError::bad_request(format!("invalid {key}: {what}"));
        let flag = |v: &str| match v.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => Ok(true),
            "0" | "false" | "no" | "off" => Ok(false),
            _ => Err(bad(v)),
        };
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad(v));
        match key {
            "label_col" => self.label_col = value.to_string(),
            "freq_col" => self.freq_col = Some(value.to_string()).filter(|v| !v.is_empty()),
            "case_fold" => self.policy.case_fold = flag(value)?,
            "trim" => self.policy.trim = flag(value)?,
            "nfc" => self.policy.nfc = flag(value)?,
            "collapse_whitespace" => self.policy.collapse_whitespace = flag(value)?,
            "index_mode" => self.index.mode = value.parse::<IndexMode>().map_err(|_| bad(value))?,
            "seed" => self.index.seed = value.trim().parse().map_err(|_| bad(value))?,
            "m" => self.index.m = num(value)?,
            "ef_construction" => self.index.ef_construction = num(value)?,
            "ef_search" => self.index.ef_search = num(value)?,
            other => return Err(ApiError::bad_request(format!("unknown upload field {other:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    id: String,
    options: IngestOptions,
    index_fingerprint: String,
    last_config_fingerprint: Option<String>,
}

struct LastRanking {
    ranking: Ranking,
    cfg: CostConfig,
    params: IndexParams,
}

struct DatasetEntry {
    id: String,
    dir: PathBuf,
    options: IngestOptions,
    dataset: Dataset,
    taxonomy: Arc<Taxonomy>,
    index: Arc<Index>,
    index_fingerprint: String,
    /// Serializes recomputation for this dataset.
    last: tokio::sync::Mutex<Option<Arc<LastRanking>>>,
}

impl DatasetEntry {
    fn info(&self) -> DatasetInfo {
        DatasetInfo {
            id: self.id.clone(),
            n: self.taxonomy.len(),
            rows: self.dataset.rows,
            skipped_empty: self.dataset.skipped_empty,
            duplicates: self.dataset.duplicates.collisions.clone(),
            index_fingerprint: self.index_fingerprint.clone(),
            options: self.options.clone(),
        }
    }

    fn write_meta(&self, last_config_fingerprint: Option<String>) -> crate::Result<()> {
        let meta = Meta {
            id: self.id.clone(),
            options: self.options.clone(),
            index_fingerprint: self.index_fingerprint.clone(),
            last_config_fingerprint,
        };
        crate::report::write_json_file(&meta, self.dir.join(META_FILE))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub n: usize,
    pub rows: usize,
    pub skipped_empty: usize,
    pub duplicates: Vec<Collision>,
    pub index_fingerprint: String,
    pub options: IngestOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub stats: ConfusionStats,
    /// Absent when fewer than 100 trials per label were run.
    pub correlation: Option<CorrelationSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationSummary {
    pub spearman: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub degenerate: bool,
    pub points: Vec<crate::perturb_sim::ValidationPoint>,
}

impl From<ValidationReport> for CorrelationSummary {
    fn from(r: ValidationReport) -> Self {
        CorrelationSummary {
            spearman: r.spearman,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            degenerate: r.degenerate,
            points: r.points,
        }
    }
}

struct Job {
    dataset_id: String,
    total: u64,
    progress: Arc<AtomicU64>,
    status: JobStatus,
    result: Option<Arc<SimulationResult>>,
    error: Option<String>,
}

struct Inner {
    config: ServiceConfig,
    embedder: HashEmbedder,
    datasets: Mutex<HashMap<String, Arc<DatasetEntry>>>,
    jobs: Mutex<HashMap<String, Job>>,
    next_dataset: AtomicU64,
    next_job: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Opens (creating if needed) the working directory and reloads any
    /// datasets persisted there.
    pub fn open(config: ServiceConfig) -> crate::Result<Self> {
        std::fs::create_dir_all(&config.work_dir).map_err(|e| Error::io(&config.work_dir, e))?;
        let state = AppState {
            inner: Arc::new(Inner {
                embedder: HashEmbedder::default(),
                datasets: Mutex::new(HashMap::new()),
                jobs: Mutex::new(HashMap::new()),
                next_dataset: AtomicU64::new(1),
                next_job: AtomicU64::new(1),
                config,
            }),
        };
        state.reload()?;
        Ok(state)
    }

    fn reload(&self) -> crate::Result<()> {
        let dir = &self.inner.config.work_dir;
        let mut max_id = 0;
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries.flatten() {
            let meta_path = entry.path().join(META_FILE);
            let Ok(text) = std::fs::read_to_string(&meta_path) else {
                continue;
            };
            let meta: Meta = match serde_json::from_str(&text) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("skipping {}: {e}", meta_path.display());
                    continue;
                }
            };
            match self.restore(&entry.path(), meta) {
                Ok(ds) => {
                    if let Some(n) = ds.id.strip_prefix('d').and_then(|n| n.parse::<u64>().ok()) {
                        max_id = max_id.max(n);
                    }
                    self.insert(ds);
                }
                Err(e) => log::warn!("skipping dataset in {}: {e}", entry.path().display()),
            }
        }
        self.inner.next_dataset.store(max_id + 1, Ordering::SeqCst);
        Ok(())
    }

    fn restore(&self, dir: &Path, meta: Meta) -> crate::Result<DatasetEntry> {
        let upload = dir.join(UPLOAD_FILE);
        let file = std::fs::File::open(&upload).map_err(|e| Error::io(&upload, e))?;
        let dataset = read_dataset_from(
            file,
            &meta.options.label_col,
            meta.options.freq_col.as_deref(),
            meta.options.policy,
        )?;
        let taxonomy = dataset.to_taxonomy_with_embeddings(dir.join(EMBEDDINGS_FILE), MissingPolicy::Fail)?;
        let index = taxonomy.build_index(meta.options.index)?;
        let fp = index.fingerprint();
        if fp != meta.index_fingerprint {
            log::warn!("dataset {}: rebuilt index fingerprint differs from stored one", meta.id);
        }
        Ok(DatasetEntry {
            id: meta.id,
            dir: dir.to_path_buf(),
            options: meta.options,
            dataset,
            taxonomy: Arc::new(taxonomy),
            index: Arc::new(index),
            index_fingerprint: fp,
            last: tokio::sync::Mutex::new(None),
        })
    }

    fn insert(&self, ds: DatasetEntry) -> Arc<DatasetEntry> {
        let ds = Arc::new(ds);
        self.inner
            .datasets
            .lock()
            .expect("dataset map poisoned")
            .insert(ds.id.clone(), ds.clone());
        ds
    }

    fn dataset(&self, id: &str) -> ApiResult<Arc<DatasetEntry>> {
        self.inner
            .datasets
            .lock()
            .expect("dataset map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_dataset(id))
    }

    fn create(&self, csv: Bytes, options: IngestOptions) -> ApiResult<Arc<DatasetEntry>> {
        let dataset = read_dataset_from(
            csv.as_ref(),
            &options.label_col,
            options.freq_col.as_deref(),
            options.policy,
        )
        .map_err(ApiError::ingestion)?;
        if dataset.entries.len() < 2 {
            return Err(ApiError::bad_request(
                "dataset needs at least two distinct labels",
            ));
        }
        options.index.validate()?;
        let taxonomy = dataset.to_taxonomy(&self.inner.embedder)?;
        let index = taxonomy.build_index(options.index)?;

        let id = format!("d{}", self.inner.next_dataset.fetch_add(1, Ordering::SeqCst));
        let dir = self.inner.config.work_dir.join(&id);
        let persist = || -> crate::Result<()> {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let upload = dir.join(UPLOAD_FILE);
            std::fs::write(&upload, &csv).map_err(|e| Error::io(&upload, e))?;
            let mut tsv = String::new();
            for (i, label) in taxonomy.labels().iter().enumerate() {
                let values: Vec<String> =
                    taxonomy.embedding(i).values().iter().map(|v| v.to_string()).collect();
                tsv.push_str(label);
                tsv.push('\t');
                tsv.push_str(&values.join(" "));
                tsv.push('\n');
            }
            let emb = dir.join(EMBEDDINGS_FILE);
            std::fs::write(&emb, tsv).map_err(|e| Error::io(&emb, e))
        };
        persist()?;
        let ds = DatasetEntry {
            index_fingerprint: index.fingerprint(),
            id,
            dir,
            options,
            dataset,
            taxonomy: Arc::new(taxonomy),
            index: Arc::new(index),
            last: tokio::sync::Mutex::new(None),
        };
        ds.write_meta(None)?;
        Ok(self.insert(ds))
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.inner.config.max_upload_bytes;
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/rank", post(rank_dataset))
        .route("/datasets/{id}/pairs/{i}/{j}", get(get_pair))
        .route("/datasets/{id}/simulate", post(simulate_dataset))
        .route("/jobs/{id}", get(get_job))
        .layer(DefaultBodyLimit::max(limit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> crate::Result<()> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn upload_dataset(
    State(state): State<AppState>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let mut options = IngestOptions::default();
    let mut csv = None;
    loop {
        let field = multipart.next_field().await.map_err(|e| {
            let status = e.status();
            let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
                "payload_too_large"
            } else {
                "bad_request"
            };
            ApiError::new(status, code, e.body_text())
        })?;
        let Some(field) = field else { break };
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| {
            let status = e.status();
            let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
                "payload_too_large"
            } else {
                "bad_request"
            };
            ApiError::new(status, code, e.body_text())
        })?;
        if name == "file" {
            csv = Some(data);
        } else {
            let text = std::str::from_utf8(&data)
                .map_err(|_| ApiError::bad_request(format!("field {name:?} is not UTF-8")))?;
            options.set(&name, text)?;
        }
    }
    let csv = csv.ok_or_else(|| ApiError::bad_request("multipart field `file` is required"))?;
    let st = state.clone();
    let ds = blocking(move || st.create(csv, options)).await?;
    Ok((StatusCode::CREATED, Json(ds.info())))
}

async fn get_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<DatasetInfo>> {
    Ok(Json(state.dataset(&id)?.info()))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    #[serde(default)]
    pub config: Option<CostFile>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Penalty weight on insertion/deletion/substitution cost.
    #[serde(default)]
    pub k: Option<f64>,
    /// Neighbours per label.
    #[serde(default, alias = "K")]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub page: Option<usize>,
    #[serde(default)]
    pub per_page: Option<usize>,
}

impl RankRequest {
    fn cost_config(&self) -> crate::Result<CostConfig> {
        let mut cfg = match &self.config {
            Some(file) => CostConfig::try_from(file.clone())?,
            None => CostConfig::default(),
        };
        if let Some(a) = self.alpha {
            cfg.set_alpha(a)?;
        }
        if let Some(k) = self.k {
            cfg.set_k(k)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankResponse {
    pub dataset_id: String,
    pub config_fingerprint: String,
    pub index_fingerprint: String,
    pub summary: RunSummary,
    pub wall_clock_ms: f64,
    pub total: usize,
    pub page: usize,
    pub per_page: usize,
    pub pairs: Vec<RankedPair>,
    pub warnings: Vec<String>,
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

async fn rank_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<RankResponse>> {
    let ds = state.dataset(&id)?;
    let req: RankRequest = parse_body(&body)?;
    let cfg = req.cost_config()?;
    let n = ds.taxonomy.len();
    let mut warnings = Vec::new();
    let requested = req.top_k.unwrap_or(ds.options.index.k);
    if requested == 0 {
        return Err(ApiError::unprocessable("K must be >= 1"));
    }
    let top_k = requested.min(n - 1);
    if top_k < requested {
        let msg = format!("K={requested} exceeds n-1; clamped to {top_k}");
        log::warn!("dataset {id}: {msg}");
        warnings.push(msg);
    }
    let per_page = req.per_page.unwrap_or(DEFAULT_PER_PAGE).clamp(1, MAX_PER_PAGE);
    let page = req.page.unwrap_or(1).max(1);

    let mut guard = ds.last.lock().await;
    let params = IndexParams {
        k: top_k,
        ..ds.options.index
    };
    let (tax, index, run_cfg) = (ds.taxonomy.clone(), ds.index.clone(), cfg.clone());
    let started = Instant::now();
    let ranking = blocking(move || Ok(rank_with_index(&tax, &index, &run_cfg, top_k)?)).await?;
    let elapsed = started.elapsed();
    let summary = run_summary(&ranking.stats, Some(elapsed));
    let fingerprint = config_fingerprint(&cfg, &params);

    let last_cfg = ds.dir.join(LAST_CONFIG_FILE);
    cfg.save(&last_cfg)?;
    ds.write_meta(Some(fingerprint.clone()))?;

    let total = ranking.scores.len();
    let pairs = ranking
        .scores
        .iter()
        .enumerate()
        .skip((page - 1) * per_page)
        .take(per_page)
        .map(|(r, s)| RankedPair {
            rank: r + 1,
            score: s.clone(),
        })
        .collect();
    *guard = Some(Arc::new(LastRanking { ranking, cfg, params }));
    drop(guard);

    Ok(Json(RankResponse {
        dataset_id: id,
        config_fingerprint: fingerprint,
        index_fingerprint: ds.index_fingerprint.clone(),
        summary,
        wall_clock_ms: elapsed.as_secs_f64() * 1e3,
        total,
        page,
        per_page,
        pairs,
        warnings,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDetail {
    pub label_i: String,
    pub label_j: String,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub rank: Option<usize>,
    pub score: Option<PairScore>,
    /// Alignment from `label_i` to `label_j` in the order requested.
    pub path: Option<PathSummary>,
    pub alpha: Option<f64>,
    pub k_penalty: Option<f64>,
    pub flags: Vec<ScoreFlag>,
    /// Raw spellings merged into either label during ingestion.
    pub collisions: Vec<Collision>,
    pub config_fingerprint: Option<String>,
}

async fn get_pair(
    State(state): State<AppState>,
    UrlPath((id, raw_i, raw_j)): UrlPath<(String, String, String)>,
) -> ApiResult<Json<PairDetail>> {
    let ds = state.dataset(&id)?;
    let policy = ds.options.policy;
    let (label_i, label_j) = (policy.normalize(&raw_i), policy.normalize(&raw_j));
    let collisions: Vec<Collision> = [&label_i, &label_j]
        .into_iter()
        .filter_map(|l| ds.dataset.duplicates.find(l).cloned())
        .collect();

    if label_i == label_j {
        let mut collisions = collisions;
        collisions.dedup();
        return Ok(Json(PairDetail {
            i: ds.taxonomy.id_of(&label_i),
            j: ds.taxonomy.id_of(&label_j),
            label_i,
            label_j,
            rank: None,
            score: None,
            path: None,
            alpha: None,
            k_penalty: None,
            flags: vec![ScoreFlag::DuplicateCollision],
            collisions,
            config_fingerprint: None,
        }));
    }

    let lookup = |label: &str, raw: &str| {
        ds.taxonomy.id_of(label).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_label",
                format!("label {raw:?} is not in dataset {id}"),
            )
            .with_detail(json!({ "label": raw, "normalized": label }))
        })
    };
    let i = lookup(&label_i, &raw_i)?;
    let j = lookup(&label_j, &raw_j)?;

    let last = ds.last.lock().await.clone().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "not_ranked", "dataset has not been ranked yet")
            .with_detail(json!({ "hint": format!("POST /datasets/{id}/rank first") }))
    })?;
    let (rank, score) = last
        .ranking
        .scores
        .iter()
        .enumerate()
        .find(|(_, s)| (s.i.min(s.j), s.i.max(s.j)) == (i.min(j), i.max(j)))
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "pair_not_scored",
                format!("pair ({label_i}, {label_j}) was not among the Top-K candidates"),
            )
            .with_detail(json!({
                "k": last.params.k,
                "hint": "raise K (top_k) and re-rank to score more distant pairs",
            }))
        })?;
    let path = align(&label_i, &label_j, &last.cfg);
    let mut flags = score.flags.clone();
    if !collisions.is_empty() && !flags.contains(&ScoreFlag::DuplicateCollision) {
        flags.push(ScoreFlag::DuplicateCollision);
    }
    Ok(Json(PairDetail {
        label_i,
        label_j,
        i: Some(i),
        j: Some(j),
        rank: Some(rank + 1),
        path: Some(path),
        score: Some(score.clone()),
        alpha: Some(last.cfg.alpha()),
        k_penalty: Some(last.cfg.k()),
        flags,
        collisions,
        config_fingerprint: Some(config_fingerprint(&last.cfg, &last.params)),
    }))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    #[serde(default)]
    pub model: Option<TypoModel>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Cost configuration for the corrector and the ISEC ranking; defaults to
    /// the last ranked configuration.
    #[serde(default)]
    pub config: Option<CostFile>,
    #[serde(default, alias = "K")]
    pub top_k: Option<usize>,
    /// Force a background job regardless of size.
    #[serde(default)]
    pub background: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: String,
    pub dataset_id: String,
    pub status: JobStatus,
    pub done: u64,
    pub total: u64,
    pub result: Option<Arc<SimulationResult>>,
    pub error: Option<String>,
}

fn run_simulation(
    ds: &DatasetEntry,
    cfg: &CostConfig,
    top_k: usize,
    model: &TypoModel,
    trials: u64,
    delta: f64,
    progress: Option<&AtomicU64>,
) -> ApiResult<SimulationResult> {
    let stats = simulate_with_progress(&ds.taxonomy, cfg, model, trials, delta, progress)?;
    let mut warnings = Vec::new();
    let correlation = match check_trials(ds.taxonomy.len(), trials) {
        Ok(()) => {
            let ranking = rank_with_index(&ds.taxonomy, &ds.index, cfg, top_k)?;
            Some(correlate(&ranking.scores, stats.clone(), model.seed).into())
        }
        Err(e) => {
            warnings.push(format!("correlation skipped: {e}"));
            None
        }
    };
    Ok(SimulationResult {
        stats,
        correlation,
        warnings,
    })
}

async fn simulate_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let ds = state.dataset(&id)?;
    let req: SimulateRequest = parse_body(&body)?;
    let trials = req.trials.unwrap_or(100 * ds.taxonomy.len() as u64);
    if trials == 0 {
        return Err(ApiError::unprocessable("trials must be >= 1"));
    }
    let delta = req.delta.unwrap_or(0.0);
    if !(delta >= 0.0) {
        return Err(ApiError::unprocessable("delta must be >= 0"));
    }
    let model = req.model.clone().unwrap_or_default();
    model.validate()?;
    let cfg = match &req.config {
        Some(file) => CostConfig::try_from(file.clone())?,
        None => match ds.last.lock().await.as_ref() {
            Some(last) => last.cfg.clone(),
            None => CostConfig::default(),
        },
    };
    let top_k = req
        .top_k
        .unwrap_or(ds.options.index.k)
        .clamp(1, ds.taxonomy.len() - 1);

    let background = req
        .background
        .unwrap_or(trials > state.inner.config.sync_trial_limit);
    if !background {
        let result = blocking(move || run_simulation(&ds, &cfg, top_k, &model, trials, delta, None)).await?;
        return Ok(Json(result).into_response());
    }

    let job_id = format!("j{}", state.inner.next_job.fetch_add(1, Ordering::SeqCst));
    let progress = Arc::new(AtomicU64::new(0));
    state.inner.jobs.lock().expect("job map poisoned").insert(
        job_id.clone(),
        Job {
            dataset_id: id.clone(),
            total: trials,
            progress: progress.clone(),
            status: JobStatus::Running,
            result: None,
            error: None,
        },
    );
    let st = state.clone();
    let jid = job_id.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = run_simulation(&ds, &cfg, top_k, &model, trials, delta, Some(&progress));
        let mut jobs = st.inner.jobs.lock().expect("job map poisoned");
        let job = jobs.get_mut(&jid).expect("job registered");
        match outcome {
            Ok(r) => {
                job.status = JobStatus::Done;
                job.result = Some(Arc::new(r));
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e.message);
            }
        }
    });
    let body = json!({ "job_id": job_id, "status_url": format!("/jobs/{job_id}") });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobView>> {
    let jobs = state.inner.jobs.lock().expect("job map poisoned");
    let job = jobs.get(&id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job with id {id:?}"))
    })?;
    Ok(Json(JobView {
        id,
        dataset_id: job.dataset_id.clone(),
        status: job.status,
        done: job.progress.load(Ordering::Relaxed),
        total: job.total,
        result: job.result.clone(),
        error: job.error.clone(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn api_error_status_mapping() {
        let e: ApiError = Error::Validation("bad".into()).into();
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        let e = ApiError::ingestion(Error::MissingColumn("x".into()));
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        assert_eq!(e.detail["column"], "x");
        let e: ApiError = Error::ZeroNorm.into();
        assert_eq!(e.status, StatusCode::INTERNAL_SERVER_ERROR);
    }

    #[test]
    fn upload_options() {
        let mut o = IngestOptions::default();
        o.set("case_fold", "true").unwrap();
        o.set("index_mode", "exact").unwrap();
        o.set("freq_col", "n").unwrap();
        assert!(o.policy.case_fold);
        assert_eq!(o.index.mode, IndexMode::Exact);
        assert_eq!(o.freq_col.as_deref(), Some("n"));
        assert!(o.set("case_fold", "maybe").is_err());
        assert!(o.set("colour", "blue").is_err());
    }

    #[test]
    fn rank_request_overrides() {
        let req: RankRequest = serde_json::from_str(r#"{"alpha": 1.0, "k": 2.0, "K": 3}"#).unwrap();
        let cfg = req.cost_config().unwrap();
        assert_eq!(cfg.alpha(), 1.0);
        assert_eq!(cfg.k(), 2.0);
        assert_eq!(req.top_k, Some(3));
        let req: RankRequest = serde_json::from_str(r#"{"alpha": 1.5}"#).unwrap();
        assert!(req.cost_config().is_err());
    }
}
