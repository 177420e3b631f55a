//! REST endpoints over datasets, training jobs and dual-analysis sessions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use anyhow::Context;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dualproj_core::dual::{fingerprint, gene_inputs, train_pair};
use dualproj_core::metrics::quality;
use dualproj_core::{DualSession, Matrix, Model, ModificationEvent, Side, TrainConfig};
use dualproj_genomics::recommend::{recommend, Recommended, RecommendationConfig, ScoreSpec};
use dualproj_genomics::{
    genotype_boxplot_data, synthesize_hybrid, train_trait_predictor, BoxStats, GenomicDataset, Manifest,
    ManifestFiles, PredictorConfig, TraitPredictor,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as AsyncMutex;

use crate::store::{
    now_secs, sha256_hex, write_atomic, EmbeddingQuality, SessionRecord, Store, TrainingSummary, COLS_CHECKPOINT,
    PREDICTOR_FILE, ROWS_CHECKPOINT,
};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    /// Largest candidate pool a recommendation may build.
    pub max_pool: usize,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<dualproj_core::Error> for ApiError {
    fn from(e: dualproj_core::Error) -> Self {
        match e {
            dualproj_core::Error::Argument(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            _ => Self::internal(e),
        }
    }
}

impl From<dualproj_genomics::Error> for ApiError {
    fn from(e: dualproj_genomics::Error) -> Self {
        match e {
            dualproj_genomics::Error::Argument(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            dualproj_genomics::Error::Core(inner) => inner.into(),
            _ => Self::internal(e),
        }
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        Self::internal(format!("{e:#}"))
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct DatasetEntry {
    id: String,
    fingerprint: String,
    data: GenomicDataset,
    /// `(mean, standard deviation)` per trait.
    trait_stats: Vec<(f64, f64)>,
}

impl DatasetEntry {
    fn new(id: String, data: GenomicDataset) -> Self {
        let trait_stats = (0..data.traits.names.len())
            .map(|t| {
                let c = data.traits.values.col(t);
                let n = c.len().max(1) as f64;
                let m = c.iter().sum::<f64>() / n;
                (m, (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            })
            .collect();
        Self {
            id,
            fingerprint: fingerprint(&data.genotypes.to_matrix()),
            data,
            trait_stats,
        }
    }

    fn summary(&self) -> DatasetSummary {
        let d = &self.data;
        DatasetSummary {
            id: self.id.clone(),
            fingerprint: self.fingerprint.clone(),
            name: d.name.clone(),
            n_hybrids: d.genotypes.n_hybrids(),
            n_genes: d.genotypes.n_genes(),
            traits: d.traits.names.clone(),
            n_paternal: d.paternal.len(),
            n_maternal: d.maternal.len(),
        }
    }
}

struct SessionState {
    session: DualSession,
    record: SessionRecord,
}

struct SessionHandle {
    dataset: Arc<DatasetEntry>,
    predictor: Arc<TraitPredictor>,
    state: Arc<AsyncMutex<SessionState>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub session_id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
}

struct Inner {
    config: ServerConfig,
    store: Store,
    datasets: RwLock<HashMap<String, Arc<DatasetEntry>>>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    jobs: RwLock<HashMap<String, Job>>,
    /// Keys of trainings in progress.
    training: Mutex<HashSet<String>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory and restores every stored dataset and
    /// session.
    pub fn open(config: ServerConfig) -> anyhow::Result<Self> {
        let store = Store::new(&config.data_dir)?;
        let state = Self(Arc::new(Inner {
            config,
            store,
            datasets: Default::default(),
            sessions: Default::default(),
            jobs: Default::default(),
            training: Default::default(),
        }));
        for id in state.0.store.dataset_ids()? {
            let manifest = state.0.store.dataset_dir(&id).join("manifest.json");
            match dualproj_genomics::load_dataset(&manifest) {
                Ok(data) => {
                    state.0.datasets.write().unwrap().insert(id.clone(), Arc::new(DatasetEntry::new(id, data)));
                }
                Err(e) => tracing::warn!("skipping dataset {id}: {e}"),
            }
        }
        for id in state.0.store.session_ids()? {
            match state.restore_session(&id) {
                Ok(handle) => {
                    state.0.sessions.write().unwrap().insert(id, Arc::new(handle));
                }
                Err(e) => tracing::warn!("skipping session {id}: {e:#}"),
            }
        }
        Ok(state)
    }

    fn restore_session(&self, id: &str) -> anyhow::Result<SessionHandle> {
        let record = self.0.store.load_record(id)?;
        let dataset = self.dataset(&record.dataset_id).map_err(|e| anyhow::anyhow!(e.message))?;
        anyhow::ensure!(
            dataset.fingerprint == record.fingerprint,
            "dataset {} changed since the session was created",
            record.dataset_id
        );
        let dir = self.0.store.session_dir(id);
        let rows = Model::load(dir.join(&record.rows_checkpoint))?;
        let cols = Model::load(dir.join(&record.cols_checkpoint))?;
        let predictor: TraitPredictor = serde_json::from_str(&fs::read_to_string(dir.join(&record.predictor_checkpoint))?)?;
        let mut session = DualSession::new(dataset.data.genotypes.to_matrix(), Arc::new(rows), Arc::new(cols))?;
        for e in &record.history {
            session.apply_modification(e)?;
        }
        anyhow::ensure!(
            embedding_checksum(&session) == record.embedding_checksum,
            "replayed embeddings differ from the stored checksum"
        );
        Ok(SessionHandle {
            dataset,
            predictor: Arc::new(predictor),
            state: Arc::new(AsyncMutex::new(SessionState { session, record })),
        })
    }

    fn dataset(&self, id: &str) -> ApiResult<Arc<DatasetEntry>> {
        self.0
            .datasets
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown dataset {id}")))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.0
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }

    fn set_job(&self, job: Job) {
        self.0.jobs.write().unwrap().insert(job.id.clone(), job);
    }
}

fn embedding_checksum(session: &DualSession) -> String {
    sha256_hex(format!("{}{}", fingerprint(&session.hybrids()), fingerprint(&session.genes())).as_bytes())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/sessions", post(create_session))
        .route("/jobs/{id}", get(get_job))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/embedding", get(get_embedding))
        .route("/sessions/{id}/modify", post(modify))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/recommend", post(recommend_hybrids))
        .route("/sessions/{id}/gene/{gene}/boxplot", get(boxplot))
        .with_state(state)
}

pub async fn serve(bind: &str, config: ServerConfig) -> anyhow::Result<()> {
    let state = tokio::task::spawn_blocking(move || AppState::open(config)).await??;
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

// ---- datasets ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileContents {
    pub genotypes: String,
    pub traits: String,
    pub parents: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pedigree: Option<String>,
}

/// A manifest with its files inline, or the path of a manifest readable by
/// the server.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetUpload {
    Inline { manifest: Manifest, contents: FileContents },
    Path { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub fingerprint: String,
    pub name: String,
    pub n_hybrids: usize,
    pub n_genes: usize,
    pub traits: Vec<String>,
    pub n_paternal: usize,
    pub n_maternal: usize,
}

fn read_upload(path: &FsPath) -> ApiResult<(Manifest, FileContents)> {
    let bad = |e: &dyn std::fmt::Display| ApiError::new(StatusCode::BAD_REQUEST, e.to_string());
    let manifest = Manifest::from_path(path).map_err(|e| bad(&e))?;
    let base = path.parent().unwrap_or(FsPath::new("."));
    let read = |f: &str| fs::read_to_string(base.join(f)).map_err(|e| bad(&format!("{f}: {e}")));
    let contents = FileContents {
        genotypes: read(&manifest.files.genotypes)?,
        traits: read(&manifest.files.traits)?,
        parents: read(&manifest.files.parents)?,
        pedigree: manifest.files.pedigree.as_deref().map(read).transpose()?,
    };
    Ok((manifest, contents))
}

fn register_dataset(state: &AppState, manifest: Manifest, contents: FileContents) -> ApiResult<DatasetSummary> {
    let mut hasher_input = Vec::new();
    for part in [
        Some(&contents.genotypes),
        Some(&contents.traits),
        Some(&contents.parents),
        contents.pedigree.as_ref(),
    ] {
        hasher_input.extend_from_slice(part.map(String::as_str).unwrap_or("").as_bytes());
        hasher_input.push(0);
    }
    let id = sha256_hex(&hasher_input)[..16].to_string();
    if let Ok(existing) = state.dataset(&id) {
        return Ok(existing.summary());
    }
    let manifest = Manifest {
        files: ManifestFiles {
            genotypes: "genotypes.csv".into(),
            traits: "traits.csv".into(),
            parents: "parents.csv".into(),
            pedigree: contents.pedigree.as_ref().map(|_| "pedigree.csv".into()),
        },
        ..manifest
    };
    // validate in a scratch directory before anything becomes visible
    let scratch = tempfile::tempdir_in(state.0.store.root()).map_err(ApiError::internal)?;
    let write = |name: &str, text: &str| fs::write(scratch.path().join(name), text).map_err(ApiError::internal);
    write("genotypes.csv", &contents.genotypes)?;
    write("traits.csv", &contents.traits)?;
    write("parents.csv", &contents.parents)?;
    if let Some(p) = &contents.pedigree {
        write("pedigree.csv", p)?;
    }
    let data = manifest
        .load(scratch.path())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    write("manifest.json", &serde_json::to_string_pretty(&manifest).map_err(ApiError::internal)?)?;
    let dir = state.0.store.dataset_dir(&id);
    let staged = scratch.keep();
    if fs::rename(&staged, &dir).is_err() {
        // another upload of the same files won the race
        let _ = fs::remove_dir_all(&staged);
    }
    let entry = Arc::new(DatasetEntry::new(id.clone(), data));
    let summary = entry.summary();
    state.0.datasets.write().unwrap().entry(id).or_insert(entry);
    Ok(summary)
}

async fn upload_dataset(State(state): State<AppState>, Json(body): Json<DatasetUpload>) -> ApiResult<Json<DatasetSummary>> {
    blocking(move || {
        let (manifest, contents) = match body {
            DatasetUpload::Inline { manifest, contents } => (manifest, contents),
            DatasetUpload::Path { path } => read_upload(&path)?,
        };
        register_dataset(&state, manifest, contents)
    })
    .await
    .map(Json)
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetSummary>> {
    Ok(Json(state.dataset(&id)?.summary()))
}

// ---- sessions and training ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    #[serde(default)]
    pub rows: TrainConfig,
    #[serde(default)]
    pub cols: TrainConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub job_id: String,
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let dataset = state.dataset(&req.dataset_id)?;
    req.rows.validate()?;
    req.cols.validate()?;
    let key = sha256_hex(
        serde_json::to_string(&(&req.dataset_id, &req.rows, &req.cols, &req.predictor))
            .map_err(ApiError::internal)?
            .as_bytes(),
    );
    if !state.0.training.lock().unwrap().insert(key.clone()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "training with this dataset and configuration is already running",
        ));
    }
    let session_id = uuid::Uuid::new_v4().to_string();
    let job_id = uuid::Uuid::new_v4().to_string();
    let mut job = Job {
        id: job_id.clone(),
        session_id: session_id.clone(),
        status: JobStatus::Queued,
        error: None,
        training: None,
    };
    state.set_job(job.clone());
    let task_state = state.clone();
    let sid = session_id.clone();
    tokio::spawn(async move {
        job.status = JobStatus::Running;
        task_state.set_job(job.clone());
        let st = task_state.clone();
        let outcome = blocking(move || train_session(&st, &sid, dataset, req).map_err(ApiError::from)).await;
        match outcome {
            Ok(training) => {
                job.status = JobStatus::Done;
                job.training = Some(training);
            }
            Err(e) => {
                tracing::error!("training job {} failed: {}", job.id, e.message);
                job.status = JobStatus::Failed;
                job.error = Some(e.message);
            }
        }
        task_state.set_job(job);
        task_state.0.training.lock().unwrap().remove(&key);
    });
    Ok((StatusCode::ACCEPTED, Json(CreatedSession { session_id, job_id })))
}

fn initial_quality(x: &Matrix, y: &Matrix) -> anyhow::Result<EmbeddingQuality> {
    let k = 30.min(x.rows().saturating_sub(1) / 2).max(1);
    let (k, t, c) = quality(x, y, &[k])?[0];
    Ok(EmbeddingQuality {
        k,
        trustworthiness: t,
        continuity: c,
    })
}

fn train_session(
    state: &AppState,
    id: &str,
    dataset: Arc<DatasetEntry>,
    req: CreateSession,
) -> anyhow::Result<TrainingSummary> {
    let start = Instant::now();
    let x = dataset.data.genotypes.to_matrix();
    let (rows, cols) = train_pair(&x, &req.rows, &req.cols)?;
    let predictor = train_trait_predictor(&dataset.data.genotypes, &dataset.data.traits, &req.predictor)?;
    let dir = state.0.store.session_dir(id);
    let rows_json = rows.to_json()?;
    let cols_json = cols.to_json()?;
    write_atomic(&dir.join(ROWS_CHECKPOINT), rows_json.as_bytes())?;
    write_atomic(&dir.join(COLS_CHECKPOINT), cols_json.as_bytes())?;
    write_atomic(&dir.join(PREDICTOR_FILE), serde_json::to_string(&predictor)?.as_bytes())?;
    let gi = gene_inputs(&rows, &x)?;
    let training = TrainingSummary {
        rows: initial_quality(&x, &rows.project(&x)?)?,
        cols: initial_quality(&gi, &cols.project(&gi)?)?,
        rows_checksum: sha256_hex(rows_json.as_bytes()),
        cols_checksum: sha256_hex(cols_json.as_bytes()),
        seconds: start.elapsed().as_secs_f64(),
    };
    let session = DualSession::new(x, Arc::new(rows), Arc::new(cols))?;
    let now = now_secs();
    let record = SessionRecord {
        id: id.to_string(),
        dataset_id: dataset.id.clone(),
        fingerprint: dataset.fingerprint.clone(),
        rows_checkpoint: ROWS_CHECKPOINT.into(),
        cols_checkpoint: COLS_CHECKPOINT.into(),
        predictor_checkpoint: PREDICTOR_FILE.into(),
        rows_config: req.rows,
        cols_config: req.cols,
        predictor_config: req.predictor,
        training: training.clone(),
        history: Vec::new(),
        event_ids: Vec::new(),
        recommended: Vec::new(),
        embedding_checksum: embedding_checksum(&session),
        created: now,
        modified: now,
    };
    state.0.store.save_record(&record)?;
    let handle = SessionHandle {
        dataset,
        predictor: Arc::new(predictor),
        state: Arc::new(AsyncMutex::new(SessionState { session, record })),
    };
    state.0.sessions.write().unwrap().insert(id.to_string(), Arc::new(handle));
    Ok(training)
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    state
        .0
        .jobs
        .read()
        .unwrap()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub dataset_id: String,
    pub fingerprint: String,
    pub training: TrainingSummary,
    pub history: Vec<ModificationEvent>,
    pub event_ids: Vec<String>,
    pub recommended: Vec<Recommended>,
    pub gene_weights_from_original: Vec<f64>,
    pub hybrid_weights_from_original: Vec<f64>,
    pub created: u64,
    pub modified: u64,
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let handle = state.session(&id)?;
    let guard = handle.state.lock().await;
    let snap = guard.session.snapshot()?;
    let r = &guard.record;
    Ok(Json(SessionView {
        id: r.id.clone(),
        dataset_id: r.dataset_id.clone(),
        fingerprint: r.fingerprint.clone(),
        training: r.training.clone(),
        history: r.history.clone(),
        event_ids: r.event_ids.clone(),
        recommended: r.recommended.clone(),
        gene_weights_from_original: snap.gene_weights_from_original,
        hybrid_weights_from_original: snap.hybrid_weights_from_original,
        created: r.created,
        modified: r.modified,
    }))
}

// ---- embeddings ----

#[derive(Clone, Debug, Deserialize)]
pub struct SideQuery {
    #[serde(default = "rows_side")]
    pub side: Side,
}

fn rows_side() -> Side {
    Side::Rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traits: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chromosome: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<u64>,
}

/// A recommended cross placed in the hybrid view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendedPoint {
    pub paternal: String,
    pub maternal: String,
    pub score: f64,
    pub predicted_traits: BTreeMap<String, f64>,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub side: Side,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recommended: Vec<RecommendedPoint>,
}

fn recommended_points(
    dataset: &DatasetEntry,
    model_rows: &Model,
    recommended: &[Recommended],
) -> ApiResult<Vec<RecommendedPoint>> {
    if recommended.is_empty() {
        return Ok(Vec::new());
    }
    let d = &dataset.data;
    let find = |pool: &[dualproj_genomics::ParentLine], id: &str| {
        pool.iter()
            .find(|l| l.id == id)
            .cloned()
            .ok_or_else(|| ApiError::internal(format!("unknown parent line {id}")))
    };
    let mut genotypes = Vec::with_capacity(recommended.len() * d.genotypes.n_genes());
    for r in recommended {
        let g = synthesize_hybrid(&find(&d.paternal, &r.paternal)?, &find(&d.maternal, &r.maternal)?)?;
        genotypes.extend(g.into_iter().map(f64::from));
    }
    let x = Matrix::new(recommended.len(), d.genotypes.n_genes(), genotypes)?;
    let y = model_rows.project(&x)?;
    Ok(recommended
        .iter()
        .enumerate()
        .map(|(i, r)| RecommendedPoint {
            paternal: r.paternal.clone(),
            maternal: r.maternal.clone(),
            score: r.score,
            predicted_traits: d.traits.names.iter().cloned().zip(r.predicted_traits.iter().copied()).collect(),
            x: y[(i, 0)],
            y: y[(i, 1)],
        })
        .collect())
}

async fn get_embedding(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SideQuery>,
) -> ApiResult<Json<EmbeddingResponse>> {
    let handle = state.session(&id)?;
    let guard = handle.state.lock().await;
    let layout = guard.session.embedding(q.side);
    let weights = guard.session.weights(q.side);
    let d = &handle.dataset.data;
    let points = (0..layout.rows())
        .map(|i| {
            let (x, y, weight) = (layout[(i, 0)], layout[(i, 1)], weights[i]);
            match q.side {
                Side::Rows => Point {
                    id: d.genotypes.hybrids[i].clone(),
                    x,
                    y,
                    weight,
                    traits: Some(d.traits.row(i).into_iter().collect()),
                    chromosome: None,
                    position: None,
                },
                Side::Cols => Point {
                    id: d.genotypes.genes[i].to_string(),
                    x,
                    y,
                    weight,
                    traits: None,
                    chromosome: Some(d.genotypes.genes[i].chromosome),
                    position: Some(d.genotypes.genes[i].position),
                },
            }
        })
        .collect();
    let recommended = match q.side {
        Side::Rows => recommended_points(&handle.dataset, guard.session.model_rows(), &guard.record.recommended)?,
        Side::Cols => Vec::new(),
    };
    Ok(Json(EmbeddingResponse {
        side: q.side,
        points,
        recommended,
    }))
}

// ---- modifications ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModifyRequest {
    /// Client-chosen id; an event id already applied is not applied again.
    pub event_id: String,
    #[serde(flatten)]
    pub event: ModificationEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModifyResponse {
    pub event_id: String,
    /// True when the event id had already been applied.
    pub duplicate: bool,
    pub elapsed_ms: f64,
    pub hybrids: Vec<[f64; 2]>,
    pub genes: Vec<[f64; 2]>,
    pub hybrid_weights: Vec<f64>,
    pub gene_weights: Vec<f64>,
}

fn pairs(m: &Matrix) -> Vec<[f64; 2]> {
    m.row_iter().map(|r| [r[0], r[1]]).collect()
}

fn modify_response(s: &DualSession, event_id: String, duplicate: bool, elapsed_ms: f64) -> ModifyResponse {
    ModifyResponse {
        event_id,
        duplicate,
        elapsed_ms,
        hybrids: pairs(&s.hybrids()),
        genes: pairs(&s.genes()),
        hybrid_weights: s.hybrid_weights().to_vec(),
        gene_weights: s.gene_weights().to_vec(),
    }
}

async fn modify(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ModifyRequest>,
) -> ApiResult<Json<ModifyResponse>> {
    let handle = state.session(&id)?;
    let mut guard = handle
        .state
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "another modification of this session is in progress"))?;
    if guard.record.event_ids.contains(&req.event_id) {
        return Ok(Json(modify_response(&guard.session, req.event_id, true, 0.0)));
    }
    let store = state.0.store.clone();
    blocking(move || {
        let start = Instant::now();
        guard.session.apply_modification(&req.event)?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        let SessionState { session, record } = &mut *guard;
        record.history.push(req.event.clone());
        record.event_ids.push(req.event_id.clone());
        record.embedding_checksum = embedding_checksum(session);
        record.modified = now_secs();
        store.save_record(record)?;
        Ok(modify_response(session, req.event_id, false, elapsed_ms))
    })
    .await
    .map(Json)
}

async fn reset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ModifyResponse>> {
    let handle = state.session(&id)?;
    let mut guard = handle
        .state
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "another modification of this session is in progress"))?;
    let store = state.0.store.clone();
    blocking(move || {
        let SessionState { session, record } = &mut *guard;
        session.reset()?;
        record.history.clear();
        record.event_ids.clear();
        record.embedding_checksum = embedding_checksum(session);
        record.modified = now_secs();
        store.save_record(record)?;
        Ok(modify_response(session, "reset".into(), false, 0.0))
    })
    .await
    .map(Json)
}

// ---- recommendation ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub selected: Vec<Recommended>,
    pub objective: f64,
    pub gamma: f64,
    pub converged: bool,
    pub pool_size: usize,
    /// Feasible crosses dropped by the pool cap.
    pub truncated: usize,
    pub epsilon: f64,
}

async fn recommend_hybrids(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(mut config): Json<RecommendationConfig>,
) -> ApiResult<Json<RecommendResponse>> {
    let handle = state.session(&id)?;
    let dataset = handle.dataset.clone();
    if config.cultivated.is_empty() {
        config.cultivated = dataset.data.cultivated();
    }
    if config.score.terms.is_empty() {
        config.score = ScoreSpec::normalized_sum(&dataset.data.traits.names, &dataset.trait_stats);
    }
    config.max_pool = config.max_pool.min(state.0.config.max_pool);
    if config.k == 0 {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "K must be at least 1"));
    }
    let predictor = handle.predictor.clone();
    let (pool, result) = blocking(move || {
        let d = &dataset.data;
        Ok(recommend(&d.paternal, &d.maternal, &config, &predictor)?)
    })
    .await?;
    let mut guard = handle.state.lock().await;
    guard.record.recommended = result.selected.clone();
    guard.record.modified = now_secs();
    state.0.store.save_record(&guard.record)?;
    Ok(Json(RecommendResponse {
        selected: result.selected,
        objective: result.objective,
        gamma: result.gamma,
        converged: result.converged,
        pool_size: pool.len(),
        truncated: pool.truncated,
        epsilon: pool.epsilon,
    }))
}

// ---- gene view ----

#[derive(Clone, Debug, Deserialize)]
pub struct TraitQuery {
    #[serde(rename = "trait")]
    pub trait_name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotResponse {
    pub gene: String,
    #[serde(rename = "trait")]
    pub trait_name: String,
    pub groups: Vec<BoxStats>,
}

async fn boxplot(
    State(state): State<AppState>,
    Path((id, gene)): Path<(String, String)>,
    Query(q): Query<TraitQuery>,
) -> ApiResult<Json<BoxplotResponse>> {
    let handle = state.session(&id)?;
    let d = &handle.dataset.data;
    let idx = d
        .genotypes
        .gene_index(&gene)
        .or_else(|| gene.parse::<usize>().ok().filter(|&i| i < d.genotypes.n_genes()))
        .ok_or_else(|| ApiError::not_found(format!("unknown gene {gene}")))?;
    let trait_name = match q.trait_name {
        Some(t) => t,
        None => d
            .traits
            .names
            .first()
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset has no traits"))?,
    };
    if d.traits.index(&trait_name).is_none() {
        return Err(ApiError::not_found(format!("unknown trait {trait_name}")));
    }
    let groups = genotype_boxplot_data(&d.genotypes, &d.traits, idx, &trait_name)?;
    Ok(Json(BoxplotResponse {
        gene: d.genotypes.genes[idx].to_string(),
        trait_name,
        groups: groups.to_vec(),
    }))
}
