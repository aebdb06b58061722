//! Local HTTP service for the triage loop.
//!
//! All routes live under `/v1`:
//!
//! | method | path               | purpose                                  |
//! |--------|--------------------|------------------------------------------|
//! | POST   | `/jobs`            | rank a batch of candidates in background |
//! | GET    | `/jobs/{id}`       | job state and progress                   |
//! | GET    | `/queue`           | ranked entries of the latest finished job|
//! | POST   | `/verdict`         | like or dislike a queued position        |
//! | GET    | `/positions/{id}`  | parsed board for queue entry `id` (rank) |
//!
//! Only one job may be queued or running at a time. Verdicts are written
//! to the store before the response is sent and never trigger a re-rank.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{CandidateScore, CvSequence, CycleConfig, CycleScore, RankEngine};
use crate::fen::{parse_fen, square_name, Color, FenRecord, Piece};
use crate::metric::ChangeMetric;
use crate::store::{
    parse_candidates, resolve_flips, Label, PreferenceDb, Store, StoreError, Timestamp,
};

#[derive(Clone)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    pub cycle: CycleConfig,
    pub metric: &'static dyn ChangeMetric,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pending,
    Liked,
    Disliked,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueEntry {
    pub rank: usize,
    pub fen: FenRecord,
    pub arp: f64,
    pub cycles: Vec<CycleScore>,
    pub verdict: Verdict,
}

struct Job {
    id: String,
    state: JobState,
    total: usize,
    done: Arc<AtomicUsize>,
    seed: u64,
    created_at: String,
    error: Option<String>,
    result: Option<Vec<CandidateScore>>,
}

impl Job {
    fn status(&self) -> serde_json::Value {
        let done = self.done.load(Ordering::Relaxed).min(self.total);
        json!({
            "id": self.id,
            "state": self.state,
            "progress": {
                "done": done,
                "total": self.total,
                "fraction": if self.total == 0 { 0.0 } else { done as f64 / self.total as f64 },
            },
            "seed": self.seed,
            "created_at": self.created_at,
            "error": self.error,
            "result": self.result,
        })
    }
}

#[derive(Default)]
struct Jobs {
    next: u64,
    by_id: HashMap<String, Job>,
    active: Option<String>,
}

struct Queue {
    job_id: String,
    entries: Vec<QueueEntry>,
}

struct Shared {
    config: ServiceConfig,
    store: Mutex<Store>,
    jobs: Mutex<Jobs>,
    queue: Mutex<Option<Queue>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        let store = Store::new(config.store_dir.clone());
        AppState(Arc::new(Shared {
            config,
            store: Mutex::new(store),
            jobs: Mutex::new(Jobs::default()),
            queue: Mutex::new(None),
        }))
    }
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

pub fn router(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(job_status))
        .route("/queue", get(queue))
        .route("/verdict", post(verdict))
        .route("/positions/{id}", get(position));
    Router::new().nest("/v1", v1).with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Deserialize)]
struct JobRequest {
    candidates: String,
    seed: Option<u64>,
}

fn load_snapshot(store: &Store) -> Result<(PreferenceDb, PreferenceDb), StoreError> {
    let liked = store.load(Label::Liked)?;
    let disliked = store.load(Label::Disliked)?;
    let (liked, disliked, _) = resolve_flips(&liked, &disliked);
    Ok((liked, disliked))
}

async fn create_job(State(state): State<AppState>, body: Bytes) -> Response {
    let text = String::from_utf8_lossy(&body);
    if text.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "empty body");
    }
    let (candidates_text, seed) = if text.trim_start().starts_with('{') {
        match serde_json::from_str::<JobRequest>(&text) {
            Ok(req) => (req.candidates, req.seed),
            Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
        }
    } else {
        (text.into_owned(), None)
    };
    let candidates = match parse_candidates(&candidates_text) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };

    let shared = &state.0;
    let mut jobs = shared.jobs.lock().unwrap();
    if let Some(active) = &jobs.active {
        return error(
            StatusCode::CONFLICT,
            format!("job {active} is already running"),
        );
    }
    // Snapshot under the store lock so every acknowledged verdict is in it.
    let snapshot = {
        let store = shared.store.lock().unwrap();
        load_snapshot(&store)
    };
    let (liked, disliked) = match snapshot {
        Ok(s) => s,
        Err(e) => return error(StatusCode::CONFLICT, format!("store not ready: {e}")),
    };

    jobs.next += 1;
    let id = format!("job-{}", jobs.next);
    let mut cycle = shared.config.cycle;
    if let Some(seed) = seed {
        cycle.seed = seed;
    }
    let done = Arc::new(AtomicUsize::new(0));
    jobs.by_id.insert(
        id.clone(),
        Job {
            id: id.clone(),
            state: JobState::Queued,
            total: candidates.len(),
            done: Arc::clone(&done),
            seed: cycle.seed,
            created_at: Timestamp::now().to_string(),
            error: None,
            result: None,
        },
    );
    jobs.active = Some(id.clone());
    drop(jobs);

    let worker_state = state.clone();
    let job_id = id.clone();
    std::thread::spawn(move || {
        run_job(
            worker_state,
            job_id,
            cycle,
            liked,
            disliked,
            candidates,
            done,
        )
    });

    (StatusCode::ACCEPTED, Json(json!({ "id": id }))).into_response()
}

fn run_job(
    state: AppState,
    id: String,
    cycle: CycleConfig,
    liked: PreferenceDb,
    disliked: PreferenceDb,
    candidates: Vec<FenRecord>,
    done: Arc<AtomicUsize>,
) {
    let shared = &state.0;
    if let Some(job) = shared.jobs.lock().unwrap().by_id.get_mut(&id) {
        job.state = JobState::Running;
    }
    let metric = shared.config.metric;
    let outcome = (|| {
        let l = CvSequence::build(&liked, metric)?;
        let d = CvSequence::build(&disliked, metric)?;
        let engine = RankEngine::new(&l, &d, cycle)?;
        let progress = |n: usize| {
            done.fetch_max(n, Ordering::Relaxed);
        };
        engine.rank_collection(&candidates, shared.config.workers, Some(&progress))
    })();

    let mut jobs = shared.jobs.lock().unwrap();
    let Some(job) = jobs.by_id.get_mut(&id) else {
        return;
    };
    match outcome {
        Ok(scores) => {
            let entries = scores
                .iter()
                .enumerate()
                .map(|(i, s)| QueueEntry {
                    rank: i + 1,
                    fen: s.fen.clone(),
                    arp: s.arp,
                    cycles: s.cycles.clone(),
                    verdict: Verdict::Pending,
                })
                .collect();
            *shared.queue.lock().unwrap() = Some(Queue {
                job_id: id.clone(),
                entries,
            });
            job.result = Some(scores);
            job.state = JobState::Done;
        }
        Err(e) => {
            job.error = Some(e.to_string());
            job.state = JobState::Failed;
        }
    }
    jobs.active = None;
}

async fn job_status(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let jobs = state.0.jobs.lock().unwrap();
    match jobs.by_id.get(&id) {
        Some(job) => Json(job.status()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no job {id}")),
    }
}

async fn queue(State(state): State<AppState>) -> Response {
    match &*state.0.queue.lock().unwrap() {
        Some(q) => Json(json!({ "job_id": q.job_id, "entries": q.entries })).into_response(),
        None => error(StatusCode::NOT_FOUND, "no ranked collection yet"),
    }
}

#[derive(Deserialize)]
struct VerdictRequest {
    fen: String,
    verdict: Label,
}

async fn verdict(State(state): State<AppState>, body: Bytes) -> Response {
    let req: VerdictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    let fen = match parse_fen(&req.fen) {
        Ok(f) => f,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    let shared = &state.0;
    let mut queue = shared.queue.lock().unwrap();
    let Some(entry) = queue
        .as_mut()
        .and_then(|q| q.entries.iter_mut().find(|e| e.fen == fen))
    else {
        return error(StatusCode::NOT_FOUND, format!("{fen} is not in the queue"));
    };
    if entry.verdict != Verdict::Pending {
        return error(
            StatusCode::CONFLICT,
            format!("verdict already recorded for {fen}"),
        );
    }
    let written = shared
        .store
        .lock()
        .unwrap()
        .append_verdict(req.verdict, fen, Timestamp::now());
    match written {
        Ok(_) => {
            entry.verdict = match req.verdict {
                Label::Liked => Verdict::Liked,
                Label::Disliked => Verdict::Disliked,
            };
            Json(&*entry).into_response()
        }
        Err(e @ StoreError::DuplicateFen { .. }) => error(StatusCode::CONFLICT, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

#[derive(Serialize)]
struct Square {
    square: String,
    piece: Option<Piece>,
}

async fn position(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let queue = state.0.queue.lock().unwrap();
    let entry = id
        .parse::<usize>()
        .ok()
        .and_then(|rank| queue.as_ref()?.entries.iter().find(|e| e.rank == rank));
    let Some(entry) = entry else {
        return error(StatusCode::NOT_FOUND, format!("no queue entry {id}"));
    };
    let squares: Vec<Square> = entry
        .fen
        .board()
        .iter()
        .enumerate()
        .map(|(i, p)| Square {
            square: square_name(i),
            piece: *p,
        })
        .collect();
    Json(json!({
        "id": entry.rank,
        "fen": entry.fen,
        "arp": entry.arp,
        "verdict": entry.verdict,
        "side_to_move": match entry.fen.side_to_move() { Color::White => "w", Color::Black => "b" },
        "squares": squares,
    }))
    .into_response()
}
