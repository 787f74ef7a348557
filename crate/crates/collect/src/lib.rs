//! HTTP service for click-contingent captioning.
//!
//! Participants see a blurred image, reveal up to ten soft patches of the
//! clean image by clicking, then caption or skip it. Every submission is
//! appended to a JSONL log in the observation schema read by
//! `scanlab_core::dataset::load_observations`.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /session` | | `{session_id, total_images}` |
//! | `GET /session/{id}/image` | | `{image_id, blurred_png, width, height, clicks_used}` |
//! | `POST /session/{id}/click` | `{x, y}` | `{patch_png, patch_origin, clicks_remaining}` |
//! | `POST /session/{id}/caption` | `{text, image_id?}` | `{next}` |
//! | `POST /session/{id}/skip` | `{image_id?}` or empty | `{next}` |
//!
//! PNGs travel base64 encoded. Errors are `{error}` with status 404 (unknown
//! or expired session), 410 (queue exhausted), 409 (eleventh click, double
//! submit), 422 (invalid click or caption) or 503 (empty image pool).

mod error;
mod pool;
mod reveal;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scanlab_core::model::{Fixation, Observation, DEFAULT_PIXELS_PER_DEGREE, MAX_CLICKS};
use serde::{Deserialize, Serialize};

pub use error::{CollectError, Result};
pub use pool::{ImagePool, PoolImage};
pub use reveal::{reveal_patch, Patch, REVEAL_TRUNCATE};

/// Images shown per session at most.
pub const MAX_IMAGES_PER_SESSION: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CollectConfig {
    pub images_dir: PathBuf,
    pub output: PathBuf,
    pub pixels_per_degree: f64,
    pub blur_sigma: f64,
    /// Standard deviation of the reveal edge; defaults to one degree, so
    /// the one-sigma contour is the two-degree disk.
    pub reveal_sigma: Option<f64>,
    pub session_expiry: Duration,
    pub seed: u64,
}

impl CollectConfig {
    pub fn new(images_dir: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            images_dir: images_dir.into(),
            output: output.into(),
            pixels_per_degree: DEFAULT_PIXELS_PER_DEGREE,
            blur_sigma: 16.0,
            reveal_sigma: None,
            session_expiry: Duration::from_secs(24 * 3600),
            seed: 0,
        }
    }

    pub fn reveal_sigma(&self) -> f64 {
        // Disk radius = 2 degrees * ppd / 2.
        self.reveal_sigma.unwrap_or(self.pixels_per_degree)
    }
}

struct Session {
    queue: Vec<usize>,
    current: usize,
    clicks: Vec<Fixation>,
    created: Instant,
    last_active: Instant,
}

/// Append-only observation log with a single writer.
pub struct ObservationLog {
    out: BufWriter<File>,
}

impl ObservationLog {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, obs: &Observation) -> Result<()> {
        serde_json::to_writer(&mut self.out, obs)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

struct Inner {
    pool: ImagePool,
    sigma: f64,
    expiry: Duration,
    seed: u64,
    counter: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
    log: Mutex<ObservationLog>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(pool: ImagePool, config: &CollectConfig) -> Result<Self> {
        if !(config.reveal_sigma() > 0.0) {
            return Err(CollectError::Config("reveal sigma must be positive".into()));
        }
        Ok(Self(Arc::new(Inner {
            pool,
            sigma: config.reveal_sigma(),
            expiry: config.session_expiry,
            seed: config.seed,
            counter: AtomicU64::new(0),
            sessions: Mutex::new(HashMap::new()),
            log: Mutex::new(ObservationLog::open(&config.output)?),
        })))
    }

    /// Loads the image directory and opens the log.
    pub fn from_config(config: &CollectConfig) -> Result<Self> {
        let pool = ImagePool::load_dir(&config.images_dir, config.blur_sigma)?;
        log::info!("{} images in pool", pool.len());
        Self::new(pool, config)
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>> {
        let mut sessions = self.0.sessions.lock().expect("session table poisoned");
        let Some(s) = sessions.get(id).cloned() else {
            return Err(CollectError::UnknownSession);
        };
        // try_lock: a busy session is in use, hence not idle.
        if let Ok(guard) = s.try_lock() {
            if guard.last_active.elapsed() > self.0.expiry {
                drop(guard);
                sessions.remove(id);
                return Err(CollectError::UnknownSession);
            }
        }
        Ok(s)
    }

    fn sweep(&self) {
        let mut sessions = self.0.sessions.lock().expect("session table poisoned");
        let expiry = self.0.expiry;
        sessions.retain(|_, s| s.try_lock().map_or(true, |g| g.last_active.elapsed() <= expiry));
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/image", get(current_image))
        .route("/session/{id}/click", post(click))
        .route("/session/{id}/caption", post(caption))
        .route("/session/{id}/skip", post(skip))
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(config: &CollectConfig, addr: &str) -> Result<()> {
    let state = AppState::from_config(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub total_images: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageReply {
    pub image_id: String,
    pub blurred_png: String,
    pub width: usize,
    pub height: usize,
    pub clicks_used: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClickRequest {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClickReply {
    pub patch_png: String,
    pub patch_origin: [u32; 2],
    pub clicks_remaining: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub text: String,
    #[serde(default)]
    pub image_id: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SkipRequest {
    #[serde(default)]
    pub image_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitReply {
    pub next: bool,
}

async fn create_session(State(state): State<AppState>) -> Result<Json<SessionCreated>> {
    let inner = &state.0;
    if inner.pool.is_empty() {
        return Err(CollectError::EmptyPool);
    }
    state.sweep();
    let n = inner.counter.fetch_add(1, Ordering::Relaxed);
    let mut order: Vec<usize> = (0..inner.pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(inner.seed ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order.truncate(MAX_IMAGES_PER_SESSION);
    let session_id = format!("{:032x}", rand::random::<u128>());
    let now = Instant::now();
    let total_images = order.len();
    inner.sessions.lock().expect("session table poisoned").insert(
        session_id.clone(),
        Arc::new(tokio::sync::Mutex::new(Session {
            queue: order,
            current: 0,
            clicks: Vec::new(),
            created: now,
            last_active: now,
        })),
    );
    Ok(Json(SessionCreated {
        session_id,
        total_images,
    }))
}

async fn current_image(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<ImageReply>> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    s.last_active = Instant::now();
    let idx = *s.queue.get(s.current).ok_or(CollectError::Exhausted)?;
    let img = state.0.pool.get(idx);
    Ok(Json(ImageReply {
        image_id: img.clean.image_id.clone(),
        blurred_png: B64.encode(&img.blurred_png),
        width: img.clean.width(),
        height: img.clean.height(),
        clicks_used: s.clicks.len(),
    }))
}

async fn click(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ClickRequest>,
) -> Result<Json<ClickReply>> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    s.last_active = Instant::now();
    let idx = *s.queue.get(s.current).ok_or(CollectError::Exhausted)?;
    if s.clicks.len() >= MAX_CLICKS {
        return Err(CollectError::Conflict(format!("all {MAX_CLICKS} clicks used")));
    }
    let img = state.0.pool.get(idx);
    let at = Fixation::new(req.x, req.y);
    if !at.in_bounds(img.clean.width(), img.clean.height()) {
        return Err(CollectError::Invalid(format!(
            "click ({}, {}) outside {}x{}",
            req.x,
            req.y,
            img.clean.width(),
            img.clean.height()
        )));
    }
    let patch = reveal_patch(&img.clean, &img.coarse, req.x, req.y, state.0.sigma);
    let t_ms = s.created.elapsed().as_secs_f64() * 1000.0;
    s.clicks.push(Fixation::at_time(req.x, req.y, t_ms));
    let png = pool::encode_png(&image::DynamicImage::ImageRgba8(patch.image))?;
    Ok(Json(ClickReply {
        patch_png: B64.encode(png),
        patch_origin: [patch.origin.0, patch.origin.1],
        clicks_remaining: MAX_CLICKS - s.clicks.len(),
    }))
}

fn submit(state: &AppState, id: &str, s: &mut Session, image_id: Option<&str>, caption: String, skipped: bool) -> Result<SubmitReply> {
    let idx = *s
        .queue
        .get(s.current)
        .ok_or_else(|| CollectError::Conflict("every image of this session was already submitted".into()))?;
    let current_id = &state.0.pool.get(idx).clean.image_id;
    if let Some(claimed) = image_id {
        if claimed != current_id {
            return Err(CollectError::Conflict(format!("image {claimed} was already submitted")));
        }
    }
    let obs = Observation {
        session_id: id.to_string(),
        image_id: current_id.clone(),
        clicks: std::mem::take(&mut s.clicks),
        caption,
        skipped,
    };
    state.0.log.lock().expect("log writer poisoned").append(&obs)?;
    s.current += 1;
    Ok(SubmitReply {
        next: s.current < s.queue.len(),
    })
}

async fn caption(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<CaptionRequest>,
) -> Result<Json<SubmitReply>> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    s.last_active = Instant::now();
    if req.text.trim().is_empty() {
        return Err(CollectError::Invalid("caption must not be empty".into()));
    }
    Ok(Json(submit(&state, &id, &mut s, req.image_id.as_deref(), req.text, false)?))
}

async fn skip(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    req: Option<Json<SkipRequest>>,
) -> Result<Json<SubmitReply>> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    s.last_active = Instant::now();
    let req = req.map(|Json(r)| r).unwrap_or_default();
    Ok(Json(submit(&state, &id, &mut s, req.image_id.as_deref(), String::new(), true)?))
}
