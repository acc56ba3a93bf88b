//! The live server: TCP NDJSON ingest, one fusion task, WebSocket fan-out
//! to display clients, and an HTTP endpoint for metrics and profiles.

use std::fs::File;
use std::io::BufWriter;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use capfuse_core::delivery::{decode_client, Handle, Hub, ServerMessage};
use capfuse_core::ingest::liveness::LivenessPolicy;
use capfuse_core::ingest::replay::terminal_watermarks;
use capfuse_core::ingest::{decode_event, IngestError, IngestEvent};
use capfuse_core::{Emission, FusionConfig, Intake, Metrics, Pipeline, PreferenceProfile, ProfileStore, Recorder, Timestamp};
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};

use crate::CliError;

const TICK: Duration = Duration::from_millis(200);
const PING_EVERY: Duration = Duration::from_secs(15);
const HELLO_TIMEOUT: Duration = Duration::from_secs(10);
const FLUSH_TIMEOUT: Duration = Duration::from_secs(2);

pub struct Options {
    pub bind: IpAddr,
    pub ingest_port: u16,
    pub client_port: Option<u16>,
    pub metrics_port: Option<u16>,
    pub config: FusionConfig,
    pub profiles_dir: Option<PathBuf>,
    pub record: Option<PathBuf>,
}

struct Shared {
    hub: Mutex<Hub>,
    /// Bumped whenever session queues may have new messages.
    wake: watch::Sender<u64>,
    metrics: Arc<Metrics>,
    profiles: ProfileStore,
    shutting_down: AtomicBool,
    writers: AtomicUsize,
}

impl Shared {
    fn hub(&self) -> std::sync::MutexGuard<'_, Hub> {
        self.hub.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn notify(&self) {
        self.wake.send_modify(|n| *n = n.wrapping_add(1));
    }

    fn publish(&self, emissions: &[Emission]) {
        if emissions.is_empty() {
            return;
        }
        {
            let mut hub = self.hub();
            for emission in emissions {
                for session in hub.publish(emission) {
                    tracing::warn!(%session, "client too slow for finals; closing");
                }
            }
        }
        self.notify();
    }
}

enum Input {
    Line {
        raw: Vec<u8>,
        decoded: Result<IngestEvent, IngestError>,
    },
    Tick,
    Shutdown(oneshot::Sender<()>),
}

async fn bind(addr: SocketAddr, what: &str) -> Result<TcpListener, CliError> {
    TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Bind(format!("cannot bind {what} port {addr}: {e}")))
}

pub async fn run(options: Options) -> Result<(), CliError> {
    let ingest = bind(SocketAddr::new(options.bind, options.ingest_port), "ingest").await?;
    let clients = match options.client_port {
        Some(p) => Some(bind(SocketAddr::new(options.bind, p), "client").await?),
        None => None,
    };
    let admin = match options.metrics_port {
        Some(p) => Some(bind(SocketAddr::new(options.bind, p), "metrics").await?),
        None => None,
    };
    let recorder = match &options.record {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
            Some(Recorder::new(BufWriter::new(file)))
        }
        None => None,
    };

    let metrics = Arc::new(Metrics::new());
    let (wake, _) = watch::channel(0u64);
    let shared = Arc::new(Shared {
        hub: Mutex::new(Hub::new()),
        wake,
        metrics: metrics.clone(),
        profiles: ProfileStore::from_env(options.profiles_dir.as_deref()),
        shutting_down: AtomicBool::new(false),
        writers: AtomicUsize::new(0),
    });

    tracing::info!(
        ingest = %ingest.local_addr().map_err(|e| CliError::Bind(e.to_string()))?,
        clients = ?clients.as_ref().and_then(|l| l.local_addr().ok()),
        metrics = ?admin.as_ref().and_then(|l| l.local_addr().ok()),
        recording = ?options.record,
        gap_ms = options.config.gap_ms,
        grace_ms = options.config.grace_ms,
        "capfuse listening"
    );

    let pipeline = Pipeline::new(options.config, metrics).with_liveness(LivenessPolicy::new(Timestamp::ZERO));
    let (tx, rx) = mpsc::channel::<Input>(4096);
    let fusion = tokio::spawn(fusion_task(rx, pipeline, recorder, shared.clone()));
    tokio::spawn(accept_sources(ingest, tx.clone(), shared.clone()));
    tokio::spawn(ticker(tx.clone(), shared.clone()));
    if let Some(listener) = clients {
        let app = Router::new().route("/", get(client_upgrade)).with_state(shared.clone());
        tokio::spawn(async move { axum::serve(listener, app).await });
    }
    if let Some(listener) = admin {
        let app = Router::new()
            .route("/metrics", get(metrics_report))
            .route("/profiles/{name}", get(load_profile).put(store_profile))
            .with_state(shared.clone());
        tokio::spawn(async move { axum::serve(listener, app).await });
    }

    shutdown_signal().await;
    tracing::info!("interrupt received; flushing");
    shared.shutting_down.store(true, Ordering::SeqCst);
    let (done_tx, done_rx) = oneshot::channel();
    if tx.send(Input::Shutdown(done_tx)).await.is_ok() {
        let _ = done_rx.await;
    }
    let _ = fusion.await;

    let deadline = Instant::now() + FLUSH_TIMEOUT;
    while shared.writers.load(Ordering::SeqCst) > 0 && Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    tracing::info!("shutdown complete");
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("signal handler installs");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

/// Session time, anchored at the first ingested event so that sources
/// keep their own time base. Zero until then.
#[derive(Debug, Default)]
struct SessionClock {
    base: Option<(Timestamp, Instant)>,
}

impl SessionClock {
    fn anchor(&mut self, t: Timestamp) {
        self.base.get_or_insert_with(|| (t, Instant::now()));
    }

    fn now(&self) -> Timestamp {
        self.base
            .map_or(Timestamp::ZERO, |(t0, at)| t0.saturating_add(at.elapsed().as_millis() as u64))
    }
}

async fn fusion_task(
    mut rx: mpsc::Receiver<Input>,
    mut pipeline: Pipeline,
    mut recorder: Option<Recorder<BufWriter<File>>>,
    shared: Arc<Shared>,
) {
    let mut clock = SessionClock::default();
    let mut max_t = Timestamp::ZERO;
    while let Some(input) = rx.recv().await {
        if let Input::Line { decoded: Ok(event), .. } = &input {
            clock.anchor(event.start());
        }
        let now = clock.now();
        match input {
            Input::Line { raw, decoded } => {
                let (intake, emitted) = match decoded {
                    Ok(event) => {
                        let end = event.end();
                        let result = pipeline.offer(event.clone(), now);
                        if result.0 == Intake::Accepted {
                            max_t = max_t.max(end);
                            record(&mut recorder, &raw, &event);
                        }
                        result
                    }
                    Err(_) => pipeline.offer_line(&raw, now),
                };
                if !intake.is_accepted() {
                    tracing::debug!(?intake, "ingest line rejected");
                }
                shared.publish(&emitted);
            }
            Input::Tick => shared.publish(&pipeline.tick(now)),
            Input::Shutdown(done) => {
                let mut emitted = Vec::new();
                for beat in terminal_watermarks(Timestamp(max_t.0 + 1)) {
                    emitted.extend(pipeline.inject(beat, now));
                }
                emitted.extend(pipeline.finish(now));
                tracing::info!(flushed = emitted.len(), finals = pipeline.finals().len(), "session finished");
                shared.publish(&emitted);
                if let Some(rec) = recorder.take() {
                    match rec.close() {
                        Ok(_) => tracing::info!("recording closed"),
                        Err(e) => tracing::error!(error = %e, "recording could not be completed"),
                    }
                }
                let _ = done.send(());
                return;
            }
        }
    }
}

/// Stops recording on the first write error; the file is then missing its
/// terminal lines, which marks it as cut short.
fn record(recorder: &mut Option<Recorder<BufWriter<File>>>, raw: &[u8], event: &IngestEvent) {
    if let Some(rec) = recorder {
        let line = String::from_utf8_lossy(raw);
        if let Err(e) = rec.record(&line, event) {
            tracing::error!(error = %e, "recording aborted");
            *recorder = None;
        }
    }
}

async fn ticker(tx: mpsc::Sender<Input>, shared: Arc<Shared>) {
    let mut tick = tokio::time::interval(TICK);
    let mut ping = tokio::time::interval(PING_EVERY);
    ping.tick().await;
    loop {
        tokio::select! {
            _ = tick.tick() => {
                if tx.send(Input::Tick).await.is_err() {
                    return;
                }
            }
            _ = ping.tick() => {
                shared.hub().ping_all();
                shared.notify();
            }
        }
    }
}

async fn accept_sources(listener: TcpListener, tx: mpsc::Sender<Input>, shared: Arc<Shared>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                tracing::info!(%peer, "source connected");
                tokio::spawn(read_source(stream, peer, tx.clone(), shared.clone()));
            }
            Err(e) => tracing::warn!(error = %e, "accept failed"),
        }
    }
}

async fn read_source(stream: TcpStream, peer: SocketAddr, tx: mpsc::Sender<Input>, shared: Arc<Shared>) {
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf).await {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                tracing::warn!(%peer, error = %e, "source read failed");
                break;
            }
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let decoded = decode_event(&buf);
        if tx.send(Input::Line { raw: buf.clone(), decoded }).await.is_err() {
            return;
        }
    }
    if !shared.shutting_down.load(Ordering::SeqCst) {
        shared.metrics.source_disconnected();
        tracing::info!(%peer, "source disconnected");
    }
}

async fn client_upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| client_session(socket, shared))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json().into())).await.is_ok()
}

/// Sends everything queued for `handle`. Returns false once the connection
/// should end.
async fn flush(socket: &mut WebSocket, shared: &Shared, handle: &Handle) -> bool {
    let drained = shared.hub().drain(handle);
    for msg in &drained.messages {
        if !send(socket, msg).await {
            return false;
        }
    }
    !(drained.close || shared.shutting_down.load(Ordering::SeqCst))
}

async fn client_session(mut socket: WebSocket, shared: Arc<Shared>) {
    shared.writers.fetch_add(1, Ordering::SeqCst);
    if let Some(handle) = handshake(&mut socket, &shared).await {
        tracing::info!(session = %handle.session_id, "client joined");
        serve_client(&mut socket, &shared, &handle).await;
        shared.hub().disconnect(&handle);
        tracing::info!(session = %handle.session_id, "client left");
    }
    let _ = socket.send(Message::Close(None)).await;
    shared.writers.fetch_sub(1, Ordering::SeqCst);
}

async fn handshake(socket: &mut WebSocket, shared: &Shared) -> Option<Handle> {
    let first = tokio::time::timeout(HELLO_TIMEOUT, async {
        loop {
            match socket.recv().await? {
                Ok(Message::Text(text)) => return Some(text.to_string()),
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => continue,
            }
        }
    })
    .await
    .ok()??;
    let hello = match decode_client(&first) {
        Ok(hello) => hello,
        Err(e) => {
            send(socket, &e.to_message()).await;
            return None;
        }
    };
    let result = shared.hub().handshake(&hello);
    match result {
        Ok(handle) => Some(handle),
        Err(msg) => {
            send(socket, &msg).await;
            None
        }
    }
}

async fn serve_client(socket: &mut WebSocket, shared: &Shared, handle: &Handle) {
    let mut wake = shared.wake.subscribe();
    if !flush(socket, shared, handle).await {
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => match decode_client(&text) {
                    Ok(msg) => {
                        shared.hub().handle_client(handle, &msg);
                        if !flush(socket, shared, handle).await {
                            return;
                        }
                    }
                    Err(e) => {
                        if !send(socket, &e.to_message()).await {
                            return;
                        }
                    }
                },
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
            changed = wake.changed() => {
                if changed.is_err() || !flush(socket, shared, handle).await {
                    return;
                }
            }
        }
    }
}

async fn metrics_report(State(shared): State<Arc<Shared>>) -> Json<capfuse_core::MetricsReport> {
    Json(shared.metrics.report())
}

fn error_body(status: StatusCode, detail: String) -> Response {
    (status, Json(serde_json::json!({ "error": detail }))).into_response()
}

async fn load_profile(State(shared): State<Arc<Shared>>, UrlPath(name): UrlPath<String>) -> Response {
    match shared.profiles.load(&name) {
        Ok(loaded) => {
            if let Some(moved) = &loaded.corrupt {
                tracing::warn!(profile = %name, moved = %moved.display(), "corrupt profile replaced by defaults");
            }
            Json(loaded.profile).into_response()
        }
        Err(e) => error_body(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn store_profile(
    State(shared): State<Arc<Shared>>,
    UrlPath(name): UrlPath<String>,
    body: String,
) -> Response {
    let profile: PreferenceProfile = match serde_json::from_str(&body) {
        Ok(p) => p,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match shared.profiles.persist(&name, &profile) {
        Ok(()) => Json(profile).into_response(),
        Err(e) => error_body(StatusCode::BAD_REQUEST, e.to_string()),
    }
}
