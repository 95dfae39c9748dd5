//! WebSocket transport around the protocol session. One session per
//! connection; every connection's traffic is logged as replayable JSONL.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use probenav::wire::{Direction, ProtocolSession, ServerContext, SessionLog};
use tokio::sync::{watch, Notify};

struct App {
    ctx: ServerContext,
    log_dir: Option<PathBuf>,
    next_id: AtomicU64,
    active: AtomicUsize,
    idle: Notify,
    shutdown: watch::Receiver<bool>,
}

pub async fn serve(ctx: ServerContext, bind: &str, port: u16, log_dir: Option<PathBuf>) -> Result<()> {
    if let Some(dir) = &log_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating log dir {}", dir.display()))?;
    }
    let listener = tokio::net::TcpListener::bind((bind, port))
        .await
        .with_context(|| format!("binding {bind}:{port}"))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = watch::channel(false);
    let app = Arc::new(App {
        ctx,
        log_dir,
        next_id: AtomicU64::new(1),
        active: AtomicUsize::new(0),
        idle: Notify::new(),
        shutdown: rx,
    });
    let router = Router::new().route("/ws", get(upgrade)).with_state(app.clone());
    println!("listening on ws://{addr}/ws");
    log::info!("{} cases loaded", app.ctx.cases.len());

    let signal = async move {
        terminate().await;
        log::info!("shutting down");
        let _ = tx.send(true);
    };
    axum::serve(listener, router).with_graceful_shutdown(signal).await?;

    // Upgraded sockets outlive the HTTP server; wait for their logs.
    let wait = async {
        loop {
            let idle = app.idle.notified();
            if app.active.load(Ordering::SeqCst) == 0 {
                break;
            }
            idle.await;
        }
    };
    if tokio::time::timeout(Duration::from_secs(5), wait).await.is_err() {
        log::warn!("{} sessions still open at exit", app.active.load(Ordering::SeqCst));
    }
    Ok(())
}

#[cfg(unix)]
async fn terminate() {
    use tokio::signal::unix::{signal, SignalKind};
    match signal(SignalKind::terminate()) {
        Ok(mut term) => {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
        }
        Err(_) => {
            let _ = tokio::signal::ctrl_c().await;
        }
    }
}

#[cfg(not(unix))]
async fn terminate() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, app))
}

async fn run_session(mut socket: WebSocket, app: Arc<App>) {
    let id = app.next_id.fetch_add(1, Ordering::SeqCst);
    app.active.fetch_add(1, Ordering::SeqCst);
    let mut session = ProtocolSession::new(&app.ctx);
    let mut log = SessionLog::default();
    let mut shutdown = app.shutdown.clone();
    'conn: loop {
        let msg = tokio::select! {
            m = socket.recv() => m,
            _ = shutdown.changed() => {
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
        };
        let text = match msg {
            Some(Ok(Message::Text(t))) => t.as_str().to_string(),
            Some(Ok(Message::Binary(b))) => String::from_utf8_lossy(&b).into_owned(),
            Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
            Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
        };
        log.push(Direction::Client, text.as_str());
        for reply in session.handle_text(&text) {
            let out = reply.to_text();
            log.push(Direction::Server, out.as_str());
            if socket.send(Message::Text(out.into())).await.is_err() {
                break 'conn;
            }
        }
        if session.is_closed() {
            let _ = socket.send(Message::Close(None)).await;
            break;
        }
    }
    if let Some(dir) = &app.log_dir {
        let path = dir.join(format!("session-{id:04}.jsonl"));
        if let Err(e) = std::fs::write(&path, log.to_jsonl()) {
            log::error!("writing {}: {e}", path.display());
        }
    }
    app.active.fetch_sub(1, Ordering::SeqCst);
    app.idle.notify_waiters();
}
