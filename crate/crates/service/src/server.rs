use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::sync::{broadcast, watch};

use teleosim_core::harness::SessionConfig;

use crate::lifecycle::Lifecycle;
use crate::protocol::{
    parse_client, ClientMessage, ErrorCode, ServerMessage, StateSnapshot, VelocityLimits, PROTOCOL_VERSION,
};
use crate::ServiceError;

/// Largest wall-time lag the physics loop catches up on before it drops
/// time, s.
const MAX_LAG: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub session: SessionConfig,
    pub bind: SocketAddr,
    /// Where finished trials are written; `None` keeps them in memory only.
    pub out_dir: Option<PathBuf>,
    /// Hz, in service time.
    pub snapshot_hz: f64,
    pub heartbeat: Duration,
    /// Silence after which a console is dropped.
    pub client_timeout: Duration,
    pub limits: VelocityLimits,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            out_dir: None,
            snapshot_hz: 60.0,
            heartbeat: Duration::from_secs(1),
            client_timeout: Duration::from_secs(5),
            limits: VelocityLimits::default(),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.session.validate()?;
        let l = &self.limits;
        if !(self.snapshot_hz > 0.0 && self.snapshot_hz.is_finite()) {
            return Err(ServiceError::Config(format!("snapshot rate {}", self.snapshot_hz)));
        }
        if !(l.linear > 0.0 && l.angular > 0.0 && l.linear.is_finite() && l.angular.is_finite()) {
            return Err(ServiceError::Config("velocity limits must be positive".into()));
        }
        if self.heartbeat.is_zero() || self.client_timeout < self.heartbeat {
            return Err(ServiceError::Config("client timeout must exceed a non-zero heartbeat".into()));
        }
        Ok(())
    }
}

/// Events from the connection to the physics loop.
enum Inbound {
    Message(ClientMessage),
    Disconnected,
}

#[derive(Clone)]
struct App {
    commands: mpsc::Sender<Inbound>,
    snapshots: watch::Receiver<Arc<StateSnapshot>>,
    events: broadcast::Sender<ServerMessage>,
    occupied: Arc<AtomicBool>,
    shutdown: watch::Receiver<bool>,
    cfg: Arc<ServiceConfig>,
}

/// A running service.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    physics: std::thread::JoinHandle<()>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Closes the socket, stops the physics loop and waits for both.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        self.join().await;
    }

    /// Waits until the service stops on its own or through `shutdown`.
    pub async fn join(self) {
        if let Ok(Err(e)) = self.server.await {
            log::error!("server: {e}");
        }
        let _ = self.shutdown.send(true);
        let _ = tokio::task::spawn_blocking(move || self.physics.join()).await;
    }

    /// Sender that stops the service, e.g. from a signal handler.
    pub fn stopper(&self) -> watch::Sender<bool> {
        self.shutdown.clone()
    }
}

/// Binds `cfg.bind` and starts the physics loop and the `/session`
/// endpoint. Port 0 picks a free port; see [`ServiceHandle::addr`].
pub async fn serve(cfg: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    cfg.validate()?;
    let lifecycle = Lifecycle::new(cfg.session.clone(), cfg.out_dir.clone(), cfg.limits)?;
    let listener = tokio::net::TcpListener::bind(cfg.bind)
        .await
        .map_err(|source| ServiceError::Bind { addr: cfg.bind, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServiceError::Bind { addr: cfg.bind, source })?;

    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (events, _) = broadcast::channel(256);
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let mut lifecycle = lifecycle;
    let (snap_tx, snap_rx) = watch::channel(Arc::new(lifecycle.snapshot()));

    let physics = {
        let events = events.clone();
        let stop = shutdown_rx.clone();
        let hz = cfg.snapshot_hz;
        std::thread::Builder::new()
            .name("teleosim-physics".into())
            .spawn(move || physics_loop(lifecycle, cmd_rx, snap_tx, events, stop, hz))
            .expect("spawn physics thread")
    };

    let app = App {
        commands: cmd_tx,
        snapshots: snap_rx,
        events,
        occupied: Arc::new(AtomicBool::new(false)),
        shutdown: shutdown_rx.clone(),
        cfg: Arc::new(cfg),
    };
    let router = Router::new().route("/session", get(upgrade)).with_state(app);
    let mut stop = shutdown_rx;
    let server = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async move {
                let _ = stop.wait_for(|s| *s).await;
            })
            .await
    });
    log::info!("serving /session on {addr}");
    Ok(ServiceHandle {
        addr,
        shutdown: shutdown_tx,
        server,
        physics,
    })
}

/// Steps the lifecycle in wall-clock time and publishes snapshots on a fixed
/// service-time grid.
fn physics_loop(
    mut lc: Lifecycle,
    commands: mpsc::Receiver<Inbound>,
    snapshots: watch::Sender<Arc<StateSnapshot>>,
    events: broadcast::Sender<ServerMessage>,
    stop: watch::Receiver<bool>,
    snapshot_hz: f64,
) {
    let dt = lc.dt();
    let period = 1.0 / snapshot_hz;
    let mut next_snapshot = period;
    let mut origin = Instant::now();
    let publish = |frames: Vec<ServerMessage>| {
        for f in frames {
            let _ = events.send(f);
        }
    };
    while !*stop.borrow() {
        loop {
            match commands.try_recv() {
                Ok(Inbound::Message(m)) => publish(lc.handle(m)),
                Ok(Inbound::Disconnected) => {
                    if lc.state() == crate::LifecycleState::Running {
                        log::warn!("operator disconnected; aborting the trial");
                        publish(lc.handle(ClientMessage::Abort));
                    }
                }
                Err(_) => break,
            }
        }
        let wall = origin.elapsed().as_secs_f64();
        if wall - lc.time() > MAX_LAG {
            log::warn!("physics fell {:.3} s behind wall time; dropping the lag", wall - lc.time());
            origin += Duration::from_secs_f64(wall - lc.time());
        }
        let target = origin.elapsed().as_secs_f64();
        while lc.time() + dt <= target {
            publish(lc.tick());
            if lc.time() + 0.5 * dt >= next_snapshot {
                let _ = snapshots.send(Arc::new(lc.snapshot()));
                next_snapshot += period;
            }
        }
        std::thread::sleep(Duration::from_micros(500));
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<App>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, app))
}

/// Clears the single-operator flag when the connection ends.
struct Occupied(Arc<AtomicBool>);

impl Drop for Occupied {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

fn text(m: &ServerMessage) -> Message {
    Message::Text(m.to_json().into())
}

async fn connection(mut socket: WebSocket, app: App) {
    if app.occupied.swap(true, Ordering::SeqCst) {
        let reason = "another operator is connected";
        log::info!("rejected a second connection");
        let _ = socket.send(text(&ServerMessage::error(ErrorCode::Busy, reason))).await;
        let _ = socket
            .send(Message::Close(Some(CloseFrame {
                code: axum::extract::ws::close_code::POLICY,
                reason: reason.into(),
            })))
            .await;
        return;
    }
    let _guard = Occupied(app.occupied.clone());
    let (mut tx, mut rx) = socket.split();
    let mut snapshots = app.snapshots.clone();
    let mut events = app.events.subscribe();
    let mut shutdown = app.shutdown.clone();
    let cfg = &app.cfg;

    let first = snapshots.borrow_and_update().clone();
    let hello = ServerMessage::Hello {
        protocol: PROTOCOL_VERSION.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        snapshot_hz: cfg.snapshot_hz,
        heartbeat: cfg.heartbeat.as_secs_f64(),
        limits: cfg.limits,
        state: first.state,
        task: first.task.clone(),
        mode: first.mode,
    };
    if tx.send(text(&hello)).await.is_err() {
        let _ = app.commands.send(Inbound::Disconnected);
        return;
    }
    let mut heartbeat = tokio::time::interval(cfg.heartbeat);
    heartbeat.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last_heard = Instant::now();
    let mut last_t = first.t;

    loop {
        let out = tokio::select! {
            changed = snapshots.changed() => {
                if changed.is_err() {
                    break;
                }
                let s = snapshots.borrow_and_update().clone();
                last_t = s.t;
                Some(ServerMessage::Snapshot(Box::new((*s).clone())))
            }
            ev = events.recv() => match ev {
                Ok(m) => Some(m),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("console missed {n} events");
                    None
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = rx.next() => {
                last_heard = Instant::now();
                match msg {
                    Some(Ok(Message::Text(t))) => match parse_client(&t) {
                        Ok(m) => {
                            if app.commands.send(Inbound::Message(m)).is_err() {
                                break;
                            }
                            None
                        }
                        Err(frame) => Some(frame),
                    },
                    Some(Ok(Message::Binary(_))) => Some(ServerMessage::error(ErrorCode::Malformed, "expected a text frame")),
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => None,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                }
            }
            _ = heartbeat.tick() => {
                if last_heard.elapsed() > cfg.client_timeout {
                    log::warn!("console silent for {:?}; dropping it", cfg.client_timeout);
                    let _ = tx.send(text(&ServerMessage::error(ErrorCode::InvalidState, "heartbeat timeout"))).await;
                    break;
                }
                Some(ServerMessage::Heartbeat { t: last_t })
            }
            _ = shutdown.changed() => {
                let _ = tx.send(Message::Close(None)).await;
                break;
            }
        };
        if let Some(m) = out {
            if tx.send(text(&m)).await.is_err() {
                break;
            }
        }
    }
    let _ = app.commands.send(Inbound::Disconnected);
}
