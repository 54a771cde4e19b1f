//! Environment server: one isolated environment per connection, driven by
//! newline-delimited JSON requests over TCP or stdio.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, info, warn};

use crate::env::{Env, EnvConfig, Observation};
use crate::error::EnvError;
use crate::protocol::{to_line, DecodeError, Encoding, ErrorCode, Request, Response, SpecMessage, StateMessage};
use crate::weather::Timestamp;

/// Protocol state of one connection.
#[derive(Debug)]
pub struct Session {
    cfg: Arc<EnvConfig>,
    env: Env,
    encoding: Encoding,
}

impl Session {
    pub fn new(cfg: Arc<EnvConfig>) -> Self {
        Self { env: Env::new(Arc::clone(&cfg)), cfg, encoding: Encoding::Json }
    }

    /// Answers one request line. The flag is true once the client closed.
    pub fn handle_line(&mut self, line: &str) -> (Response, bool) {
        let req = match serde_json::from_str::<Request>(line) {
            Ok(r) => r,
            Err(e) => return (error(ErrorCode::BadRequest, format!("malformed request: {e}")), false),
        };
        match req {
            Request::Hello { encoding } => {
                if let Some(e) = encoding {
                    self.encoding = e;
                }
                (Response::Spec(SpecMessage::from_config(&self.cfg)), false)
            }
            Request::Reset { seed, start_date, encoding } => {
                let enc = encoding.unwrap_or(self.encoding);
                match self.env.reset(seed, start_date) {
                    Ok(obs) => (Response::State(StateMessage::from_reset(&obs, enc)), false),
                    Err(e) => (error(ErrorCode::ResetFailed, e.to_string()), false),
                }
            }
            Request::Step { action, encoding } => {
                let enc = encoding.unwrap_or(self.encoding);
                let Ok(action) = usize::try_from(action) else {
                    return (
                        error(ErrorCode::BadAction, format!("action {action} outside 0..={}", self.cfg.k())),
                        false,
                    );
                };
                match self.env.step(action) {
                    Ok(step) => (Response::State(StateMessage::from_step(&step, enc)), false),
                    Err(e) => {
                        let code = match e {
                            EnvError::BadAction { .. } => ErrorCode::BadAction,
                            EnvError::NoEpisode => ErrorCode::NoEpisode,
                            EnvError::EpisodeDone => ErrorCode::EpisodeDone,
                            _ => ErrorCode::BadRequest,
                        };
                        (error(code, e.to_string()), false)
                    }
                }
            }
            Request::Close => (Response::Closed, true),
        }
    }
}

fn error(code: ErrorCode, message: String) -> Response {
    Response::Error { code, message }
}

/// Serves one session until `close` or end of input. Blank lines are skipped.
pub fn run_session<R: BufRead, W: Write>(cfg: Arc<EnvConfig>, mut reader: R, mut writer: W) -> io::Result<()> {
    let mut session = Session::new(cfg);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        if line.trim().is_empty() {
            continue;
        }
        let (resp, closed) = session.handle_line(line.trim_end());
        writer.write_all(to_line(&resp).as_bytes())?;
        writer.flush()?;
        if closed {
            return Ok(());
        }
    }
}

pub fn serve_stdio(cfg: Arc<EnvConfig>) -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    run_session(cfg, stdin.lock(), stdout.lock())
}

/// TCP server with one thread per connection.
#[derive(Debug)]
pub struct EnvServer {
    listener: TcpListener,
    cfg: Arc<EnvConfig>,
}

impl EnvServer {
    pub fn bind(cfg: Arc<EnvConfig>, addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, cfg })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever.
    pub fn serve(self) -> io::Result<()> {
        self.accept_loop(&AtomicBool::new(false))
    }

    /// Serves on a background thread until [`ServerHandle::shutdown`].
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || self.accept_loop(&flag));
        Ok(ServerHandle { addr, stop, thread: Some(thread) })
    }

    fn accept_loop(&self, stop: &AtomicBool) -> io::Result<()> {
        info!("serving on {}", self.local_addr()?);
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let cfg = Arc::clone(&self.cfg);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                debug!("session opened {peer:?}");
                if let Err(e) = handle_connection(cfg, stream) {
                    debug!("session {peer:?} ended: {e}");
                }
            });
        }
        Ok(())
    }
}

fn handle_connection(cfg: Arc<EnvConfig>, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    run_session(cfg, reader, stream)
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting new connections. Open sessions run to completion.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_now()
    }

    fn stop_now(&mut self) -> io::Result<()> {
        let Some(thread) = self.thread.take() else { return Ok(()) };
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        thread.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked")))
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_now();
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("malformed response: {0}")]
    Json(#[from] serde_json::Error),
    #[error("server error {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("unexpected response {0:?}")]
    Unexpected(Box<Response>),
    #[error("server closed the connection")]
    Eof,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Blocking client speaking the protocol.
pub struct RemoteEnv {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl RemoteEnv {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { reader: BufReader::new(stream.try_clone()?), writer: stream })
    }

    /// Sends one raw line and parses the reply.
    pub fn request_raw(&mut self, line: &str) -> Result<Response, ClientError> {
        self.writer.write_all(line.as_bytes())?;
        if !line.ends_with('\n') {
            self.writer.write_all(b"\n")?;
        }
        self.writer.flush()?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Err(ClientError::Eof);
        }
        Ok(serde_json::from_str(&buf)?)
    }

    pub fn request(&mut self, req: &Request) -> Result<Response, ClientError> {
        self.request_raw(&to_line(req))
    }

    pub fn hello(&mut self, encoding: Option<Encoding>) -> Result<SpecMessage, ClientError> {
        match self.request(&Request::Hello { encoding })? {
            Response::Spec(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    pub fn reset(
        &mut self,
        seed: u64,
        start_date: Option<Timestamp>,
        encoding: Option<Encoding>,
    ) -> Result<StateMessage, ClientError> {
        match self.request(&Request::Reset { seed, start_date, encoding })? {
            Response::State(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    pub fn step(&mut self, action: i64, encoding: Option<Encoding>) -> Result<StateMessage, ClientError> {
        match self.request(&Request::Step { action, encoding })? {
            Response::State(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    pub fn close(mut self) -> Result<(), ClientError> {
        match self.request(&Request::Close)? {
            Response::Closed => Ok(()),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(resp: Response) -> ClientError {
    match resp {
        Response::Error { code, message } => ClientError::Remote { code, message },
        other => ClientError::Unexpected(Box::new(other)),
    }
}

/// Observations, rewards and done flags of one scripted episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// Reset observation followed by one observation per step.
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

/// Replays `actions` in-process, stopping early if the episode ends.
pub fn local_trajectory(
    cfg: &Arc<EnvConfig>,
    seed: u64,
    start: Option<Timestamp>,
    actions: &[usize],
) -> Result<Trajectory, EnvError> {
    let mut env = Env::new(Arc::clone(cfg));
    let mut traj = Trajectory { observations: vec![env.reset(seed, start)?], ..Default::default() };
    for &a in actions {
        let step = env.step(a)?;
        traj.observations.push(step.observation);
        traj.rewards.push(step.reward);
        traj.dones.push(step.done);
        if step.done {
            break;
        }
    }
    Ok(traj)
}

/// Replays `actions` over the wire, stopping early if the episode ends.
pub fn remote_trajectory(
    client: &mut RemoteEnv,
    seed: u64,
    start: Option<Timestamp>,
    actions: &[usize],
    encoding: Encoding,
) -> Result<Trajectory, ClientError> {
    let first = client.reset(seed, start, Some(encoding))?;
    let mut traj = Trajectory { observations: vec![first.observation.decode()?], ..Default::default() };
    for &a in actions {
        let s = client.step(a as i64, Some(encoding))?;
        traj.observations.push(s.observation.decode()?);
        traj.rewards.push(s.reward);
        traj.dones.push(s.done);
        if s.done {
            break;
        }
    }
    Ok(traj)
}
