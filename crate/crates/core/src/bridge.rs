//! TCP wire protocol exposing [`VecEnv`] to external trainers.
//!
//! A frame is a little-endian `u32` payload length followed by a UTF-8 JSON object
//! whose `type` field names the message. The server answers every request frame with
//! exactly one frame; malformed requests get an `error` reply and the session
//! continues.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecsim::{BatchInfo, BatchStep, RegimeConfig, VecEnv};
use crate::{ACT_DIM, OBS_DIM};

pub const PROTOCOL_VERSION: &str = "1";
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        obs_dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        act_dim: Option<usize>,
    },
    /// Request: replaces the session's environments. Reply: the resolved config.
    Configure {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<RegimeConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_envs: Option<usize>,
    },
    /// Request: optional master seed override. Reply: the `n_envs × 4` observations.
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observations: Option<Vec<f64>>,
    },
    Step {
        actions: Vec<f64>,
    },
    StepResult {
        observations: Vec<f64>,
        rewards: Vec<f64>,
        terminated: Vec<bool>,
        truncated: Vec<bool>,
        infos: Vec<BatchInfo>,
    },
    Error {
        message: String,
    },
    Close,
}

impl Message {
    pub fn error(message: impl Into<String>) -> Self {
        Message::Error {
            message: message.into(),
        }
    }

    fn step_result(s: BatchStep) -> Self {
        Message::StepResult {
            observations: s.observations,
            rewards: s.rewards,
            terminated: s.terminated,
            truncated: s.truncated,
            infos: s.infos,
        }
    }
}

/// Outcome of reading one frame.
#[derive(Debug)]
pub enum Frame {
    Payload(Vec<u8>),
    /// Declared length above [`MAX_FRAME`]; the payload was skipped.
    Oversize(usize),
    /// Clean end of stream before a header.
    Eof,
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Frame> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(Frame::Eof),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(header) as usize;
    if len > MAX_FRAME {
        let skipped = io::copy(&mut r.take(len as u64), &mut io::sink())?;
        if skipped < len as u64 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        return Ok(Frame::Oversize(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Frame::Payload(buf))
}

pub fn send(w: &mut impl Write, msg: &Message) -> Result<()> {
    write_frame(w, &serde_json::to_vec(msg)?)?;
    Ok(())
}

/// Environment state of one client session.
pub struct Session {
    defaults: RegimeConfig,
    config: RegimeConfig,
    env: Option<VecEnv>,
    pub requests: u64,
}

impl Session {
    pub fn new(defaults: RegimeConfig) -> Self {
        Self {
            config: defaults.clone(),
            defaults,
            env: None,
            requests: 0,
        }
    }

    /// Handles one raw payload. Returns the reply and whether the session should end.
    pub fn handle(&mut self, payload: &[u8]) -> (Message, bool) {
        self.requests += 1;
        let msg: Message = match serde_json::from_slice(payload) {
            Ok(m) => m,
            Err(e) => return (Message::error(format!("malformed message: {e}")), false),
        };
        match self.dispatch(msg) {
            Ok(reply) => {
                let close = matches!(reply, Message::Close);
                (reply, close)
            }
            Err(e) => (Message::error(e.to_string()), false),
        }
    }

    fn dispatch(&mut self, msg: Message) -> Result<Message> {
        match msg {
            Message::Hello { version, .. } => {
                if let Some(v) = version {
                    if v != PROTOCOL_VERSION {
                        return Err(Error::Protocol(format!(
                            "client speaks version {v}, server speaks {PROTOCOL_VERSION}"
                        )));
                    }
                }
                Ok(Message::Hello {
                    version: Some(PROTOCOL_VERSION.into()),
                    obs_dim: Some(OBS_DIM),
                    act_dim: Some(ACT_DIM),
                })
            }
            Message::Configure { config, n_envs } => {
                let mut cfg = config.unwrap_or_else(|| self.defaults.clone());
                if let Some(n) = n_envs {
                    cfg.n_envs = n;
                }
                cfg.validate()?;
                self.env = None;
                self.env = Some(VecEnv::new(cfg.clone())?);
                self.config = cfg;
                Ok(Message::Configure {
                    n_envs: Some(self.config.n_envs),
                    config: Some(self.config.clone()),
                })
            }
            Message::Reset { seed, .. } => {
                let rebuild = self.env.is_none() || seed.is_some_and(|s| s != self.config.master_seed);
                if rebuild {
                    let mut cfg = self.config.clone();
                    if let Some(s) = seed {
                        cfg.master_seed = s;
                    }
                    self.env = Some(VecEnv::new(cfg.clone())?);
                    self.config = cfg;
                }
                let env = self.env.as_mut().expect("environment built above");
                Ok(Message::Reset {
                    seed: Some(self.config.master_seed),
                    observations: Some(env.reset()),
                })
            }
            Message::Step { actions } => {
                let env = self
                    .env
                    .as_mut()
                    .ok_or_else(|| Error::Protocol("step before reset".into()))?;
                Ok(Message::step_result(env.step(&actions)?))
            }
            Message::Close => {
                self.env = None;
                Ok(Message::Close)
            }
            Message::StepResult { .. } | Message::Error { .. } => {
                Err(Error::Protocol("server-only message type sent by client".into()))
            }
        }
    }
}

/// Runs one client session on `stream` until `close`, disconnect, or an I/O error.
/// Returns the number of request frames answered.
pub fn serve_connection(stream: TcpStream, defaults: &RegimeConfig) -> Result<u64> {
    stream.set_nodelay(true)?;
    let mut reader = io::BufReader::new(stream.try_clone()?);
    let mut writer = io::BufWriter::new(stream);
    let mut session = Session::new(defaults.clone());
    let mut answered = 0;
    loop {
        let (reply, close) = match read_frame(&mut reader) {
            Ok(Frame::Payload(p)) => session.handle(&p),
            Ok(Frame::Oversize(n)) => (
                Message::error(format!("frame of {n} bytes exceeds the {MAX_FRAME}-byte limit")),
                false,
            ),
            Ok(Frame::Eof) => break,
            Err(e) if is_disconnect(&e) => break,
            Err(e) => return Err(e.into()),
        };
        match send(&mut writer, &reply) {
            Ok(()) => answered += 1,
            Err(Error::Io(e)) if is_disconnect(&e) => break,
            Err(e) => return Err(e),
        }
        if close {
            break;
        }
    }
    Ok(answered)
}

fn is_disconnect(e: &io::Error) -> bool {
    use io::ErrorKind::*;
    matches!(e.kind(), UnexpectedEof | ConnectionReset | ConnectionAborted | BrokenPipe)
}

/// Single-session TCP server: clients are served one after another.
pub struct Server {
    listener: TcpListener,
    defaults: RegimeConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, defaults: RegimeConfig) -> Result<Self> {
        defaults.validate()?;
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            defaults,
        })
    }

    pub fn local_addr(&self) -> Result<std::net::SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves `sessions` clients in turn, or forever when `None`. A session that fails
    /// is logged and dropped; the server keeps accepting.
    pub fn run(&self, sessions: Option<usize>) -> Result<()> {
        let mut served = 0;
        while sessions.is_none_or(|n| served < n) {
            let (stream, peer) = self.listener.accept()?;
            log::info!("session from {peer}");
            match serve_connection(stream, &self.defaults) {
                Ok(n) => log::info!("session from {peer} closed after {n} requests"),
                Err(e) => log::warn!("session from {peer} ended with error: {e}"),
            }
            served += 1;
        }
        Ok(())
    }
}

/// Blocking client for the protocol.
pub struct Client {
    reader: io::BufReader<TcpStream>,
    writer: io::BufWriter<TcpStream>,
    pub n_envs: usize,
}

impl Client {
    /// Connects and performs the version handshake.
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut c = Self {
            reader: io::BufReader::new(stream.try_clone()?),
            writer: io::BufWriter::new(stream),
            n_envs: 0,
        };
        match c.request(&Message::Hello {
            version: Some(PROTOCOL_VERSION.into()),
            obs_dim: None,
            act_dim: None,
        })? {
            Message::Hello {
                version: Some(v),
                obs_dim: Some(OBS_DIM),
                act_dim: Some(ACT_DIM),
            } if v == PROTOCOL_VERSION => Ok(c),
            other => Err(Error::Protocol(format!("unexpected handshake reply {other:?}"))),
        }
    }

    pub fn send_raw(&mut self, payload: &[u8]) -> Result<()> {
        write_frame(&mut self.writer, payload)?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message> {
        match read_frame(&mut self.reader)? {
            Frame::Payload(p) => Ok(serde_json::from_slice(&p)?),
            Frame::Oversize(n) => Err(Error::Protocol(format!("server sent an oversize frame ({n} bytes)"))),
            Frame::Eof => Err(Error::Protocol("server closed the connection".into())),
        }
    }

    /// Sends one message and returns the reply; an `error` reply becomes an `Err`.
    pub fn request(&mut self, msg: &Message) -> Result<Message> {
        send(&mut self.writer, msg)?;
        match self.recv()? {
            Message::Error { message } => Err(Error::Protocol(message)),
            m => Ok(m),
        }
    }

    pub fn configure(&mut self, cfg: &RegimeConfig) -> Result<RegimeConfig> {
        match self.request(&Message::Configure {
            config: Some(cfg.clone()),
            n_envs: None,
        })? {
            Message::Configure {
                config: Some(c),
                n_envs: Some(n),
            } => {
                self.n_envs = n;
                Ok(c)
            }
            other => Err(Error::Protocol(format!("unexpected configure reply {other:?}"))),
        }
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>> {
        match self.request(&Message::Reset {
            seed,
            observations: None,
        })? {
            Message::Reset {
                observations: Some(o),
                ..
            } => {
                self.n_envs = o.len() / OBS_DIM;
                Ok(o)
            }
            other => Err(Error::Protocol(format!("unexpected reset reply {other:?}"))),
        }
    }

    pub fn step(&mut self, actions: &[f64]) -> Result<BatchStep> {
        match self.request(&Message::Step {
            actions: actions.to_vec(),
        })? {
            Message::StepResult {
                observations,
                rewards,
                terminated,
                truncated,
                infos,
            } => Ok(BatchStep {
                observations,
                rewards,
                terminated,
                truncated,
                infos,
            }),
            other => Err(Error::Protocol(format!("unexpected step reply {other:?}"))),
        }
    }

    pub fn close(mut self) -> Result<()> {
        self.request(&Message::Close).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_reply_is_the_handshake_constant() {
        let mut s = Session::new(RegimeConfig::default());
        let (reply, close) = s.handle(br#"{"type":"hello"}"#);
        assert!(!close);
        let v = serde_json::to_value(&reply).unwrap();
        assert_eq!(v, serde_json::json!({"type": "hello", "version": "1", "obs_dim": 4, "act_dim": 2}));
    }

    #[test]
    fn malformed_and_misordered_requests_get_errors() {
        let mut s = Session::new(RegimeConfig::default());
        for p in [&b"not json"[..], br#"{"type":"warp"}"#, br#"{"type":"step","actions":[0,0]}"#, br#"{"type":"error","message":"x"}"#] {
            assert!(matches!(s.handle(p).0, Message::Error { .. }));
        }
    }

    #[test]
    fn frames_round_trip_and_oversize_is_skipped() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        buf.extend_from_slice(&((MAX_FRAME + 1) as u32).to_le_bytes());
        buf.extend(std::iter::repeat_n(0u8, MAX_FRAME + 1));
        write_frame(&mut buf, b"z").unwrap();
        let mut r = &buf[..];
        assert!(matches!(read_frame(&mut r).unwrap(), Frame::Payload(p) if p == b"abc"));
        assert!(matches!(read_frame(&mut r).unwrap(), Frame::Oversize(n) if n == MAX_FRAME + 1));
        assert!(matches!(read_frame(&mut r).unwrap(), Frame::Payload(p) if p == b"z"));
        assert!(matches!(read_frame(&mut r).unwrap(), Frame::Eof));
    }
}
