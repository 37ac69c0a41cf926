//! Trainers: the external process that turns a control into `(score, cost)`.
//!
//! [`AnalyticOracle`] evaluates known score and cost curves with Gaussian
//! noise and is what the test suites drive. [`SubprocessOracle`] talks to any
//! program over newline-delimited JSON on its standard streams:
//!
//! ```text
//! > {"type":"hello","version":1,"dim":1,"params":["n_trees"]}
//! < {"type":"ready"}
//! > {"type":"eval","id":1,"u":[0.5],"params":{"n_trees":50}}
//! < {"type":"result","id":1,"score":0.93,"cost":0.31}
//! > {"type":"shutdown"}
//! ```
//!
//! `cost` may be omitted from a result, in which case the round-trip wall
//! time is used. A trainer may answer an eval with
//! `{"type":"error","id":n,"message":"..."}`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::basis::{eval_terms, BasisSet, ControlPoint};
use crate::belief::NoiseModel;
use crate::controller::{CostTransform, ProblemSpec, ScoreTransform};
use crate::error::{Error, Result};
use crate::rng::{label, StreamKey, StreamRng};

/// Wire protocol version spoken by this crate.
pub const PROTOCOL_VERSION: u32 = 1;
const STDERR_KEEP: usize = 64 * 1024;

/// A hyperparameter value handed to a trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
        }
    }
}

/// Named hyperparameters in control order; serialises as a JSON object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(pub Vec<(String, ParamValue)>);

impl Params {
    pub fn get(&self, name: &str) -> Option<ParamValue> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl Serialize for Params {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for Params {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Params;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of hyperparameter values")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> std::result::Result<Params, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, ParamValue>()? {
                    out.push((k, v));
                }
                Ok(Params(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// One line of the wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        version: u32,
        dim: usize,
        params: Vec<String>,
    },
    Ready {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<u32>,
    },
    Eval {
        id: u64,
        u: Vec<f64>,
        params: Params,
    },
    Result {
        id: u64,
        score: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cost: Option<f64>,
    },
    Error {
        id: u64,
        message: String,
    },
    Shutdown,
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialise")
    }

    pub fn parse(line: &str) -> Result<Message> {
        serde_json::from_str(line.trim()).map_err(|e| Error::Protocol {
            message: e.to_string(),
            line: line.to_string(),
        })
    }
}

/// Example session, `>` to the trainer and `<` from it.
pub fn protocol_transcript() -> String {
    let msgs = [
        (
            '>',
            Message::Hello {
                version: PROTOCOL_VERSION,
                dim: 1,
                params: vec!["n_trees".into()],
            },
        ),
        ('<', Message::Ready { version: None }),
        (
            '>',
            Message::Eval {
                id: 1,
                u: vec![0.5],
                params: Params(vec![("n_trees".into(), ParamValue::Int(50))]),
            },
        ),
        (
            '<',
            Message::Result {
                id: 1,
                score: 0.93,
                cost: Some(0.31),
            },
        ),
        (
            '>',
            Message::Eval {
                id: 2,
                u: vec![1.0],
                params: Params(vec![("n_trees".into(), ParamValue::Int(100))]),
            },
        ),
        (
            '<',
            Message::Result {
                id: 2,
                score: 0.97,
                cost: None,
            },
        ),
        ('>', Message::Shutdown),
    ];
    msgs.iter().map(|(d, m)| format!("{d} {}\n", m.to_line())).collect()
}

/// Where a reported cost came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostSource {
    Reported,
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub score_raw: f64,
    pub cost_raw: f64,
    pub wall_clock: f64,
    pub source: CostSource,
}

/// Anything that can train and validate a model at a control.
pub trait Trainer {
    fn evaluate(&mut self, u: &ControlPoint, params: &Params) -> Result<EvalResult>;

    fn shutdown(&mut self) -> Result<()> {
        Ok(())
    }
}

/// True score curve of an analytic oracle, in transformed units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreShape {
    /// `alpha . phi(u)`.
    Basis { coefficients: Vec<f64> },
    /// `top - gap * exp(-rate * mean(u))`.
    Saturating { top: f64, gap: f64, rate: f64 },
}

/// True cost curve of an analytic oracle, in transformed units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostShape {
    /// `beta . psi(u)`.
    Basis { coefficients: Vec<f64> },
    /// `base + slope * mean(u)`.
    Linear { base: f64, slope: f64 },
}

fn mean(u: &[f64]) -> f64 {
    u.iter().sum::<f64>() / u.len() as f64
}

impl ScoreShape {
    fn eval(&self, basis: &BasisSet, u: &[f64]) -> f64 {
        match self {
            ScoreShape::Basis { coefficients } => eval_terms(basis.score_terms(), u)
                .iter()
                .zip(coefficients)
                .map(|(a, b)| a * b)
                .sum(),
            ScoreShape::Saturating { top, gap, rate } => top - gap * (-rate * mean(u)).exp(),
        }
    }
}

impl CostShape {
    fn eval(&self, basis: &BasisSet, u: &[f64]) -> f64 {
        match self {
            CostShape::Basis { coefficients } => eval_terms(basis.cost_terms(), u)
                .iter()
                .zip(coefficients)
                .map(|(a, b)| a * b)
                .sum(),
            CostShape::Linear { base, slope } => base + slope * mean(u),
        }
    }
}

/// Noisy evaluations of known curves. Scores and costs are generated in
/// transformed units (cost truncated at zero) and returned in raw units.
pub struct AnalyticOracle {
    basis: BasisSet,
    score: ScoreShape,
    cost: CostShape,
    sigma_h: f64,
    sigma_t: f64,
    score_tf: ScoreTransform,
    cost_tf: CostTransform,
    rng: StreamRng,
}

impl AnalyticOracle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        basis: BasisSet,
        score: ScoreShape,
        cost: CostShape,
        sigma_h: f64,
        sigma_t: f64,
        score_tf: ScoreTransform,
        cost_tf: CostTransform,
        key: StreamKey,
    ) -> Result<Self> {
        if !(sigma_h >= 0.0 && sigma_t >= 0.0 && sigma_h.is_finite() && sigma_t.is_finite()) {
            return Err(Error::invalid("oracle noise levels must be finite and non-negative"));
        }
        if let ScoreShape::Basis { coefficients } = &score {
            if coefficients.len() != basis.n_score() {
                return Err(Error::invalid("score coefficients do not match the score basis"));
            }
        }
        if let CostShape::Basis { coefficients } = &cost {
            if coefficients.len() != basis.n_cost() {
                return Err(Error::invalid("cost coefficients do not match the cost basis"));
            }
        }
        score_tf.validate()?;
        cost_tf.validate()?;
        Ok(AnalyticOracle {
            basis,
            score,
            cost,
            sigma_h,
            sigma_t,
            score_tf,
            cost_tf,
            rng: key.rng(),
        })
    }

    /// Noise-free `(h, t)` at `u` in transformed units.
    pub fn truth(&self, u: &ControlPoint) -> (f64, f64) {
        (
            self.score.eval(&self.basis, u.coords()),
            self.cost.eval(&self.basis, u.coords()).max(0.0),
        )
    }
}

impl Trainer for AnalyticOracle {
    fn evaluate(&mut self, u: &ControlPoint, _params: &Params) -> Result<EvalResult> {
        if u.dim() != self.basis.dim_control() {
            return Err(Error::invalid("control dimension does not match the oracle"));
        }
        let started = Instant::now();
        let zh: f64 = self.rng.sample(StandardNormal);
        let zt: f64 = self.rng.sample(StandardNormal);
        let h = self.score.eval(&self.basis, u.coords()) + self.sigma_h * zh;
        let t = (self.cost.eval(&self.basis, u.coords()) + self.sigma_t * zt).max(0.0);
        Ok(EvalResult {
            score_raw: self.score_tf.invert(h),
            cost_raw: self.cost_tf.invert(t),
            wall_clock: started.elapsed().as_secs_f64(),
            source: CostSource::Reported,
        })
    }
}

/// Serialisable description of a trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainerConfig {
    Analytic {
        score: ScoreShape,
        cost: CostShape,
        /// Defaults to the problem's noise model.
        #[serde(default)]
        noise: Option<NoiseModel>,
    },
    Subprocess(SubprocessConfig),
}

impl TrainerConfig {
    /// Start the trainer for `spec`. Analytic noise is drawn from `seed / TRAINER`.
    pub fn start(&self, spec: &ProblemSpec, seed: u64) -> Result<Box<dyn Trainer>> {
        match self {
            TrainerConfig::Analytic { score, cost, noise } => {
                let nm = noise.unwrap_or(spec.noise);
                Ok(Box::new(AnalyticOracle::new(
                    spec.basis.clone(),
                    score.clone(),
                    cost.clone(),
                    nm.sigma_h,
                    nm.sigma_t,
                    spec.score_transform,
                    spec.cost_transform,
                    StreamKey::new(seed).child(label::TRAINER),
                )?))
            }
            TrainerConfig::Subprocess(cfg) => Ok(Box::new(SubprocessOracle::start(
                cfg.clone(),
                spec.dim(),
                spec.param_names(),
            )?)),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, TrainerConfig::Analytic { .. })
    }
}

fn default_timeout() -> f64 {
    3600.0
}

fn default_startup() -> f64 {
    30.0
}

fn default_retries() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubprocessConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default)]
    pub cwd: Option<PathBuf>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// Per-evaluation reply timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_startup")]
    pub startup_timeout_secs: f64,
    /// Extra attempts after a timed-out evaluation.
    #[serde(default = "default_retries")]
    pub retries: usize,
}

impl SubprocessConfig {
    pub fn new(command: Vec<String>) -> Self {
        SubprocessConfig {
            command,
            cwd: None,
            env: BTreeMap::new(),
            timeout_secs: default_timeout(),
            startup_timeout_secs: default_startup(),
            retries: default_retries(),
        }
    }
}

/// A running trainer process after a successful handshake.
pub struct SubprocessOracle {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Option<String>>,
    stderr: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
    next_id: u64,
    cfg: SubprocessConfig,
    closed: bool,
}

fn secs(v: f64) -> Duration {
    Duration::from_secs_f64(v.max(0.0))
}

impl SubprocessOracle {
    /// Spawn the trainer and complete the hello/ready exchange.
    pub fn start(cfg: SubprocessConfig, dim: usize, param_names: Vec<String>) -> Result<Self> {
        let (prog, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| Error::Config("trainer command is empty".into()))?;
        let mut cmd = Command::new(prog);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .envs(&cfg.env);
        if let Some(dir) = &cfg.cwd {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| Error::StartupFailure {
            message: format!("cannot spawn {prog:?}: {e}"),
            stderr: String::new(),
        })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Some(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(None);
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let stderr_thread = std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap();
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_KEEP {
                    let mut cut = s.len() - STDERR_KEEP;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
        });
        let mut oracle = SubprocessOracle {
            child,
            stdin,
            lines: rx,
            stderr,
            stderr_thread: Some(stderr_thread),
            next_id: 1,
            cfg,
            closed: false,
        };
        oracle.handshake(dim, param_names)?;
        Ok(oracle)
    }

    fn stderr_text(&mut self) -> String {
        // Give the child a moment to flush and exit so its last words are kept.
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if self.stderr_thread.as_ref().is_none_or(|h| h.is_finished()) {
                break;
            }
            if matches!(self.child.try_wait(), Ok(Some(_))) && self.stderr_thread.as_ref().is_none_or(|h| h.is_finished()) {
                break;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        self.stderr.lock().unwrap().clone()
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        let line = msg.to_line();
        let stdin = self.stdin.as_mut().ok_or_else(|| Error::TrainerFailure {
            message: "trainer input already closed".into(),
            stderr: String::new(),
        })?;
        let res = writeln!(stdin, "{line}").and_then(|_| stdin.flush());
        if let Err(e) = res {
            let stderr = self.stderr_text();
            return Err(Error::TrainerFailure {
                message: format!("cannot write to trainer: {e}"),
                stderr,
            });
        }
        Ok(())
    }

    fn handshake(&mut self, dim: usize, params: Vec<String>) -> Result<()> {
        let hello = Message::Hello {
            version: PROTOCOL_VERSION,
            dim,
            params,
        };
        if let Err(e) = self.send(&hello) {
            let stderr = self.stderr_text();
            return Err(Error::StartupFailure {
                message: e.to_string(),
                stderr,
            });
        }
        let timeout = secs(self.cfg.startup_timeout_secs);
        let fail = |this: &mut Self, message: String| {
            let stderr = this.stderr_text();
            Error::StartupFailure { message, stderr }
        };
        match self.lines.recv_timeout(timeout) {
            Ok(Some(line)) => match Message::parse(&line) {
                Ok(Message::Ready { version: None }) => Ok(()),
                Ok(Message::Ready { version: Some(v) }) | Ok(Message::Hello { version: v, .. }) if v != PROTOCOL_VERSION => {
                    Err(fail(
                        self,
                        format!("trainer speaks protocol version {v}, controller speaks version {PROTOCOL_VERSION}"),
                    ))
                }
                Ok(Message::Ready { .. }) => Ok(()),
                Ok(other) => Err(fail(self, format!("expected ready, got {}", other.to_line()))),
                Err(e) => Err(fail(self, e.to_string())),
            },
            Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                Err(fail(self, "trainer exited before sending ready".into()))
            }
            Err(RecvTimeoutError::Timeout) => Err(fail(
                self,
                format!("no ready within {} s", self.cfg.startup_timeout_secs),
            )),
        }
    }

    fn wait_for(&mut self, id: u64, deadline: Instant) -> Result<Option<(f64, Option<f64>)>> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Some(line)) => match Message::parse(&line)? {
                    Message::Result { id: rid, score, cost } if rid == id => return Ok(Some((score, cost))),
                    Message::Error { id: rid, message } if rid == id => {
                        let stderr = self.stderr_text();
                        return Err(Error::TrainerFailure {
                            message: format!("trainer reported: {message}"),
                            stderr,
                        });
                    }
                    // A late answer to a request that already timed out.
                    Message::Result { id: rid, .. } | Message::Error { id: rid, .. } if rid < id => continue,
                    other => {
                        return Err(Error::Protocol {
                            message: format!("unexpected message while waiting for id {id}"),
                            line: other.to_line(),
                        })
                    }
                },
                Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                    let stderr = self.stderr_text();
                    return Err(Error::TrainerFailure {
                        message: "trainer exited".into(),
                        stderr,
                    });
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
            }
        }
    }
}

impl Trainer for SubprocessOracle {
    fn evaluate(&mut self, u: &ControlPoint, params: &Params) -> Result<EvalResult> {
        for attempt in 0..=self.cfg.retries {
            let id = self.next_id;
            self.next_id += 1;
            let started = Instant::now();
            self.send(&Message::Eval {
                id,
                u: u.coords().to_vec(),
                params: params.clone(),
            })?;
            let deadline = started + secs(self.cfg.timeout_secs);
            match self.wait_for(id, deadline)? {
                Some((score, cost)) => {
                    let wall = started.elapsed().as_secs_f64();
                    return Ok(EvalResult {
                        score_raw: score,
                        cost_raw: cost.unwrap_or(wall),
                        wall_clock: wall,
                        source: if cost.is_some() {
                            CostSource::Reported
                        } else {
                            CostSource::Measured
                        },
                    });
                }
                None => log::warn!("evaluation {id} timed out (attempt {})", attempt + 1),
            }
        }
        let stderr = self.stderr_text();
        Err(Error::TrainerFailure {
            message: format!("no reply after {} attempt(s)", self.cfg.retries + 1),
            stderr,
        })
    }

    fn shutdown(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let _ = self.send(&Message::Shutdown);
        self.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        Ok(())
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_lines_are_exact() {
        let hello = Message::Hello {
            version: 1,
            dim: 2,
            params: vec!["r".into(), "batch".into()],
        };
        assert_eq!(hello.to_line(), r#"{"type":"hello","version":1,"dim":2,"params":["r","batch"]}"#);
        assert_eq!(Message::Ready { version: None }.to_line(), r#"{"type":"ready"}"#);
        let eval = Message::Eval {
            id: 3,
            u: vec![0.25, 1.0],
            params: Params(vec![("r".into(), ParamValue::Real(0.001)), ("batch".into(), ParamValue::Int(57))]),
        };
        assert_eq!(
            eval.to_line(),
            r#"{"type":"eval","id":3,"u":[0.25,1.0],"params":{"r":0.001,"batch":57}}"#
        );
        assert_eq!(Message::parse(&eval.to_line()).unwrap(), eval);
        assert_eq!(Message::Shutdown.to_line(), r#"{"type":"shutdown"}"#);
        let res = Message::parse(r#"{"type":"result","id":3,"score":0.5}"#).unwrap();
        assert_eq!(res, Message::Result { id: 3, score: 0.5, cost: None });
        let err = Message::parse("not json").unwrap_err();
        assert!(matches!(err, Error::Protocol { ref line, .. } if line == "not json"));
    }

    #[test]
    fn transcript_is_stable() {
        let t = protocol_transcript();
        assert!(t.starts_with("> {\"type\":\"hello\",\"version\":1,\"dim\":1,\"params\":[\"n_trees\"]}\n< {\"type\":\"ready\"}\n"));
        assert!(t.ends_with("> {\"type\":\"shutdown\"}\n"));
        for line in t.lines() {
            Message::parse(&line[2..]).unwrap();
        }
    }

    fn synthetic_tf() -> (ScoreTransform, CostTransform) {
        (
            ScoreTransform::Affine { lo: 0.5, hi: 1.0 },
            CostTransform::Affine { lo: 0.0, hi: 0.6 },
        )
    }

    #[test]
    fn analytic_constant_term() {
        let (s, c) = synthetic_tf();
        let mut o = AnalyticOracle::new(
            BasisSet::cubic_1d(),
            ScoreShape::Basis {
                coefficients: vec![0.4, 0.0, 0.0, 0.0],
            },
            CostShape::Linear { base: 0.1, slope: 0.0 },
            0.0,
            0.0,
            s,
            c,
            StreamKey::new(1),
        )
        .unwrap();
        let r = o.evaluate(&ControlPoint::scalar(0.5).unwrap(), &Params::default()).unwrap();
        assert!((s.apply(r.score_raw) - 0.4).abs() < 1e-12);
        assert!((c.apply(r.cost_raw) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn analytic_noise_level() {
        let (s, c) = synthetic_tf();
        let mut o = AnalyticOracle::new(
            BasisSet::cubic_1d(),
            ScoreShape::Saturating {
                top: 0.99,
                gap: 0.44,
                rate: 10.0,
            },
            CostShape::Linear { base: 0.05, slope: 0.75 },
            0.05,
            0.1,
            s,
            c,
            StreamKey::new(2),
        )
        .unwrap();
        let u = ControlPoint::scalar(0.3).unwrap();
        let hs: Vec<f64> = (0..10_000)
            .map(|_| s.apply(o.evaluate(&u, &Params::default()).unwrap().score_raw))
            .collect();
        let m = hs.iter().sum::<f64>() / hs.len() as f64;
        let sd = (hs.iter().map(|h| (h - m).powi(2)).sum::<f64>() / (hs.len() - 1) as f64).sqrt();
        assert!((sd - 0.05).abs() <= 0.05 * 0.05, "sd {sd}");
    }
}
