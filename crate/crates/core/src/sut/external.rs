//! Client for SUTs running in a separate process that speaks newline-delimited
//! JSON on stdin/stdout:
//!
//! ```text
//! {"op":"info"}                        -> {"k":K,"h":H,"w":W,"c":C}
//! {"op":"predict","images":[[...],..]} -> {"probs":[[...],..]}
//! ```
//!
//! Any `{"error": "..."}` reply fails the whole request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::sut::{Classifier, ProbVector, SutInfo};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const PREDICT_TIMEOUT: Duration = Duration::from_secs(120);

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Connection {
    fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty SUT command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot launch {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Connection { child, stdin, lines })
    }

    fn request(&mut self, body: &Value, timeout: Duration) -> Result<Value> {
        let mut line = serde_json::to_string(body)?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Transport(format!("write to SUT failed: {e}")))?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Error::Transport(format!("read from SUT failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Transport(format!("SUT did not answer within {timeout:?}")))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Transport("SUT closed its output".into()))
            }
        };
        let value: Value = serde_json::from_str(&reply)
            .map_err(|e| Error::Transport(format!("invalid JSON from SUT ({e}): {reply}")))?;
        if let Some(err) = value.get("error") {
            return Err(Error::Transport(format!("SUT reported error: {err}")));
        }
        Ok(value)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Pool of adapter processes; each connection has one request in flight.
pub struct ExternalSut {
    pool: Vec<Mutex<Connection>>,
    next: AtomicUsize,
    info: SutInfo,
}

impl ExternalSut {
    pub fn connect(command: &[String], connections: usize, timeout: Duration) -> Result<Self> {
        let mut pool = Vec::new();
        let mut info = None;
        for _ in 0..connections.max(1) {
            let mut conn = Connection::spawn(command)?;
            let got = handshake(&mut conn, timeout)?;
            if info.is_some_and(|i| i != got) {
                return Err(Error::Transport("adapter processes disagree on their shape".into()));
            }
            info = Some(got);
            pool.push(Mutex::new(conn));
        }
        Ok(ExternalSut {
            pool,
            next: AtomicUsize::new(0),
            info: info.expect("at least one connection"),
        })
    }

    fn predict_batch(&self, conn: &mut Connection, images: &[Image]) -> Result<Vec<ProbVector>> {
        let payload: Vec<&[f64]> = images.iter().map(Image::pixels).collect();
        let reply = conn.request(&json!({"op": "predict", "images": payload}), PREDICT_TIMEOUT)?;
        let rows = reply
            .get("probs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Transport(format!("predict reply lacks probs: {reply}")))?;
        rows.iter()
            .map(|row| {
                let v: Vec<f64> = serde_json::from_value(row.clone())
                    .map_err(|e| Error::Transport(format!("bad probability row: {e}")))?;
                if v.len() != self.info.classes {
                    return Err(Error::Transport(format!(
                        "probability row has {} entries, expected {}",
                        v.len(),
                        self.info.classes
                    )));
                }
                ProbVector::new(v).map_err(|e| Error::Transport(format!("invalid probabilities: {e}")))
            })
            .collect()
    }
}

fn handshake(conn: &mut Connection, timeout: Duration) -> Result<SutInfo> {
    let reply = conn.request(&json!({"op": "info"}), timeout)?;
    serde_json::from_value(reply.clone())
        .map_err(|e| Error::Transport(format!("malformed info reply {reply}: {e}")))
}

/// Launches the adapter once, asks for its shape and shuts it down.
pub fn external_handshake(command: &[String], timeout: Duration) -> Result<SutInfo> {
    let mut conn = Connection::spawn(command)?;
    handshake(&mut conn, timeout)
}

impl Classifier for ExternalSut {
    fn info(&self) -> SutInfo {
        self.info
    }

    fn classify(&self, images: &[Image]) -> Result<Vec<ProbVector>> {
        let start = self.next.fetch_add(1, Ordering::Relaxed);
        for offset in 0..self.pool.len() {
            if let Ok(mut conn) = self.pool[(start + offset) % self.pool.len()].try_lock() {
                return self.predict_batch(&mut conn, images);
            }
        }
        let mut conn = self.pool[start % self.pool.len()]
            .lock()
            .map_err(|_| Error::Transport("connection poisoned".into()))?;
        self.predict_batch(&mut conn, images)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn dead_endpoint_is_a_transport_error() {
        let err = external_handshake(&sh("exit 0"), Duration::from_secs(2)).unwrap_err();
        assert!(matches!(err, Error::Transport(_)), "{err}");
        let err = external_handshake(&["/nonexistent/adapter".to_string()], Duration::from_secs(2)).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
    }

    #[test]
    fn silent_endpoint_times_out() {
        let start = std::time::Instant::now();
        let err = external_handshake(&sh("sleep 5"), Duration::from_millis(200)).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn info_reply_is_parsed() {
        let info = external_handshake(
            &sh(r#"read line; echo '{"k":5,"h":32,"w":32,"c":1}'"#),
            Duration::from_secs(5),
        )
        .unwrap();
        assert_eq!(info, SutInfo { classes: 5, height: 32, width: 32, channels: 1 });
    }
}
