//! Sentence-embedding providers for the semantic metric.
//!
//! [`StubProvider`] is a deterministic, dependency-free stand-in.
//! [`SidecarProvider`] talks to an external embedding server speaking
//! newline-delimited JSON, either over TCP or over a child process's
//! stdin/stdout:
//!
//! ```text
//! -> {"id":1,"texts":["a man","male"]}
//! <- {"id":1,"dim":384,"vectors":[[...],[...]]}
//! <- {"id":1,"error":"..."}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> String;

    /// One vector per input text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Cosine similarity. Two zero vectors are identical (1.0); a zero vector
/// against anything else scores 0.0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na * nb)).clamp(-1.0, 1.0),
    }
}

pub const STUB_DIM: usize = 64;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "is", "are", "was", "were", "it", "its", "this", "that", "in", "on", "at", "to", "and",
    "by", "be",
];

/// Small synonym table so that trivially equivalent answers share a token.
const CANONICAL: &[(&str, &str)] = &[
    ("man", "male"),
    ("men", "male"),
    ("boy", "male"),
    ("gentleman", "male"),
    ("woman", "female"),
    ("women", "female"),
    ("girl", "female"),
    ("lady", "female"),
    ("meter", "metre"),
    ("meters", "metre"),
    ("metres", "metre"),
    ("m", "metre"),
    ("kilograms", "kilogram"),
    ("kg", "kilogram"),
    ("years", "year"),
    ("kcal", "kilocalorie"),
    ("kilocalories", "kilocalorie"),
    ("calories", "kilocalorie"),
];

/// Hashed bag-of-words vectors: every non-stopword token, after the synonym
/// table, adds ±1 to one of 64 coordinates chosen by SHA-256; the sum is
/// L2-normalized. The empty bag maps to the zero vector.
#[derive(Debug, Clone, Default)]
pub struct StubProvider;

impl StubProvider {
    pub fn tokens(text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
            .map(|t| {
                CANONICAL
                    .iter()
                    .find(|(from, _)| *from == t)
                    .map_or(t, |(_, to)| to)
                    .to_string()
            })
            .collect()
    }

    pub fn vector(text: &str) -> Vec<f64> {
        let mut v = vec![0.0; STUB_DIM];
        for tok in Self::tokens(text) {
            let digest = Sha256::digest(tok.as_bytes());
            let idx = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % STUB_DIM;
            v[idx] += if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for StubProvider {
    fn name(&self) -> String {
        "stub".into()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| Self::vector(t)).collect())
    }
}

/// Where to reach an embedding server: `tcp://host:port` (or bare
/// `host:port`), or `cmd:<program> <args...>` to spawn one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SidecarAddress {
    Tcp(String),
    Command(Vec<String>),
}

impl FromStr for SidecarAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::Config("sidecar command is empty".into()));
            }
            return Ok(SidecarAddress::Command(argv));
        }
        let addr = s.strip_prefix("tcp://").unwrap_or(s);
        if addr.rsplit_once(':').is_none_or(|(h, p)| h.is_empty() || p.parse::<u16>().is_err()) {
            return Err(Error::Config(format!("sidecar address {s:?} is not host:port or cmd:...")));
        }
        Ok(SidecarAddress::Tcp(addr.to_string()))
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    vectors: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    next_id: u64,
}

pub struct SidecarProvider {
    address: SidecarAddress,
    batch_size: usize,
    conn: Mutex<Connection>,
}

pub const DEFAULT_SIDECAR_TIMEOUT: Duration = Duration::from_secs(60);

impl SidecarProvider {
    pub fn connect(address: SidecarAddress, timeout: Duration) -> Result<Self> {
        let conn = match &address {
            SidecarAddress::Tcp(addr) => {
                let target = addr
                    .to_socket_addrs()
                    .map_err(|e| Error::Transport(format!("resolving {addr}: {e}")))?
                    .next()
                    .ok_or_else(|| Error::Transport(format!("{addr} resolves to nothing")))?;
                let stream = TcpStream::connect_timeout(&target, timeout)
                    .map_err(|e| Error::Transport(format!("connecting to {addr}: {e}")))?;
                stream
                    .set_read_timeout(Some(timeout))
                    .map_err(|e| Error::Transport(e.to_string()))?;
                let read = stream.try_clone().map_err(|e| Error::Transport(e.to_string()))?;
                Connection {
                    reader: Box::new(BufReader::new(read)),
                    writer: Box::new(stream),
                    child: None,
                    next_id: 1,
                }
            }
            SidecarAddress::Command(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Transport(format!("spawning {}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                    next_id: 1,
                }
            }
        };
        Ok(Self {
            address,
            batch_size: 256,
            conn: Mutex::new(conn),
        })
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    fn request(conn: &mut Connection, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let id = conn.next_id;
        conn.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, texts })?;
        line.push('\n');
        let io = |e: std::io::Error| Error::Transport(format!("sidecar I/O: {e}"));
        conn.writer.write_all(line.as_bytes()).map_err(io)?;
        conn.writer.flush().map_err(io)?;
        let mut reply = String::new();
        if conn.reader.read_line(&mut reply).map_err(io)? == 0 {
            return Err(Error::Transport("sidecar closed the connection".into()));
        }
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| Error::Transport(format!("malformed sidecar response: {e}")))?;
        if resp.id != id {
            return Err(Error::Transport(format!("sidecar answered request {} to request {id}", resp.id)));
        }
        if let Some(err) = resp.error {
            return Err(Error::Transport(format!("sidecar error: {err}")));
        }
        let vectors = resp
            .vectors
            .ok_or_else(|| Error::Transport("sidecar response has no vectors".into()))?;
        if vectors.len() != texts.len() {
            return Err(Error::Transport(format!(
                "sidecar returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        if let Some(dim) = resp.dim {
            if vectors.iter().any(|v| v.len() != dim) {
                return Err(Error::Transport(format!("sidecar vectors do not all have dimension {dim}")));
            }
        }
        Ok(vectors)
    }
}

impl EmbeddingProvider for SidecarProvider {
    fn name(&self) -> String {
        match &self.address {
            SidecarAddress::Tcp(a) => format!("sidecar(tcp://{a})"),
            SidecarAddress::Command(argv) => format!("sidecar(cmd:{})", argv.join(" ")),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut conn = self.conn.lock().map_err(|_| Error::Transport("sidecar connection poisoned".into()))?;
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(Self::request(&mut conn, chunk)?);
        }
        Ok(out)
    }
}

impl Drop for SidecarProvider {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(mut child) = conn.child.take() {
                // closing stdin asks the server to exit
                conn.writer = Box::new(std::io::sink());
                if !matches!(child.try_wait(), Ok(Some(_))) {
                    std::thread::sleep(Duration::from_millis(50));
                    if !matches!(child.try_wait(), Ok(Some(_))) {
                        let _ = child.kill();
                    }
                }
                let _ = child.wait();
            }
        }
    }
}
