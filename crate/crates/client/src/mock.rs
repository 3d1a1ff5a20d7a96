//! Minimal in-process HTTP server for offline client tests.
//!
//! Serves `POST /v1/completions` from a user-supplied responder closure and
//! instruments concurrency so tests can assert the client's backpressure
//! contract. Fixture responses can come from JSON files via
//! [`crate::wire::load_response_fixture`].

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::wire::{CompletionRequest, CompletionResponse};

/// What the responder wants sent back for one request.
pub enum MockReply {
    Json(CompletionResponse),
    Status(u16, String),
    /// Sleep before answering; used to force request overlap.
    DelayedJson(Duration, CompletionResponse),
}

/// Request counters; `max_concurrent` is the high-water mark of handlers
/// running at once.
#[derive(Debug, Default)]
pub struct MockStats {
    pub hits: AtomicUsize,
    concurrent: AtomicUsize,
    pub max_concurrent: AtomicUsize,
}

pub type Responder = Arc<dyn Fn(&CompletionRequest, usize) -> MockReply + Send + Sync>;

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    pub stats: Arc<MockStats>,
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(responder: Responder) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(MockStats::default());
        let accept_thread = {
            let stop = Arc::clone(&stop);
            let stats = Arc::clone(&stats);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let responder = Arc::clone(&responder);
                    let stats = Arc::clone(&stats);
                    std::thread::spawn(move || handle_connection(stream, responder, stats));
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            accept_thread: Some(accept_thread),
            stats,
        })
    }

    /// Serves the same response for every request.
    pub fn with_fixed_response(response: CompletionResponse) -> std::io::Result<Self> {
        Self::start(Arc::new(move |_, _| MockReply::Json(response.clone())))
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.stats.hits.load(Ordering::SeqCst)
    }

    pub fn max_concurrent(&self) -> usize {
        self.stats.max_concurrent.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(stream: TcpStream, responder: Responder, stats: Arc<MockStats>) {
    let hit = stats.hits.fetch_add(1, Ordering::SeqCst);
    let now = stats.concurrent.fetch_add(1, Ordering::SeqCst) + 1;
    stats.max_concurrent.fetch_max(now, Ordering::SeqCst);
    let result = serve_one(&stream, &responder, hit);
    stats.concurrent.fetch_sub(1, Ordering::SeqCst);
    if let Err(e) = result {
        eprintln!("mock server: connection error: {e}");
    }
}

fn serve_one(
    stream: &TcpStream,
    responder: &Responder,
    hit: usize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let mut writer = stream.try_clone()?;
    if !request_line.starts_with("POST /v1/completions") {
        return write_response(&mut writer, 404, "{\"error\":\"not found\"}");
    }
    let request: CompletionRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return write_response(&mut writer, 400, &format!("{{\"error\":\"{e}\"}}"));
        }
    };
    match responder(&request, hit) {
        MockReply::Json(response) => {
            let body = serde_json::to_string(&response).expect("serializable response");
            write_response(&mut writer, 200, &body)
        }
        MockReply::DelayedJson(delay, response) => {
            std::thread::sleep(delay);
            let body = serde_json::to_string(&response).expect("serializable response");
            write_response(&mut writer, 200, &body)
        }
        MockReply::Status(code, body) => write_response(&mut writer, code, &body),
    }
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Mock",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
