//! Minimal in-process HTTP/1.1 server used as the application stand-in in
//! tests and synthetic campaigns. Answers every request with a small JSON
//! document carrying a globally unique `id`, which is enough to exercise
//! capture chains.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{Method, MethodCounts};

#[derive(Debug, Clone, Default)]
pub struct StubOptions {
    /// Respond 503 to everything until this much time has passed.
    pub ready_after: Duration,
    /// Force a status for requests matching (method, path prefix).
    pub status_overrides: Vec<(Method, String, u16)>,
}

#[derive(Default)]
struct Shared {
    get: AtomicU64,
    post: AtomicU64,
    put: AtomicU64,
    delete: AtomicU64,
    ids: AtomicU64,
    paths: Mutex<Vec<String>>,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start(options: StubOptions) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::default());
        let stop = Arc::new(AtomicBool::new(false));
        let started = Instant::now();

        let shared_accept = Arc::clone(&shared);
        let stop_accept = Arc::clone(&stop);
        let accept_thread = std::thread::Builder::new()
            .name("stub-server".into())
            .spawn(move || {
                for stream in listener.incoming() {
                    if stop_accept.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let shared = Arc::clone(&shared_accept);
                    let options = options.clone();
                    std::thread::spawn(move || {
                        let _ = handle_connection(stream, &shared, &options, started);
                    });
                }
            })?;

        Ok(Self {
            addr,
            shared,
            stop,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn counts(&self) -> MethodCounts {
        MethodCounts {
            get: self.shared.get.load(Ordering::Relaxed),
            post: self.shared.post.load(Ordering::Relaxed),
            put: self.shared.put.load(Ordering::Relaxed),
            delete: self.shared.delete.load(Ordering::Relaxed),
        }
    }

    /// Paths of all requests seen so far, in arrival order.
    pub fn seen_paths(&self) -> Vec<String> {
        self.shared.paths.lock().expect("stub paths lock").clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    shared: &Shared,
    options: &StubOptions,
    started: Instant,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut stream = stream;

    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(()); // client closed
        }
        let mut parts = request_line.split_whitespace();
        let (Some(method), Some(path)) = (parts.next(), parts.next()) else {
            return Ok(());
        };
        let method = method.to_string();
        let path = path.to_string();

        let mut content_length = 0usize;
        let mut close_requested = false;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header)? == 0 {
                return Ok(());
            }
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            let lower = header.to_ascii_lowercase();
            if let Some(value) = lower.strip_prefix("content-length:") {
                content_length = value.trim().parse().unwrap_or(0);
            }
            if lower == "connection: close" {
                close_requested = true;
            }
        }
        if content_length > 0 {
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body)?;
        }

        let parsed_method = match method.as_str() {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            "PUT" => Some(Method::Put),
            "DELETE" => Some(Method::Delete),
            _ => None,
        };
        if let Some(m) = parsed_method {
            match m {
                Method::Get => shared.get.fetch_add(1, Ordering::Relaxed),
                Method::Post => shared.post.fetch_add(1, Ordering::Relaxed),
                Method::Put => shared.put.fetch_add(1, Ordering::Relaxed),
                Method::Delete => shared.delete.fetch_add(1, Ordering::Relaxed),
            };
        }
        shared.paths.lock().expect("stub paths lock").push(path.clone());

        let status = if started.elapsed() < options.ready_after {
            503
        } else {
            parsed_method
                .and_then(|m| {
                    options
                        .status_overrides
                        .iter()
                        .find(|(om, prefix, _)| *om == m && path.starts_with(prefix.as_str()))
                        .map(|(_, _, status)| *status)
                })
                .unwrap_or(200)
        };

        let id = shared.ids.fetch_add(1, Ordering::Relaxed) + 1;
        let body = format!("{{\"id\":{id},\"path\":\"{path}\"}}");
        let reason = match status {
            200 => "OK",
            404 => "Not Found",
            500 => "Internal Server Error",
            503 => "Service Unavailable",
            _ => "Status",
        };
        write!(
            stream,
            "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{body}",
            body.len()
        )?;
        stream.flush()?;

        if close_requested {
            return Ok(());
        }
    }
}
