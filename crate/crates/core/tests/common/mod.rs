//! Minimal HTTP/1.1 stub standing in for the classifier service.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

pub enum Reply {
    Json(u16, String),
    /// Hold the connection open without answering, then drop it.
    Hang(Duration),
}

impl Reply {
    pub fn answer(text: &str) -> Self {
        Reply::Json(200, serde_json::json!({ "answer": text }).to_string())
    }
}

type Handler = dyn Fn(usize, &serde_json::Value) -> Reply + Send + Sync;

pub struct StubServer {
    pub base_url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<serde_json::Value>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    accept: Option<JoinHandle<()>>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, serde_json::Value)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    Some((path, serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null)))
}

fn reason(code: u16) -> &'static str {
    match code {
        200 => "OK",
        404 => "Not Found",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &serde_json::Value) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let accept = {
            let (hits, requests, stop) = (hits.clone(), requests.clone(), stop.clone());
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(mut stream) = conn else { continue };
                    let (hits, requests, handler) = (hits.clone(), requests.clone(), handler.clone());
                    std::thread::spawn(move || {
                        let Some((path, body)) = read_request(&mut stream) else { return };
                        let n = hits.fetch_add(1, Ordering::SeqCst);
                        requests.lock().unwrap().push(body.clone());
                        let reply = if path == "/classify" {
                            handler(n, &body)
                        } else {
                            Reply::Json(404, "{}".into())
                        };
                        match reply {
                            Reply::Json(code, text) => {
                                let head = format!(
                                    "HTTP/1.1 {code} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                                    reason(code),
                                    text.len()
                                );
                                let _ = stream.write_all(head.as_bytes());
                                let _ = stream.write_all(text.as_bytes());
                                let _ = stream.flush();
                            }
                            Reply::Hang(d) => std::thread::sleep(d),
                        }
                    });
                }
            })
        };
        Self {
            base_url: format!("http://{addr}"),
            hits,
            requests,
            stop,
            addr,
            accept: Some(accept),
        }
    }

    /// Requests received on any path.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<serde_json::Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// A loopback URL with nothing listening on it.
pub fn dead_endpoint() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}
