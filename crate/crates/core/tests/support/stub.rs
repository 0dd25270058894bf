//! Minimal HTTP/1.1 server for exercising the remote oracle offline.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Clone, Debug)]
pub struct Captured {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).expect("request body is JSON")
    }

    /// Content of the last chat message.
    pub fn prompt(&self) -> String {
        let v = self.json();
        let msgs = v["messages"].as_array().unwrap();
        msgs.last().unwrap()["content"].as_str().unwrap().to_string()
    }
}

type Responder = dyn Fn(usize, &Captured) -> (u16, String) + Send + Sync;

pub struct Stub {
    pub url: String,
    requests: Arc<Mutex<Vec<Captured>>>,
    pub in_flight_peak: Arc<AtomicUsize>,
}

/// Chat-completions reply body carrying `content`.
pub fn chat(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn read_request(stream: &mut TcpStream) -> Option<Captured> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Captured {
        method,
        path,
        headers,
        body,
    })
}

impl Stub {
    /// Serves every connection on its own thread. `respond` gets the
    /// zero-based request index.
    pub fn start(respond: impl Fn(usize, &Captured) -> (u16, String) + Send + Sync + 'static) -> Stub {
        Self::start_with_delay(respond, 0)
    }

    pub fn start_with_delay(
        respond: impl Fn(usize, &Captured) -> (u16, String) + Send + Sync + 'static,
        delay_ms: u64,
    ) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<Captured>>> = Arc::default();
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let respond: Arc<Responder> = Arc::new(respond);
        {
            let requests = requests.clone();
            let peak = peak.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(mut stream) = stream else { continue };
                    let requests = requests.clone();
                    let respond = respond.clone();
                    let in_flight = in_flight.clone();
                    let peak = peak.clone();
                    thread::spawn(move || {
                        let Some(req) = read_request(&mut stream) else {
                            return;
                        };
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let index = {
                            let mut all = requests.lock().unwrap();
                            all.push(req.clone());
                            all.len() - 1
                        };
                        if delay_ms > 0 {
                            thread::sleep(std::time::Duration::from_millis(delay_ms));
                        }
                        let (status, body) = respond(index, &req);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let head = format!(
                            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                            body.len()
                        );
                        let _ = stream.write_all(head.as_bytes());
                        let _ = stream.write_all(body.as_bytes());
                        let _ = stream.flush();
                    });
                }
            });
        }
        Stub {
            url,
            requests,
            in_flight_peak: peak,
        }
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}
