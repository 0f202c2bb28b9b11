//! Loopback scoring service used by the remote-backend tests.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

#[derive(Clone, Debug)]
pub enum Mode {
    /// Returns `logits` for every request.
    Fixed(Vec<f64>),
    /// Returns the first `n` logits only.
    Short(usize),
    /// Declares a long body and closes early.
    Truncated,
    /// Replies 503 to the first `n` score requests, then behaves as `Fixed`.
    FailFirst(usize, Vec<f64>),
}

pub struct Fixture {
    pub url: String,
    pub score_requests: Arc<AtomicUsize>,
    pub last_body: Arc<std::sync::Mutex<String>>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Fixture {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn serve(vocab_size: usize, max_len: usize, mask_id: u32, mode: Mode) -> Fixture {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind loopback"));
    let url = format!("http://{}", server.server_addr().to_ip().expect("ip addr"));
    let count = Arc::new(AtomicUsize::new(0));
    let last = Arc::new(std::sync::Mutex::new(String::new()));
    let (srv, c, l) = (server.clone(), count.clone(), last.clone());
    let handle = std::thread::spawn(move || {
        for mut req in srv.incoming_requests() {
            let json = |s: String| {
                tiny_http::Response::from_string(s).with_header(
                    "Content-Type: application/json".parse::<tiny_http::Header>().unwrap(),
                )
            };
            if req.url() == "/handshake" {
                let body = format!(r#"{{"vocab_size":{vocab_size},"max_len":{max_len},"mask_id":{mask_id}}}"#);
                let _ = req.respond(json(body));
                continue;
            }
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            *l.lock().unwrap() = body;
            let n = c.fetch_add(1, Ordering::SeqCst);
            let logits_json = |v: &[f64]| serde_json::json!({ "logits": v }).to_string();
            match &mode {
                Mode::Fixed(v) => {
                    let _ = req.respond(json(logits_json(v)));
                }
                Mode::Short(k) => {
                    let _ = req.respond(json(logits_json(&vec![0.5; *k])));
                }
                Mode::Truncated => {
                    let full = logits_json(&vec![0.25; vocab_size]);
                    let cut = full[..full.len() / 2].to_string();
                    let resp = tiny_http::Response::new(
                        200.into(),
                        vec!["Content-Type: application/json".parse::<tiny_http::Header>().unwrap()],
                        std::io::Cursor::new(cut.into_bytes()),
                        Some(full.len()),
                        None,
                    );
                    let _ = req.respond(resp);
                }
                Mode::FailFirst(k, v) => {
                    if n < *k {
                        let _ = req.respond(tiny_http::Response::from_string("busy").with_status_code(503));
                    } else {
                        let _ = req.respond(json(logits_json(v)));
                    }
                }
            }
        }
    });
    Fixture {
        url,
        score_requests: count,
        last_body: last,
        server,
        handle: Some(handle),
    }
}
