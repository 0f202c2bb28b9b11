//! Client for an external masked-LM scoring service.
//!
//! JSON over HTTP/1.1; see `docs/remote-protocol.md` for the byte layout.
//!
//! * `GET  {endpoint}/handshake` → `{"vocab_size":N,"max_len":L,"mask_id":M}`
//! * `POST {endpoint}/score` with `{"tokens":[..],"mask_index":i}` →
//!   `{"logits":[f64; N]}`

use super::{validate_input, LmBackend, LmError, TokenId};
use crate::mapping::MaskLogits;
use crate::template::RenderedInput;
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub vocab_size: usize,
    pub max_len: usize,
    pub mask_id: TokenId,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ScoreRequest {
    pub tokens: Vec<TokenId>,
    pub mask_index: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ScoreResponse {
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_attempts() -> usize {
    3
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_backoff_ms() -> u64 {
    100
}
fn default_in_flight() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(endpoint: &str) -> Self {
        RemoteConfig {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            max_attempts: default_attempts(),
            timeout_ms: default_timeout_ms(),
            backoff_ms: default_backoff_ms(),
            max_in_flight: default_in_flight(),
        }
    }
}

const MAX_BODY: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    handshake: Handshake,
}

impl RemoteBackend {
    /// Connects and performs the handshake.
    pub fn connect(config: RemoteConfig) -> Result<Self, LmError> {
        if config.max_attempts == 0 || config.max_in_flight == 0 {
            return Err(LmError::Config("max_attempts and max_in_flight must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut backend = RemoteBackend {
            config,
            agent,
            handshake: Handshake {
                vocab_size: 0,
                max_len: 0,
                mask_id: 0,
            },
        };
        let body = backend.request(|a, url| a.get(format!("{url}/handshake")).call())?;
        let hs: Handshake =
            serde_json::from_str(&body).map_err(|e| LmError::Protocol(format!("bad handshake: {e}")))?;
        if hs.vocab_size == 0 || hs.max_len == 0 || hs.mask_id as usize >= hs.vocab_size {
            return Err(LmError::Protocol(format!("inconsistent handshake {hs:?}")));
        }
        backend.handshake = hs;
        Ok(backend)
    }

    pub fn handshake(&self) -> Handshake {
        self.handshake
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Sends with retries on transport failure and 5xx; everything after
    /// a successful status line is a protocol matter.
    fn request(
        &self,
        send: impl Fn(&ureq::Agent, &str) -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<String, LmError> {
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms * (attempt as u64 - 1)));
            }
            match send(&self.agent, &self.config.endpoint) {
                Ok(mut resp) => {
                    let status = resp.status();
                    if status.is_server_error() {
                        last = format!("server returned {status}");
                        continue;
                    }
                    let body = resp
                        .body_mut()
                        .with_config()
                        .limit(MAX_BODY)
                        .read_to_string()
                        .map_err(|e| LmError::Protocol(format!("reading response body: {e}")))?;
                    if !status.is_success() {
                        return Err(LmError::Protocol(format!("server returned {status}: {body}")));
                    }
                    return Ok(body);
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(LmError::Network {
            attempts: self.config.max_attempts,
            message: last,
        })
    }

    pub fn remote_score(&self, input: &RenderedInput) -> Result<MaskLogits, LmError> {
        validate_input(input, self.handshake.vocab_size, self.handshake.max_len, self.handshake.mask_id)?;
        let body = serde_json::to_string(&ScoreRequest {
            tokens: input.token_ids.clone(),
            mask_index: input.mask_position,
        })
        .expect("request serializes");
        let text = self.request(|a, url| {
            a.post(format!("{url}/score"))
                .header("Content-Type", "application/json")
                .send(body.as_str())
        })?;
        let resp: ScoreResponse =
            serde_json::from_str(&text).map_err(|e| LmError::Protocol(format!("bad score response: {e}")))?;
        if resp.logits.len() != self.handshake.vocab_size {
            return Err(LmError::Protocol(format!(
                "received {} logits, handshake declared vocabulary {}",
                resp.logits.len(),
                self.handshake.vocab_size
            )));
        }
        Ok(MaskLogits::new(resp.logits))
    }
}

impl LmBackend for RemoteBackend {
    fn vocab_size(&self) -> usize {
        self.handshake.vocab_size
    }

    fn max_len(&self) -> usize {
        self.handshake.max_len
    }

    fn mask_id(&self) -> TokenId {
        self.handshake.mask_id
    }

    fn score(&self, input: &RenderedInput) -> Result<MaskLogits, LmError> {
        self.remote_score(input)
    }

    /// Up to `max_in_flight` concurrent requests; results keep input order.
    fn score_batch(&self, inputs: &[RenderedInput]) -> Result<Vec<MaskLogits>, LmError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.config.max_in_flight) {
            let results: Vec<Result<MaskLogits, LmError>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|i| s.spawn(move || self.remote_score(i))).collect();
                handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        Ok(out)
    }
}
