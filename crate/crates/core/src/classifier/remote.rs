//! HTTP client for an external pairwise-affiliation service.
//!
//! Wire protocol: `POST {base_url}/classify` with
//! `{"rgb_b64", "depth_b64", "prompt", "pair_id"}` (crops PNG-encoded, then
//! base64), answered by `200 {"answer": "..."}`. Non-200 responses and
//! transport failures are retried with jittered exponential backoff.

use std::io::Cursor;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{parse_answer_strict, ClassifyError, Judgment, PairClassifier, PairInput, PairQuery};

pub const ENDPOINT_ENV_VAR: &str = "MINGLE_CLASSIFIER_URL";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEndpoint {
    pub base_url: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_inflight: usize,
    /// First retry delay; doubles on every further retry.
    pub backoff_base: Duration,
}

impl ClassifierEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            max_inflight: 4,
            backoff_base: Duration::from_millis(250),
        }
    }

    /// Endpoint named by `MINGLE_CLASSIFIER_URL`, if set and non-empty.
    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV_VAR)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .map(Self::new)
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let url = reqwest::Url::parse(&self.base_url)
            .map_err(|e| ClassifyError::Config(format!("base_url '{}': {e}", self.base_url)))?;
        if url.scheme() != "http" {
            return Err(ClassifyError::Config(format!(
                "base_url '{}': only http:// endpoints are supported",
                self.base_url
            )));
        }
        if self.timeout.is_zero() {
            return Err(ClassifyError::Config("timeout must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(ClassifyError::Config("max_inflight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn classify_url(&self) -> String {
        format!("{}/classify", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ClassifyRequest {
    pub rgb_b64: String,
    pub depth_b64: String,
    pub prompt: String,
    pub pair_id: String,
}

#[derive(Debug, Deserialize)]
struct ClassifyResponse {
    answer: String,
}

pub fn encode_png_base64(img: &RgbImage) -> Result<String, ClassifyError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| ClassifyError::Backend(format!("PNG encoding failed: {e}")))?;
    Ok(BASE64.encode(buf.into_inner()))
}

/// Counting semaphore bounding concurrent requests across all callers.
struct Inflight {
    max: usize,
    count: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Inflight);

impl Inflight {
    fn new(max: usize) -> Self {
        Self {
            max,
            count: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    endpoint: ClassifierEndpoint,
    client: reqwest::blocking::Client,
    inflight: Inflight,
    jitter: Mutex<ChaCha8Rng>,
    unparsed: AtomicUsize,
}

impl RemoteBackend {
    pub fn new(endpoint: ClassifierEndpoint, seed: u64) -> Result<Self, ClassifyError> {
        endpoint.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| ClassifyError::Config(e.to_string()))?;
        Ok(Self {
            inflight: Inflight::new(endpoint.max_inflight),
            endpoint,
            client,
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            unparsed: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &ClassifierEndpoint {
        &self.endpoint
    }

    /// Number of answers that matched none of yes / no / not sure.
    pub fn unparsed_answers(&self) -> usize {
        self.unparsed.load(Ordering::Relaxed)
    }

    fn backoff_delay(&self, retry: u32) -> Duration {
        let factor: f64 = self.jitter.lock().unwrap().gen_range(0.5..1.5);
        self.endpoint
            .backoff_base
            .mul_f64(2f64.powi(retry.min(30) as i32) * factor)
    }

    pub fn send(&self, query: &PairQuery) -> Result<Judgment, ClassifyError> {
        let request = ClassifyRequest {
            rgb_b64: encode_png_base64(&query.rgb_crop)?,
            depth_b64: encode_png_base64(&query.depth_crop)?,
            prompt: query.prompt.clone(),
            pair_id: query.pair_id(),
        };
        let body = serde_json::to_vec(&request).map_err(|e| ClassifyError::Backend(e.to_string()))?;
        let url = self.endpoint.classify_url();
        let attempts = self.endpoint.max_retries.saturating_add(1);
        let mut last_error = String::new();

        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.backoff_delay(attempt - 1);
                debug!("retrying {} in {:?} ({last_error})", request.pair_id, delay);
                std::thread::sleep(delay);
            }
            let _permit = self.inflight.acquire();
            let resp = self
                .client
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send();
            let resp = match resp {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            if resp.status() != reqwest::StatusCode::OK {
                last_error = format!("HTTP {}", resp.status());
                continue;
            }
            let text = match resp.text() {
                Ok(t) => t,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let parsed: ClassifyResponse = serde_json::from_str(&text)
                .map_err(|e| ClassifyError::Backend(format!("malformed response {text:?}: {e}")))?;
            return Ok(match parse_answer_strict(&parsed.answer) {
                Some(j) => j,
                None => {
                    self.unparsed.fetch_add(1, Ordering::Relaxed);
                    warn!("{}: unrecognised answer {:?}; using not sure", request.pair_id, parsed.answer);
                    Judgment::NotSure
                }
            });
        }
        Err(ClassifyError::RemoteUnavailable { attempts, last_error })
    }
}

impl PairClassifier for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn needs_query(&self) -> bool {
        true
    }

    fn max_inflight(&self) -> usize {
        self.endpoint.max_inflight
    }

    fn classify(&self, input: &PairInput<'_>) -> Result<Judgment, ClassifyError> {
        let query = input
            .query
            .ok_or_else(|| ClassifyError::Backend("remote backend requires a rendered pair query".into()))?;
        self.send(query)
    }
}
