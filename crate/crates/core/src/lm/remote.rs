//! HTTP client for an external scoring server.
//!
//! `POST {base}/v1/logprobs` with `{"fingerprint": u64, "prefixes": [[id, ...], ...]}`,
//! answered by `{"logprobs": [[f64, ...], ...]}`. Requests are stateless;
//! failures are retried with exponential backoff and then surfaced as
//! [`LmError::Transport`].

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::{LanguageModel, LmError, LogProbRequest, LogProbResponse};

pub const LOGPROBS_PATH: &str = "/v1/logprobs";

#[derive(Clone, Debug)]
pub struct RemoteConfig {
    /// Server base URL (`http://host:port`), with or without the endpoint path.
    pub url: String,
    pub vocab_size: usize,
    pub fingerprint: u64,
    pub timeout: Duration,
    pub retries: u32,
    /// Delay before the first retry; doubled for each further attempt.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, vocab_size: usize, fingerprint: u64) -> Self {
        Self {
            url: url.into(),
            vocab_size,
            fingerprint,
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(200),
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    ready: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.ready.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.ready.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteLm {
    config: RemoteConfig,
    endpoint: String,
    agent: ureq::Agent,
    slots: Slots,
}

impl RemoteLm {
    pub fn new(config: RemoteConfig) -> Self {
        let base = config.url.trim_end_matches('/');
        let endpoint = if base.ends_with(LOGPROBS_PATH) {
            base.to_string()
        } else {
            format!("{base}{LOGPROBS_PATH}")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Slots {
            free: Mutex::new(config.max_in_flight.max(1)),
            ready: Condvar::new(),
        };
        Self {
            config,
            endpoint,
            agent,
            slots,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, request: &LogProbRequest) -> Result<LogProbResponse, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(format!("HTTP status {status}"));
        }
        let body: LogProbResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("schema violation: {e}"))?;
        self.validate(request, &body)?;
        Ok(body)
    }

    fn validate(&self, request: &LogProbRequest, body: &LogProbResponse) -> Result<(), String> {
        if body.logprobs.len() != request.prefixes.len() {
            return Err(format!(
                "schema violation: {} vectors for {} prefixes",
                body.logprobs.len(),
                request.prefixes.len()
            ));
        }
        for (i, v) in body.logprobs.iter().enumerate() {
            if v.len() != self.config.vocab_size {
                return Err(format!(
                    "schema violation: vector {i} has length {}, vocab size is {}",
                    v.len(),
                    self.config.vocab_size
                ));
            }
            if v.iter().any(|x| x.is_nan() || *x > 0.0) {
                return Err(format!("schema violation: vector {i} is not a log-distribution"));
            }
        }
        Ok(())
    }
}

impl LanguageModel for RemoteLm {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn fingerprint(&self) -> u64 {
        self.config.fingerprint
    }

    fn logprobs(&self, request: &LogProbRequest) -> Result<LogProbResponse, LmError> {
        self.check_fingerprint(request.fingerprint)?;
        let _slot = self.slots.acquire();
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(request) {
                Ok(resp) => return Ok(resp),
                Err(e) => last = e,
            }
        }
        Err(LmError::Transport(format!(
            "{} after {} attempts: {last}",
            self.endpoint,
            self.config.retries + 1
        )))
    }
}
