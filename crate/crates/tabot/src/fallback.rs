//! HTTP client for an external text-to-SQL service.

use std::time::Duration;

use serde::Deserialize;
use tabot_core::dialogue::{FallbackClient, FallbackError, FallbackRequest};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Reply {
    Sql { sql: String },
    Error { error: String },
}

/// POSTs the request as JSON and expects `{"sql": ...}` or `{"error": ...}`.
#[derive(Debug, Clone)]
pub struct HttpFallback {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpFallback {
    pub fn new(url: &str, timeout: Duration) -> reqwest::Result<HttpFallback> {
        Ok(HttpFallback {
            url: url.to_string(),
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
        })
    }
}

impl FallbackClient for HttpFallback {
    fn translate(&self, request: &FallbackRequest) -> Result<String, FallbackError> {
        let resp = self.client.post(&self.url).json(request).send().map_err(|e| {
            if e.is_timeout() {
                FallbackError::Timeout
            } else {
                FallbackError::Unavailable(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(FallbackError::Unavailable(format!("status {}", resp.status())));
        }
        match resp.json::<Reply>() {
            Ok(Reply::Sql { sql }) => Ok(sql),
            Ok(Reply::Error { error }) => Err(FallbackError::Declined(error)),
            Err(e) => Err(FallbackError::Unavailable(e.to_string())),
        }
    }
}
