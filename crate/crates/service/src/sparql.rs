//! Thin SPARQL protocol client used by `/v1/sparql/execute`.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum SparqlProxyError {
    #[error("SPARQL endpoint unreachable: {0}")]
    Unreachable(String),
    /// Non-2xx answer from the endpoint, passed through to the caller.
    #[error("SPARQL endpoint returned {status}")]
    Endpoint {
        status: u16,
        content_type: Option<String>,
        body: String,
    },
    #[error("SPARQL endpoint sent a non-JSON result: {0}")]
    Malformed(String),
}

pub struct SparqlClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl SparqlClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// POSTs `query` as `application/x-www-form-urlencoded` and returns the
    /// SPARQL JSON results document.
    pub fn select(&self, query: &str) -> Result<Value, SparqlProxyError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Accept", "application/sparql-results+json")
            .send_form([("query", query)])
            .map_err(|e| SparqlProxyError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| SparqlProxyError::Unreachable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(SparqlProxyError::Endpoint {
                status,
                content_type,
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| SparqlProxyError::Malformed(e.to_string()))
    }
}

/// Number of solutions in a SPARQL JSON results document; 0 for ASK results.
pub fn row_count(results: &Value) -> usize {
    results
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .map_or(0, Vec::len)
}
