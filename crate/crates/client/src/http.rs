//! Blocking HTTP layer with retry and full-jitter exponential backoff.

use std::time::Duration;

use rand::Rng;

use crate::wire::{CompletionRequest, CompletionResponse};
use crate::{ClientError, EndpointConfig};

pub(crate) fn build_client(endpoint: &EndpointConfig) -> Result<reqwest::blocking::Client, ClientError> {
    Ok(reqwest::blocking::Client::builder()
        .timeout(endpoint.timeout)
        .build()?)
}

fn retryable_status(status: u16) -> bool {
    status == 429 || status >= 500
}

fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let exp = (attempt - 1).min(6);
    let cap = base.saturating_mul(1u32 << exp);
    if cap.is_zero() {
        return cap;
    }
    let nanos = rand::thread_rng().gen_range(0..=cap.as_nanos() as u64);
    Duration::from_nanos(nanos)
}

/// One logical completion request with retries. Returns the parsed response
/// plus the number of attempts spent; failures also report attempts.
pub(crate) fn post_completion(
    client: &reqwest::blocking::Client,
    endpoint: &EndpointConfig,
    request: &CompletionRequest,
) -> Result<(CompletionResponse, u32), (u32, ClientError)> {
    let url = format!(
        "{}/v1/completions",
        endpoint.base_url.trim_end_matches('/')
    );
    let mut last_error: Option<ClientError> = None;
    for attempt in 1..=endpoint.retry.max_attempts {
        if attempt > 1 {
            std::thread::sleep(backoff_delay(endpoint.retry.backoff_base, attempt - 1));
        }
        let mut builder = client.post(&url).json(request);
        if let Some(key) = &endpoint.api_key {
            builder = builder.bearer_auth(key);
        }
        match builder.send() {
            Ok(resp) => {
                let status = resp.status().as_u16();
                if resp.status().is_success() {
                    match resp.json::<CompletionResponse>() {
                        Ok(parsed) => return Ok((parsed, attempt)),
                        Err(e) => {
                            return Err((
                                attempt,
                                ClientError::Capability(format!(
                                    "response is not a completions payload: {e}"
                                )),
                            ))
                        }
                    }
                }
                let body = resp.text().unwrap_or_default();
                let err = ClientError::Status { status, body };
                if retryable_status(status) {
                    last_error = Some(err);
                    continue;
                }
                return Err((attempt, err));
            }
            Err(e) => {
                last_error = Some(ClientError::Http(e));
                continue;
            }
        }
    }
    Err((
        endpoint.retry.max_attempts,
        last_error.unwrap_or(ClientError::Capability("no attempts made".into())),
    ))
}
