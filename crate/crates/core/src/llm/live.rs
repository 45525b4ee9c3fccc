use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, LlmError, RetryPolicy};

pub const API_KEY_ENV: &str = "GABM_API_KEY";
pub const API_BASE_ENV: &str = "GABM_API_BASE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON POST. `Err` means no HTTP status was received at all.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<HttpReply, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<HttpReply, String> {
        let response = self
            .client
            .post(url)
            .bearer_auth(api_key)
            .json(body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// Chat-completions body: a single user message carrying the prompt.
pub fn chat_request_body(req: &CompletionRequest) -> Value {
    json!({
        "model": req.model_id,
        "temperature": req.temperature,
        "max_tokens": req.max_reply_tokens,
        "messages": [{ "role": "user", "content": req.prompt }],
    })
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
pub fn extract_reply(body: &str) -> Result<String, LlmError> {
    let value: Value = serde_json::from_str(body).map_err(|e| LlmError::Transport {
        attempts: 1,
        message: format!("response is not JSON: {e}"),
    })?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::Transport {
            attempts: 1,
            message: "response has no choices[0].message.content".into(),
        })
}

/// Posts `body` until it succeeds, hits a non-retryable status, or runs out
/// of attempts. `sleep` is called with each backoff delay.
pub fn send_with_retry(
    transport: &dyn Transport,
    url: &str,
    api_key: &str,
    body: &Value,
    policy: &RetryPolicy,
    sleep: &dyn Fn(Duration),
) -> Result<String, LlmError> {
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        let failure = match transport.post_json(url, api_key, body) {
            Ok(reply) if (200..300).contains(&reply.status) => {
                return extract_reply(&reply.body).map_err(|e| match e {
                    LlmError::Transport { message, .. } => LlmError::Transport {
                        attempts: attempt,
                        message,
                    },
                    other => other,
                });
            }
            Ok(reply) if reply.status == 401 || reply.status == 403 => {
                return Err(LlmError::Auth(format!("HTTP {}: {}", reply.status, reply.body)));
            }
            Ok(reply) if policy.is_retryable(reply.status) => format!("HTTP {}", reply.status),
            Ok(reply) => {
                return Err(LlmError::Transport {
                    attempts: attempt,
                    message: format!("HTTP {}: {}", reply.status, reply.body),
                })
            }
            Err(message) => message,
        };
        if attempt >= max_attempts {
            return Err(LlmError::Transport {
                attempts: attempt,
                message: failure,
            });
        }
        sleep(policy.delay(attempt));
    }
}

/// Client for a chat-completions compatible HTTP endpoint.
pub struct LiveBackend {
    url: String,
    api_key: String,
    policy: RetryPolicy,
    transport: Box<dyn Transport>,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl LiveBackend {
    /// `endpoint` is either an API base (`.../v1`) or the full
    /// `.../chat/completions` URL.
    pub fn new(endpoint: &str, api_key: String, policy: RetryPolicy) -> Result<Self, LlmError> {
        Ok(Self::with_transport(
            endpoint,
            api_key,
            policy,
            Box::new(ReqwestTransport::new()?),
            Box::new(std::thread::sleep),
        ))
    }

    pub fn with_transport(
        endpoint: &str,
        api_key: String,
        policy: RetryPolicy,
        transport: Box<dyn Transport>,
        sleep: Box<dyn Fn(Duration) + Send + Sync>,
    ) -> Self {
        let endpoint = endpoint.trim_end_matches('/');
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else {
            format!("{endpoint}/chat/completions")
        };
        LiveBackend {
            url,
            api_key,
            policy,
            transport,
            sleep,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        send_with_retry(
            self.transport.as_ref(),
            &self.url,
            &self.api_key,
            &chat_request_body(req),
            &self.policy,
            &*self.sleep,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    struct Canned {
        replies: Mutex<Vec<Result<HttpReply, String>>>,
        calls: Mutex<u32>,
    }

    impl Canned {
        fn new(mut replies: Vec<Result<HttpReply, String>>) -> Self {
            replies.reverse();
            Canned {
                replies: Mutex::new(replies),
                calls: Mutex::new(0),
            }
        }
    }

    impl Transport for Canned {
        fn post_json(&self, _: &str, _: &str, _: &Value) -> Result<HttpReply, String> {
            *self.calls.lock().unwrap() += 1;
            self.replies.lock().unwrap().pop().expect("unexpected extra call")
        }
    }

    fn status(code: u16) -> Result<HttpReply, String> {
        Ok(HttpReply {
            status: code,
            body: String::new(),
        })
    }

    fn ok(content: &str) -> Result<HttpReply, String> {
        Ok(HttpReply {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
                .to_string(),
        })
    }

    fn policy() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(10),
            backoff_factor: 2.0,
            ..RetryPolicy::default()
        }
    }

    fn run(transport: &Canned, policy: &RetryPolicy) -> (Result<String, LlmError>, Vec<Duration>) {
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d = delays.clone();
        let result = send_with_retry(transport, "u", "k", &json!({}), policy, &move |x| {
            d.lock().unwrap().push(x)
        });
        let delays = delays.lock().unwrap().clone();
        (result, delays)
    }

    #[test]
    fn retries_429_then_succeeds() {
        let t = Canned::new(vec![status(429), status(429), ok("Response: blue")]);
        let (result, delays) = run(&t, &policy());
        assert_eq!(result.unwrap(), "Response: blue");
        assert_eq!(delays, [Duration::from_millis(10), Duration::from_millis(20)]);
        assert_eq!(*t.calls.lock().unwrap(), 3);
    }

    #[test]
    fn auth_is_not_retried() {
        let t = Canned::new(vec![status(401)]);
        let (result, delays) = run(&t, &policy());
        assert!(matches!(result, Err(LlmError::Auth(_))));
        assert!(delays.is_empty());
        assert_eq!(*t.calls.lock().unwrap(), 1);
    }

    #[test]
    fn exhausted_retries() {
        let t = Canned::new(vec![status(503), Err("reset".into()), status(500), status(502)]);
        let (result, delays) = run(&t, &policy());
        assert_eq!(
            result,
            Err(LlmError::Transport {
                attempts: 4,
                message: "HTTP 502".into()
            })
        );
        assert_eq!(delays.len(), 3);
        assert_eq!(*t.calls.lock().unwrap(), 4);
    }

    #[test]
    fn non_retryable_status_fails_fast() {
        let t = Canned::new(vec![status(400)]);
        let (result, _) = run(&t, &policy());
        assert!(matches!(result, Err(LlmError::Transport { attempts: 1, .. })));
    }

    #[test]
    fn body_shape() {
        let req = CompletionRequest::new("hi", 0.25, "gpt-x");
        let body = chat_request_body(&req);
        assert_eq!(body["model"], "gpt-x");
        assert_eq!(body["temperature"], 0.25);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
    }

    #[test]
    fn endpoint_normalization() {
        let mk = |e: &str| {
            LiveBackend::with_transport(e, "k".into(), policy(), Box::new(Canned::new(vec![])), Box::new(|_| {}))
        };
        assert_eq!(mk("http://h/v1/").url(), "http://h/v1/chat/completions");
        assert_eq!(mk("http://h/v1/chat/completions").url(), "http://h/v1/chat/completions");
    }

    #[test]
    fn malformed_success_body() {
        assert!(extract_reply("{}").is_err());
        assert!(extract_reply("nope").is_err());
    }
}
