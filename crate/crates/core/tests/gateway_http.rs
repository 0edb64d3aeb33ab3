use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use selfqa_core::gateway::{
    BackendConfig, FinishReason, Gateway, GatewayError, GenerationRequest, HttpBackend,
};

const OK_BODY: &str = r#"{"choices":[{"text":"1. Question: When was DXM founded?","finish_reason":"stop"}],"usage":{"prompt_tokens":40,"completion_tokens":7}}"#;

struct Recorded {
    headers: Vec<String>,
    body: String,
}

/// Serves `script` responses in order, one connection each, and records the
/// requests it saw.
fn stub(script: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                let line = line.trim_end().to_string();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Recorded { headers, body: String::from_utf8(buf).unwrap() });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1/completions"), seen)
}

fn config(endpoint: &str) -> BackendConfig {
    BackendConfig {
        backoff_base: Duration::from_millis(5),
        max_retries: 3,
        timeout: Duration::from_secs(5),
        ..BackendConfig::http(endpoint)
    }
}

fn gateway(endpoint: &str, key: Option<&str>) -> Gateway {
    let backend = HttpBackend::new(endpoint, key.map(String::from), Duration::from_secs(5)).unwrap();
    Gateway::with_backend(Arc::new(backend), &config(endpoint)).unwrap()
}

fn request() -> GenerationRequest {
    let mut r = GenerationRequest::new("The background knowledge is:\nDXM", "test-model");
    r.temperature = 0.5;
    r.max_tokens = 64;
    r
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (endpoint, seen) = stub(vec![(429, "{}"), (429, "{}"), (200, OK_BODY)]);
    let gw = gateway(&endpoint, Some("secret-key"));
    let response = gw.complete(&request()).unwrap();
    assert_eq!(response.retries, 2);
    assert_eq!(response.text, "1. Question: When was DXM founded?");
    assert_eq!(response.finish_reason, FinishReason::Stop);
    assert_eq!((response.prompt_tokens, response.completion_tokens), (40, 7));
    let usage = gw.usage();
    assert_eq!((usage.requests, usage.attempts, usage.failures), (1, 3, 0));

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: bearer secret-key")));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["temperature"], 0.5);
}

#[test]
fn credential_failure_is_not_retried() {
    let (endpoint, seen) = stub(vec![(401, r#"{"error":"bad key"}"#), (200, OK_BODY)]);
    let err = gateway(&endpoint, Some("wrong")).complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Credential { status: Some(401), .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let (endpoint, _) = stub(vec![(503, "busy"); 4]);
    let err = gateway(&endpoint, None).complete(&request()).unwrap_err();
    assert_eq!(
        err,
        GatewayError::Transport { attempts: 4, last_status: Some(503), message: "busy".into() }
    );
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let (endpoint, _) = stub(vec![(200, r#"{"choices":"nope"}"#)]);
    let err = gateway(&endpoint, None).complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Protocol { .. }), "{err}");
}

#[test]
fn client_errors_are_fatal() {
    let (endpoint, seen) = stub(vec![(400, "bad request"), (200, OK_BODY)]);
    let err = gateway(&endpoint, None).complete(&request()).unwrap_err();
    assert_eq!(err, GatewayError::Status { status: 400, excerpt: "bad request".into() });
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn api_key_comes_from_named_environment_variable() {
    let (endpoint, seen) = stub(vec![(200, OK_BODY)]);
    std::env::set_var("SELFQA_HTTP_TEST_KEY", "from-env");
    let cfg = BackendConfig { api_key_env: "SELFQA_HTTP_TEST_KEY".into(), ..config(&endpoint) };
    Gateway::from_config(&cfg).unwrap().complete(&request()).unwrap();
    let seen = seen.lock().unwrap();
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: bearer from-env")));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let cfg = BackendConfig { max_retries: 1, ..config(&endpoint) };
    let err = Gateway::from_config(&cfg).unwrap().complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 2, last_status: None, .. }), "{err}");
}
