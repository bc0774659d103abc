use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use ellm_core::llm_client::{
    CacheMode, CompletionBackend, CompletionRequest, HttpBackend, HttpConfig, LlmClient, LlmError, ResponseCache,
    RetryPolicy,
};
use serde_json::Value;

struct Seen {
    auth: Option<String>,
    body: Value,
}

/// Serves one canned `(status, body)` per connection, in order.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap_or((line, ""));
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(Seen {
                auth,
                body: serde_json::from_slice(&buf).unwrap(),
            })
            .unwrap();
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1/completions"), rx)
}

fn config(endpoint: String) -> HttpConfig {
    HttpConfig {
        endpoint,
        api_key: Some("secret".into()),
        retry: RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(5),
        },
        timeout: Duration::from_secs(10),
        ..HttpConfig::default()
    }
}

const OK: &str = r#"{"choices":[{"text":" Yes","logprobs":{"top_logprobs":[{" Yes":-0.1," No":-2.5}]}}]}"#;

#[test]
fn retries_rate_limits_then_parses() {
    let (url, seen) = serve(vec![(429, "{}"), (200, OK)]);
    let mut backend = HttpBackend::new(config(url));
    let mut req = CompletionRequest::new("test-model", "Should you store a vase in/on the shelf:");
    req.logprob_count = 2;
    let r = backend.complete(&req).unwrap();
    assert_eq!(r.text, " Yes");
    assert_eq!(r.first_token_logprobs[" Yes"], -0.1);
    assert_eq!(r.first_token_logprobs[" No"], -2.5);
    assert_eq!(backend.attempts(), 2);
    for _ in 0..2 {
        let s = seen.recv().unwrap();
        assert_eq!(s.auth.as_deref(), Some("Bearer secret"));
        assert_eq!(s.body["model"], "test-model");
        assert_eq!(s.body["max_tokens"], 100);
        assert_eq!(s.body["temperature"], 0.0);
        assert_eq!(s.body["logprobs"], 2);
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _seen) = serve(vec![(400, r#"{"error":"bad"}"#)]);
    let mut backend = HttpBackend::new(config(url));
    match backend.complete(&CompletionRequest::new("m", "p")) {
        Err(LlmError::Http { status, .. }) => assert_eq!(status, 400),
        other => panic!("expected an HTTP error, got {other:?}"),
    }
    assert_eq!(backend.attempts(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let (url, _seen) = serve(vec![(503, "{}"), (500, "{}"), (502, "{}")]);
    let mut backend = HttpBackend::new(config(url));
    assert!(backend.complete(&CompletionRequest::new("m", "p")).is_err());
    assert_eq!(backend.attempts(), 3);
}

#[test]
fn cached_client_calls_the_endpoint_once() {
    let (url, seen) = serve(vec![(200, OK)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let mut client = LlmClient::new(ResponseCache::open(&path).unwrap(), Box::new(HttpBackend::new(config(url))));
    let req = CompletionRequest::new("m", "same");
    let a = client.complete(&req).unwrap();
    let b = client.complete(&req).unwrap();
    assert_eq!(a, b);
    assert_eq!(client.network_calls(), 1);
    assert!(seen.recv().is_ok());

    let mut replay = LlmClient::replay(ResponseCache::open(&path).unwrap());
    assert_eq!(replay.mode(), CacheMode::Replay);
    assert_eq!(replay.complete(&req).unwrap(), a);
    assert!(matches!(
        replay.complete(&CompletionRequest::new("m", "other")),
        Err(LlmError::CacheMiss { .. })
    ));
}
