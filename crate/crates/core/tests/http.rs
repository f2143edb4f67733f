use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use skr_core::backend::{BackendError, GenRequest, Generator, HttpConfig, HttpGenerator, Role};

/// Serves one scripted `(status, body)` response per connection and records
/// the request bodies.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<serde_json::Value>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(serde_json::from_slice(&buf).unwrap());
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]})
        .to_string()
}

fn config(url: &str) -> HttpConfig {
    let mut c = HttpConfig::new(url, "base-model");
    c.backoff_ms = 1;
    c.retries = 2;
    c.timeout_secs = 10;
    c
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, completion("head : age")),
    ]);
    let g = HttpGenerator::new(config(&url)).unwrap();
    let reply = g.generate(&GenRequest::new(Role::SchemaFilter, "prompt text")).unwrap();
    assert_eq!(reply.text, "head : age");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[2]["messages"][0]["content"], "prompt text");
    assert_eq!(seen[2]["model"], "base-model");
}

#[test]
fn gives_up_after_the_retry_budget() {
    let (url, seen) = serve(vec![(500, "a".into()), (500, "b".into()), (500, "c".into())]);
    let g = HttpGenerator::new(config(&url)).unwrap();
    let err = g.generate(&GenRequest::new(Role::QueryBuilder, "p")).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 500, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "bad".into()), (200, completion("unused"))]);
    let g = HttpGenerator::new(config(&url)).unwrap();
    let err = g.generate(&GenRequest::new(Role::QueryBuilder, "p")).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn stage_selects_the_model() {
    let (url, seen) = serve(vec![(200, completion("x")), (200, completion("y"))]);
    let mut c = config(&url);
    c.stage_models.insert("step2".into(), "adapter-2".into());
    let g = HttpGenerator::new(c).unwrap();
    g.generate(&GenRequest::new(Role::QueryBuilder, "p").at_stage(Some("step2")))
        .unwrap();
    g.generate(&GenRequest::new(Role::QueryBuilder, "p").at_stage(Some("step3")))
        .unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0]["model"], "adapter-2");
    assert_eq!(seen[1]["model"], "base-model");
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    let g = HttpGenerator::new(config(&url)).unwrap();
    let err = g.generate(&GenRequest::new(Role::QueryBuilder, "p")).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)));
}

#[test]
fn overlong_prompts_never_reach_the_server() {
    let g = HttpGenerator::new(config("http://127.0.0.1:9")).unwrap();
    let prompt = "w ".repeat(100_000);
    let err = g.generate(&GenRequest::new(Role::QueryBuilder, prompt)).unwrap_err();
    assert!(matches!(err, BackendError::TooLong { .. }));
}
