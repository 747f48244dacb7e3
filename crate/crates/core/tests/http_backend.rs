use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use score::inference::{generate, Backend, FinishReason, GenerationRequest, HttpBackend, HttpConfig, RetryPolicy};
use score::perturbation::{Task, VariantKey};
use serde_json::Value;

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Serves the canned `(status, body)` replies in order, one per connection.
fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            log.lock().unwrap().push(serve(stream, status, &body));
        }
    });
    (base, seen, handle)
}

fn serve(mut stream: TcpStream, status: u16, body: &str) -> Seen {
    stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let mut length = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap(),
            "authorization" => auth = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut payload = vec![0; length];
    reader.read_exact(&mut payload).unwrap();
    let reply = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(reply.as_bytes()).unwrap();
    Seen {
        path: request_line.split_whitespace().nth(1).unwrap().to_string(),
        auth,
        body: serde_json::from_slice(&payload).unwrap(),
    }
}

fn request() -> GenerationRequest {
    GenerationRequest {
        item_id: "q1".into(),
        task: Task::NonGreedy,
        variant_key: VariantKey::Seed(101),
        prompt: "What is 2+2?".into(),
        temperature: 0.7,
        seed: Some(101),
        max_tokens: 64,
        model_name: "test-model".into(),
        system_prompt: Some("Be brief.".into()),
    }
}

fn ok_reply(text: &str, finish: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish}]})
        .to_string()
}

fn backend(base: &str, key: Option<&str>) -> HttpBackend {
    let config =
        HttpConfig { api_key: key.map(String::from), timeout: Duration::from_secs(5), ..HttpConfig::new(base) };
    HttpBackend::new(config).unwrap()
}

#[test]
fn retries_rate_limits_and_server_errors() {
    let (base, seen, handle) =
        stub(vec![(429, "{}".into()), (503, "{}".into()), (200, ok_reply("The best answer is B.", "stop"))]);
    let record = generate(&backend(&base, Some("secret")), &request(), &RetryPolicy::no_delay(3));
    handle.join().unwrap();
    assert_eq!(record.raw_text, "The best answer is B.");
    assert_eq!(record.attempt_count, 3);
    assert_eq!(record.finish_reason, FinishReason::Stop);
    assert!(record.error.is_none());

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let first = &seen[0];
    assert_eq!(first.path, "/v1/chat/completions");
    assert_eq!(first.auth.as_deref(), Some("Bearer secret"));
    assert_eq!(first.body["model"], "test-model");
    assert_eq!(first.body["seed"], 101);
    assert_eq!(first.body["temperature"], 0.7);
    assert_eq!(first.body["max_tokens"], 64);
    let roles: Vec<&str> =
        first.body["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["system", "user"]);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen, handle) = stub(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let record = generate(&backend(&base, None), &request(), &RetryPolicy::no_delay(3));
    handle.join().unwrap();
    assert_eq!(record.finish_reason, FinishReason::Error);
    assert_eq!(record.attempt_count, 1);
    assert!(record.error.as_deref().unwrap().contains("401"));
    assert!(seen.lock().unwrap()[0].auth.is_none());
}

#[test]
fn malformed_reply_is_fatal() {
    let (base, _, handle) = stub(vec![(200, "not json".into())]);
    let record = generate(&backend(&base, None), &request(), &RetryPolicy::no_delay(3));
    handle.join().unwrap();
    assert_eq!(record.finish_reason, FinishReason::Error);
    assert_eq!(record.attempt_count, 1);
}

#[test]
fn exhausted_retries_become_error_records() {
    let (base, _, handle) = stub(vec![(500, "{}".into()), (500, "{}".into())]);
    let record = generate(&backend(&base, None), &request(), &RetryPolicy::no_delay(2));
    handle.join().unwrap();
    assert_eq!(record.finish_reason, FinishReason::Error);
    assert_eq!(record.attempt_count, 2);
    assert!(record.error.as_deref().unwrap().contains("500"));
}

#[test]
fn length_finish_is_kept() {
    let (base, _, handle) = stub(vec![(200, ok_reply("The best answer", "length"))]);
    let b = backend(&base, None);
    assert!(b.id().starts_with("http:"));
    let completion = b.complete(&request(), 1).unwrap();
    handle.join().unwrap();
    assert_eq!(completion.finish_reason, FinishReason::Length);
}

#[test]
fn unreachable_server_is_transient() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let record = generate(&backend(&base, None), &request(), &RetryPolicy::no_delay(2));
    assert_eq!(record.finish_reason, FinishReason::Error);
    assert_eq!(record.attempt_count, 2);
}
