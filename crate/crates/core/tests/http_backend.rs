use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use trialagent_core::gateway::{
    complete, ChatMessage, CompletionRequest, GatewayError, HttpBackend, HttpConfig, LlmBackend, RetryPolicy,
};

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: Value,
}

/// Answers successive requests with `script` (status, body); the last entry repeats.
fn server(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut writer = stream;
            let (mut length, mut authorization, mut line) = (0, None, String::new());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            assert!(request_line.starts_with("POST /v1/chat/completions "), "{request_line}");
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    authorization = Some(line["authorization:".len()..].trim().to_string());
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let mut log = log.lock().unwrap();
            log.push(Seen { authorization, body: serde_json::from_slice(&body).unwrap() });
            let (status, payload) = script[(log.len() - 1).min(script.len() - 1)].clone();
            drop(log);
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\nconnection: close\r\ncontent-length: {}\r\n\r\n{payload}",
                payload.len()
            );
            let _ = writer.write_all(response.as_bytes());
        }
    });
    (base, seen)
}

fn backend(base: &str, key: Option<&str>) -> HttpBackend {
    let mut config = HttpConfig::new(base, key.map(str::to_string));
    config.retry = RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1), factor: 2 };
    HttpBackend::new(config)
}

fn ok(content: &str) -> (u16, String) {
    (200, json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
}

fn request() -> CompletionRequest {
    CompletionRequest::new("gpt-4", vec![ChatMessage::system("sys"), ChatMessage::user("hello")])
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let (base, seen) = server(vec![(503, "{}".into()), (500, "{}".into()), ok("fine")]);
    let reply = backend(&base, None).complete(&request()).unwrap();
    assert_eq!(reply.content, "fine");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_stop_after_three_attempts() {
    let (base, seen) = server(vec![(502, "bad gateway".into())]);
    let err = backend(&base, None).complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = server(vec![(401, json!({"error": {"message": "bad key"}}).to_string())]);
    let err = backend(&base, Some("k")).complete(&request()).unwrap_err();
    match err {
        GatewayError::Rejected { status, message } => assert_eq!((status, message.as_str()), (401, "bad key")),
        other => panic!("{other}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn wire_format_carries_model_messages_tools_and_key() {
    let (base, seen) = server(vec![(
        200,
        json!({"choices": [{"message": {
            "role": "assistant",
            "content": null,
            "tool_calls": [{"id": "c1", "type": "function", "function": {"name": "retrieval_drugbank", "arguments": "{\"drug_name\":\"aspirin\"}"}}]
        }}]})
        .to_string(),
    )]);
    let tools = vec![json!({"type": "function", "function": {"name": "retrieval_drugbank", "description": "d", "parameters": {"type": "object", "properties": {}}}})];
    let reply = complete(&backend(&base, Some("secret")), &request().with_tools(tools)).unwrap();
    assert_eq!(reply.tool_calls.len(), 1);
    assert_eq!(reply.tool_calls[0].name, "retrieval_drugbank");
    assert_eq!(reply.tool_calls[0].arguments_object().unwrap()["drug_name"], "aspirin");

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer secret"));
    let body = &seen[0].body;
    assert_eq!(body["model"], "gpt-4");
    assert_eq!(body["messages"][1], json!({"role": "user", "content": "hello"}));
    assert_eq!(body["tools"][0]["function"]["name"], "retrieval_drugbank");
}

#[test]
fn unparseable_success_body_is_malformed() {
    let (base, _) = server(vec![(200, "not json".into())]);
    let err = backend(&base, None).complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::MalformedResponse(_)), "{err}");
}

#[test]
fn unreachable_endpoint_is_a_transport_failure() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = backend(&format!("http://127.0.0.1:{port}"), None).complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err}");
}
