//! Wire-level tests for the chat and embedding HTTP clients against a
//! minimal scripted HTTP server on a loopback socket.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use kgdr::embed::{EmbedError, EmbeddingClient, HttpEmbeddingClient};
use kgdr::llm::{ChatClient, ChatConfig, HttpChatClient, LlmError};

/// Serves the given (status, body) responses one connection at a time and
/// records each request body.
struct ScriptedServer {
    endpoint: String,
    requests: Arc<std::sync::Mutex<Vec<String>>>,
    hits: Arc<AtomicUsize>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl ScriptedServer {
    fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(std::sync::Mutex::new(Vec::new()));
        let hits = Arc::new(AtomicUsize::new(0));
        let req_log = Arc::clone(&requests);
        let hit_count = Arc::clone(&hits);
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(pair) => pair,
                    Err(_) => return,
                };
                hit_count.fetch_add(1, Ordering::SeqCst);
                let mut buf = Vec::new();
                let mut chunk = [0u8; 1024];
                let mut content_length = 0usize;
                let mut header_end = 0usize;
                loop {
                    let n = stream.read(&mut chunk).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    if header_end == 0 {
                        if let Some(pos) = find_header_end(&buf) {
                            header_end = pos;
                            let headers = String::from_utf8_lossy(&buf[..pos]);
                            for line in headers.lines() {
                                if let Some(v) = line
                                    .to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().to_string())
                                {
                                    content_length = v.parse().unwrap_or(0);
                                }
                            }
                        }
                    }
                    if header_end > 0 && buf.len() >= header_end + content_length {
                        break;
                    }
                }
                if header_end > 0 {
                    let body_bytes = &buf[header_end..header_end + content_length];
                    req_log.lock().unwrap().push(String::from_utf8_lossy(body_bytes).to_string());
                }
                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
                    500 => "Internal Server Error",
                    _ => "Other",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
                     Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self { endpoint, requests, hits, handle: Some(handle) }
    }

    fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }

    fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for ScriptedServer {
    fn drop(&mut self) {
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn chat_body(content: &str) -> String {
    format!(r#"{{"choices":[{{"message":{{"role":"assistant","content":"{content}"}}}}]}}"#)
}

#[test]
fn chat_client_round_trip() {
    let server = ScriptedServer::start(vec![(200, chat_body("Paris"))]);
    let mut cfg = ChatConfig::new(server.endpoint.clone(), "test-model");
    cfg.api_key = Some("secret-key".into());
    let client = HttpChatClient::new(cfg);
    let answer = client.complete("What is the capital of France?").unwrap();
    assert_eq!(answer, "Paris");

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 32);
    assert_eq!(body["messages"][0]["content"], "What is the capital of France?");
}

#[test]
fn chat_client_retries_server_errors() {
    let server = ScriptedServer::start(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (200, chat_body("recovered")),
    ]);
    let mut cfg = ChatConfig::new(server.endpoint.clone(), "m");
    cfg.max_retries = 3;
    let client = HttpChatClient::new(cfg);
    let answer = client.complete("hello").unwrap();
    assert_eq!(answer, "recovered");
    assert_eq!(server.hits(), 3, "two retries after two 500s");
}

#[test]
fn chat_client_gives_up_after_bounded_retries() {
    let server =
        ScriptedServer::start(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let mut cfg = ChatConfig::new(server.endpoint.clone(), "m");
    cfg.max_retries = 2;
    let client = HttpChatClient::new(cfg);
    match client.complete("hello") {
        Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport failure, got {other:?}"),
    }
    assert_eq!(server.hits(), 3);
}

#[test]
fn chat_client_does_not_retry_client_errors() {
    let server = ScriptedServer::start(vec![(400, "{}".into())]);
    let cfg = ChatConfig::new(server.endpoint.clone(), "m");
    let client = HttpChatClient::new(cfg);
    match client.complete("hello") {
        Err(LlmError::Rejected(msg)) => assert!(msg.contains("400")),
        other => panic!("expected rejection, got {other:?}"),
    }
    assert_eq!(server.hits(), 1);
}

#[test]
fn embedding_client_round_trip_and_shape_check() {
    let server = ScriptedServer::start(vec![
        (200, r#"{"data":[{"embedding":[1.0,0.0]},{"embedding":[0.0,1.0]}]}"#.into()),
        (200, r#"{"data":[{"embedding":[1.0,0.0]}]}"#.into()),
    ]);
    let client = HttpEmbeddingClient::new(server.endpoint.clone(), "embed-model");
    let vectors = client.embed_batch(&["a", "b"]).unwrap();
    assert_eq!(vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

    // One vector back for two inputs is a shape error.
    match client.embed_batch(&["a", "b"]) {
        Err(EmbedError::BatchShape { expected: 2, found: 1 }) => {}
        other => panic!("expected batch shape error, got {other:?}"),
    }

    let requests = server.requests();
    let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(body["model"], "embed-model");
    assert_eq!(body["input"][0], "a");
    assert_eq!(body["input"][1], "b");
}

#[test]
fn embedding_client_retries_transport_failures() {
    let server = ScriptedServer::start(vec![
        (500, "{}".into()),
        (200, r#"{"data":[{"embedding":[0.5,0.5]}]}"#.into()),
    ]);
    let mut client = HttpEmbeddingClient::new(server.endpoint.clone(), "m");
    client.max_retries = 2;
    let vectors = client.embed_batch(&["text"]).unwrap();
    assert_eq!(vectors.len(), 1);
    assert_eq!(server.hits(), 2);
}
