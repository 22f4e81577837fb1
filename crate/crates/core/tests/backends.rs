mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use serde_json::{json, Value};
use timebar_core::backends::wire::{chat_body, parse_chat_body, parse_chat_response};
use timebar_core::backends::{
    BackendError, BackendRequest, ChatBackend, ChatTurn, Decoding, EmbeddingProvider, FrameAttachment,
    HttpChatBackend, HttpEmbeddingProvider, HttpSettings, Role, ScriptedBackend,
};
use timebar_core::frame::{Frame, FrameSequence};
use timebar_core::interval::Interval;
use timebar_core::retrieve::Clip;

/// Serves one canned response per connection and records request bodies.
struct MockServer {
    url: String,
    bodies: Arc<Mutex<Vec<Value>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&bodies);
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push(serde_json::from_slice(&buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        Self {
            url,
            bodies,
            handle: Some(handle),
        }
    }

    fn bodies(&mut self) -> Vec<Value> {
        self.handle.take().unwrap().join().unwrap();
        self.bodies.lock().unwrap().clone()
    }
}

fn settings(url: &str, retries: u32) -> HttpSettings {
    HttpSettings {
        endpoint: url.into(),
        model: "test-model".into(),
        api_key_env: None,
        timeout: Duration::from_secs(10),
        retries,
        backoff: Duration::from_millis(1),
    }
}

fn chat_ok(text: &str) -> (u16, String) {
    (200, json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
}

fn frames(n: usize) -> Arc<FrameSequence> {
    let fs = (0..n)
        .map(|i| Frame::new(RgbImage::from_pixel(8, 6, Rgb([i as u8, 2, 3])), i as f64 + 0.5).unwrap())
        .collect();
    Arc::new(FrameSequence::new(fs, n as f64).unwrap())
}

fn request() -> BackendRequest {
    let att = |v| FrameAttachment {
        memory_version: v,
        frames: frames(3),
    };
    BackendRequest {
        turns: vec![
            ChatTurn::system("rules"),
            ChatTurn::user("QUESTION: what?", Some(att(0))),
            ChatTurn::assistant("THOUGHT: t\nACTION:\n```\nprogress_bar()\n```"),
            ChatTurn::observation(0, "progress_bar(): drawn"),
            ChatTurn::user("frames", Some(att(1))),
        ],
        decoding: Decoding::default(),
    }
}

#[test]
fn scripted_backend_replays_then_runs_out() {
    let backend = ScriptedBackend::new(["A", "B"]);
    let req = request();
    assert_eq!(backend.complete(&req).unwrap(), "A");
    assert_eq!(backend.complete(&req).unwrap(), "B");
    let err = backend.complete(&req).unwrap_err();
    assert_eq!(err.to_string(), "script exhausted at step 2");
    assert_eq!(backend.calls(), 2);
    assert_eq!(ScriptedBackend::from_json(r#"["x"]"#).unwrap().remaining(), 1);
}

#[test]
fn chat_body_layout() {
    let body = chat_body("m", &request()).unwrap();
    assert_eq!(body["temperature"], json!(0));
    assert_eq!(body["model"], json!("m"));
    let msgs = body["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 5);
    // only the newest frames turn carries images
    let images = |m: &Value| {
        m["content"]
            .as_array()
            .map(|p| p.iter().filter(|x| x["type"] == "image_url").count())
            .unwrap_or(0)
    };
    assert_eq!(images(&msgs[1]), 0);
    assert_eq!(images(&msgs[4]), 3);
    let url = msgs[4]["content"][1]["image_url"]["url"].as_str().unwrap();
    let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
    use base64::Engine as _;
    let png = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
    let img = image::load_from_memory(&png).unwrap().into_rgb8();
    assert_eq!(img.get_pixel(0, 0), &Rgb([0, 2, 3]));

    let turns = parse_chat_body(&body).unwrap();
    let roles: Vec<Role> = turns.iter().map(|t| t.role).collect();
    assert_eq!(
        roles,
        vec![Role::System, Role::User, Role::Assistant, Role::ToolObservation, Role::User]
    );
    assert_eq!(turns[3].step, Some(0));
    assert_eq!(turns[3].text, "progress_bar(): drawn");
}

#[test]
fn http_chat_round_trip() {
    let mut server = MockServer::start(vec![chat_ok("THOUGHT: ok\nANSWER: A\nTERMINATE")]);
    let backend = HttpChatBackend::new(settings(&server.url, 0)).unwrap();
    let text = backend.complete(&request()).unwrap();
    assert_eq!(text, "THOUGHT: ok\nANSWER: A\nTERMINATE");
    let bodies = server.bodies();
    assert_eq!(bodies.len(), 1);
    assert_eq!(bodies[0]["temperature"], json!(0));
    assert_eq!(bodies[0]["model"], json!("test-model"));
}

#[test]
fn retries_on_server_errors_and_rate_limits() {
    let mut server = MockServer::start(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        chat_ok("fine"),
    ]);
    let backend = HttpChatBackend::new(settings(&server.url, 3)).unwrap();
    assert_eq!(backend.complete(&request()).unwrap(), "fine");
    assert_eq!(server.bodies().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mut server = MockServer::start(vec![(400, r#"{"error":"bad"}"#.into())]);
    let backend = HttpChatBackend::new(settings(&server.url, 3)).unwrap();
    match backend.complete(&request()) {
        Err(BackendError::Status { status: 400, body }) => assert!(body.contains("bad")),
        other => panic!("expected HTTP 400, got {other:?}"),
    }
    assert_eq!(server.bodies().len(), 1);
}

#[test]
fn retries_are_bounded() {
    let mut server = MockServer::start(vec![(503, "{}".into()), (503, "{}".into())]);
    let backend = HttpChatBackend::new(settings(&server.url, 1)).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(BackendError::Transport { attempts: 2, .. })
    ));
    assert_eq!(server.bodies().len(), 2);
}

#[test]
fn embedding_handshake_and_calls() {
    let mut server = MockServer::start(vec![
        (200, json!({"dimension": 3}).to_string()),
        (
            200,
            json!({"embeddings": [{"index": 0, "values": [1, 0, 0]}, {"index": 1, "values": [0, 1, 0]}]}).to_string(),
        ),
        (200, json!({"embeddings": [{"index": 0, "values": [0, 0, 1]}]}).to_string()),
        (200, json!({"embeddings": [{"index": 0, "values": [0, 1]}]}).to_string()),
    ]);
    let provider = HttpEmbeddingProvider::connect(settings(&server.url, 0)).unwrap();
    assert_eq!(provider.dimension(), 3);
    let seq = frames(16);
    let clips = [
        Clip {
            index: 0,
            frames: &seq.frames()[..8],
            span: Interval::new(0.0, 8.0).unwrap(),
        },
        Clip {
            index: 1,
            frames: &seq.frames()[8..],
            span: Interval::new(8.0, 16.0).unwrap(),
        },
    ];
    let got = provider.embed_clips(&clips).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[1].1.values(), &[0.0, 1.0, 0.0]);
    assert_eq!(provider.embed_text("cat").unwrap().values(), &[0.0, 0.0, 1.0]);
    let err = provider.embed_text("dog").unwrap_err();
    assert!(err.to_string().contains("dimension 2"));

    let bodies = server.bodies();
    assert_eq!(bodies[0]["input"]["kind"], "info");
    assert_eq!(bodies[1]["input"]["clips"][1]["start_s"], json!(8.0));
    assert_eq!(bodies[1]["input"]["clips"][0]["frames"].as_array().unwrap().len(), 8);
    assert_eq!(bodies[2]["input"], json!({"kind": "text", "text": "cat"}));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpChatBackend::new(settings(&format!("http://127.0.0.1:{port}/x"), 1)).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(BackendError::Transport { attempts: 2, .. })
    ));
}

#[test]
fn chat_response_shapes() {
    assert_eq!(parse_chat_response(&json!({"choices": [{"message": {"content": "hi"}}]})).unwrap(), "hi");
    assert_eq!(
        parse_chat_response(&json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]}))
            .unwrap(),
        "ab"
    );
    assert!(parse_chat_response(&json!({"choices": []})).is_err());
    assert!(parse_chat_response(&json!({"choices": [{"message": {"content": null}}]})).is_err());
}

fn turn_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ():\\n`,.\\[\\]\"=]{0,60}"
}

proptest! {
    #[test]
    fn wire_round_trip(texts in prop::collection::vec((0u8..4, turn_text()), 0..8), frames_at in any::<prop::sample::Index>()) {
        let mut turns = vec![ChatTurn::system("sys")];
        let mut step = 0;
        for (kind, text) in &texts {
            turns.push(match kind {
                0 => ChatTurn::assistant(text.clone()),
                1 => {
                    step += 1;
                    ChatTurn::observation(step, text.clone())
                }
                _ => ChatTurn::user(format!("Q {text}"), None),
            });
        }
        let at = frames_at.index(turns.len() + 1);
        turns.insert(at.max(1), ChatTurn::user("frames", Some(FrameAttachment { memory_version: 0, frames: frames(2) })));
        let req = BackendRequest { turns, decoding: Decoding::default() };
        let body = chat_body("m", &req).unwrap();
        let back = parse_chat_body(&body).unwrap();
        prop_assert_eq!(back.len(), req.turns.len());
        for (w, t) in back.iter().zip(&req.turns) {
            prop_assert_eq!(w.role, t.role);
            prop_assert_eq!(&w.text, &t.text);
            prop_assert_eq!(w.step, t.step);
            prop_assert_eq!(w.images, t.frames.as_ref().map_or(0, |f| f.frames.len()));
        }
    }
}
