use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use devinv_core::{Gateway, GatewayError, PromptBundle, ProviderConfig, TranscriptStore};

#[test]
fn digest_matches_reference_values() {
    let b = PromptBundle::new(
        "You are a reviewer.",
        "batch a1021 was impacted",
        "Was quality impacted?",
    )
    .unwrap();
    assert_eq!(
        b.digest(),
        "d4bfde764df4a065dd1ce21882ce4b9ae4065e53a59b5a48083294c3935f5843"
    );
    let b = PromptBundle::new("ab", "", "c").unwrap();
    assert_eq!(
        b.digest(),
        "563e0cbaef733d85ab1daa5f03588fef882ffeb17bb922f91a3520c6c6c95684"
    );
    // Length prefixes keep field boundaries distinct.
    assert_ne!(b.digest(), PromptBundle::new("a", "b", "c").unwrap().digest());
}

#[test]
fn replay_returns_scripted_text_and_misses_loudly() {
    let hit = PromptBundle::new("intro", "ctx", "q").unwrap();
    let miss = PromptBundle::new("intro", "ctx", "other").unwrap();
    let mut store = TranscriptStore::new();
    store.script(&hit, "answer", None);
    let gw = Gateway::with_transcripts("replay", store);
    let out = gw.chat(&hit).unwrap();
    assert_eq!((out.text.as_str(), out.attempt_count), ("answer", 1));
    assert!(matches!(gw.chat(&miss), Err(GatewayError::ReplayMiss(d)) if d == miss.digest()));
}

/// Serves one scripted (status, body) per connection, recording request bodies.
fn fake_server(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .push(format!("{auth}|{}", String::from_utf8(buf).unwrap()));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    (url, seen, handle)
}

fn remote(url: &str, key_env: &str, retries: u32) -> Gateway {
    let mut cfg = ProviderConfig::remote_chat("remote", url, "model-x");
    cfg.api_key_env = Some(key_env.to_string());
    cfg.retry_base_ms = 1;
    cfg.max_retries = retries;
    cfg.timeout_secs = 5;
    Gateway::new(cfg).unwrap()
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"12 March 2021"}}]}"#;

#[test]
fn transient_failures_are_retried_then_succeed() {
    std::env::set_var("DEVINV_TEST_KEY_RETRY", "sk-test");
    let (url, seen, server) = fake_server(vec![(429, "{}".into()), (500, "{}".into()), (200, OK_BODY.into())]);
    let gw = remote(&url, "DEVINV_TEST_KEY_RETRY", 3);
    let bundle = PromptBundle::new("intro", "context", "When?").unwrap();
    let out = gw.chat(&bundle).unwrap();
    server.join().unwrap();
    assert_eq!(out.text, "12 March 2021");
    assert_eq!(out.attempt_count, 3);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0]
        .to_ascii_lowercase()
        .starts_with("authorization: bearer sk-test|"));
    let body: serde_json::Value = serde_json::from_str(seen[2].split_once('|').unwrap().1).unwrap();
    assert_eq!(body["model"], "model-x");
    let roles: Vec<&str> = body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["system", "user", "user"]);
}

#[test]
fn retries_are_bounded() {
    std::env::set_var("DEVINV_TEST_KEY_BOUND", "sk-test");
    let (url, seen, server) = fake_server(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let gw = remote(&url, "DEVINV_TEST_KEY_BOUND", 2);
    let err = gw.chat(&PromptBundle::new("i", "", "q").unwrap()).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, GatewayError::Exhausted(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    std::env::set_var("DEVINV_TEST_KEY_REJECT", "sk-test");
    let (url, seen, server) = fake_server(vec![(400, r#"{"error":"bad"}"#.into())]);
    let gw = remote(&url, "DEVINV_TEST_KEY_REJECT", 3);
    let err = gw.chat(&PromptBundle::new("i", "", "q").unwrap()).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, GatewayError::Rejected { status: 400, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn remote_embeddings_keep_order_and_check_dimension() {
    std::env::set_var("DEVINV_TEST_KEY_EMBED", "sk-test");
    let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
    let (url, _, server) = fake_server(vec![(200, body.into()), (200, body.into())]);
    let mut cfg = ProviderConfig::remote_embed("emb", &url, "e", 2);
    cfg.api_key_env = Some("DEVINV_TEST_KEY_EMBED".into());
    let gw = Gateway::new(cfg.clone()).unwrap();
    let v = gw.embed_batch(&["first", "second"]).unwrap();
    assert_eq!(v[0].values(), [1.0, 0.0]);
    assert_eq!(v[1].values(), [0.0, 1.0]);

    cfg.dimension = 3;
    let err = Gateway::new(cfg)
        .unwrap()
        .embed_batch(&["first", "second"])
        .unwrap_err();
    server.join().unwrap();
    assert!(matches!(
        err,
        GatewayError::DimensionMismatch { expected: 3, actual: 2 }
    ));
}
