//! Remote backend adapter against a scripted loopback HTTP stub: auth
//! header, retry/backoff, score clamping, and protocol error surfaces.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use catsearch::core::{AnswerId, BudgetLedger, Policy, QuestionId, RngStream, SamplingParams, Step};
use catsearch::harness::{RemoteBackend, RemoteConfig, RemotePolicy, RemotePrm};
use catsearch::prm::Prm;
use catsearch::search::best_of_n;
use catsearch::Error;

#[derive(Debug, Clone)]
struct Recorded {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// What the stub does with one request: respond, or drop the connection to
/// simulate a transport failure.
enum Reply {
    Json(u16, String),
    Hangup,
}

type Handler = Box<dyn FnMut(usize, &str, &serde_json::Value) -> Reply + Send>;

/// One-thread HTTP stub on an ephemeral loopback port. Connections are
/// closed after each response; the thread dies with the process.
fn spawn_stub(mut handler: Handler) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let base = format!("http://{}", listener.local_addr().unwrap());
    let requests: Arc<Mutex<Vec<Recorded>>> = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    std::thread::spawn(move || {
        let mut count = 0usize;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let Some((path, auth, body)) = read_request(&mut stream) else { continue };
            let value: serde_json::Value =
                serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
            log.lock().unwrap().push(Recorded { path: path.clone(), auth, body: value.clone() });
            let reply = handler(count, &path, &value);
            count += 1;
            match reply {
                Reply::Hangup => drop(stream),
                Reply::Json(status, body) => {
                    let reason = match status {
                        200 => "OK",
                        404 => "Not Found",
                        500 => "Internal Server Error",
                        503 => "Service Unavailable",
                        _ => "Other",
                    };
                    let response = format!(
                        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
                         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = stream.write_all(response.as_bytes());
                }
            }
        }
    });
    (base, requests)
}

fn read_request(stream: &mut TcpStream) -> Option<(String, Option<String>, Vec<u8>)> {
    let mut buf = Vec::new();
    let mut tmp = [0u8; 2048];
    let header_end = loop {
        let n = stream.read(&mut tmp).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&tmp[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        if buf.len() > 1 << 16 {
            return None;
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).into_owned();
    let mut lines = head.lines();
    let path = lines.next()?.split_whitespace().nth(1)?.to_string();
    let mut content_length = 0usize;
    let mut auth = None;
    for line in lines {
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.trim().parse().ok()?,
                "authorization" => auth = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = buf[header_end..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut tmp).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&tmp[..n]);
    }
    Some((path, auth, body))
}

fn backend_for(base_url: &str, token_env: &str, token: &str) -> RemoteBackend {
    std::env::set_var(token_env, token);
    RemoteBackend::connect(RemoteConfig {
        base_url: base_url.to_string(),
        model: "stub-model".into(),
        token_env: token_env.into(),
        timeout_ms: 2000,
        retry_base_ms: 1,
        step_delimiter: "\n".into(),
    })
    .expect("token is set")
}

fn quality_free_path() -> catsearch::core::ReasoningPath {
    let mut path = catsearch::core::ReasoningPath::new(QuestionId(42));
    path.push_step(Step::Text("first step".into())).unwrap();
    path
}

#[test]
fn fixed_score_round_trips_with_bearer_auth() {
    let (base, requests) =
        spawn_stub(Box::new(|_, _, _| Reply::Json(200, r#"{"score": 0.7}"#.into())));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_A", "sk-test-abc");
    let prm = RemotePrm::new(&backend);
    assert_eq!(prm.score(&quality_free_path()), 0.7);
    assert_eq!(backend.clamp_warning_count(), 0);
    assert_eq!(prm.name(), "remote-stub-model");

    let log = requests.lock().unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].path, "/v1/score");
    assert_eq!(log[0].auth.as_deref(), Some("Bearer sk-test-abc"));
    assert_eq!(log[0].body["model"], "stub-model");
    assert_eq!(log[0].body["question_id"], 42);
    assert_eq!(log[0].body["prefix"], "first step");
}

#[test]
fn out_of_range_scores_clamp_and_count_warnings() {
    let (base, _) = spawn_stub(Box::new(|count, _, _| {
        let body = if count == 0 { r#"{"score": 1.3}"# } else { r#"{"score": -0.25}"# };
        Reply::Json(200, body.into())
    }));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_B", "tok");
    let prm = RemotePrm::new(&backend);
    assert_eq!(prm.score(&quality_free_path()), 1.0, "high scores clamp to 1");
    assert_eq!(prm.score(&quality_free_path()), 0.0, "low scores clamp to 0");
    assert_eq!(backend.clamp_warning_count(), 2);
    assert_eq!(prm.request_failure_count(), 0, "clamping is not a failure");
}

#[test]
fn transport_failures_retry_then_succeed_on_third_attempt() {
    let (base, _) = spawn_stub(Box::new(|count, _, _| {
        if count < 2 {
            Reply::Hangup
        } else {
            Reply::Json(200, r#"{"score": 0.5}"#.into())
        }
    }));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_C", "tok");
    let prm = RemotePrm::new(&backend);
    assert_eq!(prm.try_score(&quality_free_path()).unwrap(), 0.5);
    assert_eq!(backend.attempt_count(), 3, "two failed attempts plus the success");
}

#[test]
fn server_errors_retry_and_recover() {
    let (base, _) = spawn_stub(Box::new(|count, _, _| {
        if count == 0 {
            Reply::Json(503, String::new())
        } else {
            Reply::Json(200, r#"{"score": 0.9}"#.into())
        }
    }));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_D", "tok");
    let prm = RemotePrm::new(&backend);
    assert_eq!(prm.try_score(&quality_free_path()).unwrap(), 0.9);
    assert_eq!(backend.attempt_count(), 2);
}

#[test]
fn persistent_transport_failure_exhausts_three_attempts() {
    let (base, _) = spawn_stub(Box::new(|_, _, _| Reply::Hangup));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_E", "tok");
    let prm = RemotePrm::new(&backend);
    let err = prm.try_score(&quality_free_path());
    assert!(matches!(err, Err(Error::BackendUnavailable(_))), "got {err:?}");
    assert_eq!(backend.attempt_count(), 3);
    assert_eq!(prm.score(&quality_free_path()), 0.5, "trait impl degrades to neutral");
    assert_eq!(prm.request_failure_count(), 1);
}

#[test]
fn client_errors_fail_fast_without_retries() {
    let (base, _) = spawn_stub(Box::new(|_, _, _| Reply::Json(404, String::new())));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_F", "tok");
    let prm = RemotePrm::new(&backend);
    let err = prm.try_score(&quality_free_path());
    assert!(matches!(err, Err(Error::Protocol(_))), "got {err:?}");
    assert_eq!(backend.attempt_count(), 1, "4xx must not burn retries");
}

#[test]
fn malformed_bodies_are_protocol_errors_never_clamped() {
    let (base, _) = spawn_stub(Box::new(|count, _, _| {
        let body = match count {
            0 => r#"{"points": 3}"#,
            1 => r#"{"score": "high"}"#,
            _ => "not json at all",
        };
        Reply::Json(200, body.into())
    }));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_G", "tok");
    let prm = RemotePrm::new(&backend);
    for _ in 0..3 {
        let err = prm.try_score(&quality_free_path());
        assert!(matches!(err, Err(Error::Protocol(_))), "got {err:?}");
    }
    assert_eq!(backend.clamp_warning_count(), 0, "structure errors never clamp");
}

#[test]
fn best_of_n_runs_end_to_end_against_the_stub() {
    let (base, requests) = spawn_stub(Box::new(|count, path, _| match path {
        "/v1/step" => Reply::Json(200, format!(r#"{{"step": "thought-{count}"}}"#)),
        "/v1/answer" => Reply::Json(200, r#"{"answer": 2}"#.into()),
        "/v1/score" => Reply::Json(200, format!(r#"{{"score": {}}}"#, 0.1 * count as f64 % 1.0)),
        other => panic!("unexpected path {other}"),
    }));
    let backend = backend_for(&base, "CATSEARCH_STUB_TOKEN_H", "tok");
    let policy = RemotePolicy::new(&backend, QuestionId(7), 2).unwrap();
    let prm = RemotePrm::new(&backend);
    let mut ledger = BudgetLedger::new(3).unwrap();
    let result = best_of_n(
        &policy,
        &prm,
        &SamplingParams::default(),
        3,
        &mut ledger,
        &RngStream::new(1, 1),
    )
    .unwrap();
    assert_eq!(result.paths_consumed, 3);
    assert_eq!(result.all_candidates.len(), 3);
    assert_eq!(result.selected.path.answer(), Some(AnswerId(2)));
    assert_eq!(result.correct, None, "remote tasks have no ground truth");
    assert_eq!(policy.depth(), 2);
    // 2 steps + 1 answer + 1 score per candidate.
    assert_eq!(requests.lock().unwrap().len(), 12);
}
