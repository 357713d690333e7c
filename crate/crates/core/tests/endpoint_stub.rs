//! The endpoint agent against a scripted local HTTP server.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use gridbench::domain::Domain;
use gridbench::harness::{run_episode, EndpointAgent, EndpointClient, EndpointConfig, FailureReason, RunLimits};
use serde_json::{json, Value};

use common::*;

struct Stub {
    url: String,
    requests: Arc<Mutex<Vec<Value>>>,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, Value)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&requests);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        length = value.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            seen.lock()
                .unwrap()
                .push(serde_json::from_slice(&buf).unwrap_or(Value::Null));
            let text = body.to_string();
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
            out.flush().unwrap();
        }
    });
    Stub { url, requests }
}

fn reply(calls: &[(&str, Value)], finish: &str) -> (u16, Value) {
    let tool_calls: Vec<Value> = calls
        .iter()
        .enumerate()
        .map(|(i, (name, args))| {
            json!({"id": format!("c{i}"), "type": "function",
                   "function": {"name": name, "arguments": args.to_string()}})
        })
        .collect();
    (
        200,
        json!({
            "choices": [{"finish_reason": finish,
                         "message": {"role": "assistant", "content": null, "tool_calls": tool_calls}}],
            "usage": {"completion_tokens": 10}
        }),
    )
}

fn client(url: &str) -> EndpointClient {
    let mut config = EndpointConfig::new(url, "stub-model");
    config.backoff = Duration::from_millis(1);
    config.timeout = Duration::from_secs(10);
    EndpointClient::new(config).unwrap()
}

#[test]
fn solves_after_retrying_a_server_error() {
    let (inst, key) = instance(&small_config(Domain::Meal, 1, 0, 25, 4), &pool(Domain::Meal, 4));
    let cell = inst.hidden[0].cell;
    let set = json!({"row": cell.row, "col": cell.col, "id": key.truth[&cell]});
    let stub = serve(vec![
        (503, json!({"error": "busy"})),
        (429, json!({"error": "slow down"})),
        reply(
            &[("set_slot", set), ("get_current_grid_state", json!({}))],
            "tool_calls",
        ),
        reply(&[("done", json!({}))], "tool_calls"),
    ]);
    let mut agent = EndpointAgent::new(client(&stub.url));
    let out = run_episode(&mut agent, "stub", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
    assert_eq!(out.record.failure_reason, FailureReason::None, "{:?}", out.record.error);
    assert_eq!(out.record.reward, 1);
    assert_eq!(out.record.steps, 3);
    assert_eq!(out.record.completion_tokens, 20);

    let requests = stub.requests.lock().unwrap();
    assert_eq!(requests.len(), 4);
    assert_eq!(requests[0]["model"], "stub-model");
    assert_eq!(requests[0]["tools"].as_array().unwrap().len(), 11);
    let last = requests[3]["messages"].as_array().unwrap();
    let tool_msgs: Vec<&Value> = last.iter().filter(|m| m["role"] == "tool").collect();
    assert_eq!(tool_msgs.len(), 2);
    assert_eq!(tool_msgs[0]["tool_call_id"], "c0");
    assert!(tool_msgs[1]["content"].as_str().unwrap().contains("grid"));
}

#[test]
fn fourth_truncated_reply_is_token_overflow() {
    let (inst, key) = instance(&small_config(Domain::Meal, 2, 0, 25, 4), &pool(Domain::Meal, 4));
    let stub = serve(vec![reply(&[("done", json!({}))], "length"); 4]);
    let mut agent = EndpointAgent::new(client(&stub.url));
    let out = run_episode(&mut agent, "stub", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
    assert_eq!(out.record.failure_reason, FailureReason::TokenOverflow);
    assert_eq!(out.record.token_overflows, 4);
    assert_eq!(out.record.steps, 0);
    assert_eq!(out.record.reward, 0);
}

#[test]
fn client_errors_are_not_retried() {
    let (inst, key) = instance(&small_config(Domain::Meal, 2, 0, 25, 4), &pool(Domain::Meal, 4));
    let stub = serve(vec![(400, json!({"error": "bad request"}))]);
    let mut agent = EndpointAgent::new(client(&stub.url));
    let out = run_episode(&mut agent, "stub", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
    assert_eq!(out.record.failure_reason, FailureReason::EndpointError);
    assert!(out.record.error.as_deref().unwrap().contains("400"));
    assert_eq!(stub.requests.lock().unwrap().len(), 1);
}

#[test]
fn retries_are_bounded() {
    let (inst, key) = instance(&small_config(Domain::Meal, 2, 0, 25, 4), &pool(Domain::Meal, 4));
    let stub = serve(vec![(500, json!({})); 3]);
    let mut agent = EndpointAgent::new(client(&stub.url));
    let out = run_episode(&mut agent, "stub", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
    assert_eq!(out.record.failure_reason, FailureReason::EndpointError);
    assert!(out.record.error.as_deref().unwrap().contains("after 3 attempts"));
    assert_eq!(stub.requests.lock().unwrap().len(), 3);
}
