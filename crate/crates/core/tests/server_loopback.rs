use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;

use eosched_core::protocol::{Encoding, ErrorCode, Response};
use eosched_core::server::{local_trajectory, remote_trajectory, run_session, EnvServer, RemoteEnv};
use eosched_core::{EnvConfig, ScenarioConfig};

fn cfg() -> Arc<EnvConfig> {
    ScenarioConfig::tiny().build().unwrap().env
}

fn actions(k: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 7 + 3) % (k + 1)).collect()
}

#[test]
fn json_and_binary_encodings_agree_with_local() {
    let cfg = cfg();
    let handle = EnvServer::bind(Arc::clone(&cfg), "127.0.0.1:0").unwrap().spawn().unwrap();
    let acts = actions(cfg.k(), 60);
    let local = local_trajectory(&cfg, 4, None, &acts).unwrap();
    for enc in [Encoding::B64f32, Encoding::Json] {
        let mut client = RemoteEnv::connect(handle.addr()).unwrap();
        client.hello(None).unwrap();
        let remote = remote_trajectory(&mut client, 4, None, &acts, enc).unwrap();
        assert_eq!(remote, local, "{enc:?}");
        client.close().unwrap();
    }
    handle.shutdown().unwrap();
}

#[test]
fn concurrent_sessions_are_isolated() {
    let cfg = cfg();
    let handle = EnvServer::bind(Arc::clone(&cfg), "127.0.0.1:0").unwrap().spawn().unwrap();
    let addr = handle.addr();
    let workers: Vec<_> = (0..4u64)
        .map(|seed| {
            let cfg = Arc::clone(&cfg);
            thread::spawn(move || {
                let acts = actions(cfg.k(), 40 + seed as usize);
                let mut client = RemoteEnv::connect(addr).unwrap();
                let remote = remote_trajectory(&mut client, seed, None, &acts, Encoding::B64f32).unwrap();
                assert_eq!(remote, local_trajectory(&cfg, seed, None, &acts).unwrap());
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    handle.shutdown().unwrap();
}

#[test]
fn closed_connection_does_not_leak_state() {
    let cfg = cfg();
    let handle = EnvServer::bind(Arc::clone(&cfg), "127.0.0.1:0").unwrap().spawn().unwrap();
    let mut first = RemoteEnv::connect(handle.addr()).unwrap();
    first.reset(1, None, None).unwrap();
    first.step(1, None).unwrap();
    first.close().unwrap();

    let mut second = RemoteEnv::connect(handle.addr()).unwrap();
    let spec = second.hello(None).unwrap();
    assert_eq!(spec.k, cfg.k());
    match second.request_raw(r#"{"type":"step","action":0}"#).unwrap() {
        Response::Error { code, .. } => assert_eq!(code, ErrorCode::NoEpisode),
        other => panic!("expected no_episode, got {other:?}"),
    }
    handle.shutdown().unwrap();
}

#[test]
fn raw_tcp_lines() {
    let cfg = cfg();
    let handle = EnvServer::bind(Arc::clone(&cfg), "127.0.0.1:0").unwrap().spawn().unwrap();
    let mut stream = TcpStream::connect(handle.addr()).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut exchange = |line: &str| -> serde_json::Value {
        stream.write_all(line.as_bytes()).unwrap();
        let mut out = String::new();
        reader.read_line(&mut out).unwrap();
        assert!(out.ends_with('\n'));
        serde_json::from_str(&out).unwrap()
    };
    let spec = exchange("{\"type\":\"hello\"}\n");
    assert_eq!(spec["type"], "spec");
    assert_eq!(spec["K"], cfg.k());
    assert_eq!(spec["action_count"], cfg.k() + 1);
    assert_eq!(exchange("not json\n")["code"], "bad_request");
    assert_eq!(exchange("{\"type\":\"step\",\"action\":-1}\n")["code"], "bad_action");
    let state = exchange("{\"type\":\"reset\",\"seed\":3,\"encoding\":\"b64f32\"}\n");
    assert_eq!(state["type"], "state");
    assert_eq!(state["observation"]["encoding"], "b64f32");
    let big = format!("{{\"type\":\"step\",\"action\":{}}}\n", cfg.k() + 1);
    assert_eq!(exchange(&big)["code"], "bad_action");
    assert_eq!(exchange("{\"type\":\"close\"}\n")["type"], "closed");
    handle.shutdown().unwrap();
}

#[test]
fn stdio_session_script() {
    let input = b"{\"type\":\"hello\"}\n\n{\"type\":\"reset\",\"seed\":1}\n{\"type\":\"step\",\"action\":0}\n{\"type\":\"close\"}\n{\"type\":\"hello\"}\n";
    let mut out = Vec::new();
    run_session(cfg(), &input[..], &mut out).unwrap();
    let kinds: Vec<String> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["type"].as_str().unwrap().to_string())
        .collect();
    // blank line skipped, nothing after close
    assert_eq!(kinds, ["spec", "state", "state", "closed"]);
}
