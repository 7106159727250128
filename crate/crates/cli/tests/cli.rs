mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};

use serde_json::{json, Value};

use common::*;
use signbt::corpus::read_records;
use signbt::{CandidatePair, JointLayout, PoseClip, SignLang};

fn code(args: &[&str]) -> i32 {
    signbt(args).status.code().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["quantize", "train"]), 2);
    assert_eq!(code(&["--rating-min", "many", "verify", "stats"]), 2);
    assert_eq!(code(&["metric", "bleu", "--hyp", "h", "--ref", "r", "--lang", "BSL"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(code(&["quantize", "train", "--poses", s(&missing), "--out", s(&dir.path().join("cb.json"))]), 1);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let out = signbt(&["verify", "stats", "--before", s(&bad), "--after", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn quantize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let mut r = rng(1);
    let clips: Vec<PoseClip> = (0..6).map(|i| random_clip(&mut r, &format!("c{i}"), SignLang::Asl, 4 + i, JointLayout::new(2, 1, 1))).collect();
    write_jsonl(&p("poses.jsonl"), &clips);
    let msg = ok(&["--k", "3", "quantize", "train", "--poses", s(&p("poses.jsonl")), "--out", s(&p("cb.json"))]);
    assert!(msg.starts_with("trained"), "{msg}");
    ok(&["quantize", "encode", "--poses", s(&p("poses.jsonl")), "--codebook", s(&p("cb.json")), "--out", s(&p("tok.jsonl"))]);
    ok(&["quantize", "decode", "--tokens", s(&p("tok.jsonl")), "--codebook", s(&p("cb.json")), "--out", s(&p("dec.jsonl"))]);
    let decoded: Vec<PoseClip> = read_records(p("dec.jsonl")).unwrap();
    for (c, d) in clips.iter().zip(&decoded) {
        assert_eq!(d.num_frames(), c.num_frames().div_ceil(4) * 4);
    }
    // a codebook trained with another layout is refused
    let other: Vec<PoseClip> = (0..2).map(|i| random_clip(&mut r, &format!("o{i}"), SignLang::Asl, 4, JointLayout::new(1, 1, 1))).collect();
    write_jsonl(&p("other.jsonl"), &other);
    assert_eq!(code(&["quantize", "encode", "--poses", s(&p("other.jsonl")), "--codebook", s(&p("cb.json")), "--out", s(&p("x"))]), 1);
}

#[test]
fn metrics_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let clip = random_clip(&mut rng(2), "c", SignLang::Dgs, 5, JointLayout::new(2, 1, 1));
    write_jsonl(&p("a.jsonl"), &[clip.clone(), clip]);
    let out = ok(&["metric", "pa-mpjpe", "--pred", s(&p("a.jsonl")), "--ref", s(&p("a.jsonl"))]);
    assert_eq!(out.lines().count(), 2);
    for line in out.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["overall"].as_f64().unwrap() < 1e-9);
    }

    fs::write(p("hyp.txt"), "the cat sat on the mat\n").unwrap();
    fs::write(p("ref.txt"), "the cat sat on the mat\n").unwrap();
    let v: Value = serde_json::from_str(&ok(&["metric", "bleu", "--hyp", s(&p("hyp.txt")), "--ref", s(&p("ref.txt")), "--lang", "ASL"])).unwrap();
    assert_eq!(v["bleu"], 100.0);
    fs::write(p("hyp.txt"), "猫坐在垫子上\n").unwrap();
    fs::write(p("ref.txt"), "猫坐在床上\n").unwrap();
    let v: Value = serde_json::from_str(&ok(&["metric", "bleu", "--hyp", s(&p("hyp.txt")), "--ref", s(&p("ref.txt")), "--lang", "CSL", "--max-n", "1"])).unwrap();
    assert!((v["bleu"].as_f64().unwrap() - 100.0 * 4.0 / 6.0).abs() < 1e-9, "{v}");
}

#[test]
fn screening_stats_text() {
    let dir = tempfile::tempdir().unwrap();
    let (before, after) = screening_fixture(dir.path());
    let text = ok(&["verify", "stats", "--before", s(&before), "--after", s(&after)]);
    for needle in ["ASL↔CSL", "ASL↔DGS", "CSL↔DGS", "1,307", "190", "4.95", "0.88", "5,002", "409", "4.54", "0.77"] {
        assert!(text.contains(needle), "{needle} missing from\n{text}");
    }
    // the strict file must be a subset of the released one
    let stray = dir.path().join("stray.jsonl");
    write_jsonl(&stray, &[candidate("zz", (signbt::SpokenLang::En, "a", vec!["x".into()]), (signbt::SpokenLang::De, "b", vec!["y".into()]))]);
    assert_eq!(code(&["verify", "stats", "--before", s(&before), "--after", s(&stray)]), 1);
}

#[test]
fn pipeline_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(dir.path());
    let p = |n: &str| dir.path().join(n);

    let bt = ok(&["bt", "stats", "--pairs", s(&p("bt.jsonl")), "--tokens", s(&p("tokens.jsonl"))]);
    assert!(bt.contains("ASL") && bt.contains("CSL"), "{bt}");
    let v: Value = serde_json::from_str(&ok(&["bt", "stats", "--pairs", s(&p("bt.jsonl")), "--json"])).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert!(v["rows"][0]["tgt_len"].is_null());

    // ratings cycle 5,5,4,5,3 and cosines 0.91,0.5,0.77,0.64
    let pool: Vec<CandidatePair> = read_records(p("pool.jsonl")).unwrap();
    assert!(pool.iter().all(|c| c.llm_rating == Some(5) && c.cosine.unwrap() > 0.5));
    let rejections = fs::read_to_string(p("rejections.jsonl")).unwrap();
    assert_eq!(pool.len() + rejections.lines().count(), 24);
    let strict: Vec<CandidatePair> = read_records(p("strict.jsonl")).unwrap();
    assert_eq!(strict.len(), pool.len() - pool.len() / 3);

    let report_json: Value = serde_json::from_str(&fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(report_json["cells"].as_array().unwrap().len(), 12);
    let text = fs::read_to_string(report.join("report.txt")).unwrap();
    assert!(text.contains("direct") && text.contains("cascade"));
    let anchors = fs::read_to_string(report.join("per_anchor.jsonl")).unwrap();
    assert!(anchors.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}

#[test]
fn finalize_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let pool = vec![
        candidate("p0", (signbt::SpokenLang::En, "a", vec!["x".into()]), (signbt::SpokenLang::De, "b", vec!["y".into()])),
        candidate("p1", (signbt::SpokenLang::En, "c", vec!["x".into()]), (signbt::SpokenLang::De, "d", vec!["y".into()])),
    ];
    write_jsonl(&p("pool.jsonl"), &pool);
    let decisions = [("p0", "A", "keep"), ("p0", "B", "keep"), ("p1", "A", "keep"), ("p1", "B", "discard")]
        .iter()
        .enumerate()
        .map(|(ts, (id, who, d))| json!({"pair_id": id, "annotator": who, "decision": d, "ts": ts}))
        .collect::<Vec<_>>();
    write_jsonl(&p("dec.jsonl"), &decisions);
    let out = ok(&["verify", "finalize", "--pool", s(&p("pool.jsonl")), "--decisions", s(&p("dec.jsonl")), "--annotators", "A,B"]);
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("\"p0\""));
    // incomplete decisions are a data error
    write_jsonl(&p("dec.jsonl"), &decisions[..3]);
    assert_eq!(code(&["verify", "finalize", "--pool", s(&p("pool.jsonl")), "--decisions", s(&p("dec.jsonl")), "--annotators", "A,B"]), 1);
}

fn http(addr: &str, request: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(request.as_bytes()).unwrap();
    let mut reply = String::new();
    stream.read_to_string(&mut reply).unwrap();
    reply
}

#[test]
fn review_serve_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let pool: Vec<CandidatePair> = (0..10)
        .map(|i| candidate(&format!("p{i}"), (signbt::SpokenLang::En, "a", vec!["x".into()]), (signbt::SpokenLang::Zh, "b", vec!["y".into()])))
        .collect();
    write_jsonl(&p("pool.jsonl"), &pool);
    let mut child = Command::new(env!("CARGO_BIN_EXE_signbt"))
        .args(["review", "serve", "--pool", s(&p("pool.jsonl")), "--annotators", "A,B", "--port", "0"])
        .args(["--decisions", s(&p("log.jsonl")), "--session-id", "t1"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().rsplit(' ').next().unwrap().to_string();
    let addr = url.trim_start_matches("http://").to_string();

    for i in 0..10 {
        for who in ["A", "B"] {
            let decision = if who == "B" && i == 3 { "discard" } else { "keep" };
            let body = json!({"annotator": who, "pair_id": format!("p{i}"), "decision": decision}).to_string();
            let req = format!(
                "POST /session/t1/decision HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            assert!(http(&addr, &req).starts_with("HTTP/1.1 200"));
        }
    }
    let reply = http(&addr, "GET /export HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    let body = reply.split("\r\n\r\n").nth(1).unwrap();
    assert_eq!(body.lines().count(), 9);
    assert!(!body.contains("\"p3\""));
    assert_eq!(fs::read_to_string(p("log.jsonl")).unwrap().lines().count(), 20);
}
