mod common;

use std::fs;

use common::*;
use proptest::prelude::*;

use signbt::corpus::{load_corpus, load_gold_pairs, read_records, token_index, write_records, Corpus};
use signbt::{
    validate_clip, Error, GoldPair, JointLayout, MotionTokenSequence, S2sRecord, SignLang, SpokenLang,
};

const POSE_LINE: &str = r#"{"id":"p1","sign_lang":"ASL","fps":25.0,"dims":2,"layout":{"body":2,"left_hand":1,"right_hand":1},"frames":[[0,0,1,0,0,1,1,1],[0,0,1,0,0,1,1,1],[0,0,1,0,0,1,1,1]]}"#;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn tokens(id: &str, lang: SignLang, synthetic: bool) -> MotionTokenSequence {
    MotionTokenSequence { id: id.into(), sign_lang: lang, synthetic, codebook_id: "cb".into(), tokens: vec![[1, 2, 3], [4, 5, 6]] }
}

#[test]
fn poses_example_shape() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "poses.jsonl", &format!("{POSE_LINE}\n"));
    let Corpus::Poses(clips) = load_corpus(&path, "poses").unwrap() else { panic!("wrong kind") };
    assert_eq!(clips.len(), 1);
    assert_eq!(clips[0].line, 1);
    assert!(clips[0].record.frames.iter().all(|f| f.len() == 8));
}

#[test]
fn unknown_kind_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "x.jsonl", "");
    assert!(load_corpus(&path, "videos").unwrap_err().is_usage());
}

#[test]
fn malformed_line_names_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "poses.jsonl", &format!("{POSE_LINE}\n\n{{\"id\":\"p2\",\"sign_lang\":\"ASL\"}}\n"));
    match load_corpus(&path, "poses").unwrap_err() {
        Error::Parse { line, message } => {
            assert_eq!(line, 3);
            assert!(message.contains("fps") || message.contains("missing field"), "{message}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn invariant_violation_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = POSE_LINE.replace("[0,0,1,0,0,1,1,1]]", "[0,0,1,0,0,1,1]]");
    let path = write(&dir, "poses.jsonl", &format!("{bad}\n"));
    let err = load_corpus(&path, "poses").unwrap_err();
    assert!(matches!(err, Error::Invariant { line: 1, .. }));
    assert!(err.to_string().contains("frame length mismatch"), "{err}");
}

#[test]
fn gold_partner_check() {
    let dir = tempfile::tempdir().unwrap();
    let store = token_index([tokens("asl1", SignLang::Asl, false)]).unwrap();
    let ok = write(&dir, "ok.jsonl", r#"{"id":"g1","text":"hello","lang":"en","sign_ref":"asl1","corpus_id":"c"}"#);
    assert_eq!(load_gold_pairs(&ok, &store).unwrap().len(), 1);
    let bad = write(&dir, "bad.jsonl", r#"{"id":"g1","text":"hallo","lang":"de","sign_ref":"asl1","corpus_id":"c"}"#);
    assert!(load_gold_pairs(&bad, &store).unwrap_err().to_string().contains("partner mismatch"));
}

#[test]
fn nan_and_short_frame_violations() {
    let mut r = rng(1);
    let mut clip = random_clip(&mut r, "c", 10, JointLayout::default(), 2);
    assert!(validate_clip(&clip).is_empty());
    clip.frames[4][3] = f64::NAN;
    let v = validate_clip(&clip);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].to_string(), "non-finite coordinate, frame 4");
    clip.frames[4][3] = 0.0;
    clip.frames[7].pop();
    assert!(validate_clip(&clip)[0].to_string().starts_with("frame length mismatch"));
}

#[test]
fn s2s_records_keep_synthetic_flags() {
    let dir = tempfile::tempdir().unwrap();
    let rec = S2sRecord {
        direction: "CSL-ASL".parse().unwrap(),
        source: tokens("s", SignLang::Csl, false),
        target_ref: "t".into(),
        provenance: signbt::Provenance { gold_corpus_id: "c".into(), gold_text: "hi".into(), translated_text: "你好".into() },
    };
    let path = dir.path().join("s2s.jsonl");
    write_records(&path, &[rec]).unwrap();
    // a non-synthetic source is rejected on load
    assert!(matches!(load_corpus(&path, "s2s_pairs").unwrap_err(), Error::Invariant { .. }));
}

fn round_trip_bytes(kind: &str, text: &str) {
    let dir = tempfile::tempdir().unwrap();
    let src = write(&dir, "in.jsonl", text);
    let out = dir.path().join("out.jsonl");
    match load_corpus(&src, kind).unwrap() {
        Corpus::Poses(v) => write_records(&out, &v.into_iter().map(|l| l.record).collect::<Vec<_>>()),
        Corpus::Tokens(v) => write_records(&out, &v.into_iter().map(|l| l.record).collect::<Vec<_>>()),
        Corpus::GoldManifest(v) => write_records(&out, &v.into_iter().map(|l| l.record).collect::<Vec<_>>()),
        Corpus::S2sPairs(v) => write_records(&out, &v.into_iter().map(|l| l.record).collect::<Vec<_>>()),
        Corpus::Candidates(v) => write_records(&out, &v.into_iter().map(|l| l.record).collect::<Vec<_>>()),
    }
    .unwrap();
    assert_eq!(fs::read_to_string(&out).unwrap(), text, "{kind}");
}

#[test]
fn every_kind_round_trips_byte_for_byte() {
    let mut r = rng(5);
    let clip = random_clip(&mut r, "c", 3, JointLayout::new(2, 1, 1), 3);
    round_trip_bytes("poses", &(serde_json::to_string(&clip).unwrap() + "\n"));
    round_trip_bytes("tokens", &(serde_json::to_string(&tokens("t", SignLang::Dgs, false)).unwrap() + "\n"));
    let gold = GoldPair { id: "g".into(), text: "guten Tag".into(), lang: SpokenLang::De, sign_ref: "t".into(), corpus_id: "c".into() };
    round_trip_bytes("gold_manifest", &(serde_json::to_string(&gold).unwrap() + "\n"));
    let rec = S2sRecord {
        direction: "ASL-DGS".parse().unwrap(),
        source: tokens("s", SignLang::Asl, true),
        target_ref: "t".into(),
        provenance: signbt::Provenance { gold_corpus_id: "c".into(), gold_text: "guten Tag".into(), translated_text: "good day".into() },
    };
    let line = serde_json::to_string(&rec).unwrap();
    assert!(line.starts_with(r#"{"direction":["ASL","DGS"],"source":"#));
    round_trip_bytes("s2s_pairs", &(line + "\n"));
    let cand = r#"{"pair_id":"p","src_text":{"id":"a","text":"hi","lang":"en"},"tgt_text":{"id":"b","text":"你好","lang":"zh"},"src_clips":["x"],"tgt_clips":["y"],"llm_rating":5,"cosine":0.91,"decisions":{"A":"keep"}}"#;
    round_trip_bytes("candidates", &format!("{cand}\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_clips_round_trip(seed in any::<u64>(), frames in 1usize..6, dims in 2usize..=3) {
        let mut r = rng(seed);
        let clips: Vec<_> = (0..3).map(|i| random_clip(&mut r, &format!("c{i}"), frames, JointLayout::new(2, 2, 1), dims)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        write_records(&path, &clips).unwrap();
        let first = fs::read(&path).unwrap();
        let back: Vec<signbt::PoseClip> = read_records(&path).unwrap();
        prop_assert_eq!(&back, &clips);
        write_records(&path, &back).unwrap();
        prop_assert_eq!(fs::read(&path).unwrap(), first);
    }
}
