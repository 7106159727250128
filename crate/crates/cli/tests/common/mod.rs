#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use signbt::verify::{CosineScore, DecisionRecord, RatingScore};
use signbt::{CandidatePair, Decision, GoldPair, JointLayout, PoseClip, SignLang, SpokenLang, TextUtterance};

pub fn signbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signbt")).args(args).output().expect("binary runs")
}

/// Runs the binary and returns stdout, panicking with stderr on failure.
pub fn ok(args: &[&str]) -> String {
    let out = signbt(args);
    assert!(out.status.success(), "signbt {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).unwrap());
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

pub fn write_json(path: &Path, value: &serde_json::Value) {
    fs::write(path, value.to_string()).unwrap();
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_clip(rng: &mut ChaCha8Rng, id: &str, lang: SignLang, frames: usize, layout: JointLayout) -> PoseClip {
    PoseClip {
        id: id.into(),
        sign_lang: lang,
        fps: 25.0,
        dims: 2,
        layout,
        frames: (0..frames).map(|_| (0..layout.joints() * 2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
    }
}

pub fn candidate(id: &str, src: (SpokenLang, &str, Vec<String>), tgt: (SpokenLang, &str, Vec<String>)) -> CandidatePair {
    CandidatePair {
        pair_id: id.into(),
        src_text: TextUtterance::new(format!("{id}-s"), src.1, src.0),
        tgt_text: TextUtterance::new(format!("{id}-t"), tgt.1, tgt.0),
        src_clips: src.2,
        tgt_clips: tgt.2,
        llm_rating: None,
        cosine: None,
        decisions: BTreeMap::new(),
    }
}

/// Scored pairs of one language pair: `(rating, cosine in hundredths, count)` groups.
fn scored_block(prefix: &str, langs: (SpokenLang, SpokenLang), groups: &[(u8, u32, usize)]) -> Vec<CandidatePair> {
    let mut out = Vec::new();
    for &(rating, hundredths, count) in groups {
        for _ in 0..count {
            let id = format!("{prefix}{}", out.len());
            let mut p = candidate(&id, (langs.0, "src", vec![format!("{id}-a")]), (langs.1, "tgt", vec![format!("{id}-b")]));
            p.llm_rating = Some(rating);
            p.cosine = Some(f64::from(hundredths) / 100.0);
            out.push(p);
        }
    }
    out
}

/// Released pairs and strict subset whose summary matches the reference screening table.
///
/// Integer rating sums and cosine sums (in hundredths) were chosen so each mean
/// rounds to the reference two-decimal value.
pub fn screening_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    use SpokenLang::*;
    let blocks = [
        // ASL↔CSL: 1,307 → 190
        (
            "ac",
            (En, Zh),
            vec![(5, 88, 180), (4, 88, 10)],
            vec![(1, 55, 599 - 265), (1, 56, 265), (2, 55, 518)],
        ),
        // ASL↔DGS: 752 → 6
        ("ad", (En, De), vec![(4, 65, 6)], vec![(1, 59, 30), (1, 60, 584 - 30), (2, 60, 162)]),
        // CSL↔DGS: 2,943 → 213
        (
            "cd",
            (Zh, De),
            vec![(5, 67, 40), (4, 67, 173)],
            vec![(2, 64, 426), (2, 65, 2019 - 426), (3, 65, 711)],
        ),
    ];
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for (prefix, langs, strict, rest) in blocks {
        let kept = scored_block(&format!("{prefix}k"), langs, &strict);
        after.extend(kept.iter().cloned());
        before.extend(kept);
        before.extend(scored_block(&format!("{prefix}r"), langs, &rest));
    }
    let (b, a) = (dir.join("released.jsonl"), dir.join("strict.jsonl"));
    write_jsonl(&b, &before);
    write_jsonl(&a, &after);
    (b, a)
}

pub const PIPELINE_LAYOUT: JointLayout = JointLayout { body: 3, left_hand: 2, right_hand: 2 };

/// Runs every pipeline stage with stub endpoints inside `dir`; returns the report directory.
pub fn run_pipeline(dir: &Path) -> PathBuf {
    let p = |name: &str| dir.join(name);
    let mut r = rng(0);
    let langs = [(SignLang::Asl, "a"), (SignLang::Csl, "c"), (SignLang::Dgs, "d")];
    let mut clips = Vec::new();
    for (lang, tag) in langs {
        for i in 0..8 {
            let frames = r.random_range(5..=16);
            clips.push(random_clip(&mut r, &format!("{tag}{i}"), lang, frames, PIPELINE_LAYOUT));
        }
    }
    write_jsonl(&p("poses.jsonl"), &clips);

    ok(&["--k", "4", "quantize", "train", "--poses", s(&p("poses.jsonl")), "--out", s(&p("codebook.json"))]);
    ok(&[
        "quantize", "encode", "--poses", s(&p("poses.jsonl")), "--codebook", s(&p("codebook.json")), "--out",
        s(&p("tokens.jsonl")),
    ]);

    let gold: Vec<GoldPair> = (0..8)
        .map(|i| GoldPair {
            id: format!("g{i}"),
            text: format!("satz nummer {i}"),
            lang: SpokenLang::De,
            sign_ref: format!("d{i}"),
            corpus_id: "dgs-demo".into(),
        })
        .collect();
    write_jsonl(&p("gold.jsonl"), &gold);
    write_json(&p("echo.json"), &json!({"echo": true}));
    write_json(&p("t2s.json"), &json!({"fallback": [[0, 1, 2], [3, 0, 1], [2, 2, 3]]}));
    write_json(&p("s2t.json"), &json!({"fallback": "the man opens the door"}));
    write_json(&p("s2t_eval.json"), &json!({"entries": [], "fallback": "a man opens the door"}));
    let mt = format!("stub:{}", s(&p("echo.json")));
    let t2s = format!("stub:{}", s(&p("t2s.json")));
    ok(&[
        "bt", "build", "--gold", s(&p("gold.jsonl")), "--tokens", s(&p("tokens.jsonl")), "--source-lang", "ASL",
        "--source-lang", "CSL", "--mt", &mt, "--t2s", &t2s, "--out", s(&p("bt.jsonl")),
    ]);

    // released cross-lingual pairs with scripted scores and decisions
    let spoken = [SpokenLang::En, SpokenLang::Zh, SpokenLang::De];
    let mut candidates = Vec::new();
    let mut ratings = Vec::new();
    let mut cosines = Vec::new();
    for i in 0..24 {
        let (x, y) = [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)][i % 6];
        let id = format!("x{i}");
        let k = i % 8;
        candidates.push(candidate(
            &id,
            (spoken[x], "a man opens the door", vec![format!("{}{k}", langs[x].1)]),
            (spoken[y], "a man opens a door", vec![format!("{}{}", langs[y].1, (k + 1) % 8), format!("{}{}", langs[y].1, (k + 3) % 8)]),
        ));
        ratings.push(RatingScore { pair_id: id.clone(), llm_rating: [5, 5, 4, 5, 3][i % 5] });
        cosines.push(CosineScore { pair_id: id, cosine: [0.91, 0.5, 0.77, 0.64][i % 4] });
    }
    write_jsonl(&p("candidates.jsonl"), &candidates);
    write_jsonl(&p("ratings.jsonl"), &ratings);
    write_jsonl(&p("cosines.jsonl"), &cosines);
    ok(&[
        "verify", "filter", "--candidates", s(&p("candidates.jsonl")), "--ratings", s(&p("ratings.jsonl")), "--cosines",
        s(&p("cosines.jsonl")), "--out", s(&p("pool.jsonl")), "--rejections", s(&p("rejections.jsonl")),
    ]);
    let pool: Vec<CandidatePair> = signbt::corpus::read_records(p("pool.jsonl")).unwrap();
    let mut decisions = Vec::new();
    for (i, pair) in pool.iter().enumerate() {
        for (j, annotator) in ["A", "B"].into_iter().enumerate() {
            let keep = !(j == 1 && i % 3 == 2);
            let decision = if keep { Decision::Keep } else { Decision::Discard };
            decisions.push(DecisionRecord { pair_id: pair.pair_id.clone(), annotator: annotator.into(), decision, ts: (i * 2 + j) as u64 });
        }
    }
    write_jsonl(&p("decisions.jsonl"), &decisions);
    ok(&[
        "verify", "finalize", "--pool", s(&p("pool.jsonl")), "--decisions", s(&p("decisions.jsonl")), "--annotators",
        "A,B", "--out", s(&p("strict.jsonl")),
    ]);

    let systems = json!([
        {"kind": "direct", "name": "direct", "s2s": format!("stub:{}", s(&p("echo.json")))},
        {"kind": "cascade", "name": "cascade", "s2t": format!("stub:{}", s(&p("s2t.json"))), "mt": mt, "t2s": t2s},
    ]);
    write_json(&p("systems.json"), &systems);
    ok(&[
        "--record-latency=false", "eval", "run", "--systems", s(&p("systems.json")), "--anchors", s(&p("strict.jsonl")),
        "--s2t", &format!("stub:{}", s(&p("s2t_eval.json"))), "--poses", s(&p("poses.jsonl")), "--codebook",
        s(&p("codebook.json")), "--out", s(&p("report")),
    ]);
    p("report")
}

/// Output files of the pipeline, by name, for byte comparison.
pub const PIPELINE_OUTPUTS: &[&str] = &[
    "codebook.json",
    "tokens.jsonl",
    "bt.jsonl",
    "pool.jsonl",
    "rejections.jsonl",
    "strict.jsonl",
    "report/report.json",
    "report/report.txt",
    "report/per_anchor.jsonl",
];
