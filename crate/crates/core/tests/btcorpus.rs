use std::sync::Arc;

use proptest::prelude::*;
use serde_json::json;

use signbt::btcorpus::{bt_corpus_stats, build_bt_direction, BtConfig, OnError};
use signbt::corpus::{token_index, TokenIndex};
use signbt::modelio::{Client, Role, StubMap, Synthesizer};
use signbt::{Direction, GoldPair, MotionTokenSequence, SignLang};

struct Fixture {
    gold: Vec<GoldPair>,
    store: TokenIndex,
    t2s: StubMap,
}

/// `n` DGS gold pairs; the synthesizer has no entry for every `gap`-th text.
fn fixture(n: usize, gap: usize) -> Fixture {
    let mut gold = Vec::new();
    let mut seqs = Vec::new();
    let mut t2s = StubMap::default();
    for i in 0..n {
        let text = format!("satz {i}");
        gold.push(GoldPair { id: format!("g{i}"), text: text.clone(), lang: signbt::SpokenLang::De, sign_ref: format!("d{i}"), corpus_id: "dgs-c".into() });
        seqs.push(MotionTokenSequence {
            id: format!("d{i}"),
            sign_lang: SignLang::Dgs,
            synthetic: false,
            codebook_id: "cb".into(),
            tokens: vec![[i as u32, 0, 0]; 1 + i % 5],
        });
        if gap == 0 || i % gap != gap - 1 {
            let len = 1 + (i * 7) % 4;
            t2s.insert(text, json!(vec![[i, 1, 2]; len]));
        }
    }
    Fixture { gold, store: token_index(seqs).unwrap(), t2s }
}

fn config(f: &Fixture, src: SignLang, parallelism: usize) -> BtConfig {
    let mt = Arc::new(Client::stub(Role::Mt, StubMap::echo(), 1000));
    let t2s = Arc::new(Client::stub(Role::T2s, f.t2s.clone(), 1000));
    let mut cfg = BtConfig::new(src, mt, Synthesizer::new(t2s, "cb").unwrap()).unwrap();
    cfg.parallelism = parallelism;
    cfg
}

#[test]
fn pairs_keep_gold_targets_and_synthetic_sources() {
    let f = fixture(6, 0);
    let out = build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Asl, 1)).unwrap();
    assert_eq!(out.pairs.len(), 6);
    for (p, g) in out.pairs.iter().zip(&f.gold) {
        assert_eq!(p.direction, Direction::new(SignLang::Asl, SignLang::Dgs));
        assert!(p.source.synthetic && !p.target.synthetic);
        assert_eq!(&p.target, f.store.get(&g.sign_ref).unwrap());
        assert_eq!(p.provenance.gold_text, g.text);
        assert_eq!(p.provenance.translated_text, g.text);
        assert_eq!(p.source.sign_lang, SignLang::Asl);
        p.check().unwrap();
    }
}

#[test]
fn failures_are_logged_with_stage() {
    let f = fixture(9, 3);
    let out = build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Csl, 1)).unwrap();
    assert_eq!((out.pairs.len(), out.failures.len()), (6, 3));
    assert_eq!(out.failures[0].gold_id, "g2");
    assert_eq!(out.failures[0].stage, Role::T2s);
    assert!(out.failures[0].error.starts_with("no mapping for input"));

    let mut abort = config(&f, SignLang::Csl, 1);
    abort.on_error = OnError::Abort;
    let err = build_bt_direction(&f.gold, &f.store, &abort).unwrap_err();
    assert!(err.to_string().contains("`g2`"), "{err}");
}

#[test]
fn same_language_source_is_refused() {
    let f = fixture(2, 0);
    assert!(build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Dgs, 1)).unwrap_err().is_usage());
}

#[test]
fn stats_match_manual_means() {
    let f = fixture(20, 4);
    let mut pairs = build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Asl, 1)).unwrap().pairs;
    pairs.extend(build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Csl, 1)).unwrap().pairs);
    let stats = bt_corpus_stats(&pairs);
    assert_eq!(stats.total_pairs(), pairs.len());
    for row in &stats.rows {
        let mine: Vec<_> = pairs.iter().filter(|p| p.direction == row.direction).collect();
        let src = mine.iter().map(|p| p.source.len() as f64).sum::<f64>() / mine.len() as f64;
        let tgt = mine.iter().map(|p| p.target.len() as f64).sum::<f64>() / mine.len() as f64;
        assert_eq!(row.pairs, mine.len());
        assert!((row.src_len - src).abs() <= 1e-9);
        assert!((row.tgt_len.unwrap() - tgt).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn count_law_and_order_under_parallelism(n in 1usize..60, gap in 0usize..6, workers in 1usize..8) {
        let f = fixture(n, gap);
        let serial = build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Asl, 1)).unwrap();
        let parallel = build_bt_direction(&f.gold, &f.store, &config(&f, SignLang::Asl, workers)).unwrap();
        prop_assert_eq!(serial.pairs.len() + serial.failures.len(), n);
        prop_assert_eq!(&serial, &parallel);
    }
}
