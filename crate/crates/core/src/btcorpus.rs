//! Cross-lingual sign back-translation.
//!
//! For every gold (text, sign) pair of a corpus in sign language `s'` and a
//! requested source language `s`: translate the text into the partner
//! spoken language of `s`, synthesize source tokens from it, and pair the
//! synthetic source with the untouched gold target.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenIndex;
use crate::error::{Error, Result};
use crate::lang::{Direction, SignLang};
use crate::modelio::{Client, ModelError, Request, Role, Synthesizer};
use crate::types::{GoldPair, MotionTokenSequence, Provenance, S2SPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnError {
    #[default]
    SkipAndLog,
    Abort,
}

impl std::str::FromStr for OnError {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" | "skip_and_log" => Ok(OnError::SkipAndLog),
            "abort" => Ok(OnError::Abort),
            other => Err(Error::Usage(format!("unknown on-error policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BtConfig {
    pub source_sign_lang: SignLang,
    pub mt: Arc<Client>,
    pub synthesizer: Synthesizer,
    pub on_error: OnError,
    /// Gold pairs processed concurrently; output order is input order regardless.
    pub parallelism: usize,
}

impl BtConfig {
    pub fn new(source_sign_lang: SignLang, mt: Arc<Client>, synthesizer: Synthesizer) -> Result<Self> {
        if mt.role() != Role::Mt {
            return Err(Error::Usage(format!("mt endpoint has role {}", mt.role())));
        }
        Ok(Self { source_sign_lang, mt, synthesizer, on_error: OnError::default(), parallelism: 1 })
    }
}

/// A gold pair that produced no s2s pair, for the sidecar log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtFailure {
    pub gold_id: String,
    pub direction: Direction,
    pub stage: Role,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BtOutput {
    pub pairs: Vec<S2SPair>,
    pub failures: Vec<BtFailure>,
}

fn build_one(gold: &GoldPair, target: &MotionTokenSequence, cfg: &BtConfig) -> std::result::Result<S2SPair, (Role, ModelError)> {
    let src = cfg.source_sign_lang;
    let translated = cfg
        .mt
        .invoke(&Request::Mt { text: gold.text.clone(), src: gold.lang, tgt: src.partner() })
        .map_err(|e| (Role::Mt, e))?;
    let translated_text = translated.payload.as_text().expect("mt returns text").to_string();
    let (source, _) = cfg
        .synthesizer
        .synthesize(format!("{}.bt.{}", gold.id, src), &translated_text, src)
        .map_err(|e| (Role::T2s, e))?;
    Ok(S2SPair {
        direction: Direction::new(src, target.sign_lang),
        source,
        target: target.clone(),
        provenance: Provenance {
            gold_corpus_id: gold.corpus_id.clone(),
            gold_text: gold.text.clone(),
            translated_text,
        },
    })
}

/// Builds one direction `cfg.source_sign_lang → s'` from the gold corpus of `s'`.
pub fn build_bt_direction(gold: &[GoldPair], gold_tokens: &TokenIndex, cfg: &BtConfig) -> Result<BtOutput> {
    let mut targets = Vec::with_capacity(gold.len());
    for g in gold {
        let target = gold_tokens
            .get(&g.sign_ref)
            .ok_or_else(|| Error::Data(format!("gold pair `{}` references unknown clip `{}`", g.id, g.sign_ref)))?;
        g.check_partner(target.sign_lang).map_err(Error::Data)?;
        if target.sign_lang == cfg.source_sign_lang {
            return Err(Error::Usage(format!(
                "source language {} equals the gold sign language of `{}`",
                cfg.source_sign_lang, g.id
            )));
        }
        if target.synthetic {
            return Err(Error::Data(format!("gold clip `{}` is marked synthetic", target.id)));
        }
        targets.push(target);
    }

    let results = run_ordered(gold.len(), cfg.parallelism.max(1), cfg.on_error == OnError::Abort, |i| {
        build_one(&gold[i], targets[i], cfg)
    });

    let mut out = BtOutput::default();
    for (i, result) in results.into_iter().enumerate() {
        let g = &gold[i];
        match result {
            Some(Ok(pair)) => out.pairs.push(pair),
            Some(Err((stage, e))) => {
                let direction = Direction::new(cfg.source_sign_lang, targets[i].sign_lang);
                if cfg.on_error == OnError::Abort {
                    return Err(Error::Data(format!("gold pair `{}` ({direction}): stage {stage}: {e}", g.id)));
                }
                out.failures.push(BtFailure { gold_id: g.id.clone(), direction, stage, error: e.to_string() });
            }
            // not attempted because an earlier item aborted
            None => {}
        }
    }
    Ok(out)
}

/// Runs `f(0..n)` on up to `workers` threads and returns results by index.
/// With `stop_on_err`, items not yet started after a failure are skipped.
pub(crate) fn run_ordered<T, E, F>(n: usize, workers: usize, stop_on_err: bool, f: F) -> Vec<Option<std::result::Result<T, E>>>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> std::result::Result<T, E> + Sync,
{
    if workers <= 1 || n <= 1 {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let r = f(i);
            let failed = r.is_err();
            out.push(Some(r));
            if failed && stop_on_err {
                out.resize_with(n, || None);
                break;
            }
        }
        return out;
    }
    let next = AtomicUsize::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let mut slots: Vec<Option<std::result::Result<T, E>>> = (0..n).map(|_| None).collect();
    let collected: Vec<Vec<(usize, std::result::Result<T, E>)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers.min(n))
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        if stop_on_err && failed.load(Ordering::SeqCst) {
                            break;
                        }
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= n {
                            break;
                        }
                        let r = f(i);
                        if r.is_err() {
                            failed.store(true, Ordering::SeqCst);
                        }
                        local.push((i, r));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (i, r) in collected.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub direction: Direction,
    pub pairs: usize,
    pub src_len: f64,
    /// Absent when target sequences were not available.
    pub tgt_len: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    pub fn total_pairs(&self) -> usize {
        self.rows.iter().map(|r| r.pairs).sum()
    }

    pub fn row(&self, direction: Direction) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.direction == direction)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>9} {:>9} {:>9}", "direction", "#pairs", "src_len", "tgt_len");
        for r in &self.rows {
            let tgt = r.tgt_len.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>9.2} {:>9}",
                format!("{}->{}", r.direction.source, r.direction.target),
                r.pairs,
                r.src_len,
                tgt
            );
        }
        let _ = writeln!(out, "{:<12} {:>9}", "total", self.total_pairs());
        out
    }
}

/// Per-direction pair counts and mean token lengths.
///
/// Rows are grouped by gold (target) language, then source language.
pub fn bt_corpus_stats(pairs: &[S2SPair]) -> StatsTable {
    stats_from_lengths(pairs.iter().map(|p| (p.direction, p.source.len(), Some(p.target.len()))))
}

/// Same as [`bt_corpus_stats`] from `(direction, source length, target length)` triples.
pub fn stats_from_lengths(items: impl IntoIterator<Item = (Direction, usize, Option<usize>)>) -> StatsTable {
    #[derive(Default)]
    struct Acc {
        n: usize,
        src: usize,
        tgt: usize,
        tgt_known: bool,
    }
    let mut groups: BTreeMap<(SignLang, SignLang), Acc> = BTreeMap::new();
    for (d, src, tgt) in items {
        let acc = groups.entry((d.target, d.source)).or_insert(Acc { tgt_known: true, ..Acc::default() });
        acc.n += 1;
        acc.src += src;
        match tgt {
            Some(t) => acc.tgt += t,
            None => acc.tgt_known = false,
        }
    }
    StatsTable {
        rows: groups
            .into_iter()
            .map(|((target, source), a)| StatsRow {
                direction: Direction::new(source, target),
                pairs: a.n,
                src_len: a.src as f64 / a.n as f64,
                tgt_len: a.tgt_known.then(|| a.tgt as f64 / a.n as f64),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::lang::SpokenLang;
    use crate::modelio::StubMap;

    fn gold_fixture() -> (Vec<GoldPair>, TokenIndex) {
        let mut gold = Vec::new();
        let mut tokens = TokenIndex::new();
        for (i, text) in ["hello", "thank you", "good morning"].iter().enumerate() {
            let id = format!("g{i}");
            let clip = format!("asl{i}");
            gold.push(GoldPair {
                id: id.clone(),
                text: text.to_string(),
                lang: SpokenLang::En,
                sign_ref: clip.clone(),
                corpus_id: "How2Sign".into(),
            });
            tokens.insert(
                clip.clone(),
                MotionTokenSequence {
                    id: clip,
                    sign_lang: SignLang::Asl,
                    synthetic: false,
                    codebook_id: "cb".into(),
                    tokens: vec![[i as u32, 1, 2]; i + 1],
                },
            );
        }
        (gold, tokens)
    }

    fn config(skip_text: Option<&str>) -> BtConfig {
        let mut mt = StubMap::default();
        let mut t2s = StubMap::default();
        for (en, zh, toks) in [("hello", "你好", json!([[1, 1, 1]])), ("thank you", "谢谢", json!([[2, 2, 2], [3, 3, 3]])), ("good morning", "早上好", json!([[4, 4, 4]]))] {
            if Some(en) != skip_text {
                mt.insert(en, zh);
            }
            t2s.insert(zh, toks);
        }
        let mt = Arc::new(Client::stub(Role::Mt, mt, 1000));
        let synth = Synthesizer::new(Arc::new(Client::stub(Role::T2s, t2s, 1000)), "cb").unwrap();
        BtConfig::new(SignLang::Csl, mt, synth).unwrap()
    }

    #[test]
    fn three_gold_pairs_make_three_s2s_pairs() {
        let (gold, tokens) = gold_fixture();
        let out = build_bt_direction(&gold, &tokens, &config(None)).unwrap();
        assert_eq!(out.pairs.len(), 3);
        assert!(out.failures.is_empty());
        for (p, g) in out.pairs.iter().zip(&gold) {
            assert_eq!(p.direction, Direction::new(SignLang::Csl, SignLang::Asl));
            assert!(p.source.synthetic);
            assert_eq!(p.source.sign_lang, SignLang::Csl);
            assert_eq!(
                serde_json::to_vec(&p.target).unwrap(),
                serde_json::to_vec(&tokens[&g.sign_ref]).unwrap()
            );
            assert_eq!(p.provenance.gold_text, g.text);
        }
        assert_eq!(out.pairs[1].provenance.translated_text, "谢谢");
        assert_eq!(out.pairs[1].source.tokens, vec![[2, 2, 2], [3, 3, 3]]);
    }

    #[test]
    fn stub_miss_is_skipped_and_logged() {
        let (gold, tokens) = gold_fixture();
        let out = build_bt_direction(&gold, &tokens, &config(Some("thank you"))).unwrap();
        assert_eq!(out.pairs.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].gold_id, "g1");
        assert_eq!(out.failures[0].stage, Role::Mt);
    }

    #[test]
    fn abort_names_gold_id() {
        let (gold, tokens) = gold_fixture();
        let mut cfg = config(Some("thank you"));
        cfg.on_error = OnError::Abort;
        let err = build_bt_direction(&gold, &tokens, &cfg).unwrap_err();
        assert!(err.to_string().contains("`g1`"), "{err}");
    }

    #[test]
    fn same_language_is_rejected() {
        let (gold, tokens) = gold_fixture();
        let mut cfg = config(None);
        cfg.source_sign_lang = SignLang::Asl;
        assert!(build_bt_direction(&gold, &tokens, &cfg).unwrap_err().is_usage());
    }

    #[test]
    fn parallel_build_keeps_order() {
        let (gold, tokens) = gold_fixture();
        let serial = build_bt_direction(&gold, &tokens, &config(None)).unwrap();
        let mut cfg = config(None);
        cfg.parallelism = 3;
        assert_eq!(build_bt_direction(&gold, &tokens, &cfg).unwrap(), serial);
    }

    #[test]
    fn stats_means() {
        let d = Direction::new(SignLang::Csl, SignLang::Asl);
        let t = stats_from_lengths([(d, 10, Some(30)), (d, 20, Some(40))]);
        assert_eq!(t.rows, vec![StatsRow { direction: d, pairs: 2, src_len: 15.0, tgt_len: Some(35.0) }]);
        assert!(bt_corpus_stats(&[]).rows.is_empty());
    }

    #[test]
    fn shared_gold_corpus_shares_tgt_len() {
        let a = Direction::new(SignLang::Asl, SignLang::Csl);
        let b = Direction::new(SignLang::Dgs, SignLang::Csl);
        let t = stats_from_lengths([(a, 5, Some(29)), (a, 7, Some(30)), (b, 3, Some(29)), (b, 4, Some(30))]);
        assert_eq!(t.row(a).unwrap().tgt_len, t.row(b).unwrap().tgt_len);
        assert_ne!(t.row(a).unwrap().src_len, t.row(b).unwrap().src_len);
    }
}
