//! Re-verification of noisy cross-lingual pairs into a strict subset.
//!
//! Stages: LLM-rating filter, embedding-cosine filter, their conjunction (the
//! candidate pool), then two annotators who must both keep a pair.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::to_jsonl;
use crate::lang::SignLang;
use crate::types::{CandidatePair, Decision};

pub const DEFAULT_RATING_MIN_EXCLUSIVE: i32 = 4;
pub const DEFAULT_COSINE_MIN_EXCLUSIVE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("pair `{pair_id}` has no {kind} score")]
    MissingScore { pair_id: String, kind: ScoreKind },
    #[error("score file mentions unknown pair `{0}`")]
    UnknownScoredPair(String),
    #[error("pair `{0}` is not a screening candidate")]
    NotCandidate(String),
    #[error("annotator `{0}` is not registered for this session")]
    UnknownAnnotator(String),
    #[error("a session needs exactly two distinct annotators, got {0:?}")]
    BadAnnotators(Vec<String>),
    #[error("undecided pairs: {}", .0.join(", "))]
    Undecided(Vec<String>),
    #[error("pairs in the strict set but not in the original set: {}", .0.join(", "))]
    NotSubset(Vec<String>),
    #[error("duplicate pair id `{0}`")]
    DuplicatePair(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    #[serde(rename = "llm_rating")]
    Rating,
    Cosine,
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreKind::Rating => "llm_rating",
            ScoreKind::Cosine => "cosine",
        })
    }
}

/// Line of a rating score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingScore {
    pub pair_id: String,
    pub llm_rating: u8,
}

/// Line of a cosine score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineScore {
    pub pair_id: String,
    pub cosine: f64,
}

/// Copies cached scores onto the pairs they name.
pub fn attach_scores(
    pairs: &mut [CandidatePair],
    ratings: &[RatingScore],
    cosines: &[CosineScore],
) -> Result<(), VerifyError> {
    let index: HashMap<String, usize> = pairs.iter().enumerate().map(|(i, p)| (p.pair_id.clone(), i)).collect();
    for r in ratings {
        let i = *index.get(&r.pair_id).ok_or_else(|| VerifyError::UnknownScoredPair(r.pair_id.clone()))?;
        pairs[i].llm_rating = Some(r.llm_rating);
    }
    for c in cosines {
        let i = *index.get(&c.pair_id).ok_or_else(|| VerifyError::UnknownScoredPair(c.pair_id.clone()))?;
        pairs[i].cosine = Some(c.cosine);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rating_min_exclusive: i32,
    pub cosine_min_exclusive: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { rating_min_exclusive: DEFAULT_RATING_MIN_EXCLUSIVE, cosine_min_exclusive: DEFAULT_COSINE_MIN_EXCLUSIVE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    Llm,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub pair_id: String,
    pub failed: Vec<Filter>,
    pub llm_rating: u8,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub pool: Vec<CandidatePair>,
    pub rejections: Vec<Rejection>,
}

/// Which filters a pair fails. Both comparisons are strict.
pub fn failed_filters(rating: u8, cosine: f64, t: &Thresholds) -> Vec<Filter> {
    let mut failed = Vec::new();
    if i32::from(rating) <= t.rating_min_exclusive {
        failed.push(Filter::Llm);
    }
    if !(cosine > t.cosine_min_exclusive) {
        failed.push(Filter::Embedding);
    }
    failed
}

/// Keeps pairs with `rating > rating_min_exclusive` and `cosine > cosine_min_exclusive`.
pub fn apply_filters(pairs: &[CandidatePair], thresholds: &Thresholds) -> Result<FilterOutcome, VerifyError> {
    let mut out = FilterOutcome::default();
    for p in pairs {
        let rating = p
            .llm_rating
            .ok_or_else(|| VerifyError::MissingScore { pair_id: p.pair_id.clone(), kind: ScoreKind::Rating })?;
        let cosine = p
            .cosine
            .ok_or_else(|| VerifyError::MissingScore { pair_id: p.pair_id.clone(), kind: ScoreKind::Cosine })?;
        let failed = failed_filters(rating, cosine, thresholds);
        if failed.is_empty() {
            out.pool.push(p.clone());
        } else {
            out.rejections.push(Rejection { pair_id: p.pair_id.clone(), failed, llm_rating: rating, cosine });
        }
    }
    Ok(out)
}

/// Line of a decisions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub pair_id: String,
    pub annotator: String,
    pub decision: Decision,
    pub ts: u64,
}

/// Decision store for one manual screening pass over a candidate pool.
#[derive(Debug, Clone)]
pub struct ScreeningSession {
    pool: Vec<CandidatePair>,
    index: HashMap<String, usize>,
    annotators: [String; 2],
    decisions: BTreeMap<(String, String), DecisionRecord>,
    created_ms: u64,
    updated_ms: u64,
}

impl ScreeningSession {
    pub fn new(pool: Vec<CandidatePair>, annotators: [String; 2], created_ms: u64) -> Result<Self, VerifyError> {
        if annotators[0] == annotators[1] || annotators.iter().any(|a| a.trim().is_empty()) {
            return Err(VerifyError::BadAnnotators(annotators.to_vec()));
        }
        let mut index = HashMap::with_capacity(pool.len());
        for (i, p) in pool.iter().enumerate() {
            if index.insert(p.pair_id.clone(), i).is_some() {
                return Err(VerifyError::DuplicatePair(p.pair_id.clone()));
            }
        }
        // decisions carried in the pool file are not screening state
        let pool = pool.into_iter().map(|p| CandidatePair { decisions: BTreeMap::new(), ..p }).collect();
        Ok(Self { pool, index, annotators, decisions: BTreeMap::new(), created_ms, updated_ms: created_ms })
    }

    /// Rebuilds a session from a decisions log, applying records in order.
    pub fn replay(
        pool: Vec<CandidatePair>,
        annotators: [String; 2],
        records: impl IntoIterator<Item = DecisionRecord>,
    ) -> Result<Self, VerifyError> {
        let mut session = Self::new(pool, annotators, 0)?;
        for r in records {
            if session.created_ms == 0 {
                session.created_ms = r.ts;
            }
            session.record_decision(&r.annotator, &r.pair_id, r.decision, r.ts)?;
        }
        Ok(session)
    }

    /// Parses `A,B` into an annotator pair.
    pub fn parse_annotators(s: &str) -> Result<[String; 2], VerifyError> {
        let ids: Vec<String> = s.split(',').map(|a| a.trim().to_string()).collect();
        match <[String; 2]>::try_from(ids) {
            Ok(pair) if pair[0] != pair[1] && !pair[0].is_empty() && !pair[1].is_empty() => Ok(pair),
            Ok(pair) => Err(VerifyError::BadAnnotators(pair.to_vec())),
            Err(ids) => Err(VerifyError::BadAnnotators(ids)),
        }
    }

    pub fn annotators(&self) -> &[String; 2] {
        &self.annotators
    }

    pub fn pool(&self) -> &[CandidatePair] {
        &self.pool
    }

    pub fn pair(&self, pair_id: &str) -> Option<&CandidatePair> {
        self.index.get(pair_id).map(|&i| &self.pool[i])
    }

    pub fn created_ms(&self) -> u64 {
        self.created_ms
    }

    pub fn updated_ms(&self) -> u64 {
        self.updated_ms
    }

    pub fn is_registered(&self, annotator: &str) -> bool {
        self.annotators.iter().any(|a| a == annotator)
    }

    fn require_annotator(&self, annotator: &str) -> Result<(), VerifyError> {
        if self.is_registered(annotator) {
            Ok(())
        } else {
            Err(VerifyError::UnknownAnnotator(annotator.to_string()))
        }
    }

    /// Stores or overwrites `annotator`'s decision on `pair_id`.
    pub fn record_decision(
        &mut self,
        annotator: &str,
        pair_id: &str,
        decision: Decision,
        ts: u64,
    ) -> Result<DecisionRecord, VerifyError> {
        self.require_annotator(annotator)?;
        if !self.index.contains_key(pair_id) {
            return Err(VerifyError::NotCandidate(pair_id.to_string()));
        }
        let record = DecisionRecord {
            pair_id: pair_id.to_string(),
            annotator: annotator.to_string(),
            decision,
            ts,
        };
        self.decisions.insert((pair_id.to_string(), annotator.to_string()), record.clone());
        self.updated_ms = self.updated_ms.max(ts);
        Ok(record)
    }

    pub fn decision(&self, annotator: &str, pair_id: &str) -> Option<Decision> {
        self.decisions.get(&(pair_id.to_string(), annotator.to_string())).map(|r| r.decision)
    }

    /// This annotator's own decisions, keyed by pair id.
    pub fn decisions_of(&self, annotator: &str) -> Result<BTreeMap<String, Decision>, VerifyError> {
        self.require_annotator(annotator)?;
        Ok(self
            .decisions
            .values()
            .filter(|r| r.annotator == annotator)
            .map(|r| (r.pair_id.clone(), r.decision))
            .collect())
    }

    /// Pool pairs this annotator has not decided yet, in pool order.
    pub fn queue(&self, annotator: &str) -> Result<Vec<&CandidatePair>, VerifyError> {
        self.require_annotator(annotator)?;
        Ok(self.pool.iter().filter(|p| self.decision(annotator, &p.pair_id).is_none()).collect())
    }

    pub fn decided_count(&self, annotator: &str) -> Result<usize, VerifyError> {
        self.require_annotator(annotator)?;
        Ok(self.decisions.values().filter(|r| r.annotator == annotator).count())
    }

    /// Pair ids missing a decision from at least one annotator, in pool order.
    pub fn undecided(&self) -> Vec<String> {
        self.pool
            .iter()
            .filter(|p| self.annotators.iter().any(|a| self.decision(a, &p.pair_id).is_none()))
            .map(|p| p.pair_id.clone())
            .collect()
    }

    /// Pairs both annotators kept, in pool order, with both decisions attached.
    pub fn finalize_strict(&self) -> Result<Vec<CandidatePair>, VerifyError> {
        let undecided = self.undecided();
        if !undecided.is_empty() {
            return Err(VerifyError::Undecided(undecided));
        }
        Ok(self
            .pool
            .iter()
            .filter(|p| self.annotators.iter().all(|a| self.decision(a, &p.pair_id) == Some(Decision::Keep)))
            .map(|p| {
                let mut kept = p.clone();
                kept.decisions = self.annotators.iter().map(|a| (a.clone(), Decision::Keep)).collect();
                kept
            })
            .collect())
    }

    /// The strict subset as JSON lines; the exact bytes written by export.
    pub fn finalize_jsonl(&self) -> Result<String, crate::Error> {
        to_jsonl(&self.finalize_strict()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Agreement {
    pub pairs: usize,
    pub mean_rating: Option<f64>,
    pub mean_cosine: Option<f64>,
}

impl Agreement {
    fn of<'a>(pairs: impl IntoIterator<Item = &'a CandidatePair>) -> Self {
        let (mut n, mut rn, mut rs, mut cn, mut cs) = (0, 0usize, 0.0, 0usize, 0.0);
        for p in pairs {
            n += 1;
            if let Some(r) = p.llm_rating {
                rn += 1;
                rs += f64::from(r);
            }
            if let Some(c) = p.cosine {
                cn += 1;
                cs += c;
            }
        }
        Self {
            pairs: n,
            mean_rating: (rn > 0).then(|| rs / rn as f64),
            mean_cosine: (cn > 0).then(|| cs / cn as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub label: String,
    pub before: Agreement,
    pub after: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    /// One row per unordered language pair.
    pub rows: Vec<SubsetRow>,
    pub pooled: SubsetRow,
}

fn pair_label((a, b): (SignLang, SignLang)) -> String {
    format!("{a}↔{b}")
}

/// Size and mean automatic scores before and after re-verification.
pub fn subset_stats(before: &[CandidatePair], after: &[CandidatePair]) -> Result<SubsetStats, VerifyError> {
    let ids: HashSet<&str> = before.iter().map(|p| p.pair_id.as_str()).collect();
    let missing: Vec<String> = after
        .iter()
        .filter(|p| !ids.contains(p.pair_id.as_str()))
        .map(|p| p.pair_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(VerifyError::NotSubset(missing));
    }
    let keys: BTreeSet<(SignLang, SignLang)> = before.iter().map(CandidatePair::language_pair).collect();
    let rows = keys
        .into_iter()
        .map(|k| SubsetRow {
            label: pair_label(k),
            before: Agreement::of(before.iter().filter(|p| p.language_pair() == k)),
            after: Agreement::of(after.iter().filter(|p| p.language_pair() == k)),
        })
        .collect();
    Ok(SubsetStats {
        rows,
        pooled: SubsetRow { label: "All".into(), before: Agreement::of(before), after: Agreement::of(after) },
    })
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn two_dp(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

impl SubsetStats {
    /// Aligned table: `#Pairs`, rating and cosine, each before and after.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "", "#Pairs", "", "rating", "", "cosine", ""
        );
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "Language pair", "before", "after", "before", "after", "before", "after"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.pooled)) {
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                row.label,
                thousands(row.before.pairs),
                thousands(row.after.pairs),
                two_dp(row.before.mean_rating),
                two_dp(row.after.mean_rating),
                two_dp(row.before.mean_cosine),
                two_dp(row.after.mean_cosine),
            );
        }
        out
    }
}
