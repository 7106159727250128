//! JSON-lines corpus files: one self-contained record per line.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lang::SignLang;
use crate::types::{CandidatePair, GoldPair, MotionTokenSequence, PoseClip, S2SPair, S2sRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusKind {
    Poses,
    Tokens,
    GoldManifest,
    S2sPairs,
    Candidates,
}

impl CorpusKind {
    pub fn name(self) -> &'static str {
        match self {
            CorpusKind::Poses => "poses",
            CorpusKind::Tokens => "tokens",
            CorpusKind::GoldManifest => "gold_manifest",
            CorpusKind::S2sPairs => "s2s_pairs",
            CorpusKind::Candidates => "candidates",
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "poses" => CorpusKind::Poses,
            "tokens" => CorpusKind::Tokens,
            "gold_manifest" => CorpusKind::GoldManifest,
            "s2s_pairs" => CorpusKind::S2sPairs,
            "candidates" => CorpusKind::Candidates,
            other => {
                return Err(Error::Usage(format!(
                    "unknown corpus kind `{other}` (expected poses, tokens, gold_manifest, s2s_pairs or candidates)"
                )))
            }
        })
    }
}

/// A type that can live in a JSON-lines corpus file.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: CorpusKind;

    /// Type-level invariants that do not need other files to check.
    fn check(&self) -> std::result::Result<(), String>;
}

impl Record for PoseClip {
    const KIND: CorpusKind = CorpusKind::Poses;
    fn check(&self) -> std::result::Result<(), String> {
        PoseClip::check(self)
    }
}

impl Record for MotionTokenSequence {
    const KIND: CorpusKind = CorpusKind::Tokens;
    fn check(&self) -> std::result::Result<(), String> {
        MotionTokenSequence::check(self)
    }
}

impl Record for GoldPair {
    const KIND: CorpusKind = CorpusKind::GoldManifest;
    fn check(&self) -> std::result::Result<(), String> {
        GoldPair::check(self)
    }
}

impl Record for S2sRecord {
    const KIND: CorpusKind = CorpusKind::S2sPairs;
    fn check(&self) -> std::result::Result<(), String> {
        S2sRecord::check(self)
    }
}

impl Record for CandidatePair {
    const KIND: CorpusKind = CorpusKind::Candidates;
    fn check(&self) -> std::result::Result<(), String> {
        CandidatePair::check(self)
    }
}

/// A record together with the 1-based line it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct Located<T> {
    pub line: usize,
    pub record: T,
}

/// Records of any kind, as returned by [`load_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    Poses(Vec<Located<PoseClip>>),
    Tokens(Vec<Located<MotionTokenSequence>>),
    GoldManifest(Vec<Located<GoldPair>>),
    S2sPairs(Vec<Located<S2sRecord>>),
    Candidates(Vec<Located<CandidatePair>>),
}

impl Corpus {
    pub fn len(&self) -> usize {
        match self {
            Corpus::Poses(v) => v.len(),
            Corpus::Tokens(v) => v.len(),
            Corpus::GoldManifest(v) => v.len(),
            Corpus::S2sPairs(v) => v.len(),
            Corpus::Candidates(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_corpus(path: impl AsRef<Path>, kind: &str) -> Result<Corpus> {
    let kind: CorpusKind = kind.parse()?;
    let path = path.as_ref();
    Ok(match kind {
        CorpusKind::Poses => Corpus::Poses(read_located(path)?),
        CorpusKind::Tokens => Corpus::Tokens(read_located(path)?),
        CorpusKind::GoldManifest => Corpus::GoldManifest(read_located(path)?),
        CorpusKind::S2sPairs => Corpus::S2sPairs(read_located(path)?),
        CorpusKind::Candidates => Corpus::Candidates(read_located(path)?),
    })
}

/// Parses JSON lines from any reader. Blank lines are skipped but still counted.
pub fn parse_located<T: Record>(reader: impl BufRead) -> Result<Vec<Located<T>>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("{} record: {e}", T::KIND),
        })?;
        record
            .check()
            .map_err(|message| Error::Invariant { line: line_no, message })?;
        out.push(Located { line: line_no, record });
    }
    Ok(out)
}

pub fn read_located<T: Record>(path: impl AsRef<Path>) -> Result<Vec<Located<T>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_located(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::Invariant { line, message } => Error::Invariant {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Loads records and drops the line numbers.
pub fn read_records<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    Ok(read_located(path)?.into_iter().map(|l| l.record).collect())
}

/// Reads JSON lines of any deserializable type, without invariant checks.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Index of records by id. Duplicate ids are an error.
pub fn index_by_id<T, F>(records: impl IntoIterator<Item = T>, id: F) -> Result<HashMap<String, T>>
where
    F: Fn(&T) -> &str,
{
    let mut map = HashMap::new();
    for r in records {
        let key = id(&r).to_string();
        if map.contains_key(&key) {
            return Err(Error::Data(format!("duplicate id `{key}`")));
        }
        map.insert(key, r);
    }
    Ok(map)
}

pub type TokenIndex = HashMap<String, MotionTokenSequence>;
pub type PoseIndex = HashMap<String, PoseClip>;

pub fn token_index(seqs: impl IntoIterator<Item = MotionTokenSequence>) -> Result<TokenIndex> {
    index_by_id(seqs, |s| s.id.as_str())
}

pub fn pose_index(clips: impl IntoIterator<Item = PoseClip>) -> Result<PoseIndex> {
    index_by_id(clips, |c| c.id.as_str())
}

/// Checks every gold manifest entry against the sign language of the clip it references.
pub fn check_gold_partners(
    gold: &[Located<GoldPair>],
    sign_lang_of: impl Fn(&str) -> Option<SignLang>,
) -> Result<()> {
    for g in gold {
        let sign_lang = sign_lang_of(&g.record.sign_ref).ok_or_else(|| Error::Invariant {
            line: g.line,
            message: format!("gold pair `{}` references unknown clip `{}`", g.record.id, g.record.sign_ref),
        })?;
        g.record
            .check_partner(sign_lang)
            .map_err(|message| Error::Invariant { line: g.line, message })?;
    }
    Ok(())
}

/// Loads a gold manifest and validates the partner invariant against a token store.
pub fn load_gold_pairs(path: impl AsRef<Path>, tokens: &TokenIndex) -> Result<Vec<GoldPair>> {
    let gold = read_located::<GoldPair>(path)?;
    check_gold_partners(&gold, |id| tokens.get(id).map(|t| t.sign_lang))?;
    Ok(gold.into_iter().map(|g| g.record).collect())
}

/// Loads s2s pair records and attaches their gold targets.
pub fn load_s2s_pairs(path: impl AsRef<Path>, tokens: &TokenIndex) -> Result<Vec<S2SPair>> {
    let records = read_located::<S2sRecord>(path)?;
    records
        .into_iter()
        .map(|l| {
            let target = tokens.get(&l.record.target_ref).ok_or_else(|| Error::Invariant {
                line: l.line,
                message: format!("unknown target `{}`", l.record.target_ref),
            })?;
            l.record
                .resolve(target)
                .map_err(|message| Error::Invariant { line: l.line, message })
        })
        .collect()
}

pub fn save_s2s_pairs(path: impl AsRef<Path>, pairs: &[S2SPair]) -> Result<()> {
    let records: Vec<S2sRecord> = pairs.iter().map(S2SPair::to_record).collect();
    write_records(path, &records)
}
