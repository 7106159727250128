//! Corpus BLEU with per-target-language tokenization.
//!
//! ASL and DGS targets are scored on whitespace words, CSL on characters.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::SignLang;

#[derive(Debug, Error, PartialEq)]
pub enum BleuError {
    #[error("hypothesis count {hyps} does not match reference count {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    Empty,
    #[error("max_n must be in 1..=4, got {0}")]
    BadOrder(usize),
    #[error("smoothing epsilon must be positive, got {0}")]
    BadEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "epsilon")]
pub enum Smoothing {
    #[default]
    None,
    /// Zero match counts are replaced by `epsilon` before taking the log.
    Floor(f64),
}

/// Default floor used for per-sentence reference selection.
pub const SENTENCE_FLOOR: Smoothing = Smoothing::Floor(0.1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub bleu: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

pub fn tokenize_eval(text: &str, target: SignLang) -> Vec<String> {
    match target {
        SignLang::Csl => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
        SignLang::Asl | SignLang::Dgs => text.split_whitespace().map(String::from).collect(),
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU over single-reference pairs, on the 0–100 scale.
///
/// Clipped n-gram matches and totals are summed over the corpus before the
/// precisions are formed; the brevity penalty uses corpus lengths.
pub fn corpus_bleu<T, H, R>(hyps: &[H], refs: &[R], max_n: usize, smoothing: Smoothing) -> Result<BleuScore, BleuError>
where
    T: Eq + Hash,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    if hyps.len() != refs.len() {
        return Err(BleuError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(BleuError::Empty);
    }
    if !(1..=4).contains(&max_n) {
        return Err(BleuError::BadOrder(max_n));
    }
    if let Smoothing::Floor(eps) = smoothing {
        if !(eps > 0.0) {
            return Err(BleuError::BadEpsilon(eps));
        }
    }

    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(r, n);
            for (gram, count) in ngram_counts(h, n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }

    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };

    let mut log_sum = 0.0;
    let mut annihilated = false;
    for (&m, &t) in matches.iter().zip(&totals) {
        let p = match smoothing {
            Smoothing::None if m == 0 || t == 0 => {
                annihilated = true;
                break;
            }
            Smoothing::None => m as f64 / t as f64,
            Smoothing::Floor(eps) => {
                let num = if m == 0 { eps } else { m as f64 };
                num / t.max(1) as f64
            }
        };
        log_sum += p.ln() / max_n as f64;
    }
    let bleu = if annihilated || brevity_penalty == 0.0 {
        0.0
    } else {
        100.0 * brevity_penalty * log_sum.exp()
    };

    Ok(BleuScore { bleu, precisions, brevity_penalty, hyp_len, ref_len })
}

/// BLEU of a single hypothesis against a single reference.
pub fn sentence_bleu<T: Eq + Hash>(hyp: &[T], reference: &[T], max_n: usize, smoothing: Smoothing) -> Result<BleuScore, BleuError> {
    corpus_bleu(&[hyp], &[reference], max_n, smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        tokenize_eval(s, SignLang::Asl)
    }

    #[test]
    fn tokenization() {
        assert_eq!(tokenize_eval("the cat sat", SignLang::Asl), ["the", "cat", "sat"]);
        assert_eq!(tokenize_eval("你好 世界", SignLang::Csl), ["你", "好", "世", "界"]);
        assert_eq!(tokenize_eval("  a  b ", SignLang::Dgs), ["a", "b"]);
        assert!(tokenize_eval("   ", SignLang::Csl).is_empty());
    }

    #[test]
    fn perfect_match() {
        let corpus = vec![words("the cat is on the mat"), words("a b c d e")];
        let s = corpus_bleu(&corpus, &corpus, 4, Smoothing::None).unwrap();
        assert_eq!(s.bleu, 100.0);
        assert_eq!(s.brevity_penalty, 1.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let hyp = vec![words("the the the the the the the")];
        let reference = vec![words("the cat is on the mat")];
        let s = corpus_bleu(&hyp, &reference, 1, Smoothing::None).unwrap();
        assert_eq!(s.precisions[0], 2.0 / 7.0);
    }

    #[test]
    fn zero_fourgram_annihilates() {
        let s = sentence_bleu(&words("a b c d x"), &words("a b c x d"), 4, Smoothing::None).unwrap();
        assert_eq!(s.precisions[3], 0.0);
        assert_eq!(s.bleu, 0.0);
        let floored = sentence_bleu(&words("a b c d x"), &words("a b c x d"), 4, SENTENCE_FLOOR).unwrap();
        assert!(floored.bleu > 0.0);
    }

    #[test]
    fn brevity_penalty_value() {
        let s = corpus_bleu(&[words("a b")], &[words("a b c d")], 1, Smoothing::None).unwrap();
        assert!((s.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let c = vec![words("a")];
        assert_eq!(
            corpus_bleu(&c, &[] as &[Vec<String>], 4, Smoothing::None).unwrap_err(),
            BleuError::LengthMismatch { hyps: 1, refs: 0 }
        );
        assert_eq!(corpus_bleu(&c, &c, 5, Smoothing::None).unwrap_err(), BleuError::BadOrder(5));
        assert_eq!(corpus_bleu(&c, &c, 0, Smoothing::None).unwrap_err(), BleuError::BadOrder(0));
    }
}
