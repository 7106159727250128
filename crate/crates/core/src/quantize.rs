//! Windowed k-means motion tokenizer.
//!
//! Each stream (body, left hand, right hand) gets its own codebook of `K`
//! vectors. A codeword covers `window` consecutive frames of that stream's
//! joints, so a clip of `T` frames becomes `ceil(T / window)` token triples.
//! The last window is zero-padded and the padding survives decoding.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::types::{JointLayout, MotionTokenSequence, Part, PoseClip, TokenTriple};

pub const DEFAULT_WINDOW: usize = 4;
pub const DEFAULT_K: usize = 512;
pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizeError {
    #[error("no training clips")]
    NoClips,
    #[error("insufficient data for codebook size {k}: stream {stream} has {available} distinct windows")]
    InsufficientData { k: usize, stream: Part, available: usize },
    #[error("clip `{clip}` has layout/dims different from the first training clip")]
    HeterogeneousLayout { clip: String },
    #[error("layout mismatch in stream {stream}: clip has {clip} joints, codebook expects {codebook}")]
    LayoutMismatch { stream: Part, clip: usize, codebook: usize },
    #[error("dims mismatch: clip has {clip}, codebook expects {codebook}")]
    DimsMismatch { clip: usize, codebook: usize },
    #[error("codebook mismatch: tokens use `{tokens}`, codebook is `{codebook}`")]
    CodebookMismatch { tokens: String, codebook: String },
    #[error("token {id} at position {position} of stream {stream} is out of range (K = {k})")]
    TokenOutOfRange { position: usize, stream: Part, id: u32, k: usize },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("invalid quantizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streams {
    pub body: Vec<Vec<f64>>,
    pub left_hand: Vec<Vec<f64>>,
    pub right_hand: Vec<Vec<f64>>,
}

impl Streams {
    pub fn get(&self, part: Part) -> &[Vec<f64>] {
        match part {
            Part::Body => &self.body,
            Part::LeftHand => &self.left_hand,
            Part::RightHand => &self.right_hand,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub codebook_id: String,
    pub window: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub dims: usize,
    pub layout: JointLayout,
    pub fps: f64,
    pub streams: Streams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_id: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, k: DEFAULT_K, max_iters: DEFAULT_MAX_ITERS, seed: 0, codebook_id: None }
    }
}

/// Mean quantization error per stream, one entry per Lloyd step.
/// Entry 0 is the error of the initial codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub errors: [Vec<f64>; 3],
}

impl Codebook {
    pub fn codeword_dim(&self, part: Part) -> usize {
        self.window * self.layout.count(part) * self.dims
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cb: Codebook = serde_json::from_str(&text)?;
        cb.check().map_err(|m| Error::Data(format!("{}: {m}", path.display())))?;
        Ok(cb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        if self.window == 0 || self.k == 0 {
            return Err("window and K must be positive".into());
        }
        for part in Part::ALL {
            let words = self.streams.get(part);
            if words.len() != self.k {
                return Err(format!("stream {part} has {} codewords, expected {}", words.len(), self.k));
            }
            let dim = self.codeword_dim(part);
            for w in words {
                if w.len() != dim {
                    return Err(format!("stream {part} codeword has length {}, expected {dim}", w.len()));
                }
                if w.iter().any(|x| !x.is_finite()) {
                    return Err(format!("stream {part} has a non-finite codeword"));
                }
            }
        }
        Ok(())
    }

    fn check_clip(&self, clip: &PoseClip) -> Result<(), QuantizeError> {
        if clip.dims != self.dims {
            return Err(QuantizeError::DimsMismatch { clip: clip.dims, codebook: self.dims });
        }
        for part in Part::ALL {
            let (c, b) = (clip.layout.count(part), self.layout.count(part));
            if c != b {
                return Err(QuantizeError::LayoutMismatch { stream: part, clip: c, codebook: b });
            }
        }
        clip.check().map_err(QuantizeError::InvalidClip)
    }
}

/// Zero-padded window vectors of one stream, in clip then time order.
fn stream_windows(clip: &PoseClip, part: Part, window: usize) -> Vec<Vec<f64>> {
    let range = clip.layout.coord_range(part, clip.dims);
    let width = range.len();
    let n_tokens = clip.frames.len().div_ceil(window);
    (0..n_tokens)
        .map(|t| {
            let mut v = vec![0.0; window * width];
            for f in 0..window {
                if let Some(frame) = clip.frames.get(t * window + f) {
                    v[f * width..(f + 1) * width].copy_from_slice(&frame[range.clone()]);
                }
            }
            v
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest codeword; ties go to the lowest index.
pub fn nearest(codewords: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, w) in codewords.iter().enumerate() {
        let d = sq_dist(w, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_init(windows: &[Vec<f64>], order: &[usize], k: usize) -> Option<Vec<Vec<f64>>> {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    for &i in order {
        let bits: Vec<u64> = windows[i].iter().map(|x| x.to_bits()).collect();
        if seen.insert(bits) {
            out.push(windows[i].clone());
            if out.len() == k {
                return Some(out);
            }
        }
    }
    None
}

/// Lloyd iterations from the given initial centroids. Returns the final
/// centroids and the mean-error trace.
fn lloyd(windows: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = windows.len() as f64;
    let assign = |centroids: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut total = 0.0;
        let labels = windows
            .iter()
            .map(|w| {
                let (i, d) = nearest(centroids, w);
                total += d;
                i
            })
            .collect();
        (labels, total / n)
    };

    let (mut labels, err) = assign(&centroids);
    let mut trace = vec![err];
    let dim = centroids[0].len();
    for _ in 0..max_iters {
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (w, &l) in windows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(w) {
                *s += x;
            }
        }
        for ((c, s), &count) in centroids.iter_mut().zip(sums).zip(&counts) {
            // empty clusters keep their previous centroid
            if count > 0 {
                *c = s.into_iter().map(|x| x / count as f64).collect();
            }
        }
        let (next, err) = assign(&centroids);
        trace.push(err);
        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
    }
    (centroids, trace)
}

pub fn train_codebook(clips: &[PoseClip], config: &TrainConfig) -> Result<Codebook, QuantizeError> {
    train_codebook_traced(clips, config).map(|(cb, _)| cb)
}

pub fn train_codebook_traced(
    clips: &[PoseClip],
    config: &TrainConfig,
) -> Result<(Codebook, TrainTrace), QuantizeError> {
    if config.window == 0 || config.k == 0 {
        return Err(QuantizeError::InvalidConfig("window and K must be at least 1".into()));
    }
    let first = clips.first().ok_or(QuantizeError::NoClips)?;
    for clip in clips {
        if clip.layout != first.layout || clip.dims != first.dims {
            return Err(QuantizeError::HeterogeneousLayout { clip: clip.id.clone() });
        }
        clip.check().map_err(QuantizeError::InvalidClip)?;
    }

    let mut words: Vec<Vec<Vec<f64>>> = Vec::with_capacity(3);
    let mut errors: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut order: Option<Vec<usize>> = None;
    for part in Part::ALL {
        let windows: Vec<Vec<f64>> = clips.iter().flat_map(|c| stream_windows(c, part, config.window)).collect();
        if windows.len() < config.k {
            return Err(QuantizeError::InsufficientData { k: config.k, stream: part, available: windows.len() });
        }
        // one shuffle shared by all streams
        let order = order.get_or_insert_with(|| {
            let mut idx: Vec<usize> = (0..windows.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
            idx
        });
        let init = distinct_init(&windows, order, config.k).ok_or_else(|| {
            let available = windows
                .iter()
                .map(|w| w.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                .collect::<HashSet<_>>()
                .len();
            QuantizeError::InsufficientData { k: config.k, stream: part, available }
        })?;
        let (centroids, trace) = lloyd(&windows, init, config.max_iters);
        words.push(centroids);
        errors.push(trace);
    }

    let mut words = words.into_iter();
    let streams = Streams {
        body: words.next().unwrap(),
        left_hand: words.next().unwrap(),
        right_hand: words.next().unwrap(),
    };
    let mut errors = errors.into_iter();
    let trace = TrainTrace { errors: [errors.next().unwrap(), errors.next().unwrap(), errors.next().unwrap()] };
    let codebook_id = config
        .codebook_id
        .clone()
        .unwrap_or_else(|| format!("kmeans-w{}-k{}-s{}", config.window, config.k, config.seed));
    let cb = Codebook {
        codebook_id,
        window: config.window,
        k: config.k,
        dims: first.dims,
        layout: first.layout,
        fps: first.fps,
        streams,
    };
    Ok((cb, trace))
}

/// Result of encoding with the per-window distances kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub tokens: MotionTokenSequence,
    /// Per token step, the summed squared distance over the three streams.
    pub window_errors: Vec<f64>,
}

impl Encoded {
    /// Mean over token steps of the summed squared stream distances.
    pub fn quantization_error(&self) -> f64 {
        self.window_errors.iter().sum::<f64>() / self.window_errors.len() as f64
    }
}

pub fn encode_clip(clip: &PoseClip, codebook: &Codebook) -> Result<MotionTokenSequence, QuantizeError> {
    encode_clip_detailed(clip, codebook).map(|e| e.tokens)
}

pub fn encode_clip_detailed(clip: &PoseClip, codebook: &Codebook) -> Result<Encoded, QuantizeError> {
    codebook.check_clip(clip)?;
    let n_tokens = clip.frames.len().div_ceil(codebook.window);
    let mut tokens: Vec<TokenTriple> = vec![[0; 3]; n_tokens];
    let mut window_errors = vec![0.0; n_tokens];
    for part in Part::ALL {
        let windows = stream_windows(clip, part, codebook.window);
        for (t, w) in windows.iter().enumerate() {
            let (i, d) = nearest(codebook.streams.get(part), w);
            tokens[t][part.index()] = i as u32;
            window_errors[t] += d;
        }
    }
    Ok(Encoded {
        tokens: MotionTokenSequence {
            id: clip.id.clone(),
            sign_lang: clip.sign_lang,
            synthetic: false,
            codebook_id: codebook.codebook_id.clone(),
            tokens,
        },
        window_errors,
    })
}

pub fn decode_tokens(tokens: &MotionTokenSequence, codebook: &Codebook) -> Result<PoseClip, QuantizeError> {
    if tokens.codebook_id != codebook.codebook_id {
        return Err(QuantizeError::CodebookMismatch {
            tokens: tokens.codebook_id.clone(),
            codebook: codebook.codebook_id.clone(),
        });
    }
    let layout = codebook.layout;
    let dims = codebook.dims;
    let frame_len = layout.joints() * dims;
    let mut frames = Vec::with_capacity(tokens.tokens.len() * codebook.window);
    for (position, triple) in tokens.tokens.iter().enumerate() {
        let mut block = vec![vec![0.0; frame_len]; codebook.window];
        for part in Part::ALL {
            let id = triple[part.index()];
            let word = codebook.streams.get(part).get(id as usize).ok_or(QuantizeError::TokenOutOfRange {
                position,
                stream: part,
                id,
                k: codebook.k,
            })?;
            let range = layout.coord_range(part, dims);
            let width = range.len();
            for (f, frame) in block.iter_mut().enumerate() {
                frame[range.clone()].copy_from_slice(&word[f * width..(f + 1) * width]);
            }
        }
        frames.extend(block);
    }
    Ok(PoseClip {
        id: tokens.id.clone(),
        sign_lang: tokens.sign_lang,
        fps: codebook.fps,
        dims,
        layout,
        frames,
    })
}
