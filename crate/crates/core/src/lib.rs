//! Cross-lingual sign-to-sign corpus construction and evaluation.
//!
//! - [`quantize`]: windowed k-means motion tokenizer (frames ↔ token triples)
//! - [`geoalign`]: Procrustes, DTW and DTW-PA-MPJPE
//! - [`textscore`]: BLEU with per-language tokenization
//! - [`modelio`]: stub / subprocess / HTTP model endpoints and the cascade
//! - [`btcorpus`]: back-translated sign-to-sign training pairs
//! - [`verify`]: filtering and dual-annotator screening of evaluation pairs
//! - [`evalharness`]: anchor-based evaluation of direct and cascaded systems
//! - [`reviewserver`]: HTTP backend for the screening UI

pub mod btcorpus;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod geoalign;
pub mod lang;
pub mod modelio;
pub mod quantize;
pub mod reviewserver;
pub mod textscore;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use lang::{Direction, SignLang, SpokenLang};
pub use types::{
    validate_clip, CandidatePair, Decision, GoldPair, JointLayout, MotionTokenSequence, Part, PoseClip, Provenance,
    S2SPair, S2sRecord, TextUtterance, TokenTriple, Violation,
};
