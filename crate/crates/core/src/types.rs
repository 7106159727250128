//! Record types shared by every pipeline stage.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::lang::{Direction, SignLang, SpokenLang};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextUtterance {
    pub id: String,
    pub text: String,
    pub lang: SpokenLang,
}

impl TextUtterance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: SpokenLang) -> Self {
        Self { id: id.into(), text: text.into(), lang }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("text of utterance `{}` is empty", self.id));
        }
        Ok(())
    }
}

/// One of the three joint streams a pose frame is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Body,
    LeftHand,
    RightHand,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Body, Part::LeftHand, Part::RightHand];

    pub fn name(self) -> &'static str {
        match self {
            Part::Body => "body",
            Part::LeftHand => "left_hand",
            Part::RightHand => "right_hand",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Joint counts per stream. Frames store body joints first, then the left
/// hand, then the right hand, each joint as `dims` consecutive coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointLayout {
    pub body: usize,
    pub left_hand: usize,
    pub right_hand: usize,
}

impl Default for JointLayout {
    /// Upper-body skeleton plus two 21-keypoint hands.
    fn default() -> Self {
        Self { body: 8, left_hand: 21, right_hand: 21 }
    }
}

impl JointLayout {
    pub fn new(body: usize, left_hand: usize, right_hand: usize) -> Self {
        Self { body, left_hand, right_hand }
    }

    pub fn joints(&self) -> usize {
        self.body + self.left_hand + self.right_hand
    }

    pub fn count(&self, part: Part) -> usize {
        match part {
            Part::Body => self.body,
            Part::LeftHand => self.left_hand,
            Part::RightHand => self.right_hand,
        }
    }

    /// Joint index range of `part` within a frame.
    pub fn joint_range(&self, part: Part) -> Range<usize> {
        match part {
            Part::Body => 0..self.body,
            Part::LeftHand => self.body..self.body + self.left_hand,
            Part::RightHand => self.body + self.left_hand..self.joints(),
        }
    }

    /// Coordinate range of `part` within a flat frame.
    pub fn coord_range(&self, part: Part, dims: usize) -> Range<usize> {
        let r = self.joint_range(part);
        r.start * dims..r.end * dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseClip {
    pub id: String,
    pub sign_lang: SignLang,
    pub fps: f64,
    pub dims: usize,
    pub layout: JointLayout,
    pub frames: Vec<Vec<f64>>,
}

/// A single broken invariant found by [`validate_clip`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(i) => write!(f, "{}, frame {i}", self.message),
            None => write!(f, "{} ({})", self.message, self.field),
        }
    }
}

impl PoseClip {
    pub fn frame_len(&self) -> usize {
        self.layout.joints() * self.dims
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn joint(&self, frame: usize, joint: usize) -> &[f64] {
        &self.frames[frame][joint * self.dims..(joint + 1) * self.dims]
    }

    pub fn check(&self) -> Result<(), String> {
        let violations = validate_clip(self);
        match violations.first() {
            None => Ok(()),
            Some(v) => Err(format!("clip `{}`: {v}", self.id)),
        }
    }
}

/// Checks every [`PoseClip`] invariant. An empty result means the clip is valid.
pub fn validate_clip(clip: &PoseClip) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, field: &str, message: String| {
        out.push(Violation { frame, field: field.to_string(), message });
    };
    if !(clip.fps.is_finite() && clip.fps > 0.0) {
        push(None, "fps", format!("fps must be positive, got {}", clip.fps));
    }
    if clip.dims != 2 && clip.dims != 3 {
        push(None, "dims", format!("dims must be 2 or 3, got {}", clip.dims));
    }
    for part in Part::ALL {
        if clip.layout.count(part) == 0 {
            push(None, "layout", format!("stream {part} has no joints"));
        }
    }
    if clip.frames.is_empty() {
        push(None, "frames", "clip has no frames".to_string());
    }
    let expected = clip.frame_len();
    for (i, frame) in clip.frames.iter().enumerate() {
        if frame.len() != expected {
            push(
                Some(i),
                "frames",
                format!("frame length mismatch (expected {expected}, got {})", frame.len()),
            );
        }
        if frame.iter().any(|c| !c.is_finite()) {
            push(Some(i), "frames", "non-finite coordinate".to_string());
        }
    }
    out
}

/// Indices into the three codebook streams for one token step.
pub type TokenTriple = [u32; 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionTokenSequence {
    pub id: String,
    pub sign_lang: SignLang,
    pub synthetic: bool,
    pub codebook_id: String,
    pub tokens: Vec<TokenTriple>,
}

impl MotionTokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.tokens.is_empty() {
            return Err(format!("token sequence `{}` is empty", self.id));
        }
        Ok(())
    }

    /// Range check against a codebook with `k` entries per stream.
    pub fn check_range(&self, k: usize) -> Result<(), String> {
        for (pos, triple) in self.tokens.iter().enumerate() {
            for (stream, &id) in Part::ALL.iter().zip(triple) {
                if id as usize >= k {
                    return Err(format!(
                        "token {id} at position {pos} of stream {stream} is out of range for codebook size {k}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A natural (text, sign) pair from a monolingual sign corpus.
///
/// On disk the utterance fields are flattened next to the clip reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub id: String,
    pub text: String,
    pub lang: SpokenLang,
    pub sign_ref: String,
    pub corpus_id: String,
}

impl GoldPair {
    pub fn utterance(&self) -> TextUtterance {
        TextUtterance::new(self.id.clone(), self.text.clone(), self.lang)
    }

    pub fn check(&self) -> Result<(), String> {
        self.utterance().check()
    }

    /// The text language must be the partner of the referenced clip's sign language.
    pub fn check_partner(&self, sign_lang: SignLang) -> Result<(), String> {
        if sign_lang.partner() != self.lang {
            return Err(format!(
                "partner mismatch: gold pair `{}` has text language {} but clip `{}` is {} (partner {})",
                self.id,
                self.lang,
                self.sign_ref,
                sign_lang,
                sign_lang.partner()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub gold_corpus_id: String,
    pub gold_text: String,
    pub translated_text: String,
}

/// Serialized form of a sign-to-sign pair: the gold target is stored by reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct S2sRecord {
    pub direction: Direction,
    pub source: MotionTokenSequence,
    pub target_ref: String,
    pub provenance: Provenance,
}

impl S2sRecord {
    pub fn check(&self) -> Result<(), String> {
        if !self.direction.is_cross_lingual() {
            return Err(format!("direction {} joins a language to itself", self.direction));
        }
        if !self.source.synthetic {
            return Err(format!("source `{}` of an s2s pair must be synthetic", self.source.id));
        }
        if self.source.sign_lang != self.direction.source {
            return Err(format!(
                "source `{}` is {} but the direction starts at {}",
                self.source.id, self.source.sign_lang, self.direction.source
            ));
        }
        self.source.check()
    }

    /// Attaches the referenced gold target.
    pub fn resolve(self, target: &MotionTokenSequence) -> Result<S2SPair, String> {
        if target.id != self.target_ref {
            return Err(format!("target `{}` does not match reference `{}`", target.id, self.target_ref));
        }
        let pair = S2SPair {
            direction: self.direction,
            source: self.source,
            target: target.clone(),
            provenance: self.provenance,
        };
        pair.check()?;
        Ok(pair)
    }
}

/// Synthetic source paired with a gold target in a different sign language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct S2SPair {
    pub direction: Direction,
    pub source: MotionTokenSequence,
    pub target: MotionTokenSequence,
    pub provenance: Provenance,
}

impl S2SPair {
    pub fn check(&self) -> Result<(), String> {
        self.to_record().check()?;
        if self.target.synthetic {
            return Err(format!("target `{}` of an s2s pair must be gold", self.target.id));
        }
        if self.target.sign_lang != self.direction.target {
            return Err(format!(
                "target `{}` is {} but the direction ends at {}",
                self.target.id, self.target.sign_lang, self.direction.target
            ));
        }
        Ok(())
    }

    pub fn to_record(&self) -> S2sRecord {
        S2sRecord {
            direction: self.direction,
            source: self.source.clone(),
            target_ref: self.target.id.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Keep,
    Discard,
}

impl std::str::FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Decision::Keep),
            "discard" => Ok(Decision::Discard),
            other => Err(format!("unknown decision `{other}` (expected keep or discard)")),
        }
    }
}

/// A cross-lingual text match with its clips, automatic scores and screening decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub pair_id: String,
    pub src_text: TextUtterance,
    pub tgt_text: TextUtterance,
    #[serde(default)]
    pub src_clips: Vec<String>,
    #[serde(default)]
    pub tgt_clips: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_rating: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub decisions: BTreeMap<String, Decision>,
}

impl CandidatePair {
    pub fn check(&self) -> Result<(), String> {
        self.src_text.check()?;
        self.tgt_text.check()?;
        if self.src_text.lang == self.tgt_text.lang {
            return Err(format!("pair `{}` has the same language on both sides", self.pair_id));
        }
        if let Some(r) = self.llm_rating {
            if !(1..=5).contains(&r) {
                return Err(format!("pair `{}` has rating {r} outside 1..5", self.pair_id));
            }
        }
        if let Some(c) = self.cosine {
            if !(-1.0..=1.0).contains(&c) {
                return Err(format!("pair `{}` has cosine {c} outside [-1, 1]", self.pair_id));
            }
        }
        Ok(())
    }

    /// Unordered sign-language pair implied by the two text languages.
    pub fn language_pair(&self) -> (SignLang, SignLang) {
        Direction::new(self.src_text.lang.sign_partner(), self.tgt_text.lang.sign_partner()).unordered()
    }
}
