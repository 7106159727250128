//! Spoken and sign language codes and the partner mapping between them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpokenLang {
    En,
    Zh,
    De,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignLang {
    Asl,
    Csl,
    Dgs,
}

impl SpokenLang {
    pub const ALL: [SpokenLang; 3] = [SpokenLang::En, SpokenLang::Zh, SpokenLang::De];

    pub fn code(self) -> &'static str {
        match self {
            SpokenLang::En => "en",
            SpokenLang::Zh => "zh",
            SpokenLang::De => "de",
        }
    }

    /// The sign language whose partner is `self`. The partner mapping is a
    /// bijection, so this is its inverse.
    pub fn sign_partner(self) -> SignLang {
        match self {
            SpokenLang::En => SignLang::Asl,
            SpokenLang::Zh => SignLang::Csl,
            SpokenLang::De => SignLang::Dgs,
        }
    }
}

impl SignLang {
    pub const ALL: [SignLang; 3] = [SignLang::Asl, SignLang::Csl, SignLang::Dgs];

    pub fn code(self) -> &'static str {
        match self {
            SignLang::Asl => "ASL",
            SignLang::Csl => "CSL",
            SignLang::Dgs => "DGS",
        }
    }

    /// Spoken language paired with this sign language in the monolingual corpora.
    pub fn partner(self) -> SpokenLang {
        match self {
            SignLang::Asl => SpokenLang::En,
            SignLang::Csl => SpokenLang::Zh,
            SignLang::Dgs => SpokenLang::De,
        }
    }

    /// All six ordered (source, target) pairs with source ≠ target.
    pub fn directions() -> Vec<Direction> {
        let mut out = Vec::with_capacity(6);
        for src in Self::ALL {
            for tgt in Self::ALL {
                if src != tgt {
                    out.push(Direction::new(src, tgt));
                }
            }
        }
        out
    }
}

impl fmt::Display for SpokenLang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Display for SignLang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SpokenLang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(SpokenLang::En),
            "zh" => Ok(SpokenLang::Zh),
            "de" => Ok(SpokenLang::De),
            other => Err(Error::Usage(format!("unknown spoken language `{other}`"))),
        }
    }
}

impl FromStr for SignLang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ASL" => Ok(SignLang::Asl),
            "CSL" => Ok(SignLang::Csl),
            "DGS" => Ok(SignLang::Dgs),
            other => Err(Error::Usage(format!("unknown sign language `{other}`"))),
        }
    }
}

/// An ordered translation direction between two sign languages.
///
/// Serialized as a two-element array, e.g. `["CSL","ASL"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[SignLang; 2]", into = "[SignLang; 2]")]
pub struct Direction {
    pub source: SignLang,
    pub target: SignLang,
}

impl Direction {
    pub fn new(source: SignLang, target: SignLang) -> Self {
        Self { source, target }
    }

    pub fn is_cross_lingual(&self) -> bool {
        self.source != self.target
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.target, self.source)
    }

    /// Unordered pair key with the languages sorted, as used for `↔` rows.
    pub fn unordered(&self) -> (SignLang, SignLang) {
        if self.source <= self.target {
            (self.source, self.target)
        } else {
            (self.target, self.source)
        }
    }
}

impl From<[SignLang; 2]> for Direction {
    fn from(v: [SignLang; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Direction> for [SignLang; 2] {
    fn from(d: Direction) -> Self {
        [d.source, d.target]
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}→{}", self.source, self.target)
    }
}

impl FromStr for Direction {
    type Err = Error;

    /// Accepts `CSL-ASL`, `CSL->ASL`, `CSL→ASL` or `CSL:ASL`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized = s.replace("->", "-").replace('→', "-").replace(':', "-");
        let mut parts = normalized.split('-');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => {
                let d = Direction::new(a.parse()?, b.parse()?);
                if !d.is_cross_lingual() {
                    return Err(Error::Usage(format!("direction `{s}` must join two different sign languages")));
                }
                Ok(d)
            }
            _ => Err(Error::Usage(format!("malformed direction `{s}`"))),
        }
    }
}
