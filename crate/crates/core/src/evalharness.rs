//! Anchor-based evaluation of sign-to-sign systems.
//!
//! Every unique source clip of a direction is fed to the system once. Its
//! output is scored against every target clip that shares its text match and
//! the best score per metric is kept: minimum DTW-PA-MPJPE, and for BLEU the
//! reference with the highest smoothed sentence score, after which corpus
//! BLEU-1/4 is computed over the selected references.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::btcorpus::run_ordered;
use crate::corpus::PoseIndex;
use crate::error::{Error, Result};
use crate::geoalign::{dtw_pa_mpjpe, MetricReport};
use crate::lang::{Direction, SignLang};
use crate::modelio::{cascade_s2s, direct_s2s, Client, EndpointSpec, Request, Role, StageLatency, Synthesizer, TimedResult};
use crate::quantize::{decode_tokens, encode_clip, Codebook};
use crate::textscore::{corpus_bleu, sentence_bleu, tokenize_eval, BleuScore, Smoothing, SENTENCE_FLOOR};
use crate::types::{CandidatePair, MotionTokenSequence};

/// Directions with fewer anchors than this are flagged low-n.
pub const LOW_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    /// Encode the recorded source clip with the quantizer.
    #[default]
    Real,
    /// Generate the source from its text with the shared synthesizer.
    Synthetic,
}

impl FromStr for SourceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(SourceMode::Real),
            "synthetic" => Ok(SourceMode::Synthetic),
            other => Err(Error::Usage(format!("unknown source mode `{other}` (expected real or synthetic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorTarget {
    pub clip_id: String,
    pub pair_id: String,
    /// Reference text in the target's spoken language.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub source_clip: String,
    /// Source-side text, used to synthesize the source in synthetic mode.
    pub source_text: String,
    pub pair_id: String,
    pub targets: Vec<AnchorTarget>,
}

impl Anchor {
    pub fn candidate_pairs(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub direction: Direction,
    pub anchors: Vec<Anchor>,
    /// Pair ids skipped because one side had no clips.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn candidate_pairs(&self) -> usize {
        self.anchors.iter().map(Anchor::candidate_pairs).sum()
    }
}

/// One anchor per unique source clip, carrying every target clip matched to it.
///
/// A source clip that occurs in several pairs keeps the first pair id and
/// collects the targets of all of them, deduplicated by clip id.
pub fn build_anchor_sets(strict: &[CandidatePair], direction: Direction) -> AnchorSet {
    let mut anchors: Vec<Anchor> = Vec::new();
    let mut by_source: HashMap<String, usize> = HashMap::new();
    let mut skipped = Vec::new();
    for pair in strict {
        let (src_lang, tgt_lang) = (pair.src_text.lang.sign_partner(), pair.tgt_text.lang.sign_partner());
        let (sources, source_text, targets, target_text) = if (src_lang, tgt_lang) == (direction.source, direction.target) {
            (&pair.src_clips, &pair.src_text.text, &pair.tgt_clips, &pair.tgt_text.text)
        } else if (tgt_lang, src_lang) == (direction.source, direction.target) {
            (&pair.tgt_clips, &pair.tgt_text.text, &pair.src_clips, &pair.src_text.text)
        } else {
            continue;
        };
        if sources.is_empty() || targets.is_empty() {
            skipped.push(pair.pair_id.clone());
            continue;
        }
        for src in sources {
            let i = *by_source.entry(src.clone()).or_insert_with(|| {
                anchors.push(Anchor {
                    source_clip: src.clone(),
                    source_text: source_text.clone(),
                    pair_id: pair.pair_id.clone(),
                    targets: Vec::new(),
                });
                anchors.len() - 1
            });
            let anchor = &mut anchors[i];
            for tgt in targets {
                if !anchor.targets.iter().any(|t| &t.clip_id == tgt) {
                    anchor.targets.push(AnchorTarget {
                        clip_id: tgt.clone(),
                        pair_id: pair.pair_id.clone(),
                        text: target_text.clone(),
                    });
                }
            }
        }
    }
    AnchorSet { direction, anchors, skipped }
}

/// A system under evaluation.
#[derive(Debug, Clone)]
pub enum System {
    Direct { s2s: Arc<Client> },
    Cascade { s2t: Arc<Client>, mt: Arc<Client>, t2s: Arc<Client> },
}

impl System {
    pub fn translate(&self, source: &MotionTokenSequence, tgt: SignLang) -> std::result::Result<TimedResult, crate::modelio::ModelError> {
        match self {
            System::Direct { s2s } => direct_s2s(s2s, source, tgt),
            System::Cascade { s2t, mt, t2s } => cascade_s2s(s2t, mt, t2s, source, tgt),
        }
    }

    /// Number of translations requested so far.
    pub fn invocations(&self) -> usize {
        match self {
            System::Direct { s2s } => s2s.calls(),
            System::Cascade { s2t, .. } => s2t.calls(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedSystem {
    pub name: String,
    pub system: System,
}

/// Entry of a systems file: endpoint spec strings per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Direct { name: String, s2s: String },
    Cascade { name: String, s2t: String, mt: String, t2s: String },
}

impl SystemSpec {
    pub fn name(&self) -> &str {
        match self {
            SystemSpec::Direct { name, .. } | SystemSpec::Cascade { name, .. } => name,
        }
    }

    pub fn connect(&self, timeout_ms: u64) -> Result<NamedSystem> {
        let client = |role, spec: &str| -> Result<Arc<Client>> {
            Ok(Arc::new(Client::connect(&EndpointSpec::parse(role, spec, timeout_ms)?)?))
        };
        let system = match self {
            SystemSpec::Direct { s2s, .. } => System::Direct { s2s: client(Role::S2s, s2s)? },
            SystemSpec::Cascade { s2t, mt, t2s, .. } => System::Cascade {
                s2t: client(Role::S2t, s2t)?,
                mt: client(Role::Mt, mt)?,
                t2s: client(Role::T2s, t2s)?,
            },
        };
        Ok(NamedSystem { name: self.name().to_string(), system })
    }
}

/// Resources shared by every cell of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub codebook: Codebook,
    pub poses: PoseIndex,
    /// Separately trained sign-to-text model used only as an evaluator.
    pub s2t_eval: Arc<Client>,
    pub source_mode: SourceMode,
    pub synthesizer: Option<Synthesizer>,
    pub allow_scale: bool,
    pub record_latency: bool,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub clip_id: String,
    pub pa: MetricReport,
    /// Floor-smoothed sentence BLEU-4 of the evaluator output against this target's text.
    pub sentence_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLog {
    pub system: String,
    pub direction: Direction,
    pub source_clip: String,
    pub pair_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetScore>,
    /// Target with the lowest PA-MPJPE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa: Option<MetricReport>,
    /// Target with the highest sentence BLEU; its text is the corpus BLEU reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_latencies: Option<Vec<StageLatency>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub system: String,
    pub direction: Direction,
    pub n_anchors: usize,
    pub n_failed: usize,
    pub low_n: bool,
    /// `None` when the metric was skipped (no successful anchor, or timing disabled).
    pub pa: Option<MetricReport>,
    pub b1: Option<BleuScore>,
    pub b4: Option<BleuScore>,
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn is_low_n(direction: Direction, n_anchors: usize) -> bool {
    direction.unordered() == (SignLang::Asl, SignLang::Dgs) || n_anchors < LOW_N
}

struct Scored {
    targets: Vec<TargetScore>,
    pa_index: usize,
    bleu_index: usize,
    hypothesis: String,
    result: TimedResult,
}

fn source_sequence(anchor: &Anchor, direction: Direction, ctx: &EvalContext) -> Result<MotionTokenSequence> {
    match ctx.source_mode {
        SourceMode::Real => {
            let clip = ctx
                .poses
                .get(&anchor.source_clip)
                .ok_or_else(|| Error::Data(format!("source clip `{}` not in pose store", anchor.source_clip)))?;
            let mut seq = encode_clip(clip, &ctx.codebook)?;
            seq.sign_lang = direction.source;
            Ok(seq)
        }
        SourceMode::Synthetic => {
            let synth = ctx
                .synthesizer
                .as_ref()
                .ok_or_else(|| Error::Usage("synthetic source mode needs a t2s endpoint".into()))?;
            let id = format!("{}.t2s", anchor.source_clip);
            Ok(synth.synthesize(id, &anchor.source_text, direction.source)?.0)
        }
    }
}

fn score_anchor(system: &System, anchor: &Anchor, direction: Direction, ctx: &EvalContext) -> Result<Scored> {
    let source = source_sequence(anchor, direction, ctx)?;
    let result = system.translate(&source, direction.target)?;
    let tokens = result.payload.as_tokens().expect("s2s payload is tokens").to_vec();
    let output = MotionTokenSequence {
        id: format!("{}.out", anchor.source_clip),
        sign_lang: direction.target,
        synthetic: true,
        codebook_id: ctx.codebook.codebook_id.clone(),
        tokens,
    };
    let decoded = decode_tokens(&output, &ctx.codebook)?;
    let recognized = ctx.s2t_eval.invoke(&Request::S2t { tokens: output.tokens.clone(), sign_lang: direction.target })?;
    let hypothesis = recognized.payload.as_text().expect("s2t payload is text").to_string();
    let hyp_tokens = tokenize_eval(&hypothesis, direction.target);

    let mut targets = Vec::with_capacity(anchor.targets.len());
    for t in &anchor.targets {
        let clip = ctx
            .poses
            .get(&t.clip_id)
            .ok_or_else(|| Error::Data(format!("target clip `{}` not in pose store", t.clip_id)))?;
        let pa = dtw_pa_mpjpe(&decoded, clip, ctx.allow_scale)?;
        let reference = tokenize_eval(&t.text, direction.target);
        let sentence = sentence_bleu(&hyp_tokens, &reference, 4, SENTENCE_FLOOR)?.bleu;
        targets.push(TargetScore { clip_id: t.clip_id.clone(), pa, sentence_bleu: sentence });
    }
    if targets.is_empty() {
        return Err(Error::Data(format!("anchor `{}` has no targets", anchor.source_clip)));
    }
    // first index wins ties in both selectors
    let mut pa_index = 0;
    let mut bleu_index = 0;
    for (i, t) in targets.iter().enumerate() {
        if t.pa.overall < targets[pa_index].pa.overall {
            pa_index = i;
        }
        if t.sentence_bleu > targets[bleu_index].sentence_bleu {
            bleu_index = i;
        }
    }
    Ok(Scored { targets, pa_index, bleu_index, hypothesis, result })
}

/// Evaluates one system on one direction; invokes the system once per anchor.
pub fn evaluate_direction(
    name: &str,
    system: &System,
    anchors: &AnchorSet,
    ctx: &EvalContext,
) -> Result<(DirectionReport, Vec<AnchorLog>)> {
    let direction = anchors.direction;
    if ctx.source_mode == SourceMode::Synthetic && ctx.synthesizer.is_none() {
        return Err(Error::Usage("synthetic source mode needs a t2s endpoint".into()));
    }
    let outcomes = run_ordered(anchors.len(), ctx.parallelism, false, |i| {
        score_anchor(system, &anchors.anchors[i], direction, ctx)
    });

    let mut logs = Vec::with_capacity(anchors.len());
    for (anchor, outcome) in anchors.anchors.iter().zip(outcomes) {
        let base = AnchorLog {
            system: name.to_string(),
            direction,
            source_clip: anchor.source_clip.clone(),
            pair_id: anchor.pair_id.clone(),
            ok: false,
            error: None,
            targets: Vec::new(),
            pa_target: None,
            pa: None,
            bleu_target: None,
            hypothesis: None,
            reference: None,
            latency_ms: None,
            stage_latencies: None,
        };
        let log = match outcome.expect("every anchor is attempted") {
            Ok(s) => AnchorLog {
                ok: true,
                pa_target: Some(s.targets[s.pa_index].clip_id.clone()),
                pa: Some(s.targets[s.pa_index].pa),
                bleu_target: Some(s.targets[s.bleu_index].clip_id.clone()),
                hypothesis: Some(s.hypothesis),
                reference: Some(anchor.targets[s.bleu_index].text.clone()),
                latency_ms: ctx.record_latency.then_some(s.result.latency_ms),
                stage_latencies: if ctx.record_latency { s.result.stage_latencies } else { None },
                targets: s.targets,
                ..base
            },
            Err(e) => AnchorLog { error: Some(e.to_string()), ..base },
        };
        logs.push(log);
    }
    Ok((summarize(name, direction, &logs)?, logs))
}

/// Report means recomputed from per-anchor logs.
pub fn summarize(name: &str, direction: Direction, logs: &[AnchorLog]) -> Result<DirectionReport> {
    let ok: Vec<&AnchorLog> = logs.iter().filter(|l| l.ok).collect();
    let pa = MetricReport::mean(ok.iter().filter_map(|l| l.pa.as_ref()));
    let (b1, b4) = if ok.is_empty() {
        (None, None)
    } else {
        let hyps: Vec<Vec<String>> =
            ok.iter().map(|l| tokenize_eval(l.hypothesis.as_deref().unwrap_or(""), direction.target)).collect();
        let refs: Vec<Vec<String>> =
            ok.iter().map(|l| tokenize_eval(l.reference.as_deref().unwrap_or(""), direction.target)).collect();
        (
            Some(corpus_bleu(&hyps, &refs, 1, Smoothing::None)?),
            Some(corpus_bleu(&hyps, &refs, 4, Smoothing::None)?),
        )
    };
    let latencies: Vec<f64> = ok.iter().filter_map(|l| l.latency_ms).collect();
    let latency_ms = (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64);
    Ok(DirectionReport {
        system: name.to_string(),
        direction,
        n_anchors: logs.len(),
        n_failed: logs.len() - ok.len(),
        low_n: is_low_n(direction, logs.len()),
        pa,
        b1,
        b4,
        latency_ms,
        error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemAverage {
    pub system: String,
    pub n_anchors: usize,
    pub pa: Option<f64>,
    pub b1: Option<f64>,
    pub b4: Option<f64>,
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub source_mode: SourceMode,
    pub directions: Vec<Direction>,
    pub cells: Vec<DirectionReport>,
    pub averages: Vec<SystemAverage>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Every system on every direction. A failing cell is recorded, never fatal.
pub fn run_matrix(systems: &[NamedSystem], anchor_sets: &[AnchorSet], ctx: &EvalContext) -> (MatrixReport, Vec<AnchorLog>) {
    let mut cells = Vec::new();
    let mut logs = Vec::new();
    for s in systems {
        for set in anchor_sets {
            match evaluate_direction(&s.name, &s.system, set, ctx) {
                Ok((report, mut l)) => {
                    cells.push(report);
                    logs.append(&mut l);
                }
                Err(e) => cells.push(DirectionReport {
                    system: s.name.clone(),
                    direction: set.direction,
                    n_anchors: set.len(),
                    n_failed: set.len(),
                    low_n: is_low_n(set.direction, set.len()),
                    pa: None,
                    b1: None,
                    b4: None,
                    latency_ms: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    let averages = systems
        .iter()
        .map(|s| {
            let mine: Vec<&DirectionReport> = cells.iter().filter(|c| c.system == s.name).collect();
            SystemAverage {
                system: s.name.clone(),
                n_anchors: mine.iter().map(|c| c.n_anchors).sum(),
                pa: mean_of(mine.iter().map(|c| c.pa.map(|p| p.overall))),
                b1: mean_of(mine.iter().map(|c| c.b1.as_ref().map(|b| b.bleu))),
                b4: mean_of(mine.iter().map(|c| c.b4.as_ref().map(|b| b.bleu))),
                latency_ms: mean_of(mine.iter().map(|c| c.latency_ms)),
            }
        })
        .collect();
    let report = MatrixReport {
        source_mode: ctx.source_mode,
        directions: anchor_sets.iter().map(|a| a.direction).collect(),
        cells,
        averages,
    };
    (report, logs)
}

impl MatrixReport {
    pub fn cell(&self, system: &str, direction: Direction) -> Option<&DirectionReport> {
        self.cells.iter().find(|c| c.system == system && c.direction == direction)
    }

    pub fn average(&self, system: &str) -> Option<&SystemAverage> {
        self.averages.iter().find(|a| a.system == system)
    }

    /// One block per metric; rows are systems, columns directions then the average.
    /// The anchor row shows the total in the last column.
    pub fn to_text(&self) -> String {
        let systems: Vec<&str> = {
            let mut seen = HashSet::new();
            self.cells.iter().map(|c| c.system.as_str()).filter(|s| seen.insert(*s)).collect()
        };
        let name_w = systems.iter().map(|s| s.chars().count()).max().unwrap_or(0).max(12);
        let col_w = 10;
        let mut out = String::new();
        let header = |out: &mut String, title: &str| {
            let _ = write!(out, "{title:<name_w$}");
            for d in &self.directions {
                let low = self.cells.iter().any(|c| c.direction == *d && c.low_n);
                let label = format!("{d}{}", if low { "*" } else { "" });
                let _ = write!(out, " {label:>col_w$}");
            }
            let _ = writeln!(out, " {:>col_w$}", "Avg");
        };

        header(&mut out, "#anchors");
        let counts: BTreeMap<Direction, usize> = self.cells.iter().map(|c| (c.direction, c.n_anchors)).collect();
        let _ = write!(out, "{:<name_w$}", "");
        for d in &self.directions {
            let _ = write!(out, " {:>col_w$}", counts.get(d).copied().unwrap_or(0));
        }
        let _ = writeln!(out, " {:>col_w$}", counts.values().sum::<usize>());

        type Getter = fn(&DirectionReport) -> Option<f64>;
        type AvgGetter = fn(&SystemAverage) -> Option<f64>;
        let blocks: [(&str, usize, Getter, AvgGetter); 4] = [
            ("PA-MPJPE", 4, |c| c.pa.map(|p| p.overall), |a| a.pa),
            ("BLEU-1", 2, |c| c.b1.as_ref().map(|b| b.bleu), |a| a.b1),
            ("BLEU-4", 2, |c| c.b4.as_ref().map(|b| b.bleu), |a| a.b4),
            ("latency ms", 2, |c| c.latency_ms, |a| a.latency_ms),
        ];
        for (title, prec, get, get_avg) in blocks {
            let _ = writeln!(out);
            header(&mut out, title);
            for s in &systems {
                let _ = write!(out, "{s:<name_w$}");
                for d in &self.directions {
                    let cell = self.cell(s, *d);
                    let text = match cell {
                        Some(c) if c.error.is_some() => "ERR".to_string(),
                        Some(c) => get(c).map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into()),
                        None => "-".into(),
                    };
                    let _ = write!(out, " {text:>col_w$}");
                }
                let avg = self.average(s).and_then(get_avg).map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(out, " {avg:>col_w$}");
            }
        }
        if self.cells.iter().any(|c| c.low_n) {
            let _ = writeln!(out, "\n* low-n: too few anchors to be informative on their own");
        }
        let failures: Vec<String> = self
            .cells
            .iter()
            .filter(|c| c.n_failed > 0)
            .map(|c| match &c.error {
                Some(e) => format!("{} {}: {e}", c.system, c.direction),
                None => format!("{} {}: {} of {} anchors failed", c.system, c.direction, c.n_failed, c.n_anchors),
            })
            .collect();
        if !failures.is_empty() {
            let _ = writeln!(out, "\nfailures:");
            for f in failures {
                let _ = writeln!(out, "  {f}");
            }
        }
        out
    }
}
