//! Command-line front end. Exit codes: 0 success, 1 data error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use signbt::btcorpus::{bt_corpus_stats, build_bt_direction, stats_from_lengths, BtConfig, OnError};
use signbt::config::RunConfig;
use signbt::corpus::{
    load_gold_pairs, load_s2s_pairs, pose_index, read_jsonl, read_records, save_s2s_pairs, to_jsonl, token_index,
    write_records,
};
use signbt::evalharness::{build_anchor_sets, run_matrix, EvalContext, SourceMode, SystemSpec};
use signbt::geoalign::dtw_pa_mpjpe;
use signbt::modelio::{Client, EndpointSpec, Role, Synthesizer};
use signbt::quantize::{decode_tokens, encode_clip, train_codebook, Codebook, TrainConfig};
use signbt::reviewserver::{serve, ReviewServer};
use signbt::textscore::{corpus_bleu, tokenize_eval, Smoothing};
use signbt::verify::{
    apply_filters, attach_scores, subset_stats, CosineScore, DecisionRecord, RatingScore, ScreeningSession,
};
use signbt::{CandidatePair, Direction, Error, MotionTokenSequence, PoseClip, Result, S2sRecord, SignLang};

#[derive(Debug, Parser)]
#[command(name = "signbt", version, about = "Cross-lingual sign back-translation, re-verification and evaluation")]
pub struct Cli {
    /// JSON file mirroring RunConfig; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Flags backed by RunConfig fields. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Keep pairs with rating strictly above this.
    #[arg(long, global = true)]
    pub rating_min: Option<i32>,
    /// Keep pairs with cosine strictly above this.
    #[arg(long, global = true)]
    pub cosine_min: Option<f64>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long = "k", global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub allow_scale: Option<bool>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub record_latency: Option<bool>,
}

impl CommonArgs {
    fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.timeout_ms {
            cfg.timeout_ms = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
        if let Some(v) = self.rating_min {
            cfg.thresholds.rating_min_exclusive = v;
        }
        if let Some(v) = self.cosine_min {
            cfg.thresholds.cosine_min_exclusive = v;
        }
        if let Some(v) = self.window {
            cfg.quantizer.window = v;
        }
        if let Some(v) = self.k {
            cfg.quantizer.k = v;
        }
        if let Some(v) = self.max_iters {
            cfg.quantizer.max_iters = v;
        }
        if let Some(v) = self.allow_scale {
            cfg.allow_scale = v;
        }
        if let Some(v) = self.record_latency {
            cfg.record_latency = v;
        }
        cfg
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Motion tokenizer: train, encode, decode.
    #[command(subcommand)]
    Quantize(QuantizeCmd),
    /// Pose and text metrics.
    #[command(subcommand)]
    Metric(MetricCmd),
    /// Back-translated sign-to-sign corpus.
    #[command(subcommand)]
    Bt(BtCmd),
    /// Strict-subset re-verification.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Screening server.
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Anchor-based evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Debug, Subcommand)]
pub enum QuantizeCmd {
    Train {
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        codebook_id: Option<String>,
    },
    Encode {
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Decode {
        #[arg(long)]
        tokens: Option<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricCmd {
    /// DTW-PA-MPJPE between clips of two pose files, paired by line.
    PaMpjpe {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Corpus BLEU between two text files, one sentence per line.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Target sign language; selects word or character tokens.
        #[arg(long)]
        lang: String,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        /// Floor epsilon for zero n-gram matches; unsmoothed when absent.
        #[arg(long)]
        floor: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BtCmd {
    Build {
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Token store the gold manifest references.
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// Source sign language; repeat for several.
        #[arg(long = "source-lang", required = true)]
        source_langs: Vec<String>,
        #[arg(long)]
        mt: Option<String>,
        #[arg(long)]
        t2s: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        failures: Option<PathBuf>,
        #[arg(long, default_value = "skip")]
        on_error: String,
        #[arg(long)]
        codebook_id: Option<String>,
    },
    Stats {
        #[arg(long)]
        pairs: PathBuf,
        /// Token store for target lengths; without it the target column is empty.
        #[arg(long)]
        tokens: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum VerifyCmd {
    Filter {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        cosines: Option<PathBuf>,
        /// Candidate pool output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    Stats {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        json: bool,
    },
    Finalize {
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long)]
        annotators: String,
        /// Strict subset output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReviewCmd {
    Serve {
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        annotators: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        session_id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    Run {
        /// JSON list of systems: {"kind":"direct","name","s2s"} or {"kind":"cascade","name","s2t","mt","t2s"}.
        #[arg(long)]
        systems: PathBuf,
        /// Strict-subset candidate pairs the anchors are built from.
        #[arg(long)]
        anchors: PathBuf,
        /// Evaluator sign-to-text endpoint.
        #[arg(long)]
        s2t: Option<String>,
        /// Text-to-sign endpoint for synthetic sources.
        #[arg(long)]
        t2s: Option<String>,
        #[arg(long)]
        source_mode: Option<String>,
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Comma-separated, e.g. ASL-CSL,CSL-ASL; all six when absent.
        #[arg(long)]
        directions: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// The configuration a parsed command line resolves to.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(cli.common.apply(base))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Usage(format!("missing {flag} (flag or config)")))
}

fn or_cfg(flag: &Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    required(flag.clone().or_else(|| cfg.clone()), name)
}

fn endpoint(role: Role, flag: &Option<String>, cfg: &Option<String>, name: &str, timeout_ms: u64) -> Result<Arc<Client>> {
    let spec = required(flag.clone().or_else(|| cfg.clone()), name)?;
    let spec = EndpointSpec::parse(role, &spec, timeout_ms)?;
    Ok(Arc::new(Client::connect(&spec)?))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn print(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(s.as_bytes());
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        None => Err(Error::Usage("no subcommand given; see --help".into())),
        Some(Command::Quantize(cmd)) => quantize(cmd, &cfg),
        Some(Command::Metric(cmd)) => metric(cmd, &cfg),
        Some(Command::Bt(cmd)) => bt(cmd, &cfg),
        Some(Command::Verify(cmd)) => verify(cmd, &cfg),
        Some(Command::Review(cmd)) => review(cmd, &cfg),
        Some(Command::Eval(cmd)) => eval(cmd, &cfg),
    }
}

fn quantize(cmd: &QuantizeCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        QuantizeCmd::Train { poses, out, codebook_id } => {
            let clips: Vec<PoseClip> = read_records(or_cfg(poses, &cfg.paths.poses, "--poses")?)?;
            let out = or_cfg(out, &cfg.paths.codebook, "--out")?;
            let config = TrainConfig {
                window: cfg.quantizer.window,
                k: cfg.quantizer.k,
                max_iters: cfg.quantizer.max_iters,
                seed: cfg.seed,
                codebook_id: codebook_id.clone(),
            };
            let codebook = train_codebook(&clips, &config)?;
            codebook.save(&out)?;
            print(&format!("trained {} on {} clips -> {}\n", codebook.codebook_id, clips.len(), out.display()));
            Ok(())
        }
        QuantizeCmd::Encode { poses, codebook, out } => {
            let clips: Vec<PoseClip> = read_records(or_cfg(poses, &cfg.paths.poses, "--poses")?)?;
            let codebook = Codebook::load(or_cfg(codebook, &cfg.paths.codebook, "--codebook")?)?;
            let out = or_cfg(out, &cfg.paths.tokens, "--out")?;
            let seqs = clips.iter().map(|c| encode_clip(c, &codebook)).collect::<std::result::Result<Vec<_>, _>>()?;
            write_records(&out, &seqs)?;
            print(&format!("encoded {} clips -> {}\n", seqs.len(), out.display()));
            Ok(())
        }
        QuantizeCmd::Decode { tokens, codebook, out } => {
            let seqs: Vec<MotionTokenSequence> = read_records(or_cfg(tokens, &cfg.paths.tokens, "--tokens")?)?;
            let codebook = Codebook::load(or_cfg(codebook, &cfg.paths.codebook, "--codebook")?)?;
            let out = or_cfg(out, &cfg.paths.poses, "--out")?;
            let clips = seqs.iter().map(|s| decode_tokens(s, &codebook)).collect::<std::result::Result<Vec<_>, _>>()?;
            write_records(&out, &clips)?;
            print(&format!("decoded {} sequences -> {}\n", clips.len(), out.display()));
            Ok(())
        }
    }
}

fn metric(cmd: &MetricCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        MetricCmd::PaMpjpe { pred, reference } => {
            let preds: Vec<PoseClip> = read_records(pred)?;
            let refs: Vec<PoseClip> = read_records(reference)?;
            if preds.len() != refs.len() {
                return Err(Error::Data(format!("{} predicted clips but {} reference clips", preds.len(), refs.len())));
            }
            let mut out = String::new();
            for (p, r) in preds.iter().zip(&refs) {
                let report = dtw_pa_mpjpe(p, r, cfg.allow_scale)?;
                out.push_str(&serde_json::to_string(&report)?);
                out.push('\n');
            }
            print(&out);
            Ok(())
        }
        MetricCmd::Bleu { hyp, reference, lang, max_n, floor } => {
            let lang: SignLang = lang.parse()?;
            let read = |p: &PathBuf| -> Result<Vec<Vec<String>>> {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(text.lines().map(|l| tokenize_eval(l, lang)).collect())
            };
            let smoothing = match floor {
                Some(eps) => Smoothing::Floor(*eps),
                None => Smoothing::None,
            };
            let score = corpus_bleu(&read(hyp)?, &read(reference)?, *max_n, smoothing)?;
            print(&(serde_json::to_string(&score)? + "\n"));
            Ok(())
        }
    }
}

fn bt(cmd: &BtCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        BtCmd::Build { gold, tokens, source_langs, mt, t2s, out, failures, on_error, codebook_id } => {
            let tokens = token_index(read_records::<MotionTokenSequence>(or_cfg(tokens, &cfg.paths.tokens, "--tokens")?)?)?;
            let gold = load_gold_pairs(or_cfg(gold, &cfg.paths.gold, "--gold")?, &tokens)?;
            let out = or_cfg(out, &cfg.paths.out, "--out")?;
            let mt = endpoint(Role::Mt, mt, &cfg.endpoints.mt, "--mt", cfg.timeout_ms)?;
            let t2s = endpoint(Role::T2s, t2s, &cfg.endpoints.t2s, "--t2s", cfg.timeout_ms)?;
            let codebook_id = codebook_id
                .clone()
                .or_else(|| gold.first().and_then(|g| tokens.get(&g.sign_ref)).map(|t| t.codebook_id.clone()))
                .unwrap_or_default();
            let synthesizer = Synthesizer::new(t2s, codebook_id)?;
            let on_error: OnError = on_error.parse()?;
            let mut pairs = Vec::new();
            let mut failed = Vec::new();
            for lang in source_langs {
                let mut bt = BtConfig::new(lang.parse()?, Arc::clone(&mt), synthesizer.clone())?;
                bt.on_error = on_error;
                bt.parallelism = cfg.parallelism;
                let result = build_bt_direction(&gold, &tokens, &bt)?;
                pairs.extend(result.pairs);
                failed.extend(result.failures);
            }
            save_s2s_pairs(&out, &pairs)?;
            if let Some(path) = failures {
                write_records(path, &failed)?;
            }
            print(&format!("{} pairs -> {} ({} failed)\n", pairs.len(), out.display(), failed.len()));
            Ok(())
        }
        BtCmd::Stats { pairs, tokens, json } => {
            let table = match tokens {
                Some(t) => {
                    let index = token_index(read_records::<MotionTokenSequence>(t)?)?;
                    bt_corpus_stats(&load_s2s_pairs(pairs, &index)?)
                }
                None => {
                    let records: Vec<S2sRecord> = read_records(pairs)?;
                    stats_from_lengths(records.iter().map(|r| (r.direction, r.source.len(), None)))
                }
            };
            print(&if *json { pretty(&table)? } else { table.to_text() });
            Ok(())
        }
    }
}

fn load_session(pool: &Path, annotators: &str, decisions: &Path) -> Result<ScreeningSession> {
    let pool: Vec<CandidatePair> = read_records(pool)?;
    let annotators = ScreeningSession::parse_annotators(annotators).map_err(|e| Error::Usage(e.to_string()))?;
    let records: Vec<DecisionRecord> = read_jsonl(decisions)?;
    Ok(ScreeningSession::replay(pool, annotators, records)?)
}

fn verify(cmd: &VerifyCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        VerifyCmd::Filter { candidates, ratings, cosines, out, rejections } => {
            let mut pairs: Vec<CandidatePair> = read_records(candidates)?;
            let ratings: Vec<RatingScore> = match ratings {
                Some(p) => read_jsonl(p)?,
                None => Vec::new(),
            };
            let cosines: Vec<CosineScore> = match cosines {
                Some(p) => read_jsonl(p)?,
                None => Vec::new(),
            };
            attach_scores(&mut pairs, &ratings, &cosines)?;
            let outcome = apply_filters(&pairs, &cfg.thresholds)?;
            let out = or_cfg(out, &cfg.paths.pool, "--out")?;
            write_records(&out, &outcome.pool)?;
            if let Some(path) = rejections {
                write_records(path, &outcome.rejections)?;
            }
            print(&format!(
                "{} candidates: {} kept -> {}, {} rejected\n",
                pairs.len(),
                outcome.pool.len(),
                out.display(),
                outcome.rejections.len()
            ));
            Ok(())
        }
        VerifyCmd::Stats { before, after, json } => {
            let before: Vec<CandidatePair> = read_records(before)?;
            let after: Vec<CandidatePair> = read_records(after)?;
            let stats = subset_stats(&before, &after)?;
            print(&if *json { pretty(&stats)? } else { stats.to_text() });
            Ok(())
        }
        VerifyCmd::Finalize { pool, decisions, annotators, out } => {
            let pool = or_cfg(pool, &cfg.paths.pool, "--pool")?;
            let decisions = or_cfg(decisions, &cfg.paths.decisions, "--decisions")?;
            let session = load_session(&pool, annotators, &decisions)?;
            let jsonl = session.finalize_jsonl()?;
            match out {
                Some(path) => write_file(path, &jsonl)?,
                None => print(&jsonl),
            }
            Ok(())
        }
    }
}

fn review(cmd: &ReviewCmd, cfg: &RunConfig) -> Result<()> {
    let ReviewCmd::Serve { pool, annotators, port, host, decisions, session_id } = cmd;
    let pool: Vec<CandidatePair> = read_records(or_cfg(pool, &cfg.paths.pool, "--pool")?)?;
    let annotators = ScreeningSession::parse_annotators(annotators).map_err(|e| Error::Usage(e.to_string()))?;
    let decisions = decisions.clone().or_else(|| cfg.paths.decisions.clone());
    let server = Arc::new(ReviewServer::open(session_id.clone(), pool, annotators, decisions.as_deref())?);
    let handle = serve(server, &format!("{host}:{port}"), cfg.parallelism.max(4))?;
    eprintln!("review session `{session_id}` on {}", handle.url());
    handle.join();
    Ok(())
}

fn parse_directions(s: &str) -> Result<Vec<Direction>> {
    s.split(',').filter(|d| !d.trim().is_empty()).map(|d| d.trim().parse()).collect()
}

fn eval(cmd: &EvalCmd, cfg: &RunConfig) -> Result<()> {
    let EvalCmd::Run { systems, anchors, s2t, t2s, source_mode, poses, codebook, directions, out } = cmd;
    let source_mode: SourceMode = match source_mode {
        Some(m) => m.parse()?,
        None => cfg.source_mode,
    };
    let directions = match directions {
        Some(d) => parse_directions(d)?,
        None => SignLang::directions().to_vec(),
    };
    let specs: Vec<SystemSpec> = {
        let text = fs::read_to_string(systems).map_err(|e| Error::io(systems, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", systems.display())))?
    };
    let out = or_cfg(out, &cfg.paths.out, "--out")?;
    let strict: Vec<CandidatePair> = read_records(anchors)?;
    let codebook = Codebook::load(or_cfg(codebook, &cfg.paths.codebook, "--codebook")?)?;
    let poses = pose_index(read_records::<PoseClip>(or_cfg(poses, &cfg.paths.poses, "--poses")?)?)?;
    let s2t_eval = endpoint(Role::S2t, s2t, &cfg.endpoints.s2t, "--s2t", cfg.timeout_ms)?;
    let synthesizer = match source_mode {
        SourceMode::Real => None,
        SourceMode::Synthetic => {
            let client = endpoint(Role::T2s, t2s, &cfg.endpoints.t2s, "--t2s", cfg.timeout_ms)?;
            Some(Synthesizer::new(client, codebook.codebook_id.clone())?)
        }
    };
    let systems = specs.iter().map(|s| s.connect(cfg.timeout_ms)).collect::<Result<Vec<_>>>()?;
    let anchor_sets: Vec<_> = directions.iter().map(|d| build_anchor_sets(&strict, *d)).collect();
    let ctx = EvalContext {
        codebook,
        poses,
        s2t_eval,
        source_mode,
        synthesizer,
        allow_scale: cfg.allow_scale,
        record_latency: cfg.record_latency,
        parallelism: cfg.parallelism,
    };
    let (report, logs) = run_matrix(&systems, &anchor_sets, &ctx);
    let text = report.to_text();
    write_file(&out.join("report.json"), &pretty(&report)?)?;
    write_file(&out.join("report.txt"), &text)?;
    write_file(&out.join("per_anchor.jsonl"), &to_jsonl(&logs)?)?;
    print(&text);
    Ok(())
}
