//! Command-line front end. Every command writes `run-manifest.json` next to
//! its outputs so a run can be repeated from its argument list.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{
    inject_bias, load_corpus, load_embeddings, load_unlabeled, split, truncate_pad, undersample,
    write_corpus, Application, Caps, EncodedApplication, SplitSpec, Vocabulary, UNK,
};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{
    load_checkpoint, predict, save_checkpoint, ModelConfig, ModelKind, ModelParams, OutputHead,
};
use crate::synth::{generate, write_synth, GeneratorConfig};
use crate::training::{
    evaluate_model, mix_seed, score_all, train, write_history, AdamConfig, TrainConfig,
};

pub const RUN_MANIFEST: &str = "run-manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "apjfnn",
    version,
    about = "Person-job fit with ability-aware attention"
)]
pub struct Cli {
    /// Worker threads for batch-parallel work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted synthetic corpus and its ground-truth manifest.
    Synth(SynthArgs),
    /// Undersample, split and build the vocabulary.
    Preprocess(PreprocessArgs),
    /// Train a model and save the best checkpoint.
    Train(Box<TrainArgs>),
    /// Score a labeled corpus and write its metrics.
    Eval(EvalArgs),
    /// Print one probability per application.
    Predict(PredictArgs),
    /// Attention report for one application.
    Explain(ExplainArgs),
    /// Relabel a gendered corpus with the bias-injection protocol.
    BiasInject(BiasArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Sigmoid,
    Softmax2,
}

#[derive(Debug, Clone, Args)]
pub struct CapArgs {
    #[arg(long, default_value_t = 15)]
    pub max_reqs: usize,
    #[arg(long, default_value_t = 15)]
    pub max_exps: usize,
    #[arg(long, default_value_t = 30)]
    pub max_req_words: usize,
    #[arg(long, default_value_t = 300)]
    pub max_exp_words: usize,
}

impl CapArgs {
    fn caps(&self) -> Result<Caps> {
        let caps = Caps {
            requirements: self.max_reqs,
            experiences: self.max_exps,
            requirement_words: self.max_req_words,
            experience_words: self.max_exp_words,
        };
        caps.validate()?;
        Ok(caps)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with a full generator configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub postings: Option<usize>,
    #[arg(long)]
    pub apps_per_posting: Option<usize>,
    #[arg(long)]
    pub skills: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub female_prob: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep every negative instead of balancing per posting.
    #[arg(long)]
    pub no_undersample: bool,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// apjfnn, bpjfnn or apjfnn-side.
    #[arg(long)]
    pub model: ModelKind,
    /// Full corpus; undersampled and split under `--seed`.
    #[arg(long, conflicts_with_all = ["train", "val"])]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    /// Pre-split training file (use with `--val`).
    #[arg(long, requires = "val")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub no_undersample: bool,
    /// Pre-trained vectors in word2vec text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Dropout keep probability.
    #[arg(long, default_value_t = 0.8)]
    pub keep_prob: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 100)]
    pub embed_dim: usize,
    /// LSTM hidden size per direction.
    #[arg(long, default_value_t = 200)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub word_attention_dim: usize,
    #[arg(long, default_value_t = 400)]
    pub match_attention_dim: usize,
    #[arg(long, default_value_t = 200)]
    pub fit_dim: usize,
    #[arg(long, value_enum, default_value_t = HeadArg::Sigmoid)]
    pub output_head: HeadArg,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[command(flatten)]
    pub caps: CapArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub caps: CapArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Applications to score; labels are optional.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Also write `predictions.jsonl` and the run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub caps: CapArgs,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Which application of the file to explain.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Render text heat bars instead of JSON.
    #[arg(long)]
    pub pretty: bool,
    /// Also write `explain.json` and the run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub caps: CapArgs,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// 0 success, 1 runtime failure, 2 usage or validation error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Validation(_) | Error::Parse { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    args: Vec<String>,
    seed: Option<u64>,
    version: &'a str,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, command: &str, seed: Option<u64>, outputs: &[&str]) -> Result<()> {
    let m = RunManifest {
        command,
        args: std::env::args().skip(1).collect(),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join(RUN_MANIFEST), &m)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Fails with a validation error (exit 2) before any output is written.
fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Validation(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // Ignore the error if a pool was already installed (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::BiasInject(a) => cmd_bias_inject(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            require_file(p, "generator config")?;
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => GeneratorConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.postings {
        cfg.postings = v;
    }
    if let Some(v) = a.apps_per_posting {
        cfg.applications_per_posting = v;
    }
    if let Some(v) = a.skills {
        cfg.skill_universe = v;
    }
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.noise {
        cfg.noise = v;
    }
    if let Some(v) = a.female_prob {
        cfg.female_prob = v;
    }
    let corpus = generate(&cfg)?;
    write_synth(&a.out, &corpus)?;
    write_manifest(
        &a.out,
        "synth",
        Some(a.seed),
        &["corpus.jsonl", "truth.json"],
    )?;
    let pos = corpus.applications.iter().filter(|x| x.label == 1).count();
    println!(
        "{} applications, {pos} positive, written to {}",
        corpus.applications.len(),
        a.out.display()
    );
    Ok(())
}

/// Undersampling (unless disabled) followed by the seeded split.
fn split_corpus(
    corpus: &[Application],
    spec: &str,
    seed: u64,
    no_undersample: bool,
) -> Result<(Vec<Application>, Vec<Application>, Vec<Application>)> {
    let spec = SplitSpec::parse(spec, seed)?;
    let pool = if no_undersample {
        corpus.to_vec()
    } else {
        undersample(corpus, seed)
    };
    let (tr, va, te) = split(&pool, &spec)?;
    if tr.is_empty() || va.is_empty() {
        return Err(Error::Validation(format!(
            "split {spec:?} of {} applications leaves an empty train or validation set",
            pool.len()
        )));
    }
    Ok((tr, va, te))
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    require_file(&a.corpus, "corpus")?;
    let corpus = load_corpus(&a.corpus)?;
    let (tr, va, te) = split_corpus(&corpus, &a.split, a.seed, a.no_undersample)?;
    let vocab = Vocabulary::build(&tr, a.min_count)?;
    create_dir(&a.out)?;
    write_corpus(&a.out.join("train.jsonl"), &tr)?;
    write_corpus(&a.out.join("val.jsonl"), &va)?;
    write_corpus(&a.out.join("test.jsonl"), &te)?;
    vocab.save(&a.out.join("vocab.txt"))?;
    write_manifest(
        &a.out,
        "preprocess",
        Some(a.seed),
        &["train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt"],
    )?;
    println!(
        "train {} / val {} / test {}, vocabulary {}",
        tr.len(),
        va.len(),
        te.len(),
        vocab.len()
    );
    Ok(())
}

impl TrainArgs {
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::new(self.model, vocab_size);
        c.embed_dim = self.embed_dim;
        c.hidden = self.hidden;
        c.word_attention_dim = self.word_attention_dim;
        c.match_attention_dim = self.match_attention_dim;
        c.fit_dim = self.fit_dim;
        c.output = match self.output_head {
            HeadArg::Sigmoid => OutputHead::Sigmoid,
            HeadArg::Softmax2 => OutputHead::Softmax2,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            epochs: self.epochs,
            keep_prob: self.keep_prob,
            seed: self.seed,
            eval_every: self.eval_every,
            patience: self.patience,
            caps: self.caps.caps()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: ModelKind,
    best_epoch: usize,
    steps: usize,
    train_size: usize,
    val_size: usize,
    vocab_size: usize,
    val: &'a crate::eval::MetricsReport,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (tr, va, te) = match (&a.corpus, &a.train, &a.val) {
        (Some(c), None, None) => {
            require_file(c, "corpus")?;
            let (tr, va, te) = split_corpus(&load_corpus(c)?, &a.split, a.seed, a.no_undersample)?;
            (tr, va, Some(te))
        }
        (None, Some(t), Some(v)) => {
            require_file(t, "training file")?;
            require_file(v, "validation file")?;
            (load_corpus(t)?, load_corpus(v)?, None)
        }
        _ => {
            return Err(Error::Validation(
                "give either --corpus or both --train and --val".into(),
            ))
        }
    };
    if let Some(e) = &a.embeddings {
        require_file(e, "embedding file")?;
    }
    let cfg = a.train_config()?;
    let vocab = Vocabulary::build(&tr, a.min_count)?;
    let config = a.model_config(vocab.len())?;
    let mut params = ModelParams::<f32>::init(
        config.clone(),
        &mut ChaCha8Rng::seed_from_u64(mix_seed(&[a.seed, 1])),
    )?;
    if let Some(path) = &a.embeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[a.seed, 2]));
        let loaded = load_embeddings::<f32, _>(path, &vocab, config.embed_dim, &mut rng)?;
        log::info!(
            "embeddings: {} rows from file, {} random",
            loaded.matched,
            loaded.random_rows
        );
        params.set_embeddings(loaded.table)?;
    }
    let (tr_enc, va_enc) = (vocab.encode_all(&tr), vocab.encode_all(&va));

    create_dir(&a.out)?;
    let outcome = match train(params, &tr_enc, &va_enc, &cfg, |_| ()) {
        Ok(o) => o,
        Err(Error::Divergence(report)) => {
            let snap = a.out.join("divergence");
            let values = report
                .params
                .iter()
                .map(|(_, n, t)| (n.to_string(), t.clone()))
                .collect();
            save_checkpoint(&snap, &ModelParams::from_values(config, values)?, &vocab)?;
            write_json(
                &snap.join("report.json"),
                &serde_json::json!({ "epoch": report.epoch, "step": report.step, "loss": format!("{}", report.loss) }),
            )?;
            log::error!("diagnostic snapshot written to {}", snap.display());
            return Err(Error::Divergence(report));
        }
        Err(e) => return Err(e),
    };
    save_checkpoint(&a.out.join("checkpoint"), &outcome.best, &vocab)?;
    write_history(&a.out.join("history.jsonl"), &outcome.history)?;
    let mut outputs = vec!["checkpoint", "history.jsonl", "summary.json"];
    if let Some(te) = &te {
        let dir = a.out.join("splits");
        create_dir(&dir)?;
        write_corpus(&dir.join("train.jsonl"), &tr)?;
        write_corpus(&dir.join("val.jsonl"), &va)?;
        write_corpus(&dir.join("test.jsonl"), te)?;
        outputs.push("splits");
    }
    let (val, _) = evaluate_model(&outcome.best, &va_enc, &cfg.caps)?;
    write_json(
        &a.out.join("summary.json"),
        &TrainSummary {
            model: a.model,
            best_epoch: outcome.best_epoch,
            steps: outcome.steps,
            train_size: tr.len(),
            val_size: va.len(),
            vocab_size: vocab.len(),
            val: &val,
        },
    )?;
    write_manifest(&a.out, "train", Some(a.seed), &outputs)?;
    println!(
        "best epoch {} of {}\n{}",
        outcome.best_epoch,
        outcome.history.len(),
        val.to_table()
    );
    Ok(())
}

fn encode_for(vocab: &Vocabulary, apps: &[Application]) -> Vec<EncodedApplication> {
    vocab.encode_all(apps)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.corpus, "corpus")?;
    let caps = a.caps.caps()?;
    let (params, vocab) = load_checkpoint(&a.checkpoint)?;
    let apps = load_corpus(&a.corpus)?;
    if apps.is_empty() {
        return Err(Error::Validation("corpus is empty".into()));
    }
    let enc = encode_for(&vocab, &apps);
    let scores = score_all(&params, &enc, &caps)?;
    let labels: Vec<u8> = enc.iter().map(|x| x.label).collect();
    let report = evaluate(&scores, &labels, a.threshold)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    write_manifest(&a.out, "eval", None, &["metrics.json"])?;
    println!("{}", report.to_table());
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    job_id: &'a str,
    resume_id: &'a str,
    y_hat: f64,
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.corpus, "input")?;
    let caps = a.caps.caps()?;
    let (params, vocab) = load_checkpoint(&a.checkpoint)?;
    let apps = load_unlabeled(&a.corpus)?;
    let scores = score_all(&params, &encode_for(&vocab, &apps), &caps)?;
    for s in &scores {
        println!("{s:.6}");
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        let mut text = String::new();
        for (app, &y_hat) in apps.iter().zip(&scores) {
            let p = Prediction {
                job_id: &app.job_id,
                resume_id: &app.resume_id,
                y_hat,
            };
            text.push_str(&serde_json::to_string(&p)?);
            text.push('\n');
        }
        let path = out.join("predictions.jsonl");
        fs::write(&path, text).map_err(|e| Error::io(path, e))?;
        write_manifest(out, "predict", None, &["predictions.jsonl"])?;
    }
    Ok(())
}

/// Structured attention report: the trace of [`predict`] plus the tokens
/// that its positions refer to.
#[derive(Debug, Clone, Serialize)]
pub struct ExplainReport {
    pub job_id: String,
    pub resume_id: String,
    pub model: ModelKind,
    pub y_hat: f64,
    /// Padded word tokens of each real requirement, aligned with `trace.alpha`.
    pub requirement_tokens: Vec<Vec<String>>,
    /// Padded word tokens of each real experience, aligned with `trace.gamma[l][k]`.
    pub experience_tokens: Vec<Vec<String>>,
    pub trace: crate::model::AttentionTrace,
}

pub fn explain_application(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    app: &Application,
    caps: &Caps,
) -> Result<ExplainReport> {
    if !params.config.kind.is_hierarchical() {
        return Err(Error::Config(format!(
            "{} has no attention to explain",
            params.config.kind
        )));
    }
    let enc = vocab.encode(app);
    let all_unknown = enc
        .requirements
        .iter()
        .chain(&enc.experiences)
        .flatten()
        .all(|&t| t == UNK);
    if all_unknown {
        return Err(Error::Config(format!(
            "vocabulary mismatch: no token of {}/{} is in the checkpoint vocabulary",
            app.job_id, app.resume_id
        )));
    }
    let mut sample = truncate_pad(&enc, caps);
    if !params.config.kind.uses_side() {
        sample.side = None;
    }
    let out = predict(params, &sample)?;
    let words = |doc: &crate::data::PaddedDoc| -> Vec<Vec<String>> {
        (0..doc.slots())
            .filter(|&k| doc.slot_mask[k])
            .map(|k| {
                doc.tokens[k]
                    .iter()
                    .map(|&t| vocab.token(t).unwrap_or("<?>").to_string())
                    .collect()
            })
            .collect()
    };
    Ok(ExplainReport {
        job_id: app.job_id.clone(),
        resume_id: app.resume_id.clone(),
        model: params.config.kind,
        y_hat: out.y_hat,
        requirement_tokens: words(&sample.job),
        experience_tokens: words(&sample.resume),
        trace: out.trace,
    })
}

const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];

fn bar(w: f64, width: usize) -> String {
    let n = (w.clamp(0.0, 1.0) * width as f64).round() as usize;
    "█".repeat(n) + &" ".repeat(width - n)
}

fn shade(w: f64, max: f64) -> char {
    if max <= 0.0 {
        return SHADES[0];
    }
    SHADES[((w / max).clamp(0.0, 1.0) * 4.0).round() as usize]
}

fn heat_words(out: &mut String, tokens: &[String], weights: &[f64]) {
    let max = weights.iter().copied().fold(0.0, f64::max);
    let width = tokens
        .iter()
        .filter(|t| *t != "<pad>")
        .map(|t| t.chars().count())
        .max()
        .unwrap_or(0);
    for (t, &w) in tokens.iter().zip(weights) {
        if t == "<pad>" {
            continue;
        }
        let _ = writeln!(
            out,
            "      {t:<width$}  {w:.3} {}{}",
            shade(w, max),
            bar(w, 20)
        );
    }
}

/// Aligned text rendering; darker shades and longer bars mean more weight.
pub fn render_pretty(r: &ExplainReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} / {}  ({})  y_hat = {:.4}",
        r.job_id, r.resume_id, r.model, r.y_hat
    );
    let _ = writeln!(out, "\nrequirements (beta, then alpha per word)");
    for (k, toks) in r.requirement_tokens.iter().enumerate() {
        let b = r.trace.beta.get(k).copied().unwrap_or(0.0);
        let _ = writeln!(out, "  [{k}] beta {b:.3} {}", bar(b, 20));
        if let Some(alpha) = r.trace.alpha.get(k) {
            heat_words(&mut out, toks, alpha);
        }
    }
    let _ = writeln!(
        out,
        "\nexperiences (delta, then gamma per requirement and word)"
    );
    for (l, toks) in r.experience_tokens.iter().enumerate() {
        let d = r.trace.delta.get(l).copied().unwrap_or(0.0);
        let _ = writeln!(out, "  [{l}] delta {d:.3} {}", bar(d, 20));
        for (k, gamma) in r.trace.gamma.get(l).into_iter().flatten().enumerate() {
            let _ = writeln!(out, "    given requirement {k}");
            heat_words(&mut out, toks, gamma);
        }
    }
    out
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.corpus, "input")?;
    let caps = a.caps.caps()?;
    let (params, vocab) = load_checkpoint(&a.checkpoint)?;
    let apps = load_unlabeled(&a.corpus)?;
    let app = apps.get(a.index).ok_or_else(|| {
        Error::Validation(format!(
            "index {} out of range for {} applications",
            a.index,
            apps.len()
        ))
    })?;
    let report = explain_application(&params, &vocab, app, &caps)?;
    if a.pretty {
        print!("{}", render_pretty(&report));
    } else {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("explain.json"), &report)?;
        write_manifest(out, "explain", None, &["explain.json"])?;
    }
    Ok(())
}

pub fn cmd_bias_inject(a: &BiasArgs) -> Result<()> {
    require_file(&a.corpus, "corpus")?;
    let corpus = load_corpus(&a.corpus)?;
    let (biased, manifest) = inject_bias(&corpus, a.rate, a.seed)?;
    create_dir(&a.out)?;
    write_corpus(&a.out.join("corpus.jsonl"), &biased)?;
    write_json(&a.out.join("flips.json"), &manifest)?;
    write_manifest(
        &a.out,
        "bias-inject",
        Some(a.seed),
        &["corpus.jsonl", "flips.json"],
    )?;
    let to_neg = manifest.flips.iter().filter(|f| f.to == 0).count();
    let to_pos = manifest.flips.len() - to_neg;
    println!(
        "{} flips: {to_neg} female positives to 0, {to_pos} male negatives to 1",
        manifest.flips.len()
    );
    Ok(())
}
