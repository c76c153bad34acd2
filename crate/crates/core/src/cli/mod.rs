//! Command-line front end. Every command is reproducible from
//! (config, seed, dataset) alone; output is line-oriented key=value text.

pub mod checkpoint;
pub mod config;
pub mod dataset;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cli::checkpoint::{load_model, save_model, CheckpointMeta};
use crate::cli::config::RunConfig;
use crate::cli::dataset::{read_records, split_records};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{fit, FuzzyS2SModel, Variant};
use crate::tokenization::{
    basic_tokenize, detokenize, FuzzyTokenizer, FuzzyTokenizerOptions, TokenSequence, ZipfStats,
};

#[derive(Parser, Debug)]
#[command(name = "fuzzys2s", version, about = "Generative fuzzy sequence-to-sequence modeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Generate output text for one input using a trained checkpoint.
    Generate(GenerateArgs),
    /// Score a trained checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train ablation variants under one config and score each on the test split.
    Ablate(TrainArgs),
    /// Show per-rule firing, per-rule outputs, and the fused output for one input.
    Inspect(GenerateArgs),
    /// Train only the multi-scale tokenizer and write it as a text file.
    TokenizerTrain(TokenizerTrainArgs),
    /// Token rank/frequency tables before and after sub-word tokenization.
    ZipfReport(ZipfReportArgs),
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// key=value config file; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rule count K.
    #[arg(long)]
    pub rules: Option<usize>,
    /// Ablation variant. For ablate: run only this one instead of all three.
    #[arg(long)]
    pub variant: Option<Variant>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    /// Source text.
    pub input: String,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    /// Defaults to the dataset recorded in the checkpoint.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct TokenizerTrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output path for the tokenizer text file.
    #[arg(long, default_value = "tokenizer.txt")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ZipfReportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit only the first N ranks per section (0 = all).
    #[arg(long, default_value_t = 0)]
    pub top: usize,
    /// Frequency bar for the low-frequency tail fraction.
    #[arg(long, default_value_t = 5)]
    pub threshold: u64,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Ablate(a) => cmd_ablate(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
        Command::TokenizerTrain(a) => cmd_tokenizer_train(&a, out),
        Command::ZipfReport(a) => cmd_zipf_report(&a, out),
    }
}

fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(c) = &args.checkpoint {
        cfg.checkpoint = c.clone();
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(r) = args.rules {
        cfg.train.rules = r;
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_dataset(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| Error::config("a dataset is required: set dataset= in the config or pass --dataset"))
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(args)?;
    let data = require_dataset(&cfg)?;
    let records = read_records(data)?;
    let split = split_records(records, cfg.train.seed, cfg.train_frac, cfg.train.val_split)?;
    let report = fit(&split.train, &split.val, &cfg.train, &cfg.arch, cfg.variant)?;
    for e in &report.log {
        writeln!(out, "{}", e.to_line())?;
    }
    writeln!(out, "dropped_train={} dropped_val={}", report.dropped_train, report.dropped_val)?;
    writeln!(out, "best_epoch={}", report.best_epoch)?;
    let meta = CheckpointMeta {
        dataset: Some(data.display().to_string()),
        train_frac: cfg.train_frac,
    };
    save_model(&cfg.checkpoint, &report.model, &meta)?;
    writeln!(out, "checkpoint={}", cfg.checkpoint.display())?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let (model, _) = load_model(&args.checkpoint)?;
    writeln!(out, "{}", model.generate_text(&args.input)?)?;
    Ok(())
}

/// Word-level scoring of a model over raw text pairs. Hypotheses are
/// detokenized then re-split by the basic tokenizer, so the numbers do not
/// depend on sub-word granularity.
struct PairScore {
    report: MetricReport,
    exact_match: f64,
    skipped: usize,
}

fn score_pairs(model: &FuzzyS2SModel, pairs: &[(String, String)]) -> Result<PairScore> {
    let bound = model.arch().max_len;
    let mut hyps: Vec<TokenSequence> = Vec::new();
    let mut refs: Vec<TokenSequence> = Vec::new();
    let mut skipped = 0usize;
    let mut exact = 0usize;
    for (src, tgt) in pairs {
        let s = model.tokenize(src)?;
        let t = model.tokenize(tgt)?;
        if s.len() > bound || t.len() > bound {
            skipped += 1;
            continue;
        }
        let gen = model.generate(&s, bound)?;
        let hyp = basic_tokenize(&detokenize(&gen));
        let rf = basic_tokenize(tgt);
        if hyp == rf {
            exact += 1;
        }
        hyps.push(hyp);
        refs.push(rf);
    }
    if hyps.is_empty() {
        return Err(Error::config("no pairs left to score after dropping overlong ones"));
    }
    Ok(PairScore {
        report: MetricReport::compute(&hyps, &refs)?,
        exact_match: 100.0 * exact as f64 / hyps.len() as f64,
        skipped,
    })
}

fn write_score(score: &PairScore, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "skipped={}", score.skipped)?;
    for line in score.report.to_lines() {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "exact_match={:.4}", score.exact_match)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (model, meta) = load_model(&args.checkpoint)?;
    let data: PathBuf = match &args.dataset {
        Some(p) => p.clone(),
        None => PathBuf::from(meta.dataset.as_deref().ok_or_else(|| {
            Error::config("the checkpoint records no dataset path; pass --dataset")
        })?),
    };
    let records = read_records(&data)?;
    let tc = model.train_config();
    let split = split_records(records, tc.seed, meta.train_frac, tc.val_split)?;
    let pairs: Vec<(String, String)> = match args.split.as_str() {
        "train" => split.train,
        "val" => split.val,
        "test" => split.test,
        _ => {
            let mut all = split.train;
            all.extend(split.val);
            all.extend(split.test);
            all
        }
    };
    writeln!(out, "split={} pairs={}", args.split, pairs.len())?;
    let score = score_pairs(&model, &pairs)?;
    write_score(&score, out)
}

fn variant_path(base: &Path, v: Variant) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("ckpt");
    base.with_file_name(format!("{stem}.{}.{ext}", v.as_str()))
}

fn cmd_ablate(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(args)?;
    let data = require_dataset(&cfg)?;
    let records = read_records(data)?;
    let split = split_records(records, cfg.train.seed, cfg.train_frac, cfg.train.val_split)?;
    let variants = match args.variant {
        Some(v) => vec![v],
        None => vec![Variant::Full, Variant::NoTokenizer, Variant::NoGenfs],
    };
    for v in variants {
        let report = fit(&split.train, &split.val, &cfg.train, &cfg.arch, v)?;
        writeln!(out, "variant={}", v.as_str())?;
        writeln!(out, "rules={}", report.model.rules())?;
        writeln!(out, "best_epoch={}", report.best_epoch)?;
        let score = score_pairs(&report.model, &split.test)?;
        write_score(&score, out)?;
        let path = variant_path(&cfg.checkpoint, v);
        let meta = CheckpointMeta {
            dataset: Some(data.display().to_string()),
            train_frac: cfg.train_frac,
        };
        save_model(&path, &report.model, &meta)?;
        writeln!(out, "checkpoint={}", path.display())?;
    }
    Ok(())
}

fn cmd_inspect(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let (model, _) = load_model(&args.checkpoint)?;
    let src = model.tokenize(&args.input)?;
    let ex = model.explain(&src, model.arch().max_len)?;
    for line in ex.to_lines() {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn record_texts(records: &[(String, String)]) -> Vec<String> {
    records.iter().flat_map(|(s, t)| [s.clone(), t.clone()]).collect()
}

fn cmd_tokenizer_train(args: &TokenizerTrainArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_records(&args.dataset)?;
    let texts = record_texts(&records);
    let opts = FuzzyTokenizerOptions { seed: args.seed, ..Default::default() };
    let tok = FuzzyTokenizer::train(&texts, &opts)?;
    let lines = tok.to_lines();
    std::fs::write(&args.checkpoint, lines.join("\n") + "\n")?;
    let scales: Vec<String> = opts.scales.iter().map(|s| s.to_string()).collect();
    writeln!(out, "scales={}", scales.join(","))?;
    writeln!(out, "lines={}", lines.len())?;
    writeln!(out, "tokenizer={}", args.checkpoint.display())?;
    Ok(())
}

fn cmd_zipf_report(args: &ZipfReportArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_records(&args.dataset)?;
    let texts = record_texts(&records);
    let basic: Vec<TokenSequence> = texts.iter().map(|t| basic_tokenize(t)).collect();
    let opts = FuzzyTokenizerOptions { seed: args.seed, ..Default::default() };
    let tok = FuzzyTokenizer::train(&texts, &opts)?;
    let fuzzy: Vec<TokenSequence> = texts
        .iter()
        .map(|t| tok.tokenize_sequence(t))
        .collect::<Result<_>>()?;
    for (name, corpus) in [("basic", &basic), ("fuzzy", &fuzzy)] {
        let stats = ZipfStats::from_corpus(corpus);
        writeln!(
            out,
            "section={name} distinct={} total={} fitted_c={:.4} threshold={} low_freq_fraction={:.6}",
            stats.distinct_tokens(),
            stats.total_tokens(),
            stats.fitted_c(),
            args.threshold,
            stats.low_freq_fraction(args.threshold),
        )?;
        let cap = if args.top == 0 { usize::MAX } else { args.top };
        for (i, (token, freq)) in stats.ranked().iter().take(cap).enumerate() {
            writeln!(out, "rank={} freq={freq} token={token}", i + 1)?;
        }
    }
    Ok(())
}
