use std::fs;
use std::path::{Path, PathBuf};

use audioweave::config::{ConfigError, RunConfig};
use audioweave::forge::{backends, forge_dataset, ForgeError, ForgeRecord, SourceRecord};
use audioweave::layout::Format;
use audioweave::model::Model;
use audioweave::persistence::{read_records, write_records, write_text, ReadMode};
use audioweave::pipeline::{build_vocab, to_examples};
use audioweave::shard::{build_shard_fixture, evaluate, render_table, MetricsReport, ShardItem};
use audioweave::synth::synth_sources;
use audioweave::trainer;
use clap::{Args, ValueEnum};

use crate::error::CliError;
use crate::{CliResult, Global};

struct Ctx {
    cfg: RunConfig,
    run_dir: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            ConfigError::Io { .. } => CliError::io(e),
            _ => CliError::usage(e),
        }),
    }
}

/// Resolves the effective config (file, seed, then command overrides) and creates `<out-dir>/<timestamp>-s<seed>`
/// holding a dump of it.
fn setup(g: &Global, overrides: impl FnOnce(&mut RunConfig)) -> Result<Ctx, CliError> {
    let mut cfg = load_config(g.config.as_deref())?;
    let seed = g.seed.unwrap_or(cfg.seed);
    cfg.apply_seed(seed);
    overrides(&mut cfg);
    cfg.validate().map_err(CliError::usage)?;
    cfg.forge.endpoint = std::env::var("FORGE_ENDPOINT").ok().filter(|s| !s.is_empty());
    cfg.forge.api_key = std::env::var("FORGE_API_KEY").ok().filter(|s| !s.is_empty());
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let run_dir = g.out_dir.join(format!("{stamp}-s{seed}"));
    fs::create_dir_all(&run_dir).map_err(|e| CliError::io(format!("{}: {e}", run_dir.display())))?;
    let run_dir = fs::canonicalize(&run_dir).map_err(|e| CliError::io(format!("{}: {e}", run_dir.display())))?;
    write_text(&run_dir.join("config.toml"), &cfg.to_toml()).map_err(CliError::io)?;
    eprintln!("run directory: {}", run_dir.display());
    Ok(Ctx { cfg, run_dir })
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    /// Prepended-audio QA records to feed `forge`.
    Sources,
    /// Identity, synonym and hypernym benchmark items.
    Shard,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(value_enum)]
    kind: FixtureKind,
    /// Number of source records (sources only).
    #[arg(long)]
    records: Option<usize>,
    /// Number of lexicon words.
    #[arg(long)]
    words: Option<usize>,
    /// Clips per benchmark word (shard only).
    #[arg(long)]
    per_word_audio: Option<usize>,
}

pub fn fixture(g: &Global, a: FixtureArgs) -> CliResult {
    let ctx = setup(g, |c| match a.kind {
        FixtureKind::Sources => {
            c.synth.records = a.records.unwrap_or(c.synth.records);
            c.synth.words = a.words.unwrap_or(c.synth.words);
        }
        FixtureKind::Shard => {
            c.fixture.words = a.words.unwrap_or(c.fixture.words);
            c.fixture.per_word_audio = a.per_word_audio.unwrap_or(c.fixture.per_word_audio);
        }
    })?;
    let features = ctx.run_dir.join("features");
    match a.kind {
        FixtureKind::Sources => {
            let sources = synth_sources(ctx.cfg.seed, &ctx.cfg.synth, &ctx.cfg.world, &features)
                .map_err(|e| CliError::classify(&e))?;
            let out = ctx.run_dir.join("sources.jsonl");
            write_records(&out, &sources).map_err(CliError::io)?;
            println!("wrote {} source records to {}", sources.len(), out.display());
        }
        FixtureKind::Shard => {
            let (words, per_word) = (ctx.cfg.fixture.words, ctx.cfg.fixture.per_word_audio);
            let items = build_shard_fixture(ctx.cfg.seed, words, per_word, &ctx.cfg.world, &features)
                .map_err(|e| match e {
                    audioweave::shard::ShardError::Audio(_) => CliError::classify(&e),
                    _ => CliError::usage(e),
                })?;
            let out = ctx.run_dir.join("shard.jsonl");
            write_records(&out, &items).map_err(CliError::io)?;
            println!("wrote {} benchmark items ({words} words x {per_word} clips) to {}", items.len(), out.display());
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ForgeArgs {
    /// Source records, one JSON object per line.
    #[arg(long)]
    input: PathBuf,
    /// Rewrite backend: offline or external.
    #[arg(long, default_value = "offline")]
    backend: String,
    /// Forged output path; defaults to forged.jsonl in the run directory.
    /// Quarantined records go to quarantine.jsonl beside it.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn forge(g: &Global, a: ForgeArgs) -> CliResult {
    let registry = backends();
    let factory = registry.get(&a.backend).map_err(CliError::usage)?;
    let (sources, _) = read_records::<SourceRecord>(&a.input, ReadMode::Strict).map_err(CliError::io)?;
    let ctx = setup(g, |_| {})?;
    let backend = factory(&ctx.cfg.forge).map_err(|e| match e {
        ForgeError::Config(_) => CliError::usage(e),
        _ => CliError::Internal(e.to_string()),
    })?;
    let outcome = forge_dataset(&sources, backend.as_ref(), ctx.cfg.seed);
    let out = a.output.unwrap_or_else(|| ctx.run_dir.join("forged.jsonl"));
    let quarantine = out.with_file_name("quarantine.jsonl");
    write_records(&out, &outcome.accepted).map_err(CliError::io)?;
    write_records(&quarantine, &outcome.quarantined).map_err(CliError::io)?;
    println!(
        "forged {} of {} records ({} quarantined) -> {}",
        outcome.accepted.len(),
        sources.len(),
        outcome.quarantined.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Forged records, one JSON object per line.
    #[arg(long)]
    data: PathBuf,
    /// Prompt layout: interleaved or noninterleaved.
    #[arg(long, default_value = "interleaved")]
    format: Format,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override train.steps.
    #[arg(long)]
    steps: Option<usize>,
}

pub fn train(g: &Global, a: TrainArgs) -> CliResult {
    let (records, _) = read_records::<ForgeRecord>(&a.data, ReadMode::Strict).map_err(CliError::io)?;
    if let Some(p) = &a.resume {
        if !p.exists() {
            return Err(CliError::io(format!("{}: resume checkpoint not found", p.display())));
        }
    }
    let ctx = setup(g, |c| c.train.steps = a.steps.unwrap_or(c.train.steps))?;
    let mut model = match &a.resume {
        Some(p) => {
            let m = Model::load(p).map_err(CliError::io)?;
            let same_shape = audioweave::model::ModelConfig {
                vocab_size: m.config().vocab_size,
                ..ctx.cfg.model
            } == *m.config();
            if !same_shape || *m.frontend() != ctx.cfg.frontend {
                return Err(CliError::usage(format!(
                    "{} was trained with a different model or frontend configuration",
                    p.display()
                )));
            }
            m
        }
        None => {
            let vocab = build_vocab(&records, &ctx.cfg.forge.bank).map_err(CliError::usage)?;
            Model::new(ctx.cfg.model, ctx.cfg.frontend, vocab, ctx.cfg.seed).map_err(CliError::usage)?
        }
    };
    let data = to_examples(&records, a.format, model.vocab(), &ctx.cfg.frontend, ctx.cfg.train.mask_prompt_text)
        .map_err(|e| CliError::classify(&e))?;
    let outcome = trainer::run(&mut model, &data, &ctx.cfg.train, &ctx.run_dir).map_err(|e| CliError::classify(&e))?;
    match outcome.losses.last() {
        Some(l) => println!("trained {} steps ({}), final batch loss {l:.4}", outcome.losses.len(), a.format),
        None => println!("no training steps run ({})", a.format),
    }
    println!("checkpoint: {}", outcome.checkpoint.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Benchmark items written by `fixture shard`.
    #[arg(long)]
    fixture: PathBuf,
    /// Query template family: interleaved or noninterleaved.
    #[arg(long, default_value = "interleaved")]
    format: Format,
    /// Trials per item; overrides eval.repeats (default 4).
    #[arg(long)]
    repeats: Option<usize>,
}

pub fn eval(g: &Global, a: EvalArgs) -> CliResult {
    let model = Model::load(&a.checkpoint).map_err(CliError::io)?;
    let (items, _) = read_records::<ShardItem>(&a.fixture, ReadMode::Strict).map_err(CliError::io)?;
    let ctx = setup(g, |c| c.eval.repeats = a.repeats.unwrap_or(c.eval.repeats))?;
    let (report, responses) = evaluate(&model, &items, a.format, &ctx.cfg.eval).map_err(|e| CliError::classify(&e))?;
    let metrics = ctx.run_dir.join(format!("metrics-{}.json", a.format));
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_text(&metrics, &format!("{json}\n")).map_err(CliError::io)?;
    write_records(&ctx.run_dir.join(format!("responses-{}.jsonl", a.format)), &responses).map_err(CliError::io)?;
    print!("{}", render_table(&[(a.format.to_string(), &report)]));
    println!("metrics: {}", metrics.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files from `eval`, each optionally prefixed `NAME=`.
    #[arg(required = true)]
    metrics: Vec<String>,
}

pub fn report(g: &Global, a: ReportArgs) -> CliResult {
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    for spec in &a.metrics {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
            None => (None, PathBuf::from(spec)),
        };
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let r: MetricsReport =
            serde_json::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        rows.push((name.unwrap_or_else(|| r.format.to_string()), r));
    }
    let ctx = setup(g, |_| {})?;
    let refs: Vec<(String, &MetricsReport)> = rows.iter().map(|(n, r)| (n.clone(), r)).collect();
    let table = render_table(&refs);
    write_text(&ctx.run_dir.join("report.txt"), &table).map_err(CliError::io)?;
    print!("{table}");
    Ok(())
}
