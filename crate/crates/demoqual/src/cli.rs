use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use demoqual_core::corpus::Corpus;
use demoqual_core::evalkit::{histogram, selection_confusion, separability_from_scores, tier_score_samples};

use crate::artifact::{id_set_hash, sha256_hex, Lineage, Models};
use crate::config::RunConfig;
use crate::corpus_io::{parse_corpus, save_corpus};
use crate::error::{CliError, Result};
use crate::output::{self, Selection};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "demoqual", version, about = "Estimate demonstration quality and filter unlabeled corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file of run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// `key=value` override, repeatable; applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus and split it into known and unknown halves.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train encoder, critic and score mixture on a labeled corpus.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Score every trajectory of a corpus.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Score a corpus and keep the `top_k` best trajectories.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Tier separability, selection confusion and score histograms on a labeled corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        selection: PathBuf,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen { common }
            | Command::Train { common, .. }
            | Command::Score { common, .. }
            | Command::Filter { common, .. }
            | Command::Eval { common, .. } => common,
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Ctx {
    fn emit(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        output::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

/// Input corpus together with the hash of its file bytes.
fn load_hashed(path: &Path) -> Result<(Corpus, String)> {
    let text = output::read(path)?;
    let corpus = parse_corpus(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((corpus, sha256_hex(text.as_bytes())))
}

fn check_ladder(models: &Models, corpus: &Corpus) -> Result<()> {
    if models.encoder.tiers != corpus.ladder().names() {
        return Err(CliError::Data(format!(
            "corpus tiers {:?} differ from model tiers {:?}",
            corpus.ladder().names(),
            models.encoder.tiers
        )));
    }
    Ok(())
}

fn candidates_hash(c: &Corpus) -> String {
    id_set_hash(c.trajectories().iter().map(|t| t.id()))
}

/// Run one command; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let common = cli.command.common();
    let cfg = RunConfig::load(common.config.as_deref(), &common.set, common.seed)?;
    eprint!("# effective config\n{}", cfg.to_toml());
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
    let mut ctx = Ctx {
        cfg,
        out: common.out.clone(),
        written: Vec::new(),
    };
    match &cli.command {
        Command::Gen { .. } => gen(&mut ctx)?,
        Command::Train { corpus, .. } => train(&mut ctx, corpus)?,
        Command::Score { models, corpus, .. } => {
            score(&mut ctx, models, corpus, false)?;
        }
        Command::Filter { models, corpus, .. } => {
            score(&mut ctx, models, corpus, true)?;
        }
        Command::Eval {
            models,
            corpus,
            selection,
            ..
        } => eval(&mut ctx, models, corpus, selection)?,
    }
    Ok(ctx.written)
}

fn gen(ctx: &mut Ctx) -> Result<()> {
    let corpus = pipeline::generate_labeled(&ctx.cfg)?;
    let (known, held) = pipeline::split(&ctx.cfg, &corpus)?;
    let cfg = ctx.cfg.clone();
    for (name, c) in [
        ("corpus.jsonl", &corpus),
        ("known.jsonl", &known),
        ("unknown.jsonl", &held.unlabeled()),
        ("unknown_labeled.jsonl", held.labeled_for_evaluation()),
    ] {
        let path = ctx.out.join(name);
        save_corpus(&path, c, Some(&cfg))?;
        ctx.written.push(path);
    }
    Ok(())
}

fn train(ctx: &mut Ctx, corpus: &Path) -> Result<()> {
    let (known, hash) = load_hashed(corpus)?;
    let trained = pipeline::train(&ctx.cfg, &known, &hash)?;
    ctx.written.extend(trained.models.save(&ctx.out)?);
    let lineage = trained.models.lineage();
    for (name, trace) in &trained.losses {
        let text = output::loss_tsv(&ctx.cfg, &lineage, trace);
        ctx.emit(&format!("{name}_loss.tsv"), &text)?;
    }
    Ok(())
}

fn score(ctx: &mut Ctx, models: &Path, corpus: &Path, select: bool) -> Result<()> {
    let models = Models::load(models)?;
    let (unknown, _) = load_hashed(corpus)?;
    check_ladder(&models, &unknown)?;
    let reports = pipeline::score(&ctx.cfg, &models, &unknown)?;
    let selected = if select { Some(pipeline::select(&ctx.cfg, &reports)?) } else { None };
    let mut lineage = models.lineage();
    lineage.insert("candidates".into(), candidates_hash(&unknown));
    let text = output::reports_jsonl(&ctx.cfg, &lineage, unknown.ladder(), &reports);
    ctx.emit("reports.jsonl", &text)?;
    if let Some(ids) = selected {
        let sel = Selection::new(&ctx.cfg, lineage, ids);
        ctx.emit("selection.json", &sel.to_json())?;
    }
    Ok(())
}

fn eval(ctx: &mut Ctx, models: &Path, corpus: &Path, selection: &Path) -> Result<()> {
    let models = Models::load(models)?;
    let (labeled, corpus_hash) = load_hashed(corpus)?;
    check_ladder(&models, &labeled)?;
    labeled.require_labeled()?;
    let sel = Selection::parse(&output::read(selection)?)?;

    let mut expected = models.lineage();
    expected.insert("candidates".into(), candidates_hash(&labeled));
    for (k, v) in &expected {
        if sel.lineage.get(k) != Some(v) {
            return Err(CliError::Data(format!(
                "lineage mismatch: selection `{k}` is {}, expected {v}",
                sel.lineage.get(k).map_or("missing", String::as_str)
            )));
        }
    }

    let cfg = ctx.cfg.clone();
    let (enc, critic) = (&models.encoder.model, &models.critic.model);
    let scores = tier_score_samples(enc, critic, &labeled, cfg.eval_segments_per_tier, cfg.seed)?;
    let sep = separability_from_scores(&scores, cfg.eval_normalize)?;
    let confusion = selection_confusion(&sel.selected, &labeled)?;
    let hist = histogram(&scores, cfg.histogram_bins)?;

    let mut lineage: Lineage = models.lineage();
    lineage.insert("corpus".into(), corpus_hash);
    lineage.insert("selection".into(), sha256_hex(sel.to_json().as_bytes()));
    let ladder = labeled.ladder();
    ctx.emit("separability.tsv", &output::separability_tsv(&cfg, &lineage, ladder, &sep))?;
    ctx.emit("confusion.tsv", &output::confusion_tsv(&cfg, &lineage, ladder, &confusion))?;
    ctx.emit("histogram.tsv", &output::histogram_tsv(&cfg, &lineage, ladder, &hist))?;
    Ok(())
}
