//! Argument parsing and command dispatch for the `phrasal` binary.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use phrasal::synth::{generate, GeneratorSpec};
use phrasal::text::{load_corpus, write_corpus};
use phrasal::{
    cross_validate, score_table, Algorithm, DistanceMetric, Engine, ModelArchive, ScoreTable, TrainConfig,
    TrainedModel,
};

#[derive(Debug, Parser)]
#[command(name = "phrasal", version, about = "Ensemble phrase classifier")]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

/// Training knobs shared by every subcommand. Unset flags keep the library
/// defaults.
#[derive(Debug, Args, Default)]
pub struct GlobalOpts {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Partition count and worker thread count of the engine.
    #[arg(long, global = true)]
    pub partitions: Option<usize>,
    /// Network replicas trained in parallel.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Minibatches between parameter averaging rounds.
    #[arg(long = "avg-freq", global = true)]
    pub avg_freq: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub metric: Option<DistanceMetric>,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// SVM learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub units: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it to an archive.
    Train {
        #[arg(long, default_value = "ensemble")]
        algo: Algorithm,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify phrases given with --text, or one per line on stdin.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: Vec<String>,
    },
    /// Stratified k-fold cross-validation.
    Evaluate {
        #[arg(long, default_value = "ensemble")]
        algo: Algorithm,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Per-model score table of an ensemble archive.
    Table {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Write a synthetic labeled corpus.
    Generate {
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        phrases_per_class: Option<usize>,
        #[arg(long)]
        keywords_per_class: Option<usize>,
        #[arg(long)]
        noise_vocab: Option<usize>,
        #[arg(long)]
        noise_rate: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

impl GlobalOpts {
    pub fn config(&self) -> TrainConfig {
        let mut c = TrainConfig::default();
        if let Some(s) = self.seed {
            c = c.with_seed(s);
        }
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$($target).+ = v; })*
            };
        }
        set! {
            partitions => partitions,
            workers => master.worker_count,
            avg_freq => master.averaging_frequency,
            k => k,
            metric => metric,
            trees => forest.n_trees,
            depth => forest.max_depth,
            alpha => alpha,
            lambda => svm.reg_lambda,
            lr => svm.learning_rate,
            iters => svm.iterations,
            units => net.units,
            batch => master.batch_size_per_worker,
            epochs => net.epochs,
        }
        c
    }

    fn engine(&self, cfg: &TrainConfig) -> Result<Engine> {
        Ok(Engine::new(cfg.partitions)?)
    }
}

fn load_archive(path: &Path) -> Result<ModelArchive> {
    ModelArchive::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

/// Phrases from `--text`, or else every line of `stdin`.
fn phrases(text: Vec<String>, stdin: &mut dyn BufRead) -> Result<Vec<String>> {
    if !text.is_empty() {
        return Ok(text);
    }
    let mut out = Vec::new();
    for line in stdin.lines() {
        out.push(line.context("reading stdin")?);
    }
    Ok(out)
}

fn format_probs(model: &TrainedModel, probs: &[f64]) -> String {
    model
        .label_set()
        .labels()
        .iter()
        .zip(probs)
        .map(|(l, p)| format!("{l}={p:.3}"))
        .collect::<Vec<_>>()
        .join("\t")
}

fn write_csv(table: &ScoreTable, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![table.phrase.clone()];
    header.extend(table.labels.iter().cloned());
    w.write_record(&header)?;
    for (name, values) in &table.rows {
        let mut rec = vec![name.clone()];
        rec.extend(values.iter().map(|v| format!("{v:.3}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cli: Cli, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let cfg = cli.opts.config();
    match cli.command {
        Command::Train { algo, input, out: path } => {
            let corpus = load_corpus(&input)?;
            let engine = cli.opts.engine(&cfg)?;
            let model = phrasal::train(&engine, algo, &corpus, &cfg)?;
            writeln!(
                out,
                "{algo}: {} phrases, {} classes, {} terms",
                corpus.len(),
                model.label_set().len(),
                model.vocabulary().dim()
            )?;
            ModelArchive { config: cfg, model }.save(&path)?;
        }
        Command::Predict { model, text } => {
            let archive = load_archive(&model)?;
            let engine = cli.opts.engine(&cfg)?;
            for phrase in phrases(text, stdin)? {
                let (probs, label) = archive.model.classify(&engine, &phrase)?;
                writeln!(out, "{label}\t{}", format_probs(&archive.model, probs.as_slice()))?;
            }
        }
        Command::Evaluate { algo, input, folds } => {
            let corpus = load_corpus(&input)?;
            let engine = cli.opts.engine(&cfg)?;
            let cv = cross_validate(&engine, &corpus, folds, algo, &cfg)?;
            write!(out, "{}", cv.report.render())?;
            for (member, report) in &cv.members {
                writeln!(out, "{}: {:.4}", member.display_name(), report.accuracy)?;
            }
        }
        Command::Table { model, text, format } => {
            let archive = load_archive(&model)?;
            let TrainedModel::Ensemble(ensemble) = &archive.model else {
                bail!(
                    "{} holds a {} model; score tables need an ensemble archive",
                    model.display(),
                    archive.model.algorithm()
                );
            };
            let engine = cli.opts.engine(&cfg)?;
            for phrase in phrases(text, stdin)? {
                let table = score_table(&engine, ensemble, &phrase)?;
                match format {
                    Format::Text => write!(out, "{}", table.to_text())?,
                    Format::Csv => write_csv(&table, out)?,
                }
            }
        }
        Command::Generate {
            out: path,
            phrases_per_class,
            keywords_per_class,
            noise_vocab,
            noise_rate,
        } => {
            let d = GeneratorSpec::default();
            let spec = GeneratorSpec {
                phrases_per_class: phrases_per_class.unwrap_or(d.phrases_per_class),
                keywords_per_class: keywords_per_class.unwrap_or(d.keywords_per_class),
                shared_noise_vocab_size: noise_vocab.unwrap_or(d.shared_noise_vocab_size),
                noise_rate: noise_rate.unwrap_or(d.noise_rate),
                seed: cli.opts.seed.unwrap_or(d.seed),
            };
            let corpus = generate(&spec)?;
            match path {
                Some(p) => {
                    let f = File::create(&p).with_context(|| format!("cannot create {}", p.display()))?;
                    let mut w = BufWriter::new(f);
                    write_corpus(&mut w, &corpus)?;
                    w.flush()?;
                }
                None => write_corpus(out, &corpus)?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unset_flags_keep_defaults() {
        assert_eq!(GlobalOpts::default().config(), TrainConfig::default());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "phrasal", "predict", "--model", "m", "--seed", "7", "--workers", "3", "--metric", "manhattan",
            "--lambda", "0.5", "--units", "16",
        ])
        .unwrap();
        let c = cli.opts.config();
        assert_eq!((c.seed, c.svm.seed, c.forest.seed), (7, 7, 7));
        assert_eq!(c.master.worker_count, 3);
        assert_eq!(c.metric, DistanceMetric::Manhattan);
        assert_eq!(c.svm.reg_lambda, 0.5);
        assert_eq!(c.net.units, 16);
    }

    #[test]
    fn unknown_algorithm_is_rejected() {
        assert!(Cli::try_parse_from(["phrasal", "train", "--algo", "lstm", "--input", "a", "--out", "b"]).is_err());
    }
}
