use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use phonalign::data::{generate_corpus, read_corpus, write_corpus, Split};
use phonalign::metrics::{write_report_csv, write_report_json};
use phonalign::model::Checkpoint;
use phonalign::pipeline::{
    corpus_config_from_toml, evaluate, reproduce_tradeoff, train, write_stats, SweepConfig, TeacherCache, TrainConfig,
};

#[derive(Parser)]
#[command(name = "phonalign", version, about = "Aligned CTC phoneme recognizers and mispronunciation detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a TOML corpus config.
    GenCorpus {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; the loss recipe is named in the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Teacher checkpoint for recipes with a teacher-student term.
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Directory for cached teacher logits (kept in memory otherwise).
        #[arg(long)]
        teacher_cache: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split and write a report row.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Delay reference, normally the alignment-trained bidirectional model.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// `.json` writes JSON; anything else CSV.
        #[arg(long)]
        report: PathBuf,
    },
    /// Per-utterance posteriorgrams and peak statistics as CSV.
    Stats {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Window sweep of students against one teacher: latency vs F1.
    ReproduceTradeoff {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log.json");
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { config, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = corpus_config_from_toml(&text)?;
            let corpus = generate_corpus(&cfg)?;
            write_corpus(&corpus, &out)?;
            println!(
                "wrote {} train / {} dev / {} test utterances to {}",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                out.display()
            );
        }
        Command::Train { config, corpus, out, teacher, teacher_cache } => {
            let mut cfg = TrainConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let corpus_dir = match corpus.or_else(|| cfg.corpus.clone()) {
                Some(d) => d,
                None => bail!("no corpus given: pass --corpus or set `corpus` in the config"),
            };
            if let Some(t) = &teacher {
                cfg.loss.teacher = Some(t.display().to_string());
            }
            let corpus = read_corpus(&corpus_dir)?;
            let teacher_ckpt = cfg.loss.teacher.as_deref().map(|p| Checkpoint::load(Path::new(p))).transpose()?;
            let cache = teacher_cache.map(TeacherCache::Disk).unwrap_or_default();
            let (ckpt, mut log) = train(&cfg, &corpus, teacher_ckpt.as_ref(), cache)?;
            ckpt.save(&out)?;
            log.final_checkpoint = Some(out.clone());
            log.save(&log_path(&out))?;
            for e in &log.epochs {
                let per = e.dev_per.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into());
                println!("epoch {:>3}  loss {:.4}  dev PER {per}  lr {:.2e}", e.epoch, e.train_loss, e.lr);
            }
            println!("saved {}", out.display());
        }
        Command::Evaluate { ckpt, corpus, split, reference, report } => {
            let model = Checkpoint::load(&ckpt)?;
            let reference = reference.as_deref().map(Checkpoint::load).transpose()?;
            let corpus = read_corpus(&corpus)?;
            let eval = evaluate(&model, corpus.split(split), reference.as_ref())?;
            if report.extension().is_some_and(|e| e == "json") {
                write_report_json(&report, std::slice::from_ref(&eval.row))?;
            } else {
                write_report_csv(&report, std::slice::from_ref(&eval.row))?;
            }
            let r = &eval.report;
            println!("PER {:.2}  P {:.1}  R {:.1}  F1 {:.1}", r.per, r.precision, r.recall, r.f1);
            match eval.delay {
                Some(d) => println!("delay {:+.2} frames ({:+.0} ms)", d.mean_delay_frames, d.mean_delay_ms),
                None => println!("delay omitted (no usable reference)"),
            }
        }
        Command::Stats { ckpt, corpus, split, out } => {
            let model = Checkpoint::load(&ckpt)?;
            let corpus = read_corpus(&corpus)?;
            write_stats(&out, &model, corpus.split(split))?;
            println!("wrote {}", out.display());
        }
        Command::ReproduceTradeoff { config, out } => {
            let cfg = SweepConfig::load(&config)?;
            let rows = reproduce_tradeoff(&cfg, &out)?;
            println!("{:<16} {:>8} {:>8}", "recipe", "delay", "F1");
            for r in rows {
                let d = r.delay_frames.map(|d| format!("{d:+.2}")).unwrap_or_else(|| "-".into());
                println!("{:<16} {:>8} {:>8.1}", r.recipe, d, r.f1);
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
