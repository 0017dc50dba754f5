mod config;

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use docasd::alignment::align_document;
use docasd::datapipe::{
    build_preference_pairs, evaluate_corpus, load_corpus, reward_batch, select_best, Report,
};
use docasd::ranking::{correlate, RankingTable};
use docasd::segmentation::segment;
use serde::Serialize;

use crate::config::{RunArgs, RunConfig};

/// Invalid invocation or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Document-level translation scoring: align to the source, then score
/// sliding windows of aligned sentences.
#[derive(Debug, Parser)]
#[command(name = "docasd", version)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a document into sentences, one per output line.
    Segment {
        #[arg(long)]
        lang: String,
        /// Input file; stdin when absent or `-`.
        input: Option<PathBuf>,
    },
    /// Align a translation to its source and print the reconstruction.
    Align {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        src_lang: String,
        #[arg(long)]
        tgt_lang: String,
        /// Print the aligned pair as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Score every candidate of a JSONL corpus and rank the systems.
    Evaluate {
        #[arg(long, env = "DOCASD_CORPUS")]
        corpus: PathBuf,
        /// Where to write the JSON report.
        #[arg(long, env = "DOCASD_REPORT")]
        report: Option<PathBuf>,
        /// Fail when any document is skipped.
        #[arg(long, env = "DOCASD_STRICT")]
        strict: bool,
    },
    /// Re-rank systems from a stored report.
    Rank {
        #[arg(long)]
        report: PathBuf,
    },
    /// Correlate an automatic ranking with a human one.
    Correlate {
        /// Report or ranking table.
        #[arg(long)]
        auto: PathBuf,
        /// Ranking table.
        #[arg(long)]
        human: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Keep the best-scoring candidate per document, as JSONL.
    Best {
        #[arg(long, env = "DOCASD_CORPUS")]
        corpus: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "DOCASD_STRICT")]
        strict: bool,
    },
    /// Emit chosen/rejected triplets for two candidate systems, as JSONL.
    Prefpairs {
        #[arg(long, env = "DOCASD_CORPUS")]
        corpus: PathBuf,
        /// First system; defaults to each record's first candidate.
        #[arg(long)]
        a: Option<String>,
        /// Second system; defaults to each record's second candidate.
        #[arg(long)]
        b: Option<String>,
        /// Minimum score difference for a pair to be emitted.
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "DOCASD_STRICT")]
        strict: bool,
    },
    /// Print the reward of each hypothesis for one source document.
    Reward {
        #[arg(long)]
        src: PathBuf,
        /// Hypothesis file; repeat for a group.
        #[arg(long = "hyp", required = true)]
        hyps: Vec<PathBuf>,
        #[arg(long)]
        src_lang: String,
        #[arg(long)]
        tgt_lang: String,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn report_skips(skipped: usize, strict: bool) -> Result<()> {
    if skipped > 0 {
        eprintln!("skipped {skipped} document(s)");
        if strict {
            bail!("{skipped} document(s) skipped under --strict");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BestRecord<'a> {
    doc_id: &'a str,
    system: &'a str,
    score: f64,
    src: &'a str,
    tgt: &'a str,
}

fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(&cli.run)?;
    let stdout = io::stdout();
    match cli.command {
        Command::Segment { lang, input } => {
            let text = match input.as_deref() {
                Some(path) if path != Path::new("-") => read_text(path)?,
                _ => {
                    let mut text = String::new();
                    io::stdin().read_to_string(&mut text)?;
                    text
                }
            };
            let sentences = segment(&text, &lang, &config.segmenter)?;
            let mut out = stdout.lock();
            for sentence in sentences.iter() {
                writeln!(out, "{sentence}")?;
            }
        }
        Command::Align {
            src,
            tgt,
            reference,
            src_lang,
            tgt_lang,
            json,
        } => {
            let reference = reference.as_deref().map(read_text).transpose()?;
            let scorer = config.scorer(&config.metric_align)?;
            let pair = align_document(
                &read_text(&src)?,
                &read_text(&tgt)?,
                reference.as_deref(),
                (&src_lang, &tgt_lang),
                &config.align_config(),
                scorer.as_ref(),
            )?;
            let mut out = stdout.lock();
            if json {
                serde_json::to_writer_pretty(&mut out, &pair)?;
                writeln!(out)?;
            } else {
                let path: Vec<String> = pair
                    .path
                    .pairs
                    .iter()
                    .map(|(i, j)| format!("({i},{j})"))
                    .collect();
                writeln!(out, "path\t{}", path.join(" "))?;
                writeln!(out, "total\t{:.6}", pair.path.total)?;
                writeln!(out, "placeholders\t{}", pair.placeholder_count)?;
                for (i, entry) in pair.tgt_reconstructed.iter().enumerate() {
                    let targets: Vec<String> =
                        entry.target_indices.iter().map(usize::to_string).collect();
                    writeln!(out, "{i}\t[{}]\t{}", targets.join(","), entry.text)?;
                }
            }
        }
        Command::Evaluate {
            corpus,
            report,
            strict,
        } => {
            let records = load_corpus(&corpus)?;
            let pipeline = config.pipeline()?;
            let eval = evaluate_corpus(&records, &pipeline, config.workers)?;
            let report_doc = Report::new(config.echo(), eval)?;
            if let Some(path) = &report {
                let mut out = output(Some(path))?;
                serde_json::to_writer_pretty(&mut out, &report_doc)?;
                writeln!(out)?;
                out.flush()?;
            }
            stdout
                .lock()
                .write_all(report_doc.systems_tsv().as_bytes())?;
            report_skips(report_doc.skipped.len(), strict)?;
        }
        Command::Rank { report } => {
            let report = Report::load(&report)?;
            let mut reranked = report.clone();
            reranked.systems = report.rerank()?;
            if reranked.systems != report.systems {
                eprintln!("warning: stored system table differs from the recomputed one");
            }
            stdout.lock().write_all(reranked.systems_tsv().as_bytes())?;
        }
        Command::Correlate { auto, human, json } => {
            let auto = RankingTable::load(&auto)?.to_ranking()?;
            let human = RankingTable::load(&human)?.to_ranking()?;
            let corr = correlate(&human, &auto)?;
            let mut out = stdout.lock();
            if json {
                serde_json::to_writer_pretty(&mut out, &corr)?;
                writeln!(out)?;
            } else {
                writeln!(
                    out,
                    "pearson_on_ranks={:.3} kendall={:.3}",
                    corr.pearson_on_ranks, corr.kendall_tau
                )?;
                writeln!(out, "systems={}", corr.systems)?;
                if let Some(p) = corr.pearson_on_scores {
                    writeln!(out, "pearson_on_scores={p:.3}")?;
                }
            }
        }
        Command::Best {
            corpus,
            out,
            strict,
        } => {
            let records = load_corpus(&corpus)?;
            let pipeline = config.pipeline()?;
            let mut sink = output(out.as_deref())?;
            let mut skipped = 0;
            for record in &records {
                match select_best(record, &pipeline) {
                    Ok((system, result)) => write_jsonl(
                        &mut *sink,
                        &BestRecord {
                            doc_id: &record.doc_id,
                            system: &system,
                            score: result.final_score,
                            src: &record.src,
                            tgt: &record.candidates[&system],
                        },
                    )?,
                    Err(e @ docasd::Error::ScorerUnavailable(_)) => return Err(e.into()),
                    Err(e) => {
                        log::warn!("{e}");
                        skipped += 1;
                    }
                }
            }
            sink.flush()?;
            report_skips(skipped, strict)?;
        }
        Command::Prefpairs {
            corpus,
            a,
            b,
            margin,
            out,
            strict,
        } => {
            let records = load_corpus(&corpus)?;
            let pipeline = config.pipeline()?;
            let mut sink = output(out.as_deref())?;
            let (mut emitted, mut skipped) = (0, 0);
            for record in &records {
                let mut names = record.candidates.keys();
                let first = a.clone().or_else(|| names.next().cloned());
                let second = b.clone().or_else(|| names.next().cloned());
                let (Some(first), Some(second)) = (first, second) else {
                    log::warn!("{}: needs two candidates", record.doc_id);
                    skipped += 1;
                    continue;
                };
                match build_preference_pairs(record, &first, &second, &pipeline, margin) {
                    Ok(Some(triplet)) => {
                        write_jsonl(&mut *sink, &triplet)?;
                        emitted += 1;
                    }
                    Ok(None) => {}
                    Err(
                        e @ (docasd::Error::ScorerUnavailable(_) | docasd::Error::InvalidInput(_)),
                    ) => return Err(e.into()),
                    Err(e) => {
                        log::warn!("{e}");
                        skipped += 1;
                    }
                }
            }
            sink.flush()?;
            eprintln!(
                "emitted {emitted} triplet(s) from {} record(s)",
                records.len()
            );
            report_skips(skipped, strict)?;
        }
        Command::Reward {
            src,
            hyps,
            src_lang,
            tgt_lang,
        } => {
            let pipeline = config.pipeline()?;
            let hyps = hyps
                .iter()
                .map(|p| read_text(p))
                .collect::<Result<Vec<_>>>()?;
            let rewards = reward_batch(&read_text(&src)?, &hyps, (&src_lang, &tgt_lang), &pipeline);
            let mut out = stdout.lock();
            for reward in rewards {
                writeln!(out, "{}", reward.value)?;
                if let Some(why) = reward.diagnostic {
                    eprintln!("reward failed: {why}");
                }
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(docasd::Error::ScorerUnavailable(_)) = cause.downcast_ref::<docasd::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
