use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use margqa::config::{load_gen_config, load_train_config};
use margqa::error::{Error, Result};
use margqa::harness::metrics::MetricsReport;
use margqa::io::{load_corpus, save_corpus};
use margqa::training::train_to_dir;
use margqa::{evaluate, generate_corpus, run_ablation, Mode, Params};

#[derive(Parser)]
#[command(name = "margqa", version, about = "Marginal-likelihood multi-document QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and write per-epoch checkpoints.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a parameter file on a corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// CSV output; a JSON twin is written next to it.
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the four-mode ablation grid.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Held-out corpus; defaults to the training corpus.
        #[arg(long)]
        eval_corpus: Option<PathBuf>,
        /// CSV output; a JSON twin is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `csv` to `path` and `json` to the same path with a `.json` extension.
fn write_pair(path: &Path, csv: &str, json: &str) -> Result<()> {
    let (csv_path, json_path) = if path.extension().is_some_and(|e| e == "json") {
        (path.with_extension("csv"), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.with_extension("json"))
    };
    write(&csv_path, csv)?;
    write(&json_path, json)
}

fn metrics_csv(r: &MetricsReport) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in [
        ("doc_f1", r.doc_f1),
        ("rt_recall", r.rt_recall),
        ("qa_em", r.qa_em),
        ("qa_f1", r.qa_f1),
        ("alternative_hit_rate", r.alternative_hit_rate),
    ] {
        out.push_str(&format!("{k},{v:.6}\n"));
    }
    for (k, v) in &r.per_type_qa_f1 {
        out.push_str(&format!("qa_f1_{k},{v:.6}\n"));
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = load_gen_config(&config)?;
            let corpus = generate_corpus(&cfg)?;
            save_corpus(&corpus, &out)?;
            println!("wrote {} questions to {}", corpus.questions.len(), out.display());
        }
        Command::Train { corpus, config, out } => {
            let cfg = load_train_config(&config)?;
            let corpus = load_corpus(&corpus)?;
            let outcome = train_to_dir::<f64>(&cfg, &corpus, &out)?;
            println!("epoch,phase,g_d,g_c,g_a,g_m,g_an,total");
            for r in &outcome.history {
                let l = &r.loss;
                println!(
                    "{},{:?},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r.epoch, r.phase, l.g_d, l.g_c, l.g_a, l.g_m, l.g_an, l.total
                );
            }
        }
        Command::Eval { corpus, params, report } => {
            let corpus = load_corpus(&corpus)?;
            let (params, _) = Params::load(&params)?;
            let metrics = evaluate(&params, &corpus)?;
            let csv = metrics_csv(&metrics);
            write_pair(&report, &csv, &serde_json::to_string_pretty(&metrics)?)?;
            print!("{csv}");
        }
        Command::Ablate {
            corpus,
            config,
            seeds,
            eval_corpus,
            out,
        } => {
            let cfg = load_train_config(&config)?;
            let train_corpus = load_corpus(&corpus)?;
            let eval_corpus = match eval_corpus {
                Some(p) => load_corpus(&p)?,
                None => train_corpus.clone(),
            };
            let seeds: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
            let report = run_ablation(&Mode::ALL, &cfg, &seeds, &train_corpus, &eval_corpus)?;
            let csv = report.to_csv();
            if let Some(out) = out {
                write_pair(&out, &csv, &serde_json::to_string_pretty(&report)?)?;
            }
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
