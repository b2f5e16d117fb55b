use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rldecode::harness::{
    self, ablate, emit_plot, format_percent, load_dataset, parse_variants, resolve_seed, run_baseline, bundled_toy_dataset,
    train_run, BaselineMode, ComparisonTable, DatasetRecord, Experiment, RewardSpec, RunConfig, RunMetrics,
};
use rldecode::lm::NGramLm;
use rldecode::policy::Checkpoint;
use rldecode::remote::MockServer;
use rldecode::rewards::RewardVariant;
use rldecode::Result;

/// Learned temperature / nucleus control for a frozen language model.
#[derive(Parser)]
#[command(name = "rldecode", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Data {
    /// JSON-lines dataset (id, source, reference). Defaults to the bundled toy set.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Run seed; RLDECODE_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a decoding policy with PPO.
    Train {
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "proposed")]
        reward: RewardVariant,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved policy on the held-out prompts.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "proposed")]
        reward: RewardVariant,
    },
    /// Score a fixed decoding strategy on the held-out prompts.
    Baseline {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 0.3)]
        temperature: f64,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "proposed")]
        reward: RewardVariant,
        /// Directory for metrics.csv / checkpoints.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and compare one policy per reward variant.
    Ablate {
        #[arg(long, default_value = "all")]
        variants: String,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot per-episode rewards with a trailing moving average.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the n-gram model over the remote step protocol.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8089")]
        addr: String,
        #[command(flatten)]
        data: Data,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Static,
}

fn records(data: &Data) -> Result<Vec<DatasetRecord>> {
    match &data.dataset {
        Some(p) => load_dataset(p),
        None => Ok(bundled_toy_dataset()),
    }
}

fn config(data: &Data, reward: RewardVariant) -> RunConfig {
    RunConfig { seed: resolve_seed(data.seed), reward: RewardSpec::Composite(reward), ..RunConfig::default() }
}

fn print_summary(m: &RunMetrics) {
    let last = m.checkpoints.last();
    println!(
        "{}: eval_avg_reward={:.4} mean_T={} early_late={}",
        m.label,
        m.final_reward().unwrap_or(f64::NAN),
        last.and_then(|c| c.eval_mean_t).map_or("n/a".to_string(), |t| format!("{t:.4}")),
        harness::early_late_change(m).map_or("n/a".to_string(), format_percent),
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { data, reward, episodes, out } => {
            let cfg = RunConfig { episodes, ..config(&data, reward) };
            let recs = records(&data)?;
            std::fs::create_dir_all(&out)?;
            let outcome = train_run(&recs, cfg, Some(&out))?;
            print_summary(&outcome.metrics);
            println!("wrote {}", out.display());
        }
        Cmd::Eval { checkpoint, data, reward } => {
            let cfg = config(&data, reward);
            let ckpt = Checkpoint::load(&checkpoint)?;
            let exp = Experiment::new(&records(&data)?, cfg)?;
            let (avg, mean_t) = exp.evaluate(&ckpt.params)?;
            println!(
                "eval_avg_reward={avg:.4} mean_T={} prompts={}",
                mean_t.map_or("n/a".to_string(), |t| format!("{t:.4}")),
                exp.eval_tasks.len()
            );
        }
        Cmd::Baseline { mode, temperature, data, reward, out } => {
            let cfg = RunConfig { static_temperature: temperature, ..config(&data, reward) };
            let mode = match mode {
                Mode::Greedy => BaselineMode::Greedy,
                Mode::Static => BaselineMode::Static,
            };
            let m = run_baseline(&records(&data)?, cfg, mode)?;
            print_summary(&m);
            if let Some(dir) = out {
                m.save(&dir)?;
            }
        }
        Cmd::Ablate { variants, data, episodes, out } => {
            let variants = parse_variants(&variants)?;
            let cfg = RunConfig { episodes, ..config(&data, RewardVariant::Proposed) };
            let rows = ablate(&records(&data)?, &cfg, &variants)?;
            print!("{}", ComparisonTable(&rows));
            if let Some(p) = out {
                harness::metrics::write_comparisons_csv(&p, &rows)?;
            }
        }
        Cmd::Plot { metrics, window, out } => {
            let rows = RunMetrics::read_episodes_csv(&metrics)?;
            let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
            let csv = emit_plot(&rewards, window, &out)?;
            println!("wrote {} and {}", out.display(), csv.display());
        }
        Cmd::ServeMock { addr, data } => {
            let recs = records(&data)?;
            let texts: Vec<String> = recs.iter().map(harness::lm_document).collect();
            let lm = NGramLm::from_texts(&texts, 3, 0.1)?;
            let server = MockServer::serve_ngram(&addr, Arc::new(lm))?;
            println!("serving on {}", server.url());
            server.join();
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

