//! Trains the decoding policy on the bundled toy dataset and writes metrics,
//! checkpoints, the policy and a reward plot.
//!
//!     cargo run --release --example train_ppo -- [episodes] [out_dir]

use std::path::PathBuf;

use rldecode::harness::{bundled_toy_dataset, emit_plot, early_late_change, format_percent, train_run, RunConfig};

fn main() -> rldecode::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/example".into()));

    let cfg = RunConfig { episodes, ..RunConfig::default() };
    let run = train_run(&bundled_toy_dataset(), cfg, Some(&out))?;
    for c in &run.metrics.checkpoints {
        println!("episode {:>4}  eval reward {:.4}", c.episode, c.eval_avg_reward);
    }
    println!("early->late {}%", format_percent(early_late_change(&run.metrics)?));
    let csv = emit_plot(&run.metrics.rewards(), 10, &out.join("reward.svg"))?;
    println!("wrote {} and {}", out.join("reward.svg").display(), csv.display());
    Ok(())
}
