//! End-to-end check of the learning loop: the reward ignores the text and
//! only scores how close the episode's mean temperature is to 0.4.
//!
//!     cargo run --release --example rigged_control -- [episodes] [first_seed]

use std::time::Instant;

use rldecode::harness::{early_late_change, format_percent, bundled_toy_dataset, Experiment, RewardSpec, RunConfig};

fn main() -> rldecode::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let first: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let records = bundled_toy_dataset();
    for seed in first..first + 3 {
        let start = Instant::now();
        let cfg = RunConfig { seed, episodes, reward: RewardSpec::TemperatureTarget(0.4), ..RunConfig::default() };
        let exp = Experiment::new(&records, cfg)?;
        let (metrics, _) = exp.train()?;
        let first = &metrics.checkpoints[0];
        let last = metrics.checkpoints.last().expect("final checkpoint");
        println!(
            "seed {seed}: mean_T {:.3} -> {:.3}  reward {:.3} -> {:.3}  early->late {}  ({:.1?})",
            first.eval_mean_t.unwrap_or(f64::NAN),
            last.eval_mean_t.unwrap_or(f64::NAN),
            first.eval_avg_reward,
            last.eval_avg_reward,
            format_percent(early_late_change(&metrics)?),
            start.elapsed()
        );
    }
    Ok(())
}
