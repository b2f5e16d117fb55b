//! PPO against greedy and static (T = 0.3) decoding on the toy dataset,
//! all scored with the same reward.
//!
//!     cargo run --release --example baselines -- [episodes] [seeds] [first_seed]

use std::time::Instant;

use rldecode::harness::{compare, bundled_toy_dataset, BaselineMode, ComparisonTable, Experiment, RunConfig};

fn main() -> rldecode::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let first: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let records = bundled_toy_dataset();
    let mut rows = Vec::new();
    for seed in first..first + seeds {
        let start = Instant::now();
        let exp = Experiment::new(&records, RunConfig { seed, episodes, ..RunConfig::default() })?;
        let (ppo, _) = exp.train()?;
        let greedy = exp.baseline(BaselineMode::Greedy)?;
        let static_ = exp.baseline(BaselineMode::Static)?;
        println!("seed {seed} finished in {:.1?}", start.elapsed());
        rows.push(compare(&ppo, &greedy, &static_)?);
    }
    print!("{}", ComparisonTable(&rows));
    let mean = |f: fn(&rldecode::harness::Comparison) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    println!("mean ppo {:.4} greedy {:.4} static {:.4}", mean(|c| c.ppo), mean(|c| c.greedy), mean(|c| c.static_));
    Ok(())
}
