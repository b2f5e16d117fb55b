//! Trains one policy per reward variant and compares each with the greedy
//! and static baselines.
//!
//!     cargo run --release --example ablation -- [episodes] [variants]

use rldecode::harness::{ablate, bundled_toy_dataset, parse_variants, ComparisonTable, RunConfig};

fn main() -> rldecode::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let variants = parse_variants(&args.next().unwrap_or_else(|| "all".into()))?;
    let base = RunConfig { episodes, ..RunConfig::default() };
    let rows = ablate(&bundled_toy_dataset(), &base, &variants)?;
    print!("{}", ComparisonTable(&rows));
    Ok(())
}
