//! Scores one candidate summary under every reward variant.
//!
//!     cargo run --example reward_breakdown -- "candidate text"

use rldecode::rewards::{composite_reward, RewardConfig, RewardVariant};

fn main() {
    let source = "the old farmer walked to the village market at dawn. he sold apples and bought bread.";
    let reference = "the farmer sold apples at the market.";
    let candidate =
        std::env::args().nth(1).unwrap_or_else(|| "the farmer sold apples at the village market.".into());

    println!("{:<16} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6}", "variant", "rouge", "length", "cover", "repeat", "compl", "raw", "norm");
    for v in RewardVariant::ALL {
        let b = composite_reward(&candidate, reference, source, &RewardConfig::for_variant(v));
        println!(
            "{:<16} {:>6.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>6.3}",
            v.name(),
            b.rouge_f1,
            b.length_term,
            b.coverage_term,
            b.repetition_term,
            b.completeness_term,
            b.raw,
            b.normalized
        );
    }
}
