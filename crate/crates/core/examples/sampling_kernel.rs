//! Temperature and nucleus filtering on a fixed logit vector.
//!
//!     cargo run --example sampling_kernel

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rldecode::lm::LogitVector;
use rldecode::sampling::{apply_temperature, decode_step, top_p_filter, SamplerSettings, SamplingMode};

fn main() -> rldecode::Result<()> {
    let logits = LogitVector::new(vec![2.0, 1.5, 0.5, 0.0, -1.0, -3.0])?;
    for t in [0.2, 0.7, 1.2] {
        for p in [0.8, 1.0] {
            let probs = top_p_filter(&apply_temperature(&logits, t)?, p)?;
            let shown: Vec<String> = probs.as_slice().iter().map(|x| format!("{x:.3}")).collect();
            println!("T={t:.1} p={p:.1}  support {}  [{}]", probs.support_size(), shown.join(" "));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let settings = SamplerSettings::new(0.7, 0.9, SamplingMode::Policy)?;
    let mut counts = [0usize; 6];
    for _ in 0..10_000 {
        counts[decode_step(&logits, &settings, &mut rng)] += 1;
    }
    println!("10k draws at T=0.7 p=0.9: {counts:?}");
    Ok(())
}
