//! Serves an n-gram model over HTTP and decodes through the remote client.
//!
//!     cargo run --example remote_mock

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rldecode::features::FeatureConfig;
use rldecode::harness::{bundled_toy_dataset, lm_document, task_for, RewardSpec, TaskReward};
use rldecode::lm::NGramLm;
use rldecode::remote::{MockServer, RemoteConfig, RemoteLm};
use rldecode::rewards::RewardVariant;
use rldecode::rl::{run_episode, DecodeStrategy, EpisodeOptions, PpoConfig};
use rldecode::sampling::{SamplerSettings, SamplingMode};

fn main() -> rldecode::Result<()> {
    let records = bundled_toy_dataset();
    let docs: Vec<String> = records[20..].iter().map(lm_document).collect();
    let lm = Arc::new(NGramLm::from_texts(&docs, 3, 0.1)?);
    let server = MockServer::serve_ngram("127.0.0.1:0", Arc::clone(&lm))?;
    println!("mock server on {}", server.url());

    let remote = RemoteLm::new(RemoteConfig::new(server.url()))?;
    let reward = TaskReward::new(RewardSpec::Composite(RewardVariant::Proposed));
    let opts = EpisodeOptions::from_config(&PpoConfig::default(), FeatureConfig::default());
    let settings = SamplerSettings::new(0.7, 0.9, SamplingMode::Static)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for record in &records[..3] {
        let task = task_for(record);
        let traj = run_episode(&remote, DecodeStrategy::Fixed(settings), &reward, &task, &mut rng, &opts)?;
        println!("[{:.3}] {}", traj.composite_reward, traj.text);
    }
    Ok(())
}
