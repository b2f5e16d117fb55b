//! Experiment orchestration: prompt splits, training runs with periodic
//! held-out evaluation, fixed-strategy baselines and reward ablations.

pub mod dataset;
pub mod metrics;
pub mod plot;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{bundled_toy_dataset, load_dataset, parse_dataset, toy_dataset, write_dataset, DatasetRecord};
pub use metrics::{
    compare, early_late_change, format_percent, percent_change, CheckpointRow, Comparison, ComparisonTable,
    EpisodeRow, RunMetrics,
};
pub use plot::{emit_plot, moving_average};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::lm::{NGramLm, TokenSource, HIDDEN_DIM};
use crate::policy::{Checkpoint, PolicyDims, PolicyParams};
use crate::rewards::{composite_reward, RewardConfig, RewardVariant};
use crate::rl::{
    run_episode, DecodeStrategy, EpisodeOptions, EpisodeOutcome, EpisodeReward, PpoConfig, PpoTrainer, Task,
    Trajectory,
};
use crate::sampling::{SamplerSettings, SamplingMode};

/// Word appended to each source to cue the summary.
pub const SUMMARY_CUE: &str = "tldr";

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "RLDECODE_SEED";

/// `RLDECODE_SEED` when set to an integer, else `fallback`.
pub fn resolve_seed(fallback: u64) -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(fallback)
}

// Independent rng streams derived from one run seed.
const STREAM_EPISODE: u64 = 1 << 32;
const STREAM_EVAL: u64 = 2 << 32;
const STREAM_PROMPTS: u64 = 3 << 32;
const STREAM_INIT: u64 = 4 << 32;
const STREAM_SPLIT: u64 = 5 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// What the terminal reward measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSpec {
    /// The composite summarization reward.
    Composite(RewardVariant),
    /// `1 - |mean episode temperature - target|`, independent of the text.
    TemperatureTarget(f64),
}

impl RewardSpec {
    pub fn variant(&self) -> Option<RewardVariant> {
        match self {
            RewardSpec::Composite(v) => Some(*v),
            RewardSpec::TemperatureTarget(_) => None,
        }
    }
}

/// Terminal reward built from a [`RewardSpec`].
#[derive(Debug, Clone, Copy)]
pub enum TaskReward {
    Composite(RewardConfig),
    TemperatureTarget(f64),
}

impl TaskReward {
    pub fn new(spec: RewardSpec) -> Self {
        match spec {
            RewardSpec::Composite(v) => TaskReward::Composite(RewardConfig::for_variant(v)),
            RewardSpec::TemperatureTarget(t) => TaskReward::TemperatureTarget(t),
        }
    }
}

impl EpisodeReward for TaskReward {
    fn score(&self, o: &EpisodeOutcome<'_>) -> f64 {
        match self {
            TaskReward::Composite(cfg) => composite_reward(o.text, &o.task.reference, &o.task.source, cfg).normalized,
            // greedy decoding has no temperature; treat it as the coldest setting
            TaskReward::TemperatureTarget(target) => {
                (1.0 - (o.mean_temperature.unwrap_or(0.0) - target).abs()).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Greedy,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_prompts: usize,
    pub eval_prompts: usize,
    pub episodes: usize,
    pub reward: RewardSpec,
    pub static_temperature: f64,
    /// Nucleus mass for the static baseline.
    pub static_top_p: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub moving_avg_window: usize,
    pub lm_order: usize,
    pub lm_smoothing_k: f64,
    pub feature_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_prompts: 100,
            eval_prompts: 20,
            episodes: 500,
            reward: RewardSpec::Composite(RewardVariant::Proposed),
            static_temperature: 0.3,
            static_top_p: 1.0,
            eval_every: 10,
            seed: 0,
            ppo: PpoConfig::default(),
            moving_avg_window: 10,
            lm_order: 3,
            lm_smoothing_k: 0.1,
            feature_k: 50,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.n_prompts == 0 || self.eval_prompts == 0 || self.eval_every == 0 {
            return Err(Error::Config("n_prompts, eval_prompts and eval_every must be positive".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig { k: self.feature_k, hidden_dim: HIDDEN_DIM, max_prefix_len: self.ppo.max_episode_len }
    }
}

/// Converts a record into a summarization task.
pub fn task_for(record: &DatasetRecord) -> Task {
    Task {
        id: record.id.clone(),
        prompt: format!("{} {SUMMARY_CUE}", record.source),
        source: record.source.clone(),
        reference: record.reference.clone(),
    }
}

/// Training text for the surrogate model: document, cue, summary.
pub fn lm_document(record: &DatasetRecord) -> String {
    format!("{} {SUMMARY_CUE} {}", record.source, record.reference)
}

/// Disjoint prompt samples for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSplit {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Samples `eval` held-out indices, then up to `train` training indices
/// from the remainder.
pub fn split_prompts(n_records: usize, train: usize, eval: usize, seed: u64) -> Result<PromptSplit> {
    if n_records < eval + 1 {
        return Err(Error::Config(format!("dataset of {n_records} records cannot hold {eval} eval prompts plus training")));
    }
    let mut idx: Vec<usize> = (0..n_records).collect();
    idx.shuffle(&mut stream(seed, STREAM_SPLIT));
    let eval_ids = idx[..eval].to_vec();
    let train_ids = idx[eval..(eval + train).min(n_records)].to_vec();
    Ok(PromptSplit { train: train_ids, eval: eval_ids })
}

/// Everything a run needs: the frozen model, the prompt split and the reward.
pub struct Experiment {
    pub cfg: RunConfig,
    pub lm: NGramLm,
    pub train_tasks: Vec<Task>,
    pub eval_tasks: Vec<Task>,
    reward: TaskReward,
}

impl Experiment {
    /// Splits prompts and fits the surrogate model on every record outside
    /// the evaluation split.
    pub fn new(records: &[DatasetRecord], cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let split = split_prompts(records.len(), cfg.n_prompts, cfg.eval_prompts, cfg.seed)?;
        let held_out: HashSet<usize> = split.eval.iter().copied().collect();
        let corpus: Vec<String> =
            (0..records.len()).filter(|i| !held_out.contains(i)).map(|i| lm_document(&records[i])).collect();
        let lm = NGramLm::from_texts(&corpus, cfg.lm_order, cfg.lm_smoothing_k)?;
        Ok(Experiment {
            train_tasks: split.train.iter().map(|&i| task_for(&records[i])).collect(),
            eval_tasks: split.eval.iter().map(|&i| task_for(&records[i])).collect(),
            reward: TaskReward::new(cfg.reward),
            lm,
            cfg,
        })
    }

    pub fn episode_options(&self) -> EpisodeOptions {
        EpisodeOptions::from_config(&self.cfg.ppo, self.cfg.features())
    }

    pub fn reward(&self) -> &TaskReward {
        &self.reward
    }

    /// Runs every evaluation prompt once with `strategy`. Each prompt gets
    /// its own rng stream, identical across calls.
    pub fn evaluate_with(&self, lm: &dyn TokenSource, strategy: DecodeStrategy<'_>) -> Result<Vec<Trajectory>> {
        let opts = self.episode_options();
        self.eval_tasks
            .iter()
            .enumerate()
            .map(|(j, task)| {
                let mut rng = stream(self.cfg.seed, STREAM_EVAL | j as u64);
                run_episode(lm, strategy, &self.reward, task, &mut rng, &opts)
            })
            .collect()
    }

    /// Noise-free evaluation of `params`: (average reward, mean temperature).
    pub fn evaluate(&self, params: &PolicyParams) -> Result<(f64, Option<f64>)> {
        let trajs = self.evaluate_with(&self.lm, DecodeStrategy::Mean(params))?;
        Ok(summarize(&trajs))
    }

    pub fn initial_params(&self) -> PolicyParams {
        let dims = PolicyDims::for_state_len(self.cfg.features().state_len());
        PolicyParams::init(dims, self.cfg.ppo.init_log_std, &mut stream(self.cfg.seed, STREAM_INIT))
    }

    /// PPO training with a held-out evaluation at episode 0, every
    /// `eval_every` episodes and after the final episode.
    pub fn train(&self) -> Result<(RunMetrics, Checkpoint)> {
        if self.train_tasks.is_empty() {
            return Err(Error::Config("no training prompts".into()));
        }
        let cfg = &self.cfg;
        let opts = self.episode_options();
        let mut trainer = PpoTrainer::new(self.initial_params(), cfg.ppo, cfg.seed)?;
        let mut metrics = self.metrics_shell("ppo");
        let mut prompt_rng = stream(cfg.seed, STREAM_PROMPTS);
        let mut queue: Vec<usize> = Vec::new();
        let mut pending: Vec<Trajectory> = Vec::new();

        metrics.checkpoints.push(self.checkpoint(0, &trainer.params)?);
        for episode in 1..=cfg.episodes {
            if queue.is_empty() {
                queue = (0..self.train_tasks.len()).collect();
                queue.shuffle(&mut prompt_rng);
                queue.reverse();
            }
            let task = &self.train_tasks[queue.pop().expect("refilled above")];
            let mut rng = stream(cfg.seed, STREAM_EPISODE | episode as u64);
            let traj = run_episode(&self.lm, DecodeStrategy::Explore(&trainer.params), &self.reward, task, &mut rng, &opts)?;
            metrics.episodes.push(row(episode, &task.id, &traj));
            pending.push(traj);

            let last = episode == cfg.episodes;
            if pending.len() == cfg.ppo.episodes_per_update || (last && !pending.is_empty()) {
                metrics.updates.push(trainer.update(&pending)?);
                pending.clear();
            }
            if episode % cfg.eval_every == 0 || last {
                metrics.checkpoints.push(self.checkpoint(episode, &trainer.params)?);
            }
        }
        let checkpoint = Checkpoint { params: trainer.params, features: cfg.features() };
        Ok((metrics, checkpoint))
    }

    /// Decodes every evaluation prompt once with a fixed strategy.
    pub fn baseline(&self, mode: BaselineMode) -> Result<RunMetrics> {
        let settings = match mode {
            BaselineMode::Greedy => SamplerSettings::greedy(),
            BaselineMode::Static => {
                SamplerSettings::new(self.cfg.static_temperature, self.cfg.static_top_p, SamplingMode::Static)?
            }
        };
        let label = match mode {
            BaselineMode::Greedy => "greedy",
            BaselineMode::Static => "static",
        };
        let trajs = self.evaluate_with(&self.lm, DecodeStrategy::Fixed(settings))?;
        let mut metrics = self.metrics_shell(label);
        for (i, (task, traj)) in self.eval_tasks.iter().zip(&trajs).enumerate() {
            metrics.episodes.push(row(i + 1, &task.id, traj));
        }
        let (avg, mean_t) = summarize(&trajs);
        metrics.checkpoints.push(CheckpointRow { episode: 0, eval_avg_reward: avg, eval_mean_t: mean_t });
        Ok(metrics)
    }

    fn checkpoint(&self, episode: usize, params: &PolicyParams) -> Result<CheckpointRow> {
        let (avg, mean_t) = self.evaluate(params)?;
        Ok(CheckpointRow { episode, eval_avg_reward: avg, eval_mean_t: mean_t })
    }

    fn metrics_shell(&self, label: &str) -> RunMetrics {
        RunMetrics {
            label: label.to_string(),
            variant: self.cfg.reward.variant(),
            train_prompt_ids: self.train_tasks.iter().map(|t| t.id.clone()).collect(),
            eval_prompt_ids: self.eval_tasks.iter().map(|t| t.id.clone()).collect(),
            ..Default::default()
        }
    }
}

fn row(episode: usize, prompt_id: &str, traj: &Trajectory) -> EpisodeRow {
    EpisodeRow {
        episode,
        prompt_id: prompt_id.to_string(),
        reward: traj.composite_reward,
        mean_t: traj.mean_temperature,
        mean_p: traj.mean_top_p,
        tokens: traj.tokens.len(),
        terminal: traj.terminal_reason.as_str().to_string(),
    }
}

fn summarize(trajs: &[Trajectory]) -> (f64, Option<f64>) {
    let n = trajs.len() as f64;
    let avg = trajs.iter().map(|t| t.composite_reward).sum::<f64>() / n;
    let temps: Vec<f64> = trajs.iter().filter_map(|t| t.mean_temperature).collect();
    let mean_t = if temps.is_empty() { None } else { Some(temps.iter().sum::<f64>() / temps.len() as f64) };
    (avg, mean_t)
}

/// Output of [`train_run`].
pub struct TrainOutcome {
    pub metrics: RunMetrics,
    pub checkpoint: Checkpoint,
}

/// Trains a policy and, when `out_dir` is given, writes `metrics.csv`,
/// `checkpoints.csv` and `policy.json` there.
pub fn train_run(records: &[DatasetRecord], cfg: RunConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let exp = Experiment::new(records, cfg)?;
    let (metrics, checkpoint) = exp.train()?;
    if let Some(dir) = out_dir {
        metrics.save(dir)?;
        checkpoint.save(&dir.join("policy.json"))?;
    }
    Ok(TrainOutcome { metrics, checkpoint })
}

pub fn run_baseline(records: &[DatasetRecord], cfg: RunConfig, mode: BaselineMode) -> Result<RunMetrics> {
    Experiment::new(records, cfg)?.baseline(mode)
}

/// Trains one policy per variant and compares each with both baselines
/// under that same variant.
pub fn ablate(records: &[DatasetRecord], base: &RunConfig, variants: &[RewardVariant]) -> Result<Vec<Comparison>> {
    variants
        .iter()
        .map(|&v| {
            let cfg = RunConfig { reward: RewardSpec::Composite(v), ..base.clone() };
            let exp = Experiment::new(records, cfg)?;
            let (policy, _) = exp.train()?;
            let greedy = exp.baseline(BaselineMode::Greedy)?;
            let static_ = exp.baseline(BaselineMode::Static)?;
            compare(&policy, &greedy, &static_)
        })
        .collect()
}

/// Parses `all` or a comma-separated list of variant names.
pub fn parse_variants(spec: &str) -> Result<Vec<RewardVariant>> {
    if spec.trim() == "all" {
        return Ok(RewardVariant::ALL.to_vec());
    }
    spec.split(',').map(|s| s.trim().parse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_seeded() {
        let s = split_prompts(150, 100, 20, 3).unwrap();
        assert_eq!(s.eval.len(), 20);
        assert_eq!(s.train.len(), 100);
        let eval: HashSet<_> = s.eval.iter().collect();
        assert!(s.train.iter().all(|i| !eval.contains(i)));
        assert_eq!(s, split_prompts(150, 100, 20, 3).unwrap());
        assert_ne!(s, split_prompts(150, 100, 20, 4).unwrap());
        assert!(split_prompts(20, 100, 20, 0).is_err());
    }

    #[test]
    fn variant_list_parsing() {
        assert_eq!(parse_variants("all").unwrap().len(), 6);
        assert_eq!(
            parse_variants("rouge_only, proposed").unwrap(),
            vec![RewardVariant::RougeOnly, RewardVariant::Proposed]
        );
        assert!(parse_variants("proposed,nope").is_err());
    }

    #[test]
    fn temperature_target_reward() {
        let r = TaskReward::new(RewardSpec::TemperatureTarget(0.4));
        let task = Task { id: "x".into(), prompt: String::new(), source: String::new(), reference: String::new() };
        let o = EpisodeOutcome { text: "", task: &task, mean_temperature: Some(0.7), mean_top_p: None, tokens: 3 };
        assert!((r.score(&o) - 0.7).abs() < 1e-12);
    }
}
