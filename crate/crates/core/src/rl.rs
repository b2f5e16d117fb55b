//! PPO engine: episode rollout, GAE, the clipped surrogate and composite
//! loss, and the Adam update loop.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_state, FeatureConfig, StateVector};
use crate::lm::{TokenId, TokenSource};
use crate::policy::{
    gaussian_entropy, gaussian_log_prob, mean_action, sample_action, ActionParams, PolicyParams, ACTION_DIM,
};
use crate::sampling::{decode_step, softmax, SamplerSettings, SamplingMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs_per_update: usize,
    pub episodes_per_update: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    pub max_episode_len: usize,
    /// Query the policy every this many tokens; 1 means every token.
    pub act_every: usize,
    /// Initial value of both free log-std parameters.
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs_per_update: 4,
            episodes_per_update: 8,
            minibatch_size: 64,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 0.5,
            max_episode_len: 128,
            act_every: 1,
            init_log_std: -0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("clip_eps {} not in (0, 1)", self.clip_eps)));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("gamma and lambda must lie in [0, 1]".into()));
        }
        if self.epochs_per_update == 0
            || self.episodes_per_update == 0
            || self.minibatch_size == 0
            || self.max_episode_len == 0
            || self.act_every == 0
        {
            return Err(Error::Config("schedule sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: ActionParams,
    /// Value estimate at collection time.
    pub value: f64,
    /// Zero except on the final transition.
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Eos,
    LengthLimit,
}

impl TerminalReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalReason::Eos => "eos",
            TerminalReason::LengthLimit => "length_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// One per policy decision (per emitted token when `act_every` is 1).
    pub transitions: Vec<Transition>,
    pub terminal_reason: TerminalReason,
    pub composite_reward: f64,
    /// Generated ids, including a final EOS when one was sampled.
    pub tokens: Vec<TokenId>,
    pub text: String,
    /// Mean knobs over emitted tokens; `None` for greedy decoding.
    pub mean_temperature: Option<f64>,
    pub mean_top_p: Option<f64>,
}

/// A summarization episode: the text fed to the model and what the reward
/// is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub source: String,
    pub reference: String,
}

/// What a reward function sees at the end of an episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeOutcome<'a> {
    pub text: &'a str,
    pub task: &'a Task,
    pub mean_temperature: Option<f64>,
    pub mean_top_p: Option<f64>,
    pub tokens: usize,
}

pub trait EpisodeReward {
    /// Terminal reward in [0, 1].
    fn score(&self, outcome: &EpisodeOutcome<'_>) -> f64;
}

impl<F: Fn(&EpisodeOutcome<'_>) -> f64> EpisodeReward for F {
    fn score(&self, outcome: &EpisodeOutcome<'_>) -> f64 {
        self(outcome)
    }
}

/// How each token's sampling knobs are chosen.
#[derive(Debug, Clone, Copy)]
pub enum DecodeStrategy<'a> {
    /// Gaussian exploration; records transitions for training.
    Explore(&'a PolicyParams),
    /// Squashed policy mean, no action noise.
    Mean(&'a PolicyParams),
    /// Fixed settings (greedy or static baselines).
    Fixed(SamplerSettings),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub max_len: usize,
    pub act_every: usize,
    pub features: FeatureConfig,
}

impl EpisodeOptions {
    pub fn from_config(cfg: &PpoConfig, features: FeatureConfig) -> Self {
        EpisodeOptions { max_len: cfg.max_episode_len, act_every: cfg.act_every, features }
    }
}

/// Generates one completion for `task`, choosing knobs per `strategy`, and
/// scores it. Only the final transition carries the reward.
pub fn run_episode<S, R>(
    lm: &S,
    strategy: DecodeStrategy<'_>,
    reward: &dyn EpisodeReward,
    task: &Task,
    rng: &mut R,
    opts: &EpisodeOptions,
) -> Result<Trajectory>
where
    S: TokenSource + ?Sized,
    R: Rng + ?Sized,
{
    let prompt = lm.encode(&task.prompt);
    let eos = lm.eos();
    let mut generated: Vec<TokenId> = Vec::new();
    let mut transitions = Vec::new();
    let mut current: Option<SamplerSettings> = None;
    let (mut sum_t, mut sum_p) = (0.0, 0.0);
    let mut terminal_reason = TerminalReason::LengthLimit;

    while generated.len() < opts.max_len {
        let step = lm.next_step(&prompt, &generated)?;
        let settings = match strategy {
            DecodeStrategy::Fixed(s) => s,
            DecodeStrategy::Explore(params) | DecodeStrategy::Mean(params) => {
                let decide = generated.len() % opts.act_every == 0 || current.is_none();
                if decide {
                    let probs = softmax(&step.logits);
                    let state = build_state(&step, &probs, &opts.features)?;
                    let out = params.forward(&state)?;
                    let action = match strategy {
                        DecodeStrategy::Explore(_) => sample_action(out.mean, out.log_std, rng),
                        _ => mean_action(out.mean, out.log_std),
                    };
                    current = Some(SamplerSettings::new(action.temperature, action.top_p, SamplingMode::Policy)?);
                    if matches!(strategy, DecodeStrategy::Explore(_)) {
                        transitions.push(Transition { state, action, value: out.value, reward: 0.0 });
                    }
                }
                current.expect("set above")
            }
        };
        sum_t += settings.temperature();
        sum_p += settings.top_p();

        let token = decode_step(&step.logits, &settings, rng);
        generated.push(token);
        if token == eos {
            terminal_reason = TerminalReason::Eos;
            break;
        }
    }

    let n = generated.len() as f64;
    let greedy = matches!(strategy, DecodeStrategy::Fixed(s) if s.mode() == SamplingMode::Greedy);
    let (mean_temperature, mean_top_p) = if greedy || n == 0.0 { (None, None) } else { (Some(sum_t / n), Some(sum_p / n)) };
    let text = lm.decode(&generated);
    let outcome = EpisodeOutcome { text: &text, task, mean_temperature, mean_top_p, tokens: generated.len() };
    let composite_reward = reward.score(&outcome);
    if let Some(last) = transitions.last_mut() {
        last.reward = composite_reward;
    }
    Ok(Trajectory { transitions, terminal_reason, composite_reward, tokens: generated, text, mean_temperature, mean_top_p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation with a zero bootstrap after the last step.
pub fn compute_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<AdvantageEstimate> {
    if rewards.len() != values.len() {
        return Err(Error::Input(format!("{} rewards but {} values", rewards.len(), values.len())));
    }
    if rewards.is_empty() {
        return Err(Error::Input("GAE needs at least one step".into()));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(AdvantageEstimate { advantages, returns })
}

/// Standardizes in place to mean 0 and unit (population) std, with the std
/// floored at 1e-8.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// Flattened training samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub raw_actions: Vec<[f64; ACTION_DIM]>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            states: self.states.select(ndarray::Axis(0), idx),
            raw_actions: idx.iter().map(|&i| self.raw_actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// Clipped-surrogate objective for one sample and its derivative with
/// respect to the ratio's log.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// Total loss `-L_clip + c_v * E[(V - R)^2] - c_ent * H`, its statistics,
/// and its gradient with respect to every policy parameter.
pub fn ppo_losses(batch: &Batch, params: &PolicyParams, cfg: &PpoConfig) -> Result<(f64, UpdateStats, PolicyParams)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let cache = params.forward_batch(batch.states.view())?;
    let log_std = params.log_std_pair();
    let var = [(2.0 * log_std[0]).exp(), (2.0 * log_std[1]).exp()];

    let mut d_means = Array2::zeros((n, ACTION_DIM));
    let mut d_values = Array1::zeros(n);
    let mut d_log_std = [0.0; ACTION_DIM];
    let (mut clip_sum, mut ratio_sum, mut clipped_count, mut value_sum) = (0.0, 0.0, 0usize, 0.0);

    for i in 0..n {
        let mean = [cache.means[[i, 0]], cache.means[[i, 1]]];
        let raw = batch.raw_actions[i];
        let lp = gaussian_log_prob(mean, log_std, raw);
        let ratio = (lp - batch.old_log_probs[i]).exp();
        let (obj, d_obj) = clipped_objective(ratio, batch.advantages[i], cfg.clip_eps);
        clip_sum += obj;
        ratio_sum += ratio;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clipped_count += 1;
        }
        let d_lp = -d_obj * inv_n;
        for j in 0..ACTION_DIM {
            let diff = raw[j] - mean[j];
            d_means[[i, j]] = d_lp * diff / var[j];
            d_log_std[j] += d_lp * (diff * diff / var[j] - 1.0);
        }

        let err = cache.values[i] - batch.returns[i];
        value_sum += err * err;
        d_values[i] = cfg.value_coef * 2.0 * err * inv_n;
    }
    for d in &mut d_log_std {
        *d -= cfg.entropy_coef;
    }

    let l_clip = clip_sum * inv_n;
    let value_loss = value_sum * inv_n;
    let entropy = gaussian_entropy(log_std);
    let total = -l_clip + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
    let grads = params.backward(&cache, &d_means, &d_values, d_log_std);
    let stats = UpdateStats {
        mean_ratio: ratio_sum * inv_n,
        clip_fraction: clipped_count as f64 * inv_n,
        policy_loss: -l_clip,
        value_loss,
        entropy,
        grad_norm: global_norm(&grads),
    };
    Ok((total, stats, grads))
}

pub fn global_norm(grads: &PolicyParams) -> f64 {
    grads.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(num_params: usize, cfg: &PpoConfig) -> Self {
        Adam {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, params: &mut PolicyParams, grads: &PolicyParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut offset = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += p.len();
        }
    }
}

/// Statistics for one call to [`PpoTrainer::update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Ratio statistics over the whole batch under the collecting
    /// parameters, before any gradient step of the first epoch.
    pub first_epoch: UpdateStats,
    /// Averages over every minibatch step of the update.
    pub overall: UpdateStats,
    pub transitions: usize,
}

/// Owns the policy parameters, the optimizer state and the shuffling stream.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub params: PolicyParams,
    pub cfg: PpoConfig,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl PpoTrainer {
    pub fn new(params: PolicyParams, cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(params.num_params(), &cfg);
        Ok(PpoTrainer { params, cfg, adam, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.step_count()
    }

    /// Flattens trajectories, estimates advantages per trajectory and
    /// normalizes them across the batch.
    pub fn build_batch(&self, trajectories: &[Trajectory]) -> Result<Batch> {
        let n: usize = trajectories.iter().map(|t| t.transitions.len()).sum();
        if n == 0 {
            return Err(Error::Input("no transitions to train on".into()));
        }
        let width = trajectories.iter().find_map(|t| t.transitions.first()).map(|t| t.state.len()).unwrap_or(0);
        let mut states = Array2::zeros((n, width));
        let mut raw_actions = Vec::with_capacity(n);
        let mut old_log_probs = Vec::with_capacity(n);
        let mut advantages = Vec::with_capacity(n);
        let mut returns = Vec::with_capacity(n);
        let mut row = 0;
        for traj in trajectories.iter().filter(|t| !t.transitions.is_empty()) {
            let rewards: Vec<f64> = traj.transitions.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = traj.transitions.iter().map(|t| t.value).collect();
            let est = compute_gae(&rewards, &values, self.cfg.gamma, self.cfg.lambda)?;
            for (tr, (a, r)) in traj.transitions.iter().zip(est.advantages.into_iter().zip(est.returns)) {
                if tr.state.len() != width {
                    return Err(Error::Input("inconsistent state widths in batch".into()));
                }
                states.row_mut(row).assign(&ndarray::ArrayView1::from(tr.state.as_slice()));
                raw_actions.push(tr.action.raw);
                old_log_probs.push(tr.action.log_prob);
                advantages.push(a);
                returns.push(r);
                row += 1;
            }
        }
        normalize_advantages(&mut advantages);
        Ok(Batch { states, raw_actions, old_log_probs, advantages, returns })
    }

    pub fn update(&mut self, trajectories: &[Trajectory]) -> Result<UpdateReport> {
        if trajectories.is_empty() {
            return Err(Error::Input("ppo_update needs at least one trajectory".into()));
        }
        let batch = self.build_batch(trajectories)?;
        let (_, first_epoch, _) = ppo_losses(&batch, &self.params, &self.cfg)?;

        let mut overall = UpdateStats::default();
        let mut steps = 0usize;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..self.cfg.epochs_per_update {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let mb = batch.select(chunk);
                let (_, stats, mut grads) = ppo_losses(&mb, &self.params, &self.cfg)?;
                clip_grad_norm(&mut grads, self.cfg.grad_clip_norm);
                self.adam.apply(&mut self.params, &grads);
                self.params.clamp_log_std();
                if !self.params.is_finite() {
                    return Err(Error::Input("non-finite parameter after update".into()));
                }
                overall.mean_ratio += stats.mean_ratio;
                overall.clip_fraction += stats.clip_fraction;
                overall.policy_loss += stats.policy_loss;
                overall.value_loss += stats.value_loss;
                overall.entropy += stats.entropy;
                overall.grad_norm += stats.grad_norm;
                steps += 1;
            }
        }
        let k = steps as f64;
        overall.mean_ratio /= k;
        overall.clip_fraction /= k;
        overall.policy_loss /= k;
        overall.value_loss /= k;
        overall.entropy /= k;
        overall.grad_norm /= k;
        Ok(UpdateReport { first_epoch, overall, transitions: batch.len() })
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut PolicyParams, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            for g in t.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}
