use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rldecode::features::FeatureConfig;
use rldecode::lm::{LogitVector, StepOutput, TokenId, TokenSource};
use rldecode::policy::{sample_action, PolicyDims, PolicyParams};
use rldecode::rl::*;
use rldecode::Result;

const SMALL: PolicyDims = PolicyDims { state_len: 6, input_dim: 4, hidden: 5 };

/// Direct double sum over future TD errors.
fn gae_oracle(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n).map(|t| r[t] + gamma * v.get(t + 1).copied().unwrap_or(0.0) - v[t]).collect();
    (0..n).map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum()).collect()
}

#[test]
fn gae_worked_examples() {
    let one = compute_gae(&[1.0], &[0.5], 0.99, 0.95).unwrap();
    assert!((one.advantages[0] - 0.5).abs() < 1e-15 && (one.returns[0] - 1.0).abs() < 1e-15);
    let two = compute_gae(&[0.0, 1.0], &[0.2, 0.5], 0.99, 0.95).unwrap();
    assert!((two.advantages[0] - 0.76525).abs() < 1e-12);
    assert!((two.advantages[1] - 0.5).abs() < 1e-15);
    assert!(compute_gae(&[0.0, 1.0], &[0.2], 0.99, 0.95).is_err());
}

#[test]
fn gae_with_zero_lambda_is_td_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let est = compute_gae(&r, &v, 0.9, 0.0).unwrap();
    for t in 0..20 {
        let next = if t + 1 < 20 { v[t + 1] } else { 0.0 };
        assert_eq!(est.advantages[t], r[t] + 0.9 * next - v[t]);
    }
}

#[test]
fn gae_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(1..=64);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (g, l) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let est = compute_gae(&r, &v, g, l).unwrap();
        for (t, want) in gae_oracle(&r, &v, g, l).into_iter().enumerate() {
            assert!((est.advantages[t] - want).abs() < 1e-10);
            assert_eq!(est.returns[t], est.advantages[t] + v[t]);
        }
    }
}

#[test]
fn normalized_advantages_are_standardized() {
    let mut a = vec![1.0, 2.0, 3.0, 10.0];
    normalize_advantages(&mut a);
    let mean = a.iter().sum::<f64>() / 4.0;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12 && (var.sqrt() - 1.0).abs() < 1e-9);
    let mut flat = vec![0.3; 5];
    normalize_advantages(&mut flat);
    assert!(flat.iter().all(|x| *x == 0.0));
}

#[test]
fn clip_objective_cases() {
    assert_eq!(clipped_objective(1.5, 1.0, 0.2).0, 1.2);
    assert_eq!(clipped_objective(0.5, -1.0, 0.2).0, -0.8);
    assert_eq!(clipped_objective(1.1, 2.0, 0.2), (2.2, 2.2));
}

pub fn random_batch(rng: &mut ChaCha8Rng, params: &PolicyParams, n: usize, jitter: f64) -> Batch {
    let states = Array2::from_shape_simple_fn((n, SMALL.state_len), || rng.gen_range(-2.0..2.0));
    let mut raw_actions = Vec::new();
    let mut old = Vec::new();
    for i in 0..n {
        let out = params.forward(&rldecode::features::StateVector::from_vec(states.row(i).to_vec())).unwrap();
        let a = sample_action(out.mean, out.log_std, rng);
        raw_actions.push(a.raw);
        old.push(a.log_prob + rng.gen_range(-jitter..=jitter));
    }
    Batch {
        states,
        raw_actions,
        old_log_probs: old,
        advantages: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        returns: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Largest relative error between the analytic gradient of the total loss
/// and central differences with h = 1e-5.
pub fn max_rel_error(batch: &Batch, params: &PolicyParams, cfg: &PpoConfig) -> f64 {
    let (_, _, grads) = ppo_losses(batch, params, cfg).unwrap();
    let analytic = grads.flatten();
    let base = params.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] += h;
        p.set_flat(&x);
        let plus = ppo_losses(batch, &p, cfg).unwrap().0;
        x[i] -= 2.0 * h;
        p.set_flat(&x);
        let minus = ppo_losses(batch, &p, cfg).unwrap().0;
        let numeric = (plus - minus) / (2.0 * h);
        let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = PpoConfig::default();
    for _ in 0..20 {
        let params = PolicyParams::init(SMALL, rng.gen_range(-1.0..0.5), &mut rng);
        // small jitter keeps ratios away from the clip kinks
        let batch = random_batch(&mut rng, &params, 5, 0.05);
        let err = max_rel_error(&batch, &params, &cfg);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn first_pass_ratio_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = PolicyParams::init(SMALL, -0.3, &mut rng);
    let batch = random_batch(&mut rng, &params, 32, 0.0);
    let (total, stats, _) = ppo_losses(&batch, &params, &PpoConfig::default()).unwrap();
    assert!((stats.mean_ratio - 1.0).abs() < 1e-12);
    assert_eq!(stats.clip_fraction, 0.0);
    let mean_adv = batch.advantages.iter().sum::<f64>() / 32.0;
    assert!((stats.policy_loss + mean_adv).abs() < 1e-12);
    assert!(total.is_finite());
}

#[test]
fn zero_advantages_leave_the_policy_head_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = PolicyParams::init(SMALL, -0.3, &mut rng);
    let mut batch = random_batch(&mut rng, &params, 8, 0.0);
    batch.advantages = vec![0.0; 8];
    let (_, _, g) = ppo_losses(&batch, &params, &PpoConfig::default()).unwrap();
    assert!(g.mean_w.iter().chain(g.mean_b.iter()).all(|v| *v == 0.0));
    // only the entropy bonus pushes log_std
    assert!(g.log_std.iter().all(|v| (*v + 0.01).abs() < 1e-15));
}

#[test]
fn positive_advantage_raises_log_prob_until_clipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = PpoConfig { entropy_coef: 0.0, value_coef: 0.0, minibatch_size: 1, epochs_per_update: 1, ..PpoConfig::default() };
    let params = PolicyParams::init(SMALL, -0.5, &mut rng);
    let mut batch = random_batch(&mut rng, &params, 1, 0.0);
    batch.advantages = vec![1.0];
    let mut p = params.clone();
    let mut adam = Adam::new(p.num_params(), &cfg);
    let lp = |p: &PolicyParams| {
        let st = rldecode::features::StateVector::from_vec(batch.states.row(0).to_vec());
        p.log_prob_of(&st, batch.raw_actions[0]).unwrap()
    };
    let mut prev = lp(&p);
    let mut steps = 0;
    loop {
        let (_, stats, grads) = ppo_losses(&batch, &p, &cfg).unwrap();
        if stats.mean_ratio > 1.0 + cfg.clip_eps {
            break;
        }
        adam.apply(&mut p, &grads);
        let now = lp(&p);
        assert!(now > prev, "step {steps}: {now} <= {prev}");
        prev = now;
        steps += 1;
        assert!(steps < 10_000, "clip boundary never reached");
    }
    // past the boundary the surrogate is flat
    let (_, _, grads) = ppo_losses(&batch, &p, &cfg).unwrap();
    assert!(grads.mean_w.iter().chain(grads.log_std.iter()).all(|v| *v == 0.0));
}

#[test]
fn updates_never_produce_non_finite_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = PpoConfig { minibatch_size: 7, ..PpoConfig::default() };
    for _ in 0..30 {
        let mut p = PolicyParams::init(SMALL, rng.gen_range(-5.0..2.0), &mut rng);
        let mut adam = Adam::new(p.num_params(), &cfg);
        let mut batch = random_batch(&mut rng, &p, 16, 3.0);
        let scale = 10f64.powi(rng.gen_range(-3..6));
        for a in &mut batch.advantages {
            *a *= scale;
        }
        for r in &mut batch.returns {
            *r *= scale;
        }
        for _ in 0..5 {
            let (_, _, mut g) = ppo_losses(&batch, &p, &cfg).unwrap();
            clip_grad_norm(&mut g, cfg.grad_clip_norm);
            adam.apply(&mut p, &g);
            p.clamp_log_std();
            assert!(p.is_finite());
            assert!(p.log_std.iter().all(|v| (-5.0..=2.0).contains(v)));
        }
    }
}

#[test]
fn grad_clip_bounds_the_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = PolicyParams::init(SMALL, 1.0, &mut rng);
    let before = clip_grad_norm(&mut g, 0.5);
    assert!(before > 0.5);
    assert!((global_norm(&g) - 0.5).abs() < 1e-12);
}

/// Fixed next-token distribution regardless of context.
struct Stub {
    logits: Vec<f64>,
}

impl TokenSource for Stub {
    fn eos(&self) -> TokenId {
        0
    }
    fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|_| 1).collect()
    }
    fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().filter(|&&i| i != 0).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }
    fn next_step(&self, _prompt: &[TokenId], generated: &[TokenId]) -> Result<StepOutput> {
        Ok(StepOutput {
            logits: LogitVector::new(self.logits.clone())?,
            hidden_summary: Some(vec![0.1; rldecode::lm::HIDDEN_DIM]),
            prefix_len: generated.len(),
        })
    }
}

fn stub_setup() -> (PolicyParams, EpisodeOptions, Task) {
    let features = FeatureConfig::default();
    let dims = PolicyDims::for_state_len(features.state_len());
    let params = PolicyParams::init(dims, -5.0, &mut ChaCha8Rng::seed_from_u64(0));
    let task = Task { id: "t".into(), prompt: "a b".into(), source: "a b".into(), reference: "a".into() };
    (params, EpisodeOptions { max_len: 16, act_every: 1, features }, task)
}

fn length_reward(o: &EpisodeOutcome<'_>) -> f64 {
    o.tokens as f64 / 100.0
}

#[test]
fn episode_ends_on_dominant_eos() {
    let (params, opts, task) = stub_setup();
    let mut logits = vec![-30.0; 60];
    logits[0] = 0.0;
    let lm = Stub { logits };
    let t = run_episode(&lm, DecodeStrategy::Explore(&params), &length_reward, &task, &mut ChaCha8Rng::seed_from_u64(1), &opts)
        .unwrap();
    assert_eq!(t.transitions.len(), 1);
    assert_eq!(t.terminal_reason, TerminalReason::Eos);
    assert_eq!(t.transitions[0].reward, t.composite_reward);
}

#[test]
fn episode_stops_at_length_limit() {
    let (params, opts, task) = stub_setup();
    let mut logits = vec![0.0; 60];
    logits[0] = -1e3;
    let lm = Stub { logits };
    let t = run_episode(&lm, DecodeStrategy::Explore(&params), &length_reward, &task, &mut ChaCha8Rng::seed_from_u64(1), &opts)
        .unwrap();
    assert_eq!(t.tokens.len(), 16);
    assert_eq!(t.transitions.len(), 16);
    assert_eq!(t.terminal_reason, TerminalReason::LengthLimit);
    assert!((t.composite_reward - 0.16).abs() < 1e-15);
    assert!(t.transitions[..15].iter().all(|x| x.reward == 0.0));
    assert_eq!(t.transitions[15].reward, t.composite_reward);
}

#[test]
fn episodes_are_reproducible() {
    let (_, opts, task) = stub_setup();
    let params = PolicyParams::init(PolicyDims::for_state_len(opts.features.state_len()), 0.0, &mut ChaCha8Rng::seed_from_u64(3));
    let lm = Stub { logits: (0..60).map(|i| -(i as f64) * 0.05).collect() };
    let run = || run_episode(&lm, DecodeStrategy::Explore(&params), &length_reward, &task, &mut ChaCha8Rng::seed_from_u64(9), &opts).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.mean_temperature.is_some());
}

#[test]
fn act_every_holds_settings() {
    let (_, mut opts, task) = stub_setup();
    opts.act_every = 4;
    let params = PolicyParams::init(PolicyDims::for_state_len(opts.features.state_len()), 0.0, &mut ChaCha8Rng::seed_from_u64(3));
    let mut logits = vec![0.0; 60];
    logits[0] = -1e3;
    let lm = Stub { logits };
    let t = run_episode(&lm, DecodeStrategy::Explore(&params), &length_reward, &task, &mut ChaCha8Rng::seed_from_u64(2), &opts).unwrap();
    assert_eq!(t.transitions.len(), 4);
}

#[test]
fn trainer_update_reports_unit_first_ratio() {
    let (_, opts, task) = stub_setup();
    let params = PolicyParams::init(PolicyDims::for_state_len(opts.features.state_len()), 0.0, &mut ChaCha8Rng::seed_from_u64(3));
    let lm = Stub { logits: (0..60).map(|i| -(i as f64) * 0.1).collect() };
    let mut trainer = PpoTrainer::new(params, PpoConfig::default(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let trajs: Vec<_> = (0..8)
            .map(|_| run_episode(&lm, DecodeStrategy::Explore(&trainer.params), &length_reward, &task, &mut rng, &opts).unwrap())
            .collect();
        let report = trainer.update(&trajs).unwrap();
        assert!((report.first_epoch.mean_ratio - 1.0).abs() < 1e-6);
        assert_eq!(report.first_epoch.clip_fraction, 0.0);
        assert!(trainer.params.is_finite());
    }
    assert!(trainer.update(&[]).is_err());
}
