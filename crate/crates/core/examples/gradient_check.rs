//! Compares the analytic PPO loss gradient with central differences on a
//! tiny network.
//!
//!     cargo run --release --example gradient_check

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rldecode::features::StateVector;
use rldecode::policy::{sample_action, PolicyDims, PolicyParams};
use rldecode::rl::{ppo_losses, Batch, PpoConfig};

fn main() -> rldecode::Result<()> {
    let dims = PolicyDims { state_len: 8, input_dim: 6, hidden: 7 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = PolicyParams::init(dims, -0.5, &mut rng);
    let cfg = PpoConfig::default();

    let n = 5;
    let states = Array2::from_shape_simple_fn((n, dims.state_len), || rng.gen_range(-1.0..1.0));
    let mut raw_actions = Vec::new();
    let mut old_log_probs = Vec::new();
    for i in 0..n {
        let out = params.forward(&StateVector::from_vec(states.row(i).to_vec()))?;
        let a = sample_action(out.mean, out.log_std, &mut rng);
        raw_actions.push(a.raw);
        old_log_probs.push(a.log_prob - 0.02);
    }
    let batch = Batch {
        states,
        raw_actions,
        old_log_probs,
        advantages: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        returns: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    };

    let (loss, _, grad) = ppo_losses(&batch, &params, &cfg)?;
    let analytic = grad.flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] += h;
        probe.set_flat(&x);
        let plus = ppo_losses(&batch, &probe, &cfg)?.0;
        x[i] -= 2.0 * h;
        probe.set_flat(&x);
        let minus = ppo_losses(&batch, &probe, &cfg)?.0;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6));
    }
    println!("loss {loss:.6}, {} parameters, max relative error {worst:.2e}", base.len());
    Ok(())
}
