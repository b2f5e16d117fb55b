//! Controller state: hidden summary, top-k logits, prefix length, entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::StepOutput;
use crate::sampling::ProbVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Number of largest logits kept.
    pub k: usize,
    /// Length of the hidden summary channel; 0 when the source has none.
    pub hidden_dim: usize,
    /// Prefix lengths are clamped to this and scaled into [0, 1].
    pub max_prefix_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { k: 50, hidden_dim: crate::lm::HIDDEN_DIM, max_prefix_len: 128 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("feature k must be >= 1".into()));
        }
        if self.max_prefix_len == 0 {
            return Err(Error::Config("max_prefix_len must be >= 1".into()));
        }
        Ok(())
    }

    pub fn state_len(&self) -> usize {
        self.hidden_dim + self.k + 2
    }
}

/// `hidden ‖ top-k logits (descending) ‖ prefix fraction ‖ normalized entropy`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix_feature(&self) -> f64 {
        self.0[self.0.len() - 2]
    }

    pub fn entropy_feature(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// Shannon entropy divided by `ln V`, with `0 ln 0 = 0`.
pub fn normalized_entropy(probs: &ProbVector) -> Result<f64> {
    let v = probs.len();
    if v < 2 {
        return Err(Error::Config(format!("entropy normalization needs V >= 2, got {v}")));
    }
    let h: f64 = probs.as_slice().iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    Ok((h / (v as f64).ln()).clamp(0.0, 1.0))
}

pub fn build_state(step: &StepOutput, probs: &ProbVector, cfg: &FeatureConfig) -> Result<StateVector> {
    let mut values = Vec::with_capacity(cfg.state_len());
    match &step.hidden_summary {
        Some(h) if h.len() == cfg.hidden_dim => values.extend_from_slice(h),
        Some(h) => {
            return Err(Error::Input(format!(
                "hidden summary has length {}, expected {}",
                h.len(),
                cfg.hidden_dim
            )))
        }
        None => values.resize(cfg.hidden_dim, 0.0),
    }

    let mut sorted = step.logits.as_slice().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let floor = *sorted.last().expect("logits are nonempty");
    sorted.resize(cfg.k.max(sorted.len()), floor);
    values.extend_from_slice(&sorted[..cfg.k]);

    let prefix = step.prefix_len.min(cfg.max_prefix_len) as f64 / cfg.max_prefix_len as f64;
    values.push(prefix);
    values.push(normalized_entropy(probs)?);
    Ok(StateVector(values))
}
