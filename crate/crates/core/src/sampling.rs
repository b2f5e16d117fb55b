//! Decoding kernel: temperature, nucleus truncation and token selection.
//!
//! Ties are always broken toward the lowest token id.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lm::{LogitVector, TokenId};

pub const TEMPERATURE_RANGE: (f64, f64) = (0.2, 1.2);
pub const TOP_P_RANGE: (f64, f64) = (0.8, 1.0);

/// Slack on the cumulative-mass comparison so that e.g. `0.5 + 0.3` reaches
/// a threshold of `0.8` despite rounding.
const MASS_SLACK: f64 = 1e-12;

/// A probability distribution over vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Input("empty probability vector".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Input("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ProbVector(probs))
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

    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&p| p > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Knobs chosen per step by the learned controller.
    Policy,
    /// Argmax; temperature and top-p are ignored.
    Greedy,
    /// Fixed knobs for the whole run.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSettings {
    temperature: f64,
    top_p: f64,
    mode: SamplingMode,
}

impl SamplerSettings {
    pub fn new(temperature: f64, top_p: f64, mode: SamplingMode) -> Result<Self> {
        let (tlo, thi) = TEMPERATURE_RANGE;
        let (plo, phi) = TOP_P_RANGE;
        if !(tlo..=thi).contains(&temperature) {
            return Err(Error::Parameter(format!("temperature {temperature} outside [{tlo}, {thi}]")));
        }
        if !(plo..=phi).contains(&top_p) {
            return Err(Error::Parameter(format!("top_p {top_p} outside [{plo}, {phi}]")));
        }
        Ok(SamplerSettings { temperature, top_p, mode })
    }

    pub fn greedy() -> Self {
        SamplerSettings { temperature: 1.0, top_p: 1.0, mode: SamplingMode::Greedy }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn top_p(&self) -> f64 {
        self.top_p
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }
}

/// `softmax(logits / t)` with max-subtraction.
pub fn apply_temperature(logits: &LogitVector, t: f64) -> Result<ProbVector> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {t}")));
    }
    let xs = logits.as_slice();
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = xs.iter().map(|&x| ((x - max) / t).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(ProbVector(probs))
}

pub fn softmax(logits: &LogitVector) -> ProbVector {
    apply_temperature(logits, 1.0).expect("unit temperature is valid")
}

/// Keeps the smallest highest-probability set whose mass reaches `p` and
/// renormalizes it. The top token always survives.
pub fn top_p_filter(probs: &ProbVector, p: f64) -> Result<ProbVector> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("top_p must lie in (0, 1], got {p}")));
    }
    if p >= 1.0 {
        return Ok(probs.clone());
    }
    let xs = probs.as_slice();
    let mut order: Vec<TokenId> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));

    let mut out = vec![0.0; xs.len()];
    let mut mass = 0.0;
    for &id in &order {
        out[id] = xs[id];
        mass += xs[id];
        if mass >= p - MASS_SLACK {
            break;
        }
    }
    for q in &mut out {
        *q /= mass;
    }
    Ok(ProbVector(out))
}

/// Inverse-CDF lookup for a uniform draw `u` in `[0, 1)`.
pub fn sample_with_uniform(probs: &ProbVector, u: f64) -> TokenId {
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.as_slice().iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        cum += p;
        if u < cum {
            return i;
        }
    }
    last_nonzero
}

/// Greedy mode takes the argmax; otherwise draws exactly one uniform from
/// `rng` and inverts the CDF.
pub fn sample_token<R: Rng + ?Sized>(probs: &ProbVector, settings: &SamplerSettings, rng: &mut R) -> TokenId {
    match settings.mode {
        SamplingMode::Greedy => probs.argmax(),
        SamplingMode::Policy | SamplingMode::Static => sample_with_uniform(probs, rng.gen::<f64>()),
    }
}

/// Full kernel for one step: temperature, nucleus, then selection.
pub fn decode_step<R: Rng + ?Sized>(logits: &LogitVector, settings: &SamplerSettings, rng: &mut R) -> TokenId {
    if settings.mode == SamplingMode::Greedy {
        return logits.argmax();
    }
    let probs = apply_temperature(logits, settings.temperature).expect("validated temperature");
    let kept = top_p_filter(&probs, settings.top_p).expect("validated top_p");
    sample_token(&kept, settings, rng)
}
