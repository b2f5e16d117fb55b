//! Composite summarization reward and its ablation variants.
//!
//! Components: ROUGE-L F1, a length term around a source-derived ideal, a
//! capped coverage bonus over long source words, a repetition penalty and a
//! completeness penalty. The weighted raw score is mapped into [0, 1].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, SENTENCE_MARKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    Proposed,
    RougeOnly,
    CoreShaping,
    NoCoverage,
    SoftRepetition,
    SigmoidScaling,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 6] = [
        RewardVariant::RougeOnly,
        RewardVariant::CoreShaping,
        RewardVariant::NoCoverage,
        RewardVariant::SoftRepetition,
        RewardVariant::SigmoidScaling,
        RewardVariant::Proposed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RewardVariant::Proposed => "proposed",
            RewardVariant::RougeOnly => "rouge_only",
            RewardVariant::CoreShaping => "core_shaping",
            RewardVariant::NoCoverage => "no_coverage",
            RewardVariant::SoftRepetition => "soft_repetition",
            RewardVariant::SigmoidScaling => "sigmoid_scaling",
        }
    }

    fn uses_length(&self) -> bool {
        !matches!(self, RewardVariant::RougeOnly)
    }

    fn uses_coverage(&self) -> bool {
        matches!(self, RewardVariant::Proposed | RewardVariant::SoftRepetition | RewardVariant::SigmoidScaling)
    }

    fn uses_repetition(&self) -> bool {
        !matches!(self, RewardVariant::RougeOnly)
    }

    fn uses_completeness(&self) -> bool {
        !matches!(self, RewardVariant::RougeOnly | RewardVariant::CoreShaping)
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RewardVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown reward variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub w_rouge: f64,
    pub w_len: f64,
    pub w_cov: f64,
    pub cov_cap: f64,
    pub rep_threshold: f64,
    pub rep_penalty: f64,
    pub completeness_penalty: f64,
    /// Source words strictly longer than this count as important.
    pub min_token_len_for_coverage: usize,
    pub raw_min: f64,
    pub raw_max: f64,
    pub normalization: Normalization,
    pub sigmoid_k: f64,
    pub variant: RewardVariant,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig::for_variant(RewardVariant::Proposed)
    }
}

impl RewardConfig {
    /// Default weights for `variant`, with `raw_min`/`raw_max` set to the
    /// extrema of the terms that variant actually sums.
    pub fn for_variant(variant: RewardVariant) -> Self {
        let mut cfg = RewardConfig {
            w_rouge: 0.5,
            w_len: 0.2,
            w_cov: 0.1,
            cov_cap: 0.1,
            rep_threshold: 0.30,
            rep_penalty: -0.10,
            completeness_penalty: -0.05,
            min_token_len_for_coverage: 4,
            raw_min: 0.0,
            raw_max: 1.0,
            normalization: Normalization::Linear,
            sigmoid_k: 5.0,
            variant,
        };
        match variant {
            RewardVariant::SoftRepetition => cfg.rep_penalty = -0.05,
            RewardVariant::SigmoidScaling => cfg.normalization = Normalization::Sigmoid,
            _ => {}
        }
        cfg.recompute_extrema();
        cfg
    }

    /// Sets `raw_min`/`raw_max` from the active terms' ranges.
    pub fn recompute_extrema(&mut self) {
        let v = self.variant;
        let mut hi = self.w_rouge;
        let mut lo = 0.0;
        if v.uses_length() {
            hi += self.w_len;
        }
        if v.uses_coverage() {
            hi += self.cov_cap.min(self.w_cov);
        }
        if v.uses_repetition() {
            lo += self.rep_penalty.min(0.0);
        }
        if v.uses_completeness() {
            lo += self.completeness_penalty.min(0.0);
        }
        self.raw_min = lo;
        self.raw_max = hi;
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_rouge, self.w_len, self.w_cov, self.cov_cap, self.rep_penalty, self.completeness_penalty];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        if !(self.raw_min < self.raw_max) {
            return Err(Error::Config(format!("raw_min {} must be below raw_max {}", self.raw_min, self.raw_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub rouge_f1: f64,
    pub length_term: f64,
    pub coverage_term: f64,
    pub repetition_term: f64,
    pub completeness_term: f64,
    pub raw: f64,
    pub normalized: f64,
}

/// Token-level LCS length, O(n·m) time and O(m) space.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_f1<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Ideal summary length: 10% of the source, clamped to [10, 150] tokens.
pub fn ideal_length(source_len: usize) -> usize {
    ((0.10 * source_len as f64).round() as usize).clamp(10, 150)
}

pub fn length_term(cand_len: usize, source_len: usize) -> f64 {
    let ideal = ideal_length(source_len) as f64;
    (1.0 - (cand_len as f64 - ideal).abs() / ideal).max(0.0)
}

pub fn coverage_term<S: AsRef<str>>(candidate: &[S], source: &[S], cfg: &RewardConfig) -> f64 {
    let important: HashSet<&str> = source
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| t.chars().count() > cfg.min_token_len_for_coverage)
        .collect();
    if important.is_empty() {
        return 0.0;
    }
    let seen: HashSet<&str> = candidate.iter().map(AsRef::as_ref).filter(|t| important.contains(t)).collect();
    let fraction = seen.len() as f64 / important.len() as f64;
    (cfg.w_cov * fraction).min(cfg.cov_cap)
}

/// Share of tokens that repeat an earlier one: `1 - distinct / total`.
pub fn repeated_fraction<S: AsRef<str>>(candidate: &[S]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&str> = candidate.iter().map(AsRef::as_ref).collect();
    (candidate.len() - distinct.len()) as f64 / candidate.len() as f64
}

pub fn repetition_term<S: AsRef<str>>(candidate: &[S], cfg: &RewardConfig) -> f64 {
    if repeated_fraction(candidate) > cfg.rep_threshold {
        cfg.rep_penalty
    } else {
        0.0
    }
}

pub fn completeness_term(text: &str, cfg: &RewardConfig) -> f64 {
    match text.trim_end().chars().last() {
        Some(c) if SENTENCE_MARKS.contains(&c) => 0.0,
        _ => cfg.completeness_penalty,
    }
}

/// Maps a raw score into [0, 1].
pub fn normalize(raw: f64, cfg: &RewardConfig) -> f64 {
    let value = match cfg.normalization {
        Normalization::Linear => (raw - cfg.raw_min) / (cfg.raw_max - cfg.raw_min),
        Normalization::Sigmoid => {
            let mid = 0.5 * (cfg.raw_min + cfg.raw_max);
            1.0 / (1.0 + (-cfg.sigmoid_k * (raw - mid)).exp())
        }
    };
    if value.is_nan() {
        return 0.0;
    }
    value.clamp(0.0, 1.0)
}

pub fn composite_reward(candidate_text: &str, reference_text: &str, source_text: &str, cfg: &RewardConfig) -> RewardBreakdown {
    let cand = tokenize(candidate_text);
    let reference = tokenize(reference_text);
    let source = tokenize(source_text);

    let rouge_f1 = rouge_l_f1(&cand, &reference);
    let length = length_term(cand.len(), source.len().max(1));
    let coverage = coverage_term(&cand, &source, cfg);
    let repetition = repetition_term(&cand, cfg);
    let completeness = completeness_term(candidate_text, cfg);

    let v = cfg.variant;
    let mut raw = cfg.w_rouge * rouge_f1;
    if v.uses_length() {
        raw += cfg.w_len * length;
    }
    if v.uses_coverage() {
        raw += coverage;
    }
    if v.uses_repetition() {
        raw += repetition;
    }
    if v.uses_completeness() {
        raw += completeness;
    }
    RewardBreakdown {
        rouge_f1,
        length_term: length,
        coverage_term: coverage,
        repetition_term: repetition,
        completeness_term: completeness,
        raw,
        normalized: normalize(raw, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn rouge_identical_disjoint_and_worked_example() {
        assert_eq!(rouge_l_f1(&toks("a b c"), &toks("a b c")), 1.0);
        assert_eq!(rouge_l_f1(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(rouge_l_f1::<String>(&[], &toks("c d")), 0.0);
        // LCS("the cat sat", "the dog sat down") = 2; P = 2/3, R = 1/2
        let f = rouge_l_f1(&toks("the cat sat"), &toks("the dog sat down"));
        assert!((f - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn length_term_cases() {
        assert_eq!(ideal_length(400), 40);
        assert_eq!(ideal_length(30), 10);
        assert_eq!(ideal_length(5000), 150);
        assert_eq!(length_term(40, 400), 1.0);
        assert_eq!(length_term(0, 400), 0.0);
        assert_eq!(length_term(30, 400), 0.75);
        assert_eq!(length_term(100, 400), 0.0);
    }

    #[test]
    fn coverage_cases() {
        let cfg = RewardConfig::default();
        let source = toks("reinforcement learning improves decoding quality a lot");
        assert!((coverage_term(&source, &source, &cfg) - 0.1).abs() < 1e-15);
        assert_eq!(coverage_term::<String>(&[], &source, &cfg), 0.0);
        assert_eq!(coverage_term(&toks("x"), &toks("tiny bits only"), &cfg), 0.0);
        let cand = toks("decoding quality is great");
        assert!((coverage_term(&cand, &source, &cfg) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn repetition_cases() {
        let cfg = RewardConfig::default();
        assert_eq!(repetition_term(&toks("a b c d"), &cfg), 0.0);
        assert_eq!(repetition_term(&toks("a a a a"), &cfg), -0.10);
        // 10 tokens, 7 distinct: fraction exactly at the threshold
        let ten = toks("a b c d e f g a b c");
        assert!((repeated_fraction(&ten) - 0.3).abs() < 1e-12);
        assert_eq!(repetition_term(&ten, &cfg), 0.0);
        let soft = RewardConfig::for_variant(RewardVariant::SoftRepetition);
        assert_eq!(repetition_term(&toks("a a a a"), &soft), -0.05);
    }

    #[test]
    fn completeness_cases() {
        let cfg = RewardConfig::default();
        assert_eq!(completeness_term("A summary.", &cfg), 0.0);
        assert_eq!(completeness_term("A summary", &cfg), -0.05);
        assert_eq!(completeness_term("Done!  ", &cfg), 0.0);
        assert_eq!(completeness_term("", &cfg), -0.05);
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let lin = RewardConfig::default();
        assert!((lin.raw_min + 0.15).abs() < 1e-12 && (lin.raw_max - 0.8).abs() < 1e-12);
        assert_eq!(normalize(lin.raw_min, &lin), 0.0);
        assert_eq!(normalize(lin.raw_max, &lin), 1.0);
        let mid = 0.5 * (lin.raw_min + lin.raw_max);
        assert!((normalize(mid, &lin) - 0.5).abs() < 1e-12);
        let sig = RewardConfig::for_variant(RewardVariant::SigmoidScaling);
        assert!((normalize(mid, &sig) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn variant_extrema() {
        let r = |v| {
            let c = RewardConfig::for_variant(v);
            (c.raw_min, c.raw_max)
        };
        assert_eq!(r(RewardVariant::RougeOnly), (0.0, 0.5));
        let (lo, hi) = r(RewardVariant::CoreShaping);
        assert!((lo + 0.10).abs() < 1e-15 && (hi - 0.7).abs() < 1e-15);
        let (lo, hi) = r(RewardVariant::NoCoverage);
        assert!((lo + 0.15).abs() < 1e-15 && (hi - 0.7).abs() < 1e-15);
        let (lo, hi) = r(RewardVariant::SoftRepetition);
        assert!((lo + 0.10).abs() < 1e-15 && (hi - 0.8).abs() < 1e-15);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in RewardVariant::ALL {
            assert_eq!(v.name().parse::<RewardVariant>().unwrap(), v);
        }
        assert!("bogus".parse::<RewardVariant>().is_err());
    }

    #[test]
    fn all_maxima_normalize_to_one() {
        // 9 long words + "." = 10 tokens = ideal length for a 10-token source
        let cfg = RewardConfig::default();
        let exact_text = "alpha bravo charlie delta echoes foxtrot golfer hotel india.";
        let b = composite_reward(exact_text, exact_text, exact_text, &cfg);
        assert_eq!((b.rouge_f1, b.length_term, b.coverage_term), (1.0, 1.0, 0.1));
        assert_eq!((b.repetition_term, b.completeness_term), (0.0, 0.0));
        assert!((b.raw - 0.8).abs() < 1e-15);
        assert!((b.normalized - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate() {
        let cfg = RewardConfig::default();
        let b = composite_reward("", "the reference text.", "the source document is here.", &cfg);
        assert_eq!(
            (b.rouge_f1, b.length_term, b.coverage_term, b.repetition_term, b.completeness_term),
            (0.0, 0.0, 0.0, 0.0, -0.05)
        );
        assert!((b.raw + 0.05).abs() < 1e-15);
    }
}
