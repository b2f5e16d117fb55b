//! Token-probability sources: the [`TokenSource`] contract and the built-in
//! add-k smoothed word n-gram model used as the frozen language model.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::{detokenize, tokenize};

pub type TokenId = usize;

pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Length of the stand-in hidden summary produced by [`NGramLm`].
pub const HIDDEN_DIM: usize = 32;

const PROJECTION_SEED: u64 = 0x5eed_0f_d1ce;

/// Ordered set of distinct token strings with contiguous ids.
///
/// Ids 0 and 1 are always the reserved end-of-sequence and unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab { tokens: Vec::new(), index: HashMap::new() };
        v.intern(EOS_TOKEN);
        v.intern(UNK_TOKEN);
        v
    }

    pub fn eos(&self) -> TokenId {
        0
    }

    pub fn unk(&self) -> TokenId {
        1
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Returns the id of `token`, adding it if absent.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or UNK when out of vocabulary.
    pub fn lookup(&self, token: &str) -> TokenId {
        self.get(token).unwrap_or(self.unk())
    }

    pub fn token_of(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Unnormalized natural-log scores, one per vocabulary id. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("logit vector must be nonempty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite logit at id {i}")));
        }
        Ok(LogitVector(values))
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

    /// Lowest id among the maximal entries.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Raw model output for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: LogitVector,
    pub hidden_summary: Option<Vec<f64>>,
    /// Tokens generated so far in this episode (prompt excluded).
    pub prefix_len: usize,
}

/// Anything that can play the frozen language model during decoding.
pub trait TokenSource {
    fn eos(&self) -> TokenId;

    /// Maps text to ids; out-of-vocabulary words become UNK or, for sources
    /// with an open vocabulary, fresh ids.
    fn encode(&self, text: &str) -> Vec<TokenId>;

    fn decode(&self, ids: &[TokenId]) -> String;

    /// Next-token output given the prompt and the tokens generated after it.
    fn next_step(&self, prompt: &[TokenId], generated: &[TokenId]) -> Result<StepOutput>;
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: Vec<(TokenId, u64)>,
}

/// Word-level add-k smoothed n-gram model. Immutable once built.
#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    smoothing_k: f64,
    vocab: Vocab,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
    /// Row-major `V x HIDDEN_DIM` fixed random projection.
    projection: Vec<f64>,
}

/// Builds an n-gram model from tokenized sequences. Each sequence is
/// terminated with EOS before counting; contexts near a sequence start are
/// the shorter available prefixes.
pub fn build_ngram_lm(corpus: &[Vec<String>], order: usize, smoothing_k: f64) -> Result<NGramLm> {
    if corpus.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    if order == 0 {
        return Err(Error::Config("n-gram order must be >= 1".into()));
    }
    if !(smoothing_k > 0.0 && smoothing_k.is_finite()) {
        return Err(Error::Config(format!("smoothing k must be positive, got {smoothing_k}")));
    }

    let mut vocab = Vocab::new();
    let sequences: Vec<Vec<TokenId>> = corpus
        .iter()
        .map(|seq| {
            let mut ids: Vec<TokenId> = seq.iter().map(|t| vocab.intern(t)).collect();
            ids.push(vocab.eos());
            ids
        })
        .collect();

    let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
    for ids in &sequences {
        for i in 0..ids.len() {
            let start = i.saturating_sub(order - 1);
            *raw.entry(ids[start..i].to_vec()).or_default().entry(ids[i]).or_default() += 1;
        }
    }
    let counts = raw
        .into_iter()
        .map(|(ctx, next)| {
            let mut next: Vec<(TokenId, u64)> = next.into_iter().collect();
            next.sort_unstable();
            let total = next.iter().map(|&(_, c)| c).sum();
            (ctx, ContextCounts { total, next })
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let projection = (0..vocab.len() * HIDDEN_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();

    Ok(NGramLm { order, smoothing_k, vocab, counts, projection })
}

impl NGramLm {
    /// Tokenizes each text (one document per entry) and builds the model.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], order: usize, smoothing_k: f64) -> Result<Self> {
        let corpus: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        build_ngram_lm(&corpus, order, smoothing_k)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn context<'a>(&self, prefix: &'a [TokenId]) -> &'a [TokenId] {
        &prefix[prefix.len().saturating_sub(self.order - 1)..]
    }

    /// Smoothed conditional distribution of the next token given the last
    /// `order - 1` tokens of `prefix`.
    pub fn conditional(&self, prefix: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.len();
        let k = self.smoothing_k;
        match self.counts.get(self.context(prefix)) {
            None => vec![1.0 / v as f64; v],
            Some(cc) => {
                let denom = cc.total as f64 + k * v as f64;
                let mut probs = vec![k / denom; v];
                for &(id, c) in &cc.next {
                    probs[id] = (c as f64 + k) / denom;
                }
                probs
            }
        }
    }

    fn hidden_from(&self, probs: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; HIDDEN_DIM];
        for (p, row) in probs.iter().zip(self.projection.chunks_exact(HIDDEN_DIM)) {
            for (hj, rj) in h.iter_mut().zip(row) {
                *hj += p * rj;
            }
        }
        h
    }

    /// Log-probabilities of the next token, treating the whole `prefix` as
    /// generated output. Pure in `(self, prefix)`.
    pub fn next_logits(&self, prefix: &[TokenId]) -> StepOutput {
        let probs = self.conditional(prefix);
        let hidden = self.hidden_from(&probs);
        let logits = probs.iter().map(|p| p.ln()).collect();
        StepOutput {
            logits: LogitVector(logits),
            hidden_summary: Some(hidden),
            prefix_len: prefix.len(),
        }
    }
}

impl TokenSource for NGramLm {
    fn eos(&self) -> TokenId {
        self.vocab.eos()
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        tokenize(text).iter().map(|t| self.vocab.lookup(t)).collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        let toks: Vec<&str> = ids
            .iter()
            .filter(|&&id| id != self.vocab.eos())
            .map(|&id| self.vocab.token_of(id).unwrap_or(UNK_TOKEN))
            .collect();
        detokenize(&toks)
    }

    fn next_step(&self, prompt: &[TokenId], generated: &[TokenId]) -> Result<StepOutput> {
        let need = self.order - 1;
        let mut ctx: Vec<TokenId> = Vec::with_capacity(need);
        if generated.len() < need {
            let from_prompt = need - generated.len();
            ctx.extend_from_slice(&prompt[prompt.len().saturating_sub(from_prompt)..]);
        }
        ctx.extend_from_slice(&generated[generated.len().saturating_sub(need)..]);
        let mut out = self.next_logits(&ctx);
        out.prefix_len = generated.len();
        Ok(out)
    }
}
