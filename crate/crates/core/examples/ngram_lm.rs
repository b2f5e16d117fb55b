//! Builds a small trigram model and prints the most likely continuations.
//!
//!     cargo run --example ngram_lm -- "the cat"

use rldecode::lm::{NGramLm, TokenSource};
use rldecode::sampling::softmax;

fn main() -> rldecode::Result<()> {
    let prompt = std::env::args().nth(1).unwrap_or_else(|| "the cat".into());
    let docs = [
        "the cat sat on the mat.",
        "the cat chased the dog.",
        "the dog sat on the rug.",
        "a bird sang in the old tree.",
    ];
    let lm = NGramLm::from_texts(&docs, 3, 0.1)?;
    println!("vocab size {}", lm.vocab_size());

    let ids = lm.encode(&prompt);
    let step = lm.next_step(&ids, &[])?;
    let probs = softmax(&step.logits);
    let mut ranked: Vec<(usize, f64)> = probs.as_slice().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (id, p) in ranked.iter().take(5) {
        println!("{:>8}  {p:.4}", lm.vocab().token_of(*id).unwrap_or("?"));
    }
    Ok(())
}
