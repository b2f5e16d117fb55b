use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rldecode::lm::{NGramLm, TokenSource};
use rldecode::remote::*;
use rldecode::rl::{run_episode, DecodeStrategy, EpisodeOptions, EpisodeOutcome, Task};
use rldecode::sampling::SamplerSettings;
use rldecode::Error;

const OK_BODY: &str = include_str!("fixtures/step_ok.json");
const MALFORMED_BODY: &str = include_str!("fixtures/step_malformed.json");

fn fixed(status: u16, body: &'static str) -> Handler {
    Arc::new(move |_: &str| (status, body.to_string()))
}

fn quick(url: String) -> RemoteConfig {
    RemoteConfig { max_retries: 1, timeout_ms: 2_000, ..RemoteConfig::new(url) }
}

fn small_lm() -> NGramLm {
    NGramLm::from_texts(&["the cat sat on the mat.", "the dog sat on the rug.", "a cat ran."], 3, 0.1).unwrap()
}

#[test]
fn fixture_round_trip() {
    let server = MockServer::start("127.0.0.1:0", fixed(200, OK_BODY)).unwrap();
    let step = fetch_step(&quick(server.url()), "anything").unwrap();
    assert_eq!(step.top_entries, vec![("a".to_string(), -0.1), ("b".to_string(), -2.3)]);
    assert!(step.top_entries.len() < 50);
}

#[test]
fn malformed_fixture_is_a_protocol_error() {
    let server = MockServer::start("127.0.0.1:0", fixed(200, MALFORMED_BODY)).unwrap();
    assert!(matches!(fetch_step(&quick(server.url()), "x"), Err(Error::Protocol(_))));
    let missing = MockServer::start("127.0.0.1:0", fixed(200, r#"{"hidden": null}"#)).unwrap();
    assert!(matches!(fetch_step(&quick(missing.url()), "x"), Err(Error::Protocol(_))));
}

#[test]
fn client_errors_are_not_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let server = MockServer::start(
        "127.0.0.1:0",
        Arc::new(move |_: &str| {
            c.fetch_add(1, Ordering::SeqCst);
            (400, "{}".to_string())
        }),
    )
    .unwrap();
    let cfg = RemoteConfig { max_retries: 3, ..quick(server.url()) };
    assert!(matches!(fetch_step(&cfg, "x"), Err(Error::Protocol(_))));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn transient_failures_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let server = MockServer::start(
        "127.0.0.1:0",
        Arc::new(move |_: &str| {
            if c.fetch_add(1, Ordering::SeqCst) == 0 {
                (503, "busy".to_string())
            } else {
                (200, OK_BODY.to_string())
            }
        }),
    )
    .unwrap();
    let step = fetch_step(&quick(server.url()), "x").unwrap();
    assert_eq!(step.top_entries.len(), 2);
    assert_eq!(calls.load(Ordering::SeqCst), 2);

    let down = MockServer::start("127.0.0.1:0", fixed(500, "boom")).unwrap();
    assert!(matches!(fetch_step(&quick(down.url()), "x"), Err(Error::Connectivity(_))));
}

#[test]
fn unreachable_endpoint_is_a_connectivity_error() {
    let addr = {
        let server = MockServer::start("127.0.0.1:0", fixed(200, OK_BODY)).unwrap();
        server.addr()
    };
    let cfg = RemoteConfig { max_retries: 0, ..quick(format!("http://{addr}")) };
    assert!(matches!(fetch_step(&cfg, "x"), Err(Error::Connectivity(_))));
}

#[test]
fn remote_model_mirrors_the_served_ngram() {
    let lm = Arc::new(small_lm());
    let server = MockServer::serve_ngram("127.0.0.1:0", Arc::clone(&lm)).unwrap();
    let remote = RemoteLm::new(quick(server.url())).unwrap();

    // empty prompt is a valid request
    let first = remote.next_step(&[], &[]).unwrap();
    assert_eq!(first.prefix_len, 0);

    let prompt = remote.encode("the cat");
    let a = remote.next_step(&prompt, &[]).unwrap();
    let b = remote.next_step(&prompt, &[]).unwrap();
    assert_eq!(a, b);
    let local = lm.next_logits(&lm.encode("the cat"));
    let remote_best = remote.decode(&[a.logits.argmax()]);
    let local_best = lm.decode(&[local.logits.argmax()]);
    assert_eq!(remote_best, local_best);
    assert_eq!(a.hidden_summary, local.hidden_summary);
}

#[test]
fn episodes_run_against_the_remote_model() {
    let server = MockServer::serve_ngram("127.0.0.1:0", Arc::new(small_lm())).unwrap();
    let remote = RemoteLm::new(quick(server.url())).unwrap();
    let task = Task { id: "r".into(), prompt: "the dog".into(), source: "the dog sat".into(), reference: "dog sat".into() };
    let opts = EpisodeOptions { max_len: 12, act_every: 1, features: Default::default() };
    let reward = |o: &EpisodeOutcome<'_>| o.tokens as f64 / 12.0;
    let t = run_episode(
        &remote,
        DecodeStrategy::Fixed(SamplerSettings::greedy()),
        &reward,
        &task,
        &mut ChaCha8Rng::seed_from_u64(0),
        &opts,
    )
    .unwrap();
    assert!(!t.tokens.is_empty() && t.tokens.len() <= 12);
}
