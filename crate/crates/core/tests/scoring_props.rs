use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;

use scalarexp::scoring::mock::{CountingScorer, MockCausalLm, MockMaskedLm, WordHashScorer};
use scalarexp::scoring::{self, CachedScorer, CausalLmScorer, MaskedLmScorer, ScoreCache};
use scalarexp::{ScalarConstruction, ScoredAlternative, ScoringMode};

fn masked_construction() -> ScalarConstruction {
    ScalarConstruction::new(
        "I like some, but not all, music.".into(),
        21..24,
        ScoringMode::MaskedSlot,
    )
    .unwrap()
}

fn continuation_construction() -> ScalarConstruction {
    let text = "The elephant is big, but not enormous";
    ScalarConstruction::new(text.into(), 29..37, ScoringMode::Continuation).unwrap()
}

/// Log-softmax written out directly.
fn naive_log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    logits.iter().map(|l| l - m - z.ln()).collect()
}

fn letters_vocab() -> Vec<String> {
    let mut v: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
    v.extend(
        [
            " ",
            ",",
            "The",
            " elephant",
            " is",
            " big",
            " but",
            " not",
            " enor",
            "mous",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    v
}

/// Logits depending on the whole context, so chain-rule steps differ.
fn context_logits(n: usize) -> impl Fn(&[usize]) -> Vec<f64> + Send + Sync + 'static {
    move |ctx: &[usize]| {
        let h = ctx.iter().fold(7usize, |a, t| a.wrapping_mul(31).wrapping_add(*t + 1));
        (0..n)
            .map(|i| (((h % 97) as f64) * 0.13 + i as f64 * 1.7).sin() * 3.0)
            .collect()
    }
}

fn causal() -> CausalLmScorer<MockCausalLm> {
    let vocab = letters_vocab();
    let n = vocab.len();
    CausalLmScorer::new(MockCausalLm::with_logits(vocab, context_logits(n)))
}

#[test]
fn chain_rule_sums_subword_log_probabilities() {
    let vocab = letters_vocab();
    let id = |s: &str| vocab.iter().position(|v| v == s).unwrap();
    let logits = context_logits(vocab.len());
    let context: Vec<usize> = ["The", " elephant", " is", " big", ",", " but", " not"]
        .iter()
        .map(|t| id(t))
        .collect();
    let first = naive_log_softmax(&logits(&context))[id(" enor")];
    let mut ctx2 = context.clone();
    ctx2.push(id(" enor"));
    let second = naive_log_softmax(&logits(&ctx2))[id("mous")];

    let scorer = causal();
    let batch = scoring::score(&scorer, &continuation_construction(), &["enormous".to_string()]).unwrap();
    let got = batch.get("enormous").unwrap();
    assert_eq!(got.token_count, 2);
    assert!((got.logprob() - (first + second)).abs() < 1e-12);
    assert!((got.surprisal + first + second).abs() < 1e-12);
}

#[test]
fn masked_mass_over_vocabulary_is_one() {
    let vocab: Vec<String> = ["all", "most", "some", "many", "few", "##s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let lm = MockMaskedLm::with_logits(vocab, |left, right| {
        (0..6)
            .map(|i| (left.len() as f64 * 0.1 + right.len() as f64 * 0.05 + i as f64).cos() * 4.0)
            .collect()
    });
    let mass = MaskedLmScorer::new(lm).slot_mass(&masked_construction()).unwrap();
    assert!((mass - 1.0).abs() < 1e-4);
}

#[test]
fn distinct_models_do_not_share_cache_entries() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ScoreCache::open(dir.path().join("c.jsonl")).unwrap());
    let a = Arc::new(CountingScorer::new(WordHashScorer::new(
        "model-a",
        ScoringMode::Continuation,
    )));
    let b = Arc::new(CountingScorer::new(WordHashScorer::new(
        "model-b",
        ScoringMode::Continuation,
    )));
    let ca = CachedScorer::new(a.clone(), cache.clone());
    let cb = CachedScorer::new(b.clone(), cache.clone());
    let cands: Vec<String> = ["enormous", "huge", "gigantic"].iter().map(|s| s.to_string()).collect();
    let c = continuation_construction();
    for _ in 0..3 {
        scoring::score(&ca, &c, &cands).unwrap();
        scoring::score(&cb, &c, &cands).unwrap();
    }
    assert_eq!(a.calls(), 1);
    assert_eq!(b.calls(), 1);
    assert_eq!(cache.len(), 6);
}

fn word_pool() -> impl Strategy<Value = Vec<String>> {
    prop::collection::hash_set("[a-z]{1,8}", 1..25).prop_map(|s| {
        let mut v: Vec<String> = s.into_iter().collect();
        v.sort();
        v
    })
}

fn surprisals(batch: &scoring::ScoredBatch) -> HashMap<String, f64> {
    batch.scored.iter().map(|s| (s.word.clone(), s.surprisal)).collect()
}

proptest! {
    #[test]
    fn softmax_oracle(logits in prop::collection::vec(-20.0..20.0f64, 5)) {
        let vocab: Vec<String> = ["all", "most", "some", "many", "few"].iter().map(|s| s.to_string()).collect();
        let fixed = logits.clone();
        let scorer = MaskedLmScorer::new(MockMaskedLm::with_logits(vocab.clone(), move |_, _| fixed.clone()));
        let batch = scoring::score(&scorer, &masked_construction(), &vocab).unwrap();
        let want = naive_log_softmax(&logits);
        for (i, w) in vocab.iter().enumerate() {
            let got = batch.get(w).unwrap();
            prop_assert!((got.surprisal + want[i]).abs() < 1e-12);
            prop_assert!((got.probability - want[i].exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_under_order_and_partition(words in word_pool(), cut in any::<prop::sample::Index>(), rot in any::<prop::sample::Index>()) {
        let scorer = causal();
        let c = continuation_construction();
        let whole = surprisals(&scoring::score(&scorer, &c, &words).unwrap());

        let mut rotated = words.clone();
        rotated.rotate_left(rot.index(words.len()));
        rotated.reverse();
        prop_assert_eq!(&whole, &surprisals(&scoring::score(&scorer, &c, &rotated).unwrap()));

        let k = cut.index(words.len() + 1);
        let mut parts = surprisals(&scoring::score(&scorer, &c, &words[..k]).unwrap_or_default());
        parts.extend(surprisals(&scoring::score(&scorer, &c, &words[k..]).unwrap_or_default()));
        prop_assert_eq!(&whole, &parts);
    }

    #[test]
    fn cache_returns_identical_scores_in_any_batching(words in word_pool(), cut in any::<prop::sample::Index>()) {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ScoreCache::open(dir.path().join("c.jsonl")).unwrap());
        let counted = Arc::new(CountingScorer::new(causal()));
        let cached = CachedScorer::new(counted.clone(), cache);
        let c = continuation_construction();
        let k = cut.index(words.len() + 1);
        let mut first_calls = 0;
        for part in [&words[..k], &words[k..]] {
            if !part.is_empty() {
                scoring::score(&cached, &c, part).unwrap();
                first_calls += 1;
            }
        }
        prop_assert_eq!(counted.calls(), first_calls);
        let again = scoring::score(&cached, &c, &words).unwrap();
        prop_assert_eq!(counted.calls(), first_calls);
        let direct = scoring::score(&causal(), &c, &words).unwrap();
        prop_assert_eq!(surprisals(&again), surprisals(&direct));
    }

    #[test]
    fn surprisal_nonnegative_and_decreasing_in_probability(a in -50.0..0.0f64, b in -50.0..0.0f64) {
        let x = ScoredAlternative::from_logprob("x", a, 1);
        let y = ScoredAlternative::from_logprob("y", b, 1);
        prop_assert!(x.surprisal >= 0.0 && y.surprisal >= 0.0);
        if x.probability > y.probability {
            prop_assert!(x.surprisal < y.surprisal);
        }
    }
}
