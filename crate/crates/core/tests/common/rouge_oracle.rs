//! Memoized-recursion LCS written independently of the library's
//! two-row table, and the checks built on it.

use std::collections::HashMap;

use paramfuzz::rouge::{rouge_l, rouge_l_score, rouge_l_text, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROUNDS: usize = 1000;

fn oracle_lcs(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i] == b[j] {
        1 + oracle_lcs(a, b, i + 1, j + 1, memo)
    } else {
        oracle_lcs(a, b, i + 1, j, memo).max(oracle_lcs(a, b, i, j + 1, memo))
    };
    memo.insert((i, j), v);
    v
}

fn oracle_f1(a: &[String], b: &[String]) -> f64 {
    let l = oracle_lcs(a, b, 0, 0, &mut HashMap::new());
    if l == 0 {
        0.0
    } else {
        (2 * l) as f64 / (a.len() + b.len()) as f64
    }
}

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    const VOCAB: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let len = rng.random_range(0..=64);
    // small vocabularies make long common subsequences likely
    let width = rng.random_range(1..=VOCAB.len());
    (0..len).map(|_| VOCAB[rng.random_range(0..width)].to_string()).collect()
}

/// Compares library and oracle scores bit for bit on `ROUNDS` random pairs.
pub fn assert_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_531);
    for round in 0..ROUNDS {
        let a = random_tokens(&mut rng);
        let b = random_tokens(&mut rng);
        let got = rouge_l(&TokenSequence(a.clone()), &TokenSequence(b.clone()));
        let want = oracle_f1(&a, &b);
        assert_eq!(got.to_bits(), want.to_bits(), "round {round}: {a:?} vs {b:?}");

        // the textbook harmonic mean agrees to within rounding
        let score = rouge_l_score(&TokenSequence(a.clone()), &TokenSequence(b.clone()));
        if score.lcs > 0 {
            let (p, r) = (score.precision, score.recall);
            assert!((2.0 * p * r / (p + r) - got).abs() <= 4.0 * f64::EPSILON);
        }
    }
}

pub fn assert_worked_example() {
    let score = rouge_l_score(&TokenSequence::tokenize("the cat sat"), &TokenSequence::tokenize("the cat ran fast"));
    assert_eq!(score.lcs, 2);
    assert_eq!(score.f1, 4.0 / 7.0);
    assert!((score.f1 - 0.571).abs() < 5e-4);
    assert_eq!(rouge_l_text("the cat ran fast", "the cat sat"), 4.0 / 7.0);
}
