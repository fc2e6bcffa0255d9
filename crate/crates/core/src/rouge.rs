//! Rouge-L over word tokens.
//!
//! The score is the balanced F-measure (β = 1) of LCS precision and recall.
//! Tokenization: lowercase, split on anything that is not alphanumeric,
//! separators dropped.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn tokenize(text: &str) -> Self {
        let lowered = text.to_lowercase();
        TokenSequence(
            lowered
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().map(Into::into).collect())
    }
}

/// Length of the longest common subsequence, two-row table.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub lcs: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full Rouge-L breakdown. `f1` is computed as `2·LCS / (|cand| + |ref|)`,
/// the closed form of `2PR / (P + R)`; it is 0 when the LCS is empty.
pub fn rouge_l_score(candidate: &TokenSequence, reference: &TokenSequence) -> RougeScore {
    let lcs = lcs_len(&candidate.0, &reference.0);
    if lcs == 0 {
        return RougeScore {
            lcs,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    RougeScore {
        lcs,
        precision: lcs as f64 / candidate.len() as f64,
        recall: lcs as f64 / reference.len() as f64,
        f1: (2 * lcs) as f64 / (candidate.len() + reference.len()) as f64,
    }
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    rouge_l_score(candidate, reference).f1
}

/// Rouge-L between two texts after tokenization.
pub fn rouge_l_text(candidate: &str, reference: &str) -> f64 {
    rouge_l(&TokenSequence::tokenize(candidate), &TokenSequence::tokenize(reference))
}
