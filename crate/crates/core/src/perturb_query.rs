//! User-query operators: RP_F, RP_L, CP and AN.
//!
//! All offsets are code points. Removal cuts exactly the annotated span and
//! then tidies the whitespace at the cut; replacement and noise text come
//! from a pluggable [`Rewriter`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedQuery, Mention};
use crate::operator::{Operator, PerturbationRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryPerturbError {
    #[error("query has no annotated parameter mentions")]
    NoMentions,
    #[error("rewriter produced empty text for {0:?}")]
    EmptyRewrite(String),
    #[error("rewriter failed: {0}")]
    Rewrite(String),
    #[error("{0} is not a user-query operator")]
    WrongSource(Operator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriterKind {
    Complicate,
    Noise,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct RewriteError(pub String);

/// Produces replacement (CP) or distractor (AN) text for a mention value.
/// Implementations must be deterministic for a given input.
pub trait Rewriter: Send + Sync {
    fn kind(&self) -> RewriterKind;

    /// Stable identifier written to the perturbation record.
    fn name(&self) -> String;

    fn rewrite(&self, value: &str) -> Result<String, RewriteError>;
}

/// `the value that would be written as '<value>'`
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultComplicator;

impl Rewriter for DefaultComplicator {
    fn kind(&self) -> RewriterKind {
        RewriterKind::Complicate
    }

    fn name(&self) -> String {
        "default-complicate".into()
    }

    fn rewrite(&self, value: &str) -> Result<String, RewriteError> {
        Ok(format!("the value that would be written as '{value}'"))
    }
}

/// Near-miss distractors: numbers bumped by one, strings with a case flip,
/// and `not <value>` when neither applies.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultNoise;

impl Rewriter for DefaultNoise {
    fn kind(&self) -> RewriterKind {
        RewriterKind::Noise
    }

    fn name(&self) -> String {
        "default-noise".into()
    }

    fn rewrite(&self, value: &str) -> Result<String, RewriteError> {
        Ok(default_distractor(value))
    }
}

/// Adapts a plain function into a [`Rewriter`].
pub struct FnRewriter<F> {
    kind: RewriterKind,
    name: String,
    f: F,
}

impl<F> FnRewriter<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    pub fn new(kind: RewriterKind, name: impl Into<String>, f: F) -> Self {
        FnRewriter {
            kind,
            name: name.into(),
            f,
        }
    }
}

impl<F> Rewriter for FnRewriter<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn kind(&self) -> RewriterKind {
        self.kind
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn rewrite(&self, value: &str) -> Result<String, RewriteError> {
        Ok((self.f)(value))
    }
}

pub fn default_distractor(value: &str) -> String {
    if let Some(bumped) = bump_number(value) {
        return bumped;
    }
    if let Some(flipped) = flip_case_mid(value).filter(|s| s != value) {
        return flipped;
    }
    if let Some(flipped) = flip_first_cased(value).filter(|s| s != value) {
        return flipped;
    }
    format!("not {value}")
}

fn bump_number(value: &str) -> Option<String> {
    let (int_part, frac_part) = match value.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (value, None),
    };
    let digits = int_part.strip_prefix('-').unwrap_or(int_part);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let bumped = match frac_part {
        None => (value.parse::<i128>().ok()? + 1).to_string(),
        Some(f) if !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()) => {
            let x: f64 = value.parse().ok()?;
            format!("{:.*}", f.len(), x + 1.0)
        }
        Some(_) => return None,
    };
    (bumped != value).then_some(bumped)
}

fn to_lower(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn to_upper(c: char) -> char {
    c.to_uppercase().next().unwrap_or(c)
}

/// Lowercases the value, then uppercases one character, preferring the
/// middle one: `Bitcoin` becomes `bitCoin`.
fn flip_case_mid(value: &str) -> Option<String> {
    let mut chars: Vec<char> = value.chars().map(to_lower).collect();
    let n = chars.len();
    let mid = n / 2;
    let pos = (0..n).map(|k| (mid + k) % n).find(|&i| to_upper(chars[i]) != chars[i])?;
    chars[pos] = to_upper(chars[pos]);
    Some(chars.into_iter().collect())
}

fn flip_first_cased(value: &str) -> Option<String> {
    let mut chars: Vec<char> = value.chars().collect();
    let pos = chars.iter().position(|c| c.is_uppercase() || c.is_lowercase())?;
    let c = chars[pos];
    chars[pos] = if c.is_uppercase() { to_lower(c) } else { to_upper(c) };
    Some(chars.into_iter().collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryDetails {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewriter_kind: Option<RewriterKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewriter: Option<String>,
    /// Replacement (CP) or distractor (AN) text, one per mention.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replacements: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<Mention>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query: AnnotatedQuery,
    pub details: QueryDetails,
}

const CLOSING_PUNCT: [char; 6] = ['.', ',', '!', '?', ';', ':'];

/// Cuts mention `idx` out of the text. Whitespace on both sides of the cut
/// collapses to at most one space, and none is kept before closing
/// punctuation or at either end of the text.
fn excise(q: &AnnotatedQuery, idx: usize) -> QueryOutcome {
    let chars: Vec<char> = q.text.chars().collect();
    let m = &q.mentions[idx];
    let floor = if idx == 0 { 0 } else { q.mentions[idx - 1].end() };
    let ceil = q.mentions.get(idx + 1).map_or(chars.len(), Mention::start);

    let mut a = m.start();
    while a > floor && chars[a - 1].is_whitespace() {
        a -= 1;
    }
    let mut b = m.end();
    while b < ceil && chars[b].is_whitespace() {
        b += 1;
    }
    let had_space = a < m.start() || b > m.end();
    let keep_space = had_space && a > 0 && b < chars.len() && !CLOSING_PUNCT.contains(&chars[b]);
    let sep = usize::from(keep_space);

    let mut text: String = chars[..a].iter().collect();
    if keep_space {
        text.push(' ');
    }
    text.extend(&chars[b..]);

    let mut mentions = Vec::with_capacity(q.mentions.len() - 1);
    for (k, other) in q.mentions.iter().enumerate() {
        if k < idx {
            mentions.push(other.clone());
        } else if k > idx {
            let mut shifted = other.clone();
            shifted.span = [other.start() - b + a + sep, other.end() - b + a + sep];
            mentions.push(shifted);
        }
    }
    QueryOutcome {
        query: AnnotatedQuery { text, mentions },
        details: QueryDetails {
            removed: Some(m.clone()),
            ..QueryDetails::default()
        },
    }
}

/// Removes the first parameter mention.
pub fn rp_first(q: &AnnotatedQuery) -> Result<QueryOutcome, QueryPerturbError> {
    if q.mentions.is_empty() {
        return Err(QueryPerturbError::NoMentions);
    }
    Ok(excise(q, 0))
}

/// Removes the last parameter mention.
pub fn rp_last(q: &AnnotatedQuery) -> Result<QueryOutcome, QueryPerturbError> {
    if q.mentions.is_empty() {
        return Err(QueryPerturbError::NoMentions);
    }
    Ok(excise(q, q.mentions.len() - 1))
}

fn rewrite_nonempty(rewriter: &dyn Rewriter, value: &str) -> Result<String, QueryPerturbError> {
    let out = rewriter
        .rewrite(value)
        .map_err(|e| QueryPerturbError::Rewrite(e.0))?;
    if out.is_empty() {
        return Err(QueryPerturbError::EmptyRewrite(value.to_string()));
    }
    Ok(out)
}

/// Replaces every mention value with the rewriter's phrasing of it. Spans
/// are moved to cover the replacement text.
pub fn cp(q: &AnnotatedQuery, rewriter: &dyn Rewriter) -> Result<QueryOutcome, QueryPerturbError> {
    if q.mentions.is_empty() {
        return Err(QueryPerturbError::NoMentions);
    }
    let chars: Vec<char> = q.text.chars().collect();
    let mut text = String::with_capacity(q.text.len() * 2);
    let mut mentions = Vec::with_capacity(q.mentions.len());
    let mut replacements = Vec::with_capacity(q.mentions.len());
    let mut cursor = 0;
    let mut out_len = 0;
    for m in &q.mentions {
        let replacement = rewrite_nonempty(rewriter, &m.value_text)?;
        text.extend(&chars[cursor..m.start()]);
        out_len += m.start() - cursor;
        let start = out_len;
        text.push_str(&replacement);
        out_len += replacement.chars().count();
        mentions.push(Mention {
            span: [start, out_len],
            value_text: replacement.clone(),
            ..m.clone()
        });
        replacements.push(replacement);
        cursor = m.end();
    }
    text.extend(&chars[cursor..]);
    Ok(QueryOutcome {
        query: AnnotatedQuery { text, mentions },
        details: QueryDetails {
            rewriter_kind: Some(rewriter.kind()),
            rewriter: Some(rewriter.name()),
            replacements,
            removed: None,
        },
    })
}

/// Appends one distractor sentence per mention after the original query.
/// The appended text carries no annotations.
pub fn an(q: &AnnotatedQuery, rewriter: &dyn Rewriter) -> Result<QueryOutcome, QueryPerturbError> {
    if q.mentions.is_empty() {
        return Err(QueryPerturbError::NoMentions);
    }
    let mut text = q.text.clone();
    let mut replacements = Vec::with_capacity(q.mentions.len());
    for m in &q.mentions {
        let distractor = rewrite_nonempty(rewriter, &m.value_text)?;
        text.push_str(" Unrelated note: ");
        text.push_str(&distractor);
        text.push('.');
        replacements.push(distractor);
    }
    Ok(QueryOutcome {
        query: AnnotatedQuery {
            text,
            mentions: q.mentions.clone(),
        },
        details: QueryDetails {
            rewriter_kind: Some(rewriter.kind()),
            rewriter: Some(rewriter.name()),
            replacements,
            removed: None,
        },
    })
}

/// Applies a query operator. `rewriter` overrides the default for CP/AN.
pub fn apply(
    q: &AnnotatedQuery,
    operator: Operator,
    seed: u64,
    rewriter: Option<&dyn Rewriter>,
) -> Result<(AnnotatedQuery, PerturbationRecord), QueryPerturbError> {
    let outcome = match operator {
        Operator::RPF => rp_first(q),
        Operator::RPL => rp_last(q),
        Operator::CP => cp(q, rewriter.unwrap_or(&DefaultComplicator)),
        Operator::AN => an(q, rewriter.unwrap_or(&DefaultNoise)),
        other => Err(QueryPerturbError::WrongSource(other)),
    }?;
    let record = PerturbationRecord {
        operator,
        seed,
        target: "query".into(),
        skipped: None,
        details: serde_json::to_value(&outcome.details).expect("details serialize"),
    };
    Ok((outcome.query, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::char_slice;

    fn mention(text: &str, value: &str, param: &str) -> Mention {
        let byte = text.find(value).expect("value in text");
        let start = text[..byte].chars().count();
        Mention {
            span: [start, start + value.chars().count()],
            param_name: param.into(),
            tool_name: "t".into(),
            value_text: value.into(),
        }
    }

    fn query(text: &str, values: &[&str]) -> AnnotatedQuery {
        AnnotatedQuery {
            text: text.into(),
            mentions: values.iter().map(|v| mention(text, v, v)).collect(),
        }
    }

    fn spans_hold(q: &AnnotatedQuery) -> bool {
        q.check_spans().is_ok()
    }

    #[test]
    fn rp_first_removes_and_shifts() {
        let q = query("Top queries for Bitcoin in Australia", &["Bitcoin", "Australia"]);
        let out = rp_first(&q).unwrap().query;
        assert_eq!(out.text, "Top queries for in Australia");
        assert_eq!(out.mentions.len(), 1);
        assert_eq!(out.mentions[0].span, [19, 28]);
        // excised length 7 plus one collapsed space
        assert_eq!(q.mentions[1].start() - out.mentions[0].start(), 8);
        assert!(spans_hold(&out));
    }

    #[test]
    fn rp_last_leaves_earlier_spans() {
        let q = query("Top queries for Bitcoin in Australia", &["Bitcoin", "Australia"]);
        let out = rp_last(&q).unwrap().query;
        assert_eq!(out.text, "Top queries for Bitcoin in");
        assert_eq!(out.mentions, vec![q.mentions[0].clone()]);
    }

    #[test]
    fn single_mention_symmetry() {
        let q = query("Translate hello to ja please", &["ja"]);
        let first = rp_first(&q).unwrap().query;
        assert_eq!(first, rp_last(&q).unwrap().query);
        assert_eq!(first.text, "Translate hello to please");
        assert!(first.mentions.is_empty());
    }

    #[test]
    fn no_space_before_punctuation() {
        let q = query("Find flights to Paris.", &["Paris"]);
        assert_eq!(rp_first(&q).unwrap().query.text, "Find flights to.");
        let q = query("Bitcoin prices, please", &["Bitcoin"]);
        assert_eq!(rp_first(&q).unwrap().query.text, "prices, please");
    }

    #[test]
    fn glued_mention_is_cut_without_space() {
        let q = AnnotatedQuery {
            text: "aXb".into(),
            mentions: vec![Mention {
                span: [1, 2],
                param_name: "p".into(),
                tool_name: "t".into(),
                value_text: "X".into(),
            }],
        };
        assert_eq!(rp_first(&q).unwrap().query.text, "ab");
    }

    #[test]
    fn no_mentions_errors() {
        let q = AnnotatedQuery::plain("hello");
        assert_eq!(rp_first(&q), Err(QueryPerturbError::NoMentions));
        assert_eq!(rp_last(&q), Err(QueryPerturbError::NoMentions));
        assert_eq!(cp(&q, &DefaultComplicator), Err(QueryPerturbError::NoMentions));
        assert_eq!(an(&q, &DefaultNoise), Err(QueryPerturbError::NoMentions));
    }

    #[test]
    fn cp_default_phrase() {
        let q = query("Translate to ja now", &["ja"]);
        let out = cp(&q, &DefaultComplicator).unwrap().query;
        assert_eq!(out.text, "Translate to the value that would be written as 'ja' now");
        let m = &out.mentions[0];
        assert_eq!(char_slice(&out.text, m.start(), m.end()), m.value_text);
    }

    #[test]
    fn cp_identity_rewriter_is_identity_on_text() {
        let q = query("Top queries for Bitcoin in Australia", &["Bitcoin", "Australia"]);
        let echo = FnRewriter::new(RewriterKind::Complicate, "echo", |v: &str| v.to_string());
        assert_eq!(cp(&q, &echo).unwrap().query, q);
    }

    #[test]
    fn cp_rejects_empty_rewrites() {
        let q = query("a b", &["b"]);
        let blank = FnRewriter::new(RewriterKind::Complicate, "blank", |_: &str| String::new());
        assert_eq!(cp(&q, &blank), Err(QueryPerturbError::EmptyRewrite("b".into())));
    }

    #[test]
    fn an_appends_case_flip() {
        let q = query("Show the top queries for Bitcoin.", &["Bitcoin"]);
        let out = an(&q, &DefaultNoise).unwrap().query;
        assert_eq!(out.text, "Show the top queries for Bitcoin. Unrelated note: bitCoin.");
        assert_eq!(out.mentions, q.mentions);
    }

    #[test]
    fn distractor_rules() {
        assert_eq!(default_distractor("Bitcoin"), "bitCoin");
        assert_eq!(default_distractor("bitCoin"), "BitCoin");
        assert_eq!(default_distractor("5"), "6");
        assert_eq!(default_distractor("-1"), "0");
        assert_eq!(default_distractor("3.50"), "4.50");
        assert_eq!(default_distractor("ja"), "jA");
        assert_eq!(default_distractor("42-17"), "not 42-17");
        assert_eq!(default_distractor("東京"), "not 東京");
    }

    #[test]
    fn non_ascii_offsets() {
        let q = query("Météo à Zürich demain", &["Zürich"]);
        let out = cp(&q, &DefaultComplicator).unwrap().query;
        assert!(spans_hold(&out));
        let out = rp_first(&q).unwrap().query;
        assert_eq!(out.text, "Météo à demain");
    }

    #[test]
    fn record_carries_rewriter() {
        let q = query("Show Bitcoin", &["Bitcoin"]);
        let (_, record) = apply(&q, Operator::AN, 9, None).unwrap();
        assert_eq!(record.details["rewriter_kind"], "noise");
        assert_eq!(record.details["replacements"][0], "bitCoin");
        assert!(matches!(
            apply(&q, Operator::RD, 9, None),
            Err(QueryPerturbError::WrongSource(Operator::RD))
        ));
    }
}
