//! Generated-input properties of all fifteen operators, 500 inputs each.

use std::collections::BTreeMap;

use paramfuzz::canonical::canonical_string;
use paramfuzz::corpus::{char_slice, AnnotatedQuery, Mention, ParamType, ParameterSpec, ToolDocument, ToolReturn};
use paramfuzz::perturb_doc::{co, rd, re, sd, wd, wt, DocPerturbError};
use paramfuzz::perturb_query::{an, cp, rp_first, rp_last, DefaultComplicator, DefaultNoise};
use paramfuzz::perturb_return::{camel_case, cf, ck, fk, uk, ReturnOptions};
use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestRng, TestRunner};
use serde_json::{Map, Value};

pub const CASES: u32 = 500;

/// Runs `test` on `CASES` inputs drawn from `strategy` with a fixed seed.
fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = ProptestConfig {
        cases: CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn param_type() -> impl Strategy<Value = ParamType> {
    prop::sample::select(ParamType::ALL.to_vec())
}

fn param(index: usize) -> impl Strategy<Value = ParameterSpec> {
    (
        param_type(),
        "[a-z]{0,6}( [a-z]{1,6}){0,2}",
        any::<bool>(),
        prop::option::of("[a-z]{1,5}"),
        any::<bool>(),
    )
        .prop_map(move |(ptype, description, required, example, with_range)| {
            let mut p = ParameterSpec::new(format!("p{index}"), ptype).with_description(description);
            p.required = required;
            p.example = example.map(Value::String);
            if with_range && ptype.is_numeric() {
                p.range = Some([0.0, 10.0]);
            }
            p
        })
}

fn tool_doc(name: &'static str) -> impl Strategy<Value = ToolDocument> {
    (1usize..7)
        .prop_flat_map(|n| (0..n).map(param).collect::<Vec<_>>())
        .prop_flat_map(move |parameters| {
            prop::collection::vec("[a-z]{1,8}\\(\\)", 0..3).prop_map(move |usage_examples| ToolDocument {
                tool_name: name.into(),
                description: "generated".into(),
                parameters: parameters.clone(),
                usage_examples,
            })
        })
}

/// Text assembled from filler words and mention values, with spans in
/// code points.
fn annotated_query() -> impl Strategy<Value = AnnotatedQuery> {
    (
        "[A-Za-z]{0,8}( [a-z]{1,6}){0,2}",
        prop::collection::vec(("[A-Za-z0-9é]{1,8}( [A-Za-z0-9]{1,5})?", "[a-z]{1,6}( [a-z]{1,6}){0,2}[.?]?"), 0..5),
    )
        .prop_map(|(head, pieces)| {
            let mut text = head;
            let mut mentions = Vec::new();
            for (i, (value, filler)) in pieces.into_iter().enumerate() {
                if !text.is_empty() {
                    text.push(' ');
                }
                let start = text.chars().count();
                text.push_str(&value);
                let end = start + value.chars().count();
                mentions.push(Mention {
                    span: [start, end],
                    param_name: format!("p{i}"),
                    tool_name: "t".into(),
                    value_text: value,
                });
                text.push(' ');
                text.push_str(&filler);
            }
            AnnotatedQuery { text, mentions }
        })
}

fn key() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,6}",
        "[a-z]{1,4}_[a-z]{1,4}",
        "[a-z]{1,4}[A-Z][a-z]{1,4}",
        "[A-Z][a-z]{1,5}",
        "[a-z]{1,3}_?[iI][dD]",
        "[A-Za-z_]{1,8}",
    ]
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i32>().prop_map(Value::from),
        "[a-z0-9 ]{0,6}".prop_map(Value::String),
    ];
    leaf.prop_recursive(4, 40, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::vec((key(), inner), 0..5).prop_map(|entries| Value::Object(entries.into_iter().collect())),
        ]
    })
}

fn container() -> impl Strategy<Value = Value> {
    json_value().prop_filter("object or array", |v| v.is_object() || v.is_array())
}

fn leaves(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => map.values().for_each(|v| leaves(v, out)),
        Value::Array(items) => items.iter().for_each(|v| leaves(v, out)),
        leaf => out.push(canonical_string(leaf)),
    }
}

fn leaf_multiset(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    leaves(value, &mut out);
    out.sort();
    out
}

fn json(ret: &ToolReturn) -> &Value {
    ret.as_json().expect("JSON return")
}

fn descriptions(doc: &ToolDocument) -> Vec<String> {
    doc.parameters.iter().map(|p| p.description.clone()).collect()
}

pub fn rd_empties_exactly_required_descriptions() -> Result<(), String> {
    check(tool_doc("t"), |doc| {
        match rd(&doc) {
            Err(e) => {
                prop_assert_eq!(e, DocPerturbError::NoRequiredParams);
                prop_assert!(doc.parameters.iter().all(|p| !p.required));
            }
            Ok(out) => {
                let out = out.doc;
                prop_assert!(out.validate().is_ok());
                for (a, b) in doc.parameters.iter().zip(&out.parameters) {
                    if a.required {
                        prop_assert_eq!(&b.description, "");
                    } else {
                        prop_assert_eq!(a, b);
                    }
                    prop_assert_eq!((&a.name, a.ptype, &a.example), (&b.name, b.ptype, &b.example));
                }
                prop_assert_eq!(&out.usage_examples, &doc.usage_examples);
            }
        }
        Ok(())
    })
}

pub fn re_leaves_no_examples() -> Result<(), String> {
    check(tool_doc("t"), |doc| {
        match re(&doc) {
            Err(e) => prop_assert_eq!(e, DocPerturbError::NoExamples),
            Ok(out) => {
                let out = out.doc;
                prop_assert!(out.validate().is_ok());
                prop_assert!(out.usage_examples.is_empty());
                prop_assert!(out.parameters.iter().all(|p| p.example.is_none()));
                prop_assert_eq!(descriptions(&out), descriptions(&doc));
            }
        }
        Ok(())
    })
}

pub fn wd_draws_only_foreign_descriptions() -> Result<(), String> {
    check((tool_doc("t"), tool_doc("donor"), any::<u64>()), |(doc, donor, seed)| {
        let pool: Vec<String> = donor.parameters.iter().map(|p| p.description.clone()).filter(|d| !d.is_empty()).collect();
        let donors = [doc.clone(), donor];
        match wd(&doc, &donors, seed) {
            Err(e) => {
                prop_assert_eq!(e, DocPerturbError::NoDonor);
                prop_assert!(pool.is_empty());
            }
            Ok(out) => {
                prop_assert!(out.doc.validate().is_ok());
                for p in &out.doc.parameters {
                    prop_assert!(pool.contains(&p.description));
                }
                prop_assert_eq!(wd(&doc, &donors, seed).unwrap(), out);
            }
        }
        Ok(())
    })
}

pub fn wt_types_are_a_derangement() -> Result<(), String> {
    check(tool_doc("t"), |doc| {
        let out = wt(&doc).doc;
        prop_assert!(out.validate().is_ok());
        for (a, b) in doc.parameters.iter().zip(&out.parameters) {
            prop_assert_ne!(a.ptype, b.ptype);
            prop_assert_eq!((&a.name, &a.description), (&b.name, &b.description));
        }
        Ok(())
    })
}

pub fn sd_swaps_two_and_is_an_involution() -> Result<(), String> {
    check(tool_doc("t"), |doc| {
        match sd(&doc, None) {
            Err(e) => prop_assert!(matches!(e, DocPerturbError::TooFewParams | DocPerturbError::NoDistinctPair)),
            Ok(out) => {
                prop_assert!(out.doc.validate().is_ok());
                let changed = doc.parameters.iter().zip(&out.doc.parameters).filter(|(a, b)| a != b).count();
                prop_assert_eq!(changed, 2);
                let pair = out.details.pair;
                let back = sd(&out.doc, pair).unwrap().doc;
                prop_assert_eq!(back, doc);
            }
        }
        Ok(())
    })
}

pub fn co_permutes_descriptions_and_never_identity() -> Result<(), String> {
    check((tool_doc("t"), any::<u64>()), |(doc, seed)| {
        match co(&doc, seed) {
            Err(e) => {
                prop_assert_eq!(e, DocPerturbError::TooFewParams);
                prop_assert!(doc.parameters.len() < 2);
            }
            Ok(out) => {
                prop_assert!(out.doc.validate().is_ok());
                let mut before = descriptions(&doc);
                let mut after = descriptions(&out.doc);
                let all_equal = before.windows(2).all(|w| w[0] == w[1]);
                if !all_equal {
                    prop_assert_ne!(&before, &after);
                }
                before.sort();
                after.sort();
                prop_assert_eq!(before, after);
                let perm = out.details.permutation.clone().unwrap();
                prop_assert!(perm.iter().enumerate().any(|(i, &k)| i != k));
                let names: Vec<_> = out.doc.parameters.iter().map(|p| &p.name).collect();
                let original: Vec<_> = doc.parameters.iter().map(|p| &p.name).collect();
                prop_assert_eq!(names, original);
                prop_assert_eq!(co(&doc, seed).unwrap(), out);
            }
        }
        Ok(())
    })
}

pub fn rp_first_and_last_keep_surviving_spans() -> Result<(), String> {
    check(annotated_query(), |q| {
        prop_assert!(q.check_spans().is_ok());
        for (out, removed) in [(rp_first(&q), 0), (rp_last(&q), q.mentions.len().saturating_sub(1))] {
            match out {
                Err(_) => prop_assert!(q.mentions.is_empty()),
                Ok(out) => {
                    let out = out.query;
                    prop_assert_eq!(out.mentions.len(), q.mentions.len() - 1);
                    prop_assert!(out.text.chars().count() < q.text.chars().count());
                    for m in &out.mentions {
                        prop_assert_eq!(char_slice(&out.text, m.start(), m.end()), m.value_text.as_str());
                    }
                    let survivors: Vec<_> = q.mentions.iter().enumerate().filter(|(i, _)| *i != removed).map(|(_, m)| &m.value_text).collect();
                    let kept: Vec<_> = out.mentions.iter().map(|m| &m.value_text).collect();
                    prop_assert_eq!(kept, survivors);
                    prop_assert!(out.check_spans().is_ok());
                }
            }
        }
        Ok(())
    })
}

pub fn cp_spans_cover_replacements() -> Result<(), String> {
    check(annotated_query(), |q| {
        match cp(&q, &DefaultComplicator) {
            Err(_) => prop_assert!(q.mentions.is_empty()),
            Ok(out) => {
                prop_assert!(out.query.check_spans().is_ok());
                prop_assert_eq!(out.query.mentions.len(), q.mentions.len());
                for (m, original) in out.query.mentions.iter().zip(&q.mentions) {
                    prop_assert_ne!(&m.value_text, &original.value_text);
                    prop_assert_eq!(char_slice(&out.query.text, m.start(), m.end()), m.value_text.as_str());
                }
            }
        }
        Ok(())
    })
}

pub fn an_keeps_the_query_as_prefix() -> Result<(), String> {
    check(annotated_query(), |q| {
        match an(&q, &DefaultNoise) {
            Err(_) => prop_assert!(q.mentions.is_empty()),
            Ok(out) => {
                prop_assert!(out.query.text.starts_with(&q.text));
                prop_assert!(out.query.text.len() > q.text.len());
                prop_assert_eq!(&out.query.mentions, &q.mentions);
                for (d, m) in out.details.replacements.iter().zip(&q.mentions) {
                    prop_assert_ne!(d, &m.value_text);
                }
            }
        }
        Ok(())
    })
}

pub fn fk_keeps_leaf_values() -> Result<(), String> {
    check(json_value(), |v| {
        let ret = ToolReturn::Json(v.clone());
        match fk(&ret, &ReturnOptions::default()) {
            Err(_) => {
                let has_object = v.to_string().contains('{');
                prop_assert!(!has_object);
            }
            Ok(out) => {
                prop_assert!(out.details.collisions.is_empty());
                prop_assert_eq!(leaf_multiset(json(&out.ret)), leaf_multiset(&v));
            }
        }
        Ok(())
    })
}

pub fn ck_uk_keep_leaves_and_are_idempotent() -> Result<(), String> {
    check(json_value(), |v| {
        let opts = ReturnOptions::default();
        let ret = ToolReturn::Json(v.clone());
        for op in [ck, uk] {
            let once = op(&ret, &opts).unwrap();
            if once.details.collisions.is_empty() {
                prop_assert_eq!(leaf_multiset(json(&once.ret)), leaf_multiset(&v));
            }
            let twice = op(&once.ret, &opts).unwrap();
            prop_assert_eq!(&twice.ret, &once.ret);
        }
        Ok(())
    })
}

pub fn cf_output_never_parses() -> Result<(), String> {
    check(container(), |v| {
        let out = cf(&ToolReturn::Json(v)).unwrap();
        let ToolReturn::Raw(text) = out.ret else { panic!("CF must produce raw text") };
        prop_assert!(text.ends_with("..."));
        prop_assert!(serde_json::from_str::<Value>(&text).is_err());
        Ok(())
    })
}

/// Colliding keys are reported whenever a rename merges them.
pub fn ck_reports_every_merge() -> Result<(), String> {
    check(prop::collection::vec((key(), any::<i8>()), 1..6), |entries| {
        let map: Map<String, Value> = entries.into_iter().map(|(k, v)| (k, Value::from(v))).collect();
        let out = ck(&ToolReturn::Json(Value::Object(map.clone())), &ReturnOptions::default()).unwrap();
        let renamed = json(&out.ret).as_object().unwrap().len();
        let mut targets: BTreeMap<String, usize> = BTreeMap::new();
        for k in map.keys() {
            *targets.entry(camel_case(k)).or_default() += 1;
        }
        prop_assert_eq!(renamed, targets.len());
        prop_assert_eq!(out.details.collisions.len(), targets.values().filter(|n| **n > 1).count());
        Ok(())
    })
}

pub type Suite = (&'static str, fn() -> Result<(), String>);

/// Every suite with the operators it covers.
pub const SUITES: [Suite; 13] = [
    ("RD", rd_empties_exactly_required_descriptions),
    ("RE", re_leaves_no_examples),
    ("WD", wd_draws_only_foreign_descriptions),
    ("WT", wt_types_are_a_derangement),
    ("SD", sd_swaps_two_and_is_an_involution),
    ("CO", co_permutes_descriptions_and_never_identity),
    ("RPF+RPL", rp_first_and_last_keep_surviving_spans),
    ("CP", cp_spans_cover_replacements),
    ("AN", an_keeps_the_query_as_prefix),
    ("FK", fk_keeps_leaf_values),
    ("CK+UK", ck_uk_keep_leaves_and_are_idempotent),
    ("CK merges", ck_reports_every_merge),
    ("CF", cf_output_never_parses),
];
