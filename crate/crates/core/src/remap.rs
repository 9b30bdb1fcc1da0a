//! Detection-tag remapping.
//!
//! A gold response recycled as a distractor for another query still points at
//! the objects of its own record. Before scoring, each candidate is turned into
//! a template whose tags are open slots, and the slots are refilled with tags
//! from the target record.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Record, Token};
use crate::rng::{self, StreamRng};

pub const DEFAULT_P_REUSE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateToken {
    Word(String),
    /// Open slot; remembers the class and the index it was cut from.
    Slot { class: String, original: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseTemplate {
    pub tokens: Vec<TemplateToken>,
}

impl ResponseTemplate {
    pub fn slot_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, TemplateToken::Slot { .. }))
            .count()
    }

    pub fn original_tags(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                TemplateToken::Slot { original, .. } => Some(*original),
                TemplateToken::Word(_) => None,
            })
            .collect()
    }

    /// Fill slots, in order, with the given tag indices.
    ///
    /// Panics if `tags.len()` differs from the slot count.
    pub fn fill(&self, tags: &[usize]) -> Vec<Token> {
        assert_eq!(tags.len(), self.slot_count(), "one tag per slot");
        let mut next = tags.iter();
        self.tokens
            .iter()
            .map(|t| match t {
                TemplateToken::Word(w) => Token::Word(w.clone()),
                TemplateToken::Slot { class, .. } => Token::Tag {
                    index: *next.next().unwrap_or(&0),
                    class: class.clone(),
                },
            })
            .collect()
    }
}

pub fn templatize(response: &[Token]) -> ResponseTemplate {
    ResponseTemplate {
        tokens: response
            .iter()
            .map(|t| match t {
                Token::Word(w) => TemplateToken::Word(w.clone()),
                Token::Tag { index, class } => TemplateToken::Slot {
                    class: class.clone(),
                    original: *index,
                },
            })
            .collect(),
    }
}

fn objects_of_class(target: &Record, class: &str) -> Vec<usize> {
    target
        .objects
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_str() == class)
        .map(|(i, _)| i + 1)
        .collect()
}

fn mentioned_of_class(target: &Record, class: &str) -> Vec<usize> {
    let mut out: Vec<usize> = target
        .query
        .iter()
        .chain(&target.gold)
        .filter_map(|t| match t {
            Token::Tag { index, class: c } if c == class => Some(*index),
            _ => None,
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Refill a template's slots with tags of `target`.
///
/// Each slot draws, with probability `p_reuse`, from the class-matching tags
/// already mentioned in the target's query or gold response, and otherwise from
/// all class-matching target objects. An empty pool falls back to the other
/// pool, then to any `person` object, and finally the slot becomes the bare
/// class word. One uniform draw decides the pool for every slot; a second
/// picks the tag whenever a non-empty pool is found.
pub fn remap_tags(
    template: &ResponseTemplate,
    target: &Record,
    p_reuse: f64,
    rng: &mut impl Rng,
) -> Vec<Token> {
    let mut out = Vec::with_capacity(template.tokens.len());
    for t in &template.tokens {
        match t {
            TemplateToken::Word(w) => out.push(Token::Word(w.clone())),
            TemplateToken::Slot { class, .. } => {
                let reuse = rng.random::<f64>() < p_reuse;
                let mentioned = mentioned_of_class(target, class);
                let all = objects_of_class(target, class);
                let (first, second) = if reuse { (mentioned, all) } else { (all, mentioned) };
                let (pool, pool_class) = if !first.is_empty() {
                    (first, class.as_str())
                } else if !second.is_empty() {
                    (second, class.as_str())
                } else {
                    (objects_of_class(target, "person"), "person")
                };
                if pool.is_empty() {
                    out.push(Token::Word(class.to_lowercase()));
                } else {
                    let index = pool[rng.random_range(0..pool.len())];
                    out.push(Token::tag(pool_class, index));
                }
            }
        }
    }
    out
}

/// Remapping knobs plus the seed its per-pair substreams derive from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemapPolicy {
    pub p_reuse: f64,
    pub seed: u64,
}

impl Default for RemapPolicy {
    fn default() -> Self {
        RemapPolicy {
            p_reuse: DEFAULT_P_REUSE,
            seed: 0,
        }
    }
}

/// The substream used to remap candidate `candidate_id` onto `query_id`.
pub fn pair_stream(seed: u64, query_id: &str, candidate_id: &str) -> StreamRng {
    rng::stream(seed, &["remap", query_id, candidate_id])
}

/// Gold `j` of the bucket as a candidate response for query `i`: remapped onto
/// record `i`, or the gold itself when `i == j`.
pub fn candidate_response(bucket: &[&Record], i: usize, j: usize, policy: &RemapPolicy) -> Vec<Token> {
    let source = &bucket[j].gold;
    if i == j || !source.iter().any(Token::is_tag) {
        return source.clone();
    }
    let mut rng = pair_stream(policy.seed, &bucket[i].id, &bucket[j].id);
    remap_tags(&templatize(source), bucket[i], policy.p_reuse, &mut rng)
}
