//! Machine difficulty and answer-prior bias measurements.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_text, Record, Token};
use crate::error::{Error, Result};
use crate::matcher::{McqItem, MatchConfig};
use crate::pipeline::{match_bucket, prepare_fold, ScoredBucket};
use crate::scoring::ScorerPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub machine_accuracy: f64,
    pub mean_gold_distractor_similarity: f64,
    pub mean_distractor_relevance: f64,
}

/// Fraction of items whose gold choice strictly outscores every distractor.
/// Ties count as wrong.
pub fn machine_accuracy<F>(items: &[McqItem], score: F) -> Result<f64>
where
    F: Fn(&[Token], &[Token]) -> f64 + Sync,
{
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = items
        .par_iter()
        .filter(|item| {
            let scores: Vec<f64> = item.choices.iter().map(|c| score(&item.query, c)).collect();
            strict_argmax(&scores) == Some(item.gold_index)
        })
        .count();
    Ok(correct as f64 / items.len() as f64)
}

fn strict_argmax(scores: &[f64]) -> Option<usize> {
    let (best, &top) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let ties = scores.iter().filter(|&&s| s == top).count();
    (ties == 1).then_some(best)
}

#[derive(Default)]
struct Tally {
    items: usize,
    correct: usize,
    pairs: usize,
    similarity: f64,
    relevance: f64,
}

fn tally_bucket(scored: &ScoredBucket<'_>, config: &MatchConfig) -> Result<Tally> {
    let sets = match_bucket(scored, config)?;
    let rel = &scored.relevance;
    let sim = &scored.similarity;
    let mut t = Tally::default();
    for (i, set) in sets.iter().enumerate() {
        let gold = rel.get(i, i);
        t.items += 1;
        if set.distractors.iter().all(|d| rel.get(i, d.source) < gold) {
            t.correct += 1;
        }
        for d in &set.distractors {
            t.pairs += 1;
            t.similarity += sim.get(i, d.source);
            t.relevance += rel.get(i, d.source);
        }
    }
    Ok(t)
}

/// Rerun the matching rounds for each `lambda` on one fold and measure the
/// relevance scorer's accuracy on the result. Scoring does not depend on
/// `lambda` and is done once. Rows follow grid order.
pub fn lambda_sweep(
    fold_records: &[&Record],
    grid: &[f64],
    config: &MatchConfig,
    scorers: &ScorerPair,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if fold_records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scored = prepare_fold(fold_records, 0, config, scorers)?;
    grid.par_iter()
        .map(|&lambda| {
            let at = MatchConfig {
                lambda,
                ..config.clone()
            };
            let wrap = |e: Error| Error::AtLambda {
                lambda,
                source: Box::new(e),
            };
            at.validate().map_err(wrap)?;
            let tallies: Vec<Tally> = scored
                .par_iter()
                .map(|s| tally_bucket(s, &at))
                .collect::<Result<_>>()
                .map_err(wrap)?;
            let total = tallies.into_iter().fold(Tally::default(), |mut acc, t| {
                acc.items += t.items;
                acc.correct += t.correct;
                acc.pairs += t.pairs;
                acc.similarity += t.similarity;
                acc.relevance += t.relevance;
                acc
            });
            Ok(SweepRow {
                lambda,
                machine_accuracy: total.correct as f64 / total.items as f64,
                mean_gold_distractor_similarity: total.similarity / total.pairs as f64,
                mean_distractor_relevance: total.relevance / total.pairs as f64,
            })
        })
        .collect()
}

pub fn write_sweep_report<W: Write>(out: &mut W, rows: &[SweepRow]) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut *out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow]) -> Result<()> {
    writeln!(
        out,
        "lambda,machine_accuracy,mean_gold_distractor_similarity,mean_distractor_relevance"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.lambda, r.machine_accuracy, r.mean_gold_distractor_similarity, r.mean_distractor_relevance
        )?;
    }
    Ok(())
}

fn argmax_first(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut top = f64::NEG_INFINITY;
    for (i, s) in scores.enumerate() {
        if s > top {
            best = i;
            top = s;
        }
    }
    best
}

fn accuracy(items: &[McqItem], predict: impl Fn(&McqItem) -> usize + Sync) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = items
        .par_iter()
        .filter(|item| predict(item) == item.gold_index)
        .count();
    Ok(correct as f64 / items.len() as f64)
}

/// `(times gold, times seen)` per key.
fn rate_table<'a>(
    items: &'a [McqItem],
    keys: impl Fn(&'a [Token]) -> Vec<String>,
) -> HashMap<String, (usize, usize)> {
    let mut table: HashMap<String, (usize, usize)> = HashMap::new();
    for item in items {
        for (c, choice) in item.choices.iter().enumerate() {
            for key in keys(choice) {
                let entry = table.entry(key).or_default();
                entry.1 += 1;
                if c == item.gold_index {
                    entry.0 += 1;
                }
            }
        }
    }
    table
}

fn rate(table: &HashMap<String, (usize, usize)>, key: &str) -> f64 {
    table
        .get(key)
        .map_or(0.0, |&(gold, seen)| gold as f64 / seen as f64)
}

/// Answer-only baseline: learn how often each response text is the gold
/// answer on `train`, then on `eval` pick the choice with the highest rate
/// (first on ties, unseen texts rate 0). Texts are compared with tags
/// replaced by their class.
pub fn frequency_prior_probe(train: &[McqItem], eval: &[McqItem]) -> Result<f64> {
    let table = rate_table(train, |c| vec![canonical_text(c)]);
    accuracy(eval, |item| {
        argmax_first(item.choices.iter().map(|c| rate(&table, &canonical_text(c))))
    })
}

fn distinct_words(tokens: &[Token]) -> Vec<String> {
    let mut words: Vec<String> = tokens
        .iter()
        .filter_map(|t| match t {
            Token::Word(w) => Some(w.clone()),
            Token::Tag { .. } => None,
        })
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Word-level variant: a choice scores the highest gold rate of any of its
/// words. Catches single marker words that give the gold away.
pub fn word_prior_probe(train: &[McqItem], eval: &[McqItem]) -> Result<f64> {
    let table = rate_table(train, distinct_words);
    accuracy(eval, |item| {
        argmax_first(item.choices.iter().map(|c| {
            distinct_words(c)
                .iter()
                .map(|w| rate(&table, w))
                .fold(0.0, f64::max)
        }))
    })
}
