//! End-to-end matching: folds, buckets, scoring, rounds, export.

use rayon::prelude::*;

use crate::bucketing::{build_buckets, Bucket};
use crate::corpus::{split_folds, FoldPlan, Record};
use crate::error::{Result, StageContext};
use crate::matcher::{export_mcq, run_rounds, DistractorSet, ItemOrigin, MatchConfig, McqItem};
use crate::scoring::{score_bucket, ScoreMatrix, ScorerPair};

/// A bucket together with its relevance and similarity matrices.
#[derive(Debug, Clone)]
pub struct ScoredBucket<'a> {
    pub bucket: Bucket<'a>,
    pub relevance: ScoreMatrix,
    pub similarity: ScoreMatrix,
}

/// Bucket one fold and score every bucket.
pub fn prepare_fold<'a>(
    fold_records: &[&'a Record],
    fold: usize,
    config: &MatchConfig,
    scorers: &ScorerPair,
) -> Result<Vec<ScoredBucket<'a>>> {
    let buckets = build_buckets(
        fold_records,
        fold,
        config.mode,
        config.target_size,
        config.rounds,
        config.seed,
    )
    .stage("buckets")?;
    let policy = config.remap_policy();
    buckets
        .into_par_iter()
        .map(|bucket| {
            let (relevance, similarity) =
                score_bucket(&bucket.members, scorers, &policy).stage("score")?;
            Ok(ScoredBucket {
                bucket,
                relevance,
                similarity,
            })
        })
        .collect()
}

/// Matching rounds for one scored bucket under `config`.
pub fn match_bucket(scored: &ScoredBucket<'_>, config: &MatchConfig) -> Result<Vec<DistractorSet>> {
    run_rounds(
        &scored.bucket.members,
        &scored.relevance,
        &scored.similarity,
        config,
    )
    .stage("rounds")
}

fn export_bucket(
    scored: &ScoredBucket<'_>,
    sets: &[DistractorSet],
    config: &MatchConfig,
) -> Result<Vec<McqItem>> {
    let origin = ItemOrigin {
        fold: scored.bucket.fold,
        bucket: scored.bucket.index,
        mode: config.mode,
    };
    export_mcq(sets, &scored.bucket.members, config.seed, origin).stage("export")
}

/// Items of one fold, ordered by bucket and then by member id.
pub fn match_fold(
    fold_records: &[&Record],
    fold: usize,
    config: &MatchConfig,
    scorers: &ScorerPair,
) -> Result<Vec<McqItem>> {
    let scored = prepare_fold(fold_records, fold, config, scorers)?;
    let per_bucket: Vec<Vec<McqItem>> = scored
        .par_iter()
        .map(|s| export_bucket(s, &match_bucket(s, config)?, config))
        .collect::<Result<_>>()?;
    Ok(per_bucket.concat())
}

#[derive(Debug, Clone)]
pub struct MatchOutput {
    pub plan: FoldPlan,
    pub items: Vec<McqItem>,
}

/// Split `records` into folds and match every fold independently.
pub fn run_match(records: &[Record], config: &MatchConfig, scorers: &ScorerPair) -> Result<MatchOutput> {
    config.validate()?;
    let plan = split_folds(records, config.n_folds, config.seed).stage("split")?;
    let folds = plan.partition(records);
    let per_fold: Vec<Vec<McqItem>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, members)| match_fold(members, f, config, scorers))
        .collect::<Result<_>>()?;
    Ok(MatchOutput {
        plan,
        items: per_fold.concat(),
    })
}
