//! Adversarial Matching.
//!
//! Each round solves a maximum-weight assignment of queries to other queries'
//! gold responses with weights
//!
//! ```text
//! W[i][j] = ln rel(q_i, r_j) + lambda * ln(1 - sim_eff(i, j))
//! ```
//!
//! where `sim_eff(i, j)` is the largest similarity between candidate `r_j` and
//! any response already attached to query `i` (its gold plus the distractors
//! of earlier rounds). Self pairs and already attached responses are
//! forbidden, so K rounds give every query K distinct distractors and every
//! response is used exactly K times as a distractor.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_lap_max, Weight, WeightMatrix};
use crate::corpus::{parse_tokens, tokens_to_string, Record, TaskMode, Token};
use crate::error::{Error, Result};
use crate::remap::{candidate_response, RemapPolicy, DEFAULT_P_REUSE};
use crate::rng;
use crate::scoring::{check_epsilon, ScoreMatrix, DEFAULT_EPSILON};

pub const DEFAULT_ROUNDS: usize = 3;
pub const DEFAULT_LAMBDA_QA: f64 = 0.1;
pub const DEFAULT_LAMBDA_QAR: f64 = 0.01;

pub fn default_lambda(mode: TaskMode) -> f64 {
    match mode {
        TaskMode::Qa => DEFAULT_LAMBDA_QA,
        TaskMode::Qar => DEFAULT_LAMBDA_QAR,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub mode: TaskMode,
    /// Weight of the dissimilarity term.
    pub lambda: f64,
    /// Matching rounds K; each item gets K + 1 choices.
    pub rounds: usize,
    pub epsilon: f64,
    pub p_reuse: f64,
    pub seed: u64,
    pub n_folds: usize,
    pub target_size: usize,
}

impl MatchConfig {
    pub fn new(mode: TaskMode, seed: u64) -> Self {
        MatchConfig {
            mode,
            lambda: default_lambda(mode),
            rounds: DEFAULT_ROUNDS,
            epsilon: DEFAULT_EPSILON,
            p_reuse: DEFAULT_P_REUSE,
            seed,
            n_folds: crate::corpus::DEFAULT_FOLDS,
            target_size: crate::bucketing::DEFAULT_TARGET_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.p_reuse) {
            return Err(Error::Config(format!("p_reuse must be in [0, 1], got {}", self.p_reuse)));
        }
        if self.n_folds < 1 {
            return Err(Error::Config("n_folds must be at least 1".into()));
        }
        if self.target_size < self.rounds + 1 {
            return Err(Error::Config(format!(
                "target_size {} is below rounds + 1",
                self.target_size
            )));
        }
        check_epsilon(self.epsilon).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn remap_policy(&self) -> RemapPolicy {
        RemapPolicy {
            p_reuse: self.p_reuse,
            seed: self.seed,
        }
    }
}

/// `eff[i][j] = max over a in {i} + assigned[i] of sim[a][j]`, row-major.
pub fn effective_similarity(sim: &ScoreMatrix, assigned: &[Vec<usize>]) -> Result<Vec<f64>> {
    let n = sim.n;
    if assigned.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: assigned.len(),
        });
    }
    if let Some(&bad) = assigned.iter().flatten().find(|&&a| a >= n) {
        return Err(Error::InvalidArgument(format!("assigned index {bad} out of range")));
    }
    let mut eff = sim.values.clone();
    for (i, extra) in assigned.iter().enumerate() {
        let row = &mut eff[i * n..(i + 1) * n];
        for &a in extra {
            for (e, &s) in row.iter_mut().zip(sim.row(a)) {
                if s > *e {
                    *e = s;
                }
            }
        }
    }
    Ok(eff)
}

/// Weights for one round. The diagonal and any pair with effective
/// similarity of 1 are forbidden.
pub fn weight_matrix(rel: &ScoreMatrix, eff_sim: &[f64], lambda: f64) -> Result<WeightMatrix> {
    let n = rel.n;
    if eff_sim.len() != n * n {
        return Err(Error::ShapeMismatch {
            expected: n * n,
            got: eff_sim.len(),
        });
    }
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let s = eff_sim[i * n + j];
            entries.push(if i == j || s >= 1.0 {
                Weight::Forbidden
            } else {
                Weight::Allowed(rel.get(i, j).ln() + lambda * (1.0 - s).ln())
            });
        }
    }
    WeightMatrix::new(n, entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distractor {
    /// Index of the source record within the bucket.
    pub source: usize,
    pub source_id: String,
    /// Source gold with its tags remapped onto the query's record.
    pub tokens: Vec<Token>,
    /// 1-based matching round.
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistractorSet {
    pub query_id: String,
    pub distractors: Vec<Distractor>,
}

/// Run K matching rounds over one bucket.
pub fn run_rounds(
    bucket: &[&Record],
    rel: &ScoreMatrix,
    sim: &ScoreMatrix,
    config: &MatchConfig,
) -> Result<Vec<DistractorSet>> {
    let n = bucket.len();
    let k = config.rounds;
    if n < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "bucket of {n} cannot supply {k} distractors per query"
        )));
    }
    for m in [rel, sim] {
        if m.n != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: m.n,
            });
        }
    }

    let mut assigned: Vec<Vec<usize>> = vec![Vec::with_capacity(k); n];
    for round in 1..=k {
        let eff = effective_similarity(sim, &assigned)?;
        let weights = weight_matrix(rel, &eff, config.lambda)?;
        let solution = solve_lap_max(&weights).map_err(|_| Error::InfeasibleRound { round })?;
        for (i, &j) in solution.mapping.iter().enumerate() {
            assert!(
                j != i && !assigned[i].contains(&j),
                "round {round}: query {i} matched to an excluded response {j}"
            );
            assigned[i].push(j);
        }
    }

    let policy = config.remap_policy();
    Ok(assigned
        .into_iter()
        .enumerate()
        .map(|(i, sources)| DistractorSet {
            query_id: bucket[i].id.clone(),
            distractors: sources
                .into_iter()
                .enumerate()
                .map(|(r, j)| Distractor {
                    source: j,
                    source_id: bucket[j].id.clone(),
                    tokens: candidate_response(bucket, i, j, &policy),
                    round: r + 1,
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Gold,
    Distractor { source: String, round: usize },
}

/// One multiple-choice problem.
#[derive(Debug, Clone, PartialEq)]
pub struct McqItem {
    pub id: String,
    pub query: Vec<Token>,
    pub choices: Vec<Vec<Token>>,
    pub gold_index: usize,
    pub provenance: Vec<Provenance>,
    pub fold: usize,
    pub bucket: usize,
    pub task_mode: TaskMode,
}

/// Where an exported item came from.
#[derive(Debug, Clone, Copy)]
pub struct ItemOrigin {
    pub fold: usize,
    pub bucket: usize,
    pub mode: TaskMode,
}

/// Gold plus distractors, shuffled by a substream keyed on the query id.
pub fn export_mcq(
    sets: &[DistractorSet],
    bucket: &[&Record],
    seed: u64,
    origin: ItemOrigin,
) -> Result<Vec<McqItem>> {
    if sets.len() != bucket.len() {
        return Err(Error::ShapeMismatch {
            expected: bucket.len(),
            got: sets.len(),
        });
    }
    sets.iter()
        .zip(bucket)
        .map(|(set, record)| {
            if set.query_id != record.id {
                return Err(Error::InvalidArgument(format!(
                    "distractor set for {} does not match record {}",
                    set.query_id, record.id
                )));
            }
            let mut choices: Vec<(Vec<Token>, Provenance)> = vec![(record.gold.clone(), Provenance::Gold)];
            choices.extend(set.distractors.iter().map(|d| {
                (
                    d.tokens.clone(),
                    Provenance::Distractor {
                        source: d.source_id.clone(),
                        round: d.round,
                    },
                )
            }));
            choices.shuffle(&mut rng::stream(seed, &["shuffle", &record.id]));
            let gold_index = choices
                .iter()
                .position(|(_, p)| *p == Provenance::Gold)
                .unwrap_or(0);
            let (choices, provenance) = choices.into_iter().unzip();
            Ok(McqItem {
                id: record.id.clone(),
                query: record.query.clone(),
                choices,
                gold_index,
                provenance,
                fold: origin.fold,
                bucket: origin.bucket,
                task_mode: origin.mode,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct McqLine {
    id: String,
    query: String,
    choices: Vec<String>,
    gold_index: usize,
    provenance: Vec<Provenance>,
    fold: usize,
    bucket: usize,
    task_mode: TaskMode,
}

pub fn write_mcq<W: Write>(out: &mut W, items: &[McqItem]) -> Result<()> {
    for item in items {
        let line = McqLine {
            id: item.id.clone(),
            query: tokens_to_string(&item.query),
            choices: item.choices.iter().map(|c| tokens_to_string(c)).collect(),
            gold_index: item.gold_index,
            provenance: item.provenance.clone(),
            fold: item.fold,
            bucket: item.bucket,
            task_mode: item.task_mode,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_mcq<R: BufRead>(input: R) -> Result<Vec<McqItem>> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let raw: McqLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if raw.gold_index >= raw.choices.len() || raw.provenance.len() != raw.choices.len() {
            return Err(parse_err("gold_index or provenance inconsistent with choices".into()));
        }
        if raw.provenance.iter().filter(|p| **p == Provenance::Gold).count() != 1
            || raw.provenance[raw.gold_index] != Provenance::Gold
        {
            return Err(parse_err("exactly one choice must be gold, at gold_index".into()));
        }
        items.push(McqItem {
            id: raw.id,
            query: parse_tokens(&raw.query).map_err(parse_err)?,
            choices: raw
                .choices
                .iter()
                .map(|c| parse_tokens(c))
                .collect::<std::result::Result<_, _>>()
                .map_err(parse_err)?,
            gold_index: raw.gold_index,
            provenance: raw.provenance,
            fold: raw.fold,
            bucket: raw.bucket,
            task_mode: raw.task_mode,
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Role;

    fn matrix(role: Role, rows: &[Vec<f64>]) -> ScoreMatrix {
        ScoreMatrix::from_rows(role, rows).unwrap()
    }

    fn record(id: &str) -> Record {
        Record {
            id: id.into(),
            source_key: "m".into(),
            query: parse_tokens(&format!("why {id} ?")).unwrap(),
            gold: parse_tokens(&format!("because {id} .")).unwrap(),
            objects: vec![],
            embedding: None,
            task_mode: TaskMode::Qa,
        }
    }

    #[test]
    fn first_round_effective_similarity_is_sim() {
        let sim = matrix(Role::Similarity, &[vec![1.0, 0.3], vec![0.3, 1.0]]);
        let eff = effective_similarity(&sim, &[vec![], vec![]]).unwrap();
        assert_eq!(eff, sim.values);
    }

    #[test]
    fn assigned_response_has_unit_similarity() {
        let sim = matrix(
            Role::Similarity,
            &[vec![1.0, 0.3, 0.2], vec![0.3, 1.0, 0.7], vec![0.2, 0.7, 1.0]],
        );
        let eff = effective_similarity(&sim, &[vec![1], vec![], vec![]]).unwrap();
        assert_eq!(eff[1], 1.0);
        // max(sim[0][2], sim[1][2]) = max(0.2, 0.7)
        assert_eq!(eff[2], 0.7);
        let rel = matrix(Role::Relevance, &vec![vec![0.5; 3]; 3]);
        let w = weight_matrix(&rel, &eff, 0.1).unwrap();
        assert!(w.is_forbidden(0, 1));
        assert!(w.is_forbidden(0, 0));
    }

    #[test]
    fn eq1_scalar_value() {
        let rel = matrix(Role::Relevance, &vec![vec![0.5; 2]; 2]);
        let w = weight_matrix(&rel, &[1.0, 0.5, 0.5, 1.0], 0.1).unwrap();
        match w.get(0, 1) {
            Weight::Allowed(x) => assert!((x - (-0.762_461_898_616_140_5)).abs() < 1e-12, "{x}"),
            Weight::Forbidden => panic!("forbidden"),
        }
    }

    #[test]
    fn near_one_relevance_gives_near_zero_weights() {
        let eps = 1e-6;
        let lambda = 0.3;
        let rel = matrix(Role::Relevance, &vec![vec![1.0 - eps; 3]; 3]);
        let mut eff = vec![eps; 9];
        for i in 0..3 {
            eff[i * 3 + i] = 1.0;
        }
        let w = weight_matrix(&rel, &eff, lambda).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                match w.get(i, j) {
                    Weight::Forbidden => assert_eq!(i, j),
                    Weight::Allowed(x) => assert!(x.abs() <= 2.0 * eps * (1.0 + lambda)),
                }
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let rel = matrix(Role::Relevance, &vec![vec![0.5; 2]; 2]);
        assert!(weight_matrix(&rel, &[0.5; 3], 0.1).is_err());
    }

    #[test]
    fn minimal_bucket_uses_all_other_golds() {
        let records: Vec<Record> = ["a", "b", "c", "d"].iter().map(|s| record(s)).collect();
        let bucket: Vec<&Record> = records.iter().collect();
        let rel = matrix(Role::Relevance, &vec![vec![0.5; 4]; 4]);
        let mut sim_rows = vec![vec![0.2; 4]; 4];
        for (i, row) in sim_rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let sim = matrix(Role::Similarity, &sim_rows);
        let config = MatchConfig::new(TaskMode::Qa, 1);
        let sets = run_rounds(&bucket, &rel, &sim, &config).unwrap();
        for (i, set) in sets.iter().enumerate() {
            let mut sources: Vec<usize> = set.distractors.iter().map(|d| d.source).collect();
            sources.sort();
            let expected: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            assert_eq!(sources, expected);
            let rounds: Vec<usize> = set.distractors.iter().map(|d| d.round).collect();
            assert_eq!(rounds, vec![1, 2, 3]);
        }
    }

    #[test]
    fn bucket_smaller_than_k_plus_one() {
        let records: Vec<Record> = ["a", "b", "c"].iter().map(|s| record(s)).collect();
        let bucket: Vec<&Record> = records.iter().collect();
        let rel = matrix(Role::Relevance, &vec![vec![0.5; 3]; 3]);
        let sim = matrix(Role::Similarity, &vec![vec![1.0; 3]; 3]);
        assert!(run_rounds(&bucket, &rel, &sim, &MatchConfig::new(TaskMode::Qa, 0)).is_err());
    }

    #[test]
    fn export_shuffles_deterministically_and_marks_gold() {
        let records: Vec<Record> = ["a", "b", "c", "d"].iter().map(|s| record(s)).collect();
        let bucket: Vec<&Record> = records.iter().collect();
        let rel = matrix(Role::Relevance, &vec![vec![0.5; 4]; 4]);
        let mut sim_rows = vec![vec![0.2; 4]; 4];
        for (i, row) in sim_rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let sim = matrix(Role::Similarity, &sim_rows);
        let config = MatchConfig::new(TaskMode::Qa, 1);
        let sets = run_rounds(&bucket, &rel, &sim, &config).unwrap();
        let origin = ItemOrigin {
            fold: 0,
            bucket: 0,
            mode: TaskMode::Qa,
        };
        let a = export_mcq(&sets, &bucket, 5, origin).unwrap();
        let b = export_mcq(&sets, &bucket, 5, origin).unwrap();
        assert_eq!(a, b);
        for (item, r) in a.iter().zip(&records) {
            assert_eq!(item.choices.len(), 4);
            assert_eq!(item.choices[item.gold_index], r.gold);
            assert_eq!(item.provenance[item.gold_index], Provenance::Gold);
        }

        let mut buf = Vec::new();
        write_mcq(&mut buf, &a).unwrap();
        assert_eq!(read_mcq(&buf[..]).unwrap(), a);
    }

    #[test]
    fn config_validation() {
        let mut c = MatchConfig::new(TaskMode::Qar, 0);
        assert_eq!(c.lambda, 0.01);
        assert!(c.validate().is_ok());
        c.lambda = 0.0;
        assert!(c.validate().is_err());
        let mut c = MatchConfig::new(TaskMode::Qa, 0);
        assert_eq!(c.lambda, 0.1);
        c.rounds = 0;
        assert!(c.validate().is_err());
    }
}
