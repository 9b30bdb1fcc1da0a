//! Splitting a fold into matching buckets.
//!
//! Records are grouped by the gender of pronouns in their gold response, then
//! by question type (question answering) or by embedding cluster (answer
//! justification). Oversized groups are chunked to the target size, and groups
//! too small to supply a full set of distractors are merged into a sibling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::corpus::{Record, TaskMode, Token};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_TARGET_SIZE: usize = 3000;
pub const KMEANS_MAX_ITERS: usize = 100;

const FEMALE: &[&str] = &["she", "her", "hers", "herself"];
const MALE: &[&str] = &["he", "him", "his", "himself"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pronoun {
    Female,
    Male,
    Neutral,
}

impl Pronoun {
    pub fn as_str(self) -> &'static str {
        match self {
            Pronoun::Female => "female",
            Pronoun::Male => "male",
            Pronoun::Neutral => "neutral",
        }
    }
}

/// Responses with pronouns of both genders count as neutral.
pub fn pronoun_class(response: &[Token]) -> Pronoun {
    let has = |set: &[&str]| {
        response
            .iter()
            .any(|t| matches!(t, Token::Word(w) if set.contains(&w.as_str())))
    };
    match (has(FEMALE), has(MALE)) {
        (true, false) => Pronoun::Female,
        (false, true) => Pronoun::Male,
        _ => Pronoun::Neutral,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Explanation,
    Activity,
    Temporal,
    Mental,
    Role,
    Scene,
    Hypothetical,
    Other,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Explanation => "explanation",
            QuestionType::Activity => "activity",
            QuestionType::Temporal => "temporal",
            QuestionType::Mental => "mental",
            QuestionType::Role => "role",
            QuestionType::Scene => "scene",
            QuestionType::Hypothetical => "hypothetical",
            QuestionType::Other => "other",
        }
    }
}

/// Pattern groups in precedence order. Multi-word patterns match consecutive words.
const QUESTION_PATTERNS: &[(QuestionType, &[&str])] = &[
    (QuestionType::Explanation, &["why", "how come", "how does"]),
    (
        QuestionType::Activity,
        &["doing", "looking", "event", "playing", "preparing"],
    ),
    (
        QuestionType::Temporal,
        &["happened", "before", "after", "earlier", "later", "next"],
    ),
    (
        QuestionType::Mental,
        &["feeling", "thinking", "saying", "love", "upset", "angry"],
    ),
    (
        QuestionType::Role,
        &["relation", "occupation", "strangers", "married"],
    ),
    (QuestionType::Scene, &["where", "time", "near"]),
    (
        QuestionType::Hypothetical,
        &["if", "would", "could", "chance", "might", "may"],
    ),
];

pub fn question_type(question: &[Token]) -> QuestionType {
    let words: Vec<&str> = question
        .iter()
        .map(|t| match t {
            Token::Word(w) => w.as_str(),
            Token::Tag { .. } => "",
        })
        .collect();
    let contains = |pattern: &str| {
        let parts: Vec<&str> = pattern.split(' ').collect();
        words.windows(parts.len()).any(|w| w == parts.as_slice())
    };
    QUESTION_PATTERNS
        .iter()
        .find(|(_, patterns)| patterns.iter().any(|p| contains(p)))
        .map(|(q, _)| *q)
        .unwrap_or(QuestionType::Other)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each point to the mean of its label.
pub fn kmeans_objective(vectors: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dim = vectors.first().map_or(0, Vec::len);
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &l) in vectors.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(v) {
            *s += x;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|x| x / c.max(1) as f64).collect())
        .collect();
    vectors
        .iter()
        .zip(labels)
        .map(|(v, &l)| squared_distance(v, &means[l]))
        .sum()
}

/// Lloyd's k-means with farthest-point initialisation. The first centre is a
/// seeded uniform pick; each further centre is the point farthest from all
/// chosen centres (lowest index on ties). Assignment ties go to the lowest
/// label; an emptied cluster keeps its previous centre.
pub fn cluster_embeddings(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > vectors.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::LengthMismatch(dim, v.len()));
    }

    let mut rng = rng::stream(seed, &["kmeans-init"]);
    let mut centers: Vec<Vec<f64>> = vec![vectors[rng.random_range(0..vectors.len())].clone()];
    let mut nearest: Vec<f64> = vectors
        .iter()
        .map(|v| squared_distance(v, &centers[0]))
        .collect();
    while centers.len() < k {
        let mut far = 0;
        for (i, &d) in nearest.iter().enumerate() {
            if d > nearest[far] {
                far = i;
            }
        }
        let c = vectors[far].clone();
        for (d, v) in nearest.iter_mut().zip(vectors) {
            *d = d.min(squared_distance(v, &c));
        }
        centers.push(c);
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        vectors
            .iter()
            .map(|v| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = squared_distance(v, center);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect()
    };

    let mut labels = assign(&centers);
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let updated = assign(&centers);
        if updated == labels {
            break;
        }
        labels = updated;
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subgroup {
    QuestionType(QuestionType),
    Cluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BucketKey {
    pub pronoun: Pronoun,
    pub subgroup: Subgroup,
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.subgroup {
            Subgroup::QuestionType(q) => write!(f, "{}/{}", self.pronoun.as_str(), q.as_str()),
            Subgroup::Cluster(c) => write!(f, "{}/cluster-{c}", self.pronoun.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bucket<'a> {
    pub fold: usize,
    /// Position of the bucket within its fold.
    pub index: usize,
    pub key: BucketKey,
    /// Chunk number when an oversized group was split.
    pub chunk: usize,
    pub members: Vec<&'a Record>,
}

impl Bucket<'_> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}#{}", self.key, self.chunk)
    }
}

/// Sizes of `count` near-equal chunks covering `len` items, larger chunks first.
pub fn chunk_sizes(len: usize, target_size: usize) -> Vec<usize> {
    let chunks = len.div_ceil(target_size).max(1);
    (0..chunks)
        .map(|c| len / chunks + usize::from(c < len % chunks))
        .collect()
}

/// Bucket one fold. `distractors` is the number of matching rounds K; no
/// emitted bucket has fewer than K + 1 members.
pub fn build_buckets<'a>(
    fold_records: &[&'a Record],
    fold: usize,
    mode: TaskMode,
    target_size: usize,
    distractors: usize,
    seed: u64,
) -> Result<Vec<Bucket<'a>>> {
    let min_size = distractors + 1;
    if target_size < min_size {
        return Err(Error::InvalidArgument(format!(
            "target size {target_size} is below K + 1 = {min_size}"
        )));
    }
    if fold_records.len() < min_size {
        return Err(Error::FoldTooSmall {
            fold,
            size: fold_records.len(),
            needed: min_size,
        });
    }

    let mut sorted: Vec<&Record> = fold_records.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut by_pronoun: BTreeMap<Pronoun, Vec<&Record>> = BTreeMap::new();
    for r in sorted {
        by_pronoun.entry(pronoun_class(&r.gold)).or_default().push(r);
    }

    let fold_label = fold.to_string();
    let mut groups: BTreeMap<BucketKey, Vec<&Record>> = BTreeMap::new();
    for (pronoun, members) in by_pronoun {
        match mode {
            TaskMode::Qa => {
                for r in members {
                    let key = BucketKey {
                        pronoun,
                        subgroup: Subgroup::QuestionType(question_type(&r.query)),
                    };
                    groups.entry(key).or_default().push(r);
                }
            }
            TaskMode::Qar => {
                let missing: Vec<String> = members
                    .iter()
                    .filter(|r| r.embedding.is_none())
                    .map(|r| r.id.clone())
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::MissingEmbeddings(missing));
                }
                let vectors: Vec<Vec<f64>> = members
                    .iter()
                    .filter_map(|r| r.embedding.clone())
                    .collect();
                let k = members.len().div_ceil(target_size);
                let cluster_seed = rng::key_of(&format!("{seed}/{fold}/{}", pronoun.as_str()));
                let labels = cluster_embeddings(&vectors, k, cluster_seed)?;
                for (r, label) in members.into_iter().zip(labels) {
                    let key = BucketKey {
                        pronoun,
                        subgroup: Subgroup::Cluster(label),
                    };
                    groups.entry(key).or_default().push(r);
                }
            }
        }
    }

    let mut buckets: Vec<Bucket<'a>> = Vec::new();
    for (key, mut members) in groups {
        if members.len() > target_size {
            let key_label = key.to_string();
            members.shuffle(&mut rng::stream(seed, &["bucket-split", &fold_label, &key_label]));
        }
        let mut rest = members.as_slice();
        for (chunk, size) in chunk_sizes(members.len(), target_size).into_iter().enumerate() {
            let (head, tail) = rest.split_at(size);
            rest = tail;
            let mut part = head.to_vec();
            part.sort_by(|a, b| a.id.cmp(&b.id));
            buckets.push(Bucket {
                fold,
                index: 0,
                key,
                chunk,
                members: part,
            });
        }
    }

    // merge undersized buckets, smallest first, into the largest sibling
    while let Some(small) = (0..buckets.len())
        .filter(|&b| buckets[b].len() < min_size)
        .min_by_key(|&b| (buckets[b].len(), b))
    {
        let pronoun = buckets[small].key.pronoun;
        let largest_where = |same_pronoun: bool| {
            (0..buckets.len())
                .filter(|&b| b != small)
                .filter(|&b| !same_pronoun || buckets[b].key.pronoun == pronoun)
                .max_by_key(|&b| (buckets[b].len(), std::cmp::Reverse(b)))
        };
        let Some(into) = largest_where(true).or_else(|| largest_where(false)) else {
            return Err(Error::FoldTooSmall {
                fold,
                size: buckets[small].len(),
                needed: min_size,
            });
        };
        let moved = buckets.remove(small);
        let into = if into > small { into - 1 } else { into };
        buckets[into].members.extend(moved.members);
        buckets[into].members.sort_by(|a, b| a.id.cmp(&b.id));
    }

    for (i, b) in buckets.iter_mut().enumerate() {
        b.index = i;
    }
    Ok(buckets)
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    fold: usize,
    bucket: usize,
    key: String,
    chunk: usize,
    members: Vec<&'a str>,
}

/// One audit line per bucket: fold, bucket index, key, member ids.
pub fn write_bucket_manifest<W: Write>(out: &mut W, buckets: &[Bucket<'_>]) -> Result<()> {
    for b in buckets {
        let line = ManifestLine {
            fold: b.fold,
            bucket: b.index,
            key: b.key.to_string(),
            chunk: b.chunk,
            members: b.members.iter().map(|r| r.id.as_str()).collect(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_tokens;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    fn toks(s: &str) -> Vec<Token> {
        parse_tokens(s).unwrap()
    }

    fn rec(id: usize, query: &str, gold: &str) -> Record {
        Record {
            id: format!("r{id:05}"),
            source_key: "m".into(),
            query: toks(query),
            gold: toks(gold),
            objects: vec!["person".into()],
            embedding: None,
            task_mode: TaskMode::Qa,
        }
    }

    #[test]
    fn pronoun_examples() {
        assert_eq!(pronoun_class(&toks("she is reading .")), Pronoun::Female);
        assert_eq!(pronoun_class(&toks("he is reading .")), Pronoun::Male);
        assert_eq!(pronoun_class(&toks("the dog barks .")), Pronoun::Neutral);
        assert_eq!(pronoun_class(&toks("he hands her the book .")), Pronoun::Neutral);
    }

    #[test]
    fn question_type_examples() {
        assert_eq!(question_type(&toks("why is [person:1] pointing ?")), QuestionType::Explanation);
        assert_eq!(question_type(&toks("what happened before this ?")), QuestionType::Temporal);
        assert_eq!(question_type(&toks("where is the cup ?")), QuestionType::Scene);
        assert_eq!(question_type(&toks("how come she left ?")), QuestionType::Explanation);
        assert_eq!(question_type(&toks("how old is he ?")), QuestionType::Other);
        // precedence: activity is listed before scene
        assert_eq!(question_type(&toks("where is he looking ?")), QuestionType::Activity);
    }

    #[test]
    fn kmeans_single_cluster() {
        let v: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 1.0]).collect();
        assert_eq!(cluster_embeddings(&v, 1, 3).unwrap(), vec![0; 7]);
    }

    #[test]
    fn kmeans_separated_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = Vec::new();
        for c in [0.0, 100.0] {
            for _ in 0..20 {
                v.push(vec![c + rng.random::<f64>(), c + rng.random::<f64>()]);
            }
        }
        let labels = cluster_embeddings(&v, 2, 1).unwrap();
        assert!(labels[..20].iter().all(|&l| l == labels[0]));
        assert!(labels[20..].iter().all(|&l| l == labels[20]));
        assert_ne!(labels[0], labels[20]);
    }

    #[test]
    fn kmeans_errors() {
        assert!(matches!(cluster_embeddings(&[], 1, 0), Err(Error::EmptyInput)));
        assert!(cluster_embeddings(&[vec![1.0]], 2, 0).is_err());
        assert!(cluster_embeddings(&[vec![1.0], vec![1.0, 2.0]], 1, 0).is_err());
    }

    #[test]
    fn chunking_rule() {
        assert_eq!(chunk_sizes(6500, 3000), vec![2167, 2167, 2166]);
        assert_eq!(chunk_sizes(10, 3000), vec![10]);
        assert_eq!(chunk_sizes(6000, 3000), vec![3000, 3000]);
    }

    #[test]
    fn small_fold_one_bucket() {
        let rs: Vec<Record> = (0..10).map(|i| rec(i, "why is it ?", "because .")).collect();
        let refs: Vec<&Record> = rs.iter().collect();
        let b = build_buckets(&refs, 0, TaskMode::Qa, 3000, 3, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 10);
    }

    #[test]
    fn oversized_group_is_chunked() {
        let rs: Vec<Record> = (0..6500).map(|i| rec(i, "what is he doing ?", "running .")).collect();
        let refs: Vec<&Record> = rs.iter().collect();
        let b = build_buckets(&refs, 0, TaskMode::Qa, 3000, 3, 4).unwrap();
        let mut sizes: Vec<usize> = b.iter().map(Bucket::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2166, 2167, 2167]);
    }

    #[test]
    fn tiny_group_merges_into_sibling() {
        let mut rs: Vec<Record> = (0..10).map(|i| rec(i, "why is it ?", "because .")).collect();
        rs.push(rec(10, "where is it ?", "outside ."));
        rs.push(rec(11, "where is it ?", "inside ."));
        let refs: Vec<&Record> = rs.iter().collect();
        let b = build_buckets(&refs, 0, TaskMode::Qa, 3000, 3, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 12);
        assert!(b.iter().all(|b| b.len() >= 4));
    }

    #[test]
    fn fold_too_small() {
        let rs: Vec<Record> = (0..3).map(|i| rec(i, "why ?", "because .")).collect();
        let refs: Vec<&Record> = rs.iter().collect();
        assert!(matches!(
            build_buckets(&refs, 2, TaskMode::Qa, 3000, 3, 0),
            Err(Error::FoldTooSmall { fold: 2, size: 3, needed: 4 })
        ));
    }

    #[test]
    fn qar_requires_embeddings() {
        let rs: Vec<Record> = (0..5).map(|i| rec(i, "why ?", "because .")).collect();
        let refs: Vec<&Record> = rs.iter().collect();
        assert!(matches!(
            build_buckets(&refs, 0, TaskMode::Qar, 3000, 3, 0),
            Err(Error::MissingEmbeddings(ids)) if ids.len() == 5
        ));
    }
}
