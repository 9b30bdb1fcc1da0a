//! Relevance and similarity scoring over a bucket.
//!
//! Scorers are pluggable: two simple deterministic built-ins (content-word
//! overlap and embedding cosine) plus externally computed matrices read from
//! disk. Everything leaving this module is clamped to `[eps, 1 - eps]`, except
//! similarity diagonals which are exactly 1.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Record, Token};
use crate::error::{Error, Result};
use crate::remap::{candidate_response, RemapPolicy};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Largest matrix accepted in the plain-text format.
pub const TSV_MAX_N: usize = 1000;

const PROB_SLACK: f64 = 1e-9;

/// Clamp a probability into `[eps, 1 - eps]`.
pub fn clamp_prob(p: f64, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
        return Err(Error::NotAProbability(p));
    }
    Ok(p.max(eps).min(1.0 - eps))
}

pub fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::BadEpsilon(eps))
    }
}

/// Fixed stopword list for the overlap scorer. Includes bare punctuation.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "to", "in", "on", "at", "for", "with", "by",
    "from", "as", "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did",
    "has", "have", "had", "it", "its", "this", "that", "these", "those", "there", "their",
    "they", "them", "he", "him", "his", "she", "her", "hers", "i", "me", "my", "we", "us",
    "our", "you", "your", "so", "than", "then", "too", "very", "just", "not", "no", "what",
    "which", "who", "whom", "will", "would", "can", "could", "should", "about", "into", "up",
    "down", "out", "over", "some", "any", ".", ",", "?", "!", ";", ":", "'", "\"", "'s",
];

/// Content terms: lowercased words minus stopwords, tags mapped to their class.
pub fn content(tokens: &[Token]) -> BTreeSet<&str> {
    tokens
        .iter()
        .filter_map(|t| match t {
            Token::Tag { class, .. } => Some(class.as_str()),
            Token::Word(w) if STOPWORDS.contains(&w.as_str()) => None,
            Token::Word(w) => Some(w.as_str()),
        })
        .collect()
}

fn overlap_of_sets(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let shared = a.intersection(b).count() as f64;
    shared / ((a.len() * b.len()) as f64).sqrt()
}

/// Cosine-normalised content overlap between a query and a response, clamped.
/// Sequences with no content terms score `eps`.
pub fn relevance_overlap(query: &[Token], response: &[Token], eps: f64) -> f64 {
    let raw = overlap_of_sets(&content(query), &content(response));
    raw.max(eps).min(1.0 - eps)
}

/// `(cos(u, v) + 1) / 2`, clamped.
pub fn similarity_cosine(u: &[f64], v: &[f64], eps: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let cos = (dot / (nu * nv)).clamp(-1.0, 1.0);
    clamp_prob((cos + 1.0) / 2.0, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Relevance,
    Similarity,
    /// Directed entailment probabilities; symmetrised into similarity on use.
    Entailment,
}

/// Dense row-major `n x n` matrix of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub role: Role,
    pub n: usize,
    pub values: Vec<f64>,
    /// Record ids labelling rows and columns; empty when unlabelled.
    pub ids: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(role: Role, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        Ok(ScoreMatrix {
            role,
            n,
            values,
            ids: Vec::new(),
        })
    }

    pub fn from_rows(role: Role, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    row,
                    cols: r.len(),
                });
            }
        }
        Self::new(role, n, rows.concat())
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                got: ids.len(),
            });
        }
        self.ids = ids;
        Ok(self)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Sub-matrix over the given record ids, in that order.
    pub fn select(&self, ids: &[&str]) -> Result<ScoreMatrix> {
        if self.ids.is_empty() {
            if ids.len() != self.n {
                return Err(Error::ShapeMismatch {
                    expected: ids.len(),
                    got: self.n,
                });
            }
            return Ok(ScoreMatrix {
                ids: ids.iter().map(|s| s.to_string()).collect(),
                ..self.clone()
            });
        }
        let position: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| {
                position
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::UnknownMatrixId(id.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(idx.len() * idx.len());
        for &i in &idx {
            values.extend(idx.iter().map(|&j| self.get(i, j)));
        }
        Ok(ScoreMatrix {
            role: self.role,
            n: idx.len(),
            values,
            ids: ids.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn clamped(mut self, eps: f64) -> Result<Self> {
        for v in &mut self.values {
            *v = clamp_prob(*v, eps)?;
        }
        Ok(self)
    }

    fn set_unit_diagonal(&mut self) {
        for i in 0..self.n {
            self.values[i * self.n + i] = 1.0;
        }
    }
}

/// Two-way maximum of directed entailment probabilities; diagonal set to 1.
pub fn symmetrize_entailment(directed: &[Vec<f64>]) -> Result<ScoreMatrix> {
    let m = ScoreMatrix::from_rows(Role::Entailment, directed)?;
    symmetrize_matrix(&m)
}

fn symmetrize_matrix(m: &ScoreMatrix) -> Result<ScoreMatrix> {
    if let Some(&bad) = m
        .values
        .iter()
        .find(|p| !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(*p))
    {
        return Err(Error::NotAProbability(bad));
    }
    let n = m.n;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = if i == j {
                1.0
            } else {
                m.get(i, j).max(m.get(j, i))
            };
        }
    }
    Ok(ScoreMatrix {
        role: Role::Similarity,
        n,
        values,
        ids: m.ids.clone(),
    })
}

#[derive(Debug, Clone)]
pub enum ScorerKind {
    /// Content-word overlap ([`relevance_overlap`]).
    Overlap,
    /// Cosine of the records' embedding vectors ([`similarity_cosine`]).
    EmbeddingCosine,
    /// A precomputed matrix covering (at least) the bucket's record ids.
    External(Arc<ScoreMatrix>),
}

#[derive(Debug, Clone)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    pub epsilon: f64,
}

impl ScorerSpec {
    pub fn overlap(epsilon: f64) -> Self {
        ScorerSpec {
            kind: ScorerKind::Overlap,
            epsilon,
        }
    }

    pub fn embedding_cosine(epsilon: f64) -> Self {
        ScorerSpec {
            kind: ScorerKind::EmbeddingCosine,
            epsilon,
        }
    }

    pub fn external(matrix: ScoreMatrix, epsilon: f64) -> Self {
        ScorerSpec {
            kind: ScorerKind::External(Arc::new(matrix)),
            epsilon,
        }
    }
}

/// Relevance and similarity scorers used together.
#[derive(Debug, Clone)]
pub struct ScorerPair {
    pub relevance: ScorerSpec,
    pub similarity: ScorerSpec,
}

impl ScorerPair {
    pub fn overlap(epsilon: f64) -> Self {
        ScorerPair {
            relevance: ScorerSpec::overlap(epsilon),
            similarity: ScorerSpec::overlap(epsilon),
        }
    }
}

fn embeddings<'a>(bucket: &[&'a Record]) -> Result<Vec<&'a [f64]>> {
    let missing: Vec<String> = bucket
        .iter()
        .filter(|r| r.embedding.is_none())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    Ok(bucket
        .iter()
        .filter_map(|r| r.embedding.as_deref())
        .collect())
}

fn external_for(bucket: &[&Record], m: &ScoreMatrix) -> Result<ScoreMatrix> {
    let ids: Vec<&str> = bucket.iter().map(|r| r.id.as_str()).collect();
    m.select(&ids)
}

fn cosine_matrix(bucket: &[&Record], role: Role, eps: f64) -> Result<ScoreMatrix> {
    let vectors = embeddings(bucket)?;
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| similarity_cosine(vectors[i], vectors[j], eps))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    ScoreMatrix::new(role, n, rows.concat())
}

/// Relevance of query `i` against every candidate response `j`, where the
/// candidate is gold `j` with its tags remapped onto record `i`.
pub fn relevance_matrix(
    bucket: &[&Record],
    spec: &ScorerSpec,
    remap: &RemapPolicy,
) -> Result<ScoreMatrix> {
    check_epsilon(spec.epsilon)?;
    let eps = spec.epsilon;
    let n = bucket.len();
    let m = match &spec.kind {
        ScorerKind::Overlap => {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let query = content(&bucket[i].query);
                    (0..n)
                        .map(|j| {
                            let response = candidate_response(bucket, i, j, remap);
                            let raw = overlap_of_sets(&query, &content(&response));
                            raw.max(eps).min(1.0 - eps)
                        })
                        .collect()
                })
                .collect();
            ScoreMatrix::new(Role::Relevance, n, rows.concat())?
        }
        ScorerKind::EmbeddingCosine => cosine_matrix(bucket, Role::Relevance, eps)?,
        ScorerKind::External(m) => external_for(bucket, m)?.clamped(eps)?,
    };
    Ok(ScoreMatrix {
        role: Role::Relevance,
        ids: bucket.iter().map(|r| r.id.clone()).collect(),
        ..m
    })
}

/// Pairwise similarity between gold responses. Symmetric, unit diagonal.
pub fn similarity_matrix(bucket: &[&Record], spec: &ScorerSpec) -> Result<ScoreMatrix> {
    check_epsilon(spec.epsilon)?;
    let eps = spec.epsilon;
    let n = bucket.len();
    let mut m = match &spec.kind {
        ScorerKind::Overlap => {
            let sets: Vec<BTreeSet<&str>> = bucket.iter().map(|r| content(&r.gold)).collect();
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..n)
                        .map(|j| overlap_of_sets(&sets[i], &sets[j]).max(eps).min(1.0 - eps))
                        .collect()
                })
                .collect();
            ScoreMatrix::new(Role::Similarity, n, rows.concat())?
        }
        ScorerKind::EmbeddingCosine => cosine_matrix(bucket, Role::Similarity, eps)?,
        ScorerKind::External(m) => {
            let sub = external_for(bucket, m)?;
            let sub = if m.role == Role::Entailment {
                symmetrize_matrix(&sub)?
            } else {
                sub
            };
            sub.clamped(eps)?
        }
    };
    m.set_unit_diagonal();
    m.role = Role::Similarity;
    m.ids = bucket.iter().map(|r| r.id.clone()).collect();
    Ok(m)
}

/// All-pairs relevance and similarity for one bucket.
pub fn score_bucket(
    bucket: &[&Record],
    scorers: &ScorerPair,
    remap: &RemapPolicy,
) -> Result<(ScoreMatrix, ScoreMatrix)> {
    if bucket.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((
        relevance_matrix(bucket, &scorers.relevance, remap)?,
        similarity_matrix(bucket, &scorers.similarity)?,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    role: Role,
    n: usize,
    dtype: String,
    layout: String,
    ids: Vec<String>,
}

/// Write the binary form: one JSON header line, then `n * n` little-endian
/// `f32` values in row-major order.
pub fn write_matrix_binary<W: Write>(out: &mut W, m: &ScoreMatrix) -> Result<()> {
    let header = MatrixHeader {
        role: m.role,
        n: m.n,
        dtype: "float32".into(),
        layout: "row-major".into(),
        ids: m.ids.clone(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(m.values.len() * 4);
    for &v in &m.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Write the plain-text form: a header row `role<TAB>id_0<TAB>...`, then one
/// row per record, `id_i<TAB>v_i0<TAB>...`.
pub fn write_matrix_tsv<W: Write>(out: &mut W, m: &ScoreMatrix) -> Result<()> {
    if m.n > TSV_MAX_N {
        return Err(Error::MatrixFormat(format!(
            "TSV form is limited to n <= {TSV_MAX_N}"
        )));
    }
    let ids: Vec<String> = if m.ids.is_empty() {
        (0..m.n).map(|i| i.to_string()).collect()
    } else {
        m.ids.clone()
    };
    let role = serde_json::to_value(m.role)?;
    writeln!(out, "{}\t{}", role.as_str().unwrap_or("relevance"), ids.join("\t"))?;
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{id}\t{}", row.join("\t"))?;
    }
    Ok(())
}

/// Read either format; a leading `{` selects the binary form.
pub fn read_matrix<R: BufRead>(mut input: R) -> Result<ScoreMatrix> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_start().starts_with('{') {
        read_binary_body(&first, input)
    } else {
        read_tsv_body(&first, input)
    }
}

fn read_binary_body<R: Read>(header_line: &str, mut input: R) -> Result<ScoreMatrix> {
    let header: MatrixHeader = serde_json::from_str(header_line.trim())
        .map_err(|e| Error::MatrixFormat(format!("header: {e}")))?;
    if header.dtype != "float32" || header.layout != "row-major" {
        return Err(Error::MatrixFormat(format!(
            "unsupported dtype/layout {}/{}",
            header.dtype, header.layout
        )));
    }
    let n = header.n;
    if !header.ids.is_empty() && header.ids.len() != n {
        return Err(Error::MatrixFormat(format!(
            "{} ids for n = {n}",
            header.ids.len()
        )));
    }
    let mut bytes = vec![0u8; n * n * 4];
    input
        .read_exact(&mut bytes)
        .map_err(|e| Error::MatrixFormat(format!("expected {} value bytes: {e}", n * n * 4)))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::MatrixFormat("trailing bytes after matrix".into()));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(ScoreMatrix {
        role: header.role,
        n,
        values,
        ids: header.ids,
    })
}

fn read_tsv_body<R: BufRead>(header_line: &str, input: R) -> Result<ScoreMatrix> {
    let mut head = header_line.trim_end_matches(['\n', '\r']).split('\t');
    let role: Role = serde_json::from_value(serde_json::Value::String(
        head.next().unwrap_or_default().to_string(),
    ))
    .map_err(|e| Error::MatrixFormat(format!("role: {e}")))?;
    let ids: Vec<String> = head.map(str::to_string).collect();
    let n = ids.len();
    if n > TSV_MAX_N {
        return Err(Error::MatrixFormat(format!(
            "TSV form is limited to n <= {TSV_MAX_N}, got {n}"
        )));
    }
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        if rows >= n || id != ids[rows] {
            return Err(Error::MatrixFormat(format!(
                "row {}: unexpected row label {id:?}",
                i + 2
            )));
        }
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::MatrixFormat(format!("row {}: {e}", i + 2)))
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                row: rows,
                cols: row.len(),
            });
        }
        values.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: rows,
        });
    }
    Ok(ScoreMatrix {
        role,
        n,
        values,
        ids,
    })
}
