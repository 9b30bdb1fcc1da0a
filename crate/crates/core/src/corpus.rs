//! Annotated records, their line-delimited JSON form, validation, and
//! source-disjoint fold splitting.
//!
//! Token streams are written as whitespace-separated text in which detection
//! tags appear inline as `[class:index]`, e.g. `why is [person:1] running ?`.
//! Tag indices are 1-based positions into the record's object list.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One element of a query or response: a plain word or a pointer into the
/// record's object list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    /// Lowercased word form.
    Word(String),
    /// Detection tag; `index` is 1-based into `Record::objects`.
    Tag { index: usize, class: String },
}

impl Token {
    pub fn word(text: impl Into<String>) -> Self {
        Token::Word(text.into().to_lowercase())
    }

    pub fn tag(class: impl Into<String>, index: usize) -> Self {
        Token::Tag {
            index,
            class: class.into(),
        }
    }

    pub fn is_tag(&self) -> bool {
        matches!(self, Token::Tag { .. })
    }

    /// The word form, or the class label for tags.
    pub fn surface(&self) -> &str {
        match self {
            Token::Word(w) => w,
            Token::Tag { class, .. } => class,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Word(w) => f.write_str(w),
            Token::Tag { index, class } => write!(f, "[{class}:{index}]"),
        }
    }
}

fn parse_token(piece: &str) -> std::result::Result<Token, String> {
    if let Some(inner) = piece.strip_prefix('[').and_then(|p| p.strip_suffix(']')) {
        if let Some((class, index)) = inner.rsplit_once(':') {
            if !class.is_empty() && !index.is_empty() && index.bytes().all(|b| b.is_ascii_digit()) {
                let index = index
                    .parse::<usize>()
                    .map_err(|e| format!("bad tag index in {piece:?}: {e}"))?;
                return Ok(Token::tag(class, index));
            }
        }
    }
    Ok(Token::word(piece))
}

/// Parse a whitespace-separated token stream with inline `[class:index]` tags.
pub fn parse_tokens(text: &str) -> std::result::Result<Vec<Token>, String> {
    text.split_whitespace().map(parse_token).collect()
}

pub fn tokens_to_string(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.to_string());
    }
    out
}

/// Text with every tag replaced by its class label. Two responses that differ
/// only in which object of a class they point at have the same canonical text.
pub fn canonical_text(tokens: &[Token]) -> String {
    tokens.iter().map(Token::surface).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    /// Question answering: the query is a question, responses are answers.
    Qa,
    /// Answer justification: the query is question + answer, responses are rationales.
    Qar,
}

impl TaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::Qa => "qa",
            TaskMode::Qar => "qar",
        }
    }
}

impl std::str::FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qa" => Ok(TaskMode::Qa),
            "qar" => Ok(TaskMode::Qar),
            other => Err(Error::InvalidArgument(format!("unknown task mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    /// Grouping unit for fold splitting (a movie, a document, ...).
    pub source_key: String,
    pub query: Vec<Token>,
    pub gold: Vec<Token>,
    /// Object class labels; tag `[c:i]` refers to `objects[i - 1]`.
    pub objects: Vec<String>,
    pub embedding: Option<Vec<f64>>,
    pub task_mode: TaskMode,
}

impl Record {
    /// Class label of the object a 1-based tag index points at.
    pub fn object_class(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.objects.get(i))
            .map(String::as_str)
    }
}

/// The on-disk shape of one record line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    source_key: String,
    query: String,
    gold: String,
    objects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    task_mode: TaskMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fold: Option<usize>,
}

impl RecordLine {
    fn from_record(r: &Record, fold: Option<usize>) -> Self {
        RecordLine {
            id: r.id.clone(),
            source_key: r.source_key.clone(),
            query: tokens_to_string(&r.query),
            gold: tokens_to_string(&r.gold),
            objects: r.objects.clone(),
            embedding: r.embedding.clone(),
            task_mode: r.task_mode,
            fold,
        }
    }

    fn into_record(self) -> std::result::Result<Record, String> {
        Ok(Record {
            query: parse_tokens(&self.query).map_err(|e| format!("query: {e}"))?,
            gold: parse_tokens(&self.gold).map_err(|e| format!("gold: {e}"))?,
            id: self.id,
            source_key: self.source_key,
            objects: self.objects,
            embedding: self.embedding,
            task_mode: self.task_mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &'static str, rule: impl Into<String>) {
        self.violations.push(Violation {
            field,
            rule: rule.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Check every record-level invariant. Violations are returned as data.
pub fn validate_record(record: &Record) -> ValidationReport {
    let mut report = ValidationReport::default();
    if record.id.is_empty() {
        report.push("id", "id empty");
    }
    if record.query.is_empty() {
        report.push("query", "query empty");
    }
    if record.gold.is_empty() {
        report.push("gold", "gold empty");
    }
    for (field, tokens) in [("query", &record.query), ("gold", &record.gold)] {
        for token in tokens {
            if let Token::Tag { index, class } = token {
                match record.object_class(*index) {
                    None => report.push(
                        field,
                        format!(
                            "dangling tag [{class}:{index}]: {} objects",
                            record.objects.len()
                        ),
                    ),
                    Some(expected) if expected != class => report.push(
                        field,
                        format!("class mismatch [{class}:{index}]: object is {expected:?}"),
                    ),
                    Some(_) => {}
                }
            }
        }
    }
    if let Some(e) = &record.embedding {
        if e.iter().any(|x| !x.is_finite()) {
            report.push("embedding", "non-finite embedding value");
        }
    }
    report
}

/// A record together with the 1-based line it was read from.
#[derive(Debug, Clone)]
pub struct SourcedRecord {
    pub line: usize,
    pub record: Record,
}

/// Parse every non-blank line without checking record invariants. Used by
/// validation reporting, which wants to see all violations instead of the first.
pub fn parse_records_unchecked<R: BufRead>(input: R) -> Result<Vec<SourcedRecord>> {
    let mut lines = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let parsed: Vec<Result<SourcedRecord>> = lines
        .par_iter()
        .map(|(line_no, text)| {
            let raw: RecordLine = serde_json::from_str(text).map_err(|e| Error::Parse {
                line: *line_no,
                message: e.to_string(),
            })?;
            let record = raw.into_record().map_err(|message| Error::Parse {
                line: *line_no,
                message,
            })?;
            Ok(SourcedRecord {
                line: *line_no,
                record,
            })
        })
        .collect();
    parsed.into_iter().collect()
}

/// Parse a line-delimited corpus. Every returned record is valid, ids are
/// unique, and input order is preserved.
pub fn parse_records<R: BufRead>(input: R) -> Result<Vec<Record>> {
    let sourced = parse_records_unchecked(input)?;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for s in &sourced {
        let report = validate_record(&s.record);
        if !report.is_ok() {
            return Err(Error::InvalidRecord {
                line: s.line,
                id: s.record.id.clone(),
                violations: report.to_string(),
            });
        }
        if let Some(first) = seen.insert(&s.record.id, s.line) {
            return Err(Error::DuplicateId {
                id: s.record.id.clone(),
                first,
                second: s.line,
            });
        }
    }
    Ok(sourced.into_iter().map(|s| s.record).collect())
}

pub fn write_records<W: Write>(out: &mut W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, &RecordLine::from_record(r, None))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Write records with their fold index attached.
pub fn write_records_with_folds<W: Write>(
    out: &mut W,
    records: &[Record],
    plan: &FoldPlan,
) -> Result<()> {
    for r in records {
        let line = RecordLine::from_record(r, plan.fold_of(&r.source_key));
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub const DEFAULT_FOLDS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldRole {
    Train,
    Validation,
    Test,
}

/// Assignment of whole source groups to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, source_key: &str) -> Option<usize> {
        self.assignment.get(source_key).copied()
    }

    /// Record count per fold.
    pub fn fold_sizes(&self, records: &[Record]) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for r in records {
            if let Some(f) = self.fold_of(&r.source_key) {
                sizes[f] += 1;
            }
        }
        sizes
    }

    /// Records of each fold, input order preserved within a fold.
    pub fn partition<'a>(&self, records: &'a [Record]) -> Vec<Vec<&'a Record>> {
        let mut folds = vec![Vec::new(); self.n_folds];
        for r in records {
            if let Some(f) = self.fold_of(&r.source_key) {
                folds[f].push(r);
            }
        }
        folds
    }

    /// The two highest fold indices are held out (validation, then test)
    /// whenever there are at least three folds.
    pub fn role(&self, fold: usize) -> FoldRole {
        if self.n_folds >= 3 && fold == self.n_folds - 1 {
            FoldRole::Test
        } else if self.n_folds >= 3 && fold == self.n_folds - 2 {
            FoldRole::Validation
        } else {
            FoldRole::Train
        }
    }
}

/// Greedy balanced split by source key: groups in descending size order, each
/// into the currently smallest fold (lowest index on ties). Equal-size groups
/// are ordered by a seeded shuffle.
pub fn split_folds(records: &[Record], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(Error::InvalidArgument("n_folds must be at least 1".into()));
    }
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *groups.entry(r.source_key.as_str()).or_default() += 1;
    }
    if groups.len() < n_folds {
        return Err(Error::TooFewSourceKeys {
            needed: n_folds,
            found: groups.len(),
        });
    }

    let mut order: Vec<(&str, usize)> = groups.into_iter().collect();
    order.shuffle(&mut rng::stream(seed, &["folds"]));
    order.sort_by_key(|g| std::cmp::Reverse(g.1));

    let mut sizes = vec![0usize; n_folds];
    let mut assignment = BTreeMap::new();
    for (key, size) in order {
        let fold = (0..n_folds).min_by_key(|&f| (sizes[f], f)).unwrap_or(0);
        sizes[fold] += size;
        assignment.insert(key.to_string(), fold);
    }
    Ok(FoldPlan {
        n_folds,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, key: &str, query: &str, gold: &str, objects: &[&str]) -> String {
        serde_json::json!({
            "id": id,
            "source_key": key,
            "query": query,
            "gold": gold,
            "objects": objects,
            "task_mode": "qa",
        })
        .to_string()
    }

    pub(crate) fn rec(id: &str, key: &str) -> Record {
        Record {
            id: id.into(),
            source_key: key.into(),
            query: parse_tokens("what is [person:1] doing ?").unwrap(),
            gold: parse_tokens("[person:1] is reading .").unwrap(),
            objects: vec!["person".into()],
            embedding: None,
            task_mode: TaskMode::Qa,
        }
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        assert!(parse_records("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parses_inline_tags() {
        let text = line("a", "m1", "why is [person:1] running ?", "[person:1] is late .", &["person"]);
        let records = parse_records(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].query[2], Token::tag("person", 1));
        assert_eq!(records[0].query[0], Token::word("why"));
    }

    #[test]
    fn words_are_lowercased_and_brackets_without_index_are_words() {
        let toks = parse_tokens("Why [this] [a:b] [car:2]").unwrap();
        assert_eq!(toks[0], Token::word("why"));
        assert_eq!(toks[1], Token::word("[this]"));
        assert_eq!(toks[2], Token::word("[a:b]"));
        assert_eq!(toks[3], Token::tag("car", 2));
    }

    #[test]
    fn dangling_tag_is_an_error() {
        let text = line("a", "m1", "why ?", "[person:5] left .", &["person", "car"]);
        let err = parse_records(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("dangling tag"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!(
            "{}\n\n{{not json\n",
            line("a", "m1", "why ?", "because .", &[])
        );
        match parse_records(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let a = line("a", "m1", "why ?", "because .", &[]);
        let text = format!("{a}\n{}\n{a}\n", line("b", "m1", "why ?", "because .", &[]));
        match parse_records(text.as_bytes()) {
            Err(Error::DuplicateId { id, first, second }) => {
                assert_eq!((id.as_str(), first, second), ("a", 1, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_rules() {
        let mut r = rec("a", "m");
        assert!(validate_record(&r).is_ok());

        r.gold.clear();
        let report = validate_record(&r);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, "gold empty");

        let mut r = rec("a", "m");
        r.gold = vec![Token::tag("car", 1)];
        let report = validate_record(&r);
        assert!(report.violations[0].rule.starts_with("class mismatch"));
        assert_eq!(report.violations[0].field, "gold");
    }

    #[test]
    fn tag_index_zero_is_dangling() {
        let mut r = rec("a", "m");
        r.query = vec![Token::tag("person", 0)];
        assert!(validate_record(&r).violations[0].rule.starts_with("dangling tag"));
    }

    #[test]
    fn folds_one_key_each_when_balanced() {
        let records: Vec<Record> = (0..11)
            .flat_map(|k| (0..3).map(move |i| rec(&format!("{k}-{i}"), &format!("k{k}"))))
            .collect();
        let plan = split_folds(&records, 11, 7).unwrap();
        let mut sizes = plan.fold_sizes(&records);
        sizes.sort();
        assert_eq!(sizes, vec![3; 11]);
    }

    #[test]
    fn big_group_is_atomic() {
        let mut records: Vec<Record> = (0..100).map(|i| rec(&format!("big{i}"), "big")).collect();
        records.push(rec("s", "small"));
        let plan = split_folds(&records, 2, 0).unwrap();
        assert_ne!(plan.fold_of("big"), plan.fold_of("small"));
        let mut sizes = plan.fold_sizes(&records);
        sizes.sort();
        assert_eq!(sizes, vec![1, 100]);
    }

    #[test]
    fn too_few_keys() {
        let records = vec![rec("a", "k")];
        assert!(matches!(
            split_folds(&records, 2, 0),
            Err(Error::TooFewSourceKeys { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn holdout_roles_are_the_two_highest_folds() {
        let plan = FoldPlan {
            n_folds: 11,
            assignment: BTreeMap::new(),
        };
        assert_eq!(plan.role(10), FoldRole::Test);
        assert_eq!(plan.role(9), FoldRole::Validation);
        assert_eq!(plan.role(0), FoldRole::Train);
    }
}
