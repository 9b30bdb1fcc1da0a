//! Seeded synthetic corpora for examples, tests and benchmarks.
//!
//! Records fall into topics. A query names a person and three topic words; its
//! gold response repeats some of them, adds other words of the same topic, and
//! ends with a marker unique to the record. Responses of the same topic are
//! therefore both relevant to each other's queries and similar to each other's
//! golds, which is the tension the matching weights trade off.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Record, TaskMode, Token};
use crate::rng;

const VOCABULARY: &[&[&str]] = &[
    &["kitchen", "knife", "onion", "stove", "pan", "soup", "recipe", "salt", "oven", "plate", "fork", "spoon"],
    &["car", "road", "engine", "wheel", "driver", "traffic", "highway", "gas", "brake", "mirror", "garage", "map"],
    &["letter", "envelope", "stamp", "desk", "pen", "paper", "note", "mail", "office", "ink", "drawer", "folder"],
    &["gun", "police", "badge", "arrest", "suspect", "crime", "witness", "alley", "siren", "handcuffs", "detective", "case"],
    &["wedding", "ring", "bride", "church", "dress", "flowers", "vows", "cake", "guests", "music", "dance", "toast"],
    &["hospital", "doctor", "nurse", "patient", "bed", "medicine", "injury", "bandage", "surgery", "pain", "chart", "mask"],
    &["school", "teacher", "student", "book", "exam", "class", "lesson", "board", "homework", "grade", "chalk", "library"],
    &["phone", "call", "message", "screen", "number", "voicemail", "ring", "charger", "text", "contact", "signal", "battery"],
];

const OPENERS: &[&str] = &["why is", "what is", "where is", "how come"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub records: usize,
    /// Distinct source keys; records are spread over them round-robin.
    pub sources: usize,
    /// Topics in use, at most the size of the built-in vocabulary.
    pub topics: usize,
    pub seed: u64,
    pub mode: TaskMode,
    /// Embedding dimension; embeddings are a noisy topic indicator.
    pub embedding_dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            records: 500,
            sources: 50,
            topics: VOCABULARY.len(),
            seed: 0,
            mode: TaskMode::Qa,
            embedding_dim: 16,
        }
    }
}

fn words(text: &str) -> impl Iterator<Item = Token> + '_ {
    text.split_whitespace().map(Token::word)
}

pub fn generate(spec: &SyntheticSpec) -> Vec<Record> {
    let topics = spec.topics.clamp(1, VOCABULARY.len());
    let sources = spec.sources.max(1);
    let dim = spec.embedding_dim.max(topics);
    let width = (spec.records.max(1) - 1).to_string().len();
    (0..spec.records)
        .map(|i| {
            let id = format!("r{i:0width$}");
            let mut rng = rng::stream(spec.seed, &["synthetic", &id]);
            let topic = rng.random_range(0..topics);
            let vocab = VOCABULARY[topic];

            let picked: Vec<&str> = vocab.choose_multiple(&mut rng, 6).copied().collect();
            let (asked, extra) = picked.split_at(3);
            let repeated = rng.random_range(2..=3);

            let mut query: Vec<Token> = words(OPENERS.choose(&mut rng).copied().unwrap_or("why is")).collect();
            query.push(Token::tag("person", 1));
            query.extend(asked.iter().map(|w| Token::word(*w)));
            query.push(Token::word("?"));

            let mut gold = vec![Token::tag("person", 1)];
            gold.extend(asked[..repeated].iter().map(|w| Token::word(*w)));
            gold.extend(extra[..3 - repeated].iter().map(|w| Token::word(*w)));
            gold.push(Token::word(format!("m{i}")));
            gold.push(Token::word("."));

            let mut embedding: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.3..0.3)).collect();
            embedding[topic] += 1.0;

            let n_objects = rng.random_range(1..=3);
            Record {
                id,
                source_key: format!("src-{:03}", i % sources),
                query,
                gold,
                objects: vec!["person".to_string(); n_objects],
                embedding: Some(embedding),
                task_mode: spec.mode,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_record;

    #[test]
    fn records_are_valid_and_reproducible() {
        let spec = SyntheticSpec {
            records: 50,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec);
        assert_eq!(a, generate(&spec));
        for r in &a {
            assert!(validate_record(r).is_ok(), "{}", validate_record(r));
        }
        let b = generate(&SyntheticSpec { seed: 1, ..spec });
        assert_ne!(a, b);
    }
}
