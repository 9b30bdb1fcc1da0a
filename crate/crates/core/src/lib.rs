//! Build multiple-choice datasets from (query, gold response) annotations by
//! adversarial matching.
//!
//! Every gold response is recycled as a distractor for other queries. Which
//! queries it goes to is decided by maximum-weight bipartite matching over a
//! weight that rewards relevance to the query and penalises similarity to the
//! query's own gold response. Because each round is a perfect matching, every
//! response is correct exactly once and wrong exactly K times, so an
//! answer-only model cannot beat chance.
//!
//! ```no_run
//! use advmatch::{run_match, MatchConfig, ScorerPair, TaskMode};
//!
//! let file = std::io::BufReader::new(std::fs::File::open("corpus.jsonl")?);
//! let records = advmatch::corpus::parse_records(file)?;
//! let config = MatchConfig::new(TaskMode::Qa, 7);
//! let out = run_match(&records, &config, &ScorerPair::overlap(config.epsilon))?;
//! advmatch::matcher::write_mcq(&mut std::io::stdout(), &out.items)?;
//! # Ok::<(), advmatch::Error>(())
//! ```

pub mod assignment;
pub mod bucketing;
pub mod cli;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod matcher;
pub mod pipeline;
pub mod remap;
pub mod rng;
pub mod scoring;
pub mod synthetic;

pub use assignment::{brute_force_lap, solve_lap_max, Assignment, Weight, WeightMatrix};
pub use corpus::{Record, TaskMode, Token};
pub use error::{Error, Result};
pub use matcher::{MatchConfig, McqItem};
pub use pipeline::{run_match, MatchOutput};
pub use scoring::{ScoreMatrix, ScorerPair, ScorerSpec};
