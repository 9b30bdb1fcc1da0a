//! Bucketing one fold by pronoun and question type, or by embedding cluster.
//!
//! ```bash
//! cargo run --example buckets
//! ```

use advmatch::bucketing::build_buckets;
use advmatch::synthetic::{generate, SyntheticSpec};
use advmatch::{Record, TaskMode};

fn main() -> advmatch::Result<()> {
    for mode in [TaskMode::Qa, TaskMode::Qar] {
        let records = generate(&SyntheticSpec {
            records: 700,
            mode,
            ..SyntheticSpec::default()
        });
        let fold: Vec<&Record> = records.iter().collect();
        let buckets = build_buckets(&fold, 0, mode, 150, 3, 5)?;
        println!("{} mode: {} buckets", mode.as_str(), buckets.len());
        for b in &buckets {
            println!("  {:<24} {:>4} records", b.label(), b.len());
        }
    }
    Ok(())
}
