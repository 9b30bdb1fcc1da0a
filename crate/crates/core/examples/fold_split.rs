//! Source-disjoint fold split.
//!
//! ```bash
//! cargo run --example fold_split
//! ```

use std::collections::BTreeSet;

use advmatch::corpus::split_folds;
use advmatch::synthetic::{generate, SyntheticSpec};

fn main() -> advmatch::Result<()> {
    let records = generate(&SyntheticSpec {
        records: 1200,
        sources: 60,
        ..SyntheticSpec::default()
    });
    let plan = split_folds(&records, 11, 42)?;
    for (f, members) in plan.partition(&records).iter().enumerate() {
        let sources: BTreeSet<&str> = members.iter().map(|r| r.source_key.as_str()).collect();
        println!(
            "fold {f:>2} {:<10} {:>4} records from {:>2} sources",
            format!("{:?}", plan.role(f)),
            members.len(),
            sources.len()
        );
    }
    Ok(())
}
