//! The whole pipeline on a synthetic corpus: folds, buckets, scoring, three
//! matching rounds, and shuffled four-way items.
//!
//! ```bash
//! cargo run --release --example adversarial_matching
//! ```

use std::collections::HashMap;

use advmatch::corpus::tokens_to_string;
use advmatch::matcher::{write_mcq, Provenance};
use advmatch::synthetic::{generate, SyntheticSpec};
use advmatch::{run_match, MatchConfig, ScorerPair, TaskMode};

fn main() -> advmatch::Result<()> {
    let records = generate(&SyntheticSpec {
        records: 2000,
        sources: 80,
        ..SyntheticSpec::default()
    });
    let config = MatchConfig::new(TaskMode::Qa, 2024);
    let out = run_match(&records, &config, &ScorerPair::overlap(config.epsilon))?;
    println!("{} records -> {} items", records.len(), out.items.len());

    let item = &out.items[0];
    println!("\n{}", tokens_to_string(&item.query));
    for (c, (choice, prov)) in item.choices.iter().zip(&item.provenance).enumerate() {
        let tag = match prov {
            Provenance::Gold => "gold".to_string(),
            Provenance::Distractor { source, round } => format!("round {round} from {source}"),
        };
        println!("  {c}) {:<48} {tag}", tokens_to_string(choice));
    }

    // Every response is the gold answer once and a distractor K times.
    let mut uses: HashMap<&str, usize> = HashMap::new();
    for item in &out.items {
        for p in &item.provenance {
            if let Provenance::Distractor { source, .. } = p {
                *uses.entry(source.as_str()).or_default() += 1;
            }
        }
    }
    let all_k = uses.len() == records.len() && uses.values().all(|&u| u == config.rounds);
    println!("\nevery response used {} times as a distractor: {all_k}", config.rounds);

    let path = std::env::temp_dir().join("advmatch-items.jsonl");
    write_mcq(&mut std::fs::File::create(&path)?, &out.items)?;
    println!("items written to {}", path.display());
    Ok(())
}
