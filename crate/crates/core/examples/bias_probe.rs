//! Answer-only baselines. On matched items every response is gold in exactly
//! one of its K + 1 appearances, so the frequency probe sits at chance. Items
//! whose gold carries a giveaway word are caught by the word-level probe.
//!
//! ```bash
//! cargo run --release --example bias_probe
//! ```

use advmatch::corpus::Token;
use advmatch::diagnostics::{frequency_prior_probe, word_prior_probe};
use advmatch::synthetic::{generate, SyntheticSpec};
use advmatch::{run_match, MatchConfig, ScorerPair, TaskMode};

fn main() -> advmatch::Result<()> {
    let records = generate(&SyntheticSpec {
        records: 6000,
        sources: 60,
        ..SyntheticSpec::default()
    });
    let mut config = MatchConfig::new(TaskMode::Qa, 9);
    config.n_folds = 3;
    let out = run_match(&records, &config, &ScorerPair::overlap(config.epsilon))?;
    let items = out.items;
    println!("matched items      frequency probe {:.4}", frequency_prior_probe(&items, &items)?);
    println!("                   word probe      {:.4}", word_prior_probe(&items, &items)?);

    // Same items with a stylistic tell appended to every gold answer.
    let mut biased = items.clone();
    for item in &mut biased {
        item.choices[item.gold_index].push(Token::word("indeed"));
    }
    println!("marked gold        frequency probe {:.4}", frequency_prior_probe(&biased, &biased)?);
    println!("                   word probe      {:.4}", word_prior_probe(&biased, &biased)?);
    Ok(())
}
