//! Machine accuracy of the relevance scorer across a lambda grid.
//!
//! Larger lambda pushes distractors away from the gold response, which also
//! tends to make them less relevant and the items easier for the scorer.
//!
//! ```bash
//! cargo run --release --example lambda_sweep -- 20
//! ```

use advmatch::diagnostics::{lambda_sweep, write_sweep_csv};
use advmatch::synthetic::{generate, SyntheticSpec};
use advmatch::{MatchConfig, Record, ScorerPair, TaskMode};

fn main() -> advmatch::Result<()> {
    let corpora: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(5);
    let grid = [1.0, 0.1, 0.01];
    let mut mean = vec![0.0; grid.len()];

    for seed in 0..corpora {
        let records = generate(&SyntheticSpec {
            records: 500,
            seed,
            ..SyntheticSpec::default()
        });
        let refs: Vec<&Record> = records.iter().collect();
        let config = MatchConfig::new(TaskMode::Qa, seed);
        let rows = lambda_sweep(&refs, &grid, &config, &ScorerPair::overlap(config.epsilon))?;
        println!("corpus {seed}");
        write_sweep_csv(&mut std::io::stdout(), &rows)?;
        for (m, r) in mean.iter_mut().zip(&rows) {
            *m += r.machine_accuracy / corpora as f64;
        }
    }

    println!("mean machine accuracy");
    for (lambda, m) in grid.iter().zip(&mean) {
        println!("  lambda {lambda:<5} {m:.4}");
    }
    Ok(())
}
