//! Built-in scorers, the on-disk matrix formats, and matching from
//! precomputed matrices.
//!
//! ```bash
//! cargo run --example score_matrices
//! ```

use std::io::BufReader;

use advmatch::scoring::{
    read_matrix, relevance_matrix, similarity_matrix, symmetrize_entailment, write_matrix_binary,
    write_matrix_tsv,
};
use advmatch::synthetic::{generate, SyntheticSpec};
use advmatch::{run_match, MatchConfig, Record, ScorerPair, ScorerSpec, TaskMode};

fn main() -> advmatch::Result<()> {
    let records = generate(&SyntheticSpec {
        records: 120,
        sources: 12,
        ..SyntheticSpec::default()
    });
    let all: Vec<&Record> = records.iter().collect();
    let mut config = MatchConfig::new(TaskMode::Qa, 3);
    config.n_folds = 3;

    let rel = relevance_matrix(&all, &ScorerSpec::overlap(config.epsilon), &config.remap_policy())?;
    let sim = similarity_matrix(&all, &ScorerSpec::embedding_cosine(config.epsilon))?;
    println!("rel[0][..4] = {:?}", &rel.row(0)[..4]);
    println!("sim symmetric: {}", sim.is_symmetric());

    let dir = std::env::temp_dir().join("advmatch-score-example");
    std::fs::create_dir_all(&dir)?;
    let bin = dir.join("rel.bin");
    let tsv = dir.join("sim.tsv");
    write_matrix_binary(&mut std::fs::File::create(&bin)?, &rel)?;
    write_matrix_tsv(&mut std::fs::File::create(&tsv)?, &sim)?;
    let rel_back = read_matrix(BufReader::new(std::fs::File::open(&bin)?))?;
    let sim_back = read_matrix(BufReader::new(std::fs::File::open(&tsv)?))?;
    println!("binary form stores f32: max error {:.2e}", max_diff(&rel.values, &rel_back.values));

    // Precomputed matrices are sliced per bucket by record id.
    let scorers = ScorerPair {
        relevance: ScorerSpec::external(rel_back, config.epsilon),
        similarity: ScorerSpec::external(sim_back, config.epsilon),
    };
    let out = run_match(&records, &config, &scorers)?;
    println!("{} items from precomputed matrices", out.items.len());

    // Directed entailment becomes a symmetric similarity by two-way max.
    let directed = vec![vec![1.0, 0.2, 0.9], vec![0.6, 1.0, 0.1], vec![0.3, 0.4, 1.0]];
    let sym = symmetrize_entailment(&directed)?;
    println!("symmetrized row 0: {:?}", sym.row(0));

    Ok(())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
