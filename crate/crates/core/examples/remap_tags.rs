//! Moving a recycled response onto another record's detection tags.
//!
//! ```bash
//! cargo run --example remap_tags
//! ```

use advmatch::corpus::{parse_tokens, tokens_to_string};
use advmatch::remap::{pair_stream, remap_tags, templatize};
use advmatch::{Record, TaskMode};

fn main() {
    let target = Record {
        id: "q7".into(),
        source_key: "movie-3".into(),
        query: parse_tokens("why is [person:2] holding the [cup:4] ?").unwrap(),
        gold: parse_tokens("[person:2] is thirsty .").unwrap(),
        objects: ["person", "person", "dog", "cup"].map(String::from).to_vec(),
        embedding: None,
        task_mode: TaskMode::Qa,
    };
    let donor = parse_tokens("[person:1] gives [person:3] the [cup:2] and pets the [horse:5] .").unwrap();

    let template = templatize(&donor);
    println!("donor     {}", tokens_to_string(&donor));
    println!("slots     {}", template.slot_count());
    for p_reuse in [0.0, 0.5, 1.0] {
        let mut rng = pair_stream(11, &target.id, "donor");
        let out = remap_tags(&template, &target, p_reuse, &mut rng);
        println!("p={p_reuse:<4} {}", tokens_to_string(&out));
    }
}
