//! Maximum-weight assignment with forbidden pairs, checked against brute force.
//!
//! ```bash
//! cargo run --example solve_assignment
//! ```

use advmatch::{brute_force_lap, solve_lap_max, Weight, WeightMatrix};

fn main() -> advmatch::Result<()> {
    let f = Weight::Forbidden;
    let a = Weight::Allowed;
    let w = WeightMatrix::from_rows(&[
        vec![f, a(-0.4), a(-1.2), a(-0.9)],
        vec![a(-0.3), f, a(-0.8), a(-2.0)],
        vec![a(-1.1), a(-0.2), f, a(-0.5)],
        vec![a(-0.7), a(-1.5), a(-0.1), f],
    ])?;

    let fast = solve_lap_max(&w)?;
    let slow = brute_force_lap(&w)?;
    println!("mapping      {:?}", fast.mapping);
    println!("total weight {:.4}", fast.total_weight);
    println!("oracle       {:?} {:.4}", slow.mapping, slow.total_weight);
    assert_eq!(fast.total_weight, slow.total_weight);

    // A row with every entry forbidden but one forces that entry; two such
    // rows competing for the same column make the problem infeasible.
    let stuck = WeightMatrix::from_rows(&[
        vec![a(0.0), f, f],
        vec![a(0.0), f, f],
        vec![a(0.0), a(0.0), a(0.0)],
    ]);
    match stuck.and_then(|w| solve_lap_max(&w)) {
        Ok(s) => println!("unexpected solution {:?}", s.mapping),
        Err(e) => println!("infeasible: {e}"),
    }
    Ok(())
}
