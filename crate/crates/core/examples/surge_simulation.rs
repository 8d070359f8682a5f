//! Replay a seeded call surge through the dispatch queue and compare the
//! wait for urgent calls with and without early exit.
//!
//! `cargo run --example surge_simulation [calls] [seed]`

use calltriage::surge::{simulate_surge, SurgeParams};

fn main() {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let base = SurgeParams {
        n_calls: n,
        seed,
        ..SurgeParams::default()
    };
    let with_exit = simulate_surge(&base);
    let without = simulate_surge(&SurgeParams {
        early_exit_probability: 0.0,
        ..base.clone()
    });
    println!("{}", with_exit.to_table());
    let fmt = |x: Option<f64>| x.map_or("n/a".to_owned(), |v| format!("{v:.1}s"));
    println!(
        "mean time to Q1: {} with early exit, {} without",
        fmt(with_exit.mean_time_to_q1),
        fmt(without.mean_time_to_q1)
    );
}
