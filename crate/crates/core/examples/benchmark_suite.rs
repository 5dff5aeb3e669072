//! Run one benchmark scenario and print its metrics.
//!
//! cargo run --release --example benchmark_suite -- invariant-sweep 7

use shapfor::benchmark::{run_suite, BenchmarkOptions, SUITES};

fn main() -> shapfor::Result<()> {
    let mut args = std::env::args().skip(1);
    let suite = args.next().unwrap_or_else(|| "invariant-sweep".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    if !SUITES.contains(&suite.as_str()) {
        eprintln!("suites: {}", SUITES.join(", "));
    }
    let result = run_suite(&suite, &BenchmarkOptions { seed, quick: false })?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
