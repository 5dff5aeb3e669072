//! Morris function with 5 active inputs among 50, fit with a sparsity prior
//! and analyzed with one random coalition per draw.
//!
//! cargo run --release --example wide_morris

use shapfor::sampler::{fit_with_progress, SamplerConfig, Sparsity};
use shapfor::sensitivity::{assemble_report, ReportOptions};
use shapfor::testbed::{generate, GenerationSpec, TestFunction, TestKind};

fn main() -> shapfor::Result<()> {
    let f = TestFunction::new(TestKind::Morris, 5, 50)?;
    let data = generate(
        &f,
        &GenerationSpec {
            n: Some(2500),
            seed: 5,
            ..Default::default()
        },
    )?;
    let config = SamplerConfig {
        n_burn: 300,
        n_draw: 300,
        sparsity: Sparsity::On { a: 1.0 },
        seed: 5,
        ..Default::default()
    };
    let (ensemble, diag) = fit_with_progress(&data, &config, |_| {})?;
    let report = assemble_report(
        &ensemble,
        &ReportOptions {
            seed: 5,
            ..Default::default()
        },
    )?;
    println!("Shapley estimator: {}", report.metadata.shapley);

    let mut rows: Vec<_> = report
        .inputs
        .iter()
        .map(|r| (r.name.clone(), r.normalized.shapley.clone()))
        .collect();
    rows.sort_by(|a, b| b.1.point.total_cmp(&a.1.point));
    for (name, s) in rows.iter().take(8) {
        println!("{name:>4}  {:.4} [{:.4}, {:.4}]", s.point, s.lo, s.hi);
    }
    let inert: f64 = rows
        .iter()
        .filter(|(n, _)| n[1..].parse::<usize>().unwrap() > 5)
        .map(|r| r.1.point)
        .sum();
    println!("total share of the 45 inert inputs: {inert:.4}");
    println!(
        "largest split probability on an inert input: {:.4}",
        diag.split_probs[5..].iter().copied().fold(0.0, f64::max)
    );
    Ok(())
}
