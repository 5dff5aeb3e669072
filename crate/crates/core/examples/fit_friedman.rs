//! Fit the Friedman function from 250 noisy samples and print the
//! posterior sensitivity report.
//!
//! cargo run --release --example fit_friedman

use shapfor::sampler::{fit_with_progress, SamplerConfig};
use shapfor::sensitivity::{assemble_report, ReportOptions};
use shapfor::testbed::{generate, reference_values, GenerationSpec, TestFunction, TestKind};

fn main() -> shapfor::Result<()> {
    let f = TestFunction::standard(TestKind::Friedman);
    let data = generate(
        &f,
        &GenerationSpec {
            seed: 1,
            ..Default::default()
        },
    )?;
    let config = SamplerConfig {
        seed: 1,
        ..Default::default()
    };
    let (ensemble, diag) = fit_with_progress(&data, &config, |s| {
        if s.sweep % 500 == 0 {
            eprintln!(
                "sweep {:>5}  acceptance {:.3}  sigma2 {:.3}",
                s.sweep, s.acceptance_rate, s.sigma2
            );
        }
    })?;
    println!("posterior mean sigma2 {:.3}", diag.sigma2_mean);

    let report = assemble_report(&ensemble, &ReportOptions::default())?;
    print!("{}", report.to_text());

    let truth = reference_values(TestKind::Friedman, 5)?;
    println!("\ninput  S (normalized)  reference");
    for (row, s) in report.inputs.iter().zip(truth.shapley) {
        let e = &row.normalized.shapley;
        println!(
            "{:>5}  {:.3} [{:.3}, {:.3}]  {s:.3}",
            row.name, e.point, e.lo, e.hi
        );
    }
    Ok(())
}
