//! Write a fitted ensemble to its text format, read it back and check that
//! both copies give the same report and the same predictions.

use shapfor::forest::io;
use shapfor::sampler::{fit, SamplerConfig};
use shapfor::sensitivity::{assemble_report, ReportOptions};
use shapfor::testbed::{generate, GenerationSpec, TestFunction, TestKind};

fn main() -> shapfor::Result<()> {
    let f = TestFunction::standard(TestKind::Bratley);
    let data = generate(
        &f,
        &GenerationSpec {
            n: Some(150),
            seed: 3,
            ..Default::default()
        },
    )?;
    let config = SamplerConfig {
        num_trees: 50,
        n_burn: 200,
        n_draw: 100,
        seed: 3,
        ..Default::default()
    };
    let ensemble = fit(&data, &config)?;

    let text = io::to_string(&ensemble)?;
    println!("{} draws, {} bytes; header:", ensemble.len(), text.len());
    println!("  {}", text.lines().next().unwrap_or_default());
    let back = io::from_str(&text)?;
    assert_eq!(back, ensemble);

    let options = ReportOptions::default();
    assert_eq!(
        assemble_report(&back, &options)?,
        assemble_report(&ensemble, &options)?
    );
    let x = [0.3, 0.6, 0.9, 0.1, 0.5];
    println!(
        "prediction at {x:?}: {:.4} (truth {:.4})",
        back.predict_raw(&x)?,
        f.eval(&x)?
    );
    println!("reloaded ensemble is identical");
    Ok(())
}
