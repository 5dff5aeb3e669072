//! Monte-Carlo estimates of the normalized Shapley effects of the four
//! reference functions next to their tabulated values.
//!
//! cargo run --release --example oracle_table

use shapfor::oracle::{mc_shapley, mc_variance, McBudget};
use shapfor::sensitivity::SubsetRule;
use shapfor::testbed::{reference_values, TestFunction, TestKind};

fn main() -> shapfor::Result<()> {
    let budget = McBudget {
        n_outer: 5_000,
        n_inner: 16,
        n_subsets: 64,
    };
    for kind in TestKind::ALL {
        let f = TestFunction::standard(kind).black_box();
        let table = reference_values(kind, 5)?;
        let var = mc_variance(&f, 200_000, 1)?;
        println!(
            "{kind}: variance {:.4} ± {:.4} (table {})",
            var.estimate, var.stderr, table.variance
        );
        for j in 0..5 {
            let s = mc_shapley(&f, j, budget, SubsetRule::CoinFlip, j as u64)?;
            println!(
                "  x{}  {:.3} ± {:.3}  table {:.3}",
                j + 1,
                s.estimate / var.estimate,
                s.stderr / var.estimate,
                table.shapley[j]
            );
        }
    }
    Ok(())
}
