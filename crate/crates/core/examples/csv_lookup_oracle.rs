//! Treat a table of function values as a black box by nearest-neighbour
//! lookup and estimate its indices by Monte Carlo.

use shapfor::data::{nearest_neighbour_box, read_table};
use shapfor::oracle::{oracle_report, McBudget, OracleOptions};

fn main() -> shapfor::Result<()> {
    let mut csv = String::from("speed,load,response\n");
    for i in 0..40 {
        for k in 0..40 {
            let (a, b) = ((i as f64 + 0.5) / 40.0, (k as f64 + 0.5) / 40.0);
            csv.push_str(&format!("{a},{b},{}\n", 3.0 * a + (a * b).sqrt()));
        }
    }
    let table = read_table(csv.as_bytes(), "inline", "response")?;
    let bb = nearest_neighbour_box(&table.data);
    let options = OracleOptions {
        budget: McBudget {
            n_outer: 4_000,
            n_inner: 8,
            n_subsets: 32,
        },
        n_variance: 100_000,
        ..Default::default()
    };
    let mut report = oracle_report(&bb, &options)?;
    report.set_input_names(&table.input_names)?;
    print!("{}", report.to_text());
    Ok(())
}
