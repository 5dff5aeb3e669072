//! Exact rational expansions of total effects and Shapley effects into
//! costs `c_Q`.

use shapfor::sensitivity::{
    banzhaf_weight_sum, shapley_cost_expansion, shapley_weight_sum, total_effect_coefficient_bound,
    total_effect_expansion,
};

fn main() {
    println!(" p  |T coefficients|  bound  Shapley weights  Banzhaf weights");
    for p in 1..=8 {
        let t = total_effect_expansion(p, 0);
        println!(
            "{p:>2}  {:>16}  {:>5}  {:>15}  {:>15}",
            t.uncancelled_abs_sum().to_string(),
            total_effect_coefficient_bound(p),
            shapley_weight_sum(p).to_string(),
            banzhaf_weight_sum(p).to_string()
        );
    }
    let p = 3;
    println!("\nT_1 for p = {p} after cancellation:");
    for (q, c) in total_effect_expansion(p, 0).cancelled() {
        println!("  {c:>3} * c_{q:03b}");
    }
    println!("S_1 for p = {p}:");
    for (q, c) in shapley_cost_expansion(p, 0).cancelled() {
        println!("  {c:>5} * c_{q:03b}");
    }
}
