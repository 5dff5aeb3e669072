//! Exact Shapley and Banzhaf values against the two random-coalition
//! estimators on a forest with a three-way interaction.

use shapfor::forest::{Forest, Tree};
use shapfor::sensitivity::{subset_differences, Evaluator, SubsetRule};
use shapfor::stats::{mean, std_error};

fn main() -> shapfor::Result<()> {
    let cube = Tree::split(
        0,
        0.5,
        Tree::leaf(0.0),
        Tree::split(
            1,
            0.5,
            Tree::leaf(0.0),
            Tree::split(2, 0.5, Tree::leaf(0.0), Tree::leaf(4.0))?,
        )?,
    )?;
    let ramp = Tree::split(3, 0.5, Tree::leaf(0.0), Tree::leaf(1.0))?;
    let forest = Forest::new(4, vec![cube, ramp])?;
    let ev = Evaluator::new(&forest);
    let (shapley, banzhaf) = (ev.shapley_all(), ev.banzhaf_all());
    println!("input  Shapley  Banzhaf  coin-flip          size-stratified");
    for j in 0..4 {
        let coin = subset_differences(&ev, j, 20_000, 1, 0, SubsetRule::CoinFlip);
        let strat = subset_differences(&ev, j, 20_000, 1, 0, SubsetRule::SizeStratified);
        println!(
            "x{}     {:.4}   {:.4}   {:.4} ± {:.4}   {:.4} ± {:.4}",
            j + 1,
            shapley[j],
            banzhaf[j],
            mean(&coin),
            std_error(&coin),
            mean(&strat),
            std_error(&strat)
        );
    }
    println!("variance {:.4}", ev.variance());
    Ok(())
}
