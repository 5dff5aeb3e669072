//! Closed-form costs, Sobol' indices and Shapley effects of a hand-built
//! forest.
//!
//! The single tree below returns 1 on `[0.5, 1)^2` and 0 elsewhere, so the
//! variance is 3/16, each main effect is 1/16 and each Shapley effect 3/32.

use shapfor::forest::{Forest, Tree};
use shapfor::sensitivity::{cost, sobol_interaction, Evaluator, SubsetMask};

fn main() -> shapfor::Result<()> {
    let corner = Tree::split(
        0,
        0.5,
        Tree::leaf(0.0),
        Tree::split(1, 0.5, Tree::leaf(0.0), Tree::leaf(1.0))?,
    )?;
    let forest = Forest::new(2, vec![corner])?;
    let ev = Evaluator::new(&forest);

    println!("mean {}  variance {}", ev.mean(), ev.variance());
    for bits in 0..4u64 {
        let p = SubsetMask::from_bits(2, bits);
        println!(
            "c_{:?} = {}",
            p.iter().collect::<Vec<_>>(),
            cost(&forest, &p)?
        );
    }
    let both = SubsetMask::full(2);
    println!("interaction V_12 = {}", sobol_interaction(&forest, &both)?);
    let shapley = ev.shapley_all();
    for j in 0..2 {
        println!(
            "x{}: V = {}  T = {}  S = {}  Banzhaf = {}",
            j + 1,
            ev.sobol_main(j)?,
            ev.sobol_total(j)?,
            shapley[j],
            ev.banzhaf_all()[j]
        );
    }

    // a second tree on x3 adds an independent additive term
    let extra = Tree::split(2, 0.25, Tree::leaf(-1.0), Tree::leaf(1.0))?;
    let wider = Forest::new(
        3,
        vec![
            Tree::split(
                0,
                0.5,
                Tree::leaf(0.0),
                Tree::split(1, 0.5, Tree::leaf(0.0), Tree::leaf(1.0))?,
            )?,
            extra,
        ],
    )?;
    let ev = Evaluator::new(&wider);
    println!(
        "\nthree inputs: variance {}  Shapley {:?}",
        ev.variance(),
        ev.shapley_all()
    );
    Ok(())
}
