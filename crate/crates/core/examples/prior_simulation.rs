//! Run the birth/death chain without data and compare the split frequency
//! at each depth with the prior `alpha (1 + d)^-beta`.

use shapfor::forest::TreeNode;
use shapfor::rng::seeded;
use shapfor::sampler::{simulate_prior, SplitNet, TreePrior};

fn main() -> shapfor::Result<()> {
    let prior = TreePrior {
        alpha: 0.95,
        beta: 2.0,
    };
    let p = 8;
    let net = SplitNet::new(vec![(1..100).map(|k| k as f64 / 100.0).collect(); p])?;
    let s = vec![1.0 / p as f64; p];
    let mut nodes = [0u64; 5];
    let mut splits = [0u64; 5];
    let mut leaves = 0u64;
    let n = 200_000;
    simulate_prior(&net, &s, &prior, n, &mut seeded(1), |t| {
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            if d < 5 {
                nodes[d] += 1;
            }
            match t.nodes()[i] {
                TreeNode::Leaf { .. } => leaves += 1,
                TreeNode::Internal { left, right, .. } => {
                    if d < 5 {
                        splits[d] += 1;
                    }
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
    });
    println!("mean leaves per tree {:.3}", leaves as f64 / n as f64);
    println!("depth  empirical  prior");
    for d in 0..4 {
        println!(
            "{d:>5}  {:.4}     {:.4}",
            splits[d] as f64 / nodes[d] as f64,
            prior.split_prob(d as u32)
        );
    }
    Ok(())
}
