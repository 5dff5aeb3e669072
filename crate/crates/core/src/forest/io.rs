//! Plain-text ensemble files.
//!
//! ```text
//! shapfor-ensemble <version> p <p> n_draw <n> trees <T> y <offset> <scale> x <offset_1> <scale_1> ... <offset_p> <scale_p>
//! <sigma2> <tree_1> ... <tree_T>
//! ...
//! ```
//!
//! One line per draw follows the header. Each tree is written in pre-order,
//! `N <dim> <cut>` for an internal node (left subtree first) and `L <mu>` for
//! a leaf. Reals carry 17 significant digits, enough to read back the exact
//! same `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AffineMap, Draw, Forest, PosteriorEnsemble, Tree, TreeNode};
use crate::error::{Error, Result};

pub const MAGIC: &str = "shapfor-ensemble";
pub const VERSION: u32 = 1;

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_ensemble<W: Write>(ensemble: &PosteriorEnsemble, mut out: W) -> Result<()> {
    let num_trees = ensemble
        .draws()
        .first()
        .map_or(0, |d| d.forest.trees().len());
    if ensemble
        .draws()
        .iter()
        .any(|d| d.forest.trees().len() != num_trees)
    {
        return Err(Error::InvalidEnsemble(
            "draws hold different numbers of trees".into(),
        ));
    }
    let y = ensemble.y_scaling();
    let mut header = format!(
        "{MAGIC} {VERSION} p {} n_draw {} trees {num_trees} y {} {} x",
        ensemble.p(),
        ensemble.len(),
        real(y.offset),
        real(y.scale)
    );
    for m in ensemble.x_scaling() {
        header.push(' ');
        header.push_str(&real(m.offset));
        header.push(' ');
        header.push_str(&real(m.scale));
    }
    let io_err = |e| Error::io("<ensemble writer>", e);
    writeln!(out, "{header}").map_err(io_err)?;
    let mut line = String::new();
    for draw in ensemble.draws() {
        line.clear();
        line.push_str(&real(draw.sigma2));
        for tree in draw.forest.trees() {
            write_node(tree.nodes(), 0, &mut line);
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    Ok(())
}

fn write_node(nodes: &[TreeNode], i: usize, line: &mut String) {
    match nodes[i] {
        TreeNode::Leaf { mu } => {
            line.push_str(" L ");
            line.push_str(&real(mu));
        }
        TreeNode::Internal {
            split_dim,
            cut,
            left,
            right,
        } => {
            line.push_str(&format!(" N {split_dim} {}", real(cut)));
            write_node(nodes, left, line);
            write_node(nodes, right, line);
        }
    }
}

pub fn to_string(ensemble: &PosteriorEnsemble) -> Result<String> {
    let mut buf = Vec::new();
    write_ensemble(ensemble, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ensemble text is ASCII"))
}

struct Tokens<'a> {
    line: usize,
    it: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.it.next().ok_or_else(|| Error::Malformed {
            line: self.line,
            msg: format!("missing {what}"),
        })
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| Error::Malformed {
            line: self.line,
            msg: format!("bad {what} `{tok}`"),
        })
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let tok = self.next(word)?;
        if tok != word {
            return Err(Error::Malformed {
                line: self.line,
                msg: format!("expected `{word}`, found `{tok}`"),
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(tok) => Err(Error::Malformed {
                line: self.line,
                msg: format!("trailing token `{tok}`"),
            }),
        }
    }
}

pub fn read_ensemble<R: Read>(input: R) -> Result<PosteriorEnsemble> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io("<ensemble reader>", e))?,
        None => {
            return Err(Error::Malformed {
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let mut tok = Tokens {
        line: 1,
        it: header.split_ascii_whitespace(),
    };
    tok.expect(MAGIC)?;
    let version: u32 = tok.parse("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    tok.expect("p")?;
    let p: usize = tok.parse("p")?;
    tok.expect("n_draw")?;
    let n_draw: usize = tok.parse("n_draw")?;
    tok.expect("trees")?;
    let num_trees: usize = tok.parse("tree count")?;
    tok.expect("y")?;
    let y_scaling = AffineMap {
        offset: tok.parse("y offset")?,
        scale: tok.parse("y scale")?,
    };
    tok.expect("x")?;
    let mut x_scaling = Vec::with_capacity(p);
    for _ in 0..p {
        x_scaling.push(AffineMap {
            offset: tok.parse("x offset")?,
            scale: tok.parse("x scale")?,
        });
    }
    tok.finish()?;

    let mut draws = Vec::with_capacity(n_draw);
    for i in 0..n_draw {
        let line_no = i + 2;
        let line = match lines.next() {
            Some(l) => l.map_err(|e| Error::io("<ensemble reader>", e))?,
            None => {
                return Err(Error::Malformed {
                    line: line_no,
                    msg: format!("expected {n_draw} draws, found {i}"),
                })
            }
        };
        let mut tok = Tokens {
            line: line_no,
            it: line.split_ascii_whitespace(),
        };
        let sigma2: f64 = tok.parse("sigma2")?;
        let mut trees = Vec::with_capacity(num_trees);
        for _ in 0..num_trees {
            let mut nodes = Vec::new();
            read_node(&mut tok, &mut nodes)?;
            let tree = Tree::from_nodes(nodes).map_err(|e| Error::Malformed {
                line: line_no,
                msg: e.to_string(),
            })?;
            trees.push(tree);
        }
        tok.finish()?;
        let forest = Forest::new(p, trees).map_err(|e| Error::Malformed {
            line: line_no,
            msg: e.to_string(),
        })?;
        draws.push(Draw { forest, sigma2 });
    }
    if let Some(extra) = lines.next() {
        let extra = extra.map_err(|e| Error::io("<ensemble reader>", e))?;
        if !extra.trim().is_empty() {
            return Err(Error::Malformed {
                line: n_draw + 2,
                msg: "more draws than declared".into(),
            });
        }
    }
    PosteriorEnsemble::new(p, draws, x_scaling, y_scaling)
}

fn read_node(tok: &mut Tokens<'_>, nodes: &mut Vec<TreeNode>) -> Result<usize> {
    let here = nodes.len();
    match tok.next("node tag")? {
        "L" => {
            nodes.push(TreeNode::Leaf {
                mu: tok.parse("leaf value")?,
            });
        }
        "N" => {
            let split_dim = tok.parse("split dim")?;
            let cut = tok.parse("cut")?;
            nodes.push(TreeNode::Internal {
                split_dim,
                cut,
                left: 0,
                right: 0,
            });
            let l = read_node(tok, nodes)?;
            let r = read_node(tok, nodes)?;
            nodes[here] = TreeNode::Internal {
                split_dim,
                cut,
                left: l,
                right: r,
            };
        }
        other => {
            return Err(Error::Malformed {
                line: tok.line,
                msg: format!("unknown node tag `{other}`"),
            });
        }
    }
    Ok(here)
}

pub fn from_str(text: &str) -> Result<PosteriorEnsemble> {
    read_ensemble(text.as_bytes())
}

pub fn save(ensemble: &PosteriorEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ensemble(ensemble, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<PosteriorEnsemble> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ensemble(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_util::random_forest;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn sample_ensemble(seed: u64, p: usize, draws: usize, trees: usize) -> PosteriorEnsemble {
        let mut rng = seeded(seed);
        let draws = (0..draws)
            .map(|i| Draw {
                forest: random_forest(&mut rng, p, trees, 3),
                sigma2: 0.1 + i as f64 / 7.0,
            })
            .collect();
        let xs = (0..p)
            .map(|j| AffineMap {
                offset: j as f64 * 0.3 - 1.0,
                scale: 1.0 / 3.0 + j as f64,
            })
            .collect();
        PosteriorEnsemble::new(
            p,
            draws,
            xs,
            AffineMap {
                offset: 14.41,
                scale: std::f64::consts::PI,
            },
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(seed in any::<u64>(), p in 1usize..6, draws in 0usize..4, trees in 0usize..4) {
            let e = sample_ensemble(seed, p, draws, trees);
            let text = to_string(&e).unwrap();
            let back = from_str(&text).unwrap();
            prop_assert_eq!(&back, &e);
            prop_assert_eq!(to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn header_layout() {
        let text = to_string(&sample_ensemble(1, 2, 1, 1)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("shapfor-ensemble 1 p 2 n_draw 1 trees 1 y "));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let good = to_string(&sample_ensemble(2, 2, 2, 2)).unwrap();
        let wrong_version = good.replacen("shapfor-ensemble 1", "shapfor-ensemble 9", 1);
        assert!(matches!(
            from_str(&wrong_version),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        assert!(matches!(from_str(""), Err(Error::Malformed { .. })));
        let truncated: String = good.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            from_str(&truncated),
            Err(Error::Malformed { line: 3, .. })
        ));
        let bad_tag = good.replacen(" L ", " Q ", 1);
        assert!(matches!(from_str(&bad_tag), Err(Error::Malformed { .. })));

        let header = "shapfor-ensemble 1 p 1 n_draw 1 trees 1 y 0 1 x 0 1\n";
        // cut outside the admissible interval of the left child
        let nested = format!("{header}0.5 N 0 0.5 N 0 0.7 L 0 L 1 L 2\n");
        assert!(matches!(
            from_str(&nested),
            Err(Error::Malformed { line: 2, .. })
        ));
        let negative_sigma = format!("{header}-0.5 L 0\n");
        assert!(matches!(
            from_str(&negative_sigma),
            Err(Error::InvalidEnsemble(_))
        ));
        let dim_too_big = format!("{header}0.5 N 3 0.5 L 0 L 1\n");
        assert!(from_str(&dim_too_big).is_err());
    }
}
