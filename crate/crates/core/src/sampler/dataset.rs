use crate::error::{Error, Result};
use crate::forest::AffineMap;

/// Raw regression data: `n` rows of `p` covariates and one response each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows of inputs but {} responses",
                x.len(),
                y.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 rows, got {}",
                y.len()
            )));
        }
        let p = x[0].len();
        if p == 0 {
            return Err(Error::InvalidDataset("no input columns".into()));
        }
        for (i, row) in x.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} inputs, expected {p}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite input at row {i}, column {j}"
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite response at row {i}"
            )));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Inputs min-max scaled into `[0,1]`, stored column-major.
#[derive(Clone, Debug)]
pub struct ScaledInputs {
    pub columns: Vec<Vec<f64>>,
    pub maps: Vec<AffineMap>,
}

/// Per-column min-max map into `[0,1]`. A constant column maps to 0.5.
pub fn scale_inputs(data: &Dataset) -> ScaledInputs {
    let (n, p) = (data.n(), data.p());
    let mut columns = Vec::with_capacity(p);
    let mut maps = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = data.rows().iter().map(|r| r[j]).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let map = if hi > lo {
            AffineMap {
                offset: lo,
                scale: hi - lo,
            }
        } else {
            AffineMap {
                offset: lo - 0.5,
                scale: 1.0,
            }
        };
        let scaled: Vec<f64> = col
            .iter()
            .map(|&v| map.to_scaled(v).clamp(0.0, 1.0))
            .collect();
        debug_assert_eq!(scaled.len(), n);
        columns.push(scaled);
        maps.push(map);
    }
    ScaledInputs { columns, maps }
}

/// Centers the response at its midrange and divides by its range, so the
/// scaled response spans `[-0.5, 0.5]`.
pub fn scale_outputs(y: &[f64]) -> Result<(Vec<f64>, AffineMap)> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::InvalidDataset(
            "response is constant; its scale is undefined".into(),
        ));
    }
    let map = AffineMap {
        offset: 0.5 * (lo + hi),
        scale: hi - lo,
    };
    Ok((y.iter().map(|&v| map.to_scaled(v)).collect(), map))
}

/// How candidate cut values are laid out on each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitnetMode {
    /// `G` equispaced cuts `g / (G + 1)`.
    UniformGrid(usize),
    /// The distinct interior scaled covariate values.
    ObservedValues,
}

impl Default for SplitnetMode {
    fn default() -> Self {
        SplitnetMode::UniformGrid(100)
    }
}

/// Allowed cut values per input dimension, strictly increasing inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitNet {
    cuts: Vec<Vec<f64>>,
}

impl SplitNet {
    pub fn new(cuts: Vec<Vec<f64>>) -> Result<Self> {
        for (j, c) in cuts.iter().enumerate() {
            if c.iter().any(|v| !(*v > 0.0 && *v < 1.0)) || c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "split-net cuts for input {j} are not increasing in (0, 1)"
                )));
            }
        }
        Ok(SplitNet { cuts })
    }

    pub fn uniform_grid(p: usize, count: usize) -> Self {
        let grid: Vec<f64> = (1..=count).map(|g| g as f64 / (count + 1) as f64).collect();
        SplitNet {
            cuts: vec![grid; p],
        }
    }

    pub fn p(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, dim: usize) -> &[f64] {
        &self.cuts[dim]
    }

    /// Index range of cuts lying strictly inside `(lo, hi)`.
    pub fn inside(&self, dim: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let c = &self.cuts[dim];
        let start = c.partition_point(|&v| v <= lo);
        let end = c.partition_point(|&v| v < hi);
        start..end.max(start)
    }
}

pub fn make_splitnet(inputs: &ScaledInputs, mode: SplitnetMode) -> Result<SplitNet> {
    let p = inputs.columns.len();
    match mode {
        SplitnetMode::UniformGrid(count) => {
            if count == 0 {
                return Err(Error::InvalidConfig(
                    "uniform grid needs at least one cut".into(),
                ));
            }
            Ok(SplitNet::uniform_grid(p, count))
        }
        SplitnetMode::ObservedValues => {
            let mut cuts = Vec::with_capacity(p);
            for (j, col) in inputs.columns.iter().enumerate() {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut v: Vec<f64> = col.iter().copied().filter(|&x| x > lo && x < hi).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                if v.is_empty() {
                    return Err(Error::InvalidDataset(format!(
                        "input {j} has no interior values to split on"
                    )));
                }
                cuts.push(v);
            }
            SplitNet::new(cuts)
        }
    }
}
