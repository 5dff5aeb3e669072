//! CSV ingestion and export, plus a nearest-neighbour black box built from
//! tabulated function values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::oracle::BlackBox;
use crate::sampler::{scale_inputs, Dataset};

/// A dataset together with its column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub input_names: Vec<String>,
    pub response: String,
    pub data: Dataset,
}

fn csv_error(path: &str, msg: impl Into<String>) -> Error {
    Error::Csv {
        path: path.into(),
        msg: msg.into(),
    }
}

/// Reads a headed CSV whose column `response` is the response and whose
/// remaining columns are inputs in header order.
pub fn read_table<R: Read>(input: R, label: &str, response: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(label, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let Some(ry) = headers.iter().position(|h| h == response) else {
        return Err(csv_error(
            label,
            format!(
                "no response column `{response}`; available columns: {}",
                headers.join(", ")
            ),
        ));
    };
    let input_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ry)
        .map(|(_, h)| h.clone())
        .collect();
    if input_names.is_empty() {
        return Err(csv_error(label, "no input columns besides the response"));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(label, format!("line {line}: {e}")))?;
        let mut row = Vec::with_capacity(input_names.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                csv_error(
                    label,
                    format!(
                        "line {line}, column {} (`{}`): `{cell}` is not a number",
                        c + 1,
                        headers[c]
                    ),
                )
            })?;
            if !v.is_finite() {
                return Err(csv_error(
                    label,
                    format!(
                        "line {line}, column {} (`{}`): non-finite value `{cell}`",
                        c + 1,
                        headers[c]
                    ),
                ));
            }
            if c == ry {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        x.push(row);
    }
    let data = Dataset::new(x, y).map_err(|e| csv_error(label, e.to_string()))?;
    Ok(Table {
        input_names,
        response: response.to_string(),
        data,
    })
}

pub fn read_csv(path: impl AsRef<Path>, response: &str) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(
        std::io::BufReader::new(file),
        &path.display().to_string(),
        response,
    )
}

/// Writes inputs first and the response last.
pub fn write_table<W: Write>(table: &Table, out: W) -> Result<()> {
    let err = |e: csv::Error| csv_error("<output>", e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = table.input_names.clone();
    header.push(table.response.clone());
    w.write_record(&header).map_err(err)?;
    for (row, y) in table.data.rows().iter().zip(table.data.y()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(table, std::io::BufWriter::new(file))
}

/// Default input names `x1, x2, ...`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Static k-d tree over points in the unit cube.
struct KdTree {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Implicit balanced tree: `order[lo..hi]` with the median as the node.
    order: Vec<usize>,
}

impl KdTree {
    fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let p = points.first().map_or(1, Vec::len);
        fn build(points: &[Vec<f64>], idx: &mut [usize], depth: usize, p: usize) {
            if idx.len() <= 1 {
                return;
            }
            let axis = depth % p;
            let mid = idx.len() / 2;
            idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
            let (left, right) = idx.split_at_mut(mid);
            build(points, left, depth + 1, p);
            build(points, &mut right[1..], depth + 1, p);
        }
        build(&points, &mut order, 0, p);
        KdTree {
            points,
            values,
            order,
        }
    }

    fn nearest(&self, x: &[f64]) -> f64 {
        let p = x.len();
        let mut best = (f64::INFINITY, 0usize);
        let mut stack = vec![(0usize, self.order.len(), 0usize)];
        while let Some((lo, hi, depth)) = stack.pop() {
            if lo >= hi {
                continue;
            }
            let mid = lo + (hi - lo) / 2;
            let i = self.order[mid];
            let d2: f64 = self.points[i]
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < best.0 || (d2 == best.0 && i < best.1) {
                best = (d2, i);
            }
            let axis = depth % p;
            let diff = x[axis] - self.points[i][axis];
            let (near, far) = if diff < 0.0 {
                ((lo, mid), (mid + 1, hi))
            } else {
                ((mid + 1, hi), (lo, mid))
            };
            if diff * diff <= best.0 {
                stack.push((far.0, far.1, depth + 1));
            }
            stack.push((near.0, near.1, depth + 1));
        }
        self.values[best.1]
    }
}

/// Piecewise-constant black box taking, at each point of the cube, the
/// response of the nearest min-max scaled row.
pub fn nearest_neighbour_box(data: &Dataset) -> BlackBox {
    let scaled = scale_inputs(data);
    let points: Vec<Vec<f64>> = (0..data.n())
        .map(|i| scaled.columns.iter().map(|c| c[i]).collect())
        .collect();
    let tree = KdTree::new(points, data.y().to_vec());
    BlackBox::new(data.p(), move |x| tree.nearest(x))
}
