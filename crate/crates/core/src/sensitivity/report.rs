//! Posterior summaries of per-draw indices.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampled::shapley_sampled_forest;
use super::{Evaluator, SubsetRule};
use crate::error::{Error, Result};
use crate::forest::PosteriorEnsemble;
use crate::stats::{mean, quantile_sorted, sorted_copy};

/// How per-draw indices are turned into variance shares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide each draw's indices by that draw's own variance.
    #[default]
    PerDraw,
    /// Divide every draw's indices by the posterior mean variance.
    Pooled,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-draw" | "per_draw" => Ok(Normalization::PerDraw),
            "pooled" => Ok(Normalization::Pooled),
            _ => Err(Error::Unknown {
                kind: "normalization",
                name: s.to_string(),
            }),
        }
    }
}

/// Which Shapley estimator runs on each draw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMode {
    /// Exact when `p` is at most the exact threshold, sampled otherwise.
    #[default]
    Auto,
    Exact,
    Sampled,
}

impl std::str::FromStr for ShapleyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ShapleyMode::Auto),
            "exact" => Ok(ShapleyMode::Exact),
            "sampled" => Ok(ShapleyMode::Sampled),
            _ => Err(Error::Unknown {
                kind: "Shapley mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Subsets per draw for the sampled estimator.
    pub m: usize,
    /// Quantile levels; the smallest and largest bound the reported interval.
    pub levels: Vec<f64>,
    pub seed: u64,
    pub shapley: ShapleyMode,
    pub exact_threshold: usize,
    pub subset_rule: SubsetRule,
    pub normalization: Normalization,
    /// Keep every per-draw value inside the report.
    pub keep_draws: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            m: 1,
            levels: vec![0.025, 0.975],
            seed: 0,
            shapley: ShapleyMode::Auto,
            exact_threshold: 12,
            subset_rule: SubsetRule::CoinFlip,
            normalization: Normalization::PerDraw,
            keep_draws: false,
        }
    }
}

impl ReportOptions {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "quantile levels {:?} must lie in (0, 1)",
                self.levels
            )));
        }
        if self.shapley == ShapleyMode::Exact && self.exact_threshold > super::MAX_EXACT_SHAPLEY_P {
            return Err(Error::InvalidConfig(
                "exact threshold above the enumeration limit".into(),
            ));
        }
        Ok(())
    }

    fn exact_for(&self, p: usize) -> bool {
        match self.shapley {
            ShapleyMode::Auto => p <= self.exact_threshold,
            ShapleyMode::Exact => true,
            ShapleyMode::Sampled => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

/// Posterior summary of one scalar quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub quantiles: Vec<Quantile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<f64>>,
}

impl IndexEstimate {
    /// Posterior mean with empirical quantiles at `levels`.
    pub fn from_draws(values: Vec<f64>, levels: &[f64], keep: bool) -> Self {
        let sorted = sorted_copy(&values);
        let point = mean(&values).clamp(sorted[0], sorted[sorted.len() - 1]);
        let mut lv = levels.to_vec();
        lv.sort_by(f64::total_cmp);
        let quantiles: Vec<Quantile> = lv
            .iter()
            .map(|&level| Quantile {
                level,
                value: quantile_sorted(&sorted, level),
            })
            .collect();
        IndexEstimate {
            point,
            lo: quantiles[0].value,
            hi: quantiles[quantiles.len() - 1].value,
            quantiles,
            draws: keep.then_some(values),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexTriple {
    #[serde(rename = "V")]
    pub main: IndexEstimate,
    #[serde(rename = "T")]
    pub total: IndexEstimate,
    #[serde(rename = "S")]
    pub shapley: IndexEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputIndices {
    pub input: usize,
    pub name: String,
    #[serde(flatten)]
    pub raw: IndexTriple,
    pub normalized: IndexTriple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub method: String,
    pub p: usize,
    pub n_draw: usize,
    pub m: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    /// `exact` or `sampled`, after resolving [`ShapleyMode::Auto`].
    pub shapley: String,
    pub subset_rule: SubsetRule,
    pub normalization: Normalization,
    pub response_scale: f64,
    /// Effective settings of the run that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub inputs: Vec<InputIndices>,
    /// Per-draw forest variance, raw units.
    pub variance: IndexEstimate,
    /// Noise variance, raw units.
    pub sigma2: IndexEstimate,
    pub metadata: ReportMetadata,
}

struct DrawIndices {
    variance: f64,
    main: Vec<f64>,
    total: Vec<f64>,
    shapley: Vec<f64>,
}

/// Per-draw closed-form indices summarized over the ensemble. Raw indices
/// are in squared response units.
pub fn assemble_report(
    ensemble: &PosteriorEnsemble,
    options: &ReportOptions,
) -> Result<SensitivityReport> {
    options.validate()?;
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let p = ensemble.p();
    let exact = options.exact_for(p);
    if exact && p > super::MAX_EXACT_SHAPLEY_P {
        return Err(Error::LimitExceeded {
            what: "input dimension for exact Shapley",
            value: p,
            limit: super::MAX_EXACT_SHAPLEY_P,
        });
    }
    let per_draw: Vec<DrawIndices> = ensemble
        .draws()
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let ev = Evaluator::new(&d.forest);
            let shapley = if exact {
                ev.shapley_all()
            } else {
                (0..p)
                    .map(|j| {
                        shapley_sampled_forest(
                            &ev,
                            j,
                            options.m,
                            options.seed,
                            i,
                            options.subset_rule,
                        )
                    })
                    .collect()
            };
            DrawIndices {
                variance: ev.variance(),
                main: (0..p)
                    .map(|j| ev.sobol_main(j).expect("index in range"))
                    .collect(),
                total: (0..p)
                    .map(|j| ev.sobol_total(j).expect("index in range"))
                    .collect(),
                shapley,
            }
        })
        .collect();

    let scale2 = ensemble.y_scaling().scale.powi(2);
    let pooled = mean(&per_draw.iter().map(|d| d.variance).collect::<Vec<_>>());
    let denom = |d: &DrawIndices| match options.normalization {
        Normalization::PerDraw => d.variance,
        Normalization::Pooled => pooled,
    };
    let share = |v: f64, den: f64| if den > 0.0 { v / den } else { 0.0 };
    let summarize =
        |values: Vec<f64>| IndexEstimate::from_draws(values, &options.levels, options.keep_draws);
    let triple = |pick: &dyn Fn(&DrawIndices) -> f64, normalized: bool| {
        summarize(
            per_draw
                .iter()
                .map(|d| {
                    if normalized {
                        share(pick(d), denom(d))
                    } else {
                        pick(d) * scale2
                    }
                })
                .collect(),
        )
    };
    let inputs = (0..p)
        .map(|j| {
            let make = |normalized| IndexTriple {
                main: triple(&|d: &DrawIndices| d.main[j], normalized),
                total: triple(&|d: &DrawIndices| d.total[j], normalized),
                shapley: triple(&|d: &DrawIndices| d.shapley[j], normalized),
            };
            InputIndices {
                input: j,
                name: format!("x{}", j + 1),
                raw: make(false),
                normalized: make(true),
            }
        })
        .collect();
    Ok(SensitivityReport {
        inputs,
        variance: summarize(per_draw.iter().map(|d| d.variance * scale2).collect()),
        sigma2: summarize(ensemble.draws().iter().map(|d| d.sigma2 * scale2).collect()),
        metadata: ReportMetadata {
            method: "closed_form".into(),
            p,
            n_draw: ensemble.len(),
            m: options.m,
            seed: options.seed,
            levels: options.levels.clone(),
            shapley: if exact { "exact" } else { "sampled" }.into(),
            subset_rule: options.subset_rule,
            normalization: options.normalization,
            response_scale: ensemble.y_scaling().scale,
            run: None,
        },
    })
}

impl SensitivityReport {
    pub fn set_input_names(&mut self, names: &[String]) -> Result<()> {
        if names.len() != self.inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.len(),
                actual: names.len(),
            });
        }
        for (row, name) in self.inputs.iter_mut().zip(names) {
            row.name = name.clone();
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned-column rendering carrying the same numbers as the JSON form.
    pub fn to_text(&self) -> String {
        let md = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "method {}  p {}  draws {}  shapley {}  m {}  subsets {}  seed {}  normalization {:?}  levels {:?}",
            md.method, md.p, md.n_draw, md.shapley, md.m, md.subset_rule, md.seed, md.normalization, md.levels
        );
        let _ = writeln!(
            out,
            "variance {}  [{}, {}]",
            self.variance.point, self.variance.lo, self.variance.hi
        );
        let _ = writeln!(
            out,
            "sigma2 {}  [{}, {}]",
            self.sigma2.point, self.sigma2.lo, self.sigma2.hi
        );
        for (title, normalized) in [("raw", false), ("normalized", true)] {
            let mut rows = vec![vec!["input".to_string()]];
            for k in ["V", "T", "S"] {
                rows[0].extend([k.to_string(), format!("{k}.lo"), format!("{k}.hi")]);
            }
            for r in &self.inputs {
                let t = if normalized { &r.normalized } else { &r.raw };
                let mut row = vec![r.name.clone()];
                for e in [&t.main, &t.total, &t.shapley] {
                    row.extend([e.point.to_string(), e.lo.to_string(), e.hi.to_string()]);
                }
                rows.push(row);
            }
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
                .collect();
            let _ = writeln!(out, "\n[{title}]");
            for r in rows {
                let cells: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect();
                let _ = writeln!(out, "{}", cells.join("  "));
            }
        }
        out
    }

    /// Rows `(input, index, point, lo, hi)` of the normalized indices.
    pub fn plot_rows(&self) -> Vec<(String, &'static str, f64, f64, f64)> {
        let mut rows = Vec::with_capacity(3 * self.inputs.len());
        for (label, pick) in [
            (
                "V",
                (|t: &IndexTriple| &t.main) as fn(&IndexTriple) -> &IndexEstimate,
            ),
            ("T", |t: &IndexTriple| &t.total),
            ("S", |t: &IndexTriple| &t.shapley),
        ] {
            for r in &self.inputs {
                let e = pick(&r.normalized);
                rows.push((r.name.clone(), label, e.point, e.lo, e.hi));
            }
        }
        rows
    }

    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv {
            path: "<plot>".into(),
            msg: e.to_string(),
        };
        w.write_record(["input", "index", "point", "lo", "hi"])
            .map_err(csv_err)?;
        for (name, index, point, lo, hi) in self.plot_rows() {
            w.write_record([
                name,
                index.to_string(),
                point.to_string(),
                lo.to_string(),
                hi.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<plot>", e))
    }

    /// One row per `(draw, input)`; requires the report to keep its draws.
    pub fn write_draws_csv<W: Write>(&self, out: W) -> Result<()> {
        let missing =
            || Error::InvalidConfig("report was assembled without per-draw values".into());
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv {
            path: "<draws>".into(),
            msg: e.to_string(),
        };
        w.write_record(["draw", "input", "V", "T", "S", "V_norm", "T_norm", "S_norm"])
            .map_err(csv_err)?;
        for r in &self.inputs {
            let cols: Vec<&Vec<f64>> = [&r.raw, &r.normalized]
                .iter()
                .flat_map(|t| [&t.main, &t.total, &t.shapley])
                .map(|e| e.draws.as_ref().ok_or_else(missing))
                .collect::<Result<_>>()?;
            for i in 0..self.metadata.n_draw {
                let mut rec = vec![i.to_string(), r.name.clone()];
                rec.extend(cols.iter().map(|c| c[i].to_string()));
                w.write_record(rec).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<draws>", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_util::random_forest;
    use crate::forest::{AffineMap, Draw, Forest, Tree};
    use crate::rng::seeded;

    fn ensemble(forests: Vec<Forest>, scale: f64) -> PosteriorEnsemble {
        let p = forests[0].p();
        let draws = forests
            .into_iter()
            .map(|forest| Draw {
                forest,
                sigma2: 0.1,
            })
            .collect();
        PosteriorEnsemble::new(
            p,
            draws,
            vec![AffineMap::IDENTITY; p],
            AffineMap { offset: 0.0, scale },
        )
        .unwrap()
    }

    fn interaction() -> Forest {
        let right = Tree::split(1, 0.5, Tree::leaf(0.0), Tree::leaf(1.0)).unwrap();
        Forest::new(
            2,
            vec![Tree::split(0, 0.5, Tree::leaf(0.0), right).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn identical_draws_give_zero_width_intervals() {
        let e = ensemble(vec![interaction(); 7], 2.0);
        let r = assemble_report(&e, &ReportOptions::default()).unwrap();
        for row in &r.inputs {
            let s = &row.raw.shapley;
            assert_eq!((s.point, s.lo, s.hi), (0.375, 0.375, 0.375));
            let n = &row.normalized.shapley;
            assert_eq!((n.lo, n.hi), (0.5, 0.5));
            assert_eq!(row.raw.main.point, 0.25);
            assert_eq!(row.raw.total.point, 0.5);
        }
        assert_eq!(r.variance.point, 0.75);
        assert_eq!(r.metadata.shapley, "exact");
    }

    #[test]
    fn normalized_shapley_sums_to_one_per_draw() {
        let mut rng = seeded(1);
        let e = ensemble(
            (0..20).map(|_| random_forest(&mut rng, 5, 4, 3)).collect(),
            3.0,
        );
        let opts = ReportOptions {
            keep_draws: true,
            ..Default::default()
        };
        let r = assemble_report(&e, &opts).unwrap();
        for i in 0..20 {
            let s: f64 = r
                .inputs
                .iter()
                .map(|row| row.normalized.shapley.draws.as_ref().unwrap()[i])
                .sum();
            let var = r.variance.draws.as_ref().unwrap()[i];
            if var > 0.0 {
                assert!((s - 1.0).abs() < 1e-9, "draw {i}: {s}");
            }
        }
        let mut buf = Vec::new();
        r.write_draws_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 20 * 5);
    }

    #[test]
    fn sampled_mode_is_reproducible_and_nonnegative() {
        let mut rng = seeded(2);
        let e = ensemble(
            (0..10).map(|_| random_forest(&mut rng, 4, 4, 3)).collect(),
            1.0,
        );
        let opts = ReportOptions {
            shapley: ShapleyMode::Sampled,
            m: 2,
            seed: 5,
            ..Default::default()
        };
        let a = assemble_report(&e, &opts).unwrap();
        let b = assemble_report(&e, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metadata.shapley, "sampled");
        assert!(a
            .inputs
            .iter()
            .all(|r| r.raw.shapley.lo >= 0.0 && r.normalized.shapley.lo >= 0.0));
    }

    #[test]
    fn json_and_text_carry_the_same_numbers() {
        let mut rng = seeded(3);
        let e = ensemble(
            (0..5).map(|_| random_forest(&mut rng, 3, 3, 3)).collect(),
            1.7,
        );
        let r = assemble_report(&e, &ReportOptions::default()).unwrap();
        let back = SensitivityReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let text = r.to_text();
        for row in &r.inputs {
            for e in [&row.raw.shapley, &row.normalized.total] {
                assert!(text.contains(&e.point.to_string()));
                assert!(text.contains(&e.hi.to_string()));
            }
        }
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["V", "T", "S", "normalized", "input"] {
            assert!(json["inputs"][0].get(key).is_some(), "{key}");
        }
        for key in ["point", "lo", "hi"] {
            assert!(json["inputs"][0]["normalized"]["S"].get(key).is_some());
        }
    }

    #[test]
    fn plot_csv_has_p_rows_per_index() {
        let mut rng = seeded(4);
        let e = ensemble(
            (0..3).map(|_| random_forest(&mut rng, 6, 3, 2)).collect(),
            1.0,
        );
        let r = assemble_report(&e, &ReportOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_plot_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "input,index,point,lo,hi");
        for k in ["V", "T", "S"] {
            assert_eq!(
                lines
                    .iter()
                    .filter(|l| l.split(',').nth(1) == Some(k))
                    .count(),
                6
            );
        }
        assert!(r.write_draws_csv(Vec::new()).is_err());
    }

    #[test]
    fn options_are_validated() {
        let e = ensemble(vec![interaction()], 1.0);
        for bad in [
            ReportOptions {
                m: 0,
                ..Default::default()
            },
            ReportOptions {
                levels: vec![],
                ..Default::default()
            },
            ReportOptions {
                levels: vec![0.0, 0.5],
                ..Default::default()
            },
        ] {
            assert!(assemble_report(&e, &bad).is_err());
        }
        let empty =
            PosteriorEnsemble::new(2, vec![], vec![AffineMap::IDENTITY; 2], AffineMap::IDENTITY)
                .unwrap();
        assert!(matches!(
            assemble_report(&empty, &ReportOptions::default()),
            Err(Error::EmptyEnsemble)
        ));
    }

    #[test]
    fn pooled_normalization_divides_by_mean_variance() {
        let mut rng = seeded(5);
        let e = ensemble(
            (0..4).map(|_| random_forest(&mut rng, 3, 3, 3)).collect(),
            1.0,
        );
        let opts = ReportOptions {
            normalization: Normalization::Pooled,
            ..Default::default()
        };
        let r = assemble_report(&e, &opts).unwrap();
        let v = r.variance.point;
        for row in &r.inputs {
            assert!((row.normalized.main.point * v - row.raw.main.point).abs() < 1e-12);
        }
    }
}
