//! The `shapfor` command line: fit, analyze, benchmark, oracle and generate.
//!
//! Settings resolve in three layers. Flags win over a TOML `--config` file,
//! which wins over built-in defaults. The file may carry a top-level `seed`
//! and the sections `[sampler]`, `[analysis]` and `[oracle]`, each holding
//! the fields of [`SamplerConfig`], [`ReportOptions`] and [`OracleOptions`].

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{run_suite, BenchmarkOptions, SUITES};
use crate::data::{default_names, nearest_neighbour_box, read_csv, write_csv, Table};
use crate::error::{Error, Result};
use crate::forest::{io, PosteriorEnsemble};
use crate::oracle::{oracle_report, OracleOptions};
use crate::sampler::{fit_with_progress, FitDiagnostics, SamplerConfig, Sparsity, SplitnetMode};
use crate::sensitivity::{
    assemble_report, Normalization, ReportOptions, SensitivityReport, ShapleyMode, SubsetRule,
};
use crate::testbed::{generate, reference_values, GenerationSpec, TestFunction, TestKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "shapfor",
    version,
    about = "Sobol' indices and Shapley effects from sum-of-trees posteriors"
)]
pub struct Cli {
    /// Worker threads; defaults to every available core.
    #[arg(long, global = true, env = "SHAPFOR_THREADS")]
    pub threads: Option<usize>,
    /// TOML file with `seed`, `[sampler]`, `[analysis]` and `[oracle]`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the sum-of-trees model to a CSV and write the ensemble file.
    Fit(FitArgs),
    /// Turn an ensemble file into a sensitivity report.
    Analyze(AnalyzeArgs),
    /// Run a named benchmark scenario and write its metrics.
    Benchmark(BenchmarkArgs),
    /// Monte-Carlo indices of a test function or a tabulated CSV.
    Oracle(OracleArgs),
    /// Sample a noisy dataset from a test function.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row.
    pub data: PathBuf,
    /// Response column name.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Ensemble file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trees: Option<usize>,
    /// Retained posterior draws.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Burn-in sweeps.
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// `off`, `on` or a Dirichlet concentration `a`.
    #[arg(long)]
    pub sparsity: Option<String>,
    /// `grid`, `grid:N` or `observed`.
    #[arg(long)]
    pub splitnet: Option<String>,
    /// Print one JSON line per sweep to stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Ensemble file written by `fit`.
    pub ensemble: PathBuf,
    /// Output directory for report.json, report.txt and plot.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Subsets per draw for sampled Shapley effects.
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma-separated quantile levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// `auto`, `exact` or `sampled`.
    #[arg(long)]
    pub shapley: Option<String>,
    /// `coin-flip` or `size-stratified`.
    #[arg(long)]
    pub subset_rule: Option<String>,
    /// `per-draw` or `pooled`.
    #[arg(long)]
    pub normalization: Option<String>,
    /// Also write draws.csv with every per-draw value.
    #[arg(long)]
    pub draws_csv: bool,
    /// Comma-separated input names; by default taken from the fit summary.
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// One of table-va1-oracle, friedman-fit, morris-wide, invariant-sweep.
    pub suite: String,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for `<suite>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Small budgets for smoke runs.
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Test function name; omit when `--csv` is given.
    pub function: Option<String>,
    /// Tabulated function values, looked up by nearest neighbour.
    #[arg(long, conflicts_with = "function")]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Active inputs of the test function.
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Total inputs of the test function; defaults to `d`.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_outer: Option<usize>,
    #[arg(long)]
    pub n_inner: Option<usize>,
    #[arg(long)]
    pub n_subsets: Option<usize>,
    #[arg(long)]
    pub n_variance: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub function: String,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    #[arg(long)]
    pub p: Option<usize>,
    /// Rows; defaults to 50 p.
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise variance as a fraction of the function variance.
    #[arg(long, default_value_t = 0.25)]
    pub noise_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the tabulated reference indices as JSON.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub sampler: SamplerConfig,
    pub analysis: ReportOptions,
    pub oracle: OracleOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// What `fit` records next to the ensemble file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub input_names: Vec<String>,
    pub response: String,
    pub n: usize,
    pub p: usize,
    pub ensemble_sha256: String,
    pub acceptance_rate: f64,
    pub birth_acceptance: f64,
    pub death_acceptance: f64,
    pub sigma2_mean: f64,
    pub split_probs: Vec<f64>,
    pub config: SamplerConfig,
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    require_file(path)?;
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn parse_sparsity(s: &str) -> Result<Sparsity> {
    match s {
        "off" => Ok(Sparsity::Off),
        "on" => Ok(Sparsity::On { a: 1.0 }),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite() && *a > 0.0)
            .map(|a| Sparsity::On { a })
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "sparsity `{s}` is not off, on or a positive number"
                ))
            }),
    }
}

fn summary_path(ensemble: &Path) -> PathBuf {
    let mut s = ensemble.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Effective sampler settings after applying the file and the flags.
pub fn sampler_config(file: &RunConfig, a: &FitArgs) -> Result<SamplerConfig> {
    let mut c = file.sampler.clone();
    if let Some(s) = file.seed {
        c.seed = s;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(t) = a.trees {
        c.num_trees = t;
    }
    if let Some(d) = a.draws {
        c.n_draw = d;
    }
    if let Some(b) = a.burn {
        c.n_burn = b;
    }
    if let Some(t) = a.thin {
        c.thin = t;
    }
    if let Some(s) = &a.sparsity {
        c.sparsity = parse_sparsity(s)?;
    }
    if let Some(s) = &a.splitnet {
        c.splitnet = s.parse::<SplitnetMode>()?;
    }
    c.validate()?;
    Ok(c)
}

/// Effective report settings after applying the file and the flags.
pub fn report_options(file: &RunConfig, a: &AnalyzeArgs) -> Result<ReportOptions> {
    let mut o = file.analysis.clone();
    if let Some(s) = file.seed {
        o.seed = s;
    }
    if let Some(s) = a.seed {
        o.seed = s;
    }
    if let Some(m) = a.m {
        o.m = m;
    }
    if let Some(l) = &a.levels {
        o.levels = l.clone();
    }
    if let Some(s) = &a.shapley {
        o.shapley = s.parse::<ShapleyMode>()?;
    }
    if let Some(s) = &a.subset_rule {
        o.subset_rule = s.parse::<SubsetRule>()?;
    }
    if let Some(s) = &a.normalization {
        o.normalization = s.parse::<Normalization>()?;
    }
    o.keep_draws |= a.draws_csv;
    o.validate()?;
    Ok(o)
}

pub fn oracle_options(file: &RunConfig, a: &OracleArgs) -> Result<OracleOptions> {
    let mut o = file.oracle.clone();
    if let Some(s) = file.seed {
        o.seed = s;
    }
    if let Some(s) = a.seed {
        o.seed = s;
    }
    if let Some(n) = a.n_outer {
        o.budget.n_outer = n;
    }
    if let Some(n) = a.n_inner {
        o.budget.n_inner = n;
    }
    if let Some(n) = a.n_subsets {
        o.budget.n_subsets = n;
    }
    if let Some(n) = a.n_variance {
        o.n_variance = n;
    }
    if let Some(l) = &a.levels {
        o.levels = l.clone();
    }
    Ok(o)
}

pub fn cmd_fit(file: &RunConfig, a: &FitArgs, out: &mut (dyn Write + Send)) -> Result<FitSummary> {
    let config = sampler_config(file, a)?;
    require_file(&a.data)?;
    let Table {
        input_names,
        response,
        data,
    } = read_csv(&a.data, &a.response)?;
    let progress = a.progress;
    let (ensemble, diag) = fit_with_progress(&data, &config, |s| {
        if progress {
            eprintln!(
                "{}",
                serde_json::to_string(s).expect("progress record serializes")
            );
        }
    })?;
    let text = io::to_string(&ensemble)?;
    write_file(&a.out, text.as_bytes())?;
    let FitDiagnostics {
        moves,
        split_probs,
        sigma2_mean,
        ..
    } = diag;
    let rate = |acc: u64, prop: u64| {
        if prop == 0 {
            0.0
        } else {
            acc as f64 / prop as f64
        }
    };
    let summary = FitSummary {
        p: input_names.len(),
        input_names,
        response,
        n: data.n(),
        ensemble_sha256: sha256_hex(text.as_bytes()),
        acceptance_rate: moves.acceptance_rate(),
        birth_acceptance: rate(moves.birth_accepted, moves.birth_proposed),
        death_acceptance: rate(moves.death_accepted, moves.death_proposed),
        sigma2_mean,
        split_probs,
        config,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    write_file(&summary_path(&a.out), json.as_bytes())?;
    writeln!(out, "{json}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(summary)
}

fn write_report(report: &SensitivityReport, dir: &Path, draws: bool) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("report.json"), report.to_json()?.as_bytes())?;
    write_file(&dir.join("report.txt"), report.to_text().as_bytes())?;
    let mut plot = Vec::new();
    report.write_plot_csv(&mut plot)?;
    write_file(&dir.join("plot.csv"), &plot)?;
    if draws {
        let mut buf = Vec::new();
        report.write_draws_csv(&mut buf)?;
        write_file(&dir.join("draws.csv"), &buf)?;
    }
    Ok(())
}

/// Report for an in-memory ensemble, named and stamped with its settings.
pub fn analyze_ensemble(
    ensemble: &PosteriorEnsemble,
    options: &ReportOptions,
    names: Option<&[String]>,
) -> Result<SensitivityReport> {
    let mut report = assemble_report(ensemble, options)?;
    if let Some(n) = names {
        report.set_input_names(n)?;
    }
    report.metadata.run = Some(serde_json::to_value(options)?);
    Ok(report)
}

pub fn cmd_analyze(
    file: &RunConfig,
    a: &AnalyzeArgs,
    out: &mut (dyn Write + Send),
) -> Result<SensitivityReport> {
    let options = report_options(file, a)?;
    require_file(&a.ensemble)?;
    let ensemble = io::load(&a.ensemble)?;
    let sidecar = summary_path(&a.ensemble);
    let names = match &a.names {
        Some(n) => Some(n.clone()),
        None if sidecar.is_file() => {
            let s: FitSummary = serde_json::from_str(&read_to_string(&sidecar)?)?;
            (s.input_names.len() == ensemble.p()).then_some(s.input_names)
        }
        None => None,
    };
    let report = analyze_ensemble(&ensemble, &options, names.as_deref())?;
    write_report(&report, &a.out, a.draws_csv)?;
    write!(out, "{}", report.to_text()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(report)
}

pub fn cmd_benchmark(a: &BenchmarkArgs, out: &mut (dyn Write + Send)) -> Result<bool> {
    if !SUITES.contains(&a.suite.as_str()) {
        return Err(Error::Unknown {
            kind: "benchmark suite",
            name: a.suite.clone(),
        });
    }
    create_dir(&a.out)?;
    let result = run_suite(
        &a.suite,
        &BenchmarkOptions {
            seed: a.seed,
            quick: a.quick,
        },
    )?;
    let json = serde_json::to_string_pretty(&result)?;
    write_file(&a.out.join(format!("{}.json", a.suite)), json.as_bytes())?;
    writeln!(
        out,
        "{} {} ({:.1} s)",
        a.suite,
        if result.passed { "PASS" } else { "FAIL" },
        result.runtime_secs
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok(result.passed)
}

pub fn cmd_oracle(
    file: &RunConfig,
    a: &OracleArgs,
    out: &mut (dyn Write + Send),
) -> Result<SensitivityReport> {
    let options = oracle_options(file, a)?;
    let (bb, names) = match (&a.function, &a.csv) {
        (Some(name), None) => {
            let kind: TestKind = name.parse()?;
            let f = TestFunction::new(kind, a.d, a.p.unwrap_or(a.d))?;
            (f.black_box(), default_names(f.p))
        }
        (None, Some(path)) => {
            require_file(path)?;
            let t = read_csv(path, &a.response)?;
            (nearest_neighbour_box(&t.data), t.input_names)
        }
        _ => {
            return Err(Error::InvalidConfig(
                "give either a test function name or --csv".into(),
            ))
        }
    };
    let mut report = oracle_report(&bb, &options)?;
    report.set_input_names(&names)?;
    report.metadata.run = Some(serde_json::to_value(&options)?);
    write_report(&report, &a.out, false)?;
    write!(out, "{}", report.to_text()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(report)
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let kind: TestKind = a.function.parse()?;
    let f = TestFunction::new(kind, a.d, a.p.unwrap_or(a.d))?;
    let data = generate(
        &f,
        &GenerationSpec {
            n: a.n,
            noise_ratio: a.noise_ratio,
            seed: a.seed,
        },
    )?;
    let table = Table {
        input_names: default_names(f.p),
        response: "y".into(),
        data,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_csv(&table, &a.out)?;
    if let Some(path) = &a.reference {
        let r = reference_values(kind, a.d)?;
        write_file(path, serde_json::to_string_pretty(&r)?.as_bytes())?;
    }
    writeln!(out, "wrote {} rows to {}", table.data.n(), a.out.display())
        .map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Fit(a) => cmd_fit(&file, a, out).map(drop),
        Command::Analyze(a) => cmd_analyze(&file, a, out).map(drop),
        Command::Benchmark(a) => cmd_benchmark(a, out).map(drop),
        Command::Oracle(a) => cmd_oracle(&file, a, out).map(drop),
        Command::Generate(a) => cmd_generate(a, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return EXIT_VALIDATION;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| dispatch(&cli, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("shapfor").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let file: RunConfig =
            toml::from_str("seed = 5\n[sampler]\nnum_trees = 30\nn_draw = 7\n").unwrap();
        let Command::Fit(a) = parse(&["fit", "d.csv", "--out", "e.txt", "--trees", "12"]).command
        else {
            unreachable!()
        };
        let c = sampler_config(&file, &a).unwrap();
        assert_eq!(
            (c.num_trees, c.n_draw, c.seed, c.n_burn),
            (12, 7, 5, SamplerConfig::default().n_burn)
        );
        let Command::Fit(a) = parse(&["fit", "d.csv", "--out", "e.txt", "--seed", "9"]).command
        else {
            unreachable!()
        };
        assert_eq!(sampler_config(&file, &a).unwrap().seed, 9);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[sampler]\nnum_tree = 3\n").is_err());
    }

    #[test]
    fn sparsity_flag_forms() {
        assert_eq!(parse_sparsity("off").unwrap(), Sparsity::Off);
        assert_eq!(parse_sparsity("on").unwrap(), Sparsity::On { a: 1.0 });
        assert_eq!(parse_sparsity("0.5").unwrap(), Sparsity::On { a: 0.5 });
        assert!(parse_sparsity("-1").is_err());
        assert!(parse_sparsity("lots").is_err());
    }

    #[test]
    fn analyze_flags_resolve() {
        let Command::Analyze(a) = parse(&[
            "analyze",
            "e.txt",
            "--out",
            "o",
            "--m",
            "4",
            "--levels",
            "0.05,0.5,0.95",
            "--normalization",
            "pooled",
            "--shapley",
            "sampled",
            "--subset-rule",
            "size-stratified",
        ])
        .command
        else {
            unreachable!()
        };
        let o = report_options(&RunConfig::default(), &a).unwrap();
        assert_eq!(o.m, 4);
        assert_eq!(o.levels, vec![0.05, 0.5, 0.95]);
        assert_eq!(o.normalization, Normalization::Pooled);
        assert_eq!(o.shapley, ShapleyMode::Sampled);
        assert_eq!(o.subset_rule, SubsetRule::SizeStratified);
    }

    #[test]
    fn exit_codes() {
        let mut sink = Vec::new();
        assert_eq!(run(["shapfor", "--help"], &mut sink), EXIT_OK);
        assert_eq!(run(["shapfor", "bogus"], &mut sink), EXIT_VALIDATION);
        assert_eq!(
            run(["shapfor", "generate", "nope", "--out", "x.csv"], &mut sink),
            EXIT_VALIDATION
        );
        assert_eq!(
            run(
                ["shapfor", "fit", "/no/such.csv", "--out", "e.txt"],
                &mut sink
            ),
            EXIT_VALIDATION
        );
        assert_eq!(
            run(
                ["shapfor", "benchmark", "invariant-sweep", "--out", "o"],
                &mut sink
            ),
            EXIT_VALIDATION
        );
    }

    #[test]
    fn sha_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
