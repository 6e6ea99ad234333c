//! The `bipop` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use bipop_core::archive::read_records_json;
use bipop_core::config::{ConfigError, RunConfig};
use bipop_core::driver::{self, DriverError, TRACE_HV_REFERENCE};
use bipop_core::experiments::{self, ExperimentError};
use bipop_core::metrics::{self, Bounds};
use bipop_core::{Archive, ArchiveRecord};

#[derive(Parser)]
#[command(name = "bipop", version, about = "Bi-population surrogate-assisted architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps concurrent evaluation workers.
    #[arg(long)]
    max_parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the search and write archive.csv, pareto.json, trace.csv, config.json.
    Search(Common),
    /// Compare initial-population samplers by entropy and hypervolume.
    SampleCompare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: uniform, random, stratified, latin_hypercube, or all.
        #[arg(long, default_value = "all")]
        methods: String,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Kendall's tau grid of {regression, pairwise} x {random, uniform}.
    SurrogateEval {
        #[command(flatten)]
        common: Common,
        /// Overrides `surrogate_eval.seeds`.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Compute a metric over an archive.csv or pareto.json file.
    Metrics {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
        /// Reference point `r1,r2` in raw objectives; without it HV uses
        /// min-max normalized objectives and (1.05, 1.05).
        #[arg(long, value_parser = parse_pair)]
        reference: Option<(f64, f64)>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Second archive for `ktau`.
        #[arg(long)]
        other: Option<PathBuf>,
        /// Also write the result row to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Hv,
    Entropy,
    Ktau,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected r1,r2")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    Ok((a, b))
}

/// Failure with its exit status: 2 usage/config, 3 backend, 1 otherwise.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e)
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        let code = match &e {
            DriverError::Config(_) | DriverError::Sampling(_) => 2,
            DriverError::Backend(_) | DriverError::NothingEvaluated => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Config(_)
            | ExperimentError::Sampling(_)
            | ExperimentError::UnknownMethod(_)
            | ExperimentError::InsufficientPool { .. } => 2,
            ExperimentError::Backend(_) => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(p) = common.max_parallel {
        cfg.max_parallel = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut buf = Vec::new();
    experiments::write_rows(&mut buf, rows)?;
    write_file(path, &buf)
}

fn write_config_echo(dir: &Path, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let path = dir.join("config.json");
    write_file(&path, format!("{}\n", cfg.to_json_pretty()).as_bytes())?;
    Ok(path)
}

fn evaluator_for(cfg: &RunConfig) -> Result<Box<dyn bipop_core::Evaluator>, Failure> {
    let space = cfg.resolved_space()?;
    driver::build_evaluator(&cfg.evaluator, &space).map_err(|e| Failure {
        code: 3,
        message: format!("evaluator backend unavailable: {e}"),
    })
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_search(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let evaluator = evaluator_for(&cfg)?;
    let outcome = driver::run_moea_bus(&cfg, evaluator.as_ref())?;
    let paths = driver::write_run_outputs(&common.out, &cfg, &outcome)?;
    println!(
        "search finished: {} real evaluations, archive {}, pareto front {}",
        outcome.evaluations,
        outcome.archive.len(),
        outcome.pareto.len()
    );
    report(&paths);
    Ok(())
}

fn cmd_sample_compare(common: &Common, methods: &str, seeds: usize) -> Result<(), Failure> {
    let methods = experiments::parse_methods(methods)?;
    if seeds == 0 {
        return Err(Failure::usage("--seeds must be positive"));
    }
    let cfg = load_config(common)?;
    let evaluator = evaluator_for(&cfg)?;
    let rows = experiments::sample_compare(&cfg, &methods, seeds, evaluator.as_ref())?;
    create_dir(&common.out)?;
    let table = common.out.join("sample_compare.csv");
    write_rows(&table, &rows)?;
    let echo = write_config_echo(&common.out, &cfg)?;
    for m in &methods {
        let pick = |f: fn(&experiments::SampleCompareRow) -> f64| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.method == *m).map(f).collect();
            experiments::mean_std(&xs)
        };
        let (e, es) = pick(|r| r.entropy);
        let (me, mes) = pick(|r| r.madds_entropy);
        let (h, hs) = pick(|r| r.hv);
        println!("{m:<16} entropy {e:.4} ± {es:.4}   madds entropy {me:.4} ± {mes:.4}   hv {h:.4} ± {hs:.4}");
    }
    report(&[table, echo]);
    Ok(())
}

fn cmd_surrogate_eval(common: &Common, seeds: Option<usize>) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(s) = seeds {
        cfg.surrogate_eval.seeds = s;
        cfg.validate()?;
    }
    let evaluator = evaluator_for(&cfg)?;
    let rep = experiments::surrogate_eval(&cfg, evaluator.as_ref())?;
    create_dir(&common.out)?;
    let runs = common.out.join("ktau_runs.csv");
    let summary = common.out.join("ktau_summary.csv");
    write_rows(&runs, &rep.rows)?;
    write_rows(&summary, &rep.summary)?;
    let echo = write_config_echo(&common.out, &cfg)?;
    for s in &rep.summary {
        println!(
            "{:<10} {:<8} ktau {:.4} ± {:.4} ({} seeds)",
            format!("{:?}", s.surrogate).to_lowercase(),
            format!("{:?}", s.sampling).to_lowercase(),
            s.mean,
            s.std,
            s.seeds
        );
    }
    report(&[runs, summary, echo]);
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<ArchiveRecord>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::usage(format!("cannot open {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        read_records_json(file)
    } else {
        Archive::read_csv(file).map(|a| a.records().to_vec())
    };
    parsed.map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn cmd_metrics(
    archive: &Path,
    metric: Metric,
    reference: Option<(f64, f64)>,
    bins: usize,
    other: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let records = read_records(archive)?;
    let points: Vec<[f64; 2]> = records.iter().map(ArchiveRecord::point).collect();
    let (name, value, params) = match metric {
        Metric::Hv => match reference {
            Some((r1, r2)) => (
                "hv",
                metrics::hypervolume_2d(&points, [r1, r2]),
                format!("reference={r1};{r2} normalized=false points={}", points.len()),
            ),
            None => {
                let bounds = Bounds::from_points(&points);
                let normalized: Vec<[f64; 2]> = match bounds {
                    Some(b) => points.iter().map(|&p| b.normalize(p)).collect(),
                    None => Vec::new(),
                };
                let [r1, r2] = TRACE_HV_REFERENCE;
                (
                    "hv",
                    metrics::hypervolume_2d(&normalized, TRACE_HV_REFERENCE),
                    format!("reference={r1};{r2} normalized=true points={}", points.len()),
                )
            }
        },
        Metric::Entropy => {
            let value = metrics::architecture_entropy(&points, bins).map_err(Failure::usage)?;
            ("entropy", value, format!("bins={bins} points={}", points.len()))
        }
        Metric::Ktau => {
            let other = other.ok_or_else(|| Failure::usage("ktau needs --other <archive>"))?;
            let theirs = Archive::from_records(read_records(other)?);
            let (a, b): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter_map(|r| theirs.get(&r.genome).map(|o| (r.error_rate, o.error_rate)))
                .unzip();
            let value = bipop_core::kendall_tau(&a, &b).map_err(Failure::usage)?;
            ("ktau", value, format!("shared={}", a.len()))
        }
    };
    let text = format!("metric,value,parameters\n{name},{value},{params}\n");
    print!("{text}");
    if let Some(path) = out {
        write_file(path, text.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Search(common) => cmd_search(common),
        Command::SampleCompare {
            common,
            methods,
            seeds,
        } => cmd_sample_compare(common, methods, *seeds),
        Command::SurrogateEval { common, seeds } => cmd_surrogate_eval(common, *seeds),
        Command::Metrics {
            archive,
            metric,
            reference,
            bins,
            other,
            out,
        } => cmd_metrics(archive, *metric, *reference, *bins, other.as_deref(), out.as_deref()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Diagnostics go to stderr.
pub fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => {
            info!("done");
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
