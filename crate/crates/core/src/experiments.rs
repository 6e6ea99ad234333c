//! Ablation experiments: initial-population sampling comparison and the
//! surrogate x sampling Kendall's tau grid.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, EvaluatorSpec, RunConfig};
use crate::driver::TRACE_HV_REFERENCE;
use crate::evaluation::{evaluate_batch, EvalError, EvaluationResult, Evaluator, TabularEvaluator};
use crate::metrics::{architecture_entropy, hypervolume_2d, marginal_entropy, normalize_points, MetricsError};
use crate::sampling::{self, BaselineMethod, SamplePool, SamplingError, DEFAULT_STRATA};
use crate::seed::{self, stream};
use crate::space::{Genome, SearchSpaceConfig};
use crate::surrogate::{self, kendall_tau, SurrogateError, SurrogateKind};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("evaluator backend: {0}")]
    Backend(#[from] EvalError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unknown sampling method {0:?} (expected uniform, random, stratified, latin_hypercube or all)")]
    UnknownMethod(String),
    #[error("pool holds {available} genomes, the split needs {needed}")]
    InsufficientPool { needed: usize, available: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    Uniform,
    Random,
    Stratified,
    LatinHypercube,
}

impl SampleMethod {
    pub const ALL: [SampleMethod; 4] = [
        SampleMethod::Uniform,
        SampleMethod::Random,
        SampleMethod::Stratified,
        SampleMethod::LatinHypercube,
    ];
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMethod::Uniform => "uniform",
            SampleMethod::Random => "random",
            SampleMethod::Stratified => "stratified",
            SampleMethod::LatinHypercube => "latin_hypercube",
        })
    }
}

impl FromStr for SampleMethod {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SampleMethod::Uniform),
            "random" => Ok(SampleMethod::Random),
            "stratified" => Ok(SampleMethod::Stratified),
            "latin_hypercube" | "lhs" => Ok(SampleMethod::LatinHypercube),
            other => Err(ExperimentError::UnknownMethod(other.to_string())),
        }
    }
}

/// Parses a comma-separated method list; `all` expands to every method.
pub fn parse_methods(list: &str) -> Result<Vec<SampleMethod>, ExperimentError> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let names: Vec<SampleMethod> = if name == "all" {
            SampleMethod::ALL.to_vec()
        } else {
            vec![name.parse()?]
        };
        for m in names {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        return Err(ExperimentError::UnknownMethod(list.to_string()));
    }
    Ok(out)
}

/// Candidate pool for one experiment seed: the table's genomes for a
/// tabular backend, otherwise `pool_size` random genomes.
pub fn experiment_pool(
    cfg: &RunConfig,
    space: &SearchSpaceConfig,
    seed: u64,
) -> Result<SamplePool, ExperimentError> {
    match &cfg.evaluator {
        EvaluatorSpec::Tabular { path } => {
            let table = TabularEvaluator::from_path(path)?;
            Ok(SamplePool::from_genomes(space, table.genomes().iter().cloned())?)
        }
        EvaluatorSpec::Synthetic(_) => Ok(SamplePool::generate(space, cfg.pool_size, seed)?),
    }
}

fn evaluate_points(
    genomes: &[Genome],
    evaluator: &dyn Evaluator,
    max_parallel: usize,
) -> Vec<(Genome, EvaluationResult)> {
    genomes
        .iter()
        .zip(evaluate_batch(genomes, evaluator, max_parallel))
        .filter_map(|(g, r)| match r {
            Ok(res) => Some((g.clone(), res)),
            Err(e) => {
                warn!("evaluation of {g} failed, skipped: {e}");
                None
            }
        })
        .collect()
}

/// Draws `n1 + n2` genomes with the given method.
pub fn initial_population(
    pool: &SamplePool,
    space: &SearchSpaceConfig,
    method: SampleMethod,
    cfg: &RunConfig,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<Vec<Genome>, ExperimentError> {
    let n = n1 + n2;
    let baseline = |m| sampling::baseline_sample(pool, space, m, n, seed::derive_seed(seed, &[stream::BASELINE]));
    Ok(match method {
        SampleMethod::Uniform => {
            let partition = sampling::partition_regions(pool, cfg.regions)?;
            let (p1, p2) = sampling::uniform_split_populations(
                pool,
                &partition,
                n1,
                n2,
                cfg.extreme_per_side,
                seed::derive_seed(seed, &[stream::SPLIT]),
            )?;
            p1.into_iter().chain(p2).collect()
        }
        SampleMethod::Random => baseline(BaselineMethod::Random)?,
        SampleMethod::Stratified => baseline(BaselineMethod::Stratified {
            strata: DEFAULT_STRATA,
        })?,
        SampleMethod::LatinHypercube => baseline(BaselineMethod::LatinHypercube)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCompareRow {
    pub method: SampleMethod,
    pub seed: usize,
    pub size: usize,
    pub entropy: f64,
    /// Entropy of the MAdds marginal alone.
    pub madds_entropy: f64,
    pub hv: f64,
}

/// Entropy and HV of the initial populations drawn by each method.
///
/// All three metrics normalize with the min-max bounds of the sampled set
/// itself; HV uses the reference point (1.05, 1.05).
pub fn sample_compare(
    cfg: &RunConfig,
    methods: &[SampleMethod],
    seeds: usize,
    evaluator: &dyn Evaluator,
) -> Result<Vec<SampleCompareRow>, ExperimentError> {
    let space = cfg.resolved_space()?;
    let mut rows = Vec::with_capacity(methods.len() * seeds);
    for s in 0..seeds {
        let seed_s = seed::derive_seed(cfg.seed, &[stream::SAMPLE_COMPARE, s as u64]);
        let pool = experiment_pool(cfg, &space, seed::derive_seed(seed_s, &[stream::POOL]))?;
        for &method in methods {
            let genomes = initial_population(&pool, &space, method, cfg, cfg.n1, cfg.n2, seed_s)?;
            let points: Vec<[f64; 2]> = evaluate_points(&genomes, evaluator, cfg.max_parallel)
                .iter()
                .map(|(_, r)| [r.error_rate, r.madds])
                .collect();
            let normalized = normalize_points(&points);
            let madds: Vec<f64> = points.iter().map(|p| p[1]).collect();
            rows.push(SampleCompareRow {
                method,
                seed: s,
                size: points.len(),
                entropy: architecture_entropy(&points, cfg.bins)?,
                madds_entropy: marginal_entropy(&madds, cfg.bins)?,
                hv: hypervolume_2d(&normalized, TRACE_HV_REFERENCE),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSampling {
    Random,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtauRow {
    pub surrogate: SurrogateKind,
    pub sampling: TrainSampling,
    pub seed: usize,
    pub ktau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtauSummary {
    pub surrogate: SurrogateKind,
    pub sampling: TrainSampling,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEvalReport {
    pub rows: Vec<KtauRow>,
    pub summary: Vec<KtauSummary>,
}

impl SurrogateEvalReport {
    pub fn mean(&self, surrogate: SurrogateKind, sampling: TrainSampling) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.surrogate == surrogate && s.sampling == sampling)
            .map(|s| s.mean)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const GRID: [(SurrogateKind, TrainSampling); 4] = [
    (SurrogateKind::Regression, TrainSampling::Random),
    (SurrogateKind::Regression, TrainSampling::Uniform),
    (SurrogateKind::Pairwise, TrainSampling::Random),
    (SurrogateKind::Pairwise, TrainSampling::Uniform),
];

/// Kendall's tau of each surrogate on a held-out test set, for random and
/// uniform training sets. Uniform training sets keep the `n1 : n2` ratio of
/// the config.
pub fn surrogate_eval(cfg: &RunConfig, evaluator: &dyn Evaluator) -> Result<SurrogateEvalReport, ExperimentError> {
    let space = cfg.resolved_space()?;
    let spec = cfg.surrogate_eval;
    let train_n1 = ((spec.train_size * cfg.n1) as f64 / (cfg.n1 + cfg.n2) as f64).round() as usize;
    let train_n1 = train_n1.clamp(1, spec.train_size - 1);
    let train_n2 = spec.train_size - train_n1;
    let mut rows = Vec::with_capacity(4 * spec.seeds);
    for s in 0..spec.seeds {
        let seed_s = seed::derive_seed(cfg.seed, &[stream::SURROGATE_EVAL, s as u64]);
        let pool = experiment_pool(cfg, &space, seed::derive_seed(seed_s, &[stream::POOL]))?;
        let needed = spec.train_size + spec.test_size;
        if pool.len() < needed {
            return Err(ExperimentError::InsufficientPool {
                needed,
                available: pool.len(),
            });
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut seed::rng_from_seed(seed::derive_seed(seed_s, &[stream::TEST_SET])));
        let mut in_test = vec![false; pool.len()];
        for &i in &order[..spec.test_size] {
            in_test[i] = true;
        }
        let test: Vec<Genome> = order[..spec.test_size]
            .iter()
            .map(|&i| pool.members[i].genome.clone())
            .collect();
        let rest = SamplePool {
            members: (0..pool.len())
                .filter(|&i| !in_test[i])
                .map(|i| pool.members[i].clone())
                .collect(),
        };
        let train_seed = seed::derive_seed(seed_s, &[stream::TRAIN_SET]);
        let random_train = initial_population(&rest, &space, SampleMethod::Random, cfg, train_n1, train_n2, train_seed)?;
        let uniform_train =
            initial_population(&rest, &space, SampleMethod::Uniform, cfg, train_n1, train_n2, train_seed)?;

        let test_eval = evaluate_points(&test, evaluator, cfg.max_parallel);
        let test_genomes: Vec<Genome> = test_eval.iter().map(|(g, _)| g.clone()).collect();
        let test_errors: Vec<f64> = test_eval.iter().map(|(_, r)| r.error_rate).collect();
        let as_pairs = |gs: &[Genome]| -> Vec<(Genome, f64)> {
            evaluate_points(gs, evaluator, cfg.max_parallel)
                .into_iter()
                .map(|(g, r)| (g, r.error_rate))
                .collect()
        };
        let random_pairs = as_pairs(&random_train);
        let uniform_pairs = as_pairs(&uniform_train);
        let surrogate_seed = seed::derive_seed(seed_s, &[stream::SURROGATE]);
        for (kind, sampling) in GRID {
            let train = match sampling {
                TrainSampling::Random => &random_pairs,
                TrainSampling::Uniform => &uniform_pairs,
            };
            let model = surrogate::train_surrogate(
                kind,
                train,
                &cfg.surrogate.hyper,
                cfg.surrogate.augment_swapped,
                surrogate_seed,
            )?;
            let strengths = model.strengths(&test_genomes)?;
            rows.push(KtauRow {
                surrogate: kind,
                sampling,
                seed: s,
                ktau: kendall_tau(&strengths.0, &test_errors)?,
            });
        }
    }
    let summary = GRID
        .iter()
        .map(|&(surrogate, sampling)| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.surrogate == surrogate && r.sampling == sampling)
                .map(|r| r.ktau)
                .collect();
            let (mean, std) = mean_std(&xs);
            KtauSummary {
                surrogate,
                sampling,
                mean,
                std,
                seeds: xs.len(),
            }
        })
        .collect();
    Ok(SurrogateEvalReport { rows, summary })
}

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpaceChoice;
    use crate::driver::build_evaluator;

    #[test]
    fn method_parsing() {
        assert_eq!(parse_methods("all").unwrap(), SampleMethod::ALL.to_vec());
        assert_eq!(
            parse_methods("random, uniform,random").unwrap(),
            vec![SampleMethod::Random, SampleMethod::Uniform]
        );
        assert!(matches!(parse_methods("sobol"), Err(ExperimentError::UnknownMethod(_))));
        assert!(parse_methods("").is_err());
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn sample_compare_grid_size() {
        let mut cfg = RunConfig::with_iterations(0);
        cfg.pool_size = 600;
        let space = cfg.resolved_space().unwrap();
        let ev = build_evaluator(&cfg.evaluator, &space).unwrap();
        let rows = sample_compare(&cfg, &SampleMethod::ALL, 2, ev.as_ref()).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.size == 100 && r.hv > 0.0 && r.entropy > 0.0));
        let one = sample_compare(&cfg, &[SampleMethod::Random], 1, ev.as_ref()).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], rows[1]);
    }

    #[test]
    fn surrogate_eval_small_grid() {
        let mut cfg = RunConfig::with_iterations(0);
        cfg.space = SpaceChoice::Named("tiny".into());
        cfg.pool_size = 400;
        cfg.surrogate_eval.seeds = 1;
        cfg.surrogate_eval.train_size = 60;
        cfg.surrogate_eval.test_size = 100;
        cfg.surrogate.hyper.epochs = 30;
        let space = cfg.resolved_space().unwrap();
        let ev = build_evaluator(&cfg.evaluator, &space).unwrap();
        let report = surrogate_eval(&cfg, ev.as_ref()).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.summary.len(), 4);
        assert!(report.summary.iter().all(|s| s.std == 0.0 && s.seeds == 1));
        cfg.surrogate_eval.test_size = 390;
        assert!(matches!(
            surrogate_eval(&cfg, ev.as_ref()),
            Err(ExperimentError::InsufficientPool { .. })
        ));
    }
}
