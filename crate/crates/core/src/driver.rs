//! The bi-population search loop: uniform initial split, surrogate refresh,
//! two surrogate-only sub-searches, real evaluation of their elites and
//! elite migration.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::archive::{write_records_json, Archive, ArchiveError, ArchiveRecord, Source};
use crate::config::{ConfigError, EvaluatorSpec, MigrationMode, RunConfig};
use crate::evaluation::{
    evaluate_batch, CountingEvaluator, EvalError, Evaluator, SyntheticEvaluator, TabularEvaluator,
};
use crate::metrics::{architecture_entropy, hypervolume_2d, Bounds};
use crate::moea::{self, Individual, MoeaError, ObjectiveVector, SubSearchParams};
use crate::sampling::{self, SamplePool, SamplingError};
use crate::seed::{self, stream};
use crate::space::{Genome, SearchSpaceConfig};
use crate::surrogate::{self, SurrogateError};

/// Reference point of the trace hypervolume, in normalized objectives.
pub const TRACE_HV_REFERENCE: [f64; 2] = [1.05, 1.05];

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("evaluator backend: {0}")]
    Backend(#[from] EvalError),
    #[error("no initial architecture could be evaluated")]
    NothingEvaluated,
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Moea(#[from] MoeaError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Builds the evaluator named by the config.
pub fn build_evaluator(
    spec: &EvaluatorSpec,
    space: &SearchSpaceConfig,
) -> Result<Box<dyn Evaluator>, EvalError> {
    Ok(match spec {
        EvaluatorSpec::Synthetic(oracle) => Box::new(SyntheticEvaluator::new(space.clone(), oracle.clone())?),
        EvaluatorSpec::Tabular { path } => Box::new(TabularEvaluator::from_path(path)?),
    })
}

/// Appends `extra` to `base`, skipping genomes already present.
fn union_into(base: &mut Vec<Genome>, extra: &[Genome]) {
    let mut seen: HashSet<Genome> = base.iter().cloned().collect();
    for g in extra {
        if seen.insert(g.clone()) {
            base.push(g.clone());
        }
    }
}

/// Merges evaluated elites into the populations. Order is preserved and
/// duplicates are dropped.
pub fn migrate(
    p1: &[Genome],
    p2: &[Genome],
    p1_star: &[Genome],
    p2_star: &[Genome],
    mode: MigrationMode,
) -> (Vec<Genome>, Vec<Genome>) {
    let mut next1 = p1.to_vec();
    let mut next2 = p2.to_vec();
    union_into(&mut next1, p1_star);
    if mode == MigrationMode::Mutual {
        union_into(&mut next1, p2_star);
    }
    union_into(&mut next2, p1_star);
    union_into(&mut next2, p2_star);
    (next1, next2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub archive_size: usize,
    pub front_size: usize,
    pub hv: f64,
    pub entropy: f64,
    pub evaluations: usize,
}

/// Population contents after the migration step of one iteration
/// (iteration 0 holds the initial split).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub p1: Vec<Genome>,
    pub p2: Vec<Genome>,
    pub p1_elites: Vec<Genome>,
    pub p2_elites: Vec<Genome>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub archive: Archive,
    pub pareto: Vec<ArchiveRecord>,
    pub trace: Vec<TraceRow>,
    pub history: Vec<IterationSnapshot>,
    /// Real evaluator calls made.
    pub evaluations: usize,
    /// Sub-searches that found fewer novel elites than requested.
    pub shortfalls: usize,
}

fn individuals(pop: &[Genome], archive: &Archive) -> Vec<Individual> {
    pop.iter()
        .filter_map(|g| archive.get(g))
        .map(|r| Individual {
            genome: r.genome.clone(),
            objectives: ObjectiveVector::new(r.error_rate, r.madds),
        })
        .collect()
}

/// Evaluates `genomes`, archives the successes and returns them.
fn evaluate_into(
    genomes: &[Genome],
    source_of: impl Fn(usize) -> Source,
    iteration: usize,
    evaluator: &dyn Evaluator,
    max_parallel: usize,
    archive: &mut Archive,
) -> Vec<Genome> {
    let results = evaluate_batch(genomes, evaluator, max_parallel);
    let mut ok = Vec::with_capacity(genomes.len());
    for (i, (g, r)) in genomes.iter().zip(results).enumerate() {
        match r {
            Ok(res) => {
                archive.push(ArchiveRecord {
                    genome: g.clone(),
                    error_rate: res.error_rate,
                    madds: res.madds,
                    iteration,
                    source: source_of(i),
                });
                ok.push(g.clone());
            }
            Err(e) => warn!("iteration {iteration}: evaluation of {g} failed, skipped: {e}"),
        }
    }
    ok
}

fn trace_row(
    iteration: usize,
    archive: &Archive,
    bounds: &Bounds,
    bins: usize,
    evaluations: usize,
) -> TraceRow {
    let front: Vec<[f64; 2]> = archive
        .pareto_front()
        .iter()
        .map(|r| bounds.normalize(r.point()))
        .collect();
    TraceRow {
        iteration,
        archive_size: archive.len(),
        front_size: front.len(),
        hv: hypervolume_2d(&front, TRACE_HV_REFERENCE),
        entropy: architecture_entropy(&archive.points(), bins).unwrap_or(0.0),
        evaluations,
    }
}

/// Runs the full search with the evaluator the config names.
pub fn run_from_config(cfg: &RunConfig) -> Result<RunOutcome, DriverError> {
    let space = cfg.resolved_space()?;
    let evaluator = build_evaluator(&cfg.evaluator, &space)?;
    run_moea_bus(cfg, evaluator.as_ref())
}

pub fn run_moea_bus(cfg: &RunConfig, evaluator: &dyn Evaluator) -> Result<RunOutcome, DriverError> {
    cfg.validate()?;
    let space = cfg.resolved_space()?;
    let counter = CountingEvaluator::new(evaluator);
    let master = cfg.seed;

    let pool = SamplePool::generate(&space, cfg.pool_size, seed::derive_seed(master, &[stream::POOL]))?;
    let partition = sampling::partition_regions(&pool, cfg.regions)?;
    let (init1, init2) = sampling::uniform_split_populations(
        &pool,
        &partition,
        cfg.n1,
        cfg.n2,
        cfg.extreme_per_side,
        seed::derive_seed(master, &[stream::SPLIT]),
    )?;
    info!(
        "pool {} genomes, initial populations {} + {}",
        pool.len(),
        init1.len(),
        init2.len()
    );

    let mut archive = Archive::new();
    let initial: Vec<Genome> = init1.iter().chain(&init2).cloned().collect();
    let n1 = init1.len();
    let evaluated = evaluate_into(
        &initial,
        |i| if i < n1 { Source::InitP1 } else { Source::InitP2 },
        0,
        &counter,
        cfg.max_parallel,
        &mut archive,
    );
    if evaluated.is_empty() {
        // Surface the backend error rather than an empty archive.
        if let Some(g) = initial.first() {
            evaluator.evaluate(g)?;
        }
        return Err(DriverError::NothingEvaluated);
    }
    let mut p1: Vec<Genome> = init1.into_iter().filter(|g| archive.contains(g)).collect();
    let mut p2: Vec<Genome> = init2.into_iter().filter(|g| archive.contains(g)).collect();

    let bounds = Bounds::from_points(&archive.points()).expect("archive is non-empty");
    let mut trace = vec![trace_row(0, &archive, &bounds, cfg.bins, counter.calls())];
    let mut history = vec![IterationSnapshot {
        iteration: 0,
        p1: p1.clone(),
        p2: p2.clone(),
        p1_elites: Vec::new(),
        p2_elites: Vec::new(),
    }];
    let mut shortfalls = 0;
    let sub_params = |elites| SubSearchParams {
        generations: cfg.generations,
        pop_size: cfg.sub_pop_size,
        elites,
        variation: cfg.variation,
    };

    for t in 1..=cfg.iterations {
        let step = t as u64;
        let comparator = surrogate::train_surrogate(
            cfg.surrogate.kind,
            &archive.error_pairs(),
            &cfg.surrogate.hyper,
            cfg.surrogate.augment_swapped,
            seed::derive_seed(master, &[stream::SURROGATE, step]),
        )?;
        let comparator = comparator.as_ref();
        let pop1 = individuals(&p1, &archive);
        let pop2 = individuals(&p2, &archive);
        let snapshot = &archive;
        let (out1, out2) = rayon::join(
            || {
                moea::sub_search(
                    &pop1,
                    comparator,
                    snapshot,
                    &space,
                    &sub_params(cfg.k1),
                    seed::derive_seed(master, &[stream::SUB_SEARCH_P1, step]),
                )
            },
            || {
                moea::sub_search(
                    &pop2,
                    comparator,
                    snapshot,
                    &space,
                    &sub_params(cfg.k2),
                    seed::derive_seed(master, &[stream::SUB_SEARCH_P2, step]),
                )
            },
        );
        let (out1, out2) = (out1?, out2?);
        let p1_star = out1.elites;
        let mut p2_star = out2.elites;
        shortfalls += usize::from(out1.shortfall);
        // Population 2 picks its elites as if population 1's were archived,
        // so the two sets never overlap.
        if p2_star.iter().any(|g| p1_star.contains(g)) {
            let mut extended = archive.clone();
            for g in &p1_star {
                let madds = out1
                    .final_population
                    .iter()
                    .find(|ind| &ind.genome == g)
                    .map_or(0.0, |ind| ind.objectives.f2);
                extended.push(ArchiveRecord {
                    genome: g.clone(),
                    error_rate: 0.0,
                    madds,
                    iteration: t,
                    source: Source::EliteP1,
                });
            }
            let picked = moea::diversity_selection(&out2.final_population, &out2.final_fronts, &extended, cfg.k2);
            p2_star = picked.elites;
            shortfalls += usize::from(picked.shortfall);
        } else {
            shortfalls += usize::from(out2.shortfall);
        }
        debug!(
            "iteration {t}: {} + {} elites, {} + {} surrogate pair predictions",
            p1_star.len(),
            p2_star.len(),
            out1.pair_predictions,
            out2.pair_predictions
        );

        let elites: Vec<Genome> = p1_star.iter().chain(&p2_star).cloned().collect();
        let k1 = p1_star.len();
        let ok: HashSet<Genome> = evaluate_into(
            &elites,
            |i| if i < k1 { Source::EliteP1 } else { Source::EliteP2 },
            t,
            &counter,
            cfg.max_parallel,
            &mut archive,
        )
        .into_iter()
        .collect();
        let p1_star: Vec<Genome> = p1_star.into_iter().filter(|g| ok.contains(g)).collect();
        let p2_star: Vec<Genome> = p2_star.into_iter().filter(|g| ok.contains(g)).collect();
        (p1, p2) = migrate(&p1, &p2, &p1_star, &p2_star, cfg.migration);

        trace.push(trace_row(t, &archive, &bounds, cfg.bins, counter.calls()));
        history.push(IterationSnapshot {
            iteration: t,
            p1: p1.clone(),
            p2: p2.clone(),
            p1_elites: p1_star,
            p2_elites: p2_star,
        });
        info!(
            "iteration {t}/{}: archive {}, front hv {:.4}",
            cfg.iterations,
            archive.len(),
            trace[t].hv
        );
    }

    Ok(RunOutcome {
        pareto: archive.pareto_front(),
        evaluations: counter.calls(),
        archive,
        trace,
        history,
        shortfalls,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, DriverError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| DriverError::Output {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DriverError + '_ {
    move |source| DriverError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `archive.csv`, `pareto.json`, `trace.csv` and `config.json`;
/// returns their paths.
pub fn write_run_outputs(
    dir: &Path,
    cfg: &RunConfig,
    outcome: &RunOutcome,
) -> Result<Vec<PathBuf>, DriverError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths: Vec<PathBuf> = ["archive.csv", "pareto.json", "trace.csv", "config.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect();

    let mut w = create(&paths[0])?;
    outcome.archive.write_csv(&mut w)?;
    w.flush().map_err(io_err(&paths[0]))?;

    let mut w = create(&paths[1])?;
    write_records_json(&mut w, &outcome.pareto)?;
    w.flush().map_err(io_err(&paths[1]))?;

    let mut w = csv::Writer::from_writer(create(&paths[2])?);
    for row in &outcome.trace {
        w.serialize(row).map_err(ArchiveError::from)?;
    }
    w.flush().map_err(io_err(&paths[2]))?;

    let mut w = create(&paths[3])?;
    writeln!(w, "{}", cfg.to_json_pretty()).map_err(io_err(&paths[3]))?;
    w.flush().map_err(io_err(&paths[3]))?;
    Ok(paths)
}
