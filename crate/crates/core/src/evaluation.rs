//! Real-evaluation backends and the batch runner.
//!
//! The search only sees the [`Evaluator`] trait. Two backends ship with the
//! crate: a synthetic closed-form oracle and a lookup table replaying
//! recorded results.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::complexity;
use crate::seed;
use crate::space::{Genome, SearchSpaceConfig, SpaceError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    InvalidGenome(#[from] SpaceError),
    #[error("genome {0} not found in table")]
    MissingEntry(Genome),
    #[error("table line {line}: {message}")]
    TableFormat { line: u64, message: String },
    #[error("table line {line}: duplicate genome {genome}")]
    DuplicateEntry { line: u64, genome: Genome },
    #[error("invalid oracle configuration: {0}")]
    InvalidOracle(String),
    #[error("cannot read table: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub error_rate: f64,
    /// Millions of multiply-accumulates.
    pub madds: f64,
}

/// Backend producing a real (non-surrogate) error rate for a genome.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, genome: &Genome) -> Result<EvaluationResult, EvalError>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, genome: &Genome) -> Result<EvaluationResult, EvalError> {
        (**self).evaluate(genome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticOracleConfig {
    pub e_min: f64,
    pub e_max: f64,
    /// Decay scale in millions of MAdds.
    pub tau: f64,
    pub noise_amp: f64,
    pub seed: u64,
}

impl Default for SyntheticOracleConfig {
    fn default() -> Self {
        Self {
            e_min: 0.05,
            e_max: 0.60,
            tau: 200.0,
            noise_amp: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticOracleConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = self.e_min > 0.0
            && self.e_max < 1.0
            && self.e_min < self.e_max
            && self.tau > 0.0
            && self.noise_amp >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(EvalError::InvalidOracle(format!("{self:?}")))
        }
    }

    /// `e_min + (e_max - e_min) * exp(-madds / tau) + noise_amp * eta`,
    /// clamped to `[0, 1]`.
    pub fn error_rate(&self, madds: f64, eta: f64) -> f64 {
        let base = self.e_min + (self.e_max - self.e_min) * (-madds / self.tau).exp();
        (base + self.noise_amp * eta).clamp(0.0, 1.0)
    }
}

/// Deterministic perturbation in `[-1, 1]` of a genome under a seed.
pub fn hash_noise(genome: &Genome, seed: u64) -> f64 {
    seed::hash_to_unit_interval(seed::hash_genes(genome.genes(), seed))
}

/// Error decays exponentially with MAdds, plus a hash-seeded perturbation.
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    pub space: SearchSpaceConfig,
    pub oracle: SyntheticOracleConfig,
}

impl SyntheticEvaluator {
    pub fn new(space: SearchSpaceConfig, oracle: SyntheticOracleConfig) -> Result<Self, EvalError> {
        oracle.validate()?;
        Ok(Self { space, oracle })
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, genome: &Genome) -> Result<EvaluationResult, EvalError> {
        let madds = complexity::madds(genome, &self.space)?;
        let eta = hash_noise(genome, self.oracle.seed);
        Ok(EvaluationResult {
            error_rate: self.oracle.error_rate(madds, eta),
            madds,
        })
    }
}

pub const TABLE_HEADER: [&str; 3] = ["genome", "error_rate", "madds"];

/// Exact-match lookup over recorded `(genome, error_rate, madds)` rows.
#[derive(Debug, Clone, Default)]
pub struct TabularEvaluator {
    rows: HashMap<Genome, EvaluationResult>,
    order: Vec<Genome>,
}

impl TabularEvaluator {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| EvalError::TableFormat {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != TABLE_HEADER {
            return Err(EvalError::TableFormat {
                line: 1,
                message: format!("expected header {}", TABLE_HEADER.join(",")),
            });
        }
        let mut rows = HashMap::new();
        let mut order = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| EvalError::TableFormat {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| EvalError::TableFormat { line, message };
            let genome: Genome = record[0].parse().map_err(|e: SpaceError| bad(e.to_string()))?;
            let error_rate: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad error_rate {:?}", &record[1])))?;
            let madds: f64 = record[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad madds {:?}", &record[2])))?;
            if !(0.0..=1.0).contains(&error_rate) || !(madds > 0.0) {
                return Err(bad("error_rate must lie in [0,1] and madds be positive".into()));
            }
            if rows.contains_key(&genome) {
                return Err(EvalError::DuplicateEntry { line, genome });
            }
            order.push(genome.clone());
            rows.insert(genome, EvaluationResult { error_rate, madds });
        }
        Ok(Self { rows, order })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Table genomes in file order.
    pub fn genomes(&self) -> &[Genome] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self, genome: &Genome) -> Result<EvaluationResult, EvalError> {
        self.rows
            .get(genome)
            .copied()
            .ok_or_else(|| EvalError::MissingEntry(genome.clone()))
    }
}

impl Evaluator for TabularEvaluator {
    fn evaluate(&self, genome: &Genome) -> Result<EvaluationResult, EvalError> {
        self.lookup(genome)
    }
}

/// Writes rows in the tabular backend's format.
pub fn write_table<W: std::io::Write>(
    writer: W,
    rows: impl IntoIterator<Item = (Genome, EvaluationResult)>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_HEADER)?;
    for (g, r) in rows {
        w.write_record([g.to_string(), r.error_rate.to_string(), r.madds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Counts every call that reaches the wrapped evaluator.
#[derive(Debug)]
pub struct CountingEvaluator<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E> CountingEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Evaluator> Evaluator for CountingEvaluator<E> {
    fn evaluate(&self, genome: &Genome) -> Result<EvaluationResult, EvalError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(genome)
    }
}

/// Evaluates genomes on up to `max_parallel` worker threads. Results are
/// aligned with the input; a failure only affects its own slot.
pub fn evaluate_batch<E: Evaluator + ?Sized>(
    genomes: &[Genome],
    evaluator: &E,
    max_parallel: usize,
) -> Vec<Result<EvaluationResult, EvalError>> {
    let workers = max_parallel.max(1).min(genomes.len());
    if workers <= 1 {
        return genomes.iter().map(|g| evaluator.evaluate(g)).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<EvaluationResult, EvalError>>> =
        (0..genomes.len()).map(|_| None).collect();
    let finished: Vec<Vec<(usize, Result<EvaluationResult, EvalError>)>> =
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= genomes.len() {
                                break done;
                            }
                            done.push((i, evaluator.evaluate(&genomes[i])));
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
    for (i, r) in finished.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots
        .into_iter()
        .map(|r| r.expect("every index evaluated"))
        .collect()
}
