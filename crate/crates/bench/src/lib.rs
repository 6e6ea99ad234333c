//! Benchmark fixtures.

use rand::Rng;

use bipop_core::seed::rng_from_seed;
use bipop_core::space::random_genome_with;
use bipop_core::{Evaluator, Genome, ObjectiveVector, SearchSpaceConfig, SyntheticEvaluator, SyntheticOracleConfig};

/// Uniform points in the unit square.
pub fn random_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| [rng.gen(), rng.gen()]).collect()
}

pub fn random_objectives(n: usize, seed: u64) -> Vec<ObjectiveVector> {
    random_points(n, seed)
        .into_iter()
        .map(|[a, b]| ObjectiveVector::new(a, b))
        .collect()
}

/// Mutually non-dominated points on a convex curve.
pub fn front_points(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let x = i as f64 / n.max(2).saturating_sub(1) as f64;
            [x, (1.0 - x).powi(2)]
        })
        .collect()
}

/// `(genome, error_rate)` records from the synthetic oracle.
pub fn evaluated_genomes(space: &SearchSpaceConfig, n: usize, seed: u64) -> Vec<(Genome, f64)> {
    let oracle = SyntheticEvaluator::new(space.clone(), SyntheticOracleConfig::default()).expect("default oracle");
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let g = random_genome_with(space, &mut rng);
            let e = oracle.evaluate(&g).expect("synthetic evaluation").error_rate;
            (g, e)
        })
        .collect()
}
