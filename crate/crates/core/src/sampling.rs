//! Initial-population construction: MAdds-uniform bi-population split and
//! the random / stratified / Latin hypercube baselines.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::complexity;
use crate::seed::{self, Rng};
use crate::space::{self, Genome, SearchSpaceConfig, SpaceError};

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("sample pool is empty")]
    EmptyPool,
    #[error("all pool members share the same MAdds; sample a larger pool")]
    DegeneratePool,
    #[error("invalid region setup: {0}")]
    InvalidRegions(String),
    #[error("pool holds {available} distinct genomes, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("pool line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    pub genome: Genome,
    pub madds: f64,
}

/// Candidate pool with MAdds attached, duplicate-free, in draw order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SamplePool {
    pub members: Vec<PoolMember>,
}

impl SamplePool {
    /// Draws `size` random genomes and drops repeats, so small spaces may
    /// yield fewer members.
    pub fn generate(space: &SearchSpaceConfig, size: usize, seed: u64) -> Result<Self, SamplingError> {
        let mut rng = seed::rng_from_seed(seed);
        let genomes: Vec<Genome> = (0..size).map(|_| space::random_genome_with(space, &mut rng)).collect();
        Self::from_genomes(space, genomes)
    }

    pub fn from_genomes(
        space: &SearchSpaceConfig,
        genomes: impl IntoIterator<Item = Genome>,
    ) -> Result<Self, SamplingError> {
        let mut seen = HashSet::new();
        let mut members = Vec::new();
        for g in genomes {
            if seen.insert(g.clone()) {
                let madds = complexity::madds(&g, space)?;
                members.push(PoolMember { genome: g, madds });
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// One `genome-csv;madds` line per member.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for m in &self.members {
            writeln!(w, "{};{}", m.genome, m.madds)?;
        }
        Ok(())
    }

    /// Reads the `genome-csv;madds` format; MAdds must match the space.
    pub fn read<R: BufRead>(r: R, space: &SearchSpaceConfig) -> Result<Self, SamplingError> {
        let mut members = Vec::new();
        let mut seen = HashSet::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = k + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| SamplingError::Format {
                line: line_no,
                message,
            };
            let (g, m) = line
                .split_once(';')
                .ok_or_else(|| bad("expected genome;madds".into()))?;
            let genome: Genome = g.parse().map_err(|e: SpaceError| bad(e.to_string()))?;
            let madds: f64 = m.trim().parse().map_err(|_| bad(format!("bad madds {m:?}")))?;
            let expected = complexity::madds(&genome, space).map_err(|e| bad(e.to_string()))?;
            if (expected - madds).abs() > 1e-9 * expected.max(1.0) {
                return Err(bad(format!("madds {madds} does not match computed {expected}")));
            }
            if !seen.insert(genome.clone()) {
                return Err(bad(format!("duplicate genome {genome}")));
            }
            members.push(PoolMember { genome, madds });
        }
        Ok(Self { members })
    }
}

/// Equal-width MAdds regions; intervals are half-open except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub boundaries: Vec<f64>,
    /// Region of each pool member, by pool index.
    pub assignment: Vec<usize>,
}

impl RegionPartition {
    pub fn regions(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Region holding `value`, clamped to the partition's range.
    pub fn region_of(&self, value: f64) -> usize {
        let r = self.regions();
        let lo = self.boundaries[0];
        let width = (self.boundaries[r] - lo) / r as f64;
        let mut idx = (((value - lo) / width).floor().max(0.0) as usize).min(r - 1);
        while idx + 1 < r && value >= self.boundaries[idx + 1] {
            idx += 1;
        }
        while idx > 0 && value < self.boundaries[idx] {
            idx -= 1;
        }
        idx
    }

    pub fn members_of(&self, region: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == region)
            .collect()
    }
}

pub fn partition_values(values: &[f64], regions: usize) -> Result<RegionPartition, SamplingError> {
    if values.is_empty() {
        return Err(SamplingError::EmptyPool);
    }
    if regions < 2 {
        return Err(SamplingError::InvalidRegions("need at least 2 regions".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(SamplingError::DegeneratePool);
    }
    let width = (hi - lo) / regions as f64;
    let mut boundaries: Vec<f64> = (0..regions).map(|i| lo + width * i as f64).collect();
    boundaries.push(hi);
    let mut partition = RegionPartition {
        boundaries,
        assignment: Vec::new(),
    };
    partition.assignment = values.iter().map(|&v| partition.region_of(v)).collect();
    Ok(partition)
}

pub fn partition_regions(pool: &SamplePool, regions: usize) -> Result<RegionPartition, SamplingError> {
    let values: Vec<f64> = pool.members.iter().map(|m| m.madds).collect();
    partition_values(&values, regions)
}

/// Splits `n` as evenly as possible over `order.len()` regions; the
/// remainder goes to the first regions of `order`.
pub fn region_quotas(n: usize, order: &[usize], regions: usize) -> Vec<usize> {
    let mut quotas = vec![0; regions];
    if order.is_empty() {
        return quotas;
    }
    let base = n / order.len();
    let extra = n % order.len();
    for (pos, &r) in order.iter().enumerate() {
        quotas[r] = base + usize::from(pos < extra);
    }
    quotas
}

/// Fills per-region quotas from `available`, moving deficits to the nearest
/// region of the same class that has spare members, then to the nearest
/// region of any class. Returns how many members to take per region.
fn fill_quotas(quotas: &[usize], class: &[usize], available: &[usize]) -> Vec<usize> {
    let regions = quotas.len();
    let mut taken: Vec<usize> = (0..regions).map(|r| quotas[r].min(available[r])).collect();
    let mut deficits: Vec<(usize, usize)> = (0..regions)
        .filter(|&r| quotas[r] > available[r])
        .map(|r| (r, quotas[r] - available[r]))
        .collect();
    deficits.sort_by_key(|&(r, _)| class.iter().position(|&c| c == r).unwrap_or(usize::MAX));
    for (r, mut deficit) in deficits {
        for restrict_to_class in [true, false] {
            let mut donors: Vec<usize> = (0..regions)
                .filter(|&s| !restrict_to_class || class.contains(&s))
                .collect();
            donors.sort_by_key(|&s| (s.abs_diff(r), s));
            for s in donors {
                if deficit == 0 {
                    break;
                }
                let spare = available[s] - taken[s];
                let moved = spare.min(deficit);
                taken[s] += moved;
                deficit -= moved;
            }
        }
    }
    taken
}

/// Uniform sampling split: population 1 from the `extreme_per_side` lowest
/// and highest MAdds regions, population 2 from the middle regions.
pub fn uniform_split_populations(
    pool: &SamplePool,
    partition: &RegionPartition,
    n1: usize,
    n2: usize,
    extreme_per_side: usize,
    seed: u64,
) -> Result<(Vec<Genome>, Vec<Genome>), SamplingError> {
    let regions = partition.regions();
    if extreme_per_side == 0 || regions <= 2 * extreme_per_side {
        return Err(SamplingError::InvalidRegions(format!(
            "{regions} regions cannot hold {extreme_per_side} extreme regions per side plus a middle"
        )));
    }
    if n1 == 0 || n2 == 0 {
        return Err(SamplingError::InvalidRegions("population sizes must be positive".into()));
    }
    if n1 + n2 > pool.len() {
        return Err(SamplingError::PoolTooSmall {
            requested: n1 + n2,
            available: pool.len(),
        });
    }
    let mut rng = seed::rng_from_seed(seed);
    let mut members: Vec<Vec<usize>> = (0..regions).map(|r| partition.members_of(r)).collect();
    for m in &mut members {
        m.shuffle(&mut rng);
    }
    // Outermost regions first so the remainder favors the extremes.
    let mut extreme = Vec::with_capacity(2 * extreme_per_side);
    for e in 0..extreme_per_side {
        extreme.push(e);
        extreme.push(regions - 1 - e);
    }
    let middle: Vec<usize> = (extreme_per_side..regions - extreme_per_side).collect();

    let draw = |class: &[usize], n: usize, members: &mut Vec<Vec<usize>>| {
        let quotas = region_quotas(n, class, regions);
        let available: Vec<usize> = members.iter().map(Vec::len).collect();
        let take = fill_quotas(&quotas, class, &available);
        let mut out = Vec::with_capacity(n);
        for r in 0..regions {
            let rest = members[r].split_off(take[r]);
            out.extend(std::mem::replace(&mut members[r], rest));
        }
        out
    };
    let p1 = draw(&extreme, n1, &mut members);
    let p2 = draw(&middle, n2, &mut members);
    let to_genomes = |idx: Vec<usize>| idx.into_iter().map(|i| pool.members[i].genome.clone()).collect();
    Ok((to_genomes(p1), to_genomes(p2)))
}

/// Baseline samplers for the sampling ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Random,
    /// Proportional allocation over equal-width strata of the mean
    /// normalized gene value.
    Stratified { strata: usize },
    LatinHypercube,
}

pub const DEFAULT_STRATA: usize = 5;

fn shuffled_prefix(indices: &mut Vec<usize>, n: usize, rng: &mut Rng) {
    indices.shuffle(rng);
    indices.truncate(n);
}

/// Mean over gene positions of `gene / option_count`; padded slots add 0.
pub fn encoding_position(g: &Genome, space: &SearchSpaceConfig) -> f64 {
    let total: f64 = g
        .genes()
        .iter()
        .enumerate()
        .map(|(pos, &v)| f64::from(v) / f64::from(space.option_count(space.gene_kind(pos))))
        .sum();
    total / g.len() as f64
}

/// Largest-remainder apportionment of `n` by `weights` (ties: lower index).
fn apportion(n: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    let mut alloc: Vec<usize> = weights.iter().map(|&w| n * w / total).collect();
    let mut rems: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (n * w % total, i))
        .collect();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - alloc.iter().sum::<usize>();
    for &(_, i) in rems.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

/// One point per stratum on every axis: axis `d` of `ranges` is cut into
/// `n` equal strata, each used by exactly one sample.
pub fn latin_hypercube_points(ranges: &[(f64, f64)], n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; ranges.len()]; n];
    for (d, &(lo, hi)) in ranges.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (point, s) in points.iter_mut().zip(strata) {
            let u: f64 = rng.gen();
            point[d] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    points
}

pub fn baseline_sample(
    pool: &SamplePool,
    space: &SearchSpaceConfig,
    method: BaselineMethod,
    n: usize,
    seed: u64,
) -> Result<Vec<Genome>, SamplingError> {
    let mut rng = seed::rng_from_seed(seed);
    match method {
        BaselineMethod::Random => {
            if n > pool.len() {
                return Err(SamplingError::PoolTooSmall {
                    requested: n,
                    available: pool.len(),
                });
            }
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            shuffled_prefix(&mut idx, n, &mut rng);
            Ok(idx.into_iter().map(|i| pool.members[i].genome.clone()).collect())
        }
        BaselineMethod::Stratified { strata } => {
            if n > pool.len() {
                return Err(SamplingError::PoolTooSmall {
                    requested: n,
                    available: pool.len(),
                });
            }
            if strata == 0 {
                return Err(SamplingError::InvalidRegions("need at least one stratum".into()));
            }
            let groups: Vec<Vec<usize>> = if strata == 1 {
                vec![(0..pool.len()).collect()]
            } else {
                let pos: Vec<f64> = pool
                    .members
                    .iter()
                    .map(|m| encoding_position(&m.genome, space))
                    .collect();
                match partition_values(&pos, strata) {
                    Ok(p) => (0..strata).map(|s| p.members_of(s)).collect(),
                    Err(SamplingError::DegeneratePool) => vec![(0..pool.len()).collect()],
                    Err(e) => return Err(e),
                }
            };
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            let alloc = apportion(n, &sizes);
            let mut out = Vec::with_capacity(n);
            for (mut g, k) in groups.into_iter().zip(alloc) {
                shuffled_prefix(&mut g, k, &mut rng);
                out.extend(g.into_iter().map(|i| pool.members[i].genome.clone()));
            }
            Ok(out)
        }
        BaselineMethod::LatinHypercube => {
            let ranges: Vec<(f64, f64)> = (0..space.genome_len())
                .map(|pos| {
                    let count = space.option_count(space.gene_kind(pos));
                    (0.5, f64::from(count) + 0.5)
                })
                .collect();
            latin_hypercube_points(&ranges, n, &mut rng)
                .into_iter()
                .map(|p| {
                    let raw: Vec<u32> = p
                        .iter()
                        .zip(&ranges)
                        .map(|(&v, &(_, hi))| v.round().clamp(1.0, hi - 0.5) as u32)
                        .collect();
                    let repair_seed: u64 = rng.gen();
                    space::repair_genome(&raw, space, repair_seed).map_err(SamplingError::from)
                })
                .collect()
        }
    }
}
