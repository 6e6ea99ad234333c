//! NSGA-II machinery and the surrogate-driven sub-search.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::complexity;
use crate::seed::{self, Rng};
use crate::space::{self, Genome, SearchSpaceConfig, SpaceError};
use crate::surrogate::{pair_count, Comparator, SurrogateError};

#[derive(Debug, thiserror::Error)]
pub enum MoeaError {
    #[error("selection target {target} exceeds population of {available}")]
    TargetTooLarge { target: usize, available: usize },
    #[error("sub-search population is empty")]
    EmptyFront,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// Two minimized objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub f1: f64,
    pub f2: f64,
}

impl ObjectiveVector {
    pub fn new(f1: f64, f2: f64) -> Self {
        Self { f1, f2 }
    }

    fn get(&self, m: usize) -> f64 {
        if m == 0 {
            self.f1
        } else {
            self.f2
        }
    }
}

/// Pareto dominance under minimization.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.f1 <= b.f1 && a.f2 <= b.f2 && (a.f1 < b.f1 || a.f2 < b.f2)
}

/// Ranks (1-based), crowding distances and the fronts themselves; each
/// front lists member indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontAssignment {
    pub ranks: Vec<usize>,
    pub crowding: Vec<f64>,
    pub fronts: Vec<Vec<usize>>,
}

/// Fast non-dominated sort; crowding is computed within each front.
pub fn non_dominated_sort(points: &[ObjectiveVector]) -> FrontAssignment {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&points[i], &points[j]) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut ranks = vec![0; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            ranks[i] = fronts.len() + 1;
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    let mut crowding = vec![0.0; n];
    for front in &fronts {
        let members: Vec<ObjectiveVector> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            crowding[i] = d;
        }
    }
    FrontAssignment {
        ranks,
        crowding,
        fronts,
    }
}

/// NSGA-II crowding distance. Fronts of one or two points are all
/// boundary points. An objective with zero range adds nothing, including
/// to its boundary points.
pub fn crowding_distance(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut dist = vec![0.0; n];
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a].get(m).total_cmp(&front[b].get(m)));
        let lo = front[order[0]].get(m);
        let hi = front[order[n - 1]].get(m);
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        for w in 1..n - 1 {
            let gap = front[order[w + 1]].get(m) - front[order[w - 1]].get(m);
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Picks `target` indices: whole fronts by rank, the boundary front by
/// descending crowding distance. Returned indices are ascending.
pub fn survivor_selection(points: &[ObjectiveVector], target: usize) -> Result<Vec<usize>, MoeaError> {
    if target > points.len() {
        return Err(MoeaError::TargetTooLarge {
            target,
            available: points.len(),
        });
    }
    let fa = non_dominated_sort(points);
    let mut chosen = Vec::with_capacity(target);
    for front in &fa.fronts {
        if chosen.len() + front.len() <= target {
            chosen.extend_from_slice(front);
            continue;
        }
        let mut by_crowding = front.clone();
        // Stable: equal distances keep ascending index order.
        by_crowding.sort_by(|&a, &b| fa.crowding[b].total_cmp(&fa.crowding[a]));
        chosen.extend(by_crowding.into_iter().take(target - chosen.len()));
        break;
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// A genome with its current objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityOutcome {
    pub elites: Vec<Genome>,
    /// Fewer than the requested number of novel candidates existed.
    pub shortfall: bool,
}

/// Front-by-front max-min selection on the MAdds axis.
///
/// Within the current front the candidate whose smallest MAdds distance to
/// the archive and to already chosen elites is largest is taken next (ties:
/// lowest index). Genomes already archived or already chosen are skipped.
pub fn diversity_selection(
    candidates: &[Individual],
    fronts: &[Vec<usize>],
    archive: &Archive,
    k: usize,
) -> DiversityOutcome {
    let archive_madds = archive.madds();
    let mut chosen: Vec<usize> = Vec::new();
    let mut chosen_genomes: HashSet<&Genome> = HashSet::new();
    for front in fronts {
        let mut pool: Vec<(usize, f64)> = Vec::new();
        for &i in front {
            let g = &candidates[i].genome;
            if archive.contains(g) || chosen_genomes.contains(g) || pool.iter().any(|&(j, _)| &candidates[j].genome == g) {
                continue;
            }
            let m = candidates[i].objectives.f2;
            let nearest = archive_madds
                .iter()
                .chain(chosen.iter().map(|&c| &candidates[c].objectives.f2))
                .map(|a| (a - m).abs())
                .fold(f64::INFINITY, f64::min);
            pool.push((i, nearest));
        }
        while chosen.len() < k && !pool.is_empty() {
            let mut best = 0;
            for (p, &(_, d)) in pool.iter().enumerate() {
                if d > pool[best].1 {
                    best = p;
                }
            }
            let (pick, _) = pool.remove(best);
            let m = candidates[pick].objectives.f2;
            for entry in pool.iter_mut() {
                let d = (candidates[entry.0].objectives.f2 - m).abs();
                entry.1 = entry.1.min(d);
            }
            chosen.push(pick);
            chosen_genomes.insert(&candidates[pick].genome);
        }
        if chosen.len() == k {
            break;
        }
    }
    DiversityOutcome {
        shortfall: chosen.len() < k,
        elites: chosen.into_iter().map(|i| candidates[i].genome.clone()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationParams {
    pub crossover_prob: f64,
    /// Distribution index of polynomial mutation.
    pub eta_m: f64,
    /// Per-gene mutation probability; `None` means `1 / genome length`.
    pub mutation_prob: Option<f64>,
}

impl Default for VariationParams {
    fn default() -> Self {
        Self {
            crossover_prob: 0.9,
            eta_m: 3.0,
            mutation_prob: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubSearchParams {
    pub generations: usize,
    pub pop_size: usize,
    pub elites: usize,
    pub variation: VariationParams,
}

/// Per-generation statistics of a sub-search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationTrace {
    pub generation: usize,
    pub front_size: usize,
    pub min_f2: f64,
    pub median_f2: f64,
    pub pair_predictions: usize,
}

#[derive(Debug, Clone)]
pub struct SubSearchOutcome {
    pub elites: Vec<Genome>,
    pub shortfall: bool,
    pub trace: Vec<GenerationTrace>,
    pub pair_predictions: usize,
    /// Surrogate-scored population the elites were drawn from.
    pub final_population: Vec<Individual>,
    pub final_fronts: Vec<Vec<usize>>,
}

fn strengths_or_zero<C: Comparator + ?Sized>(
    comparator: &C,
    genomes: &[Genome],
) -> Result<Vec<f64>, SurrogateError> {
    if genomes.len() < 2 {
        return Ok(vec![0.0; genomes.len()]);
    }
    Ok(comparator.strengths(genomes)?.0)
}

fn tournament(rng: &mut Rng, fa: &FrontAssignment) -> usize {
    let n = fa.ranks.len();
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    let better = |x: usize, y: usize| {
        fa.ranks[x] < fa.ranks[y] || (fa.ranks[x] == fa.ranks[y] && fa.crowding[x] > fa.crowding[y])
    };
    if better(b, a) {
        b
    } else if better(a, b) {
        a
    } else {
        a.min(b)
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Surrogate-only evolution from the rank-1 front of `pop` (objectives are
/// real error and MAdds). Each generation produces `pop_size` offspring by
/// tournament, two-point crossover and polynomial mutation, re-predicts
/// strengths jointly over parents and offspring, and keeps `pop_size`
/// survivors. The final population is sorted and reduced to `elites` novel
/// genomes by [`diversity_selection`]. No real evaluation happens here.
pub fn sub_search<C: Comparator + ?Sized>(
    pop: &[Individual],
    comparator: &C,
    archive: &Archive,
    space: &SearchSpaceConfig,
    params: &SubSearchParams,
    seed: u64,
) -> Result<SubSearchOutcome, MoeaError> {
    if pop.is_empty() {
        return Err(MoeaError::EmptyFront);
    }
    let mut rng = seed::rng_from_seed(seed);
    let real: Vec<ObjectiveVector> = pop.iter().map(|p| p.objectives).collect();
    let first = non_dominated_sort(&real).fronts.swap_remove(0);
    let mut genomes: Vec<Genome> = first.iter().map(|&i| pop[i].genome.clone()).collect();
    let mut f2: Vec<f64> = first.iter().map(|&i| pop[i].objectives.f2).collect();
    let mut f1 = strengths_or_zero(comparator, &genomes)?;
    let mut pair_predictions = pair_count(genomes.len());
    let mutation_prob = params
        .variation
        .mutation_prob
        .unwrap_or(1.0 / space.genome_len() as f64);
    let mut trace = Vec::with_capacity(params.generations);

    for generation in 0..params.generations {
        let objs: Vec<ObjectiveVector> =
            f1.iter().zip(&f2).map(|(&a, &b)| ObjectiveVector::new(a, b)).collect();
        let fa = non_dominated_sort(&objs);
        let mut seen: HashSet<Genome> = genomes.iter().cloned().collect();
        let mut offspring: Vec<Genome> = Vec::with_capacity(params.pop_size);
        let max_attempts = 20 * params.pop_size.max(1);
        let mut attempts = 0;
        while offspring.len() < params.pop_size && attempts < max_attempts {
            attempts += 1;
            let pa = &genomes[tournament(&mut rng, &fa)];
            let pb = &genomes[tournament(&mut rng, &fa)];
            let (c1, c2) = if rng.gen::<f64>() < params.variation.crossover_prob {
                space::two_point_crossover_with(pa, pb, space, &mut rng)?
            } else {
                (pa.clone(), pb.clone())
            };
            for child in [c1, c2] {
                let child = space::polynomial_mutation_with(
                    &child,
                    space,
                    params.variation.eta_m,
                    mutation_prob,
                    &mut rng,
                )?;
                if offspring.len() < params.pop_size && seen.insert(child.clone()) {
                    offspring.push(child);
                }
            }
        }
        for child in &offspring {
            f2.push(complexity::madds(child, space)?);
        }
        genomes.extend(offspring);
        f1 = strengths_or_zero(comparator, &genomes)?;
        let pairs = pair_count(genomes.len());
        pair_predictions += pairs;

        let objs: Vec<ObjectiveVector> =
            f1.iter().zip(&f2).map(|(&a, &b)| ObjectiveVector::new(a, b)).collect();
        let keep = survivor_selection(&objs, params.pop_size.min(genomes.len()))?;
        genomes = keep.iter().map(|&i| genomes[i].clone()).collect();
        f1 = keep.iter().map(|&i| f1[i]).collect();
        f2 = keep.iter().map(|&i| f2[i]).collect();

        let kept: Vec<ObjectiveVector> =
            f1.iter().zip(&f2).map(|(&a, &b)| ObjectiveVector::new(a, b)).collect();
        let front = &non_dominated_sort(&kept).fronts[0];
        let mut front_f2: Vec<f64> = front.iter().map(|&i| f2[i]).collect();
        trace.push(GenerationTrace {
            generation,
            front_size: front.len(),
            min_f2: front_f2.iter().copied().fold(f64::INFINITY, f64::min),
            median_f2: median(&mut front_f2),
            pair_predictions: pairs,
        });
    }

    let final_pop: Vec<Individual> = genomes
        .into_iter()
        .zip(f1.iter().zip(&f2))
        .map(|(genome, (&a, &b))| Individual {
            genome,
            objectives: ObjectiveVector::new(a, b),
        })
        .collect();
    let objs: Vec<ObjectiveVector> = final_pop.iter().map(|p| p.objectives).collect();
    let sorted = non_dominated_sort(&objs);
    let picked = diversity_selection(&final_pop, &sorted.fronts, archive, params.elites);
    Ok(SubSearchOutcome {
        elites: picked.elites,
        shortfall: picked.shortfall,
        trace,
        pair_predictions,
        final_population: final_pop,
        final_fronts: sorted.fronts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{ArchiveRecord, Source};
    use crate::surrogate::ConstantComparator;
    use proptest::prelude::*;

    fn ov(a: f64, b: f64) -> ObjectiveVector {
        ObjectiveVector::new(a, b)
    }

    /// Rank by repeated brute-force extraction of non-dominated sets.
    fn brute_force_ranks(points: &[ObjectiveVector]) -> Vec<usize> {
        let mut ranks = vec![0; points.len()];
        let mut rank = 1;
        while ranks.contains(&0) {
            let remaining: Vec<usize> = (0..points.len()).filter(|&i| ranks[i] == 0).collect();
            let layer: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
                .collect();
            for i in layer {
                ranks[i] = rank;
            }
            rank += 1;
        }
        ranks
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&ov(1.0, 2.0), &ov(2.0, 2.0)));
        assert!(!dominates(&ov(1.0, 2.0), &ov(2.0, 1.0)));
        assert!(!dominates(&ov(1.0, 2.0), &ov(1.0, 2.0)));
    }

    #[test]
    fn sort_examples() {
        let pts = [ov(1.0, 3.0), ov(2.0, 2.0), ov(3.0, 1.0), ov(2.0, 3.0), ov(3.0, 3.0)];
        let fa = non_dominated_sort(&pts);
        assert_eq!(fa.ranks, vec![1, 1, 1, 2, 3]);
        assert_eq!(fa.ranks, brute_force_ranks(&pts));
        assert_eq!(non_dominated_sort(&[ov(1.0, 1.0); 4]).ranks, vec![1; 4]);
        let chain = [ov(1.0, 1.0), ov(2.0, 2.0), ov(3.0, 3.0)];
        assert_eq!(non_dominated_sort(&chain).ranks, vec![1, 2, 3]);
    }

    #[test]
    fn crowding_examples() {
        let d = crowding_distance(&[ov(1.0, 3.0), ov(2.0, 2.0), ov(3.0, 1.0)]);
        assert_eq!(d[0], f64::INFINITY);
        assert_eq!(d[2], f64::INFINITY);
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert_eq!(crowding_distance(&[ov(0.0, 1.0), ov(1.0, 0.0)]), vec![f64::INFINITY; 2]);
        assert_eq!(crowding_distance(&[ov(0.0, 1.0)]), vec![f64::INFINITY]);
        // Constant second objective contributes nothing.
        let d = crowding_distance(&[ov(0.0, 5.0), ov(1.0, 5.0), ov(3.0, 5.0)]);
        assert_eq!(d[1], 1.0);
    }

    #[test]
    fn survivor_examples() {
        // Rank 1: the first four; rank 2: the last two.
        let pts = [
            ov(1.0, 4.0),
            ov(2.0, 3.0),
            ov(3.0, 2.0),
            ov(4.0, 1.0),
            ov(2.0, 5.0),
            ov(5.0, 5.0),
        ];
        assert_eq!(survivor_selection(&pts, 4).unwrap(), vec![0, 1, 2, 3]);
        let five = survivor_selection(&pts, 5).unwrap();
        assert_eq!(&five[..4], &[0, 1, 2, 3]);
        assert_eq!(five.len(), 5);
        assert_eq!(survivor_selection(&pts, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(survivor_selection(&pts, 7).is_err());
    }

    #[test]
    fn survivor_boundary_front_prefers_crowding_then_order() {
        let pts = [ov(0.0, 4.0), ov(1.0, 3.0), ov(1.5, 2.5), ov(3.0, 1.0), ov(4.0, 0.0)];
        // All rank 1; extremes are infinite, index 3 has the widest gap.
        let d = crowding_distance(&pts);
        assert!(d[3] > d[1] && d[3] > d[2]);
        assert_eq!(survivor_selection(&pts, 3).unwrap(), vec![0, 3, 4]);
    }

    fn archive_with_madds(ms: &[f64]) -> Archive {
        Archive::from_records(ms.iter().enumerate().map(|(i, &m)| ArchiveRecord {
            genome: Genome(vec![1000 + i as u32]),
            error_rate: 0.5,
            madds: m,
            iteration: 0,
            source: Source::InitP1,
        }))
    }

    fn ind(id: u32, f1: f64, f2: f64) -> Individual {
        Individual {
            genome: Genome(vec![id]),
            objectives: ov(f1, f2),
        }
    }

    #[test]
    fn diversity_examples() {
        let archive = archive_with_madds(&[300.0]);
        let cands = [ind(1, 0.5, 290.0), ind(2, 0.4, 450.0)];
        let out = diversity_selection(&cands, &[vec![0, 1]], &archive, 1);
        assert_eq!(out.elites, vec![Genome(vec![2])]);
        assert!(!out.shortfall);

        // A candidate equal to an archived genome is never picked.
        let cands = [ind(1000, 0.1, 900.0), ind(3, 0.5, 310.0)];
        let out = diversity_selection(&cands, &[vec![0, 1]], &archive, 2);
        assert_eq!(out.elites, vec![Genome(vec![3])]);
        assert!(out.shortfall);

        let cands = [ind(4, 0.5, 100.0), ind(5, 0.4, 200.0), ind(6, 0.3, 250.0)];
        let out = diversity_selection(&cands, &[vec![0, 1, 2]], &archive, 3);
        assert_eq!(out.elites.len(), 3);
    }

    #[test]
    fn diversity_moves_to_next_front_and_spreads() {
        let archive = archive_with_madds(&[0.0]);
        let cands = [ind(1, 0.0, 10.0), ind(2, 1.0, 100.0), ind(3, 1.0, 55.0), ind(4, 1.0, 60.0)];
        let out = diversity_selection(&cands, &[vec![0], vec![1, 2, 3]], &archive, 3);
        // Front 1 first, then 100 (farthest), then 55 (farther from {0,10,100} than 60).
        assert_eq!(
            out.elites,
            vec![Genome(vec![1]), Genome(vec![2]), Genome(vec![3])]
        );
    }

    #[test]
    fn sub_search_with_constant_comparator_and_zero_generations() {
        let space = SearchSpaceConfig::mobilenet_v3();
        let mut rng = seed::rng_from_seed(1);
        let pop: Vec<Individual> = (0..20)
            .map(|i| {
                let g = space::random_genome_with(&space, &mut rng);
                let m = complexity::madds(&g, &space).unwrap();
                Individual {
                    genome: g,
                    objectives: ov(1.0 / (1.0 + m) + 0.001 * i as f64, m),
                }
            })
            .collect();
        let archive = Archive::new();
        let params = SubSearchParams {
            generations: 5,
            pop_size: 16,
            elites: 4,
            variation: VariationParams::default(),
        };
        let out = sub_search(&pop, &ConstantComparator(0.5), &archive, &space, &params, 3).unwrap();
        assert_eq!(out.elites.len(), 4);
        assert!(out.elites.iter().all(|g| space::validate_genome(g, &space).unwrap()));
        assert_eq!(out.trace.len(), 5);
        let again = sub_search(&pop, &ConstantComparator(0.5), &archive, &space, &params, 3).unwrap();
        assert_eq!(out.elites, again.elites);

        let zero = SubSearchParams { generations: 0, ..params };
        let out = sub_search(&pop, &ConstantComparator(0.5), &archive, &space, &zero, 3).unwrap();
        // G = 0: elites come straight from the initial rank-1 front.
        let front: HashSet<Genome> = {
            let objs: Vec<_> = pop.iter().map(|p| p.objectives).collect();
            non_dominated_sort(&objs).fronts[0].iter().map(|&i| pop[i].genome.clone()).collect()
        };
        assert!(out.elites.iter().all(|g| front.contains(g)));
        assert!(out.trace.is_empty());
        assert!(sub_search(&[], &ConstantComparator(0.5), &archive, &space, &params, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn sort_matches_brute_force(
            pts in prop::collection::vec((0u8..30, 0u8..30), 1..200),
        ) {
            let pts: Vec<ObjectiveVector> =
                pts.iter().map(|&(a, b)| ov(a as f64, b as f64)).collect();
            prop_assert_eq!(non_dominated_sort(&pts).ranks, brute_force_ranks(&pts));
        }

        #[test]
        fn survivors_never_drop_rank_one_for_worse(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..60),
            frac in 0.0f64..1.0,
        ) {
            let pts: Vec<ObjectiveVector> = pts.iter().map(|&(a, b)| ov(a, b)).collect();
            let target = ((pts.len() as f64 * frac) as usize).max(1);
            let keep = survivor_selection(&pts, target).unwrap();
            prop_assert_eq!(keep.len(), target);
            let ranks = non_dominated_sort(&pts).ranks;
            let worst_kept = keep.iter().map(|&i| ranks[i]).max().unwrap();
            for i in 0..pts.len() {
                if !keep.contains(&i) {
                    prop_assert!(ranks[i] >= worst_kept);
                }
            }
        }
    }
}
