//! Architecture encoding, validity rules and variation operators.
//!
//! A genome is a fixed-length vector of 1-based option indices:
//!
//! ```text
//! [res | d_1, e_11, k_11, ..., e_1L, k_1L | d_2, ... | ... ]
//! ```
//!
//! where `L = max_layers_per_block`. Layer slots beyond a block's decoded
//! depth hold `0` in both positions.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("genome has {actual} genes, layout requires {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid search space: {0}")]
    InvalidConfig(String),
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("crossover cuts ({cut1}, {cut2}) invalid for length {len}")]
    InvalidCuts { cut1: usize, cut2: usize, len: usize },
    #[error("cannot parse genome: {0}")]
    Parse(String),
    #[error("search space has more than {limit} genomes")]
    TooLarge { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub in_channels: u32,
    pub out_channels: u32,
    pub stride: u32,
    /// Spatial downscale of the input image at block entry.
    pub input_resolution_divisor: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceConfig {
    pub resolution_options: Vec<u32>,
    pub blocks: Vec<BlockSpec>,
    pub max_layers_per_block: usize,
    pub depth_options: Vec<u32>,
    pub expand_options: Vec<f64>,
    pub kernel_options: Vec<u32>,
    /// Output channels of the fixed 3x3 stride-2 stem convolution.
    pub stem_channels: u32,
    /// Output channels of the fixed 1x1 head convolution.
    pub head_channels: u32,
}

/// Role of a gene position within the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneKind {
    Resolution,
    Depth { block: usize },
    Expand { block: usize, layer: usize },
    Kernel { block: usize, layer: usize },
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl SearchSpaceConfig {
    /// MobileNetV3-style space: 5 blocks of up to 4 inverted-bottleneck
    /// layers, depths {2,3,4}, kernels {3,5,7}, expands {3,4,6}.
    pub fn mobilenet_v3() -> Self {
        let block = |cin, cout, stride, div| BlockSpec {
            in_channels: cin,
            out_channels: cout,
            stride,
            input_resolution_divisor: div,
        };
        Self {
            resolution_options: vec![192, 208, 224, 240, 256],
            blocks: vec![
                block(16, 24, 2, 2),
                block(24, 40, 2, 4),
                block(40, 80, 2, 8),
                block(80, 112, 1, 16),
                block(112, 160, 2, 16),
            ],
            max_layers_per_block: 4,
            depth_options: vec![2, 3, 4],
            expand_options: vec![3.0, 4.0, 6.0],
            kernel_options: vec![3, 5, 7],
            stem_channels: 16,
            head_channels: 960,
        }
    }

    /// Enumerable space of exactly 400 genomes: 2 blocks, depth {1,2},
    /// 2 expands, 2 kernels, 1 resolution.
    pub fn tiny() -> Self {
        Self {
            resolution_options: vec![32],
            blocks: vec![
                BlockSpec {
                    in_channels: 8,
                    out_channels: 16,
                    stride: 2,
                    input_resolution_divisor: 2,
                },
                BlockSpec {
                    in_channels: 16,
                    out_channels: 24,
                    stride: 2,
                    input_resolution_divisor: 4,
                },
            ],
            max_layers_per_block: 2,
            depth_options: vec![1, 2],
            expand_options: vec![3.0, 6.0],
            kernel_options: vec![3, 5],
            stem_channels: 8,
            head_channels: 64,
        }
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        let bad = |msg: &str| Err(SpaceError::InvalidConfig(msg.to_string()));
        if self.resolution_options.is_empty()
            || self.blocks.is_empty()
            || self.depth_options.is_empty()
            || self.expand_options.is_empty()
            || self.kernel_options.is_empty()
        {
            return bad("every option list must be non-empty");
        }
        if !strictly_increasing(&self.resolution_options)
            || !strictly_increasing(&self.depth_options)
            || !strictly_increasing(&self.expand_options)
            || !strictly_increasing(&self.kernel_options)
        {
            return bad("option lists must be strictly increasing");
        }
        if self.resolution_options[0] == 0 || self.depth_options[0] == 0 {
            return bad("resolutions and depths must be positive");
        }
        if !self.expand_options.iter().all(|&e| e.is_finite() && e > 0.0) {
            return bad("expand ratios must be positive");
        }
        if !self.kernel_options.iter().all(|&k| k % 2 == 1) {
            return bad("kernel sizes must be odd");
        }
        if self.max_layers_per_block == 0
            || *self.depth_options.last().unwrap() as usize != self.max_layers_per_block
        {
            return bad("max(depth_options) must equal max_layers_per_block");
        }
        for b in &self.blocks {
            if b.in_channels == 0 || b.out_channels == 0 || b.input_resolution_divisor == 0 {
                return bad("block channels and divisors must be positive");
            }
            if b.stride != 1 && b.stride != 2 {
                return bad("block stride must be 1 or 2");
            }
        }
        if self.stem_channels == 0 || self.head_channels == 0 {
            return bad("stem and head channels must be positive");
        }
        Ok(())
    }

    pub fn genome_len(&self) -> usize {
        1 + self.blocks.len() * self.block_stride()
    }

    fn block_stride(&self) -> usize {
        1 + 2 * self.max_layers_per_block
    }

    pub fn depth_gene(&self, block: usize) -> usize {
        1 + block * self.block_stride()
    }

    /// Positions of the (expand, kernel) genes of a layer slot (0-based layer).
    pub fn slot_genes(&self, block: usize, layer: usize) -> (usize, usize) {
        let e = self.depth_gene(block) + 1 + 2 * layer;
        (e, e + 1)
    }

    pub fn gene_kind(&self, pos: usize) -> GeneKind {
        if pos == 0 {
            return GeneKind::Resolution;
        }
        let block = (pos - 1) / self.block_stride();
        let offset = (pos - 1) % self.block_stride();
        if offset == 0 {
            GeneKind::Depth { block }
        } else if offset % 2 == 1 {
            GeneKind::Expand {
                block,
                layer: (offset - 1) / 2,
            }
        } else {
            GeneKind::Kernel {
                block,
                layer: (offset - 2) / 2,
            }
        }
    }

    /// Number of options behind a gene; valid indices are `1..=count`.
    pub fn option_count(&self, kind: GeneKind) -> u32 {
        let n = match kind {
            GeneKind::Resolution => self.resolution_options.len(),
            GeneKind::Depth { .. } => self.depth_options.len(),
            GeneKind::Expand { .. } => self.expand_options.len(),
            GeneKind::Kernel { .. } => self.kernel_options.len(),
        };
        n as u32
    }

    /// Genome using the smallest option everywhere.
    pub fn smallest_genome(&self) -> Genome {
        self.extreme_genome(|_| 1)
    }

    /// Genome using the largest option everywhere.
    pub fn largest_genome(&self) -> Genome {
        self.extreme_genome(|n| n)
    }

    fn extreme_genome(&self, pick: impl Fn(u32) -> u32) -> Genome {
        let mut genes = vec![0; self.genome_len()];
        genes[0] = pick(self.option_count(GeneKind::Resolution));
        for b in 0..self.blocks.len() {
            let d = pick(self.depth_options.len() as u32);
            genes[self.depth_gene(b)] = d;
            for l in 0..self.depth_options[d as usize - 1] as usize {
                let (e, k) = self.slot_genes(b, l);
                genes[e] = pick(self.expand_options.len() as u32);
                genes[k] = pick(self.kernel_options.len() as u32);
            }
        }
        Genome(genes)
    }
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        Self::mobilenet_v3()
    }
}

/// Fixed-length integer architecture encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome(pub Vec<u32>);

impl Genome {
    pub fn genes(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(SpaceError::Parse("empty genome".into()));
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| SpaceError::Parse(format!("bad gene {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Genome)
    }
}

impl Serialize for Genome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Decoded per-layer choices of a valid genome.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedArch {
    pub resolution: u32,
    /// Per block, the active layers as (expand ratio, kernel size).
    pub blocks: Vec<Vec<(f64, u32)>>,
}

fn check_len(genes: &[u32], cfg: &SearchSpaceConfig) -> Result<(), SpaceError> {
    let expected = cfg.genome_len();
    if genes.len() != expected {
        return Err(SpaceError::LengthMismatch {
            expected,
            actual: genes.len(),
        });
    }
    Ok(())
}

/// True iff every layout invariant holds. A wrong length is reported as
/// an error rather than `false`.
pub fn validate_genome(g: &Genome, cfg: &SearchSpaceConfig) -> Result<bool, SpaceError> {
    check_len(&g.0, cfg)?;
    Ok(first_violation(&g.0, cfg).is_none())
}

fn first_violation(genes: &[u32], cfg: &SearchSpaceConfig) -> Option<String> {
    let in_range = |v: u32, n: usize| v >= 1 && v as usize <= n;
    if !in_range(genes[0], cfg.resolution_options.len()) {
        return Some(format!("resolution index {} out of range", genes[0]));
    }
    for b in 0..cfg.blocks.len() {
        let d = genes[cfg.depth_gene(b)];
        if !in_range(d, cfg.depth_options.len()) {
            return Some(format!("block {b}: depth index {d} out of range"));
        }
        let depth = cfg.depth_options[d as usize - 1] as usize;
        for l in 0..cfg.max_layers_per_block {
            let (e, k) = cfg.slot_genes(b, l);
            let (ev, kv) = (genes[e], genes[k]);
            if l < depth {
                if !in_range(ev, cfg.expand_options.len()) || !in_range(kv, cfg.kernel_options.len())
                {
                    return Some(format!("block {b} layer {l}: slot ({ev},{kv}) out of range"));
                }
            } else if ev != 0 || kv != 0 {
                return Some(format!("block {b} layer {l}: padded slot holds ({ev},{kv})"));
            }
        }
    }
    None
}

pub fn decode(g: &Genome, cfg: &SearchSpaceConfig) -> Result<DecodedArch, SpaceError> {
    check_len(&g.0, cfg)?;
    if let Some(msg) = first_violation(&g.0, cfg) {
        return Err(SpaceError::InvalidGenome(msg));
    }
    let genes = &g.0;
    let blocks = (0..cfg.blocks.len())
        .map(|b| {
            let depth = cfg.depth_options[genes[cfg.depth_gene(b)] as usize - 1] as usize;
            (0..depth)
                .map(|l| {
                    let (e, k) = cfg.slot_genes(b, l);
                    (
                        cfg.expand_options[genes[e] as usize - 1],
                        cfg.kernel_options[genes[k] as usize - 1],
                    )
                })
                .collect()
        })
        .collect();
    Ok(DecodedArch {
        resolution: cfg.resolution_options[genes[0] as usize - 1],
        blocks,
    })
}

/// Draws a valid genome with every active index uniform over its options.
pub fn random_genome_with(cfg: &SearchSpaceConfig, rng: &mut Rng) -> Genome {
    let mut genes = vec![0u32; cfg.genome_len()];
    genes[0] = rng.gen_range(1..=cfg.resolution_options.len() as u32);
    for b in 0..cfg.blocks.len() {
        let d = rng.gen_range(1..=cfg.depth_options.len() as u32);
        genes[cfg.depth_gene(b)] = d;
        for l in 0..cfg.depth_options[d as usize - 1] as usize {
            let (e, k) = cfg.slot_genes(b, l);
            genes[e] = rng.gen_range(1..=cfg.expand_options.len() as u32);
            genes[k] = rng.gen_range(1..=cfg.kernel_options.len() as u32);
        }
    }
    Genome(genes)
}

pub fn random_genome(cfg: &SearchSpaceConfig, seed: u64) -> Genome {
    random_genome_with(cfg, &mut seed::rng_from_seed(seed))
}

/// Restores the layout invariants of a raw gene vector.
///
/// Resolution and depth genes are clamped into range, slots beyond the
/// decoded depth are zeroed, and zero or out-of-range slots within the depth
/// are refilled uniformly at random. Valid input is returned unchanged and
/// consumes no randomness.
pub fn repair_genome_with(
    raw: &[u32],
    cfg: &SearchSpaceConfig,
    rng: &mut Rng,
) -> Result<Genome, SpaceError> {
    check_len(raw, cfg)?;
    let mut genes = raw.to_vec();
    let clamp = |v: u32, n: usize| v.clamp(1, n as u32);
    genes[0] = clamp(genes[0], cfg.resolution_options.len());
    let n_expand = cfg.expand_options.len() as u32;
    let n_kernel = cfg.kernel_options.len() as u32;
    for b in 0..cfg.blocks.len() {
        let dg = cfg.depth_gene(b);
        genes[dg] = clamp(genes[dg], cfg.depth_options.len());
        let depth = cfg.depth_options[genes[dg] as usize - 1] as usize;
        for l in 0..cfg.max_layers_per_block {
            let (e, k) = cfg.slot_genes(b, l);
            if l < depth {
                if genes[e] == 0 || genes[e] > n_expand {
                    genes[e] = rng.gen_range(1..=n_expand);
                }
                if genes[k] == 0 || genes[k] > n_kernel {
                    genes[k] = rng.gen_range(1..=n_kernel);
                }
            } else {
                genes[e] = 0;
                genes[k] = 0;
            }
        }
    }
    Ok(Genome(genes))
}

pub fn repair_genome(raw: &[u32], cfg: &SearchSpaceConfig, seed: u64) -> Result<Genome, SpaceError> {
    repair_genome_with(raw, cfg, &mut seed::rng_from_seed(seed))
}

/// Swaps the segment `[cut1, cut2)` between two gene vectors, no repair.
pub fn swap_segment(
    a: &[u32],
    b: &[u32],
    cut1: usize,
    cut2: usize,
) -> Result<(Vec<u32>, Vec<u32>), SpaceError> {
    let len = a.len();
    if b.len() != len {
        return Err(SpaceError::LengthMismatch {
            expected: len,
            actual: b.len(),
        });
    }
    if cut1 >= cut2 || cut2 > len {
        return Err(SpaceError::InvalidCuts { cut1, cut2, len });
    }
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    c1[cut1..cut2].copy_from_slice(&b[cut1..cut2]);
    c2[cut1..cut2].copy_from_slice(&a[cut1..cut2]);
    Ok((c1, c2))
}

/// Two-point crossover at explicit cuts; children are repaired with streams
/// derived from `seed`.
pub fn two_point_crossover(
    p1: &Genome,
    p2: &Genome,
    cut1: usize,
    cut2: usize,
    cfg: &SearchSpaceConfig,
    seed: u64,
) -> Result<(Genome, Genome), SpaceError> {
    let (c1, c2) = swap_segment(&p1.0, &p2.0, cut1, cut2)?;
    Ok((
        repair_genome(&c1, cfg, seed::derive_seed(seed, &[0]))?,
        repair_genome(&c2, cfg, seed::derive_seed(seed, &[1]))?,
    ))
}

/// Two-point crossover with cut points drawn uniformly from the generator.
pub fn two_point_crossover_with(
    p1: &Genome,
    p2: &Genome,
    cfg: &SearchSpaceConfig,
    rng: &mut Rng,
) -> Result<(Genome, Genome), SpaceError> {
    let len = p1.len();
    let a = rng.gen_range(0..=len);
    let mut b = rng.gen_range(0..len);
    if b >= a {
        b += 1;
    }
    let (cut1, cut2) = (a.min(b), a.max(b));
    let seed: u64 = rng.gen();
    two_point_crossover(p1, p2, cut1, cut2, cfg, seed)
}

/// Deb's polynomial perturbation for a uniform draw `u` in `[0, 1)`.
pub fn polynomial_delta(u: f64, eta: f64) -> f64 {
    let exponent = 1.0 / (eta + 1.0);
    if u < 0.5 {
        (2.0 * u).powf(exponent) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(exponent)
    }
}

/// Mutates one integer gene on `[low, high]`: perturb, round, clamp.
pub fn mutate_gene(x: u32, low: u32, high: u32, eta: f64, u: f64) -> u32 {
    let delta = polynomial_delta(u, eta);
    let moved = f64::from(x) + delta * f64::from(high - low);
    (moved.round().max(f64::from(low)).min(f64::from(high))) as u32
}

/// Polynomial mutation over the integer genes followed by repair.
///
/// Each gene mutates with probability `per_gene_prob` on the range of its
/// option indices. Padded slots carry no information and are left to repair.
pub fn polynomial_mutation_with(
    g: &Genome,
    cfg: &SearchSpaceConfig,
    eta: f64,
    per_gene_prob: f64,
    rng: &mut Rng,
) -> Result<Genome, SpaceError> {
    check_len(&g.0, cfg)?;
    let mut genes = g.0.clone();
    for (pos, gene) in genes.iter_mut().enumerate() {
        if rng.gen::<f64>() >= per_gene_prob {
            continue;
        }
        let u: f64 = rng.gen();
        let kind = cfg.gene_kind(pos);
        let is_slot = matches!(kind, GeneKind::Expand { .. } | GeneKind::Kernel { .. });
        if is_slot && *gene == 0 {
            continue;
        }
        *gene = mutate_gene(*gene, 1, cfg.option_count(kind), eta, u);
    }
    let repair_seed: u64 = rng.gen();
    repair_genome(&genes, cfg, repair_seed)
}

pub fn polynomial_mutation(
    g: &Genome,
    cfg: &SearchSpaceConfig,
    eta: f64,
    per_gene_prob: f64,
    seed: u64,
) -> Result<Genome, SpaceError> {
    polynomial_mutation_with(g, cfg, eta, per_gene_prob, &mut seed::rng_from_seed(seed))
}

/// Lists every valid genome, failing if there are more than `limit`.
pub fn enumerate_genomes(cfg: &SearchSpaceConfig, limit: usize) -> Result<Vec<Genome>, SpaceError> {
    // Per-block encodings: depth gene followed by the slot genes.
    let mut block_codes: Vec<Vec<u32>> = Vec::new();
    let n_e = cfg.expand_options.len() as u32;
    let n_k = cfg.kernel_options.len() as u32;
    for (di, &depth) in cfg.depth_options.iter().enumerate() {
        let depth = depth as usize;
        let combos = ((n_e * n_k) as usize).checked_pow(depth as u32).unwrap_or(usize::MAX);
        if combos > limit {
            return Err(SpaceError::TooLarge { limit });
        }
        for c in 0..combos {
            let mut code = vec![0u32; 1 + 2 * cfg.max_layers_per_block];
            code[0] = di as u32 + 1;
            let mut rest = c as u32;
            for l in 0..depth {
                let pair = rest % (n_e * n_k);
                rest /= n_e * n_k;
                code[1 + 2 * l] = pair / n_k + 1;
                code[2 + 2 * l] = pair % n_k + 1;
            }
            block_codes.push(code);
        }
    }
    let mut total = cfg.resolution_options.len();
    for _ in &cfg.blocks {
        total = total.saturating_mul(block_codes.len());
        if total > limit {
            return Err(SpaceError::TooLarge { limit });
        }
    }
    let mut out = Vec::with_capacity(total);
    for r in 1..=cfg.resolution_options.len() as u32 {
        let mut partial: Vec<Vec<u32>> = vec![vec![r]];
        for _ in &cfg.blocks {
            partial = partial
                .iter()
                .flat_map(|p| {
                    block_codes.iter().map(move |code| {
                        let mut v = p.clone();
                        v.extend_from_slice(code);
                        v
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(Genome));
    }
    Ok(out)
}
