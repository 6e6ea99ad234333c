//! Pairwise surrogate: comparison dataset, linear max-margin comparator and
//! strength accumulation.
//!
//! For an ordered pair `(i, j)` the comparator outputs `Pred`, the
//! probability-like score that `i` has the higher error. Candidate `i`
//! accumulates `Pred` and candidate `j` accumulates `1 - Pred`; higher
//! strength means worse predicted error. `Pred` is quantized to a `2^-24`
//! grid so per-pair contributions, and therefore the strength total, are
//! exact in `f64`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::space::Genome;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

const PRED_GRID: f64 = (1u64 << 24) as f64;

/// Logistic link, rounded to the `2^-24` grid.
pub fn quantized_logistic(z: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z).exp());
    (p * PRED_GRID).round() / PRED_GRID
}

/// Per-position min-max scaling of genes to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneNormalizer {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl GeneNormalizer {
    pub fn fit<'a>(genomes: impl IntoIterator<Item = &'a Genome>) -> Self {
        let mut lo: Vec<f64> = Vec::new();
        let mut hi: Vec<f64> = Vec::new();
        for g in genomes {
            if lo.is_empty() {
                lo = g.genes().iter().map(|&v| f64::from(v)).collect();
                hi = lo.clone();
                continue;
            }
            for (k, &v) in g.genes().iter().enumerate() {
                lo[k] = lo[k].min(f64::from(v));
                hi[k] = hi[k].max(f64::from(v));
            }
        }
        Self { lo, hi }
    }

    /// Leaves genes unscaled.
    pub fn identity(len: usize) -> Self {
        Self {
            lo: vec![0.0; len],
            hi: vec![1.0; len],
        }
    }

    /// Constant positions map to 0.
    pub fn transform(&self, g: &Genome) -> Vec<f64> {
        g.genes()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let w = self.hi[k] - self.lo[k];
                if w > 0.0 {
                    (f64::from(v) - self.lo[k]) / w
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// One canonical pair: `first` is the lower archive index unless swapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSample {
    pub first: usize,
    pub second: usize,
    /// 0 if `first` has the lower error, 1 if `second` does.
    pub label: u8,
}

/// Pair samples over the normalized archive encodings. The feature of a
/// sample is the concatenation `[enc(first), enc(second)]`.
#[derive(Debug, Clone)]
pub struct PairwiseDataset {
    pub encodings: Vec<Vec<f64>>,
    pub samples: Vec<PairSample>,
    pub normalizer: GeneNormalizer,
}

impl PairwiseDataset {
    pub fn genome_len(&self) -> usize {
        self.encodings.first().map_or(0, Vec::len)
    }

    pub fn feature_len(&self) -> usize {
        2 * self.genome_len()
    }

    pub fn feature(&self, k: usize) -> Vec<f64> {
        let s = self.samples[k];
        let mut f = self.encodings[s.first].clone();
        f.extend_from_slice(&self.encodings[s.second]);
        f
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Builds the comparison set from `(genome, error_rate)` records: one sample
/// per pair `j > i`, ties skipped, optionally each also emitted swapped with
/// the label flipped.
pub fn build_pairwise_dataset(
    archive: &[(Genome, f64)],
    normalize: bool,
    augment_swapped: bool,
) -> Result<PairwiseDataset, SurrogateError> {
    if archive.len() < 2 {
        return Err(SurrogateError::TooFew {
            needed: 2,
            got: archive.len(),
        });
    }
    let normalizer = if normalize {
        GeneNormalizer::fit(archive.iter().map(|(g, _)| g))
    } else {
        GeneNormalizer::identity(archive[0].0.len())
    };
    let encodings = archive.iter().map(|(g, _)| normalizer.transform(g)).collect();
    let mut samples = Vec::new();
    for i in 0..archive.len() {
        for j in i + 1..archive.len() {
            let (ei, ej) = (archive[i].1, archive[j].1);
            if ei == ej {
                continue;
            }
            let label = u8::from(ej < ei);
            samples.push(PairSample {
                first: i,
                second: j,
                label,
            });
            if augment_swapped {
                samples.push(PairSample {
                    first: j,
                    second: i,
                    label: 1 - label,
                });
            }
        }
    }
    Ok(PairwiseDataset {
        encodings,
        samples,
        normalizer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmHyperParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for SvmHyperParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 1e-2,
            epochs: 200,
        }
    }
}

/// Accumulated per-candidate pairwise scores.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthVector(pub Vec<f64>);

impl StrengthVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Anything that can rank two genomes.
pub trait Comparator: Send + Sync {
    /// Score in `[0, 1]` that `a` has the higher error than `b`.
    fn compare(&self, a: &Genome, b: &Genome) -> f64;

    /// Strength accumulation over all pairs `j > i`, in pair-index order.
    fn strengths(&self, candidates: &[Genome]) -> Result<StrengthVector, SurrogateError> {
        accumulate(candidates.len(), |i, j| self.compare(&candidates[i], &candidates[j]))
    }
}

fn accumulate(
    n: usize,
    mut pred: impl FnMut(usize, usize) -> f64,
) -> Result<StrengthVector, SurrogateError> {
    if n < 2 {
        return Err(SurrogateError::TooFew { needed: 2, got: n });
    }
    let mut s = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let p = pred(i, j);
            s[i] += p;
            s[j] += 1.0 - p;
        }
    }
    Ok(StrengthVector(s))
}

/// Number of comparator evaluations behind one strength accumulation.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

pub fn predict_strengths<C: Comparator + ?Sized>(
    model: &C,
    candidates: &[Genome],
) -> Result<StrengthVector, SurrogateError> {
    model.strengths(candidates)
}

/// Linear max-margin comparator over concatenated pair encodings, with a
/// logistic link on the raw margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearComparator {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub normalizer: GeneNormalizer,
    /// Regularized hinge objective per epoch (hinge averaged over the
    /// epoch's pre-update margins).
    pub loss_trace: Vec<f64>,
    pub train_accuracy: f64,
    pub seed: u64,
}

impl LinearComparator {
    fn half(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn margin(&self, a: &[f64], b: &[f64]) -> f64 {
        let (wa, wb) = self.weights.split_at(self.half());
        dot(wa, a) + dot(wb, b) + self.bias
    }

    pub fn predict_encoded(&self, a: &[f64], b: &[f64]) -> f64 {
        quantized_logistic(self.margin(a, b))
    }
}

impl Comparator for LinearComparator {
    fn compare(&self, a: &Genome, b: &Genome) -> f64 {
        self.predict_encoded(&self.normalizer.transform(a), &self.normalizer.transform(b))
    }

    fn strengths(&self, candidates: &[Genome]) -> Result<StrengthVector, SurrogateError> {
        let (wa, wb) = self.weights.split_at(self.half());
        let enc: Vec<Vec<f64>> = candidates.iter().map(|g| self.normalizer.transform(g)).collect();
        let left: Vec<f64> = enc.iter().map(|x| dot(wa, x)).collect();
        let right: Vec<f64> = enc.iter().map(|x| dot(wb, x)).collect();
        accumulate(candidates.len(), |i, j| {
            quantized_logistic(left[i] + right[j] + self.bias)
        })
    }
}

/// Four independent partial sums so the loop vectorizes; the summation
/// order is fixed, so results stay deterministic.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(n - n % 4);
    let (cb, rb) = b.split_at(n - n % 4);
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Fits the comparator by SGD on the L2-regularized hinge loss. The weight
/// vector is kept as `scale * v` so the per-step shrink costs O(1).
pub fn train_comparator(
    data: &PairwiseDataset,
    hp: &SvmHyperParams,
    seed: u64,
) -> Result<LinearComparator, SurrogateError> {
    if data.is_empty() {
        return Err(SurrogateError::TooFew { needed: 1, got: 0 });
    }
    let ones = data.samples.iter().filter(|s| s.label == 1).count();
    if ones == 0 || ones == data.len() {
        return Err(SurrogateError::SingleClass);
    }
    let d = data.genome_len();
    let sign = |s: &PairSample| if s.label == 1 { 1.0 } else { -1.0 };
    let mut v = vec![0.0; 2 * d];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng_from_seed(seed);
    let shrink = 1.0 - hp.learning_rate * hp.l2;
    let mut loss_trace = Vec::with_capacity(hp.epochs);

    let margin_of = |v: &[f64], scale: f64, bias: f64, s: &PairSample| {
        let (va, vb) = v.split_at(d);
        scale * (dot(va, &data.encodings[s.first]) + dot(vb, &data.encodings[s.second])) + bias
    };

    // The returned model averages the end-of-epoch iterates of the last
    // half of training, which damps the constant-step SGD noise.
    let tail_start = hp.epochs / 2;
    let mut avg = vec![0.0; 2 * d];
    let mut avg_bias = 0.0;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut hinge = 0.0;
        for &k in &order {
            let s = &data.samples[k];
            let y = sign(s);
            let z = margin_of(&v, scale, bias, s);
            hinge += (1.0 - y * z).max(0.0);
            scale *= shrink;
            if y * z < 1.0 {
                let step = hp.learning_rate * y / scale;
                let (va, vb) = v.split_at_mut(d);
                for (w, x) in va.iter_mut().zip(&data.encodings[s.first]) {
                    *w += step * x;
                }
                for (w, x) in vb.iter_mut().zip(&data.encodings[s.second]) {
                    *w += step * x;
                }
                bias += hp.learning_rate * y;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
        let norm2: f64 = v.iter().map(|w| (w * scale).powi(2)).sum();
        loss_trace.push(hinge / data.len() as f64 + 0.5 * hp.l2 * norm2);
        if epoch >= tail_start {
            for (a, w) in avg.iter_mut().zip(&v) {
                *a += w * scale;
            }
            avg_bias += bias;
        }
    }

    let tail = (hp.epochs - tail_start) as f64;
    let weights: Vec<f64> = avg.iter().map(|a| a / tail).collect();
    let model = LinearComparator {
        weights,
        bias: avg_bias / tail,
        normalizer: data.normalizer.clone(),
        loss_trace,
        train_accuracy: 0.0,
        seed,
    };
    let correct = data
        .samples
        .iter()
        .filter(|s| {
            let z = model.margin(&data.encodings[s.first], &data.encodings[s.second]);
            (z > 0.0) == (s.label == 1)
        })
        .count();
    Ok(LinearComparator {
        train_accuracy: correct as f64 / data.len() as f64,
        ..model
    })
}

/// Linear least-squares error regressor over single-genome encodings, fit by
/// SGD with the same hyperparameters as the comparator. As a [`Comparator`]
/// it ranks by predicted error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearRegressor {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub normalizer: GeneNormalizer,
    pub seed: u64,
}

impl LinearRegressor {
    pub fn predict(&self, g: &Genome) -> f64 {
        dot(&self.weights, &self.normalizer.transform(g)) + self.bias
    }
}

impl Comparator for LinearRegressor {
    fn compare(&self, a: &Genome, b: &Genome) -> f64 {
        let (pa, pb) = (self.predict(a), self.predict(b));
        if pa > pb {
            1.0
        } else if pa < pb {
            0.0
        } else {
            0.5
        }
    }

    fn strengths(&self, candidates: &[Genome]) -> Result<StrengthVector, SurrogateError> {
        let preds: Vec<f64> = candidates.iter().map(|g| self.predict(g)).collect();
        accumulate(candidates.len(), |i, j| {
            if preds[i] > preds[j] {
                1.0
            } else if preds[i] < preds[j] {
                0.0
            } else {
                0.5
            }
        })
    }
}

pub fn train_regressor(
    archive: &[(Genome, f64)],
    hp: &SvmHyperParams,
    seed: u64,
) -> Result<LinearRegressor, SurrogateError> {
    if archive.len() < 2 {
        return Err(SurrogateError::TooFew {
            needed: 2,
            got: archive.len(),
        });
    }
    let normalizer = GeneNormalizer::fit(archive.iter().map(|(g, _)| g));
    let xs: Vec<Vec<f64>> = archive.iter().map(|(g, _)| normalizer.transform(g)).collect();
    let mut w = vec![0.0; xs[0].len()];
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = seed::rng_from_seed(seed);
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let resid = dot(&w, &xs[k]) + bias - archive[k].1;
            for (wi, x) in w.iter_mut().zip(&xs[k]) {
                *wi -= hp.learning_rate * (resid * x + hp.l2 * *wi);
            }
            bias -= hp.learning_rate * resid;
        }
    }
    Ok(LinearRegressor {
        weights: w,
        bias,
        normalizer,
        seed,
    })
}

/// Surrogate family used by the search and the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Pairwise,
    Regression,
}

/// Trains either surrogate family on `(genome, error_rate)` records.
pub fn train_surrogate(
    kind: SurrogateKind,
    archive: &[(Genome, f64)],
    hp: &SvmHyperParams,
    augment_swapped: bool,
    seed: u64,
) -> Result<Box<dyn Comparator>, SurrogateError> {
    Ok(match kind {
        SurrogateKind::Pairwise => {
            let data = build_pairwise_dataset(archive, true, augment_swapped)?;
            Box::new(train_comparator(&data, hp, seed)?)
        }
        SurrogateKind::Regression => Box::new(train_regressor(archive, hp, seed)?),
    })
}

/// Kendall's tau-a: `(concordant - discordant) / (n (n - 1) / 2)`; pairs tied
/// in either vector count as neither.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, SurrogateError> {
    if a.len() != b.len() {
        return Err(SurrogateError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(SurrogateError::TooFew {
            needed: 2,
            got: a.len(),
        });
    }
    let mut score: i64 = 0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] != a[j] && b[i] != b[j] {
                score += s as i64;
            }
        }
    }
    Ok(score as f64 / pair_count(a.len()) as f64)
}

/// Fixed-output comparator, mainly for tests and ablations.
#[derive(Debug, Clone, Copy)]
pub struct ConstantComparator(pub f64);

impl Comparator for ConstantComparator {
    fn compare(&self, _: &Genome, _: &Genome) -> f64 {
        self.0
    }
}
