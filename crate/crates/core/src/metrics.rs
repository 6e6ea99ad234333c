//! Front quality and diversity metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("metric needs at least one point")]
    Empty,
    #[error("bin count must be positive")]
    ZeroBins,
}

/// Per-axis min/max used for min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Bounds {
    pub fn from_points(points: &[[f64; 2]]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Bounds {
            lo: *first,
            hi: *first,
        };
        for p in points {
            for ax in 0..2 {
                b.lo[ax] = b.lo[ax].min(p[ax]);
                b.hi[ax] = b.hi[ax].max(p[ax]);
            }
        }
        Some(b)
    }

    /// Maps into the unit square; a zero-width axis maps to 0.
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for ax in 0..2 {
            let w = self.hi[ax] - self.lo[ax];
            out[ax] = if w > 0.0 { (p[ax] - self.lo[ax]) / w } else { 0.0 };
        }
        out
    }
}

pub fn normalize_points(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    match Bounds::from_points(points) {
        Some(b) => points.iter().map(|&p| b.normalize(p)).collect(),
        None => Vec::new(),
    }
}

/// `bins x bins` occupancy counts over the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    pub bins: usize,
    pub counts: Vec<usize>,
}

impl HistogramGrid {
    /// Bins points that are already normalized to the unit square. The
    /// upper edge of the last bin is closed.
    pub fn from_normalized(points: &[[f64; 2]], bins: usize) -> Self {
        let cell = |v: f64| ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        let mut counts = vec![0; bins * bins];
        for p in points {
            counts[cell(p[0]) * bins + cell(p[1])] += 1;
        }
        Self { bins, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        let total = self.total() as f64;
        self.counts.iter().map(move |&c| c as f64 / total)
    }

    /// Shannon entropy in bits, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.probabilities()
            .filter(|&p| p > 0.0)
            .fold(0.0, |h, p| h - p * p.log2())
    }
}

/// Entropy of the 2-D histogram of min-max normalized points.
pub fn distribution_entropy(points: &[[f64; 2]], bins: usize) -> Result<f64, MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::Empty);
    }
    if bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let normalized = normalize_points(points);
    Ok(HistogramGrid::from_normalized(&normalized, bins).entropy())
}

/// Architecture distribution entropy of `(error_rate, madds)` records,
/// binned on (accuracy, MAdds).
pub fn architecture_entropy(error_madds: &[[f64; 2]], bins: usize) -> Result<f64, MetricsError> {
    let points: Vec<[f64; 2]> = error_madds.iter().map(|p| [1.0 - p[0], p[1]]).collect();
    distribution_entropy(&points, bins)
}

/// Entropy of the 1-D histogram of min-max normalized values (the MAdds
/// marginal of the architecture distribution).
pub fn marginal_entropy(values: &[f64], bins: usize) -> Result<f64, MetricsError> {
    let points: Vec<[f64; 2]> = values.iter().map(|&v| [0.0, v]).collect();
    distribution_entropy(&points, bins)
}

/// Exact 2-D hypervolume for minimization, by a sweep over the points
/// sorted on the first objective. Points not strictly better than the
/// reference in both coordinates contribute nothing.
pub fn hypervolume_2d(points: &[[f64; 2]], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .copied()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in pts {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

/// Inverted generational distance: mean Euclidean distance from each
/// reference-front point to its nearest approximation point.
pub fn igd(reference_front: &[[f64; 2]], approximation: &[[f64; 2]]) -> Result<f64, MetricsError> {
    if reference_front.is_empty() || approximation.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = reference_front
        .iter()
        .map(|r| {
            approximation
                .iter()
                .map(|a| ((r[0] - a[0]).powi(2) + (r[1] - a[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / reference_front.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        let single = distribution_entropy(&[[0.3, 7.0]; 100], 10).unwrap();
        assert!(single == 0.0 && single.is_sign_positive());
        let four = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!((distribution_entropy(&four, 2).unwrap() - 2.0).abs() < 1e-12);
        // Seven occupied cells of a 3x3 grid, one of them twice.
        let eight = [
            [0.0, 0.0],
            [0.1, 0.1],
            [0.5, 0.0],
            [1.0, 0.0],
            [0.0, 0.5],
            [0.5, 0.5],
            [1.0, 0.5],
            [0.0, 1.0],
        ];
        assert!((distribution_entropy(&eight, 3).unwrap() - 2.75).abs() < 1e-9);
        assert_eq!(distribution_entropy(&[], 10), Err(MetricsError::Empty));
        assert_eq!(distribution_entropy(&four, 0), Err(MetricsError::ZeroBins));
    }

    #[test]
    fn marginal_entropy_is_one_dimensional() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        assert!((marginal_entropy(&xs, 4).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(marginal_entropy(&[5.0; 3], 10).unwrap(), 0.0);
    }

    #[test]
    fn constant_axis_maps_to_first_cell() {
        let pts = [[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]];
        let h = HistogramGrid::from_normalized(&normalize_points(&pts), 2);
        assert_eq!(h.counts, vec![1, 2, 0, 0]);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume_2d(&[[0.0, 0.0]], [1.0, 1.0]), 1.0);
        let two = [[0.2, 0.6], [0.6, 0.2]];
        assert!((hypervolume_2d(&two, [1.0, 1.0]) - 0.48).abs() < 1e-12);
        let three = [[0.2, 0.6], [0.6, 0.2], [0.7, 0.7]];
        assert!((hypervolume_2d(&three, [1.0, 1.0]) - 0.48).abs() < 1e-12);
        assert_eq!(hypervolume_2d(&[[1.0, 0.0], [0.5, 2.0]], [1.0, 1.0]), 0.0);
        assert_eq!(hypervolume_2d(&[], [1.0, 1.0]), 0.0);
    }

    #[test]
    fn igd_examples() {
        let front = [[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(igd(&front, &front).unwrap(), 0.0);
        assert!((igd(&front, &[[0.0, 1.0]]).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    /// Grid-counting oracle: fraction of fine-grid cell centers dominated.
    fn hv_grid(points: &[[f64; 2]], n: usize) -> f64 {
        let mut hit = 0;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                let y = (j as f64 + 0.5) / n as f64;
                if points.iter().any(|p| p[0] <= x && p[1] <= y) {
                    hit += 1;
                }
            }
        }
        hit as f64 / (n * n) as f64
    }

    proptest! {
        #[test]
        fn sweep_matches_grid_oracle(pts in prop::collection::vec((0u32..20, 0u32..20), 1..12)) {
            // Points on a 1/20 lattice so a 200x200 cell-center grid is exact.
            let pts: Vec<[f64; 2]> =
                pts.iter().map(|&(a, b)| [a as f64 / 20.0, b as f64 / 20.0]).collect();
            let exact = hypervolume_2d(&pts, [1.0, 1.0]);
            prop_assert!((exact - hv_grid(&pts, 200)).abs() < 1e-9);
        }

        #[test]
        fn hv_scales_with_objectives(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20),
            sx in 0.1f64..10.0,
            sy in 0.1f64..10.0,
        ) {
            let base: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
            let scaled: Vec<[f64; 2]> = base.iter().map(|p| [p[0] * sx, p[1] * sy]).collect();
            let hv = hypervolume_2d(&base, [1.0, 1.0]);
            let hv_scaled = hypervolume_2d(&scaled, [sx, sy]);
            prop_assert!((hv_scaled - hv * sx * sy).abs() <= 1e-9 * (1.0 + hv_scaled));
        }

        #[test]
        fn entropy_bounded_and_order_free(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60),
            bins in 1usize..12,
        ) {
            let pts: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
            let e = distribution_entropy(&pts, bins).unwrap();
            let cap = (pts.len().min(bins * bins) as f64).log2();
            prop_assert!(e >= 0.0 && e <= cap + 1e-12);
            let mut rev = pts.clone();
            rev.reverse();
            prop_assert_eq!(e, distribution_entropy(&rev, bins).unwrap());
        }
    }
}
