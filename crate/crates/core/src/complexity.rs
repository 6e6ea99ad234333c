//! Analytic multiply-accumulate count (MAdds) of an encoded architecture.
//!
//! Each active layer is an inverted bottleneck (expand 1x1, depthwise kxk,
//! project 1x1). With input size `H x W`, input channels `C`, expansion `e`,
//! kernel `k`, output channels `C_out` and stride `s`:
//!
//! ```text
//! H*W*C*(e*C) + (H/s)*(W/s)*(e*C)*k^2 + (H/s)*(W/s)*(e*C)*C_out
//! ```
//!
//! The first layer of a block uses the block's stride and channel change;
//! later layers are stride 1 with `C = C_out`. Spatial sizes round up
//! (`ceil(res / divisor)`, `ceil(H / s)`). A fixed 3x3 stride-2 stem from RGB
//! and a 1x1 head convolution are added. Squeeze-excitation and activation
//! costs are not counted.

use serde::{Deserialize, Serialize};

use crate::space::{decode, Genome, SearchSpaceConfig, SpaceError};

/// MAdds breakdown, all values in millions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub total_madds: f64,
    pub per_block: Vec<f64>,
    pub stem_madds: f64,
    pub head_madds: f64,
}

fn ceil_div(a: u32, b: u32) -> u32 {
    a.div_ceil(b)
}

/// Raw multiply-accumulates of one inverted-bottleneck layer.
pub fn layer_madds(h: u32, c_in: u32, c_out: u32, expand: f64, kernel: u32, stride: u32) -> f64 {
    let hw_in = f64::from(h) * f64::from(h);
    let h_out = f64::from(ceil_div(h, stride));
    let hw_out = h_out * h_out;
    let mid = expand * f64::from(c_in);
    hw_in * f64::from(c_in) * mid
        + hw_out * mid * f64::from(kernel * kernel)
        + hw_out * mid * f64::from(c_out)
}

pub fn stem_madds(resolution: u32, cfg: &SearchSpaceConfig) -> f64 {
    let h = f64::from(ceil_div(resolution, 2));
    h * h * 3.0 * 9.0 * f64::from(cfg.stem_channels)
}

pub fn head_madds(resolution: u32, cfg: &SearchSpaceConfig) -> f64 {
    let last = cfg.blocks.last().expect("space has at least one block");
    let h = f64::from(ceil_div(
        ceil_div(resolution, last.input_resolution_divisor),
        last.stride,
    ));
    h * h * f64::from(last.out_channels) * f64::from(cfg.head_channels)
}

pub fn compute_madds(g: &Genome, cfg: &SearchSpaceConfig) -> Result<ComplexityReport, SpaceError> {
    let arch = decode(g, cfg)?;
    let res = arch.resolution;
    let per_block: Vec<f64> = cfg
        .blocks
        .iter()
        .zip(&arch.blocks)
        .map(|(spec, layers)| {
            let mut h = ceil_div(res, spec.input_resolution_divisor);
            let mut c_in = spec.in_channels;
            let mut stride = spec.stride;
            let mut sum = 0.0;
            for &(expand, kernel) in layers {
                sum += layer_madds(h, c_in, spec.out_channels, expand, kernel, stride);
                h = ceil_div(h, stride);
                c_in = spec.out_channels;
                stride = 1;
            }
            sum / 1e6
        })
        .collect();
    let stem = stem_madds(res, cfg) / 1e6;
    let head = head_madds(res, cfg) / 1e6;
    let total = stem + head + per_block.iter().sum::<f64>();
    Ok(ComplexityReport {
        total_madds: total,
        per_block,
        stem_madds: stem,
        head_madds: head,
    })
}

/// Total MAdds in millions.
pub fn madds(g: &Genome, cfg: &SearchSpaceConfig) -> Result<f64, SpaceError> {
    compute_madds(g, cfg).map(|r| r.total_madds)
}
