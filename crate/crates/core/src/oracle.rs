//! Double-precision references for every function the protocols approximate,
//! and the plaintext sampling pipeline.

use crate::diffusion::{self, DenoiserParams, Flavor, SamplerConfig};
use crate::error::Result;

pub fn exact_exp(x: f64) -> f64 {
    x.exp()
}

pub fn exact_relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn exact_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn exact_silu(x: f64) -> f64 {
    x * exact_sigmoid(x)
}

/// `ln(1 + e^x)` without overflow.
pub fn exact_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn exact_tanh(x: f64) -> f64 {
    x.tanh()
}

pub fn exact_mish(x: f64) -> f64 {
    x * exact_tanh(exact_softplus(x))
}

pub fn exact_recip(x: f64) -> f64 {
    1.0 / x
}

pub fn exact_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Row-wise softmax over the last axis of a flat buffer.
pub fn exact_softmax_rows(x: &[f64], width: usize) -> Vec<f64> {
    x.chunks(width).flat_map(exact_softmax).collect()
}

/// Mean squared error and worst point of `approx` against `exact` on an
/// evenly spaced grid of `points` over `[lo, hi]`.
pub fn grid_error(
    lo: f64,
    hi: f64,
    points: usize,
    approx: impl Fn(f64) -> f64,
    exact: impl Fn(f64) -> f64,
) -> GridError {
    let mut sq = 0.0;
    let mut worst = GridError::default();
    for i in 0..points {
        let x = if points == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (points - 1) as f64
        };
        let d = (approx(x) - exact(x)).abs();
        sq += d * d;
        if d > worst.max_abs {
            worst.max_abs = d;
            worst.worst_input = x;
        }
    }
    worst.mse = sq / points.max(1) as f64;
    worst
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GridError {
    pub mse: f64,
    pub max_abs: f64,
    pub worst_input: f64,
}

/// Runs the full sampler in `f64`, with exact or approximated nonlinearities.
/// Returns the final `x0` before clamping.
pub fn run_plain_pipeline(
    params: &DenoiserParams,
    cfg: &SamplerConfig,
    flavor: Flavor,
) -> Result<Vec<f64>> {
    diffusion::sample_plain(params, cfg, flavor)
}
