//! Polynomial approximations of the nonlinear layers, on shares and in
//! plaintext.
//!
//! The exponential is replaced on `[t_exp, 0]` by a degree-7 Chebyshev series
//! and clamped to zero below; softmax divides by the row sum through a Newton
//! reciprocal. SiLU and Mish use a four-piece fit with breakpoints
//! `-6, -2, 6`. Each secure operation has a plaintext twin computing exactly
//! the same approximation in `f64`.

mod fits;
mod secure;

pub use fits::*;

/// Exponent of the `i`-th sinusoid frequency, `-ln(10000) i / half`.
pub fn frequency_exponent(i: usize, half: usize) -> f64 {
    -(10000f64).ln() * i as f64 / half as f64
}

/// Standard sinusoidal timestep embedding: `sin` half then `cos` half.
pub fn sinusoidal_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let phases: Vec<f64> = (0..half)
        .map(|i| t * frequency_exponent(i, half).exp())
        .collect();
    phases
        .iter()
        .map(|p| p.sin())
        .chain(phases.iter().map(|p| p.cos()))
        .collect()
}
