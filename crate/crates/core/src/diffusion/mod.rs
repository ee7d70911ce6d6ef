//! Noise schedule, reverse-process updates, the toy denoiser and the sampling
//! loop, in plaintext and on shares.

mod denoiser;
mod params;
pub mod remote;
mod sampler;
mod schedule;

pub use denoiser::{deal_params, denoise_plain, Flavor, ModelOptions, SharedParams};
pub use params::{DenoiserParams, DenoiserShape};
pub use sampler::{sample_mpc_local, sample_plain, SamplerConfig, SamplerMethod, DDIM_HORIZON};
pub use schedule::{ddim_timesteps, make_linear_schedule, NoiseSchedule};
