use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::denoiser::{deal_params, denoise_plain, Flavor, ModelOptions, SharedParams};
use super::params::DenoiserParams;
use super::schedule::{ddim_timesteps, make_linear_schedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::fixed::FixedEncoding;
use crate::nonlinear::{Activation, ActivationKind, SoftmaxConfig};
use crate::rss::{reconstruct_tensor, run_local, seeded_stream, stream, Party, ShareTensor};
use crate::transport::CostReport;

/// Headroom for the reverse-step combination: `|a x - b eps + s z| < 2^14`.
const STEP_HEADROOM: u32 = 14;

/// Training horizon for the DDIM schedule.
pub const DDIM_HORIZON: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMethod {
    Ddpm,
    Ddim,
}

impl SamplerMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ddpm" => Ok(SamplerMethod::Ddpm),
            "ddim" => Ok(SamplerMethod::Ddim),
            other => Err(Error::Argument(format!(
                "unknown sampler `{other}` (expected ddpm or ddim)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerMethod::Ddpm => "ddpm",
            SamplerMethod::Ddim => "ddim",
        }
    }

    pub fn default_steps(self) -> usize {
        match self {
            SamplerMethod::Ddpm => 1000,
            SamplerMethod::Ddim => 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    /// DDPM runs a schedule of this length; DDIM takes this many evenly
    /// spaced steps out of [`DDIM_HORIZON`].
    pub steps: usize,
    pub image_w: usize,
    pub image_h: usize,
    pub seed: u64,
    pub enc: FixedEncoding,
    pub model: ModelOptions,
    pub timeout: Duration,
}

impl SamplerConfig {
    pub fn new(method: SamplerMethod, steps: usize, seed: u64) -> Self {
        SamplerConfig {
            method,
            steps,
            image_w: 28,
            image_h: 28,
            seed,
            enc: FixedEncoding::default(),
            model: ModelOptions {
                activation: Activation::from_kind(ActivationKind::Silu),
                softmax: SoftmaxConfig::mpc(),
            },
            timeout: Duration::from_secs(30),
        }
    }

    pub fn pixels(&self) -> usize {
        self.image_w * self.image_h
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        match self.method {
            SamplerMethod::Ddpm => make_linear_schedule(self.steps),
            SamplerMethod::Ddim => make_linear_schedule(DDIM_HORIZON),
        }
    }

    /// `(t, t_prev)` pairs in execution order.
    pub fn plan(&self) -> Result<Vec<(usize, usize)>> {
        match self.method {
            SamplerMethod::Ddpm => {
                if self.steps == 0 {
                    return Err(Error::Argument("steps must be at least 1".into()));
                }
                Ok((1..=self.steps).rev().map(|t| (t, t - 1)).collect())
            }
            SamplerMethod::Ddim => {
                let ts = ddim_timesteps(DDIM_HORIZON, self.steps)?;
                Ok((0..ts.len())
                    .rev()
                    .map(|i| (ts[i], if i == 0 { 0 } else { ts[i - 1] }))
                    .collect())
            }
        }
    }

    fn check(&self, params: &DenoiserParams) -> Result<()> {
        if params.shape().pixels != self.pixels() {
            return Err(Error::Shape(format!(
                "parameters are for {} pixels, image is {}x{}",
                params.shape().pixels,
                self.image_w,
                self.image_h
            )));
        }
        Ok(())
    }
}

/// Public Gaussian noise, drawn in a fixed order from the master seed.
struct PublicNoise {
    rng: ChaCha20Rng,
    n: usize,
}

impl PublicNoise {
    fn new(seed: u64, n: usize) -> Self {
        PublicNoise {
            rng: seeded_stream(seed, stream::PUBLIC_NOISE),
            n,
        }
    }

    fn draw(&mut self) -> Vec<f64> {
        (0..self.n)
            .map(|_| self.rng.sample(StandardNormal))
            .collect()
    }
}

/// Plaintext sampling; returns `x_0` before clamping.
pub fn sample_plain(
    params: &DenoiserParams,
    cfg: &SamplerConfig,
    flavor: Flavor,
) -> Result<Vec<f64>> {
    cfg.check(params)?;
    let sched = cfg.schedule()?;
    let mut noise = PublicNoise::new(cfg.seed, cfg.pixels());
    let mut x = noise.draw();
    for (t, t_prev) in cfg.plan()? {
        let eps = denoise_plain(params, &cfg.model, flavor, &x, t)?;
        x = match cfg.method {
            SamplerMethod::Ddpm => {
                let z = if t > 1 {
                    noise.draw()
                } else {
                    vec![0.0; x.len()]
                };
                sched.ddpm_step_plain(&x, &eps, t, &z)?
            }
            SamplerMethod::Ddim => sched.ddim_step_plain(&x, &eps, t, t_prev)?,
        };
    }
    Ok(x)
}

impl Party<'_> {
    /// `x_{t-1} = a x_t - b eps + sigma z` with public `z`.
    pub fn ddpm_step(
        &mut self,
        sched: &NoiseSchedule,
        x: &ShareTensor,
        eps: &ShareTensor,
        t: usize,
        noise: &[f64],
    ) -> Result<ShareTensor> {
        let (a, b, sigma) = sched.ddpm_coefficients(t)?;
        let offset: Vec<f64> = if sigma == 0.0 {
            Vec::new()
        } else {
            if noise.len() != x.len() {
                return Err(Error::Shape(format!(
                    "noise has {} values for {} pixels",
                    noise.len(),
                    x.len()
                )));
            }
            noise.iter().map(|z| sigma * z).collect()
        };
        self.scoped("step", |p| {
            p.scaled_sum(&[(x, a), (eps, -b)], &offset, STEP_HEADROOM)
        })
    }

    /// Deterministic update `x_{t_prev} = a x_t + b eps`.
    pub fn ddim_step(
        &mut self,
        sched: &NoiseSchedule,
        x: &ShareTensor,
        eps: &ShareTensor,
        t: usize,
        t_prev: usize,
    ) -> Result<ShareTensor> {
        let (a, b) = sched.ddim_coefficients(t, t_prev)?;
        self.scoped("step", |p| {
            p.scaled_sum(&[(x, a), (eps, b)], &[], STEP_HEADROOM)
        })
    }

    /// The full reverse process on shared weights; returns shares of `x_0`.
    pub fn sample(&mut self, params: &SharedParams, cfg: &SamplerConfig) -> Result<ShareTensor> {
        if params.shape().pixels != cfg.pixels() {
            return Err(Error::Shape(format!(
                "shared parameters are for {} pixels, image has {}",
                params.shape().pixels,
                cfg.pixels()
            )));
        }
        let sched = cfg.schedule()?;
        let mut noise = PublicNoise::new(cfg.seed, cfg.pixels());
        let mut x = self.public(vec![cfg.pixels()], &noise.draw())?;
        for (t, t_prev) in cfg.plan()? {
            let z = match cfg.method {
                SamplerMethod::Ddpm if t > 1 => noise.draw(),
                _ => Vec::new(),
            };
            let step = |p: &mut Self| -> Result<ShareTensor> {
                let eps = p.denoise(params, &cfg.model, &x, t)?;
                match cfg.method {
                    SamplerMethod::Ddpm => p.ddpm_step(&sched, &x, &eps, t, &z),
                    SamplerMethod::Ddim => p.ddim_step(&sched, &x, &eps, t, t_prev),
                }
            };
            x = step(self).map_err(|e| Error::Step {
                step: t,
                source: Box::new(e),
            })?;
        }
        Ok(x)
    }
}

/// Deals the weights from the master seed, runs the three parties in
/// process, and reconstructs `x_0` before clamping.
pub fn sample_mpc_local(
    params: &DenoiserParams,
    cfg: &SamplerConfig,
) -> Result<(Vec<f64>, CostReport)> {
    cfg.check(params)?;
    let shared = deal_params(
        params,
        cfg.enc,
        &mut seeded_stream(cfg.seed, stream::DEALER),
    )?;
    let (outs, cost) = run_local(cfg.enc, cfg.seed, cfg.timeout, |p| {
        p.sample(&shared[p.id().index()], cfg)
    })?;
    let ring = reconstruct_tensor(&outs)?;
    Ok((cfg.enc.decode_slice(ring.data()), cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DenoiserShape;

    fn tiny(method: SamplerMethod, steps: usize) -> SamplerConfig {
        SamplerConfig {
            image_w: 4,
            image_h: 4,
            ..SamplerConfig::new(method, steps, 7)
        }
    }

    #[test]
    fn plans() {
        let p = tiny(SamplerMethod::Ddpm, 3).plan().unwrap();
        assert_eq!(p, vec![(3, 2), (2, 1), (1, 0)]);
        let d = tiny(SamplerMethod::Ddim, 50).plan().unwrap();
        assert_eq!(d.first(), Some(&(981, 961)));
        assert_eq!(d.last(), Some(&(1, 0)));
        assert!(tiny(SamplerMethod::Ddpm, 0).plan().is_err());
    }

    #[test]
    fn single_step_zero_params_depends_only_on_start() {
        let params = DenoiserParams::zeros(DenoiserShape::for_image(4, 4)).unwrap();
        let cfg = tiny(SamplerMethod::Ddpm, 1);
        let out = sample_plain(&params, &cfg, Flavor::Exact).unwrap();
        let start = PublicNoise::new(7, 16).draw();
        let a = 1.0 / (1.0f64 - 1e-4).sqrt();
        for (o, s) in out.iter().zip(start) {
            assert!((o - a * s).abs() < 1e-12);
        }
    }

    #[test]
    fn plain_sampling_is_deterministic() {
        let params = DenoiserParams::random(DenoiserShape::for_image(4, 4), 1).unwrap();
        let cfg = tiny(SamplerMethod::Ddim, 5);
        let a = sample_plain(&params, &cfg, Flavor::Approximated).unwrap();
        assert_eq!(
            a,
            sample_plain(&params, &cfg, Flavor::Approximated).unwrap()
        );
    }

    #[test]
    fn mpc_steps_match_plaintext_formulas() {
        let sched = make_linear_schedule(1000).unwrap();
        let enc = FixedEncoding::default();
        let mut rng = seeded_stream(4, 77);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let e: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();
        let (outs, _) = run_local(enc, 2, Duration::from_secs(10), |p| {
            let xs = p.public(vec![64], &x)?;
            let es = p.public(vec![64], &e)?;
            let a = p.ddpm_step(&sched, &xs, &es, 500, &z)?;
            let b = p.ddpm_step(&sched, &xs, &es, 1, &[])?;
            let c = p.ddim_step(&sched, &xs, &es, 981, 961)?;
            let d = p.ddim_step(&sched, &xs, &es, 1, 0)?;
            Ok(ShareTensor::concat(&[&a, &b, &c, &d]))
        })
        .unwrap();
        let got = enc.decode_slice(reconstruct_tensor(&outs).unwrap().data());
        let want: Vec<f64> = [
            sched.ddpm_step_plain(&x, &e, 500, &z).unwrap(),
            sched.ddpm_step_plain(&x, &e, 1, &z).unwrap(),
            sched.ddim_step_plain(&x, &e, 981, 961).unwrap(),
            sched.ddim_step_plain(&x, &e, 1, 0).unwrap(),
        ]
        .concat();
        let tol = (-(enc.frac_bits() as f64) + 3.0).exp2();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= tol, "got {g} want {w}");
        }
    }

    #[test]
    fn mpc_sampling_tracks_plaintext_and_reruns_identically() {
        let params = DenoiserParams::random(DenoiserShape::for_image(4, 4), 3).unwrap();
        let cfg = tiny(SamplerMethod::Ddim, 3);
        let (a, cost) = sample_mpc_local(&params, &cfg).unwrap();
        let (b, _) = sample_mpc_local(&params, &cfg).unwrap();
        assert_eq!(a, b);
        let plain = sample_plain(&params, &cfg, Flavor::Approximated).unwrap();
        for (m, p) in a.iter().zip(&plain) {
            assert!((m - p).abs() <= 1e-2, "mpc {m} plain {p}");
        }
        assert!(cost.under("denoiser").total_bytes() > 0);
        assert!(cost.under("step").total_bytes() > 0);
    }
}
