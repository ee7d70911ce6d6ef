use crate::error::{Error, Result};

/// Variance schedule, indexed by timestep `t = 1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

/// `beta` linearly spaced from `1e-4` to `0.02` inclusive.
pub fn make_linear_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::Argument("schedule needs at least one step".into()));
    }
    let (lo, hi) = (1e-4, 0.02);
    let beta: Vec<f64> = if steps == 1 {
        vec![lo]
    } else {
        (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Argument("every beta must lie in (0, 1)".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let beta_tilde = (0..beta.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]
            })
            .collect();
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::Argument(format!(
                "timestep {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.beta[self.check(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alpha[self.check(t)?])
    }

    /// `alpha_bar(0) = 1` by convention.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        Ok(self.alpha_bar[self.check(t)?])
    }

    pub fn beta_tilde(&self, t: usize) -> Result<f64> {
        Ok(self.beta_tilde[self.check(t)?])
    }

    /// `(a, b, sigma)` with `x_{t-1} = a x_t - b eps + sigma z`; `sigma = 0` at `t = 1`.
    pub fn ddpm_coefficients(&self, t: usize) -> Result<(f64, f64, f64)> {
        let alpha = self.alpha(t)?;
        let a = 1.0 / alpha.sqrt();
        let b = self.beta(t)? / (alpha.sqrt() * (1.0 - self.alpha_bar(t)?).sqrt());
        let sigma = if t == 1 {
            0.0
        } else {
            self.beta_tilde(t)?.sqrt()
        };
        Ok((a, b, sigma))
    }

    /// `(a, b)` with `x_{t_prev} = a x_t + b eps` (deterministic update).
    pub fn ddim_coefficients(&self, t: usize, t_prev: usize) -> Result<(f64, f64)> {
        if t_prev >= t {
            return Err(Error::Argument(format!(
                "DDIM step needs t > t_prev, got {t} -> {t_prev}"
            )));
        }
        let ab_t = self.alpha_bar(t)?;
        let ab_p = self.alpha_bar(t_prev)?;
        let a = (ab_p / ab_t).sqrt();
        let b = (1.0 - ab_p).sqrt() - (ab_p * (1.0 - ab_t) / ab_t).sqrt();
        Ok((a, b))
    }

    /// `sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise`.
    pub fn q_sample(&self, x0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != noise.len() {
            return Err(Error::Shape(format!(
                "q_sample: {} values, {} noise",
                x0.len(),
                noise.len()
            )));
        }
        let ab = self.alpha_bar(self.check(t)? + 1)?;
        Ok(x0
            .iter()
            .zip(noise)
            .map(|(x, n)| ab.sqrt() * x + (1.0 - ab).sqrt() * n)
            .collect())
    }

    pub fn ddpm_step_plain(
        &self,
        x: &[f64],
        eps: &[f64],
        t: usize,
        noise: &[f64],
    ) -> Result<Vec<f64>> {
        let (a, b, sigma) = self.ddpm_coefficients(t)?;
        check_lens(x, eps, noise, sigma != 0.0)?;
        Ok((0..x.len())
            .map(|i| {
                let z = if sigma == 0.0 { 0.0 } else { noise[i] };
                a * x[i] - b * eps[i] + sigma * z
            })
            .collect())
    }

    pub fn ddim_step_plain(
        &self,
        x: &[f64],
        eps: &[f64],
        t: usize,
        t_prev: usize,
    ) -> Result<Vec<f64>> {
        let (a, b) = self.ddim_coefficients(t, t_prev)?;
        check_lens(x, eps, &[], false)?;
        Ok(x.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }
}

fn check_lens(x: &[f64], eps: &[f64], noise: &[f64], need_noise: bool) -> Result<()> {
    if x.len() != eps.len() || (need_noise && noise.len() != x.len()) {
        return Err(Error::Shape(format!(
            "step: x {} eps {} noise {}",
            x.len(),
            eps.len(),
            noise.len()
        )));
    }
    Ok(())
}

/// `steps` evenly spaced timesteps `1, 1 + T/steps, ...`, increasing.
pub fn ddim_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(Error::Argument(format!(
            "DDIM needs 1..={total} steps, got {steps}"
        )));
    }
    let stride = total / steps;
    Ok((0..steps).map(|i| 1 + i * stride).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_first_product() {
        let s = make_linear_schedule(1000).unwrap();
        assert_eq!(s.beta(1).unwrap(), 1e-4);
        assert!((s.beta(1000).unwrap() - 0.02).abs() < 1e-15);
        assert!((s.alpha_bar(1).unwrap() - 0.9999).abs() < 1e-15);
        assert!(make_linear_schedule(0).is_err());
        assert!(s.beta(0).is_err() && s.beta(1001).is_err());
    }

    #[test]
    fn final_alpha_bar_regression() {
        // direct product in double precision, computed independently
        let mut p = 1.0f64;
        for i in 0..1000 {
            p *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
        }
        let s = make_linear_schedule(1000).unwrap();
        assert!((s.alpha_bar(1000).unwrap() - p).abs() < 1e-15);
        assert!((p - 4.035829e-5).abs() < 1e-10);
    }

    #[test]
    fn step_collapses() {
        let s = make_linear_schedule(1000).unwrap();
        let x = [0.5, -1.25];
        let out = s
            .ddpm_step_plain(&x, &[0.0, 0.0], 400, &[0.0, 0.0])
            .unwrap();
        for (o, v) in out.iter().zip(x) {
            assert!((o - v / s.alpha(400).unwrap().sqrt()).abs() < 1e-15);
        }
        let with_noise = s.ddpm_step_plain(&x, &[0.0, 0.0], 1, &[9.0, 9.0]).unwrap();
        for (o, v) in with_noise.iter().zip(x) {
            assert!((o - v / s.alpha(1).unwrap().sqrt()).abs() < 1e-15);
        }
        let d = s.ddim_step_plain(&x, &[0.0, 0.0], 500, 480).unwrap();
        let ratio = (s.alpha_bar(480).unwrap() / s.alpha_bar(500).unwrap()).sqrt();
        for (o, v) in d.iter().zip(x) {
            assert!((o - ratio * v).abs() < 1e-15);
        }
    }

    #[test]
    fn ddim_one_step_matches_ddpm_mean_to_first_order() {
        // with t_prev = t - 1 both updates agree up to O(beta^2) terms
        let s = make_linear_schedule(1000).unwrap();
        let x = [0.3, -0.7, 1.1];
        let e = [0.2, 0.5, -0.9];
        for t in [2, 100, 700] {
            let d = s.ddim_step_plain(&x, &e, t, t - 1).unwrap();
            let m = s.ddpm_step_plain(&x, &e, t, &[0.0; 3]).unwrap();
            let beta = s.beta(t).unwrap();
            let sigma = s.beta_tilde(t).unwrap().sqrt();
            for i in 0..3 {
                let gap = (d[i] - m[i]).abs();
                assert!(gap <= sigma * 1.5 + beta, "t={t} gap={gap}");
            }
        }
    }

    #[test]
    fn timesteps_are_evenly_spaced() {
        let ts = ddim_timesteps(1000, 50).unwrap();
        assert_eq!(ts.len(), 50);
        assert_eq!(ts[0], 1);
        assert_eq!(ts[49], 981);
        assert!(ts.windows(2).all(|w| w[1] - w[0] == 20));
        assert!(ddim_timesteps(10, 0).is_err());
    }

    proptest! {
        #[test]
        fn schedule_identities(steps in 1usize..400) {
            let s = make_linear_schedule(steps).unwrap();
            for t in 1..=steps {
                let b = s.beta(t).unwrap();
                prop_assert!(b > 0.0 && b < 1.0);
                prop_assert!((s.alpha(t).unwrap() - (1.0 - b)).abs() <= 1e-12);
                let prev = s.alpha_bar(t - 1).unwrap();
                prop_assert!((s.alpha_bar(t).unwrap() - prev * s.alpha(t).unwrap()).abs() <= 1e-12);
                prop_assert!(s.alpha_bar(t).unwrap() < prev);
            }
        }
    }
}
