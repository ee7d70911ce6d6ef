//! Flat `key=value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::diffusion::{ModelOptions, SamplerConfig, SamplerMethod};
use crate::error::{Error, Result};
use crate::fixed::FixedEncoding;
use crate::nonlinear::{
    format_activation_coefficients, format_exp_coefficients, load_activation_coefficients,
    load_exp_coefficients, Activation, ActivationKind, ChebyshevExpFit, PiecewiseFit,
    SoftmaxConfig,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub ring_bits: u32,
    pub fraction_bits: u32,
    pub t_exp: f64,
    pub activation: ActivationKind,
    pub sampler: SamplerMethod,
    pub steps: usize,
    pub seed: u64,
    pub image_w: usize,
    pub image_h: usize,
    pub parties: [String; 3],
    pub masked_denominator: bool,
    pub params: Option<PathBuf>,
    pub timeout_secs: u64,
    pub exp_coefficients: Option<PathBuf>,
    pub activation_coefficients: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            ring_bits: 64,
            fraction_bits: 18,
            t_exp: -14.0,
            activation: ActivationKind::Silu,
            sampler: SamplerMethod::Ddim,
            steps: SamplerMethod::Ddim.default_steps(),
            seed: 0,
            image_w: 28,
            image_h: 28,
            parties: [
                "127.0.0.1:7100".to_string(),
                "127.0.0.1:7101".to_string(),
                "127.0.0.1:7102".to_string(),
            ],
            masked_denominator: true,
            params: None,
            timeout_secs: 30,
            exp_coefficients: None,
            activation_coefficients: None,
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("`{key}`: cannot read `{value}` as {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, expected))
}

impl Config {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        let mut steps_set = false;
        let mut seen = std::collections::HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key=value",
                    no + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: `{key}` given twice",
                    no + 1
                )));
            }
            let path = || base.join(value);
            match key {
                "ring_bits" => cfg.ring_bits = num(key, value, "an integer")?,
                "fraction_bits" => cfg.fraction_bits = num(key, value, "an integer")?,
                "t_exp" => cfg.t_exp = num(key, value, "a number")?,
                "activation" => {
                    cfg.activation =
                        ActivationKind::parse(value).map_err(|e| Error::Config(e.to_string()))?
                }
                "sampler" => {
                    cfg.sampler =
                        SamplerMethod::parse(value).map_err(|e| Error::Config(e.to_string()))?
                }
                "steps" => {
                    cfg.steps = num(key, value, "an integer")?;
                    steps_set = true;
                }
                "seed" => cfg.seed = num(key, value, "an integer")?,
                "image_w" => cfg.image_w = num(key, value, "an integer")?,
                "image_h" => cfg.image_h = num(key, value, "an integer")?,
                "party0" => cfg.parties[0] = value.to_string(),
                "party1" => cfg.parties[1] = value.to_string(),
                "party2" => cfg.parties[2] = value.to_string(),
                "masked_denominator" => {
                    cfg.masked_denominator = match value {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        _ => return Err(bad(key, value, "a boolean")),
                    }
                }
                "params" => cfg.params = Some(path()),
                "timeout_secs" => cfg.timeout_secs = num(key, value, "an integer")?,
                "exp_coefficients" => cfg.exp_coefficients = Some(path()),
                "activation_coefficients" => cfg.activation_coefficients = Some(path()),
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key `{other}`",
                        no + 1
                    )))
                }
            }
        }
        if !steps_set {
            cfg.steps = cfg.sampler.default_steps();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn validate(&self) -> Result<()> {
        FixedEncoding::new(self.ring_bits, self.fraction_bits)
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.t_exp < 0.0) {
            return Err(Error::Config("`t_exp` must be negative".into()));
        }
        if self.steps == 0 || self.image_w == 0 || self.image_h == 0 || self.timeout_secs == 0 {
            return Err(Error::Config(
                "`steps`, `image_w`, `image_h` and `timeout_secs` must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn encoding(&self) -> FixedEncoding {
        FixedEncoding::new(self.ring_bits, self.fraction_bits).expect("validated")
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn exp_fit(&self) -> Result<ChebyshevExpFit> {
        match &self.exp_coefficients {
            Some(p) => load_exp_coefficients(p, self.t_exp),
            None => Ok(ChebyshevExpFit {
                t_exp: self.t_exp,
                ..ChebyshevExpFit::default()
            }),
        }
    }

    pub fn activation(&self) -> Result<Activation> {
        match (
            &self.activation_coefficients,
            PiecewiseFit::for_kind(self.activation),
        ) {
            (Some(p), Some(_)) => Ok(Activation::Piecewise(load_activation_coefficients(
                p,
                self.activation,
            )?)),
            (Some(_), None) => Err(Error::Config(format!(
                "`activation_coefficients` given for {}",
                self.activation.name()
            ))),
            (None, _) => Ok(Activation::from_kind(self.activation)),
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        Ok(SamplerConfig {
            method: self.sampler,
            steps: self.steps,
            image_w: self.image_w,
            image_h: self.image_h,
            seed: self.seed,
            enc: self.encoding(),
            model: ModelOptions {
                activation: self.activation()?,
                softmax: SoftmaxConfig {
                    masked_denominator: self.masked_denominator,
                    fit: self.exp_fit()?,
                    ..SoftmaxConfig::mpc()
                },
            },
            timeout: self.timeout(),
        })
    }

    /// Every setting that affects the joint computation, one `key=value`
    /// per line in fixed order, with coefficient files inlined.
    pub fn canonical(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "ring_bits={}", self.ring_bits);
        let _ = writeln!(s, "fraction_bits={}", self.fraction_bits);
        let _ = writeln!(s, "t_exp={}", self.t_exp);
        let _ = writeln!(s, "activation={}", self.activation.name());
        let _ = writeln!(s, "sampler={}", self.sampler.name());
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "image_w={}", self.image_w);
        let _ = writeln!(s, "image_h={}", self.image_h);
        for (i, p) in self.parties.iter().enumerate() {
            let _ = writeln!(s, "party{i}={p}");
        }
        let _ = writeln!(s, "masked_denominator={}", self.masked_denominator);
        let _ = writeln!(s, "timeout_secs={}", self.timeout_secs);
        s.push_str(&format_exp_coefficients(&self.exp_fit()?));
        if let Activation::Piecewise(fit) = self.activation()? {
            s.push_str(&format_activation_coefficients(&fit));
        }
        Ok(s)
    }

    /// CRC32 of [`Config::canonical`], exchanged in the handshake.
    pub fn hash(&self) -> Result<u32> {
        Ok(crc32fast::hash(self.canonical()?.as_bytes()))
    }
}
