//! Communication benchmarks of the secure protocols against iterative
//! baselines that use a limit-form exponential and generic division.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::fixed::FixedEncoding;
use crate::nonlinear::SoftmaxConfig;
use crate::rss::{run_local, seeded_stream, Party, ShareTensor};
use crate::transport::CostReport;

/// Squarings in the limit-form exponential `(1 + x/2^k)^(2^k)`.
const EXP_SQUARINGS: u32 = 8;
const HEADROOM: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchProtocol {
    Mul,
    Relu,
    Silu,
    Mish,
    Softmax,
    BaselineSoftmax,
    BaselineSilu,
    BaselineMish,
}

impl BenchProtocol {
    pub const ALL: [BenchProtocol; 8] = [
        BenchProtocol::Mul,
        BenchProtocol::Relu,
        BenchProtocol::Silu,
        BenchProtocol::Mish,
        BenchProtocol::Softmax,
        BenchProtocol::BaselineSoftmax,
        BenchProtocol::BaselineSilu,
        BenchProtocol::BaselineMish,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|p| p.label()).collect();
                Error::Argument(format!(
                    "unknown protocol `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }

    pub fn label(self) -> &'static str {
        match self {
            BenchProtocol::Mul => "mul",
            BenchProtocol::Relu => "relu",
            BenchProtocol::Silu => "silu",
            BenchProtocol::Mish => "mish",
            BenchProtocol::Softmax => "softmax",
            BenchProtocol::BaselineSoftmax => "baseline-softmax",
            BenchProtocol::BaselineSilu => "baseline-silu",
            BenchProtocol::BaselineMish => "baseline-mish",
        }
    }

    /// Input range the inputs are drawn from.
    fn range(self) -> (f64, f64) {
        match self {
            BenchProtocol::Softmax | BenchProtocol::BaselineSoftmax => (-5.0, 5.0),
            BenchProtocol::Mish | BenchProtocol::BaselineMish => (-4.0, 4.0),
            _ => (-8.0, 8.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub protocol: BenchProtocol,
    pub size: usize,
    pub trials: usize,
    /// Means per trial, all three parties together.
    pub bytes: f64,
    pub payload_bytes: f64,
    pub messages: f64,
    pub rounds: f64,
    pub wall: Duration,
    pub cost: CostReport,
}

impl Party<'_> {
    /// `(1 + x/256)^256` by repeated squaring.
    pub fn baseline_exp(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("baseline_exp", |p| {
            let k = (EXP_SQUARINGS as f64).exp2();
            let mut y = p.scaled_sum(&[(x, 1.0 / k)], &[1.0], HEADROOM)?;
            for _ in 0..EXP_SQUARINGS {
                y = p.square(&y)?;
            }
            Ok(y)
        })
    }

    /// `num / den` elementwise, one reciprocal per element.
    fn baseline_div(
        &mut self,
        num: &ShareTensor,
        den: &ShareTensor,
        lo: f64,
        hi: f64,
    ) -> Result<ShareTensor> {
        let r = self.recip(den, lo, hi)?;
        self.fixed_mul(num, &r)
    }

    /// Softmax with the limit-form exponential and elementwise division by
    /// the broadcast row sum.
    pub fn baseline_softmax(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        let n = x.last_dim();
        self.scoped("baseline_softmax", |p| {
            let m = p.max_last(x)?;
            let shifted = x.sub(&m.broadcast_last(n).reshape(x.shape().to_vec())?)?;
            let e = p.baseline_exp(&shifted)?;
            let s = e.sum_last().broadcast_last(n).reshape(x.shape().to_vec())?;
            p.baseline_div(&e, &s, 0.9, n as f64)
        })
    }

    /// `x / (1 + exp(-x))` for `x` in `[-8, 8]`.
    pub fn baseline_silu(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("baseline_silu", |p| {
            let e = p.baseline_exp(&x.neg())?;
            let one = p.enc().encode(1.0)?.0;
            let den = e.add_const(p.id(), one);
            p.baseline_div(x, &den, 1.0, 1.0 + 8f64.exp() * 1.1)
        })
    }

    /// `x (e^2x + 2e^x) / (e^2x + 2e^x + 2)` for `x` in `[-4, 4]`.
    pub fn baseline_mish(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("baseline_mish", |p| {
            let e = p.baseline_exp(x)?;
            let e2 = p.square(&e)?;
            let num = e2.add(&e.scale(2))?;
            let two = p.enc().encode(2.0)?.0;
            let den = num.add_const(p.id(), two);
            let ratio = p.baseline_div(
                &num,
                &den,
                2.0,
                8f64.exp() * 1.1 + 2.0 * 4f64.exp() * 1.1 + 2.0,
            )?;
            p.fixed_mul(x, &ratio)
        })
    }
}

fn run_protocol(
    p: &mut Party<'_>,
    proto: BenchProtocol,
    x: &ShareTensor,
    y: &ShareTensor,
) -> Result<ShareTensor> {
    match proto {
        BenchProtocol::Mul => p.mul(x, y),
        BenchProtocol::Relu => p.relu(x),
        BenchProtocol::Silu => p.silu(x),
        BenchProtocol::Mish => p.mish(x),
        BenchProtocol::Softmax => p.softmax(&SoftmaxConfig::mpc(), x),
        BenchProtocol::BaselineSoftmax => p.baseline_softmax(x),
        BenchProtocol::BaselineSilu => p.baseline_silu(x),
        BenchProtocol::BaselineMish => p.baseline_mish(x),
    }
}

/// Runs `trials` in-process executions on a vector of `size` inputs and
/// averages the protocol traffic. Input sharing is local and costs nothing.
pub fn bench(
    proto: BenchProtocol,
    size: usize,
    trials: usize,
    enc: FixedEncoding,
    seed: u64,
) -> Result<BenchResult> {
    if trials == 0 {
        return Err(Error::Argument("trials must be at least 1".into()));
    }
    if size == 0 {
        return Err(Error::Argument("size must be at least 1".into()));
    }
    let (lo, hi) = proto.range();
    let mut rng = seeded_stream(seed, 100);
    let mut total = CostReport::default();
    let mut wall = Duration::ZERO;
    for _ in 0..trials {
        let x: Vec<f64> = (0..size).map(|_| rng.random_range(lo..hi)).collect();
        let y: Vec<f64> = (0..size).map(|_| rng.random_range(lo..hi)).collect();
        let start = Instant::now();
        let (_, cost) = run_local(enc, seed, Duration::from_secs(60), |p| {
            let xs = p.public(vec![1, size], &x)?;
            let ys = p.public(vec![1, size], &y)?;
            run_protocol(p, proto, &xs, &ys)
        })?;
        wall += start.elapsed();
        total.accumulate(&cost);
    }
    let t = trials as f64;
    Ok(BenchResult {
        protocol: proto,
        size,
        trials,
        bytes: total.total_bytes() as f64 / t,
        payload_bytes: total.total_payload_bytes() as f64 / t,
        messages: total.total_messages() as f64 / t,
        rounds: total.rounds as f64 / t,
        wall: wall / trials as u32,
        cost: total,
    })
}
