use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle;

/// Power-basis coefficients of the Chebyshev polynomials `T_0..T_7`;
/// row `i`, column `k` is the coefficient of `t^k` in `T_i`.
pub const CHEBYSHEV_BASIS: [[i64; 8]; 8] = [
    [1, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 0],
    [-1, 0, 2, 0, 0, 0, 0, 0],
    [0, -3, 0, 4, 0, 0, 0, 0],
    [1, 0, -8, 0, 8, 0, 0, 0],
    [0, 5, 0, -20, 0, 16, 0, 0],
    [-1, 0, 18, 0, -48, 0, 32, 0],
    [0, -7, 0, 56, 0, -112, 0, 64],
];

pub fn chebyshev_t(i: usize, t: f64) -> f64 {
    CHEBYSHEV_BASIS[i]
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc * t + c as f64)
}

/// Degree-7 Chebyshev approximation of `exp` on `[t_exp, 0]`, zero below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevExpFit {
    pub t_exp: f64,
    pub coeffs: [f64; 8],
}

impl Default for ChebyshevExpFit {
    fn default() -> Self {
        ChebyshevExpFit {
            t_exp: -14.0,
            coeffs: [
                0.14021878, 0.27541278, 0.22122865, 0.14934221, 0.09077360, 0.04369614, 0.02087868,
                0.00996535,
            ],
        }
    }
}

impl ChebyshevExpFit {
    /// Affine map of `[t_exp, 0]` onto `[-1, 1]`.
    pub fn map(&self, x: f64) -> f64 {
        -2.0 * (x - self.t_exp) / self.t_exp - 1.0
    }

    /// The polynomial alone, with no clamping below `t_exp`.
    pub fn polynomial(&self, x: f64) -> f64 {
        let t = self.map(x);
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * chebyshev_t(i, t))
            .sum()
    }

    pub fn neg_exp(&self, x: f64) -> f64 {
        if x < self.t_exp {
            0.0
        } else {
            self.polynomial(x)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    Relu,
    Silu,
    Mish,
}

impl ActivationKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "silu" => Ok(ActivationKind::Silu),
            "mish" => Ok(ActivationKind::Mish),
            other => Err(Error::Argument(format!(
                "unknown activation `{other}` (expected relu, silu or mish)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Silu => "silu",
            ActivationKind::Mish => "mish",
        }
    }

    pub fn exact(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => oracle::exact_relu(x),
            ActivationKind::Silu => oracle::exact_silu(x),
            ActivationKind::Mish => oracle::exact_mish(x),
        }
    }
}

/// Four-piece approximation: `0` below `-6`, a quadratic `F0` on `[-6, -2)`,
/// an even sextic plus linear term `F1` on `[-2, 6]`, identity above `6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    pub kind: ActivationKind,
    pub breakpoints: [f64; 3],
    /// `c2, c1, c0`.
    pub f0: [f64; 3],
    /// `c6, c4, c2, c1, c0`.
    pub f1: [f64; 5],
}

impl PiecewiseFit {
    pub fn silu() -> Self {
        PiecewiseFit {
            kind: ActivationKind::Silu,
            breakpoints: [-6.0, -2.0, 6.0],
            f0: [-0.01420163, -0.16910363, -0.52212664],
            f1: [0.00008032, -0.00602401, 0.19784596, 0.49379432, 0.03453821],
        }
    }

    pub fn mish() -> Self {
        PiecewiseFit {
            kind: ActivationKind::Mish,
            breakpoints: [-6.0, -2.0, 6.0],
            f0: [-0.01572019, -0.18375535, -0.55684445],
            f1: [0.00010786, -0.00735309, 0.20152583, 0.54902050, 0.07559242],
        }
    }

    pub fn for_kind(kind: ActivationKind) -> Option<Self> {
        match kind {
            ActivationKind::Silu => Some(Self::silu()),
            ActivationKind::Mish => Some(Self::mish()),
            ActivationKind::Relu => None,
        }
    }

    pub fn eval_f0(&self, x: f64) -> f64 {
        let [c2, c1, c0] = self.f0;
        c2 * x * x + c1 * x + c0
    }

    pub fn eval_f1(&self, x: f64) -> f64 {
        let [c6, c4, c2, c1, c0] = self.f1;
        let x2 = x * x;
        c6 * x2 * x2 * x2 + c4 * x2 * x2 + c2 * x2 + c1 * x + c0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [lo, mid, hi] = self.breakpoints;
        if x < lo {
            0.0
        } else if x < mid {
            self.eval_f0(x)
        } else if x <= hi {
            self.eval_f1(x)
        } else {
            x
        }
    }

    /// Jumps at the three breakpoints: `|F0(lo)|`, `|F0(mid) - F1(mid)|`,
    /// `|F1(hi) - hi|`.
    pub fn branch_gaps(&self) -> [f64; 3] {
        let [lo, mid, hi] = self.breakpoints;
        [
            self.eval_f0(lo).abs(),
            (self.eval_f0(mid) - self.eval_f1(mid)).abs(),
            (self.eval_f1(hi) - hi).abs(),
        ]
    }
}

/// A network activation: ReLU or a piecewise-polynomial fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Piecewise(PiecewiseFit),
}

impl Activation {
    pub fn from_kind(kind: ActivationKind) -> Self {
        match PiecewiseFit::for_kind(kind) {
            Some(fit) => Activation::Piecewise(fit),
            None => Activation::Relu,
        }
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Relu => ActivationKind::Relu,
            Activation::Piecewise(f) => f.kind,
        }
    }

    /// Approximated value, as computed on shares.
    pub fn approx(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Piecewise(f) => f.eval(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxConfig {
    pub epsilon: f64,
    pub masked_denominator: bool,
    pub fit: ChebyshevExpFit,
}

impl SoftmaxConfig {
    /// Defaults used on shares: `epsilon = 1e-6`, masked denominator.
    pub fn mpc() -> Self {
        SoftmaxConfig {
            epsilon: 1e-6,
            masked_denominator: true,
            fit: ChebyshevExpFit::default(),
        }
    }

    pub fn plaintext() -> Self {
        SoftmaxConfig {
            epsilon: 0.0,
            ..Self::mpc()
        }
    }
}

pub fn approx_negexp(x: f64) -> f64 {
    ChebyshevExpFit::default().neg_exp(x)
}

pub fn approx_silu(x: f64) -> f64 {
    PiecewiseFit::silu().eval(x)
}

pub fn approx_mish(x: f64) -> f64 {
    PiecewiseFit::mish().eval(x)
}

/// Softmax with the clamped Chebyshev exponential, one row.
pub fn approx_softmax_row(x: &[f64], cfg: &SoftmaxConfig) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = x.iter().map(|v| v - m - cfg.epsilon).collect();
    let keep: Vec<bool> = shifted.iter().map(|&v| v >= cfg.fit.t_exp).collect();
    let z: Vec<f64> = shifted
        .iter()
        .zip(&keep)
        .map(|(&v, &k)| {
            if cfg.masked_denominator && !k {
                0.0
            } else {
                cfg.fit.polynomial(v)
            }
        })
        .collect();
    let s: f64 = z.iter().sum();
    z.iter()
        .zip(&keep)
        .map(|(&v, &k)| if k { v / s } else { 0.0 })
        .collect()
}

/// Row-wise approximated softmax over the last axis of a flat buffer.
pub fn approx_softmax(x: &[f64], width: usize, cfg: &SoftmaxConfig) -> Vec<f64> {
    x.chunks(width)
        .flat_map(|row| approx_softmax_row(row, cfg))
        .collect()
}

fn parse_coefficients(text: &str, what: &'static str, expected: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::format(what, format!("line {}: `{line}` is not a number", no + 1))
        })?;
        out.push(v);
    }
    if out.len() != expected {
        return Err(Error::format(
            what,
            format!("expected {expected} coefficients, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Coefficient file for the exponential: `C0..C7`, one per line.
pub fn parse_exp_coefficients(text: &str, t_exp: f64) -> Result<ChebyshevExpFit> {
    let v = parse_coefficients(text, "exp coefficient file", 8)?;
    let mut coeffs = [0.0; 8];
    coeffs.copy_from_slice(&v);
    Ok(ChebyshevExpFit { t_exp, coeffs })
}

/// Coefficient file for an activation: `F0` as `c2 c1 c0` then `F1` as
/// `c6 c4 c2 c1 c0`, one per line.
pub fn parse_activation_coefficients(text: &str, kind: ActivationKind) -> Result<PiecewiseFit> {
    let v = parse_coefficients(text, "activation coefficient file", 8)?;
    Ok(PiecewiseFit {
        kind,
        breakpoints: [-6.0, -2.0, 6.0],
        f0: [v[0], v[1], v[2]],
        f1: [v[3], v[4], v[5], v[6], v[7]],
    })
}

pub fn format_exp_coefficients(fit: &ChebyshevExpFit) -> String {
    let mut s = format!("# exp on [{}, 0]: C0..C7\n", fit.t_exp);
    for c in fit.coeffs {
        let _ = writeln!(s, "{c:.8}");
    }
    s
}

pub fn format_activation_coefficients(fit: &PiecewiseFit) -> String {
    let mut s = format!(
        "# {}: F0 c2 c1 c0, then F1 c6 c4 c2 c1 c0\n",
        fit.kind.name()
    );
    for c in fit.f0.iter().chain(&fit.f1) {
        let _ = writeln!(s, "{c:.8}");
    }
    s
}

pub fn load_exp_coefficients(path: &Path, t_exp: f64) -> Result<ChebyshevExpFit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_exp_coefficients(&text, t_exp)
}

pub fn load_activation_coefficients(path: &Path, kind: ActivationKind) -> Result<PiecewiseFit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_activation_coefficients(&text, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_matches_cosine_definition() {
        for i in 0..8 {
            for k in 0..=20 {
                let t = -1.0 + k as f64 * 0.1;
                let expected = (i as f64 * t.acos()).cos();
                assert!((chebyshev_t(i, t) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn threshold_below_fixed_point_resolution() {
        assert!((-14f64).exp() < 2f64.powi(-18));
    }

    #[test]
    fn negexp_twin_examples() {
        assert_eq!(approx_negexp(-20.0), 0.0);
        // value at x = 0 is the coefficient sum (every T_i(1) = 1)
        let at_zero: f64 = ChebyshevExpFit::default().coeffs.iter().sum();
        assert!((approx_negexp(0.0) - at_zero).abs() < 1e-15);
        assert!((at_zero - 0.95151619).abs() < 1e-8);
    }

    #[test]
    fn map_sends_interval_to_unit_range() {
        let f = ChebyshevExpFit::default();
        assert!((f.map(-14.0) + 1.0).abs() < 1e-15);
        assert!((f.map(0.0) - 1.0).abs() < 1e-15);
        assert!((f.map(-7.0)).abs() < 1e-15);
    }

    #[test]
    fn activation_twins_at_anchor_points() {
        assert_eq!(approx_silu(0.0), 0.03453821);
        assert_eq!(approx_mish(0.0), 0.07559242);
        assert_eq!(approx_silu(10.0), 10.0);
        assert_eq!(approx_silu(-10.0), 0.0);
        assert_eq!(approx_mish(-10.0), 0.0);
    }

    #[test]
    fn branch_gaps_are_locked() {
        // measured once on the shipped coefficients
        let s = PiecewiseFit::silu().branch_gaps();
        let m = PiecewiseFit::mish().branch_gaps();
        for (got, want) in s.iter().zip([0.01876, 0.01218, 0.06005]) {
            assert!((got - want).abs() < 5e-5, "silu gap {got} vs {want}");
        }
        for (got, want) in m.iter().zip([0.02024, 0.07488, 0.12736]) {
            assert!((got - want).abs() < 5e-5, "mish gap {got} vs {want}");
        }
    }

    #[test]
    fn softmax_twin_uniform_and_far_entry() {
        let cfg = SoftmaxConfig::plaintext();
        for v in approx_softmax_row(&[0.3; 4], &cfg) {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let out = approx_softmax_row(&[0.0, -20.0], &cfg);
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn coefficient_files_roundtrip() {
        let fit = ChebyshevExpFit::default();
        let back = parse_exp_coefficients(&format_exp_coefficients(&fit), -14.0).unwrap();
        assert_eq!(back, fit);
        let act = PiecewiseFit::mish();
        let back = parse_activation_coefficients(
            &format_activation_coefficients(&act),
            ActivationKind::Mish,
        )
        .unwrap();
        assert_eq!(back, act);
        assert!(parse_exp_coefficients("1\n2\n", -14.0).is_err());
        assert!(parse_exp_coefficients("x\n", -14.0).is_err());
    }
}
