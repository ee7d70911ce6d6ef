//! Least-squares refits of the polynomial approximations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nonlinear::{chebyshev_t, ActivationKind, ChebyshevExpFit, PiecewiseFit};
use crate::oracle::{grid_error, GridError};

/// Default number of sample points for a fit.
pub const FIT_POINTS: usize = 20_001;

/// Which monomials a power-basis fit may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerBasis {
    /// `x^0..x^d`.
    Full,
    /// Even powers up to `d` plus the linear term.
    EvenPlusLinear,
}

impl PowerBasis {
    /// Exponents in descending order.
    pub fn exponents(self, degree: usize) -> Vec<usize> {
        let mut e: Vec<usize> = match self {
            PowerBasis::Full => (0..=degree).collect(),
            PowerBasis::EvenPlusLinear => (0..=degree).filter(|k| k % 2 == 0 || *k == 1).collect(),
        };
        e.reverse();
        e
    }
}

/// A fitted polynomial in the power basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerFit {
    pub exponents: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl PowerFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coeffs)
            .map(|(&k, c)| c * x.powi(k as i32))
            .sum()
    }
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn check_interval(lo: f64, hi: f64, points: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Argument(format!("degenerate interval [{lo}, {hi}]")));
    }
    if points < 2 {
        return Err(Error::Argument(
            "a fit needs at least two sample points".into(),
        ));
    }
    Ok(())
}

fn least_squares(design: DMatrix<f64>, target: DVector<f64>) -> Result<Vec<f64>> {
    let svd = design.svd(true, true);
    let sol = svd
        .solve(&target, 1e-12)
        .map_err(|e| Error::Argument(format!("least squares failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

/// Chebyshev coefficients `C_0..C_d` of `exp` on `[t_exp, 0]`, least squares
/// on a uniform grid of the mapped variable.
pub fn fit_exp_chebyshev(t_exp: f64, degree: usize, points: usize) -> Result<Vec<f64>> {
    check_interval(t_exp, 0.0, points)?;
    if degree > 7 {
        return Err(Error::Argument("Chebyshev degree is at most 7".into()));
    }
    let map = ChebyshevExpFit {
        t_exp,
        coeffs: [0.0; 8],
    };
    let xs = grid(t_exp, 0.0, points);
    let design = DMatrix::from_fn(points, degree + 1, |r, c| chebyshev_t(c, map.map(xs[r])));
    let target = DVector::from_iterator(points, xs.iter().map(|x| x.exp()));
    least_squares(design, target)
}

/// Least-squares power-basis fit of `f` on `[lo, hi]`.
pub fn fit_power(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    degree: usize,
    basis: PowerBasis,
    points: usize,
) -> Result<PowerFit> {
    check_interval(lo, hi, points)?;
    let exponents = basis.exponents(degree);
    let xs = grid(lo, hi, points);
    let design = DMatrix::from_fn(points, exponents.len(), |r, c| {
        xs[r].powi(exponents[c] as i32)
    });
    let target = DVector::from_iterator(points, xs.iter().map(|&x| f(x)));
    Ok(PowerFit {
        coeffs: least_squares(design, target)?,
        exponents,
    })
}

/// Refits both pieces of a SiLU/Mish approximation with the shipped
/// breakpoints: quadratic on `[-6, -2]`, even sextic plus linear on `[-2, 6]`.
pub fn fit_activation(kind: ActivationKind, points: usize) -> Result<PiecewiseFit> {
    let Some(base) = PiecewiseFit::for_kind(kind) else {
        return Err(Error::Argument(format!(
            "{} has no polynomial fit",
            kind.name()
        )));
    };
    let [lo, mid, hi] = base.breakpoints;
    let f = |x| kind.exact(x);
    let f0 = fit_power(f, lo, mid, 2, PowerBasis::Full, points)?;
    let f1 = fit_power(f, mid, hi, 6, PowerBasis::EvenPlusLinear, points)?;
    Ok(PiecewiseFit {
        f0: [f0.coeffs[0], f0.coeffs[1], f0.coeffs[2]],
        f1: [
            f1.coeffs[0],
            f1.coeffs[1],
            f1.coeffs[2],
            f1.coeffs[3],
            f1.coeffs[4],
        ],
        ..base
    })
}

/// Error of an activation approximation against the exact function.
pub fn activation_error(fit: &PiecewiseFit, lo: f64, hi: f64, points: usize) -> GridError {
    grid_error(lo, hi, points, |x| fit.eval(x), |x| fit.kind.exact(x))
}

/// Error of the clamped exponential against `exp` on `[t_exp, 0]`.
pub fn exp_error(fit: &ChebyshevExpFit, points: usize) -> GridError {
    grid_error(fit.t_exp, 0.0, points, |x| fit.neg_exp(x), f64::exp)
}
