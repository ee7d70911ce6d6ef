use super::fits::{Activation, ChebyshevExpFit, PiecewiseFit, SoftmaxConfig, CHEBYSHEV_BASIS};
use crate::error::{Error, Result};
use crate::rss::{BitShares, Party, ShareTensor};

/// Headroom for polynomial combinations: accumulated values stay below 2^8.
const POLY_HEADROOM: u32 = 8;

impl Party<'_> {
    /// The Chebyshev polynomial of the exponential, with no clamping. Powers
    /// of the mapped argument are built by repeated multiplication; the basis
    /// polynomials are integer combinations of them and the weighted sum is
    /// truncated once.
    pub fn chebyshev_exp(&mut self, fit: &ChebyshevExpFit, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("chebyshev", |p| {
            let one = p.enc().encode(1.0)?.0;
            let t = p.scaled_sum(&[(x, -2.0 / fit.t_exp)], &[1.0], POLY_HEADROOM)?;
            let mut powers = vec![t.clone()];
            for _ in 1..7 {
                let prev = powers.last().expect("nonempty");
                let next = if powers.len() == 1 {
                    p.square(prev)?
                } else {
                    p.fixed_mul(prev, &t)?
                };
                powers.push(next);
            }
            let mut basis = Vec::with_capacity(7);
            for row in CHEBYSHEV_BASIS.iter().skip(1) {
                let mut acc = ShareTensor::zeros(x.shape().to_vec());
                for (k, &c) in row.iter().enumerate().skip(1) {
                    if c != 0 {
                        acc.add_assign(&powers[k - 1].scale(c as u64))?;
                    }
                }
                if row[0] != 0 {
                    acc = acc.add_const(p.id(), one.wrapping_mul(row[0] as u64));
                }
                basis.push(acc);
            }
            let terms: Vec<(&ShareTensor, f64)> = basis
                .iter()
                .zip(&fit.coeffs[1..])
                .map(|(b, &c)| (b, c))
                .collect();
            p.scaled_sum(&terms, &[fit.coeffs[0]], POLY_HEADROOM)
        })
    }

    /// `1{x >= t_exp}`.
    fn exp_domain_mask(&mut self, fit: &ChebyshevExpFit, x: &ShareTensor) -> Result<BitShares> {
        Ok(self.lt_public(x, fit.t_exp)?.not(self.id()))
    }

    /// Clamped exponential for `x <= 0`: zero below `t_exp`, the Chebyshev
    /// fit above.
    pub fn neg_exp(&mut self, fit: &ChebyshevExpFit, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("neg_exp", |p| {
            let keep = p.exp_domain_mask(fit, x)?;
            let z = p.chebyshev_exp(fit, x)?;
            p.mul_ba(&keep, &z)
        })
    }

    /// Softmax along the last axis: subtract the row maximum and `epsilon`,
    /// clamped Chebyshev exponential, reciprocal of the row sum, final mask.
    pub fn softmax(&mut self, cfg: &SoftmaxConfig, x: &ShareTensor) -> Result<ShareTensor> {
        let n = x.last_dim();
        if x.is_empty() || n == 0 {
            return Err(Error::Argument("softmax of an empty row".into()));
        }
        self.scoped("softmax", |p| {
            let m = p.max_last(x)?;
            let eps = if cfg.epsilon > 0.0 {
                p.enc().encode(cfg.epsilon)?.0.max(1)
            } else {
                0
            };
            let shifted = x
                .sub(&m.broadcast_last(n).reshape(x.shape().to_vec())?)?
                .add_const(p.id(), eps.wrapping_neg());
            let keep = p.exp_domain_mask(&cfg.fit, &shifted)?;
            let mut z = p.chebyshev_exp(&cfg.fit, &shifted)?;
            if cfg.masked_denominator {
                z = p.mul_ba(&keep, &z)?;
            }
            let sum = z.sum_last();
            let r = p.recip(&sum, 0.9, n as f64)?;
            let r = r.broadcast_last(n).reshape(x.shape().to_vec())?;
            let out = p.fixed_mul(&z, &r)?;
            p.mul_ba(&keep, &out)
        })
    }

    /// Four-piece polynomial activation with one batched comparison and one
    /// batched selection.
    pub fn piecewise(&mut self, fit: &PiecewiseFit, x: &ShareTensor) -> Result<ShareTensor> {
        let n = x.len();
        let id = self.id();
        let enc = self.enc();
        let [lo, mid, hi] = fit.breakpoints;
        self.scoped(fit.kind.name(), |p| {
            let below_lo = x.add_const(id, enc.encode(lo)?.0.wrapping_neg());
            let below_mid = x.add_const(id, enc.encode(mid)?.0.wrapping_neg());
            let above_hi = x.neg().add_const(id, enc.encode(hi)?.0);
            let signs = p.msb(&ShareTensor::concat(&[&below_lo, &below_mid, &above_hi]))?;
            let b = signs.split(&[n, n, n]);
            let z0 = b[0].xor(&b[1])?;
            let z1 = b[1].xor(&b[2])?.not(id);
            let z2 = b[2].clone();

            let x2 = p.square(x)?;
            let x4 = p.square(&x2)?;
            let x6 = p.fixed_mul(&x2, &x4)?;
            let [a2, a1, a0] = fit.f0;
            let [c6, c4, c2, c1, c0] = fit.f1;
            let polys = p.scaled_sum_batch(
                &[
                    (&[(&x2, a2), (x, a1)][..], &[a0][..]),
                    (&[(&x6, c6), (&x4, c4), (&x2, c2), (x, c1)][..], &[c0][..]),
                ],
                POLY_HEADROOM,
            )?;
            let flat_x = x.clone().reshape(vec![n])?;
            let sel = p.mul_ba(
                &BitShares::concat(&[&z0, &z1, &z2]),
                &ShareTensor::concat(&[&polys[0], &polys[1], &flat_x]),
            )?;
            let parts = sel.split(&[n, n, n]);
            parts[0]
                .add(&parts[1])?
                .add(&parts[2])?
                .reshape(x.shape().to_vec())
        })
    }

    /// `max(0, x)`, exact.
    pub fn relu(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("relu", |p| {
            let pos = p.msb(x)?.not(p.id());
            p.mul_ba(&pos, x)
        })
    }

    pub fn activation(&mut self, act: &Activation, x: &ShareTensor) -> Result<ShareTensor> {
        match act {
            Activation::Relu => self.relu(x),
            Activation::Piecewise(fit) => self.piecewise(fit, x),
        }
    }

    pub fn silu(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.piecewise(&PiecewiseFit::silu(), x)
    }

    pub fn mish(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.piecewise(&PiecewiseFit::mish(), x)
    }

    /// Time-embedding MLP on a public embedding vector:
    /// `silu(e W1 + b1) W2 + b2`.
    pub fn time_embedding(
        &mut self,
        embedding: &[f64],
        weights: [&ShareTensor; 4],
    ) -> Result<ShareTensor> {
        let [w1, b1, w2, b2] = weights;
        let d = embedding.len();
        let ok = w1.shape().len() == 2
            && w1.shape()[0] == d
            && b1.len() == w1.shape()[1]
            && w2.shape().len() == 2
            && w2.shape()[0] == w1.shape()[1]
            && b2.len() == w2.shape()[1];
        if !ok {
            return Err(Error::Shape(format!(
                "time embedding: embedding {d}, w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                w1.shape(),
                b1.shape(),
                w2.shape(),
                b2.shape()
            )));
        }
        let f = self.enc().frac_bits();
        self.scoped("time_embedding", |p| {
            let e: Vec<u64> = p
                .enc()
                .encode_slice(embedding)?
                .iter()
                .map(|r| r.0)
                .collect();
            let h = p.public_matmul(&e, &[1, d], w1, f)?;
            let h = h.add(&b1.clone().reshape(h.shape().to_vec())?)?;
            let h = p.silu(&h)?;
            let o = p.matmul(&h, w2, f)?;
            o.add(&b2.clone().reshape(o.shape().to_vec())?)
        })
    }

    /// Sinusoid phases `t * exp(-ln(10000) i / half)` for a secret timestep,
    /// with the exponentials evaluated by the Chebyshev fit.
    pub fn secret_time_phases(
        &mut self,
        fit: &ChebyshevExpFit,
        t: &ShareTensor,
        half: usize,
    ) -> Result<ShareTensor> {
        if t.len() != 1 {
            return Err(Error::Shape(format!(
                "timestep share has shape {:?}",
                t.shape()
            )));
        }
        self.scoped("time_phases", |p| {
            let args: Vec<f64> = (0..half)
                .map(|i| super::frequency_exponent(i, half))
                .collect();
            let a = p.public(vec![half], &args)?;
            let freq = p.neg_exp(fit, &a)?;
            let tt = t.broadcast_last(half).reshape(vec![half])?;
            p.fixed_mul(&tt, &freq)
        })
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use rand::Rng;

    use super::super::*;
    use crate::fixed::FixedEncoding;
    use crate::oracle;
    use crate::rss::{reconstruct_tensor, run_local, seeded_stream, Party, ShareTensor};

    // per-op bounds on |secure - twin| in LSBs, from a calibration run over
    // 8000 inputs (observed: softmax 5.5, neg_exp 7.3, silu/mish 1.1, relu 0)
    const K_SOFTMAX: f64 = 16.0;
    const K_NEGEXP: f64 = 16.0;
    const K_PIECEWISE: f64 = 4.0;

    fn enc() -> FixedEncoding {
        FixedEncoding::default()
    }

    fn quantize(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&x| enc().decode(enc().encode(x).unwrap()))
            .collect()
    }

    fn eval<F>(x: &[f64], shape: Vec<usize>, f: F) -> Vec<f64>
    where
        F: Fn(&mut Party<'_>, &ShareTensor) -> crate::Result<ShareTensor> + Sync,
    {
        let (outs, _) = run_local(enc(), 17, Duration::from_secs(60), |p| {
            let xs = p.public(shape.clone(), x)?;
            f(p, &xs)
        })
        .unwrap();
        enc().decode_slice(reconstruct_tensor(&outs).unwrap().data())
    }

    fn worst_lsb(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / enc().lsb())
            .fold(0.0, f64::max)
    }

    fn random(n: usize, lo: f64, hi: f64, stream: u64) -> Vec<f64> {
        let mut rng = seeded_stream(8, stream);
        quantize(&(0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>())
    }

    #[test]
    fn neg_exp_anchors_and_grid() {
        let fit = ChebyshevExpFit::default();
        let mut x: Vec<f64> = (0..512).map(|i| -14.0 * i as f64 / 511.0).collect();
        x.extend([-20.0, -14.5, 0.0]);
        let x = quantize(&x);
        let got = eval(&x, vec![x.len()], |p, v| p.neg_exp(&fit, v));
        let twin: Vec<f64> = x.iter().map(|&v| fit.neg_exp(v)).collect();
        assert!(worst_lsb(&got, &twin) <= K_NEGEXP);
        let n = got.len();
        assert_eq!(got[n - 3], 0.0);
        assert_eq!(got[n - 2], 0.0);
        assert!((got[n - 1] - 0.95151619).abs() < 1e-4);
    }

    #[test]
    fn softmax_uniform_and_far_entry() {
        let cfg = SoftmaxConfig::mpc();
        let u = eval(&[1.5; 4], vec![1, 4], |p, v| p.softmax(&cfg, v));
        for v in u {
            assert!((v - 0.25).abs() <= 4.0 * enc().lsb());
        }
        let far = eval(&[0.0, -20.0], vec![1, 2], |p, v| p.softmax(&cfg, v));
        assert!((far[0] - 1.0).abs() <= 4.0 * enc().lsb());
        assert_eq!(far[1], 0.0);
    }

    #[test]
    fn softmax_matches_twin_in_both_modes() {
        let x = random(8 * 125, -5.0, 5.0, 1);
        for masked in [true, false] {
            let cfg = SoftmaxConfig {
                masked_denominator: masked,
                ..SoftmaxConfig::mpc()
            };
            let got = eval(&x, vec![125, 8], |p, v| p.softmax(&cfg, v));
            let twin_cfg = SoftmaxConfig {
                epsilon: enc().lsb(),
                ..cfg.clone()
            };
            let twin = approx_softmax(&x, 8, &twin_cfg);
            assert!(worst_lsb(&got, &twin) <= K_SOFTMAX, "masked={masked}");
            for (row, trow) in got.chunks(8).zip(twin.chunks(8)) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() <= 2.0 * 8.0 * enc().lsb());
                for (v, t) in row.iter().zip(trow) {
                    // the fit itself dips below zero; the secure value follows it
                    assert!(*v >= t.min(0.0) - 4.0 * enc().lsb());
                }
            }
            // fit error of the exponential dominates the gap to exact softmax
            let exact = oracle::exact_softmax_rows(&x, 8);
            let gap = got
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap < 0.105, "gap={gap}");
        }
    }

    #[test]
    fn faithful_denominator_is_polluted_by_far_entries() {
        let masked = approx_softmax_row(&[0.0, -20.0], &SoftmaxConfig::plaintext());
        let faithful = approx_softmax_row(
            &[0.0, -20.0],
            &SoftmaxConfig {
                masked_denominator: false,
                ..SoftmaxConfig::plaintext()
            },
        );
        assert!((masked[0] - 1.0).abs() < 1e-12);
        assert!((faithful[0] - 1.0).abs() > 0.05);
    }

    #[test]
    fn piecewise_anchors() {
        let x = [10.0, -10.0, 0.0];
        for (fit, c0) in [
            (PiecewiseFit::silu(), 0.03453821),
            (PiecewiseFit::mish(), 0.07559242),
        ] {
            let got = eval(&x, vec![3], |p, v| p.piecewise(&fit, v));
            assert_eq!(got[0], 10.0);
            assert_eq!(got[1], 0.0);
            assert!((got[2] - c0).abs() <= K_PIECEWISE * enc().lsb());
        }
    }

    #[test]
    fn piecewise_matches_twin() {
        let x = random(4000, -10.0, 10.0, 2);
        let got = eval(&x, vec![4000], |p, v| p.silu(v));
        let twin: Vec<f64> = x.iter().map(|&v| approx_silu(v)).collect();
        assert!(worst_lsb(&got, &twin) <= K_PIECEWISE);
        let got = eval(&x, vec![4000], |p, v| p.mish(v));
        let twin: Vec<f64> = x.iter().map(|&v| approx_mish(v)).collect();
        assert!(worst_lsb(&got, &twin) <= K_PIECEWISE);
    }

    #[test]
    fn relu_is_exact() {
        let mut x = random(10_000, -50.0, 50.0, 3);
        x.extend([-3.0, 5.0, 0.0, enc().lsb(), -enc().lsb()]);
        let got = eval(&x, vec![x.len()], |p, v| p.relu(v));
        for (g, v) in got.iter().zip(&x) {
            assert_eq!(*g, v.max(0.0));
        }
    }

    fn weights(p: &Party<'_>, dims: &[(Vec<usize>, Vec<f64>)]) -> crate::Result<Vec<ShareTensor>> {
        dims.iter().map(|(s, v)| p.public(s.clone(), v)).collect()
    }

    fn identity(d: usize) -> Vec<f64> {
        (0..d * d)
            .map(|k| if k / d == k % d { 1.0 } else { 0.0 })
            .collect()
    }

    #[test]
    fn time_embedding_cases() {
        let d = 8;
        let e = sinusoidal_embedding(37.0, d);
        let run = |w: Vec<(Vec<usize>, Vec<f64>)>| {
            let e = e.clone();
            eval(&[0.0], vec![1], move |p, _| {
                let ws = weights(p, &w)?;
                p.time_embedding(&e, [&ws[0], &ws[1], &ws[2], &ws[3]])
            })
        };
        let zeros = run(vec![
            (vec![d, 5], vec![0.0; d * 5]),
            (vec![5], vec![0.0; 5]),
            (vec![5, 3], vec![0.0; 15]),
            (vec![3], vec![0.0; 3]),
        ]);
        assert!(zeros.iter().all(|&v| v == 0.0));

        let ident = run(vec![
            (vec![d, d], identity(d)),
            (vec![d], vec![0.0; d]),
            (vec![d, d], identity(d)),
            (vec![d], vec![0.0; d]),
        ]);
        let twin: Vec<f64> = quantize(&e).iter().map(|&v| approx_silu(v)).collect();
        assert!(worst_lsb(&ident, &twin) <= 2.0 * K_PIECEWISE);

        let mut rng = seeded_stream(8, 4);
        let mut draw = |n: usize| {
            (0..n)
                .map(|_| rng.random_range(-0.5..0.5))
                .collect::<Vec<f64>>()
        };
        let (w1, b1, w2, b2) = (draw(d * 16), draw(16), draw(16 * 6), draw(6));
        let got = run(vec![
            (vec![d, 16], w1.clone()),
            (vec![16], b1.clone()),
            (vec![16, 6], w2.clone()),
            (vec![6], b2.clone()),
        ]);
        let (w1, b1, w2, b2) = (quantize(&w1), quantize(&b1), quantize(&w2), quantize(&b2));
        let eq = quantize(&e);
        let h: Vec<f64> = (0..16)
            .map(|j| approx_silu((0..d).map(|i| eq[i] * w1[i * 16 + j]).sum::<f64>() + b1[j]))
            .collect();
        let twin: Vec<f64> = (0..6)
            .map(|j| (0..16).map(|i| h[i] * w2[i * 6 + j]).sum::<f64>() + b2[j])
            .collect();
        let worst = got
            .iter()
            .zip(&twin)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-3, "worst={worst}");
    }

    #[test]
    fn time_embedding_rejects_bad_shapes() {
        let (outs, _) = run_local(enc(), 1, Duration::from_secs(5), |p| {
            let w = p.public(vec![3, 2], &[0.0; 6])?;
            let b = p.public(vec![2], &[0.0; 2])?;
            Ok(p.time_embedding(&[0.0; 4], [&w, &b, &w, &b]).is_err())
        })
        .unwrap();
        assert!(outs.iter().all(|&e| e));
    }

    #[test]
    fn secret_phases_follow_fit() {
        let fit = ChebyshevExpFit::default();
        let half = 16;
        let got = eval(&[250.0], vec![1], |p, t| {
            p.secret_time_phases(&fit, t, half)
        });
        for (i, g) in got.iter().enumerate() {
            let twin = 250.0 * fit.neg_exp(frequency_exponent(i, half));
            assert!(
                (g - twin).abs() <= 250.0 * K_NEGEXP * enc().lsb() + 1e-3,
                "i={i}"
            );
        }
    }
}
