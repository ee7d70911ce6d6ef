//! Comparison, bit-times-value selection, maximum and reciprocal on shares.
//!
//! Sign extraction converts the three arithmetic components into boolean
//! sharings, folds them with one carry-save layer and finishes with a
//! ripple-carry adder that is bit-sliced across all elements.

use crate::error::{Error, Result};
use crate::rss::{BitShares, Party, ShareTensor};

/// Bit plane `k` of a vector of words: bit `e` of the result is bit `k` of
/// `words[e]`.
fn plane(words: &[u64], k: u32) -> Vec<u64> {
    let mut out = vec![0u64; words.len().div_ceil(64)];
    for (e, w) in words.iter().enumerate() {
        out[e / 64] |= ((w >> k) & 1) << (e % 64);
    }
    out
}

fn plane_shares(lo: &[u64], hi: &[u64], k: u32) -> BitShares {
    BitShares::from_words(lo.len(), plane(lo, k), plane(hi, k))
}

impl Party<'_> {
    /// Boolean sharing of the most significant bit (the sign) of each element.
    pub fn msb(&mut self, x: &ShareTensor) -> Result<BitShares> {
        self.scoped("msb", |p| p.msb_inner(x))
    }

    fn msb_inner(&mut self, x: &ShareTensor) -> Result<BitShares> {
        let n = x.len();
        let l = self.enc().ring_bits();
        let mask = self.enc().mask();
        let me = self.id().index();
        let own_lo: Vec<u64> = x.lo.iter().map(|v| v & mask).collect();
        let own_hi: Vec<u64> = x.hi.iter().map(|v| v & mask).collect();
        let zero = vec![0u64; n];

        // This party's view of the trivial boolean sharing of component j.
        let component = |j: usize| -> (&[u64], &[u64]) {
            let lo = if j == me { &own_lo[..] } else { &zero[..] };
            let hi = if j == (me + 1) % 3 {
                &own_hi[..]
            } else {
                &zero[..]
            };
            (lo, hi)
        };
        let xor3 = |a: &[u64], b: &[u64], c: &[u64]| -> Vec<u64> {
            (0..n).map(|e| a[e] ^ b[e] ^ c[e]).collect()
        };
        let xor2 = |a: &[u64], b: &[u64]| -> Vec<u64> { (0..n).map(|e| a[e] ^ b[e]).collect() };

        let (c0, c1, c2) = (component(0), component(1), component(2));
        let sum_lo = xor3(c0.0, c1.0, c2.0);
        let sum_hi = xor3(c0.1, c1.1, c2.1);
        let u_lo = xor2(c0.0, c2.0);
        let u_hi = xor2(c0.1, c2.1);
        let v_lo = xor2(c1.0, c2.0);
        let v_hi = xor2(c1.1, c2.1);

        // Carry-save layer: majority of the three components, bits 0..l-2.
        let top = l - 1;
        let u: Vec<BitShares> = (0..top).map(|k| plane_shares(&u_lo, &u_hi, k)).collect();
        let v: Vec<BitShares> = (0..top).map(|k| plane_shares(&v_lo, &v_hi, k)).collect();
        let lens = vec![n; top as usize];
        let uv = BitShares::concat(&u.iter().collect::<Vec<_>>());
        let vv = BitShares::concat(&v.iter().collect::<Vec<_>>());
        let prod = self.and(&uv, &vv)?.split(&lens);
        let carry: Vec<BitShares> = prod
            .iter()
            .enumerate()
            .map(|(k, pk)| pk.xor(&plane_shares(c2.0, c2.1, k as u32)))
            .collect::<Result<_>>()?;

        // Ripple: a = sum, b = carry << 1, carry into bit i+1.
        let a = |k: u32| plane_shares(&sum_lo, &sum_hi, k);
        let mut c = BitShares::zeros(n);
        for i in 1..top {
            let b_i = &carry[(i - 1) as usize];
            let ac = a(i).xor(&c)?;
            let bc = b_i.xor(&c)?;
            c = self.and(&ac, &bc)?.xor(&c)?;
        }
        a(top).xor(&carry[(top - 1) as usize])?.xor(&c)
    }

    /// `1{x < y}` elementwise, via the sign of `x - y`.
    pub fn lt(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<BitShares> {
        let d = x.sub(y)?;
        self.scoped("lt", |p| p.msb(&d))
    }

    /// `1{x < c}` for a public real `c`.
    pub fn lt_public(&mut self, x: &ShareTensor, c: f64) -> Result<BitShares> {
        let k = self.enc().encode(c)?.0;
        let d = x.add_const(self.id(), k.wrapping_neg());
        self.scoped("lt", |p| p.msb(&d))
    }

    /// `1{c < x}` for a public real `c`.
    pub fn public_lt(&mut self, c: f64, x: &ShareTensor) -> Result<BitShares> {
        let k = self.enc().encode(c)?.0;
        let d = x.neg().add_const(self.id(), k);
        self.scoped("lt", |p| p.msb(&d))
    }

    /// `b * x` for a shared bit `b`, exact (no truncation).
    pub fn mul_ba(&mut self, b: &BitShares, x: &ShareTensor) -> Result<ShareTensor> {
        if b.len() != x.len() {
            return Err(Error::Shape(format!(
                "mul_ba: {} bits for {} values",
                b.len(),
                x.len()
            )));
        }
        self.scoped("mul_ba", |p| {
            let bits = p.bit_to_arith(b)?;
            let bits = bits.reshape(x.shape().to_vec())?;
            p.mul(&bits, x)
        })
    }

    /// Arithmetic sharing of a boolean-shared bit vector: the XOR of the three
    /// components, evaluated as `u + v - 2uv` twice.
    pub fn bit_to_arith(&mut self, b: &BitShares) -> Result<ShareTensor> {
        let n = b.len();
        let me = self.id().index();
        let bit = |words: &[u64], e: usize| (words[e / 64] >> (e % 64)) & 1;
        let lo_bits: Vec<u64> = (0..n).map(|e| bit(&b.lo, e)).collect();
        let hi_bits: Vec<u64> = (0..n).map(|e| bit(&b.hi, e)).collect();
        let component = |j: usize| -> ShareTensor {
            let lo = if j == me { lo_bits.clone() } else { vec![0; n] };
            let hi = if j == (me + 1) % 3 {
                hi_bits.clone()
            } else {
                vec![0; n]
            };
            ShareTensor::from_parts(vec![n], lo, hi)
        };
        let xor = |p: &mut Self, u: &ShareTensor, v: &ShareTensor| -> Result<ShareTensor> {
            let uv = p.mul(u, v)?;
            u.add(v)?.sub(&uv.scale(2))
        };
        let u = xor(self, &component(0), &component(1))?;
        xor(self, &u, &component(2))
    }

    /// Maximum along the last axis by a pairwise tournament, batched across
    /// rows: `max(a, b) = b + 1{b < a} * (a - b)`.
    pub fn max_last(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        let width = x.last_dim();
        if x.is_empty() || width == 0 {
            return Err(Error::Argument("max of an empty vector".into()));
        }
        let rows = x.len() / width;
        let out_shape = x.shape()[..x.shape().len() - 1].to_vec();
        let out_shape = if out_shape.is_empty() {
            vec![1]
        } else {
            out_shape
        };
        self.scoped("max", |p| {
            let mut cur = x.clone().reshape(vec![x.len()])?;
            let mut w = width;
            while w > 1 {
                let half = w / 2;
                let even: Vec<usize> = (0..rows)
                    .flat_map(|r| (0..half).map(move |j| r * w + 2 * j))
                    .collect();
                let odd: Vec<usize> = even.iter().map(|i| i + 1).collect();
                let a = cur.gather(&even);
                let b = cur.gather(&odd);
                let pick = p.lt(&b, &a)?;
                let m = b.add(&p.mul_ba(&pick, &a.sub(&b)?)?)?;
                let next_w = w.div_ceil(2);
                let mut idx = Vec::with_capacity(rows * next_w);
                let merged = if w % 2 == 1 {
                    let left: Vec<usize> = (0..rows).map(|r| r * w + w - 1).collect();
                    let rest = cur.gather(&left);
                    for r in 0..rows {
                        idx.extend((0..half).map(|j| r * half + j));
                        idx.push(rows * half + r);
                    }
                    ShareTensor::concat(&[&m, &rest])
                } else {
                    idx.extend(0..rows * half);
                    m
                };
                cur = merged.gather(&idx);
                w = next_w;
            }
            cur.reshape(out_shape)
        })
    }

    /// `1/z` by Newton iteration `y <- y(2 - zy)` from `y0 = 1/z_max`, with
    /// `ceil(log2(z_max/z_min)) + 6` iterations. Requires `z` in the hinted range.
    pub fn recip(&mut self, z: &ShareTensor, z_min: f64, z_max: f64) -> Result<ShareTensor> {
        if !(z_min > 0.0 && z_max >= z_min && z_max.is_finite()) {
            return Err(Error::Argument(format!(
                "reciprocal range hint must satisfy 0 < min <= max, got ({z_min}, {z_max})"
            )));
        }
        let iters = recip_iterations(z_min, z_max);
        let two = self.enc().encode(2.0)?.0;
        self.scoped("recip", |p| {
            let mut y = p.public(z.shape().to_vec(), &vec![1.0 / z_max; z.len()])?;
            for _ in 0..iters {
                let zy = p.fixed_mul(z, &y)?;
                let corr = zy.neg().add_const(p.id(), two);
                y = p.fixed_mul(&y, &corr)?;
            }
            Ok(y)
        })
    }

    pub fn square(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("square", |p| p.fixed_mul(x, x))
    }
}

pub fn recip_iterations(z_min: f64, z_max: f64) -> usize {
    (z_max / z_min).log2().ceil().max(0.0) as usize + 6
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::{FixedEncoding, RingElement};
    use crate::rss::{run_local, share_bits, share_tensor};
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::time::Duration;

    const T: Duration = Duration::from_secs(20);

    fn deal_raw(values: &[u64], seed: u64) -> [ShareTensor; 3] {
        let t = Tensor::from_vec(values.iter().map(|&v| RingElement(v)).collect());
        share_tensor(&t, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    fn deal(values: &[f64], enc: FixedEncoding, seed: u64) -> [ShareTensor; 3] {
        let raw: Vec<u64> = enc
            .encode_slice(values)
            .unwrap()
            .iter()
            .map(|r| r.0)
            .collect();
        deal_raw(&raw, seed)
    }

    #[test]
    fn msb_examples_and_random() {
        let enc = FixedEncoding::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut raw: Vec<u64> = vec![
            enc.encode(-1.0).unwrap().0,
            enc.encode(1.0).unwrap().0,
            0,
            u64::MAX,
            1 << 63,
            (1 << 63) - 1,
        ];
        raw.extend((0..300).map(|_| rng.random::<u64>()));
        let x = deal_raw(&raw, 2);
        let (out, report) = run_local(enc, 3, T, |p| {
            let b = p.msb(&x[p.id().index()])?;
            p.reveal_bits(&b)
        })
        .unwrap();
        let expected: Vec<bool> = raw.iter().map(|v| v >> 63 == 1).collect();
        assert_eq!(out[0], expected);
        assert_eq!(report.under("msb").rounds, 63);
    }

    #[test]
    fn msb_in_small_ring() {
        let enc = FixedEncoding::new(20, 8).unwrap();
        let vals = [-3.0, 2.5, 0.0, -0.00390625, 1000.0, -1000.0];
        let x = deal(&vals, enc, 4);
        let (out, _) = run_local(enc, 5, T, |p| {
            let b = p.msb(&x[p.id().index()])?;
            p.reveal_bits(&b)
        })
        .unwrap();
        assert_eq!(out[0], vec![true, false, false, true, false, true]);
    }

    #[test]
    fn lt_examples() {
        let enc = FixedEncoding::default();
        let x = deal(&[-6.0, 3.0, -20.0], enc, 6);
        let y = deal(&[-2.0, 3.0, -14.0], enc, 7);
        let (out, _) = run_local(enc, 8, T, |p| {
            let i = p.id().index();
            let a = p.lt(&x[i], &y[i])?;
            let b = p.public_lt(-14.0, &x[i])?;
            Ok((p.reveal_bits(&a)?, p.reveal_bits(&b)?))
        })
        .unwrap();
        assert_eq!(out[0].0, vec![true, false, true]);
        assert_eq!(out[0].1, vec![true, true, false]);
    }

    #[test]
    fn mul_ba_selects_exactly() {
        let enc = FixedEncoding::default();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..200)
            .map(|_| rng.random_range(-1000.0..1000.0))
            .collect();
        let bits: Vec<bool> = (0..200).map(|k| k % 3 != 1).collect();
        let x = deal(&vals, enc, 10);
        let b = share_bits(&bits, &mut rng);
        let (out, report) = run_local(enc, 11, T, |p| {
            let i = p.id().index();
            let once = p.mul_ba(&b[i], &x[i])?;
            let twice = p.mul_ba(&b[i], &once)?;
            Ok((p.reveal(&once)?, p.reveal(&twice)?))
        })
        .unwrap();
        let (once, twice) = &out[0];
        assert_eq!(once, twice);
        for k in 0..200 {
            let expected = if bits[k] {
                enc.encode(vals[k]).unwrap().0
            } else {
                0
            };
            assert_eq!(once[k], expected);
        }
        assert_eq!(report.under("mul_ba").rounds, 6);
    }

    #[test]
    fn max_rows_and_ties() {
        let enc = FixedEncoding::default();
        let rows = [
            vec![1.0, 2.0, 3.0],
            vec![5.0, 5.0, 5.0],
            vec![-1.0, -7.5, -0.5],
        ];
        let flat: Vec<f64> = rows.concat();
        let x = deal(&flat, enc, 12).map(|s| s.reshape(vec![3, 3]).unwrap());
        let (out, _) = run_local(enc, 13, T, |p| {
            let m = p.max_last(&x[p.id().index()])?;
            p.reveal_fixed(&m)
        })
        .unwrap();
        assert_eq!(out[0], vec![3.0, 5.0, -0.5]);
    }

    #[test]
    fn max_of_empty_is_an_error() {
        let x = ShareTensor::zeros(vec![0]);
        let err = run_local(FixedEncoding::default(), 1, T, |p| p.max_last(&x)).unwrap_err();
        assert!(matches!(err.root(), Error::Argument(_)));
    }

    #[test]
    fn recip_examples() {
        let enc = FixedEncoding::default();
        let z = deal(&[1.0, 4.0, 0.9, 64.0], enc, 14);
        let (out, _) = run_local(enc, 15, T, |p| {
            let y = p.recip(&z[p.id().index()], 0.9, 64.0)?;
            p.reveal_fixed(&y)
        })
        .unwrap();
        assert!((out[0][0] - 1.0).abs() <= 2f64.powi(-14));
        assert!((out[0][1] - 0.25).abs() <= 2f64.powi(-14) / 4.0 + 4.0 * enc.lsb());
        assert!((out[0][2] - 1.0 / 0.9).abs() <= 2f64.powi(-14) / 0.9 + 4.0 * enc.lsb());
        assert!((out[0][3] - 1.0 / 64.0).abs() <= 2f64.powi(-14) / 64.0 + 4.0 * enc.lsb());
    }

    #[test]
    fn recip_rejects_bad_hint() {
        let z = ShareTensor::zeros(vec![1]);
        let err = run_local(FixedEncoding::default(), 1, T, |p| p.recip(&z, 0.0, 4.0)).unwrap_err();
        assert!(matches!(err.root(), Error::Argument(_)));
    }

    #[test]
    fn square_examples() {
        let enc = FixedEncoding::default();
        let x = deal(&[0.0, -3.0, 12.5], enc, 16);
        let (out, _) = run_local(enc, 17, T, |p| {
            let y = p.square(&x[p.id().index()])?;
            p.reveal_fixed(&y)
        })
        .unwrap();
        assert_eq!(out[0][0], 0.0);
        assert!((out[0][1] - 9.0).abs() <= 2.0 * enc.lsb());
        assert!((out[0][2] - 156.25).abs() <= 2.0 * enc.lsb());
    }
}
