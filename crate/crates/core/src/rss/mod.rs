//! 2-out-of-3 replicated secret sharing.
//!
//! A secret `x` is split as `x = x_0 + x_1 + x_2 (mod 2^l)` and party `P_i`
//! holds the pair `(x_i, x_{i+1})`, stored as `lo`/`hi`. Boolean shares use the
//! same layout over `Z_2` with bits packed into 64-bit words.
//!
//! This module has the share containers, the dealer-side `share`/`reconstruct`
//! used by the data owner, and the local (non-interactive) operations. The
//! interactive protocols live on [`Party`].

mod party;
mod prf;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::RingElement;
use crate::tensor::Tensor;

pub use party::{run_local, Party};
pub use prf::{prf, seeded_stream, stream, PartySetup, PrfKey, ZeroShareGenerator};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId(u8);

impl PartyId {
    pub const P0: PartyId = PartyId(0);
    pub const P1: PartyId = PartyId(1);
    pub const P2: PartyId = PartyId(2);
    pub const ALL: [PartyId; 3] = [PartyId::P0, PartyId::P1, PartyId::P2];

    pub fn new(index: usize) -> Result<Self> {
        if index < 3 {
            Ok(PartyId(index as u8))
        } else {
            Err(Error::Argument(format!(
                "party id must be 0, 1 or 2, got {index}"
            )))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn next(self) -> PartyId {
        PartyId((self.0 + 1) % 3)
    }

    pub fn prev(self) -> PartyId {
        PartyId((self.0 + 2) % 3)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// One party's view `(x_i, x_{i+1})` of an arithmetic secret.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplicatedShare {
    pub lo: RingElement,
    pub hi: RingElement,
}

/// Local addition of two shares held by the same party.
pub fn add_shares(a: ReplicatedShare, b: ReplicatedShare) -> ReplicatedShare {
    ReplicatedShare {
        lo: a.lo + b.lo,
        hi: a.hi + b.hi,
    }
}

/// `c1 * x + c3` on one party's share. The constant lands in component 0,
/// which `P0` holds as `lo` and `P2` as `hi`.
pub fn affine_const(
    a: ReplicatedShare,
    c1: RingElement,
    c3: RingElement,
    party: PartyId,
) -> ReplicatedShare {
    let mut out = ReplicatedShare {
        lo: a.lo * c1,
        hi: a.hi * c1,
    };
    match party {
        PartyId::P0 => out.lo += c3,
        PartyId::P2 => out.hi += c3,
        _ => {}
    }
    out
}

/// Deals a fresh sharing: `x_0, x_1` uniform, `x_2 = x - x_0 - x_1`.
pub fn share<R: Rng + ?Sized>(secret: RingElement, rng: &mut R) -> [ReplicatedShare; 3] {
    let x0 = RingElement(rng.random());
    let x1 = RingElement(rng.random());
    let x2 = secret - x0 - x1;
    [
        ReplicatedShare { lo: x0, hi: x1 },
        ReplicatedShare { lo: x1, hi: x2 },
        ReplicatedShare { lo: x2, hi: x0 },
    ]
}

/// Sums the three distinct components after checking replication.
pub fn reconstruct(shares: &[ReplicatedShare; 3]) -> Result<RingElement> {
    for i in 0..3 {
        let j = (i + 1) % 3;
        if shares[i].hi != shares[j].lo {
            return Err(Error::Integrity(format!(
                "P{i}.hi != P{j}.lo ({:?} vs {:?})",
                shares[i].hi, shares[j].lo
            )));
        }
    }
    Ok(shares[0].lo + shares[1].lo + shares[2].lo)
}

/// A party's view of a shaped tensor of arithmetic secrets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareTensor {
    shape: Vec<usize>,
    pub(crate) lo: Vec<u64>,
    pub(crate) hi: Vec<u64>,
}

impl ShareTensor {
    pub fn new(shape: Vec<usize>, lo: Vec<u64>, hi: Vec<u64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if lo.len() != n || hi.len() != n {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got lo={} hi={}",
                lo.len(),
                hi.len()
            )));
        }
        Ok(ShareTensor { shape, lo, hi })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, lo: Vec<u64>, hi: Vec<u64>) -> Self {
        debug_assert_eq!(lo.len(), shape.iter().product::<usize>());
        debug_assert_eq!(lo.len(), hi.len());
        ShareTensor { shape, lo, hi }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        ShareTensor {
            shape,
            lo: vec![0; n],
            hi: vec![0; n],
        }
    }

    /// Sharing of a public tensor: every value sits in component 0.
    pub fn from_public(party: PartyId, shape: Vec<usize>, values: &[u64]) -> Result<Self> {
        let mut t = ShareTensor::zeros(shape);
        if values.len() != t.len() {
            return Err(Error::Shape(format!(
                "public tensor has {} values for shape {:?}",
                values.len(),
                t.shape
            )));
        }
        t.add_public_assign(party, values);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn get(&self, i: usize) -> ReplicatedShare {
        ReplicatedShare {
            lo: RingElement(self.lo[i]),
            hi: RingElement(self.hi[i]),
        }
    }

    pub fn from_shares(shape: Vec<usize>, shares: &[ReplicatedShare]) -> Result<Self> {
        ShareTensor::new(
            shape,
            shares.iter().map(|s| s.lo.0).collect(),
            shares.iter().map(|s| s.hi.0).collect(),
        )
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    fn check_same(&self, other: &ShareTensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &ShareTensor) -> Result<ShareTensor> {
        self.check_same(other, "add")?;
        Ok(self.zip_with(other, u64::wrapping_add))
    }

    pub fn sub(&self, other: &ShareTensor) -> Result<ShareTensor> {
        self.check_same(other, "sub")?;
        Ok(self.zip_with(other, u64::wrapping_sub))
    }

    pub(crate) fn zip_with(&self, other: &ShareTensor, f: impl Fn(u64, u64) -> u64) -> ShareTensor {
        ShareTensor {
            shape: self.shape.clone(),
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn neg(&self) -> ShareTensor {
        self.scale(u64::MAX)
    }

    /// Multiplies by a public ring element; no rescaling.
    pub fn scale(&self, c: u64) -> ShareTensor {
        ShareTensor {
            shape: self.shape.clone(),
            lo: self.lo.iter().map(|&a| a.wrapping_mul(c)).collect(),
            hi: self.hi.iter().map(|&a| a.wrapping_mul(c)).collect(),
        }
    }

    /// Elementwise product with public ring values; no rescaling.
    pub fn scale_each(&self, c: &[u64]) -> Result<ShareTensor> {
        if c.len() != self.len() {
            return Err(Error::Shape(format!(
                "scale_each: {} coefficients for {} elements",
                c.len(),
                self.len()
            )));
        }
        Ok(ShareTensor {
            shape: self.shape.clone(),
            lo: self
                .lo
                .iter()
                .zip(c)
                .map(|(&a, &k)| a.wrapping_mul(k))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(c)
                .map(|(&a, &k)| a.wrapping_mul(k))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &ShareTensor) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, b) in self.lo.iter_mut().zip(&other.lo) {
            *a = a.wrapping_add(*b);
        }
        for (a, b) in self.hi.iter_mut().zip(&other.hi) {
            *a = a.wrapping_add(*b);
        }
        Ok(())
    }

    /// Adds public ring values (one per element) into component 0.
    pub fn add_public_assign(&mut self, party: PartyId, values: &[u64]) {
        debug_assert_eq!(values.len(), self.len());
        let target = match party {
            PartyId::P0 => &mut self.lo,
            PartyId::P2 => &mut self.hi,
            _ => return,
        };
        for (a, &v) in target.iter_mut().zip(values) {
            *a = a.wrapping_add(v);
        }
    }

    /// Adds the same public constant to every element.
    pub fn add_const(&self, party: PartyId, c: u64) -> ShareTensor {
        let mut out = self.clone();
        out.add_public_assign(party, &vec![c; self.len()]);
        out
    }

    pub fn concat(parts: &[&ShareTensor]) -> ShareTensor {
        let n = parts.iter().map(|p| p.len()).sum();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for p in parts {
            lo.extend_from_slice(&p.lo);
            hi.extend_from_slice(&p.hi);
        }
        ShareTensor {
            shape: vec![n],
            lo,
            hi,
        }
    }

    /// Splits a flat tensor into consecutive chunks of the given lengths.
    pub fn split(&self, lens: &[usize]) -> Vec<ShareTensor> {
        debug_assert_eq!(lens.iter().sum::<usize>(), self.len());
        let mut start = 0;
        lens.iter()
            .map(|&n| {
                let t = ShareTensor {
                    shape: vec![n],
                    lo: self.lo[start..start + n].to_vec(),
                    hi: self.hi[start..start + n].to_vec(),
                };
                start += n;
                t
            })
            .collect()
    }

    pub fn gather(&self, idx: &[usize]) -> ShareTensor {
        ShareTensor {
            shape: vec![idx.len()],
            lo: idx.iter().map(|&i| self.lo[i]).collect(),
            hi: idx.iter().map(|&i| self.hi[i]).collect(),
        }
    }

    pub fn transpose2d(&self) -> Result<ShareTensor> {
        let [r, c] = self.shape[..] else {
            return Err(Error::Shape(format!(
                "transpose needs rank 2, got {:?}",
                self.shape
            )));
        };
        let idx: Vec<usize> = (0..c)
            .flat_map(|j| (0..r).map(move |i| i * c + j))
            .collect();
        let mut t = self.gather(&idx);
        t.shape = vec![c, r];
        Ok(t)
    }

    /// Sums along the last axis: `[.., n] -> [..]`.
    pub fn sum_last(&self) -> ShareTensor {
        let n = self.last_dim().max(1);
        let rows = self.len() / n;
        let fold = |v: &[u64]| -> Vec<u64> {
            v.chunks(n)
                .map(|c| c.iter().fold(0u64, |acc, &x| acc.wrapping_add(x)))
                .collect()
        };
        ShareTensor {
            shape: self.shape[..self.shape.len().saturating_sub(1)].to_vec(),
            lo: fold(&self.lo),
            hi: fold(&self.hi),
        }
        .with_rows(rows)
    }

    fn with_rows(mut self, rows: usize) -> ShareTensor {
        if self.shape.is_empty() {
            self.shape = vec![rows];
        }
        self
    }

    /// Repeats each element `n` times: `[..] -> [.., n]`.
    pub fn broadcast_last(&self, n: usize) -> ShareTensor {
        let rep =
            |v: &[u64]| -> Vec<u64> { v.iter().flat_map(|&x| std::iter::repeat_n(x, n)).collect() };
        let mut shape = self.shape.clone();
        shape.push(n);
        ShareTensor {
            shape,
            lo: rep(&self.lo),
            hi: rep(&self.hi),
        }
    }
}

/// Deals a sharing of every element of a public tensor.
pub fn share_tensor<R: Rng + ?Sized>(t: &Tensor<RingElement>, rng: &mut R) -> [ShareTensor; 3] {
    let n = t.len();
    let mut comps = [vec![0u64; n], vec![0u64; n], vec![0u64; n]];
    for (k, &v) in t.data().iter().enumerate() {
        let x0: u64 = rng.random();
        let x1: u64 = rng.random();
        comps[0][k] = x0;
        comps[1][k] = x1;
        comps[2][k] = v.0.wrapping_sub(x0).wrapping_sub(x1);
    }
    let shape = t.shape().to_vec();
    [0, 1, 2].map(|i| ShareTensor {
        shape: shape.clone(),
        lo: comps[i].clone(),
        hi: comps[(i + 1) % 3].clone(),
    })
}

pub fn reconstruct_tensor(shares: &[ShareTensor; 3]) -> Result<Tensor<RingElement>> {
    for i in 0..3 {
        let j = (i + 1) % 3;
        if shares[i].shape != shares[j].shape {
            return Err(Error::Shape(format!(
                "P{i} holds {:?}, P{j} holds {:?}",
                shares[i].shape, shares[j].shape
            )));
        }
        if let Some(k) = (0..shares[i].len()).find(|&k| shares[i].hi[k] != shares[j].lo[k]) {
            return Err(Error::Integrity(format!("element {k}: P{i}.hi != P{j}.lo")));
        }
    }
    let data = (0..shares[0].len())
        .map(|k| {
            RingElement(
                shares[0].lo[k]
                    .wrapping_add(shares[1].lo[k])
                    .wrapping_add(shares[2].lo[k]),
            )
        })
        .collect();
    Tensor::new(shares[0].shape.clone(), data)
}

/// A party's view of a vector of boolean secrets, bit-packed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitShares {
    len: usize,
    pub(crate) lo: Vec<u64>,
    pub(crate) hi: Vec<u64>,
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Mask of the valid bits in the last word of a `bits`-long vector.
pub(crate) fn tail_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl BitShares {
    pub(crate) fn from_words(len: usize, lo: Vec<u64>, hi: Vec<u64>) -> Self {
        debug_assert_eq!(lo.len(), words_for(len));
        let mut out = BitShares { len, lo, hi };
        out.clear_tail();
        out
    }

    pub fn zeros(len: usize) -> Self {
        BitShares {
            len,
            lo: vec![0; words_for(len)],
            hi: vec![0; words_for(len)],
        }
    }

    fn clear_tail(&mut self) {
        if let (Some(l), Some(h)) = (self.lo.last_mut(), self.hi.last_mut()) {
            let m = tail_mask(self.len);
            *l &= m;
            *h &= m;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> usize {
        self.lo.len()
    }

    pub fn xor(&self, other: &BitShares) -> Result<BitShares> {
        if self.len != other.len {
            return Err(Error::Shape(format!(
                "xor of {} and {} bits",
                self.len, other.len
            )));
        }
        Ok(BitShares {
            len: self.len,
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a ^ b).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a ^ b).collect(),
        })
    }

    /// XOR with public all-ones (logical NOT), absorbed in component 0.
    pub fn not(&self, party: PartyId) -> BitShares {
        let mut out = self.clone();
        let target = match party {
            PartyId::P0 => &mut out.lo,
            PartyId::P2 => &mut out.hi,
            _ => return out,
        };
        for w in target.iter_mut() {
            *w = !*w;
        }
        out.clear_tail();
        out
    }

    pub fn concat(parts: &[&BitShares]) -> BitShares {
        let len = parts.iter().map(|p| p.len).sum();
        let mut out = BitShares::zeros(len);
        let mut at = 0;
        for p in parts {
            for k in 0..p.len {
                let (lo, hi) = p.bit(k);
                out.set_bit(at + k, lo, hi);
            }
            at += p.len;
        }
        out
    }

    pub fn split(&self, lens: &[usize]) -> Vec<BitShares> {
        debug_assert_eq!(lens.iter().sum::<usize>(), self.len);
        let mut start = 0;
        lens.iter()
            .map(|&n| {
                let part = self.range(start, n);
                start += n;
                part
            })
            .collect()
    }

    fn range(&self, start: usize, n: usize) -> BitShares {
        let mut out = BitShares::zeros(n);
        for k in 0..n {
            let (lo, hi) = self.bit(start + k);
            out.set_bit(k, lo, hi);
        }
        out
    }

    pub fn gather(&self, idx: &[usize]) -> BitShares {
        let mut out = BitShares::zeros(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let (lo, hi) = self.bit(i);
            out.set_bit(k, lo, hi);
        }
        out
    }

    pub(crate) fn bit(&self, k: usize) -> (bool, bool) {
        let (w, b) = (k / 64, k % 64);
        ((self.lo[w] >> b) & 1 == 1, (self.hi[w] >> b) & 1 == 1)
    }

    fn set_bit(&mut self, k: usize, lo: bool, hi: bool) {
        let (w, b) = (k / 64, k % 64);
        self.lo[w] = (self.lo[w] & !(1 << b)) | ((lo as u64) << b);
        self.hi[w] = (self.hi[w] & !(1 << b)) | ((hi as u64) << b);
    }
}

pub fn share_bits<R: Rng + ?Sized>(bits: &[bool], rng: &mut R) -> [BitShares; 3] {
    let words = words_for(bits.len());
    let mut b = vec![0u64; words];
    for (k, &v) in bits.iter().enumerate() {
        b[k / 64] |= (v as u64) << (k % 64);
    }
    let c0: Vec<u64> = (0..words).map(|_| rng.random()).collect();
    let c1: Vec<u64> = (0..words).map(|_| rng.random()).collect();
    let c2: Vec<u64> = (0..words).map(|w| b[w] ^ c0[w] ^ c1[w]).collect();
    let comps = [c0, c1, c2];
    [0, 1, 2]
        .map(|i| BitShares::from_words(bits.len(), comps[i].clone(), comps[(i + 1) % 3].clone()))
}

pub fn reconstruct_bits(shares: &[BitShares; 3]) -> Result<Vec<bool>> {
    let len = shares[0].len;
    for i in 0..3 {
        let j = (i + 1) % 3;
        if shares[i].len != len || shares[i].hi != shares[j].lo {
            return Err(Error::Integrity(format!(
                "boolean shares: P{i}.hi != P{j}.lo"
            )));
        }
    }
    Ok((0..len)
        .map(|k| {
            let (w, b) = (k / 64, k % 64);
            ((shares[0].lo[w] ^ shares[1].lo[w] ^ shares[2].lo[w]) >> b) & 1 == 1
        })
        .collect())
}
