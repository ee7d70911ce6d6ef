use std::time::Duration;

use super::prf::PartySetup;
use super::{tail_mask, BitShares, PartyId, ShareTensor, ZeroShareGenerator};
use crate::error::{Error, Result, TransportError};
use crate::fixed::FixedEncoding;
use crate::transport::{spawn_local_parties, CostReport, Network};

/// One party's protocol state: its id, encoding, correlated randomness and
/// network endpoint. All methods must be called by the three parties in the
/// same order.
pub struct Party<'a> {
    id: PartyId,
    enc: FixedEncoding,
    rand: ZeroShareGenerator,
    net: &'a mut Network,
}

/// Runs `f` as all three parties over in-process channels, with pair keys
/// derived from `seed`.
pub fn run_local<T, F>(
    enc: FixedEncoding,
    seed: u64,
    timeout: Duration,
    f: F,
) -> Result<([T; 3], CostReport)>
where
    T: Send,
    F: Fn(&mut Party<'_>) -> Result<T> + Sync,
{
    let setup = PartySetup::from_master(seed);
    spawn_local_parties(timeout, |net| {
        let mut party = Party::new(net, &setup, enc);
        f(&mut party)
    })
}

impl<'a> Party<'a> {
    pub fn new(net: &'a mut Network, setup: &PartySetup, enc: FixedEncoding) -> Self {
        let id = net.id();
        Party {
            id,
            enc,
            rand: setup.generator(id),
            net,
        }
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn enc(&self) -> FixedEncoding {
        self.enc
    }

    pub fn network(&mut self) -> &mut Network {
        self.net
    }

    pub fn randomness(&self) -> &ZeroShareGenerator {
        &self.rand
    }

    /// Runs `f` with `label` pushed onto the accounting path.
    pub fn scoped<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.net.push_label(label);
        let out = f(self);
        self.net.pop_label();
        out
    }

    fn elem_bytes(&self) -> usize {
        self.enc.ring_bits().div_ceil(8) as usize
    }

    pub(crate) fn reduce_all(&self, v: &mut [u64]) {
        let m = self.enc.mask();
        for x in v {
            *x &= m;
        }
    }

    pub(crate) fn send_ring(&mut self, to: PartyId, values: &[u64]) -> Result<()> {
        let w = self.elem_bytes();
        let m = self.enc.mask();
        let mut buf = Vec::with_capacity(values.len() * w);
        for &v in values {
            buf.extend_from_slice(&(v & m).to_le_bytes()[..w]);
        }
        Ok(self.net.send(to, buf)?)
    }

    pub(crate) fn recv_ring(&mut self, from: PartyId, n: usize) -> Result<Vec<u64>> {
        let w = self.elem_bytes();
        let buf = self.net.recv(from)?;
        if buf.len() != n * w {
            return Err(TransportError::Payload {
                party: self.id,
                peer: from,
                detail: format!("expected {} ring bytes, got {}", n * w, buf.len()),
            }
            .into());
        }
        Ok(buf
            .chunks_exact(w)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..w].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .collect())
    }

    fn send_bits(&mut self, to: PartyId, words: &[u64], bits: usize) -> Result<()> {
        let mut buf: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        buf.truncate(bits.div_ceil(8));
        Ok(self.net.send(to, buf)?)
    }

    fn recv_bits(&mut self, from: PartyId, bits: usize) -> Result<Vec<u64>> {
        let buf = self.net.recv(from)?;
        if buf.len() != bits.div_ceil(8) {
            return Err(TransportError::Payload {
                party: self.id,
                peer: from,
                detail: format!("expected {} bit bytes, got {}", bits.div_ceil(8), buf.len()),
            }
            .into());
        }
        let mut words = vec![0u64; bits.div_ceil(64)];
        for (k, b) in buf.iter().enumerate() {
            words[k / 8] |= (*b as u64) << (8 * (k % 8));
        }
        Ok(words)
    }

    /// Masks a locally computed additive share with a zero sharing, sends it
    /// to the previous party and pairs it with the one from the next party.
    pub(crate) fn reshare(&mut self, shape: Vec<usize>, mut z: Vec<u64>) -> Result<ShareTensor> {
        let alpha = self.rand.zero_share(z.len());
        for (v, a) in z.iter_mut().zip(&alpha) {
            *v = v.wrapping_add(*a);
        }
        self.reduce_all(&mut z);
        self.send_ring(self.id.prev(), &z)?;
        let hi = self.recv_ring(self.id.next(), z.len())?;
        Ok(ShareTensor::from_parts(shape, z, hi))
    }

    /// Elementwise product without rescaling. One round, one element per party.
    pub fn mul(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        if x.shape() != y.shape() {
            return Err(Error::Shape(format!(
                "mul: {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        self.scoped("mul", |p| {
            let z = (0..x.len())
                .map(|k| {
                    x.lo[k]
                        .wrapping_mul(y.lo[k])
                        .wrapping_add(x.hi[k].wrapping_mul(y.lo[k]))
                        .wrapping_add(x.lo[k].wrapping_mul(y.hi[k]))
                })
                .collect();
            p.reshare(x.shape().to_vec(), z)
        })
    }

    /// Divides by `2^bits` with unbiased stochastic rounding: the result opens
    /// to `floor(x / 2^bits)` or one more. Needs `|x| < 2^(l-2)`.
    ///
    /// `P2` deals a masked random value; `P0` and `P1` open `x + r`, shift it
    /// and undo the wrap using the dealt top bit of `r`, then reshare.
    pub fn trunc(&mut self, x: &ShareTensor, bits: u32) -> Result<ShareTensor> {
        let l = self.enc.ring_bits();
        if bits == 0 {
            return Ok(x.clone());
        }
        if bits > l - 2 {
            return Err(Error::Argument(format!(
                "cannot truncate {bits} bits in a {l}-bit ring"
            )));
        }
        self.scoped("trunc", |p| p.trunc_inner(x, bits))
    }

    fn trunc_inner(&mut self, x: &ShareTensor, bits: u32) -> Result<ShareTensor> {
        let n = x.len();
        let l = self.enc.ring_bits();
        let mask = self.enc.mask();
        let half = 1u64 << (l - 1);
        let bias = 1u64 << (l - 2);
        let g = 1u64 << (l - 1 - bits);
        let ctr = self.rand.next_counter();
        let shape = x.shape().to_vec();

        // Shared tail once the masked value c = x + bias + r is public to P0 and P1.
        let open_part = |c: u64, rc: u64, rb: u64, first: bool| -> u64 {
            let c = c & mask;
            let cb = c >> (l - 1);
            let coef = if cb == 1 { g.wrapping_neg() } else { g };
            let mut y = rb.wrapping_mul(coef).wrapping_sub(rc);
            if first {
                y = y
                    .wrapping_add((c & (half - 1)) >> bits)
                    .wrapping_add(g.wrapping_mul(cb))
                    .wrapping_sub(bias >> bits);
            }
            y
        };

        match self.id {
            PartyId::P0 => {
                let s = self.rand.pair_stream(PartyId::P2, ctr, 4 * n);
                let (r_a, rest) = s.split_at(n);
                let (rc_a, rest) = rest.split_at(n);
                let (rb_a, rho) = rest.split_at(n);
                let masked: Vec<u64> = (0..n)
                    .map(|k| {
                        x.lo[k]
                            .wrapping_add(x.hi[k])
                            .wrapping_add(bias)
                            .wrapping_add(r_a[k])
                    })
                    .collect();
                self.send_ring(PartyId::P1, &masked)?;
                let other = self.recv_ring(PartyId::P1, n)?;
                let mut out: Vec<u64> = (0..n)
                    .map(|k| {
                        let c = masked[k].wrapping_add(other[k]);
                        open_part(c, rc_a[k], rb_a[k], true).wrapping_sub(rho[k])
                    })
                    .collect();
                self.reduce_all(&mut out);
                self.send_ring(PartyId::P1, &out)?;
                let theirs = self.recv_ring(PartyId::P1, n)?;
                let mut y1: Vec<u64> = out
                    .iter()
                    .zip(&theirs)
                    .map(|(a, b)| a.wrapping_add(*b))
                    .collect();
                self.reduce_all(&mut y1);
                let mut y0 = rho.to_vec();
                self.reduce_all(&mut y0);
                Ok(ShareTensor::from_parts(shape, y0, y1))
            }
            PartyId::P1 => {
                let s = self.rand.pair_stream(PartyId::P2, ctr, 2 * n);
                let (r_b, rho) = s.split_at(n);
                let masked: Vec<u64> = (0..n).map(|k| x.hi[k].wrapping_add(r_b[k])).collect();
                self.send_ring(PartyId::P0, &masked)?;
                let dealt = self.recv_ring(PartyId::P2, 2 * n)?;
                let (rc_b, rb_b) = dealt.split_at(n);
                let other = self.recv_ring(PartyId::P0, n)?;
                let mut out: Vec<u64> = (0..n)
                    .map(|k| {
                        let c = masked[k].wrapping_add(other[k]);
                        open_part(c, rc_b[k], rb_b[k], false).wrapping_sub(rho[k])
                    })
                    .collect();
                self.reduce_all(&mut out);
                self.send_ring(PartyId::P0, &out)?;
                let theirs = self.recv_ring(PartyId::P0, n)?;
                let mut y1: Vec<u64> = out
                    .iter()
                    .zip(&theirs)
                    .map(|(a, b)| a.wrapping_add(*b))
                    .collect();
                self.reduce_all(&mut y1);
                let mut y2 = rho.to_vec();
                self.reduce_all(&mut y2);
                Ok(ShareTensor::from_parts(shape, y1, y2))
            }
            _ => {
                let s02 = self.rand.pair_stream(PartyId::P0, ctr, 4 * n);
                let s12 = self.rand.pair_stream(PartyId::P1, ctr, 2 * n);
                let (r_a, rest) = s02.split_at(n);
                let (rc_a, rest) = rest.split_at(n);
                let (rb_a, rho02) = rest.split_at(n);
                let (r_b, rho12) = s12.split_at(n);
                let mut dealt = vec![0u64; 2 * n];
                for k in 0..n {
                    let r = r_a[k].wrapping_add(r_b[k]) & mask;
                    let rb = r >> (l - 1);
                    let rc = (r & (half - 1)) >> bits;
                    dealt[k] = rc.wrapping_sub(rc_a[k]);
                    dealt[n + k] = rb.wrapping_sub(rb_a[k]);
                }
                self.send_ring(PartyId::P1, &dealt)?;
                let mut y2 = rho12.to_vec();
                let mut y0 = rho02.to_vec();
                self.reduce_all(&mut y2);
                self.reduce_all(&mut y0);
                Ok(ShareTensor::from_parts(shape, y2, y0))
            }
        }
    }

    /// Fixed-point product: `mul` then truncation by `f`.
    pub fn fixed_mul(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        self.scoped("fixed_mul", |p| {
            let z = p.mul(x, y)?;
            p.trunc(&z, p.enc.frac_bits())
        })
    }

    /// Share-by-share matrix product `[m,k] x [k,n]`, truncated by `shift`.
    /// Products are accumulated locally before a single reshare.
    pub fn matmul(&mut self, a: &ShareTensor, b: &ShareTensor, shift: u32) -> Result<ShareTensor> {
        let (m, k, n) = matmul_dims(a.shape(), b.shape())?;
        self.scoped("matmul", |p| {
            let b_sum: Vec<u64> =
                b.lo.iter()
                    .zip(&b.hi)
                    .map(|(x, y)| x.wrapping_add(*y))
                    .collect();
            let mut z = raw_matmul(&a.lo, &b_sum, m, k, n);
            let z2 = raw_matmul(&a.hi, &b.lo, m, k, n);
            for (u, v) in z.iter_mut().zip(&z2) {
                *u = u.wrapping_add(*v);
            }
            let z = p.scoped("mul", |p| p.reshare(vec![m, n], z))?;
            p.trunc(&z, shift)
        })
    }

    /// Shared `[m,k]` times a public ring matrix `[k,n]`, truncated by `shift`.
    pub fn matmul_public(
        &mut self,
        a: &ShareTensor,
        w: &[u64],
        w_shape: &[usize],
        shift: u32,
    ) -> Result<ShareTensor> {
        let (m, k, n) = matmul_dims(a.shape(), w_shape)?;
        let lo = raw_matmul(&a.lo, w, m, k, n);
        let hi = raw_matmul(&a.hi, w, m, k, n);
        self.trunc(&ShareTensor::from_parts(vec![m, n], lo, hi), shift)
    }

    /// Public ring matrix `[m,k]` times a shared `[k,n]`, truncated by `shift`.
    pub fn public_matmul(
        &mut self,
        w: &[u64],
        w_shape: &[usize],
        b: &ShareTensor,
        shift: u32,
    ) -> Result<ShareTensor> {
        let (m, k, n) = matmul_dims(w_shape, b.shape())?;
        let lo = raw_matmul(w, &b.lo, m, k, n);
        let hi = raw_matmul(w, &b.hi, m, k, n);
        self.trunc(&ShareTensor::from_parts(vec![m, n], lo, hi), shift)
    }

    /// `sum_k c_k * x_k + offset` for public real coefficients, with a single
    /// truncation. `offset` is empty, one value, or one value per element.
    /// Coefficients carry `coeff_bits(headroom)` fractional bits, so the
    /// accumulated magnitude must stay below `2^headroom`.
    pub fn scaled_sum(
        &mut self,
        terms: &[(&ShareTensor, f64)],
        offset: &[f64],
        headroom: u32,
    ) -> Result<ShareTensor> {
        let mut out = self.scaled_sum_batch(&[(terms, offset)], headroom)?;
        Ok(out.remove(0))
    }

    /// Several independent [`Party::scaled_sum`]s sharing one truncation.
    pub fn scaled_sum_batch(
        &mut self,
        groups: &[(&[(&ShareTensor, f64)], &[f64])],
        headroom: u32,
    ) -> Result<Vec<ShareTensor>> {
        let g = self.enc.coeff_bits(headroom);
        let f = self.enc.frac_bits();
        let mut accs = Vec::with_capacity(groups.len());
        for (terms, offset) in groups {
            let Some(first) = terms.first() else {
                return Err(Error::Argument("scaled_sum needs at least one term".into()));
            };
            let n = first.0.len();
            if terms.iter().any(|(t, _)| t.len() != n) {
                return Err(Error::Shape("scaled_sum terms differ in length".into()));
            }
            if !(offset.is_empty() || offset.len() == 1 || offset.len() == n) {
                return Err(Error::Shape(format!(
                    "offset of length {} for {n} elements",
                    offset.len()
                )));
            }
            let mut acc = ShareTensor::zeros(first.0.shape().to_vec());
            for (t, c) in terms.iter() {
                let k = self.enc.encode_scaled(*c, g);
                acc.add_assign(&(*t).clone().reshape(acc.shape().to_vec())?.scale(k))?;
            }
            if !offset.is_empty() {
                let vals: Vec<u64> = (0..n)
                    .map(|i| {
                        self.enc
                            .encode_scaled(offset[i.min(offset.len() - 1)], f + g)
                    })
                    .collect();
                acc.add_public_assign(self.id, &vals);
            }
            accs.push(acc);
        }
        let lens: Vec<usize> = accs.iter().map(|a| a.len()).collect();
        let joined = ShareTensor::concat(&accs.iter().collect::<Vec<_>>());
        let truncated = self.trunc(&joined, g)?;
        truncated
            .split(&lens)
            .into_iter()
            .zip(&accs)
            .map(|(t, a)| t.reshape(a.shape().to_vec()))
            .collect()
    }

    /// Boolean AND: same pattern as `mul` over `Z_2`, one bit per party.
    pub fn and(&mut self, a: &BitShares, b: &BitShares) -> Result<BitShares> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "and: {} vs {} bits",
                a.len(),
                b.len()
            )));
        }
        self.scoped("and", |p| {
            let mask = p.rand.zero_share_bits(a.words());
            let mut z: Vec<u64> = (0..a.words())
                .map(|w| (a.lo[w] & b.lo[w]) ^ (a.hi[w] & b.lo[w]) ^ (a.lo[w] & b.hi[w]) ^ mask[w])
                .collect();
            if let Some(last) = z.last_mut() {
                *last &= tail_mask(a.len());
            }
            p.send_bits(p.id.prev(), &z, a.len())?;
            let hi = p.recv_bits(p.id.next(), a.len())?;
            Ok(BitShares::from_words(a.len(), z, hi))
        })
    }

    /// Opens a shared tensor to every party; returns ring values mod `2^l`.
    pub fn reveal(&mut self, x: &ShareTensor) -> Result<Vec<u64>> {
        self.scoped("reveal", |p| {
            p.send_ring(p.id.prev(), &x.hi)?;
            let third = p.recv_ring(p.id.next(), x.len())?;
            let mask = p.enc.mask();
            Ok((0..x.len())
                .map(|k| x.lo[k].wrapping_add(x.hi[k]).wrapping_add(third[k]) & mask)
                .collect())
        })
    }

    pub fn reveal_fixed(&mut self, x: &ShareTensor) -> Result<Vec<f64>> {
        let raw = self.reveal(x)?;
        Ok(raw
            .into_iter()
            .map(|v| self.enc.decode(crate::fixed::RingElement(v)))
            .collect())
    }

    pub fn reveal_bits(&mut self, b: &BitShares) -> Result<Vec<bool>> {
        self.scoped("reveal", |p| {
            p.send_bits(p.id.prev(), &b.hi, b.len())?;
            let third = p.recv_bits(p.id.next(), b.len())?;
            Ok((0..b.len())
                .map(|k| {
                    let (w, s) = (k / 64, k % 64);
                    ((b.lo[w] ^ b.hi[w] ^ third[w]) >> s) & 1 == 1
                })
                .collect())
        })
    }

    /// Sharing of public fixed-point reals held by everyone.
    pub fn public(&self, shape: Vec<usize>, values: &[f64]) -> Result<ShareTensor> {
        let enc: Vec<u64> = self
            .enc
            .encode_slice(values)?
            .into_iter()
            .map(|r| r.0)
            .collect();
        ShareTensor::from_public(self.id, shape, &enc)
    }
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    match (a, b) {
        ([m, k], [k2, n]) if k == k2 => Ok((*m, *k, *n)),
        _ => Err(Error::Shape(format!("matmul: {a:?} x {b:?}"))),
    }
}

pub(crate) fn raw_matmul(a: &[u64], b: &[u64], m: usize, k: usize, n: usize) -> Vec<u64> {
    let mut out = vec![0u64; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for t in 0..k {
            let av = a[i * k + t];
            if av == 0 {
                continue;
            }
            let brow = &b[t * n..(t + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = o.wrapping_add(av.wrapping_mul(bv));
            }
        }
    }
    out
}
