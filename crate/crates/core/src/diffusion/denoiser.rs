use std::collections::BTreeMap;

use rand::Rng;

use super::params::{DenoiserParams, DenoiserShape};
use crate::error::{Error, Result};
use crate::fixed::FixedEncoding;
use crate::nonlinear::{
    approx_silu, approx_softmax, sinusoidal_embedding, Activation, SoftmaxConfig,
};
use crate::oracle;
use crate::rss::{share_tensor, Party, ShareTensor};
use crate::tensor::RealTensor;

/// Which nonlinearities the plaintext pipeline uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    Exact,
    Approximated,
}

/// Nonlinear settings shared by the plaintext and secure forward passes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOptions {
    pub activation: Activation,
    pub softmax: SoftmaxConfig,
}

impl ModelOptions {
    fn act(&self, flavor: Flavor, x: f64) -> f64 {
        match flavor {
            Flavor::Exact => self.activation.kind().exact(x),
            Flavor::Approximated => self.activation.approx(x),
        }
    }

    fn silu(&self, flavor: Flavor, x: f64) -> f64 {
        match flavor {
            Flavor::Exact => oracle::exact_silu(x),
            Flavor::Approximated => approx_silu(x),
        }
    }

    fn softmax(&self, flavor: Flavor, x: &[f64], width: usize) -> Vec<f64> {
        match flavor {
            Flavor::Exact => oracle::exact_softmax_rows(x, width),
            Flavor::Approximated => {
                let cfg = SoftmaxConfig {
                    epsilon: 0.0,
                    ..self.softmax.clone()
                };
                approx_softmax(x, width, &cfg)
            }
        }
    }
}

/// `x [m,k] * w [k,n]` in `f64`.
fn matmul(x: &[f64], m: usize, w: &RealTensor) -> Vec<f64> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let a = x[i * k + p];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += a * wd[p * n + j];
            }
        }
    }
    out
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> RealTensor {
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    RealTensor::new(vec![cols, rows], out).expect("sizes match")
}

/// Plaintext forward pass; returns the predicted noise.
pub fn denoise_plain(
    params: &DenoiserParams,
    opts: &ModelOptions,
    flavor: Flavor,
    x: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    let s = params.shape();
    if x.len() != s.pixels {
        return Err(Error::Shape(format!(
            "denoiser input has {} values, expected {}",
            x.len(),
            s.pixels
        )));
    }
    let g = |n: &str| params.get(n);

    let e = sinusoidal_embedding(t as f64, s.time_dim);
    let mut u = matmul(&e, 1, g("temb.w1")?);
    add(&mut u, g("temb.b1")?.data());
    let u: Vec<f64> = u.iter().map(|&v| opts.silu(flavor, v)).collect();
    let mut temb = matmul(&u, 1, g("temb.w2")?);
    add(&mut temb, g("temb.b2")?.data());

    let mut h = matmul(x, 1, g("in.w")?);
    add(&mut h, g("in.b")?.data());
    for k in 0..s.blocks {
        let mut u = matmul(&h, 1, g(&format!("res{k}.w1"))?);
        add(&mut u, g(&format!("res{k}.b1"))?.data());
        add(&mut u, &temb);
        let a: Vec<f64> = u.iter().map(|&v| opts.act(flavor, v)).collect();
        let r = matmul(&a, 1, g(&format!("res{k}.w2"))?);
        add(&mut h, &r);
        add(&mut h, g(&format!("res{k}.b2"))?.data());
    }

    let n = s.tokens;
    let q = matmul(&h, n, g("attn.wq")?);
    let kk = matmul(&h, n, g("attn.wk")?);
    let v = matmul(&h, n, g("attn.wv")?);
    let scale = 1.0 / (s.width as f64).sqrt();
    let scores: Vec<f64> = matmul(&q, n, &transpose(&kk, n, s.width))
        .iter()
        .map(|x| x * scale)
        .collect();
    let probs = opts.softmax(flavor, &scores, n);
    let mix = matmul(&probs, n, &RealTensor::new(vec![n, s.width], v)?);
    let o = matmul(&mix, n, g("attn.wo")?);
    add(&mut h, &o);

    let mut out = matmul(&h, 1, g("out.w")?);
    add(&mut out, g("out.b")?.data());
    let skip = g("out.skip")?.data()[0];
    for (o, xi) in out.iter_mut().zip(x) {
        *o += skip * xi;
    }
    Ok(out)
}

/// One party's shares of the denoiser weights.
#[derive(Clone, Debug)]
pub struct SharedParams {
    shape: DenoiserShape,
    tensors: BTreeMap<String, ShareTensor>,
}

impl SharedParams {
    pub fn new(shape: DenoiserShape, tensors: BTreeMap<String, ShareTensor>) -> Result<Self> {
        for (name, dims) in shape.layout() {
            match tensors.get(&name) {
                Some(t) if t.shape() == dims.as_slice() => {}
                _ => {
                    return Err(Error::Shape(format!(
                        "shared tensor `{name}` missing or misshaped"
                    )))
                }
            }
        }
        Ok(SharedParams { shape, tensors })
    }

    pub fn shape(&self) -> DenoiserShape {
        self.shape
    }

    pub fn get(&self, name: &str) -> Result<&ShareTensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing shared tensor `{name}`")))
    }

    pub fn tensors(&self) -> &BTreeMap<String, ShareTensor> {
        &self.tensors
    }
}

/// Encodes and secret-shares every weight, as the model owner does.
pub fn deal_params<R: Rng + ?Sized>(
    params: &DenoiserParams,
    enc: FixedEncoding,
    rng: &mut R,
) -> Result<[SharedParams; 3]> {
    let mut maps: [BTreeMap<String, ShareTensor>; 3] = Default::default();
    for (name, t) in params.tensors() {
        let ring = crate::tensor::Tensor::new(t.shape().to_vec(), enc.encode_slice(t.data())?)?;
        let shares = share_tensor(&ring, rng);
        for (m, s) in maps.iter_mut().zip(shares) {
            m.insert(name.clone(), s);
        }
    }
    let shape = params.shape();
    let [a, b, c] = maps;
    Ok([
        SharedParams::new(shape, a)?,
        SharedParams::new(shape, b)?,
        SharedParams::new(shape, c)?,
    ])
}

fn row(t: &ShareTensor) -> Result<ShareTensor> {
    let n = t.len();
    t.clone().reshape(vec![1, n])
}

impl Party<'_> {
    /// Secure forward pass on a shared input `[pixels]`; returns shared noise.
    pub fn denoise(
        &mut self,
        params: &SharedParams,
        opts: &ModelOptions,
        x: &ShareTensor,
        t: usize,
    ) -> Result<ShareTensor> {
        let s = params.shape();
        if x.len() != s.pixels {
            return Err(Error::Shape(format!(
                "denoiser input has {} values, expected {}",
                x.len(),
                s.pixels
            )));
        }
        let f = self.enc().frac_bits();
        let g = |n: &str| params.get(n);
        self.scoped("denoiser", |p| {
            let e = sinusoidal_embedding(t as f64, s.time_dim);
            let temb = p.time_embedding(
                &e,
                [g("temb.w1")?, g("temb.b1")?, g("temb.w2")?, g("temb.b2")?],
            )?;
            let temb = row(&temb)?;

            let x_row = row(x)?;
            let mut h = p.scoped("input", |p| {
                p.matmul(&x_row, g("in.w")?, f)?.add(&row(g("in.b")?)?)
            })?;
            for k in 0..s.blocks {
                h = p.scoped("residual", |p| {
                    let u = p
                        .matmul(&h, g(&format!("res{k}.w1"))?, f)?
                        .add(&row(g(&format!("res{k}.b1"))?)?)?
                        .add(&temb)?;
                    let a = p.activation(&opts.activation, &u)?;
                    let r = p.matmul(&a, g(&format!("res{k}.w2"))?, f)?;
                    h.add(&r)?.add(&row(g(&format!("res{k}.b2"))?)?)
                })?;
            }

            h = p.scoped("attention", |p| {
                let tokens = h.clone().reshape(vec![s.tokens, s.width])?;
                let q = p.matmul(&tokens, g("attn.wq")?, f)?;
                let k = p.matmul(&tokens, g("attn.wk")?, f)?;
                let v = p.matmul(&tokens, g("attn.wv")?, f)?;
                let scale_bits = (s.width as f64).sqrt().log2();
                if scale_bits.fract() != 0.0 {
                    return Err(Error::Shape(format!(
                        "attention width {} is not a power of four",
                        s.width
                    )));
                }
                let scores = p.matmul(&q, &k.transpose2d()?, f + scale_bits as u32)?;
                let probs = p.softmax(&opts.softmax, &scores)?;
                let mix = p.matmul(&probs, &v, f)?;
                let o = p.matmul(&mix, g("attn.wo")?, f)?;
                h.add(&o.reshape(vec![1, s.hidden])?)
            })?;

            p.scoped("output", |p| {
                let out = p.matmul(&h, g("out.w")?, f)?.add(&row(g("out.b")?)?)?;
                let skip = g("out.skip")?
                    .broadcast_last(s.pixels)
                    .reshape(vec![1, s.pixels])?;
                let skipped = p.fixed_mul(&skip, &x_row)?;
                out.add(&skipped)?.reshape(x.shape().to_vec())
            })
        })
    }
}
