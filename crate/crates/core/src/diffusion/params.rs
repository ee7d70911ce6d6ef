use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rss::{seeded_stream, stream};
use crate::tensor::RealTensor;

const MAGIC: &[u8; 4] = b"CDM1";
const WHAT: &str = "parameter file";

/// Layer widths of the toy denoiser.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenoiserShape {
    pub pixels: usize,
    pub hidden: usize,
    pub tokens: usize,
    pub width: usize,
    pub time_dim: usize,
    pub blocks: usize,
}

impl DenoiserShape {
    pub fn for_image(w: usize, h: usize) -> Self {
        DenoiserShape {
            pixels: w * h,
            hidden: 64,
            tokens: 4,
            width: 16,
            time_dim: 32,
            blocks: 2,
        }
    }

    /// Every tensor name with its shape, in file order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (d, h, w) = (self.pixels, self.hidden, self.width);
        let mut out = vec![
            ("temb.w1".to_string(), vec![self.time_dim, h]),
            ("temb.b1".to_string(), vec![h]),
            ("temb.w2".to_string(), vec![h, h]),
            ("temb.b2".to_string(), vec![h]),
            ("in.w".to_string(), vec![d, h]),
            ("in.b".to_string(), vec![h]),
        ];
        for k in 0..self.blocks {
            out.push((format!("res{k}.w1"), vec![h, h]));
            out.push((format!("res{k}.b1"), vec![h]));
            out.push((format!("res{k}.w2"), vec![h, h]));
            out.push((format!("res{k}.b2"), vec![h]));
        }
        for p in ["q", "k", "v", "o"] {
            out.push((format!("attn.w{p}"), vec![w, w]));
        }
        out.push(("out.w".to_string(), vec![h, d]));
        out.push(("out.b".to_string(), vec![d]));
        out.push(("out.skip".to_string(), vec![1]));
        out
    }

    fn check(&self) -> Result<()> {
        if self.tokens * self.width != self.hidden || self.time_dim % 2 != 0 || self.pixels == 0 {
            return Err(Error::Shape(format!(
                "inconsistent denoiser widths {self:?}"
            )));
        }
        Ok(())
    }
}

/// Named weights of the toy denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    shape: DenoiserShape,
    tensors: BTreeMap<String, RealTensor>,
}

impl DenoiserParams {
    /// Validates names and shapes against `shape`.
    pub fn new(shape: DenoiserShape, tensors: BTreeMap<String, RealTensor>) -> Result<Self> {
        shape.check()?;
        let layout = shape.layout();
        for (name, dims) in &layout {
            match tensors.get(name) {
                None => return Err(Error::Shape(format!("missing tensor `{name}`"))),
                Some(t) if t.shape() != dims.as_slice() => {
                    return Err(Error::Shape(format!(
                        "tensor `{name}` has shape {:?}, expected {dims:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if tensors.len() != layout.len() {
            let extra = tensors
                .keys()
                .find(|k| !layout.iter().any(|(n, _)| n == *k))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Shape(format!("unexpected tensor `{extra}`")));
        }
        Ok(DenoiserParams { shape, tensors })
    }

    pub fn zeros(shape: DenoiserShape) -> Result<Self> {
        let tensors = shape
            .layout()
            .into_iter()
            .map(|(n, s)| (n, RealTensor::zeros(s)))
            .collect();
        Self::new(shape, tensors)
    }

    /// Uniform `+-1/sqrt(fan_in)` weights and biases, unit skip gain.
    pub fn random(shape: DenoiserShape, seed: u64) -> Result<Self> {
        let mut rng = seeded_stream(seed, stream::WEIGHTS);
        let mut tensors = BTreeMap::new();
        let mut fan_in = 1;
        for (name, dims) in shape.layout() {
            if dims.len() == 2 {
                fan_in = dims[0];
            }
            let n: usize = dims.iter().product();
            let data: Vec<f64> = if name == "out.skip" {
                vec![1.0]
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                // stored as f32 on disk; round now so save/load is lossless
                (0..n)
                    .map(|_| rng.random_range(-bound..bound) as f32 as f64)
                    .collect()
            };
            tensors.insert(name, RealTensor::new(dims, data)?);
        }
        Self::new(shape, tensors)
    }

    pub fn shape(&self) -> DenoiserShape {
        self.shape
    }

    pub fn get(&self, name: &str) -> Result<&RealTensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing tensor `{name}`")))
    }

    pub fn tensors(&self) -> &BTreeMap<String, RealTensor> {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, dims) in self.shape.layout() {
            let t = &self.tensors[&name];
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dims.len() as u8);
            for d in &dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a parameter file. The image size is taken from `in.w`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::format(WHAT, "missing CDM1 magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum {
                what: WHAT.to_string(),
                stored,
                computed,
            });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(WHAT, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            if tensors
                .insert(name.clone(), RealTensor::new(dims, data)?)
                .is_some()
            {
                return Err(Error::format(WHAT, format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != body.len() {
            return Err(Error::format(WHAT, "trailing bytes after last tensor"));
        }
        let pixels = tensors
            .get("in.w")
            .map(|t| t.shape()[0])
            .ok_or_else(|| Error::format(WHAT, "missing `in.w`"))?;
        let shape = DenoiserShape {
            pixels,
            ..DenoiserShape::for_image(1, 1)
        };
        Self::new(shape, tensors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::format(WHAT, "truncated"));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
