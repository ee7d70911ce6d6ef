use crate::error::{Error, Result};
use crate::fixed::{FixedEncoding, RingElement};

/// Row-major tensor. `Tensor<RingElement>` is the public ring tensor,
/// `Tensor<f64>` the plaintext one.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = RingElement> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub type RealTensor = Tensor<f64>;

impl<T> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone + Default> Tensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::default(); n],
        }
    }
}

impl RealTensor {
    pub fn encode(&self, enc: &FixedEncoding) -> Result<Tensor<RingElement>> {
        Ok(Tensor {
            shape: self.shape.clone(),
            data: enc.encode_slice(&self.data)?,
        })
    }
}

impl Tensor<RingElement> {
    pub fn decode(&self, enc: &FixedEncoding) -> RealTensor {
        Tensor {
            shape: self.shape.clone(),
            data: enc.decode_slice(&self.data),
        }
    }
}
