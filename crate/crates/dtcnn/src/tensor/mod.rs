//! Dense n-dimensional arrays, seeded pseudo-randomness and bilinear resizing.
//!
//! Every value flowing through the pipeline is a [`Tensor`]: a flat scalar
//! buffer plus an explicit row-major shape. Production math runs in `f32`;
//! the gradient-check oracles run the same code in `f64`.

mod resize;
mod rng;

pub use resize::bilinear_resize;
pub use rng::{mix_seed, Rng};

use crate::{Error, Result};

/// Scalar element type for tensors. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Send + Sync + std::iter::Sum + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense array with row-major logical order.
///
/// Invariants: every extent is >= 1 and `product(shape) == data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor from a shape and matching flat data.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor<T>> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Tensor<T>> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Flat offset of a multi-index. Panics on out-of-range indices in debug builds.
    pub fn flatten(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &ext)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < ext, "index {} out of range at axis {}", ix, i);
            flat = flat * ext + ix;
        }
        flat
    }

    /// Inverse of [`Tensor::flatten`].
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.data.len());
        let mut idx = vec![0; self.shape.len()];
        for (slot, &ext) in idx.iter_mut().zip(&self.shape).rev() {
            *slot = flat % ext;
            flat /= ext;
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.flatten(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let flat = self.flatten(idx);
        self.data[flat] = value;
    }

    /// Reinterpret the same data under a new shape of equal length.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Elementwise copy converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Fill with independent Gaussian draws; `std == 0` gives a constant tensor.
    pub fn fill_gaussian(&mut self, rng: &mut Rng, mean: T, std: T) {
        for v in &mut self.data {
            *v = mean + std * T::from_f64(rng.next_gaussian());
        }
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("empty shape".into()));
    }
    let mut len = 1usize;
    for &ext in shape {
        if ext == 0 {
            return Err(Error::Shape(format!("zero extent in shape {:?}", shape)));
        }
        len = len.checked_mul(ext).ok_or_else(|| {
            Error::Shape(format!("shape {:?} overflows element count", shape))
        })?;
    }
    Ok(len)
}
