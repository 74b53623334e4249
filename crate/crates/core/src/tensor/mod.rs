//! Rank-4 tensor storage, layer primitives, and reverse-mode automatic
//! differentiation on a single-threaded tape.

mod gradcheck;
mod io;
mod params;
mod scalar;
mod shape;
mod tape;

pub use gradcheck::{grad_check, grad_check_multi, GradCheckOptions, GradCheckReport};
pub use io::{read_tensor, write_tensor};
pub use params::{ParamEntry, ParamStore};
pub use scalar::{sigmoid_scalar, Scalar};
pub use shape::{conv_out_dim, Shape};
pub use tape::{Mode, ParamBinding, Tape, Var};

use crate::error::{Error, Result};

/// Dense rank-4 tensor with contiguous row-major N,C,H,W storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Tensor<T> {
        Tensor {
            shape,
            data: vec![T::ZERO; shape.count()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Tensor<T> {
        Tensor {
            shape,
            data: vec![value; shape.count()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Tensor<T>> {
        if data.len() != shape.count() {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.count()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    pub fn count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: T) {
        let i = self.shape.index(n, c, h, w);
        self.data[i] = value;
    }

    /// Reinterpret with a different shape of identical element count.
    pub fn reshaped(mut self, shape: Shape) -> Result<Tensor<T>> {
        if shape.count() != self.data.len() {
            return Err(Error::InvalidShape(format!(
                "cannot view {} elements as {shape}",
                self.data.len()
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Per-sample slice over the C·H·W extent.
    pub fn sample(&self, n: usize) -> &[T] {
        let stride = self.shape.c * self.shape.h * self.shape.w;
        &self.data[n * stride..(n + 1) * stride]
    }
}

impl Tensor<f32> {
    /// Exact, lossless widening for 64-bit gradient checking.
    pub fn widen(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        let s = Shape::new(1, 2, 2, 1).unwrap();
        assert!(Tensor::from_vec(s, vec![1.0f32; 3]).is_err());
        assert!(Tensor::from_vec(s, vec![1.0f32; 4]).is_ok());
    }

    #[test]
    fn widen_is_lossless() {
        let s = Shape::new(1, 1, 1, 3).unwrap();
        let t = Tensor::from_vec(s, vec![0.1f32, -2.5, 7.25]).unwrap();
        let w = t.widen();
        for (a, b) in t.data().iter().zip(w.data()) {
            assert_eq!(*a as f64, *b);
        }
    }
}
