use std::fmt;

use crate::error::{Error, Result};

/// Rank-4 tensor shape in sample × channel × height × width order.
///
/// Rank-2 data (the classifier head) rides along as `(n, c, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Shape> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidShape(format!(
                "all dimensions must be >= 1, got {n}x{c}x{h}x{w}"
            )));
        }
        n.checked_mul(c)
            .and_then(|x| x.checked_mul(h))
            .and_then(|x| x.checked_mul(w))
            .ok_or_else(|| {
                Error::InvalidShape(format!("element count of {n}x{c}x{h}x{w} overflows"))
            })?;
        Ok(Shape { n, c, h, w })
    }

    /// Shape of a per-sample channel vector, `(n, c, 1, 1)`.
    pub fn vector(n: usize, c: usize) -> Shape {
        Shape { n, c, h: 1, w: 1 }
    }

    pub fn scalar() -> Shape {
        Shape { n: 1, c: 1, h: 1, w: 1 }
    }

    pub fn count(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_scalar(&self) -> bool {
        self.count() == 1
    }

    /// True for `(n, c, 1, 1)` shapes: one value per (sample, channel) pair.
    pub fn is_channel_vector(&self) -> bool {
        self.h == 1 && self.w == 1
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(n < self.n && c < self.c && h < self.h && w < self.w);
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Output spatial size of a convolution along one axis:
/// `floor((in + 2*pad - k) / stride) + 1`, an error when non-positive.
pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::BadOutputDim(format!(
            "kernel {k} exceeds padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}
