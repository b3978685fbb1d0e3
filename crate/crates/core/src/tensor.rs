//! Dense rank-4 tensors in row-major `(b, c, h, w)` order.
//!
//! Lower-rank values are embedded with size-1 extents: a scalar is
//! `(1, 1, 1, 1)`, a batch of logits is `(b, k, 1, 1)`, and a stack of
//! matrices is `(g0, g1, rows, cols)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Extents of a [`Tensor4`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const SCALAR: Dims = Dims {
        b: 1,
        c: 1,
        h: 1,
        w: 1,
    };

    pub const fn new(b: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { b, c, h, w }
    }

    pub fn from_array(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }

    pub fn to_array(self) -> [usize; 4] {
        [self.b, self.c, self.h, self.w]
    }

    /// Element count, or a size error when the product overflows.
    pub fn checked_len<T>(self) -> Result<usize> {
        let n = self
            .to_array()
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Size(format!("{self:?} overflows usize")))?;
        let max = isize::MAX as usize / std::mem::size_of::<T>().max(1);
        if n > max {
            return Err(Error::Size(format!("{self:?} exceeds addressable size")));
        }
        Ok(n)
    }

    /// Element count. Only valid for dims that came from an existing tensor.
    #[inline]
    pub fn len(self) -> usize {
        self.b * self.c * self.h * self.w
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.c + j) * self.h + k) * self.w + l
    }

    pub fn extent(self, axis: usize) -> usize {
        self.to_array()[axis]
    }

    /// Spatial size `h * w`.
    pub fn plane(self) -> usize {
        self.h * self.w
    }
}

impl fmt::Debug for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.b, self.c, self.h, self.w)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.b, self.c, self.h, self.w)
    }
}

impl From<(usize, usize, usize, usize)> for Dims {
    fn from((b, c, h, w): (usize, usize, usize, usize)) -> Self {
        Dims::new(b, c, h, w)
    }
}

/// Dense rank-4 array. Values are immutable once handed to a tape.
#[derive(Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    /// Tensor of the given dims with every element equal to `fill`.
    pub fn new(dims: impl Into<Dims>, fill: T) -> Result<Self> {
        let dims = dims.into();
        let n = dims.checked_len::<T>()?;
        let mut data = Vec::new();
        data.try_reserve_exact(n)
            .map_err(|e| Error::Size(format!("{dims:?}: {e}")))?;
        data.resize(n, fill);
        Ok(Tensor4 { dims, data })
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::new(dims, T::zero()).expect("zeros: dims too large")
    }

    pub fn full(dims: impl Into<Dims>, fill: T) -> Self {
        Self::new(dims, fill).expect("full: dims too large")
    }

    pub fn scalar(v: T) -> Self {
        Tensor4 {
            dims: Dims::SCALAR,
            data: vec![v],
        }
    }

    pub fn from_vec(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        let n = dims.checked_len::<T>()?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "{dims:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    /// Builds a tensor from f64 values, rounding to `T`.
    pub fn from_f64(dims: impl Into<Dims>, data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let d = dims.into();
        let mut data = Vec::with_capacity(d.len());
        for i in 0..d.b {
            for j in 0..d.c {
                for k in 0..d.h {
                    for l in 0..d.w {
                        data.push(f(i, j, k, l));
                    }
                }
            }
        }
        Tensor4 { dims: d, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.data[self.dims.offset(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: T) {
        let o = self.dims.offset(i, j, k, l);
        self.data[o] = v;
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on {:?}", self.dims);
        self.data[0]
    }

    /// Same data under new dims with equal element count.
    pub fn reshape(self, dims: impl Into<Dims>) -> Result<Self> {
        let dims = dims.into();
        if dims.checked_len::<T>()? != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Tensor4 {
            dims,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_dims(other.dims, "zip_map")?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_dims(other.dims, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute element-wise difference; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Bitwise equality of dims and every element.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }

    pub(crate) fn expect_dims(&self, dims: Dims, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(format!(
                "{what}: expected {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    /// Slab `[start, start + len)` along the channel axis.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let d = self.dims;
        if start + len > d.c {
            return Err(Error::shape(format!(
                "channel slice {start}..{} out of {d:?}",
                start + len
            )));
        }
        let plane = d.plane();
        let mut data = Vec::with_capacity(d.b * len * plane);
        for i in 0..d.b {
            let base = (i * d.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Ok(Tensor4 {
            dims: Dims::new(d.b, len, d.h, d.w),
            data,
        })
    }

    /// Concatenation along the batch axis.
    pub fn concat_batch(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_batch of nothing"))?
            .dims;
        let mut data = Vec::new();
        let mut b = 0;
        for p in parts {
            let d = p.dims;
            if (d.c, d.h, d.w) != (first.c, first.h, first.w) {
                return Err(Error::shape(format!("concat_batch: {d:?} vs {first:?}")));
            }
            b += d.b;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor4 {
            dims: Dims::new(b, first.c, first.h, first.w),
            data,
        })
    }

    /// Rows `[start, start + len)` of the batch axis.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<Self> {
        let d = self.dims;
        if start + len > d.b {
            return Err(Error::shape(format!("batch slice out of {d:?}")));
        }
        let per = d.c * d.plane();
        Ok(Tensor4 {
            dims: Dims::new(len, d.c, d.h, d.w),
            data: self.data[start * per..(start + len) * per].to_vec(),
        })
    }
}

impl<T: Scalar> fmt::Debug for Tensor4<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor4{:?} [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}
